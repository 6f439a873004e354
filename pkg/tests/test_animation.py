import numpy as np
import pytest

from fishbone.animation import (
    Track,
    apply_keyframe,
    capture_keyframe,
    load_track,
    sample,
    save_track,
)
from fishbone.deform import RibEdit, apply_rib_edit
from fishbone.errors import TrackError


@pytest.fixture()
def two_pose_track(fresh_sphere_rig):
    rig = fresh_sphere_rig
    track = Track()
    capture_keyframe(rig, track, 0.0)
    apply_rib_edit(rig, RibEdit([2], "uniform_scale", {"s": 1.5}))
    capture_keyframe(rig, track, 1.0)
    apply_rib_edit(rig, RibEdit([2], "translate", {"d": [0.05, 0.0, 0.0]}))
    capture_keyframe(rig, track, 2.5)
    return rig, track


class TestSample:
    def test_keyframe_times_reproduce_bitwise(self, two_pose_track):
        _, track = two_pose_track
        for kf in track.keyframes:
            out = sample(track, kf.time)
            for a, b in zip(out.mesh_vertices, kf.mesh_vertices):
                assert np.array_equal(a, b)
            assert np.array_equal(out.spine_points, kf.spine_points)
            for a, b in zip(out.rib_points, kf.rib_points):
                assert np.array_equal(a, b)

    def test_midpoint_is_mean(self, two_pose_track):
        _, track = two_pose_track
        a, b = track.keyframes[0], track.keyframes[1]
        mid = sample(track, 0.5)
        np.testing.assert_allclose(
            mid.mesh_vertices[0], 0.5 * a.mesh_vertices[0] + 0.5 * b.mesh_vertices[0],
            atol=1e-15,
        )

    def test_piecewise_linear_zero_second_differences(self, two_pose_track):
        _, track = two_pose_track
        ts = np.linspace(1.1, 2.4, 9)  # inside one segment
        verts = np.stack([sample(track, t).mesh_vertices[0] for t in ts])
        second = verts[2:] - 2 * verts[1:-1] + verts[:-2]
        assert np.abs(second).max() < 1e-9

    def test_continuity_across_keyframe(self, two_pose_track):
        _, track = two_pose_track
        eps = 1e-9
        lo = sample(track, 1.0 - eps).mesh_vertices[0]
        hi = sample(track, 1.0 + eps).mesh_vertices[0]
        assert np.abs(hi - lo).max() < 1e-6

    def test_clamp_out_of_range(self, two_pose_track):
        _, track = two_pose_track
        early = sample(track, -5.0)
        late = sample(track, 99.0)
        assert np.array_equal(early.mesh_vertices[0], track.keyframes[0].mesh_vertices[0])
        assert np.array_equal(late.mesh_vertices[0], track.keyframes[-1].mesh_vertices[0])

    def test_loop_wraps(self, two_pose_track):
        _, track = two_pose_track
        track.loop = True
        a = sample(track, 0.7)
        b = sample(track, 0.7 + 2.5)  # duration is 2.5
        np.testing.assert_allclose(a.mesh_vertices[0], b.mesh_vertices[0], atol=1e-12)

    def test_single_keyframe_clamps(self, fresh_sphere_rig):
        track = Track()
        capture_keyframe(fresh_sphere_rig, track, 0.0)
        out = sample(track, 123.0)
        assert np.array_equal(out.mesh_vertices[0], track.keyframes[0].mesh_vertices[0])

    def test_empty_track_rejected(self):
        with pytest.raises(TrackError):
            sample(Track(), 0.0)

    def test_constant_segment_for_repeated_state(self, fresh_sphere_rig):
        rig = fresh_sphere_rig
        track = Track()
        capture_keyframe(rig, track, 0.0)
        capture_keyframe(rig, track, 1.0)  # same pose twice
        mid = sample(track, 0.5)
        assert np.array_equal(mid.mesh_vertices[0], track.keyframes[0].mesh_vertices[0])


class TestCapture:
    def test_insert_keeps_sorted_order(self, fresh_sphere_rig):
        rig = fresh_sphere_rig
        track = Track()
        capture_keyframe(rig, track, 2.0)
        capture_keyframe(rig, track, 0.5)
        capture_keyframe(rig, track, 1.0)
        assert [k.time for k in track.keyframes] == [0.5, 1.0, 2.0]

    def test_topology_mismatch_rejected(self, fresh_sphere_rig, ytube_rig):
        track = Track()
        capture_keyframe(fresh_sphere_rig, track, 0.0)
        with pytest.raises(TrackError):
            capture_keyframe(ytube_rig, track, 1.0)

    def test_apply_keyframe_roundtrip(self, two_pose_track):
        rig, track = two_pose_track
        apply_keyframe(rig, track.keyframes[0])
        assert np.array_equal(rig.current_vertices[0], track.keyframes[0].mesh_vertices[0])


class TestTrackFile:
    def test_roundtrip_bitwise(self, two_pose_track, tmp_path):
        _, track = two_pose_track
        path = tmp_path / "poses.fbt"
        save_track(track, path)
        loaded = load_track(path)
        assert len(loaded.keyframes) == len(track.keyframes)
        assert loaded.loop == track.loop
        for a, b in zip(loaded.keyframes, track.keyframes):
            assert a.time == b.time
            for x, y in zip(a.mesh_vertices, b.mesh_vertices):
                assert np.array_equal(x, y)
            for x, y in zip(a.rib_points, b.rib_points):
                assert np.array_equal(x, y)
            assert np.array_equal(a.spine_points, b.spine_points)

    def test_save_load_save_identical_bytes(self, two_pose_track, tmp_path):
        _, track = two_pose_track
        p1 = tmp_path / "a.fbt"
        p2 = tmp_path / "b.fbt"
        save_track(track, p1)
        save_track(load_track(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()
