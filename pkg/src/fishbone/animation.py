"""Keyframe capture and linear replay of edited rig states."""

from __future__ import annotations

from bisect import bisect_right, insort
from dataclasses import dataclass, field

import numpy as np

from .container import read_container, write_container
from .errors import TrackError
from .rig import FishboneRig


@dataclass
class Keyframe:
    """Full snapshot of a pose: mesh, rib polylines, spine key points."""

    time: float
    mesh_vertices: list[np.ndarray]      # per part
    rib_points: list[np.ndarray]         # per rib
    spine_points: np.ndarray

    def __lt__(self, other: "Keyframe") -> bool:
        return self.time < other.time

    def topology(self) -> tuple:
        return (
            tuple(len(v) for v in self.mesh_vertices),
            tuple(len(r) for r in self.rib_points),
            len(self.spine_points),
        )


@dataclass
class Track:
    keyframes: list[Keyframe] = field(default_factory=list)
    loop: bool = False

    @property
    def times(self) -> np.ndarray:
        return np.array([k.time for k in self.keyframes])

    def duration(self) -> float:
        return self.keyframes[-1].time if self.keyframes else 0.0


def capture_keyframe(rig: FishboneRig, track: Track, t: float) -> Track:
    """Snapshot the rig's current pose into the track, keeping time order."""
    kf = Keyframe(
        float(t),
        [v.copy() for v in rig.current_vertices],
        [r.points.copy() for r in rig.ribs],
        rig.spine.key_points.copy(),
    )
    if track.keyframes:
        if kf.topology() != track.keyframes[0].topology():
            raise TrackError("keyframe topology does not match the track")
        if any(abs(k.time - kf.time) == 0.0 for k in track.keyframes):
            raise TrackError(f"duplicate keyframe time {t}")
    insort(track.keyframes, kf)
    return track


def _blend(a: Keyframe, b: Keyframe, tau: float) -> Keyframe:
    if tau == 0.0:
        return Keyframe(a.time, [v.copy() for v in a.mesh_vertices],
                        [r.copy() for r in a.rib_points], a.spine_points.copy())
    w0, w1 = 1.0 - tau, tau
    return Keyframe(
        (1.0 - tau) * a.time + tau * b.time,
        [w0 * va + w1 * vb for va, vb in zip(a.mesh_vertices, b.mesh_vertices)],
        [w0 * ra + w1 * rb for ra, rb in zip(a.rib_points, b.rib_points)],
        w0 * a.spine_points + w1 * b.spine_points,
    )


def sample(track: Track, t: float) -> Keyframe:
    """Per-vertex linear interpolation between the bracketing keyframes.

    Out-of-range times clamp to the end frames, or wrap when the track loops.
    t = t_m reproduces keyframe m exactly.
    """
    if not track.keyframes:
        raise TrackError("cannot sample an empty track")
    frames = track.keyframes
    if len(frames) == 1:
        return _blend(frames[0], frames[0], 0.0)
    t0, t1 = frames[0].time, frames[-1].time
    if track.loop and t1 > t0:
        t = t0 + (t - t0) % (t1 - t0)
    t = min(max(t, t0), t1)
    i = bisect_right([k.time for k in frames], t) - 1
    i = min(max(i, 0), len(frames) - 2)
    a, b = frames[i], frames[i + 1]
    if t == a.time:
        return _blend(a, a, 0.0)
    tau = (t - a.time) / (b.time - a.time)
    return _blend(a, b, tau)


def apply_keyframe(rig: FishboneRig, kf: Keyframe) -> None:
    """Load a sampled pose back into the rig."""
    rig.current_vertices = [v.copy() for v in kf.mesh_vertices]
    for rib, pts in zip(rig.ribs, kf.rib_points):
        rib.points = pts.copy()
    rig.spine.key_points = kf.spine_points.copy()


# ---------------------------------------------------------------------------
# Track file (.fbt): container with one block set per keyframe
# ---------------------------------------------------------------------------

def save_track(track: Track, path) -> None:
    blocks: dict[str, np.ndarray] = {}
    for i, kf in enumerate(track.keyframes):
        for pid, verts in enumerate(kf.mesh_vertices):
            blocks[f"kf/{i:05d}/mesh/{pid:03d}"] = verts
        for rid, pts in enumerate(kf.rib_points):
            blocks[f"kf/{i:05d}/rib/{rid:04d}"] = pts
        blocks[f"kf/{i:05d}/spine"] = kf.spine_points
    meta = {
        "kind": "fishbone-track",
        "version": 1,
        "times": [kf.time for kf in track.keyframes],
        "loop": track.loop,
        "n_parts": len(track.keyframes[0].mesh_vertices) if track.keyframes else 0,
        "n_ribs": len(track.keyframes[0].rib_points) if track.keyframes else 0,
    }
    write_container(path, meta, blocks)


def load_track(path) -> Track:
    meta, blocks = read_container(path)
    if meta.get("kind") != "fishbone-track" or meta.get("version") != 1:
        raise TrackError(f"{path}: not a version-1 fishbone track")
    track = Track(loop=bool(meta["loop"]))
    for i, t in enumerate(meta["times"]):
        mesh = [blocks[f"kf/{i:05d}/mesh/{pid:03d}"] for pid in range(meta["n_parts"])]
        ribs = [blocks[f"kf/{i:05d}/rib/{rid:04d}"] for rid in range(meta["n_ribs"])]
        track.keyframes.append(Keyframe(float(t), mesh, ribs, blocks[f"kf/{i:05d}/spine"]))
    return track
