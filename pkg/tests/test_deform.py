import numpy as np
import pytest

from fishbone.deform import (
    ComposedEditError,
    RibEdit,
    SpineEdit,
    apply_edit,
    apply_rib_edit,
    apply_spine_bend,
    apply_spine_stretch,
    apply_spine_twist,
    compose_edits,
    edit_from_json,
    edit_to_json,
    template_profile,
)
from fishbone.errors import ParameterError, SelectionError
from fishbone.util import rotation_about_axis


def snapshot(rig):
    return [v.copy() for v in rig.current_vertices]


def equals(a, b):
    return all(np.array_equal(x, y) for x, y in zip(a, b))


ALL_IDENTITY_EDITS = [
    RibEdit([0], "uniform_scale", {"s": 1.0}),
    RibEdit([0], "aniso_scale", {"sx": 1.0, "sy": 1.0, "sz": 1.0}),
    RibEdit([0], "translate", {"d": [0.0, 0.0, 0.0]}),
    RibEdit([0], "rotate", {"axis": [0, 1, 0], "angle": 0.0}),
    RibEdit([0], "local_drag", {"d": [0.0, 0.0, 0.0], "anchor_arc": 0.1, "sigma": 0.05}),
    RibEdit([0], "reshape", {"template": "square", "blend": 0.0}),
    SpineEdit(0, "stretch", {"s": 1.0, "t_a": 0.0}),
    SpineEdit(0, "bend", {"axis": "N", "angle": 0.0, "t_a": 0.3}),
    SpineEdit(0, "twist", {"psi_max": 0.0, "t_start": 0.0, "t_end": 1.0}),
]


class TestIdentities:
    @pytest.mark.parametrize("edit", ALL_IDENTITY_EDITS,
                             ids=[e.primitive for e in ALL_IDENTITY_EDITS])
    def test_identity_bitwise(self, fresh_cylinder_rig, edit):
        before = snapshot(fresh_cylinder_rig)
        ribs_before = [r.points.copy() for r in fresh_cylinder_rig.ribs]
        spine_before = fresh_cylinder_rig.spine.key_points.copy()
        apply_edit(fresh_cylinder_rig, edit)
        assert equals(before, fresh_cylinder_rig.current_vertices)
        assert equals(ribs_before, [r.points for r in fresh_cylinder_rig.ribs])
        assert np.array_equal(spine_before, fresh_cylinder_rig.spine.key_points)


class TestRibEdits:
    def test_full_weight_translation_exact(self, fresh_cylinder_rig):
        rig = fresh_cylinder_rig
        wm = rig.part_rigs[0].rib_weights
        rib_id = int(rig.part_rigs[0].rib_cols[0])
        col = 0
        full = (wm.cols == col) & (wm.values == 1.0)
        assert full.any(), "fixture needs at least one single-support vertex"
        rows = wm.rows[full]
        before = snapshot(rig)
        d = np.array([0.03, -0.02, 0.01])
        apply_rib_edit(rig, RibEdit([rib_id], "translate", {"d": d.tolist()}))
        assert np.array_equal(rig.current_vertices[0][rows], before[0][rows] + d)

    def test_locality_zero_weight_vertices_never_move(self, fresh_cylinder_rig):
        rig = fresh_cylinder_rig
        pr = rig.part_rigs[0]
        wm = pr.rib_weights
        rib_id = int(pr.rib_cols[0])
        supported = np.unique(wm.rows[wm.cols == 0])
        unsupported = np.setdiff1d(np.arange(wm.shape[0]), supported)
        assert len(unsupported) > 0
        before = snapshot(rig)
        apply_rib_edit(rig, RibEdit([rib_id], "uniform_scale", {"s": 1.7}))
        assert np.array_equal(rig.current_vertices[0][unsupported], before[0][unsupported])

    def test_uniform_scale_displacement_magnitude(self, fresh_cylinder_rig):
        rig = fresh_cylinder_rig
        pr = rig.part_rigs[0]
        wm = pr.rib_weights
        rib_id = int(pr.rib_cols[3])
        col = 3
        rib = rig.ribs[rib_id]
        centroid = rib.centroid()
        sel = wm.cols == col
        rows = wm.rows[sel]
        # vertices supported only by this rib: displacement = w (s-1) (p - c)
        counts = np.bincount(wm.rows, minlength=wm.shape[0])
        single = counts[rows] == 1
        rows_s = rows[single]
        w = wm.values[sel][single]
        edges = wm.proj_edge[sel][single]
        params = wm.proj_param[sel][single]
        pts = rib.points
        nxt = np.roll(np.arange(len(pts)), -1)
        proj = pts[edges] + params[:, None] * (pts[nxt[edges]] - pts[edges])
        expected = w[:, None] * (2.0 - 1.0) * (proj - centroid)
        before = snapshot(rig)
        apply_rib_edit(rig, RibEdit([rib_id], "uniform_scale", {"s": 2.0}))
        actual = rig.current_vertices[0][rows_s] - before[0][rows_s]
        np.testing.assert_allclose(actual, expected, atol=1e-12)

    def test_rotation_about_centroid(self, fresh_cylinder_rig):
        rig = fresh_cylinder_rig
        rib_id = int(rig.part_rigs[0].rib_cols[4])
        rib = rig.ribs[rib_id]
        centroid0 = rib.centroid().copy()
        q = rotation_about_axis(np.array([0, 1, 0.0]), 0.5)
        apply_rib_edit(rig, RibEdit([rib_id], "rotate", {"matrix": q.tolist()}))
        # the rib polyline tracks the surface; its centroid stays put under a
        # rotation about itself (up to weight-modulated tracking)
        assert np.linalg.norm(rig.ribs[rib_id].centroid() - centroid0) < 0.02

    def test_reshape_square_radius_oracle(self, fresh_cylinder_rig):
        # quadrature oracle: mean over theta of 1/max(|cos|,|sin|)
        grid = np.linspace(0, 2 * np.pi, 200001)
        mean = np.trapezoid(1.0 / np.maximum(np.abs(np.cos(grid)), np.abs(np.sin(grid))),
                            grid) / (2 * np.pi)
        eta = template_profile("square")
        assert eta(np.pi / 4) == pytest.approx(np.sqrt(2) / mean, rel=1e-6)
        assert eta(0.0) == pytest.approx(1.0 / mean, rel=1e-6)
        # circle template is exactly 1
        assert template_profile("circle")(np.linspace(0, 6, 7)).tolist() == [1.0] * 7

    def test_reshape_moves_projections_to_template(self, fresh_cylinder_rig):
        rig = fresh_cylinder_rig
        pr = rig.part_rigs[0]
        rib_id = int(pr.rib_cols[5])
        col = 5
        wm = pr.rib_weights
        rib = rig.ribs[rib_id]
        from fishbone.spine import fit_rib_frame

        frame = fit_rib_frame(rib)
        rel = rib.points - frame.centroid
        rho_bar = np.hypot(rel @ frame.basis_u, rel @ frame.basis_v).mean()
        sel = wm.cols == col
        counts = np.bincount(wm.rows, minlength=wm.shape[0])
        single = counts[wm.rows[sel]] == 1
        rows = wm.rows[sel][single]
        w = wm.values[sel][single]
        edges = wm.proj_edge[sel][single]
        params = wm.proj_param[sel][single]
        pts = rib.points
        nxt = np.roll(np.arange(len(pts)), -1)
        proj = pts[edges] + params[:, None] * (pts[nxt[edges]] - pts[edges])
        prel = proj - frame.centroid
        u = prel @ frame.basis_u
        v = prel @ frame.basis_v
        theta = np.arctan2(v, u)
        eta = template_profile("square")
        rho_new = rho_bar * eta(theta)
        h = prel @ frame.normal
        target = (frame.centroid
                  + (rho_new * np.cos(theta))[:, None] * frame.basis_u
                  + (rho_new * np.sin(theta))[:, None] * frame.basis_v
                  + h[:, None] * frame.normal)
        expected = w[:, None] * (target - proj)
        before = snapshot(rig)
        apply_rib_edit(rig, RibEdit([rib_id], "reshape", {"template": "square", "blend": 1.0}))
        actual = rig.current_vertices[0][rows] - before[0][rows]
        np.testing.assert_allclose(actual, expected, atol=1e-10)

    def test_unknown_rib_rejected(self, fresh_cylinder_rig):
        with pytest.raises(SelectionError):
            apply_rib_edit(fresh_cylinder_rig, RibEdit([999], "uniform_scale", {"s": 2.0}))

    def test_invalid_rotation_rejected(self, fresh_cylinder_rig):
        with pytest.raises(ParameterError):
            apply_rib_edit(fresh_cylinder_rig,
                           RibEdit([0], "rotate", {"matrix": (2 * np.eye(3)).tolist()}))

    def test_connectivity_untouched(self, fresh_cylinder_rig):
        rig = fresh_cylinder_rig
        faces_before = rig.parts.parts[0].faces.copy()
        apply_rib_edit(rig, RibEdit([0, 1], "uniform_scale", {"s": 1.4}))
        apply_spine_bend(rig, "N", 0.4, 0.5)
        assert np.array_equal(rig.parts.parts[0].faces, faces_before)

    def test_coupling_definitional(self, fresh_cylinder_rig):
        # after a rib edit, spine delta equals column-normalized W^s pull-back
        rig = fresh_cylinder_rig
        spine_before = rig.spine.key_points.copy()
        mesh_before = rig.current_vertices[0].copy()
        apply_rib_edit(rig, RibEdit([2], "translate", {"d": [0.0, 0.05, 0.0]}))
        delta_v = rig.current_vertices[0] - mesh_before
        pr = rig.part_rigs[0]
        w = pr.spine_weights.to_csc()
        col_sums = np.asarray(w.sum(axis=0)).ravel()
        expected = w.T @ delta_v
        nz = col_sums > 0
        expected[nz] /= col_sums[nz, None]
        actual = rig.spine.key_points[pr.key_cols] - spine_before[pr.key_cols]
        np.testing.assert_allclose(actual, expected, atol=1e-12)

    def test_rib_points_stay_on_edges(self, fresh_cylinder_rig):
        from fishbone.util import lerp_on_edges

        rig = fresh_cylinder_rig
        apply_rib_edit(rig, RibEdit([1, 2], "aniso_scale", {"sx": 1.5, "sy": 1.0, "sz": 0.7}))
        for rib in rig.ribs:
            recon = lerp_on_edges(rig.current_vertices[rib.part_id],
                                  rib.edge_vertices, rib.edge_params)
            assert np.abs(recon - rib.points).max() < 1e-12


class TestSpineEdits:
    def test_stretch_formula_arithmetic(self):
        # l1(k) = a + s (l0(k) - a): plain arithmetic of the arc map
        l0 = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
        a = 0.0
        l1 = a + 2.0 * (l0 - a)
        assert l1[2] == 1.0  # key at half length lands at full length
        a = 1.0
        l1 = a + 2.0 * (l0 - a)
        assert l1[-1] == 1.0  # tail anchored
        assert l1[0] == -1.0  # root extrapolates backward

    def test_point_at_rest_arc_helper(self):
        from fishbone.deform import _point_at_rest_arc

        keys = np.array([[0.0, 0, 0], [1.0, 0, 0], [1.0, 1.0, 0]])
        arcs = np.array([0.0, 1.0, 2.0])
        np.testing.assert_allclose(_point_at_rest_arc(keys, arcs, 0.5), [0.5, 0, 0])
        np.testing.assert_allclose(_point_at_rest_arc(keys, arcs, 1.0), [1.0, 0, 0])
        np.testing.assert_allclose(_point_at_rest_arc(keys, arcs, 1.5), [1.0, 0.5, 0])
        # extrapolation along the end segments
        np.testing.assert_allclose(_point_at_rest_arc(keys, arcs, 2.5), [1.0, 1.5, 0])
        np.testing.assert_allclose(_point_at_rest_arc(keys, arcs, -0.5), [-0.5, 0, 0])

    def test_stretch_arithmetic_anchor_root(self, fresh_cylinder_rig):
        rig = fresh_cylinder_rig
        branch = rig.spine.branches[0]
        arcs0 = rig.arc_table.key_arc[branch] - rig.arc_table.key_arc[branch[0]]
        root_before = rig.spine.key_points[branch[0]].copy()
        apply_spine_stretch(rig, s=2.0, t_a=0.0)
        assert np.array_equal(rig.spine.key_points[branch[0]], root_before)  # anchor fixed
        # new polyline roughly doubles (chords cut rest-polyline corners)
        new = rig.spine.key_points[branch]
        arcs1 = np.concatenate([[0], np.cumsum(np.linalg.norm(np.diff(new, axis=0), axis=1))])
        np.testing.assert_allclose(arcs1[-1], 2.0 * arcs0[-1], rtol=0.02)

    def test_stretch_anchor_tail_fixes_tail(self, fresh_cylinder_rig):
        rig = fresh_cylinder_rig
        branch = rig.spine.branches[0]
        tail_before = rig.spine.key_points[branch[-1]].copy()
        root_before = rig.spine.key_points[branch[0]].copy()
        apply_spine_stretch(rig, s=2.0, t_a=1.0)
        assert np.allclose(rig.spine.key_points[branch[-1]], tail_before, atol=1e-12)
        assert np.linalg.norm(rig.spine.key_points[branch[0]] - root_before) > 1e-3

    def test_bend_right_angle_geometry(self, fresh_cylinder_rig):
        rig = fresh_cylinder_rig
        branch = rig.spine.branches[0]
        arcs0 = rig.arc_table.key_arc[branch] - rig.arc_table.key_arc[branch[0]]
        total = arcs0[-1]
        keys_before = rig.spine.key_points[branch].copy()
        t_a = 0.5
        apply_spine_bend(rig, "B", np.pi / 2, t_a)
        keys_after = rig.spine.key_points[branch]
        moved = arcs0 > t_a * total
        # anchor-side keys fixed
        assert np.array_equal(keys_after[~moved], keys_before[~moved])
        # rotated keys keep their distance to the anchor (rigid rotation)
        i = int(np.searchsorted(arcs0, t_a * total, side="right") - 1)
        frac = (t_a * total - arcs0[i]) / (arcs0[i + 1] - arcs0[i])
        anchor = keys_before[i] + frac * (keys_before[i + 1] - keys_before[i])
        d_before = np.linalg.norm(keys_before[moved] - anchor, axis=1)
        d_after = np.linalg.norm(keys_after[moved] - anchor, axis=1)
        np.testing.assert_allclose(d_after, d_before, atol=1e-12)
        # components perpendicular to the rotation axis turned by exactly 90 deg
        seg = rig.edges()
        from fishbone.deform import _edge_between

        e = _edge_between(seg, branch[i], branch[i + 1])
        b_axis = rig.frames.binormal[e]
        for u, v in zip(keys_before[moved] - anchor, keys_after[moved] - anchor):
            up = u - np.dot(u, b_axis) * b_axis
            vp = v - np.dot(v, b_axis) * b_axis
            cosang = np.dot(up, vp) / (np.linalg.norm(up) * np.linalg.norm(vp))
            assert abs(cosang) < 1e-7

    def test_bend_straight_spine_tail_along_normal(self):
        # straight synthetic spine along +x: bend 90 about B=z sends tail to +y
        from fishbone.rig import compute_edge_frames
        from fishbone.spine import SpineTree

        keys = np.column_stack([np.linspace(0, 1, 6), np.zeros(6), np.zeros(6)])
        spine = SpineTree(keys.copy(), [np.arange(6)], np.zeros(0, dtype=np.int64),
                          np.arange(6), np.array([-1, 0, 1, 2, 3, 4]),
                          np.zeros(6, dtype=np.int64))
        frames = compute_edge_frames(spine, keys)
        # tangent +x, global up +y -> N = +y, B = +z
        np.testing.assert_allclose(frames.tangent[0], [1, 0, 0], atol=1e-12)
        np.testing.assert_allclose(frames.normal[0], [0, 1, 0], atol=1e-12)
        np.testing.assert_allclose(frames.binormal[0], [0, 0, 1], atol=1e-12)
        rot = rotation_about_axis(frames.binormal[0], np.pi / 2)
        anchor = np.array([0.5, 0, 0])
        tail = (keys[-1] - anchor) @ rot.T + anchor
        np.testing.assert_allclose(tail, [0.5, 0.5, 0.0], atol=1e-12)

    def test_key_exactly_at_anchor_unmoved(self, fresh_cylinder_rig):
        rig = fresh_cylinder_rig
        branch = rig.spine.branches[0]
        arcs0 = rig.arc_table.key_arc[branch] - rig.arc_table.key_arc[branch[0]]
        total = arcs0[-1]
        k = len(branch) // 2
        t_a = float(arcs0[k] / total)
        before = rig.spine.key_points[branch[k]].copy()
        apply_spine_bend(rig, "N", 0.8, t_a)
        assert np.array_equal(rig.spine.key_points[branch[k]], before)

    def test_twist_on_spine_vertex_unmoved_and_radius_preserved(self, fresh_cylinder_rig):
        rig = fresh_cylinder_rig
        pr = rig.part_rigs[0]
        binding = pr.binding
        edges = rig.edges()
        before = rig.current_vertices[0].copy()
        apply_spine_twist(rig, psi_max=1.2, t_start=0.0, t_end=1.0)
        after = rig.current_vertices[0]
        # radius about the spine axis is exactly preserved
        ok = binding.segment >= 0
        a = rig.rest_key_points[edges[binding.segment[ok], 0]]
        b = rig.rest_key_points[edges[binding.segment[ok], 1]]
        tang = rig.frames.tangent[binding.segment[ok]]
        foot = a + binding.ell[ok, None] * (b - a)
        r_before = np.linalg.norm(before[ok] - foot - binding.alpha[ok, None] * tang, axis=1)
        r_after = np.linalg.norm(after[ok] - foot - binding.alpha[ok, None] * tang, axis=1)
        np.testing.assert_allclose(r_after, r_before, atol=1e-9)
        # vertices with zero in-plane offset never move
        on_axis = ok & (np.hypot(binding.u, binding.v) < 1e-12)
        if on_axis.any():
            assert np.array_equal(after[on_axis], before[on_axis])
        # something did move
        assert np.abs(after - before).max() > 1e-4

    def test_twist_ramp_outside_interval(self, fresh_cylinder_rig):
        rig = fresh_cylinder_rig
        pr = rig.part_rigs[0]
        binding = pr.binding
        branch = rig.spine.branches[0]
        arc0 = rig.arc_table.key_arc[branch[0]]
        total = rig.arc_table.key_arc[branch[-1]] - arc0
        t_param = (binding.arc - arc0) / total
        before = rig.current_vertices[0].copy()
        apply_spine_twist(rig, psi_max=1.0, t_start=0.6, t_end=0.9)
        after = rig.current_vertices[0]
        low = (binding.segment >= 0) & (t_param < 0.599)
        assert np.array_equal(after[low], before[low])  # psi = 0 below the ramp


class TestCompose:
    def test_translate_inverse_roundtrip(self, fresh_cylinder_rig):
        rig = fresh_cylinder_rig
        before = snapshot(rig)
        d = [0.02, 0.01, -0.03]
        compose_edits(rig, [
            RibEdit([1], "translate", {"d": d}),
            RibEdit([1], "translate", {"d": [-x for x in d]}),
        ])
        diff = max(np.abs(a - b).max() for a, b in zip(before, rig.current_vertices))
        assert diff < 1e-9  # linear displacement model is exactly invertible

    def test_noncommutativity(self, cylinder_rig):
        cylinder_rig.reset()
        compose_edits(cylinder_rig, [
            RibEdit([5], "uniform_scale", {"s": 1.6}),
            SpineEdit(0, "bend", {"axis": "N", "angle": 0.7, "t_a": 0.3}),
        ])
        a = [v.copy() for v in cylinder_rig.current_vertices]
        cylinder_rig.reset()
        compose_edits(cylinder_rig, [
            SpineEdit(0, "bend", {"axis": "N", "angle": 0.7, "t_a": 0.3}),
            RibEdit([5], "uniform_scale", {"s": 1.6}),
        ])
        b = cylinder_rig.current_vertices
        cylinder_rig.reset()
        assert max(np.abs(x - y).max() for x, y in zip(a, b)) > 1e-6

    def test_failing_edit_reports_index(self, fresh_cylinder_rig):
        rig = fresh_cylinder_rig
        before = snapshot(rig)
        with pytest.raises(ComposedEditError) as exc:
            compose_edits(rig, [
                RibEdit([1], "translate", {"d": [0.0, 0.1, 0.0]}),
                RibEdit([999], "translate", {"d": [0.0, 0.1, 0.0]}),
            ])
        assert exc.value.index == 1
        # first edit stayed applied
        assert not equals(before, rig.current_vertices)


class TestMultiPart:
    @pytest.fixture(scope="class")
    def two_part_rig(self):
        from fishbone import shapes
        from fishbone.mesh_io import RawMesh
        from fishbone.pipeline import ExtractConfig, extract_rig

        v1, f1 = shapes.capped_cylinder(radius=0.25, height=1.5, rings=14, segments=14)
        v2 = v1 + np.array([1.5, 0.0, 0.0])
        rig, _ = extract_rig(
            RawMesh(np.vstack([v1, v2]), np.vstack([f1, f1 + len(v1)])),
            ExtractConfig(use_cache=False),
        )
        assert len(rig.parts.parts) == 2
        return rig

    def test_edit_routed_to_owning_part_only(self, two_part_rig):
        rig = two_part_rig
        rig.reset()
        rib0 = int(rig.part_rigs[0].rib_cols[1])
        other_before = rig.current_vertices[1].copy()
        other_keys_before = rig.spine.key_points[rig.part_rigs[1].key_cols].copy()
        apply_rib_edit(rig, RibEdit([rib0], "uniform_scale", {"s": 1.6}))
        # no cross-part coupling: the second part is bitwise untouched
        assert np.array_equal(rig.current_vertices[1], other_before)
        assert np.array_equal(rig.spine.key_points[rig.part_rigs[1].key_cols],
                              other_keys_before)
        assert np.abs(rig.current_vertices[0]
                      - rig.parts.parts[0].vertices).max() > 1e-6
        rig.reset()

    def test_spine_edit_on_second_part_branch(self, two_part_rig):
        rig = two_part_rig
        rig.reset()
        # find a branch whose keys belong to part 1
        branch_id = next(
            i for i, b in enumerate(rig.spine.branches)
            if rig.spine.part_ids[b[0]] == 1
        )
        first_before = rig.current_vertices[0].copy()
        apply_spine_bend(rig, "N", 0.5, 0.3, branch_id)
        assert np.array_equal(rig.current_vertices[0], first_before)
        assert np.abs(rig.current_vertices[1]
                      - rig.parts.parts[1].vertices).max() > 1e-6
        rig.reset()


class TestEditJson:
    def test_roundtrip(self):
        edits = [
            RibEdit([1, 2], "reshape", {"template": "ellipse", "blend": 0.5, "aspect": 2.0}),
            SpineEdit(0, "twist", {"psi_max": 0.3, "t_start": 0.1, "t_end": 0.9}),
        ]
        for e in edits:
            e2 = edit_from_json(edit_to_json(e))
            assert type(e2) is type(e)
            assert e2.primitive == e.primitive
            assert e2.params == e.params

    def test_bad_op(self):
        with pytest.raises(ParameterError):
            edit_from_json({"op": "nope"})
