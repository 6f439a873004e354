"""The six rib-driven and three spine-driven deformation primitives.

Rib edits displace per-vertex projection points in closed form and propagate
through the rib skinning weights, then the spine follows the mesh via the
spine weights. Spine edits move key points and propagate through the spine
weights; twisting reconstructs vertices from rest cylindrical coordinates.
After every edit all rib polylines are re-anchored on the deformed surface,
so the coupled structure never needs re-extraction.

Exact-identity parameters are no-ops for all nine primitives.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from .errors import FishboneError, ParameterError, SelectionError
from .rig import FishboneRig, reconstruct_cylindrical
from .spine import fit_rib_frame
from .util import rotation_about_axis

log = logging.getLogger(__name__)

RIB_PRIMITIVES = ("uniform_scale", "aniso_scale", "translate", "rotate", "local_drag", "reshape")
SPINE_PRIMITIVES = ("stretch", "bend", "twist")
RESHAPE_TEMPLATES = ("circle", "square", "ellipse")
_TEMPLATE_QUADRATURE = 4096


@dataclass
class RibEdit:
    rib_set: list[int]
    primitive: str
    params: dict = dataclass_field(default_factory=dict)

    def validate(self, rig: FishboneRig) -> None:
        if self.primitive not in RIB_PRIMITIVES:
            raise ParameterError(f"unknown rib primitive {self.primitive!r}")
        known = {r.rib_id for r in rig.ribs}
        bad = [r for r in self.rib_set if r not in known]
        if bad:
            raise SelectionError(f"unknown rib ids {bad}")
        p = self.params
        if self.primitive == "uniform_scale" and not p.get("s", 1.0) > 0:
            raise ParameterError("uniform_scale needs s > 0")
        if self.primitive == "aniso_scale":
            if not all(p.get(k, 1.0) > 0 for k in ("sx", "sy", "sz")):
                raise ParameterError("aniso_scale needs positive factors")
        if self.primitive == "rotate":
            q = _rotation_matrix(p)
            if abs(np.linalg.det(q) - 1.0) > 1e-6 or np.abs(q @ q.T - np.eye(3)).max() > 1e-6:
                raise ParameterError("rotation must be orthonormal with det +1")
        if self.primitive == "local_drag" and not p.get("sigma", 0.0) > 0:
            raise ParameterError("local_drag needs sigma > 0")
        if self.primitive == "reshape":
            b = p.get("blend", 1.0)
            if not (0.0 <= b <= 1.0):
                raise ParameterError("reshape blend must be in [0,1]")
            if p.get("template", "square") not in RESHAPE_TEMPLATES:
                raise ParameterError(f"unknown template {p.get('template')!r}")


@dataclass
class SpineEdit:
    branch: int
    primitive: str
    params: dict = dataclass_field(default_factory=dict)

    def validate(self, rig: FishboneRig) -> None:
        if self.primitive not in SPINE_PRIMITIVES:
            raise ParameterError(f"unknown spine primitive {self.primitive!r}")
        if not (0 <= self.branch < len(rig.spine.branches)):
            raise SelectionError(f"unknown branch {self.branch}")
        p = self.params
        if self.primitive == "stretch" and not p.get("s", 1.0) > 0:
            raise ParameterError("stretch needs s > 0")
        if self.primitive == "bend" and p.get("axis", "N") not in ("N", "B"):
            raise ParameterError("bend axis must be 'N' or 'B'")
        if self.primitive == "twist":
            t0, t1 = p.get("t_start", 0.0), p.get("t_end", 1.0)
            if not (0.0 <= t0 <= t1 <= 1.0):
                raise ParameterError("twist needs 0 <= t_start <= t_end <= 1")
        for key in ("t_a", "t_start", "t_end"):
            if key in p and not (0.0 <= p[key] <= 1.0):
                raise ParameterError(f"{key} must be in [0,1]")


def _rotation_matrix(params: dict) -> np.ndarray:
    if "matrix" in params:
        return np.asarray(params["matrix"], dtype=np.float64).reshape(3, 3)
    return rotation_about_axis(np.asarray(params.get("axis", (0.0, 1.0, 0.0))),
                               float(params.get("angle", 0.0)))


def template_profile(name: str, aspect: float = 2.0):
    """Radial profile eta(theta) of a cross-section template, mean-1 normalized.

    The mean over theta equals 1 so the mean rib radius anchors the size.
    """
    if name == "circle":
        return lambda theta: np.ones_like(np.asarray(theta, dtype=np.float64))
    if name == "square":
        base = lambda th: 1.0 / np.maximum(np.abs(np.cos(th)), np.abs(np.sin(th)))  # noqa: E731
    elif name == "ellipse":
        a, b = float(aspect), 1.0
        base = lambda th: a * b / np.sqrt((b * np.cos(th)) ** 2 + (a * np.sin(th)) ** 2)  # noqa: E731
    else:
        raise ParameterError(f"unknown template {name!r}")
    grid = np.linspace(0.0, 2.0 * np.pi, _TEMPLATE_QUADRATURE, endpoint=False)
    mean = float(np.mean(base(grid)))
    return lambda th: base(th) / mean


def _is_identity_rib(edit: RibEdit) -> bool:
    p = edit.params
    prim = edit.primitive
    if prim == "uniform_scale":
        return float(p.get("s", 1.0)) == 1.0
    if prim == "aniso_scale":
        return all(float(p.get(k, 1.0)) == 1.0 for k in ("sx", "sy", "sz"))
    if prim == "translate":
        return not np.any(np.asarray(p.get("d", (0.0, 0.0, 0.0)), dtype=np.float64))
    if prim == "rotate":
        return np.array_equal(_rotation_matrix(p), np.eye(3))
    if prim == "local_drag":
        return not np.any(np.asarray(p.get("d", (0.0, 0.0, 0.0)), dtype=np.float64))
    if prim == "reshape":
        return float(p.get("blend", 1.0)) == 0.0
    return False


def _displace_projections(rib, frame, pts: np.ndarray, arcs: np.ndarray, edit: RibEdit) -> np.ndarray:
    """Closed-form displacement of projection points for one rib primitive."""
    p = edit.params
    prim = edit.primitive
    centroid = rib.centroid()
    if prim == "uniform_scale":
        return (float(p["s"]) - 1.0) * (pts - centroid)
    if prim == "aniso_scale":
        scale = np.array([p.get("sx", 1.0), p.get("sy", 1.0), p.get("sz", 1.0)], dtype=np.float64)
        return (pts - centroid) * (scale - 1.0)
    if prim == "translate":
        return np.broadcast_to(np.asarray(p["d"], dtype=np.float64), pts.shape).copy()
    if prim == "rotate":
        q = _rotation_matrix(p)
        return (pts - centroid) @ (q - np.eye(3)).T
    if prim == "local_drag":
        if "anchor_t" in p:  # fraction of the rib's total arc length
            total = _segment_arcs(rib)[-1] + np.linalg.norm(
                _rib_segment_points(rib)[1][-1] - _rib_segment_points(rib)[0][-1]
            )
            s0 = float(p["anchor_t"]) * float(total)
        else:
            s0 = float(p.get("anchor_arc", 0.0))
        sigma = float(p["sigma"])
        d = np.asarray(p["d"], dtype=np.float64)
        fall = np.exp(-np.square(arcs - s0) / (2.0 * sigma * sigma))
        return fall[:, None] * d
    if prim == "reshape":
        blend = float(p.get("blend", 1.0))
        eta = template_profile(p.get("template", "square"), p.get("aspect", 2.0))
        rel = pts - frame.centroid
        u = rel @ frame.basis_u
        v = rel @ frame.basis_v
        h = rel @ frame.normal
        rho = np.hypot(u, v)
        theta = np.arctan2(v, u)
        rib_rel = rib.points - frame.centroid
        rho_bar = float(np.hypot(rib_rel @ frame.basis_u, rib_rel @ frame.basis_v).mean())
        rho_new = (1.0 - blend) * rho + blend * rho_bar * eta(theta)
        new = (
            frame.centroid
            + (rho_new * np.cos(theta))[:, None] * frame.basis_u
            + (rho_new * np.sin(theta))[:, None] * frame.basis_v
            + h[:, None] * frame.normal
        )
        return new - pts
    raise ParameterError(f"unknown rib primitive {prim!r}")


def _aggregate_spine_from_mesh(rig: FishboneRig, part_id: int, delta_v: np.ndarray) -> None:
    """Coupling rule: keys follow the column-normalized pull-back of mesh motion."""
    pr = rig.part_rigs[part_id]
    w = pr.spine_weights.to_csc()
    col_sums = np.asarray(w.sum(axis=0)).ravel()
    moved = w.T @ delta_v
    nz = col_sums > 0
    moved[nz] /= col_sums[nz, None]
    rig.spine.key_points[pr.key_cols] += moved


def apply_rib_edit(rig: FishboneRig, edit: RibEdit) -> FishboneRig:
    """Apply one rib primitive to the selected ribs and propagate to the mesh.

    Vertex update: v' = v + sum over selected ribs of w_ik (p'_ik - p_ik),
    then the spine follows the mesh displacements and every rib polyline is
    re-evaluated on the deformed surface.
    """
    edit.validate(rig)
    if _is_identity_rib(edit):
        return rig
    by_part: dict[int, list[int]] = {}
    for rid in edit.rib_set:
        by_part.setdefault(rig.part_of_rib(rid), []).append(rid)
    for part_id, rib_ids in sorted(by_part.items()):
        pr = rig.part_rigs[part_id]
        verts = rig.current_vertices[part_id]
        delta_v = np.zeros_like(verts)
        col_of_rib = {int(g): c for c, g in enumerate(pr.rib_cols)}
        wm = pr.rib_weights
        for rid in rib_ids:
            col = col_of_rib[rid]
            sel = wm.cols == col
            if not sel.any():
                continue
            rows = wm.rows[sel]
            wvals = wm.values[sel]
            edges = wm.proj_edge[sel]
            params = wm.proj_param[sel]
            rib = rig.ribs[rid]
            seg_a, seg_b = _rib_segment_points(rib)
            proj = seg_a[edges] + params[:, None] * (seg_b[edges] - seg_a[edges])
            arcs = _segment_arcs(rib)[edges] + params * np.linalg.norm(
                seg_b[edges] - seg_a[edges], axis=1
            )
            frame = fit_rib_frame(rib)
            disp = _displace_projections(rib, frame, proj, arcs, edit)
            delta_v[rows] += wvals[:, None] * disp
        rig.current_vertices[part_id] = verts + delta_v
        _aggregate_spine_from_mesh(rig, part_id, delta_v)
        rig.refresh_ribs({part_id})
    return rig


def _rib_segment_points(rib):
    pts = rib.points
    if rib.closed:
        return pts, np.roll(pts, -1, axis=0)
    return pts[:-1], pts[1:]


def _segment_arcs(rib) -> np.ndarray:
    a, b = _rib_segment_points(rib)
    seg = np.linalg.norm(b - a, axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])[: len(a)]


def _branch_rest_geometry(rig: FishboneRig, branch: np.ndarray):
    keys = rig.rest_key_points[branch]
    arcs = rig.arc_table.key_arc[branch] - rig.arc_table.key_arc[branch[0]]
    total = arcs[-1] if arcs[-1] > 0 else 1.0
    return keys, arcs, float(total)


def _point_at_rest_arc(keys: np.ndarray, arcs: np.ndarray, s: float) -> np.ndarray:
    """Point at arc coordinate s along the rest branch polyline, extrapolating
    along the first/last segment direction outside [0, L]."""
    if s <= arcs[0]:
        d = keys[1] - keys[0]
        dn = d / max(np.linalg.norm(d), 1e-300)
        return keys[0] + (s - arcs[0]) * dn
    if s >= arcs[-1]:
        d = keys[-1] - keys[-2]
        dn = d / max(np.linalg.norm(d), 1e-300)
        return keys[-1] + (s - arcs[-1]) * dn
    i = int(np.searchsorted(arcs, s, side="right") - 1)
    i = min(i, len(arcs) - 2)
    span = arcs[i + 1] - arcs[i]
    frac = (s - arcs[i]) / span if span > 0 else 0.0
    return keys[i] + frac * (keys[i + 1] - keys[i])


def _propagate_spine_delta(rig: FishboneRig, moved_keys: np.ndarray, delta: np.ndarray) -> None:
    """Mesh update v' = v + sum_k w^s_ik (p'_k - p_k) for the moved keys."""
    for part_id, pr in enumerate(rig.part_rigs):
        local = {int(g): i for i, g in enumerate(pr.key_cols)}
        touched = [k for k in moved_keys if int(k) in local]
        if not touched:
            continue
        wm = pr.spine_weights
        dv = np.zeros_like(rig.current_vertices[part_id])
        keysel = np.isin(wm.cols, [local[int(k)] for k in touched])
        rows = wm.rows[keysel]
        cols = wm.cols[keysel]
        vals = wm.values[keysel]
        glob = pr.key_cols[cols]
        didx = {int(k): i for i, k in enumerate(moved_keys)}
        dvec = delta[[didx[int(g)] for g in glob]]
        np.add.at(dv, rows, vals[:, None] * dvec)
        rig.current_vertices[part_id] = rig.current_vertices[part_id] + dv
        rig.refresh_ribs({part_id})


def apply_spine_stretch(rig: FishboneRig, s: float, t_a: float, branch_id: int = 0) -> FishboneRig:
    """Elongate/compress a branch along its rest arc length about an anchor.

    New arc positions l1(k) = a + s (l0(k) - a) with a = t_a * L0; key points
    are re-laid along the rest polyline's direction field at their new arcs.
    """
    SpineEdit(branch_id, "stretch", {"s": s, "t_a": t_a}).validate(rig)
    if s == 1.0:
        return rig
    branch = rig.branch_of(branch_id)
    keys0, arcs0, total = _branch_rest_geometry(rig, branch)
    anchor = t_a * total
    new_arcs = anchor + s * (arcs0 - anchor)
    new_pts = np.array([_point_at_rest_arc(keys0, arcs0, sa) for sa in new_arcs])
    delta = new_pts - rig.spine.key_points[branch]
    rig.spine.key_points[branch] = new_pts
    _propagate_spine_delta(rig, branch, delta)
    return rig


def apply_spine_bend(rig: FishboneRig, axis: str, angle: float, t_a: float,
                     branch_id: int = 0) -> FishboneRig:
    """Rigidly rotate the branch tail (t > t_a) about the anchor point around
    the rest parallel-transport normal or binormal at the anchor."""
    SpineEdit(branch_id, "bend", {"axis": axis, "angle": angle, "t_a": t_a}).validate(rig)
    if angle == 0.0:
        return rig
    branch = rig.branch_of(branch_id)
    _, arcs0, total = _branch_rest_geometry(rig, branch)
    a_arc = t_a * total
    cur = rig.spine.key_points[branch]
    i = int(np.clip(np.searchsorted(arcs0, a_arc, side="right") - 1, 0, len(branch) - 2))
    span = arcs0[i + 1] - arcs0[i]
    frac = (a_arc - arcs0[i]) / span if span > 0 else 0.0
    anchor_pt = cur[i] + frac * (cur[i + 1] - cur[i])

    edges = rig.edges()
    seg = _edge_between(edges, branch[i], branch[i + 1])
    axis_vec = rig.frames.normal[seg] if axis == "N" else rig.frames.binormal[seg]
    rot = rotation_about_axis(axis_vec, angle)
    move = arcs0 > a_arc
    moved_keys = branch[move]
    if len(moved_keys) == 0:
        return rig
    new_pts = (cur[move] - anchor_pt) @ rot.T + anchor_pt
    delta = new_pts - cur[move]
    rig.spine.key_points[moved_keys] = new_pts
    _propagate_spine_delta(rig, moved_keys, delta)
    return rig


def _edge_between(edges: np.ndarray, a: int, b: int) -> int:
    hit = np.flatnonzero((edges[:, 0] == a) & (edges[:, 1] == b))
    if len(hit) == 0:
        raise SelectionError(f"no spine edge between keys {a} and {b}")
    return int(hit[0])


def apply_spine_twist(rig: FishboneRig, psi_max: float, t_start: float, t_end: float,
                      branch_id: int = 0) -> FishboneRig:
    """Rotate per-vertex cross-sectional offsets around the branch in the rest
    parallel-transport frame; the spine itself stays fixed.

    The torsion angle ramps linearly from 0 to psi_max over [t_start, t_end]
    and is constant outside. Applied as the delta between twisted and
    untwisted rest reconstructions, so it composes with prior edits.
    """
    SpineEdit(branch_id, "twist",
              {"psi_max": psi_max, "t_start": t_start, "t_end": t_end}).validate(rig)
    if psi_max == 0.0:
        return rig
    branch = rig.branch_of(branch_id)
    edges = rig.edges()
    branch_edges = {
        _edge_between(edges, branch[i], branch[i + 1]) for i in range(len(branch) - 1)
    }
    arc0 = rig.arc_table.key_arc[branch[0]]
    total = max(rig.arc_table.key_arc[branch[-1]] - arc0, 1e-300)

    for part_id, pr in enumerate(rig.part_rigs):
        binding = pr.binding
        onbranch = np.isin(binding.segment, list(branch_edges))
        if not onbranch.any():
            continue
        t_param = (binding.arc - arc0) / total
        if t_end > t_start:
            ramp = np.clip((t_param - t_start) / (t_end - t_start), 0.0, 1.0)
        else:
            ramp = (t_param >= t_start).astype(np.float64)
        psi = np.where(onbranch, psi_max * ramp, 0.0)
        cos_p, sin_p = np.cos(psi), np.sin(psi)
        u_new = binding.u * cos_p - binding.v * sin_p
        v_new = binding.u * sin_p + binding.v * cos_p
        rest = reconstruct_cylindrical(binding, edges, rig.rest_key_points, rig.frames)
        twisted = reconstruct_cylindrical(binding, edges, rig.rest_key_points, rig.frames,
                                          u=u_new, v=v_new)
        mask = onbranch & (binding.segment >= 0)
        delta = np.zeros_like(rig.current_vertices[part_id])
        delta[mask] = twisted[mask] - rest[mask]
        rig.current_vertices[part_id] = rig.current_vertices[part_id] + delta
        rig.refresh_ribs({part_id})
    return rig


def apply_spine_edit(rig: FishboneRig, edit: SpineEdit) -> FishboneRig:
    edit.validate(rig)
    p = edit.params
    if edit.primitive == "stretch":
        return apply_spine_stretch(rig, float(p.get("s", 1.0)), float(p.get("t_a", 0.0)),
                                   edit.branch)
    if edit.primitive == "bend":
        return apply_spine_bend(rig, p.get("axis", "N"), float(p.get("angle", 0.0)),
                                float(p.get("t_a", 0.0)), edit.branch)
    return apply_spine_twist(rig, float(p.get("psi_max", 0.0)), float(p.get("t_start", 0.0)),
                             float(p.get("t_end", 1.0)), edit.branch)


def apply_edit(rig: FishboneRig, edit) -> FishboneRig:
    if isinstance(edit, RibEdit):
        return apply_rib_edit(rig, edit)
    if isinstance(edit, SpineEdit):
        return apply_spine_edit(rig, edit)
    raise ParameterError(f"not an edit: {edit!r}")


class ComposedEditError(FishboneError):
    """Raised by compose_edits; prior edits stay applied."""

    def __init__(self, index: int, cause: Exception):
        self.index = index
        self.cause = cause
        super().__init__(f"edit {index} failed: {cause}")


def compose_edits(rig: FishboneRig, edits: list) -> FishboneRig:
    """Apply edits sequentially with coupling after each step.

    The first failing edit aborts the chain; earlier edits remain applied.
    """
    for i, edit in enumerate(edits):
        try:
            apply_edit(rig, edit)
        except Exception as exc:
            raise ComposedEditError(i, exc) from exc
    return rig


def edit_from_json(obj: dict):
    """Parse one JSON edit command into a RibEdit or SpineEdit."""
    kind = obj.get("op")
    if kind == "rib":
        return RibEdit(list(obj.get("ribs", [])), obj.get("primitive", ""),
                       dict(obj.get("params", {})))
    if kind == "spine":
        return SpineEdit(int(obj.get("branch", 0)), obj.get("primitive", ""),
                         dict(obj.get("params", {})))
    raise ParameterError(f"edit op must be 'rib' or 'spine', got {kind!r}")


def edit_to_json(edit) -> dict:
    if isinstance(edit, RibEdit):
        return {"op": "rib", "ribs": [int(r) for r in edit.rib_set],
                "primitive": edit.primitive, "params": edit.params}
    return {"op": "spine", "branch": int(edit.branch),
            "primitive": edit.primitive, "params": edit.params}
