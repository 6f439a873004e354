"""Spine construction: per-rib reference frames, score-maximized spine points,
and branch assembly over a shared key-point set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import EmptySpineError
from .ribs import Rib, RibTree

log = logging.getLogger(__name__)

GRID_SIZE = 128                       # candidate grid resolution G
DEFAULT_SCORE_WEIGHTS = (1.0, 0.0, 0.0)   # (alpha, beta, gamma): flatness-only
GLOBAL_UP = np.array([0.0, 1.0, 0.0])
COLLECT_RADIUS_CELLS = 2.0            # height-derivative capture radius, in grid cells
SMOOTH_FRACTION = 1.0 / 16.0          # Gaussian bandwidth as fraction of rib bbox diagonal


@dataclass
class RibFrame:
    """Best-fit plane of a rib with an in-plane basis; e_v tracks global up."""

    centroid: np.ndarray
    basis_u: np.ndarray
    basis_v: np.ndarray
    normal: np.ndarray
    projected: np.ndarray        # (M,2) in-plane coordinates of the rib points
    degenerate: bool = False

    def to_world(self, u: float, v: float) -> np.ndarray:
        return self.centroid + u * self.basis_u + v * self.basis_v


@dataclass
class SpinePoint:
    position: np.ndarray
    rib_ref: tuple[int, int]     # (level_index, sub_index)
    score_terms: tuple[float, float, float]
    fallback: bool = False


@dataclass
class SpineTree:
    """Global key points plus branch paths (index sequences) sharing junction nodes."""

    key_points: np.ndarray               # (K,3)
    branches: list[np.ndarray]           # each an index sequence into key_points
    junctions: np.ndarray                # key indices shared by >= 2 branches
    rib_ids: np.ndarray                  # (K,) rib id backing each key
    parent: np.ndarray                   # (K,) parent key index, -1 at roots
    part_ids: np.ndarray = field(default=None)  # (K,) owning part of each key

    @property
    def n_keys(self) -> int:
        return len(self.key_points)

    def edges(self) -> np.ndarray:
        """(E,2) unique (parent, child) key pairs of the tree."""
        child = np.flatnonzero(self.parent >= 0)
        return np.column_stack([self.parent[child], child]).astype(np.int64)


def fit_rib_frame(rib: Rib, global_up: np.ndarray = GLOBAL_UP) -> RibFrame:
    """PCA best-fit plane through the rib points.

    basis_v is the in-plane direction best aligned with global_up, basis_u
    completes the right-handed basis (u x v = normal). Collinear ribs fall
    back to a tangent/up frame and are flagged.
    """
    pts = rib.points
    if len(pts) < 3:
        raise ValueError("rib frame needs at least 3 points")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    degenerate = svals[1] <= 1e-12 * max(svals[0], 1e-300)
    if degenerate:
        tangent = vt[0]
        up_perp = global_up - np.dot(global_up, tangent) * tangent
        if np.linalg.norm(up_perp) < 1e-9:
            up_perp = np.array([1.0, 0.0, 0.0]) - tangent[0] * tangent
        e_v = up_perp / np.linalg.norm(up_perp)
        normal = np.cross(tangent, e_v)
        normal /= np.linalg.norm(normal)
        log.debug("collinear rib %d: tangent/up fallback frame", rib.rib_id)
    else:
        normal = vt[2]
        up_in_plane = global_up - np.dot(global_up, normal) * normal
        if np.linalg.norm(up_in_plane) < 1e-8:
            e_v = vt[1]
        else:
            e_v = up_in_plane / np.linalg.norm(up_in_plane)
    # deterministic sign conventions
    if e_v[np.argmax(np.abs(e_v))] < 0 and np.dot(e_v, global_up) <= 0:
        e_v = -e_v
    if normal[np.argmax(np.abs(normal))] < 0:
        normal = -normal
    e_u = np.cross(e_v, normal)
    e_u /= np.linalg.norm(e_u)
    e_v = np.cross(normal, e_u)
    e_v /= np.linalg.norm(e_v)
    proj = np.column_stack([centered @ e_u, centered @ e_v])
    return RibFrame(centroid, e_u, e_v, normal, proj, degenerate)


def _minmax(x: np.ndarray) -> np.ndarray:
    lo, hi = x.min(), x.max()
    if hi - lo <= 0.0:
        return np.zeros_like(x)
    return (x - lo) / (hi - lo)


def points_in_polygon(points: np.ndarray, polygon: np.ndarray) -> np.ndarray:
    """Even-odd rule membership test of 2D points against a closed polygon."""
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    px, py = polygon[:, 0], polygon[:, 1]
    qx, qy = np.roll(px, -1), np.roll(py, -1)
    for (x0, y0, x1, y1) in zip(px, py, qx, qy):
        crosses = (y0 > y) != (y1 > y)
        with np.errstate(invalid="ignore", divide="ignore"):
            xs = x0 + (y - y0) / (y1 - y0) * (x1 - x0)
        inside ^= crosses & (x < xs)
    return inside


def _height_derivative(rib: Rib, frame: RibFrame) -> np.ndarray:
    """|d height / d arclength| per rib point, height = out-of-plane offset."""
    h = (rib.points - frame.centroid) @ frame.normal
    pts = rib.points
    if rib.closed:
        nxt = np.roll(np.arange(len(pts)), -1)
        prv = np.roll(np.arange(len(pts)), 1)
    else:
        idx = np.arange(len(pts))
        nxt = np.minimum(idx + 1, len(pts) - 1)
        prv = np.maximum(idx - 1, 0)
    ds = np.linalg.norm(pts[nxt] - pts[prv], axis=1)
    ds = np.where(ds > 0, ds, 1.0)
    return np.abs((h[nxt] - h[prv]) / ds)


def _flatness_field_grid(
    proj: np.ndarray, gvals: np.ndarray, us: np.ndarray, vs: np.ndarray, diag: float
) -> np.ndarray:
    """Raw height-derivative aggregation on the candidate grid, Gaussian smoothed."""
    g = len(us)
    du = us[1] - us[0] if g > 1 else 1.0
    dv = vs[1] - vs[0] if g > 1 else 1.0
    radius = COLLECT_RADIUS_CELLS * diag / g
    acc = np.zeros((g, g))
    cnt = np.zeros((g, g))
    iu = np.clip(np.round((proj[:, 0] - us[0]) / max(du, 1e-300)).astype(int), 0, g - 1)
    iv = np.clip(np.round((proj[:, 1] - vs[0]) / max(dv, 1e-300)).astype(int), 0, g - 1)
    ru = max(int(np.ceil(radius / max(du, 1e-300))), 0)
    rv = max(int(np.ceil(radius / max(dv, 1e-300))), 0)
    for ou in range(-ru, ru + 1):
        for ov in range(-rv, rv + 1):
            ju = iu + ou
            jv = iv + ov
            ok = (ju >= 0) & (ju < g) & (jv >= 0) & (jv < g)
            d2 = (us[ju[ok]] - proj[ok, 0]) ** 2 + (vs[jv[ok]] - proj[ok, 1]) ** 2
            within = d2 <= radius * radius
            np.add.at(acc, (ju[ok][within], jv[ok][within]), gvals[ok][within])
            np.add.at(cnt, (ju[ok][within], jv[ok][within]), 1.0)
    raw = np.where(cnt > 0, acc / np.maximum(cnt, 1.0), 0.0)
    sigma_world = SMOOTH_FRACTION * diag
    return gaussian_filter(raw, sigma=(sigma_world / max(du, 1e-300), sigma_world / max(dv, 1e-300)))


def extract_spine_point(
    rib: Rib,
    frame: RibFrame,
    parent: SpinePoint | None = None,
    weights: tuple[float, float, float] = DEFAULT_SCORE_WEIGHTS,
    grid: int = GRID_SIZE,
) -> SpinePoint:
    """Geometry-aware score maximization over in-plane candidates.

    Closed ribs search a grid restricted to the rib polygon's interior; open
    ribs search along the projected polyline. Score = alpha*F + beta*C +
    gamma*P with F local flatness, C centroid proximity, P projected-parent
    proximity, each min-max normalized over the candidate set. Ties break by
    centroid distance, then lexicographic (u, v).
    """
    alpha, beta, gamma = weights
    if alpha < 0 or beta < 0 or gamma < 0 or (alpha + beta + gamma) == 0:
        raise ValueError("score weights must be nonnegative and not all zero")
    proj = frame.projected
    gvals = _height_derivative(rib, frame)

    if rib.closed:
        lo = proj.min(axis=0)
        hi = proj.max(axis=0)
        diag = float(np.linalg.norm(hi - lo))
        us = np.linspace(lo[0], hi[0], grid)
        vs = np.linspace(lo[1], hi[1], grid)
        gu, gv = np.meshgrid(us, vs, indexing="ij")
        cand = np.column_stack([gu.ravel(), gv.ravel()])
        inside = points_in_polygon(cand, proj)
        if not inside.any():
            log.debug("rib %d: no interior candidate, centroid fallback", rib.rib_id)
            return SpinePoint(frame.centroid.copy(), (rib.level_index, rib.sub_index),
                              (0.0, 0.0, 0.0), fallback=True)
        flat_grid = _flatness_field_grid(proj, gvals, us, vs, diag)
        cand = cand[inside]
        smoothed = flat_grid.ravel()[inside]
    else:
        cand = proj
        diag = float(np.linalg.norm(proj.max(axis=0) - proj.min(axis=0)))
        sig = max(SMOOTH_FRACTION * diag, 1e-12)
        d2 = ((proj[:, None, :] - proj[None, :, :]) ** 2).sum(axis=2)
        kern = np.exp(-d2 / (2.0 * sig * sig))
        smoothed = (kern @ gvals) / kern.sum(axis=1)

    f_term = 1.0 - _minmax(smoothed)
    c_term = 1.0 - _minmax(np.linalg.norm(cand, axis=1))
    if parent is not None:
        rel = parent.position - frame.centroid
        pp = np.array([rel @ frame.basis_u, rel @ frame.basis_v])
        p_term = 1.0 - _minmax(np.linalg.norm(cand - pp, axis=1))
    else:
        p_term = np.zeros(len(cand))

    score = alpha * f_term + beta * c_term + gamma * p_term
    best = score.max()
    tied = np.flatnonzero(score == best)
    if len(tied) > 1:
        order = np.lexsort((cand[tied, 1], cand[tied, 0], np.linalg.norm(cand[tied], axis=1)))
        winner = tied[order[0]]
    else:
        winner = tied[0]
    u, v = cand[winner]
    return SpinePoint(
        frame.to_world(float(u), float(v)),
        (rib.level_index, rib.sub_index),
        (float(f_term[winner]), float(c_term[winner]), float(p_term[winner])),
    )


def extract_all_spine_points(
    tree: RibTree,
    weights: tuple[float, float, float] = DEFAULT_SCORE_WEIGHTS,
    grid: int = GRID_SIZE,
    global_up: np.ndarray = GLOBAL_UP,
) -> dict[int, SpinePoint]:
    """Spine point per rib in level order, so the parent continuity term sees
    already-extracted parents."""
    points: dict[int, SpinePoint] = {}
    for rib in sorted(tree.ribs, key=lambda r: (r.level_index, r.rib_id)):
        frame = fit_rib_frame(rib, global_up)
        parent_pt = points.get(rib.parent) if rib.parent is not None else None
        points[rib.rib_id] = extract_spine_point(rib, frame, parent_pt, weights, grid)
    return points


def assemble_spine(tree: RibTree, points: dict[int, SpinePoint]) -> SpineTree:
    """One branch per root-to-leaf path of the rib tree, sharing prefix nodes.

    Key points are stored once in rib-id order; junctions are keys with two or
    more children.
    """
    if not tree.ribs:
        raise EmptySpineError("empty rib tree")
    missing = [r.rib_id for r in tree.ribs if r.rib_id not in points]
    if missing:
        raise EmptySpineError(f"ribs without spine points: {missing}")

    rib_order = sorted(points.keys())
    key_of_rib = {rid: k for k, rid in enumerate(rib_order)}
    key_points = np.array([points[rid].position for rid in rib_order])

    children: dict[int, list[int]] = {rid: [] for rid in rib_order}
    parent_keys = -np.ones(len(rib_order), dtype=np.int64)
    for rib in tree.ribs:
        if rib.parent is not None:
            children[rib.parent].append(rib.rib_id)
            parent_keys[key_of_rib[rib.rib_id]] = key_of_rib[rib.parent]

    branches = []
    for rib in sorted(tree.ribs, key=lambda r: r.rib_id):
        if children[rib.rib_id]:
            continue  # not a leaf
        path = [rib.rib_id]
        while tree.ribs[path[-1]].parent is not None:
            path.append(tree.ribs[path[-1]].parent)
        branches.append(np.array([key_of_rib[r] for r in reversed(path)], dtype=np.int64))
    branches.sort(key=lambda b: b.tolist())

    junctions = np.array(
        sorted(key_of_rib[rid] for rid, ch in children.items() if len(ch) >= 2), dtype=np.int64
    )
    part_ids = np.array([tree.ribs[rid].part_id for rid in rib_order], dtype=np.int64)
    return SpineTree(key_points, branches, junctions, np.array(rib_order, dtype=np.int64),
                     parent_keys, part_ids)
