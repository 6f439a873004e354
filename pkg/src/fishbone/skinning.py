"""Gaussian soft-cutoff skinning weights binding vertices to ribs and spine keys.

Rib weights use nearest-edge projections, spine weights point-to-point
distances; both share the raw weight max(exp(-d^2/(2 sigma^2)) - w_min, 0)
followed by row normalization. A KD-tree radius query prunes candidates
without changing the result, and finished weight pairs live in a
content-addressed on-disk cache.
"""

from __future__ import annotations

import json
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.sparse import csc_matrix, csr_matrix
from scipy.spatial import cKDTree

from .mesh_io import CleanPart
from .ribs import Rib
from .spine import SpineTree
from .util import hash_arrays

log = logging.getLogger(__name__)

DEFAULT_NEIGHBOR_COUNT = 2.0   # n: ribs supported on each side
DEFAULT_WEIGHT_FLOOR = 1e-4    # w_min
CACHE_ENV_VAR = "FISHBONE_CACHE"
ROW_SUM_TOL = 1e-9


@dataclass
class VertexProjection:
    """Nearest-edge projection of one vertex onto one rib."""

    rib_col: int
    edge_index: int
    param: float
    distance: float


@dataclass
class WeightMatrix:
    """Sparse nonnegative row-normalized weights, canonical COO order.

    Entries are sorted row-major with ascending columns. Rib-kind matrices
    carry per-nonzero projection metadata; spine-kind matrices carry the
    rigid-fallback map for rows outside every key's support.
    """

    kind: str                    # 'rib' | 'spine'
    shape: tuple[int, int]
    rows: np.ndarray             # (nnz,) int64
    cols: np.ndarray             # (nnz,) int64
    values: np.ndarray           # (nnz,) float64
    proj_edge: np.ndarray | None = None      # (nnz,) nearest rib edge index
    proj_param: np.ndarray | None = None     # (nnz,) parametric foot on that edge
    proj_distance: np.ndarray | None = None  # (nnz,) point-to-edge distance
    rigid_fallback: np.ndarray | None = None # (R,2) [vertex, key] rows pinned to one key

    def to_csr(self) -> csr_matrix:
        return csr_matrix((self.values, (self.rows, self.cols)), shape=self.shape)

    def to_csc(self) -> csc_matrix:
        return csc_matrix((self.values, (self.rows, self.cols)), shape=self.shape)

    def canonicalize(self) -> "WeightMatrix":
        order = np.lexsort((self.cols, self.rows))
        self.rows = self.rows[order]
        self.cols = self.cols[order]
        self.values = self.values[order]
        for name in ("proj_edge", "proj_param", "proj_distance"):
            arr = getattr(self, name)
            if arr is not None:
                setattr(self, name, arr[order])
        return self

    def validate(self) -> None:
        sums = np.zeros(self.shape[0])
        np.add.at(sums, self.rows, self.values)
        nz = sums > 0
        if nz.any() and np.abs(sums[nz] - 1.0).max() > ROW_SUM_TOL:
            raise ValueError(f"{self.kind} weight rows deviate from unit sum")


def support_radius(sigma: float, w_min: float = DEFAULT_WEIGHT_FLOOR) -> float:
    """Distance at which the raw Gaussian hits w_min (weights are 0 beyond)."""
    return sigma * np.sqrt(-2.0 * np.log(w_min))


def bandwidth(part_extent: float, n_levels: int,
              n: float = DEFAULT_NEIGHBOR_COUNT, w_min: float = DEFAULT_WEIGHT_FLOOR) -> float:
    """Adaptive Gaussian bandwidth tied to the inter-rib spacing Lp/K."""
    if n_levels < 1 or not (0.0 < w_min < 1.0) or n <= 0:
        raise ValueError("bandwidth needs K >= 1, 0 < w_min < 1, n > 0")
    spacing = part_extent / n_levels
    return n * spacing / np.sqrt(-2.0 * np.log(w_min))


def raw_weight(dist, sigma: float, w_min: float = DEFAULT_WEIGHT_FLOOR):
    return np.maximum(np.exp(-np.square(dist) / (2.0 * sigma * sigma)) - w_min, 0.0)


def _rib_segments(rib: Rib):
    pts = rib.points
    if rib.closed:
        a = pts
        b = np.roll(pts, -1, axis=0)
    else:
        a = pts[:-1]
        b = pts[1:]
    return a, b


def project_to_rib(vertices: np.ndarray, rib: Rib):
    """Minimum point-to-segment projection of vertices onto one rib polyline.

    Returns (edge_index, param, distance) arrays; closed ribs include the
    wrap-around edge. Ties go to the lowest edge index.
    """
    single = vertices.ndim == 1
    pts = np.atleast_2d(vertices)
    a, b = _rib_segments(rib)
    d = b - a
    len2 = np.einsum("ij,ij->i", d, d)
    rel = pts[:, None, :] - a[None, :, :]
    t = np.einsum("psj,sj->ps", rel, d) / np.where(len2 > 0.0, len2, 1.0)
    t = np.clip(t, 0.0, 1.0)
    foot = a[None, :, :] + t[:, :, None] * d[None, :, :]
    dist = np.linalg.norm(pts[:, None, :] - foot, axis=2)
    edge = np.argmin(dist, axis=1)
    rng = np.arange(len(pts))
    out = (edge.astype(np.int64), t[rng, edge], dist[rng, edge])
    if single:
        return int(out[0][0]), float(out[1][0]), float(out[2][0])
    return out


def compute_rib_weights(
    part: CleanPart,
    ribs: list[Rib],
    sigma: float,
    w_min: float = DEFAULT_WEIGHT_FLOOR,
    prune: bool = True,
) -> WeightMatrix:
    """Vertex-to-rib weight matrix with per-nonzero nearest-edge projections.

    Candidate ribs are pruned with a KD-tree over rib polyline points using
    radius R + (longest rib edge)/2, which provably contains every rib whose
    exact point-to-edge distance is within the support radius R, so pruned
    output equals the brute-force scan. Rows with no support stay all-zero.
    """
    v = part.vertices
    n = len(v)
    radius = support_radius(sigma, w_min)
    rows, cols, vals = [], [], []
    p_edge, p_par, p_dist = [], [], []
    for col, rib in enumerate(ribs):
        if prune:
            seg_a, seg_b = _rib_segments(rib)
            max_half = 0.5 * float(np.linalg.norm(seg_b - seg_a, axis=1).max())
            near = cKDTree(rib.points).query(v)[0] <= radius + max_half
            cand = np.flatnonzero(near)
        else:
            cand = np.arange(n)
        if len(cand) == 0:
            continue
        edge, par, dist = project_to_rib(v[cand], rib)
        w = raw_weight(dist, sigma, w_min)
        keep = w > 0.0
        idx = cand[keep]
        rows.append(idx)
        cols.append(np.full(len(idx), col, dtype=np.int64))
        vals.append(w[keep])
        p_edge.append(edge[keep])
        p_par.append(par[keep])
        p_dist.append(dist[keep])

    if rows:
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        p_edge = np.concatenate(p_edge)
        p_par = np.concatenate(p_par)
        p_dist = np.concatenate(p_dist)
    else:
        rows = np.zeros(0, dtype=np.int64)
        cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
        p_edge = np.zeros(0, dtype=np.int64)
        p_par = np.zeros(0)
        p_dist = np.zeros(0)

    sums = np.zeros(n)
    np.add.at(sums, rows, vals)
    vals = vals / sums[rows]
    mat = WeightMatrix("rib", (n, len(ribs)), rows, cols, vals, p_edge, p_par, p_dist)
    return mat.canonicalize()


def compute_spine_weights(
    part: CleanPart,
    key_points: np.ndarray,
    sigma: float,
    w_min: float = DEFAULT_WEIGHT_FLOOR,
) -> WeightMatrix:
    """Vertex-to-spine-key weights; unsupported vertices rigidly follow their
    nearest key."""
    v = part.vertices
    n = len(v)
    k = len(key_points)
    dist = np.linalg.norm(v[:, None, :] - key_points[None, :, :], axis=2)
    w = raw_weight(dist, sigma, w_min)
    sums = w.sum(axis=1)
    supported = sums > 0.0
    rr, cc = np.nonzero(w)  # normalized soft rows
    vv = w[rr, cc] / sums[rr]
    # rigid fallback rows
    unsupported = np.flatnonzero(~supported)
    fallback = np.zeros((len(unsupported), 2), dtype=np.int64)
    if len(unsupported):
        nearest = np.argmin(dist[unsupported], axis=1)
        fallback[:, 0] = unsupported
        fallback[:, 1] = nearest
        rr = np.concatenate([rr, unsupported])
        cc = np.concatenate([cc, nearest])
        vv = np.concatenate([vv, np.ones(len(unsupported))])
    mat = WeightMatrix("spine", (n, k), rr.astype(np.int64), cc.astype(np.int64), vv,
                       rigid_fallback=fallback)
    return mat.canonicalize()


# ---------------------------------------------------------------------------
# Content-addressed cache
# ---------------------------------------------------------------------------

@dataclass
class RigCacheKey:
    digest: str

    @staticmethod
    def for_part(part: CleanPart, ribs: list[Rib], spine: SpineTree,
                 sigma_rib: float, sigma_spine: float, w_min: float) -> "RigCacheKey":
        pieces = [part.vertices, part.faces.astype(np.int64)]
        for rib in ribs:
            pieces.extend([rib.points, rib.edge_vertices, rib.edge_params,
                           np.array([rib.level_index, rib.sub_index, int(rib.closed)])])
        pieces.append(spine.key_points)
        pieces.append(spine.parent)
        pieces.append(np.array([sigma_rib, sigma_spine, w_min], dtype=np.float64))
        return RigCacheKey(hash_arrays(*pieces))


def cache_root() -> Path:
    root = os.environ.get(CACHE_ENV_VAR)
    if root:
        return Path(root)
    return Path.home() / ".cache" / "fishbone"


def _cache_paths(key: RigCacheKey, root: Path | None):
    base = (root or cache_root()) / key.digest[:2]
    return base / f"{key.digest}.fbw", base / f"{key.digest}.json"


def _matrix_blocks(prefix: str, mat: WeightMatrix) -> dict:
    blocks = {
        f"{prefix}/rows": mat.rows,
        f"{prefix}/cols": mat.cols,
        f"{prefix}/values": mat.values,
    }
    if mat.proj_edge is not None:
        blocks[f"{prefix}/proj_edge"] = mat.proj_edge
        blocks[f"{prefix}/proj_param"] = mat.proj_param
        blocks[f"{prefix}/proj_distance"] = mat.proj_distance
    if mat.rigid_fallback is not None:
        blocks[f"{prefix}/rigid_fallback"] = mat.rigid_fallback
    return blocks


def _matrix_from_blocks(prefix: str, kind: str, shape, blocks: dict) -> WeightMatrix:
    def opt(name):
        return blocks.get(f"{prefix}/{name}")

    return WeightMatrix(
        kind, tuple(shape),
        blocks[f"{prefix}/rows"], blocks[f"{prefix}/cols"], blocks[f"{prefix}/values"],
        opt("proj_edge"), opt("proj_param"), opt("proj_distance"), opt("rigid_fallback"),
    )


def cache_lookup_or_compute(key: RigCacheKey, compute, root: Path | None = None):
    """Return the (rib, spine) WeightMatrix pair for key, computing on miss.

    Cache entries are container files written to a temp name and atomically
    renamed, so concurrent readers never observe partial entries. Corrupt
    entries are recomputed and overwritten with a warning.
    """
    from .container import read_container, write_container

    fbw, manifest = _cache_paths(key, root)
    if fbw.exists():
        try:
            meta, blocks = read_container(fbw)
            if meta["digest"] != key.digest:
                raise ValueError("digest mismatch")
            rib = _matrix_from_blocks("rib", "rib", meta["rib_shape"], blocks)
            spin = _matrix_from_blocks("spine", "spine", meta["spine_shape"], blocks)
            rib.validate()
            spin.validate()
            return rib, spin, True
        except Exception as exc:  # corrupt entry: recompute below
            log.warning("corrupt cache entry %s (%s); recomputing", fbw.name, exc)

    rib, spin = compute()
    blocks = {**_matrix_blocks("rib", rib), **_matrix_blocks("spine", spin)}
    meta = {"digest": key.digest, "rib_shape": list(rib.shape), "spine_shape": list(spin.shape)}
    fbw.parent.mkdir(parents=True, exist_ok=True)
    write_container(fbw, meta, blocks)
    tmp = tempfile.NamedTemporaryFile(
        "w", dir=str(fbw.parent), suffix=".json.tmp", delete=False, encoding="utf-8"
    )
    try:
        json.dump(meta, tmp, sort_keys=True)
        tmp.close()
        os.replace(tmp.name, manifest)
    finally:
        if os.path.exists(tmp.name):
            os.unlink(tmp.name)
    return rib, spin, False
