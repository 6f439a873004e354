"""The assembled Fishbone rig: parts, ribs, spine, weights, frames, bindings.

A rig is a session-scoped mutable object; the current pose lives in
``current_vertices`` / rib ``points`` / ``spine.key_points`` while rest
copies stay untouched for replay, reset, and dynamics.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geodesic import GeodesicField
from .mesh_io import PartSet
from .ribs import LevelPlan, Rib, RibTree
from .skinning import WeightMatrix
from .spine import SpineTree
from .util import hash_arrays, normalized, perpendicular_to, rotation_between

GLOBAL_UP = np.array([0.0, 1.0, 0.0])
CYL_BLEND_FRACTION = 0.05  # sigma_s as a fraction of the part bbox diagonal


@dataclass
class ArcTable:
    """Rest arc-length bookkeeping over the spine tree."""

    key_arc: np.ndarray          # (K,) rest arc distance from each key's tree root
    edge_length: np.ndarray      # (E,) rest length per tree edge
    branch_length: np.ndarray    # (B,) rest total length per branch


@dataclass
class EdgeFrames:
    """Orthonormal (T, N, B) per tree edge, parallel transported from the root."""

    tangent: np.ndarray   # (E,3)
    normal: np.ndarray    # (E,3)
    binormal: np.ndarray  # (E,3)


@dataclass
class CylindricalBinding:
    """Per-vertex cylindrical coordinates on the nearest rest spine segment."""

    segment: np.ndarray   # (N,) tree edge index, -1 where no segment exists
    ell: np.ndarray       # (N,) clamped parametric foot along the segment
    alpha: np.ndarray     # (N,) tangential offset
    u: np.ndarray         # (N,) normal offset
    v: np.ndarray         # (N,) binormal offset
    d: np.ndarray         # (N,) distance to the spine polyline
    lam: np.ndarray       # (N,) cylindrical blend factor exp(-d^2 / (2 sigma_s^2))
    arc: np.ndarray       # (N,) rest arc coordinate of the foot from the tree root
    sigma_s: float = 0.0


@dataclass
class PartRig:
    """Per-part bundle: weights columns are part-local, mapped to global ids."""

    rib_cols: np.ndarray        # (Kr,) global rib id per rib-weights column
    key_cols: np.ndarray        # (Ks,) global key index per spine-weights column
    rib_weights: WeightMatrix
    spine_weights: WeightMatrix
    binding: CylindricalBinding
    field: GeodesicField
    plan: LevelPlan
    sigma_rib: float
    sigma_spine: float


@dataclass
class FishboneRig:
    parts: PartSet                       # rest geometry
    current_vertices: list[np.ndarray]   # per-part current pose
    ribs: list[Rib]                      # rib.points track the current pose
    rib_rest_points: list[np.ndarray]
    tree: RibTree
    spine: SpineTree                     # key_points track the current pose
    rest_key_points: np.ndarray
    part_rigs: list[PartRig]
    arc_table: ArcTable
    frames: EdgeFrames                   # rest-pose frames per spine tree edge
    provenance: dict = field(default_factory=dict)

    @property
    def n_vertices(self) -> int:
        return sum(len(v) for v in self.current_vertices)

    @property
    def n_keys(self) -> int:
        return self.spine.n_keys

    @property
    def reduction_ratio(self) -> float:
        return self.n_keys / max(self.n_vertices, 1)

    def edges(self) -> np.ndarray:
        return self.spine.edges()

    def part_of_rib(self, rib_id: int) -> int:
        return self.ribs[rib_id].part_id

    def refresh_ribs(self, part_ids=None) -> None:
        """Re-anchor rib polylines on the current vertex buffers."""
        for rib in self.ribs:
            if part_ids is None or rib.part_id in part_ids:
                rib.reevaluate(self.current_vertices[rib.part_id])

    def reset(self) -> None:
        for pid, part in enumerate(self.parts.parts):
            self.current_vertices[pid] = part.vertices.copy()
        self.spine.key_points = self.rest_key_points.copy()
        for rib, rest in zip(self.ribs, self.rib_rest_points):
            rib.points = rest.copy()

    def pose_hash(self) -> str:
        return hash_arrays(*self.current_vertices, self.spine.key_points)

    def branch_of(self, branch_id: int) -> np.ndarray:
        return self.spine.branches[branch_id]


def build_arc_table(spine: SpineTree, key_points: np.ndarray) -> ArcTable:
    edges = spine.edges()
    lengths = np.linalg.norm(key_points[edges[:, 1]] - key_points[edges[:, 0]], axis=1)
    key_arc = np.zeros(spine.n_keys)
    # parents always precede children in rib-id/key order (levels increase)
    for (p, c), ln in zip(edges, lengths):
        key_arc[c] = key_arc[p] + ln
    branch_length = np.array([key_arc[b[-1]] - key_arc[b[0]] for b in spine.branches])
    return ArcTable(key_arc, lengths, branch_length)


def compute_edge_frames(
    spine: SpineTree,
    key_points: np.ndarray,
    root_normal_hint: np.ndarray | None = None,
    rest_frames: "EdgeFrames | None" = None,
) -> EdgeFrames:
    """Discrete parallel transport of a normal along the spine tree.

    At rest the root normal is the global-up component orthogonal to the root
    tangent (or any perpendicular when parallel). For a deformed spine, the
    rest root frame is carried onto the current root tangent by the minimal
    rotation between rest and current tangents, then transported edge to edge.
    """
    edges = spine.edges()
    n_e = len(edges)
    tangent = np.zeros((n_e, 3))
    normal = np.zeros((n_e, 3))
    binormal = np.zeros((n_e, 3))
    if n_e == 0:
        return EdgeFrames(tangent, normal, binormal)
    for e, (p, c) in enumerate(edges):
        tangent[e] = normalized(key_points[c] - key_points[p])

    # edge children: edges whose parent key is this edge's child key
    first_edge_of_key: dict[int, int] = {}
    for e, (p, c) in enumerate(edges):
        first_edge_of_key.setdefault(int(c), e)

    for e, (p, c) in enumerate(edges):
        parent_edge = first_edge_of_key.get(int(p), -1)
        t = tangent[e]
        if parent_edge < 0:  # root edge of its component
            if rest_frames is not None:
                t_rest = rest_frames.tangent[e]
                n0 = rotation_between(t_rest, t) @ rest_frames.normal[e]
            else:
                hint = GLOBAL_UP if root_normal_hint is None else root_normal_hint
                n0 = hint - np.dot(hint, t) * t
                if np.linalg.norm(n0) < 1e-9:
                    n0 = perpendicular_to(t)
                n0 = normalized(n0)
        else:
            n0 = rotation_between(tangent[parent_edge], t) @ normal[parent_edge]
        n0 = n0 - np.dot(n0, t) * t
        n0 = normalized(n0)
        normal[e] = n0
        binormal[e] = np.cross(t, n0)
    return EdgeFrames(tangent, normal, binormal)


def build_cylindrical_binding(
    vertices: np.ndarray,
    spine: SpineTree,
    key_points: np.ndarray,
    frames: EdgeFrames,
    arc: ArcTable,
    key_cols: np.ndarray,
    sigma_s: float,
) -> CylindricalBinding:
    """Bind vertices to their nearest rest spine segment among this part's keys."""
    edges = spine.edges()
    n = len(vertices)
    own = np.isin(edges[:, 0], key_cols) & np.isin(edges[:, 1], key_cols)
    cand = np.flatnonzero(own)
    if len(cand) == 0:
        zero = np.zeros(n)
        return CylindricalBinding(-np.ones(n, dtype=np.int64), zero, zero.copy(), zero.copy(),
                                  zero.copy(), zero.copy(), np.ones(n), zero.copy(), sigma_s)
    seg_a = key_points[edges[cand, 0]]
    seg_b = key_points[edges[cand, 1]]
    d = seg_b - seg_a
    len2 = np.einsum("ij,ij->i", d, d)
    rel = vertices[:, None, :] - seg_a[None, :, :]
    t_all = np.einsum("psj,sj->ps", rel, d) / np.where(len2 > 0.0, len2, 1.0)
    t_all = np.clip(t_all, 0.0, 1.0)
    foot = seg_a[None, :, :] + t_all[:, :, None] * d[None, :, :]
    dist = np.linalg.norm(vertices[:, None, :] - foot, axis=2)
    nearest = np.argmin(dist, axis=1)
    rng = np.arange(n)
    seg = cand[nearest].astype(np.int64)
    ell = t_all[rng, nearest]
    foot_pts = foot[rng, nearest]
    offset = vertices - foot_pts
    tang = frames.tangent[seg]
    nrm = frames.normal[seg]
    binrm = frames.binormal[seg]
    alpha = np.einsum("ij,ij->i", offset, tang)
    u = np.einsum("ij,ij->i", offset, nrm)
    v = np.einsum("ij,ij->i", offset, binrm)
    dmin = dist[rng, nearest]
    lam = np.exp(-np.square(dmin) / (2.0 * sigma_s * sigma_s))
    arc_coord = arc.key_arc[edges[seg, 0]] + ell * arc.edge_length[seg]
    return CylindricalBinding(seg, ell, alpha, u, v, dmin, lam, arc_coord, sigma_s)


def reconstruct_cylindrical(
    binding: CylindricalBinding,
    edges: np.ndarray,
    key_points: np.ndarray,
    frames: EdgeFrames,
    u: np.ndarray | None = None,
    v: np.ndarray | None = None,
) -> np.ndarray:
    """Vertex positions from cylindrical coordinates in the given frames.

    Optional u/v overrides support twist (rotated in-plane offsets).
    """
    seg = binding.segment
    ok = seg >= 0
    su = binding.u if u is None else u
    sv = binding.v if v is None else v
    out = np.zeros((len(seg), 3))
    s = seg[ok]
    a = key_points[edges[s, 0]]
    b = key_points[edges[s, 1]]
    foot = a + binding.ell[ok, None] * (b - a)
    out[ok] = (
        foot
        + binding.alpha[ok, None] * frames.tangent[s]
        + su[ok, None] * frames.normal[s]
        + sv[ok, None] * frames.binormal[s]
    )
    return out
