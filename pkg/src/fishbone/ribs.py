"""Iso-contour rib extraction: level planning, marching, filtering, branch tree.

Ribs are ordered polylines traced where the geodesic field crosses a level.
Each rib point lives on one mesh edge at an interpolation parameter, so ribs
can be re-evaluated exactly against a deformed vertex buffer.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import ExtractionFailureError
from .geodesic import GeodesicField
from .mesh_io import CleanPart, unique_edges
from .util import lerp_on_edges, round_half_away

log = logging.getLogger(__name__)

K_MIN, K_MAX = 3, 10
MIN_POINTS_CLOSED = 3
MIN_POINTS_OPEN = 2
LEVEL_PERTURB = 1e-12


@dataclass
class Rib:
    """Ordered surface polyline at one geodesic level."""

    points: np.ndarray            # (M,3), current pose
    level_index: int
    sub_index: int
    closed: bool
    part_id: int
    edge_vertices: np.ndarray     # (M,2) part-local vertex ids, canonical a<b
    edge_params: np.ndarray       # (M,) lambda along each edge
    parent: int | None = None     # rib id at the previous level
    rib_id: int = -1              # global id, assigned at tree build

    @property
    def n_points(self) -> int:
        return len(self.points)

    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def arclengths(self) -> np.ndarray:
        """Cumulative arc length at each point (not including the wrap edge)."""
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    def reevaluate(self, vertices: np.ndarray) -> None:
        """Re-anchor points on the current vertex buffer (bitwise-stable lerp)."""
        self.points = lerp_on_edges(vertices, self.edge_vertices, self.edge_params)


@dataclass
class LevelPlan:
    K: int
    levels: np.ndarray


@dataclass
class RibTree:
    """Parent forest over sub-ribs plus the sampled levels."""

    ribs: list[Rib]
    levels: np.ndarray

    def children(self, rib_id: int) -> list[int]:
        return [r.rib_id for r in self.ribs if r.parent == rib_id]

    def roots(self) -> list[int]:
        return [r.rib_id for r in self.ribs if r.parent is None]


def plan_levels(part_extent: float, object_extent: float, phi_max: float) -> LevelPlan:
    """Adaptive level count K = clip(round(10 Lp/Lo), 3, 10), uniform interior levels.

    Levels sit at k/(K+1) fractions of phi_max for k = 1..K, excluding both
    endpoints where contours degenerate.
    """
    if part_extent <= 0 or object_extent <= 0 or phi_max <= 0:
        raise ValueError("extents and phi_max must be positive")
    k = round_half_away(10.0 * part_extent / object_extent)
    k = min(max(k, K_MIN), K_MAX)
    levels = phi_max * np.arange(1, k + 1) / (k + 1.0)
    return LevelPlan(k, levels)


def trace_level(part: CleanPart, field: GeodesicField, level: float, level_index: int = 0) -> list[Rib]:
    """All iso-contour polylines of the field at one level.

    Crossing edges satisfy phi(vi) <= level < phi(vj); crossing points are
    linear interpolations on those edges. Segments from neighboring triangles
    are stitched into maximal ordered polylines; cycles are closed ribs.
    """
    phi = field.phi
    if level <= phi.min() or level >= phi.max():
        return []
    # Vertices exactly at the level are nudged to avoid vertex-exact crossings.
    exact = phi == level
    if exact.any():
        phi = phi.copy()
        phi[exact] += LEVEL_PERTURB * field.phi_max

    faces = part.faces
    below = phi <= level  # "inside" labeling

    edges, _ = unique_edges(faces)
    crossing_mask = below[edges[:, 0]] != below[edges[:, 1]]
    crossing_edges = edges[crossing_mask]
    edge_index = {(int(a), int(b)): k for k, (a, b) in enumerate(crossing_edges)}

    # Each face with mixed labels contributes one segment joining its two
    # crossing edges; nodes therefore have degree <= 2 and trace to paths/cycles.
    adjacency: dict[int, list[int]] = {k: [] for k in range(len(crossing_edges))}
    for tri in faces:
        lab = below[tri]
        if lab.all() or not lab.any():
            continue
        cut = []
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            if below[a] != below[b]:
                cut.append(edge_index[(int(min(a, b)), int(max(a, b)))])
        if len(cut) == 2:
            adjacency[cut[0]].append(cut[1])
            adjacency[cut[1]].append(cut[0])

    visited = np.zeros(len(crossing_edges), dtype=bool)
    chains: list[tuple[list[int], bool]] = []

    def walk(start: int) -> tuple[list[int], bool]:
        chain = [start]
        visited[start] = True
        prev = -1
        cur = start
        while True:
            nxts = [n for n in sorted(adjacency[cur]) if n != prev or adjacency[cur].count(n) > 1]
            nxts = [n for n in nxts if not visited[n]]
            if not nxts:
                closed = start in adjacency[cur] and len(chain) > 2
                return chain, closed
            prev, cur = cur, nxts[0]
            visited[cur] = True
            chain.append(cur)

    for k in range(len(crossing_edges)):  # open chains first, from their ends
        if not visited[k] and len(adjacency[k]) <= 1:
            chains.append(walk(k))
    for k in range(len(crossing_edges)):  # remaining cycles
        if not visited[k]:
            chains.append(walk(k))

    ribs = []
    for sub, (chain, closed) in enumerate(chains):
        ev = crossing_edges[chain]
        lo, hi = phi[ev[:, 0]], phi[ev[:, 1]]
        params = (level - lo) / (hi - lo)
        pts = lerp_on_edges(part.vertices, ev, params)
        ribs.append(
            Rib(pts, level_index, sub, bool(closed), part.part_id, ev.copy(), params)
        )
    ribs.sort(key=lambda r: int(r.edge_vertices[0, 0]) * len(part.vertices) + int(r.edge_vertices[0, 1]))
    for sub, rib in enumerate(ribs):
        rib.sub_index = sub
    return ribs


def filter_ribs(ribs: list[Rib], is_thin_shell: bool) -> list[Rib]:
    """Solid parts keep closed loops only; sheets also keep open polylines.

    Undersized polylines are dropped in both cases.
    """
    kept = []
    for rib in ribs:
        if rib.closed and rib.n_points >= MIN_POINTS_CLOSED:
            kept.append(rib)
        elif not rib.closed and is_thin_shell and rib.n_points >= MIN_POINTS_OPEN:
            kept.append(rib)
    return kept


def _face_adjacency(faces: np.ndarray):
    """face -> neighboring faces across shared edges."""
    edge_faces: dict[tuple[int, int], list[int]] = {}
    for fi, tri in enumerate(faces):
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (int(min(a, b)), int(max(a, b)))
            edge_faces.setdefault(key, []).append(fi)
    neighbors: dict[int, list[int]] = {}
    for flist in edge_faces.values():
        for fi in flist:
            for fj in flist:
                if fi != fj:
                    neighbors.setdefault(fi, []).append(fj)
    return neighbors, edge_faces


def rib_faces(rib: Rib, edge_faces: dict) -> list[int]:
    """Faces associated with a sub-rib: those its crossing edges belong to."""
    out: set[int] = set()
    for a, b in rib.edge_vertices:
        out.update(edge_faces.get((int(min(a, b)), int(max(a, b))), ()))
    return sorted(out)


def build_branch_tree(part: CleanPart, field: GeodesicField, ribs_by_level: list[list[Rib]]) -> RibTree:
    """Parent links between consecutive levels via multi-source BFS on face strips.

    Between levels k-1 and k the BFS runs on faces whose phi range intersects
    [phi_{k-1}, phi_k], seeded from the level-(k-1) sub-ribs' faces. A level-k
    sub-rib takes the label that first reaches the majority of its faces, ties
    resolved by centroid proximity.
    """
    phi = field.phi
    faces = part.faces
    face_min = phi[faces].min(axis=1)
    face_max = phi[faces].max(axis=1)
    neighbors, edge_faces = _face_adjacency(faces)

    all_ribs: list[Rib] = []
    for level_ribs in ribs_by_level:
        for rib in level_ribs:
            rib.rib_id = len(all_ribs)
            all_ribs.append(rib)

    # Consecutive levels that actually carry ribs; an all-filtered level is
    # bridged over rather than orphaning everything above it.
    flat_levels = sorted({r.level_index for r in all_ribs})
    by_level = {li: [r for r in all_ribs if r.level_index == li] for li in flat_levels}

    for prev_li, cur_li in zip(flat_levels[:-1], flat_levels[1:]):
        parents = by_level[prev_li]
        children = by_level[cur_li]
        strip_lo = min(np.min(phi[r.edge_vertices]) for r in parents)
        strip_hi = max(np.max(phi[r.edge_vertices]) for r in children)
        in_strip = (face_max >= strip_lo) & (face_min <= strip_hi)

        label = {}
        queue = deque()
        for rib in sorted(parents, key=lambda r: r.rib_id):
            for fi in rib_faces(rib, edge_faces):
                if in_strip[fi] and fi not in label:
                    label[fi] = rib.rib_id
                    queue.append(fi)
        while queue:
            fi = queue.popleft()
            for fj in sorted(neighbors.get(fi, ())):
                if in_strip[fj] and fj not in label:
                    label[fj] = label[fi]
                    queue.append(fj)

        for child in children:
            votes: dict[int, int] = {}
            for fi in rib_faces(child, edge_faces):
                if fi in label:
                    votes[label[fi]] = votes.get(label[fi], 0) + 1
            if not votes:
                log.info("rib %d at level %d has no reachable parent; new branch root",
                         child.rib_id, child.level_index)
                continue
            best = max(votes.values())
            tied = sorted(rid for rid, n in votes.items() if n == best)
            if len(tied) > 1:
                cc = child.centroid()
                tied.sort(key=lambda rid: (float(np.linalg.norm(all_ribs[rid].centroid() - cc)), rid))
            child.parent = tied[0]

    return RibTree(all_ribs, np.array(flat_levels, dtype=np.float64))


def extract_ribs(part: CleanPart, field: GeodesicField, plan: LevelPlan) -> RibTree:
    """Trace, filter, and organize all levels of one part."""
    ribs_by_level = []
    for li, level in enumerate(plan.levels):
        traced = trace_level(part, field, float(level), li)
        ribs_by_level.append(filter_ribs(traced, part.is_thin_shell))
    if not any(ribs_by_level):
        raise ExtractionFailureError(f"no rib survived filtering on part {part.part_id}")
    tree = build_branch_tree(part, field, ribs_by_level)
    tree.levels = plan.levels.copy()
    return tree
