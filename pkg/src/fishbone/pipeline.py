"""End-to-end extraction: mesh file -> cleaned parts -> fields -> ribs -> spine
-> weights -> assembled rig, with per-stage wall-clock timings."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import mesh_io
from .geodesic import RootSelection, build_operators, diffusion_time, select_root, solve_heat_geodesic
from .mesh_io import CleanPart, PartSet, RawMesh
from .ribs import RibTree, extract_ribs, plan_levels
from .rig import (
    ArcTable,
    CYL_BLEND_FRACTION,
    CylindricalBinding,
    EdgeFrames,
    FishboneRig,
    PartRig,
    build_arc_table,
    build_cylindrical_binding,
    compute_edge_frames,
)
from .skinning import (
    DEFAULT_NEIGHBOR_COUNT,
    DEFAULT_WEIGHT_FLOOR,
    RigCacheKey,
    WeightMatrix,
    bandwidth,
    cache_lookup_or_compute,
    compute_rib_weights,
    compute_spine_weights,
)
from .spine import assemble_spine, extract_all_spine_points

log = logging.getLogger(__name__)


@dataclass
class ExtractConfig:
    keep_largest_component: bool = False
    upright_hint: bool = True
    time_multiplier: float = 1.0
    score_weights: tuple = (1.0, 0.0, 0.0)
    grid: int = 128
    neighbor_count: float = DEFAULT_NEIGHBOR_COUNT
    w_min: float = DEFAULT_WEIGHT_FLOOR
    use_cache: bool = True
    cache_root: str | None = None
    root_override: dict = field(default_factory=dict)  # part_id -> list of vertex ids

    def to_provenance(self) -> dict:
        return {
            "keep_largest_component": self.keep_largest_component,
            "upright_hint": self.upright_hint,
            "time_multiplier": self.time_multiplier,
            "score_weights": list(self.score_weights),
            "grid": self.grid,
            "neighbor_count": self.neighbor_count,
            "w_min": self.w_min,
            "root_override": {str(k): [int(i) for i in v]
                              for k, v in self.root_override.items()},
        }


@dataclass
class StageTimings:
    rib_extraction_s: float = 0.0
    spine_construction_s: float = 0.0
    weight_computation_s: float = 0.0
    total_s: float = 0.0
    cache_hits: int = 0

    def as_dict(self) -> dict:
        return {
            "rib_extraction_s": round(self.rib_extraction_s, 6),
            "spine_construction_s": round(self.spine_construction_s, 6),
            "weight_computation_s": round(self.weight_computation_s, 6),
            "total_s": round(self.total_s, 6),
            "cache_hits": self.cache_hits,
        }


def extract_rig(raw: RawMesh, config: ExtractConfig | None = None):
    """Run the full extraction pipeline on an in-memory mesh.

    Returns (rig, timings). Solid parts that fail the watertight test are
    repaired into a welded twin for the geodesic/rib stages; weights and rib
    anchors are expanded back to the original vertices afterward.
    """
    config = config or ExtractConfig()
    t_start = time.perf_counter()
    timings = StageTimings()

    partset = mesh_io.clean_and_normalize(raw, config.keep_largest_component)
    object_extent = max(p.max_extent for p in partset.parts)

    fields = []
    plans = []
    ribs_trees: list[RibTree] = []
    geo_parts: list[CleanPart] = []
    t0 = time.perf_counter()
    for part in partset.parts:
        geo = part
        if not part.is_thin_shell and not mesh_io.is_watertight(part):
            geo = mesh_io.make_welded_twin(part)
        geo_parts.append(geo)
        override = None
        if part.part_id in config.root_override:
            override = RootSelection("y", "min",
                                     np.asarray(config.root_override[part.part_id], dtype=np.int64))
        root = select_root(geo, config.upright_hint, override)
        ops = build_operators(geo)
        t_diff = diffusion_time(ops, config.time_multiplier)
        fld = solve_heat_geodesic(geo, ops, root, t_diff, config.upright_hint)
        plan = plan_levels(geo.max_extent, object_extent, fld.phi_max)
        tree = extract_ribs(geo, fld, plan)
        if geo is not part:
            _reanchor_tree_to_original(tree, geo, part)
        fields.append(fld)
        plans.append(plan)
        ribs_trees.append(tree)
    timings.rib_extraction_s = time.perf_counter() - t0

    # merge per-part trees into one global rib list (ids already per part; re-id)
    t0 = time.perf_counter()
    all_ribs = []
    merged = RibTree([], np.zeros(0))
    for tree in ribs_trees:
        offset = len(all_ribs)
        for rib in tree.ribs:
            rib.rib_id += offset
            if rib.parent is not None:
                rib.parent += offset
            all_ribs.append(rib)
    merged.ribs = all_ribs
    merged.levels = np.concatenate([t.levels for t in ribs_trees])

    points = extract_all_spine_points(merged, tuple(config.score_weights), config.grid)
    spine = assemble_spine(merged, points)
    timings.spine_construction_s = time.perf_counter() - t0

    rest_keys = spine.key_points.copy()
    arc = build_arc_table(spine, rest_keys)
    frames = compute_edge_frames(spine, rest_keys)

    t0 = time.perf_counter()
    part_rigs = []
    for pid, part in enumerate(partset.parts):
        part_ribs = [r for r in all_ribs if r.part_id == pid]
        rib_cols = np.array([r.rib_id for r in part_ribs], dtype=np.int64)
        key_cols = np.flatnonzero(spine.part_ids == pid).astype(np.int64)
        sigma_r = bandwidth(part.max_extent, plans[pid].K, config.neighbor_count, config.w_min)
        sigma_s = sigma_r

        def compute(part=part, part_ribs=part_ribs, key_cols=key_cols,
                    sigma_r=sigma_r, sigma_s=sigma_s):
            wr = compute_rib_weights(part, part_ribs, sigma_r, config.w_min)
            ws = compute_spine_weights(part, spine.key_points[key_cols], sigma_s, config.w_min)
            return wr, ws

        if config.use_cache:
            key = RigCacheKey.for_part(part, part_ribs, spine, sigma_r, sigma_s, config.w_min)
            from pathlib import Path

            root_dir = Path(config.cache_root) if config.cache_root else None
            wr, ws, hit = cache_lookup_or_compute(key, compute, root_dir)
            timings.cache_hits += int(hit)
        else:
            wr, ws = compute()
        binding = build_cylindrical_binding(
            part.vertices, spine, rest_keys, frames, arc, key_cols,
            sigma_s=CYL_BLEND_FRACTION * part.bbox_diagonal,
        )
        part_rigs.append(PartRig(rib_cols, key_cols, wr, ws, binding,
                                 fields[pid], plans[pid], sigma_r, sigma_s))
    timings.weight_computation_s = time.perf_counter() - t0

    rig = FishboneRig(
        parts=partset,
        current_vertices=[p.vertices.copy() for p in partset.parts],
        ribs=all_ribs,
        rib_rest_points=[r.points.copy() for r in all_ribs],
        tree=merged,
        spine=spine,
        rest_key_points=rest_keys,
        part_rigs=part_rigs,
        arc_table=arc,
        frames=frames,
        provenance=config.to_provenance(),
    )
    timings.total_s = time.perf_counter() - t_start
    return rig, timings


def _reanchor_tree_to_original(tree: RibTree, twin: CleanPart, original: CleanPart) -> None:
    """Map twin-mesh rib anchors back to original-vertex representatives.

    Every weld cluster member receives identical expanded weights, so any
    representative gives the same tracking; the first original vertex of each
    cluster is used. Points are re-lerped on the original coordinates.
    """
    weld_map = twin.weld_map
    rep = np.zeros(len(twin.vertices), dtype=np.int64)
    seen = np.zeros(len(twin.vertices), dtype=bool)
    for orig_idx in range(len(weld_map) - 1, -1, -1):  # first original wins
        rep[weld_map[orig_idx]] = orig_idx
        seen[weld_map[orig_idx]] = True
    for rib in tree.ribs:
        valid = seen[rib.edge_vertices]
        if not valid.all():
            log.warning("rib %d references hole-fill vertices; keeping twin coordinates",
                        rib.rib_id)
            continue
        rib.edge_vertices = rep[rib.edge_vertices]
        rib.reevaluate(original.vertices)


def extract_rig_from_file(path, config: ExtractConfig | None = None, fmt: str | None = None):
    raw = mesh_io.load_mesh(path, fmt)
    return extract_rig(raw, config)
