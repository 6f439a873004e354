"""Versioned single-file rig serialization (.fbr) with bit-exact round trips.

Everything numeric goes into canonical little-endian blocks; the JSON header
carries structure and provenance. Loading re-runs the invariant suite (row
sums, reference resolution) and names the failed check on corruption.
"""

from __future__ import annotations

import numpy as np

from .container import read_container, write_container
from .errors import RigFileError
from .geodesic import GeodesicField
from .mesh_io import AffineTransform, CleanPart, PartSet
from .ribs import LevelPlan, Rib, RibTree
from .rig import ArcTable, CylindricalBinding, EdgeFrames, FishboneRig, PartRig
from .skinning import WeightMatrix
from .spine import SpineTree

RIG_VERSION = 1


def _weights_blocks(prefix: str, wm: WeightMatrix, blocks: dict) -> dict:
    blocks[f"{prefix}/rows"] = wm.rows
    blocks[f"{prefix}/cols"] = wm.cols
    blocks[f"{prefix}/values"] = wm.values
    if wm.proj_edge is not None:
        blocks[f"{prefix}/proj_edge"] = wm.proj_edge
        blocks[f"{prefix}/proj_param"] = wm.proj_param
        blocks[f"{prefix}/proj_distance"] = wm.proj_distance
    if wm.rigid_fallback is not None:
        blocks[f"{prefix}/rigid_fallback"] = wm.rigid_fallback
    return {"kind": wm.kind, "shape": list(wm.shape)}


def _weights_from_blocks(prefix: str, meta: dict, blocks: dict) -> WeightMatrix:
    def opt(name):
        return blocks.get(f"{prefix}/{name}")

    wm = WeightMatrix(
        meta["kind"], tuple(meta["shape"]),
        blocks[f"{prefix}/rows"], blocks[f"{prefix}/cols"], blocks[f"{prefix}/values"],
        opt("proj_edge"), opt("proj_param"), opt("proj_distance"), opt("rigid_fallback"),
    )
    return wm


def save_rig(rig: FishboneRig, path) -> None:
    blocks: dict[str, np.ndarray] = {}
    parts_meta = []
    for pid, part in enumerate(rig.parts.parts):
        p = f"part/{pid:03d}"
        blocks[f"{p}/vertices"] = part.vertices
        blocks[f"{p}/current"] = rig.current_vertices[pid]
        blocks[f"{p}/faces"] = part.faces
        if part.weld_map is not None:
            blocks[f"{p}/weld_map"] = part.weld_map
        parts_meta.append({
            "part_id": part.part_id,
            "is_thin_shell": part.is_thin_shell,
            "watertight_warning": part.watertight_warning,
            "norm_scale": part.normalization.scale,
            "norm_offset": [float(x) for x in part.normalization.offset],
            "has_weld_map": part.weld_map is not None,
        })

    ribs_meta = []
    for rib in rig.ribs:
        r = f"rib/{rib.rib_id:04d}"
        blocks[f"{r}/points"] = rib.points
        blocks[f"{r}/rest_points"] = rig.rib_rest_points[rib.rib_id]
        blocks[f"{r}/edge_vertices"] = rib.edge_vertices
        blocks[f"{r}/edge_params"] = rib.edge_params
        ribs_meta.append({
            "rib_id": rib.rib_id, "level_index": rib.level_index, "sub_index": rib.sub_index,
            "closed": rib.closed, "part_id": rib.part_id,
            "parent": -1 if rib.parent is None else rib.parent,
        })
    blocks["tree/levels"] = rig.tree.levels

    blocks["spine/key_points"] = rig.spine.key_points
    blocks["spine/rest_key_points"] = rig.rest_key_points
    blocks["spine/rib_ids"] = rig.spine.rib_ids
    blocks["spine/parent"] = rig.spine.parent
    blocks["spine/junctions"] = rig.spine.junctions
    blocks["spine/part_ids"] = rig.spine.part_ids
    blocks["spine/branch_offsets"] = np.cumsum(
        [0] + [len(b) for b in rig.spine.branches]
    ).astype(np.int64)
    blocks["spine/branch_keys"] = (
        np.concatenate(rig.spine.branches).astype(np.int64)
        if rig.spine.branches else np.zeros(0, dtype=np.int64)
    )

    blocks["arc/key_arc"] = rig.arc_table.key_arc
    blocks["arc/edge_length"] = rig.arc_table.edge_length
    blocks["arc/branch_length"] = rig.arc_table.branch_length
    blocks["frames/tangent"] = rig.frames.tangent
    blocks["frames/normal"] = rig.frames.normal
    blocks["frames/binormal"] = rig.frames.binormal

    part_rig_meta = []
    for pid, pr in enumerate(rig.part_rigs):
        p = f"partrig/{pid:03d}"
        blocks[f"{p}/rib_cols"] = pr.rib_cols
        blocks[f"{p}/key_cols"] = pr.key_cols
        wr_meta = _weights_blocks(f"{p}/wr", pr.rib_weights, blocks)
        ws_meta = _weights_blocks(f"{p}/ws", pr.spine_weights, blocks)
        blocks[f"{p}/field/phi"] = pr.field.phi
        blocks[f"{p}/field/roots"] = pr.field.root_vertices
        blocks[f"{p}/field/component"] = pr.field.component_id
        blocks[f"{p}/plan/levels"] = pr.plan.levels
        b = pr.binding
        blocks[f"{p}/bind/segment"] = b.segment
        blocks[f"{p}/bind/ell"] = b.ell
        blocks[f"{p}/bind/alpha"] = b.alpha
        blocks[f"{p}/bind/u"] = b.u
        blocks[f"{p}/bind/v"] = b.v
        blocks[f"{p}/bind/d"] = b.d
        blocks[f"{p}/bind/lam"] = b.lam
        blocks[f"{p}/bind/arc"] = b.arc
        part_rig_meta.append({
            "wr": wr_meta, "ws": ws_meta,
            "sigma_rib": pr.sigma_rib, "sigma_spine": pr.sigma_spine,
            "diffusion_time": pr.field.diffusion_time,
            "plan_k": pr.plan.K,
            "binding_sigma_s": b.sigma_s,
        })

    meta = {
        "kind": "fishbone-rig",
        "version": RIG_VERSION,
        "shared_norm_scale": rig.parts.shared_normalization.scale,
        "shared_norm_offset": [float(x) for x in rig.parts.shared_normalization.offset],
        "parts": parts_meta,
        "ribs": ribs_meta,
        "part_rigs": part_rig_meta,
        "provenance": rig.provenance,
    }
    write_container(path, meta, blocks)


def load_rig(path) -> FishboneRig:
    meta, blocks = read_container(path)
    if meta.get("kind") != "fishbone-rig":
        raise RigFileError(f"{path}: not a fishbone rig file")
    if meta.get("version") != RIG_VERSION:
        raise RigFileError(
            f"{path}: rig version {meta.get('version')} unsupported (expected {RIG_VERSION})"
        )

    shared = AffineTransform(meta["shared_norm_scale"], np.array(meta["shared_norm_offset"]))
    parts = []
    current = []
    for pid, pm in enumerate(meta["parts"]):
        p = f"part/{pid:03d}"
        norm = AffineTransform(pm["norm_scale"], np.array(pm["norm_offset"]))
        part = CleanPart(
            blocks[f"{p}/vertices"], blocks[f"{p}/faces"], pm["part_id"],
            pm["is_thin_shell"], norm,
            weld_map=blocks.get(f"{p}/weld_map"),
            watertight_warning=pm["watertight_warning"],
        )
        parts.append(part)
        current.append(blocks[f"{p}/current"])
    partset = PartSet(parts, shared)

    ribs = []
    rest_points = []
    for rm in meta["ribs"]:
        r = f"rib/{rm['rib_id']:04d}"
        rib = Rib(
            blocks[f"{r}/points"], rm["level_index"], rm["sub_index"], rm["closed"],
            rm["part_id"], blocks[f"{r}/edge_vertices"], blocks[f"{r}/edge_params"],
            parent=None if rm["parent"] < 0 else rm["parent"], rib_id=rm["rib_id"],
        )
        ribs.append(rib)
        rest_points.append(blocks[f"{r}/rest_points"])
    tree = RibTree(ribs, blocks["tree/levels"])

    offs = blocks["spine/branch_offsets"]
    branch_keys = blocks["spine/branch_keys"]
    branches = [branch_keys[offs[i]: offs[i + 1]].copy() for i in range(len(offs) - 1)]
    spine = SpineTree(
        blocks["spine/key_points"], branches, blocks["spine/junctions"],
        blocks["spine/rib_ids"], blocks["spine/parent"], blocks["spine/part_ids"],
    )
    arc = ArcTable(blocks["arc/key_arc"], blocks["arc/edge_length"],
                   blocks["arc/branch_length"])
    frames = EdgeFrames(blocks["frames/tangent"], blocks["frames/normal"],
                        blocks["frames/binormal"])

    part_rigs = []
    for pid, pm in enumerate(meta["part_rigs"]):
        p = f"partrig/{pid:03d}"
        wr = _weights_from_blocks(f"{p}/wr", pm["wr"], blocks)
        ws = _weights_from_blocks(f"{p}/ws", pm["ws"], blocks)
        fld = GeodesicField(blocks[f"{p}/field/phi"], blocks[f"{p}/field/roots"],
                            pm["diffusion_time"], blocks[f"{p}/field/component"])
        plan = LevelPlan(pm["plan_k"], blocks[f"{p}/plan/levels"])
        binding = CylindricalBinding(
            blocks[f"{p}/bind/segment"], blocks[f"{p}/bind/ell"], blocks[f"{p}/bind/alpha"],
            blocks[f"{p}/bind/u"], blocks[f"{p}/bind/v"], blocks[f"{p}/bind/d"],
            blocks[f"{p}/bind/lam"], blocks[f"{p}/bind/arc"], pm["binding_sigma_s"],
        )
        part_rigs.append(PartRig(blocks[f"{p}/rib_cols"], blocks[f"{p}/key_cols"],
                                 wr, ws, binding, fld, plan,
                                 pm["sigma_rib"], pm["sigma_spine"]))

    rig = FishboneRig(
        parts=partset, current_vertices=current, ribs=ribs, rib_rest_points=rest_points,
        tree=tree, spine=spine, rest_key_points=blocks["spine/rest_key_points"],
        part_rigs=part_rigs, arc_table=arc, frames=frames,
        provenance=meta.get("provenance", {}),
    )
    _validate_rig(rig, str(path))
    return rig


def _validate_rig(rig: FishboneRig, path: str) -> None:
    checks = []
    for pid, pr in enumerate(rig.part_rigs):
        try:
            pr.rib_weights.validate()
            pr.spine_weights.validate()
        except ValueError as exc:
            checks.append(f"part {pid} weight row sums: {exc}")
        if len(pr.rib_cols) and pr.rib_cols.max() >= len(rig.ribs):
            checks.append(f"part {pid} rib_cols reference unknown ribs")
        if len(pr.key_cols) and pr.key_cols.max() >= rig.n_keys:
            checks.append(f"part {pid} key_cols reference unknown keys")
    for rib in rig.ribs:
        if rib.parent is not None and not (0 <= rib.parent < len(rig.ribs)):
            checks.append(f"rib {rib.rib_id} parent unresolved")
        n_verts = len(rig.parts.parts[rib.part_id].vertices)
        if rib.edge_vertices.size and rib.edge_vertices.max() >= n_verts:
            checks.append(f"rib {rib.rib_id} edge anchors out of range")
    for b in rig.spine.branches:
        if len(b) and b.max() >= rig.n_keys:
            checks.append("branch references unknown key")
    if checks:
        raise RigFileError(f"{path}: corrupt rig, failed checks: " + "; ".join(checks))
