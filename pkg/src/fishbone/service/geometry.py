"""Snapshot payload assembly: rig state -> wire-format geometry."""

from __future__ import annotations

from ..rig import FishboneRig
from .schemas import (
    CAMERA_VIEWS,
    PartGeometry,
    RibGeometry,
    Snapshot,
    SpineGeometry,
    encode_f32,
    encode_i32,
)


def snapshot_payload(rig: FishboneRig, view: str = "+z", include_faces: bool = True) -> Snapshot:
    if view not in CAMERA_VIEWS:
        view = "+z"
    parts = []
    for pid, part in enumerate(rig.parts.parts):
        parts.append(PartGeometry(
            part_id=pid,
            positions=encode_f32(rig.current_vertices[pid]),
            faces=encode_i32(part.faces) if include_faces else None,
        ))
    ribs = [
        RibGeometry(rib_id=r.rib_id, closed=r.closed, part_id=r.part_id,
                    points=encode_f32(r.points))
        for r in rig.ribs
    ]
    spine = SpineGeometry(
        key_points=encode_f32(rig.spine.key_points),
        branches=[[int(k) for k in b] for b in rig.spine.branches],
        junctions=[int(j) for j in rig.spine.junctions],
    )
    return Snapshot(snapshot_hash=rig.pose_hash(), view=view, parts=parts, ribs=ribs, spine=spine)
