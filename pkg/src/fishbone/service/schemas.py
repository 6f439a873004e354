"""Pydantic request/response models for the session service wire format.

Geometry travels as base64-encoded little-endian float32 blocks inside JSON;
the server keeps float64 internally. Snapshot hashes are computed over the
float64 state, so they are stable regardless of the wire precision.
"""

from __future__ import annotations

import base64
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field

CAMERA_VIEWS = ("+x", "-x", "+y", "-y", "+z", "-z")

CommandName = Literal[
    "list_parts", "set_part", "list_ribs", "select_ribs",
    "list_spine_branches", "select_spine_branch", "deform",
    "reset", "snapshot", "done",
]


def encode_f32(arr: np.ndarray) -> dict:
    arr32 = np.ascontiguousarray(arr, dtype="<f4")
    return {"b64": base64.b64encode(arr32.tobytes()).decode("ascii"),
            "dtype": "<f4", "shape": list(arr32.shape)}


def encode_i32(arr: np.ndarray) -> dict:
    arr32 = np.ascontiguousarray(arr, dtype="<i4")
    return {"b64": base64.b64encode(arr32.tobytes()).decode("ascii"),
            "dtype": "<i4", "shape": list(arr32.shape)}


def decode_block(block: dict) -> np.ndarray:
    raw = base64.b64decode(block["b64"])
    return np.frombuffer(raw, dtype=block["dtype"]).reshape(block["shape"])


class CreateSessionRequest(BaseModel):
    rig: str = Field(description="rig name (resolved in the rig root) or path to a .fbr file")


class SessionInfo(BaseModel):
    session_id: str
    n_parts: int
    n_ribs: int
    n_keys: int
    n_branches: int
    rest_hash: str


class CommandRequest(BaseModel):
    name: CommandName
    params: dict[str, Any] = Field(default_factory=dict)


class PartInfo(BaseModel):
    part_id: int
    n_vertices: int
    n_faces: int
    thin_shell: bool


class RibInfo(BaseModel):
    rib_id: int
    level_index: int
    sub_index: int
    closed: bool
    part_id: int
    n_points: int
    centroid: list[float]


class BranchInfo(BaseModel):
    branch_id: int
    keys: list[int]
    rest_length: float


class GeometryBlock(BaseModel):
    b64: str
    dtype: str
    shape: list[int]


class PartGeometry(BaseModel):
    part_id: int
    positions: GeometryBlock
    faces: Optional[GeometryBlock] = None


class RibGeometry(BaseModel):
    rib_id: int
    closed: bool
    part_id: int
    points: GeometryBlock


class SpineGeometry(BaseModel):
    key_points: GeometryBlock
    branches: list[list[int]]
    junctions: list[int]


class Snapshot(BaseModel):
    snapshot_hash: str
    view: str = "+z"
    parts: list[PartGeometry]
    ribs: list[RibGeometry]
    spine: SpineGeometry


class CommandResponse(BaseModel):
    ok: bool = True
    name: str
    result: dict[str, Any] = Field(default_factory=dict)
    snapshot_hash: Optional[str] = None


class SimStartRequest(BaseModel):
    config: dict[str, Any] = Field(default_factory=dict)
    schedule: dict[str, Any] = Field(default_factory=dict)
    max_frames: Optional[int] = None
    realtime: bool = False
    include_vertex_hash: bool = False


class SimStatus(BaseModel):
    running: bool
    frame_count: int
    time: float


class ErrorResponse(BaseModel):
    ok: bool = False
    error: str
    detail: Optional[str] = None
