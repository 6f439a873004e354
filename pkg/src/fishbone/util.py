"""Small numeric helpers shared across modules."""

from __future__ import annotations

import hashlib

import numpy as np

EPS = 1e-9


def round_half_away(x: float) -> int:
    """Round half away from zero (0.5 -> 1, 2.5 -> 3, -0.5 -> -1)."""
    return int(np.sign(x) * np.floor(abs(x) + 0.5))


def lerp_on_edges(vertices: np.ndarray, edges: np.ndarray, params: np.ndarray) -> np.ndarray:
    """Canonical edge interpolation a + t*(b - a).

    Every rib point in the toolkit is produced by this one expression so that
    re-evaluating it against an unchanged vertex buffer is bitwise stable.
    """
    a = vertices[edges[:, 0]]
    b = vertices[edges[:, 1]]
    return a + params[:, None] * (b - a)


def normalized(v: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Rows of v scaled to unit length with an epsilon-guarded denominator."""
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 1:
        return v / (np.linalg.norm(v) + eps)
    return v / (np.linalg.norm(v, axis=-1, keepdims=True) + eps)


def rotation_about_axis(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rodrigues rotation matrix for a (unit or not) axis and angle in radians."""
    a = normalized(np.asarray(axis, dtype=np.float64))
    c, s = np.cos(angle), np.sin(angle)
    x, y, z = a
    k = np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def rotation_between(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Minimal rotation carrying unit vector u onto unit vector v.

    Antiparallel inputs rotate pi around an arbitrary perpendicular axis.
    """
    u = normalized(np.asarray(u, dtype=np.float64))
    v = normalized(np.asarray(v, dtype=np.float64))
    c = float(np.dot(u, v))
    if c > 1.0 - 1e-14:
        return np.eye(3)
    if c < -1.0 + 1e-12:
        return rotation_about_axis(perpendicular_to(u), np.pi)
    w = np.cross(u, v)
    k = np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])
    return np.eye(3) + k + (k @ k) / (1.0 + c)


def perpendicular_to(v: np.ndarray) -> np.ndarray:
    """A unit vector perpendicular to v (axis least aligned with v)."""
    a = np.abs(v)
    seed = np.zeros(3)
    seed[int(np.argmin(a))] = 1.0
    return normalized(np.cross(v, seed))


def parallel_transport(vec: np.ndarray, t_from: np.ndarray, t_to: np.ndarray) -> np.ndarray:
    """Transport vec from an edge with tangent t_from to one with tangent t_to."""
    return rotation_between(t_from, t_to) @ vec


def _update_array(h, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr)
    if arr.dtype.kind == "f":
        arr = arr.astype("<f8", copy=False)
    elif arr.dtype.kind in "iub":
        arr = arr.astype("<i8", copy=False)
    else:
        raise TypeError(f"unhashable dtype {arr.dtype}")
    h.update(str(arr.shape).encode())
    h.update(arr.tobytes())


def hash_arrays(*arrays) -> str:
    """SHA-256 hex digest over the canonical little-endian bytes of arrays."""
    h = hashlib.sha256()
    for arr in arrays:
        if isinstance(arr, (bytes, str)):
            h.update(arr if isinstance(arr, bytes) else arr.encode())
        else:
            _update_array(h, np.asarray(arr))
    return h.hexdigest()


def point_segment_distances(points: np.ndarray, seg_a: np.ndarray, seg_b: np.ndarray):
    """Distances from each point to each segment.

    points (P,3), seg_a/seg_b (S,3). Returns (dist (P,S), t (P,S)) with t the
    clamped parametric foot along each segment.
    """
    d = seg_b - seg_a  # (S,3)
    len2 = np.einsum("ij,ij->i", d, d)  # (S,)
    rel = points[:, None, :] - seg_a[None, :, :]  # (P,S,3)
    t = np.einsum("psj,sj->ps", rel, d) / np.where(len2 > 0.0, len2, 1.0)
    t = np.clip(t, 0.0, 1.0)
    foot = seg_a[None, :, :] + t[:, :, None] * d[None, :, :]
    dist = np.linalg.norm(points[:, None, :] - foot, axis=2)
    return dist, t
