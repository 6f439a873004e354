"""Mesh loading, cleaning, normalization, part decomposition, and watertight repair.

Every downstream stage assumes the output of :func:`clean_and_normalize`:
finite coordinates, no degenerate faces, vertices merged within tolerance,
and the whole multi-part object normalized into the origin-centered unit
bounding box by one shared transform.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import EmptyGeometryError, MeshFormatError

log = logging.getLogger(__name__)

MERGE_TOLERANCE = 1e-6          # vertex merge distance, normalized units
DEGENERATE_AREA = 1e-12         # face area floor, normalized units
THIN_SHELL_THRESHOLD = 0.05     # boundary-edge fraction above which a part is a sheet
WELD_TOLERANCE_FACTOR = 1e-4    # welded-twin merge distance, fraction of bbox diagonal
MAX_HOLE_EDGES = 32             # boundary loops longer than this are genuine openings


@dataclass
class RawMesh:
    """Parsed but uncleaned triangle soup."""

    vertices: np.ndarray                      # (N,3) float64
    faces: np.ndarray                         # (F,3) int64
    part_labels: np.ndarray | None = None     # (F,) int64
    rejected_faces: list = field(default_factory=list)  # (line_or_index, reason)


@dataclass
class AffineTransform:
    """Uniform scale followed by translation: x' = scale * x + offset."""

    scale: float
    offset: np.ndarray

    def apply(self, pts: np.ndarray) -> np.ndarray:
        return pts * self.scale + self.offset

    def compose(self, outer: "AffineTransform") -> "AffineTransform":
        """Transform equal to applying self first, then outer."""
        return AffineTransform(outer.scale * self.scale, outer.scale * self.offset + outer.offset)

    @staticmethod
    def identity() -> "AffineTransform":
        return AffineTransform(1.0, np.zeros(3))


@dataclass
class CleanPart:
    """One cleaned, normalized part of the input object."""

    vertices: np.ndarray
    faces: np.ndarray
    part_id: int
    is_thin_shell: bool
    normalization: AffineTransform
    weld_map: np.ndarray | None = None   # original-vertex -> twin-vertex index map (twins only)
    watertight_warning: bool = False     # twin still open after repair

    @property
    def bbox(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    @property
    def bbox_diagonal(self) -> float:
        lo, hi = self.bbox
        return float(np.linalg.norm(hi - lo))

    @property
    def max_extent(self) -> float:
        lo, hi = self.bbox
        return float((hi - lo).max())


@dataclass
class PartSet:
    parts: list[CleanPart]
    shared_normalization: AffineTransform


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def load_mesh(path, fmt: str | None = None) -> RawMesh:
    """Load an OBJ or mesh-json file into a RawMesh.

    Quads and n-gons are fan-triangulated. OBJ object/group statements become
    part labels. Faces with fewer than three distinct vertices are dropped and
    recorded in ``rejected_faces``.
    """
    path = str(path)
    if fmt is None:
        fmt = "mesh-json" if path.endswith(".json") else "obj"
    if fmt == "obj":
        return _load_obj(path)
    if fmt == "mesh-json":
        return _load_mesh_json(path)
    raise MeshFormatError(f"unknown format {fmt!r}")


def _load_obj(path: str) -> RawMesh:
    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    labels: list[int] = []
    rejected: list = []
    current_part = 0
    seen_group = False
    with open(path, "r", encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            if tag == "v":
                if len(parts) < 4:
                    raise MeshFormatError("vertex line with fewer than 3 coordinates", line=lineno)
                try:
                    vertices.append((float(parts[1]), float(parts[2]), float(parts[3])))
                except ValueError as exc:
                    raise MeshFormatError(f"bad vertex coordinate: {exc}", line=lineno)
            elif tag == "f":
                idx = []
                for tok in parts[1:]:
                    head = tok.split("/")[0]
                    try:
                        i = int(head)
                    except ValueError as exc:
                        raise MeshFormatError(f"bad face index: {exc}", line=lineno)
                    idx.append(i - 1 if i > 0 else len(vertices) + i)
                distinct = list(dict.fromkeys(idx))
                if len(distinct) < 3:
                    rejected.append((lineno, "fewer than 3 distinct vertices"))
                    continue
                for k in range(1, len(idx) - 1):  # fan triangulation
                    faces.append((idx[0], idx[k], idx[k + 1]))
                    labels.append(current_part)
            elif tag in ("o", "g"):
                if seen_group and faces:
                    current_part += 1
                seen_group = True
    if not vertices:
        raise MeshFormatError(f"no vertices found in {path}")
    v = np.array(vertices, dtype=np.float64)
    f = np.array(faces, dtype=np.int64).reshape(-1, 3)
    if f.size and (f.min() < 0 or f.max() >= len(v)):
        raise MeshFormatError("face index out of range")
    part_labels = np.array(labels, dtype=np.int64) if current_part > 0 else None
    return RawMesh(v, f, part_labels, rejected)


def _load_mesh_json(path: str) -> RawMesh:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise MeshFormatError(f"invalid JSON: {exc.msg}", line=exc.lineno)
    try:
        v = np.array(data["vertices"], dtype=np.float64).reshape(-1, 3)
        f = np.array(data["faces"], dtype=np.int64).reshape(-1, 3)
    except (KeyError, ValueError) as exc:
        raise MeshFormatError(f"mesh-json missing or malformed field: {exc}")
    labels = None
    if "parts" in data and data["parts"]:
        starts = list(data["parts"]) + [len(f)]
        labels = np.zeros(len(f), dtype=np.int64)
        for p in range(len(starts) - 1):
            labels[starts[p]: starts[p + 1]] = p
    if f.size and (f.min() < 0 or f.max() >= len(v)):
        raise MeshFormatError("face index out of range")
    return RawMesh(v, f, labels)


def save_obj(path, vertices_per_part: list[np.ndarray], faces_per_part: list[np.ndarray]) -> None:
    """Write parts as `o part<i>` groups in one OBJ file."""
    with open(path, "w", encoding="utf-8") as fh:
        offset = 1
        for pid, (v, f) in enumerate(zip(vertices_per_part, faces_per_part)):
            fh.write(f"o part{pid}\n")
            for x, y, z in v:
                fh.write(f"v {x:.17g} {y:.17g} {z:.17g}\n")
            for a, b, c in f:
                fh.write(f"f {a + offset} {b + offset} {c + offset}\n")
            offset += len(v)


# ---------------------------------------------------------------------------
# Cleaning
# ---------------------------------------------------------------------------

def _face_areas(v: np.ndarray, f: np.ndarray) -> np.ndarray:
    e1 = v[f[:, 1]] - v[f[:, 0]]
    e2 = v[f[:, 2]] - v[f[:, 0]]
    return 0.5 * np.linalg.norm(np.cross(e1, e2), axis=1)


def merge_close_vertices(v: np.ndarray, f: np.ndarray, tol: float):
    """Union-find merge of vertices within tol; clusters collapse to their centroid.

    Iterates to a fixpoint so a second pass at the same tolerance is a no-op.
    Returns (vertices, faces, vertex_map old->new).
    """
    total_map = np.arange(len(v), dtype=np.int64)
    while True:
        tree = cKDTree(v)
        pairs = tree.query_pairs(tol, output_type="ndarray")
        if len(pairs) == 0:
            break
        parent = np.arange(len(v), dtype=np.int64)

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for a, b in pairs:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        roots = np.array([find(i) for i in range(len(v))], dtype=np.int64)
        uniq, newidx = np.unique(roots, return_inverse=True)
        merged = np.zeros((len(uniq), 3))
        counts = np.bincount(newidx)
        np.add.at(merged, newidx, v)
        merged /= counts[:, None]
        v = merged
        f = newidx[f]
        total_map = newidx[total_map]
    return v, f, total_map


def _connected_face_components(n_verts: int, faces: np.ndarray) -> np.ndarray:
    """Label of the vertex-connectivity component each face belongs to."""
    if len(faces) == 0:
        return np.zeros(0, dtype=np.int64)
    rows = np.concatenate([faces[:, 0], faces[:, 1], faces[:, 2]])
    cols = np.concatenate([faces[:, 1], faces[:, 2], faces[:, 0]])
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n_verts, n_verts))
    _, vlabel = connected_components(adj, directed=False)
    return vlabel[faces[:, 0]]


def _drop_unreferenced(v: np.ndarray, f: np.ndarray):
    used = np.unique(f)
    remap = -np.ones(len(v), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return v[used], remap[f], remap


def clean_and_normalize(raw: RawMesh, keep_largest_component: bool = False) -> PartSet:
    """Cleaning pass for raw input meshes.

    Removes NaN vertices and degenerate faces, merges vertices within
    MERGE_TOLERANCE, optionally keeps only the largest connected component,
    and normalizes everything by one shared transform into the unit bounding
    box centered at the origin. Parts come from input labels when present,
    otherwise from connected components.
    """
    if len(raw.faces) == 0:
        raise EmptyGeometryError("mesh has no faces")
    v = np.asarray(raw.vertices, dtype=np.float64)
    f = np.asarray(raw.faces, dtype=np.int64)
    labels = raw.part_labels

    # NaN purge: drop bad vertices and every face touching one.
    finite = np.isfinite(v).all(axis=1)
    if not finite.all():
        keep_face = finite[f].all(axis=1)
        f = f[keep_face]
        labels = labels[keep_face] if labels is not None else None
    if len(f) == 0:
        raise EmptyGeometryError("all faces removed during NaN purge")
    v, f, _ = _drop_unreferenced(v, f)

    # Pre-normalization so the merge tolerance acts in near-final units.
    pre = _unit_bbox_transform(v)
    v = pre.apply(v)

    v, f, _ = merge_close_vertices(v, f, MERGE_TOLERANCE)

    # Degenerate and duplicate faces.
    areas = _face_areas(v, f)
    distinct = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
    keep = (areas >= DEGENERATE_AREA) & distinct
    sorted_f = np.sort(f, axis=1)
    _, first = np.unique(sorted_f, axis=0, return_index=True)
    dup_mask = np.zeros(len(f), dtype=bool)
    dup_mask[first] = True
    keep &= dup_mask
    f = f[keep]
    labels = labels[keep] if labels is not None else None
    if len(f) == 0:
        raise EmptyGeometryError("all faces degenerate after cleaning")

    if keep_largest_component:
        comp = _connected_face_components(len(v), f)
        counts = np.bincount(comp)
        sel = comp == np.argmax(counts)
        f = f[sel]
        labels = labels[sel] if labels is not None else None

    v, f, _ = _drop_unreferenced(v, f)

    # Final normalization on the cleaned geometry; shared across parts.
    post = _unit_bbox_transform(v)
    v = post.apply(v)
    shared = pre.compose(post)

    # Part decomposition: labels win, else connected components, else one part.
    if labels is not None:
        part_of_face = labels
    else:
        comp = _connected_face_components(len(v), f)
        part_of_face = comp
    part_ids = np.unique(part_of_face)

    parts: list[CleanPart] = []
    for new_pid, pid in enumerate(part_ids):
        pf = f[part_of_face == pid]
        pv, pf, _ = _drop_unreferenced(v, pf)
        part = CleanPart(pv, pf, int(new_pid), False, shared)
        part.is_thin_shell = classify_thin_shell(part)
        parts.append(part)
    return PartSet(parts, shared)


def _unit_bbox_transform(v: np.ndarray) -> AffineTransform:
    lo, hi = v.min(axis=0), v.max(axis=0)
    extent = float((hi - lo).max())
    scale = 1.0 / extent if extent > 0 else 1.0
    center = 0.5 * (lo + hi)
    return AffineTransform(scale, -center * scale)


# ---------------------------------------------------------------------------
# Topology queries
# ---------------------------------------------------------------------------

def unique_edges(faces: np.ndarray):
    """(E,2) sorted unique undirected edges and the per-edge incident face count."""
    e = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    e = np.sort(e, axis=1)
    uniq, counts = np.unique(e, axis=0, return_counts=True)
    return uniq, counts


def classify_thin_shell(part: CleanPart, threshold: float = THIN_SHELL_THRESHOLD) -> bool:
    """True iff the boundary-edge fraction exceeds the sheet threshold.

    Depends only on connectivity, so it is invariant to any rescaling.
    """
    edges, counts = unique_edges(part.faces)
    if len(edges) == 0:
        return False
    return float(np.mean(counts == 1)) > threshold


def is_watertight(part: CleanPart) -> bool:
    """Every edge has exactly two incident faces and consistent orientation."""
    faces = part.faces
    if len(faces) == 0:
        return False
    directed = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    _, counts = unique_edges(faces)
    if not np.all(counts == 2):
        return False
    # consistent orientation: each undirected edge appears once per direction
    _, dcounts = np.unique(directed, axis=0, return_counts=True)
    return bool(np.all(dcounts == 1))


def boundary_loops(faces: np.ndarray) -> list[list[int]]:
    """Closed vertex loops of boundary (single-incidence) edges."""
    edges, counts = unique_edges(faces)
    bedges = edges[counts == 1]
    nxt: dict[int, list[int]] = {}
    for a, b in bedges:
        nxt.setdefault(int(a), []).append(int(b))
        nxt.setdefault(int(b), []).append(int(a))
    unvisited = {tuple(e) for e in bedges.tolist()}
    loops = []
    while unvisited:
        a, b = min(unvisited)
        loop = [a, b]
        unvisited.discard((a, b))
        while True:
            cands = [c for c in nxt.get(loop[-1], []) if tuple(sorted((loop[-1], c))) in unvisited]
            if not cands:
                break
            c = min(cands)
            unvisited.discard(tuple(sorted((loop[-1], c))))
            if c == loop[0]:
                break
            loop.append(c)
        loops.append(loop)
    return loops


def make_welded_twin(part: CleanPart) -> CleanPart:
    """Watertightness-repaired copy of a solid part.

    Merges vertices at bbox-diagonal * 1e-4, fills small boundary holes by fan
    triangulation from the loop centroid, removes duplicate/degenerate faces,
    and records the original->twin vertex map for later weight expansion.
    Thin-shell parts must not be passed here; their boundaries are real.
    """
    if part.is_thin_shell:
        raise ValueError("welded twin is only defined for solid parts")
    tol = part.bbox_diagonal * WELD_TOLERANCE_FACTOR
    v, f, vmap = merge_close_vertices(part.vertices.copy(), part.faces.copy(), tol)

    distinct = (f[:, 0] != f[:, 1]) & (f[:, 1] != f[:, 2]) & (f[:, 0] != f[:, 2])
    f = f[distinct]
    sorted_f = np.sort(f, axis=1)
    _, first = np.unique(sorted_f, axis=0, return_index=True)
    f = f[np.sort(first)]
    areas = _face_areas(v, f)
    f = f[areas >= DEGENERATE_AREA]

    for loop in boundary_loops(f):
        if len(loop) < 3 or len(loop) > MAX_HOLE_EDGES:
            continue
        centroid_idx = len(v)
        v = np.vstack([v, np.mean(v[loop], axis=0, keepdims=True)])
        fan = [(loop[i], loop[(i + 1) % len(loop)], centroid_idx) for i in range(len(loop))]
        f = np.vstack([f, np.array(fan, dtype=np.int64)])

    twin = CleanPart(v, f, part.part_id, False, part.normalization, weld_map=vmap)
    if not is_watertight(twin):
        twin.watertight_warning = True
        log.warning("part %d still not watertight after weld; open contours will be filtered",
                    part.part_id)
    return twin


def expand_from_twin(twin_values: np.ndarray, weld_map: np.ndarray) -> np.ndarray:
    """Per-twin-vertex array -> per-original-vertex array via the weld map."""
    return twin_values[weld_map]


def contract_to_twin(original_values: np.ndarray, weld_map: np.ndarray, n_twin: int) -> np.ndarray:
    """Inverse of expand_from_twin using one representative original per twin vertex."""
    out = np.zeros((n_twin,) + original_values.shape[1:], dtype=original_values.dtype)
    out[weld_map] = original_values  # later originals win; identical on unwelded vertices
    return out
