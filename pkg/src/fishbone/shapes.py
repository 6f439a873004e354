"""Procedural test/demo meshes: icosphere, grids, tubes, and an implicit-surface mesher.

These generators back the CLI demo assets and the test fixtures; they are not
part of the extraction pipeline itself.
"""

from __future__ import annotations

import numpy as np


def icosphere(subdivisions: int = 3) -> tuple[np.ndarray, np.ndarray]:
    """Unit icosphere with an exact vertex at the +y pole (vertex 0)."""
    lat = np.arctan(0.5)
    top_ring = [
        (np.cos(lat) * np.cos(2 * np.pi * k / 5), np.sin(lat), np.cos(lat) * np.sin(2 * np.pi * k / 5))
        for k in range(5)
    ]
    bot_ring = [
        (
            np.cos(lat) * np.cos(2 * np.pi * (k + 0.5) / 5),
            -np.sin(lat),
            np.cos(lat) * np.sin(2 * np.pi * (k + 0.5) / 5),
        )
        for k in range(5)
    ]
    verts = [(0.0, 1.0, 0.0)] + top_ring + bot_ring + [(0.0, -1.0, 0.0)]
    faces = []
    for k in range(5):
        kn = (k + 1) % 5
        faces.append((0, 1 + kn, 1 + k))
        faces.append((1 + k, 1 + kn, 6 + k))
        faces.append((1 + kn, 6 + kn, 6 + k))
        faces.append((6 + k, 6 + kn, 11))
    v = np.array(verts, dtype=np.float64)
    f = np.array(faces, dtype=np.int64)
    for _ in range(subdivisions):
        v, f = _subdivide(v, f)
        v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v, f


def _subdivide(v: np.ndarray, f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mid_cache: dict[tuple[int, int], int] = {}
    verts = [row for row in v]

    def midpoint(a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        if key not in mid_cache:
            mid_cache[key] = len(verts)
            verts.append(0.5 * (v[a] + v[b]))
        return mid_cache[key]

    out = []
    for a, b, c in f:
        ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        out += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    return np.array(verts, dtype=np.float64), np.array(out, dtype=np.int64)


def grid_sheet(nx: int = 20, ny: int = 20, size: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Flat open sheet in the xy-plane with nx*ny vertices and uniform diagonals."""
    xs = np.linspace(0.0, size, nx)
    ys = np.linspace(0.0, size, ny)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    v = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(nx * ny)])
    faces = []
    for i in range(nx - 1):
        for j in range(ny - 1):
            a = i * ny + j
            b = (i + 1) * ny + j
            c = (i + 1) * ny + j + 1
            d = i * ny + j + 1
            faces.append((a, b, c))
            faces.append((a, c, d))
    return v, np.array(faces, dtype=np.int64)


def box(extents=(1.0, 1.0, 1.0), center=(0.0, 0.0, 0.0)) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned closed box (12 triangles)."""
    e = np.asarray(extents, dtype=np.float64) / 2.0
    c = np.asarray(center, dtype=np.float64)
    corners = np.array(
        [[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=np.float64
    )
    v = corners * e + c
    # outward-oriented quads, fan-triangulated
    quads = [
        (0, 1, 3, 2),  # -x
        (6, 7, 5, 4),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    faces = []
    for a, b, cc, d in quads:
        faces.append((a, b, cc))
        faces.append((a, cc, d))
    return v, np.array(faces, dtype=np.int64)


def capped_cylinder(
    radius: float = 0.25, height: float = 2.0, rings: int = 24, segments: int = 24
) -> tuple[np.ndarray, np.ndarray]:
    """Closed cylinder along +y from y=0 to y=height, capped with fans."""
    theta = 2 * np.pi * np.arange(segments) / segments
    verts = []
    for i in range(rings + 1):
        y = height * i / rings
        for t in theta:
            verts.append((radius * np.cos(t), y, radius * np.sin(t)))
    bottom_center = len(verts)
    verts.append((0.0, 0.0, 0.0))
    top_center = len(verts)
    verts.append((0.0, height, 0.0))
    faces = []
    for i in range(rings):
        for j in range(segments):
            jn = (j + 1) % segments
            a = i * segments + j
            b = i * segments + jn
            c = (i + 1) * segments + j
            d = (i + 1) * segments + jn
            faces.append((a, d, b))
            faces.append((a, c, d))
    for j in range(segments):
        jn = (j + 1) % segments
        faces.append((bottom_center, j, jn))
        top0 = rings * segments
        faces.append((top_center, top0 + jn, top0 + j))
    return np.array(verts, dtype=np.float64), np.array(faces, dtype=np.int64)


# ---------------------------------------------------------------------------
# Implicit-surface mesher (marching tetrahedra on a regular grid)
# ---------------------------------------------------------------------------

# Each cube is split into 6 tetrahedra sharing the main diagonal (0,7).
_CUBE_TETS = np.array(
    [[0, 5, 1, 7], [0, 1, 3, 7], [0, 3, 2, 7], [0, 2, 6, 7], [0, 6, 4, 7], [0, 4, 5, 7]],
    dtype=np.int64,
)
_CUBE_OFFSETS = np.array(
    [[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=np.int64
)


def marching_tetrahedra(values: np.ndarray, origin, spacing) -> tuple[np.ndarray, np.ndarray]:
    """Zero-isosurface of a scalar grid (negative = inside), as a triangle mesh.

    values is an (nx, ny, nz) array sampled on a regular grid. Vertices are
    deduplicated per grid edge, so the output surface is watertight wherever
    the field is well resolved.
    """
    values = np.asarray(values, dtype=np.float64)
    nx, ny, nz = values.shape
    origin = np.asarray(origin, dtype=np.float64)
    spacing = np.asarray(spacing, dtype=np.float64)

    idx = lambda c: (c[..., 0] * ny + c[..., 1]) * nz + c[..., 2]  # noqa: E731
    base = np.stack(
        np.meshgrid(np.arange(nx - 1), np.arange(ny - 1), np.arange(nz - 1), indexing="ij"),
        axis=-1,
    ).reshape(-1, 3)
    corner_ids = idx(base[:, None, :] + _CUBE_OFFSETS[None, :, :])  # (C,8)
    tets = corner_ids[:, _CUBE_TETS].reshape(-1, 4)  # (C*6,4)

    flat = values.ravel()
    tv = flat[tets]  # (T,4)
    inside = tv < 0.0
    count = inside.sum(axis=1)
    active = (count > 0) & (count < 4)
    tets, tv, inside = tets[active], tv[active], inside[active]

    def grid_pos(ids: np.ndarray) -> np.ndarray:
        c = np.column_stack([ids // (ny * nz), (ids // nz) % ny, ids % nz]).astype(np.float64)
        return origin + spacing * c

    tri_edges = []  # rows of (a, b) grid-vertex pairs, 3 per triangle
    tri_ref = []    # an inside reference point per triangle, for orientation
    local_pairs = [(i, j) for i in range(4) for j in range(i + 1, 4)]
    for t, vals, ins in zip(tets, tv, inside):
        cut = []
        for i, j in local_pairs:
            if ins[i] != ins[j]:
                cut.append((t[i], t[j]) if t[i] < t[j] else (t[j], t[i]))
        ref = grid_pos(t[ins]).mean(axis=0)
        if len(cut) == 3:
            tris = [cut]
        else:  # quad case: order the 4 cut edges into a cycle by shared tet vertex
            cyc = [cut[0]]
            rest = list(cut[1:])
            while rest:
                last = set(cyc[-1])
                for k, e in enumerate(rest):
                    if last & set(e):
                        cyc.append(rest.pop(k))
                        break
                else:
                    cyc.append(rest.pop(0))
            tris = [[cyc[0], cyc[1], cyc[2]], [cyc[0], cyc[2], cyc[3]]]
        tri_edges.extend(tris)
        tri_ref.extend([ref] * len(tris))

    if not tri_edges:
        return np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64)

    edge_arr = np.array(tri_edges, dtype=np.int64).reshape(-1, 2)  # (3*T,2)
    uniq, inv = np.unique(edge_arr, axis=0, return_inverse=True)
    a, b = uniq[:, 0], uniq[:, 1]
    fa, fb = flat[a], flat[b]
    t = fa / (fa - fb)
    pts = grid_pos(a) + t[:, None] * (grid_pos(b) - grid_pos(a))
    faces = inv.reshape(-1, 3)
    keep = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
    faces = faces[keep]
    refs = np.array(tri_ref)[keep]

    # Orient every triangle so its normal points from inside (negative field) out.
    p0, p1, p2 = pts[faces[:, 0]], pts[faces[:, 1]], pts[faces[:, 2]]
    nrm = np.cross(p1 - p0, p2 - p0)
    outward = np.einsum("ij,ij->i", nrm, (p0 + p1 + p2) / 3.0 - refs) < 0.0
    faces[outward] = faces[outward][:, ::-1]
    return pts, faces


def _segments_field(points: np.ndarray, segs: list[tuple[np.ndarray, np.ndarray]], radius: float):
    d = np.full(len(points), np.inf)
    for a, b in segs:
        ab = b - a
        len2 = float(ab @ ab)
        t = np.clip((points - a) @ ab / max(len2, 1e-30), 0.0, 1.0)
        foot = a + t[:, None] * ab
        d = np.minimum(d, np.linalg.norm(points - foot, axis=1))
    return d - radius


def tube_from_skeleton(
    skeleton: list[list[tuple[float, float, float]]],
    radius: float,
    resolution: float,
    padding: float = 0.15,
) -> tuple[np.ndarray, np.ndarray]:
    """Mesh the tube of given radius around polyline skeleton(s) via marching tets."""
    segs = []
    pts_all = []
    for chain in skeleton:
        chain = [np.asarray(p, dtype=np.float64) for p in chain]
        pts_all.extend(chain)
        segs.extend((chain[i], chain[i + 1]) for i in range(len(chain) - 1))
    pts_all = np.array(pts_all)
    lo = pts_all.min(axis=0) - radius - padding
    hi = pts_all.max(axis=0) + radius + padding
    counts = np.maximum(np.ceil((hi - lo) / resolution).astype(int) + 1, 2)
    axes = [np.linspace(lo[k], hi[k], counts[k]) for k in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    grid_pts = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])
    field = _segments_field(grid_pts, segs, radius).reshape(counts)
    spacing = (hi - lo) / (counts - 1)
    return marching_tetrahedra(field, lo, spacing)


def y_tube(radius: float = 0.16, resolution: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    """Symmetric Y: one trunk splitting into two straight limbs."""
    skeleton = [
        [(0.0, 0.0, 0.0), (0.0, 1.0, 0.0), (-0.6, 1.9, 0.0)],
        [(0.0, 1.0, 0.0), (0.6, 1.9, 0.0)],
    ]
    return tube_from_skeleton(skeleton, radius, resolution)


def lyre_tube(
    radius: float = 0.04, resolution: float = 0.016, dip: float = 0.12
) -> tuple[np.ndarray, np.ndarray]:
    """Branching fixture where 3D proximity and surface topology disagree.

    A trunk splits into a straight right leg and a left leg that detours
    through a hairpin dip before climbing parallel to the right leg. The dip
    adds a constant geodesic lag tuned near one inter-level spacing, so a
    left-leg rib sits at the same height as the right leg's previous-level
    rib: 3D-nearest parent matching jumps across legs while the face-strip
    BFS stays on the correct limb.
    """
    skeleton = [
        [(0.0, 0.0, 0.0), (0.0, 0.45, 0.0), (0.06, 0.62, 0.0), (0.06, 1.9, 0.0)],
        [
            (0.0, 0.45, 0.0),
            (-0.14, 0.50, 0.0),
            (-0.17, 0.30 - dip, 0.0),
            (-0.07, 0.62, 0.0),
            (-0.06, 1.9, 0.0),
        ],
    ]
    return tube_from_skeleton(skeleton, radius, resolution)
