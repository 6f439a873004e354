"""Geodesic scalar fields via the heat method with automatic root selection.

Two SPD solves per connected component: a short-time heat diffusion
(M + tL)u = M*delta, then a Poisson solve L*phi = -div(-grad u / |grad u|).
L is the cotangent stiffness matrix in the positive-semidefinite convention
(negative off-diagonals), M the barycentric lumped mass.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix, csc_matrix, diags
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import cg, splu
from scipy.spatial import cKDTree

from .errors import OperatorConstructionError, SolverError
from .mesh_io import CleanPart, unique_edges
from .util import round_half_away

log = logging.getLogger(__name__)

COTAN_CLAMP = 1e-8        # floor for summed edge weights on obtuse slivers
SOLVE_TOLERANCE = 1e-10   # relative CG tolerance above the direct-solve size cap
DIRECT_SOLVE_MAX_N = 200_000
ROOT_FRACTION = 0.01


@dataclass
class LaplaceOperators:
    cotan_laplacian: "csc_matrix"   # PSD convention: row sums 0, off-diagonals <= 0
    mass_matrix: np.ndarray         # (N,) barycentric lumped vertex areas
    mean_edge_length: float


@dataclass
class RootSelection:
    dominant_axis: str              # 'x' | 'y' | 'z'
    chosen_face: str                # 'min' | 'max'
    root_vertices: np.ndarray


@dataclass
class GeodesicField:
    phi: np.ndarray
    root_vertices: np.ndarray
    diffusion_time: float
    component_id: np.ndarray

    @property
    def phi_max(self) -> float:
        return float(self.phi.max())


def root_count(n_vertices: int, fraction: float = ROOT_FRACTION) -> int:
    return max(1, round_half_away(fraction * n_vertices))


def select_root(
    part: CleanPart,
    upright_hint: bool = True,
    override: RootSelection | None = None,
) -> RootSelection:
    """Dominant-axis root selection over a part's bounding box.

    The dominant axis is the longest bbox extent; the source face is min-y for
    upright objects when that axis is y, otherwise the extreme face closer to
    the world origin. The root is the 1% of vertices closest to the chosen
    face along the dominant axis. A caller-supplied override wins.
    """
    if override is not None:
        return override
    return _select_root_for(part.vertices, np.arange(len(part.vertices)), upright_hint)


def _select_root_for(vertices: np.ndarray, index_pool: np.ndarray, upright_hint: bool) -> RootSelection:
    pts = vertices[index_pool]
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    extents = hi - lo
    axis = int(np.argmax(extents))
    axis_name = "xyz"[axis]
    if upright_hint and axis_name == "y":
        face = "min"
    else:
        face = "min" if abs(lo[axis]) <= abs(hi[axis]) else "max"
    face_coord = lo[axis] if face == "min" else hi[axis]
    dist = np.abs(pts[:, axis] - face_coord)
    n_root = root_count(len(index_pool))
    order = np.lexsort((index_pool, dist))
    roots = np.sort(index_pool[order[:n_root]])
    return RootSelection(axis_name, face, roots)


def build_operators(part: CleanPart) -> LaplaceOperators:
    """Cotangent Laplacian (PSD) and barycentric lumped vertex areas."""
    v, f = part.vertices, part.faces
    if len(f) == 0:
        raise OperatorConstructionError("part has no triangles")
    n = len(v)
    corners = v[f]  # (F,3,3)
    # cot of the angle at corner k weights the edge opposite k
    rows, cols, weights = [], [], []
    area2 = np.linalg.norm(
        np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0]), axis=1
    )
    if np.all(area2 < 1e-30):
        raise OperatorConstructionError("all faces degenerate")
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        u = corners[:, i] - corners[:, k]
        w = corners[:, j] - corners[:, k]
        cot = np.einsum("ij,ij->i", u, w) / np.maximum(area2, 1e-30)
        rows.append(f[:, i])
        cols.append(f[:, j])
        weights.append(0.5 * cot)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    weights = np.concatenate(weights)
    w_mat = coo_matrix((weights, (rows, cols)), shape=(n, n)).tocsr()
    w_mat = w_mat + w_mat.T  # symmetric summed edge weights
    w_mat.data = np.maximum(w_mat.data, COTAN_CLAMP)
    diag = np.asarray(w_mat.sum(axis=1)).ravel()
    lap = (diags(diag) - w_mat).tocsc()

    mass = np.zeros(n)
    np.add.at(mass, f.ravel(), np.repeat(area2 / 2.0 / 3.0, 3))

    edges, _ = unique_edges(f)
    mean_h = float(np.mean(np.linalg.norm(v[edges[:, 0]] - v[edges[:, 1]], axis=1)))
    return LaplaceOperators(lap, mass, mean_h)


def diffusion_time(ops: LaplaceOperators, multiplier: float = 1.0) -> float:
    """Heat-flow time step t = m * h^2 with h the mean edge length."""
    return multiplier * ops.mean_edge_length ** 2


def _solve_spd(mat: "csc_matrix", rhs: np.ndarray, what: str) -> np.ndarray:
    n = mat.shape[0]
    if n <= DIRECT_SOLVE_MAX_N:
        try:
            x = splu(mat.tocsc()).solve(rhs)
        except RuntimeError as exc:
            raise SolverError(f"{what}: factorization failed: {exc}")
    else:
        x, info = cg(mat, rhs, rtol=SOLVE_TOLERANCE, atol=0.0)
        if info != 0:
            raise SolverError(f"{what}: conjugate gradients did not converge", residual=float(info))
    if not np.all(np.isfinite(x)):
        raise SolverError(f"{what}: non-finite solution")
    return x


def _face_gradients(v: np.ndarray, f: np.ndarray, u: np.ndarray) -> np.ndarray:
    e0 = v[f[:, 2]] - v[f[:, 1]]
    e1 = v[f[:, 0]] - v[f[:, 2]]
    e2 = v[f[:, 1]] - v[f[:, 0]]
    normal = np.cross(e2, -e1)  # (v1-v0) x (v2-v0)
    area2 = np.linalg.norm(normal, axis=1, keepdims=True)
    nrm = normal / np.maximum(area2, 1e-30)
    grad = (
        u[f[:, 0], None] * np.cross(nrm, e0)
        + u[f[:, 1], None] * np.cross(nrm, e1)
        + u[f[:, 2], None] * np.cross(nrm, e2)
    ) / np.maximum(area2, 1e-30)
    return grad


def _integrated_divergence(v: np.ndarray, f: np.ndarray, x_field: np.ndarray) -> np.ndarray:
    div = np.zeros(len(v))
    corners = v[f]
    for k in range(3):
        i, j = (k + 1) % 3, (k + 2) % 3
        e1 = corners[:, i] - corners[:, k]  # edges out of corner k
        e2 = corners[:, j] - corners[:, k]
        # cot of angles opposite e1 (at corner j) and opposite e2 (at corner i)
        a1 = corners[:, k] - corners[:, j]
        b1 = corners[:, i] - corners[:, j]
        cot1 = np.einsum("ij,ij->i", a1, b1) / np.maximum(
            np.linalg.norm(np.cross(a1, b1), axis=1), 1e-30
        )
        a2 = corners[:, k] - corners[:, i]
        b2 = corners[:, j] - corners[:, i]
        cot2 = np.einsum("ij,ij->i", a2, b2) / np.maximum(
            np.linalg.norm(np.cross(a2, b2), axis=1), 1e-30
        )
        contrib = 0.5 * (
            cot1 * np.einsum("ij,ij->i", e1, x_field) + cot2 * np.einsum("ij,ij->i", e2, x_field)
        )
        np.add.at(div, f[:, k], contrib)
    return div


def solve_heat_geodesic(
    part: CleanPart,
    ops: LaplaceOperators,
    root: RootSelection,
    t: float | None = None,
    upright_hint: bool = True,
) -> GeodesicField:
    """Heat-method geodesic field from the root set.

    Disconnected components are solved independently with fresh roots selected
    by the same face rule inside each component, keeping phi on a shared scale
    (each component's minimum over its own roots is zero).
    """
    v, f = part.vertices, part.faces
    n = len(v)
    if t is None:
        t = diffusion_time(ops)
    multiplier = t / ops.mean_edge_length ** 2

    rows = np.concatenate([f[:, 0], f[:, 1], f[:, 2]])
    cols = np.concatenate([f[:, 1], f[:, 2], f[:, 0]])
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    n_comp, comp = connected_components(adj, directed=False)

    phi = np.zeros(n)
    all_roots: list[np.ndarray] = []
    for c in range(n_comp):
        verts_c = np.flatnonzero(comp == c)
        roots_c = np.intersect1d(root.root_vertices, verts_c)
        if len(roots_c) == 0:  # fresh per-component root
            roots_c = _select_root_for(v, verts_c, upright_hint).root_vertices
        all_roots.append(roots_c)
        local = -np.ones(n, dtype=np.int64)
        local[verts_c] = np.arange(len(verts_c))
        faces_c = local[f[comp[f[:, 0]] == c]]

        lap_c = ops.cotan_laplacian[np.ix_(verts_c, verts_c)].tocsc()
        mass_c = ops.mass_matrix[verts_c]
        delta = np.zeros(len(verts_c))
        delta[local[roots_c]] = 1.0

        # adaptive per-component time step, so disjoint components never
        # influence each other through the shared mean edge length
        edges_c, _ = unique_edges(faces_c)
        vc = v[verts_c]
        h_c = float(np.mean(np.linalg.norm(vc[edges_c[:, 0]] - vc[edges_c[:, 1]], axis=1)))
        t_c = multiplier * h_c ** 2
        heat_mat = (diags(mass_c) + t_c * lap_c).tocsc()
        u = _solve_spd(heat_mat, mass_c * delta, "heat step")

        residual = np.linalg.norm(u + t_c * (lap_c @ u) / np.maximum(mass_c, 1e-300) - delta)
        rel = residual / max(np.linalg.norm(delta), 1e-300)
        if rel > 1e-6:
            log.warning("heat solve residual %.3e on component %d", rel, c)

        grad = _face_gradients(v[verts_c], faces_c, u)
        norms = np.linalg.norm(grad, axis=1, keepdims=True)
        x_field = np.where(norms > 1e-300, -grad / np.maximum(norms, 1e-300), 0.0)
        # inside the root set the distance is identically zero; the heat field
        # is constant there and its float-noise gradient must not be normalized
        all_root_face = delta[faces_c].min(axis=1) > 0.0
        x_field[all_root_face] = 0.0
        div = _integrated_divergence(v[verts_c], faces_c, x_field)

        # Pin one root vertex to fix the constant shift, then solve the rest.
        pin = int(local[roots_c[0]])
        free = np.ones(len(verts_c), dtype=bool)
        free[pin] = False
        rhs = -div[free]
        lap_ff = lap_c[np.ix_(np.flatnonzero(free), np.flatnonzero(free))].tocsc()
        phi_c = np.zeros(len(verts_c))
        if free.any():
            phi_c[free] = _solve_spd(lap_ff, rhs, "poisson step")
        phi_c -= phi_c[local[roots_c]].min()
        np.maximum(phi_c, 0.0, out=phi_c)
        # Metric lower bound: a geodesic is never shorter than the straight
        # line to the nearest root. Repairs the smoothed cone tip on coarse
        # meshes; a no-op wherever the solve already respects the bound.
        euclid = cKDTree(v[roots_c]).query(v[verts_c])[0]
        np.maximum(phi_c, euclid, out=phi_c)
        phi[verts_c] = phi_c

    roots = np.sort(np.concatenate(all_roots))
    return GeodesicField(phi, roots, float(t), comp.astype(np.int64))
