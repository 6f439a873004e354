"""Reduced-space elastic dynamics on the spine: lumped mass, Rayleigh damping,
stretch/bend energies with analytic forces, external forcing, semi-implicit
Euler with hard pins, and two mesh-lift modes.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import MassError, SimulationDivergenceError
from .rig import FishboneRig, compute_edge_frames, reconstruct_cylindrical

log = logging.getLogger(__name__)

EPS = 1e-9
CFL_LIMIT = 0.5


@dataclass
class SimConfig:
    k_s: float = 50.0                 # stretch stiffness
    k_b: float = 0.02                 # bending stiffness
    alpha: float = 1.0                # mass-proportional damping
    beta_e: float = 0.0               # stretch-mode damping
    beta_b: float = 0.0               # bending-mode damping
    dt: float = 1.0 / 60.0            # frame time
    substeps: int = 4
    rho: float = 1.0                  # per-part surface density
    gravity: tuple = (0.0, -9.8, 0.0)
    bending_model: str = "curvature"  # 'curvature' | 'legacy_laplacian'
    lift_mode: str = "displacement"   # 'displacement' | 'cylindrical'
    sigma_s: float = 0.05
    pins: tuple = ()

    def __post_init__(self):
        if self.k_s < 0 or self.k_b < 0:
            raise ValueError("stiffnesses must be nonnegative")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")
        if self.sigma_s <= 0:
            raise ValueError("sigma_s must be positive")
        if self.bending_model not in ("curvature", "legacy_laplacian"):
            raise ValueError(f"unknown bending model {self.bending_model!r}")
        if self.lift_mode not in ("displacement", "cylindrical"):
            raise ValueError(f"unknown lift mode {self.lift_mode!r}")


@dataclass
class ForceSchedule:
    wind: dict | None = None          # direction, amplitude, frequency, phase_step,
                                      # ramp_ex, drag, turbulence, secondary_ratio
    gravity_on: bool = False
    impulses: list = field(default_factory=list)   # {time, point, impulse, sigma}
    mesh_forces: object = None        # callable(time) -> list of per-part (N,3) arrays

    @staticmethod
    def from_json(obj: dict) -> "ForceSchedule":
        return ForceSchedule(
            wind=obj.get("wind"),
            gravity_on=bool(obj.get("gravity_on", False)),
            impulses=list(obj.get("impulses", [])),
        )


@dataclass
class ReducedState:
    positions: np.ndarray             # (K,3)
    velocities: np.ndarray            # (K,3)
    masses: np.ndarray                # (K,) unit-mean
    rest_positions: np.ndarray        # (K,3)
    edges: np.ndarray                 # (E,2) within-branch edges, junctions once
    triples: np.ndarray               # (T,3) per-branch interior triples, deduplicated
    rest_edge_length: np.ndarray      # (E,)
    sigma_edge: np.ndarray            # (E,) mean-rest-length normalization
    rest_curvature: np.ndarray        # (T,3)
    rest_lbar: np.ndarray             # (T,) mean adjacent rest length
    rest_ltot: np.ndarray             # (T,) l0_{i-1} + l0_i
    rest_laplacian: np.ndarray        # (T,3) legacy-model rest vector
    pins: np.ndarray                  # (P,) key indices
    time: float = 0.0
    _fired: set = field(default_factory=set)
    _pin_arc: np.ndarray | None = None

    @property
    def n_keys(self) -> int:
        return len(self.positions)

    def snapshot(self) -> np.ndarray:
        return self.positions.copy()


def _branch_elements(branches: list[np.ndarray]):
    """Within-branch edges (each once) and per-branch triples (deduplicated)."""
    edge_set, triple_set = [], []
    seen_e, seen_t = set(), set()
    for br in branches:
        for i in range(len(br) - 1):
            key = (int(br[i]), int(br[i + 1]))
            if key not in seen_e:
                seen_e.add(key)
                edge_set.append(key)
        for i in range(1, len(br) - 1):
            key = (int(br[i - 1]), int(br[i]), int(br[i + 1]))
            if key not in seen_t:
                seen_t.add(key)
                triple_set.append(key)
    edges = np.array(edge_set, dtype=np.int64).reshape(-1, 2)
    triples = np.array(triple_set, dtype=np.int64).reshape(-1, 3)
    return edges, triples


def init_masses(rig: FishboneRig, rho: float = 1.0) -> np.ndarray:
    """Barycentric lumped vertex masses pulled to spine keys, unit-mean normalized."""
    masses = np.zeros(rig.n_keys)
    total_area = 0.0
    for pid, pr in enumerate(rig.part_rigs):
        part = rig.parts.parts[pid]
        v, f = part.vertices, part.faces
        areas = 0.5 * np.linalg.norm(
            np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]), axis=1
        )
        total_area += float(areas.sum())
        vmass = np.zeros(len(v))
        np.add.at(vmass, f.ravel(), np.repeat(rho * areas / 3.0, 3))
        wm = pr.spine_weights
        np.add.at(masses, pr.key_cols[wm.cols], wm.values * vmass[wm.rows])
    if total_area <= 0.0:
        raise MassError("mesh has zero total surface area")
    return masses / max(masses.mean(), EPS)


def make_state(rig: FishboneRig, config: SimConfig,
               masses: np.ndarray | None = None) -> ReducedState:
    if masses is None:
        masses = init_masses(rig, config.rho)
    return make_chain_state(rig.rest_key_points, rig.spine.branches, config, masses,
                            positions=rig.spine.key_points.copy())


def make_chain_state(rest_points: np.ndarray, branches: list, config: SimConfig,
                     masses: np.ndarray | None = None,
                     positions: np.ndarray | None = None) -> ReducedState:
    """State over an explicit branch decomposition (also used by synthetic tests)."""
    rest = np.asarray(rest_points, dtype=np.float64)
    branches = [np.asarray(b, dtype=np.int64) for b in branches]
    edges, triples = _branch_elements(branches)
    k = len(rest)
    if masses is None:
        masses = np.ones(k)
    masses = np.asarray(masses, dtype=np.float64)

    e = rest[edges[:, 1]] - rest[edges[:, 0]]
    l0 = np.linalg.norm(e, axis=1)
    lbar = l0.mean() if len(l0) else 1.0
    sigma = lbar / (l0 + EPS)

    ta = _tangents(rest, triples[:, 0], triples[:, 1])
    tb = _tangents(rest, triples[:, 1], triples[:, 2])
    la = np.linalg.norm(rest[triples[:, 1]] - rest[triples[:, 0]], axis=1)
    lb = np.linalg.norm(rest[triples[:, 2]] - rest[triples[:, 1]], axis=1)
    ltot = la + lb
    kappa0 = 2.0 * (tb - ta) / np.maximum(ltot, EPS)[:, None]
    lbar_t = 0.5 * ltot
    rest_lap = rest[triples[:, 0]] - 2.0 * rest[triples[:, 1]] + rest[triples[:, 2]]

    state = ReducedState(
        positions=rest.copy() if positions is None else np.asarray(positions, dtype=np.float64),
        velocities=np.zeros_like(rest),
        masses=masses,
        rest_positions=rest.copy(),
        edges=edges,
        triples=triples,
        rest_edge_length=l0,
        sigma_edge=sigma,
        rest_curvature=kappa0,
        rest_lbar=lbar_t,
        rest_ltot=ltot,
        rest_laplacian=rest_lap,
        pins=np.asarray(sorted(config.pins), dtype=np.int64),
    )
    state._pin_arc = _arc_to_nearest_pin(rest, branches, state.pins)
    _stability_check(state, config)
    return state


def _stability_check(state: ReducedState, config: SimConfig) -> None:
    if len(state.sigma_edge) == 0 or config.k_s <= 0:
        return
    k_max = config.k_s * float(state.sigma_edge.max())
    dt = config.dt / config.substeps
    if dt * np.sqrt(k_max / max(state.masses.min(), EPS)) > CFL_LIMIT:
        log.warning("explicit step may be unstable: dt*sqrt(k/m) = %.3f > %.2f",
                    dt * np.sqrt(k_max / max(state.masses.min(), EPS)), CFL_LIMIT)


def _arc_to_nearest_pin(rest: np.ndarray, branches: list, pins: np.ndarray) -> np.ndarray:
    """Arc distance from each key to the nearest pinned key along its branch
    paths; branch root where no pin is reachable."""
    k = len(rest)
    dist = np.full(k, np.inf)
    pin_set = set(int(p) for p in pins)
    for br in branches:
        arcs = np.concatenate(
            [[0.0], np.cumsum(np.linalg.norm(np.diff(rest[br], axis=0), axis=1))]
        )
        anchors = [arcs[i] for i, kidx in enumerate(br) if int(kidx) in pin_set]
        base = anchors if anchors else [0.0]
        for i, kidx in enumerate(br):
            d = min(abs(arcs[i] - a) for a in base)
            dist[kidx] = min(dist[kidx], d)
    return dist


def _tangents(p: np.ndarray, i: np.ndarray, j: np.ndarray) -> np.ndarray:
    e = p[j] - p[i]
    return e / (np.linalg.norm(e, axis=1, keepdims=True) + EPS)


def elastic_energy(state: ReducedState, config: SimConfig) -> float:
    p = state.positions
    e = p[state.edges[:, 1]] - p[state.edges[:, 0]]
    ell = np.linalg.norm(e, axis=1)
    stretch = 0.5 * config.k_s * np.sum(state.sigma_edge * (ell - state.rest_edge_length) ** 2)
    if config.bending_model == "curvature":
        ta = _tangents(p, state.triples[:, 0], state.triples[:, 1])
        tb = _tangents(p, state.triples[:, 1], state.triples[:, 2])
        kappa = 2.0 * (tb - ta) / np.maximum(state.rest_ltot, EPS)[:, None]
        dk = kappa - state.rest_curvature
        bend = 0.5 * config.k_b * np.sum(state.rest_lbar * np.einsum("ij,ij->i", dk, dk))
    else:
        r = (p[state.triples[:, 0]] - 2.0 * p[state.triples[:, 1]] + p[state.triples[:, 2]]
             - state.rest_laplacian)
        bend = 0.5 * config.k_b * np.sum(np.einsum("ij,ij->i", r, r))
    return float(stretch + bend)


def kinetic_energy(state: ReducedState) -> float:
    return float(0.5 * np.sum(state.masses[:, None] * state.velocities ** 2))


def elastic_forces(state: ReducedState, config: SimConfig) -> np.ndarray:
    """Analytic -grad E; per-edge and per-triple contributions are
    equal-and-opposite so each element preserves momentum exactly."""
    p = state.positions
    f = np.zeros_like(p)
    ei, ej = state.edges[:, 0], state.edges[:, 1]
    e = p[ej] - p[ei]
    ell = np.linalg.norm(e, axis=1)
    ehat = e / (ell + EPS)[:, None]
    fs = (config.k_s * state.sigma_edge * (ell - state.rest_edge_length))[:, None] * ehat
    np.add.at(f, ei, fs)
    np.add.at(f, ej, -fs)

    a, b, c = state.triples[:, 0], state.triples[:, 1], state.triples[:, 2]
    if config.bending_model == "curvature":
        e1 = p[b] - p[a]
        e2 = p[c] - p[b]
        l1 = np.linalg.norm(e1, axis=1)
        l2 = np.linalg.norm(e2, axis=1)
        t1 = e1 / (l1 + EPS)[:, None]
        t2 = e2 / (l2 + EPS)[:, None]
        kappa = 2.0 * (t2 - t1) / np.maximum(state.rest_ltot, EPS)[:, None]
        dk = kappa - state.rest_curvature
        coef = 2.0 * config.k_b * state.rest_lbar / np.maximum(state.rest_ltot, EPS)
        # projector application: P_t x = x - t (t . x)
        pa = dk - t1 * np.einsum("ij,ij->i", t1, dk)[:, None]
        pc = dk - t2 * np.einsum("ij,ij->i", t2, dk)[:, None]
        fa = -(coef / (l1 + EPS))[:, None] * pa
        fc = -(coef / (l2 + EPS))[:, None] * pc
        np.add.at(f, a, fa)
        np.add.at(f, c, fc)
        np.add.at(f, b, -(fa + fc))
    else:
        r = p[a] - 2.0 * p[b] + p[c] - state.rest_laplacian
        np.add.at(f, a, -config.k_b * r)
        np.add.at(f, c, -config.k_b * r)
        np.add.at(f, b, 2.0 * config.k_b * r)
    return f


def damping_forces(state: ReducedState, config: SimConfig) -> np.ndarray:
    """Rayleigh-style split: mass-proportional plus stretch and bending kernels."""
    v = state.velocities
    f = -config.alpha * state.masses[:, None] * v
    if config.beta_e > 0.0 and len(state.edges):
        ei, ej = state.edges[:, 0], state.edges[:, 1]
        p = state.positions
        e = p[ej] - p[ei]
        ehat = e / (np.linalg.norm(e, axis=1) + EPS)[:, None]
        rate = np.einsum("ij,ij->i", v[ej] - v[ei], ehat)
        fe = config.beta_e * rate[:, None] * ehat
        np.add.at(f, ei, fe)
        np.add.at(f, ej, -fe)
    if config.beta_b > 0.0 and len(state.triples):
        a, b, c = state.triples[:, 0], state.triples[:, 1], state.triples[:, 2]
        dv = v[a] - 2.0 * v[b] + v[c]
        np.add.at(f, a, -config.beta_b * dv)
        np.add.at(f, c, -config.beta_b * dv)
        np.add.at(f, b, 2.0 * config.beta_b * dv)
    return f


def _key_tangents(state: ReducedState) -> np.ndarray:
    """Per-key tangent averaged over incident within-branch edges (current pose)."""
    p = state.positions
    t = np.zeros_like(p)
    if len(state.edges):
        ei, ej = state.edges[:, 0], state.edges[:, 1]
        e = p[ej] - p[ei]
        ehat = e / (np.linalg.norm(e, axis=1) + EPS)[:, None]
        np.add.at(t, ei, ehat)
        np.add.at(t, ej, ehat)
    norms = np.linalg.norm(t, axis=1, keepdims=True)
    return np.divide(t, norms, out=np.zeros_like(t), where=norms > 0)


def external_forces(state: ReducedState, schedule: ForceSchedule, config: SimConfig,
                    rig: FishboneRig | None = None, time: float | None = None) -> np.ndarray:
    """Wind (sinusoid + tangent-projected drag with turbulence), gravity, and
    pulled-back mesh-side forces. Impulses are velocity kicks handled by step()."""
    t = state.time if time is None else time
    f = np.zeros_like(state.positions)
    if schedule.gravity_on:
        f += state.masses[:, None] * np.asarray(config.gravity, dtype=np.float64)
    if schedule.wind:
        w = schedule.wind
        direction = np.asarray(w["direction"], dtype=np.float64)
        direction = direction / max(np.linalg.norm(direction), EPS)
        amp = float(w.get("amplitude", 0.0))
        omega = float(w.get("frequency", 1.0))
        dphi = float(w["phase_step"])  # no paper default: a required scenario field
        ramp_p = float(w.get("ramp_exp", 1.5))
        c_d = float(w.get("drag", 0.0))
        tau = float(w.get("turbulence", 0.3))
        ratio = float(w.get("secondary_ratio", 2.3))
        idx = np.arange(state.n_keys)
        d = state._pin_arc
        dmax = float(d.max()) if d is not None and np.isfinite(d).any() and d.max() > 0 else 1.0
        a_i = np.power(np.clip((d if d is not None else np.ones(state.n_keys)) / dmax, 0.0, 1.0),
                       ramp_p)
        phase = omega * t + idx * dphi
        f += (a_i * amp * np.sin(phase))[:, None] * direction
        if c_d > 0.0:
            u_wind = (
                amp * np.sin(phase) + tau * amp * np.sin(ratio * omega * t + 1.7 * idx * dphi)
            )[:, None] * direction
            rel = u_wind - state.velocities
            tk = _key_tangents(state)
            rel_perp = rel - tk * np.einsum("ij,ij->i", tk, rel)[:, None]
            f += (c_d * a_i)[:, None] * rel_perp
    if schedule.mesh_forces is not None and rig is not None:
        per_part = schedule.mesh_forces(t)
        for pid, fv in enumerate(per_part):
            if fv is None:
                continue
            pr = rig.part_rigs[pid]
            wm = pr.spine_weights
            np.add.at(f, pr.key_cols[wm.cols], wm.values[:, None] * fv[wm.rows])
    return f


def _apply_impulses(state: ReducedState, schedule: ForceSchedule) -> None:
    for i, imp in enumerate(schedule.impulses):
        if i in state._fired or float(imp["time"]) > state.time:
            continue
        state._fired.add(i)
        x_c = np.asarray(imp["point"], dtype=np.float64)
        j_vec = np.asarray(imp["impulse"], dtype=np.float64)
        sigma = float(imp.get("sigma", 0.0))
        d = np.linalg.norm(state.positions - x_c, axis=1)
        if sigma <= 0.0:  # limit case: only the nearest key is kicked
            w = np.zeros(state.n_keys)
            w[int(np.argmin(d))] = 1.0
        else:
            w = np.exp(-np.square(d) / (2.0 * sigma * sigma))
        state.velocities += (w / state.masses)[:, None] * j_vec


def step(state: ReducedState, config: SimConfig, schedule: ForceSchedule | None = None,
         frame_dt: float | None = None, rig: FishboneRig | None = None) -> ReducedState:
    """Advance one frame with semi-implicit Euler substeps and hard pins."""
    schedule = schedule or ForceSchedule()
    frame_dt = config.dt if frame_dt is None else frame_dt
    dt = frame_dt / config.substeps
    for sub in range(config.substeps):
        _apply_impulses(state, schedule)
        f = elastic_forces(state, config)
        f += damping_forces(state, config)
        f += external_forces(state, schedule, config, rig)
        state.velocities = state.velocities + dt * f / state.masses[:, None]
        state.positions = state.positions + dt * state.velocities
        if len(state.pins):
            state.velocities[state.pins] = 0.0
            state.positions[state.pins] = state.rest_positions[state.pins]
        state.time += dt
        if not (np.isfinite(state.positions).all() and np.isfinite(state.velocities).all()):
            raise SimulationDivergenceError("non-finite state", step_index=sub)
    return state


# ---------------------------------------------------------------------------
# Mesh lifting
# ---------------------------------------------------------------------------

def lift_displacement(rig: FishboneRig, key_positions: np.ndarray) -> list[np.ndarray]:
    """V = V0 + W^s (S - S0), per part."""
    out = []
    for pid, pr in enumerate(rig.part_rigs):
        rest = rig.parts.parts[pid].vertices
        delta = key_positions[pr.key_cols] - rig.rest_key_points[pr.key_cols]
        moved = rest + pr.spine_weights.to_csr() @ delta
        out.append(moved)
    return out


def lift_cylindrical(rig: FishboneRig, key_positions: np.ndarray) -> list[np.ndarray]:
    """Cylindrical reconstruction in the deformed parallel-transport frame,
    blended with the displacement lift by lambda = exp(-d^2/(2 sigma_s^2))."""
    disp = lift_displacement(rig, key_positions)
    edges = rig.edges()
    frames_t = compute_edge_frames(rig.spine, key_positions, rest_frames=rig.frames)
    out = []
    for pid, pr in enumerate(rig.part_rigs):
        binding = pr.binding
        rec = reconstruct_cylindrical(binding, edges, key_positions, frames_t)
        lam = binding.lam[:, None]
        ok = binding.segment >= 0
        if len(edges):
            seg_len = np.linalg.norm(
                key_positions[edges[:, 1]] - key_positions[edges[:, 0]], axis=1
            )
            degenerate = seg_len[np.clip(binding.segment, 0, None)] < EPS
            ok = ok & ~degenerate
            if degenerate.any() and (binding.segment >= 0).any():
                log.warning("cylindrical lift: %d vertices on degenerate segments fall back",
                            int((degenerate & (binding.segment >= 0)).sum()))
        lifted = disp[pid].copy()
        lifted[ok] += lam[ok] * (rec[ok] - disp[pid][ok])
        out.append(lifted)
    return out


def lift(rig: FishboneRig, state: ReducedState, config: SimConfig) -> list[np.ndarray]:
    if config.lift_mode == "cylindrical":
        return lift_cylindrical(rig, state.positions)
    return lift_displacement(rig, state.positions)
