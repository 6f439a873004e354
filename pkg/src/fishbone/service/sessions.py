"""Session registry: one rig instance per session, single-writer semantics.

Edits and simulation substeps share the session lock, so the edit path
pauses the per-session ticker and clients never observe interleaved partial
states. Edit logs replay deterministically.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..deform import RIB_PRIMITIVES, RibEdit, SpineEdit, apply_edit
from ..dynamics import ForceSchedule, SimConfig, lift, make_state, step
from ..errors import FishboneError, SelectionError, SessionError
from ..rig import FishboneRig
from ..util import hash_arrays


@dataclass
class SimRunner:
    config: SimConfig
    schedule: ForceSchedule
    state: object
    max_frames: int | None = None
    realtime: bool = False
    include_vertex_hash: bool = False
    frames: list = field(default_factory=list)
    running: bool = False
    thread: threading.Thread | None = None


@dataclass
class Session:
    id: str
    rig: FishboneRig
    rig_name: str
    rest_hash: str
    active_part: int = 0
    selected_ribs: list = field(default_factory=list)
    selected_branch: int = 0
    edit_log: list = field(default_factory=list)
    sim: SimRunner | None = None
    closed: bool = False
    lock: threading.RLock = field(default_factory=threading.RLock)


class SessionManager:
    def __init__(self, rig_root: Path | None = None):
        self.rig_root = Path(rig_root) if rig_root else Path.cwd()
        self._sessions: dict[str, Session] = {}
        self._registry_lock = threading.Lock()

    # -- lifecycle ---------------------------------------------------------

    def resolve_rig_path(self, name: str) -> Path:
        p = Path(name)
        if p.suffix == ".fbr" and p.exists():
            return p
        candidate = self.rig_root / (name if name.endswith(".fbr") else f"{name}.fbr")
        if candidate.exists():
            return candidate
        raise SessionError(f"rig {name!r} not found under {self.rig_root}")

    def create(self, rig_name: str) -> Session:
        from ..rig_store import load_rig

        rig = load_rig(self.resolve_rig_path(rig_name))
        session = Session(
            id=uuid.uuid4().hex[:16],
            rig=rig,
            rig_name=rig_name,
            rest_hash=hash_arrays(*[p.vertices for p in rig.parts.parts],
                                  rig.rest_key_points),
        )
        with self._registry_lock:
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> Session:
        with self._registry_lock:
            session = self._sessions.get(session_id)
        if session is None or session.closed:
            raise SessionError(f"unknown session {session_id!r}")
        return session

    def close(self, session: Session, message: str = "") -> Path:
        self.stop_sim(session)
        log_path = self.rig_root / f"session_{session.id}.editlog.json"
        with session.lock:
            with open(log_path, "w", encoding="utf-8") as fh:
                json.dump({"rig": session.rig_name, "message": message,
                           "commands": session.edit_log}, fh, indent=2)
            session.closed = True
        with self._registry_lock:
            self._sessions.pop(session.id, None)
        return log_path

    # -- commands ----------------------------------------------------------

    def execute(self, session: Session, name: str, params: dict) -> dict:
        with session.lock:
            result = self._execute_locked(session, name, params)
        return result

    def _execute_locked(self, session: Session, name: str, params: dict) -> dict:
        rig = session.rig
        if name == "list_parts":
            return {"parts": [
                {"part_id": p.part_id, "n_vertices": len(p.vertices),
                 "n_faces": len(p.faces), "thin_shell": p.is_thin_shell}
                for p in rig.parts.parts
            ]}
        if name == "set_part":
            pid = int(params["part_id"])
            if not (0 <= pid < len(rig.parts.parts)):
                raise SelectionError(f"unknown part {pid}")
            session.active_part = pid
            session.edit_log.append({"name": name, "params": {"part_id": pid}})
            return {"active_part": pid}
        if name == "list_ribs":
            return {"ribs": [
                {"rib_id": r.rib_id, "level_index": r.level_index, "sub_index": r.sub_index,
                 "closed": r.closed, "part_id": r.part_id, "n_points": r.n_points,
                 "centroid": [float(x) for x in r.centroid()]}
                for r in rig.ribs if r.part_id == session.active_part
            ]}
        if name == "select_ribs":
            ribs = [int(r) for r in params.get("ribs", [])]
            known = {r.rib_id for r in rig.ribs}
            bad = [r for r in ribs if r not in known]
            if bad:
                raise SelectionError(f"unknown rib ids {bad}")
            session.selected_ribs = ribs
            session.edit_log.append({"name": name, "params": {"ribs": ribs}})
            return {"selected_ribs": ribs}
        if name == "list_spine_branches":
            return {"branches": [
                {"branch_id": i, "keys": [int(k) for k in b],
                 "rest_length": float(rig.arc_table.branch_length[i])}
                for i, b in enumerate(rig.spine.branches)
            ]}
        if name == "select_spine_branch":
            b = int(params["branch"])
            if not (0 <= b < len(rig.spine.branches)):
                raise SelectionError(f"unknown branch {b}")
            session.selected_branch = b
            session.edit_log.append({"name": name, "params": {"branch": b}})
            return {"selected_branch": b}
        if name == "deform":
            return self._deform(session, params)
        if name == "reset":
            rig.reset()
            session.edit_log.append({"name": "reset", "params": {}})
            return {"snapshot_hash": rig.pose_hash()}
        if name == "snapshot":
            from .geometry import snapshot_payload

            return snapshot_payload(rig, params.get("view", "+z")).model_dump()
        if name == "done":
            path = self.close(session, str(params.get("message", "")))
            return {"closed": True, "edit_log": str(path)}
        raise FishboneError(f"unknown command {name!r}")

    def _deform(self, session: Session, params: dict) -> dict:
        primitive = params.get("primitive")
        edit_params = dict(params.get("params", {}))
        if primitive in RIB_PRIMITIVES:
            ribs = params.get("ribs", session.selected_ribs)
            if not ribs:
                raise SelectionError("no ribs selected")
            edit = RibEdit([int(r) for r in ribs], primitive, edit_params)
        else:
            branch = int(params.get("branch", session.selected_branch))
            edit = SpineEdit(branch, primitive, edit_params)
        mode = params.get("response", "hash")
        before = ([v.copy() for v in session.rig.current_vertices]
                  if mode == "delta" else None)
        apply_edit(session.rig, edit)
        session.edit_log.append({"name": "deform", "params": {
            "primitive": primitive, "params": edit_params,
            **({"ribs": [int(r) for r in edit.rib_set]} if isinstance(edit, RibEdit)
               else {"branch": edit.branch}),
        }})
        out = {"snapshot_hash": session.rig.pose_hash()}
        if mode == "full":
            from .geometry import snapshot_payload

            out["snapshot"] = snapshot_payload(session.rig, "+z").model_dump()
        elif mode == "delta":
            from .schemas import encode_f32

            out["delta"] = [
                {"part_id": pid, "positions_delta": encode_f32(after - prev)}
                for pid, (prev, after) in enumerate(zip(before, session.rig.current_vertices))
            ]
        return out

    # -- replay ------------------------------------------------------------

    def replay(self, rig: FishboneRig, commands: list) -> FishboneRig:
        """Re-apply a logged command sequence to a freshly loaded rig."""
        selected_ribs: list[int] = []
        selected_branch = 0
        for cmd in commands:
            name, params = cmd["name"], cmd.get("params", {})
            if name == "select_ribs":
                selected_ribs = params["ribs"]
            elif name == "select_spine_branch":
                selected_branch = params["branch"]
            elif name == "reset":
                rig.reset()
            elif name == "deform":
                primitive = params["primitive"]
                if primitive in RIB_PRIMITIVES:
                    edit = RibEdit(params.get("ribs", selected_ribs), primitive,
                                   dict(params.get("params", {})))
                else:
                    edit = SpineEdit(params.get("branch", selected_branch), primitive,
                                     dict(params.get("params", {})))
                apply_edit(rig, edit)
        return rig

    # -- simulation --------------------------------------------------------

    def start_sim(self, session: Session, config: dict, schedule: dict,
                  max_frames: int | None, realtime: bool, include_vertex_hash: bool) -> None:
        with session.lock:
            if session.sim and session.sim.running:
                raise SessionError("simulation already running")
            cfg_fields = {k: v for k, v in config.items() if k in SimConfig.__dataclass_fields__}
            if "pins" in cfg_fields:
                cfg_fields["pins"] = tuple(int(p) for p in cfg_fields["pins"])
            if "gravity" in cfg_fields:
                cfg_fields["gravity"] = tuple(float(g) for g in cfg_fields["gravity"])
            cfg = SimConfig(**cfg_fields)
            sched = ForceSchedule.from_json(schedule)
            state = make_state(session.rig, cfg)
            session.sim = SimRunner(cfg, sched, state, max_frames, realtime,
                                    include_vertex_hash)
            session.sim.running = True
        thread = threading.Thread(target=self._sim_loop, args=(session,), daemon=True)
        session.sim.thread = thread
        thread.start()

    def _sim_loop(self, session: Session) -> None:
        sim = session.sim
        while sim.running:
            if sim.max_frames is not None and len(sim.frames) >= sim.max_frames:
                sim.running = False
                break
            t0 = time.perf_counter()
            with session.lock:  # the edit path shares this lock
                step(sim.state, sim.config, sim.schedule, rig=session.rig)
                record = {
                    "frame": len(sim.frames),
                    "time": sim.state.time,
                    "key_positions": [[float(x) for x in row] for row in sim.state.positions],
                }
                if sim.include_vertex_hash:
                    lifted = lift(session.rig, sim.state, sim.config)
                    record["vertex_hash"] = hash_arrays(*lifted)[:16]
                sim.frames.append(record)
            if sim.realtime:
                elapsed = time.perf_counter() - t0
                time.sleep(max(0.0, sim.config.dt - elapsed))

    def stop_sim(self, session: Session) -> None:
        sim = session.sim
        if sim is None:
            return
        sim.running = False
        if sim.thread is not None and sim.thread.is_alive():
            sim.thread.join(timeout=5.0)

    def sim_status(self, session: Session) -> dict:
        sim = session.sim
        if sim is None:
            return {"running": False, "frame_count": 0, "time": 0.0}
        return {"running": sim.running, "frame_count": len(sim.frames),
                "time": sim.state.time if sim.state is not None else 0.0}
