"""FastAPI application exposing the session-based editing and simulation API.

Routes:
    POST /session                       create a session from a rig
    POST /session/{id}/command          one endpoint per Command (name routed)
    GET  /session/{id}/snapshot         current geometry as JSON
    POST /session/{id}/sim/start        begin reduced-space simulation
    POST /session/{id}/sim/stop         stop it
    GET  /session/{id}/sim/frames       frame records as streamed JSON lines
"""

from __future__ import annotations

import json
import time
from pathlib import Path

from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import StreamingResponse

from ..errors import FishboneError, ParameterError, SelectionError, SessionError
from . import geometry
from .schemas import (
    CommandRequest,
    CommandResponse,
    CreateSessionRequest,
    SessionInfo,
    SimStartRequest,
    SimStatus,
    Snapshot,
)
from .sessions import SessionManager


def create_app(rig_root: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="fishbone session service", version="0.1.0")
    manager = SessionManager(Path(rig_root) if rig_root else None)
    app.state.manager = manager

    def _get(session_id: str):
        try:
            return manager.get(session_id)
        except SessionError as exc:
            raise HTTPException(status_code=404, detail=str(exc))

    @app.post("/session", response_model=SessionInfo)
    def create_session(req: CreateSessionRequest):
        try:
            session = manager.create(req.rig)
        except (SessionError, FishboneError) as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        rig = session.rig
        return SessionInfo(
            session_id=session.id,
            n_parts=len(rig.parts.parts),
            n_ribs=len(rig.ribs),
            n_keys=rig.n_keys,
            n_branches=len(rig.spine.branches),
            rest_hash=session.rest_hash,
        )

    @app.post("/session/{session_id}/command", response_model=CommandResponse)
    def run_command(session_id: str, req: CommandRequest):
        session = _get(session_id)
        try:
            result = manager.execute(session, req.name, req.params)
        except (SelectionError, ParameterError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        except SessionError as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except FishboneError as exc:
            raise HTTPException(status_code=400, detail=str(exc))
        return CommandResponse(
            name=req.name,
            result=result,
            snapshot_hash=result.get("snapshot_hash") if isinstance(result, dict) else None,
        )

    @app.get("/session/{session_id}/snapshot", response_model=Snapshot)
    def snapshot(session_id: str, view: str = Query(default="+z")):
        session = _get(session_id)
        with session.lock:
            return geometry.snapshot_payload(session.rig, view)

    @app.get("/session/{session_id}/weights")
    def weight_column(session_id: str, kind: str = Query(default="rib"),
                      column: int = Query(default=0)):
        """Dense per-vertex weight column for client-side support highlighting."""
        session = _get(session_id)
        import numpy as np

        from .schemas import encode_f32

        with session.lock:
            rig = session.rig
            out = []
            for pid, pr in enumerate(rig.part_rigs):
                wm = pr.rib_weights if kind == "rib" else pr.spine_weights
                cols = pr.rib_cols if kind == "rib" else pr.key_cols
                dense = np.zeros(wm.shape[0])
                hit = np.flatnonzero(cols == column)
                if len(hit):
                    sel = wm.cols == hit[0]
                    dense[wm.rows[sel]] = wm.values[sel]
                out.append({"part_id": pid, "weights": encode_f32(dense)})
        if kind not in ("rib", "spine"):
            raise HTTPException(status_code=422, detail="kind must be 'rib' or 'spine'")
        return {"kind": kind, "column": column, "parts": out}

    @app.post("/session/{session_id}/sim/start", response_model=SimStatus)
    def sim_start(session_id: str, req: SimStartRequest):
        session = _get(session_id)
        try:
            manager.start_sim(session, req.config, req.schedule, req.max_frames,
                              req.realtime, req.include_vertex_hash)
        except SessionError as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except (ValueError, FishboneError) as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return SimStatus(**manager.sim_status(session))

    @app.post("/session/{session_id}/sim/stop", response_model=SimStatus)
    def sim_stop(session_id: str):
        session = _get(session_id)
        manager.stop_sim(session)
        return SimStatus(**manager.sim_status(session))

    @app.get("/session/{session_id}/sim/frames")
    def sim_frames(session_id: str, since: int = 0, follow: bool = False,
                   timeout_s: float = 30.0):
        session = _get(session_id)
        if session.sim is None:
            raise HTTPException(status_code=409, detail="no simulation on this session")

        def stream():
            cursor = max(int(since), 0)
            deadline = time.monotonic() + timeout_s
            while True:
                sim = session.sim
                frames = sim.frames
                while cursor < len(frames):
                    yield json.dumps(frames[cursor], sort_keys=True) + "\n"
                    cursor += 1
                if not follow or not sim.running or time.monotonic() > deadline:
                    break
                time.sleep(0.005)

        return StreamingResponse(stream(), media_type="application/jsonl")

    return app
