import json

import numpy as np
import pytest
from fastapi.testclient import TestClient

from fishbone import shapes
from fishbone.mesh_io import RawMesh
from fishbone.pipeline import ExtractConfig, extract_rig
from fishbone.rig_store import load_rig, save_rig
from fishbone.service import create_app
from fishbone.service.schemas import decode_block
from fishbone.service.sessions import SessionManager


@pytest.fixture(scope="module")
def rig_root(tmp_path_factory):
    d = tmp_path_factory.mktemp("rigs")
    v, f = shapes.icosphere(2)
    rig, _ = extract_rig(RawMesh(v, f), ExtractConfig(use_cache=False))
    save_rig(rig, d / "demo.fbr")
    return d


@pytest.fixture()
def client(rig_root):
    return TestClient(create_app(rig_root))


@pytest.fixture()
def session(client):
    r = client.post("/session", json={"rig": "demo"})
    assert r.status_code == 200
    return r.json()


def command(client, sid, name, params=None):
    return client.post(f"/session/{sid}/command",
                       json={"name": name, "params": params or {}})


class TestSessionLifecycle:
    def test_create_reports_structure(self, session):
        assert session["n_parts"] == 1
        assert session["n_ribs"] >= 3
        assert session["n_keys"] == session["n_ribs"]
        assert len(session["rest_hash"]) == 64

    def test_unknown_rig_404(self, client):
        assert client.post("/session", json={"rig": "nope"}).status_code == 404

    def test_unknown_session_404(self, client):
        assert client.get("/session/deadbeef/snapshot").status_code == 404

    def test_done_flushes_edit_log(self, client, session, rig_root):
        sid = session["session_id"]
        command(client, sid, "select_ribs", {"ribs": [0]})
        command(client, sid, "deform", {"primitive": "uniform_scale", "params": {"s": 1.2}})
        r = command(client, sid, "done", {"message": "bye"})
        log_path = r.json()["result"]["edit_log"]
        log = json.loads(open(log_path).read())
        assert log["message"] == "bye"
        assert [c["name"] for c in log["commands"]] == ["select_ribs", "deform"]
        # session is gone
        assert client.get(f"/session/{sid}/snapshot").status_code == 404


class TestCommands:
    def test_list_parts(self, client, session):
        r = command(client, session["session_id"], "list_parts")
        parts = r.json()["result"]["parts"]
        assert parts[0]["part_id"] == 0 and parts[0]["n_vertices"] > 0

    def test_list_and_select_ribs(self, client, session):
        sid = session["session_id"]
        ribs = command(client, sid, "list_ribs").json()["result"]["ribs"]
        assert all(r["closed"] for r in ribs)
        ids = [r["rib_id"] for r in ribs][:2]
        r = command(client, sid, "select_ribs", {"ribs": ids})
        assert r.json()["result"]["selected_ribs"] == ids

    def test_select_nonexistent_rib_422(self, client, session):
        r = command(client, session["session_id"], "select_ribs", {"ribs": [999]})
        assert r.status_code == 422

    def test_branches(self, client, session):
        sid = session["session_id"]
        branches = command(client, sid, "list_spine_branches").json()["result"]["branches"]
        assert len(branches) == 1
        assert branches[0]["rest_length"] > 0
        r = command(client, sid, "select_spine_branch", {"branch": 0})
        assert r.json()["result"]["selected_branch"] == 0
        assert command(client, sid, "select_spine_branch", {"branch": 9}).status_code == 422

    def test_identity_deform_keeps_geometry(self, client, session):
        sid = session["session_id"]
        before = client.get(f"/session/{sid}/snapshot").json()
        command(client, sid, "select_ribs", {"ribs": [1]})
        r = command(client, sid, "deform", {"primitive": "uniform_scale", "params": {"s": 1.0}})
        assert r.json()["snapshot_hash"] == before["snapshot_hash"]

    def test_deform_changes_and_reset_restores_bitwise(self, client, session):
        sid = session["session_id"]
        rest_hash = session["rest_hash"]
        snap0 = client.get(f"/session/{sid}/snapshot").json()
        assert snap0["snapshot_hash"] == rest_hash
        command(client, sid, "select_ribs", {"ribs": [2]})
        r = command(client, sid, "deform",
                    {"primitive": "uniform_scale", "params": {"s": 1.5}})
        assert r.json()["snapshot_hash"] != rest_hash
        r = command(client, sid, "reset")
        assert r.json()["result"]["snapshot_hash"] == rest_hash

    def test_deform_without_selection_422(self, client, session):
        r = command(client, session["session_id"], "deform",
                    {"primitive": "uniform_scale", "params": {"s": 1.5}})
        assert r.status_code == 422

    def test_unknown_primitive_422(self, client, session):
        sid = session["session_id"]
        command(client, sid, "select_ribs", {"ribs": [0]})
        r = command(client, sid, "deform", {"primitive": "explode", "params": {}})
        assert r.status_code == 422

    def test_delta_response_mode(self, client, session):
        sid = session["session_id"]
        snap0 = decode_block(client.get(f"/session/{sid}/snapshot").json()
                             ["parts"][0]["positions"])
        command(client, sid, "select_ribs", {"ribs": [1]})
        r = command(client, sid, "deform",
                    {"primitive": "uniform_scale", "params": {"s": 1.3},
                     "response": "delta"})
        delta = decode_block(r.json()["result"]["delta"][0]["positions_delta"])
        snap1 = decode_block(client.get(f"/session/{sid}/snapshot").json()
                             ["parts"][0]["positions"])
        np.testing.assert_allclose(snap0 + delta, snap1, atol=1e-4)
        assert np.abs(delta).max() > 0
        command(client, sid, "reset")

    def test_weight_column_endpoint(self, client, session):
        sid = session["session_id"]
        r = client.get(f"/session/{sid}/weights?kind=rib&column=1")
        assert r.status_code == 200
        payload = r.json()
        w = decode_block(payload["parts"][0]["weights"])
        assert w.ndim == 1 and (w >= 0).all()
        assert w.sum() > 0  # rib 1 supports some vertices
        assert client.get(f"/session/{sid}/weights?kind=bogus").status_code == 422

    def test_snapshot_geometry_decodes(self, client, session):
        sid = session["session_id"]
        snap = client.get(f"/session/{sid}/snapshot?view=-x").json()
        assert snap["view"] == "-x"
        pos = decode_block(snap["parts"][0]["positions"])
        faces = decode_block(snap["parts"][0]["faces"])
        assert pos.shape[1] == 3 and faces.shape[1] == 3
        assert len(snap["ribs"]) == len(
            command(client, sid, "list_ribs").json()["result"]["ribs"])
        rib0 = decode_block(snap["ribs"][0]["points"])
        assert rib0.shape[1] == 3
        keys = decode_block(snap["spine"]["key_points"])
        assert keys.shape == (len(snap["spine"]["branches"][0]), 3) or keys.shape[1] == 3


class TestReplay:
    def test_edit_log_replays_bitwise(self, client, session, rig_root):
        sid = session["session_id"]
        command(client, sid, "select_ribs", {"ribs": [1, 3]})
        command(client, sid, "deform", {"primitive": "translate",
                                        "params": {"d": [0.02, 0.0, -0.01]}})
        command(client, sid, "select_spine_branch", {"branch": 0})
        command(client, sid, "deform", {"primitive": "bend",
                                        "params": {"axis": "N", "angle": 0.4, "t_a": 0.3}})
        live = client.get(f"/session/{sid}/snapshot").json()["snapshot_hash"]
        r = command(client, sid, "done", {"message": ""})
        log = json.loads(open(r.json()["result"]["edit_log"]).read())

        manager = SessionManager(rig_root)
        rig = load_rig(rig_root / "demo.fbr")
        manager.replay(rig, log["commands"])
        assert rig.pose_hash() == live


class TestSimulation:
    def test_bounded_run_and_stream(self, client, session):
        sid = session["session_id"]
        r = client.post(f"/session/{sid}/sim/start", json={
            "config": {"substeps": 2, "pins": [0], "k_s": 20.0, "k_b": 0.5},
            "schedule": {"gravity_on": True},
            "max_frames": 6,
            "include_vertex_hash": True,
        })
        assert r.status_code == 200
        import time

        deadline = time.monotonic() + 10
        while time.monotonic() < deadline:
            status = client.post(f"/session/{sid}/sim/stop").json()
            if status["frame_count"] >= 6:
                break
            client.post(f"/session/{sid}/sim/start", json={})  # no-op if still running
            time.sleep(0.02)
        r = client.get(f"/session/{sid}/sim/frames?since=0")
        lines = [json.loads(l) for l in r.text.strip().splitlines()]
        assert len(lines) == 6
        assert [l["frame"] for l in lines] == list(range(6))
        assert all("vertex_hash" in l and "key_positions" in l for l in lines)
        # since-cursor skips
        r = client.get(f"/session/{sid}/sim/frames?since=4")
        assert len(r.text.strip().splitlines()) == 2

    def test_frames_without_sim_409(self, client, session):
        r = client.get(f"/session/{session['session_id']}/sim/frames")
        assert r.status_code == 409

    def test_pinned_keys_fixed_in_stream(self, client, session):
        sid = session["session_id"]
        client.post(f"/session/{sid}/sim/start", json={
            "config": {"substeps": 2, "pins": [0]},
            "schedule": {"gravity_on": True},
            "max_frames": 4,
        })
        import time

        time.sleep(0.3)
        client.post(f"/session/{sid}/sim/stop")
        lines = [json.loads(l) for l in
                 client.get(f"/session/{sid}/sim/frames").text.strip().splitlines()]
        first = np.array(lines[0]["key_positions"][0])
        last = np.array(lines[-1]["key_positions"][0])
        assert np.array_equal(first, last)
