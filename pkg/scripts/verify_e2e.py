"""End-to-end drive of the shipped surfaces: CLI binary + live HTTP service.

Builds a demo mesh, extracts a rig, exercises every CLI subcommand on real
files, then starts uvicorn on a TCP port and walks the editor loop a browser
client would perform (select rib, slider deform, snapshot hash change, reset
to rest hash, bounded simulation stream). Exits nonzero on any failure.
"""

import json
import os
import shutil
import subprocess
import sys
import tempfile
import time
import urllib.request

PORT = 8742


def req(method, path, payload=None):
    url = f"http://127.0.0.1:{PORT}{path}"
    data = json.dumps(payload).encode() if payload is not None else None
    r = urllib.request.Request(url, data=data, method=method,
                               headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(r, timeout=10) as resp:
        body = resp.read().decode()
    try:
        return json.loads(body)
    except json.JSONDecodeError:
        return body  # streamed JSON-lines


def main():
    td = tempfile.mkdtemp(prefix="fishbone_verify_")
    env = dict(os.environ, FISHBONE_CACHE=os.path.join(td, "cache"))
    fishbone = shutil.which("fishbone") or sys.executable + " -m fishbone.cli"

    def cli(*args):
        cmd = ([fishbone] if shutil.which("fishbone") else
               [sys.executable, "-m", "fishbone.cli"]) + [str(a) for a in args]
        out = subprocess.run(cmd, capture_output=True, text=True, env=env)
        if out.returncode != 0:
            raise SystemExit(f"CLI failed: {' '.join(cmd)}\n{out.stderr}")
        return out.stdout

    obj = cli("make-demo", td, "--shape", "icosphere").strip()
    rig = os.path.join(td, "demo.fbr")
    report = json.loads(cli("extract", obj, "-o", rig))
    assert {"rib_extraction_s", "spine_construction_s", "weight_computation_s",
            "total_s"} <= set(report), report
    print("extract:", report)

    edits = os.path.join(td, "edits.json")
    with open(edits, "w") as fh:
        json.dump([{"op": "rib", "ribs": [2], "primitive": "uniform_scale",
                    "params": {"s": 1.4}},
                   {"op": "spine", "branch": 0, "primitive": "twist",
                    "params": {"psi_max": 0.6, "t_start": 0.1, "t_end": 0.9}}], fh)
    print("deform:", cli("deform", rig, "--edits", edits, "-o",
                         os.path.join(td, "out.obj")).strip())

    scenario = os.path.join(td, "scenario.json")
    with open(scenario, "w") as fh:
        json.dump({"config": {"substeps": 2, "pins": [0]},
                   "schedule": {"gravity_on": True}}, fh)
    print("simulate:", cli("simulate", rig, "--scenario", scenario, "--frames", "10",
                           "-o", os.path.join(td, "trace.jsonl"), "--vertex-hash").strip())

    sampler = os.path.join(td, "sampler.json")
    with open(sampler, "w") as fh:
        json.dump({"ops": [{"primitive": "uniform_scale", "ribs": "random",
                            "s": [0.9, 1.2]}]}, fh)
    print("augment:", cli("augment", rig, "--sampler", sampler, "--count", "3",
                          "--seed", "5", "-o", os.path.join(td, "variants")).strip())

    with open(os.path.join(td, "fishbone_verify_app.py"), "w") as fh:
        fh.write("import os\nfrom fishbone.service import create_app\n"
                 "def app():\n    return create_app(os.environ['FISHBONE_RIG_ROOT'])\n")
    server = subprocess.Popen(
        [sys.executable, "-m", "uvicorn", "--factory", "--port", str(PORT),
         "--log-level", "warning", "fishbone_verify_app:app"],
        env=dict(env, FISHBONE_RIG_ROOT=td, PYTHONPATH=td),
        cwd=td,
    )
    try:
        for _ in range(100):
            try:
                req("POST", "/session", {"rig": "demo"})
                break
            except Exception:
                time.sleep(0.1)
        session = req("POST", "/session", {"rig": "demo"})
        sid = session["session_id"]
        rest_hash = session["rest_hash"]
        print("session:", sid, "ribs:", session["n_ribs"])

        ribs = req("POST", f"/session/{sid}/command",
                   {"name": "list_ribs", "params": {}})["result"]["ribs"]
        req("POST", f"/session/{sid}/command",
            {"name": "select_ribs", "params": {"ribs": [ribs[0]["rib_id"]]}})
        t0 = time.perf_counter()
        deform = req("POST", f"/session/{sid}/command",
                     {"name": "deform", "params": {"primitive": "uniform_scale",
                                                   "params": {"s": 1.5}}})
        rt_ms = (time.perf_counter() - t0) * 1000
        assert deform["snapshot_hash"] != rest_hash, "deform did not change the hash"
        assert rt_ms < 200, f"command round-trip {rt_ms:.1f} ms"
        print(f"deform round-trip {rt_ms:.1f} ms, hash changed")
        reset = req("POST", f"/session/{sid}/command", {"name": "reset", "params": {}})
        assert reset["result"]["snapshot_hash"] == rest_hash, "reset != rest hash"
        print("reset restored the rest hash")

        req("POST", f"/session/{sid}/sim/start",
            {"config": {"substeps": 2, "pins": [0]},
             "schedule": {"gravity_on": True}, "max_frames": 5})
        time.sleep(0.6)
        req("POST", f"/session/{sid}/sim/stop")
        frames = req("GET", f"/session/{sid}/sim/frames?since=0")
        n_frames = len([l for l in frames.strip().splitlines()])
        assert n_frames == 5, f"expected 5 frames, got {n_frames}"
        print("sim streamed", n_frames, "frames")
        req("POST", f"/session/{sid}/command", {"name": "done", "params": {"message": "ok"}})

        # drive the same loop through the compiled TypeScript client when built
        repo = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
        e2e = os.path.join(repo, "frontend", "e2e.mjs")
        dist = os.path.join(repo, "frontend", "dist", "src", "api.js")
        if shutil.which("node") and os.path.exists(e2e) and os.path.exists(dist):
            out = subprocess.run(
                ["node", e2e, f"http://127.0.0.1:{PORT}", "demo"],
                capture_output=True, text=True, cwd=os.path.join(repo, "frontend"),
            )
            print(out.stdout.strip())
            if out.returncode != 0:
                raise SystemExit(f"frontend e2e failed:\n{out.stderr}")
        print("VERIFY OK")
    finally:
        server.terminate()
        server.wait()
        shutil.rmtree(td, ignore_errors=True)


if __name__ == "__main__":
    main()
