"""Command-line interface: extract / deform / simulate / animate / augment / serve.

Each subcommand is a thin wrapper over the library; the heavy lifting lives
in pipeline, deform, dynamics, animation, and augment.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click
import numpy as np

from .errors import FishboneError


@click.group()
def main():
    """Fishbone: rib-spine control structures for meshes."""


def _load_config(config_json: str | None) -> dict:
    if not config_json:
        return {}
    p = Path(config_json)
    if p.exists():
        return json.loads(p.read_text())
    return json.loads(config_json)


@main.command()
@click.argument("input_path", type=click.Path(exists=True))
@click.option("-o", "--output", "output_path", required=True, type=click.Path())
@click.option("--config", "config_json", default=None,
              help="JSON string or file with ExtractConfig overrides")
@click.option("--keep-largest", is_flag=True, help="keep only the largest connected component")
@click.option("--format", "fmt", default=None, type=click.Choice(["obj", "mesh-json"]))
def extract(input_path, output_path, config_json, keep_largest, fmt):
    """Extract a rig from a mesh and save it as a .fbr file."""
    from .pipeline import ExtractConfig, extract_rig_from_file
    from .rig_store import save_rig

    overrides = _load_config(config_json)
    if keep_largest:
        overrides["keep_largest_component"] = True
    known = set(ExtractConfig.__dataclass_fields__)
    bad = set(overrides) - known
    if bad:
        raise click.UsageError(f"unknown config keys: {sorted(bad)}")
    if "score_weights" in overrides:
        overrides["score_weights"] = tuple(overrides["score_weights"])
    if "root_override" in overrides:
        overrides["root_override"] = {int(k): v for k, v in overrides["root_override"].items()}
    config = ExtractConfig(**overrides)
    try:
        rig, timings = extract_rig_from_file(input_path, config, fmt)
    except FishboneError as exc:
        click.echo(f"error [{type(exc).__name__}]: {exc}", err=True)
        sys.exit(2)
    save_rig(rig, output_path)
    report = timings.as_dict()
    report["cache_hit"] = timings.cache_hits > 0
    report["n_vertices"] = rig.n_vertices
    report["n_ribs"] = len(rig.ribs)
    report["n_keys"] = rig.n_keys
    report["reduction_ratio"] = rig.reduction_ratio
    click.echo(json.dumps(report, sort_keys=True))


@main.command()
@click.argument("rig_path", type=click.Path(exists=True))
@click.option("--edits", "edits_path", required=True, type=click.Path(exists=True),
              help="JSON file: list of edit commands")
@click.option("-o", "--output", "output_path", required=True, type=click.Path())
@click.option("--save-rig", "save_rig_path", default=None, type=click.Path(),
              help="also save the deformed rig")
def deform(rig_path, edits_path, output_path, save_rig_path):
    """Apply a JSON edit list to a rig and export the deformed mesh as OBJ."""
    from .deform import compose_edits, edit_from_json
    from .mesh_io import save_obj
    from .rig_store import load_rig, save_rig as save_rig_file

    rig = load_rig(rig_path)
    edits = [edit_from_json(e) for e in json.loads(Path(edits_path).read_text())]
    try:
        compose_edits(rig, edits)
    except FishboneError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    save_obj(output_path, rig.current_vertices, [p.faces for p in rig.parts.parts])
    if save_rig_path:
        save_rig_file(rig, save_rig_path)
    click.echo(json.dumps({"output": str(output_path), "edits_applied": len(edits),
                           "snapshot_hash": rig.pose_hash()}))


@main.command()
@click.argument("rig_path", type=click.Path(exists=True))
@click.option("--scenario", "scenario_path", default=None, type=click.Path(exists=True),
              help="JSON scenario: {config: {...}, schedule: {...}}")
@click.option("--frames", default=120, type=int)
@click.option("-o", "--output", "output_path", required=True, type=click.Path())
@click.option("--vertex-hash", is_flag=True, help="include a lifted-mesh digest per frame")
def simulate(rig_path, scenario_path, frames, output_path, vertex_hash):
    """Run reduced-space dynamics and write one JSON line per frame."""
    from .dynamics import ForceSchedule, SimConfig, lift, make_state, step
    from .rig_store import load_rig
    from .util import hash_arrays

    rig = load_rig(rig_path)
    scenario = json.loads(Path(scenario_path).read_text()) if scenario_path else {}
    cfg_fields = {k: v for k, v in scenario.get("config", {}).items()
                  if k in SimConfig.__dataclass_fields__}
    if "pins" in cfg_fields:
        cfg_fields["pins"] = tuple(cfg_fields["pins"])
    if "gravity" in cfg_fields:
        cfg_fields["gravity"] = tuple(cfg_fields["gravity"])
    config = SimConfig(**cfg_fields)
    schedule = ForceSchedule.from_json(scenario.get("schedule", {}))
    state = make_state(rig, config)
    with open(output_path, "w", encoding="utf-8") as fh:
        for i in range(frames):
            step(state, config, schedule, rig=rig)
            record = {
                "frame": i,
                "time": state.time,
                "key_positions": [[float(x) for x in row] for row in state.positions],
            }
            if vertex_hash:
                record["vertex_hash"] = hash_arrays(*lift(rig, state, config))[:16]
            fh.write(json.dumps(record, sort_keys=True) + "\n")
    click.echo(json.dumps({"frames": frames, "reduction_ratio": rig.reduction_ratio,
                           "output": str(output_path)}))


@main.command()
@click.argument("rig_path", type=click.Path(exists=True))
@click.option("--track", "track_path", required=True, type=click.Path(exists=True))
@click.option("--fps", default=30.0, type=float)
@click.option("-o", "--output", "output_path", required=True, type=click.Path(),
              help="JSON-lines output of sampled spine/mesh digests")
@click.option("--dump-obj", "obj_dir", default=None, type=click.Path(),
              help="also write one OBJ per sampled frame")
def animate(rig_path, track_path, fps, output_path, obj_dir):
    """Replay a keyframe track by linear interpolation."""
    from .animation import load_track, sample
    from .mesh_io import save_obj
    from .rig_store import load_rig
    from .util import hash_arrays

    rig = load_rig(rig_path)
    track = load_track(track_path)
    t_end = track.duration()
    n = max(int(np.floor(t_end * fps)) + 1, 1)
    with open(output_path, "w", encoding="utf-8") as fh:
        for i in range(n):
            t = i / fps
            kf = sample(track, t)
            rec = {"frame": i, "time": t,
                   "mesh_hash": hash_arrays(*kf.mesh_vertices)[:16],
                   "spine_hash": hash_arrays(kf.spine_points)[:16]}
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            if obj_dir:
                Path(obj_dir).mkdir(parents=True, exist_ok=True)
                save_obj(Path(obj_dir) / f"frame_{i:05d}.obj", kf.mesh_vertices,
                         [p.faces for p in rig.parts.parts])
    click.echo(json.dumps({"frames": n, "output": str(output_path)}))


@main.command()
@click.argument("rig_path", type=click.Path(exists=True))
@click.option("--sampler", "sampler_path", required=True, type=click.Path(exists=True))
@click.option("--count", default=10, type=int)
@click.option("-o", "--output", "out_dir", required=True, type=click.Path())
@click.option("--seed", default=0, type=int)
def augment(rig_path, sampler_path, count, out_dir, seed):
    """Generate deformed mesh variants with a seeded parameter sampler."""
    from .augment import generate_variants
    from .rig_store import load_rig

    rig = load_rig(rig_path)
    spec = json.loads(Path(sampler_path).read_text())
    try:
        manifest = generate_variants(rig, spec, count, out_dir, seed)
    except FishboneError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    click.echo(json.dumps({"count": manifest["count"], "seed": manifest["seed"],
                           "output": str(out_dir)}))


@main.command()
@click.option("--port", default=8711, type=int)
@click.option("--host", default="127.0.0.1")
@click.option("--rig-root", default=".", type=click.Path(exists=True),
              help="directory containing .fbr rigs")
def serve(port, host, rig_root):
    """Run the interactive session service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(rig_root), host=host, port=port, log_level="info")


@main.command("make-demo")
@click.argument("out_dir", type=click.Path())
@click.option("--shape", default="icosphere",
              type=click.Choice(["icosphere", "ytube", "cylinder", "sheet", "lyre"]))
def make_demo(out_dir, shape):
    """Write a procedural demo mesh as OBJ (fixture helper)."""
    from . import shapes
    from .mesh_io import save_obj

    gen = {
        "icosphere": lambda: shapes.icosphere(3),
        "ytube": shapes.y_tube,
        "cylinder": shapes.capped_cylinder,
        "sheet": lambda: shapes.grid_sheet(32, 32),
        "lyre": shapes.lyre_tube,
    }[shape]
    v, f = gen()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{shape}.obj"
    save_obj(path, [v], [f])
    click.echo(str(path))


if __name__ == "__main__":
    main()
