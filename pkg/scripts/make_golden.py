"""Regenerate the committed golden rig fixture (run from the repo root)."""

import json
from pathlib import Path

from fishbone import shapes
from fishbone.mesh_io import RawMesh
from fishbone.pipeline import ExtractConfig, extract_rig
from fishbone.rig_store import save_rig, load_rig
from fishbone.util import hash_arrays


def main():
    out = Path(__file__).resolve().parent.parent / "tests" / "golden"
    out.mkdir(parents=True, exist_ok=True)
    v, f = shapes.y_tube(radius=0.18, resolution=0.09)
    rig, _ = extract_rig(RawMesh(v, f),
                         ExtractConfig(use_cache=False, keep_largest_component=True))
    path = out / "ytube_small.fbr"
    save_rig(rig, path)
    loaded = load_rig(path)
    meta = {
        "pose_hash": loaded.pose_hash(),
        "weights_hash": hash_arrays(loaded.part_rigs[0].rib_weights.values),
        "file_size": path.stat().st_size,
        "n_ribs": len(loaded.ribs),
        "n_keys": loaded.n_keys,
    }
    (out / "ytube_small.json").write_text(json.dumps(meta, indent=2, sort_keys=True))
    print(json.dumps(meta, indent=2))


if __name__ == "__main__":
    main()
