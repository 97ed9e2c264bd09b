"""How the EstimatedNode / Next-Best-Sense error ratio moves with sensor and speed settings.

Each variant overrides the default configuration; both policies share seeds.
"""

import argparse
import json

import numpy as np

from toptrack.sim import build_map, load_config, simulate

VARIANTS = {
    "default": {},
    "lidar 5 m": {"robot": {"lidar_range": 5.0}},
    "rfid 3 m": {"robot": {"rfid_range": 3.0}, "planner": {"rfid_range": 3.0}},
    "lidar 6 m, rfid 3 m": {"robot": {"lidar_range": 6.0, "rfid_range": 3.0}},
    "occluded lidar, rfid 3 m": {"robot": {"lidar_occlusion": True, "rfid_range": 3.0}},
    "picker 1.2 m/s": {"pickers": {"speed": 1.2}},
    "robot 0.6 m/s": {"robot": {"speed": 0.6}},
    "linear rfid reads": {"robot": {"rfid_read_model": "linear"}},
}


def mean_topo(doc, policy, seeds):
    cfg = load_config({**doc, "policy": policy, "methods": ["ours"], "seeds": seeds})
    maps = build_map(cfg)
    return float(np.mean([np.mean([r["topo_err_hops"] for r in simulate(cfg, "ours", s, maps)]) for s in seeds]))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=6)
    ap.add_argument("--variant", action="append", choices=sorted(VARIANTS))
    ap.add_argument("--json", action="store_true")
    args = ap.parse_args()

    seeds = list(range(args.seeds))
    out = {}
    for name in args.variant or list(VARIANTS):
        nbs = mean_topo(VARIANTS[name], "nbs", seeds)
        en = mean_topo(VARIANTS[name], "estimated-node", seeds)
        out[name] = {"nbs": nbs, "estimated_node": en, "ratio": en / nbs}
        if not args.json:
            print(f"{name:<26} NBS {nbs:5.2f}  EN {en:5.2f}  ratio {en / nbs:.2f}", flush=True)
    if args.json:
        print(json.dumps(out, indent=2))


if __name__ == "__main__":
    main()
