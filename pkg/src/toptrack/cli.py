"""Command-line entry point: ``toptrack generate-map | run | suite``.

Exit codes: 0 success, 1 configuration or IO error, 2 invariant violation
during a run.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

from .belief import FilterError
from .experiments import SUITES, format_table, run_suite, suite_config
from .sensors import ObservationError
from .sim import ConfigError, InvariantViolation, build_map, load_config, run_experiment
from .topology import MapError, PolytunnelLayout, dump_map, generate_polytunnels

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 1, 2

log = logging.getLogger("toptrack")


def content_hash(doc) -> str:
    """Git blob hash of the canonical JSON encoding of ``doc``."""
    data = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


@dataclass(frozen=True)
class RunManifest:
    config: dict
    seeds: list
    config_hash: str
    out_dir: str

    @classmethod
    def create(cls, config: dict, seeds, out_dir) -> "RunManifest":
        return cls(config, list(seeds), content_hash(config), str(out_dir))

    def write(self, path: Path) -> None:
        path.write_text(json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True))


def _layout_args(p: argparse.ArgumentParser) -> None:
    d = PolytunnelLayout()
    p.add_argument("--tunnels", type=int, default=d.tunnels)
    p.add_argument("--rows", type=int, default=d.rows)
    p.add_argument("--nodes-per-row", type=int, default=d.nodes_per_row)
    p.add_argument("--lane-length", type=float, default=d.lane_length)
    p.add_argument("--lane-spacing", type=float, default=d.lane_spacing)
    p.add_argument("--headland-offset", type=float, default=d.headland_offset)
    p.add_argument("--tunnel-gap", type=float, default=d.tunnel_gap)
    p.add_argument("--connector-nodes", type=int, default=d.connector_nodes)
    p.add_argument("--storage-nodes", type=int, default=d.storage_nodes)
    p.add_argument("--storage-spacing", type=float, default=d.storage_spacing)
    p.add_argument("--no-headlands", dest="headlands", action="store_false")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="toptrack", description="Topological people tracking simulator")
    parser.add_argument("--verbose", "-v", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate-map", help="write a polytunnel topological map as JSON")
    gen.add_argument("--out", required=True, help="output map file")
    _layout_args(gen)

    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("--config", help="JSON config; defaults are used when omitted")
    run.add_argument("--seed", type=int, action="append", help="override the seed list (repeatable)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--emit-map", action="store_true", help="also write the map used to map.json")

    suite = sub.add_parser("suite", help="run a comparison suite")
    suite.add_argument("--suite", required=True, choices=sorted(SUITES))
    suite.add_argument("--config", help="JSON overrides applied to the suite's base config")
    suite.add_argument("--seed", type=int, action="append", help="override the seed list (repeatable)")
    suite.add_argument("--out", help="output directory for suite.json, suite.txt and metrics.csv")
    suite.add_argument("--emit-map", action="store_true", help="also write the map used to map.json")
    suite.add_argument("--json", action="store_true", help="print JSON instead of the text table")
    return parser


def _read_doc(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    return doc


def _emit_map(cfg, out: Path) -> None:
    _, tmap = build_map(cfg)
    with open(out / "map.json", "w") as fp:
        dump_map(tmap, fp)


def cmd_generate_map(args) -> int:
    fields = {f.name for f in dataclasses.fields(PolytunnelLayout)}
    layout = PolytunnelLayout(**{k: v for k, v in vars(args).items() if k in fields})
    pmap = generate_polytunnels(layout)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w") as fp:
        dump_map(pmap.tmap, fp)
    print(f"wrote {pmap.tmap.num_nodes}-node map to {out}")
    return EXIT_OK


def cmd_run(args) -> int:
    doc = _read_doc(args.config)
    if args.seed:
        doc["seeds"] = args.seed
    cfg = load_config(doc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = RunManifest.create(cfg.to_document(), cfg.seeds, out)
    manifest.write(out / "manifest.json")
    if args.emit_map:
        _emit_map(cfg, out)
    art = run_experiment(cfg, out)
    for s in art.summary["methods"].values():
        print(f"{s['label']:<26} runs={s['runs']} euclidean={s['euclidean_mean']:.3f}({s['euclidean_std']:.3f}) "
              f"topological={s['topological_mean']:.3f}({s['topological_std']:.3f})")
    print(f"config hash {manifest.config_hash}; artifacts in {out}")
    return EXIT_OK


def cmd_suite(args) -> int:
    base = _read_doc(args.config)
    cfg = suite_config(args.suite, base, args.seed)
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        RunManifest.create({"suite": args.suite, "config": cfg.to_document()}, cfg.seeds, out).write(
            out / "manifest.json"
        )
        if args.emit_map:
            _emit_map(cfg, out)
    result = run_suite(args.suite, base, args.seed, out)
    if args.json:
        print(json.dumps(result, indent=2, sort_keys=True))
    else:
        print(format_table(result), end="")
    return EXIT_OK


COMMANDS = {"generate-map": cmd_generate_map, "run": cmd_run, "suite": cmd_suite}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (InvariantViolation, FilterError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ConfigError, MapError, ObservationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
