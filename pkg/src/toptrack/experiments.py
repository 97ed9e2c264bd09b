"""The three comparison suites: single picker, navigation policy, multiple pickers.

Each suite is a list of rows. A row fixes a method and a navigation policy
on top of a shared base configuration; every row runs over the same seeds.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .sim import ExperimentConfig, build_map, load_config, rows_to_csv, simulate, summarize


@dataclass(frozen=True)
class SuiteRow:
    label: str
    method: str
    policy: str = "nbs"


@dataclass(frozen=True)
class Suite:
    name: str
    rows: tuple[SuiteRow, ...]
    overrides: dict = field(default_factory=dict)
    # (numerator label, denominator label) pairs reported as error ratios
    ratios: tuple[tuple[str, str], ...] = ()


SUITES: dict[str, Suite] = {
    "exp1-single": Suite(
        "exp1-single",
        (
            SuiteRow("Khan et al.-unconnected", "khan-unconnected"),
            SuiteRow("Khan et al.-connected", "khan-connected"),
            SuiteRow("LIDAR+GPS", "lidar+gps"),
            SuiteRow("RFID+GPS", "rfid+gps"),
            SuiteRow("RFID+LIDAR+GPS (ours)", "ours"),
        ),
        ratios=(
            ("Khan et al.-unconnected", "RFID+LIDAR+GPS (ours)"),
            ("Khan et al.-connected", "RFID+LIDAR+GPS (ours)"),
        ),
    ),
    "exp2-policy": Suite(
        "exp2-policy",
        (
            SuiteRow("EstimatedNode", "ours", "estimated-node"),
            SuiteRow("Next-Best-Sense", "ours", "nbs"),
        ),
        ratios=(("EstimatedNode", "Next-Best-Sense"),),
    ),
    "exp3-multi": Suite(
        "exp3-multi",
        (
            SuiteRow("RFID+LIDAR+GPS (ours)", "ours"),
            SuiteRow("NoMonitor", "no-monitor"),
            SuiteRow("ConstantSpeed", "constant-speed"),
        ),
        overrides={"pickers": {"count": 3}},
        ratios=(
            ("NoMonitor", "RFID+LIDAR+GPS (ours)"),
            ("ConstantSpeed", "RFID+LIDAR+GPS (ours)"),
        ),
    ),
}


def _merge(base: dict, extra: dict) -> dict:
    out = dict(base)
    for k, v in extra.items():
        out[k] = _merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def suite_config(name: str, base: dict | None = None, seeds=None) -> ExperimentConfig:
    """Base config for a suite. ``methods`` and ``policy`` are set per row."""
    suite = SUITES[name]
    doc = _merge(suite.overrides, base or {})
    if seeds is not None:
        doc["seeds"] = list(seeds)
    doc.pop("method", None)
    doc["methods"] = sorted({r.method for r in suite.rows})
    return load_config(doc)


def run_suite(name: str, base: dict | None = None, seeds=None, out_dir: str | Path | None = None) -> dict:
    """Run every row of a suite and return a JSON-ready result table."""
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; valid suites: {sorted(SUITES)}")
    suite = SUITES[name]
    cfg = suite_config(name, base, seeds)
    maps = build_map(cfg)
    table = []
    all_rows: list[dict] = []
    for row in suite.rows:
        cfg.policy = row.policy
        rows = []
        for seed in cfg.seeds:
            rows.extend(simulate(cfg, row.method, seed, maps))
        stats = summarize(rows, [row.method], cfg.seeds)["methods"][row.method]
        table.append(
            {
                "label": row.label,
                "method": row.method,
                "policy": row.policy,
                "runs": stats["runs"],
                "seeds": list(cfg.seeds),
                "samples": stats["samples"],
                "euclidean_mean": stats["euclidean_mean"],
                "euclidean_std": stats["euclidean_std"],
                "topological_mean": stats["topological_mean"],
                "topological_std": stats["topological_std"],
                "per_seed": stats["per_seed"],
            }
        )
        for r in rows:
            all_rows.append({**r, "method": row.label})
    by_label = {t["label"]: t for t in table}
    ratios = []
    for num, den in suite.ratios:
        a, b = by_label[num], by_label[den]
        ratios.append(
            {
                "numerator": num,
                "denominator": den,
                "topological": a["topological_mean"] / b["topological_mean"] if b["topological_mean"] else float("inf"),
                "euclidean": a["euclidean_mean"] / b["euclidean_mean"] if b["euclidean_mean"] else float("inf"),
            }
        )
    result = {
        "suite": name,
        "pickers": cfg.pickers.count,
        "duration": cfg.duration,
        "seeds": list(cfg.seeds),
        "rows": table,
        "ratios": ratios,
    }
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "suite.json").write_text(json.dumps(result, indent=2, sort_keys=True))
        (out / "suite.txt").write_text(format_table(result))
        (out / "metrics.csv").write_text(rows_to_csv(all_rows))
    return result


def format_table(result: dict) -> str:
    """Plain-text table with mean(std) of both errors per row."""
    head = f"{'method':<26} {'policy':<15} {'runs':>4}  {'euclidean [m]':>15}  {'topological [hops]':>18}"
    lines = [f"suite {result['suite']}  pickers={result['pickers']}  seeds={result['seeds']}", head, "-" * len(head)]
    for r in result["rows"]:
        eu = f"{r['euclidean_mean']:.2f}({r['euclidean_std']:.2f})"
        topo = f"{r['topological_mean']:.2f}({r['topological_std']:.2f})"
        lines.append(f"{r['label']:<26} {r['policy']:<15} {r['runs']:>4}  {eu:>15}  {topo:>18}")
    for q in result["ratios"]:
        lines.append(f"ratio {q['numerator']} / {q['denominator']}: topological {q['topological']:.2f}x, "
                     f"euclidean {q['euclidean']:.2f}x")
    return "\n".join(lines) + "\n"

