"""Next-Best-Sense: pick the robot's next sensing pose with a Choquet integral.

Four criteria are scored per candidate node (travel distance, sensing
time, RFID coverage of the belief, battery) and aggregated with a fuzzy
measure over criterion subsets.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .topology import TopologicalMap

CRITERIA = ("TD", "ST", "RFID", "BS")


class MeasureError(ValueError):
    pass


class FuzzyMeasure:
    """Set function over subsets of ``CRITERIA``.

    Stored as a dict keyed by frozenset. Missing subsets are not allowed:
    use :meth:`additive` to build the measure from singleton weights.
    """

    def __init__(self, values: Mapping[frozenset, float], tol: float = 1e-9):
        self.values = {frozenset(k): float(v) for k, v in values.items()}
        self.tol = tol
        self._check()

    @classmethod
    def additive(cls, weights: Mapping[str, float]) -> "FuzzyMeasure":
        total = sum(weights.values())
        if abs(total - 1.0) > 1e-9:
            raise MeasureError(f"singleton weights must sum to 1, got {total}")
        vals = {}
        for r in range(len(CRITERIA) + 1):
            for subset in itertools.combinations(CRITERIA, r):
                vals[frozenset(subset)] = sum(weights[c] for c in subset)
        return cls(vals)

    @classmethod
    def from_document(cls, doc: Mapping) -> "FuzzyMeasure":
        """Either ``{"TD": 0.3, ...}`` singleton weights or
        ``{"subsets": [{"criteria": [...], "value": x}, ...]}``."""
        if "subsets" in doc:
            return cls({frozenset(e["criteria"]): e["value"] for e in doc["subsets"]})
        return cls.additive({c: float(doc[c]) for c in CRITERIA})

    def _check(self) -> None:
        for r in range(len(CRITERIA) + 1):
            for subset in itertools.combinations(CRITERIA, r):
                if frozenset(subset) not in self.values:
                    raise MeasureError(f"measure is missing subset {set(subset) or '{}'}")
        if abs(self.values[frozenset()]) > self.tol:
            raise MeasureError("measure of the empty set must be 0")
        if abs(self.values[frozenset(CRITERIA)] - 1.0) > self.tol:
            raise MeasureError("measure of the full criteria set must be 1")
        for a, va in self.values.items():
            for c in CRITERIA:
                if c not in a and self.values[a | {c}] < va - self.tol:
                    raise MeasureError(f"measure is not monotone at {sorted(a)} + {c}")

    def __call__(self, subset) -> float:
        return self.values[frozenset(subset)]

    def as_array(self) -> np.ndarray:
        """Measure indexed by bitmask, bit i set when ``CRITERIA[i]`` is in the subset."""
        out = np.zeros(1 << len(CRITERIA))
        for subset, v in self.values.items():
            out[sum(1 << CRITERIA.index(c) for c in subset)] = v
        return out


TABLE_WEIGHTS = {"TD": 0.3, "ST": 0.1, "RFID": 0.35, "BS": 0.25}


def choquet(utilities: Mapping[str, float], measure: FuzzyMeasure) -> float:
    """Discrete Choquet integral of per-criterion utilities in [0, 1]."""
    order = sorted(CRITERIA, key=lambda c: (utilities[c], CRITERIA.index(c)))
    score = 0.0
    prev = 0.0
    for j, c in enumerate(order):
        u = utilities[c]
        if not 0.0 <= u <= 1.0:
            raise ValueError(f"utility {c}={u} outside [0, 1]")
        score += (u - prev) * measure(order[j:])
        prev = u
    return score


def choquet_batch(utilities: np.ndarray, measure: FuzzyMeasure) -> np.ndarray:
    """Choquet scores for an (n, 4) utility matrix with columns in ``CRITERIA`` order."""
    u = np.asarray(utilities, dtype=float)
    order = np.argsort(u, axis=1, kind="stable")
    u_sorted = np.take_along_axis(u, order, axis=1)
    bits = (1 << order)[:, ::-1].cumsum(axis=1)[:, ::-1]
    eta = measure.as_array()[bits]
    steps = np.diff(u_sorted, axis=1, prepend=0.0)
    return np.sum(steps * eta, axis=1)


@dataclass
class PlannerConfig:
    weights: dict[str, float] = field(default_factory=lambda: dict(TABLE_WEIGHTS))
    measure: dict | None = None
    rfid_range: float = 5.0
    sensing_time: float = 2.0
    sensing_time_max: float = 4.0
    # Battery drain in percent per metre travelled and per second of sensing.
    drain_per_meter: float = 0.1
    drain_per_second: float = 0.0
    replan_period: float = 10.0

    def build_measure(self) -> FuzzyMeasure:
        if self.measure is not None:
            return FuzzyMeasure.from_document(self.measure)
        return FuzzyMeasure.additive(self.weights)


@dataclass(frozen=True)
class WorldSnapshot:
    robot_node: int
    battery: float
    belief_mass: np.ndarray  # summed node distributions of all tracked filters


@dataclass(frozen=True)
class SensingPose:
    node: int
    theta: float
    utilities: dict
    score: float
    travel: float


def criterion_utilities(
    tmap: TopologicalMap, node: int, snap: WorldSnapshot, cfg: PlannerConfig, sensing_time=None
) -> dict[str, float]:
    path = tmap.path_length[snap.robot_node]
    if not np.isfinite(path[node]):
        raise ValueError(f"node {node} is unreachable from {snap.robot_node}")
    max_path = float(np.max(path[np.isfinite(path)]))
    travel = float(path[node])
    td = 1.0 - travel / max_path if max_path > 0 else 1.0
    t_sense = cfg.sensing_time if sensing_time is None else sensing_time
    st = 1.0 - t_sense / cfg.sensing_time_max
    mass = np.asarray(snap.belief_mass, dtype=float)
    total = mass.sum()
    in_range = tmap.node_distance[node] <= cfg.rfid_range
    rfid = float(mass[in_range].sum() / total) if total > 0 else 0.0
    battery = snap.battery - cfg.drain_per_meter * travel - cfg.drain_per_second * t_sense
    bs = min(max(battery / 100.0, 0.0), 1.0)
    return {
        "TD": min(max(td, 0.0), 1.0),
        "ST": min(max(st, 0.0), 1.0),
        "RFID": min(max(rfid, 0.0), 1.0),
        "BS": bs,
    }


def _heading(tmap: TopologicalMap, path: Sequence[int]) -> float:
    if len(path) < 2:
        return 0.0
    dx, dy = tmap.coords[path[-1]] - tmap.coords[path[-2]]
    return math.atan2(dy, dx)


def utility_matrix(tmap: TopologicalMap, candidates, snap: WorldSnapshot, cfg: PlannerConfig) -> np.ndarray:
    """Same utilities as :func:`criterion_utilities`, for many candidates at once."""
    cand = np.asarray(candidates, dtype=np.int64)
    path = tmap.path_length[snap.robot_node]
    travel = path[cand]
    if not np.all(np.isfinite(travel)):
        raise ValueError("unreachable candidate pose")
    max_path = float(np.max(path[np.isfinite(path)]))
    td = 1.0 - travel / max_path if max_path > 0 else np.ones(len(cand))
    st = np.full(len(cand), 1.0 - cfg.sensing_time / cfg.sensing_time_max)
    mass = np.asarray(snap.belief_mass, dtype=float)
    total = mass.sum()
    in_range = tmap.node_distance[cand] <= cfg.rfid_range
    rfid = (in_range @ mass) / total if total > 0 else np.zeros(len(cand))
    bs = (snap.battery - cfg.drain_per_meter * travel - cfg.drain_per_second * cfg.sensing_time) / 100.0
    return np.clip(np.column_stack([td, st, rfid, bs]), 0.0, 1.0)


def score_candidates(
    tmap: TopologicalMap, candidates: Sequence[int], snap: WorldSnapshot, measure: FuzzyMeasure, cfg: PlannerConfig
) -> list[SensingPose]:
    u = utility_matrix(tmap, candidates, snap, cfg)
    scores = choquet_batch(u, measure)
    return [
        SensingPose(
            int(node),
            _heading(tmap, tmap.shortest_path(snap.robot_node, int(node))),
            dict(zip(CRITERIA, map(float, row))),
            float(score),
            float(tmap.path_length[snap.robot_node, node]),
        )
        for node, row, score in zip(candidates, u, scores)
    ]


def select_next_pose(
    tmap: TopologicalMap,
    candidates: Sequence[int],
    snap: WorldSnapshot,
    measure: FuzzyMeasure,
    cfg: PlannerConfig | None = None,
) -> SensingPose:
    """Highest Choquet score; ties go to the shorter trip, then the lower node id."""
    cand = np.asarray(list(candidates), dtype=np.int64)
    if cand.size == 0:
        raise ValueError("no candidate poses")
    cfg = cfg or PlannerConfig()
    u = utility_matrix(tmap, cand, snap, cfg)
    scores = choquet_batch(u, measure)
    travel = tmap.path_length[snap.robot_node, cand]
    best = np.lexsort((cand, travel, -scores))[0]
    node = int(cand[best])
    theta = _heading(tmap, tmap.shortest_path(snap.robot_node, node))
    return SensingPose(node, theta, dict(zip(CRITERIA, map(float, u[best]))), float(scores[best]), float(travel[best]))


def estimated_node_policy(filters) -> int:
    """Node estimate of the most confident initialised filter.

    Confidence is the largest share of particles on a single node.
    """
    best, best_conf = None, -1.0
    for f in filters:
        if not f.initialized or f.estimate is None:
            continue
        conf = float(np.max(f.node_distribution()))
        if conf > best_conf:
            best, best_conf = f.estimate, conf
    if best is None:
        raise ValueError("no initialised filter to follow")
    return int(best)
