"""Discrete-time polytunnel world: pickers, a robot, noisy sensors and metrics.

One call to :func:`simulate` runs one (method, seed) pair and returns the
per-second metric rows. :func:`run_experiment` loops over methods and
seeds, writes ``metrics.csv`` / ``summary.json`` and returns both.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .belief import BeliefFilter, FilterConfig, FilterError
from .planner import PlannerConfig, WorldSnapshot, estimated_node_policy, select_next_pose
from .sensors import SensorConfig, SensorFrontend
from .topology import PolytunnelLayout, PolytunnelMap, TopologicalMap, generate_polytunnels, segment_blocked

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "seed", "t", "picker_id", "method", "euclidean_err_m", "topo_err_hops", "estimate_node", "jsd", "entropy", "pr_j",
)


class ConfigError(ValueError):
    pass


class InvariantViolation(RuntimeError):
    pass


# -- configuration -----------------------------------------------------------


@dataclass
class GpsNoiseConfig:
    offset_low: float = 0.0
    offset_high: float = 3.5
    white_var: float = 0.1
    drift_var: float = 2.5
    # Correlation time of the drift process (seconds).
    drift_tau: float = 60.0
    blackout_min: float = 30.0
    blackout_max: float = 60.0
    # Mean gap between the end of one blackout and the start of the next.
    blackout_gap_mean: float = 300.0
    enabled: bool = True


@dataclass
class PickerConfig:
    count: int = 1
    speed: float = 0.8
    # Per-picker speeds are drawn from U(speed*(1-j), speed*(1+j)).
    speed_jitter: float = 0.0
    speeds: list[float] | None = None
    p_reverse: float = 0.1
    t_reverse: float = 60.0
    reverse_check_period: float = 1.0


@dataclass
class RobotConfig:
    speed: float = 1.0
    start_node: int | None = None
    battery: float = 100.0
    drain_per_meter: float = 0.1
    lidar_range: float = 10.0
    lidar_noise_std: float = 0.1
    lidar_false_positive_rate: float = 0.05
    lidar_detect_prob: float = 1.0
    # Raised beds block the laser; only applies to generated polytunnel maps.
    lidar_occlusion: bool = False
    rfid_range: float = 5.0
    rfid_read_prob: float = 1.0
    # "linear": read chance falls as 1 - d/R, the same shape the filter assumes;
    # "constant": every tag in range is read with rfid_read_prob.
    rfid_read_model: str = "constant"


@dataclass
class ExperimentConfig:
    methods: list[str] = field(default_factory=lambda: ["ours"])
    policy: str = "nbs"
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    duration: float = 600.0
    dt: float = 0.25
    sensor_period: float = 1.0
    metrics_period: float = 1.0
    sensors: list[str] | None = None
    map_path: str | None = None
    layout: PolytunnelLayout = field(default_factory=PolytunnelLayout)
    filter: FilterConfig = field(default_factory=FilterConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    gps: GpsNoiseConfig = field(default_factory=GpsNoiseConfig)
    pickers: PickerConfig = field(default_factory=PickerConfig)
    robot: RobotConfig = field(default_factory=RobotConfig)

    def validate(self) -> None:
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigError(f"unknown method(s) {unknown}; valid methods: {sorted(METHODS)}")
        if not self.methods:
            raise ConfigError("at least one method is required")
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}; valid: {sorted(POLICIES)}")
        if self.sensors is not None and not set(self.sensors) <= {"GPS", "LIDAR", "RFID"}:
            raise ConfigError(f"unknown sensors in {self.sensors}")
        if self.duration < 0:
            raise ConfigError("duration must be >= 0")
        for name in ("dt", "sensor_period", "metrics_period"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        for name in ("sensor_period", "metrics_period"):
            ratio = getattr(self, name) / self.dt
            if abs(ratio - round(ratio)) > 1e-9:
                raise ConfigError(f"{name} must be a multiple of dt")
        if self.pickers.count < 1:
            raise ConfigError("need at least one picker")
        if self.pickers.speeds is not None and len(self.pickers.speeds) != self.pickers.count:
            raise ConfigError("pickers.speeds must list one speed per picker")
        if self.robot.rfid_read_model not in ("linear", "constant"):
            raise ConfigError(f"unknown rfid_read_model {self.robot.rfid_read_model!r}")
        if not 0 <= self.pickers.p_reverse <= 1:
            raise ConfigError("p_reverse must lie in [0, 1]")
        if self.gps.offset_low > self.gps.offset_high or self.gps.blackout_min > self.gps.blackout_max:
            raise ConfigError("GPS noise bounds are inverted")
        try:
            self.filter.validate()
            self.planner.build_measure()
            self.layout.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_document(self) -> dict:
        return dataclasses.asdict(self)


def _build(cls, doc: dict[str, Any] | None, path: str = ""):
    """Instantiate a (nested) config dataclass from a dict, rejecting unknown keys."""
    doc = doc or {}
    if not isinstance(doc, dict):
        raise ConfigError(f"{path or 'config'} must be an object")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    extra = set(doc) - set(fields)
    if extra:
        raise ConfigError(f"unknown key(s) {sorted(extra)} in {path or 'config'}")
    kwargs = {}
    for name, value in doc.items():
        default = getattr(cls(), name) if name in fields else None
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), value, f"{path}.{name}".strip("."))
        elif isinstance(default, dict) and isinstance(value, dict):
            kwargs[name] = {**default, **value}
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(doc: dict | str | Path) -> ExperimentConfig:
    if isinstance(doc, (str, Path)):
        try:
            doc = json.loads(Path(doc).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    doc = dict(doc)
    if "method" in doc:
        doc["methods"] = [doc.pop("method")]
    cfg = _build(ExperimentConfig, doc)
    cfg.methods = [METHOD_ALIASES.get(m, m) for m in cfg.methods]
    cfg.validate()
    return cfg


# -- methods -------------------------------------------------------------------


@dataclass(frozen=True)
class MethodSpec:
    label: str
    sensors: frozenset
    filter_overrides: dict
    uses_robot: bool = True


METHODS: dict[str, MethodSpec] = {
    "khan-unconnected": MethodSpec(
        "Khan et al.-unconnected",
        frozenset({"GPS"}),
        {"motion_model": "fixed_rate", "monitor": False, "pr_jump_initial": 1e-3},
        uses_robot=False,
    ),
    "khan-connected": MethodSpec(
        "Khan et al.-connected",
        frozenset({"GPS"}),
        {"motion_model": "fixed_rate", "monitor": False, "pr_jump_initial": 0.0},
        uses_robot=False,
    ),
    "lidar+gps": MethodSpec("LIDAR+GPS", frozenset({"GPS", "LIDAR"}), {}),
    "rfid+gps": MethodSpec("RFID+GPS", frozenset({"GPS", "RFID"}), {}),
    "ours": MethodSpec("RFID+LIDAR+GPS (ours)", frozenset({"GPS", "LIDAR", "RFID"}), {}),
    "no-monitor": MethodSpec("NoMonitor", frozenset({"GPS", "LIDAR", "RFID"}), {"monitor": False}),
    "constant-speed": MethodSpec(
        "ConstantSpeed", frozenset({"GPS", "LIDAR", "RFID"}), {"motion_model": "constant_speed"}
    ),
}
METHOD_ALIASES = {"rfid+lidar+gps": "ours", "nomonitor": "no-monitor", "constantspeed": "constant-speed"}
POLICIES = ("nbs", "estimated-node", "static")


# -- world agents ----------------------------------------------------------------


class GpsNoiseModel:
    """Per-picker GNSS error: constant offset + drift + white noise + blackouts.

    The drift is an Ornstein-Uhlenbeck process per axis whose stationary
    variance is ``drift_var``; it starts from its stationary distribution.
    """

    def __init__(self, cfg: GpsNoiseConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.offset = rng.uniform(cfg.offset_low, cfg.offset_high, size=2)
        self.drift = rng.normal(0.0, math.sqrt(cfg.drift_var), size=2)
        self.t = 0.0
        self.blackouts: list[tuple[float, float]] = []
        self._next_onset = rng.exponential(cfg.blackout_gap_mean) if cfg.blackout_gap_mean > 0 else math.inf

    def _schedule_until(self, t: float) -> None:
        while self._next_onset <= t:
            dur = self.rng.uniform(self.cfg.blackout_min, self.cfg.blackout_max)
            self.blackouts.append((self._next_onset, self._next_onset + dur))
            self._next_onset += dur + self.rng.exponential(self.cfg.blackout_gap_mean)

    def in_blackout(self, t: float) -> bool:
        self._schedule_until(t)
        return any(a <= t < b for a, b in self.blackouts[-2:])

    def advance(self, t: float) -> None:
        dt = t - self.t
        if dt <= 0:
            return
        a = math.exp(-dt / self.cfg.drift_tau)
        self.drift = a * self.drift + math.sqrt(self.cfg.drift_var * (1 - a * a)) * self.rng.normal(size=2)
        self.t = t

    def fix(self, true_pose, t: float) -> np.ndarray | None:
        """Noisy fix at time t, or None during a blackout."""
        self.advance(t)
        white = self.rng.normal(0.0, math.sqrt(self.cfg.white_var), size=2)
        if not self.cfg.enabled:
            return np.asarray(true_pose, dtype=float).copy()
        if self.in_blackout(t):
            return None
        return np.asarray(true_pose, dtype=float) + self.offset + self.drift + white


def serpentine_route(pmap: PolytunnelMap, tunnel: int) -> list[int]:
    """Closed node loop through a tunnel's lanes: 0, 1, ..., R-1, R-2, ..., 1.

    Lanes alternate direction, and the picker changes lane through the
    headland nodes at the end it arrived at.
    """
    lanes = pmap.lanes[tunnel]
    rows = len(lanes)
    order = list(range(rows)) + list(range(rows - 2, 0, -1))
    route: list[int] = []
    for i, r in enumerate(order):
        left_to_right = i % 2 == 0
        lane = lanes[r] if left_to_right else lanes[r][::-1]
        if pmap.layout.headlands:
            entry = pmap.left_headland[tunnel][r] if left_to_right else pmap.right_headland[tunnel][r]
            exit_ = pmap.right_headland[tunnel][r] if left_to_right else pmap.left_headland[tunnel][r]
            route += [entry] + lane + [exit_]
        else:
            route += lane
    return route


class PickerAgent:
    """A picker walking a closed route at constant speed with random reversals."""

    def __init__(self, pid: int, points: np.ndarray, speed: float, cfg: PickerConfig, rng, start: float = 0.0):
        self.id = pid
        self.points = np.asarray(points, dtype=float)
        seg = np.diff(np.vstack([self.points, self.points[:1]]), axis=0)
        self.seg_len = np.hypot(seg[:, 0], seg[:, 1])
        self.cum = np.concatenate([[0.0], np.cumsum(self.seg_len)])
        self.length = float(self.cum[-1])
        self.s = start % self.length if self.length > 0 else 0.0
        self.speed = speed
        self.cfg = cfg
        self.rng = rng
        self.reverse_timer = 0.0
        self._decision_clock = 0.0
        self.reversals = 0
        self.decisions = 0

    @property
    def direction(self) -> int:
        return -1 if self.reverse_timer > 0 else 1

    @property
    def position(self) -> np.ndarray:
        i = int(np.searchsorted(self.cum, self.s, side="right") - 1)
        i = min(max(i, 0), len(self.points) - 1)
        frac = (self.s - self.cum[i]) / self.seg_len[i] if self.seg_len[i] > 0 else 0.0
        nxt = self.points[(i + 1) % len(self.points)]
        return self.points[i] + frac * (nxt - self.points[i])

    def step(self, dt: float) -> None:
        if dt <= 0:
            raise ValueError("dt must be positive")
        self._decision_clock += dt
        while self._decision_clock >= self.cfg.reverse_check_period - 1e-12:
            self._decision_clock -= self.cfg.reverse_check_period
            if self.reverse_timer <= 0:
                self.decisions += 1
                if self.rng.random() < self.cfg.p_reverse:
                    self.reverse_timer = self.cfg.t_reverse
                    self.reversals += 1
        self.s = (self.s + self.direction * self.speed * dt) % self.length
        self.reverse_timer = max(0.0, self.reverse_timer - dt)


class RobotAgent:
    """Moves along graph edges at constant speed, draining the battery."""

    def __init__(self, tmap: TopologicalMap, node: int, cfg: RobotConfig):
        self.tmap = tmap
        self.cfg = cfg
        self.node = node
        self.goal = node
        self.path: list[int] = []
        self.position = tmap.coords[node].copy()
        self.battery = cfg.battery
        self.odometer = 0.0

    @property
    def planning_node(self) -> int:
        """Node the robot will reach next (its current node when idle)."""
        return self.path[0] if self.path else self.node

    @property
    def idle(self) -> bool:
        return not self.path

    def set_goal(self, goal: int) -> None:
        start = self.planning_node
        route = self.tmap.shortest_path(start, goal)
        self.path = ([start] if self.path else []) + route[1:]
        if self.path and np.allclose(self.tmap.coords[self.path[0]], self.position):
            self.node = self.path.pop(0)
        self.goal = goal

    def step(self, dt: float) -> None:
        budget = self.cfg.speed * dt
        moved = 0.0
        while budget > 1e-12 and self.path:
            target = self.tmap.coords[self.path[0]]
            vec = target - self.position
            dist = float(np.hypot(*vec))
            if dist <= budget:
                self.position = target.copy()
                self.node = self.path.pop(0)
                budget -= dist
                moved += dist
            else:
                self.position = self.position + vec / dist * budget
                moved += budget
                budget = 0.0
        self.odometer += moved
        self.battery = max(0.0, self.battery - self.cfg.drain_per_meter * moved)


# -- metrics ------------------------------------------------------------------------


@dataclass(frozen=True)
class MetricsRecord:
    t: float
    picker_id: int
    method: str
    euclidean_err_m: float
    topo_err_hops: int
    estimate_node: int
    seed: int = 0


def compute_metrics(tmap: TopologicalMap, true_pose, estimate: int) -> tuple[float, int]:
    """Euclidean error to the estimated node and hop count to the picker's nearest node."""
    eu = float(np.hypot(*(tmap.coords[estimate] - np.asarray(true_pose, dtype=float))))
    topo = tmap.shortest_path_hops(estimate, tmap.closest_node(true_pose))
    return eu, topo


# -- world -----------------------------------------------------------------------------


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *key]))


STREAM_PICKER, STREAM_GPS, STREAM_ROBOT, STREAM_FILTER, STREAM_SETUP = range(5)


class World:
    """Everything that evolves during one run."""

    def __init__(self, cfg: ExperimentConfig, pmap: PolytunnelMap | None, tmap: TopologicalMap, method: str, seed: int):
        self.cfg = cfg
        self.tmap = tmap
        self.method = method
        self.spec = METHODS[method]
        self.seed = seed
        self.sensors = set(cfg.sensors) if cfg.sensors is not None else set(self.spec.sensors)
        self.frontend = SensorFrontend(tmap, cfg.sensor)
        self.sensor_rng = _stream(seed, STREAM_ROBOT)
        setup = _stream(seed, STREAM_SETUP)

        pcfg = cfg.pickers
        self.pickers: list[PickerAgent] = []
        self.gps: list[GpsNoiseModel] = []
        for i in range(pcfg.count):
            if pmap is not None:
                route = serpentine_route(pmap, i % len(pmap.lanes))
            else:
                route = list(range(tmap.num_nodes))
            points = tmap.coords[route]
            if pcfg.speeds is not None:
                speed = pcfg.speeds[i]
            else:
                speed = pcfg.speed * (1 + pcfg.speed_jitter * setup.uniform(-1, 1))
            picker = PickerAgent(i, points, speed, pcfg, _stream(seed, STREAM_PICKER, i), 0.0)
            picker.s = setup.uniform(0, picker.length)
            self.pickers.append(picker)
            self.gps.append(GpsNoiseModel(cfg.gps, _stream(seed, STREAM_GPS, i)))

        fcfg = dataclasses.replace(cfg.filter, **self.spec.filter_overrides)
        fcfg.validate()
        self.filters = [BeliefFilter(tmap, fcfg, _stream(seed, STREAM_FILTER, i)) for i in range(pcfg.count)]

        start = cfg.robot.start_node
        if start is None:
            start = pmap.storage[0] if pmap is not None and pmap.storage else 0
        self.robot = RobotAgent(tmap, start, cfg.robot)
        self.occluders = pmap.bed_rectangles() if (pmap is not None and cfg.robot.lidar_occlusion) else np.zeros((0, 4))
        self.policy = cfg.policy if self.spec.uses_robot else "static"
        self.measure = cfg.planner.build_measure()
        self._last_plan = -math.inf
        self._travelling = False
        self.t = 0.0

    # sensor events ---------------------------------------------------------

    def emit_sensor_events(self, t: float) -> list[tuple[int | None, Any]]:
        """Observations due at time t as (filter index or None for broadcast, obs)."""
        events = []
        rc = self.cfg.robot
        if "GPS" in self.sensors:
            for p, noise in zip(self.pickers, self.gps):
                fix = noise.fix(p.position, t)
                if fix is not None:
                    events.append((p.id, self.frontend.gps(p.id, fix, t)))
        if "LIDAR" in self.sensors:
            for p in self.pickers:
                if np.hypot(*(p.position - self.robot.position)) <= rc.lidar_range:
                    if segment_blocked(self.robot.position, p.position, self.occluders):
                        continue
                    if self.sensor_rng.random() < rc.lidar_detect_prob:
                        det = p.position + self.sensor_rng.normal(0, rc.lidar_noise_std, size=2)
                        events.append((None, self.frontend.lidar(det, t)))
            n_fp = self.sensor_rng.poisson(rc.lidar_false_positive_rate * self.cfg.sensor_period)
            for _ in range(n_fp):
                r = rc.lidar_range * math.sqrt(self.sensor_rng.random())
                a = self.sensor_rng.uniform(0, 2 * math.pi)
                det = self.robot.position + r * np.array([math.cos(a), math.sin(a)])
                events.append((None, self.frontend.lidar(det, t)))
        if "RFID" in self.sensors:
            for p in self.pickers:
                d = float(np.hypot(*(p.position - self.robot.position)))
                if d <= rc.rfid_range:
                    chance = rc.rfid_read_prob
                    if rc.rfid_read_model == "linear":
                        chance *= 1.0 - d / rc.rfid_range
                    if self.sensor_rng.random() < chance:
                        try:
                            events.append((p.id, self.frontend.rfid(self.robot.position, p.id, t)))
                        except ValueError:
                            pass
        return events

    def deliver(self, events) -> None:
        for target, obs in events:
            targets = range(len(self.filters)) if target is None else [target]
            for i in targets:
                f = self.filters[i]
                n = f.particle_count
                f.update(obs)
                if f.particle_count != n:
                    raise InvariantViolation("particle count changed")

    def predict_idle(self, t: float) -> None:
        period = 1.0 / self.cfg.filter.prediction_rate
        for f in self.filters:
            if f.initialized and t - f.ts >= period - 1e-9:
                f.predict_only(t)

    # robot -----------------------------------------------------------------

    def plan(self, t: float) -> None:
        if self.policy == "static":
            return
        arrived = self._travelling and self.robot.idle
        due = arrived or t - self._last_plan >= self.cfg.planner.replan_period - 1e-9
        if not due or not any(f.initialized for f in self.filters):
            return
        self._last_plan = t
        if self.policy == "estimated-node":
            goal = estimated_node_policy(self.filters)
        else:
            mass = sum(f.node_distribution() for f in self.filters if f.initialized)
            snap = WorldSnapshot(self.robot.planning_node, self.robot.battery, mass)
            pose = select_next_pose(self.tmap, range(self.tmap.num_nodes), snap, self.measure, self.cfg.planner)
            goal = pose.node
        if goal != self.robot.goal or self.robot.idle:
            self.robot.set_goal(goal)
        self._travelling = not self.robot.idle

    # main loop ---------------------------------------------------------------

    def run(self):
        cfg = self.cfg
        n_ticks = int(round(cfg.duration / cfg.dt))
        sensor_every = int(round(cfg.sensor_period / cfg.dt))
        metrics_every = int(round(cfg.metrics_period / cfg.dt))
        battery = self.robot.battery
        for k in range(n_ticks + 1):
            t = k * cfg.dt
            if k > 0:
                for p in self.pickers:
                    p.step(cfg.dt)
                self.robot.step(cfg.dt)
                if self.robot.battery > battery + 1e-12:
                    raise InvariantViolation("battery increased")
                battery = self.robot.battery
            if k % sensor_every == 0:
                self.deliver(self.emit_sensor_events(t))
            self.predict_idle(t)
            self.plan(t)
            if k % metrics_every == 0 and k > 0:
                yield from self.metrics_rows(t)
        self.t = n_ticks * cfg.dt

    def metrics_rows(self, t: float):
        for p, f in zip(self.pickers, self.filters):
            if f.estimate is None:
                continue
            eu, topo = compute_metrics(self.tmap, p.position, f.estimate)
            if eu < 0 or topo < 0:
                raise InvariantViolation("negative error")
            diag = f.last_diagnostics
            yield {
                "seed": self.seed,
                "t": round(t, 6),
                "picker_id": p.id,
                "method": self.method,
                "euclidean_err_m": eu,
                "topo_err_hops": topo,
                "estimate_node": f.estimate,
                "jsd": diag.jsd if diag else float("nan"),
                "entropy": diag.entropy if diag else float("nan"),
                "pr_j": f.pr_jump,
            }


def build_map(cfg: ExperimentConfig) -> tuple[PolytunnelMap | None, TopologicalMap]:
    if cfg.map_path:
        from .topology import load_map

        with open(cfg.map_path, "rb") as fh:
            tmap = load_map(fh)
        return None, tmap
    pmap = generate_polytunnels(cfg.layout)
    return pmap, pmap.tmap


def simulate(cfg: ExperimentConfig, method: str, seed: int, maps=None) -> list[dict]:
    pmap, tmap = maps if maps is not None else build_map(cfg)
    world = World(cfg, pmap, tmap, method, seed)
    try:
        return list(world.run())
    except FilterError as exc:
        raise InvariantViolation(str(exc)) from exc


# -- experiment -------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def rows_to_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow(
            [
                r["seed"], _fmt(r["t"]), r["picker_id"], r["method"], _fmt(r["euclidean_err_m"]),
                r["topo_err_hops"], r["estimate_node"], _fmt(r["jsd"]), _fmt(r["entropy"]), _fmt(r["pr_j"]),
            ]
        )
    return buf.getvalue()


def summarize(rows: list[dict], methods: list[str], seeds: list[int]) -> dict:
    out: dict[str, Any] = {"methods": {}, "seeds": list(seeds)}
    for m in methods:
        mr = [r for r in rows if r["method"] == m]
        eu = np.array([r["euclidean_err_m"] for r in mr], dtype=float)
        topo = np.array([r["topo_err_hops"] for r in mr], dtype=float)
        per_seed = {}
        for s in seeds:
            sr = [r for r in mr if r["seed"] == s]
            if sr:
                per_seed[str(s)] = {
                    "euclidean_mean": float(np.mean([r["euclidean_err_m"] for r in sr])),
                    "topological_mean": float(np.mean([r["topo_err_hops"] for r in sr])),
                }
        out["methods"][m] = {
            "label": METHODS[m].label,
            "runs": len(per_seed),
            "samples": int(len(mr)),
            "euclidean_mean": float(eu.mean()) if len(eu) else float("nan"),
            "euclidean_std": float(eu.std()) if len(eu) else float("nan"),
            "topological_mean": float(topo.mean()) if len(topo) else float("nan"),
            "topological_std": float(topo.std()) if len(topo) else float("nan"),
            "per_seed": per_seed,
        }
    return out


@dataclass
class RunArtifacts:
    rows: list[dict]
    csv_text: str
    summary: dict


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> RunArtifacts:
    cfg.validate()
    maps = build_map(cfg)
    rows: list[dict] = []
    for method in cfg.methods:
        for seed in cfg.seeds:
            log.info("running %s seed=%s", method, seed)
            rows.extend(simulate(cfg, method, seed, maps))
    rows.sort(key=lambda r: (cfg.methods.index(r["method"]), r["seed"], r["t"], r["picker_id"]))
    csv_text = rows_to_csv(rows)
    summary = summarize(rows, cfg.methods, cfg.seeds)
    summary["policy"] = cfg.policy
    summary["pickers"] = cfg.pickers.count
    summary["duration"] = cfg.duration
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.csv").write_text(csv_text)
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return RunArtifacts(rows, csv_text, summary)
