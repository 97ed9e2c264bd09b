"""Turn raw sensor events into likelihoods over topological nodes."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .topology import TopologicalMap


class SensorKind(str, enum.Enum):
    GPS = "GPS"
    LIDAR = "LIDAR"
    RFID = "RFID"


class ObservationError(ValueError):
    pass


@dataclass(frozen=True)
class Observation:
    """A single sensor reading expressed over the map nodes.

    ``likelihood`` does not need to be normalised. Identifying observations
    carry the tracked person's id; LIDAR never identifies anyone.
    """

    likelihood: np.ndarray
    identifying: bool
    sensor_kind: SensorKind
    timestamp: float
    target_id: int | None = None
    velocity_estimate: np.ndarray | None = None

    def __post_init__(self):
        lik = np.asarray(self.likelihood, dtype=float)
        if lik.ndim != 1 or not np.all(np.isfinite(lik)) or np.any(lik < 0):
            raise ObservationError("likelihood must be a finite non-negative vector")
        if not np.any(lik > 0):
            raise ObservationError("empty likelihood: no node has positive support")
        if self.identifying and self.target_id is None:
            raise ObservationError("identifying observations need a target_id")
        if self.sensor_kind == SensorKind.LIDAR and self.identifying:
            raise ObservationError("LIDAR observations cannot be identifying")
        lik.setflags(write=False)
        object.__setattr__(self, "likelihood", lik)
        if self.velocity_estimate is not None:
            vel = np.asarray(self.velocity_estimate, dtype=float).reshape(2)
            object.__setattr__(self, "velocity_estimate", vel)

    def normalized(self) -> np.ndarray:
        return self.likelihood / self.likelihood.sum()


@dataclass
class SensorConfig:
    gps_sigma: float = 2.0
    lidar_sigma: float = 0.5
    rfid_range: float = 5.0
    velocity_window: int = 10


def gaussian_node_kernel(tmap: TopologicalMap, point, sigma: float) -> np.ndarray:
    d = tmap.distances_to(point)
    return np.exp(-(d**2) / (2.0 * sigma**2))


class VelocityEstimator:
    """Average velocity over the last ``window`` GPS fixes of one target.

    The estimate is total displacement over total elapsed time across the
    buffer, which is the mean of the per-step velocities weighted by their
    durations.
    """

    def __init__(self, window: int = 10):
        if window < 2:
            raise ValueError("window must hold at least two poses")
        self._poses: deque[tuple[float, np.ndarray]] = deque(maxlen=window)

    def push(self, t: float, pose) -> None:
        self._poses.append((float(t), np.asarray(pose, dtype=float)))

    def estimate(self) -> np.ndarray | None:
        if len(self._poses) < 2:
            return None
        (t0, p0), (t1, p1) = self._poses[0], self._poses[-1]
        if t1 <= t0:
            return None
        return (p1 - p0) / (t1 - t0)

    def __len__(self):
        return len(self._poses)


def gps_to_observation(
    tmap: TopologicalMap,
    fix,
    target_id: int,
    timestamp: float,
    estimator: VelocityEstimator | None = None,
    sigma: float = 2.0,
) -> Observation:
    fix = np.asarray(fix, dtype=float)
    if not np.all(np.isfinite(fix)):
        raise ObservationError("GPS fix must be finite")
    vel = None
    if estimator is not None:
        estimator.push(timestamp, fix)
        vel = estimator.estimate()
    lik = gaussian_node_kernel(tmap, fix, sigma)
    if not np.any(lik > 0):
        # Fix is so far from the map that every kernel value underflowed.
        lik = np.zeros(tmap.num_nodes)
        lik[tmap.closest_node(fix)] = 1.0
    return Observation(lik, True, SensorKind.GPS, timestamp, target_id, vel)


def lidar_to_observation(tmap: TopologicalMap, detection, timestamp: float, sigma: float = 0.5) -> Observation:
    lik = gaussian_node_kernel(tmap, detection, sigma)
    if not np.any(lik > 0):
        lik = np.zeros(tmap.num_nodes)
        lik[tmap.closest_node(detection)] = 1.0
    return Observation(lik, False, SensorKind.LIDAR, timestamp)


def rfid_to_observation(
    tmap: TopologicalMap, robot_position, target_id: int, timestamp: float, rfid_range: float = 5.0
) -> Observation:
    """Linear range-decay likelihood around the antenna, normalised to sum 1."""
    d = tmap.distances_to(robot_position)
    lik = np.clip(1.0 - d / rfid_range, 0.0, None)
    total = lik.sum()
    if total <= 0:
        raise ObservationError("empty likelihood: no node within RFID range")
    return Observation(lik / total, True, SensorKind.RFID, timestamp, target_id)


@dataclass
class SensorFrontend:
    """Holds per-target GPS velocity buffers and converts events for one map."""

    tmap: TopologicalMap
    config: SensorConfig = field(default_factory=SensorConfig)
    _estimators: dict = field(default_factory=dict)

    def gps(self, target_id: int, fix, t: float) -> Observation:
        est = self._estimators.setdefault(target_id, VelocityEstimator(self.config.velocity_window))
        return gps_to_observation(self.tmap, fix, target_id, t, est, self.config.gps_sigma)

    def lidar(self, detection, t: float) -> Observation:
        return lidar_to_observation(self.tmap, detection, t, self.config.lidar_sigma)

    def rfid(self, robot_position, target_id: int, t: float) -> Observation:
        return rfid_to_observation(self.tmap, robot_position, target_id, t, self.config.rfid_range)
