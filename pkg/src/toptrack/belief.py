"""Topological particle filter.

Particles live on map nodes and carry a 2-D velocity and a dwell time.
The population is stored column-wise (``q``, ``v``, ``tau``) so every
step of the update cycle is a handful of numpy operations.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .sensors import Observation, SensorKind
from .topology import TopologicalMap

log = logging.getLogger(__name__)

LOG_HALF = math.log(0.5)

MotionModel = Literal["adaptive", "constant_speed", "fixed_rate"]


def _default_gamma_q() -> dict[str, float]:
    return {"GPS": 1.0, "LIDAR": 0.25, "RFID": 1.0}


def _default_gamma_v() -> dict[str, float]:
    return {"GPS": 1.0, "LIDAR": 0.0, "RFID": 0.0}


@dataclass
class FilterConfig:
    particle_count: int = 300
    velocity_window: int = 10
    eps_jsd: float = 0.975
    eps_entropy: float = 0.6
    mu_init: float = 0.0
    var_init: float = 5e-2
    mu_noise: float = 0.0
    var_noise: float = 5e-4
    tau_init_low: float = 0.0
    tau_init_high: float = 1.0
    tau_noise_low: float = -0.1
    tau_noise_high: float = 0.1
    gamma_q: dict[str, float] = field(default_factory=_default_gamma_q)
    gamma_v: dict[str, float] = field(default_factory=_default_gamma_v)
    pr_jump_reinit: float = 1e-3
    # pr_j before any re-initialisation; also the fixed value when the monitor is off.
    pr_jump_initial: float = 0.0
    monitor: bool = True
    motion_model: MotionModel = "adaptive"
    # Rate used by "fixed_rate": jump hazard is 1 - exp(-fixed_rate * tau).
    fixed_rate: float = 0.1
    # Speed used by "constant_speed" in place of the projected particle velocity.
    constant_speed: float = 0.5
    destination_rule: Literal["mixture", "softmax"] = "mixture"
    resampling: Literal["multinomial", "systematic"] = "multinomial"
    sigma_v_min: float = 0.05
    prediction_rate: float = 0.25
    seed: int | None = None

    def validate(self) -> None:
        if self.particle_count <= 0:
            raise ValueError("particle_count must be positive")
        if self.velocity_window < 1:
            raise ValueError("velocity_window must be >= 1")
        for name in ("eps_jsd", "eps_entropy", "pr_jump_reinit", "pr_jump_initial"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.var_init < 0 or self.var_noise < 0:
            raise ValueError("variances must be non-negative")
        if self.tau_init_low > self.tau_init_high or self.tau_noise_low > self.tau_noise_high:
            raise ValueError("uniform bounds are inverted")
        if self.motion_model not in ("adaptive", "constant_speed", "fixed_rate"):
            raise ValueError(f"unknown motion_model {self.motion_model!r}")
        if self.destination_rule not in ("mixture", "softmax"):
            raise ValueError(f"unknown destination_rule {self.destination_rule!r}")
        if self.resampling not in ("multinomial", "systematic"):
            raise ValueError(f"unknown resampling {self.resampling!r}")
        if self.prediction_rate <= 0:
            raise ValueError("prediction_rate must be positive")


@dataclass(frozen=True)
class Particle:
    q: int
    v: tuple[float, float]
    tau: float


@dataclass(frozen=True)
class Diagnostics:
    timestamp: float
    sensor_kind: str | None
    jsd: float
    entropy: float
    pr_jump: float
    estimate: int
    mass: np.ndarray
    reinitialized: bool = False
    degenerate_weights: bool = False

    def top_mass(self, k: int = 5) -> list[tuple[int, float]]:
        order = np.argsort(-self.mass, kind="stable")[:k]
        return [(int(n), float(self.mass[n])) for n in order]


class FilterError(RuntimeError):
    pass


def jump_rate(edge_length, projected_speed):
    """Exponent rate that puts the un-normalised jump probability at 1/2
    when the target is halfway along the edge."""
    return 2.0 * LOG_HALF * np.maximum(0.0, projected_speed) / edge_length


def jsd(p, q) -> float:
    """Jensen-Shannon distance with base-2 logs, in [0, 1]."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    m = 0.5 * (p + q)

    def kl(a, b):
        nz = (a > 0) & (b > 0)
        return float(np.sum(a[nz] * np.log2(a[nz] / b[nz])))

    div = 0.5 * (kl(p, m) + kl(q, m))
    return float(np.sqrt(min(max(div, 0.0), 1.0)))


def entropy(dist) -> float:
    """Shannon entropy in bits divided by log2 of the support size."""
    dist = np.asarray(dist, dtype=float)
    n = dist.size
    if n <= 1:
        return 0.0
    nz = dist[dist > 0]
    h = -float(np.sum(nz * np.log2(nz)))
    return min(max(h / math.log2(n), 0.0), 1.0)


def resample_indices(
    weights: np.ndarray, rng: np.random.Generator, method: str = "multinomial", size: int | None = None
) -> np.ndarray:
    """Draw ``size`` (default ``len(weights)``) indices with probability proportional to weights."""
    n = len(weights) if size is None else size
    cdf = np.cumsum(weights, dtype=float)
    cdf /= cdf[-1]
    if method == "systematic":
        u = (rng.random() + np.arange(n)) / n
    else:
        u = rng.random(n)
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(weights) - 1)


class BeliefFilter:
    """Tracks one person on a topological map."""

    def __init__(self, tmap: TopologicalMap, config: FilterConfig | None = None, rng=None):
        self.tmap = tmap
        self.config = config or FilterConfig()
        self.config.validate()
        if rng is None:
            rng = np.random.default_rng(self.config.seed)
        self.rng = rng
        n = self.config.particle_count
        self.q = np.zeros(n, dtype=np.int64)
        self.v = np.zeros((n, 2))
        self.tau = np.zeros(n)
        self.pr_jump = self.config.pr_jump_initial
        self.ts: float | None = None
        self.initialized = False
        self.estimate: int | None = None
        self.last_diagnostics: Diagnostics | None = None

    # -- state views -----------------------------------------------------

    @property
    def particle_count(self) -> int:
        return len(self.q)

    def particles(self) -> list[Particle]:
        return [Particle(int(q), (float(v[0]), float(v[1])), float(t)) for q, v, t in zip(self.q, self.v, self.tau)]

    def node_distribution(self) -> np.ndarray:
        counts = np.bincount(self.q, minlength=self.tmap.num_nodes).astype(float)
        return counts / counts.sum()

    # -- filter steps ------------------------------------------------------

    def initialize(self, obs: Observation) -> None:
        cfg = self.config
        n = self.particle_count
        if obs.identifying:
            lik = obs.likelihood
            total = lik.sum()
            if total <= 0:
                raise FilterError("cannot initialise from an all-zero likelihood")
            probs = lik / total
        else:
            probs = np.full(self.tmap.num_nodes, 1.0 / self.tmap.num_nodes)
        self.q = resample_indices(probs, self.rng, "multinomial", size=n)
        self.v = self.rng.normal(cfg.mu_init, math.sqrt(cfg.var_init), size=(n, 2))
        self.tau = self.rng.uniform(cfg.tau_init_low, cfg.tau_init_high, size=n)
        if self.ts is None:
            self.ts = obs.timestamp
        self.initialized = True

    def transition_probabilities(self, q, v, tau_eff):
        """Jump probability and per-neighbour destination weights.

        Returns ``(p_jump, dest)`` where ``dest`` has one column per slot
        of the padded neighbour table and each row sums to 1 wherever
        ``p_jump > 0``.
        """
        cfg = self.config
        tm = self.tmap
        mask = tm.neighbor_mask[q]
        length = tm.edge_length[q]
        if cfg.motion_model == "adaptive":
            proj = np.einsum("pdk,pk->pd", tm.edge_unit[q], v)
            b = np.where(mask, np.maximum(proj, 0.0), 0.0)
            lam = jump_rate(length, b)
        elif cfg.motion_model == "constant_speed":
            b = mask.astype(float)
            lam = jump_rate(length, cfg.constant_speed)
        else:
            b = mask.astype(float)
            lam = np.full(length.shape, -cfg.fixed_rate)
        hazard = np.where(mask, -np.expm1(lam * tau_eff[:, None]), 0.0)
        sb = b.sum(axis=1)
        contrib = b * hazard
        num = contrib.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            p_jump = np.where(sb > 0, num / np.where(sb > 0, sb, 1.0), 0.0)
        if cfg.destination_rule == "softmax":
            score = np.where(mask, -lam * tau_eff[:, None], -np.inf)
            top = np.max(score, axis=1, keepdims=True)
            dest_w = np.where(mask, np.exp(score - np.where(np.isfinite(top), top, 0.0)), 0.0)
        else:
            dest_w = contrib
        tot = dest_w.sum(axis=1, keepdims=True)
        dest = np.divide(dest_w, tot, out=np.zeros_like(dest_w), where=tot > 0)
        return p_jump, dest

    def predict(self, now: float) -> np.ndarray:
        """Move particles along edges for the time elapsed since the last step.

        Returns the boolean mask of particles that jumped.
        """
        if not self.initialized:
            raise FilterError("predict before initialisation")
        dt = now - self.ts
        if dt < 0:
            raise FilterError(f"time went backwards: {now} < {self.ts}")
        n = self.particle_count
        if dt == 0:
            return np.zeros(n, dtype=bool)
        cfg = self.config
        tau_eff = self.tau + dt
        p_jump, dest = self.transition_probabilities(self.q, self.v, tau_eff)
        u_jump = self.rng.random(n)
        u_dest = self.rng.random(n)
        jumped = u_jump < p_jump
        cdf = np.cumsum(dest, axis=1)
        slot = np.argmax(cdf > (u_dest * cdf[:, -1])[:, None], axis=1)
        if np.any(jumped):
            idx = np.flatnonzero(jumped)
            new_q = self.tmap.neighbor_table[self.q[idx], slot[idx]]
            if cfg.motion_model == "adaptive":
                disp = self.tmap.coords[new_q] - self.tmap.coords[self.q[idx]]
                dwell = tau_eff[idx]
                p_move = p_jump[idx] * dest[idx, slot[idx]]
                ok = dwell > 0
                sample = disp[ok] / dwell[ok, None]
                gain = (p_move[ok] / cfg.velocity_window)[:, None]
                vi = self.v[idx[ok]]
                self.v[idx[ok]] = vi + gain * (sample - vi)
            self.q[idx] = new_q
        self.tau = np.where(jumped, 0.0, tau_eff)
        self.ts = now
        return jumped

    def weight(self, obs: Observation) -> tuple[np.ndarray, int, bool]:
        """Per-particle weights, the argmax-mass node and a degenerate flag."""
        cfg = self.config
        kind = SensorKind(obs.sensor_kind).value
        w = cfg.gamma_q.get(kind, 1.0) * obs.likelihood[self.q]
        gv = cfg.gamma_v.get(kind, 0.0)
        if obs.velocity_estimate is not None and gv > 0 and cfg.motion_model == "adaptive":
            w = w + gv * velocity_agreement(self.v, obs.velocity_estimate, cfg.sigma_v_min)
        degenerate = not np.any(w > 0)
        if degenerate:
            log.debug("all particle weights vanished at t=%s; using uniform weights", obs.timestamp)
            w = np.ones_like(w)
        mass = np.bincount(self.q, weights=w, minlength=self.tmap.num_nodes)
        return w, int(np.argmax(mass)), degenerate

    def resample(self, weights: np.ndarray) -> None:
        cfg = self.config
        weights = np.asarray(weights, dtype=float)
        if weights.shape != self.q.shape or not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise FilterError("weights must be finite, non-negative, one per particle")
        if not np.any(weights > 0):
            raise FilterError("cannot resample with all-zero weights")
        n = self.particle_count
        idx = resample_indices(weights, self.rng, cfg.resampling)
        self.q = self.q[idx]
        self.v = self.v[idx]
        self.tau = self.tau[idx]
        teleport = self.rng.random(n) < self.pr_jump
        targets = self.rng.integers(0, self.tmap.num_nodes, size=n)
        self.q = np.where(teleport, targets, self.q)
        self.v = self.v + self.rng.normal(cfg.mu_noise, math.sqrt(cfg.var_noise), size=(n, 2))
        self.tau = np.maximum(self.tau + self.rng.uniform(cfg.tau_noise_low, cfg.tau_noise_high, size=n), 0.0)

    def update(self, obs: Observation) -> tuple[int, Diagnostics]:
        cfg = self.config
        n_before = self.particle_count
        if not self.initialized:
            self.initialize(obs)
        self.predict(obs.timestamp)
        d = jsd(self.node_distribution(), obs.normalized())
        reinit = cfg.monitor and obs.identifying and d > cfg.eps_jsd
        if reinit:
            self.initialize(obs)
            self.pr_jump = cfg.pr_jump_reinit
        w, est, degenerate = self.weight(obs)
        mass = np.bincount(self.q, weights=w, minlength=self.tmap.num_nodes)
        self.resample(w)
        h = entropy(self.node_distribution())
        if cfg.monitor and h < cfg.eps_entropy:
            self.pr_jump = 0.0
        if self.particle_count != n_before:
            raise FilterError("particle count changed during update")
        self.estimate = est
        self.last_diagnostics = Diagnostics(
            obs.timestamp, SensorKind(obs.sensor_kind).value, d, h, self.pr_jump, est, mass, reinit, degenerate
        )
        return est, self.last_diagnostics

    def predict_only(self, now: float) -> int:
        self.predict(now)
        counts = np.bincount(self.q, minlength=self.tmap.num_nodes)
        self.estimate = int(np.argmax(counts))
        return self.estimate


def velocity_agreement(v, v_obs, sigma_min: float = 0.05) -> np.ndarray:
    """Unscaled velocity weight: a quarter of (speed density + cosine similarity term)."""
    v = np.asarray(v, dtype=float)
    v_obs = np.asarray(v_obs, dtype=float)
    s = float(np.hypot(*v_obs))
    sigma = max(s / 2.0, sigma_min)
    speed = np.hypot(v[:, 0], v[:, 1])
    g = np.exp(-((speed - s) ** 2) / (2 * sigma**2)) / (sigma * math.sqrt(2 * math.pi))
    denom = speed * s
    cos = np.divide(v @ v_obs, denom, out=np.zeros_like(speed), where=denom > 0)
    return 0.25 * (g + (np.clip(cos, -1.0, 1.0) + 1.0) / 2.0)
