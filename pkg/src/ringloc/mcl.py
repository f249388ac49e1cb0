"""Monte Carlo localization with place-recognition observations.

Observations are keyframe poses returned by the matcher.  Only their
position enters the likelihood, so heading is resolved by odometry and
resampling rather than by the measurement.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .place_recognition import recognize
from .scan_model import Pose2, wrap_angle


@dataclass(frozen=True)
class MclConfig:
    particle_count: int = 500
    sigma_obs: float = 2.0
    sigma_trans: float = 0.05
    sigma_rot: float = 0.01
    convergence_radius: float = 1.0
    init_margin: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.particle_count < 1:
            raise ConfigError("particle_count must be >= 1")
        if not self.sigma_obs > 0:
            raise ConfigError("sigma_obs must be positive")
        if self.sigma_trans < 0 or self.sigma_rot < 0:
            raise ConfigError("motion noise must be nonnegative")
        if not self.convergence_radius > 0:
            raise ConfigError("convergence_radius must be positive")


@dataclass(frozen=True)
class Particle:
    pose: Pose2
    weight: float


@dataclass(eq=False)
class ParticleSet:
    """Particle poses as an (n, 3) array of x, y, yaw with normalized weights."""

    poses: np.ndarray
    weights: np.ndarray
    diverged: bool = False

    def __post_init__(self):
        self.poses = np.array(self.poses, dtype=float).reshape(-1, 3)
        self.weights = np.array(self.weights, dtype=float).reshape(-1)
        if len(self.weights) != len(self.poses):
            raise ValueError("weights and poses differ in length")

    def __len__(self):
        return len(self.poses)

    def particles(self) -> list:
        return [Particle(Pose2(*row), float(w)) for row, w in zip(self.poses.tolist(), self.weights)]

    def copy(self) -> "ParticleSet":
        return ParticleSet(self.poses.copy(), self.weights.copy(), self.diverged)


@dataclass(frozen=True)
class Estimate:
    pose: Pose2
    spread: float
    converged: bool
    degenerate: bool = False


@dataclass(frozen=True)
class StepResult:
    step: int
    estimate: Estimate
    frame: int
    distance: float
    accepted: bool
    ess: float
    resampled: bool


@dataclass
class LocalizationRun:
    steps: list = field(default_factory=list)
    particles: ParticleSet | None = None

    def updates(self) -> int:
        return sum(s.accepted for s in self.steps)

    def first_converged(self):
        """Index of the first step after which every estimate stays converged, else None."""
        k = None
        for i, s in enumerate(self.steps):
            if s.estimate.converged:
                if k is None:
                    k = i
            else:
                k = None
        return k


def step_rng(seed, step) -> np.random.Generator:
    """Independent stream per (seed, step) so each step is reproducible on its own."""
    return np.random.default_rng([int(seed), int(step)])


def init_uniform(bounds, n, seed=0) -> ParticleSet:
    """Uniform over the (xmin, ymin, xmax, ymax) box with uniform heading."""
    xmin, ymin, xmax, ymax = bounds
    if not (xmax >= xmin and ymax >= ymin):
        raise ConfigError(f"bad bounds {bounds}")
    rng = np.random.default_rng(seed)
    poses = np.column_stack([rng.uniform(xmin, xmax, n), rng.uniform(ymin, ymax, n),
                             wrap_angle(rng.uniform(-math.pi, math.pi, n))])
    return ParticleSet(poses, np.full(n, 1.0 / n))


def predict(ps: ParticleSet, delta: Pose2, sigma_trans, sigma_rot, rng) -> ParticleSet:
    """Apply the odometry increment in each particle's frame with per-particle noise."""
    n = len(ps)
    dx = np.full(n, delta.x)
    dy = np.full(n, delta.y)
    dyaw = np.full(n, delta.yaw)
    if sigma_trans > 0 or sigma_rot > 0:
        noise = rng.standard_normal((n, 3))
        dx = dx + sigma_trans * noise[:, 0]
        dy = dy + sigma_trans * noise[:, 1]
        dyaw = dyaw + sigma_rot * noise[:, 2]
    x, y, yaw = ps.poses.T
    c, s = np.cos(yaw), np.sin(yaw)
    out = np.column_stack([x + c * dx - s * dy, y + s * dx + c * dy, wrap_angle(yaw + dyaw)])
    return ParticleSet(out, ps.weights.copy(), ps.diverged)


def likelihood(ps: ParticleSet, z: Pose2, sigma_obs) -> np.ndarray:
    """Gaussian in planar distance to the observed keyframe; heading is ignored."""
    d2 = (ps.poses[:, 0] - z.x) ** 2 + (ps.poses[:, 1] - z.y) ** 2
    return np.exp(-d2 / (2.0 * sigma_obs * sigma_obs))


def update_weights(ps: ParticleSet, z: Pose2, sigma_obs) -> ParticleSet:
    """Multiply in the observation likelihood and renormalize.

    If every weight underflows the set falls back to uniform weights and is
    flagged as diverged.
    """
    w = ps.weights * likelihood(ps, z, sigma_obs)
    total = w.sum()
    if not (total > 0 and np.isfinite(total)):
        n = len(ps)
        return ParticleSet(ps.poses.copy(), np.full(n, 1.0 / n), True)
    return ParticleSet(ps.poses.copy(), w / total, ps.diverged)


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return float(1.0 / np.dot(w, w))


def systematic_indices(weights, offset, count=None) -> np.ndarray:
    """``count`` indices (default one per weight) drawn at offset + k/count.

    ``offset`` lies in [0, 1/count); particle i owns the half-open slice
    [c_{i-1}, c_i) of the normalized cumulative weights.
    """
    w = np.asarray(weights, dtype=float)
    n = len(w) if count is None else int(count)
    cum = np.cumsum(w)
    cum /= cum[-1]
    cum[-1] = 1.0
    positions = offset + np.arange(n) / n
    return np.minimum(np.searchsorted(cum, positions, side="right"), len(w) - 1)


def resample(ps: ParticleSet, rng) -> ParticleSet:
    n = len(ps)
    idx = systematic_indices(ps.weights, rng.uniform(0.0, 1.0 / n))
    return ParticleSet(ps.poses[idx].copy(), np.full(n, 1.0 / n), ps.diverged)


def estimate(ps: ParticleSet, convergence_radius=1.0) -> Estimate:
    """Weighted mean position, circular mean heading, and weighted RMS spread."""
    w = ps.weights
    x, y, yaw = ps.poses.T
    mx, my = float(np.dot(w, x)), float(np.dot(w, y))
    c, s = float(np.dot(w, np.cos(yaw))), float(np.dot(w, np.sin(yaw)))
    degenerate = math.hypot(c, s) < 1e-9
    myaw = 0.0 if degenerate else math.atan2(s, c)
    spread = math.sqrt(max(float(np.dot(w, (x - mx) ** 2 + (y - my) ** 2)), 0.0))
    converged = spread < convergence_radius and not degenerate
    return Estimate(Pose2(mx, my, myaw), spread, converged, degenerate)


def run_global_localization(prior, stream, params, hist, cfg: MclConfig = MclConfig(), tau=np.inf,
                            bounds=None) -> LocalizationRun:
    """Localize from scratch over a stream of (scan, odometry delta) pairs.

    The first delta is ignored; later ones move the particles before the
    scan is matched against the map.
    """
    if bounds is None:
        bounds = prior.bounds(cfg.init_margin)
    ps = init_uniform(bounds, cfg.particle_count, cfg.seed)
    run = LocalizationRun()
    for k, (scan, delta) in enumerate(stream):
        rng = step_rng(cfg.seed, k + 1)
        if k > 0:
            ps = predict(ps, delta, cfg.sigma_trans, cfg.sigma_rot, rng)
        match = recognize(prior, scan, params, hist, tau)
        ess, resampled = effective_sample_size(ps.weights), False
        if match.accepted:
            ps = update_weights(ps, match.observation, cfg.sigma_obs)
            ess = effective_sample_size(ps.weights)
            if ess < len(ps) / 2:
                ps = resample(ps, rng)
                resampled = True
        est = estimate(ps, cfg.convergence_radius)
        run.steps.append(StepResult(k, est, match.frame, match.distance, match.accepted, ess,
                                    resampled))
    run.particles = ps
    return run
