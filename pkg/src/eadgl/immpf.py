"""Interacting multiple-model particle filter in game coordinates.

Two target modes (+a_T^max and -a_T^max) share a particle population of
fixed size ``S`` per mode. Each cycle combines the IMM interaction with
systematic resampling, propagates every particle through the nonlinear
kinematics under the pursuer's known command, and reweights by the bearing
likelihood.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .engagement import (
    TruthState,
    covariance_factor,
    propagate_game,
    radar_to_game,
    truth_game_state,
)
from .errors import ConfigError
from .game_math import GameGeometry, GameState

# Per-particle likelihood floor relative to the best particle.
LIKELIHOOD_FLOOR = 1e-300
_LOG_FLOOR = math.log(LIKELIHOOD_FLOOR)


@dataclass(frozen=True)
class Particle:
    state: GameState
    mode: int
    weight: float


@dataclass(frozen=True)
class TransitionModel:
    """Non-homogeneous two-mode Markov chain.

    ``pi12`` follows a generalized-Gaussian bump centred at ``mu`` after the
    onset time ``t_s`` and is ``pi12_base`` before it; ``pi21`` is constant.
    """

    pi21: float = 1e-3
    pi12_base: float = 1e-3
    t_s: float = 1.9
    c12: float = 0.16
    mu: float = 2.5
    beta: float = 6.0
    alpha: float = 0.45

    @classmethod
    def from_config(cls, config) -> "TransitionModel":
        return cls(config.pi21, config.pi12_base, config.t_s, config.c12, config.tpm_mu, config.tpm_beta,
                   config.tpm_alpha)

    @classmethod
    def static(cls, pi12: float, pi21: float) -> "TransitionModel":
        """Time-invariant chain (``c12 = 0`` and an onset that never arrives)."""
        return cls(pi21=pi21, pi12_base=pi12, t_s=math.inf, c12=0.0)


@dataclass(frozen=True)
class ProcessNoise:
    """Per-step standard deviations of (t_go, z, lambda, gamma_T)."""

    std: tuple = (5e-3, 3.0, 2e-4, 2e-4)

    def __post_init__(self):
        if len(self.std) != 4 or any(s < 0 for s in self.std):
            raise ValueError("process noise needs four nonnegative standard deviations")

    @property
    def cov(self) -> np.ndarray:
        return np.diag(np.square(self.std))


@dataclass
class ParticleCloud:
    """Weighted game-state particles with mode tags.

    ``gamma_m`` and ``a_m`` are the pursuer's own path angle and achieved
    acceleration at time ``t``; they are known exactly and shared by all
    particles.
    """

    states: np.ndarray
    modes: np.ndarray
    weights: np.ndarray
    t: float
    gamma_m: float = 0.0
    a_m: float = 0.0
    degenerate: bool = False
    mode_probs_prior: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return len(self.weights)

    @property
    def particles(self) -> list:
        return [Particle(GameState.from_array(s), int(m), float(w))
                for s, m, w in zip(self.states, self.modes, self.weights)]

    @classmethod
    def point_mass(cls, state: GameState, mode: int, t: float, gamma_m=0.0, a_m=0.0) -> "ParticleCloud":
        return cls(state.as_array()[None, :], np.array([mode]), np.array([1.0]), t, gamma_m, a_m)

    def mean_state(self) -> np.ndarray:
        return self.weights @ self.states

    def mode_probs(self) -> np.ndarray:
        return np.array([self.weights[self.modes == 1].sum(), self.weights[self.modes == 2].sum()])

    def covariance(self) -> np.ndarray:
        d = self.states - self.mean_state()
        return (d * self.weights[:, None]).T @ d


def tpm_at(t: float, model: TransitionModel) -> np.ndarray:
    """Transition matrix ``P[i, j] = Pr(mode j at t_k | mode i at t_{k-1})`` (0-based modes)."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if t <= model.t_s:
        pi12 = model.pi12_base
    else:
        scale = model.c12 * model.beta / (2.0 * model.alpha * math.gamma(1.0 / model.beta))
        pi12 = scale * math.exp(-((abs(t - model.mu) / model.alpha) ** model.beta))
    if not (0.0 <= pi12 <= 1.0 and 0.0 <= model.pi21 <= 1.0):
        raise ConfigError(f"transition probability outside [0, 1]: pi12={pi12}, pi21={model.pi21}")
    return np.array([[1.0 - pi12, pi12], [model.pi21, 1.0 - model.pi21]])


def systematic_resample(weights, n: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of ``n`` systematic draws from normalized ``weights``."""
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    u = (rng.random() + np.arange(n)) / n
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(weights) - 1)


def initialize(snapshot, n_per_mode: int, rng: np.random.Generator, geom: GameGeometry, *,
               gamma_m: float, a_m: float, t: float = 0.0) -> ParticleCloud:
    """Sample radar-frame states around the snapshot and map them to game states.

    Both modes get ``n_per_mode`` particles of equal weight.
    """
    if n_per_mode < 1:
        raise ValueError("n_per_mode must be positive")
    factor = covariance_factor(snapshot.cov)
    draws = snapshot.mean + rng.standard_normal((2 * n_per_mode, 4)) @ factor.T
    states = radar_to_game(snapshot, draws, geom, gamma_m, a_m)
    modes = np.repeat([1, 2], n_per_mode)
    weights = np.full(2 * n_per_mode, 1.0 / (2 * n_per_mode))
    return ParticleCloud(states, modes, weights, t, gamma_m, a_m)


def interact(cloud: ParticleCloud, tpm: np.ndarray, n_per_mode: int, rng: np.random.Generator) -> ParticleCloud:
    """Combined IMM interaction and systematic resampling.

    Target mode ``j`` draws ``n_per_mode`` particles with probabilities
    ``P[m_i, j] w_i / c_j`` where ``c_j = sum_i P[m_i, j] w_i``; each drawn
    particle carries weight ``c_j / n_per_mode``.
    """
    out_states, out_modes, out_weights = [], [], []
    trans = tpm[cloud.modes - 1]  # (N, 2)
    for j in (1, 2):
        mix = trans[:, j - 1] * cloud.weights
        c_j = mix.sum()
        if c_j > 0:
            idx = systematic_resample(mix / c_j, n_per_mode, rng)
            out_states.append(cloud.states[idx])
        else:
            # mode unreachable: keep a placeholder population with zero mass
            idx = systematic_resample(np.full(len(cloud), 1.0 / len(cloud)), n_per_mode, rng)
            out_states.append(cloud.states[idx])
        out_modes.append(np.full(n_per_mode, j))
        out_weights.append(np.full(n_per_mode, c_j / n_per_mode))
    return ParticleCloud(np.concatenate(out_states), np.concatenate(out_modes), np.concatenate(out_weights),
                         cloud.t, cloud.gamma_m, cloud.a_m)


def _wrap(a):
    return (a + np.pi) % (2 * np.pi) - np.pi


def reweight(cloud: ParticleCloud, y: float, gamma_m: float, sigma: float) -> ParticleCloud:
    """Multiply weights by the Gaussian bearing likelihood and renormalize.

    ``sigma = inf`` gives a uniform likelihood. Particles whose likelihood
    falls below the floor relative to the best particle are clamped to it;
    if every particle's likelihood underflows, the cloud comes back with
    uniform weights and ``degenerate`` set.
    """
    if math.isinf(sigma):
        return cloud
    s = max(sigma, 1e-12)
    r = _wrap(y - (gamma_m - cloud.states[:, 2]))
    loglik = np.maximum(-0.5 * (r / s) ** 2, _LOG_FLOOR)
    live = cloud.weights > 0
    if not live.any() or loglik[live].max() <= _LOG_FLOOR:
        n = len(cloud)
        return ParticleCloud(cloud.states, cloud.modes, np.full(n, 1.0 / n), cloud.t, cloud.gamma_m, cloud.a_m,
                             degenerate=True)
    w = cloud.weights * np.exp(loglik - loglik[live].max())
    w = w / w.sum()
    return ParticleCloud(cloud.states, cloud.modes, w, cloud.t, cloud.gamma_m, cloud.a_m)


def cycle(cloud: ParticleCloud, u_m: float, meas, model: TransitionModel, noise: ProcessNoise,
          rng: np.random.Generator, geom: GameGeometry, *, dt: float, n_per_mode: int | None = None,
          own_next: tuple | None = None, sigma: float) -> ParticleCloud:
    """One filter step from ``cloud.t`` to ``meas.t``.

    ``own_next`` is the pursuer's known (gamma_M, a_M) at the measurement
    time; when omitted it is taken from the particle propagation.
    """
    n_per_mode = n_per_mode or max(1, len(cloud) // 2)
    tpm = tpm_at(meas.t, model)
    prior_modes = cloud.mode_probs()
    mixed = interact(cloud, tpm, n_per_mode, rng)
    states, g_m, a_m = propagate_game(mixed.states, mixed.modes, cloud.gamma_m, cloud.a_m, u_m, dt, geom)
    if own_next is not None:
        g_m, a_m = own_next
    std = np.asarray(noise.std)
    if np.any(std > 0):
        states = states + rng.standard_normal(states.shape) * std
        states[:, 0] = np.maximum(states[:, 0], 0.0)
    predicted = ParticleCloud(states, mixed.modes, mixed.weights, meas.t, g_m, a_m)
    out = reweight(predicted, meas.y, g_m, sigma)
    out.mode_probs_prior = prior_modes
    return out


def estimate(cloud: ParticleCloud) -> tuple[GameState, np.ndarray]:
    """Weighted-mean game state and per-mode probabilities."""
    return GameState.from_array(cloud.mean_state()), cloud.mode_probs()


def dump_cloud(cloud: ParticleCloud, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "mode", "weight", "t_go", "z", "lambda", "gamma_t"])
        for i, (s, m, wt) in enumerate(zip(cloud.states, cloud.modes, cloud.weights)):
            w.writerow([i, int(m), repr(float(wt)), *(repr(float(v)) for v in s)])


class ImmpfEstimator:
    """Filter bound to a scenario, in the shape the run loop expects."""

    def __init__(self, config):
        self.config = config
        self.geom = config.geometry
        self.model = TransitionModel.from_config(config)
        self.noise = ProcessNoise(tuple(config.process_std))

    def initialize(self, truth: TruthState, snapshot, rng) -> ParticleCloud:
        return initialize(snapshot, self.config.particles_per_mode, rng, self.geom,
                          gamma_m=truth.gamma_m, a_m=truth.a_m, t=truth.t)

    def update(self, cloud, u_m, meas, truth_prev, truth_now, rng) -> ParticleCloud:
        return cycle(cloud, u_m, meas, self.model, self.noise, rng, self.geom, dt=self.config.dt,
                     n_per_mode=self.config.particles_per_mode, own_next=(truth_now.gamma_m, truth_now.a_m),
                     sigma=self.config.sigma)


class TruthEstimator:
    """Perfect information: a point-mass cloud at the true game state and mode."""

    def __init__(self, config):
        self.geom = config.geometry

    def _cloud(self, truth):
        return ParticleCloud.point_mass(truth_game_state(truth, self.geom), truth.mode, truth.t,
                                        truth.gamma_m, truth.a_m)

    def initialize(self, truth, snapshot, rng) -> ParticleCloud:
        return self._cloud(truth)

    def update(self, cloud, u_m, meas, truth_prev, truth_now, rng) -> ParticleCloud:
        out = self._cloud(truth_now)
        out.mode_probs_prior = cloud.mode_probs()
        return out
