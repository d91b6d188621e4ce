"""Planar ground-truth engagement.

Nonlinear point-mass kinematics with first-order actuators, a single-switch
bang-bang evader, bearing measurements, radar initialization and the
closed-loop run driver.

Path-angle convention: the pursuer velocity is ``V_M (cos g_M, sin g_M)`` and
the evader velocity is ``V_T (-cos g_T, sin g_T)``, so that a head-on
engagement along the LOS has ``delta_M = g_M - lambda = 0`` and
``delta_T = g_T + lambda = 0``.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, GeometryError, RunError
from .game_math import GameGeometry, GameState, psi, relative_velocities, zem_from_physical

# Particle time-to-go never drops below this (s); keeps the inverse transform finite.
T_GO_FLOOR = 1e-4


@dataclass(frozen=True)
class TruthState:
    x_m: float
    y_m: float
    x_t: float
    y_t: float
    gamma_m: float
    gamma_t: float
    a_m: float
    a_t: float
    mode: int
    t: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x_m, self.y_m, self.gamma_m, self.a_m, self.x_t, self.y_t, self.gamma_t, self.a_t])

    @classmethod
    def from_array(cls, x, mode, t) -> "TruthState":
        return cls(x_m=x[0], y_m=x[1], gamma_m=x[2], a_m=x[3], x_t=x[4], y_t=x[5], gamma_t=x[6], a_t=x[7],
                   mode=mode, t=t)


@dataclass(frozen=True)
class EvaderPolicy:
    """Bang-bang evader: ``initial_mode`` until ``switch_time``, then the other mode."""

    switch_time: float
    initial_mode: int = 1

    def __post_init__(self):
        if self.switch_time < 0:
            raise ValueError("switch_time must be nonnegative")
        if self.initial_mode not in (1, 2):
            raise ValueError("initial_mode must be 1 or 2")

    def mode_at(self, t: float) -> int:
        if t < self.switch_time - 1e-9:
            return self.initial_mode
        return 3 - self.initial_mode


@dataclass(frozen=True)
class Measurement:
    t: float
    y: float


@dataclass(frozen=True)
class RadarSnapshot:
    """Radar estimate of (rho_R, lambda_R, gamma_T, a_T) with its covariance."""

    rho_r: float
    lambda_r: float
    gamma_t: float
    a_t: float
    radar_pos: tuple
    interceptor_pos: tuple
    cov: np.ndarray

    @property
    def mean(self) -> np.ndarray:
        return np.array([self.rho_r, self.lambda_r, self.gamma_t, self.a_t])


class Relative(NamedTuple):
    rho: float
    lam: float
    v_rho: float
    v_lambda: float
    delta_m: float
    delta_t: float


class MissDistance(NamedTuple):
    value: float
    flagged: bool
    t_cpa: float


def mode_command(mode, geom: GameGeometry):
    """Evader command: +a_T^max in mode 1, -a_T^max in mode 2."""
    return np.where(np.asarray(mode) == 1, geom.evader.a_max, -geom.evader.a_max)


def derive_relative(truth: TruthState, geom: GameGeometry) -> Relative:
    dx = truth.x_t - truth.x_m
    dy = truth.y_t - truth.y_m
    rho = math.hypot(dx, dy)
    if rho == 0.0:
        raise GeometryError("pursuer and evader positions coincide")
    lam = math.atan2(dy, dx)
    v_rho, v_lam = relative_velocities(truth.gamma_m, truth.gamma_t, lam, geom)
    return Relative(rho, lam, float(v_rho), float(v_lam), truth.gamma_m - lam, truth.gamma_t + lam)


def truth_game_state(truth: TruthState, geom: GameGeometry) -> GameState:
    """Game-space coordinates of the true state."""
    rel = derive_relative(truth, geom)
    t_go = -rel.rho / rel.v_rho if rel.v_rho < 0 else 0.0
    z = zem_from_physical(rel.rho, rel.lam, rel.v_rho, rel.v_lambda, truth.a_m * math.cos(rel.delta_m),
                          truth.a_t * math.cos(rel.delta_t), t_go, geom)
    return GameState(t_go, float(z), rel.lam, truth.gamma_t)


def _truth_rhs(x, u_m, u_t, geom: GameGeometry):
    p, e = geom.pursuer, geom.evader
    _, _, g_m, a_m, _, _, g_t, a_t = x
    return np.array([
        p.v * math.cos(g_m), p.v * math.sin(g_m), a_m / p.v, (u_m - a_m) / p.tau,
        -e.v * math.cos(g_t), e.v * math.sin(g_t), a_t / e.v, (u_t - a_t) / e.tau,
    ])


def _rk4(f, x, h, *args):
    k1 = f(x, *args)
    k2 = f(x + 0.5 * h * k1, *args)
    k3 = f(x + 0.5 * h * k2, *args)
    k4 = f(x + h * k3, *args)
    return x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def step_truth(truth: TruthState, u_m: float, policy: EvaderPolicy, dt: float, geom: GameGeometry) -> TruthState:
    """Advance the truth by ``dt`` with one RK4 step per constant-command segment.

    The step is split at the evader switch so the switch lands on an
    integrator boundary.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    t0, t1 = truth.t, truth.t + dt
    edges = [t0]
    ts = policy.switch_time
    if t0 + 1e-9 < ts < t1 - 1e-9:
        edges.append(ts)
    edges.append(t1)
    x = truth.as_array()
    mode = truth.mode
    for a, b in zip(edges[:-1], edges[1:]):
        mode = policy.mode_at(a)
        u_t = float(mode_command(mode, geom))
        x = _rk4(_truth_rhs, x, b - a, u_m, u_t, geom)
    return TruthState.from_array(x, policy.mode_at(t1), t1)


def measure(truth: TruthState, sigma: float, rng: np.random.Generator, geom: GameGeometry) -> Measurement:
    """Bearing of the LOS relative to the pursuer velocity, plus Gaussian noise.

    Exactly one standard normal is drawn per call, so noise streams line up
    across runs that share a generator seed.
    """
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    rel = derive_relative(truth, geom)
    nu = rng.standard_normal()
    return Measurement(truth.t, truth.gamma_m - rel.lam + sigma * nu)


def initial_truth(config, policy: EvaderPolicy) -> TruthState:
    """Interceptor at the origin pointing at the target; target head-on along the initial LOS."""
    geom = config.geometry
    r0 = config.initial_range
    c, s = math.cos(config.los0), math.sin(config.los0)
    x_t = r0 * c - config.lateral_offset * s
    y_t = r0 * s + config.lateral_offset * c
    mode = policy.mode_at(0.0)
    return TruthState(
        x_m=0.0, y_m=0.0, x_t=x_t, y_t=y_t,
        gamma_m=math.atan2(y_t, x_t), gamma_t=-config.los0,
        a_m=0.0, a_t=float(mode_command(mode, geom)), mode=mode, t=0.0,
    )


def covariance_factor(cov) -> np.ndarray:
    """Lower Cholesky factor; an all-zero covariance gives a zero factor."""
    cov = np.asarray(cov, dtype=float)
    if not np.any(cov):
        return np.zeros_like(cov)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise ConfigError("covariance is not positive definite") from exc


def make_radar_snapshot(truth: TruthState, radar_pos, cov, rng: np.random.Generator) -> RadarSnapshot:
    """Radar estimate drawn around the true radar-frame target state."""
    dx = truth.x_t - radar_pos[0]
    dy = truth.y_t - radar_pos[1]
    true_vec = np.array([math.hypot(dx, dy), math.atan2(dy, dx), truth.gamma_t, truth.a_t])
    cov = np.asarray(cov, dtype=float)
    mean = true_vec + covariance_factor(cov) @ rng.standard_normal(4)
    return RadarSnapshot(*mean, radar_pos=tuple(radar_pos), interceptor_pos=(truth.x_m, truth.y_m), cov=cov)


def radar_to_game(snapshot: RadarSnapshot, sample, geom: GameGeometry, gamma_m: float, a_m: float) -> np.ndarray:
    """Map radar-frame samples (rows of rho_R, lambda_R, gamma_T, a_T) to game states.

    ``gamma_m`` and ``a_m`` are the pursuer's own (known) path angle and
    acceleration. Returns an ``(n, 4)`` array, or a 4-vector for a single sample.
    """
    s = np.atleast_2d(np.asarray(sample, dtype=float))
    rho_r, lam_r, g_t, a_t = s.T
    dxr = snapshot.radar_pos[0] - snapshot.interceptor_pos[0]
    dyr = snapshot.radar_pos[1] - snapshot.interceptor_pos[1]
    rx = dxr + rho_r * np.cos(lam_r)
    ry = dyr + rho_r * np.sin(lam_r)
    rho = np.hypot(rx, ry)
    if np.any(rho == 0):
        raise GeometryError("radar sample maps onto the interceptor position")
    out = game_from_relative(rx, ry, gamma_m, a_m, g_t, a_t, geom)
    return out[0] if np.ndim(sample) == 1 else out


def game_from_relative(rx, ry, gamma_m, a_m, gamma_t, a_t, geom: GameGeometry) -> np.ndarray:
    """Game states (t_go, z, lambda, gamma_T) from relative Cartesian states (vectorized)."""
    rho = np.hypot(rx, ry)
    lam = np.arctan2(ry, rx)
    v_rho, v_lam = relative_velocities(gamma_m, gamma_t, lam, geom)
    closing_speed = np.maximum(-v_rho, 1e-9)
    t_go = np.maximum(np.where(v_rho < 0, rho / closing_speed, T_GO_FLOOR), T_GO_FLOOR)
    a_m_n = a_m * np.cos(gamma_m - lam)
    a_t_n = a_t * np.cos(gamma_t + lam)
    z = zem_from_physical(rho, lam, v_rho, v_lam, a_m_n, a_t_n, t_go, geom)
    return np.stack(np.broadcast_arrays(t_go, z, lam, gamma_t), axis=-1)


def relative_from_game(states, gamma_m, a_m, geom: GameGeometry, clamp_a_t=True):
    """Invert :func:`game_from_relative`: returns ``(rx, ry, a_t)``.

    The evader acceleration is recovered from the ZEM; with ``clamp_a_t`` it
    is projected onto the physically reachable interval [-a_T^max, a_T^max].
    """
    states = np.asarray(states, dtype=float)
    t_go = np.maximum(states[..., 0], T_GO_FLOOR)
    z, lam, g_t = states[..., 1], states[..., 2], states[..., 3]
    p, e = geom.pursuer, geom.evader
    v_rho, v_lam = relative_velocities(gamma_m, g_t, lam, geom)
    rho = -v_rho * t_go
    cos_dt = np.cos(g_t + lam)
    denom = cos_dt * e.tau**2 * psi(t_go / e.tau)
    denom = np.where(np.abs(denom) < 1e-12, np.copysign(1e-12, denom), denom)
    a_m_n = a_m * np.cos(gamma_m - lam)
    a_t = (z - t_go * v_lam * np.cos(lam) + a_m_n * p.tau**2 * psi(t_go / p.tau)) / denom
    if clamp_a_t:
        a_t = np.clip(a_t, -e.a_max, e.a_max)
    return rho * np.cos(lam), rho * np.sin(lam), a_t


def _relative_rhs(s, u_m, u_t, geom: GameGeometry):
    p, e = geom.pursuer, geom.evader
    rx, ry, g_m, a_m, g_t, a_t = s
    return (
        -e.v * np.cos(g_t) - p.v * np.cos(g_m),
        e.v * np.sin(g_t) - p.v * np.sin(g_m),
        a_m / p.v,
        (u_m - a_m) / p.tau,
        a_t / e.v,
        (u_t - a_t) / e.tau,
    )


def propagate_relative(s, u_m, u_t, dt, geom: GameGeometry):
    """One RK4 step of the relative kinematics; ``s`` is a 6-tuple of arrays."""
    def axpy(h, k):
        return tuple(a + h * b for a, b in zip(s, k))

    k1 = _relative_rhs(s, u_m, u_t, geom)
    k2 = _relative_rhs(axpy(0.5 * dt, k1), u_m, u_t, geom)
    k3 = _relative_rhs(axpy(0.5 * dt, k2), u_m, u_t, geom)
    k4 = _relative_rhs(axpy(dt, k3), u_m, u_t, geom)
    return tuple(a + dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4) for a, b1, b2, b3, b4 in zip(s, k1, k2, k3, k4))


def propagate_game(states, modes, gamma_m, a_m, u_m, dt, geom: GameGeometry):
    """Propagate game states one step through the nonlinear kinematics.

    Each state is mapped to relative Cartesian coordinates, integrated with
    one RK4 step under the pursuer command ``u_m`` and the mode-matched evader
    command, and mapped back. Returns ``(states, gamma_m_next, a_m_next)``.
    """
    states = np.asarray(states, dtype=float)
    rx, ry, a_t = relative_from_game(states, gamma_m, a_m, geom, clamp_a_t=False)
    g_t = states[..., 3]
    u_t = mode_command(modes, geom)
    ones = np.ones_like(rx)
    s = (rx, ry, gamma_m * ones, a_m * ones, g_t, a_t)
    rx, ry, g_m1, a_m1, g_t1, a_t1 = propagate_relative(s, u_m, u_t, dt, geom)
    out = game_from_relative(rx, ry, g_m1, a_m1, g_t1, a_t1, geom)
    return out, float(np.ravel(g_m1)[0]), float(np.ravel(a_m1)[0])


def miss_distance(t, rho) -> MissDistance:
    """Closest approach from sampled range.

    Fits a parabola to rho^2 through the three samples around the sampled
    minimum (rho^2 is exactly quadratic for unaccelerated relative motion).
    When the fitted closest approach lies beyond the last sample the range
    was still closing, and the final range is returned flagged.
    """
    t = np.asarray(t, dtype=float)
    rho = np.asarray(rho, dtype=float)
    n = len(rho)
    if n < 3:
        return MissDistance(float(rho[-1]), True, float(t[-1]))
    i = int(np.argmin(rho))
    j = min(max(i, 1), n - 2)
    tt = t[j - 1:j + 2] - t[j]
    r2 = rho[j - 1:j + 2] ** 2
    a, b, c = np.polyfit(tt, r2, 2)
    if a <= 0:
        if i == n - 1:
            return MissDistance(float(rho[-1]), True, float(t[-1]))
        return MissDistance(float(rho[i]), False, float(t[i]))
    s = -b / (2 * a)
    if s > tt[2] + 1e-12:
        return MissDistance(float(rho[-1]), True, float(t[-1]))
    s = max(s, tt[0])
    val = a * s * s + b * s + c
    return MissDistance(float(math.sqrt(max(val, 0.0))), False, float(t[j] + s))


@dataclass
class Trajectory:
    """Per-sample run table."""

    columns = ("t", "x_m", "y_m", "x_t", "y_t", "rho", "lambda", "z_true", "z_est", "t_go_true", "t_go_est",
               "u_m", "mode_true", "hypothesis_chosen", "fast_path_used")
    rows: list = field(default_factory=list)

    def append(self, **row):
        self.rows.append(row)

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.rows])

    def __len__(self):
        return len(self.rows)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=self.columns)
            w.writeheader()
            for r in self.rows:
                w.writerow(r)


@dataclass
class EngagementResult:
    trajectory: Trajectory
    decisions: list
    miss: MissDistance
    commands: np.ndarray
    cloud_dumps: list
    wall_time: float


def run_engagement(config, law, estimator, policy: EvaderPolicy, streams, *, dump_cloud=False) -> EngagementResult:
    """Closed loop: measure, estimate, decide, command, step, until closing ends.

    ``estimator`` provides ``initialize(truth, snapshot, rng)`` and
    ``update(cloud, u_m, measurement, truth_prev, truth_now, rng)``; ``law``
    provides ``reset()`` and ``step(cloud, t, own)`` returning an object with
    ``u_m``, ``hypothesis`` and ``fast_path`` attributes, plus an optional
    ``last_report``. ``streams`` carries the ``meas``, ``radar``, ``filter``
    and ``shaping`` generators.
    """
    geom = config.geometry
    dt = config.dt
    t_stop = config.hard_stop_factor * config.duration
    start = time.perf_counter()
    truth = initial_truth(config, policy)
    radar_pos = (truth.x_m + config.radar_x, truth.y_m + config.radar_y)
    snapshot = make_radar_snapshot(truth, radar_pos, config.radar_cov, streams.radar)
    traj = Trajectory()
    decisions = []
    commands = []
    dumps = []
    law.reset()
    try:
        cloud = estimator.initialize(truth, snapshot, streams.filter)
        k = 0
        while True:
            own = (truth.gamma_m, truth.a_m)
            cmd = law.step(cloud, truth.t, own)
            commands.append(cmd.u_m)
            report = getattr(law, "last_report", None)
            if report is not None:
                decisions.append(report)
            if dump_cloud:
                dumps.append(cloud)
            _record(traj, truth, cloud, cmd, geom)
            prev = truth
            truth = step_truth(truth, cmd.u_m, policy, dt, geom)
            k += 1
            rel = derive_relative(truth, geom)
            if rel.v_rho >= 0 or truth.t > t_stop + 1e-9:
                _record(traj, truth, None, None, geom)
                break
            meas = measure(truth, config.sigma, streams.meas, geom)
            cloud = estimator.update(cloud, cmd.u_m, meas, prev, truth, streams.filter)
    except (ArithmeticError, ValueError) as exc:
        raise RunError(f"run failed at t={truth.t:.3f}: {exc}", switch_time=policy.switch_time) from exc
    miss = miss_distance(traj.column("t"), traj.column("rho"))
    return EngagementResult(traj, decisions, miss, np.array(commands), dumps, time.perf_counter() - start)


def _record(traj: Trajectory, truth: TruthState, cloud, cmd, geom):
    rel = derive_relative(truth, geom)
    gs = truth_game_state(truth, geom)
    if cloud is not None:
        est = cloud.mean_state()
        z_est, t_go_est = float(est[1]), float(est[0])
    else:
        z_est = t_go_est = float("nan")
    traj.append(
        t=truth.t, x_m=truth.x_m, y_m=truth.y_m, x_t=truth.x_t, y_t=truth.y_t, rho=rel.rho, **{"lambda": rel.lam},
        z_true=gs.z, z_est=z_est, t_go_true=gs.t_go, t_go_est=t_go_est,
        u_m=cmd.u_m if cmd is not None else float("nan"), mode_true=truth.mode,
        hypothesis_chosen=cmd.hypothesis if cmd is not None else "",
        fast_path_used=int(cmd.fast_path) if cmd is not None else 0,
    )
