"""Information-enhancing command selection for ambiguous decision instants.

Each admissible constant command is rolled out over a resampled subset of
the cloud: every particle holds the candidate command until it first leaves
the singular region and then switches to bang-bang DGL1. Along the rollout
the posterior Fisher information is accumulated with

    J_{k+1} = (Q + F J_k^{-1} F^T)^{-1} + H^T R^{-1} H

where ``F`` is the weight-averaged Jacobian of the one-step game-space map,
``H = [0, 0, -1, 0]`` the bearing Jacobian and ``R = sigma^2``. The chosen
command minimizes the determinant of the (t_go, z) block of ``J^{-1}`` at the
end of the rollout.

The one-step map is an Euler step of the game-space equations of motion:
``t_go`` decreases at unit rate, ``z`` follows the linear ZEM dynamics,
``lambda`` turns at the LOS rate ``V_lambda / rho`` with ``rho = -V_rho t_go``,
and ``gamma_T`` turns at ``a_T / V_T`` with ``a_T`` recovered from ``z``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .game_math import GameGeometry, singular_boundary, zem_propagate
from .immpf import ParticleCloud, systematic_resample

# Regularization added to an information matrix that fails to invert.
JITTER = 1e-12
STOP_HORIZON = "horizon"
STOP_END = "end_of_engagement"


@dataclass(frozen=True)
class AdmissibleSet:
    candidates: np.ndarray
    w_thres: float
    all_levels: np.ndarray
    outside_mass: np.ndarray

    def __len__(self):
        return len(self.candidates)

    @property
    def empty(self) -> bool:
        return len(self.candidates) == 0


@dataclass(frozen=True)
class InfoState:
    fim: np.ndarray
    horizon_steps: int
    stop_reason: str = STOP_HORIZON
    regularized: bool = False
    min_eig_ratio: float = 0.0

    @property
    def sigma11(self) -> np.ndarray:
        """(t_go, z) block of the CRLB."""
        return _spd_inv(self.fim)[:2, :2]

    @property
    def det_sigma11(self) -> float:
        return float(np.linalg.det(self.sigma11))


@dataclass(frozen=True)
class ShapingResult:
    u_m: float | None
    admissible: AdmissibleSet
    dets: np.ndarray
    steps: int
    stop_reason: str

    @property
    def fallback(self) -> bool:
        return self.u_m is None


def command_levels(n_levels: int, geom: GameGeometry) -> np.ndarray:
    if n_levels < 2:
        raise ValueError("n_levels must be at least 2")
    # exact ratios first so the end levels are exactly +-a_M and an odd count has an exact zero
    return (2.0 * np.arange(n_levels) - (n_levels - 1)) / (n_levels - 1) * geom.pursuer.a_max


def admissible_commands(cloud, n_levels: int, w_thres: float, geom: GameGeometry, dt: float) -> AdmissibleSet:
    """Commands whose one-interval outcome leaves at most ``w_thres`` mass outside."""
    levels = command_levels(n_levels, geom)
    st = cloud.states
    t_go = np.maximum(st[:, 0], 0.0)
    tau = np.minimum(dt, t_go)
    u_t = np.where(cloud.modes == 1, geom.evader.a_max, -geom.evader.a_max)
    zs_next = singular_boundary(t_go - tau, geom)
    z_next = zem_propagate(st[None, :, 1], t_go[None, :], tau[None, :], levels[:, None], u_t[None, :], geom)
    outside = (np.abs(z_next) > zs_next[None, :]) @ cloud.weights
    keep = outside <= w_thres
    return AdmissibleSet(levels[keep], w_thres, levels, outside)


def shaping_subsample(cloud, n: int, rng: np.random.Generator) -> ParticleCloud:
    """Equal-weight systematic resample of ``n`` particles."""
    idx = systematic_resample(cloud.weights / cloud.weights.sum(), n, rng)
    return ParticleCloud(cloud.states[idx].copy(), cloud.modes[idx].copy(), np.full(n, 1.0 / n), cloud.t,
                         cloud.gamma_m, cloud.a_m)


def initial_information(sample) -> tuple[np.ndarray, bool]:
    """Inverse of the subsample covariance, regularized if singular."""
    cov = sample.covariance()
    cov = 0.5 * (cov + cov.T)
    try:
        np.linalg.cholesky(cov)
        return _spd_inv(cov), False
    except np.linalg.LinAlgError:
        return _spd_inv(cov + JITTER * np.eye(4)), True


def _spd_inv(a):
    d = np.sqrt(np.abs(np.diag(a)))
    d = np.where(d > 0, d, 1.0)
    inv = np.linalg.inv(a / np.outer(d, d)) / np.outer(d, d)
    return 0.5 * (inv + inv.T)


def fim_step(j, f, q, h, r):
    """One step of the posterior information recursion."""
    p = q + f @ _spd_inv(j) @ f.T
    return _spd_inv(0.5 * (p + p.T)) + np.outer(h, h) / r


# ---------------------------------------------------------------- compiled core

@njit(cache=True)
def _psi(x):
    if x < 0.1:
        out = 0.0
        term = 1.0
        for n in range(1, 15):
            term = term * (-x) / n
            if n >= 2:
                out += term
        return out
    return math.exp(-min(x, 700.0)) + x - 1.0


@njit(cache=True)
def _psi_prime(x):
    return -math.expm1(-min(x, 700.0))


@njit(cache=True)
def _upsilon(x):
    if x < 0.1:
        out = 0.0
        term = 1.0
        for n in range(1, 15):
            term = term * (-x) / n
            if n >= 3:
                out -= term
        return out
    return 0.5 * x * x - x + 1.0 - math.exp(-min(x, 700.0))


@njit(cache=True)
def _inv_scaled(a):
    """Inverse of a symmetric positive definite matrix via diagonal scaling.

    Returns ``(inverse, regularized)``; a numerically singular matrix gets
    ``JITTER`` added to its scaled diagonal.
    """
    n = a.shape[0]
    d = np.empty(n)
    for i in range(n):
        v = abs(a[i, i])
        d[i] = math.sqrt(v) if v > 0 else 1.0
    s = np.empty_like(a)
    for i in range(n):
        for k in range(n):
            s[i, k] = 0.5 * (a[i, k] + a[k, i]) / (d[i] * d[k])
    reg = False
    if np.linalg.eigvalsh(s)[0] <= 1e-13:
        for i in range(n):
            s[i, i] += 1e-12
        reg = True
    inv = np.linalg.inv(s)
    out = np.empty_like(a)
    for i in range(n):
        for k in range(n):
            out[i, k] = 0.5 * (inv[i, k] + inv[k, i]) / (d[i] * d[k])
    return out, reg


@njit(cache=True)
def _game_step(x, g_m, a_m, u, u_t, dt, prm, jac):
    """Euler step of the game-space map; writes the 4x4 Jacobian into ``jac``."""
    am_max, tm, vm, at_max, tt, vt = prm[0], prm[1], prm[2], prm[3], prm[4], prm[5]
    t_go, z, lam, g_t = x[0], x[1], x[2], x[3]
    th_m = t_go / tm
    th_t = t_go / tt
    psi_m, psi_t = _psi(th_m), _psi(th_t)
    dpsi_m, dpsi_t = _psi_prime(th_m), _psi_prime(th_t)
    d_m = g_m - lam
    d_t = g_t + lam
    sdm, cdm = math.sin(d_m), math.cos(d_m)
    sdt, cdt = math.sin(d_t), math.cos(d_t)
    v_rho = -(vm * cdm + vt * cdt)
    v_lam = -vm * sdm + vt * sdt
    # LOS rate g = -V_lam / (V_rho t_go)
    g = -v_lam / (v_rho * t_go)
    dg_dt = -g / t_go
    dg_dl = (v_rho * v_rho + v_lam * v_lam) / (v_rho * v_rho * t_go)
    dg_dg = -(vt * cdt * v_rho - v_lam * vt * sdt) / (v_rho * v_rho * t_go)
    # evader acceleration recovered from the ZEM
    cl, sl = math.cos(lam), math.sin(lam)
    a_mn = a_m * cdm
    num = z - t_go * v_lam * cl + a_mn * tm * tm * psi_m
    den = cdt * tt * tt * psi_t
    if abs(den) < 1e-12:
        den = 1e-12 if den >= 0 else -1e-12
    a_t = num / den
    da_dz = 1.0 / den
    dnum_dt = -v_lam * cl + a_mn * tm * dpsi_m
    dden_dt = cdt * tt * dpsi_t
    da_dt = dnum_dt / den - num * dden_dt / (den * den)
    dvl_dl = -v_rho
    dnum_dl = -t_go * (dvl_dl * cl - v_lam * sl) + a_m * sdm * tm * tm * psi_m
    dden_dl = -sdt * tt * tt * psi_t
    da_dl = dnum_dl / den - num * dden_dl / (den * den)
    dnum_dg = -t_go * vt * cdt * cl
    dden_dg = dden_dl
    da_dg = dnum_dg / den - num * dden_dg / (den * den)

    x[0] = t_go - dt
    x[1] = z + dt * (-tm * psi_m * u + tt * psi_t * u_t)
    x[2] = lam + dt * g
    x[3] = g_t + dt * a_t / vt

    for i in range(4):
        for k in range(4):
            jac[i, k] = 0.0
    jac[0, 0] = 1.0
    jac[1, 0] = dt * (-u * dpsi_m + u_t * dpsi_t)
    jac[1, 1] = 1.0
    jac[2, 0] = dt * dg_dt
    jac[2, 2] = 1.0 + dt * dg_dl
    jac[2, 3] = dt * dg_dg
    jac[3, 0] = dt * da_dt / vt
    jac[3, 1] = dt * da_dz / vt
    jac[3, 2] = dt * da_dl / vt
    jac[3, 3] = 1.0 + dt * da_dg / vt


@njit(cache=True)
def _z_star(t_go, prm):
    return prm[0] * prm[1] ** 2 * _upsilon(max(t_go, 0.0) / prm[1]) - prm[3] * prm[4] ** 2 * _upsilon(
        max(t_go, 0.0) / prm[4])


@njit(cache=True)
def _rollout(states, u_t, weights, g_m0, a_m0, cands, horizon, dt, prm, q, sigma, j0):
    n_c = cands.shape[0]
    n_p = states.shape[0]
    fims = np.empty((n_c, 4, 4))
    min_ratio = np.zeros(n_c)
    regularized = np.zeros(n_c, dtype=np.bool_)
    steps_done = 0
    ended = False
    jac = np.empty((4, 4))
    decay = math.exp(-dt / prm[1])
    for c in range(n_c):
        x = states.copy()
        g_m = np.full(n_p, g_m0)
        a_m = np.full(n_p, a_m0)
        latched = np.zeros(n_p, dtype=np.bool_)
        j = j0.copy()
        worst = 0.0
        steps = 0
        stop_end = False
        for _ in range(horizon):
            t_min = x[0, 0]
            for p in range(1, n_p):
                t_min = min(t_min, x[p, 0])
            if t_min <= dt:
                stop_end = True
                break
            f = np.zeros((4, 4))
            for p in range(n_p):
                zs = _z_star(x[p, 0], prm)
                if abs(x[p, 1]) > zs:
                    latched[p] = True
                if latched[p]:
                    u = prm[0] if x[p, 1] >= 0 else -prm[0]
                else:
                    u = cands[c]
                _game_step(x[p], g_m[p], a_m[p], u, u_t[p], dt, prm, jac)
                g_m[p] += dt * a_m[p] / prm[2]
                a_m[p] = u + (a_m[p] - u) * decay
                for i in range(4):
                    for k in range(4):
                        f[i, k] += weights[p] * jac[i, k]
            p_prev, r1 = _inv_scaled(j)
            p_cov = q + f @ p_prev @ f.T
            j, r2 = _inv_scaled(p_cov)
            j[2, 2] += 1.0 / (sigma * sigma)
            if r1 or r2:
                regularized[c] = True
            ev = np.linalg.eigvalsh(j)
            tr = 0.0
            for i in range(4):
                tr += j[i, i]
            worst = min(worst, ev[0] / tr)
            steps += 1
        fims[c] = j
        min_ratio[c] = worst
        steps_done = steps
        ended = stop_end
    return fims, steps_done, ended, min_ratio, regularized


def _params(geom: GameGeometry) -> np.ndarray:
    p, e = geom.pursuer, geom.evader
    return np.array([p.a_max, p.tau, p.v, e.a_max, e.tau, e.v])


def rollout_batch(sample, candidates, horizon: int, sigma: float, geom: GameGeometry, dt: float, q: np.ndarray,
                  j0: np.ndarray | None = None):
    """Roll every candidate out over ``sample``; returns a list of :class:`InfoState`."""
    cands = np.asarray(candidates, dtype=float).ravel()
    regularized0 = False
    if j0 is None:
        j0, regularized0 = initial_information(sample)
    if horizon < 0:
        raise ValueError("horizon must be nonnegative")
    u_t = np.where(sample.modes == 1, geom.evader.a_max, -geom.evader.a_max).astype(float)
    w = sample.weights / sample.weights.sum()
    fims, steps, ended, ratio, reg = _rollout(
        np.ascontiguousarray(sample.states, dtype=float), u_t, w, float(sample.gamma_m), float(sample.a_m), cands,
        int(horizon), float(dt), _params(geom), np.asarray(q, dtype=float), max(float(sigma), 1e-12),
        np.asarray(j0, dtype=float))
    reason = STOP_END if ended else STOP_HORIZON
    return [InfoState(fims[c], steps, reason, bool(reg[c]) or regularized0, float(ratio[c])) for c in range(len(cands))]


def rollout_fim(sample, u0: float, horizon: int, sigma: float, geom: GameGeometry, *, dt: float, q,
                j0=None) -> InfoState:
    return rollout_batch(sample, [u0], horizon, sigma, geom, dt, q, j0)[0]


def select_command(cloud, n_levels: int, w_thres: float, horizon: int, sigma: float, geom: GameGeometry, *,
                   dt: float, q, n_sample: int = 100, rng: np.random.Generator | None = None) -> ShapingResult:
    """Admissible command minimizing det of the (t_go, z) CRLB block; ``u_m=None`` signals fallback."""
    adm = admissible_commands(cloud, n_levels, w_thres, geom, dt)
    if adm.empty:
        return ShapingResult(None, adm, np.array([]), 0, STOP_HORIZON)
    if rng is None:
        rng = np.random.default_rng(0)
    sample = shaping_subsample(cloud, n_sample, rng)
    infos = rollout_batch(sample, adm.candidates, horizon, sigma, geom, dt, q)
    dets = np.array([i.det_sigma11 for i in infos])
    best = _argmin_smallest_command(dets, adm.candidates)
    return ShapingResult(float(adm.candidates[best]), adm, dets, infos[0].horizon_steps, infos[0].stop_reason)


def _argmin_smallest_command(dets, cands, rtol=1e-12):
    lowest = dets.min()
    tied = np.flatnonzero(dets <= lowest + rtol * abs(lowest))
    return int(tied[np.argmin(np.abs(cands[tied]))])

