"""DGL1 game geometry.

Stateless functions for the linearized pursuit-evasion game with first-order
players: the Psi/Upsilon kernels, the singular-region boundary, the zero-effort
miss (ZEM) and its closed-form propagation under constant commands, and the
transforms between the physical and game coordinates.

All functions accept scalars or numpy arrays and broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DomainError, SingularTransformError

#: Standard gravity, converts g-units to m/s^2.
G0 = 9.80665

# Below this argument Psi and Upsilon are evaluated from their Taylor series;
# the closed forms lose relative accuracy to cancellation there.
_SERIES_CUTOFF = 0.1
_SERIES_ORDER = 14
# exp(-theta) is flushed to zero above this argument.
_EXP_FLUSH = 700.0


@dataclass(frozen=True)
class PlayerParams:
    """Acceleration bound (m/s^2), first-order time constant (s), speed (m/s)."""

    a_max: float
    tau: float
    v: float

    def __post_init__(self):
        if not (self.a_max > 0 and self.tau > 0 and self.v > 0):
            raise DomainError(f"player parameters must be positive: {self}")


@dataclass(frozen=True)
class GameGeometry:
    pursuer: PlayerParams
    evader: PlayerParams

    @property
    def mu(self) -> float:
        """Maneuverability ratio a_M^max / a_T^max."""
        return self.pursuer.a_max / self.evader.a_max

    @property
    def eps(self) -> float:
        """Time-constant ratio tau_T / tau_M."""
        return self.evader.tau / self.pursuer.tau

    @classmethod
    def nominal(cls) -> "GameGeometry":
        """45 g / 20 g players with 0.2 s lags at 2500 m/s."""
        return cls(
            pursuer=PlayerParams(a_max=45 * G0, tau=0.2, v=2500.0),
            evader=PlayerParams(a_max=20 * G0, tau=0.2, v=2500.0),
        )


@dataclass(frozen=True)
class GameState:
    """Time-to-go (s), ZEM (m), LOS angle (rad), target path angle (rad)."""

    t_go: float
    z: float
    lam: float
    gamma_t: float

    def as_array(self) -> np.ndarray:
        return np.array([self.t_go, self.z, self.lam, self.gamma_t], dtype=float)

    @classmethod
    def from_array(cls, x) -> "GameState":
        return cls(*(float(v) for v in x))


class TimeToGo(NamedTuple):
    value: float
    closing: bool


def _check_nonnegative(theta, name="theta"):
    theta = np.asarray(theta, dtype=float)
    if np.any(theta < 0):
        raise DomainError(f"{name} must be nonnegative")
    return theta


def _series(theta, first):
    # sum_{n=first}^{N} (-theta)^n / n!
    out = np.zeros_like(theta)
    term = np.ones_like(theta)
    for n in range(1, _SERIES_ORDER + 1):
        term = term * (-theta) / n
        if n >= first:
            out = out + term
    return out


def _exp_neg(theta):
    return np.where(theta > _EXP_FLUSH, 0.0, np.exp(-np.minimum(theta, _EXP_FLUSH)))


def _scalar_or_array(x):
    return float(x) if np.ndim(x) == 0 else x


def psi(theta):
    """exp(-theta) + theta - 1."""
    th = _check_nonnegative(theta)
    small = th < _SERIES_CUTOFF
    out = np.where(small, _series(th, 2), _exp_neg(th) + th - 1.0)
    return _scalar_or_array(out)


def psi_prime(theta):
    th = _check_nonnegative(theta)
    out = -np.expm1(-np.minimum(th, _EXP_FLUSH))
    return _scalar_or_array(out)


def upsilon(theta):
    """theta^2/2 - exp(-theta) - theta + 1, the antiderivative of psi."""
    th = _check_nonnegative(theta)
    small = th < _SERIES_CUTOFF
    out = np.where(small, -_series(th, 3), 0.5 * th * th - th + 1.0 - _exp_neg(th))
    return _scalar_or_array(out)


def singular_boundary(t_go, geom: GameGeometry):
    """Upper boundary z*(t_go) of the singular region; the lower one is -z*."""
    t_go = _check_nonnegative(t_go, "t_go")
    p, e = geom.pursuer, geom.evader
    out = p.a_max * p.tau**2 * upsilon(t_go / p.tau) - e.a_max * e.tau**2 * upsilon(t_go / e.tau)
    return _scalar_or_array(out)


def normal_accelerations(a_m, gamma_m, a_t, gamma_t, lam):
    """Player accelerations projected normal to the instantaneous LOS."""
    return a_m * np.cos(gamma_m - lam), a_t * np.cos(gamma_t + lam)


def zem_from_physical(rho, lam, v_rho, v_lambda, a_m_normal, a_t_normal, t_go, geom: GameGeometry):
    """ZEM as the PN term t_go*V_lambda*cos(lambda) plus the lag correction."""
    del rho, v_rho  # enter only through t_go
    p, e = geom.pursuer, geom.evader
    z_pn = t_go * v_lambda * np.cos(lam)
    z_acc = -a_m_normal * p.tau**2 * psi(t_go / p.tau) + a_t_normal * e.tau**2 * psi(t_go / e.tau)
    return z_pn + z_acc


def t_go_estimate(rho: float, v_rho: float) -> TimeToGo:
    """-rho/V_rho while closing; ``closing=False`` once V_rho >= 0."""
    if rho < 0:
        raise DomainError("rho must be nonnegative")
    if v_rho >= 0:
        return TimeToGo(0.0, False)
    return TimeToGo(-rho / v_rho, True)


def physical_from_game(state: GameState, v_rho, v_lambda, a_m_normal, geom: GameGeometry, tol=1e-12):
    """Recover (rho, a_T) from a game state.

    ``v_rho`` and ``v_lambda`` follow from the angles of the state and the
    pursuer's own path angle; ``a_m_normal`` is the pursuer's known normal
    acceleration.
    """
    p, e = geom.pursuer, geom.evader
    t_go = state.t_go
    if t_go <= 0:
        raise DomainError("t_go must be positive")
    denom = np.cos(state.gamma_t + state.lam) * e.tau**2 * psi(t_go / e.tau)
    if abs(denom) < tol:
        raise SingularTransformError(f"target-acceleration transform is singular (denominator {denom:.3e})")
    rho = -v_rho * t_go
    a_t = (state.z - t_go * v_lambda * np.cos(state.lam) + a_m_normal * p.tau**2 * psi(t_go / p.tau)) / denom
    return rho, a_t


def zem_sensitivities(t_go, tau, geom: GameGeometry):
    """ZEM displacement per unit pursuer/evader command over [t_go, t_go - tau].

    Returns ``(d_m, d_t)`` with ``d_m = tau_M^2 [Upsilon(theta) - Upsilon(eta)]``
    and the evader analogue; both are nonnegative.
    """
    p, e = geom.pursuer, geom.evader
    t_go = np.asarray(t_go, dtype=float)
    rest = np.maximum(t_go - tau, 0.0)
    d_m = p.tau**2 * (upsilon(t_go / p.tau) - upsilon(rest / p.tau))
    d_t = e.tau**2 * (upsilon(t_go / e.tau) - upsilon(rest / e.tau))
    return d_m, d_t


def zem_propagate(z, t_go, tau, u_m, u_t, geom: GameGeometry):
    """ZEM after holding commands ``u_m``, ``u_t`` for ``tau`` seconds."""
    t_go = _check_nonnegative(t_go, "t_go")
    tau = _check_nonnegative(tau, "tau")
    if np.any(tau > t_go * (1 + 1e-12) + 1e-15):
        raise DomainError("propagation span exceeds time-to-go")
    d_m, d_t = zem_sensitivities(t_go, tau, geom)
    out = z - u_m * d_m + u_t * d_t
    return _scalar_or_array(out)


def zem_rate(t_go, u_m, u_t, geom: GameGeometry):
    """Linearized ZEM dynamics dZ/dt = -tau_M Psi(theta) u_M + tau_T Psi(theta/eps) u_T."""
    p, e = geom.pursuer, geom.evader
    return -p.tau * psi(t_go / p.tau) * u_m + e.tau * psi(t_go / e.tau) * u_t


def relative_velocities(gamma_m, gamma_t, lam, geom: GameGeometry):
    """Closing and LOS-normal relative velocity components (V_rho, V_lambda)."""
    d_m = gamma_m - lam
    d_t = gamma_t + lam
    vm, vt = geom.pursuer.v, geom.evader.v
    v_rho = -(vm * np.cos(d_m) + vt * np.cos(d_t))
    v_lam = -vm * np.sin(d_m) + vt * np.sin(d_t)
    return v_rho, v_lam
