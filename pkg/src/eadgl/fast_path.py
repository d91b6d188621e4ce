"""Zero-risk certification without building the cost matrix.

For each hypothesis H_i there is a region A_i of game space whose particles
cannot leave the singular region within ``tau`` when H_i's command is
applied, whatever the target does. If every particle outside H_i lies in
A_i, all the costs feeding I_i vanish, so I_i = 0 and H_i is an optimal
decision. Region tests use the closed-form ZEM propagation:

    A1:  z >= -z* + 2 a_M D_M
    A2:  z <= z* - (a_M - u_lo2) D_M   and   -z <= z* - (a_M + u_hi2) D_M
    A3:  same as A2 with the H3 command bounds
    A4:  z <= z* - 2 a_M D_M

with ``D_M`` the pursuer's ZEM sensitivity over ``tau``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .bayes import AMBIGUOUS, NO_SHORTCUT, TIE_ORDER, Hypothesis, classify_states, linear_commands
from .game_math import GameGeometry, singular_boundary, zem_sensitivities

MASS_TOL = 1e-12


@dataclass(frozen=True)
class InteriorCommandBounds:
    u_hi_2: float
    u_lo_2: float
    u_hi_3: float
    u_lo_3: float

    def bounds(self, i: int) -> tuple[float, float]:
        return (self.u_lo_2, self.u_hi_2) if i == 2 else (self.u_lo_3, self.u_hi_3)


@dataclass(frozen=True)
class RegionMembership:
    in_a: np.ndarray  # (N, 4) bool
    mass_a: np.ndarray  # (4,)

    @property
    def in_A1(self):
        return self.in_a[:, 0]

    @property
    def in_A2(self):
        return self.in_a[:, 1]

    @property
    def in_A3(self):
        return self.in_a[:, 2]

    @property
    def in_A4(self):
        return self.in_a[:, 3]


def interior_bounds(cloud, geom: GameGeometry, k_frac: float = 1.0, labels=None) -> InteriorCommandBounds:
    """Extreme interior commands of the live H2 and H3 particles (zeros if empty)."""
    if labels is None:
        labels = classify_states(cloud.states, cloud.modes, geom)
    out = []
    for i in (2, 3):
        sel = (labels == i) & (cloud.weights > 0)
        if sel.any():
            u = linear_commands(cloud.states[sel], k_frac, geom)
            out += [float(u.max()), float(u.min())]
        else:
            out += [0.0, 0.0]
    return InteriorCommandBounds(*out)


def region_membership(cloud, tau: float, bounds: InteriorCommandBounds, geom: GameGeometry) -> RegionMembership:
    """Per-particle membership in A1..A4; each particle's span is clamped to its own t_go."""
    a_m = geom.pursuer.a_max
    t_go = np.maximum(cloud.states[:, 0], 0.0)
    z = cloud.states[:, 1]
    d_m, _ = zem_sensitivities(t_go, np.minimum(tau, t_go), geom)
    zs = singular_boundary(t_go, geom)
    in_a = np.empty((len(z), 4), dtype=bool)
    in_a[:, 0] = z >= -zs + 2 * a_m * d_m
    for col, i in ((1, 2), (2, 3)):
        lo, hi = bounds.bounds(i)
        in_a[:, col] = (z <= zs - (a_m - lo) * d_m) & (-z <= zs - (a_m + hi) * d_m)
    in_a[:, 3] = z <= zs - 2 * a_m * d_m
    mass = cloud.weights @ in_a
    return RegionMembership(in_a, np.clip(mass, 0.0, 1.0))


def region_mass(cloud, tau: float, bounds: InteriorCommandBounds, geom: GameGeometry) -> np.ndarray:
    return region_membership(cloud, tau, bounds, geom).mass_a


def bounds_ordered(cloud, labels, bounds: InteriorCommandBounds) -> bool:
    """True unless the cloud is all inside and the H2 bounds fall below the H3 bounds.

    All-inside clouds are expected to have their upward-tending (H2)
    particles nearest the upper boundary and their downward-tending (H3)
    particles nearest the lower one.
    """
    inside = cloud.weights @ ((labels == 2) | (labels == 3))
    if inside < 1.0 - MASS_TOL:
        return True
    return bounds.u_hi_2 >= bounds.u_hi_3 and bounds.u_lo_2 >= bounds.u_lo_3


@dataclass(frozen=True)
class FastResult:
    outcome: object
    certified: tuple
    mass_a: np.ndarray
    bounds: InteriorCommandBounds


def try_fast_decision(cloud, tau_max: float, geom: GameGeometry, *, k_frac: float = 1.0,
                      check_bounds_order: bool = True, labels=None) -> FastResult:
    """Certify zero-risk hypotheses from region membership alone.

    H_i is certified when all of the cloud's mass lies in A_i or in H_i
    itself (H_i's own particles never enter I_i). All four certified gives
    Ambiguous, some certified gives the first non-empty one in the
    inside-first order, none gives NoShortcut. With ``check_bounds_order`` the shortcut
    is skipped for all-inside clouds whose H2 command range is not above the
    H3 range (see :func:`bounds_ordered`).
    """
    if labels is None:
        labels = classify_states(cloud.states, cloud.modes, geom)
    bounds = interior_bounds(cloud, geom, k_frac, labels)
    mem = region_membership(cloud, tau_max, bounds, geom)
    if check_bounds_order and not bounds_ordered(cloud, labels, bounds):
        return FastResult(NO_SHORTCUT, (), mem.mass_a, bounds)
    certified = []
    for i in (1, 2, 3, 4):
        covered = mem.in_a[:, i - 1] | (labels == i)
        if cloud.weights @ covered >= 1.0 - MASS_TOL:
            certified.append(i)
    if len(certified) == 4:
        outcome = AMBIGUOUS
    elif certified:
        live = cloud.weights > 0
        nonempty = [h for h in TIE_ORDER if h in certified and np.any(live & (labels == h))]
        outcome = Hypothesis((nonempty or [h for h in TIE_ORDER if h in certified])[0])
    else:
        outcome = NO_SHORTCUT
    return FastResult(outcome, tuple(certified), mem.mass_a, bounds)
