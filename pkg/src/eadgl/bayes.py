"""Four-hypothesis Bayesian decision over a particle cloud.

The game space is split into H1 (above the singular region), H2/H3 (inside,
target mode 1/2) and H4 (below). Each hypothesis is scored by its
unnormalized additional risk

    I_i = sum_{j != i} P_j L_j (C_ij - C_jj)^+

where ``L_j`` is the cloud mass in H_j, ``P_j`` the prior mass obtained by
propagating the previous cloud with and without a mode switch, ``C_jj`` the
current excess distance outside the singular region and ``C_ij`` the excess
after propagating the H_j particles for ``tau`` under the command implied by
deciding H_i.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .game_math import GameGeometry, singular_boundary, zem_propagate, zem_sensitivities

HYPOTHESES = (1, 2, 3, 4)
# Tie-break preference among equal-risk hypotheses: stay inside first.
TIE_ORDER = (2, 3, 1, 4)


class Hypothesis(enum.IntEnum):
    H1 = 1
    H2 = 2
    H3 = 3
    H4 = 4

    def __str__(self):
        return self.name


class Verdict(enum.Enum):
    AMBIGUOUS = "Ambiguous"
    NO_SHORTCUT = "NoShortcut"

    def __str__(self):
        return self.value


AMBIGUOUS = Verdict.AMBIGUOUS
NO_SHORTCUT = Verdict.NO_SHORTCUT


@dataclass
class DecisionInputs:
    cloud_now: object
    cloud_prev: object
    u_m_prev: float
    tpm: np.ndarray
    tau_max: float
    geom: GameGeometry
    dt: float
    k_frac: float = 1.0
    eps_risk: float = 1e-6


@dataclass
class DecisionReport:
    likelihoods: np.ndarray
    priors: np.ndarray
    costs: np.ndarray
    risks: np.ndarray
    outcome: object
    fast_path: bool = False
    t: float = float("nan")
    extras: dict = field(default_factory=dict)


def classify_states(states, modes, geom: GameGeometry) -> np.ndarray:
    """Hypothesis index (1..4) of each row of ``states``; the region is closed."""
    states = np.atleast_2d(states)
    z = states[:, 1]
    zs = singular_boundary(np.maximum(states[:, 0], 0.0), geom)
    inside_h = np.where(np.asarray(modes) == 1, 2, 3)
    return np.where(z > zs, 1, np.where(z < -zs, 4, inside_h)).astype(np.int8)


def classify(particle, geom: GameGeometry) -> Hypothesis:
    h = classify_states(particle.state.as_array()[None, :], [particle.mode], geom)[0]
    return Hypothesis(int(h))


def likelihoods(cloud, geom: GameGeometry, labels=None) -> np.ndarray:
    """Cloud mass per hypothesis."""
    if labels is None:
        labels = classify_states(cloud.states, cloud.modes, geom)
    out = np.bincount(labels, weights=cloud.weights, minlength=5)[1:]
    return out / out.sum()


def linear_commands(states, k_frac: float, geom: GameGeometry) -> np.ndarray:
    """Saturated linear DGL1 command ``a_M sat(z / (k z*))`` per state."""
    a_m = geom.pursuer.a_max
    z = states[:, 1]
    zs = singular_boundary(np.maximum(states[:, 0], 0.0), geom) * k_frac
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(zs > 0, z / zs, np.sign(z))
    return a_m * np.clip(ratio, -1.0, 1.0)


def _normalized(w):
    s = w.sum()
    return w / s if s > 0 else w


def cost_correct(cloud, j: int, geom: GameGeometry, labels=None) -> float:
    """Weighted mean excess ``max(0, |z| - z*)`` of the H_j particles."""
    if labels is None:
        labels = classify_states(cloud.states, cloud.modes, geom)
    sel = labels == j
    w = cloud.weights[sel]
    if w.sum() <= 0:
        raise ValueError(f"H{j} carries no mass")
    st = cloud.states[sel]
    zs = singular_boundary(np.maximum(st[:, 0], 0.0), geom)
    return float(_normalized(w) @ np.maximum(0.0, np.abs(st[:, 1]) - zs))


def hypothesis_commands(cloud, i: int, labels, k_frac: float, geom: GameGeometry):
    """Commands and normalized weights representing the decision H_i.

    Non-empty H2/H3 use their particles' linear commands; H1/H4 and an empty
    H2/H3 collapse to a single canonical command (+a_M, -a_M, or 0).
    """
    a_m = geom.pursuer.a_max
    if i in (2, 3):
        sel = (labels == i) & (cloud.weights > 0)
        if sel.any():
            return linear_commands(cloud.states[sel], k_frac, geom), _normalized(cloud.weights[sel])
        return np.array([0.0]), np.array([1.0])
    return np.array([a_m if i == 1 else -a_m]), np.array([1.0])


def mean_excess(a, d, b, u, w):
    """``sum_k w_k max(0, |a - u_k d| - b)`` for each (a, d, b) triple.

    ``a``, ``d >= 0`` and ``b`` are arrays over target particles; ``u``, ``w``
    the command population. For ``b >= 0`` at most one side of the absolute
    value is active, so sorting ``u`` once turns each sum into two prefix sums
    located by binary search.
    """
    order = np.argsort(u, kind="stable")
    us, ws = u[order], w[order]
    cw = np.concatenate([[0.0], np.cumsum(ws)])
    cwu = np.concatenate([[0.0], np.cumsum(ws * us)])
    tw, twu = cw[-1], cwu[-1]
    a, d, b = np.broadcast_arrays(np.asarray(a, float), np.asarray(d, float), np.asarray(b, float))
    out = np.zeros(a.shape)
    # with an empty singular region (b < 0) both branches can be active; sum directly
    empty = b < 0
    if empty.any():
        out[empty] = np.maximum(0.0, np.abs(a[empty, None] - us[None, :] * d[empty, None]) - b[empty, None]) @ ws
    moving = (d > 0) & ~empty
    fixed = (d <= 0) & ~empty
    out[fixed] = tw * np.maximum(0.0, np.abs(a[fixed]) - b[fixed])
    am, dm, bm = a[moving], d[moving], b[moving]
    # a - u d - b > 0  <=>  u < (a - b)/d
    with np.errstate(over="ignore"):  # tiny d gives +-inf thresholds, which searchsorted handles
        lo = np.searchsorted(us, (am - bm) / dm, side="left")
        # u d - a - b > 0  <=>  u > (a + b)/d
        hi = np.searchsorted(us, (am + bm) / dm, side="right")
    below = (am - bm) * cw[lo] - dm * cwu[lo]
    above = dm * (twu - cwu[hi]) - (am + bm) * (tw - cw[hi])
    out[moving] = np.maximum(below, 0.0) + np.maximum(above, 0.0)
    return out


def cost_wrong(cloud, i: int, j: int, tau_max: float, geom: GameGeometry, *, k_frac=1.0, labels=None) -> float:
    """Mean propagated excess of the H_j particles when H_i is decided."""
    if i == j:
        raise ValueError("cost_wrong needs i != j")
    if labels is None:
        labels = classify_states(cloud.states, cloud.modes, geom)
    sel = labels == j
    w = cloud.weights[sel]
    if w.sum() <= 0:
        raise ValueError(f"H{j} carries no mass")
    u, wu = hypothesis_commands(cloud, i, labels, k_frac, geom)
    st = cloud.states[sel]
    t_go = np.maximum(st[:, 0], 0.0)
    tau = np.minimum(tau_max, t_go)
    u_t = np.where(cloud.modes[sel] == 1, geom.evader.a_max, -geom.evader.a_max)
    d_m, d_t = zem_sensitivities(t_go, tau, geom)
    a = st[:, 1] + u_t * d_t
    b = singular_boundary(t_go - tau, geom)
    return float(_normalized(w) @ mean_excess(a, d_m, b, u, wu))


def switch_probability(tpm: np.ndarray, mode_probs) -> float:
    """Probability that the target changed mode over the last interval."""
    return float(tpm[0, 1] * mode_probs[0] + tpm[1, 0] * mode_probs[1])


def priors(cloud_prev, u_m_prev: float, tpm: np.ndarray, mode_probs_prev, geom: GameGeometry, dt: float):
    """Prior hypothesis masses by total probability over switch / no switch.

    The previous cloud is propagated one interval in closed form twice: with
    every particle's mode flipped (switch at the interval start) and
    unflipped. Returns ``(priors, p_switch)``.
    """
    p_sw = switch_probability(tpm, mode_probs_prev)
    st = cloud_prev.states
    t_go = np.maximum(st[:, 0], 0.0)
    tau = np.minimum(dt, t_go)
    out = np.zeros(4)
    for flipped, p in ((False, 1.0 - p_sw), (True, p_sw)):
        modes = 3 - cloud_prev.modes if flipped else cloud_prev.modes
        u_t = np.where(modes == 1, geom.evader.a_max, -geom.evader.a_max)
        z_next = zem_propagate(st[:, 1], t_go, tau, u_m_prev, u_t, geom)
        nxt = np.column_stack([t_go - tau, z_next])
        labels = classify_states(nxt, modes, geom)
        out += p * np.bincount(labels, weights=cloud_prev.weights, minlength=5)[1:]
    return out, p_sw


def risks(lik, pri, costs) -> np.ndarray:
    """``I_i = sum_{j != i} P_j L_j (C_ij - C_jj)^+``."""
    excess = np.maximum(costs - np.diag(costs)[None, :], 0.0)
    np.fill_diagonal(excess, 0.0)
    return excess @ (pri * lik)


def pick(risk, lik, eps_risk: float):
    """Argmin over feasible hypotheses with ambiguity detection and the inside-first tie-break.

    H1 and H4 are always feasible; H2 and H3 only when they hold particles.
    """
    feasible = [h for h in TIE_ORDER if h in (1, 4) or lik[h - 1] > 0]
    r = np.array([risk[h - 1] for h in feasible])
    if np.all(r < eps_risk):
        return AMBIGUOUS
    lowest = r.min()
    return Hypothesis(next(h for h, v in zip(feasible, r) if v <= lowest + eps_risk))


def cost_matrix(cloud, labels, lik, tau_max: float, geom: GameGeometry, k_frac: float) -> np.ndarray:
    costs = np.zeros((4, 4))
    for j in HYPOTHESES:
        if lik[j - 1] <= 0:
            continue
        costs[j - 1, j - 1] = 0.0 if j in (2, 3) else cost_correct(cloud, j, geom, labels)
        for i in HYPOTHESES:
            if i != j:
                costs[i - 1, j - 1] = cost_wrong(cloud, i, j, tau_max, geom, k_frac=k_frac, labels=labels)
    return costs


def decide(inputs: DecisionInputs) -> DecisionReport:
    """Full decision: likelihoods, priors, cost matrix, risks and outcome."""
    cloud = inputs.cloud_now
    geom = inputs.geom
    labels = classify_states(cloud.states, cloud.modes, geom)
    lik = likelihoods(cloud, geom, labels)
    prev = inputs.cloud_prev
    pri, p_sw = priors(prev, inputs.u_m_prev, inputs.tpm, prev.mode_probs(), geom, inputs.dt)
    pri = np.where(lik > 0, pri, 0.0)
    costs = cost_matrix(cloud, labels, lik, inputs.tau_max, geom, inputs.k_frac)
    risk = risks(lik, pri, costs)
    outcome = pick(risk, lik, inputs.eps_risk)
    return DecisionReport(lik, pri, costs, risk, outcome, False, cloud.t, {"p_switch": p_sw})
