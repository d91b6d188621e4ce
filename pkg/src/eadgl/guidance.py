"""Closed-loop guidance laws: DGL1, EADGL1 and IETS.

DGL1 applies the perfect-information law to the weighted-mean estimate.
EADGL1 and IETS decide among the four hypotheses (fast path first, full
criterion otherwise) and command accordingly; on an ambiguous decision
EADGL1 falls back to DGL1 while IETS picks an information-enhancing command.
"""
from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .bayes import AMBIGUOUS, NO_SHORTCUT, DecisionInputs, DecisionReport, Hypothesis, classify_states, decide
from .bayes import likelihoods as hypothesis_likelihoods
from .bayes import linear_commands
from .fast_path import try_fast_decision
from .game_math import GameGeometry, GameState, singular_boundary
from .immpf import ProcessNoise, TransitionModel, tpm_at
from .shaping import select_command


class LawKind(enum.Enum):
    DGL1 = "dgl1"
    EADGL1 = "eadgl1"
    IETS = "iets"

    @classmethod
    def parse(cls, text) -> "LawKind":
        if isinstance(text, cls):
            return text
        try:
            return cls(str(text).lower())
        except ValueError:
            raise ValueError(f"unknown guidance law {text!r}") from None


class ModeTag(str, enum.Enum):
    DGL1_REGULAR = "DGL1_regular"
    DGL1_LINEAR = "DGL1_linear"
    H1 = "H1"
    H2 = "H2"
    H3 = "H3"
    H4 = "H4"
    SHAPING = "Shaping"
    FALLBACK = "Fallback"


@dataclass(frozen=True)
class GuidanceCommand:
    u_m: float
    mode_tag: ModeTag
    hypothesis: str = ""
    fast_path: bool = False


@dataclass
class FastPathCounters:
    attempts: int = 0
    successes: int = 0
    ambiguous: int = 0
    fast_time: float = 0.0
    full_time: float = 0.0
    full_count: int = 0

    def merge(self, other: "FastPathCounters") -> "FastPathCounters":
        return FastPathCounters(*(a + b for a, b in zip(self.as_tuple(), other.as_tuple())))

    def as_tuple(self):
        return (self.attempts, self.successes, self.ambiguous, self.fast_time, self.full_time, self.full_count)


def dgl1_command(state: GameState, k_frac: float, geom: GameGeometry) -> GuidanceCommand:
    """Bang-bang outside the singular region, ``a_M sat(z / (k z*))`` inside."""
    if not 0 < k_frac <= 1:
        raise ValueError("k_frac must lie in (0, 1]")
    a_m = geom.pursuer.a_max
    zs = singular_boundary(max(state.t_go, 0.0), geom)
    z = state.z
    if abs(z) > zs or zs <= 0:
        u = a_m * float(np.sign(z)) if z != 0 else 0.0
        return GuidanceCommand(u, ModeTag.DGL1_REGULAR)
    u = a_m * min(max(z / (k_frac * zs), -1.0), 1.0)
    return GuidanceCommand(u, ModeTag.DGL1_LINEAR)


def bayesian_mode_command(outcome, cloud, k_frac: float, geom: GameGeometry, labels=None) -> GuidanceCommand:
    """Command for a decided hypothesis.

    H2/H3 average the saturated linear commands of their particles with the
    normalized weights (zero when the hypothesis holds no particles); H1/H4
    command the bound.
    """
    a_m = geom.pursuer.a_max
    h = Hypothesis(outcome)
    tag = ModeTag(h.name)
    if h == Hypothesis.H1:
        return GuidanceCommand(a_m, tag, h.name)
    if h == Hypothesis.H4:
        return GuidanceCommand(-a_m, tag, h.name)
    if labels is None:
        labels = classify_states(cloud.states, cloud.modes, geom)
    sel = (labels == int(h)) & (cloud.weights > 0)
    if not sel.any():
        # an empty interior hypothesis stands for the interior-command midpoint
        return GuidanceCommand(0.0, tag, h.name)
    w = cloud.weights[sel] / cloud.weights[sel].sum()
    u = float(w @ linear_commands(cloud.states[sel], k_frac, geom))
    return GuidanceCommand(float(np.clip(u, -a_m, a_m)), tag, h.name)


@dataclass
class Law:
    """Stateful guidance law bound to a scenario.

    Keeps the previous cloud and command for the priors, the fast-path
    counters, and the report of the last decision.
    """

    kind: LawKind
    config: object
    shaping_rng: np.random.Generator | None = None
    counters: FastPathCounters = field(default_factory=FastPathCounters)
    last_report: DecisionReport | None = None
    shaping_log: list = field(default_factory=list)
    log_shaping: bool = False

    def __post_init__(self):
        self.kind = LawKind.parse(self.kind)
        self.geom = self.config.geometry
        self.model = TransitionModel.from_config(self.config)
        self.q = ProcessNoise(tuple(self.config.process_std)).cov
        self.reset()

    def reset(self):
        self.prev_cloud = None
        self.prev_u = 0.0
        self.last_report = None
        self.counters = FastPathCounters()
        self.shaping_log = []

    def step(self, cloud, t: float, own=None) -> GuidanceCommand:
        cfg = self.config
        if self.kind is LawKind.DGL1:
            self.last_report = None
            cmd = dgl1_command(GameState.from_array(cloud.mean_state()), cfg.k_frac, self.geom)
        else:
            cmd = self._bayesian_step(cloud, t)
        a_m = self.geom.pursuer.a_max
        cmd = GuidanceCommand(float(np.clip(cmd.u_m, -a_m, a_m)), cmd.mode_tag, cmd.hypothesis, cmd.fast_path)
        self.prev_cloud = cloud
        self.prev_u = cmd.u_m
        return cmd

    def _decide(self, cloud, t):
        cfg = self.config
        k = cfg.k_frac if cfg.k_in_bayes else 1.0
        start = time.perf_counter()
        labels = classify_states(cloud.states, cloud.modes, self.geom)
        self.counters.attempts += 1
        fast = try_fast_decision(cloud, cfg.tau_max, self.geom, k_frac=k,
                                 check_bounds_order=cfg.check_assumption2, labels=labels)
        if fast.outcome is not NO_SHORTCUT:
            lik = hypothesis_likelihoods(cloud, self.geom, labels)
            risks = np.full(4, np.nan)
            risks[[i - 1 for i in fast.certified]] = 0.0
            report = DecisionReport(lik, np.full(4, np.nan), np.full((4, 4), np.nan), risks, fast.outcome, True, t,
                                    {"mass_a": fast.mass_a})
            self.counters.fast_time += time.perf_counter() - start
            self.counters.successes += 1
        else:
            prev = self.prev_cloud if self.prev_cloud is not None else cloud
            inputs = DecisionInputs(cloud, prev, self.prev_u, tpm_at(max(t, 0.0), self.model), cfg.tau_max,
                                    self.geom, cfg.dt, k, cfg.eps_risk)
            report = decide(inputs)
            report.t = t
            self.counters.full_time += time.perf_counter() - start
            self.counters.full_count += 1
        if report.outcome is AMBIGUOUS:
            self.counters.ambiguous += 1
        self.last_report = report
        return report, labels, k

    def _bayesian_step(self, cloud, t) -> GuidanceCommand:
        cfg = self.config
        report, labels, k = self._decide(cloud, t)
        fast = report.fast_path
        if report.outcome is not AMBIGUOUS:
            cmd = bayesian_mode_command(report.outcome, cloud, k, self.geom, labels)
            return GuidanceCommand(cmd.u_m, cmd.mode_tag, cmd.hypothesis, fast)
        fallback = dgl1_command(GameState.from_array(cloud.mean_state()), cfg.k_frac, self.geom)
        if self.kind is LawKind.IETS and t < cfg.duration - cfg.shaping_cutoff:
            res = select_command(cloud, cfg.n_levels, cfg.w_thres, cfg.horizon, cfg.sigma, self.geom, dt=cfg.dt,
                                 q=self.q, n_sample=cfg.shaping_particles, rng=self.shaping_rng)
            if self.log_shaping:
                self.shaping_log.append((t, res))
            if not res.fallback:
                return GuidanceCommand(res.u_m, ModeTag.SHAPING, str(AMBIGUOUS), fast)
        return GuidanceCommand(fallback.u_m, ModeTag.FALLBACK, str(AMBIGUOUS), fast)
