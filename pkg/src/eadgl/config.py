"""Scenario configuration and its sectioned ``key = value`` file format."""
from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .game_math import G0, GameGeometry, PlayerParams


def _f(default, section, **kw):
    return field(default=default, metadata={"section": section, **kw})


@dataclass(frozen=True)
class ScenarioConfig:
    """Every physical, filter, decision, shaping and Monte Carlo parameter.

    Defaults reproduce the nominal ballistic-missile-defense scenario:
    45 g / 20 g players with 0.2 s lags at 2500 m/s, a 0.5 mrad bearing
    sensor at 100 Hz and a 3 s head-on engagement.
    """

    # players
    a_m_max_g: float = _f(45.0, "players")
    a_t_max_g: float = _f(20.0, "players")
    tau_m: float = _f(0.2, "players")
    tau_t: float = _f(0.2, "players")
    v_m: float = _f(2500.0, "players")
    v_t: float = _f(2500.0, "players")
    # sensor
    sigma: float = _f(0.5e-3, "sensor")
    rate_hz: float = _f(100.0, "sensor")
    # engagement
    duration: float = _f(3.0, "engagement")
    los0: float = _f(0.0, "engagement")
    lateral_offset: float = _f(0.0, "engagement")
    initial_mode: int = _f(1, "engagement")
    hard_stop_factor: float = _f(1.5, "engagement")
    # radar; position relative to the interceptor launch point
    radar_x: float = _f(0.0, "radar")
    radar_y: float = _f(-5000.0, "radar")
    radar_std_rho: float = _f(50.0, "radar")
    radar_std_lambda: float = _f(math.radians(1.0), "radar")
    radar_std_gamma_t: float = _f(math.radians(3.0), "radar")
    radar_std_a_t: float = _f(10.0, "radar")
    # transition probabilities
    pi21: float = _f(1e-3, "tpm")
    pi12_base: float = _f(1e-3, "tpm")
    t_s: float = _f(1.9, "tpm")
    c12: float = _f(0.16, "tpm")
    tpm_mu: float = _f(2.5, "tpm")
    tpm_beta: float = _f(6.0, "tpm")
    tpm_alpha: float = _f(0.45, "tpm")
    # filter
    particles_per_mode: int = _f(500, "filter")
    noise_t_go: float = _f(5e-3, "filter")
    noise_z: float = _f(3.0, "filter")
    noise_lambda: float = _f(2e-4, "filter")
    noise_gamma_t: float = _f(2e-4, "filter")
    # decision
    tau_max: float = _f(0.16, "decision")
    k_frac: float = _f(0.7, "decision")
    eps_risk: float = _f(1e-6, "decision")
    k_in_bayes: bool = _f(True, "decision")
    check_assumption2: bool = _f(True, "decision")
    # shaping
    n_levels: int = _f(21, "shaping")
    shaping_particles: int = _f(100, "shaping")
    horizon: int = _f(100, "shaping")
    w_thres: float = _f(0.15, "shaping")
    shaping_cutoff: float = _f(1.0, "shaping")
    # monte carlo
    runs_per_point: int = _f(100, "mc")
    switch_grid: tuple = _f((1.5, 1.8, 2.1, 2.4, 2.7), "mc")
    seed: int = _f(0, "mc")
    workers: int = _f(1, "mc")

    def __post_init__(self):
        self.validate()

    def validate(self):
        positive = [
            "a_m_max_g", "a_t_max_g", "tau_m", "tau_t", "v_m", "v_t", "rate_hz", "duration",
            "radar_std_rho", "radar_std_lambda", "radar_std_gamma_t", "radar_std_a_t",
            "tpm_alpha", "tpm_beta", "tau_max", "particles_per_mode", "n_levels",
            "shaping_particles", "horizon", "runs_per_point", "hard_stop_factor",
        ]
        for name in positive:
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        nonneg = ["sigma", "noise_t_go", "noise_z", "noise_lambda", "noise_gamma_t", "eps_risk", "c12",
                  "shaping_cutoff"]
        for name in nonneg:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        for name in ("pi21", "pi12_base", "w_thres"):
            if not 0 <= getattr(self, name) <= 1:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if not 0 < self.k_frac <= 1:
            raise ConfigError("k_frac must lie in (0, 1]")
        if self.initial_mode not in (1, 2):
            raise ConfigError("initial_mode must be 1 or 2")
        if self.n_levels < 2:
            raise ConfigError("n_levels must be at least 2")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.hard_stop_factor < 1:
            raise ConfigError("hard_stop_factor must be at least 1")

    @property
    def geometry(self) -> GameGeometry:
        return GameGeometry(
            pursuer=PlayerParams(self.a_m_max_g * G0, self.tau_m, self.v_m),
            evader=PlayerParams(self.a_t_max_g * G0, self.tau_t, self.v_t),
        )

    @property
    def dt(self) -> float:
        return 1.0 / self.rate_hz

    @property
    def initial_range(self) -> float:
        return (self.v_m + self.v_t) * self.duration

    @property
    def radar_cov(self) -> np.ndarray:
        std = [self.radar_std_rho, self.radar_std_lambda, self.radar_std_gamma_t, self.radar_std_a_t]
        return np.diag(np.square(std))

    @property
    def process_std(self) -> np.ndarray:
        return np.array([self.noise_t_go, self.noise_z, self.noise_lambda, self.noise_gamma_t])

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(ScenarioConfig)}


def _parse_value(name, text):
    kind = type(_FIELDS[name].default)
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is tuple:
            return parse_grid(text)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {text!r}") from exc
    raise ConfigError(f"unsupported field type for {name}")


def parse_grid(text: str) -> tuple:
    """Parse ``"1.5, 1.8, 2.1"`` or a ``start:stop:step`` range (stop inclusive)."""
    text = text.strip()
    if ":" in text:
        parts = [float(p) for p in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise ValueError(f"bad range {text!r}")
        start, stop, step = parts
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return tuple(round(start + i * step, 12) for i in range(n))
    return tuple(float(p) for p in text.replace(";", ",").split(",") if p.strip())


def loads(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Parse config text; unknown sections or keys are errors."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    changes = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            f = _FIELDS.get(key)
            if f is None or f.metadata["section"] != section:
                raise ConfigError(f"unknown key [{section}] {key}")
            changes[key] = _parse_value(key, value)
    return dataclasses.replace(base or ScenarioConfig(), **changes)


def load(path) -> ScenarioConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return loads(text)


def dumps(config: ScenarioConfig) -> str:
    sections: dict[str, list[str]] = {}
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if isinstance(value, tuple):
            value = ", ".join(repr(v) for v in value)
        sections.setdefault(f.metadata["section"], []).append(f"{f.name} = {value}")
    return "\n\n".join(f"[{s}]\n" + "\n".join(lines) for s, lines in sections.items()) + "\n"
