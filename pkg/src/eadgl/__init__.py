"""Estimation-aware differential-game guidance with Bayesian hypothesis decisions."""
from .config import ScenarioConfig
from .game_math import GameGeometry, GameState, PlayerParams, psi, singular_boundary, upsilon
from .guidance import LawKind

__all__ = ["GameGeometry", "GameState", "LawKind", "PlayerParams", "ScenarioConfig", "psi", "singular_boundary",
           "upsilon"]
__version__ = "0.1.0"
