"""Walk through the Bayesian hypothesis decision on a few hand-built particle clouds.

Each cloud is shown with the full risk vector, the chosen hypothesis and what the
geometric shortcut concluded without evaluating any risk.
"""
import numpy as np

from eadgl.bayes import DecisionInputs, decide
from eadgl.fast_path import try_fast_decision
from eadgl.game_math import GameGeometry, singular_boundary
from eadgl.immpf import ParticleCloud

GEOM = GameGeometry.nominal()
TAU = 0.16


def cloud(t_go, fractions, modes):
    """Particles at ``t_go`` with ZEM given as fractions of the singular boundary."""
    b = float(singular_boundary(t_go, GEOM))
    states = np.array([[t_go, f * b, 0.0, 0.0] for f in fractions])
    return ParticleCloud(states, np.asarray(modes), np.full(len(modes), 1.0 / len(modes)), 0.0)


CASES = {
    "deep inside the singular region": cloud(2.5, [0.05, 0.1, -0.1, 0.0], [1, 1, 2, 2]),
    "entirely above the region": cloud(1.5, [1.4, 1.8, 2.2], [1, 2, 1]),
    "straddling both edges": cloud(1.0, [-1.5, -0.2, 0.3, 1.5], [2, 1, 2, 1]),
    "mostly near the upper edge": cloud(1.2, [0.8, 0.9, 0.95, 1.05], [1, 1, 2, 1]),
}


def main():
    for name, c in CASES.items():
        full = decide(DecisionInputs(c, c, 0.0, np.eye(2), TAU, GEOM, 0.01))
        fast = try_fast_decision(c, TAU, GEOM)
        risks = " ".join(f"{r:9.3g}" for r in full.risks)
        print(f"{name}\n  risks I1..I4: {risks}\n  full decision: {full.outcome}   shortcut: {fast.outcome}\n")


if __name__ == "__main__":
    main()
