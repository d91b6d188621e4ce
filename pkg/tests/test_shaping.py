import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from _clouds import random_cloud
from eadgl.config import ScenarioConfig
from eadgl.engagement import EvaderPolicy, initial_truth, truth_game_state
from eadgl.game_math import GameGeometry, singular_boundary
from eadgl.immpf import ParticleCloud
from eadgl.shaping import (
    STOP_END,
    STOP_HORIZON,
    _game_step,
    _params,
    admissible_commands,
    command_levels,
    fim_step,
    initial_information,
    rollout_batch,
    rollout_fim,
    select_command,
    shaping_subsample,
)

GEOM = GameGeometry.nominal()
A_M = GEOM.pursuer.a_max
DT = 0.01
SIGMA = 0.5e-3
Q = np.diag(np.square(ScenarioConfig().process_std))
H = np.array([0.0, 0.0, -1.0, 0.0])


def zs(t):
    return float(singular_boundary(t, GEOM))


def game_cloud(rng, n=100, t_go=2.0, spread=0.3):
    """Cloud around a realistic game state with physical LOS and heading."""
    cfg = ScenarioConfig()
    base = truth_game_state(initial_truth(cfg, EvaderPolicy(10.0)), GEOM).as_array()
    base[0] = t_go
    states = base + rng.normal(0, 1, (n, 4)) * np.array([0.01, spread * zs(t_go), 1e-3, 1e-2])
    modes = rng.integers(1, 3, n)
    return ParticleCloud(states, modes, np.full(n, 1.0 / n), 0.0)


def step(x, u, u_t, g_m=0.0, a_m=0.0):
    x = np.array(x, dtype=float)
    jac = np.empty((4, 4))
    _game_step.py_func(x, g_m, a_m, u, u_t, DT, _params(GEOM), jac)
    return x, jac


class TestJacobian:
    @settings(max_examples=40, deadline=None)
    @given(st.floats(0.3, 3.0), st.floats(-300, 300), st.floats(-0.02, 0.02), st.floats(-0.1, 0.1),
           st.floats(-A_M, A_M), st.sampled_from([-1.0, 1.0]), st.floats(-0.05, 0.05), st.floats(-300, 300))
    def test_matches_finite_difference(self, t, z, lam, g_t, u, s, g_m, a_m):
        x0 = np.array([t, z, lam, g_t])
        u_t = s * GEOM.evader.a_max
        _, jac = step(x0, u, u_t, g_m, a_m)
        h = np.array([1e-6, 1e-4, 1e-8, 1e-7])
        fd = np.empty((4, 4))
        for k in range(4):
            e = np.zeros(4)
            e[k] = h[k]
            fd[:, k] = (step(x0 + e, u, u_t, g_m, a_m)[0] - step(x0 - e, u, u_t, g_m, a_m)[0]) / (2 * h[k])
        np.testing.assert_allclose(jac, fd, rtol=1e-4, atol=1e-6)

    def test_compiled_equals_python(self):
        x = np.array([1.7, 40.0, 0.01, -0.03])
        jac = np.empty((4, 4))
        y = x.copy()
        _game_step(y, 0.02, 100.0, 200.0, 190.0, DT, _params(GEOM), jac)
        ref, rjac = step(x, 200.0, 190.0, 0.02, 100.0)
        np.testing.assert_allclose(y, ref, rtol=1e-13)
        np.testing.assert_allclose(jac, rjac, rtol=1e-12, atol=1e-15)


class TestRecursion:
    def test_identity_dynamics_add_bearing_information(self):
        j = np.diag([1.0, 2.0, 3.0, 4.0])
        for k in range(1, 6):
            j = fim_step(j, np.eye(4), np.zeros((4, 4)), H, SIGMA**2)
            assert j[2, 2] == pytest.approx(3.0 + k / SIGMA**2, rel=1e-12)
        np.testing.assert_allclose(np.diag(j)[[0, 1, 3]], [1.0, 2.0, 4.0])

    def test_symmetric_psd(self):
        rng = np.random.default_rng(0)
        j = np.eye(4)
        for _ in range(50):
            f = np.eye(4) + 0.05 * rng.normal(size=(4, 4))
            j = fim_step(j, f, Q, H, SIGMA**2)
            assert np.array_equal(j, j.T)
            assert np.linalg.eigvalsh(j)[0] >= -1e-9 * np.trace(j)

    def test_horizon_zero_returns_prior(self):
        c = game_cloud(np.random.default_rng(1))
        j0, _ = initial_information(c)
        info = rollout_fim(c, 0.0, 0, SIGMA, GEOM, dt=DT, q=Q)
        np.testing.assert_allclose(info.fim, j0, rtol=1e-12)
        assert info.horizon_steps == 0

    def test_matches_reference_recursion(self):
        # independent loop over particles with the Python step and the plain recursion
        rng = np.random.default_rng(2)
        c = game_cloud(rng, n=12)
        u0, steps = 0.3 * A_M, 25
        got = rollout_fim(c, u0, steps, SIGMA, GEOM, dt=DT, q=Q).fim
        j, _ = initial_information(c)
        x = c.states.copy()
        g_m = np.zeros(len(x))
        a_m = np.zeros(len(x))
        latched = np.zeros(len(x), bool)
        u_t = np.where(c.modes == 1, 1.0, -1.0) * GEOM.evader.a_max
        for _ in range(steps):
            f = np.zeros((4, 4))
            for p in range(len(x)):
                latched[p] |= abs(x[p, 1]) > zs(x[p, 0])
                u = math.copysign(A_M, x[p, 1]) if latched[p] else u0
                x[p], jac = step(x[p], u, u_t[p], g_m[p], a_m[p])
                g_m[p] += DT * a_m[p] / GEOM.pursuer.v
                a_m[p] = u + (a_m[p] - u) * math.exp(-DT / GEOM.pursuer.tau)
                f += jac / len(x)
            j = fim_step(j, f, Q, H, SIGMA**2)
        np.testing.assert_allclose(got, j, rtol=1e-6)

    def test_stops_at_end_of_engagement(self):
        c = game_cloud(np.random.default_rng(3), t_go=0.2)
        info = rollout_fim(c, 0.0, 100, SIGMA, GEOM, dt=DT, q=Q)
        assert info.stop_reason == STOP_END and info.horizon_steps < 20
        assert rollout_fim(game_cloud(np.random.default_rng(3)), 0.0, 10, SIGMA, GEOM, dt=DT,
                           q=Q).stop_reason == STOP_HORIZON

    def test_prefix_steps_symmetric_psd(self):
        rng = np.random.default_rng(4)
        for _ in range(5):
            c = game_cloud(rng, n=30, t_go=rng.uniform(1.2, 3.0))
            for h in range(1, 31):
                fim = rollout_fim(c, rng.uniform(-A_M, A_M), h, SIGMA, GEOM, dt=DT, q=Q).fim
                assert np.array_equal(fim, fim.T)
                assert np.linalg.eigvalsh(fim)[0] >= -1e-9 * np.trace(fim)


class TestAdmissible:
    def test_levels(self):
        lv = command_levels(21, GEOM)
        assert lv[0] == -A_M and lv[-1] == A_M and lv[10] == 0.0
        with pytest.raises(ValueError):
            command_levels(1, GEOM)

    def test_deep_interior_all_admissible(self):
        c = random_cloud(np.random.default_rng(0), GEOM, kind="deep")
        assert len(admissible_commands(c, 21, 0.15, GEOM, DT)) == 21

    def test_vacuous_threshold(self):
        c = random_cloud(np.random.default_rng(1), GEOM, kind="straddle")
        assert len(admissible_commands(c, 21, 1.0, GEOM, DT)) == 21

    def test_upper_rim_excludes_push_up(self):
        # particles on the upper edge drifting upward: only commands pulling them down survive
        t = np.full(20, 1.5)
        z = np.full(20, zs(1.5) * 0.999)
        c = ParticleCloud(np.column_stack([t, z, np.zeros(20), np.zeros(20)]), np.ones(20, int),
                          np.full(20, 0.05), 0.0)
        adm = admissible_commands(c, 21, 0.15, GEOM, DT)
        assert A_M in adm.candidates and -A_M not in adm.candidates

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0, 1), st.floats(0, 1))
    def test_monotone_in_threshold(self, seed, a, b):
        c = random_cloud(np.random.default_rng(seed), GEOM)
        lo, hi = sorted((a, b))
        small = set(admissible_commands(c, 21, lo, GEOM, DT).candidates)
        large = set(admissible_commands(c, 21, hi, GEOM, DT).candidates)
        assert small <= large


class TestSelect:
    def test_empty_set_falls_back(self):
        c = random_cloud(np.random.default_rng(2), GEOM, kind="mixed_outside")
        res = select_command(c, 21, 0.0, 100, SIGMA, GEOM, dt=DT, q=Q)
        assert res.fallback and res.u_m is None

    def test_choice_is_admissible_minimizer(self):
        rng = np.random.default_rng(5)
        c = game_cloud(rng, n=300)
        res = select_command(c, 11, 0.15, 40, SIGMA, GEOM, dt=DT, q=Q, rng=np.random.default_rng(0))
        assert res.u_m in res.admissible.candidates
        assert res.dets[list(res.admissible.candidates).index(res.u_m)] == res.dets.min()
        assert np.all(res.dets > 0)

    def test_single_candidate(self):
        c = game_cloud(np.random.default_rng(6))
        res = select_command(c, 2, 0.15, 20, SIGMA, GEOM, dt=DT, q=Q)
        assert len(res.admissible) >= 1 and res.u_m in res.admissible.candidates

    def test_tie_goes_to_smallest_command(self):
        # without bearing information no command changes the bound, so all dets tie
        c = game_cloud(np.random.default_rng(7))
        res = select_command(c, 21, 1.0, 20, math.inf, GEOM, dt=DT, q=np.zeros((4, 4)))
        if np.ptp(res.dets) <= 1e-12 * abs(res.dets.min()):
            assert res.u_m == 0.0

    def test_subsample_equal_weights(self):
        c = random_cloud(np.random.default_rng(8), GEOM, n=500)
        s = shaping_subsample(c, 100, np.random.default_rng(0))
        assert len(s) == 100 and np.all(s.weights == 0.01)


def test_rollout_invariants_on_random_clouds():
    rng = np.random.default_rng(9)
    for _ in range(100):
        c = game_cloud(rng, t_go=rng.uniform(1.0, 3.0), spread=rng.uniform(0.05, 0.5))
        cands = command_levels(5, GEOM)
        for info in rollout_batch(c, cands, 100, SIGMA, GEOM, DT, Q):
            assert np.array_equal(info.fim, info.fim.T)
            assert info.min_eig_ratio >= -1e-9
            assert info.det_sigma11 > 0
