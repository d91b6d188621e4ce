import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eadgl.bayes import (
    AMBIGUOUS,
    DecisionInputs,
    Hypothesis,
    classify,
    classify_states,
    cost_correct,
    cost_wrong,
    decide,
    likelihoods,
    mean_excess,
    pick,
    priors,
    risks,
)
from eadgl.game_math import GameGeometry, GameState, singular_boundary, zem_propagate
from eadgl.immpf import Particle, ParticleCloud

GEOM = GameGeometry.nominal()
A_M, A_T = GEOM.pursuer.a_max, GEOM.evader.a_max
TAU = 0.16
DT = 0.01


def zs(t):
    return float(singular_boundary(t, GEOM))


def cloud_of(rows, modes, weights=None):
    rows = np.array([[t, z, 0.0, 0.0] for t, z in rows], dtype=float)
    w = np.ones(len(rows)) if weights is None else np.asarray(weights, float)
    return ParticleCloud(rows, np.asarray(modes), w / w.sum(), 0.0)


def random_cloud(rng, n=30):
    t = rng.uniform(0.3, 3.0, n)
    z = np.array([zs(v) for v in t]) * rng.uniform(-2.5, 2.5, n)
    w = rng.random(n) + 0.05
    return cloud_of(list(zip(t, z)), rng.integers(1, 3, n), w)


# brute-force oracles, one particle pair at a time

def bf_label(t, z, m):
    b = zs(t)
    return 1 if z > b else 4 if z < -b else (2 if m == 1 else 3)


def bf_command(t, z, k):
    b = zs(t) * k
    if b <= 0:
        return A_M * np.sign(z)
    return A_M * min(1.0, max(-1.0, z / b))


def bf_cost(cloud, i, j, k=1.0):
    labels = [bf_label(s[0], s[1], m) for s, m in zip(cloud.states, cloud.modes)]
    sel_j = [n for n, h in enumerate(labels) if h == j]
    wj = np.array([cloud.weights[n] for n in sel_j])
    wj = wj / wj.sum()
    if i == j:
        return sum(w * max(0.0, abs(cloud.states[n, 1]) - zs(cloud.states[n, 0])) for w, n in zip(wj, sel_j))
    sel_i = [n for n, h in enumerate(labels) if h == i]
    if i in (2, 3) and sel_i:
        wi = np.array([cloud.weights[n] for n in sel_i])
        cmds = [(w, bf_command(cloud.states[n, 0], cloud.states[n, 1], k)) for w, n in zip(wi / wi.sum(), sel_i)]
    else:
        cmds = [(1.0, {1: A_M, 4: -A_M}.get(i, 0.0))]
    total = 0.0
    for w, n in zip(wj, sel_j):
        t, z = cloud.states[n, 0], cloud.states[n, 1]
        tau = min(TAU, t)
        u_t = A_T if cloud.modes[n] == 1 else -A_T
        for wu, u in cmds:
            zp = zem_propagate(z, t, tau, u, u_t, GEOM)
            total += w * wu * max(0.0, abs(zp) - zs(t - tau))
    return total


class TestClassify:
    def test_examples(self):
        assert classify(Particle(GameState(1.0, 0.0, 0, 0), 1, 1.0), GEOM) == Hypothesis.H2
        assert classify(Particle(GameState(1.0, zs(1.0), 0, 0), 2, 1.0), GEOM) == Hypothesis.H3
        assert classify(Particle(GameState(1.0, 2 * zs(1.0), 0, 0), 2, 1.0), GEOM) == Hypothesis.H1
        assert classify(Particle(GameState(1.0, -2 * zs(1.0), 0, 0), 1, 1.0), GEOM) == Hypothesis.H4

    @given(st.floats(0, 4), st.floats(-1000, 1000), st.sampled_from([1, 2]))
    def test_partition(self, t, z, m):
        assert classify_states(np.array([[t, z, 0, 0]]), [m], GEOM)[0] == bf_label(t, z, m)


class TestLikelihoods:
    def test_concentrated(self):
        c = cloud_of([(2.0, 0.0), (1.5, 10.0)], [1, 1])
        np.testing.assert_array_equal(likelihoods(c, GEOM), [0, 1, 0, 0])

    def test_even_split(self):
        c = cloud_of([(2.0, 1000.0), (2.0, 0.0), (2.0, 0.0), (2.0, -1000.0)], [1, 1, 2, 2])
        np.testing.assert_allclose(likelihoods(c, GEOM), [0.25] * 4)

    @settings(max_examples=30)
    @given(st.integers(0, 2**31))
    def test_random_matches_brute_force(self, seed):
        c = random_cloud(np.random.default_rng(seed))
        expect = np.zeros(4)
        for s, m, w in zip(c.states, c.modes, c.weights):
            expect[bf_label(s[0], s[1], m) - 1] += w
        lik = likelihoods(c, GEOM)
        np.testing.assert_allclose(lik, expect, atol=1e-12)
        assert lik.sum() == pytest.approx(1.0, abs=1e-12)


class TestCosts:
    def test_correct_examples(self):
        assert cost_correct(cloud_of([(2.0, 0.0)], [1]), 2, GEOM) == 0.0
        assert cost_correct(cloud_of([(2.0, zs(2.0) + 5.0)], [1]), 1, GEOM) == pytest.approx(5.0)
        with pytest.raises(ValueError):
            cost_correct(cloud_of([(2.0, 0.0)], [1]), 1, GEOM)

    def test_correct_mixed_weights(self):
        c = cloud_of([(2.0, zs(2.0) + 5.0), (1.0, zs(1.0) + 20.0), (2.0, 0.0)], [1, 2, 1], [1.0, 3.0, 2.0])
        assert cost_correct(c, 1, GEOM) == pytest.approx((5.0 + 3 * 20.0) / 4)

    def test_deep_interior_zero(self):
        c = cloud_of([(2.5, 0.0), (2.5, 1.0)], [1, 2])
        assert cost_wrong(c, 2, 3, TAU, GEOM) == 0.0
        assert cost_wrong(c, 3, 2, TAU, GEOM) == 0.0

    def test_single_pair_closed_form(self):
        c = cloud_of([(2.0, 0.6 * zs(2.0)), (1.2, zs(1.2) + 40.0)], [1, 2])
        u = A_M * 0.6
        zp = zem_propagate(zs(1.2) + 40.0, 1.2, TAU, u, -A_T, GEOM)
        assert cost_wrong(c, 2, 1, TAU, GEOM) == pytest.approx(max(0.0, abs(zp) - zs(1.2 - TAU)), rel=1e-12)

    def test_adversarial_drift(self):
        c = cloud_of([(2.0, -zs(2.0) - 1.0), (2.0, zs(2.0) + 1.0)], [2, 1])
        assert cost_wrong(c, 1, 4, TAU, GEOM) > 0.0

    def test_short_t_go_uses_own_horizon(self):
        c = cloud_of([(0.05, -zs(0.05) - 3.0), (1.0, 0.0)], [2, 1])
        assert cost_wrong(c, 2, 4, TAU, GEOM) == pytest.approx(bf_cost(c, 2, 4), rel=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.sampled_from([1.0, 0.7]))
    def test_matrix_matches_brute_force(self, seed, k):
        c = random_cloud(np.random.default_rng(seed), n=16)
        lik = likelihoods(c, GEOM)
        for j in range(1, 5):
            if lik[j - 1] <= 0:
                continue
            for i in range(1, 5):
                if i == j:
                    assert cost_correct(c, j, GEOM) == pytest.approx(bf_cost(c, j, j), abs=1e-9)
                else:
                    got = cost_wrong(c, i, j, TAU, GEOM, k_frac=k)
                    assert got == pytest.approx(bf_cost(c, i, j, k), rel=1e-9, abs=1e-9)


@settings(max_examples=200)
@given(st.lists(st.tuples(st.floats(-300, 300), st.floats(0, 0.05), st.floats(-50, 400)), min_size=1, max_size=8),
       st.lists(st.tuples(st.floats(-A_M, A_M), st.floats(0.01, 1)), min_size=1, max_size=8))
def test_mean_excess_matches_direct_sum(targets, cmds):
    a, d, b = (np.array(v) for v in zip(*targets))
    u, w = (np.array(v) for v in zip(*cmds))
    direct = np.array([sum(wk * max(0.0, abs(ai - uk * di) - bi) for uk, wk in zip(u, w))
                       for ai, di, bi in zip(a, d, b)])
    np.testing.assert_allclose(mean_excess(a, d, b, u, w), direct, rtol=1e-9, atol=1e-7)


class TestPriors:
    def test_identity_chain(self):
        prev = random_cloud(np.random.default_rng(1))
        pri, p_sw = priors(prev, 50.0, np.eye(2), prev.mode_probs(), GEOM, DT)
        assert p_sw == 0.0
        np.testing.assert_allclose(pri.sum(), 1.0)

    def test_certain_switch(self):
        tpm = np.array([[0.0, 1.0], [0.0, 1.0]])
        c = cloud_of([(2.0, 0.0)], [1])
        pri, p_sw = priors(c, 0.0, tpm, np.array([1.0, 0.0]), GEOM, DT)
        assert p_sw == 1.0
        np.testing.assert_allclose(pri, [0, 0, 1, 0])

    @settings(max_examples=20, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0, 0.3), st.floats(0, 0.3), st.floats(-A_M, A_M))
    def test_brute_force(self, seed, p12, p21, u):
        prev = random_cloud(np.random.default_rng(seed))
        tpm = np.array([[1 - p12, p12], [p21, 1 - p21]])
        mp = prev.mode_probs()
        p_sw = p12 * mp[0] + p21 * mp[1]
        expect = np.zeros(4)
        for s, m, w in zip(prev.states, prev.modes, prev.weights):
            for mode, p in ((m, 1 - p_sw), (3 - m, p_sw)):
                u_t = A_T if mode == 1 else -A_T
                tau = min(DT, s[0])
                zn = zem_propagate(s[1], s[0], tau, u, u_t, GEOM)
                expect[bf_label(s[0] - tau, zn, mode) - 1] += p * w
        pri, got_sw = priors(prev, u, tpm, mp, GEOM, DT)
        assert got_sw == pytest.approx(p_sw)
        np.testing.assert_allclose(pri, expect, atol=1e-12)


class TestDecide:
    def inputs(self, cloud, prev=None, **kw):
        return DecisionInputs(cloud, prev or cloud, 0.0, np.eye(2), TAU, GEOM, DT, **kw)

    def test_concentrated_cloud(self):
        c = cloud_of([(2.0, zs(2.0) + 30.0), (1.8, zs(1.8) + 60.0)], [1, 2])
        rep = decide(self.inputs(c))
        assert rep.outcome == Hypothesis.H1
        assert rep.risks[0] == 0.0 and np.all(rep.risks >= 0)

    def test_all_zero_is_ambiguous(self):
        c = cloud_of([(2.5, 0.0), (2.5, 5.0)], [1, 1])
        assert decide(self.inputs(c)).outcome is AMBIGUOUS

    def test_zero_likelihood_columns(self):
        c = cloud_of([(2.0, 0.0), (2.0, zs(2.0) + 10.0)], [1, 2])
        rep = decide(self.inputs(c))
        np.testing.assert_array_equal(rep.costs[:, 2], 0.0)
        np.testing.assert_array_equal(rep.costs[:, 3], 0.0)
        assert rep.priors[2] == rep.priors[3] == 0.0

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31), st.floats(0.01, 100))
    def test_risks_brute_force_and_scale(self, seed, scale):
        rng = np.random.default_rng(seed)
        c = random_cloud(rng, n=12)
        rep = decide(self.inputs(c))
        lik, pri, costs = rep.likelihoods, rep.priors, rep.costs
        expect = [sum(pri[j] * lik[j] * max(0.0, costs[i, j] - costs[j, j]) for j in range(4) if j != i)
                  for i in range(4)]
        np.testing.assert_allclose(rep.risks, expect, atol=1e-12)
        assert np.all(rep.risks >= -1e-9)
        assert np.allclose(np.diag(rep.costs)[1:3], 0.0)
        scaled = ParticleCloud(c.states, c.modes, c.weights * scale, 0.0)
        scaled.weights = scaled.weights / scaled.weights.sum()
        assert decide(self.inputs(scaled)).outcome == rep.outcome


class TestPick:
    def test_argmin(self):
        assert pick(np.array([3.0, 1.0, 2.0, 5.0]), np.full(4, 0.25), 1e-6) == Hypothesis.H2

    def test_tie_prefers_inside(self):
        assert pick(np.array([0.0, 1.0, 0.0, 0.0]), np.full(4, 0.25), 1e-6) == Hypothesis.H3
        assert pick(np.array([0.0, 1.0, 1.0, 0.0]), np.full(4, 0.25), 1e-6) == Hypothesis.H1

    def test_ambiguous(self):
        assert pick(np.zeros(4), np.full(4, 0.25), 1e-6) is AMBIGUOUS

    def test_empty_interior_hypotheses_are_infeasible(self):
        lik = np.array([0.5, 0.0, 0.0, 0.5])
        assert pick(np.array([0.0, 2.0, 3.0, 0.0]), lik, 1e-6) is AMBIGUOUS
        assert pick(np.array([1.0, 0.0, 0.5, 2.0]), lik, 1e-6) == Hypothesis.H1


def test_risks_vector():
    costs = np.array([[1.0, 2.0], [3.0, 0.5]])
    np.testing.assert_allclose(risks(np.array([0.5, 0.5]), np.array([1.0, 1.0]), costs), [0.75, 1.0])
