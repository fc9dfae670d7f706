import numpy as np
import pytest
from hypothesis import given, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from syncaimd.core import ResourceParams, all_patterns, build_aimd_matrix
from syncaimd.engine import CoupledModel, run
from syncaimd.lifted import (DENSE_LIMIT, LiftedState, PatternWindow, build_gamma, build_zeta, full_drop_gamma,
                             is_initial_phase, lifted_pattern_probability, norm_N1, norm_N1_batch,
                             reconstruct_running_average, step_lifted, window_interleaving,
                             window_probability_table, zeta_series)
from syncaimd.policy import PolicySpec, UtilitySpec, pattern_probability

from .helpers import table1_params


def random_zeta(rng, n, N):
    return LiftedState(rng.dirichlet(np.ones(n), size=N), rng.dirichlet(np.ones(n), size=N))


def utility_policy(n, N, coupling=0.2):
    us = tuple(UtilitySpec("power", coef=1.0 + 0.5 * i, gamma=1.5, coupling=coupling) for i in range(n))
    return PolicySpec(kind="utility_gradient", window=N, utilities=us)


def window_of(r, l):
    N = r.N
    return PatternWindow(r.patterns_a[l * N:(l + 1) * N], r.patterns_b[l * N:(l + 1) * N], r.window_order(l))


class TestZeta:
    def test_constant_history(self):
        x = np.array([0.1, 0.2, 0.7])
        z = build_zeta([x] * 6, [x] * 6, 4)
        assert_allclose(z.za, np.tile(x, (4, 1)), atol=1e-16)
        assert z.on_simplex()

    def test_two_states(self):
        z = build_zeta([[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]], 2)
        assert_allclose(z.za, [[0.0, 1.0], [0.5, 0.5]])

    def test_unit_window(self):
        z = build_zeta([[0.3, 0.7], [0.4, 0.6]], [[0.9, 0.1]], 1)
        assert_array_equal(z.za, [[0.4, 0.6]])
        assert_array_equal(z.zb, [[0.9, 0.1]])

    def test_initial_phase_padding(self):
        z = build_zeta([[1.0, 0.0]], [[0.5, 0.5]], 3)
        assert z.za.shape == (3, 2)
        assert is_initial_phase([[1.0, 0.0]], [[0.5, 0.5]], 3)

    def test_series_matches_build(self, rng):
        N = 3
        sa, sb = rng.dirichlet(np.ones(2), size=13), rng.dirichlet(np.ones(2), size=13)
        zs = zeta_series(sa, sb, N)
        assert zs.shape == (5, 2, N, 2)
        for l in range(1, 5):
            z = build_zeta(sa[:l * N + 1], sb[:l * N + 1], N)
            assert_array_equal(zs[l, 0], z.za)
            assert_array_equal(zs[l, 1], z.zb)

    def test_vector_round_trip(self, rng):
        z = random_zeta(rng, 3, 4)
        z2 = LiftedState.from_vector(z.vector(), 3)
        assert_array_equal(z2.za, z.za)
        assert_array_equal(z2.zb, z.zb)
        with pytest.raises(ValueError):
            LiftedState.from_vector(np.ones(7), 3)


class TestGamma:
    def test_no_drop_copies_first_block(self, table1, rng):
        N, n = 4, 4
        pw = PatternWindow(np.zeros((N, n), bool), np.zeros((N, n), bool))
        g = build_gamma(*table1, pw)
        for blk in g.blocks_a:
            assert_array_equal(blk, np.eye(n))
        z = random_zeta(rng, n, N)
        out = step_lifted(z, g)
        assert_allclose(out.za, np.tile(z.za[0], (N, 1)), atol=1e-15)

    def test_full_drop_first_block_is_power(self, table1):
        N = 3
        g = full_drop_gamma(*table1, N)
        A = build_aimd_matrix(table1[0], np.ones(4, bool))
        assert_allclose(g.blocks_a[0], np.linalg.matrix_power(A, N), atol=1e-14)
        assert_allclose(g.blocks_a[-1], sum(np.linalg.matrix_power(A, k) for k in range(1, N + 1)) / N, atol=1e-14)

    def test_unit_window_is_single_matrix(self, table1):
        d = np.array([[True, False, True, False]])
        g = build_gamma(*table1, PatternWindow(d, ~d))
        assert_allclose(g.blocks_a[0], build_aimd_matrix(table1[0], d[0]), atol=1e-15)
        assert_allclose(g.blocks_b[0], build_aimd_matrix(table1[1], ~d[0]), atol=1e-15)

    @given(st.integers(1, 4), st.integers(1, 5), st.integers(0, 2 ** 32 - 1))
    def test_maps_lifted_simplex_into_itself(self, n, N, seed):
        rng = np.random.default_rng(seed)
        pa = ResourceParams.from_arrays(rng.uniform(0.01, 1, n), rng.uniform(0, 0.99, n))
        pb = ResourceParams.from_arrays(rng.uniform(0.01, 1, n), rng.uniform(0, 0.99, n))
        pw = PatternWindow(rng.random((N, n)) < 0.5, rng.random((N, n)) < 0.5)
        g = build_gamma(pa, pb, pw)
        z = random_zeta(rng, n, N)
        out = step_lifted(z, g)
        assert out.on_simplex(1e-12)
        assert_allclose(g.dense() @ z.vector(), out.vector(), atol=1e-12)
        assert_allclose(g.apply(z).vector(), out.vector(), atol=1e-12)

    def test_dense_guard(self):
        n = 9
        p = ResourceParams.from_arrays([1.0] * n, [0.5] * n)
        N = DENSE_LIMIT // n + 1
        g = full_drop_gamma(p, p, N)
        with pytest.raises(ValueError):
            g.dense()

    def test_pattern_window_validation(self):
        with pytest.raises(ValueError):
            PatternWindow(np.ones((2, 3)), np.ones((3, 3)))
        with pytest.raises(ValueError):
            PatternWindow(np.ones((2, 3)), np.ones((2, 3)), interleaving=[0, 0, 0, 1])


class TestAgainstSimulation:
    def test_lifted_product_reproduces_run(self):
        pa, pb = table1_params()
        model = CoupledModel(pa, pb, PolicySpec(window=5))
        r = run(model, 50, seed=21)
        zs = r.zetas()
        z = LiftedState(zs[0, 0], zs[0, 1])
        for l in range(50):
            g = build_gamma(pa, pb, window_of(r, l))
            z = g.apply(z)
            assert_allclose(z.za, zs[l + 1, 0], atol=1e-10)
            assert_allclose(z.zb, zs[l + 1, 1], atol=1e-10)

    @pytest.mark.parametrize("policy", [utility_policy(2, 3), PolicySpec(window=3)])
    def test_reconstructed_averages_match_engine(self, policy):
        pa = ResourceParams.from_arrays([0.3, 0.7], [0.5, 0.8])
        pb = ResourceParams.from_arrays([0.6, 0.2], [0.7, 0.4])
        r = run(CoupledModel(pa, pb, policy), 30, seed=3)
        N = 3
        zs = r.zetas()
        for l in range(1, 30):
            z = LiftedState(zs[l, 0], zs[l, 1])
            pw = window_of(r, l)
            for k in range(N):
                for c, params in (("a", pa), ("b", pb)):
                    got = reconstruct_running_average(z, pw, k, c, params)
                    assert_allclose(got, r.get("averages", c)[l * N + k], atol=1e-12)

    def test_window_probability_matches_engine(self):
        pa = ResourceParams.from_arrays([0.3, 0.7], [0.5, 0.8])
        pb = ResourceParams.from_arrays([0.6, 0.2], [0.7, 0.4])
        policy = utility_policy(2, 3)
        r = run(CoupledModel(pa, pb, policy), 30, seed=8)
        N = 3
        zs = r.zetas()
        for l in range(1, 30):
            z = LiftedState(zs[l, 0], zs[l, 1])
            pw = window_of(r, l)
            sl = slice(l * N, (l + 1) * N)
            expected = np.prod([pattern_probability(p, d) for c in "ab"
                                for p, d in zip(r.get("probabilities", c)[sl], r.get("patterns", c)[sl])])
            assert lifted_pattern_probability(z, pw, pa, pb, policy) == pytest.approx(expected, rel=1e-10)
            assert_array_equal(window_interleaving(pa, pb, z, pw), pw.interleaving)

    def test_reconstruct_edge_cases(self, rng):
        p = ResourceParams.from_arrays([0.3, 0.7], [0.5, 0.8])
        z = random_zeta(rng, 2, 3)
        pw = PatternWindow(rng.random((3, 2)) < 0.5, rng.random((3, 2)) < 0.5)
        assert_array_equal(reconstruct_running_average(z, pw, 0, "a", p), z.za[2])
        x = np.array([0.4, 0.6])
        zc = LiftedState(np.tile(x, (3, 1)), np.tile(x, (3, 1)))
        no = PatternWindow(np.zeros((3, 2), bool), np.zeros((3, 2), bool))
        for k in range(3):
            assert_allclose(reconstruct_running_average(zc, no, k, "a", p), x, atol=1e-15)
        with pytest.raises(ValueError):
            reconstruct_running_average(z, pw, 3, "a", p)


class TestLiftedProbability:
    def test_constant_policy_is_state_independent(self, rng):
        pa, pb = table1_params()
        policy = PolicySpec.constant([0.2, 0.4, 0.6, 0.8], [0.9, 0.5, 0.3, 0.1], window=2)
        pw = PatternWindow(rng.random((2, 4)) < 0.5, rng.random((2, 4)) < 0.5)
        expected = np.prod([pattern_probability(policy.constant_p(0), d) for d in pw.nu]) * \
            np.prod([pattern_probability(policy.constant_p(1), d) for d in pw.mu])
        for _ in range(5):
            z = random_zeta(rng, 4, 2)
            assert lifted_pattern_probability(z, pw, pa, pb, policy) == pytest.approx(expected, rel=1e-13)

    def test_single_agent_unit_window(self):
        p = ResourceParams.from_arrays([1.0], [0.5])
        policy = PolicySpec(kind="utility_gradient", window=1, xi=0.3, utilities=(UtilitySpec(coef=0.5),))
        z = LiftedState([[1.0]], [[1.0]])
        pw = PatternWindow([[True]], [[False]])
        assert lifted_pattern_probability(z, pw, p, p, policy) == pytest.approx(0.3 * 0.7)

    @pytest.mark.parametrize("n", [1, 2])
    def test_exhaustive_sum_is_one(self, n, rng):
        N = 2
        pa = ResourceParams.from_arrays(rng.uniform(0.1, 1, n), rng.uniform(0.2, 0.9, n))
        pb = ResourceParams.from_arrays(rng.uniform(0.1, 1, n), rng.uniform(0.2, 0.9, n))
        policy = utility_policy(n, N, coupling=0.4)
        for _ in range(3):
            z = random_zeta(rng, n, N)
            table = window_probability_table(z, pa, pb, policy)
            assert table.shape == (2 ** (n * N),) * 2
            assert abs(table.sum() - 1.0) <= 1e-12
            assert table[-1, -1] >= policy.floor ** (2 * n * N)

    def test_table_full_drop_entry(self, rng):
        p = ResourceParams.from_arrays([0.5, 0.5], [0.5, 0.5])
        policy = PolicySpec.constant([np.sqrt(0.5)] * 2, window=1)
        table = window_probability_table(random_zeta(rng, 2, 1), p, p, policy)
        assert table[-1, -1] == pytest.approx(0.25)
        pats = list(all_patterns(2))
        assert table[1, 2] == pytest.approx(pattern_probability(policy.constant_p(0), pats[1])
                                            * pattern_probability(policy.constant_p(1), pats[2]))

    def test_window_mean_rejected(self, rng):
        pa, pb = table1_params()
        with pytest.raises(ValueError):
            lifted_pattern_probability(random_zeta(rng, 4, 2), PatternWindow.full_drop(4, 2), pa, pb,
                                       PolicySpec(window=2))


class TestNorm:
    def test_examples(self, rng):
        z = random_zeta(rng, 3, 4)
        assert norm_N1(z.vector(), 3) == pytest.approx(1.0, abs=1e-15)
        assert norm_N1(np.zeros(6), 3) == 0.0
        assert norm_N1([1.0, -1.0, 0.5, 0.5], 2) == 2.0
        with pytest.raises(ValueError):
            norm_N1(np.ones(5), 2)

    @given(st.integers(1, 4), st.integers(1, 4), st.integers(0, 2 ** 32 - 1))
    def test_norm_axioms(self, n, N, seed):
        rng = np.random.default_rng(seed)
        u, v = rng.standard_normal((2, 2 * n * N))
        c = rng.standard_normal()
        assert norm_N1(u + v, n) <= norm_N1(u, n) + norm_N1(v, n) + 1e-12
        assert norm_N1(c * u, n) == pytest.approx(abs(c) * norm_N1(u, n), rel=1e-12)
        assert norm_N1(u, n) > 0
        assert_allclose(norm_N1_batch(np.stack([u, v]), n), [norm_N1(u, n), norm_N1(v, n)])
