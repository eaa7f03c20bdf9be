import io
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uldistill.errors import InputError, ParameterError, ScaleError
from uldistill.losses import uld_w1_step
from uldistill.ot import (
    ConvergenceWarning,
    CostMatrix,
    abs_index_cost,
    bench_scaling,
    brute_force_alignment_min,
    char_count_embedding,
    embedding_l2_cost_matrix,
    exact_ot,
    levenshtein_cost_matrix,
    log2_sizes,
    sinkhorn,
    total_variation,
    uniform01_cost,
    w1_1d_cdf,
)
from uldistill.tokenizer import levenshtein

rng_pairs = st.integers(0, 2**32 - 1).map(np.random.default_rng)


def random_pair(rng, n, m=None):
    m = n if m is None else m
    return rng.dirichlet(np.ones(n)), rng.dirichlet(np.ones(m))


class TestCostMatrix:
    def test_uniform01(self):
        np.testing.assert_array_equal(uniform01_cost(3).entries, 1 - np.eye(3))
        assert uniform01_cost(3).kind == "uniform01"

    def test_rectangular_uniform01(self):
        assert uniform01_cost(2, 4).shape == (2, 4)

    @pytest.mark.parametrize("bad", [[[-1.0]], [[np.inf]]])
    def test_rejects_bad_entries(self, bad):
        with pytest.raises(InputError):
            CostMatrix(bad)

    def test_rejects_unknown_kind(self):
        with pytest.raises(ParameterError):
            CostMatrix([[0.0]], kind="other")

    def test_rejects_vector(self):
        with pytest.raises(ParameterError):
            CostMatrix([0.0, 1.0])


class TestExactOT:
    def test_identity(self):
        plan = exact_ot([0.3, 0.7], [0.3, 0.7], uniform01_cost(2))
        assert plan.cost == 0.0
        np.testing.assert_allclose(plan.flows, np.diag([0.3, 0.7]))

    def test_move_everything(self):
        assert exact_ot([1.0, 0.0], [0.0, 1.0], uniform01_cost(2)).cost == pytest.approx(1.0)

    def test_total_variation_value(self):
        assert exact_ot([0.7, 0.3], [0.4, 0.6], uniform01_cost(2)).cost == pytest.approx(0.3, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ParameterError):
            exact_ot([0.5, 0.5], [0.5, 0.5], uniform01_cost(3))

    def test_unnormalized(self):
        with pytest.raises(InputError):
            exact_ot([0.5, 0.6], [0.5, 0.5], uniform01_cost(2))

    def test_scale_limit(self):
        p = np.ones(4097) / 4097
        with pytest.raises(ScaleError):
            exact_ot(p, p, np.zeros((4097, 4097)))

    def test_rectangular(self):
        p, q = np.array([0.5, 0.5]), np.array([0.25, 0.25, 0.5])
        C = np.array([[0.0, 1.0, 2.0], [2.0, 1.0, 0.0]])
        plan = exact_ot(p, q, C)
        assert plan.cost == pytest.approx(0.25, abs=1e-12)

    @settings(max_examples=100, deadline=None)
    @given(rng_pairs, st.integers(1, 24), st.integers(1, 24))
    def test_feasible_and_dual_certified(self, rng, n, m):
        p, q = random_pair(rng, n, m)
        C = rng.uniform(0, 3, size=(n, m))
        plan = exact_ot(p, q, C)
        assert np.all(plan.flows >= 0)
        np.testing.assert_allclose(plan.flows.sum(axis=1), p, atol=1e-7)
        np.testing.assert_allclose(plan.flows.sum(axis=0), q, atol=1e-7)
        assert plan.cost == pytest.approx(float(np.sum(plan.flows * C)), abs=1e-9)
        # dual feasibility and matching objective certify optimality
        assert np.all(plan.u[:, None] + plan.v[None, :] <= C + 1e-9)
        assert plan.u @ p + plan.v @ q == pytest.approx(plan.cost, abs=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(rng_pairs, st.integers(1, 32))
    def test_zero_one_cost_is_total_variation(self, rng, n):
        p, q = random_pair(rng, n)
        assert abs(exact_ot(p, q, uniform01_cost(n)).cost - total_variation(p, q)) < 1e-9

    @settings(max_examples=100, deadline=None)
    @given(rng_pairs, st.integers(1, 20))
    def test_matches_cdf_oracle(self, rng, n):
        p, q = random_pair(rng, n)
        assert abs(exact_ot(p, q, abs_index_cost(n)).cost - w1_1d_cdf(p, q)) < 1e-7


class TestOneDimensionalOracle:
    def test_far_move(self):
        assert w1_1d_cdf([1, 0, 0], [0, 0, 1]) == 2.0

    def test_identical(self):
        assert w1_1d_cdf([0.2, 0.8], [0.2, 0.8]) == 0.0

    def test_shift(self):
        assert w1_1d_cdf([0.5, 0.5, 0], [0, 0.5, 0.5]) == pytest.approx(1.0)
        assert exact_ot([0.5, 0.5, 0], [0, 0.5, 0.5], abs_index_cost(3)).cost == pytest.approx(1.0)

    def test_length_mismatch(self):
        with pytest.raises(ParameterError):
            w1_1d_cdf([1.0], [0.5, 0.5])


class TestBruteForce:
    def test_enumeration_value(self):
        assert brute_force_alignment_min([0.7, 0.2, 0.1], [0.1, 0.5, 0.4]) == pytest.approx(0.4)
        assert uld_w1_step([0.7, 0.2, 0.1], [0.1, 0.5, 0.4]) == pytest.approx(0.4)

    def test_identical(self):
        assert brute_force_alignment_min([0.6, 0.4], [0.6, 0.4]) == 0.0

    def test_singleton(self):
        assert brute_force_alignment_min([1.0], [1.0]) == 0.0

    def test_scale_error(self):
        with pytest.raises(ScaleError):
            brute_force_alignment_min(np.ones(9) / 9, np.ones(9) / 9)

    @settings(max_examples=200, deadline=None)
    @given(rng_pairs, st.integers(1, 6))
    def test_equals_closed_form(self, rng, n):
        p, q = random_pair(rng, n)
        assert abs(brute_force_alignment_min(p, q) - uld_w1_step(p, q)) < 1e-12


class TestSinkhorn:
    def test_identity_near_zero(self):
        n = 8
        p = np.random.default_rng(0).dirichlet(np.ones(n))
        plan = sinkhorn(p, p, uniform01_cost(n), 0.01)
        assert plan.cost <= 0.01 * np.log(n) + 1e-6

    @pytest.mark.filterwarnings("ignore::uldistill.ot.ConvergenceWarning")
    def test_close_to_exact(self):
        rng = np.random.default_rng(7)
        p, q = random_pair(rng, 16)
        C = rng.uniform(0, 1, size=(16, 16))
        plan = sinkhorn(p, q, C, 1e-3)
        assert abs(plan.cost - exact_ot(p, q, C).cost) < 1e-2

    def test_marginals_within_tol(self):
        rng = np.random.default_rng(1)
        p, q = random_pair(rng, 10)
        plan = sinkhorn(p, q, uniform01_cost(10), 0.05, tol=1e-9)
        assert plan.converged
        assert np.abs(plan.flows.sum(axis=1) - p).sum() < 1e-9
        np.testing.assert_allclose(plan.flows.sum(axis=0), q, atol=1e-9)

    def test_non_convergence_warns(self):
        rng = np.random.default_rng(2)
        p, q = random_pair(rng, 10)
        with pytest.warns(ConvergenceWarning):
            plan = sinkhorn(p, q, rng.uniform(size=(10, 10)), 1e-4, max_iter=3)
        assert not plan.converged
        assert plan.n_iter == 3

    def test_bad_epsilon(self):
        with pytest.raises(ParameterError):
            sinkhorn([1.0], [1.0], [[0.0]], 0.0)

    def test_zero_mass_tolerated(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            plan = sinkhorn([1.0, 0.0], [0.0, 1.0], uniform01_cost(2), 0.05)
        assert plan.cost == pytest.approx(1.0, abs=1e-6)


class TestCostBuilders:
    def test_one_insertion(self):
        assert levenshtein_cost_matrix(["cat"], ["cats"]).entries[0, 0] == 1

    def test_kitten(self):
        assert levenshtein_cost_matrix(["kitten"], ["sitting"]).entries[0, 0] == 3

    def test_symmetric_zero_diagonal(self):
        toks = ["a", "ab", "ba", "abc", ""]
        C = levenshtein_cost_matrix(toks, toks).entries
        np.testing.assert_array_equal(C, C.T)
        np.testing.assert_array_equal(np.diag(C), 0)
        assert C.dtype == np.float64
        assert levenshtein_cost_matrix(toks, toks).kind == "levenshtein"

    @settings(max_examples=200)
    @given(*(st.text("abc", max_size=6) for _ in range(3)))
    def test_levenshtein_metric(self, a, b, c):
        assert levenshtein(a, a) == 0
        assert levenshtein(a, b) == levenshtein(b, a)
        assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)

    def test_embedding_triangle(self):
        C = embedding_l2_cost_matrix(np.array([[0.0, 0.0]]), np.array([[3.0, 4.0]]))
        assert C.entries[0, 0] == pytest.approx(5.0)
        assert C.kind == "embedding_l2"

    def test_embedding_same_table(self):
        E = np.random.default_rng(0).normal(size=(5, 3))
        C = embedding_l2_cost_matrix(E, E).entries
        np.testing.assert_array_equal(np.diag(C), 0)
        np.testing.assert_allclose(C, C.T)
        assert np.all(C >= 0)

    def test_embedding_dimension_mismatch(self):
        with pytest.raises(ParameterError):
            embedding_l2_cost_matrix(np.zeros((2, 3)), np.zeros((2, 4)))

    def test_char_count_embedding(self):
        E = char_count_embedding(["ab", "ba", "aa"], alphabet="ab")
        np.testing.assert_array_equal(E, [[1, 1], [1, 1], [2, 0]])


class TestBench:
    def test_small_run(self):
        res = bench_scaling([4, 8, 16], repetitions=2, exact_max=8)
        assert {r[0] for r in res.rows} == {"closed_form", "exact_ot"}
        assert set(res.mean_times("exact_ot")) == {4, 8}
        assert set(res.slopes) == {"closed_form", "exact_ot"}
        assert res.max_identity_error < 1e-9

    def test_csv_layout(self):
        res = bench_scaling([4, 8], repetitions=1, exact_max=8)
        buf = io.StringIO()
        res.write_csv(buf)
        lines = buf.getvalue().splitlines()
        assert lines[0] == "method,n,rep,seconds"
        assert lines[-1].startswith("slope,exact_ot,")
        assert lines[-2].startswith("slope,closed_form,")
        assert len(lines) == 1 + 4 + 2

    def test_sizes_must_ascend(self):
        with pytest.raises(ParameterError):
            bench_scaling([8, 4])

    def test_log2_sizes(self):
        assert log2_sizes(16, 128) == [16, 32, 64, 128]
