import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mirtcf.data import ResponseMatrix
from mirtcf.errors import InvalidArgumentError, UndefinedDifficultyError
from mirtcf.model import (
    EPS,
    ModelSpec,
    ParameterSet,
    balance,
    difficulty,
    gradient,
    log_likelihood,
    logit,
    logit_matrix,
    logits,
    penalized_objective,
    penalty,
    prob,
)

from conftest import random_matrix, random_params


class TestModelSpec:
    def test_empty_model_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ModelSpec(0, person_intercept=False, item_intercept=False)

    def test_negative_dimension_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ModelSpec(-1)

    @pytest.mark.parametrize(
        "spec,name,cols",
        [
            (ModelSpec(0, item_intercept=True), "person-independence", (0, 1)),
            (ModelSpec(0, person_intercept=True, item_intercept=False), "item-independence", (1, 0)),
            (ModelSpec.rasch(), "Rasch", (1, 1)),
            (ModelSpec.m2pl(1), "2PL", (1, 2)),
            (ModelSpec.m2pl(3), "M2PL(r=3)", (3, 4)),
            (ModelSpec(2, person_intercept=True, item_intercept=False), "non-standard(r=2)", (3, 2)),
            (ModelSpec(2, person_intercept=True, item_intercept=True), "both-intercepts(r=2)", (3, 3)),
        ],
    )
    def test_named_rows(self, spec, name, cols):
        assert spec.name == name
        assert (spec.person_cols, spec.item_cols) == cols

    def test_parameter_count(self):
        # m*r + n*(r+1) for the M2PL
        assert ModelSpec.m2pl(3).n_parameters(1000, 60) == 1000 * 3 + 60 * 4


class TestLogit:
    def test_rasch_zero(self):
        assert logit(ModelSpec.rasch(), [0.0], [0.0]) == 0.0

    def test_2pl(self):
        assert logit(ModelSpec.m2pl(1), [2.0], [1.0, 0.5]) == pytest.approx(2.0)

    def test_m2pl_r3(self):
        assert logit(ModelSpec.m2pl(3), [1, 1, 1], [-1, 1, 0, 2]) == pytest.approx(2.0)

    def test_size_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            logit(ModelSpec.m2pl(2), [1.0], [0.0, 1.0, 1.0])

    def test_vectorized_matches_scalar(self, rng):
        for spec in [ModelSpec.rasch(), ModelSpec.m2pl(2), ModelSpec(2, True, True), ModelSpec(0, True, False)]:
            params = random_params(rng, spec, 5, 4)
            z = logit_matrix(spec, params)
            for i in range(5):
                for j in range(4):
                    assert z[i, j] == pytest.approx(logit(spec, params.theta[i], params.x[j]), abs=1e-12)
            persons, items = np.array([0, 3, 4]), np.array([1, 1, 3])
            assert np.allclose(logits(spec, params, persons, items), z[persons, items])


class TestProb:
    def test_zero(self):
        assert prob(0.0) == 0.5

    @pytest.mark.parametrize("z", [-3.0, 0.7, 10.0])
    def test_symmetry(self, z):
        assert prob(z) == pytest.approx(1 - prob(-z), abs=1e-15)

    def test_clamp(self):
        p = prob(40.0)
        assert p < 1.0 and p == 1 - EPS
        assert math.isfinite(math.log(1 - p))
        assert prob(-800.0) == EPS

    @given(st.floats(-30, 30))
    def test_symmetry_property(self, z):
        assert prob(z) + prob(-z) == pytest.approx(1.0, abs=1e-12)


class TestLikelihood:
    def test_zero_params(self, rng):
        U = random_matrix(rng, 6, 5, 0.7)
        spec = ModelSpec.m2pl(2)
        assert log_likelihood(U, spec, ParameterSet.zeros(spec, 6, 5)) == pytest.approx(-U.n_obs * math.log(2))

    def test_empty(self):
        U = ResponseMatrix([], [], [], (3, 2))
        spec = ModelSpec.rasch()
        assert log_likelihood(U, spec, ParameterSet.zeros(spec, 3, 2)) == 0.0

    def test_per_cell_oracle(self, rng):
        spec = ModelSpec.m2pl(2)
        U = random_matrix(rng, 3, 3, 0.8)
        params = random_params(rng, spec, 3, 3)
        expected = 0.0
        for i, j, u in zip(U.persons, U.items, U.responses):
            z = params.x[j, 0] + params.theta[i] @ params.x[j, 1:]
            p = 1 / (1 + math.exp(-z))
            expected += u * math.log(p) + (1 - u) * math.log(1 - p)
        assert log_likelihood(U, spec, params) == pytest.approx(expected, rel=1e-12)

    def test_storage_order_invariance(self, rng):
        spec = ModelSpec.m2pl(2)
        U = random_matrix(rng, 7, 6, 0.6)
        params = random_params(rng, spec, 7, 6)
        perm = rng.permutation(U.n_obs)
        V = ResponseMatrix(U.persons[perm], U.items[perm], U.responses[perm], U.shape)
        assert log_likelihood(V, spec, params) == pytest.approx(log_likelihood(U, spec, params), rel=1e-13)

    def test_shape_check(self, rng):
        spec = ModelSpec.m2pl(1)
        U = random_matrix(rng, 4, 3)
        with pytest.raises(InvalidArgumentError):
            log_likelihood(U, spec, ParameterSet.zeros(spec, 4, 4))


class TestPenalizedObjective:
    def test_lambda_zero(self, rng):
        spec = ModelSpec.m2pl(2)
        U = random_matrix(rng, 5, 4)
        params = random_params(rng, spec, 5, 4)
        assert penalized_objective(U, spec, params, 0.0) == log_likelihood(U, spec, params)

    def test_zero_params_no_penalty(self, rng):
        spec = ModelSpec(2, True, True)
        U = random_matrix(rng, 5, 4)
        params = ParameterSet.zeros(spec, 5, 4)
        assert penalized_objective(U, spec, params, 3.7) == log_likelihood(U, spec, params)

    def test_sum_of_squares_oracle(self, rng):
        spec = ModelSpec(1, True, True)
        U = random_matrix(rng, 4, 3)
        params = random_params(rng, spec, 4, 3)
        ll = log_likelihood(U, spec, params)
        full = sum(v * v for v in params.theta.ravel()) + sum(v * v for v in params.x.ravel())
        slopes_only = sum(v * v for v in params.theta[:, 1]) + sum(v * v for v in params.x[:, 1])
        assert penalized_objective(U, spec, params, 0.3) == pytest.approx(ll - 0.3 * full)
        assert penalized_objective(U, spec, params, 0.3, penalize_intercepts=False) == pytest.approx(
            ll - 0.3 * slopes_only
        )

    def test_negative_lambda(self, rng):
        spec = ModelSpec.rasch()
        with pytest.raises(InvalidArgumentError):
            penalized_objective(random_matrix(rng, 2, 2), spec, ParameterSet.zeros(spec, 2, 2), -1.0)

    @given(st.floats(-5, 5))
    def test_rasch_gauge_invariance(self, c):
        rng = np.random.default_rng(7)
        spec = ModelSpec.rasch()
        U = random_matrix(rng, 6, 5, 0.8)
        params = random_params(rng, spec, 6, 5)
        shifted = ParameterSet(params.theta + c, params.x - c)
        assert penalized_objective(U, spec, shifted, 0.0) == pytest.approx(
            penalized_objective(U, spec, params, 0.0), rel=1e-9
        )


def _finite_difference(U, spec, params, lam, h=1e-5, coords=None):
    flat = params.ravel()
    k = params.theta.size

    def objective(v):
        p = ParameterSet(v[:k].reshape(params.theta.shape), v[k:].reshape(params.x.shape))
        return penalized_objective(U, spec, p, lam)

    out = {}
    for c in coords if coords is not None else range(len(flat)):
        up, dn = flat.copy(), flat.copy()
        up[c] += h
        dn[c] -= h
        out[c] = (objective(up) - objective(dn)) / (2 * h)
    return out


def _rel_err(a, b):
    return abs(a - b) / max(1.0, abs(a), abs(b))


class TestGradient:
    def test_rasch_finite_differences(self, rng):
        spec = ModelSpec.rasch()
        U = random_matrix(rng, 4, 3)
        params = random_params(rng, spec, 4, 3)
        g = gradient(U, spec, params, 0.1).ravel()
        fd = _finite_difference(U, spec, params, 0.1)
        assert max(_rel_err(g[c], v) for c, v in fd.items()) < 1e-5

    def test_m2pl_finite_differences_100_coords(self, rng):
        spec = ModelSpec.m2pl(2)
        U = random_matrix(rng, 10, 8, 0.8)
        params = random_params(rng, spec, 10, 8)
        g = gradient(U, spec, params, 0.05).ravel()
        coords = rng.choice(len(g), size=min(100, len(g)), replace=False)
        fd = _finite_difference(U, spec, params, 0.05, coords=coords)
        assert max(_rel_err(g[c], v) for c, v in fd.items()) < 1e-5

    @pytest.mark.parametrize("spec", [ModelSpec(2, True, True), ModelSpec(1, True, False), ModelSpec(0, False, True)])
    def test_other_specs(self, rng, spec):
        U = random_matrix(rng, 6, 5, 0.7)
        params = random_params(rng, spec, 6, 5)
        g = gradient(U, spec, params, 0.2).ravel()
        fd = _finite_difference(U, spec, params, 0.2)
        assert max(_rel_err(g[c], v) for c, v in fd.items()) < 1e-5

    def test_penalty_only(self, rng):
        spec = ModelSpec(2, True, True)
        U = ResponseMatrix([], [], [], (4, 3))
        params = random_params(rng, spec, 4, 3)
        g = gradient(U, spec, params, 0.3)
        assert np.allclose(g.theta, -0.6 * params.theta)
        assert np.allclose(g.x, -0.6 * params.x)
        g = gradient(U, spec, params, 0.3, penalize_intercepts=False)
        assert np.all(g.theta[:, 0] == 0) and np.all(g.x[:, 0] == 0)
        assert np.allclose(g.x[:, 1:], -0.6 * params.x[:, 1:])

    def test_batch_decomposition(self, rng):
        spec = ModelSpec.m2pl(3)
        U = random_matrix(rng, 12, 9, 0.7)
        params = random_params(rng, spec, 12, 9)
        full = gradient(U, spec, params, 0.07)
        parts = np.array_split(rng.permutation(U.n_obs), 4)
        total = None
        for idx in parts:
            g = gradient(U, spec, params, 0.07, entries=idx, n_batches=4)
            total = g if total is None else total + g
        assert np.max(np.abs(total.theta - full.theta)) < 1e-12
        assert np.max(np.abs(total.x - full.x)) < 1e-12


class TestBalance:
    def test_logits_unchanged_penalty_not_larger(self, rng):
        spec = ModelSpec.m2pl(3)
        params = random_params(rng, spec, 20, 8)
        params.theta *= 3.0
        params.x[:, 1:] *= 0.2
        out = balance(spec, params)
        assert np.allclose(logit_matrix(spec, out), logit_matrix(spec, params), atol=1e-10)
        assert penalty(spec, out) <= penalty(spec, params) + 1e-10
        assert np.allclose(out.x[:, 0], params.x[:, 0])

    def test_balanced_gram_matrices_match(self, rng):
        spec = ModelSpec.m2pl(2)
        out = balance(spec, random_params(rng, spec, 15, 6))
        ts, xs = out.slopes(spec)
        assert np.allclose(ts.T @ ts, xs.T @ xs, atol=1e-10)

    def test_no_slopes(self, rng):
        spec = ModelSpec.rasch()
        params = random_params(rng, spec, 3, 3)
        out = balance(spec, params)
        assert np.array_equal(out.theta, params.theta) and out.theta is not params.theta


class TestDifficulty:
    @pytest.mark.parametrize("row,value", [([1, 2], -0.5), ([0, 5], 0.0), ([-2, 1], 2.0)])
    def test_values(self, row, value):
        assert difficulty(row) == pytest.approx(value)

    def test_zero_slope(self):
        with pytest.raises(UndefinedDifficultyError):
            difficulty([1.0, 0.0])

    def test_missing_slope(self):
        with pytest.raises(UndefinedDifficultyError):
            difficulty([1.0])
