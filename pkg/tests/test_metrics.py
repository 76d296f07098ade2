import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mirtcf.errors import InvalidArgumentError, UndefinedAUCError
from mirtcf.metrics import accuracy, auc, evaluate, gk_lambda, log_loss, rmse
from mirtcf.model import ModelSpec, log_likelihood, predict

from conftest import random_matrix, random_params


def pair_count_auc(p, u):
    pos = [a for a, y in zip(p, u) if y == 1]
    neg = [a for a, y in zip(p, u) if y == 0]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a, b in itertools.product(pos, neg))
    return wins / (len(pos) * len(neg))


class TestAccuracy:
    def test_all_correct(self):
        assert accuracy([0.9] * 4, [1] * 4) == 1.0

    def test_half_counts_as_one(self):
        assert accuracy([0.5], [1]) == 1.0
        assert accuracy([0.5], [0]) == 0.0

    def test_hand_count(self):
        assert accuracy([0.6, 0.6, 0.4], [1, 0, 0]) == pytest.approx(2 / 3)

    def test_empty(self):
        with pytest.raises(InvalidArgumentError):
            accuracy([], [])

    def test_non_finite(self):
        with pytest.raises(InvalidArgumentError):
            rmse([np.nan], [1])


class TestAUC:
    def test_pair_counting_example(self):
        assert auc([0.9, 0.8, 0.4, 0.3], [1, 0, 1, 0]) == pytest.approx(0.75)

    def test_perfect(self):
        assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0

    def test_all_tied(self):
        assert auc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5

    def test_single_class(self):
        with pytest.raises(UndefinedAUCError):
            auc([0.2, 0.7], [1, 1])

    def test_oracle_on_200_random_batches(self):
        rng = np.random.default_rng(2024)
        done = 0
        while done < 200:
            k = int(rng.integers(2, 13))
            # coarse grid forces ties
            p = rng.integers(0, 5, k) / 4.0
            u = rng.integers(0, 2, k)
            if u.min() == u.max():
                continue
            assert auc(p, u) == pytest.approx(pair_count_auc(p, u), abs=1e-12)
            done += 1

    @given(
        st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=2, max_size=12).filter(
            lambda b: len({y for _, y in b}) == 2
        )
    )
    def test_oracle_property(self, batch):
        p, u = zip(*batch)
        assert auc(p, u) == pytest.approx(pair_count_auc(p, u), abs=1e-12)

    @given(st.lists(st.floats(0.01, 0.99), min_size=4, max_size=30), st.integers(0, 2**32 - 1))
    def test_monotone_transform_invariance(self, p, seed):
        u = np.random.default_rng(seed).integers(0, 2, len(p))
        u[0], u[1] = 0, 1
        p = np.array(p)
        assert auc(np.log(p / (1 - p)) ** 3, u) == pytest.approx(auc(p, u), abs=1e-12)


class TestGKLambda:
    def test_formula(self):
        # base rate 0.6, accuracy 0.8
        u = [1, 1, 1, 1, 1, 1, 0, 0, 0, 0]
        p = [0.9, 0.9, 0.9, 0.9, 0.9, 0.1, 0.1, 0.1, 0.1, 0.9]
        assert accuracy(p, u) == pytest.approx(0.8)
        assert gk_lambda(p, u) == pytest.approx(0.5)

    def test_modal_rule(self):
        u = [1, 1, 1, 0]
        assert gk_lambda([0.7] * 4, u) == pytest.approx(0.0)

    def test_perfect(self):
        assert gk_lambda([0.9, 0.1, 0.8], [1, 0, 1]) == 1.0

    def test_single_class_returns_zero(self):
        assert gk_lambda([0.2, 0.9], [1, 1]) == 0.0

    @given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=1, max_size=40))
    def test_bounds(self, batch):
        p, u = zip(*batch)
        g = gk_lambda(p, u)
        assert g <= 1.0
        base = np.mean(u)
        if accuracy(p, u) >= max(base, 1 - base):
            assert g >= -1e-12


class TestRMSEAndLogLoss:
    def test_rmse_zero(self):
        assert rmse([0, 1, 1], [0, 1, 1]) == 0.0

    def test_rmse_half(self):
        assert rmse([0.5] * 5, [0, 1, 0, 1, 1]) == 0.5

    def test_rmse_hand(self):
        assert rmse([0.8, 0.2], [1, 0]) == pytest.approx(0.2)

    def test_log_loss_half(self):
        assert log_loss([0.5] * 3, [1, 0, 1]) == pytest.approx(math.log(2))

    def test_log_loss_clamped(self):
        v = log_loss([1.0, 0.0], [1, 0])
        assert 0 <= v < 1e-11

    def test_log_loss_matches_likelihood(self, rng):
        spec = ModelSpec.m2pl(2)
        U = random_matrix(rng, 8, 6, 0.7)
        params = random_params(rng, spec, 8, 6)
        assert log_loss(predict(spec, params, U), U.responses) == pytest.approx(
            -log_likelihood(U, spec, params) / U.n_obs, rel=1e-12
        )

    @given(st.lists(st.tuples(st.floats(0, 1), st.integers(0, 1)), min_size=1, max_size=20), st.randoms())
    def test_permutation_invariance(self, batch, rnd):
        shuffled = list(batch)
        rnd.shuffle(shuffled)
        p, u = zip(*batch)
        q, v = zip(*shuffled)
        for f in (accuracy, rmse, log_loss):
            assert f(p, u) == pytest.approx(f(q, v), rel=1e-12, abs=1e-15)


def test_evaluate_marks_undefined_auc():
    out = evaluate([0.2, 0.6], [0, 0])
    assert math.isnan(out["auc"])
    assert out["acc"] == 0.5
    assert set(out) == {"acc", "auc", "gk_lambda", "rmse", "log_loss"}
