import numpy as np
import pytest

from mirtcf.data import ResponseMatrix
from mirtcf.errors import CovarianceError, InvalidArgumentError
from mirtcf.model import logit_matrix, prob
from mirtcf.simulate import CORRELATED_COV, CORRELATED_MEAN, SimConfig, apply_mcar, preset, simulate, standin_cross_loadings


class TestPresets:
    def test_multiunidim(self):
        gt = simulate(preset("multiunidim", seed=0))
        assert gt.responses.shape == (1000, 60)
        assert gt.responses.n_obs == 60_000
        slopes = gt.params.x[:, 1:]
        assert np.all((slopes != 0).sum(axis=1) == 1)
        assert np.all(slopes[slopes != 0] > 0)
        assert gt.params.x[:, 0].min() >= -2.5 and gt.params.x[:, 0].max() <= 2.5

    @pytest.mark.parametrize("name,shape", [("sparse5d", (1000, 50)), ("sparse5d-small", (80, 20))])
    def test_sparse5d(self, name, shape):
        gt = simulate(preset(name, seed=1, p_miss=0.2))
        assert gt.responses.shape == shape
        assert gt.params.x.shape == (shape[1], 6)
        assert 0.7 < gt.responses.n_obs / (shape[0] * shape[1]) < 0.9

    def test_correlated3d(self):
        cfg = preset("correlated3d", seed=2)
        assert cfg.persons == 2000 and cfg.items == 30
        assert cfg.mean == CORRELATED_MEAN
        gt = simulate(cfg)
        cov = np.asarray(CORRELATED_COV)
        assert cov[0, 2] / np.sqrt(cov[0, 0] * cov[2, 2]) == pytest.approx(0.8)
        assert gt.params.x.shape == (30, 4)

    def test_unknown(self):
        with pytest.raises(InvalidArgumentError):
            preset("nope")


class TestStandin:
    def test_structure(self):
        intercepts, slopes = standin_cross_loadings(30, 3, seed=4)
        active = (slopes > 0).sum(axis=1)
        assert active.min() >= 1 and active.max() <= 3
        assert np.all(slopes >= 0)
        assert np.all(np.abs(intercepts) <= 1.5)
        # primary dimension assigned round-robin
        assert np.all(slopes[np.arange(30), np.arange(30) % 3] > 0)


class TestSimulate:
    def test_probabilities_consistent(self):
        gt = simulate(SimConfig(50, 10, 2, seed=3))
        assert np.allclose(gt.probabilities, prob(logit_matrix(gt.spec, gt.params)))

    def test_ability_covariance_converges(self):
        cfg = SimConfig(2000, 5, 3, mean=CORRELATED_MEAN, cov=CORRELATED_COV, loading="dense", seed=11)
        gt = simulate(cfg)
        sigma = np.asarray(CORRELATED_COV)
        emp = np.cov(gt.params.theta, rowvar=False)
        # standard error of a sample covariance entry
        se = np.sqrt((sigma**2 + np.outer(np.diag(sigma), np.diag(sigma))) / 2000)
        assert np.all(np.abs(emp - sigma) < 5 * se)
        mean_se = np.sqrt(np.diag(sigma) / 2000)
        assert np.all(np.abs(gt.params.theta.mean(axis=0) - CORRELATED_MEAN) < 5 * mean_se)

    def test_item_means_track_probabilities(self):
        gt = simulate(SimConfig(3000, 8, 2, seed=6))
        observed = gt.responses.to_dense().mean(axis=0)
        expected = gt.probabilities.mean(axis=0)
        sd = np.sqrt(expected * (1 - expected) / 3000)
        assert np.all(np.abs(observed - expected) < 5 * sd)

    def test_non_pd_covariance(self):
        with pytest.raises(CovarianceError):
            simulate(SimConfig(10, 5, 2, cov=((1.0, 2.0), (2.0, 1.0))))

    def test_asymmetric_covariance(self):
        with pytest.raises(CovarianceError):
            simulate(SimConfig(10, 5, 2, cov=((1.0, 0.1), (0.0, 1.0))))

    def test_user_loading(self):
        loading = np.array([[1.0, 0.0], [0.5, 0.5], [0.0, 2.0]])
        gt = simulate(SimConfig(20, 3, 2, loading=loading, intercepts=[0.0, 1.0, -1.0], seed=1))
        assert np.array_equal(gt.params.x[:, 1:], loading)
        assert np.array_equal(gt.params.x[:, 0], [0.0, 1.0, -1.0])

    def test_bad_loading_shape(self):
        with pytest.raises(InvalidArgumentError):
            simulate(SimConfig(20, 3, 2, loading=np.ones((4, 2))))

    def test_seeded(self):
        a = simulate(SimConfig(30, 6, 2, p_miss=0.3, seed=8))
        b = simulate(SimConfig(30, 6, 2, p_miss=0.3, seed=8))
        assert np.array_equal(a.responses.persons, b.responses.persons)
        assert np.array_equal(a.responses.responses, b.responses.responses)
        assert a.params.theta.tobytes() == b.params.theta.tobytes()


class TestMCAR:
    def test_identity(self):
        U = simulate(SimConfig(10, 5, 1, seed=0)).responses
        assert apply_mcar(U, 0.0, 1) is U

    def test_binomial_bound(self):
        U = ResponseMatrix.from_dense(np.ones((500, 100)))
        kept = apply_mcar(U, 0.8, 42).n_obs
        sd = np.sqrt(50_000 * 0.2 * 0.8)
        assert abs(kept - 10_000) < 3 * sd

    def test_same_seed(self):
        U = ResponseMatrix.from_dense(np.ones((30, 30)))
        assert apply_mcar(U, 0.5, 3).cell_keys() == apply_mcar(U, 0.5, 3).cell_keys()

    def test_subset(self):
        U = ResponseMatrix.from_dense(np.ones((30, 30)))
        assert apply_mcar(U, 0.4, 9).cell_keys() <= U.cell_keys()

    @pytest.mark.parametrize("p", [-0.1, 1.0])
    def test_invalid(self, p):
        with pytest.raises(InvalidArgumentError):
            apply_mcar(ResponseMatrix.from_dense(np.ones((2, 2))), p, 0)
