"""Numeric kernels against scipy references, and numpy/numba twin agreement."""

import numpy as np
import pytest
from scipy import special, stats

from shotmix import kernels
from shotmix.geometry import TruncatedGaussian, trunc_logpdf


def random_problem(seed, n=60, k=5):
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(n, 2)) * np.array([2.0, 1.0]) + np.array([0.0, 1.0])
    pts[rng.random(n) < 0.1, 1] *= -1.0  # a few below the support
    means = rng.normal(size=(k, 2)) * np.array([2.0, 0.8]) + np.array([0.0, 1.2])
    covs = np.empty((k, 2, 2))
    for i in range(k):
        a = rng.normal(size=(2, 2)) * 0.4
        covs[i] = a @ a.T + 0.3 * np.eye(2)
    w = rng.dirichlet(np.ones(k))
    return np.ascontiguousarray(pts), means, covs, np.log(w)


class TestNdtr:
    def test_matches_scipy_bulk(self):
        xs = np.linspace(-8, 8, 1601)
        ours = np.array([kernels.ndtr(x) for x in xs])
        assert np.allclose(ours, special.ndtr(xs), rtol=1e-13, atol=1e-300)

    def test_log_tail_matches_scipy(self):
        # deep left tail where ndtr underflows and only the log form survives
        xs = np.array([-8.0, -10.0, -15.0, -20.0, -30.0, -38.0])
        ours = np.array([kernels.log_ndtr(x) for x in xs])
        assert np.allclose(ours, special.log_ndtr(xs), rtol=1e-9)

    def test_log_right_side(self):
        xs = np.linspace(-7.5, 6.0, 300)
        ours = np.array([kernels.log_ndtr(x) for x in xs])
        assert np.allclose(ours, special.log_ndtr(xs), rtol=1e-12, atol=1e-15)


class TestDensityMatrix:
    def test_matches_pointwise_reference(self):
        pts, means, covs, _ = random_problem(0)
        got = kernels.trunc_log_density_matrix(pts, means, covs)
        for j in range(means.shape[0]):
            g = TruncatedGaussian(means[j], covs[j])
            ref = np.array([trunc_logpdf(g, p) for p in pts])
            assert np.allclose(got[:, j], ref, rtol=1e-12, atol=1e-12, equal_nan=False)

    def test_below_support_rows_are_neg_inf(self):
        pts = np.array([[0.0, -0.1], [0.0, 0.5]])
        means = np.array([[0.0, 1.0]])
        covs = np.eye(2)[None, :, :]
        got = kernels.trunc_log_density_matrix(pts, means, covs)
        assert got[0, 0] == -np.inf
        assert np.isfinite(got[1, 0])


class TestEstep:
    def test_matches_logsumexp_reference(self):
        pts, means, covs, log_w = random_problem(1)
        log_dens = kernels.trunc_log_density_matrix(pts, means, covs)
        keep = np.isfinite(log_dens).all(axis=1)
        log_dens = np.ascontiguousarray(log_dens[keep])
        loglik, colsums = kernels.em_estep(log_dens, log_w)

        scored = log_dens + log_w[None, :]
        rows = special.logsumexp(scored, axis=1)
        resp = np.exp(scored - rows[:, None])
        assert loglik == pytest.approx(rows.sum(), rel=1e-12)
        assert np.allclose(colsums, resp.sum(axis=0), rtol=1e-10, atol=1e-12)
        assert colsums.sum() == pytest.approx(log_dens.shape[0], rel=1e-9)

    def test_dead_component_gets_nothing(self):
        pts, means, covs, log_w = random_problem(2)
        log_dens = kernels.trunc_log_density_matrix(pts, means, covs)
        log_dens = np.ascontiguousarray(log_dens[np.isfinite(log_dens).all(axis=1)])
        log_w = log_w.copy()
        log_w[2] = -np.inf
        _, colsums = kernels.em_estep(log_dens, log_w)
        assert colsums[2] == 0.0


class TestWeightedValueRows:
    def test_matches_manual_average(self):
        pts, means, covs, log_w = random_problem(3)
        log_dens = kernels.trunc_log_density_matrix(pts, means, covs)
        log_dens = np.ascontiguousarray(log_dens[np.isfinite(log_dens).all(axis=1)])
        values = np.linspace(0.1, 0.5, means.shape[0])
        got = kernels.weighted_value_rows(log_dens, log_w, values)

        scored = log_dens + log_w[None, :]
        resp = np.exp(scored - special.logsumexp(scored, axis=1)[:, None])
        assert np.allclose(got, resp @ values, rtol=1e-10, atol=1e-12)

    def test_unsupported_row_is_nan(self):
        log_dens = np.array([[-np.inf, -np.inf], [-1.0, -2.0]])
        log_w = np.log(np.array([0.5, 0.5]))
        got = kernels.weighted_value_rows(log_dens, log_w, np.array([0.2, 0.4]))
        assert np.isnan(got[0])
        assert np.isfinite(got[1])


numba = pytest.importorskip("numba")


class TestBackendTwins:
    """The compiled kernels must agree with the plain numpy ones."""

    def test_density_estep_value_rows_agree(self):
        nb = kernels.numba_impls()
        pl = kernels.numpy_impls()
        for seed in range(4):
            pts, means, covs, log_w = random_problem(seed, n=120, k=7)
            d_nb = nb["trunc_log_density_matrix"](pts, means, covs)
            d_pl = pl["trunc_log_density_matrix"](pts, means, covs)
            assert np.allclose(d_nb, d_pl, rtol=1e-12, atol=1e-12)
            mask = np.isfinite(d_pl).all(axis=1)
            d_nb, d_pl = np.ascontiguousarray(d_nb[mask]), d_pl[mask]
            ll_nb, cs_nb = nb["em_estep"](d_nb, log_w)
            ll_pl, cs_pl = pl["em_estep"](d_pl, log_w)
            assert ll_nb == pytest.approx(ll_pl, rel=1e-12)
            assert np.allclose(cs_nb, cs_pl, rtol=1e-11, atol=1e-13)
            values = np.linspace(0.05, 0.6, means.shape[0])
            v_nb = nb["weighted_value_rows"](d_nb, log_w, values)
            v_pl = pl["weighted_value_rows"](d_pl, log_w, values)
            assert np.allclose(v_nb, v_pl, rtol=1e-12, atol=1e-14)

    def test_active_names_match_backend(self):
        from shotmix.backend import BACKEND

        family = kernels.numba_impls() if BACKEND == "numba" else kernels.numpy_impls()
        assert kernels.em_estep is family["em_estep"]
