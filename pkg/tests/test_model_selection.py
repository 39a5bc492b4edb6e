import math

import numpy as np
import pytest

from fedstack.clustering import GMMModel, gmm_fit
from fedstack.errors import PreconditionError, ShapeMismatchError
from fedstack.model_selection import (
    BICRecord,
    BICResult,
    bic,
    log_likelihood,
    param_count,
    select_from_records,
    select_k,
)


def single_component(mean, var):
    mean = np.atleast_2d(np.asarray(mean, dtype=float))
    var = np.atleast_2d(np.asarray(var, dtype=float))
    return GMMModel(
        weights=np.array([1.0]), means=mean, variances=var, log_likelihood=0.0
    )


def gaussian_mle_ll(x):
    """Closed-form log-likelihood of a single diagonal Gaussian at its MLE."""
    n, d = x.shape
    var = x.var(axis=0)
    return -0.5 * n * np.log(2.0 * np.pi * var).sum() - 0.5 * n * d


class TestLogLikelihood:
    def test_single_point_at_mean_unit_variance(self):
        model = single_component([0.0], [1.0])
        ll = log_likelihood(model, np.array([[0.0]]))
        assert ll == pytest.approx(-0.9189385332046727, rel=1e-12)

    def test_density_at_mean_drops_with_variance(self):
        x = np.array([[0.0]])
        lls = [
            log_likelihood(single_component([0.0], [v]), x)
            for v in (1.0, 2.0, 4.0, 8.0)
        ]
        assert all(b < a for a, b in zip(lls, lls[1:]))

    def test_k1_fit_matches_closed_form_mle(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(40, 3)) * 1.7 + 2.0
        model, _ = gmm_fit(x, 1, seed=0)
        assert model.log_likelihood == pytest.approx(gaussian_mle_ll(x), rel=1e-9)
        assert log_likelihood(model, x) == pytest.approx(
            gaussian_mle_ll(x), rel=1e-9
        )

    def test_dimension_mismatch_rejected(self):
        model = single_component([0.0, 0.0], [1.0, 1.0])
        with pytest.raises(ShapeMismatchError):
            log_likelihood(model, np.zeros((3, 3)))


class TestBic:
    def test_param_count_formula(self):
        assert param_count(3, 4) == 3 * 8 + 2 == 26
        assert param_count(1, 5) == 10

    def test_formula_instantiation(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(15, 2))
        model, _ = gmm_fit(x, 2, seed=0)
        ll = log_likelihood(model, x)
        assert bic(model, x) == pytest.approx(
            -2.0 * ll + param_count(2, 2) * math.log(15), rel=1e-12
        )

    def test_extra_component_worsens_bic_on_one_blob(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(60, 2))
        m1, _ = gmm_fit(x, 1, seed=0)
        m2, _ = gmm_fit(x, 2, seed=0)
        assert m2.log_likelihood >= m1.log_likelihood - 1e-9
        assert bic(m2, x) > bic(m1, x)

    def test_single_sample_rejected(self):
        model = single_component([0.0], [1.0])
        with pytest.raises(PreconditionError):
            bic(model, np.array([[0.0]]))

    def test_penalty_monotone_in_param_count(self):
        # fixed log-likelihood: the score strictly grows with m_p for n >= 3
        for n in (3, 10, 100):
            scores = [
                -2.0 * (-50.0) + param_count(k, 4) * math.log(n)
                for k in range(1, 6)
            ]
            assert all(b > a for a, b in zip(scores, scores[1:]))


def blob_vectors(rng, n_per=15, centers=3, dim=6, spread=20.0, sigma=1.0):
    blobs = []
    for c in range(centers):
        center = rng.uniform(-spread, spread, size=dim)
        blobs.append(center + rng.normal(scale=sigma, size=(n_per, dim)))
    return np.vstack(blobs)


class TestSelectK:
    def test_reported_curve_argmin_is_three(self):
        # shape of a published score curve, used purely as an argmin fixture
        scores = {
            1: -298.4662333639485,
            2: -423.6594571834727,
            3: -468.5431601193207,
            4: -342.2485203791746,
            5: -416.1944019368898,
            6: -363.91075805030107,
            7: -273.42855409799563,
            8: -201.97443100059866,
            9: -113.33712291374741,
        }
        records = [
            BICRecord(k=k, log_likelihood=0.0, param_count=1, sample_count=15, score=s)
            for k, s in scores.items()
        ]
        assert select_from_records(records) == 3

    def test_ties_pick_smallest_k(self):
        records = [
            BICRecord(k=k, log_likelihood=0.0, param_count=1, sample_count=5, score=7.0)
            for k in (1, 2, 3)
        ]
        assert select_from_records(records) == 1

    def test_three_blobs_recovered(self):
        rng = np.random.default_rng(3)
        x = blob_vectors(rng, n_per=12, centers=3, dim=4, spread=15.0, sigma=0.5)
        result = select_k(x, 6, seed=0, restarts=3)
        assert result.selected_k == 3

    def test_single_blob_selects_one(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(30, 4))
        result = select_k(x, 5, seed=0, restarts=3)
        assert result.selected_k == 1

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        x = blob_vectors(rng, n_per=8, centers=2, dim=3)
        a = select_k(x, 4, seed=9, restarts=2)
        b = select_k(x, 4, seed=9, restarts=2)
        assert a.records == b.records
        assert a.selected_k == b.selected_k

    def test_workers_do_not_change_result(self):
        rng = np.random.default_rng(6)
        x = blob_vectors(rng, n_per=8, centers=2, dim=3)
        a = select_k(x, 4, seed=9, restarts=2, workers=1)
        b = select_k(x, 4, seed=9, restarts=2, workers=4)
        assert a.records == b.records

    def test_k_max_bounds(self):
        with pytest.raises(PreconditionError):
            select_k(np.zeros((3, 2)) + np.arange(3)[:, None], 4, seed=0)

    def test_result_validates_selected_k(self):
        records = [
            BICRecord(k=1, log_likelihood=0.0, param_count=1, sample_count=5, score=2.0),
            BICRecord(k=2, log_likelihood=0.0, param_count=2, sample_count=5, score=1.0),
        ]
        with pytest.raises(PreconditionError):
            BICResult(records=records, selected_k=1)
