"""Dropout-sampled margin matrices and their centered form.

The load-bearing property is that one dropout plan per pass is shared by
every candidate, so inter-candidate correlation survives into the Gram
vectors.
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from batchent.data import Triplet
from batchent.model import init_params
from batchent.posterior import CenteredMargins, MarginSampleMatrix, center, sample_margins


@pytest.fixture
def setup():
    rng = np.random.default_rng(17)
    params = init_params([5, 12, 8, 4], seed=17)
    features = rng.standard_normal((10, 5))
    candidates = [Triplet(0, 1, 2), Triplet(3, 4, 5), Triplet(6, 7, 8), Triplet(1, 9, 0)]
    return params, features, candidates


class TestSampleMargins:
    def test_shape_and_ids(self, setup):
        params, features, cands = setup
        msm = sample_margins(params, cands, features, n_passes=6, p=0.1, seed=0)
        assert msm.samples.shape == (4, 6)
        assert msm.candidate_ids == [0, 1, 2, 3]
        msm2 = sample_margins(params, cands, features, n_passes=6, p=0.1, seed=0, candidate_ids=[7, 8, 9, 10])
        assert msm2.candidate_ids == [7, 8, 9, 10]

    def test_p0_columns_identical(self, setup):
        params, features, cands = setup
        msm = sample_margins(params, cands, features, n_passes=5, p=0.0, seed=3)
        for col in range(1, 5):
            assert_allclose(msm.samples[:, col], msm.samples[:, 0])
        assert_allclose(center(msm).variances, 0.0, atol=1e-18)

    def test_deterministic_by_seed(self, setup):
        params, features, cands = setup
        a = sample_margins(params, cands, features, n_passes=8, p=0.2, seed=11)
        b = sample_margins(params, cands, features, n_passes=8, p=0.2, seed=11)
        assert np.array_equal(a.samples, b.samples)
        c = sample_margins(params, cands, features, n_passes=8, p=0.2, seed=12)
        assert not np.array_equal(a.samples, c.samples)

    def test_swapped_pair_rows_negate(self, setup):
        params, features, _ = setup
        pair = [Triplet(0, 1, 2), Triplet(0, 2, 1)]
        msm = sample_margins(params, pair, features, n_passes=7, p=0.3, seed=5)
        assert_allclose(msm.samples[1], -msm.samples[0], atol=1e-12)
        cm = center(msm)
        cov = cm.covariance()
        assert cov[0, 1] == pytest.approx(-cm.variances[0], rel=1e-12)

    def test_shared_plan_makes_columns_correlated(self, setup):
        # same-object triplets must co-move under a shared mask: correlation
        # of two overlapping margins across passes should be far from zero
        params, features, _ = setup
        near = [Triplet(0, 1, 2), Triplet(0, 1, 3)]
        msm = sample_margins(params, near, features, n_passes=64, p=0.4, seed=7)
        c = np.corrcoef(msm.samples)
        assert abs(c[0, 1]) > 0.2

    def test_empty_candidates_rejected(self, setup):
        params, features, _ = setup
        with pytest.raises(ValueError):
            sample_margins(params, [], features, n_passes=4, p=0.1, seed=0)

    def test_single_pass_rejected(self, setup):
        params, features, cands = setup
        with pytest.raises(ValueError):
            sample_margins(params, cands, features, n_passes=1, p=0.1, seed=0)


class TestCenter:
    def test_constant_row(self):
        msm = MarginSampleMatrix(candidate_ids=[0], samples=np.array([[1.0, 1.0, 1.0, 1.0]]))
        cm = center(msm)
        assert cm.means[0] == 1.0
        assert_allclose(cm.centered[0], 0.0)
        assert cm.variances[0] == 0.0

    def test_two_sample_hand_value(self):
        # row (0, 2): mean 1, centered (-1, 1), unbiased variance 2
        msm = MarginSampleMatrix(candidate_ids=[4], samples=np.array([[0.0, 2.0]]))
        cm = center(msm)
        assert cm.means[0] == pytest.approx(1.0)
        assert_allclose(cm.centered[0], [-1.0, 1.0])
        assert cm.variances[0] == pytest.approx(2.0)

    def test_rows_sum_to_zero(self, setup):
        params, features, cands = setup
        cm = center(sample_margins(params, cands, features, n_passes=16, p=0.25, seed=2))
        scale = np.abs(cm.means).max() + 1.0
        assert np.all(np.abs(cm.centered.sum(axis=1)) <= 1e-9 * 16 * scale)

    def test_covariance_diag_equals_variances(self, setup):
        params, features, cands = setup
        cm = center(sample_margins(params, cands, features, n_passes=20, p=0.2, seed=4))
        assert_allclose(np.diag(cm.covariance()), cm.variances, rtol=1e-12)

    def test_covariance_symmetric_psd(self, setup):
        params, features, cands = setup
        cm = center(sample_margins(params, cands, features, n_passes=24, p=0.3, seed=6))
        cov = cm.covariance()
        assert np.array_equal(cov, cov.T)
        eigs = np.linalg.eigvalsh(cov)
        assert eigs.min() >= -1e-9 * max(np.trace(cov), 1e-30)

    def test_covariance_subset_order(self, setup):
        params, features, cands = setup
        cm = center(sample_margins(params, cands, features, n_passes=12, p=0.2, seed=8, candidate_ids=[5, 6, 7, 8]))
        full = cm.covariance()
        sub = cm.covariance([7, 5])
        assert sub[0, 0] == pytest.approx(full[2, 2])
        assert sub[1, 1] == pytest.approx(full[0, 0])
        assert sub[0, 1] == pytest.approx(full[2, 0])

    def test_scaling_by_c_squares(self, setup):
        params, features, cands = setup
        msm = sample_margins(params, cands, features, n_passes=10, p=0.2, seed=9)
        cm = center(msm)
        for c in (0.001, 3.7, 1000.0):
            scaled = center(MarginSampleMatrix(list(msm.candidate_ids), c * msm.samples))
            assert_allclose(scaled.variances, c * c * cm.variances, rtol=1e-9)
            assert_allclose(scaled.covariance(), c * c * cm.covariance(), rtol=1e-9)

    def test_gram_vectors_reproduce_covariance(self, setup):
        params, features, cands = setup
        cm = center(sample_margins(params, cands, features, n_passes=30, p=0.15, seed=10))
        g = cm.gram_vectors
        assert_allclose(g @ g.T, cm.covariance(), rtol=1e-12, atol=1e-15)


class TestMarginSampleMatrixValidation:
    def test_bad_shape(self):
        with pytest.raises(ValueError):
            MarginSampleMatrix(candidate_ids=[0, 1], samples=np.zeros((3, 4)))

    def test_nonfinite(self):
        with pytest.raises(ValueError):
            MarginSampleMatrix(candidate_ids=[0], samples=np.array([[1.0, np.nan]]))
