"""Log-determinant engine tests.

The Cholesky route is checked against hand-computed determinants and
numpy's LU-based slogdet; the residual recursion is then checked against the
Cholesky route. Keeping the two routes independent is the point.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from batchent.linalg import (
    DimensionMismatch,
    NotPositiveDefinite,
    NotSymmetric,
    OrthoBasis,
    Saturated,
    basis_extend,
    cholesky_logdet,
    gram_logdet_by_residuals,
    mgs_residual,
)


def random_spd(rng, n, scale=1.0):
    a = rng.standard_normal((n, n + 3)) * scale
    m = a @ a.T
    return 0.5 * (m + m.T)


class TestCholeskyLogdet:
    def test_identity_is_zero(self):
        assert cholesky_logdet(np.eye(2)) == 0.0
        assert cholesky_logdet(np.eye(7)) == 0.0

    def test_2x2_cofactor(self):
        # det [[2,1],[1,2]] = 2*2 - 1*1 = 3
        assert_allclose(cholesky_logdet(np.array([[2.0, 1.0], [1.0, 2.0]])), math.log(3.0), rtol=1e-14)

    def test_diagonal_is_sum_of_logs(self):
        d = np.array([0.5, 2.0, 9.0, 1e-4])
        assert_allclose(cholesky_logdet(np.diag(d)), np.sum(np.log(d)), rtol=1e-13)

    def test_rank_deficient_raises(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky_logdet(np.array([[1.0, 1.0], [1.0, 1.0]]))

    def test_negative_definite_raises(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky_logdet(-np.eye(3))

    def test_asymmetric_raises(self):
        m = np.array([[2.0, 1.0], [1.001, 2.0]])
        with pytest.raises(NotSymmetric):
            cholesky_logdet(m)

    def test_non_square_raises(self):
        with pytest.raises(DimensionMismatch):
            cholesky_logdet(np.ones((2, 3)))

    def test_matches_lu_slogdet(self):
        rng = np.random.default_rng(42)
        for n in [1, 2, 3, 8, 17, 40]:
            for _ in range(10):
                m = random_spd(rng, n)
                sign, ref = np.linalg.slogdet(m)
                assert sign == 1.0
                assert_allclose(cholesky_logdet(m), ref, rtol=1e-10, atol=1e-10)

    def test_scale_shift(self):
        # det(cM) = c^n det(M)
        rng = np.random.default_rng(3)
        m = random_spd(rng, 5)
        base = cholesky_logdet(m)
        assert_allclose(cholesky_logdet(4.0 * m), base + 5 * math.log(4.0), rtol=1e-12)


class TestMgsResidual:
    def test_axis_aligned(self):
        basis = basis_extend(OrthoBasis.empty(2), np.array([1.0, 0.0]))
        r, sq = mgs_residual(basis, np.array([1.0, 1.0]))
        assert_allclose(r, [0.0, 1.0], atol=1e-15)
        assert sq == pytest.approx(1.0)

    def test_empty_basis_returns_input(self):
        r, sq = mgs_residual(OrthoBasis.empty(2), np.array([3.0, 4.0]))
        assert_allclose(r, [3.0, 4.0])
        assert sq == pytest.approx(25.0)

    def test_full_span_residual_zero(self):
        basis = OrthoBasis.empty(2)
        basis = basis_extend(basis, np.array([1.0, 0.0]))
        basis = basis_extend(basis, np.array([0.0, 1.0]))
        r, sq = mgs_residual(basis, np.array([2.0, 5.0]))
        assert_allclose(r, [0.0, 0.0], atol=1e-12)
        assert sq <= 1e-24

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            mgs_residual(OrthoBasis.empty(3), np.array([1.0, 2.0]))

    def test_residual_orthogonal_to_basis(self):
        rng = np.random.default_rng(7)
        for _ in range(25):
            dim = int(rng.integers(3, 24))
            count = int(rng.integers(1, dim))
            basis = OrthoBasis.empty(dim)
            for _ in range(count):
                res, _ = mgs_residual(basis, rng.standard_normal(dim))
                basis = basis_extend(basis, res)
            v = rng.standard_normal(dim)
            r, sq = mgs_residual(basis, v)
            vnorm = np.linalg.norm(v)
            for q in basis:
                assert abs(np.dot(r, q)) <= 1e-10 * vnorm
            # projection never grows the vector
            assert math.sqrt(sq) <= vnorm + 1e-12

    def test_reorthogonalization_under_cancellation(self):
        # v almost inside the span: naive MGS would leave O(eps/norm) junk.
        basis = OrthoBasis.empty(3)
        basis = basis_extend(basis, np.array([1.0, 0.0, 0.0]))
        basis = basis_extend(basis, np.array([0.0, 1.0, 0.0]))
        v = np.array([1.0, 1.0, 1e-9])
        r, _ = mgs_residual(basis, v)
        for q in basis:
            assert abs(np.dot(r, q)) <= 1e-10 * np.linalg.norm(v)
        assert r[2] == pytest.approx(1e-9, rel=1e-9)


class TestBasisExtend:
    def test_normalizes(self):
        basis = basis_extend(OrthoBasis.empty(2), np.array([0.0, 2.0]))
        assert_allclose(basis.vectors, [[0.0, 1.0]])

    def test_saturated_below_min_norm(self):
        basis = basis_extend(OrthoBasis.empty(2), np.array([1.0, 0.0]))
        with pytest.raises(Saturated):
            basis_extend(basis, np.array([0.0, 1e-12]), min_norm=1e-8)
        assert len(basis) == 1  # untouched

    def test_appends(self):
        basis = basis_extend(OrthoBasis.empty(2), np.array([1.0, 0.0]))
        basis = basis_extend(basis, np.array([0.0, 3.0]))
        assert_allclose(basis.vectors, [[1.0, 0.0], [0.0, 1.0]])

    def test_immutability(self):
        b0 = OrthoBasis.empty(2)
        b1 = basis_extend(b0, np.array([1.0, 0.0]))
        assert len(b0) == 0 and len(b1) == 1

    def test_orthonormality_invariant(self):
        rng = np.random.default_rng(11)
        basis = OrthoBasis.empty(10)
        for _ in range(10):
            res, _ = mgs_residual(basis, rng.standard_normal(10))
            basis = basis_extend(basis, res)
        g = basis.vectors @ basis.vectors.T
        assert_allclose(g, np.eye(10), atol=1e-10)


class TestGramLogdet:
    def test_orthonormal_pair(self):
        assert gram_logdet_by_residuals([[1.0, 0.0], [0.0, 1.0]]) == pytest.approx(0.0, abs=1e-15)

    def test_two_vector_cofactor(self):
        # Gram of {(1,0),(1,1)} = [[1,1],[1,2]], det = 1*2 - 1*1 = 1
        assert gram_logdet_by_residuals([[1.0, 0.0], [1.0, 1.0]]) == pytest.approx(0.0, abs=1e-14)

    def test_empty_family(self):
        assert gram_logdet_by_residuals(np.zeros((0, 4))) == 0.0

    def test_duplicate_rows_minus_inf(self):
        assert gram_logdet_by_residuals([[1.0, 0.0], [1.0, 0.0]]) == -math.inf

    def test_linear_combination_minus_inf(self):
        rng = np.random.default_rng(5)
        v = rng.standard_normal((2, 6))
        fam = np.vstack([v, 0.3 * v[0] - 1.7 * v[1]])
        assert gram_logdet_by_residuals(fam) == -math.inf

    def test_zero_vector_minus_inf(self):
        assert gram_logdet_by_residuals([[0.0, 0.0], [1.0, 2.0]]) == -math.inf

    def test_fifty_random_vectors_match_cholesky(self):
        rng = np.random.default_rng(50)
        v = rng.standard_normal((50, 50))
        ref = cholesky_logdet(v @ v.T)
        got = gram_logdet_by_residuals(v)
        assert abs(got - ref) <= 1e-8 * max(1.0, abs(ref))

    def test_random_families_match_cholesky(self):
        rng = np.random.default_rng(123)
        for _ in range(60):
            dim = int(rng.integers(2, 65))
            count = int(rng.integers(1, dim + 1))
            v = rng.standard_normal((count, dim))
            gram = v @ v.T
            ref = cholesky_logdet(0.5 * (gram + gram.T))
            got = gram_logdet_by_residuals(v)
            assert abs(got - ref) <= 1e-8 * max(1.0, abs(ref))

    def test_monotone_under_regularization(self):
        # f(B) = logdet(I + Gram(B)) never decreases when a row is appended;
        # realized through augmented rows [v_t ; e_t] whose Gram is I + VV^T.
        rng = np.random.default_rng(9)
        for _ in range(20):
            n, dim = 6, 8
            v = rng.standard_normal((n, dim))
            aug = np.hstack([v, np.eye(n)])
            prev = 0.0
            for k in range(1, n + 1):
                cur = gram_logdet_by_residuals(aug[:k])
                assert cur >= prev - 1e-9
                prev = cur
