"""Selection policy tests.

The greedy selector is validated three ways: against hand-computed Gram
determinants, against a per-step determinant-ratio oracle (Cholesky route),
and against exhaustive subset enumeration on small instances.
"""

import itertools
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from batchent.linalg import cholesky_logdet, gram_logdet_by_residuals
from batchent.posterior import CenteredMargins
from batchent.strategies import (
    LOG_2PI_E,
    BatchTooLarge,
    SelectionConfig,
    batch_entropy,
    greedy_residual_selection,
    ordering_entropy,
    select_joint_entropy,
    select_random,
    select_uncertainty,
    select_variance,
)


def cm_from_rows(rows, ids=None):
    """CenteredMargins whose gram_vectors equal ``rows`` exactly (2-column
    rows have sqrt(K-1) = 1; wider rows are pre-scaled)."""
    rows = np.asarray(rows, dtype=np.float64)
    k = rows.shape[1]
    centered = rows * math.sqrt(k - 1)
    if ids is None:
        ids = list(range(rows.shape[0]))
    return CenteredMargins(
        candidate_ids=list(ids),
        means=np.zeros(rows.shape[0]),
        centered=centered,
        variances=np.einsum("ij,ij->i", rows, rows),
    )


def random_gram_rows(rng, m, k):
    return rng.standard_normal((m, k))


class TestGreedyEngine:
    def test_single_candidate(self):
        sel = greedy_residual_selection(np.array([[1.0, 2.0]]), [42], batch_size=1)
        assert sel.chosen == [42]
        assert sel.saturated_at is None

    def test_three_vector_example_with_bruteforce_oracle(self):
        # rows u1=(2,0), u2=(1,1), u3=(0,0.5); greedy must take u1 (norm^2 4)
        # then u2 (residual (0,1), norm^2 1 > 0.25).
        rows = np.array([[2.0, 0.0], [1.0, 1.0], [0.0, 0.5]])
        sel = greedy_residual_selection(rows, [0, 1, 2], batch_size=2, lam=0.0)
        assert sel.chosen == [0, 1]
        assert_allclose(sel.step_scores, [math.log(4.0), math.log(1.0)], atol=1e-12)
        # exhaustive pairs: the greedy pick is also the global argmax here
        best_pair = max(
            itertools.combinations(range(3), 2),
            key=lambda pair: np.linalg.det(rows[list(pair)] @ rows[list(pair)].T),
        )
        assert set(sel.chosen) == set(best_pair)

    def test_duplicate_rows_saturate(self):
        rows = np.tile(np.array([[1.0, 2.0]]), (3, 1))
        sel = greedy_residual_selection(rows, [10, 11, 12], batch_size=2, lam=1e-6)
        assert sel.chosen == [10, 11]  # id-min first, then fallback by id
        assert sel.saturated_at == 2

    def test_rank_deficient_family_falls_back_by_variance(self):
        # rank 2 in the plane; third pick must come from fallback scores
        rows = np.array([[3.0, 0.0], [0.0, 2.0], [1.0, 1.0], [0.5, 0.1]])
        fallback = np.einsum("ij,ij->i", rows, rows)
        sel = greedy_residual_selection(rows, [0, 1, 2, 3], batch_size=3, lam=1e-9, fallback_scores=fallback)
        assert sel.saturated_at == 3
        assert sel.chosen[:2] == [0, 1]
        # remaining by variance: row 2 (2.0) beats row 3 (0.26)
        assert sel.chosen[2] == 2

    def test_batch_too_large(self):
        with pytest.raises(BatchTooLarge):
            greedy_residual_selection(np.eye(3), [0, 1, 2], batch_size=4)

    def test_tie_breaks_by_ascending_id(self):
        rows = np.array([[0.0, 2.0], [2.0, 0.0], [2.0, 0.0]])
        sel = greedy_residual_selection(rows, [5, 9, 1], batch_size=1)
        assert sel.chosen == [1]  # ids 9 and 1 tie on norm; 1 wins

    def test_step_scores_sum_to_gram_logdet(self):
        rng = np.random.default_rng(40)
        for _ in range(10):
            m, k, b = 10, 12, 4
            rows = random_gram_rows(rng, m, k)
            sel = greedy_residual_selection(rows, list(range(m)), batch_size=b, lam=0.0)
            picked = rows[sel.chosen]
            assert sum(sel.step_scores) == pytest.approx(gram_logdet_by_residuals(picked), rel=1e-9)
            gram = picked @ picked.T
            assert sum(sel.step_scores) == pytest.approx(cholesky_logdet(0.5 * (gram + gram.T)), rel=1e-8)

    def test_per_step_argmax_matches_det_ratio_oracle(self):
        # each greedy pick must maximize det(Gram(B+t))/det(Gram(B))
        rng = np.random.default_rng(41)
        for _ in range(25):
            m = int(rng.integers(3, 9))
            k = m + int(rng.integers(0, 4))
            b = int(rng.integers(1, min(m, 4) + 1))
            rows = random_gram_rows(rng, m, k)
            sel = greedy_residual_selection(rows, list(range(m)), batch_size=b, lam=0.0)
            chosen = []
            for step in range(b):
                base = 0.0
                if chosen:
                    g = rows[chosen] @ rows[chosen].T
                    base = cholesky_logdet(0.5 * (g + g.T))
                gains = {}
                for t in range(m):
                    if t in chosen:
                        continue
                    trial = chosen + [t]
                    g = rows[trial] @ rows[trial].T
                    gains[t] = cholesky_logdet(0.5 * (g + g.T)) - base
                best = max(gains.values())
                argmax = min(t for t, v in gains.items() if v == best)
                assert sel.chosen[step] == argmax
                chosen.append(sel.chosen[step])

    def test_inner_product_budget(self):
        rng = np.random.default_rng(42)
        for m, b in [(1, 1), (5, 1), (8, 8), (30, 7), (100, 12)]:
            rows = random_gram_rows(rng, m, 16)
            sel = greedy_residual_selection(rows, list(range(m)), batch_size=b)
            assert sel.inner_products <= 2 * b * m

    def test_full_batch_selects_everything(self):
        rng = np.random.default_rng(43)
        rows = random_gram_rows(rng, 6, 8)
        sel = greedy_residual_selection(rows, [3, 1, 4, 1 + 4, 9, 2], batch_size=6)
        assert sorted(sel.chosen) == [1, 2, 3, 4, 5, 9]


class TestJointEntropy:
    def test_wires_gram_vectors(self):
        cm = cm_from_rows([[2.0, 0.0], [1.0, 1.0], [0.0, 0.5]], ids=[7, 8, 9])
        sel = select_joint_entropy(cm, SelectionConfig(batch_size=2, lam=0.0))
        assert sel.chosen == [7, 8]
        assert sel.strategy == "joint_entropy"

    def test_first_pick_equals_variance_pick(self):
        rng = np.random.default_rng(44)
        for _ in range(15):
            rows = random_gram_rows(rng, 9, 6)
            cm = cm_from_rows(rows)
            je = select_joint_entropy(cm, SelectionConfig(batch_size=1))
            var = select_variance(cm, SelectionConfig(batch_size=1))
            assert je.chosen == var.chosen

    def test_scale_invariance_with_auto_lam(self):
        rng = np.random.default_rng(45)
        for _ in range(10):
            rows = random_gram_rows(rng, 12, 10)
            base = select_joint_entropy(cm_from_rows(rows), SelectionConfig(batch_size=5))
            for c in (1e-3, 1e3):
                scaled = select_joint_entropy(cm_from_rows(c * rows), SelectionConfig(batch_size=5))
                assert scaled.chosen == base.chosen

    def test_permutation_invariance(self):
        rng = np.random.default_rng(46)
        rows = random_gram_rows(rng, 10, 8)
        ids = list(range(100, 110))
        base = select_joint_entropy(cm_from_rows(rows, ids), SelectionConfig(batch_size=4))
        perm = rng.permutation(10)
        permuted = select_joint_entropy(
            cm_from_rows(rows[perm], [ids[p] for p in perm]), SelectionConfig(batch_size=4)
        )
        assert permuted.chosen == base.chosen

    def test_diversity_beats_variance_on_clustered_instances(self):
        # clusters of near-duplicate high-variance rows: top-variance picks
        # collapse onto one cluster, the greedy spreads out
        rng = np.random.default_rng(47)
        lam = 1e-6
        strict = 0
        for _ in range(100):
            k = 24
            hub = rng.standard_normal(k) * 3.0
            cluster = [hub + 0.01 * rng.standard_normal(k) for _ in range(5)]
            spread = [rng.standard_normal(k) for _ in range(6)]
            rows = np.array(cluster + spread)
            cm = cm_from_rows(rows)
            cfg = SelectionConfig(batch_size=3, lam=lam)
            je = select_joint_entropy(cm, cfg)
            var = select_variance(cm, cfg)

            def reg_logdet(ids):
                sub = rows[[cm.candidate_ids.index(c) for c in ids]]
                g = sub @ sub.T + lam * np.eye(len(ids))
                return cholesky_logdet(0.5 * (g + g.T))

            a, b = reg_logdet(je.chosen), reg_logdet(var.chosen)
            assert a >= b - 1e-9
            if a > b + 1e-9:
                strict += 1
        assert strict >= 95


class TestRandom:
    def test_b_equals_m(self):
        sel = select_random([4, 7, 2], SelectionConfig(batch_size=3, seed=0))
        assert sorted(sel.chosen) == [2, 4, 7]

    def test_deterministic(self):
        a = select_random(list(range(50)), SelectionConfig(batch_size=10, seed=5))
        b = select_random(list(range(50)), SelectionConfig(batch_size=10, seed=5))
        assert a.chosen == b.chosen

    def test_uniform_frequencies(self):
        counts = {0: 0, 1: 0, 2: 0, 3: 0}
        n = 10_000
        for s in range(n):
            sel = select_random([0, 1, 2, 3], SelectionConfig(batch_size=1, seed=s))
            counts[sel.chosen[0]] += 1
        sigma = math.sqrt(n * 0.25 * 0.75)
        for c in counts.values():
            assert abs(c - n / 4) <= 3 * sigma

    def test_too_large(self):
        with pytest.raises(BatchTooLarge):
            select_random([1, 2], SelectionConfig(batch_size=3, seed=0))


class TestUncertainty:
    def test_zero_margin_max_entropy(self):
        sel = select_uncertainty(np.array([0.0]), SelectionConfig(batch_size=1))
        assert sel.step_scores[0] == pytest.approx(math.log(2.0), rel=1e-12)

    def test_picks_smallest_absolute_margin(self):
        sel = select_uncertainty(np.array([0.0, 5.0, -5.0]), SelectionConfig(batch_size=1))
        assert sel.chosen == [0]

    def test_score_symmetric(self):
        for xi in (0.0, 0.3, 2.0, 17.0, 500.0):
            a = ordering_entropy(np.array([xi]))[0]
            b = ordering_entropy(np.array([-xi]))[0]
            assert a == b

    def test_matches_direct_binary_entropy(self):
        # direct -p log p - (1-p) log(1-p) oracle; log(p~1) loses relative
        # precision past |xi|~13, so the tight comparison stays inside that
        xis = np.linspace(-12, 12, 201)
        p = 1.0 / (1.0 + np.exp(-xis))
        direct = -p * np.log(p) - (1 - p) * np.log1p(-p)
        assert_allclose(ordering_entropy(xis), direct, rtol=1e-10, atol=1e-300)
        wide = np.linspace(-30, 30, 121)
        pw = 1.0 / (1.0 + np.exp(-wide))
        direct_w = -pw * np.log(pw) - (1 - pw) * np.log1p(-pw)
        # the oracle itself bottoms out near 1e-14 absolute out here
        assert_allclose(ordering_entropy(wide), direct_w, rtol=1e-2, atol=1e-13)

    def test_extreme_margins_finite(self):
        scores = ordering_entropy(np.array([1e6, -1e6, 700.0]))
        assert np.all(np.isfinite(scores))
        assert np.all(scores >= 0.0)

    def test_monotone_in_absolute_margin(self):
        xs = np.array([0.0, 0.5, 1.0, 3.0, 10.0])
        s = ordering_entropy(xs)
        assert np.all(np.diff(s) < 0)

    def test_tie_by_id(self):
        sel = select_uncertainty(np.array([1.0, -1.0, 0.2]), SelectionConfig(batch_size=2), [30, 20, 10])
        assert sel.chosen == [10, 20]  # |1.0| ties with |-1.0|; id 20 < 30

    def test_monotone_odd_rescaling_keeps_set(self):
        rng = np.random.default_rng(48)
        xi = rng.standard_normal(20) * 2
        base = select_uncertainty(xi, SelectionConfig(batch_size=6))
        for f in (lambda x: 3.0 * x, np.tanh, lambda x: x**3):
            resc = select_uncertainty(f(xi), SelectionConfig(batch_size=6))
            assert set(resc.chosen) == set(base.chosen)


class TestVariance:
    def test_top_by_variance(self):
        cm = cm_from_rows([[2.0, 0.0], [1.0, 0.0], [0.5, 0.0]])
        sel = select_variance(cm, SelectionConfig(batch_size=2))
        assert sel.chosen == [0, 1]

    def test_all_equal_lowest_ids(self):
        cm = cm_from_rows([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]], ids=[9, 3, 6])
        sel = select_variance(cm, SelectionConfig(batch_size=2))
        assert sel.chosen == [3, 6]

    def test_scale_invariant(self):
        rng = np.random.default_rng(49)
        rows = random_gram_rows(rng, 8, 5)
        base = select_variance(cm_from_rows(rows), SelectionConfig(batch_size=3))
        scaled = select_variance(cm_from_rows(1e3 * rows), SelectionConfig(batch_size=3))
        assert scaled.chosen == base.chosen


class TestBatchEntropy:
    def test_unit_variance_single(self):
        cm = cm_from_rows([[1.0, 0.0]])
        h = batch_entropy(cm, [0], lam=0.0)
        assert h == pytest.approx(0.5 * math.log(2 * math.pi * math.e), abs=1e-9)
        assert h == pytest.approx(1.4189385332046727, abs=1e-9)

    def test_diagonal_additivity(self):
        cm = cm_from_rows([[1.0, 0.0], [0.0, 1.0]])
        h2 = batch_entropy(cm, [0, 1], lam=0.0)
        h1 = batch_entropy(cm, [0], lam=0.0)
        assert h2 == pytest.approx(2 * h1, abs=1e-9)

    def test_correlated_pair_hand_value(self):
        # covariance [[2,1],[1,2]]: entropy = 0.5*(2 log 2pi e + log 3)
        v = np.linalg.cholesky(np.array([[2.0, 1.0], [1.0, 2.0]]))
        cm = cm_from_rows(v)
        expected = 0.5 * (2 * LOG_2PI_E + math.log(3.0))
        assert batch_entropy(cm, [0, 1], lam=0.0) == pytest.approx(expected, rel=1e-12)

    def test_singular_requires_jitter(self):
        from batchent.linalg import NotPositiveDefinite

        cm = cm_from_rows([[1.0, 0.0], [1.0, 0.0]])
        with pytest.raises(NotPositiveDefinite):
            batch_entropy(cm, [0, 1], lam=0.0)
        assert np.isfinite(batch_entropy(cm, [0, 1], lam=1e-8))

    def test_empty_batch_rejected(self):
        cm = cm_from_rows([[1.0, 0.0]])
        with pytest.raises(ValueError):
            batch_entropy(cm, [], lam=0.0)


class TestSelectionConfig:
    def test_rejects_bad_batch(self):
        with pytest.raises(ValueError):
            SelectionConfig(batch_size=0)

    def test_rejects_negative_lam(self):
        with pytest.raises(ValueError):
            SelectionConfig(batch_size=1, lam=-1e-9)
