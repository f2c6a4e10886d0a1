"""Batch selection policies.

``select_joint_entropy`` implements the greedy conditional-entropy
maximization: at each step it picks the candidate whose centered margin
vector has the largest squared residual against the span of the already
chosen ones. Because the batch covariance is the Gram matrix of those
vectors, that residual norm equals the determinant ratio
det(cov(B+t))/det(cov(B)), i.e. each step maximizes the entropy gain.

Baselines: uniform random, uncertainty sampling (binary ordering entropy of
a logistic link on the deterministic margin), and highest individual margin
variance. All tie-breaks are by ascending candidate id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import cholesky_logdet
from .posterior import CenteredMargins

STRATEGY_NAMES = ("joint_entropy", "random", "uncertainty", "variance")

LOG_2PI_E = math.log(2.0 * math.pi * math.e)


class BatchTooLarge(ValueError):
    pass


@dataclass
class SelectionConfig:
    batch_size: int
    lam: float | None = None  # None -> 1e-8 x mean variance
    min_norm: float = 1e-8
    seed: int | None = None  # random strategy only

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be >= 0")


@dataclass
class SelectionResult:
    chosen: list[int]
    step_scores: list[float]
    strategy: str
    saturated_at: int | None = None
    inner_products: int = 0


def _auto_lam(variances: np.ndarray) -> float:
    return 1e-8 * float(np.mean(variances))


def _min_id_among(candidates: np.ndarray, ids: np.ndarray) -> int:
    """Position (into the candidate arrays) holding the smallest id."""
    return int(candidates[np.argmin(ids[candidates])])


def greedy_residual_selection(
    vectors: np.ndarray,
    ids,
    batch_size: int,
    lam: float = 0.0,
    min_norm: float = 1e-8,
    fallback_scores: np.ndarray | None = None,
    strategy: str = "joint_entropy",
) -> SelectionResult:
    """Greedy log-det maximization over the rows of ``vectors``.

    Residuals of all rows against the span of chosen rows are maintained
    incrementally (one projection coefficient per row per step), so the
    whole selection costs under 2 * batch_size * m inner products of the row
    length. When the largest remaining residual norm falls below
    ``min_norm`` the span is saturated: the step index is recorded and the
    remaining picks fall back to (fallback_scores desc, id asc).
    """
    r = np.array(vectors, dtype=np.float64)
    if r.ndim != 2:
        raise ValueError("vectors must be a 2-D array of rows")
    m = r.shape[0]
    ids = np.asarray(list(ids), dtype=np.intp)
    if ids.shape[0] != m:
        raise ValueError("ids length must match row count")
    if batch_size > m:
        raise BatchTooLarge(f"batch size {batch_size} exceeds {m} candidates")
    sq = np.einsum("ij,ij->i", r, r)
    inner_products = m
    if fallback_scores is None:
        fallback_scores = sq.copy()
    else:
        fallback_scores = np.asarray(fallback_scores, dtype=np.float64)

    unchosen = np.ones(m, dtype=bool)
    chosen: list[int] = []
    step_scores: list[float] = []
    saturated_at: int | None = None

    for k in range(1, batch_size + 1):
        open_pos = np.nonzero(unchosen)[0]
        if saturated_at is None:
            best = float(sq[open_pos].max())
            if math.sqrt(max(best, 0.0)) < min_norm:
                saturated_at = k
        if saturated_at is None:
            tied = open_pos[sq[open_pos] == best]
            pick = _min_id_among(tied, ids)
            score_sq = float(sq[pick])
            if k < batch_size:
                residual = r[pick]
                res_sq = float(residual @ residual)
                inner_products += 1
                if res_sq > 0.0:
                    q = residual / math.sqrt(res_sq)
                    coeffs = r @ q
                    inner_products += m
                    r -= np.outer(coeffs, q)
                    sq = np.maximum(sq - coeffs * coeffs, 0.0)
        else:
            best_fb = float(fallback_scores[open_pos].max())
            tied = open_pos[fallback_scores[open_pos] == best_fb]
            pick = _min_id_among(tied, ids)
            score_sq = max(float(sq[pick]), 0.0)
        step_scores.append(float(np.log(score_sq + lam)))
        unchosen[pick] = False
        chosen.append(int(ids[pick]))

    return SelectionResult(
        chosen=chosen,
        step_scores=step_scores,
        strategy=strategy,
        saturated_at=saturated_at,
        inner_products=inner_products,
    )


def select_joint_entropy(cm: CenteredMargins, cfg: SelectionConfig) -> SelectionResult:
    lam = _auto_lam(cm.variances) if cfg.lam is None else cfg.lam
    return greedy_residual_selection(
        cm.gram_vectors,
        cm.candidate_ids,
        cfg.batch_size,
        lam=lam,
        min_norm=cfg.min_norm,
        fallback_scores=cm.variances,
        strategy="joint_entropy",
    )


def select_random(candidate_ids, cfg: SelectionConfig) -> SelectionResult:
    ids = list(candidate_ids)
    if cfg.batch_size > len(ids):
        raise BatchTooLarge(f"batch size {cfg.batch_size} exceeds {len(ids)} candidates")
    rng = np.random.default_rng(cfg.seed)
    chosen = [int(c) for c in rng.choice(np.asarray(ids, dtype=np.intp), size=cfg.batch_size, replace=False)]
    return SelectionResult(
        chosen=chosen,
        step_scores=[0.0] * cfg.batch_size,
        strategy="random",
    )


def ordering_entropy(mean_margins: np.ndarray) -> np.ndarray:
    """Binary Shannon entropy (nats) of p = sigmoid(margin), computed from
    |margin| only, so it is exactly symmetric and saturation-proof."""
    a = np.abs(np.asarray(mean_margins, dtype=np.float64))
    s = np.exp(-a)  # <= 1, so nothing here can overflow
    return np.log1p(s) + a * s / (1.0 + s)


def select_uncertainty(
    mean_margins: np.ndarray, cfg: SelectionConfig, candidate_ids=None
) -> SelectionResult:
    mean_margins = np.asarray(mean_margins, dtype=np.float64)
    m = mean_margins.shape[0]
    ids = list(range(m)) if candidate_ids is None else list(candidate_ids)
    if cfg.batch_size > m:
        raise BatchTooLarge(f"batch size {cfg.batch_size} exceeds {m} candidates")
    scores = ordering_entropy(mean_margins)
    order = sorted(range(m), key=lambda pos: (-scores[pos], ids[pos]))
    top = order[: cfg.batch_size]
    return SelectionResult(
        chosen=[int(ids[pos]) for pos in top],
        step_scores=[float(scores[pos]) for pos in top],
        strategy="uncertainty",
    )


def select_variance(cm: CenteredMargins, cfg: SelectionConfig) -> SelectionResult:
    m = len(cm.candidate_ids)
    if cfg.batch_size > m:
        raise BatchTooLarge(f"batch size {cfg.batch_size} exceeds {m} candidates")
    lam = _auto_lam(cm.variances) if cfg.lam is None else cfg.lam
    order = sorted(range(m), key=lambda pos: (-cm.variances[pos], cm.candidate_ids[pos]))
    top = order[: cfg.batch_size]
    return SelectionResult(
        chosen=[int(cm.candidate_ids[pos]) for pos in top],
        step_scores=[float(np.log(cm.variances[pos] + lam)) for pos in top],
        strategy="variance",
    )


def batch_entropy(cm: CenteredMargins, batch_ids, lam: float = 0.0) -> float:
    """Differential entropy of the max-entropy Gaussian over the batch's
    margin vector: 0.5 * (|B| log(2 pi e) + log det(cov + lam I))."""
    batch_ids = list(batch_ids)
    if not batch_ids:
        raise ValueError("batch must be nonempty")
    cov = cm.covariance(batch_ids)
    if lam:
        cov = cov + lam * np.eye(len(batch_ids))
    return 0.5 * (len(batch_ids) * LOG_2PI_E + cholesky_logdet(cov))
