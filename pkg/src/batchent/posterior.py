"""MC-dropout sampling of the joint margin distribution.

Each dropout pass is ONE thinned model applied to every candidate triplet, so
correlations between candidates come only from the shared model perturbation.
Centered rows (one K-vector per candidate) are the Gram vectors whose inner
products, divided by K-1, form the batch covariance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import EmbeddingParams, make_dropout_plan, margins


@dataclass
class MarginSampleMatrix:
    """samples[t, kappa] = margin of candidate t under dropout pass kappa."""

    candidate_ids: list[int]
    samples: np.ndarray

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[0] != len(self.candidate_ids):
            raise ValueError("samples must be (n_candidates, n_passes)")
        if self.samples.shape[1] < 2:
            raise ValueError("need at least 2 dropout passes")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("margin samples contain non-finite values")

    @property
    def n_passes(self) -> int:
        return self.samples.shape[1]


@dataclass
class CenteredMargins:
    """Row means, zero-mean rows u_t, and unbiased variances ||u_t||^2/(K-1).
    Covariance entries are <u_s, u_t>/(K-1)."""

    candidate_ids: list[int]
    means: np.ndarray
    centered: np.ndarray
    variances: np.ndarray

    @property
    def n_passes(self) -> int:
        return self.centered.shape[1]

    @property
    def gram_vectors(self) -> np.ndarray:
        """Rows u_t / sqrt(K-1); their Gram matrix is the batch covariance."""
        return self.centered / np.sqrt(self.n_passes - 1)

    def covariance(self, ids=None) -> np.ndarray:
        """Covariance over a subset of candidates (default: all), in the
        order given. Exactly symmetric by construction."""
        v = self.gram_vectors
        if ids is not None:
            pos = {cid: p for p, cid in enumerate(self.candidate_ids)}
            v = v[[pos[cid] for cid in ids]]
        cov = v @ v.T
        return 0.5 * (cov + cov.T)


def sample_margins(
    params: EmbeddingParams,
    candidates,
    features: np.ndarray,
    n_passes: int,
    p: float,
    seed: int,
    candidate_ids: list[int] | None = None,
) -> MarginSampleMatrix:
    """Apply dropout ``n_passes`` times to the model and record every
    candidate's margin under each pass. Pass kappa uses the plan seeded by
    (seed, kappa); the whole matrix is deterministic given ``seed``."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("candidate set must be nonempty")
    if n_passes < 2:
        raise ValueError("need at least 2 dropout passes")
    if candidate_ids is None:
        candidate_ids = list(range(len(candidates)))
    samples = np.empty((len(candidates), n_passes))
    for kappa in range(n_passes):
        plan = make_dropout_plan(params.layer_sizes, p, seed=(seed, kappa))
        samples[:, kappa] = margins(params, candidates, features, plan)
    return MarginSampleMatrix(candidate_ids=list(candidate_ids), samples=samples)


def center(msm: MarginSampleMatrix) -> CenteredMargins:
    means = msm.samples.mean(axis=1)
    centered = msm.samples - means[:, None]
    variances = np.sum(centered * centered, axis=1) / (msm.n_passes - 1)
    return CenteredMargins(
        candidate_ids=list(msm.candidate_ids),
        means=means,
        centered=centered,
        variances=variances,
    )
