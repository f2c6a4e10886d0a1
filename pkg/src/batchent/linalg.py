"""Dense real linear algebra for greedy log-determinant selection.

Two routes to the same quantity are kept deliberately separate: a Cholesky
log-determinant (oracle) and an incremental modified Gram-Schmidt residual
recursion. The Gram determinant of a vector family equals the product of its
squared MGS residual norms, so the two must agree on full-rank families.
"""

from __future__ import annotations

import math

import numpy as np


class NotSymmetric(ValueError):
    pass


class NotPositiveDefinite(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class Saturated(RuntimeError):
    """Residual norm fell below the extension threshold; span is saturated."""


SYMMETRY_RTOL = 1e-10

# Re-orthogonalize once when heavy cancellation is detected (residual shrunk
# below this fraction of the input norm).
REORTH_THRESHOLD = 1e-3


def cholesky_logdet(m: np.ndarray) -> float:
    """log det of a symmetric positive-definite matrix via its Cholesky
    factor: 2 * sum(log diag(L)).

    Raises NotSymmetric when the asymmetry exceeds 1e-10 relative, and
    NotPositiveDefinite when the factorization fails (any pivot <= 0).
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    scale = max(1.0, float(np.abs(m).max())) if m.size else 1.0
    asym = float(np.abs(m - m.T).max(initial=0.0))
    if asym > SYMMETRY_RTOL * scale:
        raise NotSymmetric(f"asymmetry {asym:.3e} exceeds {SYMMETRY_RTOL:.0e} relative")
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from exc
    diag = np.diag(chol)
    if np.any(diag <= 0.0):
        raise NotPositiveDefinite("nonpositive pivot in Cholesky factor")
    return 2.0 * float(np.sum(np.log(diag)))


class OrthoBasis:
    """Ordered set of unit-norm mutually orthogonal vectors in R^dim.

    Immutable: extension returns a new basis sharing the existing vectors.
    """

    __slots__ = ("dim", "_vectors")

    def __init__(self, dim: int, vectors: tuple[np.ndarray, ...] = ()):
        self.dim = int(dim)
        self._vectors = vectors

    @classmethod
    def empty(cls, dim: int) -> "OrthoBasis":
        return cls(dim)

    def __len__(self) -> int:
        return len(self._vectors)

    @property
    def vectors(self) -> np.ndarray:
        """(count, dim) array; a fresh copy each call."""
        if not self._vectors:
            return np.zeros((0, self.dim))
        return np.array(self._vectors)

    def __iter__(self):
        return iter(self._vectors)


def mgs_residual(basis: OrthoBasis, v: np.ndarray) -> tuple[np.ndarray, float]:
    """Sequentially project v out of each basis vector (modified
    Gram-Schmidt) and return (residual, squared residual norm).

    One re-orthogonalization pass is applied when the residual norm drops
    below 1e-3 of ``norm(v)``, which keeps the residual orthogonal to the
    basis to ~1e-10 * norm(v) even under heavy cancellation.
    """
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (basis.dim,):
        raise DimensionMismatch(f"vector shape {v.shape} does not match basis dim {basis.dim}")
    r = v.copy()
    for q in basis:
        r -= np.dot(r, q) * q
    v_norm = float(np.linalg.norm(v))
    if len(basis) and float(np.linalg.norm(r)) < REORTH_THRESHOLD * v_norm:
        for q in basis:
            r -= np.dot(r, q) * q
    return r, float(np.dot(r, r))


def basis_extend(basis: OrthoBasis, residual: np.ndarray, min_norm: float = 1e-8) -> OrthoBasis:
    """Append residual/||residual|| to the basis.

    Raises Saturated when ||residual|| < min_norm; the caller falls back to
    its tie-break rule and keeps the basis unchanged.
    """
    residual = np.asarray(residual, dtype=np.float64)
    if residual.shape != (basis.dim,):
        raise DimensionMismatch(
            f"residual shape {residual.shape} does not match basis dim {basis.dim}"
        )
    norm = float(np.linalg.norm(residual))
    if norm < min_norm or norm == 0.0:
        raise Saturated(f"residual norm {norm:.3e} below min_norm {min_norm:.3e}")
    return OrthoBasis(basis.dim, (*basis._vectors, residual / norm))


def gram_logdet_by_residuals(vectors) -> float:
    """log det of the Gram matrix of an ordered vector family, computed as
    sum_k log ||u_k - proj_{span(u_1..u_{k-1})} u_k||^2.

    Returns -inf for a rank-deficient family instead of raising: greedy
    selection legitimately probes saturated spans.
    """
    vectors = np.atleast_2d(np.asarray(vectors, dtype=np.float64))
    if vectors.shape[0] == 0:
        return 0.0
    dim = vectors.shape[1]
    basis = OrthoBasis.empty(dim)
    total = 0.0
    for v in vectors:
        residual, sq = mgs_residual(basis, v)
        # Cancellation leaves ~eps-scale residue on dependent vectors, so the
        # sentinel must trigger on a relative threshold, not exact zero.
        if sq <= (1e-12 ** 2) * float(np.dot(v, v)):
            return -math.inf
        total += math.log(sq)
        try:
            basis = basis_extend(basis, residual, min_norm=0.0)
        except Saturated:
            return -math.inf
    return total
