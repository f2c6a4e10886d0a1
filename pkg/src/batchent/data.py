"""Dataset ingestion, ground-truth triplet generation, splits, and a synthetic
dataset generator with a known latent metric.

File formats (UTF-8, LF):
  features.csv   header ``id,f0,...,f{d-1}``, rows ordered by contiguous id
  triplets.jsonl one ``{"i":..,"j":..,"k":..}`` per line, "j closer than k"
  dissim.csv     n x n matrix, no header
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np


class ParseError(ValueError):
    pass


class NonContiguousIds(ParseError):
    pass


class NonFinite(ParseError):
    pass


class ExhaustedSampling(RuntimeError):
    """Rejection sampling could not reach the requested triplet count."""


class Triplet(NamedTuple):
    """Ordered triplet ijk: object i is more similar to j than to k."""

    i: int
    j: int
    k: int

    def swapped(self) -> "Triplet":
        return Triplet(self.i, self.k, self.j)

    def canonical(self) -> "Triplet":
        """Orientation-free presentation (j < k); hides the ordering."""
        if self.j <= self.k:
            return self
        return Triplet(self.i, self.k, self.j)

    def unordered_key(self) -> tuple[int, int, int]:
        return (self.i, min(self.j, self.k), max(self.j, self.k))


@dataclass
class FeatureTable:
    """n objects with d-dimensional feature rows, ids 0..n-1."""

    rows: np.ndarray

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2 or self.rows.shape[1] < 1:
            raise ParseError(f"feature table must be 2-D with d >= 1, got shape {self.rows.shape}")
        if not np.all(np.isfinite(self.rows)):
            raise NonFinite("feature table contains non-finite entries")

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def d(self) -> int:
        return self.rows.shape[1]


@dataclass
class DissimMatrix:
    """Ground-truth dissimilarities: symmetric, nonnegative, zero diagonal."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ParseError(f"dissimilarity matrix must be square, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NonFinite("dissimilarity matrix contains non-finite entries")
        scale = max(1.0, float(np.abs(m).max())) if m.size else 1.0
        if np.abs(m - m.T).max(initial=0.0) > 1e-9 * scale:
            raise ParseError("dissimilarity matrix is not symmetric")
        if np.any(np.diag(m) != 0.0):
            raise ParseError("dissimilarity matrix diagonal must be zero")
        if np.any(m < 0.0):
            raise ParseError("dissimilarity matrix must be nonnegative")
        self.matrix = m

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass
class TripletList:
    """Ground truth given directly as ordered triplets."""

    triplets: list[Triplet]

    def __post_init__(self):
        for t in self.triplets:
            if len({t.i, t.j, t.k}) != 3:
                raise ParseError(f"triplet {t} has repeated indices")


GroundTruth = DissimMatrix | TripletList


@dataclass
class SyntheticSpec:
    """Latent points z ~ N(0, I_L); features x = A tanh(Wz) + noise
    ("tanh") or x = z + noise ("identity", requires L = d). Ground-truth
    dissimilarity is Euclidean distance between latent points."""

    n: int
    d: int
    latent_dim: int
    nonlinearity: str = "tanh"
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.latent_dim > self.d:
            raise ValueError("latent_dim must be <= d")
        if self.noise < 0:
            raise ValueError("noise scale must be >= 0")
        if self.nonlinearity not in ("tanh", "identity"):
            raise ValueError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.nonlinearity == "identity" and self.latent_dim != self.d:
            raise ValueError("identity map requires latent_dim == d")


@dataclass
class TripletDataset:
    """Everything a session needs: features, an unannotated train pool
    (stored in ground-truth order, presented canonically), a fixed test set,
    and the ground truth an oracle answers from."""

    features: FeatureTable
    train_pool: list[Triplet]
    test: list[Triplet]
    ground_truth: GroundTruth
    name: str = "dataset"
    manifest: dict = field(default_factory=dict)


def load_features(path: str | Path) -> FeatureTable:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ParseError(f"{path}: empty file")
    header = lines[0].split(",")
    if header[0].strip() != "id":
        raise ParseError(f"{path}: header must start with 'id', got {lines[0]!r}")
    d = len(header) - 1
    if d < 1:
        raise ParseError(f"{path}: no feature columns in header")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        cells = line.split(",")
        if len(cells) != d + 1:
            raise ParseError(f"{path}:{lineno}: expected {d + 1} cells, got {len(cells)}")
        try:
            obj_id = int(cells[0])
            values = [float(c) for c in cells[1:]]
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
        if obj_id != len(rows):
            raise NonContiguousIds(f"{path}:{lineno}: expected id {len(rows)}, got {obj_id}")
        if not all(np.isfinite(v) for v in values):
            raise NonFinite(f"{path}:{lineno}: non-finite feature value")
        rows.append(values)
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return FeatureTable(np.array(rows, dtype=np.float64))


def save_features(table: FeatureTable, path: str | Path) -> None:
    path = Path(path)
    header = "id," + ",".join(f"f{c}" for c in range(table.d))
    lines = [header]
    for obj_id, row in enumerate(table.rows):
        lines.append(str(obj_id) + "," + ",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_triplets(path: str | Path) -> list[Triplet]:
    path = Path(path)
    triplets = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            triplets.append(Triplet(int(obj["i"]), int(obj["j"]), int(obj["k"])))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    return triplets


def save_triplets(triplets: list[Triplet], path: str | Path) -> None:
    path = Path(path)
    lines = [json.dumps({"i": t.i, "j": t.j, "k": t.k}) for t in triplets]
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_dissim(path: str | Path) -> DissimMatrix:
    path = Path(path)
    rows = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rows.append([float(c) for c in line.split(",")])
        except ValueError as exc:
            raise ParseError(f"{path}:{lineno}: {exc}") from exc
    m = np.array(rows, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ParseError(f"{path}: matrix is not square, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFinite(f"{path}: non-finite matrix entry")
    return DissimMatrix(m)


def save_dissim(gt: DissimMatrix, path: str | Path) -> None:
    path = Path(path)
    lines = [",".join(repr(float(v)) for v in row) for row in gt.matrix]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def default_min_gap(gt: DissimMatrix) -> float:
    """1e-6 x median off-diagonal entry; makes annotation ties unreachable."""
    n = gt.n
    if n < 2:
        return 0.0
    iu = np.triu_indices(n, k=1)
    return 1e-6 * float(np.median(gt.matrix[iu]))


def triplets_from_matrix(
    gt: DissimMatrix,
    count: int,
    seed: int = 0,
    min_gap: float | None = None,
) -> list[Triplet]:
    """Uniform rejection sampling of distinct (i, j, k), ordered so that
    d(i,j) < d(i,k). Samples with margin below ``min_gap`` are discarded, and
    duplicates on the unordered (i, {j,k}) key are rejected. Deterministic by
    seed; raises ExhaustedSampling after 100*count failed-to-complete attempts.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    n = gt.n
    if n < 3:
        raise ValueError("need at least 3 objects to form triplets")
    if min_gap is None:
        min_gap = default_min_gap(gt)
    rng = np.random.default_rng(seed)
    d = gt.matrix
    seen: set[tuple[int, int, int]] = set()
    out: list[Triplet] = []
    max_attempts = 100 * count
    attempts = 0
    while len(out) < count:
        if attempts >= max_attempts:
            raise ExhaustedSampling(
                f"accepted {len(out)}/{count} triplets in {max_attempts} attempts"
            )
        attempts += 1
        i, j, k = (int(v) for v in rng.integers(0, n, size=3))
        if i == j or i == k or j == k:
            continue
        gap = d[i, j] - d[i, k]
        if abs(gap) < min_gap:
            continue
        t = Triplet(i, j, k) if gap < 0 else Triplet(i, k, j)
        key = t.unordered_key()
        if key in seen:
            continue
        seen.add(key)
        out.append(t)
    return out


def generate_synthetic(spec: SyntheticSpec) -> tuple[FeatureTable, DissimMatrix]:
    rng = np.random.default_rng(spec.seed)
    z = rng.standard_normal((spec.n, spec.latent_dim))
    if spec.nonlinearity == "identity":
        x = z.copy()
    else:
        mix = rng.standard_normal((spec.latent_dim, spec.latent_dim)) / np.sqrt(spec.latent_dim)
        lift = rng.standard_normal((spec.latent_dim, spec.d)) / np.sqrt(spec.latent_dim)
        x = np.tanh(z @ mix) @ lift
    if spec.noise > 0:
        x = x + spec.noise * rng.standard_normal(x.shape)
    diff = z[:, None, :] - z[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    np.fill_diagonal(dist, 0.0)
    dist = 0.5 * (dist + dist.T)  # exact symmetry for the invariant check
    return FeatureTable(x), DissimMatrix(dist)


def split_triplets(
    triplets: list[Triplet], train_fraction: float, seed: int = 0
) -> tuple[list[Triplet], list[Triplet]]:
    """Disjoint uniformly random partition, deterministic by seed."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    order = np.random.default_rng(seed).permutation(len(triplets))
    n_train = int(train_fraction * len(triplets))
    train_idx = sorted(order[:n_train])
    test_idx = sorted(order[n_train:])
    return [triplets[i] for i in train_idx], [triplets[i] for i in test_idx]


def make_synthetic_dataset(
    spec: SyntheticSpec,
    train_count: int,
    test_count: int,
    triplet_seed: int = 0,
    min_gap: float | None = None,
    name: str = "synthetic",
) -> TripletDataset:
    """Generate features + matrix, then disjoint train/test triplet pools."""
    features, gt = generate_synthetic(spec)
    all_triplets = triplets_from_matrix(gt, train_count + test_count, seed=triplet_seed, min_gap=min_gap)
    order = np.random.default_rng(triplet_seed + 1).permutation(len(all_triplets))
    train_pool = [all_triplets[i] for i in sorted(order[:train_count])]
    test = [all_triplets[i] for i in sorted(order[train_count:])]
    return TripletDataset(features=features, train_pool=train_pool, test=test, ground_truth=gt, name=name)
