"""Active-learning controller: initial pool, per-round select -> annotate ->
warm-start retrain -> evaluate, a simulated oracle with label-noise
injection, and the multi-seed experiment driver.

Rounds are split into ``propose_batch`` (pure) and ``commit_round``
(mutating) so the HTTP service can serve a batch, collect human answers, and
then commit through exactly the same code path as the in-process loop.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import model as mdl
from . import posterior, strategies
from .data import DissimMatrix, GroundTruth, Triplet, TripletDataset, TripletList
from .model import AdamState, EmbeddingParams, TrainConfig
from .posterior import CenteredMargins
from .strategies import SelectionConfig, SelectionResult


class PoolTooSmall(ValueError):
    pass


class TieUndefined(ValueError):
    """Ground-truth matrix gives equal dissimilarities for a queried pair;
    generation is supposed to reject such triplets, so this means corrupt
    input."""


# Seed-stream tags; every random draw is derived from (session seed, tag, ...)
# so that runs are reproducible and strategy-independent where they must be.
_TAG_POOL = 11
_TAG_INIT = 12
_TAG_TRAIN = 13
_TAG_SAMPLE = 14
_TAG_CAP = 15
_TAG_SELECT = 16
_TAG_FLIP = 17


@dataclass
class Oracle:
    """Annotation source: ground-truth triplet list or dissimilarity matrix,
    with orderings independently flipped at rate ``flip_rate``.

    Flip decisions are drawn from a per-triplet stream seeded by
    (seed, i, {j,k}), so they do not depend on annotation order or on the
    orientation a triplet is presented in.
    """

    ground_truth: GroundTruth
    flip_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.flip_rate <= 1.0:
            raise ValueError("flip_rate must be in [0, 1]")
        self._lookup = None
        if isinstance(self.ground_truth, TripletList):
            self._lookup = {t.unordered_key(): t for t in self.ground_truth.triplets}

    def true_order(self, t: Triplet) -> Triplet:
        if isinstance(self.ground_truth, DissimMatrix):
            d = self.ground_truth.matrix
            dij, dik = d[t.i, t.j], d[t.i, t.k]
            if dij == dik:
                raise TieUndefined(f"d({t.i},{t.j}) == d({t.i},{t.k}); corrupt input")
            return t if dij < dik else t.swapped()
        truth = self._lookup.get(t.unordered_key())
        if truth is None:
            raise ValueError(f"triplet {t} not in ground-truth list")
        return truth

    def _flipped(self, t: Triplet) -> bool:
        if self.flip_rate == 0.0:
            return False
        key = t.unordered_key()
        rng = np.random.default_rng((self.seed, _TAG_FLIP, *key))
        return bool(rng.random() < self.flip_rate)

    def annotate(self, triplets) -> list[Triplet]:
        out = []
        for t in triplets:
            truth = self.true_order(t)
            out.append(truth.swapped() if self._flipped(t) else truth)
        return out


@dataclass
class RoundRecord:
    round_index: int
    strategy: str
    chosen_ids: list[int]
    batch_entropy: float | None
    accuracy: float
    select_ms: float
    train_ms: float

    def key(self) -> tuple:
        """Deterministic fields only (wall-clock times excluded)."""
        return (self.round_index, self.strategy, tuple(self.chosen_ids), self.batch_entropy, self.accuracy)


@dataclass
class RoundSettings:
    batch_size: int
    n_passes: int = 70
    dropout_p: float = 0.02
    lam: float | None = None
    min_norm: float = 1e-8
    candidate_cap: int | None = 5000


@dataclass
class ActiveLearningSession:
    dataset: TripletDataset
    oracle: Oracle
    params: EmbeddingParams
    adam_state: AdamState
    labeled: list[Triplet]
    labeled_ids: list[int]
    unlabeled_ids: list[int]
    round_index: int
    history: list[RoundRecord]
    seed: int
    train_config: TrainConfig

    @property
    def features(self) -> np.ndarray:
        return self.dataset.features.rows


@dataclass
class PendingBatch:
    """Output of propose_batch: what was selected and with which inputs."""

    selection: SelectionResult
    served: list[Triplet]  # canonical presentation, aligned with selection.chosen
    centered: CenteredMargins | None
    effective_lam: float | None
    select_ms: float


def _train_seed(seed: int, round_index: int):
    return (seed, _TAG_TRAIN, round_index)


def init_session(
    dataset: TripletDataset,
    oracle: Oracle,
    init_pool_size: int,
    seed: int,
    train_config: TrainConfig,
    pretrain_epochs: int | None = None,
    hidden_layers=(32, 16),
    embed_dim: int = 8,
    strategy_label: str = "init",
) -> ActiveLearningSession:
    """Sample and annotate the initial pool, train phi_0 from scratch, and
    record a round-0 entry. The draw, the weight init, and the pretrain are
    independent of the strategy label, so all strategies share phi_0 for a
    given seed."""
    pool_size = len(dataset.train_pool)
    if init_pool_size > pool_size:
        raise PoolTooSmall(f"initial pool {init_pool_size} exceeds pool of {pool_size}")
    rng = np.random.default_rng((seed, _TAG_POOL))
    init_ids = sorted(int(i) for i in rng.choice(pool_size, size=init_pool_size, replace=False))
    served = [dataset.train_pool[i].canonical() for i in init_ids]
    labeled = oracle.annotate(served)

    layer_sizes = [dataset.features.d, *hidden_layers, embed_dim]
    params = mdl.init_params(layer_sizes, seed=(seed, _TAG_INIT))
    adam_state = mdl.init_adam(params, lr=train_config.lr)

    t0 = time.perf_counter()
    if labeled:
        epochs = train_config.epochs if pretrain_epochs is None else pretrain_epochs
        cfg = TrainConfig(
            epochs=epochs,
            sgd_batch=train_config.sgd_batch,
            lr=train_config.lr,
            seed=_train_seed(seed, 0),
        )
        params, adam_state = mdl.train(params, labeled, dataset.features.rows, cfg, adam_state)
    train_ms = 1000.0 * (time.perf_counter() - t0)

    accuracy = mdl.evaluate(params, dataset.test, dataset.features.rows)
    record = RoundRecord(
        round_index=0,
        strategy=strategy_label,
        chosen_ids=list(init_ids),
        batch_entropy=None,
        accuracy=accuracy,
        select_ms=0.0,
        train_ms=train_ms,
    )
    unlabeled = sorted(set(range(pool_size)) - set(init_ids))
    return ActiveLearningSession(
        dataset=dataset,
        oracle=oracle,
        params=params,
        adam_state=adam_state,
        labeled=list(labeled),
        labeled_ids=list(init_ids),
        unlabeled_ids=unlabeled,
        round_index=0,
        history=[record],
        seed=seed,
        train_config=train_config,
    )


def propose_batch(
    session: ActiveLearningSession, strategy: str, settings: RoundSettings
) -> PendingBatch:
    """Score the (possibly capped) unlabeled pool and select the next batch.
    Does not mutate the session; calling twice yields the same batch."""
    if strategy not in strategies.STRATEGY_NAMES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {strategies.STRATEGY_NAMES}")
    seed, rnd = session.seed, session.round_index + 1
    candidate_ids = list(session.unlabeled_ids)
    cap = settings.candidate_cap
    if cap is not None and len(candidate_ids) > cap:
        rng = np.random.default_rng((seed, _TAG_CAP, rnd))
        candidate_ids = sorted(int(i) for i in rng.choice(candidate_ids, size=cap, replace=False))
    if settings.batch_size > len(candidate_ids):
        raise strategies.BatchTooLarge(
            f"batch size {settings.batch_size} exceeds {len(candidate_ids)} candidates"
        )
    candidates = [session.dataset.train_pool[i].canonical() for i in candidate_ids]
    features = session.features

    t0 = time.perf_counter()
    cm = None
    effective_lam = None
    if strategy in ("joint_entropy", "variance"):
        msm = posterior.sample_margins(
            session.params,
            candidates,
            features,
            n_passes=settings.n_passes,
            p=settings.dropout_p,
            seed=(seed, _TAG_SAMPLE, rnd),
            candidate_ids=candidate_ids,
        )
        cm = posterior.center(msm)
        cfg = SelectionConfig(settings.batch_size, lam=settings.lam, min_norm=settings.min_norm)
        effective_lam = settings.lam if settings.lam is not None else 1e-8 * float(np.mean(cm.variances))
        if strategy == "joint_entropy":
            selection = strategies.select_joint_entropy(cm, cfg)
        else:
            selection = strategies.select_variance(cm, cfg)
    elif strategy == "uncertainty":
        xi = mdl.margins(session.params, candidates, features)
        cfg = SelectionConfig(settings.batch_size)
        selection = strategies.select_uncertainty(xi, cfg, candidate_ids)
    else:  # random
        cfg = SelectionConfig(settings.batch_size, seed=(seed, _TAG_SELECT, rnd))
        selection = strategies.select_random(candidate_ids, cfg)
    select_ms = 1000.0 * (time.perf_counter() - t0)

    pos = {cid: idx for idx, cid in enumerate(candidate_ids)}
    served = [candidates[pos[cid]] for cid in selection.chosen]
    return PendingBatch(
        selection=selection,
        served=served,
        centered=cm,
        effective_lam=effective_lam,
        select_ms=select_ms,
    )


def commit_round(
    session: ActiveLearningSession, pending: PendingBatch, annotated: list[Triplet]
) -> RoundRecord:
    """Fold annotated orderings into the labeled set, warm-start retrain,
    evaluate, and append the round record. ``annotated`` must align with
    ``pending.selection.chosen``."""
    chosen = pending.selection.chosen
    if len(annotated) != len(chosen):
        raise ValueError(f"expected {len(chosen)} annotations, got {len(annotated)}")
    for t, served in zip(annotated, pending.served):
        if t.unordered_key() != served.unordered_key():
            raise ValueError(f"annotation {t} does not match served triplet {served}")

    rnd = session.round_index + 1
    session.labeled.extend(annotated)
    session.labeled_ids.extend(chosen)
    removed = set(chosen)
    session.unlabeled_ids = [i for i in session.unlabeled_ids if i not in removed]

    entropy = None
    if pending.centered is not None:
        entropy = strategies.batch_entropy(pending.centered, chosen, lam=pending.effective_lam)

    cfg = TrainConfig(
        epochs=session.train_config.epochs,
        sgd_batch=session.train_config.sgd_batch,
        lr=session.train_config.lr,
        seed=_train_seed(session.seed, rnd),
    )
    t0 = time.perf_counter()
    session.params, session.adam_state = mdl.train(
        session.params, session.labeled, session.features, cfg, session.adam_state
    )
    train_ms = 1000.0 * (time.perf_counter() - t0)

    accuracy = mdl.evaluate(session.params, session.dataset.test, session.features)
    record = RoundRecord(
        round_index=rnd,
        strategy=pending.selection.strategy,
        chosen_ids=list(chosen),
        batch_entropy=entropy,
        accuracy=accuracy,
        select_ms=pending.select_ms,
        train_ms=train_ms,
    )
    session.round_index = rnd
    session.history.append(record)
    return record


def run_round(
    session: ActiveLearningSession, strategy: str, settings: RoundSettings
) -> RoundRecord:
    pending = propose_batch(session, strategy, settings)
    annotated = session.oracle.annotate(pending.served)
    return commit_round(session, pending, annotated)


@dataclass
class ExperimentConfig:
    """Knobs for a full strategy-comparison experiment. The heavyweight
    benchmark setting is lr=1e-4 / 1000 epochs / SGD batch 500; the defaults
    here are the faster desk-scale setting."""

    strategies: list[str]
    rounds: int
    batch_size: int
    seeds: list[int] = field(default_factory=lambda: [0])
    n_passes: int = 70
    dropout_p: float = 0.02
    lam: float | None = None
    min_norm: float = 1e-8
    init_pool: int = 200
    noise_rate: float = 0.0
    candidate_cap: int | None = 5000
    hidden_layers: list[int] = field(default_factory=lambda: [32, 16])
    embed_dim: int = 8
    epochs: int = 200
    pretrain_epochs: int = 300
    sgd_batch: int = 500
    lr: float = 1e-3

    def settings(self) -> RoundSettings:
        return RoundSettings(
            batch_size=self.batch_size,
            n_passes=self.n_passes,
            dropout_p=self.dropout_p,
            lam=self.lam,
            min_norm=self.min_norm,
            candidate_cap=self.candidate_cap,
        )

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, sgd_batch=self.sgd_batch, lr=self.lr)


@dataclass
class ExperimentResult:
    records: dict  # (strategy, seed) -> list[RoundRecord]

    def rows(self) -> list[dict]:
        out = []
        for (strategy, seed), recs in sorted(self.records.items()):
            for rec in recs:
                out.append(
                    {
                        "strategy": strategy,
                        "round": rec.round_index,
                        "seed": seed,
                        "accuracy": rec.accuracy,
                        "batch_entropy": rec.batch_entropy,
                        "select_ms": rec.select_ms,
                        "train_ms": rec.train_ms,
                    }
                )
        return out

    def aggregate(self) -> list[dict]:
        """Mean/std of test accuracy across seeds per (strategy, round)."""
        by_cell: dict[tuple[str, int], list[float]] = {}
        for (strategy, _seed), recs in self.records.items():
            for rec in recs:
                by_cell.setdefault((strategy, rec.round_index), []).append(rec.accuracy)
        out = []
        for (strategy, rnd), accs in sorted(by_cell.items()):
            arr = np.asarray(accs)
            out.append(
                {
                    "strategy": strategy,
                    "round": rnd,
                    "mean_accuracy": float(arr.mean()),
                    "std_accuracy": float(arr.std()),
                }
            )
        return out


def run_session(
    dataset: TripletDataset, strategy: str, seed: int, cfg: ExperimentConfig
) -> list[RoundRecord]:
    oracle = Oracle(dataset.ground_truth, flip_rate=cfg.noise_rate, seed=seed)
    session = init_session(
        dataset,
        oracle,
        init_pool_size=cfg.init_pool,
        seed=seed,
        train_config=cfg.train_config(),
        pretrain_epochs=cfg.pretrain_epochs,
        hidden_layers=cfg.hidden_layers,
        embed_dim=cfg.embed_dim,
        strategy_label=strategy,
    )
    settings = cfg.settings()
    for _ in range(cfg.rounds):
        run_round(session, strategy, settings)
    return list(session.history)


def run_experiment(dataset: TripletDataset, cfg: ExperimentConfig) -> ExperimentResult:
    if not cfg.seeds:
        raise ValueError("need at least one seed")
    seen = set()
    unique_strategies = [s for s in cfg.strategies if not (s in seen or seen.add(s))]
    records = {}
    for strategy in unique_strategies:
        for seed in cfg.seeds:
            records[(strategy, seed)] = run_session(dataset, strategy, seed, cfg)
    return ExperimentResult(records=records)
