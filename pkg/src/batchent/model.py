"""Embedding network phi (MLP), triplet margins, exponential triplet loss
with exact reverse-mode gradients, Adam training, evaluation, retrieval.

All three objects of a triplet pass through the same tower (shared weights).
Gradients are computed once per unique object and scattered back to the
triplets referencing it, so a minibatch costs one forward/backward per
distinct object.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Triplet


class IndexOutOfRange(IndexError):
    pass


class EmptyGallery(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass
class EmbeddingParams:
    """Weights/biases of the tower. ``weights[l]`` has shape
    (layer_sizes[l], layer_sizes[l+1]); hidden activations are ReLU, the
    output layer is linear."""

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "relu"

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "EmbeddingParams":
        return EmbeddingParams(
            list(self.layer_sizes),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
            self.activation,
        )


@dataclass
class Gradients:
    weights: list[np.ndarray]
    biases: list[np.ndarray]


@dataclass
class DropoutPlan:
    """One stochastic thinning of the tower: a keep-mask per hidden layer
    output. Kept units are scaled by 1/(1-p) (inverted dropout), so the
    plan-free forward equals the expectation over plans for linear layers."""

    probability: float
    keep_masks: list[np.ndarray]
    seed: object = 0


def init_params(layer_sizes: list[int], seed: int = 0, activation: str = "relu") -> EmbeddingParams:
    """He-uniform weights, zero biases."""
    if len(layer_sizes) < 2:
        raise ValueError("need at least an input and an output layer")
    if activation != "relu":
        raise ValueError(f"unsupported activation {activation!r}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return EmbeddingParams(list(layer_sizes), weights, biases, activation)


def make_dropout_plan(layer_sizes: list[int], p: float, seed) -> DropoutPlan:
    """Sample keep-masks for every hidden layer output (never the final
    output). ``seed`` may be an int or a tuple of ints."""
    if not 0.0 <= p < 1.0:
        raise ValueError("dropout probability must be in [0, 1)")
    rng = np.random.default_rng(seed)
    masks = [rng.random(width) >= p for width in layer_sizes[1:-1]]
    return DropoutPlan(probability=p, keep_masks=masks, seed=seed)


def _check_plan(params: EmbeddingParams, plan: DropoutPlan | None) -> None:
    if plan is None:
        return
    hidden = params.layer_sizes[1:-1]
    if len(plan.keep_masks) != len(hidden):
        raise DimensionMismatch(
            f"plan has {len(plan.keep_masks)} masks for {len(hidden)} hidden layers"
        )
    for mask, width in zip(plan.keep_masks, hidden):
        if mask.shape != (width,):
            raise DimensionMismatch(f"mask shape {mask.shape} does not match width {width}")


def embed(params: EmbeddingParams, x: np.ndarray, plan: DropoutPlan | None = None) -> np.ndarray:
    """Forward a (n, d) batch (or a single d-vector) through the tower."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != params.layer_sizes[0]:
        raise DimensionMismatch(
            f"input dim {h.shape[1]} does not match layer_sizes[0]={params.layer_sizes[0]}"
        )
    _check_plan(params, plan)
    keep_scale = 1.0 / (1.0 - plan.probability) if plan is not None else 1.0
    last = params.n_layers - 1
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        h = h @ w + b
        if l < last:
            h = np.maximum(h, 0.0)
            if plan is not None:
                h = h * (plan.keep_masks[l] * keep_scale)
    return h[0] if single else h


def forward(params: EmbeddingParams, x: np.ndarray, plan: DropoutPlan | None = None) -> np.ndarray:
    """Single-vector forward pass; see :func:`embed` for batches."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch(f"forward expects a 1-D vector, got shape {x.shape}")
    return embed(params, x, plan)


def _gather_objects(triplets, n_objects: int) -> tuple[np.ndarray, np.ndarray]:
    """Unique object ids over a triplet set plus the (3, n_triplets) local
    index array (anchor, closer, farther)."""
    flat = np.array([(t.i, t.j, t.k) for t in triplets], dtype=np.intp)
    if flat.size and (flat.min() < 0 or flat.max() >= n_objects):
        raise IndexOutOfRange(f"triplet index outside [0, {n_objects})")
    unique, inverse = np.unique(flat.ravel(), return_inverse=True)
    return unique, inverse.reshape(flat.shape).T


def margins(
    params: EmbeddingParams,
    triplets,
    features: np.ndarray,
    plan: DropoutPlan | None = None,
) -> np.ndarray:
    """Distance margins d^2(i,k) - d^2(i,j) for a triplet collection,
    embedding each distinct object exactly once."""
    features = np.asarray(features, dtype=np.float64)
    triplets = list(triplets)
    if not triplets:
        return np.zeros(0)
    unique, (ia, ja, ka) = _gather_objects(triplets, features.shape[0])
    emb = embed(params, features[unique], plan)
    d_ij = emb[ia] - emb[ja]
    d_ik = emb[ia] - emb[ka]
    return np.sum(d_ik * d_ik, axis=1) - np.sum(d_ij * d_ij, axis=1)


def triplet_margin(
    params: EmbeddingParams,
    t: Triplet,
    features: np.ndarray,
    plan: DropoutPlan | None = None,
) -> float:
    return float(margins(params, [t], features, plan)[0])


def batch_loss_and_grad(
    params: EmbeddingParams, triplets, features: np.ndarray
) -> tuple[float, Gradients]:
    """Exponential triplet loss sum_t exp(-margin_t) and its exact gradient
    w.r.t. every weight and bias (deterministic pass, no dropout)."""
    triplets = list(triplets)
    if not triplets:
        raise ValueError("triplet set must be nonempty")
    features = np.asarray(features, dtype=np.float64)
    unique, (ia, ja, ka) = _gather_objects(triplets, features.shape[0])
    x = features[unique]

    # Forward with caches: hs[l] is the input to layer l, zs[l] its pre-activation.
    last = params.n_layers - 1
    hs, zs = [x], []
    h = x
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        zs.append(z)
        h = np.maximum(z, 0.0) if l < last else z
        hs.append(h)
    emb = h

    d_ij = emb[ia] - emb[ja]
    d_ik = emb[ia] - emb[ka]
    xi = np.sum(d_ik * d_ik, axis=1) - np.sum(d_ij * d_ij, axis=1)
    w_t = np.exp(-xi)
    loss = float(np.sum(w_t))

    # dL/dxi = -w_t; chain into per-object embedding gradients.
    coef = (-2.0 * w_t)[:, None]
    g_emb = np.zeros_like(emb)
    np.add.at(g_emb, ia, coef * (emb[ja] - emb[ka]))
    np.add.at(g_emb, ja, coef * d_ij)
    np.add.at(g_emb, ka, -coef * d_ik)

    grad_w = [np.zeros_like(w) for w in params.weights]
    grad_b = [np.zeros_like(b) for b in params.biases]
    g = g_emb
    for l in range(last, -1, -1):
        if l < last:
            g = g * (zs[l] > 0.0)
        grad_w[l] = hs[l].T @ g
        grad_b[l] = np.sum(g, axis=0)
        if l > 0:
            g = g @ params.weights[l].T
    return loss, Gradients(grad_w, grad_b)


@dataclass
class AdamState:
    m_w: list[np.ndarray]
    v_w: list[np.ndarray]
    m_b: list[np.ndarray]
    v_b: list[np.ndarray]
    step: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params: EmbeddingParams, lr: float = 1e-4) -> AdamState:
    return AdamState(
        m_w=[np.zeros_like(w) for w in params.weights],
        v_w=[np.zeros_like(w) for w in params.weights],
        m_b=[np.zeros_like(b) for b in params.biases],
        v_b=[np.zeros_like(b) for b in params.biases],
        lr=lr,
    )


def adam_step(
    params: EmbeddingParams, grad: Gradients, state: AdamState
) -> tuple[EmbeddingParams, AdamState]:
    """One Adam update with bias correction; returns fresh params/state."""
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t

    def update(p, g, m, v):
        m_new = b1 * m + (1.0 - b1) * g
        v_new = b2 * v + (1.0 - b2) * g * g
        p_new = p - state.lr * (m_new / c1) / (np.sqrt(v_new / c2) + state.eps)
        return p_new, m_new, v_new

    new_w, new_mw, new_vw = [], [], []
    for p, g, m, v in zip(params.weights, grad.weights, state.m_w, state.v_w):
        pn, mn, vn = update(p, g, m, v)
        new_w.append(pn)
        new_mw.append(mn)
        new_vw.append(vn)
    new_b, new_mb, new_vb = [], [], []
    for p, g, m, v in zip(params.biases, grad.biases, state.m_b, state.v_b):
        pn, mn, vn = update(p, g, m, v)
        new_b.append(pn)
        new_mb.append(mn)
        new_vb.append(vn)

    new_params = EmbeddingParams(list(params.layer_sizes), new_w, new_b, params.activation)
    new_state = replace(state, m_w=new_mw, v_w=new_vw, m_b=new_mb, v_b=new_vb, step=t)
    return new_params, new_state


@dataclass
class TrainConfig:
    epochs: int = 200
    sgd_batch: int = 500
    lr: float = 1e-4
    seed: int | tuple = 0  # anything accepted by np.random.default_rng


def train(
    params: EmbeddingParams,
    triplets,
    features: np.ndarray,
    config: TrainConfig,
    adam_state: AdamState | None = None,
) -> tuple[EmbeddingParams, AdamState]:
    """Shuffled-minibatch Adam for ``config.epochs`` epochs, starting from
    the given (possibly warm) params and optimizer state. Deterministic for a
    fixed seed; minibatches are drawn without replacement each epoch."""
    triplets = list(triplets)
    if not triplets:
        raise ValueError("labeled triplet set must be nonempty")
    if adam_state is None:
        adam_state = init_adam(params, lr=config.lr)
    rng = np.random.default_rng(config.seed)
    n = len(triplets)
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, config.sgd_batch):
            batch = [triplets[idx] for idx in order[start : start + config.sgd_batch]]
            _, grads = batch_loss_and_grad(params, batch, features)
            params, adam_state = adam_step(params, grads, adam_state)
    return params, adam_state


def evaluate(params: EmbeddingParams, triplets, features: np.ndarray) -> float:
    """Fraction of triplets whose ordering the deterministic model predicts
    (margin strictly positive; an exact zero counts as incorrect)."""
    triplets = list(triplets)
    if not triplets:
        raise ValueError("test set must be nonempty")
    xi = margins(params, triplets, features)
    return float(np.count_nonzero(xi > 0.0)) / len(triplets)


def retrieve(
    params: EmbeddingParams,
    query: int,
    gallery,
    features: np.ndarray,
    top_k: int,
) -> list[int]:
    """Gallery indices sorted by ascending squared embedding distance to the
    query, ties broken by index; the first ``top_k`` are returned."""
    gallery = list(gallery)
    if not gallery:
        raise EmptyGallery("gallery is empty")
    if query in gallery:
        raise ValueError("query must not be in the gallery")
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if not (0 <= query < n) or any(not (0 <= g < n) for g in gallery):
        raise IndexOutOfRange("object index outside feature table")
    q = embed(params, features[query])
    g = embed(params, features[np.asarray(gallery, dtype=np.intp)])
    diff = g - q
    dist_sq = np.sum(diff * diff, axis=1)
    order = sorted(range(len(gallery)), key=lambda idx: (dist_sq[idx], gallery[idx]))
    return [gallery[idx] for idx in order[:top_k]]
