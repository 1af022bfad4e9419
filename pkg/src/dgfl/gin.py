"""Minimal sum-aggregation GNN for graph classification, trained from scratch.

Layer update: h' = ReLU(W @ (h_v + sum of neighbor h) + b), i.e. the dense
form H' = ReLU((A + I) H W + b). Readout is the mean over nodes, followed by
a linear classifier. Gradients are computed by hand so the whole model lives
in plain numpy arrays.

Canonical flatten order: layer 0..L-1 (weight row-major, then bias), then
classifier weight, then classifier bias. Everything that crosses the wire
uses this order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NumericError, ShapeError, StateError
from .tudata import Graph


@dataclass(frozen=True)
class GinDims:
    feature_dim: int
    num_classes: int
    hidden: int = 64
    layers: int = 3


@dataclass
class GinModel:
    weights: list[np.ndarray]  # layer l: (d_in, d_out)
    biases: list[np.ndarray]   # layer l: (d_out,)
    cls_weight: np.ndarray     # (hidden, num_classes)
    cls_bias: np.ndarray       # (num_classes,)
    dims: GinDims


@dataclass(frozen=True)
class AdamHyper:
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 5e-4


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    hyper: AdamHyper = field(default_factory=AdamHyper)


@dataclass(frozen=True)
class GradientVector:
    values: np.ndarray
    source_round: int = 0
    source_client: int = -1

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise NumericError("gradient vector contains non-finite entries")


def param_count(dims: GinDims) -> int:
    n = 0
    d_in = dims.feature_dim
    for _ in range(dims.layers):
        n += d_in * dims.hidden + dims.hidden
        d_in = dims.hidden
    n += dims.hidden * dims.num_classes + dims.num_classes
    return n


def init_model(dims: GinDims, seed: int) -> GinModel:
    """Glorot-uniform init; all clients share one init seed so round-1
    pseudo-gradients are comparable."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 0x6171)))
    weights, biases = [], []
    d_in = dims.feature_dim
    for _ in range(dims.layers):
        bound = np.sqrt(6.0 / (d_in + dims.hidden))
        weights.append(rng.uniform(-bound, bound, size=(d_in, dims.hidden)))
        biases.append(np.zeros(dims.hidden))
        d_in = dims.hidden
    bound = np.sqrt(6.0 / (dims.hidden + dims.num_classes))
    cls_w = rng.uniform(-bound, bound, size=(dims.hidden, dims.num_classes))
    return GinModel(weights, biases, cls_w, np.zeros(dims.num_classes), dims)


def flatten(model: GinModel) -> np.ndarray:
    parts = []
    for w, b in zip(model.weights, model.biases):
        parts.append(w.ravel())
        parts.append(b)
    parts.append(model.cls_weight.ravel())
    parts.append(model.cls_bias)
    return np.concatenate(parts)


def unflatten(values: np.ndarray, dims: GinDims) -> GinModel:
    if values.shape != (param_count(dims),):
        raise ShapeError(f"expected {param_count(dims)} parameters, got {values.shape}")
    weights, biases = [], []
    pos = 0
    d_in = dims.feature_dim
    for _ in range(dims.layers):
        w = values[pos: pos + d_in * dims.hidden].reshape(d_in, dims.hidden)
        pos += d_in * dims.hidden
        b = values[pos: pos + dims.hidden]
        pos += dims.hidden
        weights.append(w.copy())
        biases.append(b.copy())
        d_in = dims.hidden
    w = values[pos: pos + dims.hidden * dims.num_classes].reshape(dims.hidden, dims.num_classes)
    pos += dims.hidden * dims.num_classes
    b = values[pos:]
    return GinModel(weights, biases, w.copy(), b.copy(), dims)


def _agg_matrix(graph: Graph) -> np.ndarray:
    # A + I: self contribution plus neighbor sum.
    s = np.eye(graph.node_count)
    for u, v in graph.edges:
        s[u, v] = 1.0
        s[v, u] = 1.0
    return s


def forward(model: GinModel, graph: Graph):
    """Return (logits, cache); cache holds what backprop needs."""
    if graph.node_features.shape[1] != model.dims.feature_dim:
        raise ShapeError(
            f"graph feature dim {graph.node_features.shape[1]} != model "
            f"feature dim {model.dims.feature_dim}")
    s = _agg_matrix(graph)
    h = graph.node_features
    hs, zs = [h], []
    for w, b in zip(model.weights, model.biases):
        z = s @ h @ w + b
        h = np.maximum(z, 0.0)
        zs.append(z)
        hs.append(h)
    readout = h.mean(axis=0)
    logits = readout @ model.cls_weight + model.cls_bias
    cache = (s, hs, zs, readout)
    return logits, cache


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max()
    e = np.exp(shifted)
    return e / e.sum()


def _backward(model: GinModel, graph: Graph, cache, dlogits: np.ndarray) -> np.ndarray:
    s, hs, zs, readout = cache
    n = graph.node_count
    d_cls_w = np.outer(readout, dlogits)
    d_cls_b = dlogits
    dh = np.tile((dlogits @ model.cls_weight.T) / n, (n, 1))
    d_weights = [None] * len(model.weights)
    d_biases = [None] * len(model.biases)
    for l in range(len(model.weights) - 1, -1, -1):
        dz = dh * (zs[l] > 0)
        sh = s @ hs[l]
        d_weights[l] = sh.T @ dz
        d_biases[l] = dz.sum(axis=0)
        dh = s @ (dz @ model.weights[l].T)  # s is symmetric
    parts = []
    for dw, db in zip(d_weights, d_biases):
        parts.append(dw.ravel())
        parts.append(db)
    parts.append(d_cls_w.ravel())
    parts.append(d_cls_b)
    return np.concatenate(parts)


def loss_and_grad(model: GinModel, batch: list[Graph]) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its analytic gradient in canonical order."""
    if not batch:
        raise StateError("empty batch")
    total_loss = 0.0
    grad = np.zeros(param_count(model.dims))
    inv = 1.0 / len(batch)
    for graph in batch:
        logits, cache = forward(model, graph)
        p = _softmax(logits)
        total_loss += -np.log(max(p[graph.label], 1e-300))
        dlogits = p.copy()
        dlogits[graph.label] -= 1.0
        grad += _backward(model, graph, cache, dlogits * inv)
    loss = total_loss * inv
    if not np.isfinite(loss):
        raise NumericError(f"non-finite loss {loss}")
    return float(loss), grad


def adam_step(params: np.ndarray, grad: np.ndarray, state: AdamState
              ) -> tuple[np.ndarray, AdamState]:
    """Bias-corrected Adam with L2-coupled weight decay (decay folded into grad)."""
    if params.shape != grad.shape or params.shape != state.first_moment.shape:
        raise ShapeError("params/grad/moment length mismatch")
    h = state.hyper
    g = grad + h.weight_decay * params if h.weight_decay else grad
    t = state.step_count + 1
    m = h.beta1 * state.first_moment + (1.0 - h.beta1) * g
    v = h.beta2 * state.second_moment + (1.0 - h.beta2) * g * g
    m_hat = m / (1.0 - h.beta1 ** t)
    v_hat = v / (1.0 - h.beta2 ** t)
    new_params = params - h.lr * m_hat / (np.sqrt(v_hat) + h.eps)
    return new_params, AdamState(m, v, t, h)


def init_adam(dims: GinDims, hyper: AdamHyper | None = None) -> AdamState:
    n = param_count(dims)
    return AdamState(np.zeros(n), np.zeros(n), 0, hyper or AdamHyper())


@dataclass
class TrainResult:
    pseudo_gradient: np.ndarray  # w_before - w_after
    w_before: np.ndarray
    w_after: np.ndarray
    model: GinModel
    opt: AdamState
    mean_loss: float  # over the last epoch's batches


def local_train(model: GinModel, opt: AdamState, shard: list[Graph], epochs: int,
                batch_size: int, rng: np.random.Generator,
                prox_mu: float = 0.0, prox_center: np.ndarray | None = None
                ) -> TrainResult:
    """Mini-batch Adam over the local shard; returns the pseudo-gradient
    w_before - w_after that the protocol exchanges.

    Batch membership follows the per-epoch shuffle, but indices inside a batch
    are processed in sorted order so the batch-mean gradient is independent of
    the shuffle whenever a batch covers the whole shard.
    """
    if not shard:
        raise StateError("local_train on an empty shard")
    w_before = flatten(model)
    params = w_before
    cur_model, cur_opt = model, opt
    last_losses: list[float] = []
    for _ in range(epochs):
        order = rng.permutation(len(shard))
        last_losses = []
        for start in range(0, len(shard), batch_size):
            idx = np.sort(order[start: start + batch_size])
            batch = [shard[i] for i in idx]
            loss, grad = loss_and_grad(cur_model, batch)
            if prox_mu and prox_center is not None:
                diff = params - prox_center
                loss += 0.5 * prox_mu * float(diff @ diff)
                grad = grad + prox_mu * diff
            last_losses.append(loss)
            params, cur_opt = adam_step(params, grad, cur_opt)
            cur_model = unflatten(params, model.dims)
    mean_loss = float(np.mean(last_losses)) if last_losses else float("nan")
    return TrainResult(w_before - params, w_before, params, cur_model, cur_opt,
                       mean_loss)


def apply_gradient(w_before: np.ndarray, w_after: np.ndarray,
                   own_gradient: np.ndarray, g: np.ndarray) -> np.ndarray:
    """New parameters after the round's aggregation: w_before - g.

    When g is the unchanged local pseudo-gradient the result must be exactly
    w_after, which a float round-trip through w_before - (w_before - w_after)
    does not guarantee; that case short-circuits.
    """
    if g.shape != w_before.shape:
        raise ShapeError("gradient length does not match parameters")
    if np.array_equal(g, own_gradient):
        return w_after
    return w_before - g


def evaluate(model: GinModel, test: list[Graph]) -> float:
    """Argmax accuracy; np.argmax already breaks ties toward the lowest class."""
    if not test:
        raise StateError("empty test set")
    correct = 0
    for graph in test:
        logits, _ = forward(model, graph)
        if int(np.argmax(logits)) == graph.label:
            correct += 1
    return correct / len(test)
