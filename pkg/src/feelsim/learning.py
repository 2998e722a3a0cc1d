"""Local training, evaluation, and update aggregation.

The model is multinomial logistic regression stored as one flat vector of
length n_classes * (dim + 1): one (weights | bias) block per class.  Local
training is plain mini-batch SGD on softmax cross-entropy with an optional L2
penalty on the non-bias weights.  Aggregation is sample-count weighted
averaging, with a loss-reweighted variant that favors poorly served devices;
the reduction always runs in ascending device id so results are
bit-deterministic regardless of caller ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .domain import LocalDataset, ModelParams
from .errors import (
    DegenerateWeightsError,
    EmptyDatasetError,
    NoUpdatesError,
    ShapeMismatchError,
    ValidationError,
)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1
    batch_size: int = 16
    learning_rate: float = 0.1
    l2_reg: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError("nonpositive_epochs")
        if self.batch_size < 1:
            raise ValidationError("nonpositive_batch_size")
        if self.learning_rate < 0:
            raise ValidationError("negative_learning_rate")
        if self.l2_reg < 0:
            raise ValidationError("negative_l2_reg")


@dataclass(frozen=True, eq=False)
class Update:
    """One device's contribution to a round."""

    params: ModelParams
    n_samples: int
    final_loss: float
    device_id: int


def init_model(dim: int, n_classes: int, seed: int) -> ModelParams:
    """Uniform(-1/sqrt(dim), 1/sqrt(dim)) class weights with zero biases."""
    if dim < 1 or n_classes < 2:
        raise ValueError("need dim >= 1 and n_classes >= 2")
    rng = np.random.default_rng(seed)
    scale = 1.0 / math.sqrt(dim)
    w = rng.uniform(-scale, scale, size=(n_classes, dim))
    flat = np.hstack([w, np.zeros((n_classes, 1))]).ravel()
    return ModelParams(flat, round=0, source="server")


def _unpack(weights: np.ndarray, dim: int):
    if weights.size % (dim + 1) != 0:
        raise ShapeMismatchError(f"vector of {weights.size} is not k x (dim+1) for dim={dim}")
    blocks = weights.reshape(-1, dim + 1)
    return blocks[:, :dim], blocks[:, dim]


def loss_and_grad(weights: np.ndarray, features: np.ndarray, labels: np.ndarray, l2_reg: float):
    """Mean softmax cross-entropy plus 0.5 * l2 * ||W||^2, and its gradient.

    The penalty covers class weights only, never biases.  Returns
    (loss, flat gradient).
    """
    n, dim = features.shape
    w_mat, bias = _unpack(weights, dim)
    logits = features @ w_mat.T + bias
    logits = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(logits)
    z = exp.sum(axis=1)
    ce = float((np.log(z) - logits[np.arange(n), labels]).mean())
    loss = ce + 0.5 * l2_reg * float((w_mat * w_mat).sum())

    probs = exp / z[:, None]
    probs[np.arange(n), labels] -= 1.0
    probs /= n
    grad_w = probs.T @ features + l2_reg * w_mat
    grad_b = probs.sum(axis=0)
    grad = np.hstack([grad_w, grad_b[:, None]]).ravel()
    return loss, grad


def local_train(model: ModelParams, data: LocalDataset, cfg: TrainConfig, device_id: int = 0) -> Update:
    """Mini-batch SGD from the given model; the input model is not modified.

    The per-epoch shuffle comes from ``cfg.seed`` alone, so an identical
    (model, data, config) triple always produces the identical update.
    ``final_loss`` is the mean cross-entropy over the local data after the
    last step (no penalty term), which is what loss-weighted aggregation
    consumes.
    """
    if data.task_kind != "classification" or data.n_samples == 0:
        raise EmptyDatasetError("local training needs a non-empty classification set")
    features, labels = data.features, data.labels
    n = data.n_samples
    w = model.weights.copy()
    rng = np.random.default_rng(cfg.seed)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            _, grad = loss_and_grad(w, features[batch], labels[batch], cfg.l2_reg)
            w = w - cfg.learning_rate * grad
    final_loss, _ = loss_and_grad(w, features, labels, 0.0)
    params = ModelParams(w, round=model.round + 1, source=device_id)
    return Update(params=params, n_samples=n, final_loss=final_loss, device_id=device_id)


def evaluate(model: ModelParams, test: LocalDataset):
    """(accuracy, mean cross-entropy) on a held-out classification set."""
    if test.task_kind != "classification" or test.n_samples == 0:
        raise EmptyDatasetError("evaluation needs a non-empty classification set")
    n, dim = test.features.shape
    w_mat, bias = _unpack(model.weights, dim)
    logits = test.features @ w_mat.T + bias
    logits = logits - logits.max(axis=1, keepdims=True)
    z = np.exp(logits).sum(axis=1)
    loss = float((np.log(z) - logits[np.arange(n), test.labels]).mean())
    accuracy = float((logits.argmax(axis=1) == test.labels).mean())
    return accuracy, loss


def aggregate_fedavg(updates: list) -> ModelParams:
    """Sample-count weighted average, reduced in ascending device id."""
    if not updates:
        raise NoUpdatesError("nothing to aggregate")
    ordered = sorted(updates, key=lambda u: u.device_id)
    length = ordered[0].params.weights.size
    for u in ordered:
        if u.params.weights.size != length:
            raise ShapeMismatchError(f"update from device {u.device_id} has length {u.params.weights.size}")
    total = sum(u.n_samples for u in ordered)
    if total <= 0:
        raise DegenerateWeightsError("all updates carry zero samples")
    acc = np.zeros(length)
    for u in ordered:
        acc += (u.n_samples / total) * u.params.weights
    return ModelParams(acc, round=max(u.params.round for u in ordered), source="server")


def aggregate_loss_weighted(updates: list, q: float = 0.0) -> ModelParams:
    """Aggregation with weights proportional to n_k * loss_k^q.

    q > 0 tilts the average toward devices the current model serves worst;
    q = 0 reduces exactly to plain sample-count averaging.
    """
    if q < 0:
        raise ValueError("q must be nonnegative")
    if not updates:
        raise NoUpdatesError("nothing to aggregate")
    if q == 0:
        return aggregate_fedavg(updates)
    ordered = sorted(updates, key=lambda u: u.device_id)
    length = ordered[0].params.weights.size
    for u in ordered:
        if u.params.weights.size != length:
            raise ShapeMismatchError(f"update from device {u.device_id} has length {u.params.weights.size}")
    raw = np.array([u.n_samples * u.final_loss**q for u in ordered], dtype=float)
    total = raw.sum()
    if not total > 0:
        raise DegenerateWeightsError("all aggregation weights vanished")
    acc = np.zeros(length)
    for weight, u in zip(raw / total, ordered):
        acc += weight * u.params.weights
    return ModelParams(acc, round=max(u.params.round for u in ordered), source="server")
