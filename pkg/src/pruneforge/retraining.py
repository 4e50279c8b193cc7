"""Retraining regimes: progressive (activation reconstruction), complete, final.

Progressive retraining runs after layer ``l`` has been pruned: only layers
1..l+1 of the pruned model are optimized, by plain SGD, to reproduce the
reference activations at the output of layer l+1. The reported quantity
D-bar is the mean per-image L2 distance between reference and pruned
activations; the per-step training objective is the mean per-image squared
distance, which shares its minimizer and gives error-proportional gradients.
Layers beyond l+1 (and the classifier, while l < L) are never touched; the
layer-freeze tests assert bit identity.

Complete retraining is the conventional baseline: one cross-entropy epoch
over the entire network after each layer's simplification.

Final retraining reinitializes the classifier (Glorot) and then fine-tunes
the whole network on cross-entropy for a configured number of epochs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import model as M
from . import tensor as T

log = logging.getLogger(__name__)

ProgressFn = Callable[[int, int, float], None]  # (epoch, total_epochs, loss)


class RetrainError(ValueError):
    """Invalid configuration or model pair for a retraining run."""


def banded_learning_rates(spec: M.ArchitectureSpec) -> dict[int, float]:
    """Progressive-retraining rate per simplified layer, banded by width.

    The rate for simplifying layer l keys on the kernel count of layer l+1,
    the reconstruction target (the layer's own count for l = L): <=64 maps
    to 1e-5, <=128 to 1e-6, <=256 to 1e-7, wider to 1e-8. On the 13-layer
    vgg16 preset this yields 1e-5, 1e-6, 1e-6, 1e-7, 1e-7, 1e-7, then 1e-8
    for layers 7..13.
    """
    band_rates = (1e-5, 1e-6, 1e-7, 1e-8)
    counts = spec.kernel_counts()
    rates = {}
    for l in range(1, len(counts) + 1):
        k_next = counts[l] if l < len(counts) else counts[-1]
        if k_next <= 64:
            band = 0
        elif k_next <= 128:
            band = 1
        elif k_next <= 256:
            band = 2
        else:
            band = 3
        rates[l] = band_rates[band]
    return rates


@dataclass
class RetrainConfig:
    progressive_epochs: int = 40
    final_epochs: int = 50
    final_learning_rate: float = 1e-5
    complete_learning_rate: float = 1e-5  # rate of the per-layer whole-network epoch
    per_layer_learning_rates: dict[int, float] = field(default_factory=dict)
    batch_size: int = 8
    seed: int = 0

    def validate(self) -> None:
        if self.progressive_epochs < 1:
            raise RetrainError("progressive_epochs must be >= 1")
        if self.final_epochs < 0:
            raise RetrainError("final_epochs must be >= 0")
        if self.final_learning_rate <= 0 or self.complete_learning_rate <= 0:
            raise RetrainError("learning rates must be > 0")
        if self.batch_size < 1:
            raise RetrainError("batch_size must be >= 1")
        for l, rate in self.per_layer_learning_rates.items():
            if rate <= 0:
                raise RetrainError(f"learning rate for layer {l} must be > 0")

    def progressive_rate(self, spec: M.ArchitectureSpec, l: int) -> float:
        if l in self.per_layer_learning_rates:
            return self.per_layer_learning_rates[l]
        return banded_learning_rates(spec)[l]


@dataclass
class ProgressiveLossReport:
    """Reconstruction distance at the target layer: before, and per epoch."""
    layer: int
    learning_rate: float
    initial: float
    per_epoch: list[float]

    @property
    def final(self) -> float:
        return self.per_epoch[-1] if self.per_epoch else self.initial

    def as_dict(self) -> dict:
        return {
            "layer": self.layer,
            "learning_rate": self.learning_rate,
            "initial": self.initial,
            "per_epoch": self.per_epoch,
        }


def _epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for lo in range(0, n, batch_size):
        yield order[lo:lo + batch_size]


def _sgd_update(params: list[T.Tensor], lr: float, epoch: int) -> None:
    for p in params:
        if p.grad is None:
            continue
        if not np.all(np.isfinite(p.grad)):
            raise T.NonFiniteError(f"non-finite gradient in epoch {epoch}")
        p.data -= (lr * p.grad).astype(p.data.dtype, copy=False)


def reconstruction_distance(
    reference: M.ModelState,
    pruned: M.ModelState,
    l: int,
    images: np.ndarray,
    batch_size: int = 64,
) -> float:
    """Mean per-image L2 distance between layer-(l+1) outputs of both models."""
    target = l + 1
    n = images.shape[0]
    total = 0.0
    for lo in range(0, n, batch_size):
        batch = images[lo:lo + batch_size]
        a = M.forward_to_layer(reference, batch, target).reshape(batch.shape[0], -1)
        b = M.forward_to_layer(pruned, batch, target).reshape(batch.shape[0], -1)
        total += float(np.sqrt(((a - b) ** 2).sum(axis=1)).sum())
    return total / n


def _check_frozen_agreement(reference: M.ModelState, pruned: M.ModelState, l: int) -> None:
    L = reference.spec.layer_count
    if pruned.spec.layer_count != L:
        raise RetrainError("reference and pruned must have the same conv layer count")
    for i in range(l + 1, L):  # conv layers l+2..L, 0-based i
        if not (
            np.array_equal(reference.conv_kernels[i], pruned.conv_kernels[i])
            and np.array_equal(reference.conv_biases[i], pruned.conv_biases[i])
        ):
            raise RetrainError(f"models disagree at frozen conv layer {i + 1}")
    first_trainable_fc = 1 if l == L else 0
    for i in range(len(reference.fc_weights)):
        if i < first_trainable_fc:
            continue
        if not (
            np.array_equal(reference.fc_weights[i], pruned.fc_weights[i])
            and np.array_equal(reference.fc_biases[i], pruned.fc_biases[i])
        ):
            raise RetrainError(f"models disagree at frozen classifier layer {i + 1}")


def progressive_retrain(
    reference: M.ModelState,
    pruned: M.ModelState,
    l: int,
    images: np.ndarray,
    config: RetrainConfig,
    progress: ProgressFn | None = None,
) -> tuple[M.ModelState, ProgressiveLossReport]:
    """Adjust layers 1..l+1 of the pruned model to reproduce the reference
    activations at the output of layer l+1.

    For l = L the target is the first classifier layer, which then trains
    together with the conv stack. Returns the refined model and the distance
    trace (full-set evaluation before training and after each epoch). The
    trace holds the mean per-image L2 distance; each SGD step descends on
    the squared variant of the same distance.
    """
    config.validate()
    L = reference.spec.layer_count
    if not 1 <= l <= L:
        raise RetrainError(f"layer index {l} out of range 1..{L}")
    _check_frozen_agreement(reference, pruned, l)

    work = pruned.copy()
    target = l + 1
    train_conv = set(range(1, min(target, L) + 1))
    train_fc = {1} if l == L else set()
    params = M.wrap_parameters(work, train_conv=train_conv, train_fc=train_fc)
    trainable = params.trainable()
    lr = config.progressive_rate(reference.spec, l)

    initial = reconstruction_distance(reference, work, l, images, config.batch_size)
    trace: list[float] = []
    n = images.shape[0]
    for epoch in range(1, config.progressive_epochs + 1):
        rng = np.random.default_rng([config.seed, l, epoch])
        for idx in _epoch_batches(n, config.batch_size, rng):
            batch = images[idx]
            ref_act = M.forward_to_layer(reference, batch, target)
            ref_flat = T.Tensor(ref_act.reshape(batch.shape[0], -1))
            params.zero_grads()
            act = M.graph_forward_to_layer(params, batch, target)
            diff = T.sub(T.flatten(act) if act.data.ndim > 2 else act, ref_flat)
            loss = T.mean(T.sum_per_sample(T.square(diff)))
            if not np.isfinite(loss.data):
                raise T.NonFiniteError(f"non-finite reconstruction loss in epoch {epoch}")
            T.backward(loss)
            _sgd_update(trainable, lr, epoch)
        dbar = reconstruction_distance(reference, work, l, images, config.batch_size)
        trace.append(dbar)
        if progress is not None:
            progress(epoch, config.progressive_epochs, dbar)
    work.validate()
    report = ProgressiveLossReport(layer=l, learning_rate=lr, initial=initial, per_epoch=trace)
    return work, report


def cross_entropy_epoch(
    model: M.ModelState,
    images: np.ndarray,
    labels: np.ndarray,
    learning_rate: float,
    batch_size: int = 16,
    rng: np.random.Generator | None = None,
) -> tuple[M.ModelState, float]:
    """One shuffled epoch of cross-entropy SGD over all layers."""
    work = model.copy()
    params = M.wrap_parameters(work)
    trainable = params.trainable()
    rng = rng if rng is not None else np.random.default_rng(0)
    n = images.shape[0]
    total = 0.0
    for idx in _epoch_batches(n, batch_size, rng):
        params.zero_grads()
        logits = M.graph_forward_logits(params, images[idx])
        loss = T.softmax_cross_entropy(logits, labels[idx])
        if not np.isfinite(loss.data):
            raise T.NonFiniteError("non-finite training loss")
        T.backward(loss)
        _sgd_update(trainable, learning_rate, 1)
        total += float(loss.data) * len(idx)
    work.validate()
    return work, total / n


def complete_retrain_epoch(
    model: M.ModelState,
    images: np.ndarray,
    labels: np.ndarray,
    learning_rate: float,
    batch_size: int = 16,
    seed: int = 0,
) -> M.ModelState:
    """The complete-retraining step: a single whole-network epoch."""
    work, _ = cross_entropy_epoch(
        model, images, labels, learning_rate, batch_size, np.random.default_rng([seed, 0])
    )
    return work


def train_cross_entropy(
    model: M.ModelState,
    images: np.ndarray,
    labels: np.ndarray,
    epochs: int,
    learning_rate: float,
    batch_size: int = 16,
    seed: int = 0,
    progress: ProgressFn | None = None,
) -> tuple[M.ModelState, list[float]]:
    """Multi-epoch cross-entropy SGD; returns the model and per-epoch losses."""
    work = model
    losses = []
    for epoch in range(1, epochs + 1):
        try:
            work, mean_loss = cross_entropy_epoch(
                work, images, labels, learning_rate, batch_size, np.random.default_rng([seed, epoch])
            )
        except T.NonFiniteError as exc:
            raise T.NonFiniteError(f"{exc} (epoch {epoch})") from exc
        losses.append(mean_loss)
        if progress is not None:
            progress(epoch, epochs, mean_loss)
    return work, losses


def final_retrain(
    model: M.ModelState,
    images: np.ndarray,
    labels: np.ndarray,
    config: RetrainConfig,
    progress: ProgressFn | None = None,
) -> tuple[M.ModelState, list[float]]:
    """Classifier reinitialization followed by whole-network fine-tuning.

    The classifier restarts from Glorot-random weights while the conv layers
    keep (and continue to refine) their progressively-retrained values.
    """
    config.validate()
    work = M.glorot_reinit_classifier(model, seed=config.seed)
    if config.final_epochs == 0:
        return work, []
    return train_cross_entropy(
        work,
        images,
        labels,
        epochs=config.final_epochs,
        learning_rate=config.final_learning_rate,
        batch_size=config.batch_size,
        seed=config.seed,
        progress=progress,
    )
