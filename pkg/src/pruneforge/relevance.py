"""Kernel relevance criteria and removal-set selection.

Three criteria are supported:

* ``objective_loss_delta`` — increase in mean cross-entropy when the kernel's
  output channel is zero-masked; small increase means low relevance. Masking
  is used instead of structural surgery for speed, which the surgery
  equivalence tests license.
* ``l1_norm`` — sum of absolute kernel weights (bias excluded); small norm
  means low relevance.
* ``apoz`` — fraction of post-ReLU outputs that are exactly zero; here a
  HIGH value means LOW relevance, so the ordering direction is part of the
  criterion.

``relevance_key`` maps any score onto a single "higher is more relevant"
scale so selection never branches on the criterion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as M
from . import tensor as T

OBJECTIVE = "objective_loss_delta"
L1_NORM = "l1_norm"
APOZ = "apoz"
CRITERIA = (OBJECTIVE, L1_NORM, APOZ)


class SelectionError(ValueError):
    """Scores and policy do not define a valid removal set."""


@dataclass(frozen=True)
class KernelScore:
    layer: int
    kernel: int
    value: float
    criterion: str


@dataclass(frozen=True)
class KernelSet:
    layer: int
    kernels: tuple[int, ...]  # sorted, no duplicates


@dataclass(frozen=True)
class SelectionPolicy:
    """How a removal set is derived from a layer's scores.

    mode 'fixed_fraction' removes the floor(fraction * K) least relevant
    kernels; 'threshold' removes every kernel whose relevance is strictly
    below the threshold; 'explicit' names the kernels directly.
    """
    mode: str
    fraction: float | None = None
    threshold: float | None = None
    explicit: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.mode == "fixed_fraction":
            if self.fraction is None or not 0 < self.fraction < 1:
                raise SelectionError("fixed_fraction needs a fraction in (0, 1)")
        elif self.mode == "threshold":
            if self.threshold is None:
                raise SelectionError("threshold mode needs a threshold value")
        elif self.mode == "explicit":
            if self.explicit is None:
                raise SelectionError("explicit mode needs a kernel set")
        else:
            raise SelectionError(f"unknown selection mode '{self.mode}'")


def relevance_key(score: KernelScore) -> float:
    """Scalar relevance, higher = more relevant, comparable within a layer."""
    if score.criterion == APOZ:
        return 1.0 - score.value
    return score.value


def _ce_sum(logits: np.ndarray, labels: np.ndarray) -> float:
    loss, _ = T.softmax_cross_entropy_forward(logits, labels)
    return loss * logits.shape[0]


def _batches(n: int, batch_size: int):
    for lo in range(0, n, batch_size):
        yield lo, min(lo + batch_size, n)


def score_objective(
    model: M.ModelState,
    l: int,
    images: np.ndarray,
    labels: np.ndarray,
    batch_size: int = 64,
) -> list[KernelScore]:
    """Loss delta per kernel of layer ``l``: CE(masked) - CE(intact).

    The activations entering layer ``l`` are computed once per batch and the
    per-kernel passes resume from that cache.
    """
    n = images.shape[0]
    if n == 0:
        raise SelectionError("objective scoring needs a nonempty evaluation set")
    k_l = model.spec.conv_layers[l - 1].out_channels
    base_sum = 0.0
    masked_sums = np.zeros(k_l, dtype=np.float64)
    for lo, hi in _batches(n, batch_size):
        batch, batch_labels = images[lo:hi], labels[lo:hi]
        prefix = batch if l == 1 else M.run_conv_stack(model, batch, upto=l - 1)
        base_sum += _ce_sum(M.forward_logits(model, prefix, start=l), batch_labels)
        for k in range(k_l):
            masks = {l: M.removal_mask(k_l, [k])}
            logits = M.forward_logits(model, prefix, channel_masks=masks, start=l)
            masked_sums[k] += _ce_sum(logits, batch_labels)
    return [
        KernelScore(layer=l, kernel=k, value=float((masked_sums[k] - base_sum) / n), criterion=OBJECTIVE)
        for k in range(k_l)
    ]


def score_l1(model: M.ModelState, l: int) -> list[KernelScore]:
    """Sum of absolute kernel weights, bias excluded. Dataset-independent."""
    kernels = model.conv_kernels[l - 1]
    return [
        KernelScore(layer=l, kernel=k, value=float(np.abs(kernels[k]).sum()), criterion=L1_NORM)
        for k in range(kernels.shape[0])
    ]


def score_apoz(
    model: M.ModelState,
    l: int,
    images: np.ndarray,
    batch_size: int = 64,
) -> list[KernelScore]:
    """Fraction of exactly-zero post-ReLU outputs per channel of layer ``l``."""
    n = images.shape[0]
    if n == 0:
        raise SelectionError("zero-activation scoring needs a nonempty evaluation set")
    k_l = model.spec.conv_layers[l - 1].out_channels
    zeros = np.zeros(k_l, dtype=np.int64)
    positions = 0
    for lo, hi in _batches(n, batch_size):
        maps = M.relu_maps(model, images[lo:hi], l)
        zeros += (maps == 0.0).sum(axis=(0, 2, 3))
        positions += maps.shape[0] * maps.shape[2] * maps.shape[3]
    return [
        KernelScore(layer=l, kernel=k, value=float(zeros[k] / positions), criterion=APOZ)
        for k in range(k_l)
    ]


def select(scores: list[KernelScore], policy: SelectionPolicy) -> KernelSet:
    """Removal set for one layer under the given policy.

    Kernels are ordered by ascending relevance with ties broken toward the
    lower kernel index, so the least relevant (and on ties the lower-indexed)
    kernels are removed first. A selection that would empty the layer is an
    error.
    """
    if not scores:
        raise SelectionError("no scores given")
    layer = scores[0].layer
    if any(s.layer != layer for s in scores):
        raise SelectionError("scores span multiple layers")
    k_l = len(scores)
    if sorted(s.kernel for s in scores) != list(range(k_l)):
        raise SelectionError("scores must cover each kernel of the layer exactly once")

    if policy.mode == "explicit":
        removal = sorted(set(int(k) for k in policy.explicit))
        if removal and (removal[0] < 0 or removal[-1] >= k_l):
            raise SelectionError("explicit kernel index out of range")
    else:
        ranked = sorted(scores, key=lambda s: (relevance_key(s), s.kernel))
        if policy.mode == "fixed_fraction":
            count = int(policy.fraction * k_l)
            removal = sorted(s.kernel for s in ranked[:count])
        else:
            removal = sorted(s.kernel for s in ranked if relevance_key(s) < policy.threshold)
    if len(removal) >= k_l:
        raise SelectionError(f"selection would remove all {k_l} kernels of layer {layer}")
    return KernelSet(layer=layer, kernels=tuple(removal))


def scores_to_records(scores: list[KernelScore]) -> list[dict]:
    """Structured-text export consumed by the session service and the UI."""
    return [
        {"layer": s.layer, "kernel": s.kernel, "criterion": s.criterion, "value": s.value}
        for s in scores
    ]
