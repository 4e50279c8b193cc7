"""Effectiveness and efficiency measures: accuracy, Cohen kappa, reductions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import model as M


@dataclass(frozen=True)
class ConfusionMatrix:
    """Row = true class, column = predicted class."""
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("confusion matrix must be square")
        if np.any(c < 0):
            raise ValueError("confusion matrix counts must be nonnegative")
        object.__setattr__(self, "counts", c.astype(np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion_from_predictions(true_labels, predicted_labels, class_count: int) -> ConfusionMatrix:
    cm = np.zeros((class_count, class_count), dtype=np.int64)
    for t, p in zip(np.asarray(true_labels), np.asarray(predicted_labels)):
        cm[int(t), int(p)] += 1
    return ConfusionMatrix(cm)


def accuracy(cm: ConfusionMatrix) -> float:
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(cm.counts) / cm.total)


def cohen_kappa(cm: ConfusionMatrix) -> float:
    """(p_o - p_e) / (1 - p_e); returns 0 when chance agreement p_e is 1."""
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    total = cm.total
    p_o = np.trace(cm.counts) / total
    rows = cm.counts.sum(axis=1)
    cols = cm.counts.sum(axis=0)
    p_e = float((rows * cols).sum()) / (total * total)
    if p_e == 1.0:
        return 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def evaluate_model(model: M.ModelState, images: np.ndarray, labels, batch_size: int = 64) -> ConfusionMatrix:
    """Confusion matrix of the model's argmax predictions."""
    c = model.spec.classifier.class_count
    preds = []
    for lo in range(0, images.shape[0], batch_size):
        logits = M.forward_logits(model, images[lo:lo + batch_size])
        preds.append(np.argmax(logits, axis=1))
    return confusion_from_predictions(labels, np.concatenate(preds), c)


def reduction_percentages(original: M.ArchitectureSpec, pruned: M.ArchitectureSpec) -> tuple[float, float]:
    """(kernel reduction %, FLOPs reduction %) of pruned relative to original.

    Kernel reduction counts conv kernels over all layers; the FLOPs reduction
    uses the conv+classifier total of :func:`pruneforge.model.flops`.
    """
    if original.layer_count != pruned.layer_count:
        raise ValueError("specs have different conv layer counts")
    k0 = sum(original.kernel_counts())
    k1 = sum(pruned.kernel_counts())
    kernel_pct = 100.0 * (1.0 - k1 / k0)
    f0 = M.flops(original).total
    f1 = M.flops(pruned).total
    flops_pct = 100.0 * (1.0 - f1 / f0)
    return kernel_pct, flops_pct


@dataclass
class EvaluationReport:
    """Per-split metrics with mean +/- population-std aggregates."""
    accuracies: list[float]
    kappas: list[float]
    kernel_reduction: float = 0.0
    gflops_reduction: float = 0.0
    extras: dict = field(default_factory=dict)

    @property
    def accuracy_mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def accuracy_std(self) -> float:
        return float(np.std(self.accuracies))

    @property
    def kappa_mean(self) -> float:
        return float(np.mean(self.kappas))

    @property
    def kappa_std(self) -> float:
        return float(np.std(self.kappas))

    def as_dict(self) -> dict:
        return {
            "accuracy": {
                "mean": self.accuracy_mean,
                "std": self.accuracy_std,
                "display": format_mean_std(self.accuracies),
                "per_split": self.accuracies,
            },
            "cohen_kappa": {
                "mean": self.kappa_mean,
                "std": self.kappa_std,
                "display": format_mean_std(self.kappas),
                "per_split": self.kappas,
            },
            "kernel_reduction_pct": self.kernel_reduction,
            "gflops_reduction_pct": self.gflops_reduction,
            **self.extras,
        }


def format_mean_std(values) -> str:
    """Two-decimal 'mean ± std' with the population standard deviation."""
    if len(values) == 0:
        raise ValueError("need at least one value")
    return f"{np.mean(values):.2f} ± {np.std(values):.2f}"


def aggregate_splits(
    accuracies: list[float],
    kappas: list[float],
    kernel_reduction: float = 0.0,
    gflops_reduction: float = 0.0,
) -> EvaluationReport:
    if not accuracies or len(accuracies) != len(kappas):
        raise ValueError("need matching nonempty accuracy and kappa lists")
    return EvaluationReport(
        accuracies=[float(v) for v in accuracies],
        kappas=[float(v) for v in kappas],
        kernel_reduction=kernel_reduction,
        gflops_reduction=gflops_reduction,
    )
