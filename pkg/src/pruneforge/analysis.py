"""Class-mean activation maps, their 2D projections, and separation hints.

One joint t-SNE embedding is computed per layer over all (kernel, class)
mean maps; per-kernel views are filtered subsets of that embedding, so every
kernel's points live in one shared coordinate frame. A weight-space
projection of the layer's kernels is available for redundancy inspection
only; no removal decision is derived from it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import model as M
from . import tsne as TS


class AnalysisError(ValueError):
    """Input data cannot support the requested analysis."""


@dataclass(frozen=True)
class MeanActivationMap:
    """Mean post-activation map of one kernel over one class's images."""
    layer: int
    kernel: int
    class_index: int
    values: np.ndarray  # flattened [h*w], nonnegative

    @property
    def size(self) -> int:
        return int(self.values.size)


@dataclass(frozen=True)
class ProjectionPoint:
    kernel: int
    class_index: int
    x: float
    y: float


@dataclass
class Projection2D:
    """Joint embedding of a layer's (kernel, class) mean activation maps."""
    layer: int
    points: list[ProjectionPoint]
    perplexity: float
    iterations: int
    seed: int
    final_kl: float
    kl_trace: list[float]

    def kernel_points(self, kernel: int) -> list[ProjectionPoint]:
        pts = [p for p in self.points if p.kernel == kernel]
        if not pts:
            raise AnalysisError(f"kernel {kernel} not present in projection")
        return pts

    def kernels(self) -> list[int]:
        return sorted({p.kernel for p in self.points})

    def to_payload(self) -> dict:
        return {
            "layer": self.layer,
            "params": {
                "perplexity": self.perplexity,
                "iterations": self.iterations,
                "seed": self.seed,
                "final_kl": self.final_kl,
            },
            "points": [
                {"kernel": p.kernel, "class": p.class_index, "x": p.x, "y": p.y}
                for p in self.points
            ],
        }


@dataclass
class WeightProjection:
    """2D embedding of a layer's flattened kernel weight vectors."""
    layer: int
    points: list[tuple[int, float, float]]  # (kernel, x, y)
    perplexity: float
    seed: int

    def to_payload(self) -> dict:
        return {
            "layer": self.layer,
            "params": {"perplexity": self.perplexity, "seed": self.seed},
            "points": [{"kernel": k, "x": x, "y": y} for k, x, y in self.points],
        }


def compute_mean_activation_maps(
    model: M.ModelState,
    images: np.ndarray,
    labels: np.ndarray,
    l: int,
    batch_size: int = 64,
) -> list[MeanActivationMap]:
    """Per-(kernel, class) arithmetic mean of layer-l output maps.

    Uses the layer output after ReLU and pooling. Every class must
    contribute at least one image. Results are ordered kernel-major
    (kernel 0 classes 0..c-1, kernel 1 classes 0..c-1, ...).
    """
    c = model.spec.classifier.class_count
    labels = np.asarray(labels)
    counts = np.bincount(labels, minlength=c)
    for j in range(c):
        if counts[j] == 0:
            raise AnalysisError(f"class {j} has no images; cannot average its activations")
    sums = None
    for lo in range(0, images.shape[0], batch_size):
        acts = M.forward_to_layer(model, images[lo:lo + batch_size], l)
        if sums is None:
            k_l, h, w = acts.shape[1], acts.shape[2], acts.shape[3]
            sums = np.zeros((c, k_l, h * w), dtype=np.float64)
        flat = acts.reshape(acts.shape[0], acts.shape[1], -1)
        np.add.at(sums, labels[lo:lo + batch_size], flat)
    means = sums / counts[:, None, None]
    return [
        MeanActivationMap(layer=l, kernel=k, class_index=j, values=means[j, k].copy())
        for k in range(sums.shape[1])
        for j in range(c)
    ]


def project_layer(
    model: M.ModelState,
    images: np.ndarray,
    labels: np.ndarray,
    l: int,
    perplexity: float = 30.0,
    iterations: int = 1000,
    seed: int = 0,
    batch_size: int = 64,
) -> Projection2D:
    """Joint t-SNE embedding of all |K_l| * c mean activation maps."""
    maps = compute_mean_activation_maps(model, images, labels, l, batch_size)
    vectors = np.stack([m.values for m in maps])
    eff = TS.feasible_perplexity(perplexity, vectors.shape[0])
    result = TS.tsne(vectors, perplexity=eff, iterations=iterations, seed=seed)
    points = [
        ProjectionPoint(
            kernel=m.kernel,
            class_index=m.class_index,
            x=float(result.embedding[i, 0]),
            y=float(result.embedding[i, 1]),
        )
        for i, m in enumerate(maps)
    ]
    return Projection2D(
        layer=l,
        points=points,
        perplexity=result.perplexity,
        iterations=iterations,
        seed=seed,
        final_kl=result.final_kl,
        kl_trace=result.kl_trace,
    )


def project_kernel_weights(
    model: M.ModelState,
    l: int,
    perplexity: float = 30.0,
    iterations: int = 500,
    seed: int = 0,
) -> WeightProjection:
    """t-SNE of the layer's kernel weight vectors; near-duplicate kernels land
    close together. Inspection view only."""
    kernels = model.conv_kernels[l - 1]
    vectors = kernels.reshape(kernels.shape[0], -1).astype(np.float64)
    eff = TS.feasible_perplexity(perplexity, vectors.shape[0])
    result = TS.tsne(vectors, perplexity=eff, iterations=iterations, seed=seed)
    points = [
        (k, float(result.embedding[k, 0]), float(result.embedding[k, 1]))
        for k in range(vectors.shape[0])
    ]
    return WeightProjection(layer=l, points=points, perplexity=result.perplexity, seed=seed)


def separation_hint(projection: Projection2D, kernel: int) -> float:
    """Silhouette-style score in [-1, 1] of one kernel's class points.

    For each of the kernel's c points: b = distance to the centroid of the
    other points, w = RMS spread of those points about that centroid; the
    point scores (b - w) / max(b, w). The hint is the mean score, -1 when
    the points coincide. High values mean at least one class sits away from
    the rest; the keep/remove decision stays with the expert.
    """
    pts = projection.kernel_points(kernel)
    coords = np.array([[p.x, p.y] for p in pts], dtype=np.float64)
    c = coords.shape[0]
    if c < 2:
        raise AnalysisError(f"kernel {kernel} has fewer than 2 class points")
    scores = []
    for i in range(c):
        others = np.delete(coords, i, axis=0)
        centroid = others.mean(axis=0)
        b = float(np.linalg.norm(coords[i] - centroid))
        w = float(np.sqrt(((others - centroid) ** 2).sum(axis=1).mean()))
        denom = max(b, w)
        scores.append(-1.0 if denom < 1e-12 else (b - w) / denom)
    return float(np.mean(scores))


def separation_hints(projection: Projection2D) -> dict[int, float]:
    return {k: separation_hint(projection, k) for k in projection.kernels()}
