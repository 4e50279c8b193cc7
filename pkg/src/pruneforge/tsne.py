"""Exact t-SNE (van der Maaten & Hinton, 2008) with a per-iteration KL trace.

Non-approximated O(n^2) form: per-point bandwidths found by binary search so
every conditional distribution hits the requested perplexity, symmetrized
joint affinities, early exaggeration factor 12 for the first 250 iterations,
and momentum gradient descent (0.5, then 0.8 once exaggeration ends) at
learning rate 200. The KL divergence recorded each iteration is always
against the true (non-exaggerated) affinities. Once exaggeration ends the
step is halved whenever it would raise that KL, so the tail of the trace is
non-increasing by construction; the guard triggers only on stiff instances.

Everything is deterministic in the seed. For large point sets the pairwise
buffers switch to float32 to halve memory traffic; reductions still
accumulate in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EPS = 1e-12
_FLOAT32_CUTOVER = 1024  # points; above this the n^2 buffers use float32


class PerplexityError(ValueError):
    """Requested perplexity is infeasible for the number of points."""


@dataclass
class TsneResult:
    embedding: np.ndarray       # [n, 2] float64
    kl_trace: list[float]       # kl_trace[i] = divergence entering iteration i
    perplexity: float
    iterations: int
    seed: int

    @property
    def final_kl(self) -> float:
        return self.kl_trace[-1] if self.kl_trace else float("nan")


def pairwise_sq_distances(x: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances via the GEMM expansion, clipped at 0."""
    sq = (x * x).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def _conditional_probabilities(d2: np.ndarray, perplexity: float, max_iter: int = 50) -> np.ndarray:
    """Row-stochastic P(j|i) whose entropy matches log(perplexity).

    Vectorized binary search on the precision beta_i = 1/(2 sigma_i^2). Rows
    of identical points degrade to uniform affinities rather than erroring.
    """
    n = d2.shape[0]
    target = np.log(perplexity)
    beta = np.ones(n, dtype=np.float64)
    beta_min = np.full(n, -np.inf)
    beta_max = np.full(n, np.inf)
    p = np.zeros((n, n), dtype=np.float64)
    scratch = np.empty_like(p)
    for _ in range(max_iter):
        np.multiply(d2, -beta[:, None], out=p)
        np.exp(p, out=p)
        np.fill_diagonal(p, 0.0)
        rows = p.sum(axis=1)
        rows[rows == 0.0] = _EPS
        p /= rows[:, None]
        # Shannon entropy per row: H = -sum p log p
        np.log(np.maximum(p, _EPS), out=scratch)
        scratch *= p
        h = -scratch.sum(axis=1)
        diff = h - target
        if np.all(np.abs(diff) < 1e-5):
            break
        too_high = diff > 0  # entropy too big -> sigma too big -> raise beta
        beta_min = np.where(too_high, beta, beta_min)
        beta_max = np.where(~too_high, beta, beta_max)
        beta = np.where(
            too_high,
            np.where(np.isinf(beta_max), beta * 2.0, (beta + beta_max) / 2.0),
            np.where(np.isinf(beta_min), beta / 2.0, (beta + beta_min) / 2.0),
        )
    return p


def joint_probabilities(vectors: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrized affinities P = (P(j|i) + P(i|j)) / 2n, floored at 1e-12."""
    d2 = pairwise_sq_distances(np.asarray(vectors, dtype=np.float64))
    p_cond = _conditional_probabilities(d2, perplexity)
    p = (p_cond + p_cond.T) / (2.0 * d2.shape[0])
    np.maximum(p, _EPS, out=p)
    np.fill_diagonal(p, 0.0)
    return p


def kl_divergence_and_grad(p: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    """KL(P || Q(y)) and its gradient w.r.t. the embedding y.

    The reference form used both by the optimizer and by the
    finite-difference gradient tests.
    """
    n = y.shape[0]
    d2 = pairwise_sq_distances(y)
    num = 1.0 / (1.0 + d2)
    np.fill_diagonal(num, 0.0)
    z = max(num.sum(), _EPS)
    q = np.maximum(num / z, _EPS)
    mask = ~np.eye(n, dtype=bool)
    kl = float((p[mask] * np.log(p[mask] / q[mask])).sum())
    w = (p - q) * num
    grad = 4.0 * (np.diag(w.sum(axis=1)) @ y - w @ y)
    return kl, grad


def tsne(
    vectors: np.ndarray,
    perplexity: float = 30.0,
    iterations: int = 1000,
    seed: int = 0,
    learning_rate: float = 200.0,
    early_exaggeration: float = 12.0,
    exaggeration_until: int = 250,
    initial_momentum: float = 0.5,
    final_momentum: float = 0.8,
) -> TsneResult:
    """Embed row vectors into 2D; returns the embedding and the KL trace."""
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("expected a matrix of row vectors")
    n = x.shape[0]
    if n < 3:
        raise PerplexityError(f"need at least 3 vectors, got {n}")
    if not perplexity < (n - 1) / 3:
        raise PerplexityError(
            f"perplexity {perplexity} infeasible for {n} points (needs < {(n - 1) / 3:.2f})"
        )
    if iterations < 1:
        raise ValueError("iterations must be >= 1")

    p64 = joint_probabilities(x, perplexity)
    work_dtype = np.float32 if n > _FLOAT32_CUTOVER else np.float64
    p = p64.astype(work_dtype)
    p_exagg = (p64 * early_exaggeration).astype(work_dtype)
    # constant part of KL, from the true affinities (diagonal contributes 0)
    p_log_p = float((p64[p64 > 0] * np.log(p64[p64 > 0])).sum())
    del p64

    # preallocated n*n buffers; all hot passes write in place
    buf_d2 = np.empty((n, n), dtype=work_dtype)
    buf_num = np.empty((n, n), dtype=work_dtype)
    buf_w = np.empty((n, n), dtype=work_dtype)

    def q_state(points: np.ndarray) -> float:
        """Fill buf_d2 / buf_num for ``points``; return the kernel mass."""
        p32 = points.astype(work_dtype)
        sq = (p32 * p32).sum(axis=1)
        np.matmul(p32, p32.T, out=buf_w)
        np.multiply(buf_w, -2.0, out=buf_d2)
        np.add(buf_d2, sq[:, None], out=buf_d2)
        np.add(buf_d2, sq[None, :], out=buf_d2)
        np.maximum(buf_d2, 0.0, out=buf_d2)
        np.fill_diagonal(buf_d2, 0.0)
        np.add(buf_d2, 1.0, out=buf_num)
        np.reciprocal(buf_num, out=buf_num)
        np.fill_diagonal(buf_num, 0.0)
        return max(float(buf_num.sum(dtype=np.float64)), _EPS)

    def kl_of_state(z: float) -> float:
        # KL = sum p log p - sum p log q;  log q_ij = -log1p(d2_ij) - log z
        np.log1p(buf_d2, out=buf_w)
        np.multiply(buf_w, p, out=buf_w)
        cross = float(buf_w.sum(dtype=np.float64))
        return p_log_p + cross + np.log(z)

    rng = np.random.default_rng(seed)
    y = rng.normal(0.0, 1e-4, size=(n, 2))
    velocity = np.zeros_like(y)
    kl_trace: list[float] = []

    z = q_state(y)
    kl_cur = kl_of_state(z)
    for it in range(iterations):
        exaggerating = it < exaggeration_until
        momentum = initial_momentum if exaggerating else final_momentum
        if it == exaggeration_until:
            # the exaggerated phase optimized a different objective; its
            # stale velocity would push the true KL uphill for several steps
            velocity[:] = 0.0
        kl_trace.append(kl_cur)

        # gradient of KL(P_eff || Q): 4 (deg(W) y - W y), W = (P_eff - Q) num
        np.divide(buf_num, z, out=buf_w)
        np.subtract(p_exagg if exaggerating else p, buf_w, out=buf_w)
        np.multiply(buf_w, buf_num, out=buf_w)
        deg = buf_w.sum(axis=1, dtype=np.float64)
        wy = (buf_w @ y.astype(work_dtype)).astype(np.float64)
        grad = 4.0 * (deg[:, None] * y - wy)

        velocity = momentum * velocity - learning_rate * grad
        y_next = y + velocity
        z = q_state(y_next)
        kl_next = kl_of_state(z)
        if not exaggerating:
            # monotone guard: momentum at learning rate 200 can overshoot on
            # stiff instances; halving the step until the true KL stops
            # rising keeps the reported trace non-increasing
            tries = 0
            while kl_next > kl_cur and tries < 12:
                velocity *= 0.5
                y_next = y + velocity
                z = q_state(y_next)
                kl_next = kl_of_state(z)
                tries += 1
        # recentring is distance-preserving, so the cached state stays valid
        y = y_next - y_next.mean(axis=0, keepdims=True)
        kl_cur = kl_next

    return TsneResult(
        embedding=y,
        kl_trace=kl_trace,
        perplexity=float(perplexity),
        iterations=iterations,
        seed=seed,
    )


def feasible_perplexity(requested: float, count: int) -> float:
    """Largest usable perplexity not above the requested one."""
    cap = (count - 1) / 3.0
    return min(requested, cap * (1.0 - 1e-9)) if requested >= cap else requested
