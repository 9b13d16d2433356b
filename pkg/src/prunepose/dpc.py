"""Density-peaks scoring and token pruning.

Each token gets a local density rho (exp of the negative mean squared
distance to its k nearest neighbors, divided by a temperature tau) and a
separation delta (distance to the nearest strictly-denser token; the densest
token instead takes its largest distance to any token). Tokens with the
highest rho*delta scores are kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DpcConfig",
    "DpcScores",
    "PruneSelection",
    "pairwise_sq_dist",
    "local_density",
    "delta_distance",
    "prune",
]


@dataclass(frozen=True)
class DpcConfig:
    """Pruner settings: neighbor count k, temperature tau, keep ratio epsilon."""

    k: int = 5
    tau: float | None = None  # None: use the token dimensionality C
    epsilon: int = 6

    def __post_init__(self):
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.tau is not None and self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.epsilon < 1:
            raise ValueError(f"epsilon must be >= 1, got {self.epsilon}")

    def resolved_tau(self, dim: int) -> float:
        return float(self.tau) if self.tau is not None else float(dim)


@dataclass(frozen=True)
class DpcScores:
    rho: np.ndarray
    delta: np.ndarray
    score: np.ndarray


@dataclass(frozen=True)
class PruneSelection:
    """Kept token indices, ascending, of length max(1, N // epsilon)."""

    kept: np.ndarray
    epsilon: int


def pairwise_sq_dist(tokens: np.ndarray) -> np.ndarray:
    """Symmetric matrix of squared Euclidean distances between token rows.

    Computed from explicit coordinate differences (not the expanded
    dot-product identity) so that nearby tokens do not lose precision to
    cancellation. Chunked over rows to bound memory for large N.
    """
    x = np.asarray(tokens, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"tokens must be an NxC matrix, got shape {x.shape}")
    n = x.shape[0]
    if n > 512:
        # BLAS path for large token sets; small-distance rounding is
        # irrelevant at this scale
        sq = np.einsum("ic,ic->i", x, x)
        out = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
        np.maximum(out, 0.0, out=out)
        out = 0.5 * (out + out.T)
    else:
        out = np.empty((n, n))
        step = max(1, (1 << 22) // max(1, n * x.shape[1]))
        for lo in range(0, n, step):
            hi = min(n, lo + step)
            diff = x[lo:hi, None, :] - x[None, :, :]
            out[lo:hi] = np.einsum("ijc,ijc->ij", diff, diff)
    np.fill_diagonal(out, 0.0)
    return out


def local_density(tokens: np.ndarray, cfg: DpcConfig,
                  sq_dist: np.ndarray | None = None) -> np.ndarray:
    """Per-token density in (0, 1]; a lone token has density exactly 1."""
    x = np.asarray(tokens, dtype=np.float64)
    n = x.shape[0]
    d2 = pairwise_sq_dist(x) if sq_dist is None else sq_dist
    k_eff = min(cfg.k, n - 1)
    if k_eff <= 0:
        return np.ones(n)
    # smallest k_eff off-diagonal entries per row; self sits at distance 0,
    # so take the k_eff+1 smallest and drop the self column
    part = np.partition(d2 + np.diag(np.full(n, np.inf)), k_eff - 1, axis=1)
    mean_knn = part[:, :k_eff].mean(axis=1)
    tau = cfg.resolved_tau(x.shape[1])
    return np.exp(-mean_knn / tau)


def delta_distance(tokens: np.ndarray, rho: np.ndarray,
                   sq_dist: np.ndarray | None = None) -> np.ndarray:
    """Distance to the nearest denser token; max distance for the densest one.

    Density ties break toward the lower index (the lower index counts as
    denser), which makes the ordering total and the result deterministic.
    """
    x = np.asarray(tokens, dtype=np.float64)
    n = x.shape[0]
    rho = np.asarray(rho, dtype=np.float64)
    if rho.shape != (n,):
        raise ValueError(f"rho must have shape ({n},), got {rho.shape}")
    if n == 1:
        return np.zeros(1)
    d2 = pairwise_sq_dist(x) if sq_dist is None else sq_dist
    d = np.sqrt(d2)
    order = np.lexsort((np.arange(n), -rho))  # densest first, index tie-break
    d_sorted = d[order][:, order]
    upper = np.arange(n)[None, :] >= np.arange(n)[:, None]
    masked = np.where(upper, np.inf, d_sorted)  # only strictly-denser (earlier) tokens
    delta_sorted = masked.min(axis=1)
    delta_sorted[0] = d_sorted[0].max()
    delta = np.empty(n)
    delta[order] = delta_sorted
    return delta


def prune(tokens: np.ndarray, cfg: DpcConfig) -> tuple[DpcScores, PruneSelection]:
    """Score all tokens and keep the max(1, N // epsilon) highest scoring.

    Score ties break toward the lower index. Kept indices are returned in
    ascending order so downstream positional structure survives.
    """
    x = np.asarray(tokens, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError(f"tokens must be a non-empty NxC matrix, got shape {x.shape}")
    n = x.shape[0]
    d2 = pairwise_sq_dist(x)
    rho = local_density(x, cfg, sq_dist=d2)
    delta = delta_distance(x, rho, sq_dist=d2)
    score = rho * delta
    n_keep = max(1, n // cfg.epsilon)
    by_score = np.lexsort((np.arange(n), -score))
    kept = np.sort(by_score[:n_keep])
    return DpcScores(rho=rho, delta=delta, score=score), PruneSelection(kept=kept, epsilon=cfg.epsilon)
