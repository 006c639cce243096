"""Hilbert-Schmidt Independence Criterion for scalar samples.

Biased V-statistic with Gaussian kernels and median-distance bandwidths:

    Z = (1/n^2) * trace(Kc @ Lc)

where Kc, Lc are doubly-centered Gram matrices. Since centering is
idempotent, the implementation centers only one matrix; the trace is
identical. Significance is assessed by permutation only.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ModelError
from .rng import make_rng


@dataclass
class HsicStatistic:
    value: float
    n: int
    bandwidth_a: float
    bandwidth_b: float
    bandwidth_fallback: bool = False
    permutation_null: np.ndarray | None = None


def median_bandwidth(v: np.ndarray) -> tuple[float, bool]:
    """Median of the positive pairwise distances; falls back to 1.0 when all
    samples coincide (e.g. fully quantized windows)."""
    v = np.asarray(v, dtype=float).ravel()
    d = np.abs(v[:, None] - v[None, :])
    pos = d[np.triu_indices(v.shape[0], k=1)]
    pos = pos[pos > 0]
    if pos.size == 0:
        return 1.0, True
    return float(np.median(pos)), False


def _gram(v: np.ndarray, sigma: float) -> np.ndarray:
    d2 = (v[:, None] - v[None, :]) ** 2
    return np.exp(-d2 / (2.0 * sigma**2))


def _center(k: np.ndarray) -> np.ndarray:
    row = k.mean(axis=0, keepdims=True)
    col = k.mean(axis=1, keepdims=True)
    return k - row - col + k.mean()


def hsic_statistic(a: np.ndarray, b: np.ndarray) -> HsicStatistic:
    """HSIC between two equal-length scalar samples (>= 2 points)."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape[0] != b.shape[0]:
        raise ModelError("samples must have equal length")
    n = a.shape[0]
    if n < 2:
        raise ModelError("need at least 2 samples")
    sa, fa = median_bandwidth(a)
    sb, fb = median_bandwidth(b)
    kc = _center(_gram(a, sa))
    l = _gram(b, sb)
    z = float(np.sum(kc * l) / n**2)
    return HsicStatistic(value=z, n=n, bandwidth_a=sa, bandwidth_b=sb, bandwidth_fallback=fa or fb)


def hsic_permutation_pvalue(
    a: np.ndarray,
    b: np.ndarray,
    n_perm: int,
    seed: int,
    return_null: bool = False,
) -> float | tuple[float, np.ndarray]:
    """Permutation p-value for the HSIC statistic.

    p = (1 + #{permuted Z >= observed Z}) / (1 + n_perm). Bandwidths are
    held fixed across permutations (permuting a sample does not change its
    pairwise-distance multiset).
    """
    if n_perm < 1:
        raise ModelError("n_perm must be >= 1")
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape[0] != b.shape[0]:
        raise ModelError("samples must have equal length")
    n = a.shape[0]
    sa, _ = median_bandwidth(a)
    sb, _ = median_bandwidth(b)
    kc = _center(_gram(a, sa))
    l = _gram(b, sb)
    z_obs = float(np.sum(kc * l) / n**2)

    rng = make_rng(seed)
    null = np.empty(n_perm)
    for i in range(n_perm):
        perm = rng.permutation(n)
        null[i] = np.sum(kc * l[np.ix_(perm, perm)]) / n**2
    p = float((1 + np.sum(null >= z_obs)) / (1 + n_perm))
    if return_null:
        return p, null
    return p
