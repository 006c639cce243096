"""Bivariate additive-noise-model causal scoring.

For a window pair (x, y), both directions are regressed with a GP and the
dependence between candidate cause and residuals is measured with HSIC:

    Z_xy = HSIC(x, y - f(x))      Z_yx = HSIC(y, x - g(y))
    S    = Z_yx - Z_xy

S > 0 claims x -> y, S < 0 claims y -> x. Both directional fits use the
same seed, which makes the score exactly antisymmetric under argument swap.
"""

from __future__ import annotations

from dataclasses import dataclass

from joblib import Parallel, delayed

import numpy as np

from .errors import ModelError
from .gpr import gp_fit, gp_residuals
from .hsic import hsic_statistic
from .rng import spawn_seeds


@dataclass
class AnmResult:
    x_id: str
    y_id: str
    lag: int
    score: float
    z_xy: float
    z_yx: float
    window: int
    excluded: bool = False
    significant: bool | None = None

    @property
    def config_key(self) -> tuple:
        return ("anm", self.x_id, self.y_id, self.lag)


def anm_score(
    x: np.ndarray,
    y: np.ndarray,
    seed: int = 0,
    x_id: str = "x",
    y_id: str = "y",
    lag: int = 0,
    window: int = 0,
    gp_kwargs: dict | None = None,
) -> AnmResult:
    """ANM score for one window pair; GP failure in either direction marks
    the result excluded (scores NaN) so callers can tally it."""
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape[0] != y.shape[0]:
        raise ModelError("x and y must have equal length")
    kw = gp_kwargs or {}
    try:
        fwd = gp_fit(x, y, seed=seed, **kw)
        z_xy = hsic_statistic(x, gp_residuals(fwd, x, y)).value
        bwd = gp_fit(y, x, seed=seed, **kw)
        z_yx = hsic_statistic(y, gp_residuals(bwd, y, x)).value
    except ModelError:
        nan = float("nan")
        return AnmResult(x_id, y_id, lag, nan, nan, nan, window, excluded=True)
    return AnmResult(x_id, y_id, lag, z_yx - z_xy, z_xy, z_yx, window)


def lagged_anm(
    x: np.ndarray,
    y: np.ndarray,
    lag: int,
    tau_tilde: int,
    seed: int = 0,
    x_id: str = "x",
    y_id: str = "y",
    gp_kwargs: dict | None = None,
    max_windows: int | None = None,
    n_jobs: int = 1,
) -> list[AnmResult]:
    """ANM scores over disjoint windows of lag-aligned pairs (x(k), y(k+lag)).

    Unlike the regressive tests, only the single stated lag is considered.
    Windows left incomplete after lag trimming are skipped. Per-window seeds
    are spawned from ``seed``, so results do not depend on scheduling.
    """
    if lag < 0:
        raise ModelError("lag must be >= 0")
    if tau_tilde < 2:
        raise ModelError("tau_tilde must be >= 2")
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    m = min(x.shape[0], y.shape[0] - lag)
    n_windows = max(m, 0) // tau_tilde
    if max_windows is not None:
        n_windows = min(n_windows, max_windows)
    if n_windows <= 0:
        return []
    seeds = spawn_seeds(seed, n_windows)

    def one(w: int) -> AnmResult:
        sl = slice(w * tau_tilde, (w + 1) * tau_tilde)
        return anm_score(
            x[sl],
            y[lag:][sl],
            seed=seeds[w],
            x_id=x_id,
            y_id=y_id,
            lag=lag,
            window=w,
            gp_kwargs=gp_kwargs,
        )

    if n_jobs == 1:
        return [one(w) for w in range(n_windows)]
    return Parallel(n_jobs=n_jobs)(delayed(one)(w) for w in range(n_windows))
