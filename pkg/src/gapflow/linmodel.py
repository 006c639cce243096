"""Least-squares autoregressive fits, BIC, and lag-order selection.

This is the numeric substrate for the Granger tests: nested AR models with
optional exogenous lag terms, fitted by QR-based least squares (no explicit
normal-equation inverse), plus the Gaussian-likelihood form of the BIC.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg

from .errors import ModelError

# Ridge fallback strength, scaled by the mean diagonal of the Gram matrix.
RIDGE_SCALE = 1e-10


@dataclass(frozen=True)
class ARFit:
    """One least-squares fit of an AR model, optionally with exogenous lags.

    ``params`` is ordered: intercept, own lags 1..L, then exogenous lags
    (0..L when the instantaneous term is included, else 1..L).
    """

    params: np.ndarray
    ssr: float
    n_obs: int
    lag: int
    n_exog: int
    ridged: bool = False
    ok: bool = True

    @property
    def intercept(self) -> float:
        return float(self.params[0])

    @property
    def ar_coeffs(self) -> np.ndarray:
        return self.params[1 : 1 + self.lag]

    @property
    def exog_coeffs(self) -> np.ndarray:
        return self.params[1 + self.lag :]

    @property
    def n_params(self) -> int:
        return int(self.params.size)


def _lag_columns(v: np.ndarray, lag: int, lo: int) -> list[np.ndarray]:
    """Columns v(t-k) for k = lo..lag, aligned to targets t = lag..n-1."""
    n = v.shape[0]
    return [v[lag - k : n - k] for k in range(lo, lag + 1)]


def design_matrix(
    y: np.ndarray, lag: int, x: np.ndarray | None = None, include_instant: bool = False
) -> tuple[np.ndarray, np.ndarray]:
    """Build (X, target) for an AR(lag) regression of ``y``.

    When ``x`` is given, its lags 1..lag (or 0..lag with the instantaneous
    term) are appended as extra regressors. Targets are y(t) for
    t = lag..n-1, so nested models share the same rows.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    cols = [np.ones(n - lag)]
    cols.extend(_lag_columns(y, lag, 1))
    if x is not None:
        x = np.asarray(x, dtype=float)
        if x.shape != y.shape:
            raise ModelError("exogenous series must match the target length")
        cols.extend(_lag_columns(x, lag, 0 if include_instant else 1))
    return np.column_stack(cols), y[lag:]


def fit_ar(
    y: np.ndarray,
    lag: int,
    x: np.ndarray | None = None,
    include_instant: bool = False,
) -> ARFit:
    """Fit an AR(lag) model of ``y``, optionally with exogenous lags of ``x``.

    Rank-deficient designs (e.g. constant windows of heavily quantized
    series) fall back once to a trace-scaled ridge; if the solution is still
    not finite the fit is returned with ``ok=False`` so callers can exclude
    it from downstream tallies.
    """
    y = np.asarray(y, dtype=float)
    if lag < 1:
        raise ModelError("lag must be >= 1")
    if y.shape[0] <= 2 * lag + 2:
        raise ModelError(f"series of length {y.shape[0]} too short for lag {lag}")

    X, t = design_matrix(y, lag, x, include_instant)
    n_exog = X.shape[1] - 1 - lag

    params, _, rank, _ = linalg.lstsq(X, t, lapack_driver="gelsy")
    ridged = False
    if rank < X.shape[1]:
        gram = X.T @ X
        lam = RIDGE_SCALE * np.trace(gram) / X.shape[1]
        params = linalg.solve(gram + lam * np.eye(X.shape[1]), X.T @ t, assume_a="pos")
        ridged = True

    ok = bool(np.all(np.isfinite(params)))
    resid = t - X @ params if ok else np.full_like(t, np.nan)
    ssr = float(resid @ resid) if ok else float("nan")
    return ARFit(
        params=params,
        ssr=ssr,
        n_obs=int(t.shape[0]),
        lag=lag,
        n_exog=n_exog,
        ridged=ridged,
        ok=ok,
    )


def bic(fit: ARFit) -> float:
    """Gaussian-likelihood BIC: n*ln(ssr/n) + k*ln(n).

    A perfect fit (ssr = 0) returns -inf as a sentinel; callers treat such
    fits as flagged rather than comparing them.
    """
    if fit.n_obs <= 0:
        raise ModelError("fit has no observations")
    if not fit.ok or not math.isfinite(fit.ssr):
        return float("nan")
    if fit.ssr <= 0.0:
        return float("-inf")
    n = fit.n_obs
    return n * math.log(fit.ssr / n) + fit.n_params * math.log(n)


def _argmin_median(medians: dict[int, float]) -> int:
    """Smallest lag achieving the minimum median BIC (ties go to parsimony)."""
    best = min(medians.values())
    return min(lag for lag, m in medians.items() if m == best)


def select_lag(
    windows: Iterable[np.ndarray], lags: Sequence[int] = tuple(range(1, 11))
) -> int:
    """Pick the lag with minimum median BIC across all window fits.

    Windows too short for a candidate lag, failed fits, and -inf sentinels
    are skipped. Lags with no usable fit are not eligible.
    """
    windows = [np.asarray(w, dtype=float) for w in windows]
    if not windows:
        raise ModelError("empty series set")
    medians: dict[int, float] = {}
    for lag in lags:
        vals = []
        for w in windows:
            if w.shape[0] <= 2 * lag + 2:
                continue
            b = bic(fit_ar(w, lag))
            if math.isfinite(b):
                vals.append(b)
        if vals:
            medians[lag] = float(np.median(vals))
    if not medians:
        raise ModelError("no usable fits in the series set")
    return _argmin_median(medians)
