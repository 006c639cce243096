"""Averaged local cross-correlation between returns and gap statistics.

The returns series is partitioned into disjoint windows of length
tau_tilde. For each window j (held fixed) the Pearson correlation with
lag-shifted windows of the gap series is computed,

    C_j(l) = sum_i (R_i - Rbar)(G_{i+l} - Gbar) / sqrt(S_R * S_G)

with means and sums of squares taken inside the windows actually used, so
|C_j(l)| <= 1 and C_j(0) = 1 exactly for identical series. The average
over windows is C(l). Positive-lag peaks mean the fixed returns window
leads the gap series.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import XcorrError
from .series import PercentileSeries


@dataclass
class CorrelationFunction:
    lags: np.ndarray
    values: np.ndarray
    window_length: int
    num_windows: int
    num_excluded: int = 0


def _values(series: PercentileSeries | np.ndarray) -> np.ndarray:
    if isinstance(series, PercentileSeries):
        return np.asarray(series.values, dtype=float)
    return np.asarray(series, dtype=float).ravel()


def _window_ok(r: np.ndarray, g: np.ndarray, j: int, tau_tilde: int, max_lag: int) -> bool:
    lo = j * tau_tilde
    hi = lo + tau_tilde
    return lo - max_lag >= 0 and hi + max_lag <= g.shape[0] and hi <= r.shape[0]


def local_correlation(
    r: PercentileSeries | np.ndarray,
    g: PercentileSeries | np.ndarray,
    j: int,
    tau_tilde: int,
    max_lag: int = 10,
) -> np.ndarray:
    """C_j(l) for l in [-max_lag, max_lag] for the j-th returns window.

    Raises XcorrError if the lagged gap windows fall out of bounds or any
    window involved has zero variance.
    """
    rv, gv = _values(r), _values(g)
    if tau_tilde < 2:
        raise XcorrError("tau_tilde must be >= 2")
    if not _window_ok(rv, gv, j, tau_tilde, max_lag):
        raise XcorrError(f"window {j} out of bounds for max_lag {max_lag}")
    lo = j * tau_tilde
    rw = rv[lo : lo + tau_tilde]
    dr = rw - rw.mean()
    sr = float(dr @ dr)
    if sr == 0.0:
        raise XcorrError(f"zero variance in returns window {j}")
    out = np.empty(2 * max_lag + 1)
    for k, l in enumerate(range(-max_lag, max_lag + 1)):
        gw = gv[lo + l : lo + l + tau_tilde]
        dg = gw - gw.mean()
        sg = float(dg @ dg)
        if sg == 0.0:
            raise XcorrError(f"zero variance in gap window {j} at lag {l}")
        out[k] = float(dr @ dg) / np.sqrt(sr * sg)
    return out


def average_correlation(
    r: PercentileSeries | np.ndarray,
    g: PercentileSeries | np.ndarray,
    tau_tilde: int,
    max_lag: int = 10,
) -> CorrelationFunction:
    """Mean of the local correlation functions over all in-bounds windows.

    Zero-variance windows are excluded and tallied; if no window survives,
    raises XcorrError("no valid windows").
    """
    rv, gv = _values(r), _values(g)
    n = min(rv.shape[0], gv.shape[0])
    rv, gv = rv[:n], gv[:n]
    acc = np.zeros(2 * max_lag + 1)
    included = 0
    excluded = 0
    for j in range(n // tau_tilde):
        if not _window_ok(rv, gv, j, tau_tilde, max_lag):
            continue
        try:
            acc += local_correlation(rv, gv, j, tau_tilde, max_lag)
        except XcorrError:
            excluded += 1
            continue
        included += 1
    if included == 0:
        raise XcorrError("no valid windows")
    return CorrelationFunction(
        lags=np.arange(-max_lag, max_lag + 1),
        values=acc / included,
        window_length=tau_tilde,
        num_windows=included,
        num_excluded=excluded,
    )
