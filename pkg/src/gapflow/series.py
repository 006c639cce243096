"""Gap, return, and windowed percentile series.

Gaps are log-ratios of adjacent occupied price levels per side; because
ratios of tick counts equal ratios of prices, the tick size cancels and
floating point enters only here. Bid levels decrease with depth, so bid
gaps take the absolute log-ratio (sizes are nonnegative by convention).

Percentile reduction collapses disjoint windows of tau steps to their
maximum (p=100), midpoint median (p=50) or nearest-rank percentile; for
multivariate gap series all in-scope (side, level, t) values in the window
are pooled before taking the percentile.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SeriesError
from .ingest import SnapshotSequence, tick_parts

ASK, BID = 0, 1

SOURCES = ("gaps_all", "gaps_first", "returns", "volatility_absmean", "volatility_std")


@dataclass
class GapSeries:
    """Log-gaps indexed by (time, side, level); shape (T, 2, 19)."""

    values: np.ndarray
    resolution: int = 10

    def __len__(self) -> int:
        return int(self.values.shape[0])


@dataclass
class ReturnSeries:
    """Log-returns of the mid-price; values[t] = ln(p(t+1)/p(t))."""

    values: np.ndarray
    mid_prices: np.ndarray
    resolution: int = 10

    def __len__(self) -> int:
        return int(self.values.shape[0])


@dataclass
class PercentileSeries:
    """Windowed reduction of a gap or return series (one value per window)."""

    values: np.ndarray
    window_size: int
    percentile: int | None
    source: str

    def __len__(self) -> int:
        return int(self.values.shape[0])

    @property
    def is_empty(self) -> bool:
        return len(self) == 0


def compute_gaps(seq: SnapshotSequence) -> GapSeries:
    """Per-level log-gaps for both sides; ask gaps are nonnegative by
    monotonicity and bid gaps by the absolute-value convention."""
    if len(seq) == 0:
        raise SeriesError("empty sequence")
    la = np.log(seq.ask_ticks.astype(float))
    lb = np.log(seq.bid_ticks.astype(float))
    g_ask = la[:, 1:] - la[:, :-1]
    g_bid = lb[:, :-1] - lb[:, 1:]
    return GapSeries(values=np.stack((g_ask, g_bid), axis=1), resolution=seq.declared_resolution)


def compute_returns(seq: SnapshotSequence) -> ReturnSeries:
    """Mid-price log-returns. The tick size cancels inside the log ratio."""
    if len(seq) < 2:
        raise SeriesError("need at least 2 snapshots for returns")
    twice_mid = (seq.ask_ticks[:, 0] + seq.bid_ticks[:, 0]).astype(float)
    r = np.diff(np.log(twice_mid))
    mantissa, decimals = tick_parts(seq.tick)
    mid = twice_mid * mantissa / (2.0 * 10.0**decimals)
    return ReturnSeries(values=r, mid_prices=mid, resolution=seq.declared_resolution)


def nearest_rank(sorted_vals: np.ndarray, p: float) -> np.ndarray:
    """Nearest-rank percentile along the last axis of pre-sorted values."""
    m = sorted_vals.shape[-1]
    idx = max(int(np.ceil(p / 100.0 * m)), 1) - 1
    return sorted_vals[..., idx]


def _window_matrix(flat: np.ndarray, tau: int) -> np.ndarray:
    n_win = flat.shape[0] // tau
    width = int(np.prod(flat.shape[1:], dtype=int)) if flat.ndim > 1 else 1
    return flat[: n_win * tau].reshape(n_win, tau * width)


def reduce_to_percentile(
    series: GapSeries | ReturnSeries,
    tau: int,
    p: int,
    scope: str = "all",
    absolute: bool = False,
) -> PercentileSeries:
    """Windowed percentile series with floor(T/tau) windows.

    ``scope`` selects all 2x19 gap levels or only the first gap of each
    side; it is ignored for returns. ``absolute`` applies |r| before
    reduction (the signed max is the default, matching the definition of
    the maximum-return series; volatility uses its own operation).
    """
    if tau < 1:
        raise SeriesError("tau must be >= 1")
    if isinstance(series, GapSeries):
        if scope == "all":
            flat, source = series.values, "gaps_all"
        elif scope == "first":
            flat, source = series.values[:, :, 0], "gaps_first"
        else:
            raise SeriesError(f"unknown scope: {scope!r}")
    elif isinstance(series, ReturnSeries):
        flat = np.abs(series.values) if absolute else series.values
        source = "returns"
    else:
        raise SeriesError(f"cannot reduce {type(series).__name__}")

    win = _window_matrix(flat, tau)
    if win.shape[0] == 0:
        return PercentileSeries(np.empty(0), tau, p, source)
    if p == 100:
        vals = win.max(axis=1)
    elif p == 50:
        vals = np.median(win, axis=1)
    else:
        vals = nearest_rank(np.sort(win, axis=1), p)
    return PercentileSeries(values=vals, window_size=tau, percentile=p, source=source)


def compute_volatility(returns: ReturnSeries, tau: int, kind: str = "absmean") -> PercentileSeries:
    """Windowed volatility: mean absolute return, or population standard
    deviation of returns (zero for a constant window)."""
    if kind not in ("absmean", "std"):
        raise SeriesError(f"unknown volatility kind: {kind!r}")
    if tau < (2 if kind == "std" else 1):
        raise SeriesError(f"tau too small for volatility kind {kind!r}")
    win = _window_matrix(returns.values, tau)
    if win.shape[0] == 0:
        return PercentileSeries(np.empty(0), tau, None, f"volatility_{kind}")
    vals = np.abs(win).mean(axis=1) if kind == "absmean" else win.std(axis=1)
    return PercentileSeries(values=vals, window_size=tau, percentile=None, source=f"volatility_{kind}")


@dataclass
class GapPositionHistogram:
    """Distribution of the signed book position of each window's maximum gap
    (+level for asks, -level for bids, levels 1..19)."""

    positions: np.ndarray
    counts: np.ndarray

    @property
    def probabilities(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    def mass_at(self, *positions: int) -> float:
        sel = np.isin(self.positions, positions)
        return float(self.probabilities[sel].sum())


def max_gap_position_histogram(gaps: GapSeries, tau: int) -> GapPositionHistogram:
    """Histogram over windows of where the maximum gap sits in the book.

    Ties resolve by scan order (earliest step, asks before bids, shallower
    level first); exact ties have measure zero for continuous books.
    """
    if tau < 1:
        raise SeriesError("tau must be >= 1")
    n_win = len(gaps) // tau
    if n_win == 0:
        raise SeriesError("series shorter than one window")
    n_levels = gaps.values.shape[2]
    win = gaps.values[: n_win * tau].reshape(n_win, tau, 2, n_levels).reshape(n_win, -1)
    flat_idx = win.argmax(axis=1)
    level = flat_idx % n_levels + 1
    side = (flat_idx // n_levels) % 2
    signed = np.where(side == ASK, level, -level)
    positions = np.concatenate((np.arange(-n_levels, 0), np.arange(1, n_levels + 1)))
    counts = np.array([(signed == pos).sum() for pos in positions])
    return GapPositionHistogram(positions=positions, counts=counts)
