"""Standard and instantaneous Granger causality effect sizes.

The restricted model is an AR(L) of the effect series; the full model adds
lags 1..L of the cause (standard) or 0..L (instantaneous). The effect size
is the non-normalized statistic

    s = (SSR_restricted - SSR_full) / SSR_full

compared against shuffle-surrogate nulls rather than F tables; the classic
F statistic is available as a diagnostic only.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .errors import ModelError
from .linmodel import ARFit, fit_ar

VARIANTS = ("standard", "instantaneous")

_ALIASES = {"standard": "standard", "instant": "instantaneous", "instantaneous": "instantaneous"}


def normalize_variant(name: str) -> str:
    try:
        return _ALIASES[name.strip().lower()]
    except KeyError:
        raise ModelError(f"unknown Granger variant: {name!r}") from None


@dataclass
class GrangerResult:
    cause: str
    effect: str
    variant: str
    lag: int
    s: float
    ssr_restricted: float
    ssr_full: float
    n_obs: int
    tau: int | None = None
    segment: str | None = None
    window: int = 0
    excluded: bool = False
    significant: bool | None = None

    @property
    def config_key(self) -> tuple:
        return ("granger", self.cause, self.effect, self.variant, self.tau)


@dataclass
class SeriesPanel:
    """Percentile series of one segment at one inner window size tau,
    keyed by short ids like g100, r50."""

    segment: str
    tau: int
    series: Mapping[str, np.ndarray]


def granger_test(
    effect: np.ndarray,
    cause: np.ndarray,
    lag: int,
    variant: str = "standard",
    cause_id: str = "x",
    effect_id: str = "y",
    tau: int | None = None,
    segment: str | None = None,
    window: int = 0,
) -> GrangerResult:
    """Effect size for one window pair; degenerate fits mark the result
    excluded so batch tallies can skip it."""
    variant = normalize_variant(variant)
    effect = np.asarray(effect, dtype=float).ravel()
    cause = np.asarray(cause, dtype=float).ravel()
    if effect.shape != cause.shape:
        raise ModelError("cause and effect windows must have equal length")
    restricted = fit_ar(effect, lag)
    full = fit_ar(effect, lag, x=cause, include_instant=(variant == "instantaneous"))
    excluded = restricted.ridged or full.ridged or not (restricted.ok and full.ok)
    if full.ok and restricted.ok and full.ssr > 0.0:
        s = (restricted.ssr - full.ssr) / full.ssr
    else:
        s = float("nan")
        excluded = True
    return GrangerResult(
        cause=cause_id,
        effect=effect_id,
        variant=variant,
        lag=lag,
        s=s,
        ssr_restricted=restricted.ssr,
        ssr_full=full.ssr,
        n_obs=full.n_obs,
        tau=tau,
        segment=segment,
        window=window,
        excluded=excluded,
    )


def f_statistic(result: GrangerResult) -> tuple[float, float]:
    """Classic F statistic and its nominal p-value (diagnostic only; the
    paper-style analysis relies on surrogate thresholds instead)."""
    n = result.n_obs
    k = result.lag + (1 if result.variant == "instantaneous" else 0)
    df2 = n - 2 * result.lag - 1 - (1 if result.variant == "instantaneous" else 0)
    if df2 <= 0 or not np.isfinite(result.s):
        return float("nan"), float("nan")
    f = result.s * df2 / k
    return f, float(stats.f.sf(f, k, df2))


def windowed_granger(
    cause: np.ndarray,
    effect: np.ndarray,
    tau_tilde: int,
    lag: int,
    variant: str = "standard",
    cause_id: str = "x",
    effect_id: str = "y",
    tau: int | None = None,
    segment: str | None = None,
    max_windows: int | None = None,
) -> list[GrangerResult]:
    """One test per disjoint window of length tau_tilde (trailing partial
    window discarded). Series are truncated to their common length."""
    cause = np.asarray(cause, dtype=float).ravel()
    effect = np.asarray(effect, dtype=float).ravel()
    n = min(cause.shape[0], effect.shape[0])
    n_windows = n // tau_tilde
    if max_windows is not None:
        n_windows = min(n_windows, max_windows)
    out = []
    for w in range(n_windows):
        sl = slice(w * tau_tilde, (w + 1) * tau_tilde)
        out.append(
            granger_test(
                effect[sl],
                cause[sl],
                lag,
                variant,
                cause_id=cause_id,
                effect_id=effect_id,
                tau=tau,
                segment=segment,
                window=w,
            )
        )
    return out


def batch_granger(
    panels: Iterable[SeriesPanel],
    pairs: Sequence[tuple[str, str]],
    tau_tilde: int,
    lag: int,
    variants: Sequence[str] = VARIANTS,
) -> list[GrangerResult]:
    """All (segment, tau, cause->effect, variant, window) results.

    ``pairs`` are directional (cause_id, effect_id) referencing panel
    series ids.
    """
    variants = [normalize_variant(v) for v in variants]
    results: list[GrangerResult] = []
    for panel in panels:
        for cause_id, effect_id in pairs:
            cause = panel.series[cause_id]
            effect = panel.series[effect_id]
            for variant in variants:
                results.extend(
                    windowed_granger(
                        cause,
                        effect,
                        tau_tilde,
                        lag,
                        variant,
                        cause_id=cause_id,
                        effect_id=effect_id,
                        tau=panel.tau,
                        segment=panel.segment,
                    )
                )
    return results
