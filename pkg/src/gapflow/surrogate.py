"""Shuffle-surrogate null ensembles and empirical significance.

Both series of a pair are shuffled independently (the stricter null): any
structure that depends on temporal order is destroyed while the marginal
distributions are kept. Each null score is produced by the identical test
pipeline run on the shuffled copies.

Critical values use a nearest-rank rule stated from the tail: the p=0.01
one-tailed threshold is the m-th largest null score with m = floor(0.01 *
n_scores), at least 1. With 100 null scores that is the maximum, and the
exceedance probability of a fresh null draw is m/(n_scores+1), which keeps
empirical significance calibrated at the nominal level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from joblib import Parallel, delayed

from .anm import AnmResult, lagged_anm
from .errors import SurrogateError
from .granger import GrangerResult, normalize_variant, windowed_granger
from .rng import make_rng, spawn_seeds

MIN_SHUFFLES = 100


def shuffle(series: np.ndarray, seed: int | np.random.Generator) -> np.ndarray:
    """Uniform random permutation of a series (multiset preserved)."""
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    series = np.asarray(series)
    if series.shape[0] == 0:
        raise SurrogateError("cannot shuffle an empty series")
    return series[rng.permutation(series.shape[0])]


@dataclass(frozen=True)
class GrangerNullConfig:
    lag: int
    variant: str = "standard"
    tau_tilde: int = 500

    def scores(self, x: np.ndarray, y: np.ndarray, max_windows: int | None, seed: int) -> np.ndarray:
        res = windowed_granger(x, y, self.tau_tilde, self.lag, self.variant, max_windows=max_windows)
        return np.array([r.s for r in res if not r.excluded])


@dataclass(frozen=True)
class AnmNullConfig:
    lag: int = 0
    tau_tilde: int = 500
    gp_kwargs: tuple = ()  # dict items, kept hashable

    def scores(self, x: np.ndarray, y: np.ndarray, max_windows: int | None, seed: int) -> np.ndarray:
        res = lagged_anm(
            x,
            y,
            self.lag,
            self.tau_tilde,
            seed=seed,
            gp_kwargs=dict(self.gp_kwargs),
            max_windows=max_windows,
        )
        return np.array([r.score for r in res if not r.excluded])


@dataclass
class SurrogateEnsemble:
    """Null score distribution for one test configuration."""

    scores: np.ndarray
    n_shuffles: int
    seed: int
    config: GrangerNullConfig | AnmNullConfig | None = None
    n_excluded: int = 0

    def critical_value(self, p: float = 0.01, tail: str = "upper") -> float:
        if self.scores.size == 0:
            raise SurrogateError("ensemble has no scores")
        if not 0 < p < 1:
            raise SurrogateError("p must lie in (0, 1)")
        m = max(1, math.floor(p * self.scores.size))
        ordered = np.sort(self.scores)
        return float(ordered[-m] if tail == "upper" else ordered[m - 1])

    @property
    def threshold_p01(self) -> float:
        return self.critical_value(0.01, "upper")

    def two_tailed(self, p: float = 0.01) -> tuple[float, float]:
        return self.critical_value(p / 2, "lower"), self.critical_value(p / 2, "upper")


def null_ensemble(
    config: GrangerNullConfig | AnmNullConfig,
    x: np.ndarray,
    y: np.ndarray,
    n_shuffles: int,
    seed: int,
    windows_per_shuffle: int | None = None,
    n_jobs: int = 1,
) -> SurrogateEnsemble:
    """Scores of the identical test run on independently shuffled copies.

    ``windows_per_shuffle`` caps how many windows are harvested from each
    shuffled copy (useful to bound the cost of GP-based tests); None takes
    all full windows.
    """
    if n_shuffles < MIN_SHUFFLES:
        raise SurrogateError(f"n_shuffles must be >= {MIN_SHUFFLES}")
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    seeds = spawn_seeds(seed, n_shuffles)

    def one(child_seed: int) -> np.ndarray:
        rng = make_rng(child_seed)
        xs = shuffle(x, rng)
        ys = shuffle(y, rng)
        return config.scores(xs, ys, windows_per_shuffle, child_seed)

    if n_jobs == 1:
        chunks = [one(s) for s in seeds]
    else:
        chunks = Parallel(n_jobs=n_jobs)(delayed(one)(s) for s in seeds)
    scores = np.concatenate(chunks) if chunks else np.empty(0)
    expected = sum(c.shape[0] for c in chunks)
    return SurrogateEnsemble(
        scores=scores,
        n_shuffles=n_shuffles,
        seed=seed,
        config=config,
        n_excluded=0 if scores.size == expected else expected - scores.size,
    )


def pooled_ensemble(ensembles: Sequence[SurrogateEnsemble]) -> SurrogateEnsemble:
    """Pool null scores from per-segment ensembles of one configuration."""
    if not ensembles:
        raise SurrogateError("no ensembles to pool")
    return SurrogateEnsemble(
        scores=np.concatenate([e.scores for e in ensembles]),
        n_shuffles=sum(e.n_shuffles for e in ensembles),
        seed=ensembles[0].seed,
        config=ensembles[0].config,
        n_excluded=sum(e.n_excluded for e in ensembles),
    )


def annotate_significance(
    results: Iterable[GrangerResult | AnmResult],
    ensembles: Mapping[tuple, SurrogateEnsemble],
    p: float = 0.01,
) -> None:
    """Set ``significant`` on each result from its matched ensemble.

    Granger scores use a one-tailed upper test. ANM scores are two-tailed
    at lag 0; at positive lags only positive scores are meaningful
    (negative ones would claim causation backward in time), so the lower
    tail is suppressed.
    """
    for r in results:
        if r.excluded:
            r.significant = None
            continue
        key = r.config_key
        if key not in ensembles:
            raise SurrogateError(f"no matched ensemble for configuration {key}")
        ens = ensembles[key]
        if isinstance(r, AnmResult):
            if r.lag == 0:
                lo, hi = ens.two_tailed(p)
                r.significant = bool(r.score > hi or r.score < lo)
            else:
                r.significant = bool(r.score > ens.critical_value(p, "upper"))
        else:
            r.significant = bool(r.s > ens.critical_value(p, "upper"))


@dataclass
class SignificanceRow:
    key: tuple
    n: int
    n_significant: int
    n_excluded: int

    @property
    def fraction(self) -> float:
        return self.n_significant / self.n if self.n else 0.0


def significance_table(
    results: Sequence[GrangerResult | AnmResult],
    ensembles: Mapping[tuple, SurrogateEnsemble],
    p: float = 0.01,
) -> list[SignificanceRow]:
    """Fraction of significant results per configuration, with counts."""
    annotate_significance(results, ensembles, p)
    groups: dict[tuple, SignificanceRow] = {}
    for r in results:
        row = groups.setdefault(r.config_key, SignificanceRow(r.config_key, 0, 0, 0))
        if r.excluded:
            row.n_excluded += 1
            continue
        row.n += 1
        if r.significant:
            row.n_significant += 1
    return [groups[k] for k in sorted(groups, key=repr)]
