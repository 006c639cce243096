"""Synthetic series and order books with known causal ground truth.

These generators exist to validate the detectors: every spec documents its
true causal structure ("none", a lagged linear coupling, a contemporaneous
coupling, an additive-noise pair, or a gap-consumption book mechanism), so
tests can measure detection and false-positive rates against it.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeneratorError
from .ingest import N_LEVELS, SnapshotSequence
from .rng import make_rng

KINDS = (
    "iid_noise",
    "ar1",
    "var_coupled",
    "contemporaneous_coupled",
    "anm_pair",
    "lagged_anm_pair",
    "synthetic_book",
)

_BURN_IN = 500


@dataclass
class GeneratorSpec:
    kind: str
    n: int
    seed: int = 0
    params: dict[str, float | str] = field(default_factory=dict)


@dataclass
class GeneratedData:
    kind: str
    truth: str
    series: tuple[np.ndarray, ...] = ()
    book: SnapshotSequence | None = None


def _param(spec: GeneratorSpec, name: str, default: float) -> float:
    return float(spec.params.get(name, default))


def _check_stationary(*phis: float) -> None:
    for phi in phis:
        if abs(phi) >= 1.0:
            raise GeneratorError(f"unstable AR coefficient {phi} (|phi| must be < 1)")


def _check_positive(**scales: float) -> None:
    for name, v in scales.items():
        if v <= 0:
            raise GeneratorError(f"{name} must be > 0, got {v}")


def _ar1(rng: np.random.Generator, n: int, phi: float, sigma: float) -> np.ndarray:
    eps = rng.normal(scale=sigma, size=n + _BURN_IN)
    x = np.empty(n + _BURN_IN)
    x[0] = eps[0] if phi == 0 else eps[0] / np.sqrt(1 - phi * phi)
    for t in range(1, n + _BURN_IN):
        x[t] = phi * x[t - 1] + eps[t]
    return x[_BURN_IN:]


def generate(spec: GeneratorSpec) -> GeneratedData:
    """Generate the series or book described by ``spec`` (seeded, pure)."""
    if spec.kind not in KINDS:
        raise GeneratorError(f"unknown generator kind: {spec.kind!r}")
    if spec.n < 1:
        raise GeneratorError("n must be >= 1")
    rng = make_rng(spec.seed)

    if spec.kind == "iid_noise":
        sigma = _param(spec, "sigma", 1.0)
        _check_positive(sigma=sigma)
        return GeneratedData(spec.kind, "none", (rng.normal(scale=sigma, size=spec.n),))

    if spec.kind == "ar1":
        phi, sigma = _param(spec, "phi", 0.5), _param(spec, "sigma", 1.0)
        _check_stationary(phi)
        _check_positive(sigma=sigma)
        return GeneratedData(spec.kind, "none", (_ar1(rng, spec.n, phi, sigma),))

    if spec.kind == "var_coupled":
        phi = _param(spec, "phi", 0.5)
        beta = _param(spec, "beta", 0.8)
        sigma = _param(spec, "sigma", 1.0)
        _check_stationary(phi)
        _check_positive(sigma=sigma)
        m = spec.n + _BURN_IN
        eps = rng.normal(scale=sigma, size=m)
        eta = rng.normal(scale=sigma, size=m)
        x = np.empty(m)
        y = np.empty(m)
        x[0], y[0] = eps[0], eta[0]
        for t in range(1, m):
            x[t] = phi * x[t - 1] + eps[t]
            y[t] = phi * y[t - 1] + beta * x[t - 1] + eta[t]
        truth = "x->y lag 1" if beta != 0 else "none"
        return GeneratedData(spec.kind, truth, (x[_BURN_IN:], y[_BURN_IN:]))

    if spec.kind == "contemporaneous_coupled":
        phi = _param(spec, "phi", 0.0)
        coupling = _param(spec, "coupling", 1.0)
        sigma = _param(spec, "sigma", 1.0)
        _check_stationary(phi)
        _check_positive(sigma=sigma)
        x = _ar1(rng, spec.n, phi, 1.0) if phi != 0 else rng.normal(size=spec.n)
        y = coupling * x + rng.normal(scale=sigma, size=spec.n)
        return GeneratedData(spec.kind, "x<->y lag 0", (x, y))

    if spec.kind == "anm_pair":
        noise = _param(spec, "noise", 0.3)
        _check_positive(noise=noise)
        x = rng.uniform(-1.0, 1.0, size=spec.n)
        y = x**3 + rng.normal(scale=noise, size=spec.n)
        return GeneratedData(spec.kind, "x->y lag 0", (x, y))

    if spec.kind == "lagged_anm_pair":
        lag = int(_param(spec, "lag", 2))
        noise = _param(spec, "noise", 0.3)
        phi = _param(spec, "phi", 0.0)
        if lag < 0:
            raise GeneratorError("lag must be >= 0")
        _check_stationary(phi)
        _check_positive(noise=noise)
        m = spec.n + lag
        if phi == 0:
            x = rng.uniform(-1.0, 1.0, size=m)
        else:
            # AR(1) with uniform innovations keeps the marginal non-Gaussian,
            # which ANM direction recovery needs.
            innov = rng.uniform(-1.0, 1.0, size=m + _BURN_IN)
            x = np.empty(m + _BURN_IN)
            x[0] = innov[0]
            for t in range(1, m + _BURN_IN):
                x[t] = phi * x[t - 1] + innov[t]
            x = x[_BURN_IN:]
        y = np.empty(m)
        y[:lag] = rng.normal(scale=noise, size=lag)
        y[lag:] = x[: m - lag] ** 3 + rng.normal(scale=noise, size=m - lag)
        return GeneratedData(spec.kind, f"x->y lag {lag}", (x[:m], y[:m]))

    return _synthetic_book(spec, rng)


def _synthetic_book(spec: GeneratorSpec, rng: np.random.Generator) -> GeneratedData:
    """Book whose mid-price moves by consuming the displayed first gap.

    The queue behind the best prices churns completely between states: every
    gap shown at step t is a fresh draw (first gaps from a wider
    distribution than deep gaps). A consume event at step t promotes the
    second level, so the mid jumps by half the first gap displayed at t-1;
    a refill inserts a new best level inside the spread. Because no gap
    value survives from one step to the next, the gap/return association is
    instantaneous by construction, with no lagged channel.
    """
    n = spec.n
    q_consume = _param(spec, "q_consume", 0.35)
    q_cancel = _param(spec, "q_cancel", 0.1)
    q_refill = _param(spec, "q_refill", 0.7)
    first_gap_mean = _param(spec, "first_gap_mean", 3.5)
    deep_gap_mean = _param(spec, "deep_gap_mean", 2.0)
    refill_mean = _param(spec, "refill_mean", 2.5)
    p0 = int(_param(spec, "p0", 50000))
    resolution = int(_param(spec, "resolution", 10))
    tick = str(spec.params.get("tick", "0.01"))
    if not 0 < q_consume + q_cancel <= 1.0:
        raise GeneratorError("q_consume + q_cancel must lie in (0, 1]")
    if not 0 < q_refill <= 1.0:
        raise GeneratorError("q_refill must lie in (0, 1]")
    if min(first_gap_mean, deep_gap_mean, refill_mean) < 1:
        raise GeneratorError("gap means are in ticks and must be >= 1")
    if p0 <= 50 * max(first_gap_mean, deep_gap_mean):
        raise GeneratorError("p0 too small to hold 20 levels per side")

    # Per-step, per-side event draws (column 0 = ask side, 1 = bid side).
    u_event = rng.random((n, 2))
    u_refill = rng.random((n, 2))
    refill_order = rng.integers(0, 2, size=n)
    first_pool = rng.geometric(1.0 / first_gap_mean, size=(n, 2)).astype(np.int64)
    refill_pool = rng.geometric(1.0 / refill_mean, size=(n, 2)).astype(np.int64)
    deep_ask = rng.geometric(1.0 / deep_gap_mean, size=(n, N_LEVELS - 2)).astype(np.int32)
    deep_bid = rng.geometric(1.0 / deep_gap_mean, size=(n, N_LEVELS - 2)).astype(np.int32)

    best_ask = np.empty(n, dtype=np.int64)
    best_bid = np.empty(n, dtype=np.int64)
    first_ask = np.empty(n, dtype=np.int64)
    first_bid = np.empty(n, dtype=np.int64)
    a, b = p0 + 1, p0 - 1
    fa, fb = int(first_pool[0, 0]), int(first_pool[0, 1])
    q_end = q_consume + q_cancel
    for t in range(n):
        if t > 0:
            # The first gap persists until it is consumed (the mid jumps by
            # the gap displayed one step earlier) or cancelled away.
            u = u_event[t, 0]
            if u < q_consume:
                a += fa
                fa = int(first_pool[t, 0])
            elif u < q_end:
                fa = int(first_pool[t, 0])
            u = u_event[t, 1]
            if u < q_consume:
                b -= fb
                fb = int(first_pool[t, 1])
            elif u < q_end:
                fb = int(first_pool[t, 1])
            # Refills land inside the spread; the old best becomes level 2,
            # so the displayed first gap is the insertion depth. Side order
            # is randomized because the second refill sees a narrower spread.
            sides = (0, 1) if refill_order[t] == 0 else (1, 0)
            for side in sides:
                if u_refill[t, side] < q_refill and a - b >= 2:
                    d = min(int(refill_pool[t, side]), a - b - 1)
                    if side == 0:
                        a -= d
                        fa = d
                    else:
                        b += d
                        fb = d
        best_ask[t] = a
        best_bid[t] = b
        first_ask[t] = fa
        first_bid[t] = fb

    ask_ticks = np.empty((n, N_LEVELS), dtype=np.int64)
    ask_ticks[:, 0] = best_ask
    ask_ticks[:, 1] = best_ask + first_ask
    ask_ticks[:, 2:] = ask_ticks[:, 1:2] + np.cumsum(deep_ask, axis=1)
    bid_ticks = np.empty((n, N_LEVELS), dtype=np.int64)
    bid_ticks[:, 0] = best_bid
    bid_ticks[:, 1] = best_bid - first_bid
    bid_ticks[:, 2:] = bid_ticks[:, 1:2] - np.cumsum(deep_bid, axis=1)
    if bid_ticks[:, -1].min() <= 0:
        raise GeneratorError("price drifted nonpositive; increase p0")

    ones = np.broadcast_to(np.float64(1.0), (n, N_LEVELS))
    book = SnapshotSequence(
        timestamps=np.arange(n, dtype=np.int64) * resolution,
        ask_ticks=ask_ticks,
        ask_volumes=ones,
        bid_ticks=bid_ticks,
        bid_volumes=ones,
        tick=tick,
        declared_resolution=resolution,
        label=f"synthetic_book_seed{spec.seed}",
    )
    return GeneratedData(spec.kind, "g<->r lag 0", book=book)
