"""Order-book snapshot ingestion.

Parses wide-CSV or JSONL snapshot files (timestamp + 20 ask and 20 bid
levels) into validated, array-backed sequences. Prices are held as scaled
integers (tick counts) so that downstream code never touches a float price
grid; conversion to floating point happens only at the log-gap step.

Every input record is either accepted or reported with its line number and
a reason; nothing is silently dropped.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import IO, Iterator

import numpy as np
import pandas as pd

from .errors import IngestError

N_LEVELS = 20

CSV_HEADER = "ts," + ",".join(
    [f"a{i},av{i}" for i in range(1, N_LEVELS + 1)]
    + [f"b{i},bv{i}" for i in range(1, N_LEVELS + 1)]
)
N_FIELDS = 1 + 4 * N_LEVELS

# Tolerance (in tick units) for classifying a parsed price as on-grid.
# Round-trip float64 parsing keeps any sane decimal within ~1e-8 ticks of
# its true value, so 1e-6 separates grid from off-grid without touching
# exact Decimal arithmetic on the hot path.
_TICK_TOL = 1e-6


def tick_parts(tick: str | float | Decimal) -> tuple[int, int]:
    """Decompose a tick size into (mantissa, decimals): 0.01 -> (1, 2)."""
    try:
        d = Decimal(str(tick)).normalize()
    except InvalidOperation as exc:
        raise IngestError(f"invalid tick size: {tick!r}") from exc
    if d <= 0:
        raise IngestError(f"tick size must be positive, got {tick!r}")
    sign, digits, exponent = d.as_tuple()
    mantissa = int("".join(map(str, digits)))
    if exponent > 0:
        mantissa *= 10**exponent
        exponent = 0
    return mantissa, -exponent


@dataclass(frozen=True)
class BookSnapshot:
    """One timestamped book state: 20 (price, volume) levels per side."""

    timestamp: int
    asks: tuple[tuple[float, float], ...]
    bids: tuple[tuple[float, float], ...]


@dataclass
class SnapshotSequence:
    """Time-ordered snapshots stored as arrays, prices in integer ticks."""

    timestamps: np.ndarray
    ask_ticks: np.ndarray
    ask_volumes: np.ndarray
    bid_ticks: np.ndarray
    bid_volumes: np.ndarray
    tick: str = "0.01"
    declared_resolution: int = 10
    label: str = ""

    def __len__(self) -> int:
        return int(self.timestamps.shape[0])

    def _price(self, ticks: np.ndarray) -> np.ndarray:
        m, d = tick_parts(self.tick)
        return (ticks * m) / 10.0**d

    def ask_prices(self) -> np.ndarray:
        return self._price(self.ask_ticks)

    def bid_prices(self) -> np.ndarray:
        return self._price(self.bid_ticks)

    def __getitem__(self, i: int) -> BookSnapshot:
        ap = self._price(self.ask_ticks[i])
        bp = self._price(self.bid_ticks[i])
        return BookSnapshot(
            timestamp=int(self.timestamps[i]),
            asks=tuple(zip(ap.tolist(), self.ask_volumes[i].tolist())),
            bids=tuple(zip(bp.tolist(), self.bid_volumes[i].tolist())),
        )

    @property
    def deltas(self) -> np.ndarray:
        return np.diff(self.timestamps)

    @property
    def has_holes(self) -> bool:
        return bool(np.any(self.deltas != self.declared_resolution))

    def segments(self, min_length: int = 2) -> list[tuple[int, int]]:
        """Maximal hole-free index ranges [start, stop). Analyses run on
        these, preserving data the month-level discard policy would lose."""
        n = len(self)
        if n == 0:
            return []
        breaks = np.flatnonzero(self.deltas != self.declared_resolution)
        starts = np.concatenate(([0], breaks + 1))
        stops = np.concatenate((breaks + 1, [n]))
        return [(int(a), int(b)) for a, b in zip(starts, stops) if b - a >= min_length]

    def slice(self, start: int, stop: int, label: str | None = None) -> "SnapshotSequence":
        return SnapshotSequence(
            timestamps=self.timestamps[start:stop],
            ask_ticks=self.ask_ticks[start:stop],
            ask_volumes=self.ask_volumes[start:stop],
            bid_ticks=self.bid_ticks[start:stop],
            bid_volumes=self.bid_volumes[start:stop],
            tick=self.tick,
            declared_resolution=self.declared_resolution,
            label=self.label if label is None else label,
        )


@dataclass(frozen=True)
class RejectedRecord:
    line: int
    reason: str


@dataclass
class ParseResult:
    sequence: SnapshotSequence
    rejected: list[RejectedRecord] = field(default_factory=list)
    n_input: int = 0

    @property
    def n_accepted(self) -> int:
        return len(self.sequence)


@dataclass(frozen=True)
class CoverageHole:
    after_index: int
    start_ts: int
    end_ts: int
    n_missing: int
    irregular: bool = False


@dataclass
class CoverageReport:
    holes: list[CoverageHole]
    hole_fraction: float
    n_states: int
    n_missing: int


def _read_text(source: str | Path | bytes | IO) -> str:
    if isinstance(source, (str, Path)):
        return Path(source).read_text()
    if isinstance(source, bytes):
        return source.decode()
    data = source.read()
    if isinstance(data, bytes):
        return data.decode()
    return data


def _validate_rows(
    ts: np.ndarray,
    prices: np.ndarray,
    volumes: np.ndarray,
    tick: str,
) -> tuple[np.ndarray, np.ndarray, list[str | None]]:
    """Vectorized record validation.

    ``prices``/``volumes`` are (n, 40) with asks in columns 0..19 and bids
    in 20..39. Returns (keep mask, price ticks, per-row reason or None).
    The first failing check wins, mirroring how a scalar validator would
    report.
    """
    n = ts.shape[0]
    mantissa, decimals = tick_parts(tick)
    reasons: list[str | None] = [None] * n

    def mark(mask: np.ndarray, reason: str) -> None:
        for i in np.flatnonzero(mask):
            if reasons[i] is None:
                reasons[i] = reason

    finite = np.isfinite(ts) & np.all(np.isfinite(prices), axis=1) & np.all(np.isfinite(volumes), axis=1)
    mark(~finite, "non-numeric field")
    # Work on a sanitized copy so later vector checks cannot warn on NaN.
    p = np.where(np.isfinite(prices), prices, 1.0)
    v = np.where(np.isfinite(volumes), volumes, 0.0)
    t = np.where(np.isfinite(ts), ts, 0.0)

    mark(t != np.rint(t), "non-integer timestamp")
    mark(np.any(p <= 0, axis=1), "nonpositive price")
    mark(np.any(v < 0, axis=1), "negative volume")

    u = p * (10.0**decimals / mantissa)
    ticks = np.rint(u)
    mark(np.any(u > 2.0**52, axis=1), "price out of range")
    mark(np.any(np.abs(u - ticks) > _TICK_TOL, axis=1), "off-tick price")

    ticks = ticks.astype(np.int64)
    ask, bid = ticks[:, :N_LEVELS], ticks[:, N_LEVELS:]
    mark(np.any(np.diff(ask, axis=1) <= 0, axis=1), "unsorted ask levels")
    mark(np.any(np.diff(bid, axis=1) >= 0, axis=1), "unsorted bid levels")
    mark(ask[:, 0] <= bid[:, 0], "crossed book")

    keep = np.array([r is None for r in reasons])
    # Timestamps must be strictly increasing across accepted rows.
    if np.any(keep):
        idx = np.flatnonzero(keep)
        tv = t[idx].astype(np.int64)
        running = np.empty(idx.size, dtype=np.int64)
        np.maximum.accumulate(tv, out=running)
        bad = np.zeros(idx.size, dtype=bool)
        bad[1:] = tv[1:] <= running[:-1]
        for i in idx[bad]:
            reasons[i] = "non-increasing timestamp"
        keep = np.array([r is None for r in reasons])
    return keep, ticks, reasons


def _assemble(
    ts: np.ndarray,
    prices: np.ndarray,
    volumes: np.ndarray,
    lines: np.ndarray,
    tick: str,
    resolution: int,
    label: str,
) -> ParseResult:
    keep, ticks, reasons = _validate_rows(ts, prices, volumes, tick)
    rejected = [
        RejectedRecord(line=int(lines[i]), reason=reasons[i])
        for i in range(ts.shape[0])
        if reasons[i] is not None
    ]
    seq = SnapshotSequence(
        timestamps=ts[keep].astype(np.int64),
        ask_ticks=ticks[keep, :N_LEVELS],
        ask_volumes=volumes[keep, :N_LEVELS],
        bid_ticks=ticks[keep, N_LEVELS:],
        bid_volumes=volumes[keep, N_LEVELS:],
        tick=tick,
        declared_resolution=resolution,
        label=label,
    )
    return ParseResult(sequence=seq, rejected=rejected, n_input=int(ts.shape[0]))


def _numeric_matrix(rows: list[str]) -> np.ndarray:
    """Numeric parse of pre-filtered CSV rows.

    Fast path parses straight to float64; any non-numeric token drops to a
    coercing pass that leaves NaN markers for per-row diagnostics.
    """
    buf = io.StringIO("\n".join(rows))
    try:
        return pd.read_csv(buf, header=None, dtype=np.float64, na_filter=False, engine="c").to_numpy(
            dtype=float
        )
    except (ValueError, TypeError):
        buf.seek(0)
        df = pd.read_csv(buf, header=None, dtype=str, na_filter=False, engine="c")
        return df.apply(pd.to_numeric, errors="coerce").to_numpy(dtype=float)


def _parse_csv(text: str, tick: str, resolution: int, label: str) -> ParseResult:
    lines = text.split("\n")
    rows: list[str] = []
    row_lines: list[int] = []
    header: str | None = None
    header_line = 0
    pre_rejected: list[RejectedRecord] = []
    for lineno, raw in enumerate(lines, start=1):
        s = raw.rstrip("\r")
        if not s.strip():
            continue
        if header is None:
            header = s
            header_line = lineno
            continue
        if s.count(",") != N_FIELDS - 1:
            pre_rejected.append(RejectedRecord(line=lineno, reason="bad field count"))
            continue
        rows.append(s)
        row_lines.append(lineno)
    if header is None:
        raise IngestError("empty input")
    if header.strip() != CSV_HEADER:
        raise IngestError(f"bad header on line {header_line}: expected {CSV_HEADER!r}")
    if not rows and not pre_rejected:
        raise IngestError("empty input: no data rows")

    if rows:
        num = _numeric_matrix(rows)
        ts = num[:, 0]
        ask = num[:, 1 : 1 + 2 * N_LEVELS]
        bid = num[:, 1 + 2 * N_LEVELS :]
        prices = np.column_stack((ask[:, 0::2], bid[:, 0::2]))
        volumes = np.column_stack((ask[:, 1::2], bid[:, 1::2]))
        result = _assemble(ts, prices, volumes, np.array(row_lines), tick, resolution, label)
    else:
        result = ParseResult(sequence=_empty_sequence(tick, resolution, label))
    result.rejected = sorted(result.rejected + pre_rejected, key=lambda r: r.line)
    result.n_input = len(rows) + len(pre_rejected)
    return result


def _empty_sequence(tick: str, resolution: int, label: str) -> SnapshotSequence:
    return SnapshotSequence(
        timestamps=np.empty(0, dtype=np.int64),
        ask_ticks=np.empty((0, N_LEVELS), dtype=np.int64),
        ask_volumes=np.empty((0, N_LEVELS)),
        bid_ticks=np.empty((0, N_LEVELS), dtype=np.int64),
        bid_volumes=np.empty((0, N_LEVELS)),
        tick=tick,
        declared_resolution=resolution,
        label=label,
    )


def _parse_jsonl(text: str, tick: str, resolution: int, label: str) -> ParseResult:
    ts_list: list[float] = []
    price_rows: list[list[float]] = []
    vol_rows: list[list[float]] = []
    row_lines: list[int] = []
    pre_rejected: list[RejectedRecord] = []
    n_rows = 0
    for lineno, raw in enumerate(text.split("\n"), start=1):
        s = raw.strip()
        if not s:
            continue
        n_rows += 1
        try:
            obj = json.loads(s)
            ts = obj["ts"]
            asks = obj["asks"]
            bids = obj["bids"]
        except (json.JSONDecodeError, TypeError, KeyError):
            pre_rejected.append(RejectedRecord(line=lineno, reason="invalid json"))
            continue
        if (
            not isinstance(asks, list)
            or not isinstance(bids, list)
            or len(asks) != N_LEVELS
            or len(bids) != N_LEVELS
            or any(not isinstance(lv, list) or len(lv) != 2 for lv in asks + bids)
        ):
            pre_rejected.append(RejectedRecord(line=lineno, reason="bad field count"))
            continue
        flat = [lv[0] for lv in asks] + [lv[0] for lv in bids]
        vols = [lv[1] for lv in asks] + [lv[1] for lv in bids]
        if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in flat + vols) or not isinstance(
            ts, (int, float)
        ):
            pre_rejected.append(RejectedRecord(line=lineno, reason="non-numeric field"))
            continue
        ts_list.append(float(ts))
        price_rows.append([float(v) for v in flat])
        vol_rows.append([float(v) for v in vols])
        row_lines.append(lineno)
    if n_rows == 0:
        raise IngestError("empty input")
    if price_rows:
        result = _assemble(
            np.array(ts_list),
            np.array(price_rows),
            np.array(vol_rows),
            np.array(row_lines),
            tick,
            resolution,
            label,
        )
    else:
        result = ParseResult(sequence=_empty_sequence(tick, resolution, label))
    result.rejected = sorted(result.rejected + pre_rejected, key=lambda r: r.line)
    result.n_input = n_rows
    return result


def parse_snapshots(
    source: str | Path | bytes | IO,
    fmt: str = "csv",
    tick: str | float = "0.01",
    resolution: int = 10,
    label: str = "",
) -> ParseResult:
    """Parse a snapshot file into a validated SnapshotSequence.

    Raises IngestError for unusable input as a whole (empty file, bad
    header, bad tick). Per-record problems are reported in ``rejected``
    with line numbers; count(input) == count(accepted) + count(rejected).
    """
    tick = str(tick)
    tick_parts(tick)  # validate early
    if isinstance(source, (str, Path)) and not label:
        label = Path(source).stem
    text = _read_text(source)
    if fmt == "csv":
        return _parse_csv(text, tick, resolution, label)
    if fmt == "jsonl":
        return _parse_jsonl(text, tick, resolution, label)
    raise IngestError(f"unknown format: {fmt!r}")


def audit_coverage(seq: SnapshotSequence) -> CoverageReport:
    """Report holes in temporal coverage against the declared resolution."""
    if len(seq) == 0:
        raise IngestError("empty sequence")
    res = seq.declared_resolution
    holes: list[CoverageHole] = []
    total_missing = 0
    deltas = seq.deltas
    for i in np.flatnonzero(deltas != res):
        delta = int(deltas[i])
        missing = max(0, -(-delta // res) - 1)  # ceil(delta/res) - 1
        irregular = delta % res != 0
        holes.append(
            CoverageHole(
                after_index=int(i),
                start_ts=int(seq.timestamps[i]),
                end_ts=int(seq.timestamps[i + 1]),
                n_missing=missing,
                irregular=irregular,
            )
        )
        total_missing += missing
    frac = total_missing / (len(seq) + total_missing) if total_missing else 0.0
    return CoverageReport(
        holes=holes,
        hole_fraction=frac,
        n_states=len(seq),
        n_missing=total_missing,
    )


def _price_frame(seq: SnapshotSequence) -> pd.DataFrame:
    cols: dict[str, np.ndarray] = {"ts": seq.timestamps}
    ap, bp = seq.ask_prices(), seq.bid_prices()
    for i in range(N_LEVELS):
        cols[f"a{i + 1}"] = ap[:, i]
        cols[f"av{i + 1}"] = seq.ask_volumes[:, i]
    for i in range(N_LEVELS):
        cols[f"b{i + 1}"] = bp[:, i]
        cols[f"bv{i + 1}"] = seq.bid_volumes[:, i]
    return pd.DataFrame(cols)


def write_snapshots(seq: SnapshotSequence, dest: str | Path | IO, fmt: str = "csv") -> None:
    """Serialize a sequence; re-parsing the output reproduces it exactly.

    Prices are emitted from their tick counts (so they are exact decimals);
    volumes use shortest round-trip float formatting.
    """
    if fmt == "csv":
        _price_frame(seq).to_csv(dest, index=False)
        return
    if fmt == "jsonl":
        own = isinstance(dest, (str, Path))
        fh = open(dest, "w") if own else dest
        try:
            ap, bp = seq.ask_prices(), seq.bid_prices()
            for i in range(len(seq)):
                rec = {
                    "ts": int(seq.timestamps[i]),
                    "asks": [[float(p), float(v)] for p, v in zip(ap[i], seq.ask_volumes[i])],
                    "bids": [[float(p), float(v)] for p, v in zip(bp[i], seq.bid_volumes[i])],
                }
                fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
        finally:
            if own:
                fh.close()
        return
    raise IngestError(f"unknown format: {fmt!r}")


def iter_snapshots(seq: SnapshotSequence) -> Iterator[BookSnapshot]:
    for i in range(len(seq)):
        yield seq[i]
