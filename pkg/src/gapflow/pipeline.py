"""End-to-end orchestration: ingest -> series -> tests -> tables.

A run is driven by a RunConfig (YAML file and/or CLI flags), writes every
artifact as CSV with explicit columns, and emits a report.json carrying the
config echo, the seed, per-stage manifests with content digests, and the
significance tables. Reruns with identical config and seed produce
byte-identical CSV outputs.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import __version__
from .anm import AnmResult, lagged_anm
from .errors import ConfigError, GapflowError, PipelineError, XcorrError
from .granger import GrangerResult, SeriesPanel, batch_granger, normalize_variant
from .ingest import SnapshotSequence, audit_coverage, parse_snapshots
from .linmodel import select_lag
from .rng import spawn_seeds
from .series import (
    GapSeries,
    ReturnSeries,
    compute_gaps,
    compute_returns,
    compute_volatility,
    max_gap_position_histogram,
    reduce_to_percentile,
)
from .surrogate import (
    AnmNullConfig,
    GrangerNullConfig,
    SurrogateEnsemble,
    null_ensemble,
    pooled_ensemble,
    significance_table,
)
from .xcorr import average_correlation

DEFAULT_GRANGER_PAIRS = (("g100", "r100"), ("r100", "g100"), ("g50", "r50"), ("r50", "g50"))
DEFAULT_XCORR_PAIRS = (("r100", "g100"), ("r99", "g99"), ("r50", "g50"), ("r50", "g100"))
DEFAULT_ANM_PAIRS = (("g100", "r100"),)


@dataclass
class RunConfig:
    inputs: list[str] = field(default_factory=list)
    fmt: str = "csv"
    tick: str = "0.01"
    resolution: int = 10
    taus: tuple[int, ...] = (30, 60, 90, 120)
    percentiles: tuple[int, ...] = (50, 99, 100)
    scope: str = "all"
    volatility: tuple[str, ...] = ()
    tau_tilde_corr: int = 100
    tau_tilde_caus: int = 500
    max_lag: int = 10
    granger_lag: int | None = None
    lag_range: tuple[int, int] = (1, 10)
    variants: tuple[str, ...] = ("standard", "instantaneous")
    granger_pairs: tuple[tuple[str, str], ...] = DEFAULT_GRANGER_PAIRS
    xcorr_pairs: tuple[tuple[str, str], ...] = DEFAULT_XCORR_PAIRS
    anm_pairs: tuple[tuple[str, str], ...] = DEFAULT_ANM_PAIRS
    anm_lags: tuple[int, ...] = (0, 1, 3, 7)
    anm_windows_per_shuffle: int = 1
    n_shuffles: int = 200
    p_value: float = 0.01
    seed: int = 0
    outdir: str = "gapflow-out"
    n_jobs: int = 1

    def validate(self) -> None:
        if not self.inputs:
            raise ConfigError("no input files configured")
        if self.fmt not in ("csv", "jsonl"):
            raise ConfigError(f"unknown input format {self.fmt!r}")
        for name, w in (("taus", min(self.taus, default=0)), ("tau_tilde_corr", self.tau_tilde_corr), ("tau_tilde_caus", self.tau_tilde_caus)):
            if w < 2:
                raise ConfigError(f"window size {name} must be >= 2")
        if self.tau_tilde_corr <= 2 * self.max_lag:
            raise ConfigError("tau_tilde_corr must exceed 2 * max_lag")
        if self.scope not in ("all", "first"):
            raise ConfigError(f"unknown gap scope {self.scope!r}")
        if not 0 < self.p_value < 1:
            raise ConfigError("p_value must lie in (0, 1)")
        if self.granger_lag is not None and self.granger_lag < 1:
            raise ConfigError("granger_lag must be >= 1")
        if self.n_shuffles < 100:
            raise ConfigError("n_shuffles must be >= 100")
        tuple(normalize_variant(v) for v in self.variants)

    @classmethod
    def from_yaml(cls, path: str | Path, **overrides: Any) -> "RunConfig":
        raw = yaml.safe_load(Path(path).read_text()) or {}
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a key-value mapping")
        raw.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_dict(raw)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "RunConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        kwargs: dict[str, Any] = {}
        for key, value in raw.items():
            if key == "inputs" and isinstance(value, str):
                kwargs[key] = [value]
            elif key in ("granger_pairs", "xcorr_pairs", "anm_pairs") and value is not None:
                kwargs[key] = parse_pairs(value) if isinstance(value, str) else tuple(
                    tuple(p) for p in value
                )
            elif key in ("taus", "percentiles", "anm_lags") and value is not None:
                kwargs[key] = parse_ints(value) if isinstance(value, str) else tuple(int(v) for v in value)
            elif key in ("variants", "volatility") and value is not None:
                kwargs[key] = tuple(value.split(",")) if isinstance(value, str) else tuple(value)
            elif key == "lag_range" and value is not None:
                lr = parse_ints(value) if isinstance(value, str) else tuple(int(v) for v in value)
                if len(lr) != 2:
                    raise ConfigError("lag_range must be two integers")
                kwargs[key] = lr
            elif key == "tick" and value is not None:
                kwargs[key] = str(value)
            else:
                kwargs[key] = value
        return cls(**kwargs)


def parse_pairs(text: str) -> tuple[tuple[str, str], ...]:
    """Parse 'a:b,c:d' into pair tuples."""
    pairs = []
    for item in text.split(","):
        parts = item.strip().split(":")
        if len(parts) != 2 or not all(parts):
            raise ConfigError(f"bad pair {item!r}; expected 'cause:effect'")
        pairs.append((parts[0], parts[1]))
    return tuple(pairs)


def parse_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in str(text).split(","))
    except ValueError as exc:
        raise ConfigError(f"bad integer list {text!r}") from exc


@dataclass
class Segment:
    label: str
    sequence: SnapshotSequence
    gaps: GapSeries
    returns: ReturnSeries


@dataclass
class RunReport:
    version: str
    seed: int
    config: dict[str, Any]
    stages: dict[str, Any] = field(default_factory=dict)
    files: list[dict[str, str]] = field(default_factory=list)
    tables: list[dict[str, Any]] = field(default_factory=list)
    empty: list[str] = field(default_factory=list)
    error: str | None = None

    def to_json(self) -> str:
        payload = asdict(self)
        return json.dumps(payload, indent=2, sort_keys=True)


class _Writer:
    """CSV artifact writer that records digests for the report."""

    def __init__(self, outdir: Path, report: RunReport):
        self.outdir = outdir
        self.report = report

    def write(self, relpath: str, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
        path = self.outdir / relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
        self.report.files.append({"path": relpath, "sha256": digest})
        return path


def _fmt(v: Any) -> Any:
    if isinstance(v, (np.floating, float)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _ingest_stage(config: RunConfig, report: RunReport) -> list[Segment]:
    segments: list[Segment] = []
    stage: list[dict[str, Any]] = []
    for path in config.inputs:
        result = parse_snapshots(path, config.fmt, tick=config.tick, resolution=config.resolution)
        seq = result.sequence
        cov = audit_coverage(seq) if len(seq) else None
        spans = seq.segments(min_length=max(config.taus) + 1)
        info = {
            "input": str(path),
            "accepted": result.n_accepted,
            "rejected": len(result.rejected),
            "hole_fraction": cov.hole_fraction if cov else 1.0,
            "segments": len(spans),
        }
        stage.append(info)
        multi = len(spans) > 1
        for i, (a, b) in enumerate(spans):
            label = f"{seq.label}#{i}" if multi else seq.label
            sub = seq.slice(a, b, label=label)
            segments.append(
                Segment(label=label, sequence=sub, gaps=compute_gaps(sub), returns=compute_returns(sub))
            )
    report.stages["ingest"] = stage
    if not segments:
        raise PipelineError("no usable hole-free segments after ingest")
    return segments


def _series_stage(config: RunConfig, segments: list[Segment], writer: _Writer, report: RunReport) -> list[SeriesPanel]:
    panels: list[SeriesPanel] = []
    for seg in segments:
        for tau in config.taus:
            series: dict[str, np.ndarray] = {}
            for p in config.percentiles:
                gp = reduce_to_percentile(seg.gaps, tau, p, scope=config.scope)
                rp = reduce_to_percentile(seg.returns, tau, p)
                series[f"g{p}"] = gp.values
                series[f"r{p}"] = rp.values
                writer.write(
                    f"series/{seg.label}_tau{tau}_g{p}.csv",
                    ["k", "value"],
                    list(enumerate(gp.values)),
                )
                writer.write(
                    f"series/{seg.label}_tau{tau}_r{p}.csv",
                    ["k", "value"],
                    list(enumerate(rp.values)),
                )
            for kind in config.volatility:
                vol = compute_volatility(seg.returns, tau, kind)
                series[f"vol_{kind}"] = vol.values
                writer.write(
                    f"series/{seg.label}_tau{tau}_vol_{kind}.csv",
                    ["k", "value"],
                    list(enumerate(vol.values)),
                )
            panels.append(SeriesPanel(segment=seg.label, tau=tau, series=series))
        hist = max_gap_position_histogram(seg.gaps, config.taus[0])
        writer.write(
            f"figs/fig9_maxgap_positions_{seg.label}.csv",
            ["position", "count", "probability"],
            list(zip(hist.positions, hist.counts, hist.probabilities)),
        )
        _gap_distribution_file(config, seg, writer)
    report.stages["series"] = {"panels": len(panels)}
    return panels


def _gap_distribution_file(config: RunConfig, seg: Segment, writer: _Writer) -> None:
    """Gap-size distributions of the windowed median and maximum series
    (bin edges + counts; quantization of the medians is visible here)."""
    tau = config.taus[0]
    rows = []
    for p in (50, 100):
        vals = reduce_to_percentile(seg.gaps, tau, p, scope=config.scope).values
        if vals.size == 0:
            continue
        counts, edges = np.histogram(vals, bins=40)
        rows.extend(
            [f"g{p}", edges[i], edges[i + 1], counts[i]] for i in range(counts.size)
        )
    writer.write(
        f"figs/fig10_gap_distribution_{seg.label}.csv",
        ["series", "bin_left", "bin_right", "count"],
        rows,
    )


def _xcorr_stage(config: RunConfig, panels: list[SeriesPanel], writer: _Writer, report: RunReport) -> None:
    stage: list[dict[str, Any]] = []
    for panel in panels:
        for r_id, g_id in config.xcorr_pairs:
            if r_id not in panel.series or g_id not in panel.series:
                continue
            rel = f"xcorr/{panel.segment}_tau{panel.tau}_{r_id}_{g_id}.csv"
            try:
                cf = average_correlation(
                    panel.series[r_id], panel.series[g_id], config.tau_tilde_corr, config.max_lag
                )
            except XcorrError as exc:
                writer.write(rel, ["lag", "C", "J"], [])
                report.empty.append(rel)
                stage.append({"pair": f"{r_id}:{g_id}", "segment": panel.segment, "tau": panel.tau, "status": str(exc)})
                continue
            writer.write(rel, ["lag", "C", "J"], [(l, c, cf.num_windows) for l, c in zip(cf.lags, cf.values)])
            stage.append(
                {
                    "pair": f"{r_id}:{g_id}",
                    "segment": panel.segment,
                    "tau": panel.tau,
                    "windows": cf.num_windows,
                    "excluded": cf.num_excluded,
                }
            )
    report.stages["xcorr"] = stage


def _lag_stage(config: RunConfig, panels: list[SeriesPanel], report: RunReport) -> int:
    if config.granger_lag is not None:
        report.stages["lag_selection"] = {"lag": config.granger_lag, "method": "configured"}
        return config.granger_lag
    ids = sorted({sid for c, e in config.granger_pairs for sid in (c, e)})
    windows = []
    tt = config.tau_tilde_caus
    for panel in panels:
        for sid in ids:
            v = panel.series.get(sid)
            if v is None:
                continue
            for w in range(v.shape[0] // tt):
                windows.append(v[w * tt : (w + 1) * tt])
    lags = tuple(range(config.lag_range[0], config.lag_range[1] + 1))
    if not windows:
        report.stages["lag_selection"] = {"lag": 1, "method": "default (no windows)"}
        return 1
    lag = select_lag(windows, lags)
    report.stages["lag_selection"] = {"lag": lag, "method": "min median BIC", "windows": len(windows)}
    return lag


def _write_granger(results: list[GrangerResult], writer: _Writer) -> None:
    rows = [
        [
            f"{r.cause}:{r.effect}",
            f"{r.cause}->{r.effect}",
            r.variant,
            r.tau,
            r.window,
            r.s,
            "" if r.significant is None else int(bool(r.significant)),
            r.segment,
            int(r.excluded),
        ]
        for r in results
    ]
    writer.write(
        "granger/results.csv",
        ["pair", "direction", "variant", "tau", "window", "s", "significant", "segment", "excluded"],
        rows,
    )


def _anm_stage(
    config: RunConfig,
    panels: list[SeriesPanel],
    writer: _Writer,
    report: RunReport,
) -> list[AnmResult]:
    results: list[AnmResult] = []
    tau0 = config.taus[0]
    seeds = spawn_seeds(config.seed, len(panels) * len(config.anm_pairs) * len(config.anm_lags) or 1)
    i = 0
    for panel in panels:
        if panel.tau != tau0:
            continue
        for x_id, y_id in config.anm_pairs:
            for lag in config.anm_lags:
                res = lagged_anm(
                    panel.series[x_id],
                    panel.series[y_id],
                    lag,
                    config.tau_tilde_caus,
                    seed=seeds[i],
                    x_id=x_id,
                    y_id=y_id,
                    n_jobs=config.n_jobs,
                )
                i += 1
                results.extend(res)
    report.stages["anm"] = {"results": len(results), "tau": tau0, "empty": len(results) == 0}
    if not results:
        report.empty.append("anm/results.csv")
    return results


def _surrogate_stage(
    config: RunConfig,
    panels: list[SeriesPanel],
    lag: int,
    writer: _Writer,
    report: RunReport,
) -> dict[tuple, SurrogateEnsemble]:
    """Matched null ensembles per test configuration, pooled over segments."""
    ensembles: dict[tuple, SurrogateEnsemble] = {}
    n_configs = len(config.granger_pairs) * len(config.variants) * len(config.taus) + len(
        config.anm_pairs
    ) * len(config.anm_lags)
    seeds = spawn_seeds(config.seed + 1, max(1, n_configs * max(1, len(panels))))
    counter = 0
    threshold_rows = []

    for cause_id, effect_id in config.granger_pairs:
        for variant in (normalize_variant(v) for v in config.variants):
            for tau in config.taus:
                cfg = GrangerNullConfig(lag=lag, variant=variant, tau_tilde=config.tau_tilde_caus)
                parts = []
                for panel in panels:
                    if panel.tau != tau:
                        continue
                    parts.append(
                        null_ensemble(
                            cfg,
                            panel.series[cause_id],
                            panel.series[effect_id],
                            config.n_shuffles,
                            seeds[counter],
                            n_jobs=config.n_jobs,
                        )
                    )
                    counter += 1
                if not parts:
                    continue
                ens = pooled_ensemble(parts)
                key = ("granger", cause_id, effect_id, variant, tau)
                ensembles[key] = ens
                if ens.scores.size:
                    threshold_rows.append(
                        ["granger", f"{cause_id}:{effect_id}", variant, tau, "", ens.scores.size, ens.threshold_p01]
                    )

    tau0 = config.taus[0]
    for x_id, y_id in config.anm_pairs:
        for alag in config.anm_lags:
            cfg = AnmNullConfig(lag=alag, tau_tilde=config.tau_tilde_caus)
            parts = []
            for panel in panels:
                if panel.tau != tau0:
                    continue
                parts.append(
                    null_ensemble(
                        cfg,
                        panel.series[x_id],
                        panel.series[y_id],
                        config.n_shuffles,
                        seeds[counter],
                        windows_per_shuffle=config.anm_windows_per_shuffle,
                        n_jobs=config.n_jobs,
                    )
                )
                counter += 1
            if not parts:
                continue
            ens = pooled_ensemble(parts)
            ensembles[("anm", x_id, y_id, alag)] = ens
            if ens.scores.size:
                lo, hi = ens.two_tailed(config.p_value) if alag == 0 else (float("nan"), ens.critical_value(config.p_value, "upper"))
                threshold_rows.append(["anm", f"{x_id}:{y_id}", "", tau0, alag, ens.scores.size, hi])

    for key, ens in sorted(ensembles.items(), key=lambda kv: repr(kv[0])):
        name = "_".join(str(k) for k in key if k not in (None, ""))
        writer.write(f"surrogate/null_{name}.csv", ["score"], [(s,) for s in ens.scores])
    writer.write(
        "surrogate/thresholds.csv",
        ["test", "pair", "variant", "tau", "lag", "n_scores", "threshold_p01"],
        threshold_rows,
    )
    report.stages["surrogate"] = {"configurations": len(ensembles), "n_shuffles": config.n_shuffles}
    return ensembles


def _score_histograms(
    results_granger: list[GrangerResult],
    results_anm: list[AnmResult],
    ensembles: dict[tuple, SurrogateEnsemble],
    writer: _Writer,
) -> None:
    """Figure-parity files: score histograms of data vs matched null."""
    by_key: dict[tuple, list[float]] = {}
    for r in results_granger:
        if not r.excluded:
            by_key.setdefault(r.config_key, []).append(r.s)
    for r in results_anm:
        if not r.excluded:
            by_key.setdefault(r.config_key, []).append(r.score)
    for key in sorted(by_key, key=repr):
        ens = ensembles.get(key)
        if ens is None or ens.scores.size == 0:
            continue
        data = np.array(by_key[key])
        pooled = np.concatenate((data, ens.scores))
        counts_d, edges = np.histogram(data, bins=30, range=(pooled.min(), pooled.max()))
        counts_n, _ = np.histogram(ens.scores, bins=edges)
        if key[0] == "granger":
            _, c, e, variant, tau = key
            fig = "fig6" if variant == "standard" else "fig7"
            rel = f"figs/{fig}_granger_{variant}_{c}_to_{e}_tau{tau}.csv"
        else:
            _, x_id, y_id, alag = key
            rel = f"figs/fig8_anm_{x_id}_{y_id}_lag{alag}.csv"
        writer.write(
            rel,
            ["bin_left", "bin_right", "count_data", "count_null"],
            [
                (edges[i], edges[i + 1], counts_d[i], counts_n[i])
                for i in range(counts_d.size)
            ],
        )


def _window_map_file(config: RunConfig, panels: list[SeriesPanel], writer: _Writer) -> None:
    rows = []
    tt = config.tau_tilde_caus
    for panel in panels:
        n = min(v.shape[0] for v in panel.series.values()) if panel.series else 0
        for w in range(n // tt):
            rows.append([panel.segment, panel.tau, w, w * tt, (w + 1) * tt])
    writer.write("granger/windows.csv", ["segment", "tau", "window", "start", "stop"], rows)


def run(config: RunConfig) -> RunReport:
    """Execute the full pipeline; always writes report.json to the outdir."""
    config.validate()
    outdir = Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    report = RunReport(version=__version__, seed=config.seed, config=asdict(config))
    writer = _Writer(outdir, report)
    try:
        segments = _ingest_stage(config, report)
        panels = _series_stage(config, segments, writer, report)
        _xcorr_stage(config, panels, writer, report)
        lag = _lag_stage(config, panels, report)
        ensembles = _surrogate_stage(config, panels, lag, writer, report)

        granger_results = batch_granger(
            panels, config.granger_pairs, config.tau_tilde_caus, lag, config.variants
        )
        report.stages["granger"] = {"results": len(granger_results), "lag": lag}
        if not granger_results:
            report.empty.append("granger/results.csv")
        anm_results = _anm_stage(config, panels, writer, report)

        rows = significance_table(list(granger_results) + list(anm_results), ensembles, config.p_value)
        for row in rows:
            report.tables.append(
                {
                    "key": list(row.key),
                    "n": row.n,
                    "n_significant": row.n_significant,
                    "n_excluded": row.n_excluded,
                    "fraction": row.fraction,
                }
            )
        _write_granger(granger_results, writer)
        anm_rows = [
            [
                f"{r.x_id}:{r.y_id}",
                r.lag,
                r.window,
                r.score,
                r.z_xy,
                r.z_yx,
                "" if r.significant is None else int(bool(r.significant)),
                int(r.excluded),
            ]
            for r in anm_results
        ]
        writer.write(
            "anm/results.csv",
            ["pair", "lag", "window", "S", "Zxy", "Zyx", "significant", "excluded"],
            anm_rows,
        )
        writer.write(
            "tables/significance.csv",
            ["test", "key", "n", "n_significant", "n_excluded", "fraction"],
            [
                [t["key"][0], ":".join(str(k) for k in t["key"][1:]), t["n"], t["n_significant"], t["n_excluded"], t["fraction"]]
                for t in report.tables
            ],
        )
        _score_histograms(granger_results, anm_results, ensembles, writer)
        _window_map_file(config, panels, writer)
    except GapflowError as exc:
        report.error = f"{type(exc).__name__}: {exc}"
        (outdir / "report.json").write_text(report.to_json())
        raise PipelineError(str(exc)) from exc
    (outdir / "report.json").write_text(report.to_json())
    return report


def verify_report(outdir: str | Path) -> dict[str, Any]:
    """Load report.json and re-check the digests of every listed file."""
    outdir = Path(outdir)
    path = outdir / "report.json"
    if not path.exists():
        raise PipelineError(f"no report.json under {outdir}")
    report = json.loads(path.read_text())
    mismatches = []
    for entry in report.get("files", []):
        p = outdir / entry["path"]
        if not p.exists():
            mismatches.append({"path": entry["path"], "problem": "missing"})
            continue
        digest = hashlib.sha256(p.read_bytes()).hexdigest()
        if digest != entry["sha256"]:
            mismatches.append({"path": entry["path"], "problem": "digest mismatch"})
    report["verification"] = {"checked": len(report.get("files", [])), "mismatches": mismatches}
    return report
