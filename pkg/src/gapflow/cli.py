"""Command-line interface.

Subcommands mirror the pipeline stages (ingest, series, xcorr, granger,
anm, surrogate, synth, run, report). Errors print machine-readable JSON on
stderr and exit nonzero.
"""

from __future__ import annotations

import csv
import functools
import json
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .anm import lagged_anm
from .errors import ConfigError, GapflowError
from .granger import normalize_variant, windowed_granger
from .ingest import audit_coverage, parse_snapshots, write_snapshots
from .pipeline import RunConfig, parse_ints, parse_pairs, run as run_pipeline, verify_report
from .series import compute_gaps, compute_returns, compute_volatility, reduce_to_percentile
from .surrogate import AnmNullConfig, GrangerNullConfig, annotate_significance, null_ensemble
from .synthgen import GeneratorSpec, generate
from .xcorr import average_correlation


def _fail(exc: Exception, code: int) -> None:
    payload = {"error": type(exc).__name__, "message": str(exc)}
    print(json.dumps(payload), file=sys.stderr)
    sys.exit(code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except GapflowError as exc:
            _fail(exc, 1)
        except OSError as exc:
            _fail(exc, 1)

    return wrapper


def _write_csv(path: str | Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _load_series(path: str, fmt: str, tick: str, resolution: int, tau: int, percentiles, scope: str):
    result = parse_snapshots(path, fmt, tick=tick, resolution=resolution)
    seq = result.sequence
    gaps = compute_gaps(seq)
    rets = compute_returns(seq)
    out = {}
    for p in percentiles:
        out[f"g{p}"] = reduce_to_percentile(gaps, tau, p, scope=scope).values
        out[f"r{p}"] = reduce_to_percentile(rets, tau, p).values
    return seq, gaps, rets, out


@click.group()
@click.version_option(__version__)
def main() -> None:
    """Order-book gap/return statistics and causal discovery."""


@main.command()
@click.argument("files", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default="csv", show_default=True)
@click.option("--tick", default="0.01", show_default=True)
@click.option("--resolution", default=10, show_default=True, type=int)
@click.option("--out", type=click.Path(), default=None, help="Directory for normalized CSV copies.")
@handle_errors
def ingest(files, fmt, tick, resolution, out):
    """Parse and validate snapshot files; print a coverage audit."""
    reports = []
    for path in files:
        result = parse_snapshots(path, fmt, tick=tick, resolution=resolution)
        seq = result.sequence
        cov = audit_coverage(seq) if len(seq) else None
        reports.append(
            {
                "input": str(path),
                "n_input": result.n_input,
                "accepted": result.n_accepted,
                "rejected": [{"line": r.line, "reason": r.reason} for r in result.rejected[:50]],
                "n_rejected": len(result.rejected),
                "has_holes": seq.has_holes if len(seq) else None,
                "hole_fraction": cov.hole_fraction if cov else None,
                "holes": len(cov.holes) if cov else None,
                "segments": len(seq.segments()) if len(seq) else 0,
            }
        )
        if out is not None:
            outdir = Path(out)
            outdir.mkdir(parents=True, exist_ok=True)
            write_snapshots(seq, outdir / f"{Path(path).stem}_normalized.csv", "csv")
    click.echo(json.dumps(reports, indent=2))


@main.command()
@click.argument("file", type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default="csv", show_default=True)
@click.option("--tick", default="0.01", show_default=True)
@click.option("--resolution", default=10, show_default=True, type=int)
@click.option("--tau", default=60, show_default=True, type=int)
@click.option("--percentiles", default="50,99,100", show_default=True)
@click.option("--scope", type=click.Choice(["all", "first"]), default="all", show_default=True)
@click.option("--volatility", default="", help="Comma list of absmean,std to emit as well.")
@click.option("--out", required=True, type=click.Path())
@handle_errors
def series(file, fmt, tick, resolution, tau, percentiles, scope, volatility, out):
    """Emit windowed percentile series, one CSV per (source, percentile)."""
    ps = parse_ints(percentiles)
    seq, gaps, rets, _ = _load_series(file, fmt, tick, resolution, tau, (), scope)
    outdir = Path(out)
    outdir.mkdir(parents=True, exist_ok=True)
    for p in ps:
        for name, sser in (("gaps", gaps), ("returns", rets)):
            red = reduce_to_percentile(sser, tau, p, scope=scope)
            _write_csv(outdir / f"{red.source}_p{p}.csv", ["k", "value"], enumerate(red.values))
    for kind in [v for v in volatility.split(",") if v]:
        vol = compute_volatility(rets, tau, kind)
        _write_csv(outdir / f"{vol.source}.csv", ["k", "value"], enumerate(vol.values))
    click.echo(f"wrote series for tau={tau} to {outdir}")


@main.command()
@click.argument("file", type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default="csv", show_default=True)
@click.option("--tick", default="0.01", show_default=True)
@click.option("--resolution", default=10, show_default=True, type=int)
@click.option("--tau", default=60, show_default=True, type=int)
@click.option("--tau-tilde", default=100, show_default=True, type=int)
@click.option("--max-lag", default=10, show_default=True, type=int)
@click.option("--pairs", default="r100:g100,r50:g100,r50:g50", show_default=True)
@click.option("--scope", type=click.Choice(["all", "first"]), default="all", show_default=True)
@click.option("--out", required=True, type=click.Path())
@handle_errors
def xcorr(file, fmt, tick, resolution, tau, tau_tilde, max_lag, pairs, scope, out):
    """Average local correlation functions between percentile series."""
    pair_list = parse_pairs(pairs)
    wanted = sorted({int(sid[1:]) for pair in pair_list for sid in pair})
    _, _, _, series_map = _load_series(file, fmt, tick, resolution, tau, wanted, scope)
    single = len(pair_list) == 1
    outpath = Path(out)
    if not single:
        outpath.mkdir(parents=True, exist_ok=True)
    for r_id, g_id in pair_list:
        cf = average_correlation(series_map[r_id], series_map[g_id], tau_tilde, max_lag)
        dest = outpath if single else outpath / f"{r_id}_{g_id}.csv"
        _write_csv(dest, ["lag", "C", "J"], [(l, c, cf.num_windows) for l, c in zip(cf.lags, cf.values)])
    click.echo(f"wrote {len(pair_list)} correlation function(s) to {outpath}")


@main.command()
@click.argument("file", type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default="csv", show_default=True)
@click.option("--tick", default="0.01", show_default=True)
@click.option("--resolution", default=10, show_default=True, type=int)
@click.option("--tau", default="30,60,90,120", show_default=True)
@click.option("--tau-tilde", default=500, show_default=True, type=int)
@click.option("--lag", default=1, show_default=True, type=int)
@click.option("--variant", default="standard,instant", show_default=True)
@click.option("--pairs", default="g100:r100,r100:g100,g50:r50,r50:g50", show_default=True)
@click.option("--scope", type=click.Choice(["all", "first"]), default="all", show_default=True)
@click.option("--n-shuffles", default=200, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path())
@handle_errors
def granger(file, fmt, tick, resolution, tau, tau_tilde, lag, variant, pairs, scope, n_shuffles, seed, out):
    """Windowed Granger tests with surrogate significance."""
    taus = parse_ints(tau)
    pair_list = parse_pairs(pairs)
    variants = [normalize_variant(v) for v in variant.split(",")]
    wanted = sorted({int(sid[1:]) for pair in pair_list for sid in pair})
    rows = []
    for t in taus:
        _, _, _, series_map = _load_series(file, fmt, tick, resolution, t, wanted, scope)
        for cause_id, effect_id in pair_list:
            for var in variants:
                results = windowed_granger(
                    series_map[cause_id], series_map[effect_id], tau_tilde, lag, var,
                    cause_id=cause_id, effect_id=effect_id, tau=t,
                )
                ens = null_ensemble(
                    GrangerNullConfig(lag=lag, variant=var, tau_tilde=tau_tilde),
                    series_map[cause_id], series_map[effect_id], n_shuffles, seed,
                )
                key = results[0].config_key if results else None
                if results:
                    annotate_significance(results, {key: ens})
                rows.extend(
                    [
                        f"{r.cause}:{r.effect}",
                        f"{r.cause}->{r.effect}",
                        r.variant,
                        r.tau,
                        r.window,
                        r.s,
                        "" if r.significant is None else int(bool(r.significant)),
                    ]
                    for r in results
                )
    _write_csv(out, ["pair", "direction", "variant", "tau", "window", "s", "significant"], rows)
    click.echo(f"wrote {len(rows)} granger results to {out}")


@main.command()
@click.argument("file", type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default="csv", show_default=True)
@click.option("--tick", default="0.01", show_default=True)
@click.option("--resolution", default=10, show_default=True, type=int)
@click.option("--tau", default=30, show_default=True, type=int)
@click.option("--lags", default="0,1,3,7", show_default=True)
@click.option("--tau-tilde", default=500, show_default=True, type=int)
@click.option("--pairs", default="g100:r100", show_default=True)
@click.option("--scope", type=click.Choice(["all", "first"]), default="all", show_default=True)
@click.option("--n-shuffles", default=200, show_default=True, type=int)
@click.option("--windows-per-shuffle", default=1, show_default=True, type=int)
@click.option("--seed", required=True, type=int)
@click.option("--n-jobs", default=1, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path())
@handle_errors
def anm(file, fmt, tick, resolution, tau, lags, tau_tilde, pairs, scope, n_shuffles, windows_per_shuffle, seed, n_jobs, out):
    """Lagged additive-noise-model scores with surrogate significance."""
    lag_list = parse_ints(lags)
    pair_list = parse_pairs(pairs)
    wanted = sorted({int(sid[1:]) for pair in pair_list for sid in pair})
    _, _, _, series_map = _load_series(file, fmt, tick, resolution, tau, wanted, scope)
    rows = []
    for x_id, y_id in pair_list:
        for lag in lag_list:
            results = lagged_anm(
                series_map[x_id], series_map[y_id], lag, tau_tilde,
                seed=seed, x_id=x_id, y_id=y_id, n_jobs=n_jobs,
            )
            if results:
                ens = null_ensemble(
                    AnmNullConfig(lag=lag, tau_tilde=tau_tilde),
                    series_map[x_id], series_map[y_id], n_shuffles, seed,
                    windows_per_shuffle=windows_per_shuffle, n_jobs=n_jobs,
                )
                annotate_significance(results, {results[0].config_key: ens})
            rows.extend(
                [
                    f"{r.x_id}:{r.y_id}",
                    r.lag,
                    r.window,
                    r.score,
                    r.z_xy,
                    r.z_yx,
                    "" if r.significant is None else int(bool(r.significant)),
                ]
                for r in results
            )
    _write_csv(out, ["pair", "lag", "window", "S", "Zxy", "Zyx", "significant"], rows)
    click.echo(f"wrote {len(rows)} anm results to {out}")


@main.command()
@click.argument("file", type=click.Path(exists=True))
@click.option("--test", type=click.Choice(["granger", "anm"]), required=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default="csv", show_default=True)
@click.option("--tick", default="0.01", show_default=True)
@click.option("--resolution", default=10, show_default=True, type=int)
@click.option("--tau", default=30, show_default=True, type=int)
@click.option("--tau-tilde", default=500, show_default=True, type=int)
@click.option("--lag", default=1, show_default=True, type=int)
@click.option("--variant", default="standard", show_default=True)
@click.option("--pairs", default="g100:r100", show_default=True)
@click.option("--scope", type=click.Choice(["all", "first"]), default="all", show_default=True)
@click.option("--n", "n_shuffles", default=200, show_default=True, type=int)
@click.option("--windows-per-shuffle", default=None, type=int)
@click.option("--seed", default=42, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path())
@handle_errors
def surrogate(file, test, fmt, tick, resolution, tau, tau_tilde, lag, variant, pairs, scope, n_shuffles, windows_per_shuffle, seed, out):
    """Null score ensembles from shuffled copies, plus thresholds."""
    pair_list = parse_pairs(pairs)
    wanted = sorted({int(sid[1:]) for pair in pair_list for sid in pair})
    _, _, _, series_map = _load_series(file, fmt, tick, resolution, tau, wanted, scope)
    rows = []
    thresholds = []
    for a_id, b_id in pair_list:
        if test == "granger":
            cfg = GrangerNullConfig(lag=lag, variant=normalize_variant(variant), tau_tilde=tau_tilde)
        else:
            cfg = AnmNullConfig(lag=lag, tau_tilde=tau_tilde)
        ens = null_ensemble(cfg, series_map[a_id], series_map[b_id], n_shuffles, seed, windows_per_shuffle=windows_per_shuffle)
        rows.extend([f"{a_id}:{b_id}", s] for s in ens.scores)
        thresholds.append([f"{a_id}:{b_id}", ens.scores.size, ens.threshold_p01])
    _write_csv(out, ["pair", "score"], rows)
    thr_path = Path(out).with_suffix(".thresholds.csv")
    _write_csv(thr_path, ["pair", "n_scores", "threshold_p01"], thresholds)
    click.echo(f"wrote {len(rows)} null scores to {out}; thresholds to {thr_path}")


@main.command()
@click.option("--kind", type=click.Choice(["iid_noise", "ar1", "var_coupled", "contemporaneous_coupled", "anm_pair", "lagged_anm_pair", "synthetic_book"]), required=True)
@click.option("--n", required=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--param", "params", multiple=True, help="name=value generator parameter; repeatable.")
@click.option("--beta", type=float, default=None, help="Shorthand for --param beta=...")
@click.option("--phi", type=float, default=None)
@click.option("--sigma", type=float, default=None)
@click.option("--out", required=True, type=click.Path())
@handle_errors
def synth(kind, n, seed, params, beta, phi, sigma, out):
    """Generate synthetic series (CSV: t,x[,y]) or a synthetic book."""
    p: dict[str, float | str] = {}
    for item in params:
        if "=" not in item:
            raise ConfigError(f"bad --param {item!r}; expected name=value")
        name, value = item.split("=", 1)
        p[name] = value if name == "tick" else float(value)
    for name, value in (("beta", beta), ("phi", phi), ("sigma", sigma)):
        if value is not None:
            p[name] = value
    data = generate(GeneratorSpec(kind=kind, n=n, seed=seed, params=p))
    if data.book is not None:
        write_snapshots(data.book, out, "csv")
    elif len(data.series) == 1:
        _write_csv(out, ["t", "x"], [(i, v) for i, v in enumerate(data.series[0])])
    else:
        x, y = data.series
        _write_csv(out, ["t", "x", "y"], [(i, a, b) for i, (a, b) in enumerate(zip(x, y))])
    click.echo(f"wrote {kind} (n={n}, truth: {data.truth}) to {out}")


@main.command(name="run")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
@click.option("--input", "inputs", multiple=True, type=click.Path(exists=True))
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default=None)
@click.option("--tick", default=None)
@click.option("--resolution", type=int, default=None)
@click.option("--tau", "taus", default=None, help="Comma list of inner window sizes.")
@click.option("--seed", type=int, default=None)
@click.option("--n-shuffles", type=int, default=None)
@click.option("--granger-lag", type=int, default=None)
@click.option("--anm-lags", default=None)
@click.option("--n-jobs", type=int, default=None)
@click.option("--outdir", type=click.Path(), default=None)
@handle_errors
def run_cmd(config_path, inputs, fmt, tick, resolution, taus, seed, n_shuffles, granger_lag, anm_lags, n_jobs, outdir):
    """Run the full pipeline from a config file plus flag overrides."""
    overrides = {
        "inputs": list(inputs) or None,
        "fmt": fmt,
        "tick": tick,
        "resolution": resolution,
        "taus": taus,
        "seed": seed,
        "n_shuffles": n_shuffles,
        "granger_lag": granger_lag,
        "anm_lags": anm_lags,
        "n_jobs": n_jobs,
        "outdir": outdir,
    }
    if config_path is not None:
        config = RunConfig.from_yaml(config_path, **overrides)
    else:
        config = RunConfig.from_dict({k: v for k, v in overrides.items() if v is not None})
    report = run_pipeline(config)
    click.echo(f"run complete: {len(report.files)} files under {config.outdir}")


@main.command()
@click.argument("outdir", type=click.Path(exists=True))
@handle_errors
def report(outdir):
    """Print a run report and verify artifact digests."""
    rep = verify_report(outdir)
    click.echo(json.dumps(rep, indent=2, sort_keys=True))
    if rep["verification"]["mismatches"]:
        sys.exit(1)


if __name__ == "__main__":
    main()
