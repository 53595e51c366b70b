#!/usr/bin/env python3
"""
REPAC Toolkit - Command line
Synthesis, detection, spectral inspection and benchmarking.

Exit codes: 0 success, 1 validation error, 2 I/O error, 3 acceptance gate failed.
"""

import functools
import math
import sys
from pathlib import Path
from typing import Any, Dict, Optional

import click
import structlog

from baseline import BaselineError
from bench import BenchError, monte_carlo
from config import MODULE_ERRORS, ConfigError, RunConfig, load_run_config
from detectors import DetectorError, create_detector
from dsp_core import DspError, welch_psd
from log_config import configure_logging
from report_generator import (ReportGenerator, psd_frame, write_intervals_csv, write_json,
                              write_profile_csv)
from repac import RepacResult
from signal_io import SignalFileError, read_signal, record_hash, write_record
from synth import synthesize

logger = structlog.get_logger(__name__)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_GATE = 3

VALIDATION_ERRORS = MODULE_ERRORS + (ConfigError, SignalFileError, DetectorError, BaselineError, BenchError)


def _fail(message: str, code: int) -> None:
    click.echo(f"❌ {message}", err=True)
    sys.exit(code)


def handle_errors(command):
    """Map library errors to exit codes"""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except VALIDATION_ERRORS as exc:
            _fail(str(exc), EXIT_VALIDATION)
        except OSError as exc:
            _fail(f"I/O error: {exc}", EXIT_IO)

    return wrapper


def _load(config_path: Optional[str], overrides: Dict[str, Any]) -> RunConfig:
    return load_run_config(config_path, overrides)


config_option = click.option("--config", "config_path", type=click.Path(dir_okay=False),
                             help="YAML run configuration (defaults to $REPAC_CONFIG)")


@click.group(name="repac")
@click.option("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR (defaults to $REPAC_LOG_LEVEL)")
def cli(log_level: Optional[str]):
    """REPAC phase-amplitude coupling toolkit"""
    try:
        configure_logging(log_level)
    except ValueError as exc:
        _fail(str(exc), EXIT_VALIDATION)


@cli.command()
@config_option
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False), help="Signal file to write")
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), help="Optional CSV copy with labels")
@click.option("--fl", "f_L", type=float, help="LFO frequency (Hz)")
@click.option("--fh", "f_H", type=float, help="HFO frequency (Hz)")
@click.option("--m", "m", type=float, help="Modulation index in [0, 1]")
@click.option("--L", "L", type=float, help="Event length (s)")
@click.option("--snr", "snr_db", type=float, help="Event-support SNR (dB)")
@click.option("--duration", type=float, help="Record length (s)")
@click.option("--fs", type=float, help="Sampling rate (Hz)")
@click.option("--events", "n_events", type=int, help="Number of PAC events")
@click.option("--seed", type=int, help="Random seed")
@handle_errors
def synth(config_path, out_path, csv_path, **flags):
    """Synthesize a pink-noise record with embedded PAC events"""
    run_config = _load(config_path, {f"synth.{k}": v for k, v in flags.items()})
    record = synthesize(run_config.synth.build())
    write_record(out_path, record, csv_path=csv_path, config_echo=run_config.echo())

    click.echo(f"✅ Wrote {out_path}: {len(record.signal)} samples, "
               f"{len(record.truth.event_intervals)} event(s)")
    if record.realized_snr_db is not None:
        click.echo(f"📊 Realized SNR: {record.realized_snr_db:.2f} dB | hash {record_hash(record.signal)}")


@cli.command()
@click.argument("signal_path", type=click.Path(dir_okay=False))
@config_option
@click.option("--detector", type=click.Choice(["repac", "baseline"]), default="repac", show_default=True)
@click.option("--fs", type=float, help="Sampling rate when the file has no sidecar")
@click.option("--out-dir", type=click.Path(file_okay=False), help="Report directory (defaults to the signal's)")
@click.option("--seed", type=int, help="Surrogate seed for the baseline detector")
@handle_errors
def detect(signal_path, config_path, detector, fs, out_dir, seed):
    """Run a detector on a signal file"""
    run_config = _load(config_path, {"baseline.seed": seed})
    signal, _ = read_signal(signal_path, fs=fs)
    section = run_config.repac if detector == "repac" else run_config.baseline
    detection = create_detector(detector, section.build()).detect(signal)
    result = detection.result

    out = Path(out_dir) if out_dir else Path(signal_path).parent
    out.mkdir(parents=True, exist_ok=True)
    stem = out / f"{Path(signal_path).name}.{detector}"
    generator = ReportGenerator()
    write_json(f"{stem}.json", generator.generate_json_report(result, source=str(signal_path),
                                                              config_echo=run_config.echo()))
    write_intervals_csv(f"{stem}.intervals.csv", result.pac_intervals, result.fs)
    if isinstance(result, RepacResult):
        write_profile_csv(f"{stem}.profile.csv", result)
    summary = generator.generate_text_summary(result)
    Path(f"{stem}.summary.txt").write_text(summary)
    click.echo(summary, nl=False)


@cli.command()
@click.argument("signal_path", type=click.Path(dir_okay=False))
@config_option
@click.option("--out", "out_path", type=click.Path(dir_okay=False), help="CSV path (defaults to <signal>.psd.csv)")
@click.option("--fs", type=float, help="Sampling rate when the file has no sidecar")
@click.option("--segment-s", type=float, help="Welch segment length (s)")
@click.option("--overlap", type=float, help="Segment overlap fraction")
@click.option("--fmin", type=float, help="Lowest frequency to export")
@click.option("--fmax", type=float, help="Highest frequency to export")
@handle_errors
def psd(signal_path, config_path, out_path, fs, segment_s, overlap, fmin, fmax):
    """Welch power spectral density as CSV (freq, power)"""
    run_config = _load(config_path, {"psd.segment_s": segment_s, "psd.overlap": overlap,
                                     "psd.fmin": fmin, "psd.fmax": fmax})
    settings = run_config.psd
    signal, _ = read_signal(signal_path, fs=fs)
    segment_len = min(len(signal), int(round(settings.segment_s * signal.fs)))
    frame = psd_frame(welch_psd(signal, segment_len, settings.overlap), settings.fmin, settings.fmax)
    if frame.empty:
        raise DspError(f"no PSD bins between {settings.fmin} and {settings.fmax} Hz")

    out_path = out_path or f"{signal_path}.psd.csv"
    frame.to_csv(out_path, index=False)
    peak = frame.loc[frame["power"].idxmax()]
    click.echo(f"✅ Wrote {out_path}: {len(frame)} bins, peak at {peak['freq']:.2f} Hz")


@cli.command()
@config_option
@click.option("--out-dir", required=True, type=click.Path(file_okay=False), help="Report directory")
@click.option("--master-seed", type=int, help="Seed all trial seeds derive from")
@click.option("--trials", "trials_per_cell", type=int, help="Trials per grid cell")
@click.option("--n-jobs", type=int, help="Parallel workers (joblib)")
@handle_errors
def bench(config_path, out_dir, master_seed, trials_per_cell, n_jobs):
    """Monte Carlo comparison of REPAC and the baseline"""
    run_config = _load(config_path, {"bench.master_seed": master_seed,
                                     "bench.trials_per_cell": trials_per_cell,
                                     "bench.n_jobs": n_jobs})
    grid = run_config.bench.build()
    total = len(grid.cells())

    def progress(cell, cells):
        parts = []
        for _, row in cells.iterrows():
            value = row["sensitivity"]
            shown = "n/a" if math.isnan(value) else f"{value:.3f}"
            parts.append(f"{row['detector']} sens={shown}")
        click.echo(f"📊 cell {cell.index + 1}/{total} (snr={cell.snr_db:g} dB, m={cell.m:g}, L={cell.L:g} s): "
                   + ", ".join(parts))

    report = monte_carlo(grid, run_config.repac.build(), run_config.baseline.build(),
                         gates=run_config.bench.build_gates(), config_echo=run_config.echo(),
                         progress=progress)
    paths = ReportGenerator().write_bench_report(report, out_dir)
    click.echo(f"✅ Wrote {paths['cells']} ({report.failures} trial failure(s))")

    for verdict in report.verdicts:
        click.echo(f"{'✅' if verdict.passed else '❌'} {verdict.message}")
    if not report.passed:
        _fail("acceptance gate(s) failed", EXIT_GATE)


main = cli

if __name__ == "__main__":
    cli()
