#!/usr/bin/env python3
"""
REPAC Toolkit - Report Generator
Serializes detection results and benchmark reports to JSON, CSV and text summaries
"""

import json
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd
import structlog

from baseline import BaselineResult
from bench import BenchReport
from dsp_core import Band, PsdEstimate
from mvl import profile_to_frame
from repac import RepacResult

logger = structlog.get_logger(__name__)

GENERATOR_VERSION = "1.0.0"

DetectionResult = Union[RepacResult, BaselineResult]
PathLike = Union[str, Path]


@dataclass
class ReportSection:
    """A section within a text summary"""
    title: str
    lines: List[str]
    priority: int


def _clean(value: Any) -> Any:
    """Make numpy scalars, arrays and NaN JSON-safe"""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, Band):
        return [value.lo, value.hi]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return None if math.isnan(value) or math.isinf(value) else value
    return value


def _intervals_payload(intervals: Sequence[tuple], fs: float) -> List[Dict[str, Any]]:
    return [
        {"start": int(s), "end": int(e), "start_s": s / fs, "end_s": e / fs}
        for s, e in intervals
    ]


class ReportGenerator:
    """Generates structured and human-readable reports from detector outputs"""

    def result_to_dict(self, result: DetectionResult) -> Dict[str, Any]:
        """Result schema shared by both detectors: bands, frequencies, intervals, final MVL"""
        if isinstance(result, RepacResult):
            body = {
                "detector": "repac",
                "status": result.status,
                "message": result.message,
                "bands": {"lfo": result.refined_lfo, "hfo": result.refined_hfo},
                "frequencies": {"f_L_hat": result.f_L_hat, "f_H_hat": result.f_H_hat,
                                "f_H_comb": result.f_H_comb},
                "lfo_bandwidth": result.refined_lfo.width,
                "hfo_bandwidth": result.hfo_bandwidth,
                "final_mvl": result.final_mvl,
                "coupling_phase": result.coupling_phase,
                "low_confidence": result.low_confidence,
                "lfo_refinement": {
                    "threshold": result.lfo_refinement.threshold,
                    "selected_bands": [result.profile.bands[k] for k in result.lfo_refinement.selected],
                },
                "comb_teeth": result.comb_teeth,
                "candidate_intervals": _intervals_payload(result.candidate_intervals, result.fs),
            }
        elif isinstance(result, BaselineResult):
            body = {
                "detector": "baseline",
                "status": result.status,
                "bands": {"lfo": result.lfo_band, "hfo": result.hfo_band},
                "frequencies": {"f_L_hat": None, "f_H_hat": None},
                "final_mvl": result.observed_mvl,
                "coupling_phase": result.coupling_phase,
                "surrogate_threshold": result.threshold,
                "p_value": result.p_value,
                "significant": result.significant,
                "window_threshold": result.window_threshold,
                "n_surrogates": int(result.surrogate_mvl.size),
            }
        else:
            raise TypeError(f"Unsupported result type {type(result).__name__}")

        body.update({
            "fs": result.fs,
            "n_samples": result.n_samples,
            "pac_intervals": _intervals_payload(result.pac_intervals, result.fs),
        })
        return _clean(body)

    def generate_json_report(self, result: DetectionResult, source: str = "",
                             config_echo: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        return {
            "report_metadata": {
                "generated_at": datetime.now(timezone.utc).isoformat(),
                "generator_version": GENERATOR_VERSION,
                "report_type": "pac_detection",
                "source": source,
            },
            "result": self.result_to_dict(result),
            "config": _clean(config_echo or {}),
        }

    def generate_text_summary(self, result: DetectionResult) -> str:
        sections = [self._header_section(result)]
        if isinstance(result, RepacResult):
            sections.append(self._repac_section(result))
        else:
            sections.append(self._baseline_section(result))
        sections.append(self._intervals_section(result))
        return self._combine_sections(sections)

    def _header_section(self, result: DetectionResult) -> ReportSection:
        detector = "REPAC" if isinstance(result, RepacResult) else "Baseline"
        icon = "✅" if result.pac_intervals else "➖"
        return ReportSection("header", [
            f"{icon} {detector}: {len(result.pac_intervals)} PAC interval(s) in "
            f"{result.n_samples / result.fs:.2f} s ({result.status})",
            f"📊 Final MVL: {result.final_mvl:.6f}",
        ], 1)

    def _repac_section(self, result: RepacResult) -> ReportSection:
        lines = [
            f"LFO band: {result.refined_lfo.lo:g}-{result.refined_lfo.hi:g} Hz "
            f"(bandwidth {result.refined_lfo.width:g} Hz)"
            + (" [low confidence]" if result.low_confidence else ""),
            f"f_L estimate: {result.f_L_hat:.3f} Hz",
        ]
        if result.refined_hfo is not None:
            lines.extend([
                f"HFO band: {result.refined_hfo.lo:.2f}-{result.refined_hfo.hi:.2f} Hz "
                f"(bandwidth {result.hfo_bandwidth:.2f} Hz)",
                f"f_H estimate: {result.f_H_hat:.3f} Hz (comb peak {result.f_H_comb:.3f} Hz)",
            ])
        if result.message:
            lines.append(f"Note: {result.message}")
        return ReportSection("repac", lines, 2)

    def _baseline_section(self, result: BaselineResult) -> ReportSection:
        return ReportSection("baseline", [
            f"LFO band: {result.lfo_band.lo:g}-{result.lfo_band.hi:g} Hz, "
            f"HFO band: {result.hfo_band.lo:g}-{result.hfo_band.hi:g} Hz",
            f"Surrogate threshold: {result.threshold:.6f} (p = {result.p_value:.4f})",
        ], 2)

    def _intervals_section(self, result: DetectionResult) -> ReportSection:
        lines = [f"[{s / result.fs:.3f} s, {e / result.fs:.3f} s)" for s, e in result.pac_intervals]
        return ReportSection("intervals", lines or ["(none)"], 3)

    def _combine_sections(self, sections: List[ReportSection]) -> str:
        sections.sort(key=lambda s: s.priority)
        out = []
        for section in sections:
            if section.title == "intervals":
                out.append("Intervals:")
                out.extend(f"  {line}" for line in section.lines)
            else:
                out.extend(section.lines)
        return "\n".join(out) + "\n"

    # -----------------------------------------------------------------------
    # Benchmark reports
    # -----------------------------------------------------------------------

    def bench_to_dict(self, report: BenchReport) -> Dict[str, Any]:
        return _clean({
            "report_metadata": {
                "generated_at": report.generated_at,
                "generator_version": GENERATOR_VERSION,
                "report_type": "pac_benchmark",
            },
            "config": report.config,
            "cells": report.cells.to_dict(orient="records"),
            "gates": [
                {"gate": v.gate.describe(), "value": v.value, "passed": v.passed}
                for v in report.verdicts
            ],
            "passed": report.passed,
            "trial_failures": report.failures,
        })

    def bench_summary_text(self, report: BenchReport) -> str:
        lines = [
            f"📊 Benchmark: {len(report.grid.cells())} cell(s) x {report.grid.trials_per_cell} trial(s), "
            f"master seed {report.grid.master_seed}",
            f"{'snr_db':>7} {'m':>5} {'L':>5} {'detector':>9} {'sens':>7} {'spec':>7} {'acc':>7} "
            f"{'trials':>6} {'fail':>5}",
        ]
        for _, row in report.cells.iterrows():
            lines.append(
                f"{row['snr_db']:>7g} {row['m']:>5g} {row['L']:>5g} {row['detector']:>9} "
                f"{_fmt(row['sensitivity'])} {_fmt(row['specificity'])} {_fmt(row['accuracy'])} "
                f"{int(row['trials']):>6} {int(row['failures']):>5}"
            )
        for verdict in report.verdicts:
            lines.append(f"{'✅' if verdict.passed else '❌'} {verdict.message}")
        return "\n".join(lines) + "\n"

    def write_bench_report(self, report: BenchReport, out_dir: PathLike) -> Dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "cells": out / "bench_cells.csv",
            "trials": out / "bench_trials.csv",
            "json": out / "bench_report.json",
            "summary": out / "bench_summary.txt",
        }
        report.cells.to_csv(paths["cells"], index=False)
        report.trials.to_csv(paths["trials"], index=False)
        with open(paths["json"], "w") as f:
            json.dump(self.bench_to_dict(report), f, indent=2)
        paths["summary"].write_text(self.bench_summary_text(report))
        logger.info("bench_report_written", out_dir=str(out))
        return paths


def _fmt(value: Optional[float]) -> str:
    return f"{'n/a':>7}" if value is None or pd.isna(value) else f"{value:>7.4f}"


def write_intervals_csv(path: PathLike, intervals: Sequence[tuple], fs: float) -> Path:
    frame = pd.DataFrame(_intervals_payload(intervals, fs), columns=["start", "end", "start_s", "end_s"])
    frame.to_csv(path, index=False)
    return Path(path)


def write_profile_csv(path: PathLike, result: RepacResult) -> Path:
    profile_to_frame(result.profile).to_csv(path, index=False)
    return Path(path)


def psd_frame(psd: PsdEstimate, fmin: Optional[float] = None, fmax: Optional[float] = None) -> pd.DataFrame:
    """(freq, power) rows, optionally restricted to [fmin, fmax]"""
    frame = pd.DataFrame({"freq": psd.freqs, "power": psd.power})
    if fmin is not None:
        frame = frame[frame["freq"] >= fmin]
    if fmax is not None:
        frame = frame[frame["freq"] <= fmax]
    return frame


def write_json(path: PathLike, payload: Dict[str, Any]) -> Path:
    with open(path, "w") as f:
        json.dump(_clean(payload), f, indent=2)
    return Path(path)
