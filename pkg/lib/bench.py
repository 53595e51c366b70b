#!/usr/bin/env python3
"""
REPAC Toolkit - Benchmark
Monte Carlo comparison of REPAC and the fixed-band baseline over grids of SNR,
modulation index and event length, scored per sample against ground truth.
"""

import itertools
import time
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog
from joblib import Parallel, delayed

from baseline import BaselineConfig
from detectors import BaselineDetector, DetectorPanel, RepacDetector
from repac import RepacConfig
from signal_io import record_hash
from synth import GroundTruth, PacParams, SynthesisError, synthesize

logger = structlog.get_logger(__name__)

METRICS = ("sensitivity", "specificity", "accuracy", "event_sensitivity")
FREQUENCY_POLICIES = ("fixed", "uniform")
GATE_AXES = {"snr": "snr_db", "m": "m", "L": "L"}


class BenchError(Exception):
    """Raised for invalid grids, gates or scoring inputs"""
    pass


@dataclass(frozen=True)
class BenchGrid:
    """Parameter grid and trial settings of a benchmark run"""
    snr_values: Tuple[float, ...] = (-18.0, -10.0, -5.0, 0.0)
    m_values: Tuple[float, ...] = (0.1, 0.5, 1.0)
    L_values: Tuple[float, ...] = (1.5, 3.0, 5.0)
    f_L_policy: str = "uniform"
    f_H_policy: str = "uniform"
    f_L: float = 5.0
    f_H: float = 80.0
    f_L_range: Tuple[float, float] = (4.0, 10.0)
    f_H_range: Tuple[float, float] = (60.0, 100.0)
    trials_per_cell: int = 20
    master_seed: int = 0
    duration: float = 60.0
    fs: float = 1000.0
    event_density: float = 0.1
    n_jobs: int = 1

    def validate(self) -> "BenchGrid":
        for name in ("snr_values", "m_values", "L_values"):
            if not getattr(self, name):
                raise BenchError(f"{name} must not be empty")
        if self.trials_per_cell < 1:
            raise BenchError(f"trials_per_cell must be >= 1, got {self.trials_per_cell}")
        for name in ("f_L_policy", "f_H_policy"):
            if getattr(self, name) not in FREQUENCY_POLICIES:
                raise BenchError(f"{name} must be one of {FREQUENCY_POLICIES}, got {getattr(self, name)!r}")
        for name in ("f_L_range", "f_H_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise BenchError(f"{name} must satisfy 0 < lo <= hi, got {(lo, hi)}")
        if not 0 < self.event_density < 0.8:
            raise BenchError(f"event_density must be in (0, 0.8), got {self.event_density}")
        if self.duration <= 0 or self.fs <= 0:
            raise BenchError("duration and fs must be positive")
        return self

    def cells(self) -> List["BenchCell"]:
        combos = itertools.product(self.snr_values, self.m_values, self.L_values)
        return [BenchCell(index=k, snr_db=snr, m=m, L=L) for k, (snr, m, L) in enumerate(combos)]

    def event_count(self, L: float) -> int:
        """k = max(1, round(density * duration / L)), capped by the 80% occupancy rule"""
        count = max(1, int(round(self.event_density * self.duration / L)))
        while count > 1 and count * L > 0.8 * self.duration:
            count -= 1
        return count

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class BenchCell:
    index: int
    snr_db: float
    m: float
    L: float


@dataclass(frozen=True)
class ConfusionCounts:
    """Per-sample confusion matrix"""
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise BenchError(f"confusion counts must be nonnegative, got {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp,
                               self.tn + other.tn, self.fn + other.fn)


@dataclass(frozen=True)
class AcceptanceGate:
    """Bound on a pooled metric, optionally as a difference against a second detector

    With `increasing_in` set the gate instead requires the per-point mean of the
    metric to be non-decreasing along that grid axis, allowing drops of at most
    `slack`; its value is the worst step.
    """
    detector: str
    metric: str
    min: Optional[float] = None
    max: Optional[float] = None
    minus: Optional[str] = None
    snr: Optional[float] = None
    m: Optional[float] = None
    L: Optional[float] = None
    increasing_in: Optional[str] = None
    slack: float = 0.0

    def validate(self) -> "AcceptanceGate":
        if self.metric not in METRICS:
            raise BenchError(f"gate metric must be one of {METRICS}, got {self.metric!r}")
        if self.increasing_in is not None:
            if self.increasing_in not in GATE_AXES:
                raise BenchError(f"increasing_in must be one of {tuple(GATE_AXES)}, got {self.increasing_in!r}")
            if self.minus:
                raise BenchError("a monotonicity gate cannot take a difference")
            if self.slack < 0:
                raise BenchError(f"slack must be >= 0, got {self.slack}")
            return self
        if self.min is None and self.max is None:
            raise BenchError("gate needs at least one of min or max")
        return self

    def describe(self) -> str:
        lhs = f"{self.detector}.{self.metric}"
        if self.minus:
            lhs += f" - {self.minus}.{self.metric}"
        scope = ", ".join(f"{k}={v:g}" for k, v in (("snr", self.snr), ("m", self.m), ("L", self.L)) if v is not None)
        if self.increasing_in is not None:
            text = f"{lhs} non-decreasing in {self.increasing_in} (slack {self.slack:g})"
        else:
            bounds = " and ".join(b for b in (
                f">= {self.min:g}" if self.min is not None else "",
                f"<= {self.max:g}" if self.max is not None else "",
            ) if b)
            text = f"{lhs} {bounds}"
        return text + (f" [{scope}]" if scope else "")


@dataclass(frozen=True)
class GateVerdict:
    gate: AcceptanceGate
    value: Optional[float]
    passed: bool
    message: str


@dataclass(eq=False)
class BenchReport:
    """Per-cell and per-trial tables with gate verdicts and the config echo"""
    grid: BenchGrid
    cells: pd.DataFrame
    trials: pd.DataFrame
    verdicts: List[GateVerdict] = field(default_factory=list)
    config: Dict = field(default_factory=dict)
    generated_at: str = ""

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    @property
    def failures(self) -> int:
        return int(self.trials["failed"].sum()) if not self.trials.empty else 0


# ---------------------------------------------------------------------------
# Scoring
# ---------------------------------------------------------------------------

def detection_mask(detected: Sequence[Tuple[int, int]], n: int) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    for start, end in detected:
        if not 0 <= start < end <= n:
            raise BenchError(f"detected interval [{start}, {end}) outside record of {n} samples")
        mask[start:end] = True
    return mask


def score(truth: GroundTruth, detected: Sequence[Tuple[int, int]]) -> ConfusionCounts:
    """Per-sample comparison of truth labels against detected-interval membership"""
    labels = truth.labels
    predicted = detection_mask(detected, labels.size)
    return ConfusionCounts(
        tp=int(np.sum(labels & predicted)),
        fp=int(np.sum(~labels & predicted)),
        tn=int(np.sum(~labels & ~predicted)),
        fn=int(np.sum(labels & ~predicted)),
    )


def event_hits(truth: GroundTruth, detected: Sequence[Tuple[int, int]]) -> int:
    """Events overlapped by at least one detected sample"""
    predicted = detection_mask(detected, truth.labels.size)
    return sum(1 for start, end in truth.event_intervals if predicted[start:end].any())


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den > 0 else None


def metrics(c: ConfusionCounts) -> Dict[str, Optional[float]]:
    """Sensitivity, specificity and accuracy; None where the denominator is 0"""
    return {
        "sensitivity": _ratio(c.tp, c.tp + c.fn),
        "specificity": _ratio(c.tn, c.tn + c.fp),
        "accuracy": _ratio(c.tp + c.tn, c.total),
    }


def check_accuracy_identity(row) -> bool:
    """accuracy >= specificity * (tn + fp) / total for one report row"""
    total = row["tp"] + row["fp"] + row["tn"] + row["fn"]
    specificity = row["specificity"]
    if total == 0 or specificity is None or pd.isna(specificity):
        return True
    return row["accuracy"] + 1e-12 >= specificity * (row["tn"] + row["fp"]) / total


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------

def trial_seeds(master_seed: int, cell_index: int, trial: int) -> Tuple[int, int, np.random.Generator]:
    """(record seed, surrogate seed, frequency rng) derived from the trial coordinates"""
    sequence = np.random.SeedSequence([master_seed, cell_index, trial])
    record_seed, surrogate_seed = (int(s) for s in sequence.generate_state(2))
    return record_seed, surrogate_seed, np.random.default_rng(sequence.spawn(1)[0])


def _draw_frequencies(grid: BenchGrid, rng: np.random.Generator) -> Tuple[float, float]:
    f_L = grid.f_L if grid.f_L_policy == "fixed" else float(rng.uniform(*grid.f_L_range))
    f_H = grid.f_H if grid.f_H_policy == "fixed" else float(rng.uniform(*grid.f_H_range))
    return f_L, f_H


def _or_nan(value: Optional[float]) -> float:
    return np.nan if value is None else float(value)


def run_trial(grid: BenchGrid, cell: BenchCell, trial: int, repac_cfg: RepacConfig,
              baseline_cfg: BaselineConfig) -> List[dict]:
    """Synthesize one record and score both detectors on it; one row per detector"""
    record_seed, surrogate_seed, rng = trial_seeds(grid.master_seed, cell.index, trial)
    f_L, f_H = _draw_frequencies(grid, rng)
    common = dict(cell=cell.index, trial=trial, snr_db=cell.snr_db, m=cell.m, L=cell.L,
                  f_L=f_L, f_H=f_H, seed=record_seed)
    names = (RepacDetector.name, BaselineDetector.name)

    try:
        record = synthesize(PacParams(
            f_L=f_L, f_H=f_H, m=cell.m, L=cell.L, snr_db=cell.snr_db, duration=grid.duration,
            fs=grid.fs, n_events=grid.event_count(cell.L), seed=record_seed,
        ))
    except Exception as exc:
        logger.warning("trial_synthesis_failed", cell=cell.index, trial=trial, error=str(exc),
                       error_type=type(exc).__name__, exc_info=not isinstance(exc, SynthesisError))
        return [dict(common, detector=name, record_hash="", tp=0, fp=0, tn=0, fn=0, events=0,
                     events_hit=0, score=np.nan, f_L_hat=np.nan, f_H_hat=np.nan,
                     failed=True, error=str(exc)) for name in names]

    digest = record_hash(record.signal)
    panel = DetectorPanel([
        RepacDetector(repac_cfg),
        BaselineDetector(replace(baseline_cfg, seed=surrogate_seed)),
    ])
    outcomes = panel.run(record.signal, record_hash=digest)
    logger.debug("trial_done", cell=cell.index, trial=trial, record=digest)

    rows = []
    for name in names:
        detection = outcomes[name]
        counts = score(record.truth, detection.intervals)
        rows.append(dict(
            common,
            detector=name,
            record_hash=digest,
            tp=counts.tp, fp=counts.fp, tn=counts.tn, fn=counts.fn,
            events=len(record.truth.event_intervals),
            events_hit=event_hits(record.truth, detection.intervals),
            score=detection.score,
            f_L_hat=_or_nan(detection.metadata.get("f_L_hat")),
            f_H_hat=_or_nan(detection.metadata.get("f_H_hat")),
            failed=detection.failed,
            error=detection.error or "",
        ))
    return rows


# ---------------------------------------------------------------------------
# Aggregation and gates
# ---------------------------------------------------------------------------

def _trial_metric_columns(trials: pd.DataFrame) -> pd.DataFrame:
    frame = trials.copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        frame["sensitivity"] = frame["tp"] / (frame["tp"] + frame["fn"]).replace(0, np.nan)
        frame["specificity"] = frame["tn"] / (frame["tn"] + frame["fp"]).replace(0, np.nan)
        total = frame[["tp", "fp", "tn", "fn"]].sum(axis=1).replace(0, np.nan)
        frame["accuracy"] = (frame["tp"] + frame["tn"]) / total
    return frame


def _pooled_row(counts: ConfusionCounts, events: int, hits: int) -> dict:
    row = {k: (np.nan if v is None else v) for k, v in metrics(counts).items()}
    row["event_sensitivity"] = hits / events if events else np.nan
    return row


def summarize_cells(trials: pd.DataFrame) -> pd.DataFrame:
    """One row per cell and detector: pooled metrics plus mean and sd of per-trial metrics"""
    frame = _trial_metric_columns(trials)
    rows = []
    for (cell, detector), group in frame.groupby(["cell", "detector"], sort=True):
        counts = ConfusionCounts(*(int(group[k].sum()) for k in ("tp", "fp", "tn", "fn")))
        row = {
            "cell": cell, "snr_db": group["snr_db"].iloc[0], "m": group["m"].iloc[0],
            "L": group["L"].iloc[0], "detector": detector,
        }
        row.update(_pooled_row(counts, int(group["events"].sum()), int(group["events_hit"].sum())))
        for metric in ("sensitivity", "specificity", "accuracy"):
            row[f"{metric}_mean"] = group[metric].mean()
            row[f"{metric}_sd"] = group[metric].std(ddof=1) if len(group) > 1 else 0.0
        row.update(trials=len(group), failures=int(group["failed"].sum()),
                   events=int(group["events"].sum()), events_hit=int(group["events_hit"].sum()),
                   tp=counts.tp, fp=counts.fp, tn=counts.tn, fn=counts.fn)
        rows.append(row)

    cells = pd.DataFrame(rows)
    violations = [i for i, row in cells.iterrows() if not check_accuracy_identity(row)]
    if violations:
        raise BenchError(f"accuracy identity violated on report rows {violations}")
    return cells


def _gate_subset(cells: pd.DataFrame, detector: str, gate: AcceptanceGate) -> pd.DataFrame:
    subset = cells[cells["detector"] == detector]
    for column, value in (("snr_db", gate.snr), ("m", gate.m), ("L", gate.L)):
        if value is not None:
            subset = subset[np.isclose(subset[column], value)]
    return subset


def _pooled_metric(cells: pd.DataFrame, detector: str, gate: AcceptanceGate) -> Optional[float]:
    subset = _gate_subset(cells, detector, gate)
    if subset.empty:
        return None
    counts = ConfusionCounts(*(int(subset[k].sum()) for k in ("tp", "fp", "tn", "fn")))
    if gate.metric == "event_sensitivity":
        events = int(subset["events"].sum())
        return int(subset["events_hit"].sum()) / events if events else None
    return metrics(counts)[gate.metric]


def _point_means(cells: pd.DataFrame, gate: AcceptanceGate) -> pd.Series:
    """Trial-weighted mean of the per-trial metric at each value of the gate axis"""
    subset = _gate_subset(cells, gate.detector, gate)
    axis = GATE_AXES[gate.increasing_in]
    if gate.metric == "event_sensitivity":
        grouped = subset.groupby(axis, sort=True)[["events_hit", "events"]].sum()
        return grouped["events_hit"] / grouped["events"].replace(0, np.nan)
    column = f"{gate.metric}_mean"
    frame = subset[[axis, column, "trials"]].dropna()
    weighted = (frame[column] * frame["trials"]).groupby(frame[axis], sort=True).sum()
    return weighted / frame.groupby(axis, sort=True)["trials"].sum()


def _monotone_verdict(cells: pd.DataFrame, gate: AcceptanceGate) -> GateVerdict:
    points = _point_means(cells, gate).dropna()
    if len(points) < 2:
        return GateVerdict(gate, None, False, f"{gate.describe()}: fewer than 2 grid points")
    steps = np.diff(points.to_numpy())
    worst = float(steps.min())
    passed = worst >= -gate.slack
    trace = ", ".join(f"{k:g}:{v:.3f}" for k, v in points.items())
    return GateVerdict(gate, worst, passed,
                       f"{gate.describe()}: worst step {worst:+.4f} ({trace}) {'PASS' if passed else 'FAIL'}")


def evaluate_gates(cells: pd.DataFrame, gates: Sequence[AcceptanceGate]) -> List[GateVerdict]:
    verdicts = []
    for gate in gates:
        gate.validate()
        if gate.increasing_in is not None:
            verdicts.append(_monotone_verdict(cells, gate))
            continue
        value = _pooled_metric(cells, gate.detector, gate)
        if value is not None and gate.minus:
            other = _pooled_metric(cells, gate.minus, gate)
            value = None if other is None else value - other
        if value is None:
            verdicts.append(GateVerdict(gate, None, False, f"{gate.describe()}: no matching cells"))
            continue
        passed = (gate.min is None or value >= gate.min) and (gate.max is None or value <= gate.max)
        verdicts.append(GateVerdict(gate, float(value), passed,
                                    f"{gate.describe()}: {value:.4f} {'PASS' if passed else 'FAIL'}"))
    return verdicts


def monte_carlo(grid: BenchGrid, repac_cfg: Optional[RepacConfig] = None,
                baseline_cfg: Optional[BaselineConfig] = None,
                gates: Sequence[AcceptanceGate] = (), config_echo: Optional[Dict] = None,
                progress: Optional[Callable[[BenchCell, pd.DataFrame], None]] = None) -> BenchReport:
    """Run every grid cell; detector or synthesis failures are recorded, never fatal"""
    grid.validate()
    repac_cfg = (repac_cfg or RepacConfig()).validate()
    baseline_cfg = (baseline_cfg or BaselineConfig()).validate(grid.fs)
    for gate in gates:
        gate.validate()

    rows: List[dict] = []
    started = time.perf_counter()
    with Parallel(n_jobs=grid.n_jobs) as parallel:
        for cell in grid.cells():
            batches = parallel(
                delayed(run_trial)(grid, cell, trial, repac_cfg, baseline_cfg)
                for trial in range(grid.trials_per_cell)
            )
            cell_rows = [row for batch in batches for row in batch]
            rows.extend(cell_rows)
            logger.info("bench_cell_done", cell=cell.index, snr_db=cell.snr_db, m=cell.m, L=cell.L,
                        elapsed_s=round(time.perf_counter() - started, 2))
            if progress is not None:
                progress(cell, summarize_cells(pd.DataFrame(cell_rows)))

    trials = pd.DataFrame(rows)
    cells = summarize_cells(trials)
    verdicts = evaluate_gates(cells, gates)
    for verdict in verdicts:
        logger.info("acceptance_gate", gate=verdict.gate.describe(), value=verdict.value, passed=verdict.passed)

    return BenchReport(
        grid=grid,
        cells=cells,
        trials=trials,
        verdicts=verdicts,
        config=config_echo or {"grid": grid.to_dict()},
        generated_at=datetime.now(timezone.utc).isoformat(),
    )
