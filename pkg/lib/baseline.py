#!/usr/bin/env python3
"""
REPAC Toolkit - Fixed-band baseline
PACT-style reference detector: MVL on a priori LFO/HFO bands, judged against a
circular-shift surrogate distribution, with per-window significance for the
detected intervals.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import structlog
from numpy.lib.stride_tricks import sliding_window_view

from dsp_core import (Band, DspError, Signal, analytic_signal, bandpass, check_random_state,
                      instantaneous_amplitude, instantaneous_phase)
from mvl import DEFAULT_HAS_SET, MvlError, select_top_amplitude, selection_size
from repac import Interval, merge_intervals

logger = structlog.get_logger(__name__)

MIN_SURROGATES = 50


class BaselineError(Exception):
    """Raised for invalid baseline configuration or inputs"""
    pass


@dataclass(frozen=True)
class BaselineConfig:
    """Fixed bands and surrogate test settings"""
    lfo_band: Band = Band(4.0, 8.0)
    hfo_band: Band = Band(70.0, 90.0)
    has_set: Tuple[float, ...] = DEFAULT_HAS_SET
    n_surrogates: int = 200
    alpha: float = 0.05
    min_shift_s: float = 1.0
    window_s: float = 1.0
    window_overlap: float = 0.5
    window_surrogates: int = 20
    window_alpha: Optional[float] = None
    lfo_transition_hz: float = 2.0
    hfo_transition_hz: float = 10.0
    seed: int = 0

    def validate(self, fs: Optional[float] = None) -> "BaselineConfig":
        if self.n_surrogates < MIN_SURROGATES:
            raise BaselineError(f"n_surrogates must be >= {MIN_SURROGATES}, got {self.n_surrogates}")
        if not 0 < self.alpha < 1:
            raise BaselineError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.window_alpha is not None and not 0 < self.window_alpha < 1:
            raise BaselineError(f"window_alpha must be in (0, 1), got {self.window_alpha}")
        if not 0 <= self.window_overlap < 1:
            raise BaselineError(f"window_overlap must be in [0, 1), got {self.window_overlap}")
        if self.window_s <= 0 or self.min_shift_s <= 0:
            raise BaselineError("window_s and min_shift_s must be positive")
        if not 1 <= self.window_surrogates <= self.n_surrogates:
            raise BaselineError(f"window_surrogates must be in [1, n_surrogates], got {self.window_surrogates}")
        if not self.has_set:
            raise BaselineError("has_set must not be empty")
        if self.hfo_band.lo < self.lfo_band.hi:
            raise BaselineError(f"HFO band {self.hfo_band.as_tuple()} overlaps LFO band {self.lfo_band.as_tuple()}")
        if fs is not None:
            try:
                self.lfo_band.validate(fs)
                self.hfo_band.validate(fs)
            except DspError as exc:
                raise BaselineError(str(exc)) from exc
        return self

    @property
    def effective_window_alpha(self) -> float:
        return self.alpha if self.window_alpha is None else self.window_alpha


@dataclass(frozen=True, eq=False)
class BaselineResult:
    """Observed coupling, surrogate statistics and detected windows"""
    observed_mvl: float
    threshold: float
    p_value: float
    significant: bool
    lfo_band: Band
    hfo_band: Band
    coupling_phase: float
    fs: float
    n_samples: int
    surrogate_mvl: np.ndarray
    window_threshold: Optional[float] = None
    window_starts: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    window_mvl: np.ndarray = field(default_factory=lambda: np.zeros(0))
    window_len: int = 0
    pac_intervals: List[Interval] = field(default_factory=list)

    @property
    def final_mvl(self) -> float:
        return self.observed_mvl

    @property
    def status(self) -> str:
        return "significant" if self.significant else "not_significant"

    @property
    def detected(self) -> bool:
        return bool(self.pac_intervals)


def _averaged_mvl(amplitude: np.ndarray, phase: np.ndarray, selections) -> float:
    return float(np.mean([abs(np.mean(amplitude[sel] * np.exp(1j * phase[sel]))) for sel in selections]))


def _draw_shifts(n: int, min_shift: int, count: int, rng: np.random.Generator) -> np.ndarray:
    if n - 2 * min_shift < 1:
        raise BaselineError(f"record of {n} samples is too short for shifts of at least {min_shift} samples")
    return rng.integers(min_shift, n - min_shift + 1, size=count)


def surrogate_distribution(amplitude: np.ndarray, phase: np.ndarray, has_set, shifts: np.ndarray) -> np.ndarray:
    """Averaged MVL with the amplitude series rotated by each shift"""
    n = amplitude.size
    # the top-has set of a rotated series is the rotated top-has set
    selections = [select_top_amplitude(amplitude, has) for has in has_set]
    values = np.empty(shifts.size)
    for k, shift in enumerate(shifts):
        per_has = []
        for sel in selections:
            rotated = (sel + shift) % n
            per_has.append(abs(np.mean(amplitude[sel] * np.exp(1j * phase[rotated]))))
        values[k] = np.mean(per_has)
    return values


def window_mvl(amplitude: np.ndarray, phase: np.ndarray, has_set, window_len: int,
               hop: int) -> Tuple[np.ndarray, np.ndarray]:
    """Averaged MVL per sliding window; returns (window starts, values)"""
    if amplitude.size < window_len:
        return np.zeros(0, dtype=int), np.zeros(0)
    amp_windows = sliding_window_view(amplitude, window_len)[::hop]
    phase_windows = sliding_window_view(phase, window_len)[::hop]
    starts = np.arange(amp_windows.shape[0]) * hop
    order = np.argsort(-amp_windows, axis=1, kind="stable")
    vectors = amp_windows * np.exp(1j * phase_windows)

    values = np.zeros(amp_windows.shape[0])
    for has in has_set:
        count = selection_size(window_len, has)
        top = order[:, :count]
        values += np.abs(np.take_along_axis(vectors, top, axis=1).mean(axis=1))
    return starts, values / len(has_set)


def run_baseline(x: Signal, cfg: Optional[BaselineConfig] = None) -> BaselineResult:
    """Fixed-band MVL with circular-shift significance"""
    cfg = (cfg or BaselineConfig()).validate(x.fs)
    n = len(x)
    rng = check_random_state(cfg.seed)

    try:
        amplitude = instantaneous_amplitude(
            analytic_signal(bandpass(x, cfg.hfo_band, cfg.hfo_transition_hz))).samples
        phase = instantaneous_phase(
            analytic_signal(bandpass(x, cfg.lfo_band, cfg.lfo_transition_hz))).samples
        selections = [select_top_amplitude(amplitude, has) for has in cfg.has_set]
    except (DspError, MvlError) as exc:
        raise BaselineError(str(exc)) from exc

    observed = _averaged_mvl(amplitude, phase, selections)
    coupling_phase = float(np.angle(np.mean(amplitude * np.exp(1j * phase))))

    shifts = _draw_shifts(n, int(round(cfg.min_shift_s * x.fs)), cfg.n_surrogates, rng)
    surrogates = surrogate_distribution(amplitude, phase, cfg.has_set, shifts)
    threshold = float(np.quantile(surrogates, 1 - cfg.alpha))
    p_value = float((1 + np.sum(surrogates >= observed)) / (1 + surrogates.size))
    significant = observed > threshold

    window_len = int(round(cfg.window_s * x.fs))
    hop = max(1, int(round(window_len * (1 - cfg.window_overlap))))
    starts, values = window_mvl(amplitude, phase, cfg.has_set, window_len, hop)

    window_threshold = None
    intervals: List[Interval] = []
    if starts.size:
        pooled = np.concatenate([
            window_mvl(np.roll(amplitude, shift), phase, cfg.has_set, window_len, hop)[1]
            for shift in shifts[:cfg.window_surrogates]
        ])
        window_threshold = float(np.quantile(pooled, 1 - cfg.effective_window_alpha))
        if significant:
            hits = [(int(s), int(s) + window_len) for s, v in zip(starts, values) if v > window_threshold]
            intervals = merge_intervals(hits, 1)

    logger.info("baseline_decision", observed_mvl=round(observed, 6), threshold=round(threshold, 6),
                p_value=p_value, significant=bool(significant), intervals=len(intervals))
    return BaselineResult(
        observed_mvl=observed,
        threshold=threshold,
        p_value=p_value,
        significant=bool(significant),
        lfo_band=cfg.lfo_band,
        hfo_band=cfg.hfo_band,
        coupling_phase=coupling_phase,
        fs=x.fs,
        n_samples=n,
        surrogate_mvl=surrogates,
        window_threshold=window_threshold,
        window_starts=starts,
        window_mvl=values,
        window_len=window_len,
        pac_intervals=intervals,
    )
