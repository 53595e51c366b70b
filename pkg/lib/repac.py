#!/usr/bin/env python3
"""
REPAC Toolkit - REPAC pipeline
Refines the LFO band from the MVL profile, estimates the LFO frequency from the
phase slope, demodulates the LFO power to find PAC periods, re-estimates the
LFO frequency over those periods, locates the HFO at the centre of the
segment-averaged frequency comb, and scores the final coupling.
"""

import time
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from scipy import signal as sp_signal

from dsp_core import (Band, DspError, PsdEstimate, Signal, analytic_signal, bandpass,
                      dominant_frequency, ideal_lowpass, instantaneous_amplitude,
                      instantaneous_phase, phase_slope_hz, unwrap_phase)
from mvl import DEFAULT_HAS_SET, MvlError, MvlProfile, default_lfo_grid, mvl_profile

logger = structlog.get_logger(__name__)

Interval = Tuple[int, int]

STATUS_OK = "ok"
STATUS_NO_PAC = "no_pac"
STATUS_NO_HFO = "no_hfo"

# refined HFO band spans f_H_hat +/- this many comb teeth
HFO_HALF_WIDTH_TEETH = 4


class RepacError(Exception):
    """Raised when a pipeline stage fails; `stage` names the stage"""

    def __init__(self, message: str, stage: Optional[str] = None):
        super().__init__(f"[{stage}] {message}" if stage else message)
        self.stage = stage


class NoHfoComponentError(RepacError):
    """Raised when the segment spectrum holds no comb above the noise floor"""
    pass


@dataclass(frozen=True)
class RepacConfig:
    """Tunables of the REPAC pipeline"""
    candidate_lfo_bands: Tuple[Band, ...] = field(default_factory=lambda: tuple(default_lfo_grid()))
    candidate_hfo_band: Band = Band(30.0, 150.0)
    has_set: Tuple[float, ...] = DEFAULT_HAS_SET
    demod_cutoff: float = 2.0
    threshold_coeff: float = 0.1
    activity_epsilon: float = 0.05
    comb_side_peaks: int = 4
    merge_gap_s: float = 0.1
    min_cycles: float = 2.0
    edge_margin: float = 0.05
    lfo_transition_hz: float = 2.0
    hfo_transition_hz: float = 10.0
    hfo_presence_db: float = 6.0
    min_duration_s: float = 4.0

    def validate(self) -> "RepacConfig":
        if not 0 < self.threshold_coeff < 1:
            raise RepacError(f"threshold_coeff must be in (0, 1), got {self.threshold_coeff}")
        if not 0 < self.activity_epsilon < 1:
            raise RepacError(f"activity_epsilon must be in (0, 1), got {self.activity_epsilon}")
        if self.comb_side_peaks < 1:
            raise RepacError(f"comb_side_peaks must be >= 1, got {self.comb_side_peaks}")
        if self.demod_cutoff <= 0:
            raise RepacError(f"demod_cutoff must be positive, got {self.demod_cutoff}")
        if len(self.candidate_lfo_bands) < 3:
            raise RepacError("at least 3 candidate LFO bands are required")
        if not self.has_set:
            raise RepacError("has_set must not be empty")
        return self


@dataclass(frozen=True)
class LfoRefinement:
    """Outcome of the MVL threshold rule"""
    band: Band
    threshold: float
    selected: Tuple[int, ...]
    low_confidence: bool = False


@dataclass(frozen=True, eq=False)
class CombAnalysis:
    """Segment-averaged spectrum and the HFO band derived from it"""
    f_H_hat: float
    refined_hfo: Band
    segment_psd: PsdEstimate
    hfo_bandwidth: float
    peak_db: float
    side_db: float
    teeth: List[dict]


@dataclass(frozen=True, eq=False)
class RepacResult:
    """All REPAC outputs and retained intermediates"""
    status: str
    fs: float
    n_samples: int
    refined_lfo: Band
    f_L_hat: float
    pac_intervals: List[Interval]
    final_mvl: float
    profile: MvlProfile
    lfo_refinement: LfoRefinement
    refined_hfo: Optional[Band] = None
    f_H_hat: Optional[float] = None
    f_H_comb: Optional[float] = None
    f_L_record: Optional[float] = None
    hfo_bandwidth: Optional[float] = None
    coupling_phase: Optional[float] = None
    segment_psd: Optional[PsdEstimate] = None
    comb_teeth: List[dict] = field(default_factory=list)
    candidate_intervals: List[Interval] = field(default_factory=list)
    message: str = ""

    @property
    def low_confidence(self) -> bool:
        return self.lfo_refinement.low_confidence

    @property
    def detected(self) -> bool:
        return bool(self.pac_intervals)


def refine_lfo_band(profile: MvlProfile, threshold_coeff: float = 0.1) -> LfoRefinement:
    """Union of bands whose MVL >= MVL_max - threshold_coeff * (MVL_max - MVL_min)"""
    values = np.asarray(profile.values)
    if values.size < 3:
        raise RepacError(f"profile needs at least 3 bands, got {values.size}", stage="refine_lfo")
    mvl_max = float(values.max())
    mvl_min = float(values.min())
    delta = mvl_max - mvl_min
    threshold = mvl_max - threshold_coeff * delta

    if delta == 0:
        best = int(np.argmax(values))
        logger.warning("flat_mvl_profile", band=profile.bands[best].as_tuple())
        return LfoRefinement(band=profile.bands[best], threshold=threshold,
                             selected=(best,), low_confidence=True)

    selected = tuple(int(k) for k in np.flatnonzero(values >= threshold))
    band = Band(min(profile.bands[k].lo for k in selected), max(profile.bands[k].hi for k in selected))
    return LfoRefinement(band=band, threshold=threshold, selected=selected)


def estimate_lfo_frequency(s_lfo: Signal, edge_margin: float = 0.05) -> float:
    return dominant_frequency(s_lfo, edge_margin)


def demodulate_lfo(s_lfo: Signal, cutoff: float = 2.0, f_L_hat: Optional[float] = None) -> Signal:
    """Slow modulating power: ideal lowpass of the instantaneous power, clipped at 0"""
    if f_L_hat is not None and cutoff >= f_L_hat:
        raise RepacError(f"demodulation cut-off {cutoff} Hz must be below f_L_hat {f_L_hat:.3f} Hz",
                         stage="demodulate")
    envelope = ideal_lowpass(s_lfo.with_samples(s_lfo.samples ** 2), cutoff)
    return envelope.with_samples(np.maximum(envelope.samples, 0.0))


def mask_to_intervals(mask: np.ndarray) -> List[Interval]:
    edges = np.diff(np.concatenate(([0], mask.astype(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return [(int(s), int(e)) for s, e in zip(starts, ends)]


def merge_intervals(intervals: Sequence[Interval], max_gap: int) -> List[Interval]:
    merged: List[Interval] = []
    for start, end in sorted(intervals):
        if merged and start - merged[-1][1] < max_gap:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return merged


def detect_pac_periods(s1: Signal, epsilon: float = 0.05, f_L_hat: float = 5.0,
                       merge_gap_s: float = 0.1, min_cycles: float = 2.0) -> List[Interval]:
    """Intervals where s1 > epsilon * max(s1), merged and length-filtered"""
    values = s1.samples
    if np.any(values < 0):
        raise RepacError("demodulated signal must be nonnegative", stage="detect_periods")
    peak = float(values.max())
    if peak == 0:
        return []

    intervals = mask_to_intervals(values > epsilon * peak)
    intervals = merge_intervals(intervals, int(round(merge_gap_s * s1.fs)))
    min_len = min_cycles / f_L_hat * s1.fs
    return [(s, e) for s, e in intervals if e - s >= min_len]


def _average_segment_spectrum(x: Signal, intervals: Sequence[Interval]) -> PsdEstimate:
    longest = max(e - s for s, e in intervals)
    nfft = 1 << int(np.ceil(np.log2(max(longest, 2))))
    total = None
    for start, end in intervals:
        freqs, power = sp_signal.periodogram(x.samples[start:end], fs=x.fs, window="hann",
                                             nfft=nfft, detrend="constant", scaling="density")
        total = power if total is None else total + power
    return PsdEstimate(freqs=freqs, power=total / len(intervals))


def _whiten(psd: PsdEstimate, band: Band) -> Tuple[np.ndarray, np.ndarray]:
    """Spectrum divided by a power-law fit over the band; returns (whitened, in-band mask)"""
    in_band = (psd.freqs >= band.lo) & (psd.freqs <= band.hi) & (psd.freqs > 0)
    if in_band.sum() < 3:
        raise RepacError(f"too few spectral bins in {band.as_tuple()} Hz", stage="comb_analysis")
    floor = np.finfo(np.float64).tiny
    log_f = np.log10(np.maximum(psd.freqs, psd.freqs[1]))
    log_p = np.log10(np.maximum(psd.power, floor))
    slope, intercept = np.polyfit(log_f[in_band], log_p[in_band], 1)
    background = 10 ** (intercept + slope * log_f)
    return psd.power / background, in_band


def _nearest_bin(freqs: np.ndarray, target: float) -> Optional[int]:
    if target < freqs[0] or target > freqs[-1]:
        return None
    return int(np.argmin(np.abs(freqs - target)))


def comb_centre(freqs: np.ndarray, whitened: np.ndarray, band_idx: np.ndarray, f_L_hat: float) -> int:
    """Bin maximizing its own level plus half the levels one f_L_hat either side"""
    f = freqs[band_idx]
    sides = (np.interp(f - f_L_hat, freqs, whitened, left=0.0, right=0.0)
             + np.interp(f + f_L_hat, freqs, whitened, left=0.0, right=0.0))
    score = whitened[band_idx] + 0.5 * sides
    return int(band_idx[np.argmax(score)])


def comb_analysis(x: Signal, intervals: Sequence[Interval], f_L_hat: float,
                  candidate_hfo: Band, side_peaks: int = 4,
                  presence_db: float = 6.0) -> CombAnalysis:
    """Average the PAC-segment periodograms and read f_H from the comb centre

    The HFO counts as present when the whitened level at the comb centre is at
    least `presence_db` over the in-band median. `side_peaks` only sets how many
    teeth each side are reported; the refined HFO band is always
    f_H_hat +/- 4 * f_L_hat.
    """
    if not intervals:
        raise RepacError("comb analysis needs at least one PAC interval", stage="comb_analysis")
    candidate_hfo.validate(x.fs)

    psd = _average_segment_spectrum(x, intervals)
    whitened, in_band = _whiten(psd, candidate_hfo)
    band_idx = np.flatnonzero(in_band)
    median = float(np.median(whitened[band_idx]))
    if median <= 0:
        raise NoHfoComponentError("no HFO component: empty in-band spectrum", stage="comb_analysis")

    peak = comb_centre(psd.freqs, whitened, band_idx, f_L_hat)
    f_H_hat = float(psd.freqs[peak])
    peak_db = float(10 * np.log10(max(whitened[peak], 1e-300) / median))

    teeth = []
    for k in range(-side_peaks, side_peaks + 1):
        if k == 0:
            continue
        idx = _nearest_bin(psd.freqs, f_H_hat + k * f_L_hat)
        if idx is not None:
            teeth.append({"k": k, "freq": float(psd.freqs[idx]),
                          "level_db": float(10 * np.log10(max(whitened[idx], 1e-300) / median))})
    first_pair = [10 ** (t["level_db"] / 10) for t in teeth if abs(t["k"]) == 1]
    side_db = float(10 * np.log10(np.mean(first_pair))) if first_pair else float("-inf")

    if peak_db < presence_db:
        raise NoHfoComponentError(
            f"no HFO component: comb peak {peak_db:.1f} dB "
            f"(need {presence_db} dB over the in-band median)",
            stage="comb_analysis",
        )

    half_width = HFO_HALF_WIDTH_TEETH * f_L_hat
    lo = max(f_H_hat - half_width, f_L_hat)
    hi = min(f_H_hat + half_width, 0.95 * x.fs / 2)
    return CombAnalysis(f_H_hat=f_H_hat, refined_hfo=Band(lo, hi), segment_psd=psd,
                        hfo_bandwidth=2 * half_width, peak_db=peak_db, side_db=side_db, teeth=teeth)


def _interval_phase_slope(phase: Signal, intervals: Sequence[Interval], edge_margin: float) -> Optional[float]:
    estimates, weights = [], []
    for start, end in intervals:
        try:
            estimates.append(phase_slope_hz(phase.slice(start, end), edge_margin))
            weights.append(end - start)
        except DspError:
            continue
    if not estimates:
        return None
    return float(np.average(estimates, weights=weights))


def _stage(name: str, fn: Callable, *args, **kwargs):
    started = time.perf_counter()
    try:
        result = fn(*args, **kwargs)
        logger.debug("stage_done", stage=name, elapsed_s=round(time.perf_counter() - started, 4))
        return result
    except RepacError as exc:
        if exc.stage is None:
            exc.stage = name
        raise
    except (DspError, MvlError) as exc:
        raise RepacError(str(exc), stage=name) from exc


def run_repac(x: Signal, cfg: Optional[RepacConfig] = None) -> RepacResult:
    """Full REPAC pipeline on one record"""
    cfg = (cfg or RepacConfig()).validate()
    if x.duration < cfg.min_duration_s:
        raise RepacError(f"record of {x.duration:.2f} s is shorter than {cfg.min_duration_s} s",
                         stage="input")
    log = logger.bind(samples=len(x), fs=x.fs)

    profile = _stage("mvl_profile", mvl_profile, x, list(cfg.candidate_lfo_bands),
                     cfg.candidate_hfo_band, cfg.has_set, cfg.lfo_transition_hz, cfg.hfo_transition_hz)
    refinement = _stage("refine_lfo", refine_lfo_band, profile, cfg.threshold_coeff)
    s_lfo = _stage("lfo_filter", bandpass, x, refinement.band, cfg.lfo_transition_hz)
    f_L_hat = _stage("lfo_frequency", estimate_lfo_frequency, s_lfo, cfg.edge_margin)
    log.debug("lfo_refined", band=refinement.band.as_tuple(), f_L_hat=f_L_hat)

    s1 = _stage("demodulate", demodulate_lfo, s_lfo, cfg.demod_cutoff, f_L_hat)
    intervals = _stage("detect_periods", detect_pac_periods, s1, cfg.activity_epsilon, f_L_hat,
                       cfg.merge_gap_s, cfg.min_cycles)

    # off the PAC periods the band holds noise, whose phase slope is the band centroid
    f_L_record = f_L_hat
    lfo_analytic = analytic_signal(s_lfo)
    if intervals:
        lfo_unwrapped = unwrap_phase(instantaneous_phase(lfo_analytic))
        f_L_periods = _interval_phase_slope(lfo_unwrapped, intervals, cfg.edge_margin)
        if f_L_periods is not None and refinement.band.lo <= f_L_periods <= refinement.band.hi:
            f_L_hat = f_L_periods
            log.debug("lfo_reestimated", f_L_record=f_L_record, f_L_hat=f_L_hat)

    base = dict(fs=x.fs, n_samples=len(x), refined_lfo=refinement.band, f_L_hat=f_L_hat,
                f_L_record=f_L_record, profile=profile, lfo_refinement=refinement)
    if not intervals:
        log.info("no_pac_periods")
        return RepacResult(status=STATUS_NO_PAC, pac_intervals=[], final_mvl=0.0,
                           message="no candidate PAC periods", **base)

    try:
        comb = _stage("comb_analysis", comb_analysis, x, intervals, f_L_hat, cfg.candidate_hfo_band,
                      cfg.comb_side_peaks, cfg.hfo_presence_db)
    except NoHfoComponentError as exc:
        log.info("no_hfo_component", reason=str(exc))
        return RepacResult(status=STATUS_NO_HFO, pac_intervals=[], final_mvl=0.0,
                           candidate_intervals=list(intervals), message=str(exc), **base)

    s_hfo = _stage("hfo_filter", bandpass, x, comb.refined_hfo, cfg.hfo_transition_hz)
    hfo_analytic = analytic_signal(s_hfo)
    hfo_phase = unwrap_phase(instantaneous_phase(hfo_analytic))
    f_H_hat = _interval_phase_slope(hfo_phase, intervals, cfg.edge_margin)
    if f_H_hat is None:
        f_H_hat = comb.f_H_hat

    amplitude = instantaneous_amplitude(hfo_analytic).samples
    lfo_phase = instantaneous_phase(lfo_analytic).samples
    support = np.concatenate([np.arange(s, e) for s, e in intervals])
    vector = np.mean(amplitude[support] * np.exp(1j * lfo_phase[support]))

    log.info("repac_done", intervals=len(intervals), f_L_hat=round(f_L_hat, 3),
             f_H_hat=round(f_H_hat, 3), final_mvl=float(abs(vector)))
    return RepacResult(
        status=STATUS_OK,
        pac_intervals=list(intervals),
        final_mvl=float(abs(vector)),
        refined_hfo=comb.refined_hfo,
        f_H_hat=f_H_hat,
        f_H_comb=comb.f_H_hat,
        hfo_bandwidth=comb.hfo_bandwidth,
        coupling_phase=float(np.angle(vector)),
        segment_psd=comb.segment_psd,
        comb_teeth=comb.teeth,
        candidate_intervals=list(intervals),
        **base,
    )
