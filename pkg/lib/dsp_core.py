#!/usr/bin/env python3
"""
REPAC Toolkit - DSP Core
Numerical primitives shared by every stage: analytic signal, phase utilities,
windowed-sinc filtering, brick-wall lowpass, Welch PSD and pink noise.
"""

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import structlog
from scipy import fft as sp_fft
from scipy import signal as sp_signal
from scipy import stats

logger = structlog.get_logger(__name__)

# Hamming windowed-sinc: transition width ~ 3.3 / numtaps (normalized to fs)
HAMMING_TRANSITION_FACTOR = 3.3

MIN_ANALYTIC_LENGTH = 16
MIN_SLOPE_LENGTH = 32
MIN_PINK_LENGTH = 256

SeedLike = Union[int, np.random.Generator]


class DspError(Exception):
    """Raised when a DSP primitive receives invalid input"""
    pass


def _finite_array(values, name: str) -> np.ndarray:
    array = np.asarray(values)
    if array.ndim != 1:
        raise DspError(f"{name} must be one-dimensional, got shape {array.shape}")
    if array.size == 0:
        raise DspError(f"{name} must not be empty")
    if not np.all(np.isfinite(array)):
        raise DspError(f"{name} contains non-finite values")
    return array


@dataclass(frozen=True, eq=False)
class Signal:
    """Uniformly sampled real-valued time series"""
    samples: np.ndarray
    fs: float

    def __post_init__(self):
        samples = _finite_array(self.samples, "signal").astype(np.float64, copy=False)
        if not self.fs > 0:
            raise DspError(f"sampling rate must be positive, got {self.fs}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "fs", float(self.fs))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.fs

    def with_samples(self, samples: np.ndarray) -> "Signal":
        return Signal(samples, self.fs)

    def slice(self, start: int, end: int) -> "Signal":
        return Signal(self.samples[start:end], self.fs)


@dataclass(frozen=True, eq=False)
class ComplexSeries:
    """Complex-valued series, e.g. an analytic signal"""
    values: np.ndarray
    fs: float

    def __post_init__(self):
        values = _finite_array(self.values, "complex series").astype(np.complex128, copy=False)
        if not self.fs > 0:
            raise DspError(f"sampling rate must be positive, got {self.fs}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "fs", float(self.fs))

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class Band:
    """Frequency band [lo, hi] in Hz"""
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise DspError(f"band edges must be finite, got ({self.lo}, {self.hi})")
        if self.lo < 0 or self.lo >= self.hi:
            raise DspError(f"invalid band ({self.lo}, {self.hi}): need 0 <= lo < hi")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def center(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, frequency: float) -> bool:
        return self.lo <= frequency <= self.hi

    def validate(self, fs: float) -> "Band":
        if self.hi >= fs / 2:
            raise DspError(f"band ({self.lo}, {self.hi}) Hz exceeds Nyquist ({fs / 2} Hz)")
        return self

    def as_tuple(self) -> tuple:
        return (self.lo, self.hi)


@dataclass(frozen=True, eq=False)
class PsdEstimate:
    """One-sided power spectral density"""
    freqs: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        if self.freqs.shape != self.power.shape:
            raise DspError("PSD frequency grid and power must have the same length")
        if np.any(self.power < 0):
            raise DspError("PSD power must be nonnegative")

    @property
    def resolution(self) -> float:
        return float(self.freqs[1] - self.freqs[0]) if self.freqs.size > 1 else 0.0

    def peak_frequency(self, band: Optional[Band] = None) -> float:
        mask = np.ones_like(self.freqs, dtype=bool) if band is None else \
            (self.freqs >= band.lo) & (self.freqs <= band.hi)
        if not np.any(mask):
            raise DspError("no PSD bins inside the requested band")
        idx = np.flatnonzero(mask)[np.argmax(self.power[mask])]
        return float(self.freqs[idx])


@dataclass(frozen=True, eq=False)
class FilterCoeffs:
    """Symmetric (linear-phase) FIR taps"""
    taps: np.ndarray
    fs: float
    band: Band
    transition: float

    @property
    def numtaps(self) -> int:
        return self.taps.size


# ---------------------------------------------------------------------------
# Analytic signal and phase utilities
# ---------------------------------------------------------------------------

def analytic_signal(x: Signal) -> ComplexSeries:
    """FFT analytic signal (positive bins doubled, negative bins zeroed)"""
    if len(x) < MIN_ANALYTIC_LENGTH:
        raise DspError(f"signal too short for analytic signal: {len(x)} < {MIN_ANALYTIC_LENGTH}")
    quadrature = np.imag(sp_signal.hilbert(x.samples))
    # real part is the input bit-for-bit
    return ComplexSeries(x.samples + 1j * quadrature, x.fs)


def instantaneous_amplitude(a: ComplexSeries) -> Signal:
    return Signal(np.abs(a.values), a.fs)


def instantaneous_phase(a: ComplexSeries) -> Signal:
    """Wrapped phase in (-pi, pi]"""
    phase = np.angle(a.values)
    phase = np.where(phase <= -np.pi, phase + 2 * np.pi, phase)
    return Signal(phase, a.fs)


def unwrap_phase(wrapped: Signal) -> Signal:
    return wrapped.with_samples(np.unwrap(wrapped.samples))


def phase_slope_hz(unwrapped: Signal, edge_margin: float = 0.05) -> float:
    """Least-squares phase slope converted to Hz, edges excluded"""
    n = len(unwrapped)
    if n < MIN_SLOPE_LENGTH:
        raise DspError(f"phase series too short for slope fit: {n} < {MIN_SLOPE_LENGTH}")
    if not 0 <= edge_margin < 0.5:
        raise DspError(f"edge margin must be in [0, 0.5), got {edge_margin}")

    skip = int(edge_margin * n)
    core = unwrapped.samples[skip:n - skip]
    if core.size < 2 or np.ptp(core) == 0:
        raise DspError("degenerate phase fit: input is not oscillatory")

    index = np.arange(skip, skip + core.size, dtype=np.float64)
    fit = stats.linregress(index, core)
    return float(fit.slope * unwrapped.fs / (2 * np.pi))


def dominant_frequency(x: Signal, edge_margin: float = 0.05) -> float:
    """Phase-slope frequency of a narrowband signal"""
    phase = instantaneous_phase(analytic_signal(x))
    return phase_slope_hz(unwrap_phase(phase), edge_margin)


# ---------------------------------------------------------------------------
# Filtering
# ---------------------------------------------------------------------------

def _numtaps(fs: float, transition: float) -> int:
    taps = int(math.ceil(HAMMING_TRANSITION_FACTOR * fs / transition))
    return taps if taps % 2 == 1 else taps + 1


def fit_transition(transition: float, fs: float, n: int) -> float:
    """Widen a transition width so the resulting filter fits n/3 samples"""
    if _numtaps(fs, transition) <= n / 3:
        return transition
    max_taps = int(n // 3)
    if max_taps % 2 == 0:
        max_taps -= 1
    if max_taps < 3:
        raise DspError(f"record of {n} samples is too short for any band filter")
    widened = HAMMING_TRANSITION_FACTOR * fs / (max_taps - 1)
    logger.info("transition_widened", requested=transition, used=widened, samples=n)
    return widened


def design_bandpass(band: Band, fs: float, transition: float) -> FilterCoeffs:
    """Hamming windowed-sinc FIR with -6 dB points at the band edges"""
    band.validate(fs)
    if not transition > 0:
        raise DspError(f"transition width must be positive, got {transition}")

    numtaps = _numtaps(fs, transition)
    if band.lo == 0:
        taps = sp_signal.firwin(numtaps, band.hi, window="hamming", pass_zero=True, fs=fs)
    else:
        taps = sp_signal.firwin(numtaps, [band.lo, band.hi], window="hamming",
                                pass_zero=False, fs=fs)
    return FilterCoeffs(taps=taps, fs=fs, band=band, transition=transition)


def filter_zero_phase(coeffs: FilterCoeffs, x: Signal) -> Signal:
    """Forward-backward FIR filtering (zero net phase)"""
    n = len(x)
    if coeffs.numtaps > n / 3:
        raise DspError(
            f"filter of {coeffs.numtaps} taps is longer than a third of the signal ({n} samples)"
        )
    if coeffs.fs != x.fs:
        raise DspError(f"filter designed for fs={coeffs.fs} applied to fs={x.fs}")

    # forward then backward pass == one pass with h convolved with reversed h
    kernel = np.convolve(coeffs.taps, coeffs.taps[::-1])
    pad = min(3 * coeffs.numtaps, n - 1)
    padded = np.pad(x.samples, pad, mode="reflect", reflect_type="odd")
    filtered = sp_signal.fftconvolve(padded, kernel, mode="same")
    return x.with_samples(filtered[pad:pad + n])


def bandpass(x: Signal, band: Band, transition: float) -> Signal:
    coeffs = design_bandpass(band, x.fs, fit_transition(transition, x.fs, len(x)))
    return filter_zero_phase(coeffs, x)


def ideal_lowpass(x: Signal, fc: float) -> Signal:
    """Brick-wall lowpass on the full-record FFT, DC preserved"""
    if not 0 < fc < x.fs / 2:
        raise DspError(f"cut-off {fc} Hz outside (0, {x.fs / 2}) Hz")
    n = len(x)
    spectrum = sp_fft.rfft(x.samples)
    freqs = sp_fft.rfftfreq(n, d=1.0 / x.fs)
    spectrum[freqs > fc] = 0.0
    return x.with_samples(sp_fft.irfft(spectrum, n=n))


# ---------------------------------------------------------------------------
# Spectral estimation and noise
# ---------------------------------------------------------------------------

def welch_psd(x: Signal, segment_len: int, overlap: float = 0.5) -> PsdEstimate:
    """Hann-windowed averaged periodogram (density scaling)"""
    if segment_len > len(x):
        raise DspError(f"segment length {segment_len} exceeds signal length {len(x)}")
    if segment_len < 2:
        raise DspError(f"segment length must be at least 2, got {segment_len}")
    if not 0 <= overlap < 1:
        raise DspError(f"overlap must be in [0, 1), got {overlap}")

    freqs, power = sp_signal.welch(
        x.samples,
        fs=x.fs,
        window="hann",
        nperseg=segment_len,
        noverlap=int(overlap * segment_len),
        detrend="constant",
        scaling="density",
    )
    return PsdEstimate(freqs=freqs, power=np.maximum(power, 0.0))


def check_random_state(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(int(seed))


def pink_noise(n: int, fs: float, seed: SeedLike) -> Signal:
    """Unit-variance 1/f noise by spectral shaping of white Gaussian noise"""
    if n < MIN_PINK_LENGTH:
        raise DspError(f"pink noise needs at least {MIN_PINK_LENGTH} samples, got {n}")
    rng = check_random_state(seed)

    nfft = 1 << int(math.ceil(math.log2(n)))
    spectrum = sp_fft.rfft(rng.standard_normal(nfft))
    freqs = sp_fft.rfftfreq(nfft, d=1.0 / fs)
    scaling = np.zeros_like(freqs)
    scaling[1:] = 1.0 / np.sqrt(freqs[1:])
    shaped = sp_fft.irfft(spectrum * scaling, n=nfft)

    offset = (nfft - n) // 2
    noise = shaped[offset:offset + n]
    noise = noise - noise.mean()
    return Signal(noise / noise.std(), fs)
