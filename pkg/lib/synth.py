#!/usr/bin/env python3
"""
REPAC Toolkit - Synthesis
Generates pink-noise records with embedded, ground-truth-labelled PAC events.

Each event is a Hann-windowed LFO burst whose troughs gate an HFO carrier:

    e[n] = w[n] cos(2 pi f_L n / fs) + m w[n] r[n] cos(2 pi f_H n / fs)
    r[n] = max(-cos(2 pi f_L n / fs), 0)

Events are scaled so that the event-to-noise power ratio, measured over the
union of event supports, equals the requested SNR.
"""

from dataclasses import asdict, dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
import structlog
from scipy.signal import windows

from dsp_core import Signal, check_random_state, pink_noise

logger = structlog.get_logger(__name__)

EventCount = Union[int, Tuple[int, int]]


class SynthesisError(Exception):
    """Raised when synthesis parameters are invalid or events cannot be placed"""
    pass


@dataclass(frozen=True)
class PacParams:
    """Generative parameters for one synthetic record"""
    f_L: float = 5.0
    f_H: float = 80.0
    m: float = 0.1
    L: float = 1.5
    snr_db: float = -5.0
    duration: float = 60.0
    fs: float = 1000.0
    n_events: EventCount = 4
    seed: int = 0
    guard_s: float = 0.5
    max_retries: int = 1000

    @property
    def max_events(self) -> int:
        return self.n_events if isinstance(self.n_events, int) else int(self.n_events[1])

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.fs))

    def validate(self) -> "PacParams":
        validate_event_params(self.f_L, self.f_H, self.m, self.L, self.fs)
        if self.duration <= 0:
            raise SynthesisError(f"duration must be positive, got {self.duration}")
        if self.guard_s < 0:
            raise SynthesisError(f"guard gap must be nonnegative, got {self.guard_s}")
        if self.max_retries < 1:
            raise SynthesisError(f"max_retries must be at least 1, got {self.max_retries}")
        if isinstance(self.n_events, int):
            if self.n_events < 0:
                raise SynthesisError(f"event count must be nonnegative, got {self.n_events}")
        else:
            k_min, k_max = self.n_events
            if not 0 <= k_min <= k_max:
                raise SynthesisError(f"event count range must satisfy 0 <= k_min <= k_max, got {self.n_events}")
        if self.max_events * self.L > 0.8 * self.duration:
            raise SynthesisError(
                f"{self.max_events} events of {self.L} s exceed 80% of a {self.duration} s record"
            )
        return self

    def to_dict(self) -> dict:
        data = asdict(self)
        if not isinstance(self.n_events, int):
            data["n_events"] = list(self.n_events)
        return data


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Per-sample PAC labels and the event interval list"""
    event_intervals: List[Tuple[int, int]]
    labels: np.ndarray

    @classmethod
    def from_intervals(cls, intervals: List[Tuple[int, int]], n: int) -> "GroundTruth":
        ordered = sorted((int(s), int(e)) for s, e in intervals)
        labels = np.zeros(n, dtype=bool)
        previous_end = 0
        for start, end in ordered:
            if start < previous_end or start >= end or end > n:
                raise SynthesisError(f"invalid or overlapping interval [{start}, {end}) in record of {n}")
            labels[start:end] = True
            previous_end = end
        return cls(event_intervals=ordered, labels=labels)

    @property
    def event_fraction(self) -> float:
        return float(self.labels.mean()) if self.labels.size else 0.0


@dataclass(frozen=True, eq=False)
class SyntheticRecord:
    """A synthetic record with its labels and retained components"""
    signal: Signal
    truth: GroundTruth
    params: PacParams
    clean: np.ndarray
    noise: np.ndarray
    gain: float = 0.0
    realized_snr_db: Optional[float] = None


def validate_event_params(f_L: float, f_H: float, m: float, L: float, fs: float) -> None:
    if not fs > 0:
        raise SynthesisError(f"sampling rate must be positive, got {fs}")
    if not 0 < f_L < f_H < fs / 2:
        raise SynthesisError(f"need 0 < f_L < f_H < fs/2, got f_L={f_L}, f_H={f_H}, fs={fs}")
    if not 0 <= m <= 1:
        raise SynthesisError(f"modulation index must be in [0, 1], got {m}")
    if L < 3.0 / f_L:
        raise SynthesisError(f"event length {L} s holds fewer than 3 LFO cycles at {f_L} Hz")


def make_pac_event(f_L: float, f_H: float, m: float, L: float, fs: float) -> Signal:
    """One trough-gated PAC burst (event-local samples)"""
    validate_event_params(f_L, f_H, m, L, fs)
    n = int(round(L * fs))
    t = np.arange(n) / fs
    envelope = windows.hann(n, sym=True)
    lfo = np.cos(2 * np.pi * f_L * t)
    trough_gate = np.maximum(-lfo, 0.0)
    hfo = np.cos(2 * np.pi * f_H * t)
    return Signal(envelope * lfo + m * envelope * trough_gate * hfo, fs)


def _draw_event_count(params: PacParams, rng: np.random.Generator) -> int:
    if isinstance(params.n_events, int):
        return params.n_events
    k_min, k_max = params.n_events
    return int(rng.integers(k_min, k_max + 1))


def _place_events(count: int, event_len: int, n: int, guard: int,
                  max_retries: int, rng: np.random.Generator) -> List[Tuple[int, int]]:
    """Uniform random starts, rejection-sampled for non-overlap with guard gaps"""
    placed: List[Tuple[int, int]] = []
    if event_len > n:
        raise SynthesisError(f"event of {event_len} samples does not fit a record of {n}")
    for index in range(count):
        for attempt in range(max_retries):
            start = int(rng.integers(0, n - event_len + 1))
            end = start + event_len
            if all(start >= e + guard or end + guard <= s for s, e in placed):
                placed.append((start, end))
                break
        else:
            raise SynthesisError(
                f"could not place event {index + 1} of {count} after {max_retries} attempts; "
                f"record too crowded"
            )
        if attempt:
            logger.debug("event_placement_retries", event_index=index, retries=attempt)
    return sorted(placed)


def synthesize(params: PacParams) -> SyntheticRecord:
    """Pink noise plus randomly placed PAC events at the requested SNR"""
    params.validate()
    rng = check_random_state(params.seed)
    n = params.n_samples

    noise = pink_noise(n, params.fs, rng).samples
    count = _draw_event_count(params, rng)
    event = make_pac_event(params.f_L, params.f_H, params.m, params.L, params.fs).samples
    intervals = _place_events(count, event.size, n, int(round(params.guard_s * params.fs)),
                              params.max_retries, rng)

    truth = GroundTruth.from_intervals(intervals, n)
    clean = np.zeros(n)
    for start, end in intervals:
        clean[start:end] = event

    gain = 0.0
    realized = None
    if intervals:
        support = truth.labels
        event_power = np.mean(clean[support] ** 2)
        noise_power = np.mean(noise[support] ** 2)
        gain = float(np.sqrt(10 ** (params.snr_db / 10) * noise_power / event_power))
        clean = gain * clean
        realized = float(10 * np.log10(np.mean(clean[support] ** 2) / noise_power))

    logger.debug("record_synthesized", seed=params.seed, events=len(intervals),
                 snr_db=params.snr_db, realized_snr_db=realized)
    return SyntheticRecord(
        signal=Signal(noise + clean, params.fs),
        truth=truth,
        params=params,
        clean=clean,
        noise=noise,
        gain=gain,
        realized_snr_db=realized,
    )


def realized_snr_db(record: SyntheticRecord) -> Optional[float]:
    """Event-support SNR recomputed from the retained components"""
    support = record.truth.labels
    if not support.any():
        return None
    return float(10 * np.log10(np.mean(record.clean[support] ** 2) / np.mean(record.noise[support] ** 2)))
