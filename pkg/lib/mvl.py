#!/usr/bin/env python3
"""
REPAC Toolkit - Mean Vector Length
Coupling strength between an HFO envelope and an LFO phase, restricted to the
`has` percent of samples with the largest envelope, and the K-band LFO scan.
"""

import math
from dataclasses import dataclass
from typing import List, Sequence, Union

import numpy as np
import pandas as pd
import structlog

from dsp_core import (Band, Signal, analytic_signal, bandpass, instantaneous_amplitude,
                      instantaneous_phase)

logger = structlog.get_logger(__name__)

DEFAULT_HAS_SET = (1.0, 2.0, 3.0, 4.0, 5.0)
MIN_PROFILE_BANDS = 3

ArrayLike = Union[Signal, np.ndarray, Sequence[float]]


class MvlError(Exception):
    """Raised for invalid MVL inputs"""
    pass


@dataclass(frozen=True, eq=False)
class MvlProfile:
    """Averaged MVL per LFO narrow band"""
    bands: List[Band]
    values: np.ndarray
    has_set: List[float]
    values_by_has: np.ndarray
    coupling_phase: np.ndarray

    def __post_init__(self):
        if len(self.bands) < MIN_PROFILE_BANDS:
            raise MvlError(f"profile needs at least {MIN_PROFILE_BANDS} bands, got {len(self.bands)}")
        if len(self.bands) != len(self.values):
            raise MvlError("profile bands and values differ in length")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise MvlError("profile values must be finite and nonnegative")

    @property
    def argmax(self) -> int:
        return int(np.argmax(self.values))


def _as_array(x: ArrayLike) -> np.ndarray:
    return x.samples if isinstance(x, Signal) else np.asarray(x, dtype=np.float64)


def selection_size(n: int, has_percent: float) -> int:
    # rounding guards against 50 * 4 / 100 landing a hair above 2
    return int(math.ceil(round(has_percent * n / 100.0, 9)))


def select_top_amplitude(amplitude: ArrayLike, has_percent: float) -> np.ndarray:
    """Indices of the has_percent % largest amplitudes, ties broken by lower index"""
    values = _as_array(amplitude)
    if not 0 < has_percent <= 100:
        raise MvlError(f"has percentage must be in (0, 100], got {has_percent}")
    count = selection_size(values.size, has_percent)
    if count == 0:
        raise MvlError("has selection is empty")
    order = np.argsort(-values, kind="stable")
    return np.sort(order[:count])


def mean_vector(amplitude: ArrayLike, phase: ArrayLike, has_percent: float = 100.0) -> complex:
    amp = _as_array(amplitude)
    phi = _as_array(phase)
    if amp.shape != phi.shape:
        raise MvlError(f"amplitude and phase lengths differ: {amp.size} vs {phi.size}")
    if amp.size == 0:
        raise MvlError("empty amplitude series")
    if np.any(amp < 0):
        raise MvlError("amplitude must be nonnegative")
    selected = select_top_amplitude(amp, has_percent)
    return complex(np.mean(amp[selected] * np.exp(1j * phi[selected])))


def mvl(amplitude: ArrayLike, phase: ArrayLike, has_percent: float = 100.0) -> float:
    """|mean of A[n] exp(i phi[n])| over the top has_percent % of A"""
    return abs(mean_vector(amplitude, phase, has_percent))


def default_lfo_grid(lo: float = 2.0, hi: float = 15.0, width: float = 2.0,
                     hop: float = 1.0) -> List[Band]:
    """Overlapping narrow bands of fixed width covering [lo, hi]"""
    if width <= 0 or hop <= 0:
        raise MvlError("grid width and hop must be positive")
    bands = []
    start = lo
    while start + width <= hi + 1e-9:
        bands.append(Band(round(start, 9), round(start + width, 9)))
        start += hop
    return bands


def mvl_profile(x: Signal, lfo_bands: List[Band], hfo_band: Band,
                has_set: Sequence[float] = DEFAULT_HAS_SET,
                lfo_transition: float = 2.0, hfo_transition: float = 10.0) -> MvlProfile:
    """Averaged-over-has MVL for each LFO narrow band"""
    if len(lfo_bands) < MIN_PROFILE_BANDS:
        raise MvlError(f"need at least {MIN_PROFILE_BANDS} LFO bands, got {len(lfo_bands)}")
    if not has_set:
        raise MvlError("has set must not be empty")
    for band in list(lfo_bands) + [hfo_band]:
        band.validate(x.fs)
    if hfo_band.lo < max(band.hi for band in lfo_bands):
        raise MvlError(f"HFO band {hfo_band.as_tuple()} must lie above every LFO band")

    amplitude = instantaneous_amplitude(analytic_signal(bandpass(x, hfo_band, hfo_transition))).samples
    selections = [select_top_amplitude(amplitude, has) for has in has_set]

    by_has = np.zeros((len(lfo_bands), len(has_set)))
    phases = np.zeros(len(lfo_bands))
    cache = {}
    for k, band in enumerate(lfo_bands):
        if band not in cache:
            phase = instantaneous_phase(analytic_signal(bandpass(x, band, lfo_transition))).samples
            vectors = amplitude * np.exp(1j * phase)
            cache[band] = (
                [abs(np.mean(vectors[sel])) for sel in selections],
                float(np.angle(np.mean(vectors))),
            )
        by_has[k], phases[k] = cache[band]

    values = by_has.mean(axis=1)
    logger.debug("mvl_profile", bands=len(lfo_bands), peak_band=lfo_bands[int(np.argmax(values))].as_tuple())
    return MvlProfile(bands=list(lfo_bands), values=values, has_set=list(has_set),
                      values_by_has=by_has, coupling_phase=phases)


def profile_to_frame(profile: MvlProfile) -> pd.DataFrame:
    frame = pd.DataFrame({
        "band_lo": [b.lo for b in profile.bands],
        "band_hi": [b.hi for b in profile.bands],
        "mvl": profile.values,
    })
    for j, has in enumerate(profile.has_set):
        frame[f"mvl_has_{has:g}"] = profile.values_by_has[:, j]
    return frame
