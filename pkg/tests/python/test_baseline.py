#!/usr/bin/env python3
"""
Unit tests for baseline.py
"""

import os
import sys
from dataclasses import replace

import numpy as np
import pytest

# Add the lib directory to the path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '../../lib'))

from baseline import (BaselineConfig, BaselineError, run_baseline, surrogate_distribution,
                      window_mvl)
from dsp_core import Band, pink_noise
from mvl import mvl
from synth import PacParams, synthesize


class TestBaselineConfig:
    """Settings validation"""

    def test_defaults_are_valid(self):
        cfg = BaselineConfig().validate(1000.0)
        assert cfg.effective_window_alpha == cfg.alpha

    @pytest.mark.parametrize("kwargs", [
        dict(n_surrogates=10),
        dict(alpha=1.5),
        dict(window_alpha=0.0),
        dict(window_overlap=1.0),
        dict(window_surrogates=0),
        dict(has_set=()),
        dict(lfo_band=Band(4.0, 8.0), hfo_band=Band(6.0, 20.0)),
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(BaselineError):
            BaselineConfig(**kwargs).validate()

    def test_band_above_nyquist(self):
        with pytest.raises(BaselineError):
            BaselineConfig().validate(100.0)

    def test_window_alpha_override(self):
        assert BaselineConfig(window_alpha=0.01).effective_window_alpha == 0.01


class TestSurrogates:
    """Circular-shift statistics"""

    def setup_method(self):
        """Set up test fixtures"""
        rng = np.random.default_rng(3)
        self.amplitude = rng.random(2000)
        self.phase = rng.uniform(-np.pi, np.pi, 2000)

    def test_rotation_matches_rolled_amplitude(self):
        shifts = np.array([1, 250, 999, 1500])
        has_set = (1.0, 5.0)
        values = surrogate_distribution(self.amplitude, self.phase, has_set, shifts)
        for value, shift in zip(values, shifts):
            rolled = np.roll(self.amplitude, shift)
            expected = np.mean([mvl(rolled, self.phase, has) for has in has_set])
            assert value == pytest.approx(expected, abs=1e-12)

    def test_window_count(self):
        amplitude = np.random.default_rng(0).random(10000)
        phase = np.zeros(10000)
        starts, values = window_mvl(amplitude, phase, (5.0,), 1000, 500)
        assert starts.size == 19
        assert starts[-1] == 9000
        assert values.size == 19

    def test_window_matches_direct_mvl(self):
        starts, values = window_mvl(self.amplitude, self.phase, (1.0, 5.0), 500, 250)
        for start, value in zip(starts, values):
            segment = slice(start, start + 500)
            expected = np.mean([mvl(self.amplitude[segment], self.phase[segment], has) for has in (1.0, 5.0)])
            assert value == pytest.approx(expected, abs=1e-12)

    def test_window_longer_than_record(self):
        starts, values = window_mvl(self.amplitude, self.phase, (5.0,), 5000, 2500)
        assert starts.size == 0 and values.size == 0


class TestRunBaseline:
    """Fixed-band detection"""

    def test_strong_coupling_is_significant(self):
        record = synthesize(PacParams(f_L=6.0, f_H=80.0, m=1.0, L=3.0, snr_db=0.0,
                                      duration=30.0, n_events=5, seed=11))
        result = run_baseline(record.signal, BaselineConfig(n_surrogates=100, seed=1))
        assert result.significant
        assert result.status == "significant"
        assert result.observed_mvl > result.threshold
        assert result.p_value <= 0.05
        assert result.pac_intervals
        assert result.window_threshold is not None

    def test_out_of_band_coupling_is_not_significant(self):
        record = synthesize(PacParams(f_L=12.0, f_H=40.0, m=1.0, L=3.0, snr_db=0.0,
                                      duration=30.0, n_events=5, seed=11))
        result = run_baseline(record.signal, BaselineConfig(n_surrogates=100, alpha=0.01, seed=1))
        assert not result.significant
        assert result.pac_intervals == []
        assert not result.detected

    def test_p_value_bounds(self):
        result = run_baseline(pink_noise(10000, 1000.0, 5), BaselineConfig(n_surrogates=50))
        assert 1 / 51 <= result.p_value <= 1.0
        assert result.surrogate_mvl.size == 50

    def test_seeded(self):
        x = pink_noise(10000, 1000.0, 5)
        a = run_baseline(x, BaselineConfig(n_surrogates=50, seed=4))
        b = run_baseline(x, BaselineConfig(n_surrogates=50, seed=4))
        assert np.array_equal(a.surrogate_mvl, b.surrogate_mvl)
        assert a.p_value == b.p_value

    def test_record_too_short_for_shifts(self):
        with pytest.raises(BaselineError):
            run_baseline(pink_noise(1500, 1000.0, 0), BaselineConfig(n_surrogates=50))

    @pytest.mark.slow
    def test_false_positive_rate(self):
        cfg = BaselineConfig(n_surrogates=50, alpha=0.05)
        hits = 0
        for seed in range(400):
            x = pink_noise(10000, 1000.0, seed)
            hits += run_baseline(x, replace(cfg, seed=seed)).significant
        assert 0.02 <= hits / 400 <= 0.08
