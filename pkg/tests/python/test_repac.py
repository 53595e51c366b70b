#!/usr/bin/env python3
"""
Unit and integration tests for repac.py
"""

import os
import sys
from dataclasses import replace

import numpy as np
import pytest

# Add the lib directory to the path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '../../lib'))

from config import load_run_config
from dsp_core import Band, Signal, pink_noise
from mvl import MvlProfile
from repac import (NoHfoComponentError, RepacConfig, RepacError, comb_analysis, demodulate_lfo,
                   detect_pac_periods, estimate_lfo_frequency, merge_intervals, refine_lfo_band,
                   run_repac)
from synth import PacParams, synthesize

FS = 1000.0
WEAK_COUPLING_CONFIG = os.path.join(os.path.dirname(__file__), "../../configs/weak_coupling.yml")


def make_profile(values, bands=None):
    values = np.asarray(values, dtype=float)
    if bands is None:
        bands = [Band(2.0 + k, 4.0 + k) for k in range(values.size)]
    return MvlProfile(bands=bands, values=values, has_set=[1.0], values_by_has=values[:, None],
                      coupling_phase=np.zeros(values.size))


def hann_hump(n, start, end):
    x = np.zeros(n)
    x[start:end] = np.hanning(end - start)
    return Signal(x, FS)


class TestRefineLfoBand:
    """Threshold rule on the MVL profile"""

    def test_worked_example(self):
        refinement = refine_lfo_band(make_profile([0.10, 0.50, 0.90, 0.85, 0.20]))
        assert refinement.threshold == pytest.approx(0.82)
        assert refinement.selected == (2, 3)
        assert refinement.band == Band(4.0, 7.0)
        assert not refinement.low_confidence

    def test_flat_profile(self):
        refinement = refine_lfo_band(make_profile([0.3] * 5))
        assert refinement.band == Band(2.0, 4.0)
        assert refinement.low_confidence

    def test_single_dominant_band(self):
        refinement = refine_lfo_band(make_profile([0, 0, 0, 0, 1]))
        assert refinement.band == Band(6.0, 8.0)

    def test_membership_matches_direct_rule(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            values = rng.random(int(rng.integers(3, 15)))
            refinement = refine_lfo_band(make_profile(values), 0.1)
            threshold = values.max() - 0.1 * (values.max() - values.min())
            assert set(refinement.selected) == set(np.flatnonzero(values >= threshold))

    def test_coefficient_widens_selection(self):
        values = [0.1, 0.5, 0.9, 0.85, 0.2]
        narrow = refine_lfo_band(make_profile(values), 0.1)
        wide = refine_lfo_band(make_profile(values), 0.6)
        assert set(narrow.selected) < set(wide.selected)


class TestLfoStages:
    """Frequency estimate, demodulation and period detection"""

    def test_tone_frequency(self):
        t = np.arange(10000) / FS
        assert estimate_lfo_frequency(Signal(np.cos(2 * np.pi * 5.0 * t), FS)) == pytest.approx(5.0, abs=0.01)

    def test_am_tone_frequency(self):
        t = np.arange(10000) / FS
        x = (1 + 0.5 * np.cos(2 * np.pi * 0.5 * t)) * np.cos(2 * np.pi * 5.0 * t)
        assert estimate_lfo_frequency(Signal(x, FS)) == pytest.approx(5.0, abs=0.05)

    def test_demodulated_constant_tone(self):
        t = np.arange(10000) / FS
        s1 = demodulate_lfo(Signal(2.0 * np.cos(2 * np.pi * 5.0 * t), FS), 2.0)
        assert np.allclose(s1.samples, 2.0, atol=1e-9)

    def test_demodulated_zero(self):
        s1 = demodulate_lfo(Signal(np.zeros(4000), FS), 2.0)
        assert np.all(s1.samples == 0)

    def test_demodulated_burst_location(self):
        t = np.arange(10000) / FS
        burst = np.zeros(10000)
        burst[3000:6000] = np.hanning(3000) * np.cos(2 * np.pi * 5.0 * t[3000:6000])
        s1 = demodulate_lfo(Signal(burst, FS), 2.0).samples
        assert 3000 <= int(np.argmax(s1)) < 6000
        assert s1[:1500].max() < 0.05 * s1.max()
        assert s1[7500:].max() < 0.05 * s1.max()
        assert np.all(s1 >= 0)

    def test_cutoff_must_be_below_lfo(self):
        with pytest.raises(RepacError) as excinfo:
            demodulate_lfo(Signal(np.ones(4000), FS), 2.0, f_L_hat=1.5)
        assert excinfo.value.stage == "demodulate"

    def test_periods_of_silence(self):
        assert detect_pac_periods(Signal(np.zeros(4000), FS)) == []

    def test_single_hump(self):
        intervals = detect_pac_periods(hann_hump(10000, 2000, 8000), 0.05, 5.0)
        assert len(intervals) == 1
        start, end = intervals[0]
        assert start <= 3500 and end >= 6500

    def test_close_humps_merge_and_short_humps_drop(self):
        s1 = hann_hump(10000, 1000, 2000).samples + hann_hump(10000, 1950, 2950).samples \
            + hann_hump(10000, 6000, 6100).samples
        intervals = detect_pac_periods(Signal(s1, FS), 0.05, 5.0)
        assert len(intervals) == 1
        assert intervals[0][0] < 2000 < intervals[0][1]

    def test_negative_input(self):
        with pytest.raises(RepacError):
            detect_pac_periods(Signal(np.array([0.0, -1.0] * 100), FS))

    def test_merge_intervals(self):
        assert merge_intervals([(0, 10), (12, 20), (40, 50)], 5) == [(0, 20), (40, 50)]


class TestCombAnalysis:
    """Segment-averaged spectrum"""

    def test_comb_on_clean_events(self):
        record = synthesize(PacParams(f_L=5.0, f_H=80.0, m=1.0, L=3.0, snr_db=20.0,
                                      duration=30.0, n_events=4, seed=2))
        comb = comb_analysis(record.signal, record.truth.event_intervals, 5.0, Band(30.0, 150.0))
        assert comb.f_H_hat == pytest.approx(80.0, abs=1.0)
        assert comb.refined_hfo.lo == pytest.approx(comb.f_H_hat - 20.0)
        assert comb.refined_hfo.hi == pytest.approx(comb.f_H_hat + 20.0)
        assert comb.hfo_bandwidth == pytest.approx(40.0)
        first_teeth = [t for t in comb.teeth if abs(t["k"]) == 1]
        assert len(first_teeth) == 2
        assert all(t["level_db"] > 6.0 for t in first_teeth)
        assert all(abs(t["freq"] - (comb.f_H_hat + 5.0 * t["k"])) < 0.5 for t in first_teeth)

    def test_noise_has_no_comb(self):
        x = pink_noise(60000, FS, 9)
        intervals = [(k * 6000, k * 6000 + 2000) for k in range(10)]
        with pytest.raises(NoHfoComponentError):
            comb_analysis(x, intervals, 5.0, Band(30.0, 150.0))

    def test_band_width_ignores_reported_teeth(self):
        record = synthesize(PacParams(f_L=5.0, f_H=80.0, m=1.0, L=3.0, snr_db=20.0,
                                      duration=30.0, n_events=4, seed=2))
        comb = comb_analysis(record.signal, record.truth.event_intervals, 5.0, Band(30.0, 150.0),
                             side_peaks=2)
        assert comb.hfo_bandwidth == pytest.approx(40.0)
        assert comb.refined_hfo.hi - comb.refined_hfo.lo == pytest.approx(40.0)
        assert sorted(t["k"] for t in comb.teeth) == [-2, -1, 1, 2]

    def test_strong_line_without_side_teeth(self):
        x = pink_noise(60000, FS, 9).samples.copy()
        intervals = [(k * 6000, k * 6000 + 2000) for k in range(10)]
        t = np.arange(2000) / FS
        for start, end in intervals:
            x[start:end] += 0.5 * np.cos(2 * np.pi * 80.0 * t)
        comb = comb_analysis(Signal(x, FS), intervals, 5.0, Band(30.0, 150.0))
        assert comb.f_H_hat == pytest.approx(80.0, abs=0.5)
        assert comb.peak_db > 10.0
        assert comb.side_db < 6.0

    def test_needs_intervals(self):
        with pytest.raises(RepacError):
            comb_analysis(pink_noise(4000, FS, 0), [], 5.0, Band(30.0, 150.0))


class TestRunRepac:
    """End-to-end pipeline"""

    def setup_method(self):
        """Set up test fixtures"""
        self.cfg = RepacConfig(activity_epsilon=0.2)
        self.record = synthesize(PacParams(f_L=5.0, f_H=80.0, m=1.0, L=3.0, snr_db=0.0,
                                           duration=30.0, n_events=3, seed=7))

    def test_recovers_frequencies_and_events(self):
        result = run_repac(self.record.signal, self.cfg)
        assert result.status == "ok"
        assert result.refined_lfo.contains(5.0)
        assert result.f_L_hat == pytest.approx(5.0, abs=0.5)
        assert result.f_H_hat == pytest.approx(80.0, abs=2.5)
        assert result.refined_hfo.hi - result.refined_hfo.lo == pytest.approx(8 * result.f_L_hat)
        assert result.final_mvl > 0

        detected = np.zeros(len(self.record.signal), dtype=bool)
        for start, end in result.pac_intervals:
            detected[start:end] = True
        labels = self.record.truth.labels
        assert (detected & labels).sum() / labels.sum() >= 0.4
        for start, end in self.record.truth.event_intervals:
            assert detected[start:end].any()

    def test_intervals_sorted_and_disjoint(self):
        intervals = run_repac(self.record.signal, self.cfg).pac_intervals
        for (s0, e0), (s1, e1) in zip(intervals, intervals[1:]):
            assert e0 < s1

    def test_deterministic(self):
        a = run_repac(self.record.signal, self.cfg)
        b = run_repac(self.record.signal, self.cfg)
        assert a.pac_intervals == b.pac_intervals
        assert a.final_mvl == b.final_mvl
        assert a.f_H_hat == b.f_H_hat

    def test_no_coupling_gives_no_hfo(self):
        record = synthesize(PacParams(f_L=5.0, f_H=80.0, m=0.0, L=3.0, snr_db=0.0,
                                      duration=30.0, n_events=3, seed=7))
        result = run_repac(record.signal, replace(self.cfg, hfo_presence_db=12.0))
        assert result.status == "no_hfo"
        assert result.pac_intervals == []
        assert result.final_mvl == 0.0
        assert result.candidate_intervals

    def test_pure_noise(self):
        cfg = replace(self.cfg, activity_epsilon=0.5, hfo_presence_db=20.0)
        result = run_repac(pink_noise(20000, FS, 4), cfg)
        assert result.status in ("no_pac", "no_hfo")
        assert result.pac_intervals == []
        assert result.final_mvl == 0.0

    def test_short_record(self):
        with pytest.raises(RepacError) as excinfo:
            run_repac(pink_noise(3000, FS, 0))
        assert excinfo.value.stage == "input"

    def test_invalid_config(self):
        with pytest.raises(RepacError):
            RepacConfig(threshold_coeff=1.5).validate()
        with pytest.raises(RepacError):
            RepacConfig(comb_side_peaks=0).validate()


@pytest.mark.slow
class TestFrequencyEstimation:
    """Weak-coupling preset over many seeds"""

    def test_weak_coupling_preset(self):
        cfg = load_run_config(WEAK_COUPLING_CONFIG)
        params = cfg.synth.build()
        repac_cfg = cfg.repac.build()
        hits = 0
        for seed in range(100):
            record = synthesize(PacParams(**{**params.to_dict(), "seed": seed}))
            result = run_repac(record.signal, repac_cfg)
            if result.status != "ok":
                continue
            assert result.refined_hfo.center == pytest.approx(result.f_H_comb)
            assert result.hfo_bandwidth == pytest.approx(8 * result.f_L_hat)
            if abs(result.f_L_hat - 5.0) <= 0.5 and abs(result.f_H_hat - 80.0) <= 2.5:
                hits += 1
        assert hits >= 90
