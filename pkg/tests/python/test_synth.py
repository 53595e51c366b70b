#!/usr/bin/env python3
"""
Unit tests for synth.py
"""

import os
import sys

import numpy as np
import pytest
from scipy import signal as sp_signal

# Add the lib directory to the path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '../../lib'))

from dsp_core import (Band, Signal, analytic_signal, bandpass, instantaneous_amplitude,
                      instantaneous_phase, welch_psd)
from mvl import mvl
from synth import (GroundTruth, PacParams, SynthesisError, _place_events, make_pac_event,
                   realized_snr_db, synthesize)

FS = 1000.0


class TestPacEvent:
    """Event template"""

    def test_length(self):
        event = make_pac_event(5.0, 80.0, 0.1, 1.5, 1000.0)
        assert len(event) == 1500

    def test_hfo_only_in_troughs(self):
        fs = 1000.0
        event = make_pac_event(5.0, 80.0, 1.0, 2.0, fs).samples
        t = np.arange(event.size) / fs
        lfo = np.cos(2 * np.pi * 5.0 * t)
        window = np.hanning(event.size)
        peaks = lfo >= 0
        assert np.allclose(event[peaks], (window * lfo)[peaks])
        assert np.max(np.abs(event[~peaks] - (window * lfo)[~peaks])) > 0.1

    def test_zero_modulation_is_plain_burst(self):
        event = make_pac_event(5.0, 80.0, 0.0, 1.0, 1000.0).samples
        t = np.arange(event.size) / 1000.0
        assert np.allclose(event, np.hanning(event.size) * np.cos(2 * np.pi * 5.0 * t))

    def test_coupling_grows_with_modulation(self):
        values = []
        for m in (0.1, 0.5, 1.0):
            event = make_pac_event(5.0, 80.0, m, 5.0, FS)
            phase = instantaneous_phase(analytic_signal(bandpass(event, Band(3.0, 7.0), 2.0)))
            amplitude = instantaneous_amplitude(analytic_signal(bandpass(event, Band(60.0, 100.0), 10.0)))
            values.append(mvl(amplitude.samples, phase.samples, 100.0))
        assert values[0] > 0
        assert values[0] < values[1] < values[2]

    @pytest.mark.parametrize("kwargs", [
        dict(f_L=5.0, f_H=500.0, m=0.1, L=1.5, fs=1000.0),
        dict(f_L=5.0, f_H=80.0, m=1.5, L=1.5, fs=1000.0),
        dict(f_L=5.0, f_H=80.0, m=0.1, L=0.5, fs=1000.0),
        dict(f_L=90.0, f_H=80.0, m=0.1, L=1.5, fs=1000.0),
    ])
    def test_invalid_parameters(self, kwargs):
        with pytest.raises(SynthesisError):
            make_pac_event(**kwargs)


class TestSynthesize:
    """Record synthesis"""

    def setup_method(self):
        """Set up test fixtures"""
        self.params = PacParams(f_L=5.0, f_H=80.0, m=0.5, L=1.5, snr_db=-5.0,
                                duration=30.0, fs=1000.0, n_events=4, seed=3)

    def test_deterministic(self):
        a = synthesize(self.params)
        b = synthesize(self.params)
        assert np.array_equal(a.signal.samples, b.signal.samples)
        assert a.truth.event_intervals == b.truth.event_intervals

    def test_seed_changes_record(self):
        other = PacParams(**{**self.params.to_dict(), "seed": 4})
        assert not np.array_equal(synthesize(self.params).signal.samples,
                                  synthesize(other).signal.samples)

    def test_labels_match_events(self):
        record = synthesize(self.params)
        intervals = record.truth.event_intervals
        assert len(intervals) == 4
        assert record.truth.labels.sum() == 4 * 1500
        for (s0, e0), (s1, e1) in zip(intervals, intervals[1:]):
            assert s1 - e0 >= 500

    def test_realized_snr(self):
        record = synthesize(self.params)
        assert abs(record.realized_snr_db - self.params.snr_db) < 1e-9
        assert abs(realized_snr_db(record) - self.params.snr_db) < 1e-9

    def test_components_sum_to_signal(self):
        record = synthesize(self.params)
        assert np.allclose(record.signal.samples, record.noise + record.clean)
        assert np.all(record.clean[~record.truth.labels] == 0)

    def test_event_energy_inside_labels(self):
        for seed in range(5):
            record = synthesize(PacParams(m=1.0, L=3.0, snr_db=0.0, duration=30.0, n_events=3, seed=seed))
            energy = record.clean ** 2
            assert energy[record.truth.labels].sum() >= 0.99 * energy.sum()
            for start, end in record.truth.event_intervals:
                assert energy[start:end].sum() > 0

    def test_hfo_comb_spacing(self):
        record = synthesize(PacParams(f_L=5.0, f_H=80.0, m=1.0, L=3.0, snr_db=0.0,
                                      duration=60.0, n_events=4, seed=5))
        psd = welch_psd(Signal(record.clean, FS), 2000)
        band = (psd.freqs >= 62.0) & (psd.freqs <= 98.0)
        freqs, power = psd.freqs[band], psd.power[band]
        peaks, _ = sp_signal.find_peaks(power, height=0.01 * power.max())
        assert np.allclose(freqs[peaks], [70.0, 75.0, 80.0, 85.0, 90.0], atol=0.5)
        assert freqs[np.argmax(power)] == pytest.approx(80.0, abs=0.5)

    def test_default_parameters_over_many_seeds(self):
        for seed in range(50):
            record = synthesize(PacParams(seed=seed))
            assert len(record.truth.event_intervals) == 4

    def test_placement_after_retries(self, mocker):
        rng = mocker.Mock()
        rng.integers.side_effect = [0, 100, 500]
        assert _place_events(2, 300, 1000, 10, 5, rng) == [(0, 300), (500, 800)]
        assert rng.integers.call_count == 3

    def test_no_events(self):
        record = synthesize(PacParams(n_events=0, duration=10.0, seed=1))
        assert not record.truth.labels.any()
        assert record.realized_snr_db is None
        assert np.array_equal(record.signal.samples, record.noise)

    def test_event_count_range(self):
        counts = {len(synthesize(PacParams(n_events=(2, 5), duration=30.0, seed=s)).truth.event_intervals)
                  for s in range(10)}
        assert counts <= {2, 3, 4, 5}

    def test_occupancy_limit(self):
        with pytest.raises(SynthesisError):
            PacParams(n_events=10, L=5.0, duration=60.0).validate()

    def test_crowded_record(self):
        params = PacParams(n_events=4, L=2.0, duration=10.0, guard_s=5.0, max_retries=50)
        with pytest.raises(SynthesisError):
            synthesize(params)

    def test_invalid_count_range(self):
        with pytest.raises(SynthesisError):
            PacParams(n_events=(3, 1)).validate()


class TestGroundTruth:
    """Interval labels"""

    def test_from_intervals(self):
        truth = GroundTruth.from_intervals([(300, 400), (100, 200)], 1000)
        assert truth.event_intervals == [(100, 200), (300, 400)]
        assert truth.event_fraction == 0.2

    def test_overlap_rejected(self):
        with pytest.raises(SynthesisError):
            GroundTruth.from_intervals([(100, 300), (200, 400)], 1000)

    def test_out_of_range_rejected(self):
        with pytest.raises(SynthesisError):
            GroundTruth.from_intervals([(900, 1100)], 1000)
