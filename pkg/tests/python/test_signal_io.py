#!/usr/bin/env python3
"""
Unit tests for signal_io.py
"""

import json
import os
import sys

import numpy as np
import pandas as pd
import pytest

# Add the lib directory to the path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '../../lib'))

from dsp_core import Signal
from signal_io import (HEADER, MAGIC, SignalFileError, export_csv, file_hash, read_metadata,
                       read_signal, record_hash, sidecar_path, write_record, write_signal)
from synth import PacParams, synthesize


class TestSignalFiles:
    """Binary layout and sidecar handling"""

    def setup_method(self):
        """Set up test fixtures"""
        self.signal = Signal(np.random.default_rng(0).standard_normal(1000), 500.0)

    def test_write_then_read(self, tmp_path):
        path = write_signal(tmp_path / "x.pacsig", self.signal, {"subject": "s01"})
        loaded, metadata = read_signal(path)
        assert np.array_equal(loaded.samples, self.signal.samples)
        assert loaded.fs == 500.0
        assert metadata["subject"] == "s01"
        assert metadata["record_hash"] == record_hash(self.signal)

    def test_header_layout(self, tmp_path):
        path = write_signal(tmp_path / "x.pacsig", self.signal)
        raw = path.read_bytes()
        assert raw[:6] == MAGIC
        assert HEADER.size == 16
        assert len(raw) == 16 + 8 * 1000

    def test_explicit_fs_without_sidecar(self, tmp_path):
        path = write_signal(tmp_path / "x.pacsig", self.signal)
        sidecar_path(path).unlink()
        assert read_metadata(path) == {}
        with pytest.raises(SignalFileError) as excinfo:
            read_signal(path)
        assert excinfo.value.part == "metadata"
        loaded, _ = read_signal(path, fs=250.0)
        assert loaded.fs == 250.0

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.pacsig"
        path.write_bytes(HEADER.pack(b"NOTSIG", 1, 0))
        with pytest.raises(SignalFileError) as excinfo:
            read_signal(path, fs=100.0)
        assert excinfo.value.part == "header"

    def test_truncated_header(self, tmp_path):
        path = tmp_path / "short.pacsig"
        path.write_bytes(b"PAC")
        with pytest.raises(SignalFileError, match="header"):
            read_signal(path, fs=100.0)

    def test_unsupported_version(self, tmp_path):
        path = tmp_path / "v9.pacsig"
        path.write_bytes(HEADER.pack(MAGIC, 9, 0))
        with pytest.raises(SignalFileError, match="version"):
            read_signal(path, fs=100.0)

    def test_count_mismatch(self, tmp_path):
        path = tmp_path / "x.pacsig"
        path.write_bytes(HEADER.pack(MAGIC, 1, 10) + np.zeros(5).tobytes())
        with pytest.raises(SignalFileError) as excinfo:
            read_signal(path, fs=100.0)
        assert excinfo.value.part == "payload"

    def test_partial_sample(self, tmp_path):
        path = tmp_path / "x.pacsig"
        path.write_bytes(HEADER.pack(MAGIC, 1, 1) + b"\x00" * 12)
        with pytest.raises(SignalFileError, match="whole number"):
            read_signal(path, fs=100.0)

    def test_zero_length(self, tmp_path):
        path = tmp_path / "empty.pacsig"
        path.write_bytes(HEADER.pack(MAGIC, 1, 0))
        with pytest.raises(SignalFileError) as excinfo:
            read_signal(path, fs=100.0)
        assert excinfo.value.part == "payload"

    def test_non_finite_samples(self, tmp_path):
        path = tmp_path / "nan.pacsig"
        path.write_bytes(HEADER.pack(MAGIC, 1, 2) + np.array([0.0, np.nan], dtype="<f8").tobytes())
        with pytest.raises(SignalFileError):
            read_signal(path, fs=100.0)

    def test_corrupt_sidecar(self, tmp_path):
        path = write_signal(tmp_path / "x.pacsig", self.signal)
        sidecar_path(path).write_text("{not json")
        with pytest.raises(SignalFileError) as excinfo:
            read_signal(path)
        assert excinfo.value.part == "metadata"

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            read_signal(tmp_path / "nope.pacsig", fs=100.0)


class TestRecords:
    """Synthetic record export and hashing"""

    def setup_method(self):
        """Set up test fixtures"""
        self.record = synthesize(PacParams(duration=10.0, n_events=2, seed=1))

    def test_record_sidecar(self, tmp_path):
        path = write_record(tmp_path / "rec.pacsig", self.record, config_echo={"synth": {"seed": 1}})
        metadata = json.loads(sidecar_path(path).read_text())
        assert metadata["params"]["seed"] == 1
        assert metadata["event_intervals"] == [list(iv) for iv in self.record.truth.event_intervals]
        assert metadata["config"] == {"synth": {"seed": 1}}
        assert metadata["realized_snr_db"] == pytest.approx(-5.0)

    def test_identical_records_hash_identically(self, tmp_path):
        a = write_record(tmp_path / "a.pacsig", self.record)
        b = write_record(tmp_path / "b.pacsig", synthesize(PacParams(duration=10.0, n_events=2, seed=1)))
        assert file_hash(a) == file_hash(b)

    def test_hash_depends_on_rate(self):
        x = self.record.signal
        assert record_hash(x) != record_hash(Signal(x.samples, x.fs * 2))
        assert len(record_hash(x)) == 16

    def test_csv_export(self, tmp_path):
        path = write_record(tmp_path / "rec.pacsig", self.record, csv_path=tmp_path / "rec.csv")
        assert path.exists()
        frame = pd.read_csv(tmp_path / "rec.csv")
        assert list(frame.columns) == ["time_s", "value", "pac"]
        assert len(frame) == 10000
        assert frame["pac"].sum() == self.record.truth.labels.sum()

    def test_csv_without_labels(self, tmp_path):
        frame = pd.read_csv(export_csv(tmp_path / "x.csv", self.record.signal))
        assert list(frame.columns) == ["time_s", "value"]
