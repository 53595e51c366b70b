#!/usr/bin/env python3
"""
REPAC Toolkit - Signal files
Binary signal format with a JSON metadata sidecar, record hashing and CSV export.

Layout of a signal file:

    bytes 0-5    magic  b"PACSIG"
    bytes 6-7    format version, little-endian uint16
    bytes 8-15   sample count, little-endian uint64
    bytes 16-    samples, little-endian float64
"""

import hashlib
import json
import struct
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd
import structlog

from dsp_core import DspError, Signal
from synth import SyntheticRecord

logger = structlog.get_logger(__name__)

MAGIC = b"PACSIG"
FORMAT_VERSION = 1
HEADER = struct.Struct("<6sHQ")
SAMPLE_DTYPE = np.dtype("<f8")

PathLike = Union[str, Path]


class SignalFileError(Exception):
    """Raised for malformed signal files; `part` is header, payload or metadata"""

    def __init__(self, message: str, part: str):
        super().__init__(f"{part} error: {message}")
        self.part = part


def sidecar_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def record_hash(x: Signal) -> str:
    """Short content hash of samples and sampling rate"""
    digest = hashlib.sha256()
    digest.update(struct.pack("<d", x.fs))
    digest.update(x.samples.astype(SAMPLE_DTYPE, copy=False).tobytes())
    return digest.hexdigest()[:16]


def file_hash(path: PathLike) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_signal(path: PathLike, x: Signal, metadata: Optional[Dict[str, Any]] = None) -> Path:
    """Write samples plus a sidecar holding fs and any extra metadata"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        f.write(HEADER.pack(MAGIC, FORMAT_VERSION, len(x)))
        f.write(x.samples.astype(SAMPLE_DTYPE, copy=False).tobytes())

    sidecar = {
        "format_version": FORMAT_VERSION,
        "fs": x.fs,
        "n_samples": len(x),
        "record_hash": record_hash(x),
    }
    sidecar.update(metadata or {})
    with open(sidecar_path(path), "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
    logger.debug("signal_written", path=str(path), samples=len(x))
    return path


def write_record(path: PathLike, record: SyntheticRecord, csv_path: Optional[PathLike] = None,
                 config_echo: Optional[Dict[str, Any]] = None) -> Path:
    """Write a synthetic record, its ground truth and optionally a CSV copy"""
    metadata = {
        "params": record.params.to_dict(),
        "event_intervals": [list(iv) for iv in record.truth.event_intervals],
        "gain": record.gain,
        "realized_snr_db": record.realized_snr_db,
    }
    if config_echo is not None:
        metadata["config"] = config_echo
    write_signal(path, record.signal, metadata)
    if csv_path is not None:
        export_csv(csv_path, record.signal, record.truth.labels)
    return Path(path)


def _read_header(raw: bytes, path: Path) -> int:
    if len(raw) < HEADER.size:
        raise SignalFileError(f"{path} is {len(raw)} bytes, shorter than the {HEADER.size}-byte header",
                              part="header")
    magic, version, count = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise SignalFileError(f"{path} has bad magic {magic!r}", part="header")
    if version != FORMAT_VERSION:
        raise SignalFileError(f"{path} has unsupported format version {version}", part="header")
    return count


def read_metadata(path: PathLike) -> Dict[str, Any]:
    side = sidecar_path(path)
    if not side.exists():
        return {}
    try:
        with open(side, "r") as f:
            data = json.load(f)
    except json.JSONDecodeError as exc:
        raise SignalFileError(f"{side} is not valid JSON: {exc}", part="metadata") from exc
    if not isinstance(data, dict):
        raise SignalFileError(f"{side} must hold a JSON object", part="metadata")
    return data


def read_signal(path: PathLike, fs: Optional[float] = None) -> Tuple[Signal, Dict[str, Any]]:
    """Read a signal file; fs comes from the sidecar unless given explicitly"""
    path = Path(path)
    raw = path.read_bytes()
    count = _read_header(raw, path)

    payload = raw[HEADER.size:]
    if len(payload) % SAMPLE_DTYPE.itemsize:
        raise SignalFileError(f"{path} payload of {len(payload)} bytes is not a whole number of samples",
                              part="payload")
    if len(payload) // SAMPLE_DTYPE.itemsize != count:
        raise SignalFileError(
            f"{path} header declares {count} samples but payload holds {len(payload) // SAMPLE_DTYPE.itemsize}",
            part="payload",
        )
    if count == 0:
        raise SignalFileError(f"{path} holds no samples", part="payload")

    metadata = read_metadata(path)
    rate = fs if fs is not None else metadata.get("fs")
    if rate is None:
        raise SignalFileError(f"no sampling rate for {path}: sidecar missing and no fs given", part="metadata")

    samples = np.frombuffer(payload, dtype=SAMPLE_DTYPE).astype(np.float64)
    try:
        signal = Signal(samples, float(rate))
    except DspError as exc:
        raise SignalFileError(str(exc), part="payload") from exc
    return signal, metadata


def export_csv(path: PathLike, x: Signal, labels: Optional[np.ndarray] = None) -> Path:
    frame = pd.DataFrame({"time_s": np.arange(len(x)) / x.fs, "value": x.samples})
    if labels is not None:
        frame["pac"] = labels.astype(int)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path
