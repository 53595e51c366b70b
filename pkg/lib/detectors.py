#!/usr/bin/env python3
"""
REPAC Toolkit - Detectors
Common interface over the REPAC pipeline and the fixed-band baseline, plus a
panel that runs several detectors on the same record.
"""

import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

import structlog

from baseline import BaselineConfig, BaselineError, run_baseline
from dsp_core import DspError, Signal
from mvl import MvlError
from repac import RepacConfig, RepacError, run_repac

logger = structlog.get_logger(__name__)

DETECTOR_NAMES = ("repac", "baseline")
DETECTOR_ERRORS = (RepacError, BaselineError, DspError, MvlError)


class DetectorError(Exception):
    """Raised for unknown detectors or invalid detector configuration"""
    pass


@dataclass
class Detection:
    """Standardized outcome of one detector on one record"""
    detector: str
    intervals: List[tuple]
    score: float
    status: str
    elapsed_s: float
    result: Any = None
    error: Optional[str] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.error is not None


class BaseDetector(ABC):
    """Abstract base class for PAC detectors"""

    name = "unknown"

    def __init__(self, config):
        self.config = config

    @abstractmethod
    def _run(self, x: Signal) -> Detection:
        pass

    def detect(self, x: Signal) -> Detection:
        started = time.perf_counter()
        detection = self._run(x)
        detection.elapsed_s = time.perf_counter() - started
        return detection


class RepacDetector(BaseDetector):
    """REPAC pipeline as a detector"""

    name = "repac"

    def __init__(self, config: Optional[RepacConfig] = None):
        super().__init__((config or RepacConfig()).validate())

    def _run(self, x: Signal) -> Detection:
        result = run_repac(x, self.config)
        return Detection(
            detector=self.name,
            intervals=list(result.pac_intervals),
            score=result.final_mvl,
            status=result.status,
            elapsed_s=0.0,
            result=result,
            metadata={
                "f_L_hat": result.f_L_hat,
                "f_H_hat": result.f_H_hat,
                "low_confidence": result.low_confidence,
            },
        )


class BaselineDetector(BaseDetector):
    """Fixed-band surrogate test as a detector"""

    name = "baseline"

    def __init__(self, config: Optional[BaselineConfig] = None):
        super().__init__((config or BaselineConfig()).validate())

    def _run(self, x: Signal) -> Detection:
        result = run_baseline(x, self.config)
        return Detection(
            detector=self.name,
            intervals=list(result.pac_intervals),
            score=result.observed_mvl,
            status=result.status,
            elapsed_s=0.0,
            result=result,
            metadata={"p_value": result.p_value, "threshold": result.threshold},
        )


def create_detector(name: str, config: Union[RepacConfig, BaselineConfig, None] = None) -> BaseDetector:
    """Create detector instance by name"""
    key = name.lower()
    if key == "repac":
        if config is not None and not isinstance(config, RepacConfig):
            raise DetectorError(f"repac detector needs a RepacConfig, got {type(config).__name__}")
        return RepacDetector(config)
    if key == "baseline":
        if config is not None and not isinstance(config, BaselineConfig):
            raise DetectorError(f"baseline detector needs a BaselineConfig, got {type(config).__name__}")
        return BaselineDetector(config)
    raise DetectorError(f"Unknown detector '{name}' (expected one of {', '.join(DETECTOR_NAMES)})")


class DetectorPanel:
    """Runs every detector on the same record; a failing detector scores as no detection"""

    def __init__(self, detectors: List[BaseDetector]):
        if not detectors:
            raise DetectorError("No detectors configured")
        self.detectors = detectors

    def run(self, x: Signal, record_hash: str = "") -> Dict[str, Detection]:
        outcomes = {}
        for detector in self.detectors:
            started = time.perf_counter()
            try:
                outcomes[detector.name] = detector.detect(x)
            except Exception as exc:
                logger.warning("detector_failed", detector=detector.name, record=record_hash,
                               error=str(exc), error_type=type(exc).__name__,
                               exc_info=not isinstance(exc, DETECTOR_ERRORS))
                outcomes[detector.name] = Detection(
                    detector=detector.name,
                    intervals=[],
                    score=0.0,
                    status="failed",
                    elapsed_s=time.perf_counter() - started,
                    error=str(exc),
                )
            logger.debug("detector_done", detector=detector.name, record=record_hash,
                         status=outcomes[detector.name].status,
                         intervals=len(outcomes[detector.name].intervals))
        return outcomes
