#!/usr/bin/env python3
"""
REPAC Toolkit - Run configuration
pydantic models for every command section, loaded from YAML with command-line
overrides. Validation errors name the dotted field and, when the value came
from a file, its line.
"""

import copy
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import structlog
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from baseline import BaselineConfig, BaselineError
from bench import AcceptanceGate, BenchError, BenchGrid
from dsp_core import Band, DspError
from mvl import DEFAULT_HAS_SET, MvlError, default_lfo_grid
from repac import RepacConfig, RepacError
from synth import PacParams, SynthesisError

logger = structlog.get_logger(__name__)

CONFIG_ENV = "REPAC_CONFIG"
MODULE_ERRORS = (DspError, MvlError, SynthesisError, RepacError, BaselineError, BenchError)

BandTuple = Tuple[float, float]


class ConfigError(Exception):
    """Raised when a run configuration fails to parse or validate"""

    def __init__(self, errors: List[str]):
        super().__init__("Invalid configuration:\n  " + "\n  ".join(errors))
        self.errors = errors


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")

    @model_validator(mode="after")
    def _delegate(self):
        try:
            self.build()
        except MODULE_ERRORS as exc:
            raise ValueError(str(exc)) from exc
        return self

    def build(self):
        return None


class SynthSection(_Section):
    f_L: float = 5.0
    f_H: float = 80.0
    m: float = 0.1
    L: float = 1.5
    snr_db: float = -5.0
    duration: float = 60.0
    fs: float = 1000.0
    n_events: Union[int, Tuple[int, int]] = 4
    seed: int = 0
    guard_s: float = 0.5
    max_retries: int = 1000

    def build(self) -> PacParams:
        return PacParams(**self.model_dump()).validate()


class LfoGridSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    lo: float = 2.0
    hi: float = 15.0
    width: float = 2.0
    hop: float = 1.0


class RepacSection(_Section):
    lfo_grid: LfoGridSection = Field(default_factory=LfoGridSection)
    candidate_hfo_band: BandTuple = (30.0, 150.0)
    has_set: List[float] = Field(default_factory=lambda: list(DEFAULT_HAS_SET))
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

    def build(self) -> RepacConfig:
        fields = self.model_dump(exclude={"lfo_grid", "candidate_hfo_band", "has_set"})
        return RepacConfig(
            candidate_lfo_bands=tuple(default_lfo_grid(**self.lfo_grid.model_dump())),
            candidate_hfo_band=Band(*self.candidate_hfo_band),
            has_set=tuple(self.has_set),
            **fields,
        ).validate()


class BaselineSection(_Section):
    lfo_band: BandTuple = (4.0, 8.0)
    hfo_band: BandTuple = (70.0, 90.0)
    has_set: List[float] = Field(default_factory=lambda: list(DEFAULT_HAS_SET))
    n_surrogates: int = 200
    alpha: float = 0.05
    min_shift_s: float = 1.0
    window_s: float = 1.0
    window_overlap: float = 0.5
    window_surrogates: int = 20
    window_alpha: Optional[float] = None
    lfo_transition_hz: float = 2.0
    hfo_transition_hz: float = 10.0
    seed: int = 0

    def build(self) -> BaselineConfig:
        fields = self.model_dump(exclude={"lfo_band", "hfo_band", "has_set"})
        return BaselineConfig(
            lfo_band=Band(*self.lfo_band),
            hfo_band=Band(*self.hfo_band),
            has_set=tuple(self.has_set),
            **fields,
        ).validate()


class GateSection(_Section):
    detector: str
    metric: str
    min: Optional[float] = None
    max: Optional[float] = None
    minus: Optional[str] = None
    snr: Optional[float] = None
    m: Optional[float] = None
    L: Optional[float] = None
    increasing_in: Optional[str] = None
    slack: float = 0.0

    def build(self) -> AcceptanceGate:
        return AcceptanceGate(**self.model_dump()).validate()


class BenchSection(_Section):
    snr_values: List[float] = Field(default_factory=lambda: [-18.0, -10.0, -5.0, 0.0])
    m_values: List[float] = Field(default_factory=lambda: [0.1, 0.5, 1.0])
    L_values: List[float] = Field(default_factory=lambda: [1.5, 3.0, 5.0])
    f_L_policy: str = "uniform"
    f_H_policy: str = "uniform"
    f_L: float = 5.0
    f_H: float = 80.0
    f_L_range: BandTuple = (4.0, 10.0)
    f_H_range: BandTuple = (60.0, 100.0)
    trials_per_cell: int = 20
    master_seed: int = 0
    duration: float = 60.0
    fs: float = 1000.0
    event_density: float = 0.1
    n_jobs: int = 1
    gates: List[GateSection] = Field(default_factory=list)

    def build(self) -> BenchGrid:
        fields = self.model_dump(exclude={"gates", "snr_values", "m_values", "L_values"})
        return BenchGrid(
            snr_values=tuple(self.snr_values),
            m_values=tuple(self.m_values),
            L_values=tuple(self.L_values),
            **fields,
        ).validate()

    def build_gates(self) -> List[AcceptanceGate]:
        return [gate.build() for gate in self.gates]


class PsdSection(_Section):
    segment_s: float = 2.0
    overlap: float = 0.5
    fmin: Optional[float] = None
    fmax: Optional[float] = None

    def build(self):
        if self.segment_s <= 0:
            raise DspError(f"segment_s must be positive, got {self.segment_s}")
        if not 0 <= self.overlap < 1:
            raise DspError(f"overlap must be in [0, 1), got {self.overlap}")
        if self.fmin is not None and self.fmax is not None and self.fmin >= self.fmax:
            raise DspError(f"empty frequency band: fmin={self.fmin} >= fmax={self.fmax}")
        return None


class RunConfig(BaseModel):
    """Effective configuration of one invocation"""
    model_config = ConfigDict(extra="forbid")

    synth: SynthSection = Field(default_factory=SynthSection)
    repac: RepacSection = Field(default_factory=RepacSection)
    baseline: BaselineSection = Field(default_factory=BaselineSection)
    bench: BenchSection = Field(default_factory=BenchSection)
    psd: PsdSection = Field(default_factory=PsdSection)

    def echo(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

def _node_line(node: Optional[yaml.Node], loc: Tuple) -> Optional[int]:
    """1-based line of the YAML node at `loc`, or the closest ancestor found"""
    line = None
    for key in loc:
        if node is None:
            break
        line = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            node = next((v for k, v in node.value if k.value == str(key)), None)
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
        else:
            node = None
    if node is not None:
        line = node.start_mark.line + 1
    return line


def set_dotted(data: Dict[str, Any], dotted: str, value: Any) -> None:
    target = data
    parts = dotted.split(".")
    for part in parts[:-1]:
        target = target.setdefault(part, {})
        if not isinstance(target, dict):
            raise ConfigError([f"{dotted}: cannot override inside a non-mapping value"])
    target[parts[-1]] = value


def _format_errors(exc: ValidationError, root: Optional[yaml.Node], overrides: Dict[str, Any]) -> List[str]:
    messages = []
    for error in exc.errors():
        loc = tuple(error["loc"])
        dotted = ".".join(str(part) for part in loc) or "<root>"
        if dotted in overrides:
            where = " (command line)"
        else:
            line = _node_line(root, loc) if root is not None else None
            where = f" (line {line})" if line else ""
        message = error["msg"].removeprefix("Value error, ")
        messages.append(f"{dotted}{where}: {message}")
    return messages


def load_run_config(path: Optional[Union[str, Path]] = None,
                    overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Load YAML (or REPAC_CONFIG), apply dotted overrides, validate everything"""
    overrides = {k: v for k, v in (overrides or {}).items() if v is not None}
    path = path or os.environ.get(CONFIG_ENV) or None

    data: Dict[str, Any] = {}
    root = None
    if path is not None:
        text = Path(path).read_text()
        try:
            root = yaml.compose(text)
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            where = f" (line {mark.line + 1})" if mark is not None else ""
            raise ConfigError([f"{path}{where}: {getattr(exc, 'problem', None) or exc}"]) from exc
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError([f"{path}: top level must be a mapping"])
        data = copy.deepcopy(loaded or {})
        logger.debug("config_loaded", path=str(path))

    for dotted, value in overrides.items():
        set_dotted(data, dotted, value)

    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc, root, overrides)) from exc
