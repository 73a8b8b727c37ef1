"""TOML scenario documents: schema, parsing, canonical hashing and serialization."""
from __future__ import annotations

import hashlib
import json
import math
import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import replace
from pathlib import Path
from typing import Annotated, Any, Literal, Optional, Union

import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from models.gain_distribution import (
    ColluderMode,
    ColluderModel,
    EmpiricalGain,
    ExponentialGain,
    GainDistribution,
    GammaGain,
)
from models.quantizer_policy import FeedbackTopology, Scenario
from models.specs import OptimizerMethod, QuadratureSpec


class ScenarioFileError(ValueError):
    """Raised when a scenario document cannot be parsed or validated."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True)


class ExponentialLaw(_Section):
    kind: Literal["exponential"] = "exponential"
    mean: float = Field(1.0, gt=0)

    def build(self) -> GainDistribution:
        return ExponentialGain(self.mean)


class GammaLaw(_Section):
    kind: Literal["gamma"]
    shape: float = Field(gt=0)
    scale: float = Field(1.0, gt=0)

    def build(self) -> GainDistribution:
        return GammaGain(self.shape, self.scale)


class EmpiricalLaw(_Section):
    kind: Literal["empirical"]
    samples: list[Annotated[float, Field(ge=0)]] = Field(min_length=1)

    def build(self) -> GainDistribution:
        return EmpiricalGain(self.samples)


LawSpec = Annotated[Union[ExponentialLaw, GammaLaw, EmpiricalLaw], Field(discriminator="kind")]


class ColluderSection(_Section):
    mode: ColluderMode = ColluderMode.NONCOLLUDING
    M: int = Field(2, ge=1)
    base: Optional[LawSpec] = None


class ChannelSection(_Section):
    K: int = Field(ge=1)
    main: Optional[LawSpec] = None
    mains: Optional[list[LawSpec]] = None
    eve: Optional[LawSpec] = None
    sigma_e2: Optional[float] = Field(None, gt=0)
    colluder: Optional[ColluderSection] = None

    @model_validator(mode="after")
    def _check_laws(self) -> "ChannelSection":
        if self.main is not None and self.mains is not None:
            raise ValueError("give either 'main' or 'mains', not both")
        if self.mains is not None and len(self.mains) != self.K:
            raise ValueError(f"'mains' lists {len(self.mains)} laws for K = {self.K}")
        if self.eve is not None and self.sigma_e2 is not None:
            raise ValueError("give either 'eve' or 'sigma_e2', not both")
        if self.colluder is not None and self.eve is not None:
            raise ValueError("a colluder block replaces the 'eve' law")
        return self

    def main_laws(self) -> tuple[GainDistribution, ...]:
        if self.mains is not None:
            return tuple(law.build() for law in self.mains)
        law = (self.main or ExponentialLaw()).build()
        return tuple(law for _ in range(self.K))

    def eve_law(self, seed: int) -> Union[GainDistribution, ColluderModel]:
        single = self.eve.build() if self.eve is not None else ExponentialGain(self.sigma_e2 or 1.0)
        if self.colluder is None:
            return single
        base = self.colluder.base.build() if self.colluder.base is not None else single
        return ColluderModel(self.colluder.mode, base, self.colluder.M, seed=seed)


class FeedbackSection(_Section):
    b: int = Field(1, ge=1, le=16)
    topology: FeedbackTopology = FeedbackTopology.SHARED
    epsilon: float = Field(0.0, ge=0.0, le=1.0)


class PowerSection(_Section):
    P_avg: Optional[float] = Field(None, gt=0)
    P_avg_dB: Optional[float] = None

    @model_validator(mode="after")
    def _to_linear(self) -> "PowerSection":
        if self.P_avg_dB is not None:
            if self.P_avg is not None:
                raise ValueError("give either 'P_avg' or 'P_avg_dB', not both")
            self.P_avg = 10.0 ** (self.P_avg_dB / 10.0)
            self.P_avg_dB = None
        if self.P_avg is None or not math.isfinite(self.P_avg):
            raise ValueError("power section needs 'P_avg' or 'P_avg_dB'")
        return self


class OptimizerSection(_Section):
    method: Optional[OptimizerMethod] = None
    restarts: Optional[int] = Field(None, ge=1)
    power_line_search_points: Optional[int] = Field(None, ge=4)
    lambda_bisect_tol: Optional[float] = Field(None, gt=0)
    seed: Optional[int] = None
    max_iterations: Optional[int] = Field(None, ge=1)
    perfect_csit_knots: Optional[int] = Field(None, ge=1)
    refine_rounds: Optional[int] = Field(None, ge=0)
    bccm_theta_tol: Optional[float] = Field(None, gt=0)
    partition_sweeps: Optional[int] = Field(None, ge=0)
    workers: Optional[int] = Field(None, ge=1)


class SimSection(_Section):
    num_blocks: Optional[int] = Field(None, ge=2)
    seed: Optional[int] = None
    batch_size: Optional[int] = Field(None, ge=1)
    num_batches: Optional[int] = Field(None, ge=2)
    report_stderr: Optional[bool] = None
    workers: Optional[int] = Field(None, ge=1)


class QuadratureSection(_Section):
    abs_tol: Optional[float] = Field(None, gt=0)
    rel_tol: Optional[float] = Field(None, gt=0)
    max_subdivisions: Optional[int] = Field(None, ge=1)
    tail_truncation_mass: Optional[float] = Field(None, gt=0, lt=1)
    empirical_grid: Optional[int] = Field(None, ge=2)


class ScenarioDocument(_Section):
    """Parsed scenario document; every quantity is linear."""

    label: str = ""
    channel: ChannelSection
    feedback: FeedbackSection = Field(default_factory=FeedbackSection)
    power: PowerSection
    optimizer: OptimizerSection = Field(default_factory=OptimizerSection)
    sim: SimSection = Field(default_factory=SimSection)
    quadrature: QuadratureSection = Field(default_factory=QuadratureSection)

    def canonical(self) -> dict[str, Any]:
        return self.model_dump(mode="json", exclude_none=True)

    @property
    def scenario_hash(self) -> str:
        payload = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def to_toml(self) -> str:
        return tomli_w.dumps(self.canonical())

    def to_scenario(self, seed: int = 0) -> Scenario:
        assert self.power.P_avg is not None
        return Scenario(
            K=self.channel.K,
            b=self.feedback.b,
            p_avg=self.power.P_avg,
            main_laws=self.channel.main_laws(),
            eve=self.channel.eve_law(seed),
            epsilon=self.feedback.epsilon,
            feedback_topology=self.feedback.topology,
            label=self.label,
        )

    def optimizer_overrides(self) -> dict[str, Any]:
        return self.optimizer.model_dump(exclude_none=True)

    def sim_overrides(self) -> dict[str, Any]:
        return self.sim.model_dump(exclude_none=True)

    def quadrature_spec(self, base: QuadratureSpec) -> QuadratureSpec:
        return replace(base, **self.quadrature.model_dump(exclude_none=True))


_TOML_LINE = re.compile(r"at line (\d+)")


def _line_of(text: str, loc: tuple[Any, ...]) -> Optional[int]:
    """Best-effort line of the innermost named key in ``loc``."""
    names = [str(part) for part in loc if isinstance(part, str)]
    lines = text.splitlines()
    start = 0
    for name in names:
        header = re.compile(rf"^\s*\[+\s*(?:[\w.]+\.)?{re.escape(name)}\s*\]+\s*$")
        key = re.compile(rf"^\s*{re.escape(name)}\s*=")
        for index in range(start, len(lines)):
            if header.match(lines[index]) or key.match(lines[index]):
                start = index
                break
    return start + 1 if names and lines else None


def parse_scenario(text: str) -> ScenarioDocument:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        match = _TOML_LINE.search(str(exc))
        raise ScenarioFileError(f"invalid TOML: {exc}", int(match.group(1)) if match else None) from exc
    try:
        return ScenarioDocument.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(part) for part in first["loc"])
        raise ScenarioFileError(f"{where}: {first['msg']}", _line_of(text, tuple(first["loc"]))) from exc


def load_scenario(path: Path | str) -> ScenarioDocument:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioFileError(f"cannot read scenario file {path}: {exc}") from exc
    return parse_scenario(text)


__all__ = [
    "ScenarioDocument",
    "ScenarioFileError",
    "load_scenario",
    "parse_scenario",
]
