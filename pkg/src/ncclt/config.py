"""Experiment configuration: a single JSON document, validated and realizable.

parse/emit round-trip exactly; realize() turns the declaration into live
process/observable/index-family objects, converting any construction failure
into ConfigError so the caller can map it to the configuration exit status.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from . import observables, processes
from .errors import ConfigError, LabError

FORMAT_VERSION = "1"

Mode = Literal[
    "rate", "variance", "stein", "inequalities", "return-times", "dump-neighborhoods"
]


class ProcessConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["iid", "chain", "shift"]
    marginal: Optional[List[float]] = None
    transition: Optional[List[List[float]]] = None
    embedding: Optional[Union[List[float], List[List[float]]]] = None
    coding_width: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check(self) -> "ProcessConfig":
        if self.kind == "iid" and self.marginal is None:
            raise ValueError("process.marginal is required for kind=iid")
        if self.kind == "chain" and self.transition is None:
            raise ValueError("process.transition is required for kind=chain")
        if self.kind == "shift" and self.marginal is None and self.transition is None:
            raise ValueError("process needs marginal or transition for kind=shift")
        if self.kind != "shift" and self.coding_width != 0:
            raise ValueError("process.coding_width is only meaningful for kind=shift")
        return self


class ObservableConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    builder: Literal["product", "table", "indicator", "identity"]
    power: int = Field(default=1, ge=1)
    values: Optional[List[float]] = None
    bound: Optional[float] = None
    sets: Optional[List[List[int]]] = None
    center: bool = True

    @model_validator(mode="after")
    def _check(self) -> "ObservableConfig":
        if self.builder == "table" and self.values is None:
            raise ValueError("observable.values is required for builder=table")
        if self.builder == "indicator" and self.sets is None:
            raise ValueError("observable.sets is required for builder=indicator")
        return self


class IndexFamilyConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["linear", "polynomial"]
    ell: Optional[int] = Field(default=None, ge=1)
    coefficients: Optional[List[List[int]]] = None

    @model_validator(mode="after")
    def _check(self) -> "IndexFamilyConfig":
        if self.kind == "linear" and self.ell is None:
            raise ValueError("index_family.ell is required for kind=linear")
        if self.kind == "polynomial" and not self.coefficients:
            raise ValueError("index_family.coefficients is required for kind=polynomial")
        return self

    @property
    def arity(self) -> int:
        return self.ell if self.kind == "linear" else len(self.coefficients)


class ReplicationsConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    T: int = Field(ge=1)
    T_cal: int = Field(default=1000, ge=100)


class SteinConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    A: float = Field(default=2.0, gt=0)
    C0_prime: Optional[float] = None
    independent_moments: bool = False


class InequalitiesConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    instances: int = Field(default=200, ge=1)
    smoothing_pairs: int = Field(default=500, ge=0)
    bs: List[int] = Field(default_factory=lambda: [1, 2, 4])


class ReturnTimesConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sets: List[List[int]]


class NeighborhoodDumpConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    N: int = Field(ge=1)
    l: int = Field(ge=0)


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    mode: Mode
    master_seed: int = Field(ge=0, lt=2**64)
    output: str = "out"
    process: Optional[ProcessConfig] = None
    observable: Optional[ObservableConfig] = None
    index_family: Optional[IndexFamilyConfig] = None
    grid: Optional[List[int]] = None
    replications: Optional[ReplicationsConfig] = None
    stein: SteinConfig = Field(default_factory=SteinConfig)
    inequalities: InequalitiesConfig = Field(default_factory=InequalitiesConfig)
    return_times: Optional[ReturnTimesConfig] = None
    neighborhood: Optional[NeighborhoodDumpConfig] = None

    @model_validator(mode="after")
    def _check(self) -> "ExperimentConfig":
        needs_instance = self.mode in ("rate", "variance", "stein", "return-times")
        if needs_instance:
            for field in ("process", "index_family", "grid", "replications"):
                if getattr(self, field) is None:
                    raise ValueError(f"{field} is required for mode={self.mode}")
            if self.grid is not None:
                if len(self.grid) < 1 or any(b <= a for a, b in zip(self.grid, self.grid[1:])):
                    raise ValueError("grid must be strictly increasing")
        if self.mode in ("rate", "variance", "stein") and self.observable is None:
            raise ValueError(f"observable is required for mode={self.mode}")
        if self.mode == "rate" and self.replications is not None and self.replications.T < 10**3:
            raise ValueError("replications.T must be >= 1000 for mode=rate")
        if self.mode == "return-times" and self.return_times is None:
            raise ValueError("return_times.sets is required for mode=return-times")
        if self.mode == "dump-neighborhoods":
            if self.index_family is None or self.neighborhood is None:
                raise ValueError(
                    "index_family and neighborhood {N, l} are required for mode=dump-neighborhoods"
                )
        return self


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a JSON config document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    return config_from_dict(doc)


def config_from_dict(doc: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(doc)
    except ValidationError as e:
        parts = []
        for err in e.errors():
            loc = ".".join(str(p) for p in err["loc"]) or "<root>"
            parts.append(f"{loc}: {err['msg']}")
        raise ConfigError("; ".join(parts)) from e


def config_to_dict(config: ExperimentConfig) -> dict:
    return config.model_dump(mode="json", exclude_none=True)


def emit_config(config: ExperimentConfig) -> str:
    """Canonical JSON text; parse_config(emit_config(c)) == c."""
    return json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"), ensure_ascii=False)


# -- realization -----------------------------------------------------------------


@dataclass(frozen=True)
class RealizedExperiment:
    config: ExperimentConfig
    spec: Optional[processes.ProcessSpec]
    F: Optional[observables.Observable]
    q: Optional[observables.IndexFamily]


def _build_process(pc: ProcessConfig) -> processes.ProcessSpec:
    if pc.kind == "iid":
        return processes.build_iid(pc.marginal, embedding=pc.embedding)
    if pc.kind == "chain":
        spec = processes.build_doeblin_chain(pc.transition, embedding=pc.embedding)
        if pc.marginal is not None:
            import numpy as np

            if np.abs(np.asarray(pc.marginal) - spec.marginal).max() > 1e-9:
                raise ConfigError("process.marginal is not stationary for the transition matrix")
        return spec
    return processes.build_shift_system(
        marginal=pc.marginal,
        transition=pc.transition,
        coding_width=pc.coding_width,
        window_values=pc.embedding,
    )


def _build_index_family(ic: IndexFamilyConfig) -> observables.IndexFamily:
    if ic.kind == "linear":
        return observables.linear_index_family(ic.ell)
    return observables.polynomial_index_family(ic.coefficients)


def _build_observable(
    oc: ObservableConfig, spec: processes.ProcessSpec, arity: int
) -> observables.Observable:
    if oc.builder == "product":
        F = observables.make_product_observable(spec, arity, power=oc.power)
    elif oc.builder == "identity":
        if arity != 1:
            raise ConfigError("observable.builder=identity requires an arity-1 index family")
        F = observables.make_product_observable(spec, 1, power=oc.power)
    elif oc.builder == "table":
        expected = spec.input_code_count**arity
        if len(oc.values) != expected:
            raise ConfigError(
                f"observable.values has {len(oc.values)} entries, expected {expected}"
            )
        F = observables.make_table_observable(oc.values, arity, spec)
        if oc.bound is not None and F.bound_M > oc.bound + 1e-12:
            raise ConfigError(
                f"observable.bound {oc.bound} is below the table maximum {F.bound_M}"
            )
    else:
        F = observables.make_return_time_observable(oc.sets, spec.alphabet_size)
        if len(oc.sets) != arity:
            raise ConfigError(f"observable.sets has {len(oc.sets)} sets, expected {arity}")
    if oc.center:
        F = observables.center(F, spec)
    return F


def realize(config: ExperimentConfig) -> RealizedExperiment:
    """Build the live objects a mode needs; construction errors become ConfigError."""
    spec = F = q = None
    try:
        if config.process is not None:
            spec = _build_process(config.process)
        if config.index_family is not None:
            q = _build_index_family(config.index_family)
        if config.observable is not None and spec is not None and q is not None:
            F = _build_observable(config.observable, spec, config.index_family.arity)
    except ConfigError:
        raise
    except (LabError, ValueError) as e:
        raise ConfigError(str(e)) from e
    return RealizedExperiment(config=config, spec=spec, F=F, q=q)
