"""Strict JSON experiment configs and the shipped case configs.

A config is a JSON object.  Unknown keys anywhere are rejected, and
validation errors name the offending key path (e.g. ``methods.2.alpha``).
"""
from __future__ import annotations

import json
from importlib import resources
from pathlib import Path
from typing import List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .core import HlfszoError
from .optimizers import INITS, Method

__all__ = [
    "ConfigError",
    "ObjectiveSpec",
    "MethodSpec",
    "ExperimentSpec",
    "RunConfig",
    "CANNED_CASES",
    "parse_config",
    "load_config",
    "dump_config",
    "canned_config_path",
]

CANNED_CASES = (
    "case_1_1a",
    "case_1_1b",
    "case_1_2a",
    "case_1_2b",
    "case_1_2b_scaled",
    "case_2_1a",
    "case_2_1b",
    "case_2_2a",
    "case_2_2b",
)


class ConfigError(HlfszoError, ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ObjectiveSpec(_Strict):
    """Problem instance.  ``x_star`` may be a scalar, filled to length ``d``."""

    name: Literal["logistic", "ridge", "beale", "matyas"]
    d: Optional[int] = Field(default=None, ge=1)
    N: Optional[int] = Field(default=None, ge=1)
    x_star: Optional[Union[float, List[float]]] = None
    noise: float = Field(default=0.5, ge=0)
    c: float = Field(default=0.1, gt=0)
    noise_std: float = Field(default=0.31622776601683794, ge=0)
    dataset_seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _shape(self):
        if self.name in ("logistic", "ridge"):
            if self.d is None or self.N is None or self.x_star is None:
                raise ValueError(f"{self.name} needs d, N and x_star")
            if isinstance(self.x_star, list) and len(self.x_star) != self.d:
                raise ValueError(f"x_star has length {len(self.x_star)}, expected d={self.d}")
        elif self.d not in (None, 2):
            raise ValueError(f"{self.name} is two-dimensional, got d={self.d}")
        return self

    @property
    def dim(self) -> int:
        return 2 if self.name in ("beale", "matyas") else int(self.d)


class MethodSpec(_Strict):
    """One method entry.  ``label`` defaults to the method id and must be unique.

    ``filter_form`` takes ``delta``, ``omega_H`` and ``omega_L`` instead of
    ``eta``, ``alpha`` and ``beta``.
    """

    method: Method
    label: Optional[str] = None
    eta: Optional[float] = Field(default=None, gt=0)
    r: float = Field(gt=0)
    alpha: float = Field(default=0.0, ge=0, le=1)
    beta: float = Field(default=0.0, ge=0)
    delta: Optional[float] = Field(default=None, gt=0)
    omega_H: Optional[float] = Field(default=None, ge=0)
    omega_L: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _params(self):
        filt = (self.delta, self.omega_H, self.omega_L)
        if self.method is Method.FILTER_FORM:
            if any(v is None for v in filt):
                raise ValueError("filter_form needs delta, omega_H and omega_L")
            if self.delta * self.omega_L > 1:
                raise ValueError(f"delta * omega_L = {self.delta * self.omega_L:g} must not exceed 1")
        else:
            if self.eta is None:
                raise ValueError(f"{self.method.value} needs eta")
            if any(v is not None for v in filt):
                raise ValueError("delta/omega_H/omega_L only apply to filter_form")
        return self

    @property
    def name(self) -> str:
        return self.label or self.method.value


class ExperimentSpec(_Strict):
    objective: ObjectiveSpec
    methods: List[MethodSpec] = Field(min_length=1)
    T: int = Field(ge=0)
    n_trials: int = Field(ge=1)
    base_seed: int = Field(default=0, ge=0, lt=2 ** 64)
    x0: Union[float, List[float]] = 0.0
    record_stride: int = Field(default=1, ge=1)
    init: Literal[INITS] = "main"
    dataset_per_trial: bool = False
    store_x: Optional[bool] = None

    @model_validator(mode="after")
    def _consistent(self):
        names = [m.name for m in self.methods]
        dup = sorted({n for n in names if names.count(n) > 1})
        if dup:
            raise ValueError(f"method labels must be unique, duplicated: {dup}")
        if isinstance(self.x0, list) and len(self.x0) != self.objective.dim:
            raise ValueError(f"x0 has length {len(self.x0)}, objective dimension is {self.objective.dim}")
        return self


class RunConfig(ExperimentSpec):
    """Experiment plus CLI plumbing: a case label, output directory and worker count."""

    case: str = "custom"
    out_dir: Optional[str] = None
    workers: Optional[int] = Field(default=None, ge=1)

    def spec(self) -> ExperimentSpec:
        data = self.model_dump(exclude={"case", "out_dir", "workers"})
        return ExperimentSpec.model_validate(data)


def _format_errors(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def load_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(f"invalid config: {_format_errors(err)}") from None


def canned_config_path(name: str):
    if name not in CANNED_CASES:
        raise ConfigError(f"unknown canned case {name!r}; choose from {', '.join(CANNED_CASES)}")
    return resources.files("hlfszo") / "configs" / f"{name}.json"


def parse_config(path) -> RunConfig:
    """Read a config file, or a shipped case when ``path`` is a case name."""
    p = Path(path)
    if not p.exists() and str(path) in CANNED_CASES:
        text = canned_config_path(str(path)).read_text()
    else:
        try:
            text = p.read_text()
        except OSError as err:
            raise ConfigError(f"cannot read config {path}: {err}") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"config {path} is not valid JSON: {err}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return load_config(data)


def dump_config(cfg: BaseModel) -> str:
    return json.dumps(cfg.model_dump(mode="json", exclude_none=True), indent=2, sort_keys=True) + "\n"
