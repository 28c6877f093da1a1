"""
Experiment configuration: a flat `key = value` text format read into a strict model.

Provides:
- ExperimentConfig: every run setting with its default, declared once
- config_parse: text to ExperimentConfig with line-numbered errors
- load_config: the same for a file path
"""

import logging
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator, model_validator

from .discretize import RAW_DEFECT_MAX, GridScheme
from .errors import ConfigError
from .kernel import KernelParams, KernelQuad
from .nonlinear import LINEARIZATION_TOL, SolverConfig
from .utils import split_list

logger = logging.getLogger(__name__)

Command = Literal["kernel-check", "assemble", "spectrum", "branches", "decay", "xspace", "solve"]

LIST_KEYS = {"branches", "ys", "alphas", "smallness_amplitudes", "gammas"}


class ExperimentConfig(BaseModel):
    """All settings of one kinspec run.

    Keys are grouped by the command that reads them; the kernel and grid
    keys are shared. Unknown keys are rejected.
    """

    model_config = ConfigDict(extra="forbid", frozen=True)

    command: Command | None = None

    # kernel
    d: int = Field(default=3, ge=2)
    gamma: float = Field(default=0.5, ge=0.0)
    q0: float = Field(default=1.0, gt=0.0)
    eps: float = Field(default=0.1, gt=0.0, lt=1.0)

    # kernel quadrature
    quad_order: int = Field(default=8, ge=2)
    quad_window: float = Field(default=8.0, gt=0.0)
    quad_theta_panels: int = Field(default=8, ge=1)
    quad_sphere_points: int = 26
    quad_rtol: float = Field(default=1e-6, gt=0.0)
    quad_check: bool = True

    # velocity grid
    scheme: GridScheme = "hermite"
    resolution: int = Field(default=8, ge=4)
    extent: float | None = Field(default=None, gt=0.0)
    correct: bool = True

    # kernel-check
    n_pairs: int = Field(default=2000, ge=1)
    seed: int = 0
    nu_radius: float = Field(default=8.0, gt=0.0)
    appendix: bool = True
    gammas: list[float] = Field(default_factory=list)
    mc_samples: int = Field(default=50_000, ge=100)

    # assemble / spectrum
    mapping_samples: int = Field(default=100, ge=1)
    mapping_bound_max: float | None = Field(default=None, gt=0.0)
    raw_defect_max: float = Field(default=RAW_DEFECT_MAX, gt=0.0)
    # HS cross-check runs when hs_eps is set
    hs_eps: float | None = Field(default=None, gt=0.0)
    hs_radius: float = Field(default=1.0, gt=0.0)

    # branches
    r_min: float = Field(default=0.005, gt=0.0)
    r_max: float = Field(default=0.1, gt=0.0)
    r_count: int = Field(default=12, ge=2)
    branches: list[int] = Field(default_factory=list)

    # decay
    ys: list[float] = Field(default_factory=lambda: [0.02, 0.05, 0.2, 1.0])
    alphas: list[float] = Field(default_factory=lambda: [0.5, 1.0])
    beta: float = 0.0
    t_max: float = Field(default=1e4, gt=0.0)
    t_count: int = Field(default=60, ge=4)

    # xspace
    y_count: int = Field(default=41, ge=3)
    y_min: float = Field(default=1e-4, gt=0.0)
    y_max: float = Field(default=3.0, gt=0.0)
    y_sphere_points: int = 6
    x_t_max: float = Field(default=1000.0, gt=0.0)
    x_t_count: int = Field(default=30, ge=4)

    # solve
    solve_alpha: float = 0.5
    solve_beta: float = 2.0
    solve_l: float = 2.0
    modes: int = Field(default=1, ge=1)
    period: float = Field(default=4.0, gt=0.0)
    t_final: float = Field(default=50.0, gt=0.0)
    steps: int = Field(default=40, ge=1)
    spacing: Literal["uniform", "geometric"] = "geometric"
    first_step: float = Field(default=0.05, gt=0.0)
    duhamel_order: int = Field(default=2, ge=1, le=8)
    tol: float = Field(default=1e-10, gt=0.0)
    max_iter: int = Field(default=30, ge=1)
    smallness: float = Field(default=0.05, gt=0.0)
    ceiling: float = Field(default=1e3, gt=0.0)
    sphere_points: int = 6
    nonlinear: bool = True
    conservative: bool = True
    amplitude: float = Field(default=1e-3, ge=0.0)
    smallness_amplitudes: list[float] = Field(default_factory=list)
    linearization_tol: float = Field(default=LINEARIZATION_TOL, gt=0.0)

    # output
    out: str = "results"
    cache: bool = True
    cache_dir: str = ".kinspec-cache"

    @field_validator("gamma")
    @classmethod
    def _gamma_below_d(cls, value: float, info: ValidationInfo) -> float:
        d = info.data.get("d")
        if d is not None and value >= d:
            raise ValueError(f"gamma must satisfy gamma < d = {d}, got {value}")
        return value

    @model_validator(mode="after")
    def _ranges(self) -> "ExperimentConfig":
        if self.r_min >= self.r_max:
            raise ValueError(f"r_min {self.r_min} must be below r_max {self.r_max}")
        if self.y_min >= self.y_max:
            raise ValueError(f"y_min {self.y_min} must be below y_max {self.y_max}")
        if any(j < 0 or j > self.d + 1 for j in self.branches):
            raise ValueError(f"branch labels run from 0 to d + 1 = {self.d + 1}")
        if any(g >= self.d or g < 0.0 for g in self.gammas):
            raise ValueError(f"every entry of gammas must lie in [0, {self.d})")
        try:
            self.solver_config()
        except ValidationError as e:
            raise ValueError(e.errors()[0]["msg"]) from e
        return self

    def kernel_params(self, gamma: float | None = None) -> KernelParams:
        return KernelParams(d=self.d, gamma=self.gamma if gamma is None else gamma, q0=self.q0, eps=self.eps)

    def kernel_quad(self) -> KernelQuad:
        return KernelQuad(
            order=self.quad_order,
            window=self.quad_window,
            theta_panels=self.quad_theta_panels,
            sphere_points=self.quad_sphere_points,
            rtol=self.quad_rtol,
            check=self.quad_check,
        )

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            d=self.d,
            alpha=self.solve_alpha,
            beta=self.solve_beta,
            l=self.solve_l,
            modes=self.modes,
            period=self.period,
            t_final=self.t_final,
            steps=self.steps,
            spacing=self.spacing,
            first_step=self.first_step,
            duhamel_order=self.duhamel_order,
            tol=self.tol,
            max_iter=self.max_iter,
            smallness=self.smallness,
            ceiling=self.ceiling,
            sphere_points=self.sphere_points,
            nonlinear=self.nonlinear,
            conservative=self.conservative,
        )

    def resolved(self) -> dict:
        """Every setting, defaults included, for echoing into summaries."""
        return self.model_dump(mode="json")


def _tokenize(text: str) -> tuple[dict[str, str | list[str]], dict[str, int]]:
    values: dict[str, str | list[str]] = {}
    lines: dict[str, int] = {}
    known = set(ExperimentConfig.model_fields)
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=number)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError("missing key", line=number)
        if key not in known:
            raise ConfigError(f"unknown key {key!r}", line=number)
        if key in values:
            raise ConfigError(f"duplicate key {key!r} (first set on line {lines[key]})", line=number)
        lines[key] = number
        if key in LIST_KEYS:
            values[key] = split_list(value)
        elif value.lower() in ("none", "") and ExperimentConfig.model_fields[key].default is None:
            continue
        else:
            values[key] = value
    return values, lines


def config_parse(text: str, command: str | None = None) -> ExperimentConfig:
    """Parse `key = value` lines (`#` starts a comment) into an ExperimentConfig.

    Args:
        text: Config file contents
        command: Command being run; a `command` key in the text must agree

    Returns:
        Validated ExperimentConfig

    Raises:
        ConfigError: syntax, unknown or duplicate key, type or range error,
            each with the line number when one applies
    """
    values, lines = _tokenize(text)
    if command is not None:
        given = values.get("command")
        if given is not None and given != command:
            raise ConfigError(f"config is for {given!r}, not {command!r}", line=lines["command"])
        values["command"] = command
    try:
        return ExperimentConfig.model_validate(values)
    except ValidationError as e:
        first = e.errors()[0]
        loc = first.get("loc") or ()
        key = str(loc[0]) if loc else None
        line = lines.get(key) if key else None
        name = f"{key}: " if key else ""
        raise ConfigError(f"{name}{first['msg']}", line=line) from e


def load_config(path: str | Path, command: str | None = None) -> ExperimentConfig:
    """Read and parse a config file.

    Raises:
        ConfigError: the file is missing or unreadable, or fails to parse
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    config = config_parse(text, command)
    logger.debug("loaded config %s", path)
    return config
