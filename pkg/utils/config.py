"""Runtime settings from the environment and the validated experiment configuration file."""

import difflib
import json
import os
from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import (
    AfterValidator,
    BaseModel,
    ConfigDict,
    Field,
    ValidationError,
    field_validator,
    model_validator,
)

from numerics.errors import ConfigurationError
from numerics.potential import PotentialModel, ShortRange

SCHEMA_VERSION = "1"
EXPERIMENT_KINDS = ("flow", "quasimode", "pairings", "observability", "garding", "suite")
KIND_ALIASES = {"gaarding": "garding", "full-suite": "suite"}


class Settings(BaseModel):
    """Process settings read from the environment."""

    logging_preset: str = Field(default="development", description="Logging preset name")
    log_file: str = Field(default="logs/lab.log", description="Rotating log file path")
    threads: int = Field(default=1, description="Default number of worker threads")
    seed: int = Field(default=20240101, description="Default random seed")

    @field_validator("logging_preset")
    def validate_preset(cls, value: str) -> str:
        if value not in ("development", "production", "minimal"):
            return "development"
        return value

    @field_validator("threads")
    def validate_threads(cls, value: int) -> int:
        if not 1 <= value <= 256:
            raise ValueError("threads must be between 1 and 256")
        return value

    @classmethod
    def from_env(cls) -> "Settings":
        load_dotenv()

        return cls(
            logging_preset=os.getenv("LOGGING_PRESET", "development"),
            log_file=os.getenv("LOG_FILE", "logs/lab.log"),
            threads=int(os.getenv("LAB_THREADS", "1")),
            seed=int(os.getenv("LAB_SEED", "20240101")),
        )


settings: Optional[Settings] = None


def get_settings() -> Settings:
    global settings
    if settings is None:
        settings = Settings.from_env()
    return settings


def reload_settings() -> Settings:
    global settings
    settings = Settings.from_env()
    return settings


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


def _strictly_decreasing(values: List[float]) -> List[float]:
    if not values:
        raise ValueError("h_list must not be empty")
    if any(h <= 0 for h in values):
        raise ValueError("h values must be positive")
    if any(b >= a for a, b in zip(values, values[1:])):
        raise ValueError("h_list must be strictly decreasing")
    return values


HList = Annotated[List[float], AfterValidator(_strictly_decreasing)]


class PotentialSection(_Section):
    """V_inf as Fourier coefficient maps plus an optional short-range part."""

    cos: Dict[int, float] = Field(default_factory=lambda: {0: 1.5, 1: -2.0, 2: 0.5})
    sin: Dict[int, float] = Field(default_factory=dict)
    short_range: Optional[ShortRange] = None

    def build(self, energy: float = 0.0) -> PotentialModel:
        return PotentialModel.from_coefficients(
            cos=self.cos, sin=self.sin, short_range=self.short_range, energy=energy
        )


class FlowSection(_Section):
    tol: float = Field(default=1e-10, gt=0.0, description="Integrator rtol and atol")
    t_end: float = Field(default=200.0, gt=0.0)
    samples: int = Field(default=4001, ge=101)
    method: Literal["DOP853", "RK45"] = "DOP853"
    ensemble: int = Field(default=20, ge=1, description="Random initial conditions")
    initial_point: Optional[Tuple[float, float, float]] = Field(
        None, description="(rho, theta, eta) to integrate instead of the ensemble"
    )
    tau_end: float = Field(default=5.0, gt=0.0, description="Horizon of the full-flow bridge check")
    bridge_scenarios: int = Field(default=5, ge=0)
    potentials: List[Literal["configured", "cosine", "quartic"]] = Field(
        default_factory=lambda: ["cosine", "quartic"],
        min_length=1,
        description="Potentials the ensemble runs on; 'configured' is the potential section",
    )

    @field_validator("potentials")
    def validate_unique(cls, value: List[str]) -> List[str]:
        if len(set(value)) != len(value):
            raise ValueError("flow potentials must not repeat")
        return value


class QuasimodeSection(_Section):
    case: int = Field(default=1, ge=1, le=2)
    theta0: float = 0.0
    k: Optional[int] = Field(None, ge=0, description="Critical order; derived from V when omitted")
    energy: Optional[float] = Field(None, description="Case 2 energy; case 1 uses V(theta0)")
    epsilon_exp: float = Field(default=0.1, gt=0.0)
    support_constant: float = Field(default=1.0, gt=0.0)
    h_list: HList = Field(default_factory=lambda: [0.1, 0.05, 0.025, 0.0125])
    points_across: int = Field(default=128, ge=32)
    points_per_width: float = Field(default=1200.0, gt=0.0)
    delta: float = Field(default=0.5, gt=0.0, le=1.0, description="Exponent of the c(h) envelope")
    export_fields: bool = Field(default=False, description="Write the coarsest quasimode in the polar matrix format")


class CutoffSection(_Section):
    kind: Literal["j-step", "J-log"] = "j-step"
    epsilon: Optional[float] = Field(None, gt=0.0)
    delta: float = Field(default=0.5, gt=0.0, le=1.0)


class PairingsSection(_Section):
    h_list: HList = Field(default_factory=lambda: [0.2, 0.14, 0.1, 0.07])
    N: int = Field(default=128, ge=16)
    box_factor: float = Field(default=2.4, gt=2.0)
    stride: int = Field(default=2, ge=1)
    cutoff: CutoffSection = Field(default_factory=CutoffSection)
    tol: float = Field(default=0.1, gt=0.0)
    export_wigner_slice: bool = Field(default=False, description="Write W(x, .) at the peak for the coarsest h")

    @field_validator("h_list")
    def validate_length(cls, value: List[float]) -> List[float]:
        if len(value) < 4:
            raise ValueError("pairing sweeps need at least 4 values of h")
        return value


class ObservabilitySection(_Section):
    h_list: HList = Field(default_factory=lambda: [0.1, 0.07, 0.05])
    T: float = Field(default=1.0, gt=0.0)
    dt: float = Field(default=0.005, gt=0.0)
    L: float = Field(default=64.0, gt=0.0)
    N: int = Field(default=512, ge=16)
    C: float = Field(default=1.5, gt=0.0)
    exponent: Optional[float] = Field(None, ge=0.0, description="Collar exponent; 1/(k+1) when omitted")
    R: float = Field(default=1.0, ge=0.0)
    region: Literal["collar_complement", "everything", "half_plane"] = "collar_complement"
    include_inner_ball: bool = False
    threshold: float = Field(default=0.1, gt=0.0)
    bound_limit: float = Field(default=10.0, gt=0.0)
    refinement_T: float = Field(default=0.1, ge=0.0, description="Horizon of the dt-refinement check; 0 disables it")
    export_fields: bool = Field(default=False, description="Write the final field of the finest h")


class GardingSection(_Section):
    h_list: HList = Field(default_factory=lambda: [0.2, 0.1, 0.05])
    trials: int = Field(default=20, ge=20)
    L: float = Field(default=2.4, gt=0.0)
    N: int = Field(default=48, ge=8, le=64)
    C_limit: float = Field(default=3.0, gt=0.0)


class ExperimentConfig(BaseModel):
    """One experiment run as read from JSON; every field has a documented default."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    schema_version: str = Field(default=SCHEMA_VERSION)
    kind: Literal["flow", "quasimode", "pairings", "observability", "garding", "suite"]
    potential: PotentialSection = Field(default_factory=PotentialSection)
    energy: float = Field(default=0.0, description="Energy level E")
    flow: FlowSection = Field(default_factory=FlowSection)
    quasimode: QuasimodeSection = Field(default_factory=QuasimodeSection)
    pairings: PairingsSection = Field(default_factory=PairingsSection)
    observability: ObservabilitySection = Field(default_factory=ObservabilitySection)
    garding: GardingSection = Field(default_factory=GardingSection)
    seed: Optional[int] = Field(None, ge=0)
    threads: int = Field(default=1, ge=1, le=256)
    tol: Optional[float] = Field(None, gt=0.0, description="Overrides verdict tolerances")
    output_dir: str = Field(default="runs/latest")

    @field_validator("kind", mode="before")
    def resolve_alias(cls, value):
        if isinstance(value, str):
            return KIND_ALIASES.get(value, value)
        return value

    @field_validator("schema_version")
    def validate_version(cls, value: str) -> str:
        if value != SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {value!r}, expected {SCHEMA_VERSION!r}")
        return value

    @model_validator(mode="after")
    def validate_potential(self) -> "ExperimentConfig":
        if not self.potential.cos and not self.potential.sin:
            raise ValueError("potential needs at least one Fourier coefficient")
        return self

    def build_potential(self) -> PotentialModel:
        return self.potential.build(self.energy)

    def resolved_seed(self) -> int:
        return self.seed if self.seed is not None else get_settings().seed


SECTION_MODELS = {
    "potential": PotentialSection,
    "flow": FlowSection,
    "quasimode": QuasimodeSection,
    "pairings": PairingsSection,
    "observability": ObservabilitySection,
    "garding": GardingSection,
    "cutoff": CutoffSection,
}


def _candidates(loc: Tuple) -> List[str]:
    parents = [part for part in loc[:-1] if isinstance(part, str)]
    if not parents:
        return list(ExperimentConfig.model_fields)
    model = SECTION_MODELS.get(parents[-1])
    if model is None:
        return []
    return list(model.model_fields)


def format_validation_error(error: ValidationError) -> str:
    """One line per problem: dotted field path, message and a suggestion for unknown keys."""
    lines = []
    for item in error.errors():
        loc = tuple(item.get("loc", ()))
        path = ".".join(str(part) for part in loc) or "<root>"
        message = item.get("msg", "invalid value")
        if item.get("type") == "extra_forbidden" and loc:
            close = difflib.get_close_matches(str(loc[-1]), _candidates(loc), n=1)
            message = "unknown key"
            if close:
                message += f" (did you mean '{close[0]}'?)"
        lines.append(f"{path}: {message}")
    return "; ".join(lines)


def parse_config(data: dict) -> ExperimentConfig:
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as error:
        raise ConfigurationError(format_validation_error(error)) from error


def load_config(path) -> ExperimentConfig:
    """Read and validate an experiment JSON file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file {path} does not exist")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as error:
        raise ConfigurationError(f"{path}: invalid JSON ({error.msg} at line {error.lineno})") from error
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: top level must be an object")
    return parse_config(data)


def apply_overrides(
    config: ExperimentConfig,
    output_dir: Optional[str] = None,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    tol: Optional[float] = None,
) -> ExperimentConfig:
    """CLI flags on top of the file, re-validated."""
    update = {
        key: value
        for key, value in {"output_dir": output_dir, "seed": seed, "threads": threads, "tol": tol}.items()
        if value is not None
    }
    if not update:
        return config
    return parse_config({**config.model_dump(mode="json"), **update})
