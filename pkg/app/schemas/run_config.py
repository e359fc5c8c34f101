from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.config import settings
from app.models.params import ModelKind
from app.models.processes import ParamProcessKind, ParamProcessSpec


COMMANDS = ("estimate", "calibrate", "simulate", "converge", "rank", "moments")

# parameter-process kind -> preset number
_PRESET_NUMBERS = {
    ParamProcessKind.CONSTANT: "1",
    ParamProcessKind.RAMP: "2",
    ParamProcessKind.CIR: "3",
    ParamProcessKind.GBM: "4",
}


class RunConfig(BaseModel):
    """
    Parameters of one command invocation.

    model is "vasicek" or "cir", optionally with a preset suffix
    ("vasicek-v2", "cir-4") that fixes the parameter process.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    command: str
    model: str = "vasicek"
    param_process: ParamProcessKind = ParamProcessKind.CONSTANT
    level: float = Field(default=settings.DEFAULT_LEVEL, ge=0)
    beta: float = Field(default=settings.DEFAULT_BETA, lt=0)

    delta: float = Field(default=settings.DELTA, gt=0)
    steps: int = Field(default=240, ge=0)
    paths: int = Field(default=1000, ge=1)
    seed: int = settings.SEED
    threads: int = Field(default=settings.THREADS, ge=1)
    block_size: int = Field(default=settings.BLOCK_SIZE, ge=1)
    maturities: Tuple[float, ...] = (1.0, 5.0)
    flat_rate: float = settings.FLAT_RATE
    clamp_theta: bool = False
    binary: bool = False

    input: Optional[Path] = None
    date: Optional[str] = None
    horizon: Optional[float] = Field(default=None, gt=0)
    out: Path = settings.OUTPUT_DIR

    tau1: float = Field(default=settings.TAU1, gt=0)
    tau2: float = Field(default=settings.TAU2, gt=0)
    window: int = Field(default=settings.WINDOW, ge=2)
    exact: bool = False
    rank_threshold: float = Field(default=settings.RANK_THRESHOLD, gt=0)

    deltas: Tuple[float, ...] = (1 / 10, 1 / 20, 1 / 40, 1 / 80)
    eta: float = 20.0
    reference: str = "oracle"
    t: Optional[float] = Field(default=None, ge=0)

    @field_validator("command")
    @classmethod
    def known_command(cls, value: str) -> str:
        if value not in COMMANDS:
            raise ValueError(f"unknown command {value!r}, expected one of {', '.join(COMMANDS)}")
        return value

    @field_validator("model")
    @classmethod
    def known_model(cls, value: str) -> str:
        value = value.lower()
        base = value.split("-")[0]
        if base not in ("vasicek", "cir"):
            raise ValueError(f"unknown model {value!r}")
        if "-" in value:
            ParamProcessSpec.preset(value, 1.0, -1.0)
        return value

    @model_validator(mode="after")
    def check_conflicts(self) -> "RunConfig":
        problems = []
        if self.command in ("estimate", "calibrate", "rank") and self.input is None:
            problems.append(f"{self.command} needs --input")
        if self.input is not None and not Path(self.input).is_file():
            problems.append(f"input file {self.input} does not exist")
        if self.tau1 >= self.tau2:
            problems.append(f"tau1 ({self.tau1}) must be below tau2 ({self.tau2})")
        if any(tau <= 0 for tau in self.maturities):
            problems.append("report maturities must be positive")
        if self.command == "converge":
            if len(self.deltas) < 3:
                problems.append("converge needs at least 3 deltas")
            elif any(b >= a for a, b in zip(self.deltas, self.deltas[1:])):
                problems.append("converge deltas must be strictly decreasing")
            if self.reference not in ("oracle", "intercept"):
                problems.append(f"unknown reference {self.reference!r}")
        if self.model_kind is ModelKind.CIR and self.level <= 0:
            problems.append("CIR needs a positive volatility level")
        if self.model_kind is ModelKind.CIR and self.flat_rate < 0:
            problems.append("CIR needs a nonnegative initial short rate")
        if problems:
            raise ValueError("; ".join(problems))
        return self

    @property
    def model_kind(self) -> ModelKind:
        return ModelKind(self.model.split("-")[0])

    @property
    def preset_name(self) -> str:
        if "-" in self.model:
            return self.model
        prefix = "vasicek-v" if self.model_kind is ModelKind.VASICEK else "cir-"
        return prefix + _PRESET_NUMBERS[self.param_process]

    def param_spec(self) -> ParamProcessSpec:
        return ParamProcessSpec.preset(self.preset_name, self.level, self.beta)

    def manifest_dict(self) -> dict:
        return self.model_dump(mode="json")

    @classmethod
    def from_manifest(cls, manifest: dict) -> "RunConfig":
        return cls(**manifest["config"])

    def input_paths(self) -> List[Path]:
        return [Path(self.input)] if self.input is not None else []
