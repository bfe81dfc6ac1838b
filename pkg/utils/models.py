"""Result and manifest models shared by the experiment pipelines."""

from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class StageStatus(str, Enum):
    PASSED = "passed"
    VERDICT_FAILED = "verdict_failed"
    CONFIG_ERROR = "config_error"
    NUMERICAL_ERROR = "numerical_error"
    EXPLORATORY = "exploratory"


EXIT_CODES = {
    StageStatus.PASSED: 0,
    StageStatus.EXPLORATORY: 0,
    StageStatus.VERDICT_FAILED: 1,
    StageStatus.CONFIG_ERROR: 2,
    StageStatus.NUMERICAL_ERROR: 3,
}


class StageResult(BaseModel):
    """Outcome of one pipeline stage."""

    stage: str = Field(..., description="Stage name")
    status: StageStatus = Field(..., description="Outcome class")
    message: str = Field(..., description="Human-readable summary")
    data: Optional[Any] = Field(None, description="Stage payload, kept out of the manifest")
    errors: List[str] = Field(default_factory=list, description="Error messages")
    seconds: float = Field(default=0.0, description="Wall-clock duration")

    @property
    def success(self) -> bool:
        return self.status in (StageStatus.PASSED, StageStatus.EXPLORATORY)

    @classmethod
    def success_result(cls, stage: str, message: str = "Stage completed", data: Any = None) -> "StageResult":
        return cls(stage=stage, status=StageStatus.PASSED, message=message, data=data)

    @classmethod
    def exploratory_result(cls, stage: str, message: str = "Stage completed", data: Any = None) -> "StageResult":
        return cls(stage=stage, status=StageStatus.EXPLORATORY, message=message, data=data)

    @classmethod
    def verdict_result(
        cls, stage: str, passed: bool, message: str, data: Any = None, errors: Optional[List[str]] = None
    ) -> "StageResult":
        """PASSED or VERDICT_FAILED depending on `passed`."""
        status = StageStatus.PASSED if passed else StageStatus.VERDICT_FAILED
        return cls(stage=stage, status=status, message=message, data=data, errors=errors or [])

    @classmethod
    def error_result(
        cls, stage: str, status: StageStatus, message: str = "Stage failed", errors: Optional[List[str]] = None
    ) -> "StageResult":
        return cls(stage=stage, status=status, message=message, errors=errors or [])


class ArtifactRecord(BaseModel):
    path: str = Field(..., description="Path relative to the output directory")
    sha256: str
    size: int
    kind: str = Field(..., description="csv, json or matrix")


class StageRecord(BaseModel):
    stage: str
    status: StageStatus
    message: str
    errors: List[str] = Field(default_factory=list)
    seconds: float


class RunManifest(BaseModel):
    """Config hash, tool version, per-stage timings and every emitted file."""

    tool_version: str
    config_hash: str
    config: Dict[str, Any] = Field(..., description="Fully resolved config including defaults")
    seed: int
    started_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    stages: List[StageRecord] = Field(default_factory=list)
    artifacts: List[ArtifactRecord] = Field(default_factory=list)
    timings: List[Dict[str, Any]] = Field(default_factory=list)
    exit_code: int = 0

    def record_stage(self, result: StageResult) -> None:
        self.stages.append(
            StageRecord(
                stage=result.stage,
                status=result.status,
                message=result.message,
                errors=result.errors,
                seconds=result.seconds,
            )
        )

    def compute_exit_code(self) -> int:
        """Most severe stage outcome: 3 numerical, 2 configuration, 1 verdict, 0 otherwise."""
        codes = [EXIT_CODES[s.status] for s in self.stages]
        self.exit_code = max(codes, default=0)
        return self.exit_code
