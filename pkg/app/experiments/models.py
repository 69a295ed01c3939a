"""Experiment configuration and report records."""

from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.config import get_settings
from app.dimension.models import DimensionMethod, RadiiSchedule

settings = get_settings()


class Stage(str, Enum):
    SAMPLE = "sample"
    LYAPUNOV = "lyapunov"
    BRANCHES = "branches"
    DIMENSION = "dimension"
    VERIFY = "verify"


STAGE_ORDER = [Stage.SAMPLE, Stage.LYAPUNOV, Stage.BRANCHES, Stage.DIMENSION, Stage.VERIFY]

STAGE_DEPENDENCIES = {
    Stage.SAMPLE: set(),
    Stage.LYAPUNOV: {Stage.SAMPLE},
    Stage.BRANCHES: {Stage.SAMPLE, Stage.LYAPUNOV},
    Stage.DIMENSION: {Stage.SAMPLE},
    Stage.VERIFY: {Stage.LYAPUNOV, Stage.DIMENSION},
}


class ReportFormat(str, Enum):
    JSON = "json"
    CSV_BUNDLE = "csv_bundle"
    MARKDOWN_SUMMARY = "markdown_summary"


class ExperimentConfig(BaseModel):
    """One experiment: a map, the stages to run and their parameters."""
    model_config = ConfigDict(extra="forbid")

    map: str = Field(..., description="Bundled map id or path to a map definition JSON")
    stages: List[Stage] = Field(default_factory=lambda: list(STAGE_ORDER))
    rng_seed: int = Field(0, ge=0, lt=2**64)
    depth: int = Field(default_factory=lambda: settings.SAMPLE_DEPTH, ge=0)
    count: int = Field(default_factory=lambda: settings.SAMPLE_COUNT, ge=1)
    seed_point: Optional[List[List[float]]] = Field(None, description="[[re, im], ...] homogeneous coordinates")
    block_lengths: List[int] = Field(default_factory=lambda: list(settings.BLOCK_LENGTHS))
    eps: float = Field(default_factory=lambda: settings.BRANCH_EPS, gt=0)
    n_orbits: int = Field(50, ge=0)
    orbit_depth: int = Field(20, ge=1)
    minoration: bool = True
    dimension_methods: List[DimensionMethod] = Field(default_factory=lambda: list(DimensionMethod))
    n_centers: int = Field(default_factory=lambda: settings.DIMENSION_CENTERS, ge=50)
    radii: Optional[RadiiSchedule] = None
    output_dir: Optional[str] = None
    workers: Optional[int] = Field(None, ge=1)

    @field_validator("block_lengths")
    @classmethod
    def _positive_blocks(cls, value: List[int]) -> List[int]:
        if not value or any(n < 1 for n in value):
            raise ValueError("block_lengths must be a non-empty list of positive integers")
        return value

    @model_validator(mode="after")
    def _stage_dependencies(self) -> "ExperimentConfig":
        chosen = set(self.stages)
        for stage in chosen:
            missing = STAGE_DEPENDENCIES[stage] - chosen
            if missing:
                names = ", ".join(sorted(m.value for m in missing))
                raise ValueError(f"stage '{stage.value}' requires {names}")
        if Stage.DIMENSION in chosen and not self.dimension_methods:
            raise ValueError("dimension stage needs at least one method")
        return self

    @property
    def ordered_stages(self) -> List[Stage]:
        chosen = set(self.stages)
        return [s for s in STAGE_ORDER if s in chosen]

    @property
    def main_block_length(self) -> int:
        return max(self.block_lengths)


class ReportRecord(BaseModel):
    """Everything one run produced, by reference to its artifact files."""
    schema_version: str = Field(default_factory=lambda: settings.ARTIFACT_SCHEMA_VERSION)
    map_id: str
    map: Dict[str, Any]
    config: Dict[str, Any]
    stages: List[str] = Field(default_factory=list)
    artifacts: Dict[str, str] = Field(default_factory=dict, description="name -> file name in the run directory")
    counters: Dict[str, int] = Field(default_factory=dict)
    lyapunov: Optional[Dict[str, Any]] = None
    exponent_inequalities: Optional[Dict[str, Any]] = None
    certification: Optional[Dict[str, Any]] = None
    minoration: Optional[Dict[str, Any]] = None
    dimension: Dict[str, float] = Field(default_factory=dict, description="method -> dim_hat")
    cross_method_spread: Optional[float] = None
    verdict: Optional[Dict[str, Any]] = None
    # wall times go to timings.json, never to record.json
    wall_times: Dict[str, float] = Field(default_factory=dict, exclude=True)
    run_dir: Optional[str] = Field(None, exclude=True)

    @property
    def passed(self) -> Optional[bool]:
        if self.verdict is None:
            return None
        return bool(self.verdict["pass_lower"] and self.verdict["pass_upper"])
