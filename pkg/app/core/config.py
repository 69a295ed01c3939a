"""
Application configuration using Pydantic Settings.
Loads from environment variables / .env file.
"""

from functools import lru_cache
from typing import List

from pydantic import field_validator
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    # App
    APP_NAME: str = "Equidim"
    APP_VERSION: str = "0.1.0"
    DEBUG: bool = False

    # Artifacts (report_cli writes under OUTPUT_ROOT/<map_id>/)
    OUTPUT_ROOT: str = "output"
    MAP_DEFINITIONS_DIR: str = ""
    ARTIFACT_SCHEMA_VERSION: str = "1"

    # Within-stage parallelism. Chunking is fixed by PARALLEL_CHUNK_SIZE, never by WORKERS,
    # so aggregates do not depend on the worker count.
    WORKERS: int = 1
    PARALLEL_CHUNK_SIZE: int = 1024

    # ------------------------------------------------------------------
    # map_model
    # ------------------------------------------------------------------
    ZERO_COMPONENT_TOL: float = 1e-14
    PREIMAGE_RESIDUAL_TOL: float = 1e-9
    ROOT_CLUSTER_TOL: float = 1e-7
    J_GRADIENT_FLOOR: float = 1e-8
    RESULTANT_TOL: float = 1e-10
    HOLOMORPHY_SAMPLES: int = 2000

    # ------------------------------------------------------------------
    # measure_sampler
    # ------------------------------------------------------------------
    J_EXCLUSION_TOL: float = 1e-12
    EXCEPTIONAL_DISCARD_FRACTION: float = 0.5
    SAMPLE_DEPTH: int = 30
    SAMPLE_COUNT: int = 10_000
    CLOUD_SPOT_CHECKS: int = 5
    CLOUD_RETURN_TOL: float = 1e-6

    # ------------------------------------------------------------------
    # lyapunov
    # ------------------------------------------------------------------
    CRITICAL_JACOBIAN_FLOOR: float = 1e-300
    MAX_SEGMENT_DISCARD_FRACTION: float = 0.10
    MIN_LYAPUNOV_SAMPLES: int = 100
    BATCH_MEANS: int = 20
    BLOCK_LENGTHS: List[int] = [5, 10, 20]
    EPS0: float = 0.0

    # ------------------------------------------------------------------
    # inverse_branches
    # ------------------------------------------------------------------
    BRANCH_EPS: float = 0.05
    BRANCH_C_SAFETY: float = 1.01
    BRANCH_TOL: float = 0.05
    NEWTON_MAX_ITER: int = 30
    NEWTON_CONVERGED_TOL: float = 1e-15
    BRANCH_PROBES: int = 50
    M_PROBES: int = 20
    INCLUSION_PROBES: int = 10
    VOLUME_SAMPLES: int = 1000
    A1_FLOOR: float = 1e-13
    BRANCH_IDENTITY_TOL: float = 1e-7

    # ------------------------------------------------------------------
    # dimension
    # ------------------------------------------------------------------
    RADII_RHO0_FRACTION: float = 0.2
    RADII_H: float = 0.25
    RADII_COUNT: int = 16
    # fits are trusted between these multiples of the point spacing and the diameter
    RADIUS_WINDOW_NN_FACTOR: float = 5.0
    RADIUS_WINDOW_DIAMETER_FRACTION: float = 0.3
    MIN_BALL_COUNT: int = 10
    MIN_FIT_RADII: int = 3
    DIMENSION_CENTERS: int = 200
    BOOTSTRAP_RESAMPLES: int = 500
    CI_LEVEL: float = 0.90
    MAX_DROPPED_CENTERS: float = 0.5
    YOUNG_TAIL_TOL: float = 0.05
    ALPHA_EPS_GRID: List[float] = [0.01, 0.02, 0.05, 0.1]
    MINORATION_MAX_DEPTH: int = 10
    MINORATION_ORBITS: int = 50
    VERDICT_MIN_SLACK: float = 0.02

    @field_validator("OUTPUT_ROOT", "MAP_DEFINITIONS_DIR", mode="before")
    @classmethod
    def _strip_wrapping_quotes(cls, value):
        if value is None:
            return value
        if not isinstance(value, str):
            return value
        stripped = value.strip()
        # Guard against env values accidentally set to a quoted string (e.g. OUTPUT_ROOT="out")
        if (stripped.startswith('"') and stripped.endswith('"')) or (
            stripped.startswith("'") and stripped.endswith("'")
        ):
            stripped = stripped[1:-1].strip()
        return stripped

    class Config:
        env_file = ".env"
        env_file_encoding = "utf-8"


@lru_cache
def get_settings() -> Settings:
    """Cached settings instance."""
    return Settings()
