"""
Custom application exceptions.

Every exception carries the CLI exit code it maps to.
"""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_STAGE_FAILURE = 3


class AppException(Exception):
    """Base application exception."""

    def __init__(self, detail: str, exit_code: int = EXIT_STAGE_FAILURE):
        super().__init__(detail)
        self.detail = detail
        self.exit_code = exit_code


# ==================== map_model ====================


class MapException(AppException):
    """Base class for map evaluation and construction errors."""


class AllComponentsVanish(MapException):
    """Every homogeneous component vanished: indeterminacy point or degenerate map."""

    def __init__(self, detail: str = "All components vanish at this point"):
        super().__init__(detail=detail)


class RootSolverFailure(MapException):
    """A polished preimage still misses its target (ill-conditioned near a critical value)."""

    def __init__(self, detail: str = "Preimage residual above tolerance after Newton polish"):
        super().__init__(detail=detail)


class DegreeMismatch(MapException):
    """Numerically counted degree disagrees with the declared one."""

    def __init__(self, detail: str = "Declared and numerical degrees disagree"):
        super().__init__(detail=detail, exit_code=EXIT_CONFIG)


class HypothesisViolation(MapException):
    """The standing hypothesis d_t > lambda_{k-1} (or 2 Sigma >= log d_t) fails."""

    def __init__(self, detail: str = "Map violates d_t > lambda_{k-1}"):
        super().__init__(detail=detail, exit_code=EXIT_CONFIG)


class InvalidMapDefinition(MapException):
    """Map definition file does not describe a valid map."""

    def __init__(self, detail: str = "Invalid map definition"):
        super().__init__(detail=detail, exit_code=EXIT_CONFIG)


class UnsupportedPreimages(MapException):
    """Algebraic preimage solving is not available for this map."""

    def __init__(self, detail: str = "Preimage solving not supported for this map"):
        super().__init__(detail=detail)


# ==================== measure_sampler ====================


class ExceptionalSeed(AppException):
    """More than half of the backward walks were discarded."""

    def __init__(self, detail: str = "Seed looks exceptional: too many walks discarded"):
        super().__init__(detail=detail)


class OrbitHitsJ(AppException):
    """A backward orbit came within tolerance of the exceptional set."""

    def __init__(self, detail: str = "Backward orbit hit the exceptional set"):
        super().__init__(detail=detail)


# ==================== estimators ====================


class TooManyDiscards(AppException):
    """Too many cocycle segments went through near-critical points."""

    def __init__(self, detail: str = "Too many near-critical segments discarded"):
        super().__init__(detail=detail)


class OrbitTooCloseToJ(AppException):
    """The orbit approaches the exceptional set too fast to be certified."""

    def __init__(self, detail: str = "Orbit too close to the exceptional set"):
        super().__init__(detail=detail)


class NonIntegrable(AppException):
    """Running mean of |log u| grows superlinearly."""

    def __init__(self, detail: str = "Observable does not look log-integrable"):
        super().__init__(detail=detail)


class InsufficientMass(AppException):
    """Too few radii carry enough cloud points around a center."""

    def __init__(self, detail: str = "Not enough cloud mass around center"):
        super().__init__(detail=detail)


class InsufficientSamples(AppException):
    """Too few cloud points for an ergodic average."""

    def __init__(self, detail: str = "Not enough samples"):
        super().__init__(detail=detail)


class DimensionEstimateFailed(AppException):
    """More than the allowed fraction of centers were dropped."""

    def __init__(self, detail: str = "Too many centers dropped"):
        super().__init__(detail=detail)


# ==================== report_cli ====================


class ConfigError(AppException):
    """Experiment configuration violates its schema."""

    def __init__(self, detail: str = "Invalid configuration"):
        super().__init__(detail=detail, exit_code=EXIT_CONFIG)


class StageFailure(AppException):
    """A pipeline stage raised; wraps the module error with the stage name."""

    def __init__(self, stage: str, cause: Exception):
        detail = getattr(cause, "detail", None) or str(cause)
        super().__init__(detail=f"Stage '{stage}' failed: {type(cause).__name__}: {detail}")
        self.stage = stage
        self.cause = cause


class ReportIOError(AppException):
    """An artifact could not be written or read."""

    def __init__(self, detail: str = "Artifact I/O failed"):
        super().__init__(detail=detail)
