"""Exception hierarchy shared by all engine modules."""


class ScalerError(Exception):
    """Base class for every error raised by this package."""


# -- environment packages -------------------------------------------------

class MissingFile(ScalerError):
    """A package file or referenced executable is absent or not runnable."""


class SchemaViolation(ScalerError):
    """A manifest field is missing or has the wrong JSON type."""


class InvariantViolation(ScalerError):
    """A structurally valid manifest breaks a semantic invariant."""


class LevelOutOfRange(ScalerError):
    """Requested difficulty level is outside the ladder."""


# -- sandboxed execution ---------------------------------------------------

class SandboxError(ScalerError):
    """Base class for child-process failures."""


class GeneratorTimeout(SandboxError):
    pass


class GeneratorCrash(SandboxError):
    pass


class EmptyOutput(SandboxError):
    pass


class OracleTimeout(SandboxError):
    pass


class OracleCrash(SandboxError):
    pass


class ConfigOutOfRange(SandboxError):
    """A scale-parameter value lies outside its declared [min, max] range."""


class InputBudgetExceeded(SandboxError):
    """Generated input is larger than the environment's byte budget."""


class MalformedOutput(ScalerError):
    """Output text cannot be parsed under the environment's output spec."""


# -- synthesis pipeline ----------------------------------------------------

class InfeasibleAtMin(ScalerError):
    """Even the minimum configuration violates the calibration budgets."""


class EndpointUnavailable(ScalerError):
    """No completion endpoint is configured or it cannot be reached."""


class AuthoringRejected(ScalerError):
    """Every authoring attempt failed validation."""


# -- difficulty controller --------------------------------------------------

class AccuracyOutOfRange(ScalerError):
    pass


class ScoreOutOfRange(ScalerError):
    pass


# -- curation ----------------------------------------------------------------

class DegenerateWindow(ScalerError):
    """Slope fit over a window with zero index variance."""


class EmptyPool(ScalerError):
    """No replacement candidate exists besides the retiring environment."""


# -- training harness --------------------------------------------------------

class EmptyWindow(ScalerError):
    pass


class SeedMismatch(ScalerError):
    """A run log lacks the master seed needed for replay."""


class EnvironmentDrift(ScalerError):
    """Package contents differ from the fingerprints recorded in a run log."""


# -- configuration / CLI ------------------------------------------------------

class ConfigParseError(ScalerError):
    pass
