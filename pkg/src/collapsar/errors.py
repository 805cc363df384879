"""Exception types shared across the package."""


class CollapsarError(Exception):
    """Base class for all package-specific errors."""


class SingularEvaluation(CollapsarError):
    """Right-hand side evaluated at or below the breakdown threshold (W or y ~ 0)."""


class SonicSingular(CollapsarError):
    """Pressure-case inviscid right-hand side evaluated on the sonic set 1-(Wy)^2 = 0."""


class OutOfRange(CollapsarError):
    """Requested coordinate lies outside the data's domain."""


class BadStep(CollapsarError):
    """Fixed-step integration asked for a step that does not tile the span."""


class InsufficientTail(CollapsarError):
    """Trace too short for the requested tail-window diagnostic."""


class CflViolation(CollapsarError):
    """Explicit PDE step size underflowed the CFL constraint."""


class NonFinite(CollapsarError):
    """A field array contains NaN or infinity."""


class ConfigError(CollapsarError):
    """Run configuration failed validation.

    Carries a list of (field, message) pairs for field-level diagnostics.
    """

    def __init__(self, issues):
        self.issues = list(issues)
        super().__init__("; ".join(f"{f}: {m}" for f, m in self.issues))
