"""Exception hierarchy shared by every module."""


class NHKError(Exception):
    """Base class; ``code`` is the machine-readable tag used in CLI error JSON."""

    code = "error"

    def to_dict(self):
        return {"error": self.code, "message": str(self)}


class SingularMetric(NHKError):
    code = "singular_metric"


class SingularConstraintGram(NHKError):
    code = "singular_constraint_gram"


class DomainViolation(NHKError):
    code = "domain_violation"


class StepRejected(NHKError):
    code = "step_rejected"


class ConstraintViolation(NHKError):
    """Initial momentum not on the constrained momentum space."""

    code = "constraint_violation"


class DegenerateAlmostSymplectic(NHKError):
    code = "degenerate_almost_symplectic"


class ZeroMultiplier(NHKError):
    code = "zero_multiplier"


class SingularInertia(NHKError):
    code = "singular_inertia"


class NotBasic(NHKError):
    code = "not_basic"


class WrongLevel(NHKError):
    code = "wrong_level"


class InvalidConstants(NHKError):
    code = "invalid_constants"


class InvalidParameters(NHKError):
    code = "invalid_parameters"


class ConfigError(NHKError):
    code = "config_error"
