"""Exception types shared across the simulator.

Every error carries a stable ``code`` string so callers and tests can match on
the failure kind without parsing human-readable messages.
"""

from __future__ import annotations


class FeelsimError(Exception):
    """Base class for all simulator errors."""

    code: str = "error"

    def __init__(self, detail: str = ""):
        self.detail = detail
        super().__init__(f"{self.code}: {detail}" if detail else self.code)


class ValidationError(FeelsimError):
    """An invariant of a value object was violated; ``code`` names it."""

    def __init__(self, code: str, detail: str = ""):
        self.code = code
        super().__init__(detail)


class EmptyDatasetError(FeelsimError):
    code = "empty_dataset"


class SeriesTooShortError(FeelsimError):
    code = "series_too_short"


class NoTemplateMatchesError(FeelsimError):
    """No template pair matched within tolerance; the ratio is undefined."""

    code = "no_template_matches"


class UndefinedAngleError(FeelsimError):
    """Cosine dissimilarity against a zero vector has no defined angle."""

    code = "undefined_angle"


class ShapeMismatchError(FeelsimError):
    code = "shape_mismatch"


class InsufficientPoolError(FeelsimError):
    """The sample pool cannot cover the requested partition sizes."""

    code = "insufficient_pool"


class NoUpdatesError(FeelsimError):
    code = "no_updates"


class DegenerateWeightsError(FeelsimError):
    code = "degenerate_weights"


class UnreachableDeviceError(FeelsimError):
    """Channel rate underflowed to zero; the device cannot upload."""

    code = "unreachable_device"


class NoParticipantsError(FeelsimError):
    code = "no_participants"


class ConfigError(FeelsimError):
    """Experiment configuration file could not be parsed or validated."""

    code = "config_error"
