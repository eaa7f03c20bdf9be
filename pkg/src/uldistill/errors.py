"""Exception hierarchy shared by every module."""


class UldError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(UldError, ValueError):
    """An argument is outside its admissible range."""


class InputError(UldError, ValueError):
    """Input data violates a type invariant (non-finite, unnormalized, ...)."""


class SupportError(UldError, ValueError):
    """Two distributions or vocabularies do not share a support."""


class AbsoluteContinuityError(SupportError):
    """Teacher mass sits on an entry where the student has zero probability."""


class DegenerateInputError(UldError, ValueError):
    """Input is empty or otherwise too degenerate to evaluate."""


class ScaleError(UldError, ValueError):
    """Problem size exceeds what an exhaustive routine can handle."""


class FormatError(UldError, ValueError):
    """A serialized file is malformed. ``field`` names the offending part."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class CompatibilityError(UldError, ValueError):
    """Two artifacts (checkpoint, vocabulary, ...) do not fit together."""


class ConfigError(UldError, ValueError):
    """Bad configuration file or flag."""
