"""Exception types shared by the library and the CLI exit-code mapping."""


class ConfigurationError(ValueError):
    """Bad input system, schedule, dense-family spec, or run configuration."""


class ExhaustionError(RuntimeError):
    """A candidate pool ran dry inside the working coordinate range."""


class VerificationError(AssertionError):
    """A runtime identity check failed while verify mode was on."""
