"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid argument or domain-type invariant violation."""


class ConfigError(InputError):
    """Inconsistent or unknown configuration."""


class ParseError(InputError):
    """Malformed input file; carries the 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class AnnotationUnavailableError(RuntimeError):
    """A worker oracle failed to produce an annotation."""
