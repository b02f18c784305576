"""Exception hierarchy. The CLI maps each family to its own exit code."""


class O2IError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(O2IError, ValueError):
    """Bad or incomplete configuration (unknown material, missing band, ...)."""


class SceneParseError(O2IError, ValueError):
    """A scene or data file could not be parsed."""

    def __init__(self, message: str, lineno: int | None = None, path: str | None = None):
        self.lineno = lineno
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)


class ValidationError(O2IError, ValueError):
    """Input parsed but violates an invariant (non-unit normal, bad geometry)."""


class DomainError(O2IError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class DirectPathNotFound(O2IError):
    """No usable PADP bin inside the direct-path search window."""
