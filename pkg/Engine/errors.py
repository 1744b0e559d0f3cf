"""Exception hierarchy shared by every package."""

from __future__ import annotations


class TSEError(Exception):
    pass


class ParameterError(TSEError, ValueError):
    pass


class NumericError(TSEError, ArithmeticError):
    pass


class ConfigurationError(TSEError):
    pass


class InputError(TSEError, ValueError):
    pass


class CapabilityError(TSEError):
    pass


class UnknownLabelError(TSEError, KeyError):
    def __str__(self) -> str:
        # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class ManifestError(TSEError):
    pass


class TrainingDivergedError(NumericError):
    def __init__(self, message: str, diagnostics: dict | None = None) -> None:
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
