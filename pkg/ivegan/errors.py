"""Exception types raised across the package.

Each class also derives from the closest builtin so callers that only know
about ``ValueError`` / ``FloatingPointError`` keep working.
"""
from typing import Mapping, Optional


class IveganError(Exception):
    pass


class ShapeError(IveganError, ValueError):
    pass


class TapeError(IveganError, ValueError):
    pass


class NonFiniteError(IveganError, FloatingPointError):
    def __init__(self, message: str, diagnostics: Optional[Mapping[str, object]] = None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConfigError(IveganError, ValueError):
    pass


class IdxFormatError(IveganError, ValueError):
    pass


class CheckpointError(IveganError, ValueError):
    pass


class SampleFormatError(IveganError, ValueError):
    pass
