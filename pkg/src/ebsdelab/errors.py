"""Exception hierarchy shared by every solver in the package."""

from __future__ import annotations


class EbsdeLabError(Exception):
    """Base class for all package errors."""


class NonFiniteEvaluation(EbsdeLabError):
    pass


class UnknownCatalogEntry(EbsdeLabError, KeyError):
    pass


class MissingParam(EbsdeLabError, KeyError):
    pass


class BlowUp(EbsdeLabError):
    """A simulated state left the guard radius."""


class TimeNotOnGrid(EbsdeLabError, ValueError):
    pass


class GateViolated(EbsdeLabError):
    pass


class InsufficientSignal(EbsdeLabError):
    pass


class CflViolated(EbsdeLabError, ValueError):
    pass


class NonFiniteLayer(EbsdeLabError):
    def __init__(self, t: float, message: str | None = None):
        self.t = t
        super().__init__(message or f"non-finite values in layer t={t:.6g}")


class MaxPseudoTimeExceeded(EbsdeLabError):
    pass


class SingularRegression(EbsdeLabError):
    pass


class NonConvergent(EbsdeLabError):
    pass


class WindowOutOfRange(EbsdeLabError, ValueError):
    pass


class FitDegenerate(EbsdeLabError):
    """Every residual sits below the fit floor: converged beyond measurement."""


class ConfigError(EbsdeLabError):
    def __init__(self, message: str, section: str | None = None,
                 key: str | None = None, line: int | None = None):
        self.section, self.key, self.line = section, key, line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if section is not None:
            where.append(f"[{section}]" + (f" {key}" if key else ""))
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
