"""Exception types raised across the package."""

from __future__ import annotations


class MuskatError(Exception):
    """Base class for all package errors."""


class WeightOverflow(MuskatError):
    def __init__(self, k_abs: float, log_weight: float):
        self.k_abs = k_abs
        self.log_weight = log_weight
        super().__init__(
            f"analytic weight overflows at |k|={k_abs:g} (log-weight {log_weight:.1f})"
        )


class InvalidDomain(MuskatError):
    def __init__(self, what: str):
        self.what = what
        super().__init__(f"constant ledger invalid: {what}")


class SlopeTooLarge(MuskatError):
    pass


class GridMismatch(MuskatError):
    pass


class NoConvergence(MuskatError):
    def __init__(self, max_iter: int, residual: float):
        self.max_iter = max_iter
        self.residual = residual
        super().__init__(f"no convergence after {max_iter} iterations (residual {residual:.3e})")


class BlowUpDetected(MuskatError):
    def __init__(self, t: float, value: float):
        self.t = t
        self.value = value
        super().__init__(f"blow-up detected at t={t:g} (F11 norm {value:g})")


class EmptyWindow(MuskatError):
    pass


class InsufficientDecades(MuskatError):
    pass


class ConstraintViolated(MuskatError):
    pass


class ConfigError(MuskatError):
    pass


class UnknownKey(ConfigError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(f"unknown config key: {key}")


class BadValue(ConfigError):
    def __init__(self, key: str, reason: str):
        self.key = key
        self.reason = reason
        super().__init__(f"bad value for {key}: {reason}")


class MissingRequired(ConfigError):
    def __init__(self, key: str):
        self.key = key
        super().__init__(f"missing required key: {key}")


class FormatVersionMismatch(MuskatError):
    pass


class CorruptSnapshot(MuskatError):
    pass


class IoFailure(MuskatError):
    pass
