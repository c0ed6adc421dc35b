"""
Exception classes raised across the package. Verification results are returned as data
(see `trading_bench.core.types.Violation`); the classes below are for conditions that stop work.
"""


class TradingBenchError(Exception):
    """Base class for errors raised by trading_bench."""


class InventoryBreachError(TradingBenchError):
    """Raised when an engine step would drive an inventory coordinate below zero."""

    def __init__(self, t, item, before, requested):
        self.t = t
        self.item = item
        super().__init__(f"Inventory breach at step {t}: item {item} holds {before} units but the chosen bundle "
                         f"removes {requested}. This cannot happen when the large-inventory assumption holds; "
                         f"check the instance with check_large_inventory.")


class InstanceFormatError(TradingBenchError, ValueError):
    """Raised when an instance or trace file cannot be parsed."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        location = ""
        if line is not None:
            location += f"line {line}"
        if field is not None:
            location += (", " if location else "") + f"field {field!r}"
        super().__init__(f"{message} ({location})" if location else message)


class AssumptionError(TradingBenchError):
    """Raised in strict mode when the instance violates the large-inventory assumption."""

    def __init__(self, violations):
        self.violations = list(violations)
        first = self.violations[0]
        super().__init__(f"{len(self.violations)} large-inventory violation(s); first: {first.message}. "
                         f"Run in 'warn' mode to trade anyway, or widen the inventory caps.")


class SizeCapError(TradingBenchError):
    """Raised when an offline computation exceeds its configured size caps."""


class NumericalFailureError(TradingBenchError):
    """Raised when a floating point computation cannot be completed reliably."""

    def __init__(self, message, diagnostics=None):
        self.diagnostics = dict(diagnostics or {})
        if self.diagnostics:
            message += " Diagnostics: " + ", ".join(f"{key}={value!r}" for key, value in self.diagnostics.items())
        super().__init__(message)


class InvariantBreachError(TradingBenchError):
    """Raised when an adversary's internal bookkeeping invariant fails (a bug, not trader behavior)."""


class UnsupportedProblemError(TradingBenchError, NotImplementedError):
    """Raised when an offline problem lies outside what the solvers handle (e.g. an infeasible origin)."""


class ExternalTraderError(TradingBenchError):
    """Raised when an external trader process stops answering or cannot be shut down."""
