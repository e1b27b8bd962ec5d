"""Exception hierarchy.

Every error carries a short machine-readable ``code`` and a ``details`` dict so
the CLI can emit it as JSON.
"""

from __future__ import annotations

from typing import Any


class CongestionPricingError(Exception):
    code = "error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def to_dict(self) -> dict[str, Any]:
        return {"error": self.code, "message": self.message, "details": self.details}


class DimensionError(CongestionPricingError, ValueError):
    code = "dimension_mismatch"


class DomainError(CongestionPricingError, ValueError):
    """An argument is outside the set where the operation is defined."""

    code = "domain_error"


class HypothesisError(CongestionPricingError, ValueError):
    """A theorem's hypotheses do not hold for the supplied schedules."""

    code = "hypothesis_violation"


class ConvergenceError(CongestionPricingError, RuntimeError):
    code = "no_convergence"


class SimulationError(CongestionPricingError, RuntimeError):
    code = "simulation_aborted"


def check_dim(name: str, actual: int, expected: int) -> None:
    if actual != expected:
        raise DimensionError(
            f"{name}: expected dimension {expected}, got {actual}",
            name=name,
            expected=expected,
            actual=actual,
        )
