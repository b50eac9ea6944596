"""
Jerarquía de excepciones del paquete.

Cada excepción lleva un ``code`` estable y un diccionario ``details`` que la
CLI serializa como JSON en stderr.
"""
from __future__ import annotations

from typing import Any, Dict, Optional


class GroupoidError(ValueError):
    """Error base para todas las operaciones sobre grupoides, núcleos y operadores."""

    code = "groupoid_error"

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    def to_dict(self) -> Dict[str, Any]:
        return {"error": self.code, "message": self.message, "details": self.details}


class UnequalClassWeights(GroupoidError):
    code = "unequal_class_weights"


class DuplicateUnit(GroupoidError):
    code = "duplicate_unit"


class NotAGroup(GroupoidError):
    code = "not_a_group"


class EmptyUnion(GroupoidError):
    code = "empty_union"


class NullSet(GroupoidError):
    code = "null_set"


class TooManyBisections(GroupoidError):
    code = "too_many_bisections"


class NotAField(GroupoidError):
    code = "not_a_field"


class NotFull(GroupoidError):
    code = "not_full"


class GroupoidMismatch(GroupoidError):
    code = "groupoid_mismatch"


class NonSymmetric(GroupoidError):
    code = "non_symmetric"


class TooShort(GroupoidError):
    code = "too_short"


class BadParameters(GroupoidError):
    code = "bad_parameters"


class BallTooLarge(GroupoidError):
    code = "ball_too_large"


class NotProbabilityPreserving(GroupoidError):
    code = "not_pmp"


class InvalidSpecFile(GroupoidError):
    code = "invalid_spec_file"


class NumericalError(GroupoidError):
    """Fallo numérico: un resultado no cumple la tolerancia exigida."""

    code = "numerical_error"


class NoConvergence(NumericalError):
    """La iteración de potencia agotó ``max_iter``; conserva la mejor cota inferior."""

    code = "no_convergence"

    def __init__(self, max_iter: int, best_lower_bound: float, trace: Optional[list] = None) -> None:
        super().__init__(
            f"power iteration did not converge in {max_iter} iterations",
            max_iter=max_iter,
            best_lower_bound=best_lower_bound,
        )
        self.max_iter = max_iter
        self.best_lower_bound = best_lower_bound
        self.trace = trace or []
