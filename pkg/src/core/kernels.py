"""
Funciones de Borel sobre las flechas: campos de medidas de probabilidad, norma I,
convolución, involución y la construcción a partir de medidas sobre bisecciones.

Los núcleos se guardan dispersos (flecha ausente = 0). En modo ``rational`` los
valores son :class:`Fraction`; en modo ``float`` son ``float`` o ``complex``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from config import FLOAT_TOL, Precision
from core.errors import BadParameters, GroupoidError, GroupoidMismatch, NotAField, NotFull
from core.groupoid import (
    Bisection,
    FiniteGroupoid,
    UnitSet,
    inverse_bisection,
    is_bisection,
    product,
    product_factors,
    restrict,
    restriction_parent,
    union_parts,
)
from utils.rational_tools import Scalar, coerce, parse_fraction, parse_scalar

logger = logging.getLogger(__name__)


def conj(value: Scalar) -> Scalar:
    return value.conjugate() if isinstance(value, complex) else value


def _is_zero(value: Scalar) -> bool:
    return value == 0


def _close(a: Scalar, b: Scalar, precision: Precision) -> bool:
    if precision == "rational":
        return a == b
    return abs(complex(a) - complex(b)) <= FLOAT_TOL


def _join_precision(*precisions: Precision) -> Precision:
    return "rational" if all(p == "rational" for p in precisions) else "float"


@dataclass(frozen=True, eq=False)
class Kernel:
    """Función dispersa sobre las flechas de un grupoide."""

    groupoid: FiniteGroupoid
    values: Mapping[int, Scalar]
    precision: Precision = "float"

    def __post_init__(self) -> None:
        clean = {int(g): coerce(v, self.precision) for g, v in self.values.items() if not _is_zero(v)}
        for g in clean:
            if not 0 <= g < self.groupoid.n_arrows:
                raise GroupoidError(f"arrow index {g} out of range", arrow=g)
        object.__setattr__(self, "values", clean)

    @classmethod
    def from_labels(
        cls,
        groupoid: FiniteGroupoid,
        values: Mapping[str, Any],
        precision: Precision = "float",
    ) -> "Kernel":
        """Construye un núcleo desde ``{id de flecha: valor}``."""
        return cls(
            groupoid,
            {groupoid.arrow_index(label): parse_scalar(v, precision) for label, v in values.items()},
            precision,
        )

    @property
    def zero(self) -> Scalar:
        return Fraction(0) if self.precision == "rational" else 0.0

    def __call__(self, g: int) -> Scalar:
        return self.values.get(int(g), self.zero)

    @property
    def support(self) -> List[int]:
        return sorted(self.values)

    def as_precision(self, precision: Precision) -> "Kernel":
        if precision == self.precision:
            return self
        return Kernel(self.groupoid, {g: coerce(v, precision) for g, v in self.values.items()}, precision)

    @cached_property
    def by_target(self) -> Dict[int, List[Tuple[int, Scalar]]]:
        """Soporte agrupado por unidad de destino."""
        index: Dict[int, List[Tuple[int, Scalar]]] = {}
        for g in self.support:
            index.setdefault(int(self.groupoid.tgt[g]), []).append((g, self.values[g]))
        return index

    @cached_property
    def by_source(self) -> Dict[int, List[Tuple[int, Scalar]]]:
        index: Dict[int, List[Tuple[int, Scalar]]] = {}
        for g in self.support:
            index.setdefault(int(self.groupoid.src[g]), []).append((g, self.values[g]))
        return index

    def fiber_sums(self, side: str = "target", absolute: bool = False) -> List[Scalar]:
        """Suma de los valores (o de sus módulos) sobre cada fibra ``𝒢^x`` o ``𝒢_x``."""
        index = self.by_target if side == "target" else self.by_source
        sums = []
        for x in range(self.groupoid.n_units):
            total = self.zero
            for _, v in index.get(x, ()):
                total += abs(v) if absolute else v
            sums.append(total)
        return sums

    def field_violation(self) -> Optional[Dict[str, Any]]:
        """Primera razón por la que el núcleo no es un campo de probabilidad, o ``None``."""
        for g, v in self.values.items():
            if isinstance(v, complex) or v < 0:
                return {"arrow": self.groupoid.arrow_label(g), "value": str(v), "reason": "negative or complex value"}
        for x, total in enumerate(self.fiber_sums("target")):
            if not _close(total, 1, self.precision):
                return {"unit": self.groupoid.unit_ids[x], "fiber_sum": str(total), "reason": "target fiber does not sum to 1"}
        return None

    @cached_property
    def is_probability_field(self) -> bool:
        return self.field_violation() is None

    @cached_property
    def is_symmetric(self) -> bool:
        """``π(g⁻¹) = conj(π(g))`` para toda flecha."""
        inv = self.groupoid.inv
        for g, v in self.values.items():
            if not _close(self(int(inv[g])), conj(v), self.precision):
                return False
        return True

    def require_field(self) -> "Kernel":
        violation = self.field_violation()
        if violation is not None:
            raise NotAField("kernel is not a field of probability measures", **violation)
        return self

    def to_array(self) -> np.ndarray:
        """Valores densos en coma flotante indexados por flecha."""
        is_complex = any(isinstance(v, complex) for v in self.values.values())
        out = np.zeros(self.groupoid.n_arrows, dtype=complex if is_complex else float)
        for g, v in self.values.items():
            out[g] = complex(v) if is_complex else float(v)
        return out

    def to_dict(self) -> Dict[str, str]:
        return {self.groupoid.arrow_label(g): str(v) for g, v in sorted(self.values.items())}

    def equals(self, other: "Kernel") -> bool:
        """Igualdad flecha a flecha (exacta en modo racional, con ``FLOAT_TOL`` si no)."""
        if other.groupoid is not self.groupoid:
            return False
        precision = _join_precision(self.precision, other.precision)
        keys = set(self.values) | set(other.values)
        return all(_close(self(g), other(g), precision) for g in keys)


def _same_groupoid(*kernels: Kernel) -> FiniteGroupoid:
    groupoid = kernels[0].groupoid
    for k in kernels[1:]:
        if k.groupoid is not groupoid:
            raise GroupoidMismatch("kernels live on different groupoids")
    return groupoid


# --- Núcleos canónicos ---

def identity_kernel(groupoid: FiniteGroupoid, precision: Precision = "float") -> Kernel:
    """``χ_{𝒢⁽⁰⁾}``: vale 1 en las flechas identidad."""
    one = Fraction(1) if precision == "rational" else 1.0
    return Kernel(groupoid, {int(e): one for e in groupoid.unit_arrow}, precision)


def uniform_field(groupoid: FiniteGroupoid, precision: Precision = "float") -> Kernel:
    """``π(g) = 1/|𝒢^{t(g)}|``."""
    sizes = [len(f) for f in groupoid.target_fibers]
    if precision == "rational":
        return Kernel(groupoid, {g: Fraction(1, sizes[int(groupoid.tgt[g])]) for g in range(groupoid.n_arrows)}, precision)
    weights = 1.0 / np.asarray(sizes, dtype=float)[groupoid.tgt]
    return Kernel(groupoid, dict(enumerate(weights.tolist())), precision)


def matrix_orientation(matrix: Sequence[Sequence[Any]], precision: Precision = "rational") -> str:
    """
    Indica qué sumas de *matrix* valen 1: ``"rows"``, ``"columns"``, ``"both"`` o
    ``"neither"`` (exactamente en modo racional, con ``FLOAT_TOL`` si no).
    """
    parsed = [[parse_scalar(v, precision) for v in row] for row in matrix]
    zero = Fraction(0) if precision == "rational" else 0.0
    rows = all(_close(sum(row, zero), 1, precision) for row in parsed)
    cols = all(_close(sum(col, zero), 1, precision) for col in zip(*parsed))
    if rows and cols:
        return "both"
    return "rows" if rows else "columns" if cols else "neither"


def field_from_matrix(
    groupoid: FiniteGroupoid,
    matrix: Sequence[Sequence[Any]],
    orientation: str = "auto",
    precision: Precision = "float",
) -> Kernel:
    """
    Campo ``π(i, j) = A(i, j)`` sobre un grupoide de pares de una sola clase.

    La flecha ``(i, j)`` tiene destino ``i``, de modo que la fibra ``𝒢^i`` es la fila
    ``i``. Con ``orientation="auto"`` se traspone *matrix* cuando son sus columnas
    (y no sus filas) las que suman 1.

    Raises:
        NotAField: con la fibra que falla y su suma.
    """
    n = groupoid.n_units
    rows = [list(r) for r in matrix]
    if len(rows) != n or any(len(r) != n for r in rows):
        raise BadParameters(f"matrix must be {n}x{n} for this groupoid", units=n)
    pairs = set(zip(groupoid.tgt.tolist(), groupoid.src.tolist()))
    if groupoid.n_arrows != n * n or len(pairs) != n * n:
        raise BadParameters("field_from_matrix needs the full pair groupoid on one class")

    if orientation == "auto":
        if matrix_orientation(rows, precision) == "columns":
            logger.info("matrix columns sum to 1; transposing so that target fibers are normalized")
            rows = [list(c) for c in zip(*rows)]
    elif orientation == "transpose":
        rows = [list(c) for c in zip(*rows)]
    elif orientation != "as-is":
        raise BadParameters(f"unknown orientation '{orientation}'", orientation=orientation)

    values = {g: parse_scalar(rows[int(groupoid.tgt[g])][int(groupoid.src[g])], precision) for g in range(groupoid.n_arrows)}
    return Kernel(groupoid, values, precision).require_field()


@dataclass(frozen=True)
class BisectionMeasure:
    """Medida de probabilidad con soporte finito sobre bisecciones completas."""

    items: Tuple[Tuple[Bisection, Fraction], ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        total = Fraction(0)
        for _, w in self.items:
            if w < 0:
                raise BadParameters("bisection weights must be nonnegative", weight=str(w))
            total += w
        if total != 1:
            raise BadParameters(f"bisection weights sum to {total}, expected 1", total=str(total))

    @classmethod
    def of(cls, items: Iterable[Tuple[Bisection, Any]]) -> "BisectionMeasure":
        return cls(tuple((b, parse_fraction(w)) for b, w in items))

    @classmethod
    def uniform(cls, bisections: Sequence[Bisection]) -> "BisectionMeasure":
        return cls(tuple((b, Fraction(1, len(bisections))) for b in bisections))

    def mass_by_arrows(self) -> Dict[Tuple[int, ...], Fraction]:
        totals: Dict[Tuple[int, ...], Fraction] = {}
        for b, w in self.items:
            totals[b.arrows] = totals.get(b.arrows, Fraction(0)) + w
        return totals

    def is_symmetric(self, groupoid: FiniteGroupoid) -> bool:
        """``ν(γ) = ν(γ⁻¹)`` para cada bisección listada."""
        totals = self.mass_by_arrows()
        for arrows, w in totals.items():
            inverse = inverse_bisection(groupoid, Bisection(arrows, full=True)).arrows
            if totals.get(inverse, Fraction(0)) != w:
                return False
        return True


def field_from_bisections(groupoid: FiniteGroupoid, measure: BisectionMeasure, precision: Precision = "float") -> Kernel:
    """
    ``π(g) = ν({γ : g ∈ γ})``.

    Raises:
        GroupoidError: si algún elemento no es una bisección de *groupoid*.
        NotFull: si alguna bisección no corta todas las fibras.
    """
    values: Dict[int, Fraction] = {}
    for bisection, weight in measure.items:
        arrows = set(bisection.arrows)
        in_range = all(0 <= g < groupoid.n_arrows for g in arrows)
        if not in_range or len(arrows) != len(bisection.arrows) or not is_bisection(groupoid, arrows):
            raise GroupoidError(
                "arrow set is not a bisection",
                arrows=[str(g) for g in bisection.arrows],
            )
        if len(arrows) != groupoid.n_units:
            raise NotFull(
                "bisection does not meet every unit",
                arrows=[groupoid.arrow_label(a) for a in bisection.arrows],
            )
        for g in bisection.arrows:
            values[g] = values.get(g, Fraction(0)) + weight
    return Kernel(groupoid, values, precision)


# --- Álgebra ---

def i_norm(kernel: Kernel) -> Scalar:
    """Máximo, sobre las unidades, de las sumas absolutas en fibras de origen y de destino."""
    sums = kernel.fiber_sums("source", absolute=True) + kernel.fiber_sums("target", absolute=True)
    return max(sums) if sums else kernel.zero


def convolve(first: Kernel, second: Kernel) -> Kernel:
    """``(π₁∗π₂)(g) = Σ_{h ∈ 𝒢^{t(g)}} π₁(h) π₂(h⁻¹g)``."""
    groupoid = _same_groupoid(first, second)
    precision = _join_precision(first.precision, second.precision)
    a, b = first.as_precision(precision), second.as_precision(precision)

    out: Dict[int, Scalar] = {}
    for h1, v1 in a.values.items():
        for h2, v2 in b.by_target.get(int(groupoid.src[h1]), ()):
            gh = groupoid.compose(h1, h2)
            out[gh] = out.get(gh, 0) + v1 * v2
    return Kernel(groupoid, out, precision)


def convolution_power(kernel: Kernel, n: int) -> Kernel:
    """``π^{∗n}``; ``π^{∗0} = χ_{𝒢⁽⁰⁾}``."""
    if n < 0:
        raise BadParameters("convolution power must be nonnegative", n=n)
    result = identity_kernel(kernel.groupoid, kernel.precision)
    base = kernel
    while n:
        if n & 1:
            result = convolve(result, base)
        n >>= 1
        if n:
            base = convolve(base, base)
    return result


def involution(kernel: Kernel) -> Kernel:
    """``π*(g) = conj(π(g⁻¹))``."""
    inv = kernel.groupoid.inv
    return Kernel(kernel.groupoid, {int(inv[g]): conj(v) for g, v in kernel.values.items()}, kernel.precision)


def kernel_l2_norm_squared(kernel: Kernel) -> Scalar:
    """``Σ_g μ(t(g)) |π(g)|²``; exacto para valores racionales."""
    groupoid = kernel.groupoid
    if kernel.precision == "rational":
        return sum((groupoid.arrow_weight(g) * v * v for g, v in kernel.values.items()), Fraction(0))
    weights = groupoid.arrow_weights_float
    return float(sum(weights[g] * abs(v) ** 2 for g, v in kernel.values.items()))


def kernel_l2_norm(kernel: Kernel) -> float:
    return math.sqrt(float(kernel_l2_norm_squared(kernel)))


def kernel_product(first: Kernel, second: Kernel, groupoid: Optional[FiniteGroupoid] = None) -> Kernel:
    """Núcleo ``(π₁ × π₂)(g₁, g₂) = π₁(g₁) π₂(g₂)`` sobre el grupoide producto."""
    target = groupoid if groupoid is not None else product(first.groupoid, second.groupoid)
    factors = product_factors(target)
    if factors is None or factors[0] is not first.groupoid or factors[1] is not second.groupoid:
        raise GroupoidMismatch("groupoid is not the product of the kernels' groupoids")
    precision = _join_precision(first.precision, second.precision)
    a, b = first.as_precision(precision), second.as_precision(precision)
    width = second.groupoid.n_arrows
    values = {g1 * width + g2: v1 * v2 for g1, v1 in a.values.items() for g2, v2 in b.values.items()}
    return Kernel(target, values, precision)


def union_kernel(groupoid: FiniteGroupoid, kernels: Sequence[Kernel]) -> Kernel:
    """Yuxtapone un núcleo por componente de una unión disjunta."""
    layout = union_parts(groupoid)
    if layout is None:
        raise GroupoidMismatch("groupoid is not a disjoint union")
    parts, offsets = layout
    if len(parts) != len(kernels) or any(k.groupoid is not p for k, p in zip(kernels, parts)):
        raise GroupoidMismatch("one kernel per union part is required, in order")
    precision = _join_precision(*(k.precision for k in kernels))
    values: Dict[int, Scalar] = {}
    for offset, k in zip(offsets, kernels):
        for g, v in k.as_precision(precision).values.items():
            values[g + int(offset)] = v
    return Kernel(groupoid, values, precision)


def restrict_kernel(kernel: Kernel, unit_set: UnitSet, restricted: Optional[FiniteGroupoid] = None) -> Kernel:
    """``π|_E`` sobre ``𝒢|_E``: conserva los valores en flechas con ambos extremos en ``E``."""
    target = restricted if restricted is not None else restrict(kernel.groupoid, unit_set)
    layout = restriction_parent(target)
    if layout is None or layout[0] is not kernel.groupoid:
        raise GroupoidMismatch("groupoid is not a restriction of the kernel's groupoid")
    _, kept = layout
    values = {child: kernel(int(parent)) for child, parent in enumerate(kept)}
    return Kernel(target, values, kernel.precision)
