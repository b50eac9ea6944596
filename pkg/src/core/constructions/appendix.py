"""
Truncamientos finitos de los dos ejemplos de operadores no acotados.

* Unión disjunta ``⊔_{n ≤ N} (ℛ₀ × 𝒮ₙ)`` con el campo ``π₀ × πₙ``, donde ``πₙ`` sale
  de la matriz ``A_δ``: las normas por bloque crecen como ``√n``.
* Relación de pares sobre ``{0, …, (K+1)(K+2)/2 - 1}`` con la medida de conteo y la
  partición en intervalos ``I_k``: los vectores ``ξ_k`` dan el cociente ``√(k+1)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from config import Precision
from core.errors import BadParameters, GroupoidMismatch
from core.groupoid import (
    FiniteGroupoid,
    build_pair_groupoid,
    disjoint_union,
    pair_arrow,
    product,
    with_metadata,
)
from core.kernels import Kernel, field_from_matrix, i_norm, identity_kernel, kernel_product, union_kernel
from core.markov import L2Vector, apply, assemble, operator_norm
from utils.rational_tools import parse_fraction, sqrt_upper

logger = logging.getLogger(__name__)


@dataclass
class TruncationRow:
    parameter: int
    predicted: float
    computed: float
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return self.computed - self.predicted


@dataclass
class TruncationFamily:
    """Resultados de una construcción para valores crecientes del parámetro de truncamiento."""

    name: str
    parameter: str
    rows: List[TruncationRow]
    metadata: Dict[str, Any] = field(default_factory=dict)
    groupoid: Optional[FiniteGroupoid] = None
    kernel: Optional[Kernel] = None

    def header(self) -> Tuple[str, ...]:
        extra = tuple(self.rows[0].extra) if self.rows else ()
        return (self.parameter, "predicted", "computed", "gap", *extra)

    def to_rows(self) -> List[Tuple[Any, ...]]:
        return [(r.parameter, r.predicted, r.computed, r.gap, *r.extra.values()) for r in self.rows]

    @property
    def computed(self) -> List[float]:
        return [r.computed for r in self.rows]

    def strictly_increasing(self) -> bool:
        values = self.computed
        return all(b > a for a, b in zip(values, values[1:]))


# --- A_δ ---

@dataclass
class ADeltaMatrix:
    """
    Matriz ``n × n`` con columnas idénticas ``x_ε = (1-ε, ε/(n-1), …, ε/(n-1))``.

    Las columnas suman 1; ``exact_norm = √(n F(ε))`` con ``F(ε) = (1-ε)² + ε²/(n-1)``.
    """

    n: int
    delta: Fraction
    epsilon: Fraction
    matrix: List[List[Fraction]]

    @property
    def x_epsilon(self) -> List[Fraction]:
        return [row[0] for row in self.matrix]

    @property
    def f_value(self) -> Fraction:
        eps = self.epsilon
        return (1 - eps) ** 2 + eps ** 2 / (self.n - 1)

    @property
    def norm_squared(self) -> Fraction:
        return self.n * self.f_value

    @property
    def exact_norm(self) -> float:
        return math.sqrt(self.norm_squared)

    @property
    def lower_bound(self) -> float:
        """``√n - δ``, que la norma supera estrictamente."""
        return math.sqrt(self.n) - float(self.delta)

    def column_sums(self) -> List[Fraction]:
        return [sum(col, Fraction(0)) for col in zip(*self.matrix)]

    def dense_norm(self) -> float:
        """Valor singular máximo calculado con una descomposición densa."""
        return float(linalg.svdvals(np.array(self.matrix, dtype=float))[0])


def a_delta_matrix(n: int, delta: Any, epsilon: Optional[Any] = None) -> ADeltaMatrix:
    """
    Construye ``A_δ`` para ``n ≥ 2`` y ``0 < δ < 1/2``.

    Por defecto ``ε₀ = δ / (2 s)`` con ``s ≥ √n`` racional (exacto si ``n`` es un
    cuadrado), de modo que ``(1-ε₀)² ≥ 1 - δ/√n > (1 - δ/√n)²``.

    Raises:
        BadParameters: si ``n`` o ``δ`` están fuera de rango.
    """
    d = parse_fraction(delta)
    if n < 2:
        raise BadParameters(f"n must be at least 2, got {n}", n=n)
    if not 0 < d < Fraction(1, 2):
        raise BadParameters(f"delta must lie in (0, 1/2), got {d}", delta=str(d))

    eps = parse_fraction(epsilon) if epsilon is not None else d / (2 * sqrt_upper(n))
    if not 0 < eps < 1:
        raise BadParameters(f"epsilon must lie in (0, 1), got {eps}", epsilon=str(eps))

    x = [1 - eps] + [eps / (n - 1)] * (n - 1)
    matrix = [[x[i]] * n for i in range(n)]
    result = ADeltaMatrix(n, d, eps, matrix)
    if not result.exact_norm > result.lower_bound:
        logger.warning("A_delta norm %.12f does not exceed sqrt(n) - delta for n=%d", result.exact_norm, n)
    return result


# --- Unión disjunta no acotada ---

def point_groupoid() -> FiniteGroupoid:
    return build_pair_groupoid([[("y", 1)]])


def _s_n(n: int) -> FiniteGroupoid:
    return build_pair_groupoid([[(str(i), Fraction(1, n)) for i in range(n)]])


def unbounded_union_example(
    n_max: int,
    delta: Any,
    r0: Optional[FiniteGroupoid] = None,
    pi0: Optional[Kernel] = None,
    precision: Precision = "rational",
    build_union: bool = True,
) -> TruncationFamily:
    """
    Truncamiento ``⊔_{n=1}^{N} (ℛ₀ × 𝒮ₙ)`` con pesos ``1/N`` y el campo ``π₀ × πₙ``.

    Cada fila da la norma del bloque ``n`` (predicha ``‖P^{π₀}‖ √(n F(ε₀))``), la
    norma del truncamiento (máximo de los bloques) y la norma I, que crece como
    ``‖π₀‖_I · n (1 - ε₀)``.
    """
    if n_max < 1:
        raise BadParameters("N must be at least 1", n_max=n_max)
    if r0 is None:
        r0 = point_groupoid()
        pi0 = identity_kernel(r0, precision)
    elif pi0 is None or pi0.groupoid is not r0:
        raise GroupoidMismatch("pi0 must be a kernel on R0")
    pi0.require_field()

    base_norm = operator_norm(assemble(r0, pi0)).value
    base_i_norm = float(i_norm(pi0))

    components: List[FiniteGroupoid] = []
    kernels: List[Kernel] = []
    rows: List[TruncationRow] = []
    running_norm = running_i_norm = 0.0
    for n in range(1, n_max + 1):
        s_n = _s_n(n)
        if n == 1:
            matrix: Sequence[Sequence[Any]] = [[Fraction(1)]]
            predicted_block = 1.0
            predicted_i = 1.0
        else:
            a = a_delta_matrix(n, delta)
            matrix = a.matrix
            predicted_block = a.exact_norm
            predicted_i = float(n * (1 - a.epsilon))
        pi_n = field_from_matrix(s_n, matrix, "auto", precision)

        component = product(r0, s_n)
        k_n = kernel_product(pi0, pi_n, component)
        components.append(component)
        kernels.append(k_n)

        block_norm = operator_norm(assemble(component, k_n)).value
        block_i_norm = float(i_norm(k_n))
        running_norm = max(running_norm, block_norm)
        running_i_norm = max(running_i_norm, block_i_norm)
        rows.append(
            TruncationRow(
                n,
                base_norm * predicted_block,
                block_norm,
                {
                    "lower_bound": base_norm * (math.sqrt(n) - float(parse_fraction(delta))),
                    "truncated_norm": running_norm,
                    "i_norm": block_i_norm,
                    "predicted_i_norm": base_i_norm * predicted_i,
                    "truncated_i_norm": running_i_norm,
                },
            )
        )
        logger.debug("block n=%d norm=%.12f i_norm=%.6f", n, block_norm, block_i_norm)

    family = TruncationFamily(
        name="appendix-a",
        parameter="n",
        rows=rows,
        metadata={"N": n_max, "delta": str(parse_fraction(delta)), "R0_arrows": r0.n_arrows},
    )
    if build_union:
        scale = Fraction(1, n_max)
        union = disjoint_union([(c, scale) for c in components])
        union = with_metadata(union, truncation="N", N=n_max)
        family.groupoid = union
        family.kernel = union_kernel(union, kernels)
    return family


# --- Ejemplo de intervalos ---

def interval_bounds(k: int) -> Tuple[int, int]:
    """``I_k = [k(k+1)/2, (k+1)(k+2)/2)``."""
    return k * (k + 1) // 2, (k + 1) * (k + 2) // 2


def interval_example(k_max: int) -> TruncationFamily:
    """
    Relación de pares completa sobre ``0..(K+1)(K+2)/2 - 1`` con medida de conteo y
    ``π(m, n) = 1`` si y solo si ``n ∈ I_m``.

    Con ``t(m, n) = m`` las sumas de ``π`` son 1 sobre las fibras de *origen*
    ``𝒢_n`` (cada ``n`` pertenece a un único ``I_m``); sobre las de destino valen
    ``#I_m``. Para cada ``k ≤ K`` se verifica en aritmética exacta
    ``‖ξ_k‖² = k+1``, ``‖P^π ξ_k‖² = (k+1)²`` y por tanto el cociente ``√(k+1)``.
    """
    if k_max < 0:
        raise BadParameters("K must be nonnegative", k_max=k_max)

    size = (k_max + 1) * (k_max + 2) // 2
    groupoid = build_pair_groupoid([[(str(u), 1) for u in range(size)]])
    groupoid = with_metadata(groupoid, truncation="K", K=k_max, measure="counting")

    values: Dict[int, Fraction] = {}
    for m in range(k_max + 1):
        start, stop = interval_bounds(m)
        for n in range(start, stop):
            values[pair_arrow(groupoid, m, n)] = Fraction(1)
    kernel = Kernel(groupoid, values, "rational")
    op = assemble(groupoid, kernel)

    rows: List[TruncationRow] = []
    for k in range(k_max + 1):
        start, stop = interval_bounds(k)
        xi = L2Vector(groupoid, {pair_arrow(groupoid, k, a): Fraction(1) for a in range(start, stop)}, "rational")
        image = apply(op, xi)
        xi_sq = xi.norm_squared()
        image_sq = image.norm_squared()
        ratio_sq = image_sq / xi_sq
        rows.append(
            TruncationRow(
                k,
                math.sqrt(k + 1),
                math.sqrt(ratio_sq),
                {
                    "xi_norm_sq": str(xi_sq),
                    "p_xi_norm_sq": str(image_sq),
                    "ratio_sq": str(ratio_sq),
                    "exact": xi_sq == k + 1 and image_sq == (k + 1) ** 2 and ratio_sq == k + 1,
                },
            )
        )

    source_sums = kernel.fiber_sums("source")
    family = TruncationFamily(
        name="appendix-b",
        parameter="k",
        rows=rows,
        metadata={
            "K": k_max,
            "units": size,
            "arrows": groupoid.n_arrows,
            "pmp": groupoid.is_pmp,
            "source_fiber_sums_one": all(s == 1 for s in source_sums),
        },
        groupoid=groupoid,
        kernel=kernel,
    )
    logger.info("interval example K=%d on %d units", k_max, size)
    return family
