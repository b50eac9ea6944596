"""
El espacio ``L²(𝒢, μ_t)`` de flechas y el operador de Markov invariante ``P^π``.

La matriz tiene entradas ``M[g, g'] = π(g⁻¹g')`` cuando ``t(g) = t(g')``; es diagonal
por bloques según la fibra de destino y el peso ``μ(t(g))`` es constante dentro de
cada bloque.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
from scipy import linalg, sparse
from scipy.sparse import linalg as sparse_linalg
from sympy import QQ
from sympy.polys.matrices import DomainMatrix

from config import DENSE_NORM_CAP, FLOAT_TOL, POWER_MAX_ITER, POWER_SEED, POWER_TOL, Precision
from core.errors import BadParameters, GroupoidMismatch, NoConvergence
from core.groupoid import FiniteGroupoid, UnitSet
from core.kernels import Kernel, conj, i_norm, kernel_l2_norm
from utils.output_tools import RunManifest, render_csv, write_text
from utils.rational_tools import Scalar, coerce, parse_fraction, to_qq

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class L2Vector:
    """Elemento disperso de ``L²(𝒢, μ_t)``."""

    groupoid: FiniteGroupoid
    values: Mapping[int, Scalar]
    precision: Precision = "float"

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", {int(g): coerce(v, self.precision) for g, v in self.values.items() if v != 0})

    @classmethod
    def indicator(cls, groupoid: FiniteGroupoid, unit_set: UnitSet, precision: Precision = "float") -> "L2Vector":
        """``χ_E`` visto en las flechas identidad de ``E``."""
        one = Fraction(1) if precision == "rational" else 1.0
        return cls(groupoid, {int(groupoid.unit_arrow[x]): one for x in unit_set.members}, precision)

    @classmethod
    def unit_vector(cls, groupoid: FiniteGroupoid, unit_set: UnitSet) -> "L2Vector":
        """``ξ_E = μ(E)^{-1/2} χ_E``."""
        scale = 1.0 / math.sqrt(float(unit_set.mass))
        return cls(groupoid, {int(groupoid.unit_arrow[x]): scale for x in unit_set.members}, "float")

    @classmethod
    def constant(cls, groupoid: FiniteGroupoid, precision: Precision = "float") -> "L2Vector":
        one = Fraction(1) if precision == "rational" else 1.0
        return cls(groupoid, dict.fromkeys(range(groupoid.n_arrows), one), precision)

    @classmethod
    def from_array(cls, groupoid: FiniteGroupoid, array: np.ndarray) -> "L2Vector":
        nonzero = np.flatnonzero(array)
        return cls(groupoid, {int(g): array[g].item() for g in nonzero}, "float")

    def __call__(self, g: int) -> Scalar:
        return self.values.get(int(g), Fraction(0) if self.precision == "rational" else 0.0)

    def to_array(self) -> np.ndarray:
        is_complex = any(isinstance(v, complex) for v in self.values.values())
        out = np.zeros(self.groupoid.n_arrows, dtype=complex if is_complex else float)
        for g, v in self.values.items():
            out[g] = v
        return out

    def inner(self, other: "L2Vector") -> Scalar:
        """``⟨ξ, η⟩ = Σ_g μ(t(g)) ξ(g) conj(η(g))``."""
        if other.groupoid is not self.groupoid:
            raise GroupoidMismatch("vectors live on different groupoids")
        g_ = self.groupoid
        total: Scalar = Fraction(0) if self.precision == other.precision == "rational" else 0.0
        for g, v in self.values.items():
            w = other.values.get(g)
            if w is None:
                continue
            weight = g_.arrow_weight(g) if isinstance(total, Fraction) else g_.arrow_weights_float[g]
            total += weight * v * conj(w)
        return total

    def norm_squared(self) -> Scalar:
        value = self.inner(self)
        return value.real if isinstance(value, complex) else value

    def norm(self) -> float:
        return math.sqrt(float(self.norm_squared()))


@dataclass(frozen=True, eq=False)
class MarkovOperator:
    """``P^π`` para un núcleo sobre un grupoide finito."""

    groupoid: FiniteGroupoid
    kernel: Kernel

    @property
    def precision(self) -> Precision:
        return self.kernel.precision

    @property
    def dimension(self) -> int:
        return self.groupoid.n_arrows

    @cached_property
    def entries(self) -> Dict[Tuple[int, int], Scalar]:
        """Entradas no nulas ``M[g, gh] = π(h)`` para ``h`` en el soporte y ``s(g) = t(h)``."""
        g_ = self.groupoid
        out: Dict[Tuple[int, int], Scalar] = {}
        for h, value in self.kernel.values.items():
            for g in g_.source_fibers[int(g_.tgt[h])]:
                key = (int(g), g_.compose(int(g), h))
                out[key] = out.get(key, 0) + value
        logger.debug("assembled %d nonzero entries on %d arrows", len(out), g_.n_arrows)
        return out

    def matrix(self) -> sparse.csr_matrix:
        """Matriz dispersa en coma flotante."""
        n = self.dimension
        if not self.entries:
            return sparse.csr_matrix((n, n))
        keys = np.array(list(self.entries.keys()), dtype=np.int64)
        raw = list(self.entries.values())
        data = np.array([complex(v) if isinstance(v, complex) else float(v) for v in raw])
        return sparse.csr_matrix((data, (keys[:, 0], keys[:, 1])), shape=(n, n))

    def exact_matrix(self) -> DomainMatrix:
        """Matriz exacta sobre ``QQ``."""
        dok = {key: to_qq(parse_fraction(v)) for key, v in self.entries.items()}
        return DomainMatrix.from_dok(dok, (self.dimension, self.dimension), QQ)

    @cached_property
    def _sqrt_weights(self) -> np.ndarray:
        return np.sqrt(self.groupoid.arrow_weights_float)

    def weighted_matrix(self) -> sparse.csr_matrix:
        """``D^{1/2} M D^{-1/2}`` con ``D = diag μ(t(g))``: su norma espectral es ``‖P^π‖``."""
        root = self._sqrt_weights
        return (sparse.diags(root) @ self.matrix() @ sparse.diags(1.0 / root)).tocsr()

    def blocks(self) -> List[Tuple[int, np.ndarray, np.ndarray]]:
        """``(unidad, flechas de 𝒢^x, bloque denso ponderado)`` para cada unidad."""
        weighted = self.weighted_matrix()
        out = []
        for x, fiber in enumerate(self.groupoid.target_fibers):
            if len(fiber) > DENSE_NORM_CAP:
                raise BadParameters(
                    f"target fiber of size {len(fiber)} exceeds the dense cap {DENSE_NORM_CAP}; use the power method",
                    unit=self.groupoid.unit_ids[x],
                )
            out.append((x, fiber, weighted[fiber][:, fiber].toarray()))
        return out

    def exact_adjoint_entries(self) -> Dict[Tuple[int, int], Scalar]:
        """Adjunto para el producto ponderado: ``M♯[g', g] = conj(M[g, g']) μ(t(g)) / μ(t(g'))``."""
        g_ = self.groupoid
        return {(j, i): conj(v) * g_.arrow_weight(i) / g_.arrow_weight(j) for (i, j), v in self.entries.items()}

    def self_adjointness_defect(self) -> float:
        """``max |W - Wᴴ|`` sobre la matriz ponderada."""
        weighted = self.weighted_matrix()
        diff = weighted - weighted.conj().T
        return float(abs(diff).max()) if diff.nnz else 0.0


def assemble(groupoid: FiniteGroupoid, kernel: Kernel) -> MarkovOperator:
    """Operador de Markov ``P^π``."""
    if kernel.groupoid is not groupoid:
        raise GroupoidMismatch("kernel does not live on this groupoid")
    return MarkovOperator(groupoid, kernel)


def apply(operator: MarkovOperator, vector: L2Vector) -> L2Vector:
    """
    ``(P^π ξ)(g) = Σ_{h ∈ 𝒢^{s(g)}} ξ(gh) π(h)``, calculado por dispersión:
    cada ``g'`` del soporte de ``ξ`` aporta ``π(h) ξ(g')`` en ``g'h⁻¹``.
    """
    g_ = operator.groupoid
    if vector.groupoid is not g_:
        raise GroupoidMismatch("vector does not live on the operator's groupoid")
    precision: Precision = "rational" if operator.precision == vector.precision == "rational" else "float"
    by_source = operator.kernel.by_source

    out: Dict[int, Scalar] = {}
    for g_prime, xi in vector.values.items():
        for h, pi in by_source.get(int(g_.src[g_prime]), ()):
            g = g_.compose(g_prime, int(g_.inv[h]))
            out[g] = out.get(g, 0) + pi * xi
    return L2Vector(g_, out, precision)


@dataclass
class NormResult:
    value: float
    method: str
    certificate: Dict[str, Any] = field(default_factory=dict)
    trace: List[float] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {"value": self.value, "method": self.method, "certificate": self.certificate}


def _block_norm(block: np.ndarray) -> float:
    if block.size == 0:
        return 0.0
    if np.allclose(block, block.conj().T, atol=FLOAT_TOL, rtol=0.0):
        return float(np.max(np.abs(linalg.eigvalsh(block))))
    return float(linalg.svdvals(block)[0])


def operator_norm(
    operator: MarkovOperator,
    method: str = "exact",
    tol: float = POWER_TOL,
    max_iter: int = POWER_MAX_ITER,
    threads: int = 1,
) -> NormResult:
    """
    ``‖P^π‖`` en ``L²(𝒢, μ_t)``.

    ``exact`` descompone cada bloque de fibra (valor singular máximo o
    ``max |autovalor|`` si el bloque es hermítico). ``power`` itera sobre ``WᴴW`` desde
    un vector inicial con semilla fija y devuelve la cota inferior de Rayleigh.

    Raises:
        NoConvergence: si la iteración de potencia agota ``max_iter``.
    """
    if method == "exact":
        blocks = operator.blocks()
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                norms = list(pool.map(lambda b: _block_norm(b[2]), blocks))
        else:
            norms = [_block_norm(b[2]) for b in blocks]
        best = int(np.argmax(norms)) if norms else 0
        value = float(norms[best]) if norms else 0.0
        return NormResult(value, "exact", {"block_unit": operator.groupoid.unit_ids[blocks[best][0]] if norms else None})

    if method != "power":
        raise BadParameters(f"unknown norm method '{method}'", method=method)
    return _power_norm(operator.weighted_matrix(), tol, max_iter)


def symmetric_matrix_norm(matrix: Any, dense_cap: int = DENSE_NORM_CAP) -> float:
    """
    ``max |autovalor|`` de una matriz simétrica real: ``eigvalsh`` denso hasta
    *dense_cap*, ``eigsh`` disperso por encima (autovalor de Perron si no hay
    entradas negativas).
    """
    n = matrix.shape[0]
    if n == 0:
        return 0.0
    if n <= dense_cap:
        dense = matrix.toarray() if sparse.issparse(matrix) else np.asarray(matrix)
        return float(np.max(np.abs(linalg.eigvalsh(dense))))

    csr = sparse.csr_matrix(matrix)
    nonnegative = csr.nnz == 0 or csr.data.min() >= 0
    values = sparse_linalg.eigsh(csr, k=1, which="LA" if nonnegative else "LM", return_eigenvectors=False)
    return float(np.abs(values).max())


def _power_norm(weighted: sparse.csr_matrix, tol: float, max_iter: int) -> NormResult:
    n = weighted.shape[0]
    rng = np.random.Generator(np.random.Philox(POWER_SEED))
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    adjoint = weighted.conj().T.tocsr()

    trace: List[float] = []
    previous = 0.0
    for iteration in range(1, max_iter + 1):
        w = weighted @ v
        estimate = float(np.linalg.norm(w))
        trace.append(estimate)
        if estimate == 0.0:
            return NormResult(0.0, "power", {"lower_bound": 0.0, "iterations": iteration}, trace)
        if abs(estimate - previous) < tol:
            logger.debug("power iteration converged after %d steps at %.15g", iteration, estimate)
            return NormResult(estimate, "power", {"lower_bound": estimate, "iterations": iteration}, trace)
        previous = estimate
        v = adjoint @ w
        v /= np.linalg.norm(v)

    raise NoConvergence(max_iter, max(trace), trace)


@dataclass
class NormSandwich:
    l2_norm: float
    operator_norm: float
    i_norm: float

    @property
    def ordered(self) -> bool:
        slack = 1e-10
        return self.l2_norm <= self.operator_norm + slack and self.operator_norm <= self.i_norm + slack

    def to_dict(self) -> Dict[str, Any]:
        return {
            "l2_norm": self.l2_norm,
            "operator_norm": self.operator_norm,
            "i_norm": self.i_norm,
            "ordered": self.ordered,
        }


def norm_sandwich_report(groupoid: FiniteGroupoid, kernel: Kernel, method: str = "exact", **options: Any) -> NormSandwich:
    """``(‖π‖₂, ‖P^π‖, ‖π‖_I)``, que deben aparecer en orden no decreciente."""
    op = assemble(groupoid, kernel)
    report = NormSandwich(
        l2_norm=kernel_l2_norm(kernel),
        operator_norm=operator_norm(op, method=method, **options).value,
        i_norm=float(i_norm(kernel)),
    )
    if not report.ordered:
        logger.warning("norm sandwich violated: %s", report.to_dict())
    return report


def operator_norm_p(operator: MarkovOperator, p: float) -> Scalar:
    """
    Norma exacta de ``P^π`` en ``L¹`` o ``L^∞`` (``p`` en ``{1, inf}``).

    ``L^∞``: máxima suma absoluta por fila. ``L¹(μ_t)``: máximo sobre ``g'`` de
    ``Σ_g μ(t(g)) |M[g, g']| / μ(t(g'))``.
    """
    g_ = operator.groupoid
    rational = operator.precision == "rational"
    zero: Scalar = Fraction(0) if rational else 0.0
    sums: Dict[int, Scalar] = {}
    if p == math.inf:
        for (i, _), v in operator.entries.items():
            sums[i] = sums.get(i, zero) + abs(v)
    elif p == 1:
        weight = g_.arrow_weight if rational else (lambda a: g_.arrow_weights_float[a])
        for (i, j), v in operator.entries.items():
            sums[j] = sums.get(j, zero) + abs(v) * weight(i) / weight(j)
    else:
        raise BadParameters("only p = 1 and p = inf are supported", p=p)
    return max(sums.values()) if sums else zero


def recover_kernel(operator: MarkovOperator) -> Kernel:
    """Inversa del ensamblado: ``η(g) = M[g⁻¹, id_{s(g)}]``."""
    g_ = operator.groupoid
    entries = operator.entries
    values = {}
    for g in range(g_.n_arrows):
        v = entries.get((int(g_.inv[g]), int(g_.unit_arrow[g_.src[g]])))
        if v is not None:
            values[g] = v
    return Kernel(g_, values, operator.precision)


def export_coo(
    operator: MarkovOperator,
    destination: Optional[Path] = None,
    manifest: Optional[RunManifest] = None,
) -> str:
    """Exporta las entradas como texto ``row_arrow,col_arrow,value``."""
    label = operator.groupoid.arrow_label
    rows = [(label(i), label(j), str(v)) for (i, j), v in sorted(operator.entries.items())]
    text = render_csv(("row_arrow", "col_arrow", "value"), rows, manifest)
    if destination is not None:
        write_text(text, destination)
    return text
