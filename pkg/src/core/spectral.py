"""
Radio espectral relativo a un conjunto de unidades, probabilidades de retorno y
criterio de Kesten.
"""
from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from config import (
    DENSE_NORM_CAP,
    EXTRAPOLATION_CEILING,
    FLOAT_TOL,
    INVARIANT_SET_ENUM_CAP,
    KESTEN_TOL,
    N_MAX_DEFAULT,
    SPECTRAL_MASS_TOL,
)
from core.errors import BadParameters, NonSymmetric, NotProbabilityPreserving, NullSet, NumericalError, TooShort
from core.groupoid import FiniteGroupoid, UnitSet, is_invariant, orbits, restrict
from core.kernels import Kernel, convolution_power, restrict_kernel
from core.markov import L2Vector, MarkovOperator, apply, assemble, operator_norm, symmetric_matrix_norm
from utils.rational_tools import Scalar

logger = logging.getLogger(__name__)


def _require_mass(groupoid: FiniteGroupoid, unit_set: UnitSet) -> None:
    if unit_set.mass <= 0:
        raise NullSet("the unit set has measure zero", units=unit_set.labels(groupoid))


def _require_symmetric_field(kernel: Kernel) -> None:
    kernel.require_field()
    if not kernel.is_symmetric:
        raise NonSymmetric("kernel is not symmetric: pi(g^-1) != conj(pi(g)) for some arrow")


def _dense_feasible(groupoid: FiniteGroupoid) -> bool:
    return max((len(f) for f in groupoid.target_fibers), default=0) <= DENSE_NORM_CAP


# --- Probabilidad de retorno ---

@dataclass
class ReturnProbability:
    value: Scalar
    matrix_route: Scalar
    convolution_route: Scalar

    @property
    def discrepancy(self) -> float:
        return abs(complex(self.matrix_route) - complex(self.convolution_route))


def return_probability(
    groupoid: FiniteGroupoid,
    kernel: Kernel,
    unit_set: UnitSet,
    n: int,
    tol: float = FLOAT_TOL,
) -> ReturnProbability:
    """
    ``μ(E)⁻¹ ⟨(P^π)ⁿ χ_E, χ_E⟩`` por potencias del operador y, por separado,
    ``μ(E)⁻¹ Σ_{x ∈ E} μ(x) π^{∗n}(id_x)`` por potencias de convolución.

    Raises:
        NumericalError: si las dos rutas difieren (en más de *tol* en coma
            flotante, en cualquier cantidad en modo racional).
    """
    _require_mass(groupoid, unit_set)
    kernel.require_field()
    precision = kernel.precision
    mass: Scalar = unit_set.mass if precision == "rational" else float(unit_set.mass)

    op = assemble(groupoid, kernel)
    chi = L2Vector.indicator(groupoid, unit_set, precision)
    current = chi
    for _ in range(n):
        current = apply(op, current)
    matrix_route = current.inner(chi) / mass

    power = convolution_power(kernel, n)
    convolution_route = sum(
        (groupoid.weights[x] if precision == "rational" else float(groupoid.weights[x])) * power(int(groupoid.unit_arrow[x]))
        for x in unit_set.members
    ) / mass

    result = ReturnProbability(matrix_route, matrix_route, convolution_route)
    if precision == "rational":
        disagree = matrix_route != convolution_route
    else:
        disagree = result.discrepancy > tol
    if disagree:
        raise NumericalError(
            f"return probability routes disagree at n={n}",
            n=n,
            matrix_route=str(matrix_route),
            convolution_route=str(convolution_route),
            discrepancy=result.discrepancy,
        )
    return result


# --- Medida espectral ---

@dataclass(frozen=True)
class SpectralAtom:
    eigenvalue: float
    mass: float


def spectral_measure(groupoid: FiniteGroupoid, kernel: Kernel, unit_set: Optional[UnitSet] = None, merge_tol: float = 1e-9) -> List[SpectralAtom]:
    """
    Átomos de ``ν_E``, la medida espectral de ``ξ_E`` para ``P^π`` autoadjunto.

    En coordenadas ponderadas ``ξ_E`` vale ``√(μ(x)/μ(E))`` en ``id_x``; cada bloque de
    fibra se diagonaliza con ``eigh``.
    """
    unit_set = unit_set if unit_set is not None else UnitSet.everything(groupoid)
    _require_mass(groupoid, unit_set)
    _require_symmetric_field(kernel)
    op = assemble(groupoid, kernel)

    blocks = {x: (fiber, block) for x, fiber, block in op.blocks()}
    raw: List[Tuple[float, float]] = []
    for x in unit_set.members:
        fiber, block = blocks[x]
        local = int(np.flatnonzero(fiber == groupoid.unit_arrow[x])[0])
        coefficient = math.sqrt(float(groupoid.weights[x] / unit_set.mass))
        eigenvalues, vectors = linalg.eigh(block)
        masses = np.abs(coefficient * vectors[local, :].conj()) ** 2
        raw.extend(zip(eigenvalues.tolist(), masses.tolist()))

    raw.sort()
    atoms: List[SpectralAtom] = []
    for value, mass in raw:
        if atoms and abs(atoms[-1].eigenvalue - value) <= merge_tol:
            last = atoms[-1]
            atoms[-1] = SpectralAtom(last.eigenvalue, last.mass + mass)
        else:
            atoms.append(SpectralAtom(value, mass))
    return atoms


def spectral_radius_from_measure(atoms: Sequence[SpectralAtom]) -> float:
    """``max |t|`` sobre los átomos con masa no despreciable."""
    return max((abs(a.eigenvalue) for a in atoms if a.mass > SPECTRAL_MASS_TOL), default=0.0)


# --- Extrapolación ---

EXTRAPOLATION_METHODS = ("aitken", "log-increments")


def _aitken(seq: Sequence[float]) -> Optional[float]:
    a, b, c = seq[-3:]
    denominator = c - 2 * b + a
    if denominator == 0 or not math.isfinite(denominator):
        return None
    return c - (c - b) ** 2 / denominator


def _log_increments(r: Sequence[float]) -> float:
    logs = [n * math.log(v) for n, v in enumerate(r, start=1)]
    d = [logs[0]] + [logs[i] - logs[i - 1] for i in range(1, len(logs))]
    accelerated = _aitken(d)
    return math.exp(accelerated if accelerated is not None else d[-1])


def extrapolate(
    r_seq: Sequence[float],
    ceiling: Optional[float] = EXTRAPOLATION_CEILING,
    method: str = "aitken",
) -> float:
    """
    Estima ``lim r_n`` con ``r_seq[0] = r_1``.

    ``"aitken"`` aplica Δ² a los tres últimos ``r_n``; si las diferencias se anulan
    devuelve el último valor.

    ``"log-increments"`` aplica Δ² a ``d_n = n log r_n - (n-1) log r_{n-1}``, el
    logaritmo de la razón entre probabilidades de retorno consecutivas. Con hueco
    espectral ``d_n`` converge geométricamente, mientras que ``r_n`` lo hace como
    ``O(1/n)``. Si algún ``r_n`` es nulo se usa ``"aitken"``.

    Raises:
        TooShort: con menos de tres valores.
        BadParameters: si *method* no es conocido.
    """
    if method not in EXTRAPOLATION_METHODS:
        raise BadParameters(f"unknown extrapolation method {method!r}", method=method)
    if len(r_seq) < 3:
        raise TooShort(f"extrapolation needs at least 3 values, got {len(r_seq)}", length=len(r_seq))

    r = [float(v) for v in r_seq]
    if method == "log-increments" and min(r) > 0:
        estimate = _log_increments(r)
    else:
        accelerated = _aitken(r)
        estimate = accelerated if accelerated is not None else r[-1]

    estimate = max(estimate, 0.0)
    if ceiling is not None:
        estimate = min(estimate, ceiling)
    return estimate


# --- Radio espectral relativo ---

@dataclass
class SpectralReport:
    units: List[str]
    r_seq: List[float]
    return_probabilities: List[float]
    rho_extrapolated: float
    operator_norm: float
    rho_exact: Optional[float]
    e_invariant: bool
    restricted_norm: Optional[float]
    kesten_pass: Optional[bool]
    monotonicity_ok: bool
    bounded_by_norm: bool

    def to_rows(self) -> List[Tuple[int, float, float]]:
        """``(n, return_probability_2n, r_n)``."""
        return [(n, p, r) for n, (p, r) in enumerate(zip(self.return_probabilities, self.r_seq), start=1)]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "units": self.units,
            "n_max": len(self.r_seq),
            "r_last": self.r_seq[-1] if self.r_seq else None,
            "rho_extrapolated": self.rho_extrapolated,
            "operator_norm": self.operator_norm,
            "rho_exact": self.rho_exact,
            "e_invariant": self.e_invariant,
            "restricted_norm": self.restricted_norm,
            "kesten_pass": self.kesten_pass,
            "monotonicity_ok": self.monotonicity_ok,
            "bounded_by_norm": self.bounded_by_norm,
        }


def _norm_of(op: MarkovOperator, threads: int) -> float:
    method = "exact" if _dense_feasible(op.groupoid) else "power"
    return operator_norm(op, method=method, threads=threads).value


def e_spectral_radius(
    groupoid: FiniteGroupoid,
    kernel: Kernel,
    unit_set: Optional[UnitSet] = None,
    n_max: int = N_MAX_DEFAULT,
    tol: float = KESTEN_TOL,
    threads: int = 1,
    extrapolation: str = "aitken",
) -> SpectralReport:
    """
    ``r_n = (μ(E)⁻¹ ⟨(P^π)^{2n} χ_E, χ_E⟩)^{1/(2n)}`` para ``n = 1..n_max``.

    Como ``P^π`` es autoadjunto, ``⟨P^{2n} ξ_E, ξ_E⟩ = ‖Pⁿ ξ_E‖²``; la iteración usa la
    matriz ponderada en coma flotante. *extrapolation* elige el método de
    :func:`extrapolate`.
    """
    unit_set = unit_set if unit_set is not None else UnitSet.everything(groupoid)
    _require_mass(groupoid, unit_set)
    _require_symmetric_field(kernel)
    if n_max < 1:
        raise TooShort("n_max must be at least 1", n_max=n_max)

    op = assemble(groupoid, kernel)
    weighted = op.weighted_matrix()
    root = np.sqrt(groupoid.arrow_weights_float)
    v = L2Vector.unit_vector(groupoid, unit_set).to_array() * root

    r_seq: List[float] = []
    returns: List[float] = []
    for n in range(1, n_max + 1):
        v = weighted @ v
        value = float(np.vdot(v, v).real)
        returns.append(value)
        r_seq.append(value ** (1.0 / (2 * n)) if value > 0 else 0.0)

    norm = _norm_of(op, threads)
    rho_exact = None
    if _dense_feasible(groupoid):
        rho_exact = spectral_radius_from_measure(spectral_measure(groupoid, kernel, unit_set))

    invariant = is_invariant(groupoid, unit_set)
    restricted_norm = kesten_pass = None
    if invariant:
        restricted = restrict(groupoid, unit_set)
        restricted_norm = _norm_of(assemble(restricted, restrict_kernel(kernel, unit_set, restricted)), threads)
        kesten_pass = abs(restricted_norm - 1.0) <= tol

    monotone = all(b >= a - 1e-12 for a, b in zip(r_seq, r_seq[1:]))
    bounded = all(r <= norm + 1e-12 for r in r_seq)
    extrapolated = extrapolate(r_seq, method=extrapolation) if len(r_seq) >= 3 else r_seq[-1]

    half = r_seq[max(n_max // 2 - 1, 0)]
    if r_seq[-1] - half > 10 * tol:
        logger.warning(
            "r_n still moving at n_max=%d (r_n_max - r_n_max/2 = %.3g); compare with the exact value",
            n_max,
            r_seq[-1] - half,
        )

    report = SpectralReport(
        units=unit_set.labels(groupoid),
        r_seq=r_seq,
        return_probabilities=returns,
        rho_extrapolated=extrapolated,
        operator_norm=norm,
        rho_exact=rho_exact,
        e_invariant=invariant,
        restricted_norm=restricted_norm,
        kesten_pass=kesten_pass,
        monotonicity_ok=monotone,
        bounded_by_norm=bounded,
    )
    logger.info("spectral report: %s", report.to_dict())
    return report


# --- Criterio de Kesten ---

@dataclass
class KestenEntry:
    units: List[str]
    mass: Fraction
    norm: float
    passed: bool

    def to_dict(self) -> Dict[str, Any]:
        return {"units": self.units, "mass": str(self.mass), "norm": self.norm, "passed": self.passed}


@dataclass
class KestenReport:
    entries: List[KestenEntry]
    tol: float
    enumerated: bool
    invariant_sets: int
    label: str = ""
    notes: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def to_rows(self) -> List[Tuple[str, str, str, bool]]:
        return [(" ".join(e.units), str(e.mass), f"{e.norm:.12f}", e.passed) for e in self.entries]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "passed": self.passed,
            "tol": self.tol,
            "enumerated": self.enumerated,
            "invariant_sets": self.invariant_sets,
            "checked_sets": len(self.entries),
            "entries": [e.to_dict() for e in self.entries],
            "notes": self.notes,
        }


def _check_set(groupoid: FiniteGroupoid, kernel: Kernel, unit_set: UnitSet, tol: float) -> KestenEntry:
    restricted = restrict(groupoid, unit_set)
    op = assemble(restricted, restrict_kernel(kernel, unit_set, restricted))
    norm = _norm_of(op, 1)
    return KestenEntry(unit_set.labels(groupoid), unit_set.mass, norm, abs(norm - 1.0) <= tol)


def kesten_check(
    groupoid: FiniteGroupoid,
    kernel: Kernel,
    tol: float = KESTEN_TOL,
    threads: int = 1,
    limit: int = INVARIANT_SET_ENUM_CAP,
) -> KestenReport:
    """
    Calcula ``‖P_E^π‖`` para cada conjunto invariante ``E`` de masa positiva.

    Con ``k`` órbitas se recorren las ``2^k - 1`` uniones no vacías si caben en
    *limit*; si no, solo cada órbita (la norma de una unión es el máximo de las
    normas de sus partes).
    """
    if not groupoid.is_pmp:
        raise NotProbabilityPreserving(
            "Kesten's criterion needs a probability-measure-preserving groupoid",
            total_mass=str(groupoid.total_mass),
            measure_preserving=groupoid.is_measure_preserving,
        )
    _require_symmetric_field(kernel)

    blocks = orbits(groupoid)
    enumerated = 2 ** len(blocks) - 1 <= limit
    notes: List[str] = []
    if enumerated:
        candidates = [
            UnitSet.of(groupoid, itertools.chain.from_iterable(b.members for b in chosen))
            for size in range(1, len(blocks) + 1)
            for chosen in itertools.combinations(blocks, size)
        ]
    else:
        logger.warning("%d orbits: checking each orbit instead of every union", len(blocks))
        notes.append("per-orbit check: invariant-set enumeration exceeds the cap")
        candidates = list(blocks)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            entries = list(pool.map(lambda e: _check_set(groupoid, kernel, e, tol), candidates))
    else:
        entries = [_check_set(groupoid, kernel, e, tol) for e in candidates]

    report = KestenReport(
        entries=entries,
        tol=tol,
        enumerated=enumerated,
        invariant_sets=2 ** len(blocks) if enumerated else len(blocks),
        notes=notes,
    )
    logger.info("kesten check: %d sets, passed=%s", len(entries), report.passed)
    return report


def kesten_check_operator(matrix: Any, label: str, tol: float = KESTEN_TOL) -> KestenReport:
    """
    Misma prueba ``|‖P‖ - 1| ≤ tol`` sobre un operador simétrico que no procede de
    un grupoide p.m.p. (p. ej. el paseo truncado a una bola de un grupo libre).
    """
    norm = symmetric_matrix_norm(matrix)
    entry = KestenEntry([label], Fraction(1), norm, abs(norm - 1.0) <= tol)
    return KestenReport([entry], tol, enumerated=False, invariant_sets=1, label=label, notes=["truncated operator"])
