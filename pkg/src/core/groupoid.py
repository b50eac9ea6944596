"""
Grupoides discretos finitos que preservan la medida (p.m.p.).

Un :class:`FiniteGroupoid` guarda las unidades con pesos racionales exactos y las
flechas como arreglos de numpy (``src``, ``tgt``, ``inv``). La composición se
delega en una *estructura*: una tabla explícita para grupoides genéricos, o
una regla implícita (fórmula de pares, tabla de grupo, producto, unión,
restricción) para los constructores con nombre.
"""
from __future__ import annotations

import itertools
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from config import (
    ASSOCIATIVITY_EXHAUSTIVE_CAP,
    ASSOCIATIVITY_SAMPLE_SIZE,
    BISECTION_ENUM_CAP,
    COMPOSITION_TABLE_CAP,
    INVARIANT_SET_ENUM_CAP,
)
from core.errors import (
    BadParameters,
    DuplicateUnit,
    EmptyUnion,
    GroupoidError,
    NotAGroup,
    NullSet,
    TooManyBisections,
    UnequalClassWeights,
)
from utils.rational_tools import parse_fraction

logger = logging.getLogger(__name__)

WeightLike = Any  # Fraction | int | str "p/q"


# --- Estructuras de composición ---

class _Structure(ABC):
    """Regla de composición y etiquetado de flechas."""

    @abstractmethod
    def compose(self, g: int, h: int) -> Optional[int]:
        """Devuelve ``gh`` o ``None`` si la estructura no lo define."""

    @abstractmethod
    def label(self, g: int) -> str:
        """Identificador legible de la flecha *g*."""


class _TableStructure(_Structure):
    def __init__(self, labels: Sequence[str], table: Mapping[Tuple[int, int], int]) -> None:
        self.labels = tuple(labels)
        self.table = dict(table)

    def compose(self, g: int, h: int) -> Optional[int]:
        return self.table.get((g, h))

    def label(self, g: int) -> str:
        return self.labels[g]


class _PairStructure(_Structure):
    """Relación de equivalencia: la flecha ``(x, y)`` va de ``y`` a ``x``."""

    def __init__(self, classes: Sequence[np.ndarray], unit_ids: Sequence[str]) -> None:
        self.classes = [np.asarray(c, dtype=np.int64) for c in classes]
        self.unit_ids = unit_ids
        sizes = np.array([len(c) for c in self.classes], dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(sizes * sizes)])
        self.sizes = sizes
        n_units = int(sizes.sum())
        self.class_of = np.empty(n_units, dtype=np.int64)
        self.local = np.empty(n_units, dtype=np.int64)
        for c, members in enumerate(self.classes):
            self.class_of[members] = c
            self.local[members] = np.arange(len(members))

    def _locate(self, g: int) -> Tuple[int, int, int]:
        c = int(np.searchsorted(self.offsets, g, side="right")) - 1
        local = g - int(self.offsets[c])
        size = int(self.sizes[c])
        return c, local // size, local % size

    def arrow_between(self, c: int, i: int, j: int) -> int:
        """Flecha ``(x_i, x_j)`` de la clase *c* (índices locales)."""
        return int(self.offsets[c]) + i * int(self.sizes[c]) + j

    def compose(self, g: int, h: int) -> Optional[int]:
        cg, i, j = self._locate(g)
        ch, k, l = self._locate(h)
        if cg != ch or j != k:
            return None
        return self.arrow_between(cg, i, l)

    def label(self, g: int) -> str:
        c, i, j = self._locate(g)
        members = self.classes[c]
        return f"({self.unit_ids[members[i]]},{self.unit_ids[members[j]]})"


class _GroupStructure(_Structure):
    def __init__(self, table: np.ndarray, element_labels: Sequence[str]) -> None:
        self.table = table
        self.element_labels = tuple(element_labels)

    def compose(self, g: int, h: int) -> Optional[int]:
        return int(self.table[g, h])

    def label(self, g: int) -> str:
        return self.element_labels[g]


class _ProductStructure(_Structure):
    def __init__(self, left: "FiniteGroupoid", right: "FiniteGroupoid") -> None:
        self.left = left
        self.right = right
        self.width = right.n_arrows

    def split(self, g: int) -> Tuple[int, int]:
        return divmod(g, self.width)

    def compose(self, g: int, h: int) -> Optional[int]:
        g1, g2 = self.split(g)
        h1, h2 = self.split(h)
        a = self.left.structure.compose(g1, h1)
        b = self.right.structure.compose(g2, h2)
        if a is None or b is None:
            return None
        return a * self.width + b

    def label(self, g: int) -> str:
        g1, g2 = self.split(g)
        return f"{self.left.arrow_label(g1)}|{self.right.arrow_label(g2)}"


class _UnionStructure(_Structure):
    def __init__(self, parts: Sequence["FiniteGroupoid"]) -> None:
        self.parts = list(parts)
        self.offsets = np.concatenate([[0], np.cumsum([p.n_arrows for p in self.parts])])

    def split(self, g: int) -> Tuple[int, int]:
        p = int(np.searchsorted(self.offsets, g, side="right")) - 1
        return p, g - int(self.offsets[p])

    def compose(self, g: int, h: int) -> Optional[int]:
        pg, lg = self.split(g)
        ph, lh = self.split(h)
        if pg != ph:
            return None
        local = self.parts[pg].structure.compose(lg, lh)
        return None if local is None else local + int(self.offsets[pg])

    def label(self, g: int) -> str:
        p, local = self.split(g)
        return f"{p}/{self.parts[p].arrow_label(local)}"


class _RestrictedStructure(_Structure):
    def __init__(self, parent: "FiniteGroupoid", kept_arrows: np.ndarray) -> None:
        self.parent = parent
        self.kept_arrows = kept_arrows
        self.child_of = np.full(parent.n_arrows, -1, dtype=np.int64)
        self.child_of[kept_arrows] = np.arange(len(kept_arrows))

    def compose(self, g: int, h: int) -> Optional[int]:
        gh = self.parent.structure.compose(int(self.kept_arrows[g]), int(self.kept_arrows[h]))
        if gh is None or self.child_of[gh] < 0:
            return None
        return int(self.child_of[gh])

    def label(self, g: int) -> str:
        return self.parent.arrow_label(int(self.kept_arrows[g]))


# --- Tipos de dominio ---

@dataclass(frozen=True, eq=False)
class FiniteGroupoid:
    """
    Grupoide discreto finito con medida atómica en el espacio de unidades.

    Las flechas se identifican por su índice ``0..n_arrows-1``; ``src``, ``tgt``
    e ``inv`` son arreglos de solo lectura.
    """

    unit_ids: Tuple[str, ...]
    weights: Tuple[Fraction, ...]
    src: np.ndarray
    tgt: np.ndarray
    inv: np.ndarray
    unit_arrow: np.ndarray
    structure: _Structure
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for arr in (self.src, self.tgt, self.inv, self.unit_arrow):
            arr.setflags(write=False)

    # Tamaños y medida

    @property
    def n_units(self) -> int:
        return len(self.unit_ids)

    @property
    def n_arrows(self) -> int:
        return int(self.src.shape[0])

    @cached_property
    def total_mass(self) -> Fraction:
        return sum(self.weights, Fraction(0))

    @property
    def normalized(self) -> bool:
        return self.total_mass == 1

    @cached_property
    def is_measure_preserving(self) -> bool:
        """``μ(s(g)) = μ(t(g))`` para toda flecha, en aritmética exacta."""
        codes = self._weight_codes
        return bool(np.array_equal(codes[self.src], codes[self.tgt]))

    @property
    def is_pmp(self) -> bool:
        """Grupoide p.m.p.: preserva la medida y la masa total es 1."""
        return self.is_measure_preserving and self.normalized

    @cached_property
    def _weight_codes(self) -> np.ndarray:
        distinct: Dict[Fraction, int] = {}
        return np.array([distinct.setdefault(w, len(distinct)) for w in self.weights], dtype=np.int64)

    @cached_property
    def unit_weights_float(self) -> np.ndarray:
        return np.array([float(w) for w in self.weights], dtype=float)

    @cached_property
    def arrow_weights_float(self) -> np.ndarray:
        """Peso ``μ(t(g))`` de cada flecha (la medida ``μ_t`` en átomos)."""
        return self.unit_weights_float[self.tgt]

    def arrow_weight(self, g: int) -> Fraction:
        return self.weights[int(self.tgt[g])]

    # Fibras

    @cached_property
    def target_fibers(self) -> Tuple[np.ndarray, ...]:
        """``𝒢^x`` para cada unidad ``x``, en orden creciente de flecha."""
        return _group_by(self.tgt, self.n_units)

    @cached_property
    def source_fibers(self) -> Tuple[np.ndarray, ...]:
        """``𝒢_x`` para cada unidad ``x``."""
        return _group_by(self.src, self.n_units)

    @cached_property
    def is_unit_arrow(self) -> np.ndarray:
        mask = np.zeros(self.n_arrows, dtype=bool)
        valid = self.unit_arrow[self.unit_arrow >= 0]
        mask[valid] = True
        return mask

    # Estructura

    def compose(self, g: int, h: int) -> int:
        """Producto ``gh``; exige ``s(g) = t(h)``."""
        if self.src[g] != self.tgt[h]:
            raise GroupoidError(
                f"arrows {self.arrow_label(g)} and {self.arrow_label(h)} are not composable",
                g=self.arrow_label(g),
                h=self.arrow_label(h),
            )
        gh = self.structure.compose(int(g), int(h))
        if gh is None:
            raise GroupoidError(f"composition of {self.arrow_label(g)} and {self.arrow_label(h)} is undefined")
        return gh

    @cached_property
    def composition_table(self) -> np.ndarray:
        """Tabla densa ``gh`` (``-1`` si no son componibles); solo para grupoides pequeños."""
        n = self.n_arrows
        if n > COMPOSITION_TABLE_CAP:
            raise BadParameters(
                f"composition table needs at most {COMPOSITION_TABLE_CAP} arrows, got {n}",
                n_arrows=n,
            )
        table = np.full((n, n), -1, dtype=np.int64)
        for g in range(n):
            for h in self.target_fibers[int(self.src[g])]:
                table[g, h] = self.compose(g, int(h))
        table.setflags(write=False)
        return table

    def arrow_label(self, g: int) -> str:
        return self.structure.label(int(g))

    @cached_property
    def _label_index(self) -> Dict[str, int]:
        return {self.arrow_label(g): g for g in range(self.n_arrows)}

    def arrow_index(self, label: str) -> int:
        try:
            return self._label_index[str(label)]
        except KeyError:
            raise GroupoidError(f"unknown arrow '{label}'", arrow=label) from None

    @cached_property
    def _unit_index(self) -> Dict[str, int]:
        return {uid: i for i, uid in enumerate(self.unit_ids)}

    def unit_index(self, unit_id: str) -> int:
        try:
            return self._unit_index[str(unit_id)]
        except KeyError:
            raise GroupoidError(f"unknown unit '{unit_id}'", unit=unit_id) from None

    def describe(self) -> Dict[str, Any]:
        return {
            "units": self.n_units,
            "arrows": self.n_arrows,
            "total_mass": str(self.total_mass),
            "normalized": self.normalized,
            "measure_preserving": self.is_measure_preserving,
            **{k: v for k, v in self.metadata.items()},
        }


@dataclass(frozen=True)
class UnitSet:
    """Subconjunto de unidades (índices ordenados) con su masa."""

    members: Tuple[int, ...]
    mass: Fraction

    @classmethod
    def of(cls, groupoid: FiniteGroupoid, members: Iterable[int]) -> "UnitSet":
        ordered = tuple(sorted(set(int(m) for m in members)))
        for m in ordered:
            if not 0 <= m < groupoid.n_units:
                raise GroupoidError(f"unit index {m} out of range", unit=m)
        return cls(ordered, sum((groupoid.weights[m] for m in ordered), Fraction(0)))

    @classmethod
    def everything(cls, groupoid: FiniteGroupoid) -> "UnitSet":
        return cls.of(groupoid, range(groupoid.n_units))

    @classmethod
    def from_ids(cls, groupoid: FiniteGroupoid, unit_ids: Iterable[str]) -> "UnitSet":
        return cls.of(groupoid, (groupoid.unit_index(u) for u in unit_ids))

    def __contains__(self, unit: object) -> bool:
        return unit in self.members

    def __len__(self) -> int:
        return len(self.members)

    def mask(self, n_units: int) -> np.ndarray:
        out = np.zeros(n_units, dtype=bool)
        out[list(self.members)] = True
        return out

    def labels(self, groupoid: FiniteGroupoid) -> List[str]:
        return [groupoid.unit_ids[m] for m in self.members]


@dataclass(frozen=True)
class Bisection:
    """Conjunto de flechas que corta cada fibra a lo sumo una vez."""

    arrows: Tuple[int, ...]
    full: bool

    def __contains__(self, g: object) -> bool:
        return g in self.arrows


@dataclass(frozen=True)
class Diagnostic:
    """Axioma violado junto con las flechas o unidades que lo atestiguan."""

    axiom: str
    message: str
    witness: Tuple[str, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {"axiom": self.axiom, "message": self.message, "witness": list(self.witness)}


def _group_by(keys: np.ndarray, n_groups: int) -> Tuple[np.ndarray, ...]:
    order = np.argsort(keys, kind="stable")
    bounds = np.searchsorted(keys[order], np.arange(n_groups + 1))
    fibers = []
    for x in range(n_groups):
        fiber = order[bounds[x]:bounds[x + 1]]
        fiber.setflags(write=False)
        fibers.append(fiber)
    return tuple(fibers)


def _check_units(unit_ids: Sequence[str]) -> None:
    seen = set()
    for uid in unit_ids:
        if uid in seen:
            raise DuplicateUnit(f"unit '{uid}' appears more than once", unit=uid)
        seen.add(uid)


# --- Constructores ---

def build_explicit_groupoid(
    units: Sequence[Tuple[str, WeightLike]],
    arrows: Sequence[Tuple[str, str, str, str]],
    compose: Iterable[Tuple[str, str, str]],
    metadata: Optional[Mapping[str, Any]] = None,
) -> FiniteGroupoid:
    """
    Construye un grupoide a partir de tablas explícitas.

    ``arrows`` son tuplas ``(id, src, tgt, inv)`` con identificadores de unidad y
    de flecha; ``compose`` son ternas ``(g, h, gh)``. No valida los axiomas:
    eso lo hace :func:`validate`.
    """
    unit_ids = tuple(str(u) for u, _ in units)
    _check_units(unit_ids)
    weights = tuple(parse_fraction(w) for _, w in units)
    unit_pos = {u: i for i, u in enumerate(unit_ids)}

    labels = [str(a[0]) for a in arrows]
    if len(set(labels)) != len(labels):
        raise GroupoidError("arrow identifiers must be distinct")
    arrow_pos = {a: i for i, a in enumerate(labels)}

    def _unit(uid: str) -> int:
        try:
            return unit_pos[str(uid)]
        except KeyError:
            raise GroupoidError(f"unknown unit '{uid}'", unit=uid) from None

    def _arrow(aid: str) -> int:
        try:
            return arrow_pos[str(aid)]
        except KeyError:
            raise GroupoidError(f"unknown arrow '{aid}'", arrow=aid) from None

    src = np.array([_unit(a[1]) for a in arrows], dtype=np.int64)
    tgt = np.array([_unit(a[2]) for a in arrows], dtype=np.int64)
    inv = np.array([_arrow(a[3]) for a in arrows], dtype=np.int64)
    table = {(_arrow(g), _arrow(h)): _arrow(gh) for g, h, gh in compose}

    # Identidad de x: la flecha idempotente e involutiva con s = t = x.
    unit_arrow = np.full(len(unit_ids), -1, dtype=np.int64)
    for g in range(len(labels)):
        x = src[g]
        if tgt[g] == x and inv[g] == g and table.get((g, g)) == g and unit_arrow[x] < 0:
            unit_arrow[x] = g

    return FiniteGroupoid(
        unit_ids=unit_ids,
        weights=weights,
        src=src,
        tgt=tgt,
        inv=inv,
        unit_arrow=unit_arrow,
        structure=_TableStructure(labels, table),
        metadata=dict(metadata or {}, construction="explicit"),
    )


def build_pair_groupoid(
    classes: Sequence[Sequence[Tuple[str, WeightLike]]],
    metadata: Optional[Mapping[str, Any]] = None,
) -> FiniteGroupoid:
    """
    Relación de equivalencia con clases finitas: todas las flechas ``(x, y)`` dentro
    de cada clase, con ``s(x, y) = y``, ``t(x, y) = x`` y ``(x, y)(y, z) = (x, z)``.
    """
    unit_ids: List[str] = []
    weights: List[Fraction] = []
    class_members: List[np.ndarray] = []

    for members in classes:
        if not members:
            raise GroupoidError("equivalence classes must be nonempty")
        class_weights = [parse_fraction(w) for _, w in members]
        if len(set(class_weights)) != 1:
            raise UnequalClassWeights(
                f"class {[str(u) for u, _ in members]} has unequal weights",
                units=[str(u) for u, _ in members],
                weights=[str(w) for w in class_weights],
            )
        start = len(unit_ids)
        unit_ids.extend(str(u) for u, _ in members)
        weights.extend(class_weights)
        class_members.append(np.arange(start, len(unit_ids), dtype=np.int64))

    _check_units(unit_ids)

    src_parts, tgt_parts, inv_parts, unit_parts = [], [], [], []
    offset = 0
    for members in class_members:
        n = len(members)
        local_t = np.repeat(np.arange(n), n)
        local_s = np.tile(np.arange(n), n)
        tgt_parts.append(members[local_t])
        src_parts.append(members[local_s])
        inv_parts.append(offset + local_s * n + local_t)
        unit_parts.append(offset + np.arange(n) * (n + 1))
        offset += n * n

    return FiniteGroupoid(
        unit_ids=tuple(unit_ids),
        weights=tuple(weights),
        src=np.concatenate(src_parts),
        tgt=np.concatenate(tgt_parts),
        inv=np.concatenate(inv_parts),
        unit_arrow=np.concatenate(unit_parts),
        structure=_PairStructure(class_members, unit_ids),
        metadata=dict(metadata or {}, construction="pair"),
    )


def check_group_table(mult_table: Sequence[Sequence[int]]) -> int:
    """
    Verifica que *mult_table* es la tabla de un grupo y devuelve el índice del neutro.

    Raises:
        NotAGroup: con el axioma que falla.
    """
    table = np.asarray(mult_table, dtype=np.int64)
    if table.ndim != 2 or table.shape[0] != table.shape[1] or table.shape[0] == 0:
        raise NotAGroup("multiplication table must be a nonempty square table", axiom="shape")
    n = table.shape[0]
    if table.min() < 0 or table.max() >= n:
        raise NotAGroup("table entries must be element indices", axiom="closure")

    elements = np.arange(n)
    identity = None
    for e in range(n):
        if np.array_equal(table[e], elements) and np.array_equal(table[:, e], elements):
            identity = e
            break
    if identity is None:
        raise NotAGroup("no two-sided identity element", axiom="identity")

    for g in range(n):
        if not np.any((table[g] == identity) & (table[:, g] == identity)):
            raise NotAGroup(f"element {g} has no two-sided inverse", axiom="inverse", element=g)

    # (gh)k == g(hk) para todas las ternas
    left = table[table[:, :, None], elements[None, None, :]]
    right = table[elements[:, None, None], table[None, :, :]]
    bad = np.argwhere(left != right)
    if bad.size:
        g, h, k = (int(v) for v in bad[0])
        raise NotAGroup(f"associativity fails on ({g}, {h}, {k})", axiom="associativity", triple=[g, h, k])
    return identity


def build_group_groupoid(
    mult_table: Sequence[Sequence[int]],
    weight: WeightLike = 1,
    unit_id: str = "e",
    element_labels: Optional[Sequence[str]] = None,
    metadata: Optional[Mapping[str, Any]] = None,
) -> FiniteGroupoid:
    """Un grupo finito visto como grupoide de una sola unidad."""
    identity = check_group_table(mult_table)
    table = np.asarray(mult_table, dtype=np.int64)
    n = table.shape[0]
    labels = list(element_labels) if element_labels is not None else [str(i) for i in range(n)]
    if len(labels) != n:
        raise GroupoidError("element_labels must have one label per element")

    inverse = np.array([int(np.flatnonzero(table[g] == identity)[0]) for g in range(n)], dtype=np.int64)
    table.setflags(write=False)
    return FiniteGroupoid(
        unit_ids=(str(unit_id),),
        weights=(parse_fraction(weight),),
        src=np.zeros(n, dtype=np.int64),
        tgt=np.zeros(n, dtype=np.int64),
        inv=inverse,
        unit_arrow=np.array([identity], dtype=np.int64),
        structure=_GroupStructure(table, labels),
        metadata=dict(metadata or {}, construction="group", order=n),
    )


def build_group_bundle(
    base: Sequence[Tuple[str, WeightLike, Sequence[Sequence[int]]]],
    metadata: Optional[Mapping[str, Any]] = None,
) -> FiniteGroupoid:
    """Fibrado de grupos: unión disjunta de grupoides de grupo, ``𝒢_x = 𝒢^x``."""
    if not base:
        raise EmptyUnion("a group bundle needs at least one unit")
    unit_ids = [str(u) for u, _, _ in base]
    _check_units(unit_ids)
    parts = [build_group_groupoid(table, weight, unit_id=str(u)) for u, weight, table in base]
    bundle = disjoint_union([(p, Fraction(1)) for p in parts], metadata=metadata, keep_unit_ids=True)
    return _with_metadata(bundle, construction="bundle")


def product(left: FiniteGroupoid, right: FiniteGroupoid, metadata: Optional[Mapping[str, Any]] = None) -> FiniteGroupoid:
    """Producto ``𝒢₁ × 𝒢₂`` con la medida producto y las operaciones componente a componente."""
    n2u, n2a = right.n_units, right.n_arrows
    unit_ids = tuple(f"{a}|{b}" for a in left.unit_ids for b in right.unit_ids)
    weights = tuple(wa * wb for wa in left.weights for wb in right.weights)

    def _pair(a: np.ndarray, b: np.ndarray, width: int) -> np.ndarray:
        return (a[:, None] * width + b[None, :]).ravel()

    return FiniteGroupoid(
        unit_ids=unit_ids,
        weights=weights,
        src=_pair(left.src, right.src, n2u),
        tgt=_pair(left.tgt, right.tgt, n2u),
        inv=_pair(left.inv, right.inv, n2a),
        unit_arrow=_pair(left.unit_arrow, right.unit_arrow, n2a),
        structure=_ProductStructure(left, right),
        metadata=dict(metadata or {}, construction="product"),
    )


def disjoint_union(
    parts: Sequence[Tuple[FiniteGroupoid, WeightLike]],
    metadata: Optional[Mapping[str, Any]] = None,
    keep_unit_ids: bool = False,
) -> FiniteGroupoid:
    """
    Unión disjunta con pesos reescalados: el componente ``i`` contribuye
    ``scaleᵢ · mass(Gᵢ)`` a la masa total.
    """
    if not parts:
        raise EmptyUnion("disjoint union of no groupoids")
    scales = [parse_fraction(s) for _, s in parts]
    for i, s in enumerate(scales):
        if s <= 0:
            raise BadParameters(f"scale of part {i} must be positive, got {s}", part=i, scale=str(s))

    unit_ids: List[str] = []
    weights: List[Fraction] = []
    src, tgt, inv, unit_arrow = [], [], [], []
    unit_offset = arrow_offset = 0
    for p, ((g, _), scale) in enumerate(zip(parts, scales)):
        unit_ids.extend(g.unit_ids if keep_unit_ids else (f"{p}/{u}" for u in g.unit_ids))
        weights.extend(w * scale for w in g.weights)
        src.append(g.src + unit_offset)
        tgt.append(g.tgt + unit_offset)
        inv.append(g.inv + arrow_offset)
        unit_arrow.append(np.where(g.unit_arrow >= 0, g.unit_arrow + arrow_offset, -1))
        unit_offset += g.n_units
        arrow_offset += g.n_arrows

    _check_units(unit_ids)
    return FiniteGroupoid(
        unit_ids=tuple(unit_ids),
        weights=tuple(weights),
        src=np.concatenate(src),
        tgt=np.concatenate(tgt),
        inv=np.concatenate(inv),
        unit_arrow=np.concatenate(unit_arrow),
        structure=_UnionStructure([g for g, _ in parts]),
        metadata=dict(metadata or {}, construction="union", parts=len(parts)),
    )


def restrict(groupoid: FiniteGroupoid, unit_set: UnitSet) -> FiniteGroupoid:
    """
    Restricción ``𝒢|_E``: flechas con ambos extremos en ``E`` y medida
    normalizada ``μ(E)⁻¹ μ|_E``.

    Raises:
        NullSet: si ``μ(E) = 0``.
    """
    if unit_set.mass <= 0:
        raise NullSet("cannot restrict to a set of measure zero", units=unit_set.labels(groupoid))

    members = np.array(unit_set.members, dtype=np.int64)
    new_index = np.full(groupoid.n_units, -1, dtype=np.int64)
    new_index[members] = np.arange(len(members))

    inside = unit_set.mask(groupoid.n_units)
    kept = np.flatnonzero(inside[groupoid.src] & inside[groupoid.tgt])
    structure = _RestrictedStructure(groupoid, kept)

    return FiniteGroupoid(
        unit_ids=tuple(groupoid.unit_ids[m] for m in unit_set.members),
        weights=tuple(groupoid.weights[m] / unit_set.mass for m in unit_set.members),
        src=new_index[groupoid.src[kept]],
        tgt=new_index[groupoid.tgt[kept]],
        inv=structure.child_of[groupoid.inv[kept]],
        unit_arrow=structure.child_of[groupoid.unit_arrow[members]],
        structure=structure,
        metadata=dict(groupoid.metadata, construction="restriction", parent_units=groupoid.n_units),
    )


def _with_metadata(groupoid: FiniteGroupoid, **extra: Any) -> FiniteGroupoid:
    return FiniteGroupoid(
        unit_ids=groupoid.unit_ids,
        weights=groupoid.weights,
        src=groupoid.src,
        tgt=groupoid.tgt,
        inv=groupoid.inv,
        unit_arrow=groupoid.unit_arrow,
        structure=groupoid.structure,
        metadata=dict(groupoid.metadata, **extra),
    )


def with_metadata(groupoid: FiniteGroupoid, **extra: Any) -> FiniteGroupoid:
    """Copia de *groupoid* con claves de metadatos añadidas (p. ej. el parámetro de truncamiento)."""
    return _with_metadata(groupoid, **extra)


def pair_arrow(groupoid: FiniteGroupoid, target: int, source: int) -> int:
    """Índice de la flecha ``(target, source)`` de un grupoide de pares."""
    s = groupoid.structure
    if not isinstance(s, _PairStructure):
        raise GroupoidError("pair_arrow needs a pair groupoid")
    c = int(s.class_of[target])
    if int(s.class_of[source]) != c:
        raise GroupoidError(
            f"units {groupoid.unit_ids[target]} and {groupoid.unit_ids[source]} are in different classes"
        )
    return s.arrow_between(c, int(s.local[target]), int(s.local[source]))


def product_factors(groupoid: FiniteGroupoid) -> Optional[Tuple[FiniteGroupoid, FiniteGroupoid]]:
    """Factores ``(G1, G2)`` si *groupoid* se construyó con :func:`product`."""
    s = groupoid.structure
    return (s.left, s.right) if isinstance(s, _ProductStructure) else None


def union_parts(groupoid: FiniteGroupoid) -> Optional[Tuple[List[FiniteGroupoid], np.ndarray]]:
    """Partes y desplazamientos de flechas si *groupoid* es una unión disjunta."""
    s = groupoid.structure
    return (list(s.parts), s.offsets) if isinstance(s, _UnionStructure) else None


def restriction_parent(groupoid: FiniteGroupoid) -> Optional[Tuple[FiniteGroupoid, np.ndarray]]:
    """Grupoide padre y flechas conservadas si *groupoid* es una restricción."""
    s = groupoid.structure
    return (s.parent, s.kept_arrows) if isinstance(s, _RestrictedStructure) else None


# --- Órbitas y conjuntos invariantes ---

def orbits(groupoid: FiniteGroupoid) -> List[UnitSet]:
    """Componentes conexas del grafo de unidades inducido por las flechas."""
    n = groupoid.n_units
    graph = coo_matrix(
        (np.ones(groupoid.n_arrows, dtype=np.int8), (groupoid.src, groupoid.tgt)),
        shape=(n, n),
    )
    _, labels = connected_components(graph, directed=True, connection="weak")
    blocks: Dict[int, List[int]] = {}
    for unit, label in enumerate(labels):
        blocks.setdefault(int(label), []).append(unit)
    return sorted((UnitSet.of(groupoid, b) for b in blocks.values()), key=lambda s: s.members)


def is_invariant(groupoid: FiniteGroupoid, unit_set: UnitSet) -> bool:
    """Prueba definicional ``t(𝒢E) = E``."""
    inside = unit_set.mask(groupoid.n_units)
    reached = np.zeros(groupoid.n_units, dtype=bool)
    reached[groupoid.tgt[inside[groupoid.src]]] = True
    return bool(np.array_equal(reached, inside))


def invariant_sets(groupoid: FiniteGroupoid, limit: int = INVARIANT_SET_ENUM_CAP) -> Optional[List[UnitSet]]:
    """
    Todos los conjuntos invariantes (uniones de órbitas, incluido ``∅``), o ``None``
    si hay más de *limit*.
    """
    blocks = orbits(groupoid)
    if 2 ** len(blocks) > limit:
        return None
    result = []
    for mask in range(2 ** len(blocks)):
        members = itertools.chain.from_iterable(b.members for i, b in enumerate(blocks) if mask >> i & 1)
        result.append(UnitSet.of(groupoid, members))
    return result


# --- Validación ---

def validate(groupoid: FiniteGroupoid) -> List[Diagnostic]:
    """Comprueba exhaustivamente los axiomas de grupoide y la propiedad p.m.p."""
    g_ = groupoid
    label = g_.arrow_label
    issues: List[Diagnostic] = []

    for x, w in enumerate(g_.weights):
        if w <= 0:
            issues.append(Diagnostic("positive_weight", f"unit {g_.unit_ids[x]} has weight {w}", (g_.unit_ids[x],)))

    for x in range(g_.n_units):
        e = int(g_.unit_arrow[x])
        if e < 0:
            issues.append(Diagnostic("identity", f"unit {g_.unit_ids[x]} has no identity arrow", (g_.unit_ids[x],)))
        elif g_.src[e] != x or g_.tgt[e] != x:
            issues.append(Diagnostic("identity", f"identity arrow of {g_.unit_ids[x]} has wrong endpoints", (label(e),)))

    for g in range(g_.n_arrows):
        i = int(g_.inv[g])
        if not 0 <= i < g_.n_arrows or g_.src[i] != g_.tgt[g] or g_.tgt[i] != g_.src[g] or g_.inv[i] != g:
            issues.append(Diagnostic("inverse", f"inverse of {label(g)} is inconsistent", (label(g),)))

    for g in range(g_.n_arrows):
        if g_.weights[g_.src[g]] != g_.weights[g_.tgt[g]]:
            issues.append(
                Diagnostic(
                    "pmp",
                    f"mu(src) = {g_.weights[g_.src[g]]} differs from mu(tgt) = {g_.weights[g_.tgt[g]]} on {label(g)}",
                    (label(g),),
                )
            )

    if any(d.axiom in {"identity", "inverse"} for d in issues):
        return issues

    closure_ok = True
    for g in range(g_.n_arrows):
        for h in g_.target_fibers[int(g_.src[g])]:
            gh = g_.structure.compose(g, int(h))
            if gh is None or g_.src[gh] != g_.src[h] or g_.tgt[gh] != g_.tgt[g]:
                issues.append(Diagnostic("closure", f"{label(g)}·{label(h)} is undefined or misplaced", (label(g), label(h))))
                closure_ok = False

    for g in range(g_.n_arrows):
        s, t, i = int(g_.src[g]), int(g_.tgt[g]), int(g_.inv[g])
        checks = (
            ("right_unit", g_.structure.compose(g, int(g_.unit_arrow[s])), g),
            ("left_unit", g_.structure.compose(int(g_.unit_arrow[t]), g), g),
            ("right_inverse", g_.structure.compose(g, i), int(g_.unit_arrow[t])),
            ("left_inverse", g_.structure.compose(i, g), int(g_.unit_arrow[s])),
        )
        for axiom, got, expected in checks:
            if got != expected:
                issues.append(Diagnostic(axiom, f"{axiom.replace('_', ' ')} law fails at {label(g)}", (label(g),)))

    if closure_ok:
        issues.extend(_check_associativity(g_))
    return issues


def _composable_triples(g_: FiniteGroupoid) -> Iterator[Tuple[int, int, int]]:
    for g in range(g_.n_arrows):
        for h in g_.target_fibers[int(g_.src[g])]:
            for k in g_.target_fibers[int(g_.src[h])]:
                yield g, int(h), int(k)


def _check_associativity(g_: FiniteGroupoid) -> List[Diagnostic]:
    compose = g_.structure.compose
    source_sizes = np.array([len(f) for f in g_.source_fibers], dtype=np.int64)
    target_sizes = np.array([len(f) for f in g_.target_fibers], dtype=np.int64)
    # h en el medio: |𝒢_{t(h)}| opciones para g y |𝒢^{s(h)}| para k
    n_triples = int(np.sum(source_sizes[g_.tgt] * target_sizes[g_.src]))
    if n_triples <= ASSOCIATIVITY_EXHAUSTIVE_CAP:
        triples: Iterable[Tuple[int, int, int]] = _composable_triples(g_)
    else:
        logger.warning(
            "associativity checked on %d sampled triples out of %d",
            ASSOCIATIVITY_SAMPLE_SIZE,
            n_triples,
        )
        triples = _sampled_triples(g_, ASSOCIATIVITY_SAMPLE_SIZE)

    for g, h, k in triples:
        left = compose(compose(g, h), k)  # type: ignore[arg-type]
        right = compose(g, compose(h, k))  # type: ignore[arg-type]
        if left != right:
            witness = (g_.arrow_label(g), g_.arrow_label(h), g_.arrow_label(k))
            return [Diagnostic("associativity", f"(gh)k != g(hk) on {witness}", witness)]
    return []


def _sampled_triples(g_: FiniteGroupoid, count: int) -> Iterator[Tuple[int, int, int]]:
    rng = np.random.default_rng(0)
    for _ in range(count):
        g = int(rng.integers(g_.n_arrows))
        fiber = g_.target_fibers[int(g_.src[g])]
        h = int(fiber[rng.integers(len(fiber))])
        fiber = g_.target_fibers[int(g_.src[h])]
        k = int(fiber[rng.integers(len(fiber))])
        yield g, h, k


# --- Bisecciones ---

def is_bisection(groupoid: FiniteGroupoid, arrows: Iterable[int]) -> bool:
    """``|γ ∩ 𝒢_x| ≤ 1`` y ``|γ ∩ 𝒢^x| ≤ 1`` para toda unidad ``x``."""
    chosen = np.array(sorted(set(int(a) for a in arrows)), dtype=np.int64)
    if chosen.size == 0:
        return True
    return bool(
        np.bincount(groupoid.src[chosen], minlength=groupoid.n_units).max() <= 1
        and np.bincount(groupoid.tgt[chosen], minlength=groupoid.n_units).max() <= 1
    )


def make_bisection(groupoid: FiniteGroupoid, arrows: Iterable[int]) -> Bisection:
    chosen = tuple(sorted(set(int(a) for a in arrows)))
    if not is_bisection(groupoid, chosen):
        raise GroupoidError("arrow set is not a bisection", arrows=[groupoid.arrow_label(a) for a in chosen])
    return Bisection(chosen, full=len(chosen) == groupoid.n_units)


def unit_bisection(groupoid: FiniteGroupoid) -> Bisection:
    """La bisección ``𝒢⁽⁰⁾``, neutro del grupo completo."""
    return make_bisection(groupoid, groupoid.unit_arrow)


def compose_bisections(groupoid: FiniteGroupoid, first: Bisection, second: Bisection) -> Bisection:
    """Producto ``γγ' = {gh : g ∈ γ, h ∈ γ', s(g) = t(h)}``."""
    by_target = {int(groupoid.tgt[h]): h for h in second.arrows}
    products = [groupoid.compose(g, by_target[int(groupoid.src[g])]) for g in first.arrows if int(groupoid.src[g]) in by_target]
    return make_bisection(groupoid, products)


def inverse_bisection(groupoid: FiniteGroupoid, bisection: Bisection) -> Bisection:
    return make_bisection(groupoid, (int(groupoid.inv[g]) for g in bisection.arrows))


def full_bisections(groupoid: FiniteGroupoid, limit: int = BISECTION_ENUM_CAP) -> List[Bisection]:
    """
    Enumera el grupo completo ``[𝒢]``: una flecha por fibra de destino con fuentes
    distintas.

    Raises:
        TooManyBisections: si hay más de *limit* bisecciones completas.
    """
    n = groupoid.n_units
    fibers = groupoid.target_fibers
    found: List[Bisection] = []
    used = np.zeros(n, dtype=bool)
    chosen: List[int] = []

    def _search(x: int) -> None:
        if x == n:
            if len(found) >= limit:
                raise TooManyBisections(f"more than {limit} full bisections", limit=limit)
            found.append(Bisection(tuple(sorted(chosen)), full=True))
            return
        for g in fibers[x]:
            s = int(groupoid.src[g])
            if not used[s]:
                used[s] = True
                chosen.append(int(g))
                _search(x + 1)
                chosen.pop()
                used[s] = False

    _search(0)
    logger.debug("enumerated %d full bisections", len(found))
    return found
