"""
Grupos finitos y fibrados de grupos con campos simétricos sobre un sistema
generador: las anclas amenables del criterio de Kesten.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import List, Sequence, Tuple

import numpy as np

from config import Precision
from core.errors import BadParameters
from core.groupoid import FiniteGroupoid, build_group_bundle, build_group_groupoid, union_parts
from core.kernels import Kernel, union_kernel


def cyclic_table(n: int) -> np.ndarray:
    """Tabla de ``ℤ_n``."""
    if n < 1:
        raise BadParameters("cyclic group order must be positive", n=n)
    idx = np.arange(n)
    return (idx[:, None] + idx[None, :]) % n


def direct_product_table(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """Tabla de ``G × H`` con el elemento ``(g, h)`` en la posición ``g·|H| + h``."""
    a, b = len(first), len(second)
    g = np.arange(a * b)
    g1, g2 = np.divmod(g, b)
    return first[g1[:, None], g1[None, :]] * b + second[g2[:, None], g2[None, :]]


def dihedral_table(k: int) -> np.ndarray:
    """
    Tabla del diedral de orden ``2k``: ``r^i s^j`` en la posición ``i + k·j`` y
    ``(r^a s^b)(r^c s^d) = r^{a + (-1)^b c} s^{b+d}``.
    """
    if k < 1:
        raise BadParameters("dihedral parameter must be positive", k=k)
    g = np.arange(2 * k)
    rot, ref = g % k, g // k
    sign = np.where(ref == 0, 1, -1)
    new_rot = (rot[:, None] + sign[:, None] * rot[None, :]) % k
    new_ref = (ref[:, None] + ref[None, :]) % 2
    return new_rot + k * new_ref


def dihedral_labels(k: int) -> List[str]:
    return [f"r{i}" for i in range(k)] + [f"r{i}s" for i in range(k)]


def group_preset_table(name: str) -> Tuple[np.ndarray, List[str]]:
    """Tablas con nombre: ``Z_n`` y ``D_n`` (diedral de orden ``2n``)."""
    kind, _, order = name.partition("_")
    if not order.isdigit():
        raise BadParameters(f"unknown group preset '{name}'", preset=name)
    n = int(order)
    if kind == "Z":
        return cyclic_table(n), [str(i) for i in range(n)]
    if kind == "D":
        return dihedral_table(n), dihedral_labels(n)
    raise BadParameters(f"unknown group preset '{name}'", preset=name)


def generator_field(
    groupoid: FiniteGroupoid,
    generators: Sequence[int],
    lazy: bool = True,
    precision: Precision = "rational",
) -> Kernel:
    """
    Campo uniforme sobre ``S ∪ S⁻¹`` (más el neutro si *lazy*) en un grupoide de
    una sola unidad; es simétrico por construcción.
    """
    if groupoid.n_units != 1:
        raise BadParameters("generator_field needs a one-unit group groupoid")
    support = set(int(s) for s in generators) | {int(groupoid.inv[s]) for s in generators}
    if lazy:
        support.add(int(groupoid.unit_arrow[0]))
    if not support:
        raise BadParameters("empty generating set")
    weight = Fraction(1, len(support))
    return Kernel(groupoid, dict.fromkeys(sorted(support), weight), precision)


@dataclass
class GroupPreset:
    name: str
    groupoid: FiniteGroupoid
    kernel: Kernel


def _group(name: str, table: np.ndarray, generators: Sequence[int], labels: Sequence[str], precision: Precision) -> GroupPreset:
    groupoid = build_group_groupoid(table, 1, unit_id=name, element_labels=labels, metadata={"preset": name})
    return GroupPreset(name, groupoid, generator_field(groupoid, generators, precision=precision))


def group_bundle_preset(precision: Precision = "rational") -> GroupPreset:
    """Fibrado ``ℤ₂ ⊔ ℤ₃ ⊔ D₃`` sobre tres unidades de peso ``1/3``."""
    third = Fraction(1, 3)
    bundle = build_group_bundle([("x", third, cyclic_table(2)), ("y", third, cyclic_table(3)), ("z", third, dihedral_table(3))])
    parts, _ = union_parts(bundle)
    kernels = [
        generator_field(parts[0], [1], precision=precision),
        generator_field(parts[1], [1], precision=precision),
        generator_field(parts[2], [1, 3], precision=precision),
    ]
    return GroupPreset("bundle(Z_2,Z_3,D_3)", bundle, union_kernel(bundle, kernels))


def finite_group_suite(precision: Precision = "rational") -> List[GroupPreset]:
    """``ℤ_n``, ``ℤ_n²``, diedrales de hasta 16 elementos y un fibrado de grupos."""
    presets = [
        _group("Z_1", cyclic_table(1), [], ["0"], precision),
        _group("Z_2", cyclic_table(2), [1], ["0", "1"], precision),
        _group("Z_3", cyclic_table(3), [1], [str(i) for i in range(3)], precision),
        _group("Z_6", cyclic_table(6), [1], [str(i) for i in range(6)], precision),
    ]
    for n in (2, 3, 4):
        table = direct_product_table(cyclic_table(n), cyclic_table(n))
        labels = [f"({i},{j})" for i in range(n) for j in range(n)]
        presets.append(_group(f"Z_{n}^2", table, [n, 1], labels, precision))
    for k in (3, 4, 5, 8):
        presets.append(_group(f"D_{k}", dihedral_table(k), [1, k], dihedral_labels(k), precision))
    presets.append(group_bundle_preset(precision))
    return presets
