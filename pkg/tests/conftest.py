from __future__ import annotations

import json
import os
import sys
from fractions import Fraction

import numpy as np
import pytest

SRC_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src")
if SRC_DIR not in sys.path:
    sys.path.insert(0, SRC_DIR)

from core.constructions.finite_groups import cyclic_table, generator_field  # noqa: E402
from core.groupoid import build_group_groupoid, build_pair_groupoid, disjoint_union  # noqa: E402
from core.kernels import field_from_matrix, uniform_field  # noqa: E402


@pytest.fixture
def s2():
    """Relación de pares sobre dos puntos de peso 1/2."""
    return build_pair_groupoid([[("a", "1/2"), ("b", "1/2")]])


@pytest.fixture
def s3():
    return build_pair_groupoid([[("a", "1/3"), ("b", "1/3"), ("c", "1/3")]])


@pytest.fixture
def s2_uniform(s2):
    return uniform_field(s2, "rational")


@pytest.fixture
def s2_drift(s2):
    """Campo no simétrico: toda la masa en la flecha hacia ``a``."""
    return field_from_matrix(s2, [[1, 0], [1, 0]], "as-is", "rational")


@pytest.fixture
def z2():
    return build_group_groupoid(cyclic_table(2), 1, unit_id="z")


@pytest.fixture
def z2_lazy(z2):
    return generator_field(z2, [1], lazy=True, precision="rational")


@pytest.fixture
def s2_s3():
    """``𝒮₂ ⊔ 𝒮₃`` con masa 1/2 en cada componente."""
    first = build_pair_groupoid([[("a", 1), ("b", 1)]])
    second = build_pair_groupoid([[("c", 1), ("d", 1), ("e", 1)]])
    return disjoint_union([(first, Fraction(1, 4)), (second, Fraction(1, 6))])


@pytest.fixture
def rng():
    return np.random.default_rng(20240917)


@pytest.fixture
def write_json(tmp_path):
    def _write(name, payload):
        path = tmp_path / name
        path.write_text(json.dumps(payload), encoding="utf-8")
        return str(path)

    return _write
