"""Ayudantes de aritmética racional compartidos en toda la aplicación."""
from __future__ import annotations

import math
from fractions import Fraction
from numbers import Number
from typing import Union

from sympy import QQ

Scalar = Union[Fraction, float, complex]


def parse_fraction(value: Union[str, int, float, Fraction]) -> Fraction:
    """Convierte ``"p/q"``, enteros, decimales o floats en un :class:`Fraction` exacto.

    Los floats se leen a través de su representación decimal, de modo que
    ``0.1`` se convierte en ``1/10`` y no en su expansión binaria.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("boolean is not a weight")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(str(value).strip())


def parse_scalar(value: Union[str, int, float, complex, Fraction], precision: str) -> Scalar:
    """Lee un valor de núcleo en el modo de precisión pedido."""
    if precision == "rational":
        if isinstance(value, complex) or (isinstance(value, str) and "j" in value):
            raise ValueError(f"complex value {value!r} is not supported in rational mode")
        return parse_fraction(value)

    if isinstance(value, str):
        text = value.strip()
        if "j" in text:
            return complex(text)
        return float(parse_fraction(text))
    if isinstance(value, complex):
        return value
    return float(value)


def coerce(value: Number, precision: str) -> Scalar:
    """Ajusta un valor ya numérico al modo de precisión."""
    if precision == "rational":
        if isinstance(value, complex):
            if value.imag != 0:
                raise ValueError(f"complex value {value!r} is not supported in rational mode")
            value = value.real
        return parse_fraction(value)  # type: ignore[arg-type]
    if isinstance(value, complex) and value.imag != 0:
        return value
    return float(value.real)  # type: ignore[union-attr]


def to_qq(value: Fraction):
    """Elemento del cuerpo ``QQ`` de sympy equivalente a *value*."""
    return QQ(value.numerator, value.denominator)


def from_qq(value) -> Fraction:
    return Fraction(int(QQ.numer(value)), int(QQ.denom(value)))


def sqrt_upper(n: int, digits: int = 12) -> Fraction:
    """Cota racional superior de ``sqrt(n)``, exacta si *n* es un cuadrado perfecto."""
    scale = 10 ** digits
    root = math.isqrt(n * scale * scale)
    if root * root == n * scale * scale:
        return Fraction(root, scale)
    return Fraction(root + 1, scale)


def format_scalar(value: Scalar) -> str:
    """Texto estable para CSV: ``p/q`` en modo racional, ``repr`` en coma flotante."""
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, complex):
        return repr(value)
    return repr(float(value))
