"""
Carga de archivos JSON que describen grupoides y núcleos.

Los esquemas se validan con pydantic; un grupoide sin ``type`` se interpreta
como tablas explícitas. Tras construirlo, :func:`load_groupoid` ejecuta
``validate`` y rechaza los archivos que violan algún axioma.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import AfterValidator, BaseModel, ConfigDict, Discriminator, Field, Tag, TypeAdapter, ValidationError, model_validator

from config import Precision
from core.constructions.finite_groups import generator_field, group_preset_table
from core.errors import GroupoidError, InvalidSpecFile
from core.groupoid import (
    FiniteGroupoid,
    UnitSet,
    build_explicit_groupoid,
    build_group_bundle,
    build_group_groupoid,
    build_pair_groupoid,
    disjoint_union,
    make_bisection,
    product,
    restrict,
    validate,
)
from core.kernels import BisectionMeasure, Kernel, field_from_bisections, field_from_matrix, uniform_field
from utils.path_tools import ensure_readable_file
from utils.rational_tools import parse_fraction, parse_scalar

logger = logging.getLogger(__name__)


def _rational(value: Any) -> Any:
    try:
        parse_fraction(value)
    except (ValueError, ZeroDivisionError, TypeError):
        raise ValueError(f"{value!r} is not a rational number") from None
    return value


def _scalar(value: Any) -> Any:
    try:
        parse_scalar(value, "float")
    except (ValueError, ZeroDivisionError, TypeError):
        raise ValueError(f"{value!r} is not a number") from None
    return value


Weight = Annotated[Union[str, int, float], AfterValidator(_rational)]
Value = Annotated[Union[str, int, float], AfterValidator(_scalar)]


class _Spec(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


# --- Esquemas de grupoide ---

class UnitSpec(_Spec):
    id: str
    weight: Weight


class ArrowSpec(_Spec):
    id: str
    src: str
    tgt: str
    inv: str


class ExplicitGroupoidSpec(_Spec):
    type: Literal["explicit"] = "explicit"
    units: List[UnitSpec]
    arrows: List[ArrowSpec]
    compose: List[Tuple[str, str, str]]


class PairGroupoidSpec(_Spec):
    type: Literal["pair"]
    classes: List[List[UnitSpec]] = Field(min_length=1)


class _TableOrPreset(_Spec):
    table: Optional[List[List[int]]] = None
    preset: Optional[str] = None

    @model_validator(mode="after")
    def _one_source(self) -> "_TableOrPreset":
        if (self.table is None) == (self.preset is None):
            raise ValueError("give exactly one of 'table' or 'preset'")
        if self.preset == "free_ball":
            raise ValueError("free-group balls are not finite groupoids; use 'reproduce free-group'")
        return self

    def resolve_table(self) -> Tuple[List[List[int]], Optional[List[str]]]:
        if self.table is not None:
            return self.table, None
        table, labels = group_preset_table(self.preset or "")
        return table.tolist(), labels


class GroupGroupoidSpec(_TableOrPreset):
    type: Literal["group"]
    weight: Weight = 1
    unit: str = "e"
    labels: Optional[List[str]] = None


class BundleMemberSpec(_TableOrPreset):
    unit: str
    weight: Weight


class BundleGroupoidSpec(_Spec):
    type: Literal["bundle"]
    units: List[BundleMemberSpec] = Field(min_length=1)


class ProductGroupoidSpec(_Spec):
    type: Literal["product"]
    parts: Tuple["GroupoidSpec", "GroupoidSpec"]


class UnionPartSpec(_Spec):
    groupoid: "GroupoidSpec"
    scale: Weight = 1


class UnionGroupoidSpec(_Spec):
    type: Literal["union"]
    parts: List[UnionPartSpec] = Field(min_length=1)


class RestrictGroupoidSpec(_Spec):
    type: Literal["restrict"]
    groupoid: "GroupoidSpec"
    units: List[str]


def _groupoid_type(value: Any) -> str:
    if isinstance(value, dict):
        return value.get("type", "explicit")
    return getattr(value, "type", "explicit")


GroupoidSpec = Annotated[
    Union[
        Annotated[ExplicitGroupoidSpec, Tag("explicit")],
        Annotated[PairGroupoidSpec, Tag("pair")],
        Annotated[GroupGroupoidSpec, Tag("group")],
        Annotated[BundleGroupoidSpec, Tag("bundle")],
        Annotated[ProductGroupoidSpec, Tag("product")],
        Annotated[UnionGroupoidSpec, Tag("union")],
        Annotated[RestrictGroupoidSpec, Tag("restrict")],
    ],
    Discriminator(_groupoid_type),
]

for _model in (ProductGroupoidSpec, UnionPartSpec, UnionGroupoidSpec, RestrictGroupoidSpec):
    _model.model_rebuild()


# --- Esquemas de núcleo ---

class UniformKernelSpec(_Spec):
    type: Literal["uniform"]


class MatrixKernelSpec(_Spec):
    type: Literal["matrix"]
    data: List[List[Value]]
    orientation: Literal["auto", "as-is", "transpose"] = "auto"


class BisectionItemSpec(_Spec):
    arrows: List[str]
    weight: Weight


class BisectionsKernelSpec(_Spec):
    type: Literal["bisections"]
    items: List[BisectionItemSpec] = Field(min_length=1)


class ExplicitKernelSpec(_Spec):
    type: Literal["explicit"]
    values: Dict[str, Value]


class GeneratorsKernelSpec(_Spec):
    type: Literal["generators"]
    generators: List[str]
    lazy: bool = True


KernelSpec = Annotated[
    Union[UniformKernelSpec, MatrixKernelSpec, BisectionsKernelSpec, ExplicitKernelSpec, GeneratorsKernelSpec],
    Field(discriminator="type"),
]

_GROUPOID_ADAPTER: TypeAdapter[Any] = TypeAdapter(GroupoidSpec)
_KERNEL_ADAPTER: TypeAdapter[Any] = TypeAdapter(KernelSpec)


# --- Lectura ---

def read_json(file_path: str | Path) -> Any:
    """Lee un archivo JSON en UTF-8.

    Raises:
        FileNotFoundError: si la ruta no es un archivo.
        InvalidSpecFile: si el contenido no es JSON.
    """
    safe_path = ensure_readable_file(file_path)
    try:
        return json.loads(safe_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InvalidSpecFile(f"'{safe_path.name}' is not valid JSON: {exc.msg}", path=str(safe_path), line=exc.lineno) from None


def _parse(adapter: TypeAdapter[Any], data: Any, what: str) -> Any:
    try:
        return adapter.validate_python(data)
    except ValidationError as exc:
        raise InvalidSpecFile(
            f"{what} spec does not match the schema",
            errors=exc.errors(include_url=False, include_context=False),
        ) from None


def parse_groupoid_spec(data: Any) -> Any:
    return _parse(_GROUPOID_ADAPTER, data, "groupoid")


def parse_kernel_spec(data: Any) -> Any:
    return _parse(_KERNEL_ADAPTER, data, "kernel")


# --- Construcción ---

def build_groupoid(spec: Any) -> FiniteGroupoid:
    """Construye recursivamente el grupoide descrito por *spec* (ya validado)."""
    if isinstance(spec, ExplicitGroupoidSpec):
        return build_explicit_groupoid(
            [(u.id, u.weight) for u in spec.units],
            [(a.id, a.src, a.tgt, a.inv) for a in spec.arrows],
            spec.compose,
        )
    if isinstance(spec, PairGroupoidSpec):
        return build_pair_groupoid([[(u.id, u.weight) for u in members] for members in spec.classes])
    if isinstance(spec, GroupGroupoidSpec):
        table, labels = spec.resolve_table()
        return build_group_groupoid(table, spec.weight, unit_id=spec.unit, element_labels=spec.labels or labels)
    if isinstance(spec, BundleGroupoidSpec):
        return build_group_bundle([(m.unit, m.weight, m.resolve_table()[0]) for m in spec.units])
    if isinstance(spec, ProductGroupoidSpec):
        return product(build_groupoid(spec.parts[0]), build_groupoid(spec.parts[1]))
    if isinstance(spec, UnionGroupoidSpec):
        return disjoint_union([(build_groupoid(p.groupoid), p.scale) for p in spec.parts])
    if isinstance(spec, RestrictGroupoidSpec):
        parent = build_groupoid(spec.groupoid)
        return restrict(parent, UnitSet.from_ids(parent, spec.units))
    raise InvalidSpecFile(f"unsupported groupoid spec {type(spec).__name__}")


def build_kernel(groupoid: FiniteGroupoid, spec: Any, precision: Precision = "float") -> Kernel:
    if isinstance(spec, UniformKernelSpec):
        return uniform_field(groupoid, precision)
    if isinstance(spec, MatrixKernelSpec):
        return field_from_matrix(groupoid, spec.data, spec.orientation, precision)
    if isinstance(spec, BisectionsKernelSpec):
        measure = BisectionMeasure.of(
            (make_bisection(groupoid, (groupoid.arrow_index(a) for a in item.arrows)), item.weight) for item in spec.items
        )
        return field_from_bisections(groupoid, measure, precision)
    if isinstance(spec, ExplicitKernelSpec):
        return Kernel.from_labels(groupoid, spec.values, precision)
    if isinstance(spec, GeneratorsKernelSpec):
        return generator_field(groupoid, [groupoid.arrow_index(g) for g in spec.generators], spec.lazy, precision)
    raise InvalidSpecFile(f"unsupported kernel spec {type(spec).__name__}")


def load_groupoid(file_path: str | Path, check: bool = True) -> FiniteGroupoid:
    """
    Lee y construye un grupoide. Con *check* ejecuta ``validate`` y exige que el
    resultado sea p.m.p.

    Raises:
        InvalidSpecFile: con los diagnósticos si algún axioma falla.
    """
    data = read_json(file_path)
    try:
        groupoid = build_groupoid(parse_groupoid_spec(data))
    except InvalidSpecFile:
        raise
    except GroupoidError as exc:
        raise InvalidSpecFile(exc.message, cause=exc.code, **exc.details) from exc
    except (ValueError, ZeroDivisionError) as exc:
        raise InvalidSpecFile(f"invalid number in groupoid spec: {exc}", cause="invalid_number") from exc

    if check:
        diagnostics = validate(groupoid)
        if diagnostics:
            raise InvalidSpecFile(
                f"groupoid violates {len(diagnostics)} axiom check(s)",
                diagnostics=[d.to_dict() for d in diagnostics],
            )
    logger.info("loaded groupoid from %s: %s", file_path, groupoid.describe())
    return groupoid


def load_kernel(file_path: str | Path, groupoid: FiniteGroupoid, precision: Precision = "float") -> Kernel:
    """Lee un núcleo definido sobre *groupoid*.

    Los errores de construcción conservan su tipo; un número ilegible se
    convierte en :class:`InvalidSpecFile`.
    """
    spec = parse_kernel_spec(read_json(file_path))
    try:
        return build_kernel(groupoid, spec, precision)
    except GroupoidError:
        raise
    except (ValueError, ZeroDivisionError) as exc:
        raise InvalidSpecFile(f"invalid number in kernel spec: {exc}", cause="invalid_number") from exc


def describe_groupoid(groupoid: FiniteGroupoid, file_path: Optional[str | Path] = None) -> Dict[str, Any]:
    """Resumen del grupoide cargado, con la ruta de origen si se conoce."""
    info: Dict[str, Any] = {"path": str(ensure_readable_file(file_path))} if file_path is not None else {}
    info.update(groupoid.describe())
    return info
