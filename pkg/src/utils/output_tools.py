"""
Salida de resultados: CSV con manifiesto, resúmenes JSON y errores legibles por máquina.
"""
from __future__ import annotations

import csv
import io
import json
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, TextIO

from config import RNG_ALGORITHM, TOOL_NAME, TOOL_VERSION


@dataclass(frozen=True)
class RunManifest:
    """Describe una ejecución; se incrusta en cada CSV/JSON emitido."""

    command: str
    parameters: Dict[str, Any] = field(default_factory=dict)
    inputs: List[str] = field(default_factory=list)
    precision: str = "float"
    tool: str = TOOL_NAME
    version: str = TOOL_VERSION
    rng_algorithm: str = RNG_ALGORITHM

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def format_json(data: Any) -> str:
    """Serializa *data* como JSON formateado."""
    return json.dumps(data, indent=4, ensure_ascii=False, sort_keys=False, default=str)


def render_csv(header: Sequence[str], rows: Iterable[Sequence[Any]], manifest: Optional[RunManifest] = None) -> str:
    """Construye el texto CSV: una línea ``#`` con el manifiesto y luego cabecera y filas."""
    buffer = io.StringIO()
    if manifest is not None:
        buffer.write("# " + json.dumps(manifest.to_dict(), ensure_ascii=False, sort_keys=True, default=str) + "\n")

    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def write_text(text: str, destination: Optional[Path] = None, stream: Optional[TextIO] = None) -> None:
    """Escribe *text* en *destination* o, si no hay ruta, en la salida estándar."""
    if destination is None:
        (stream or sys.stdout).write(text)
        return
    destination.write_text(text, encoding="utf-8")


def read_manifest_line(text: str) -> Optional[Dict[str, Any]]:
    """Recupera el manifiesto de la primera línea de un CSV emitido por la herramienta."""
    first = text.splitlines()[0] if text else ""
    if not first.startswith("# "):
        return None
    return json.loads(first[2:])


def emit_error(payload: Dict[str, Any], stream: Optional[TextIO] = None) -> None:
    """Escribe un error como un único objeto JSON en stderr."""
    (stream or sys.stderr).write(json.dumps(payload, ensure_ascii=False, default=str) + "\n")
