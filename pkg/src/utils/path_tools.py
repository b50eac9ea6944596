"""Utilidades para trabajar con rutas del sistema de archivos."""
from __future__ import annotations

from pathlib import Path
from typing import Optional


def resolve_path(path: str | Path) -> Path:
    """Devuelve una instancia absoluta de :class:`Path` para *path*.

    La función no requiere que el archivo exista. Simplemente
    resuelve la ruta proporcionada por el usuario para que los ayudantes de nivel superior
    puedan trabajar con una ubicación canónica.
    """

    return Path(path).expanduser().resolve()


def ensure_readable_file(path: str | Path) -> Path:
    """Valida que *path* es un archivo legible y lo devuelve.

    Raises:
        FileNotFoundError: Si la ruta no existe o no es un archivo.
    """

    resolved = resolve_path(path)
    if not resolved.is_file():
        raise FileNotFoundError(f"El archivo '{resolved}' no existe o no es válido")
    return resolved


def ensure_output_path(destination: Optional[str | Path], default_name: Optional[str] = None) -> Optional[Path]:
    """
    Determina la ruta de salida.
    Si *destination* es un directorio, se escribe ``default_name`` dentro de él.
    Asegura que los directorios padres existan; ``None`` significa salida estándar.
    """
    if destination is None:
        return None

    target = resolve_path(destination)
    if target.is_dir():
        if not default_name:
            raise IsADirectoryError(f"'{target}' es un directorio y no hay nombre por defecto")
        target = target / default_name

    target.parent.mkdir(parents=True, exist_ok=True)
    return target
