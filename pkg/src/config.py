"""
Constantes de configuración de la herramienta.
"""
from __future__ import annotations

import os
from typing import Literal, Optional

TOOL_NAME = "kesten-groupoides"
TOOL_VERSION = "0.3.0"

Precision = Literal["float", "rational"]
DEFAULT_PRECISION: Precision = "float"

# Tolerancias
FLOAT_TOL = 1e-12
KESTEN_TOL = 1e-9
POWER_TOL = 1e-10
SPECTRAL_MASS_TOL = 1e-12
EXTRAPOLATION_CEILING = 1.0

# Iteración de potencia
POWER_MAX_ITER = 100_000
POWER_SEED = 20240917

# Límites de tamaño
DENSE_NORM_CAP = 4096          # dimensión máxima de un bloque para descomposición densa
ASSOCIATIVITY_EXHAUSTIVE_CAP = 1_000_000  # ternas componibles
ASSOCIATIVITY_SAMPLE_SIZE = 20_000
BISECTION_ENUM_CAP = 50_000
INVARIANT_SET_ENUM_CAP = 2 ** 16
COMPOSITION_TABLE_CAP = 2048   # flechas máximas para la tabla densa de composición
FREE_GROUP_VERTEX_CAP = 200_000
FREE_GROUP_DENSE_CAP = 2048

# Espectro
N_MAX_DEFAULT = 64

# Simulación
RNG_ALGORITHM = "numpy.Philox/SeedSequence"
WALK_BLOCK_SIZE = 8192
START_WEIGHT_INT_CAP = 2 ** 62  # por encima, pesos de partida acumulados en coma flotante
WALK_TV_TOL = 0.01

THREADS_ENV_VAR = "GGK_THREADS"

# Autocomprobación
SELFTEST_INSTANCES = 500
SELFTEST_SEED = 7
SELFTEST_MAX_ARROWS = 64
MONTE_CARLO_SAMPLES = 100_000
MONTE_CARLO_SIGMAS = 4.0


def resolve_threads(cli_value: Optional[int] = None) -> int:
    """Devuelve el número de hilos: primero la CLI, luego GGK_THREADS, si no 1."""
    if cli_value is not None:
        return max(1, int(cli_value))

    raw = os.environ.get(THREADS_ENV_VAR, "").strip()
    if raw.isdigit() and int(raw) > 0:
        return int(raw)
    return 1
