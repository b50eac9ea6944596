"""
Paseos aleatorios por fibras: validación de Monte Carlo de las probabilidades
de retorno.

Los paseos se simulan en bloques de ``WALK_BLOCK_SIZE`` muestras. El bloque ``b``
usa ``Philox(SeedSequence(seed, spawn_key=(b,)))``, así que el resultado no depende
del número de hilos.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import reduce
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from config import COMPOSITION_TABLE_CAP, START_WEIGHT_INT_CAP, WALK_BLOCK_SIZE
from core.errors import BadParameters, NullSet
from core.groupoid import FiniteGroupoid, UnitSet
from core.kernels import Kernel, convolution_power
from core.spectral import return_probability

logger = logging.getLogger(__name__)


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Flujo independiente y reproducible para el bloque *block*."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


@dataclass(frozen=True)
class WalkConfig:
    groupoid: FiniteGroupoid
    kernel: Kernel
    unit_set: UnitSet
    steps: int
    samples: int
    seed: int
    threads: int = 1

    def __post_init__(self) -> None:
        if self.samples < 1:
            raise BadParameters("at least one sample is required", samples=self.samples)
        if self.steps < 0:
            raise BadParameters("steps must be nonnegative", steps=self.steps)
        if self.unit_set.mass <= 0:
            raise NullSet("walks need a start set of positive measure", units=self.unit_set.labels(self.groupoid))
        self.kernel.require_field()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "units": self.unit_set.labels(self.groupoid),
            "steps": self.steps,
            "samples": self.samples,
            "seed": self.seed,
            "threads": self.threads,
        }


class _FiberSampler:
    """Muestreo vectorizado de ``h ∈ 𝒢^y`` con probabilidad ``π(h)``."""

    def __init__(self, groupoid: FiniteGroupoid, kernel: Kernel) -> None:
        kernel.require_field()
        self.groupoid = groupoid
        self.arrows: List[np.ndarray] = []
        self.cumulative: List[np.ndarray] = []
        for y in range(groupoid.n_units):
            support = kernel.by_target.get(y, [])
            self.arrows.append(np.array([g for g, _ in support], dtype=np.int64))
            cum = np.cumsum([float(v) for _, v in support])
            cum[-1] = 1.0
            self.cumulative.append(cum)
        self.table = groupoid.composition_table if groupoid.n_arrows <= COMPOSITION_TABLE_CAP else None

    def _compose(self, g: np.ndarray, h: np.ndarray) -> np.ndarray:
        if self.table is not None:
            return self.table[g, h]
        return np.fromiter((self.groupoid.compose(int(a), int(b)) for a, b in zip(g, h)), dtype=np.int64, count=len(g))

    def step(self, current: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Sustituye cada ``g`` por ``gh`` con ``h ~ π`` en ``𝒢^{s(g)}``."""
        sources = self.groupoid.src[current]
        uniforms = rng.random(len(current))
        increments = np.empty_like(current)
        for y in np.unique(sources):
            mask = sources == y
            index = np.searchsorted(self.cumulative[y], uniforms[mask], side="right")
            index = np.minimum(index, len(self.arrows[y]) - 1)
            increments[mask] = self.arrows[y][index]
        return self._compose(current, increments)

    def walk(self, starts: np.ndarray, steps: int, rng: np.random.Generator) -> np.ndarray:
        current = self.groupoid.unit_arrow[starts].astype(np.int64)
        for _ in range(steps):
            current = self.step(current, rng)
        return current


def _start_sampler(groupoid: FiniteGroupoid, unit_set: UnitSet) -> Tuple[np.ndarray, np.ndarray]:
    """
    Pesos acumulados de ``μ_E``: enteros exactos con el denominador común, o
    ``float`` si ese denominador no cabe en ``int64``.
    """
    members = np.array(unit_set.members, dtype=np.int64)
    weights = [groupoid.weights[x] for x in unit_set.members]
    denominator = reduce(lambda a, b: a * b // math.gcd(a, b), (w.denominator for w in weights), 1)
    integers = [int(w * denominator) for w in weights]
    if sum(integers) > START_WEIGHT_INT_CAP:
        logger.debug("common denominator %d too large; float start weights", denominator)
        return members, np.cumsum(np.array([float(w) for w in weights], dtype=np.float64))
    return members, np.cumsum(np.array(integers, dtype=np.int64))


def _sample_starts(members: np.ndarray, cumulative: np.ndarray, count: int, rng: np.random.Generator) -> np.ndarray:
    if cumulative.dtype.kind == "f":
        draws = rng.random(count) * cumulative[-1]
    else:
        draws = rng.integers(0, int(cumulative[-1]), size=count)
    index = np.minimum(np.searchsorted(cumulative, draws, side="right"), len(members) - 1)
    return members[index]


def sample_walk(groupoid: FiniteGroupoid, kernel: Kernel, unit: int, steps: int, seed: int) -> int:
    """Producto de ``steps`` pasos desde ``id_x``."""
    sampler = _FiberSampler(groupoid, kernel)
    return int(sampler.walk(np.array([unit], dtype=np.int64), steps, block_rng(seed, 0))[0])


def sample_products(config: WalkConfig) -> np.ndarray:
    """Flecha final de cada una de las ``samples`` trayectorias, en orden de bloque."""
    sampler = _FiberSampler(config.groupoid, config.kernel)
    members, cumulative = _start_sampler(config.groupoid, config.unit_set)
    sizes = _block_sizes(config.samples)

    def _run(block: int) -> np.ndarray:
        rng = block_rng(config.seed, block)
        starts = _sample_starts(members, cumulative, sizes[block], rng)
        return sampler.walk(starts, config.steps, rng)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            parts = list(pool.map(_run, range(len(sizes))))
    else:
        parts = [_run(b) for b in range(len(sizes))]
    return np.concatenate(parts)


def _block_sizes(samples: int) -> List[int]:
    full, rest = divmod(samples, WALK_BLOCK_SIZE)
    return [WALK_BLOCK_SIZE] * full + ([rest] if rest else [])


def empirical_distribution(config: WalkConfig) -> Dict[int, float]:
    """Frecuencia de cada flecha final."""
    finals = sample_products(config)
    arrows, counts = np.unique(finals, return_counts=True)
    return {int(a): c / config.samples for a, c in zip(arrows, counts)}


def exact_distribution(config: WalkConfig) -> Dict[int, float]:
    """
    Ley exacta de la flecha final: ``μ(t(g)) / μ(E) · π^{∗n}(g)`` para ``t(g) ∈ E``.
    """
    groupoid, unit_set = config.groupoid, config.unit_set
    power = convolution_power(config.kernel, config.steps)
    mass = unit_set.mass
    law: Dict[int, float] = {}
    for g, value in power.values.items():
        x = int(groupoid.tgt[g])
        if x in unit_set:
            law[g] = float(groupoid.weights[x] / mass) * float(abs(value))
    return law


def total_variation(first: Dict[int, float], second: Dict[int, float]) -> float:
    """``½ Σ_g |p(g) - q(g)|`` sobre el soporte conjunto."""
    return 0.5 * sum(abs(first.get(g, 0.0) - second.get(g, 0.0)) for g in set(first) | set(second))


@dataclass
class ReturnEstimate:
    n: int
    samples: int
    p_hat: float
    std_error: float
    exact: Optional[float]
    z_score: Optional[float]

    HEADER = ("n", "N", "p_hat", "std_error", "exact", "z_score")

    def to_row(self) -> Tuple[Any, ...]:
        return (self.n, self.samples, self.p_hat, self.std_error, self.exact, self.z_score)

    def within(self, sigmas: float) -> bool:
        if self.exact is None:
            return True
        return abs(self.p_hat - self.exact) <= sigmas * self.std_error


def estimate_return(
    groupoid: FiniteGroupoid,
    kernel: Kernel,
    unit_set: UnitSet,
    steps: int,
    samples: int,
    seed: int,
    threads: int = 1,
    with_exact: bool = True,
) -> ReturnEstimate:
    """
    Fracción de paseos cuyo producto tras ``steps`` pasos es una flecha identidad,
    es decir, que vuelven a su unidad de partida.
    """
    config = WalkConfig(groupoid, kernel, unit_set, steps, samples, seed, threads)
    finals = sample_products(config)
    returned = int(np.count_nonzero(groupoid.is_unit_arrow[finals]))
    p_hat = returned / samples
    std_error = math.sqrt(p_hat * (1.0 - p_hat) / samples)

    exact = z_score = None
    if with_exact:
        exact = float(return_probability(groupoid, kernel, unit_set, steps).value)
        if std_error > 0:
            z_score = (p_hat - exact) / std_error
        else:
            z_score = 0.0 if p_hat == exact else math.inf
    logger.info("walk estimate n=%d N=%d p_hat=%.6f exact=%s", steps, samples, p_hat, exact)
    return ReturnEstimate(steps, samples, p_hat, std_error, exact, z_score)
