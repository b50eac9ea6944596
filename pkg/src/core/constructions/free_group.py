"""
Bolas del grafo de Cayley de un grupo libre: el lado no amenable del contraste.

El paseo simple simétrico (uniforme sobre los ``2m`` generadores y sus inversos)
truncado a la bola de radio ``R`` tiene norma menor que ``√(2m-1)/m``.
"""
from __future__ import annotations

import logging
import math
import string
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np
from scipy import sparse
from scipy.linalg import eigh_tridiagonal

from config import FREE_GROUP_DENSE_CAP, FREE_GROUP_VERTEX_CAP
from core.constructions.appendix import TruncationFamily, TruncationRow
from core.errors import BadParameters, BallTooLarge
from core.markov import symmetric_matrix_norm

logger = logging.getLogger(__name__)


def _inverse_letter(letter: int) -> int:
    return letter ^ 1


def letter_names(num_generators: int) -> List[str]:
    """Generador ``i`` en minúscula, su inverso en mayúscula (``a``/``A``, ``b``/``B``, …)."""
    if num_generators > len(string.ascii_lowercase):
        raise BadParameters("at most 26 generators have letter names", num_generators=num_generators)
    names = []
    for gen in string.ascii_lowercase[:num_generators]:
        names.extend([gen, gen.upper()])
    return names


def vertex_count(num_generators: int, radius: int) -> int:
    """``|B_R| = 1 + 2m((2m-1)^R - 1)/(2m-2)``; para ``m = 1``, ``2R + 1``."""
    if num_generators == 1:
        return 2 * radius + 1
    q = 2 * num_generators - 1
    return 1 + 2 * num_generators * (q ** radius - 1) // (q - 1)


def reduced_words(num_generators: int, radius: int) -> List[str]:
    """Palabras reducidas de longitud ``≤ R`` en orden de anchura."""
    names = letter_names(num_generators)
    level: List[tuple] = [()]
    words: List[tuple] = [()]
    for _ in range(radius):
        nxt = []
        for word in level:
            for letter in range(2 * num_generators):
                if word and word[-1] == _inverse_letter(letter):
                    continue
                nxt.append(word + (letter,))
        words.extend(nxt)
        level = nxt
    return ["".join(names[c] for c in w) or "e" for w in words]


def _ball_adjacency(num_generators: int, radius: int) -> sparse.csr_matrix:
    """Adyacencia de la bola: cada vértice no raíz se une a su padre."""
    letters = 2 * num_generators
    parents: List[np.ndarray] = []
    children: List[np.ndarray] = []
    level_ids = np.array([0], dtype=np.int64)
    level_last = np.array([-1], dtype=np.int64)
    next_id = 1
    for _ in range(radius):
        new_ids, new_last, new_parent = [], [], []
        for letter in range(letters):
            keep = level_last != _inverse_letter(letter)
            count = int(np.count_nonzero(keep))
            new_parent.append(level_ids[keep])
            new_last.append(np.full(count, letter, dtype=np.int64))
            new_ids.append(np.arange(next_id, next_id + count, dtype=np.int64))
            next_id += count
        level_ids = np.concatenate(new_ids)
        level_last = np.concatenate(new_last)
        parents.append(np.concatenate(new_parent))
        children.append(level_ids)

    n = next_id
    if not parents:
        return sparse.csr_matrix((n, n))
    p = np.concatenate(parents)
    c = np.concatenate(children)
    rows = np.concatenate([p, c])
    cols = np.concatenate([c, p])
    return sparse.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))


def _radial_offdiagonal(num_generators: int, radius: int) -> np.ndarray:
    m = num_generators
    off = np.full(radius, math.sqrt(2 * m - 1) / (2 * m))
    if radius:
        off[0] = 1.0 / math.sqrt(2 * m)
    return off


def radial_quotient(num_generators: int, radius: int) -> np.ndarray:
    """
    Matriz tridiagonal ``(R+1) × (R+1)`` del paseo restringido a funciones radiales,
    en la base ortonormal ``1_{S_k}/√|S_k|``.
    """
    off = _radial_offdiagonal(num_generators, radius)
    return np.diag(off, 1) + np.diag(off, -1)


def _radial_norm(num_generators: int, radius: int) -> float:
    if radius == 0:
        return 0.0
    off = _radial_offdiagonal(num_generators, radius)
    eigenvalues = eigh_tridiagonal(np.zeros(radius + 1), off, eigvals_only=True)
    return float(np.max(np.abs(eigenvalues)))


def kesten_value(num_generators: int) -> float:
    """Radio espectral del paseo simple en el grupo libre: ``√(2m-1)/m`` (1 si ``m = 1``)."""
    return math.sqrt(2 * num_generators - 1) / num_generators


@dataclass
class FreeGroupBall:
    num_generators: int
    radius: int
    vertices: int
    norm: float
    method: str
    oracle: float
    explicit_norm: Optional[float] = None
    radial_norm: Optional[float] = None
    matrix: Optional[sparse.csr_matrix] = field(default=None, repr=False)

    def operator(self) -> Any:
        """Operador del paseo truncado (explícito) o su cociente radial."""
        return self.matrix if self.matrix is not None else radial_quotient(self.num_generators, self.radius)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "num_generators": self.num_generators,
            "radius": self.radius,
            "vertices": self.vertices,
            "norm": self.norm,
            "method": self.method,
            "oracle": self.oracle,
            "explicit_norm": self.explicit_norm,
            "radial_norm": self.radial_norm,
        }


def free_group_ball(num_generators: int, radius: int, method: str = "auto") -> FreeGroupBall:
    """
    Paseo simple truncado a la bola de radio *radius*.

    ``explicit`` enumera las palabras reducidas y resuelve el autovalor de Perron
    (denso o ``eigsh``); ``radial`` usa el cociente tridiagonal; ``auto`` calcula
    ambos cuando la bola cabe en ``FREE_GROUP_VERTEX_CAP`` y solo el radial si no.

    Raises:
        BallTooLarge: si se pide ``explicit`` por encima del límite.
    """
    if num_generators < 1 or radius < 0:
        raise BadParameters("need m >= 1 and R >= 0", num_generators=num_generators, radius=radius)
    if method not in {"auto", "explicit", "radial"}:
        raise BadParameters(f"unknown method '{method}'", method=method)

    count = vertex_count(num_generators, radius)
    oracle = kesten_value(num_generators)
    if num_generators == 1:
        oracle = math.cos(math.pi / (2 * radius + 2))

    radial = _radial_norm(num_generators, radius) if method != "explicit" else None
    explicit = matrix = None
    if method == "explicit" or (method == "auto" and count <= FREE_GROUP_VERTEX_CAP):
        if count > FREE_GROUP_VERTEX_CAP:
            raise BallTooLarge(
                f"ball of radius {radius} has {count} vertices (cap {FREE_GROUP_VERTEX_CAP})",
                vertices=count,
                cap=FREE_GROUP_VERTEX_CAP,
            )
        matrix = (_ball_adjacency(num_generators, radius) / (2 * num_generators)).tocsr()
        explicit = symmetric_matrix_norm(matrix, dense_cap=FREE_GROUP_DENSE_CAP)

    if explicit is not None and radial is not None and abs(explicit - radial) > 1e-9:
        logger.warning("explicit (%.12f) and radial (%.12f) norms disagree", explicit, radial)

    norm = explicit if explicit is not None else radial
    used = "explicit" if explicit is not None else "radial"
    logger.info("free group ball m=%d R=%d: %d vertices, norm %.12f (%s)", num_generators, radius, count, norm, used)
    return FreeGroupBall(num_generators, radius, count, float(norm), used, oracle, explicit, radial, matrix)


def free_group_family(num_generators: int, radius: int, method: str = "auto") -> TruncationFamily:
    """Normas para ``R = 1..radius`` frente al valor límite."""
    rows = []
    for r in range(1, radius + 1):
        ball = free_group_ball(num_generators, r, method)
        rows.append(
            TruncationRow(
                r,
                ball.oracle,
                ball.norm,
                {"vertices": ball.vertices, "method": ball.method, "below_oracle": ball.norm <= ball.oracle + 1e-9},
            )
        )
    return TruncationFamily(
        name="free-group",
        parameter="R",
        rows=rows,
        metadata={"num_generators": num_generators, "limit": kesten_value(num_generators)},
    )
