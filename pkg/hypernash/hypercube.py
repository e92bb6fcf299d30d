import itertools
from collections.abc import Iterator
from enum import Enum
from typing import NamedTuple

import numpy as np

from . import MAX_DIMENSION, DimensionError

type VertexId = int  # bit i is the action of player i+1

_max_dimension = MAX_DIMENSION


class Parity(Enum):
    EVEN = 0
    ODD = 1


class EdgeRef(NamedTuple):
    """Canonical reference to the edge joining `base` and `base | 1 << player`."""

    base: VertexId
    player: int

    def index(self, n: int) -> int:
        """Position of the edge in the flat (player, compact(base)) storage order."""
        return self.player * (1 << (n - 1)) + compact(self.base, self.player)

    def other(self) -> VertexId:
        return self.base | 1 << self.player


def set_max_dimension(cap: int) -> None:
    global _max_dimension
    if cap < 1:
        raise DimensionError(f'Dimension cap must be positive, got {cap}')
    _max_dimension = cap


def max_dimension() -> int:
    return _max_dimension


def check_dimension(n: int) -> int:
    if not 1 <= n <= _max_dimension:
        raise DimensionError(f'Dimension {n} outside [1, {_max_dimension}]')
    return n


def check_vertex(v: VertexId, n: int) -> VertexId:
    if not 0 <= v < 1 << n:
        raise DimensionError(f'Vertex {v} outside [0, 2^{n})')
    return v


def check_player(i: int, n: int) -> int:
    if not 0 <= i < n:
        raise DimensionError(f'Player index {i} outside [0, {n})')
    return i


def flip(v: VertexId, i: int, n: int) -> VertexId:
    """Neighbor of v along dimension i."""
    check_player(i, n)
    return v ^ (1 << i)


def hamming(u: VertexId, v: VertexId) -> int:
    return (u ^ v).bit_count()


def neighbors(v: VertexId, n: int) -> list[VertexId]:
    return [v ^ (1 << i) for i in range(n)]


def ball(v: VertexId, r: int, n: int) -> frozenset[VertexId]:
    """All vertices within Hamming distance r of v."""
    if r < 0:
        raise DimensionError(f'Ball radius must be nonnegative, got {r}')
    check_vertex(v, n)
    members = set()
    for k in range(min(r, n) + 1):
        for bits in itertools.combinations(range(n), k):
            mask = 0
            for b in bits:
                mask |= 1 << b
            members.add(v ^ mask)
    return frozenset(members)


def parity(v: VertexId) -> Parity:
    return Parity(v.bit_count() & 1)


def edge_count(n: int) -> int:
    return n * (1 << (n - 1))


def compact(v: VertexId, i: int) -> int:
    """Remove bit i from v, giving the position of edge (v, i) within player i's row."""
    low = v & ((1 << i) - 1)
    return ((v >> (i + 1)) << i) | low


def expand(j: int, i: int) -> VertexId:
    """Reinsert a 0 bit at position i of j (inverse of compact on canonical bases)."""
    low = j & ((1 << i) - 1)
    return ((j >> i) << (i + 1)) | low


def edges(n: int) -> Iterator[EdgeRef]:
    """Every edge of the n-cube, in storage order."""
    for i in range(n):
        for j in range(1 << (n - 1)):
            yield EdgeRef(expand(j, i), i)


def edge_at(index: int, n: int) -> EdgeRef:
    half = 1 << (n - 1)
    if not 0 <= index < n * half:
        raise DimensionError(f'Edge index {index} outside [0, {n * half})')
    i, j = divmod(index, half)
    return EdgeRef(expand(j, i), i)


def all_vertices(n: int) -> np.ndarray:
    return np.arange(1 << n, dtype=np.int64)


def compact_all(n: int, i: int) -> np.ndarray:
    """compact(v, i) for every vertex v, as an index array."""
    v = all_vertices(n)
    return ((v >> (i + 1)) << i) | (v & ((1 << i) - 1))


def expand_all(n: int, i: int) -> np.ndarray:
    """Canonical base of every edge of player i, in storage order."""
    j = np.arange(1 << (n - 1), dtype=np.int64)
    return ((j >> i) << (i + 1)) | (j & ((1 << i) - 1))


def vertices_of_parity(n: int, p: Parity) -> np.ndarray:
    v = all_vertices(n)
    return v[(np.bitwise_count(v) & 1) == p.value]


def members(mask: np.ndarray) -> frozenset[VertexId]:
    """Vertex set of a boolean per-vertex array."""
    return frozenset(int(v) for v in np.flatnonzero(mask))
