import dataclasses
import logging
import math
from collections import defaultdict
from functools import cached_property
from pathlib import Path

import numpy as np

from . import FORMAT_VERSION, CouplingError, DomainError, ParseError, ValidationError
from .hypercube import VertexId, all_vertices, check_dimension, check_vertex, compact_all, edge_count, expand_all, members
from .randgame import Mark, OrientedCube, parse_header, parse_rows, split_text
from .streams import Seed, stream

log = logging.getLogger(__name__)

BOND_MAGIC = 'hrp'
BOND_CHARS = {True: 'o', False: 'x'}


@dataclasses.dataclass(frozen=True, eq=False)
class BondConfig:
    """Open/closed state of every edge; is_open[i, j] belongs to edge (expand(j, i), i).

    p is the open probability the configuration was sampled with, or None when
    it was derived from something else.
    """

    n: int
    is_open: np.ndarray
    p: float | None = None

    def __post_init__(self):
        check_dimension(self.n)
        bonds = np.array(self.is_open, dtype=bool)
        if bonds.shape != (self.n, 1 << (self.n - 1)):
            raise ValidationError(f'bond shape {bonds.shape} does not match n={self.n}')
        bonds.setflags(write=False)
        object.__setattr__(self, 'is_open', bonds)

    def __len__(self) -> int:
        return edge_count(self.n)

    @cached_property
    def adjacency(self) -> np.ndarray:
        """Bitmask per vertex of the players whose edge at it is open."""
        out = np.zeros(1 << self.n, dtype=np.uint32)
        for i in range(self.n):
            out |= self.is_open[i][compact_all(self.n, i)].astype(np.uint32) << i
        out.setflags(write=False)
        return out

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.bitwise_count(self.adjacency).astype(np.int64)


@dataclasses.dataclass(frozen=True, eq=False)
class ComponentStats:
    component_id: np.ndarray  # smallest vertex of each vertex's component
    sizes: tuple[int, ...]  # largest first

    @property
    def largest_size(self) -> int:
        return self.sizes[0]

    @property
    def isolated_count(self) -> int:
        return self.sizes.count(1)

    @property
    def component_count(self) -> int:
        return len(self.sizes)


@dataclasses.dataclass(frozen=True, eq=False)
class CouplingOutput:
    bond: BondConfig
    explored: frozenset[VertexId]
    rounds: int


class UnionFind:
    """Disjoint sets over 0..size-1 with path compression and union by size."""

    def __init__(self, size: int):
        self.parents = list(range(size))
        self.sizes = [1] * size
        self.num_components = size

    def find(self, x: int) -> int:
        root = x
        while root != self.parents[root]:
            root = self.parents[root]
        while x != root:
            self.parents[x], x = root, self.parents[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.sizes[ra] < self.sizes[rb]:
            ra, rb = rb, ra
        self.parents[rb] = ra
        self.sizes[ra] += self.sizes[rb]
        self.num_components -= 1
        return True

    def roots(self) -> list[int]:
        return [self.find(x) for x in range(len(self.parents))]


def check_probability(p: float, name: str = 'p') -> float:
    if not 0.0 <= p <= 1.0:
        raise ValidationError(f'{name} must lie in [0, 1], got {p}')
    return float(p)


def sample_bond(n: int, p: float, seed: Seed) -> BondConfig:
    p = check_probability(p)
    check_dimension(n)
    u = stream(seed, 'bond').random((n, 1 << (n - 1)))
    return BondConfig(n, u < p, p)


def open_edges(bond: BondConfig) -> tuple[np.ndarray, np.ndarray]:
    """(base, top) endpoint arrays of every open edge."""
    bases, tops = [], []
    for i in range(bond.n):
        base = expand_all(bond.n, i)[bond.is_open[i]]
        bases.append(base)
        tops.append(base | (1 << i))
    return np.concatenate(bases), np.concatenate(tops)


def components(bond: BondConfig) -> ComponentStats:
    uf = UnionFind(1 << bond.n)
    for a, b in zip(*(e.tolist() for e in open_edges(bond)), strict=True):
        uf.union(a, b)
    roots = np.array(uf.roots(), dtype=np.int64)
    smallest = np.full(1 << bond.n, 1 << bond.n, dtype=np.int64)
    np.minimum.at(smallest, roots, all_vertices(bond.n))
    ids = smallest[roots]
    ids.setflags(write=False)
    sizes = np.bincount(ids)
    sizes = sizes[sizes > 0]
    return ComponentStats(ids, tuple(sorted((int(s) for s in sizes), reverse=True)))


def cluster_mask(bond: BondConfig, v: VertexId) -> np.ndarray:
    check_vertex(v, bond.n)
    adj = bond.adjacency
    seen = np.zeros(1 << bond.n, dtype=bool)
    seen[v] = True
    frontier = np.array([v], dtype=np.int64)
    while frontier.size:
        m = adj[frontier]
        reached = np.unique(np.concatenate([frontier[(m >> i) & 1 == 1] ^ (1 << i) for i in range(bond.n)]))
        frontier = reached[~seen[reached]]
        seen[frontier] = True
    return seen


def cluster_of(bond: BondConfig, v: VertexId) -> frozenset[VertexId]:
    """Connected component of v in the open subgraph."""
    return members(cluster_mask(bond, v))


def isolated_count(bond: BondConfig) -> int:
    return int(np.count_nonzero(bond.degrees == 0))


def nonlargest_all_singletons(stats: ComponentStats) -> bool:
    return all(s == 1 for s in stats.sizes[1:])


def orientation_subgraph(cube: OrientedCube) -> BondConfig:
    """Open exactly the oriented edges; its isolated vertices are the all-tie vertices of the cube."""
    return BondConfig(cube.n, cube.marks != Mark.TIE, None)


def coupled_percolation(cube: OrientedCube, start: VertexId, seed: Seed) -> CouplingOutput:
    """Grow the explored set from start while resampling its boundary edges from the cube.

    B_1 is an independent bond configuration with p = beta. Each round, every
    edge from the explored set P to a vertex w outside it is opened iff the cube
    orients it toward w; the edges whose far end becomes explored stop being
    boundary edges and keep that value. Nothing else is touched.
    """
    check_vertex(start, cube.n)
    if cube.alpha is None:
        raise DomainError('coupled percolation needs an instance with a known alpha')
    n = cube.n
    beta = (1.0 - cube.alpha) / 2.0
    bonds = stream(seed, 'coupling').random((n, 1 << (n - 1))) < beta

    out = cube.outgoing
    explored = np.zeros(1 << n, dtype=bool)
    explored[start] = True
    frontier = np.array([start], dtype=np.int64)
    rounds = 0
    # older boundary edges keep the value set when their inner end joined P
    while frontier.size:
        rounds += 1
        if rounds > 1 << n:
            raise CouplingError(f'coupling did not stabilise within {1 << n} rounds')
        added = []
        for i in range(n):
            w = frontier ^ (1 << i)
            outside = ~explored[w]
            u = frontier[outside]
            leaving = (out[u] >> i) & 1 == 1
            bonds[i, compact_all(n, i)[u]] = leaving
            added.append(w[outside][leaving])
        frontier = np.unique(np.concatenate(added))
        explored[frontier] = True
    log.debug('coupling from %d explored %d vertices in %d rounds', start, int(explored.sum()), rounds)
    return CouplingOutput(BondConfig(n, bonds, beta), members(explored), rounds)


def exact_cluster_size_distribution(n: int, p: float, start: VertexId = 0) -> dict[int, float]:
    """Exact law of |cluster_of(bond, start)| over every bond configuration (n <= 3)."""
    p = check_probability(p)
    e = edge_count(check_dimension(n))
    law: dict[int, float] = defaultdict(float)
    for k in range(1 << e):
        bits = np.array([k >> b & 1 for b in range(e)], dtype=bool)
        n_open = int(bits.sum())
        weight = math.pow(p, n_open) * math.pow(1.0 - p, e - n_open)
        if weight == 0.0:
            continue
        bond = BondConfig(n, bits.reshape(n, -1))
        law[int(np.count_nonzero(cluster_mask(bond, start)))] += weight
    return dict(sorted(law.items()))


def dump_bond(bond: BondConfig) -> str:
    p = 'derived' if bond.p is None else repr(bond.p)
    lines = [f'{BOND_MAGIC} {FORMAT_VERSION}', f'n={bond.n} p={p}']
    for row in bond.is_open:
        lines.append(''.join(BOND_CHARS[bool(b)] for b in row))
    return '\n'.join(lines) + '\n'


def load_bond(text: str) -> BondConfig:
    lines = split_text(text)
    n, p_text = parse_header(lines, BOND_MAGIC, 'p')
    if p_text == 'derived':
        p = None
    else:
        try:
            p = check_probability(float(p_text))
        except ValueError as e:
            raise ParseError(f'bad p {p_text!r}', 2) from e
    rows = parse_rows(lines, n, {c: int(b) for b, c in BOND_CHARS.items()})
    return BondConfig(n, rows.astype(bool), p)


def load_bond_from_file(file_path: str | Path) -> BondConfig:
    return load_bond(Path(file_path).read_text())
