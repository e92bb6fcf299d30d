import dataclasses
import logging
from collections import defaultdict
from enum import Enum

import numpy as np
from scipy.sparse import coo_array
from scipy.sparse.csgraph import connected_components

from . import ValidationError
from .equilibrium import pne_mask
from .hypercube import VertexId, all_vertices, check_vertex, members
from .randgame import OrientedCube, TieParameter, all_mark_configurations
from .streams import Seed, stream

log = logging.getLogger(__name__)

DRAW_BLOCK = 4096


class Outcome(Enum):
    CONVERGED = 'converged'
    STEP_LIMIT = 'step-limit'


@dataclasses.dataclass(frozen=True)
class BrdTrace:
    start: VertexId
    final: VertexId
    steps: int
    outcome: Outcome
    path: tuple[VertexId, ...] = ()  # empty unless the run was asked to keep it

    @property
    def converged(self) -> bool:
        return self.outcome is Outcome.CONVERGED


@dataclasses.dataclass(frozen=True)
class AccessPartition:
    start: VertexId
    accessible: frozenset[VertexId]
    inaccessible: frozenset[VertexId]


def default_max_steps(n: int) -> int:
    return 64 * n * (1 << n)


def improving_players(cube: OrientedCube, v: VertexId) -> tuple[int, ...]:
    """Players whose edge at v is oriented away from v."""
    check_vertex(v, cube.n)
    mask = int(cube.outgoing[v])
    return tuple(i for i in range(cube.n) if mask >> i & 1)


def brd_run(cube: OrientedCube, start: VertexId, seed: Seed, max_steps: int | None = None, keep_path: bool = True) -> BrdTrace:
    """Best-response dynamics: move along a uniformly chosen improving player until none is left.

    Step t uses draw t of the (seed, 'brd') stream.
    """
    check_vertex(start, cube.n)
    if max_steps is None:
        max_steps = default_max_steps(cube.n)
    if max_steps < 0:
        raise ValidationError(f'max_steps must be nonnegative, got {max_steps}')

    out = cube.outgoing
    gen = stream(seed, 'brd')
    draws = np.empty(0)
    path = [start]
    v = start
    steps = 0
    while True:
        mask = int(out[v])
        if mask == 0:
            outcome = Outcome.CONVERGED
            break
        if steps == max_steps:
            outcome = Outcome.STEP_LIMIT
            break
        if steps % DRAW_BLOCK == 0:
            draws = gen.random(DRAW_BLOCK)
        players = [i for i in range(cube.n) if mask >> i & 1]
        i = players[int(draws[steps % DRAW_BLOCK] * len(players))]
        v ^= 1 << i
        steps += 1
        if keep_path:
            path.append(v)

    if outcome is Outcome.STEP_LIMIT:
        log.debug('brd from %d hit the step limit %d at %d', start, max_steps, v)
    return BrdTrace(start, v, steps, outcome, tuple(path) if keep_path else ())


def accessible_mask(cube: OrientedCube, start: VertexId) -> np.ndarray:
    """Breadth-first closure of {start} under directed edges, as a per-vertex boolean array."""
    check_vertex(start, cube.n)
    out = cube.outgoing
    visited = np.zeros(1 << cube.n, dtype=bool)
    visited[start] = True
    frontier = np.array([start], dtype=np.int64)
    while frontier.size:
        m = out[frontier]
        reached = [frontier[(m >> i) & 1 == 1] ^ (1 << i) for i in range(cube.n)]
        candidates = np.unique(np.concatenate(reached))
        frontier = candidates[~visited[candidates]]
        visited[frontier] = True
    return visited


def accessible_set(cube: OrientedCube, start: VertexId) -> AccessPartition:
    mask = accessible_mask(cube, start)
    return AccessPartition(start, members(mask), members(~mask))


def unreachable_mask(cube: OrientedCube, start: VertexId) -> np.ndarray:
    return pne_mask(cube) & ~accessible_mask(cube, start)


def unreachable_equilibria(cube: OrientedCube, start: VertexId) -> frozenset[VertexId]:
    """Equilibria that no best-response path from start can reach."""
    return members(unreachable_mask(cube, start))


def all_tie_mask(cube: OrientedCube) -> np.ndarray:
    return cube.tie_degrees == cube.n


def all_tie_vertices(cube: OrientedCube) -> frozenset[VertexId]:
    return members(all_tie_mask(cube))


def trap_components(cube: OrientedCube) -> list[frozenset[VertexId]]:
    """Closed classes of the best-response graph that contain no equilibrium.

    A closed class is a strongly connected component with no edge leaving it;
    one of size 1 is an equilibrium, a larger one traps every run entering it.
    """
    v = all_vertices(cube.n)
    src, dst = [], []
    for i in range(cube.n):
        leaving = v[(cube.outgoing >> i) & 1 == 1]
        src.append(leaving)
        dst.append(leaving ^ (1 << i))
    src, dst = np.concatenate(src), np.concatenate(dst)
    size = 1 << cube.n
    graph = coo_array((np.ones(src.size, dtype=np.int8), (src, dst)), shape=(size, size)).tocsr()
    _, labels = connected_components(graph, directed=True, connection='strong')

    open_labels = np.unique(labels[src[labels[src] != labels[dst]]])
    counts = np.bincount(labels)
    closed = np.setdiff1d(np.flatnonzero(counts > 1), open_labels)
    traps = [members(labels == lab) for lab in closed]
    return sorted(traps, key=min)


def exact_accessible_size_distribution(n: int, alpha: float | TieParameter, start: VertexId = 0) -> dict[int, float]:
    """Exact law of |{start} ∪ accessible| over every mark configuration (n <= 2 in practice)."""
    configs, weights = all_mark_configurations(n, alpha)
    law: dict[int, float] = defaultdict(float)
    for marks, w in zip(configs, weights, strict=True):
        if w == 0.0:
            continue
        law[int(np.count_nonzero(accessible_mask(OrientedCube(n, marks), start)))] += float(w)
    return dict(sorted(law.items()))
