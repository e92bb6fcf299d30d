import dataclasses
import math
from enum import IntEnum
from functools import cached_property
from pathlib import Path

import numpy as np

from . import FORMAT_VERSION, ParseError, ValidationError
from .hypercube import VertexId, all_vertices, check_dimension, check_player, check_vertex, compact, compact_all, edge_count, expand_all
from .streams import Seed, stream

CUBE_MAGIC = 'hrg'


class Mark(IntEnum):
    TIE = 0
    TOWARD_ONE = 1  # Z_i^base < Z_i^(base with bit i set)
    TOWARD_ZERO = 2


MARK_CHARS = {Mark.TOWARD_ONE: '>', Mark.TOWARD_ZERO: '<', Mark.TIE: '='}
CHAR_MARKS = {c: m for m, c in MARK_CHARS.items()}


@dataclasses.dataclass(frozen=True)
class TieParameter:
    """alpha = P(Z1 = Z2); beta = P(Z1 < Z2) = (1 - alpha) / 2."""

    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValidationError(f'alpha must lie in [0, 1], got {self.alpha}')

    @property
    def beta(self) -> float:
        return (1.0 - self.alpha) / 2.0


def as_alpha(alpha: float | TieParameter) -> float:
    if isinstance(alpha, TieParameter):
        return alpha.alpha
    return TieParameter(float(alpha)).alpha


@dataclasses.dataclass(frozen=True)
class DiscreteDistribution:
    support: tuple[float, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if not self.support or len(self.support) != len(self.probs):
            raise ValidationError('support and probs must be nonempty and of equal length')
        if any(not math.isfinite(x) for x in self.support):
            raise ValidationError(f'support values must be finite: {self.support}')
        if any(b <= a for a, b in zip(self.support, self.support[1:], strict=False)):
            raise ValidationError(f'support must be strictly increasing: {self.support}')
        if any(p < 0 for p in self.probs):
            raise ValidationError(f'probabilities must be nonnegative: {self.probs}')
        if abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise ValidationError(f'probabilities sum to {math.fsum(self.probs)}, not 1')

    @classmethod
    def uniform(cls, support: list[float]) -> 'DiscreteDistribution':
        k = len(support)
        return cls(tuple(sorted(float(x) for x in support)), tuple([1.0 / k] * k))

    @classmethod
    def parse(cls, text: str) -> 'DiscreteDistribution':
        """Parse 'uniform:-1,1' or 'atoms:-1@0.25,0@0.5,1@0.25'."""
        kind, _, body = text.partition(':')
        try:
            if kind == 'uniform':
                return cls.uniform([float(x) for x in body.split(',')])
            if kind == 'atoms':
                pairs = sorted((float(v), float(p)) for v, p in (a.split('@') for a in body.split(',')))
                return cls(tuple(v for v, _ in pairs), tuple(p for _, p in pairs))
        except ValueError as e:
            if isinstance(e, ValidationError):
                raise
            raise ValidationError(f'Cannot parse distribution {text!r}: {e}') from e
        raise ValidationError(f'Unknown distribution kind {kind!r} in {text!r} (expected uniform: or atoms:)')


def alpha_of(dist: DiscreteDistribution) -> TieParameter:
    return TieParameter(min(1.0, math.fsum(p * p for p in dist.probs)))


@dataclasses.dataclass(frozen=True, eq=False)
class OrientedCube:
    """Partially oriented n-cube; marks[i, j] is the mark of edge (expand(j, i), i)."""

    n: int
    marks: np.ndarray
    alpha: float | None = None

    def __post_init__(self):
        check_dimension(self.n)
        marks = np.array(self.marks, dtype=np.int8)
        if marks.shape != (self.n, 1 << (self.n - 1)):
            raise ValidationError(f'marks shape {marks.shape} does not match n={self.n}')
        if marks.size and (marks.min() < 0 or marks.max() > 2):
            raise ValidationError('marks must be TIE, TOWARD_ONE or TOWARD_ZERO')
        marks.setflags(write=False)
        object.__setattr__(self, 'marks', marks)

    def __len__(self) -> int:
        return edge_count(self.n)

    def mark(self, v: VertexId, i: int) -> Mark:
        """Mark of the edge joining v and its neighbor along player i."""
        check_player(i, self.n)
        check_vertex(v, self.n)
        return Mark(int(self.marks[i, compact(v, i)]))

    @cached_property
    def outgoing(self) -> np.ndarray:
        """Bitmask per vertex of the players whose edge is oriented away from it."""
        v = all_vertices(self.n)
        out = np.zeros(1 << self.n, dtype=np.uint32)
        for i in range(self.n):
            m = self.marks[i][compact_all(self.n, i)]
            bit = (v >> i) & 1
            leaving = np.where(bit == 0, m == Mark.TOWARD_ONE, m == Mark.TOWARD_ZERO)
            out |= leaving.astype(np.uint32) << i
        out.setflags(write=False)
        return out

    @cached_property
    def ties(self) -> np.ndarray:
        """Bitmask per vertex of the players whose edge at it is a tie."""
        out = np.zeros(1 << self.n, dtype=np.uint32)
        for i in range(self.n):
            tied = self.marks[i][compact_all(self.n, i)] == Mark.TIE
            out |= tied.astype(np.uint32) << i
        out.setflags(write=False)
        return out

    @cached_property
    def tie_degrees(self) -> np.ndarray:
        return np.bitwise_count(self.ties).astype(np.int64)

    def with_marks(self, marks: np.ndarray) -> 'OrientedCube':
        return OrientedCube(self.n, marks, self.alpha)


@dataclasses.dataclass(frozen=True, eq=False)
class PayoffTable:
    """z[i, s] is the payoff of player i at profile s."""

    n: int
    z: np.ndarray

    def __post_init__(self):
        check_dimension(self.n)
        if self.z.shape != (self.n, 1 << self.n):
            raise ValidationError(f'payoff shape {self.z.shape} does not match n={self.n}')
        if not np.all(np.isfinite(self.z)):
            raise ValidationError('payoffs must be finite')


def sample_marks(n: int, alpha: float | TieParameter, seed: Seed) -> OrientedCube:
    a = as_alpha(alpha)
    beta = (1.0 - a) / 2.0
    check_dimension(n)
    u = stream(seed, 'marks').random((n, 1 << (n - 1)))
    marks = np.full(u.shape, Mark.TOWARD_ZERO, dtype=np.int8)
    marks[u < a + beta] = Mark.TOWARD_ONE
    marks[u < a] = Mark.TIE
    return OrientedCube(n, marks, a)


def sample_payoffs(n: int, dist: DiscreteDistribution, seed: Seed) -> PayoffTable:
    check_dimension(n)
    u = stream(seed, 'payoffs').random((n, 1 << n))
    cdf = np.cumsum(dist.probs)
    idx = np.minimum(np.searchsorted(cdf, u, side='right'), len(dist.support) - 1)
    return PayoffTable(n, np.asarray(dist.support, dtype=np.float64)[idx])


def marks_of(payoffs: PayoffTable, alpha: float | TieParameter | None = None) -> OrientedCube:
    """Orient every edge from the lower to the higher payoff of the deviating player.

    alpha is the tie parameter of the generating distribution when known; it
    is never estimated from the ties of this one table.
    """
    n = payoffs.n
    marks = np.empty((n, 1 << (n - 1)), dtype=np.int8)
    for i in range(n):
        base = expand_all(n, i)
        lo = payoffs.z[i, base]
        hi = payoffs.z[i, base | (1 << i)]
        marks[i] = np.where(lo < hi, Mark.TOWARD_ONE, np.where(lo > hi, Mark.TOWARD_ZERO, Mark.TIE))
    return OrientedCube(n, marks, None if alpha is None else as_alpha(alpha))


def all_mark_configurations(n: int, alpha: float | TieParameter) -> tuple[np.ndarray, np.ndarray]:
    """Every mark configuration of the n-cube with its probability.

    Returns (configs, weights) with configs of shape (3^E, n, 2^(n-1)).
    Only sensible for n <= 3.
    """
    a = as_alpha(alpha)
    beta = (1.0 - a) / 2.0
    e = edge_count(check_dimension(n))
    k = np.arange(3**e, dtype=np.int64)
    digits = (k[:, None] // (3 ** np.arange(e, dtype=np.int64))) % 3
    n_ties = np.count_nonzero(digits == Mark.TIE, axis=1)
    weights = np.power(a, n_ties) * np.power(beta, e - n_ties)
    return digits.astype(np.int8).reshape(-1, n, 1 << (n - 1)), weights


def dump_cube(cube: OrientedCube) -> str:
    alpha = 'unknown' if cube.alpha is None else repr(cube.alpha)
    lines = [f'{CUBE_MAGIC} {FORMAT_VERSION}', f'n={cube.n} alpha={alpha}']
    for row in cube.marks:
        lines.append(''.join(MARK_CHARS[Mark(int(m))] for m in row))
    return '\n'.join(lines) + '\n'


def parse_header(lines: list[str], magic: str, param: str) -> tuple[int, str]:
    """Validate the two header lines shared by instance and bond files; returns (n, param value)."""
    if not lines or lines[0] != f'{magic} {FORMAT_VERSION}':
        raise ParseError(f'expected header {magic!r} {FORMAT_VERSION}', 1)
    if len(lines) < 2:
        raise ParseError('missing dimension line', 2)
    fields = lines[1].split(' ')
    if len(fields) != 2 or not fields[0].startswith('n=') or not fields[1].startswith(f'{param}='):
        raise ParseError(f'expected "n=<int> {param}=<value>"', 2)
    try:
        n = check_dimension(int(fields[0][2:]))
    except ValueError as e:
        raise ParseError(f'bad dimension {fields[0]!r}: {e}', 2, 3) from e
    return n, fields[1][len(param) + 1 :]


def parse_rows(lines: list[str], n: int, alphabet: dict[str, int]) -> np.ndarray:
    if len(lines) != n + 2:
        raise ParseError(f'expected {n} edge rows, found {len(lines) - 2}', min(len(lines), n + 2) + 1)
    half = 1 << (n - 1)
    rows = np.empty((n, half), dtype=np.int8)
    for i, line in enumerate(lines[2:]):
        if len(line) != half:
            raise ParseError(f'row for player {i} has {len(line)} marks, expected {half}', i + 3, min(len(line), half) + 1)
        for j, c in enumerate(line):
            if c not in alphabet:
                raise ParseError(f'unexpected character {c!r}', i + 3, j + 1)
            rows[i, j] = alphabet[c]
    return rows


def split_text(text: str) -> list[str]:
    if not text.endswith('\n'):
        raise ParseError('missing trailing newline', text.count('\n') + 1)
    return text[:-1].split('\n')


def load_cube(text: str) -> OrientedCube:
    lines = split_text(text)
    n, alpha_text = parse_header(lines, CUBE_MAGIC, 'alpha')
    if alpha_text == 'unknown':
        alpha = None
    else:
        try:
            alpha = TieParameter(float(alpha_text)).alpha
        except ValueError as e:
            raise ParseError(f'bad alpha {alpha_text!r}', 2) from e
    return OrientedCube(n, parse_rows(lines, n, {c: int(m) for c, m in CHAR_MARKS.items()}), alpha)


def load_cube_from_file(file_path: str | Path) -> OrientedCube:
    return load_cube(Path(file_path).read_text())


def figure_game() -> PayoffTable:
    """The three-player game drawn on {0,1}^3 whose equilibria are (0,0,0) and (1,1,0).

    Profiles are indexed with bit 0 = player 1, bit 1 = player 2, bit 2 = player 3.
    """
    by_profile = {
        0b000: (0.542, 0.709, 0.426),
        0b010: (0.209, 0.659, 0.569),
        0b001: (0.292, 0.684, 0.126),
        0b011: (0.815, 0.774, 0.508),
        0b100: (0.202, 0.549, 0.174),
        0b110: (0.199, 0.097, 0.319),
        0b101: (0.110, 0.567, 0.794),
        0b111: (0.949, 0.530, 0.055),
    }
    z = np.empty((3, 8))
    for s, payoff in by_profile.items():
        z[:, s] = payoff
    return PayoffTable(3, z)
