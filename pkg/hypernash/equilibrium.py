import dataclasses
import math

import numpy as np

from . import DomainError
from .hypercube import VertexId, check_vertex, compact, neighbors
from .randgame import Mark, OrientedCube, PayoffTable, TieParameter, all_mark_configurations, as_alpha


@dataclasses.dataclass(frozen=True)
class EquilibriumReport:
    pne: tuple[VertexId, ...]
    spne: tuple[VertexId, ...]

    @property
    def pne_count(self) -> int:
        return len(self.pne)

    @property
    def spne_count(self) -> int:
        return len(self.spne)


@dataclasses.dataclass(frozen=True)
class ClosedFormMoments:
    mean: float
    b_n: float
    tau_sq: float


def pne_mask(cube: OrientedCube) -> np.ndarray:
    return cube.outgoing == 0


def spne_mask(cube: OrientedCube) -> np.ndarray:
    return (cube.outgoing == 0) & (cube.ties == 0)


def is_pne(cube: OrientedCube, v: VertexId) -> bool:
    """No player can strictly improve by deviating from v."""
    check_vertex(v, cube.n)
    return bool(cube.outgoing[v] == 0)


def is_spne(cube: OrientedCube, v: VertexId) -> bool:
    """Every unilateral deviation from v is strictly worse."""
    check_vertex(v, cube.n)
    return bool(cube.outgoing[v] == 0 and cube.ties[v] == 0)


def enumerate_equilibria(cube: OrientedCube) -> EquilibriumReport:
    pne = np.flatnonzero(pne_mask(cube))
    spne = np.flatnonzero(spne_mask(cube))
    return EquilibriumReport(tuple(int(v) for v in pne), tuple(int(v) for v in spne))


def pne_count(cube: OrientedCube) -> int:
    return int(np.count_nonzero(pne_mask(cube)))


def spne_count(cube: OrientedCube) -> int:
    return int(np.count_nonzero(spne_mask(cube)))


def naive_pne(payoffs: PayoffTable) -> EquilibriumReport:
    """Check the equilibrium inequalities directly on the payoff table."""
    pne, spne = [], []
    for s in range(1 << payoffs.n):
        deviations = [(payoffs.z[i, s], payoffs.z[i, u]) for i, u in enumerate(neighbors(s, payoffs.n))]
        if all(here >= there for here, there in deviations):
            pne.append(s)
        if all(here > there for here, there in deviations):
            spne.append(s)
    return EquilibriumReport(tuple(pne), tuple(spne))


def _log_stay(alpha: float) -> float:
    # log(1 - beta) = log((1 + alpha) / 2)
    return math.log1p(alpha) - math.log(2.0)


def mean_pne(n: int, alpha: float | TieParameter) -> float:
    return (1.0 + as_alpha(alpha)) ** n


def var_pne(n: int, alpha: float | TieParameter) -> float:
    return closed_form_moments(n, alpha).tau_sq


def closed_form_moments(n: int, alpha: float | TieParameter) -> ClosedFormMoments:
    a = as_alpha(alpha)
    q = (1.0 + a) / 2.0
    log_q = _log_stay(a)
    b_n = math.exp(n * log_q) * -math.expm1(n * log_q)
    single = math.exp(n * math.log(2.0) + n * log_q) * -math.expm1(n * log_q)
    pairs = n * math.exp(n * math.log(2.0) + (2 * n - 2) * log_q) * (a - q * q)
    return ClosedFormMoments(mean=mean_pne(n, a), b_n=b_n, tau_sq=max(0.0, single + pairs))


def clt_statistic(count: int, n: int, alpha: float | TieParameter) -> float:
    a = as_alpha(alpha)
    if a == 0.0:
        raise DomainError('The normal approximation of the equilibrium count needs alpha > 0')
    return (count - (1.0 + a) ** n) / (1.0 + a) ** (n / 2)


def mean_spne(n: int, alpha: float | TieParameter) -> float:
    return (1.0 - as_alpha(alpha)) ** n


def markov_spne_bound(n: int, alpha: float | TieParameter) -> float:
    """Upper bound on P(at least one strict equilibrium)."""
    return min(1.0, mean_spne(n, alpha))


def m_beta(beta: float) -> int:
    if not 0.0 < beta < 0.5:
        raise DomainError(f'm_beta needs 0 < beta < 1/2, got {beta}')
    return math.floor(1.0 / -math.log1p(-beta))


def brd_threshold(alpha: float | TieParameter) -> int:
    """floor(-1 / ln((1 + alpha) / 2)); best-response dynamics converge w.v.h.p. when this is <= 3."""
    a = as_alpha(alpha)
    if not 0.0 < a < 1.0:
        raise DomainError(f'brd_threshold needs 0 < alpha < 1, got {a}')
    return m_beta((1.0 - a) / 2.0)


def batch_pne_counts(configs: np.ndarray) -> np.ndarray:
    """PNE count of each mark configuration in a (K, n, 2^(n-1)) stack."""
    k, n, _ = configs.shape
    counts = np.zeros(k, dtype=np.int64)
    for v in range(1 << n):
        stays = np.ones(k, dtype=bool)
        for i in range(n):
            away = Mark.TOWARD_ZERO if v >> i & 1 else Mark.TOWARD_ONE
            stays &= configs[:, i, compact(v, i)] != away
        counts += stays
    return counts


def exact_pne_moments(n: int, alpha: float | TieParameter) -> tuple[float, float]:
    """Exact (mean, variance) of the PNE count by enumerating every configuration (n <= 3)."""
    configs, weights = all_mark_configurations(n, alpha)
    counts = batch_pne_counts(configs).astype(np.float64)
    mean = math.fsum(weights * counts)
    second = math.fsum(weights * counts * counts)
    return mean, second - mean * mean
