"""Seeded Monte Carlo experiments.

Trial t of an experiment draws everything from seeds derived from
(master_seed, experiment name, t), with t counted across the whole
(repetition, n, parameter) grid, so the records never depend on the thread
count or on the order in which workers finish.
"""

import csv
import dataclasses
import io
import json
import logging
import math
import sys
from collections import defaultdict
from collections.abc import Callable, Mapping, Sequence
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any

import numpy as np
import yaml
from scipy import stats as sps
from tabulate import tabulate
from tqdm import tqdm

from . import DEFAULT_SEED, FORMAT_VERSION, ParseError, ValidationError
from .dynamics import accessible_mask, all_tie_mask, brd_run, default_max_steps, exact_accessible_size_distribution
from .equilibrium import clt_statistic, markov_spne_bound, mean_pne, mean_spne, pne_count, pne_mask, spne_count, var_pne
from .hypercube import Parity, check_dimension, vertices_of_parity
from .percolation import (
    check_probability,
    cluster_mask,
    cluster_of,
    components,
    coupled_percolation,
    exact_cluster_size_distribution,
    nonlargest_all_singletons,
    sample_bond,
)
from .randgame import sample_marks
from .stats import PoissonFit, SummaryStats, median, normal_cdf, poisson_fit, summarize, two_sample_ks
from .streams import Seed, derive_seed, stream

log = logging.getLogger(__name__)

type Observables = dict[str, int | float | str]
type Cell = dict[str, Any]

RECORD_COLUMNS = ('experiment', 'n', 'alpha', 'trial', 'seed')
BASE_KEYS = ('name', 'n', 'alpha', 'p', 'trials', 'master_seed', 'max_steps', 'output', 'meta_repetitions')

# Acceptance thresholds at desk scale. The results they test are asymptotic, so
# every number here is a Monte Carlo calibration for the setting named beside it.
CALIBRATION: dict[str, dict[str, float | bool]] = {
    # any n, any trial count: 4-SE band around (1 + alpha)^n
    'mean-pne': {'mean_within_se': 4.0},
    # n=15, alpha=0.9, 500 trials; decay checked from n=8 to n=16 at alpha=0.5, 2000 trials x 5 repetitions
    'clt': {'max_ks': 0.08, 'ks_decreasing': True},
    # alpha=0, n=12, 2000 trials (Poisson(1) moments); alpha=0.5, n=20, 2000 trials expects 0.002 hits
    'spne': {'spne_mean_low': 0.85, 'spne_mean_high': 1.15, 'poisson_quantile': 0.999, 'max_spne_present': 0},
    # p=1/2, n in {10, 12}, 2000 trials
    'isolated': {
        'isolated_mean_low': 0.85,
        'isolated_mean_high': 1.15,
        'isolated_var_low': 0.8,
        'isolated_var_high': 1.25,
        'min_singletons_fraction': 0.9,
        'poisson_quantile': 0.999,
    },
    # n=8, alpha=0.5, 10^4 trials per side; the exact gap is float round-off only
    'coupling': {'max_two_sample_ks': 0.03, 'require_coupling_match': True, 'max_exact_gap': 1e-12},
    # n=3 with 10^5 runs, n=2 for the joint law
    'coupling-marginal': {'max_edge_se': 4.0, 'joint_quantile': 0.9999},
    # n=14, 1000 trials at alpha 0.3 / 0.5 / 0.7
    'accessibility': {'min_all_accessible_below_half': 0.95, 'min_unreachable_above_half': 0.9, 'min_unreachable_at_half': 0.3},
    # n=14, 1000 runs at alpha 0.3 and 0.5; medians over n=8..16 at 100 trials each
    'brd-steps': {'min_converged_fraction': 0.98, 'median_nondecreasing': True, 'max_median_ratio': 16.0},
}


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    name: str
    n_values: tuple[int, ...]
    params: tuple[float, ...]  # alpha, or p for the percolation experiments
    trials: int
    master_seed: Seed | None = None
    max_steps: int | None = None
    output: str | None = None
    meta_repetitions: int = 1
    checks: Mapping[str, float | bool] = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if self.name not in EXPERIMENTS:
            raise ValidationError(f'Unknown experiment {self.name!r}, expected one of {", ".join(EXPERIMENTS)}')
        experiment = EXPERIMENTS[self.name]
        if self.trials < 1:
            raise ValidationError(f'trials must be at least 1, got {self.trials}')
        if self.meta_repetitions < 1:
            raise ValidationError(f'meta_repetitions must be at least 1, got {self.meta_repetitions}')
        if not self.n_values or not self.params:
            raise ValidationError(f'{self.name} needs at least one n and one {experiment.param}')
        for n in self.n_values:
            check_dimension(n)
        for a in self.params:
            check_probability(a, experiment.param)
        if self.name == 'clt' and 0.0 in self.params:
            raise ValidationError('clt is undefined at alpha=0')
        if self.max_steps is not None and self.max_steps < 0:
            raise ValidationError(f'max_steps must be nonnegative, got {self.max_steps}')
        unknown = set(self.checks) - set(experiment.check_keys)
        if unknown:
            raise ValidationError(f'Unknown acceptance keys for {self.name}: {", ".join(sorted(unknown))}')

    @property
    def seed(self) -> Seed:
        return DEFAULT_SEED if self.master_seed is None else self.master_seed

    def grid(self) -> list[tuple[int, int, float]]:
        """(repetition, n, parameter) of every cell, in trial order."""
        return [(rep, n, a) for rep in range(self.meta_repetitions) for n in self.n_values for a in self.params]

    def as_dict(self) -> dict:
        return {
            'name': self.name,
            'n': list(self.n_values),
            EXPERIMENTS[self.name].param: list(self.params),
            'trials': self.trials,
            'master_seed': self.seed,
            'max_steps': self.max_steps,
            'meta_repetitions': self.meta_repetitions,
            **dict(self.checks),
        }


@dataclasses.dataclass(frozen=True)
class TrialRecord:
    experiment: str
    n: int
    alpha: float  # p for the percolation experiments
    trial: int
    seed: Seed
    observables: Observables


@dataclasses.dataclass(frozen=True)
class CheckOutcome:
    name: str
    passed: bool
    detail: str


@dataclasses.dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    records: list[TrialRecord]
    cells: list[Cell]
    extra: dict
    checks: list[CheckOutcome]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


type Kernel = Callable[[int, float, Seed, ExperimentConfig], Observables]
type CellSummary = Callable[[list[TrialRecord], int, float], Cell]
type Checker = Callable[[ExperimentConfig, list[Cell], dict], list[CheckOutcome]]


@dataclasses.dataclass(frozen=True)
class Experiment:
    name: str
    observables: tuple[str, ...]
    kernel: Kernel
    summarize_cell: CellSummary
    check: Checker
    check_keys: tuple[str, ...]
    param: str = 'alpha'
    extra: Callable[[ExperimentConfig], dict] | None = None


def column(records: Sequence[TrialRecord], key: str) -> list:
    return [r.observables[key] for r in records]


def stat_fields(s: SummaryStats) -> Cell:
    return {k: v for k, v in s.as_dict().items() if v is not None}


def fraction(flags: Sequence[int]) -> float:
    return math.fsum(flags) / len(flags)


def cell_label(cell: Cell) -> str:
    return f'rep={cell["rep"]} n={cell["n"]} {cell["param"]}={cell["alpha"]}'


def per_cell(name: str, cells: list[Cell], ok: Callable[[Cell], bool], show: Callable[[Cell], str]) -> CheckOutcome:
    if not cells:
        return CheckOutcome(name, False, 'no cell of the grid is covered by this check')
    failing = [c for c in cells if not ok(c)]
    detail = f'{len(cells) - len(failing)}/{len(cells)} cells pass'
    if failing:
        detail += f'; first failure {cell_label(failing[0])}: {show(failing[0])}'
    return CheckOutcome(name, not failing, detail)


def fit_fields(fit: PoissonFit | None) -> Cell:
    if fit is None:
        return {}
    return {'chi_square': fit.statistic, 'chi_square_dof': fit.dof}


def try_poisson_fit(counts: Sequence[int], lam: float) -> PoissonFit | None:
    try:
        return poisson_fit(counts, lam)
    except ValidationError as e:
        log.info('no Poisson fit: %s', e)
        return None


def poisson_check(config: ExperimentConfig, cells: list[Cell]) -> list[CheckOutcome]:
    q = config.checks.get('poisson_quantile')
    if q is None:
        return []
    fitted = [c for c in cells if 'chi_square' in c]
    return [
        per_cell(
            'poisson_quantile',
            fitted,
            lambda c: c['chi_square'] < sps.chi2.ppf(q, c['chi_square_dof']),
            lambda c: f'chi-square {c["chi_square"]:.3f} >= {sps.chi2.ppf(q, c["chi_square_dof"]):.3f}',
        ),
    ]


def range_checks(config: ExperimentConfig, cells: list[Cell], field: str, low_key: str, high_key: str) -> list[CheckOutcome]:
    out = []
    if (low := config.checks.get(low_key)) is not None:
        out.append(per_cell(low_key, cells, lambda c: c[field] >= low, lambda c: f'{field} {c[field]:.4g} < {low}'))
    if (high := config.checks.get(high_key)) is not None:
        out.append(per_cell(high_key, cells, lambda c: c[field] <= high, lambda c: f'{field} {c[field]:.4g} > {high}'))
    return out


def by_series(cells: list[Cell]) -> dict[tuple, list[Cell]]:
    """Cells of each (repetition, parameter) series, ordered by n."""
    series = defaultdict(list)
    for c in cells:
        series[c['rep'], c['alpha']].append(c)
    return {k: sorted(v, key=lambda c: c['n']) for k, v in series.items()}


# mean-pne


def pne_kernel(n: int, alpha: float, seed: Seed, config: ExperimentConfig) -> Observables:
    return {'pne_count': pne_count(sample_marks(n, alpha, seed))}


def mean_pne_cell(records: list[TrialRecord], n: int, alpha: float) -> Cell:
    s = summarize(column(records, 'pne_count'))
    expected = mean_pne(n, alpha)
    return {**stat_fields(s), 'expected': expected, 'expected_sd': math.sqrt(var_pne(n, alpha)), 'inside': s.contains(expected)}


def mean_pne_checks(config: ExperimentConfig, cells: list[Cell], extra: dict) -> list[CheckOutcome]:
    width = config.checks.get('mean_within_se')
    if width is None:
        return []
    return [
        per_cell(
            'mean_within_se',
            cells,
            lambda c: abs(c['mean'] - c['expected']) <= width * c['se'] + 1e-9 * c['expected'],
            lambda c: f'mean {c["mean"]:.4g} vs {c["expected"]:.4g} with se {c["se"]:.3g}',
        ),
    ]


# clt


def clt_kernel(n: int, alpha: float, seed: Seed, config: ExperimentConfig) -> Observables:
    count = pne_count(sample_marks(n, alpha, seed))
    return {'pne_count': count, 'clt_stat': clt_statistic(count, n, alpha)}


def clt_cell(records: list[TrialRecord], n: int, alpha: float) -> Cell:
    return stat_fields(summarize(column(records, 'clt_stat'), cdf=normal_cdf))


def clt_checks(config: ExperimentConfig, cells: list[Cell], extra: dict) -> list[CheckOutcome]:
    out = []
    if (limit := config.checks.get('max_ks')) is not None:
        out.append(per_cell('max_ks', cells, lambda c: c['ks'] <= limit, lambda c: f'ks {c["ks"]:.4f} > {limit}'))
    if config.checks.get('ks_decreasing'):
        mean_ks: dict[float, dict[int, list[float]]] = defaultdict(lambda: defaultdict(list))
        for c in cells:
            mean_ks[c['alpha']][c['n']].append(c['ks'])
        passed, parts = True, []
        for alpha, per_n in sorted(mean_ks.items()):
            means = [math.fsum(v) / len(v) for _, v in sorted(per_n.items())]
            passed &= len(means) > 1 and all(b < a for a, b in zip(means, means[1:], strict=False))
            parts.append(f'alpha={alpha}: ' + ' > '.join(f'{m:.4f}' for m in means))
        out.append(CheckOutcome('ks_decreasing', passed, '; '.join(parts)))
    return out


# spne


def spne_kernel(n: int, alpha: float, seed: Seed, config: ExperimentConfig) -> Observables:
    return {'spne_count': spne_count(sample_marks(n, alpha, seed))}


def spne_cell(records: list[TrialRecord], n: int, alpha: float) -> Cell:
    counts = column(records, 'spne_count')
    present = sum(1 for c in counts if c >= 1)
    cell = {
        **stat_fields(summarize(counts)),
        'expected': mean_spne(n, alpha),
        'present_count': present,
        'present_fraction': present / len(counts),
        'markov_bound': markov_spne_bound(n, alpha),
    }
    if alpha == 0.0:
        cell |= fit_fields(try_poisson_fit(counts, 1.0))
    return cell


def spne_checks(config: ExperimentConfig, cells: list[Cell], extra: dict) -> list[CheckOutcome]:
    untied = [c for c in cells if c['alpha'] == 0.0]
    out = range_checks(config, untied, 'mean', 'spne_mean_low', 'spne_mean_high')
    out += poisson_check(config, untied)
    if (limit := config.checks.get('max_spne_present')) is not None:
        tied = [c for c in cells if c['alpha'] > 0.0]
        out.append(per_cell('max_spne_present', tied, lambda c: c['present_count'] <= limit, lambda c: f'{c["present_count"]} trials with a strict equilibrium'))
    return out


# isolated


def isolated_kernel(n: int, p: float, seed: Seed, config: ExperimentConfig) -> Observables:
    result = components(sample_bond(n, p, seed))
    return {
        'isolated_count': result.isolated_count,
        'largest_size': result.largest_size,
        'nonlargest_singletons': int(nonlargest_all_singletons(result)),
    }


def isolated_cell(records: list[TrialRecord], n: int, p: float) -> Cell:
    counts = column(records, 'isolated_count')
    expected = (2.0 * (1.0 - p)) ** n
    cell = {
        **stat_fields(summarize(counts)),
        'expected': expected,
        'largest_mean': math.fsum(column(records, 'largest_size')) / len(records),
        'singletons_fraction': fraction(column(records, 'nonlargest_singletons')),
    }
    if expected > 0:
        cell |= fit_fields(try_poisson_fit(counts, expected))
    return cell


def isolated_checks(config: ExperimentConfig, cells: list[Cell], extra: dict) -> list[CheckOutcome]:
    out = range_checks(config, cells, 'mean', 'isolated_mean_low', 'isolated_mean_high')
    out += range_checks(config, cells, 'variance', 'isolated_var_low', 'isolated_var_high')
    if (low := config.checks.get('min_singletons_fraction')) is not None:
        out.append(per_cell('min_singletons_fraction', cells, lambda c: c['singletons_fraction'] >= low, lambda c: f'fraction {c["singletons_fraction"]:.3f}'))
    return out + poisson_check(config, cells)


# coupling


def coupling_kernel(n: int, alpha: float, seed: Seed, config: ExperimentConfig) -> Observables:
    cube = sample_marks(n, alpha, seed)
    reachable = accessible_mask(cube, 0)
    cluster = cluster_mask(sample_bond(n, (1.0 - alpha) / 2.0, seed), 0)
    coupled = coupled_percolation(cube, 0, seed)
    match = coupled.explored == frozenset(np.flatnonzero(reachable).tolist()) and cluster_of(coupled.bond, 0) == coupled.explored
    return {
        'accessible_size': int(np.count_nonzero(reachable)),
        'cluster_size': int(np.count_nonzero(cluster)),
        'coupling_match': int(match),
    }


def coupling_cell(records: list[TrialRecord], n: int, alpha: float) -> Cell:
    accessible = column(records, 'accessible_size')
    clusters = column(records, 'cluster_size')
    return {
        'count': len(records),
        'accessible_mean': math.fsum(accessible) / len(records),
        'cluster_mean': math.fsum(clusters) / len(records),
        'ks': two_sample_ks(accessible, clusters),
        'matches': sum(column(records, 'coupling_match')),
    }


def coupling_extra(config: ExperimentConfig) -> dict:
    """Exact comparison of the two size laws on the 2-cube for every alpha of the grid."""
    gaps = []
    for alpha in sorted(set(config.params)):
        accessible = exact_accessible_size_distribution(2, alpha, 0)
        cluster = exact_cluster_size_distribution(2, (1.0 - alpha) / 2.0, 0)
        gap = max(abs(accessible.get(k, 0.0) - cluster.get(k, 0.0)) for k in accessible.keys() | cluster.keys())
        gaps.append({'alpha': alpha, 'exact_gap': gap})
    return {'exact_n2': gaps}


def coupling_checks(config: ExperimentConfig, cells: list[Cell], extra: dict) -> list[CheckOutcome]:
    out = []
    if (limit := config.checks.get('max_two_sample_ks')) is not None:
        out.append(per_cell('max_two_sample_ks', cells, lambda c: c['ks'] <= limit, lambda c: f'ks {c["ks"]:.4f} > {limit}'))
    if config.checks.get('require_coupling_match'):
        out.append(per_cell('require_coupling_match', cells, lambda c: c['matches'] == c['count'], lambda c: f'{c["count"] - c["matches"]} mismatches'))
    if (limit := config.checks.get('max_exact_gap')) is not None:
        worst = max(g['exact_gap'] for g in extra['exact_n2'])
        out.append(CheckOutcome('max_exact_gap', worst <= limit, f'largest atom gap {worst:.3g}'))
    return out


# coupling-marginal


def coupling_marginal_kernel(n: int, alpha: float, seed: Seed, config: ExperimentConfig) -> Observables:
    bond = coupled_percolation(sample_marks(n, alpha, seed), 0, seed).bond
    return {'open_count': int(bond.is_open.sum()), 'bond': ''.join('o' if b else 'x' for b in bond.is_open.ravel())}


def coupling_marginal_cell(records: list[TrialRecord], n: int, alpha: float) -> Cell:
    beta = (1.0 - alpha) / 2.0
    states = np.array([[ch == 'o' for ch in r.observables['bond']] for r in records], dtype=bool)
    t, e = states.shape
    freq = states.mean(axis=0)
    se = math.sqrt(beta * (1.0 - beta) / t)
    cell = {
        'count': t,
        'beta': beta,
        'min_edge_frequency': float(freq.min()),
        'max_edge_frequency': float(freq.max()),
        'max_edge_deviation': float(np.abs(freq - beta).max()),
    }
    if se > 0:
        cell['max_edge_se'] = cell['max_edge_deviation'] / se
        if e <= 4:
            codes = states.astype(np.int64) @ (1 << np.arange(e))
            observed = np.bincount(codes, minlength=1 << e)
            n_open = np.bitwise_count(np.arange(1 << e))
            expected = t * beta**n_open * (1.0 - beta) ** (e - n_open)
            cell['joint_chi_square'] = math.fsum(((observed - expected) ** 2 / expected).tolist())
            cell['joint_dof'] = (1 << e) - 1
    return cell


def coupling_marginal_checks(config: ExperimentConfig, cells: list[Cell], extra: dict) -> list[CheckOutcome]:
    out = []
    if (limit := config.checks.get('max_edge_se')) is not None:
        graded = [c for c in cells if 'max_edge_se' in c]
        out.append(per_cell('max_edge_se', graded, lambda c: c['max_edge_se'] <= limit, lambda c: f'{c["max_edge_se"]:.2f} standard errors off'))
    if (q := config.checks.get('joint_quantile')) is not None:
        joint = [c for c in cells if 'joint_chi_square' in c]
        out.append(
            per_cell(
                'joint_quantile',
                joint,
                lambda c: c['joint_chi_square'] < sps.chi2.ppf(q, c['joint_dof']),
                lambda c: f'chi-square {c["joint_chi_square"]:.3f} on {c["joint_dof"]} dof',
            ),
        )
    return out


# accessibility


def accessibility_kernel(n: int, alpha: float, seed: Seed, config: ExperimentConfig) -> Observables:
    cube = sample_marks(n, alpha, seed)
    pne = pne_mask(cube)
    unreachable = int(np.count_nonzero(pne & ~accessible_mask(cube, 0)))
    all_tie = all_tie_mask(cube)
    return {
        'pne_count': int(np.count_nonzero(pne)),
        'unreachable_pne_count': unreachable,
        'all_accessible': int(unreachable == 0),
        'all_tie_count': int(np.count_nonzero(all_tie)),
        'even_all_tie_count': int(np.count_nonzero(all_tie[vertices_of_parity(n, Parity.EVEN)])),
    }


def accessibility_cell(records: list[TrialRecord], n: int, alpha: float) -> Cell:
    unreachable = column(records, 'unreachable_pne_count')
    t = len(records)
    return {
        'count': t,
        'all_accessible_fraction': fraction(column(records, 'all_accessible')),
        'unreachable_fraction': sum(1 for u in unreachable if u > 0) / t,
        'unreachable_mean': math.fsum(unreachable) / t,
        'all_tie_mean': math.fsum(column(records, 'all_tie_count')) / t,
        'all_tie_expected': (2.0 * alpha) ** n,
        'even_all_tie_mean': math.fsum(column(records, 'even_all_tie_count')) / t,
        'even_all_tie_expected': (1 << (n - 1)) * alpha**n,
    }


def accessibility_checks(config: ExperimentConfig, cells: list[Cell], extra: dict) -> list[CheckOutcome]:
    out = []
    if (low := config.checks.get('min_all_accessible_below_half')) is not None:
        below = [c for c in cells if c['alpha'] < 0.5]
        out.append(per_cell('min_all_accessible_below_half', below, lambda c: c['all_accessible_fraction'] >= low, lambda c: f'fraction {c["all_accessible_fraction"]:.3f}'))
    for key, select in (('min_unreachable_above_half', lambda a: a > 0.5), ('min_unreachable_at_half', lambda a: a == 0.5)):
        if (low := config.checks.get(key)) is not None:
            chosen = [c for c in cells if select(c['alpha'])]
            out.append(per_cell(key, chosen, lambda c, low=low: c['unreachable_fraction'] >= low, lambda c: f'fraction {c["unreachable_fraction"]:.3f}'))
    return out


# brd-steps


def brd_kernel(n: int, alpha: float, seed: Seed, config: ExperimentConfig) -> Observables:
    cube = sample_marks(n, alpha, seed)
    start = int(stream(seed, 'start').integers(1 << n))
    max_steps = default_max_steps(n) if config.max_steps is None else config.max_steps
    trace = brd_run(cube, start, seed, max_steps, keep_path=False)
    return {'start': start, 'brd_steps': trace.steps, 'brd_converged': int(trace.converged)}


def brd_cell(records: list[TrialRecord], n: int, alpha: float) -> Cell:
    steps = [r.observables['brd_steps'] for r in records if r.observables['brd_converged']]
    return {
        'count': len(records),
        'converged_fraction': fraction(column(records, 'brd_converged')),
        'median_steps': median(steps),
        'mean_steps': math.fsum(steps) / len(steps) if steps else None,
    }


def brd_checks(config: ExperimentConfig, cells: list[Cell], extra: dict) -> list[CheckOutcome]:
    out = []
    if (low := config.checks.get('min_converged_fraction')) is not None:
        out.append(per_cell('min_converged_fraction', cells, lambda c: c['converged_fraction'] >= low, lambda c: f'fraction {c["converged_fraction"]:.3f}'))
    series = by_series(cells)
    if config.checks.get('median_nondecreasing'):
        passed, parts = True, []
        for (rep, alpha), run in series.items():
            medians = [c['median_steps'] for c in run]
            passed &= None not in medians and all(b >= a for a, b in zip(medians, medians[1:], strict=False))
            parts.append(f'rep={rep} alpha={alpha}: {medians}')
        out.append(CheckOutcome('median_nondecreasing', passed, '; '.join(parts)))
    if (limit := config.checks.get('max_median_ratio')) is not None:
        passed, parts = True, []
        for (rep, alpha), run in series.items():
            first, last = run[0]['median_steps'], run[-1]['median_steps']
            ratio = None if not first or last is None else last / first
            passed &= len(run) > 1 and ratio is not None and ratio <= limit
            parts.append(f'rep={rep} alpha={alpha}: n={run[0]["n"]}..{run[-1]["n"]} ratio {ratio}')
        out.append(CheckOutcome('max_median_ratio', passed, '; '.join(parts)))
    return out


EXPERIMENTS: dict[str, Experiment] = {
    e.name: e
    for e in (
        Experiment('mean-pne', ('pne_count',), pne_kernel, mean_pne_cell, mean_pne_checks, ('mean_within_se',)),
        Experiment('clt', ('pne_count', 'clt_stat'), clt_kernel, clt_cell, clt_checks, ('max_ks', 'ks_decreasing')),
        Experiment('spne', ('spne_count',), spne_kernel, spne_cell, spne_checks, ('spne_mean_low', 'spne_mean_high', 'poisson_quantile', 'max_spne_present')),
        Experiment(
            'isolated',
            ('isolated_count', 'largest_size', 'nonlargest_singletons'),
            isolated_kernel,
            isolated_cell,
            isolated_checks,
            ('isolated_mean_low', 'isolated_mean_high', 'isolated_var_low', 'isolated_var_high', 'min_singletons_fraction', 'poisson_quantile'),
            param='p',
        ),
        Experiment(
            'coupling',
            ('accessible_size', 'cluster_size', 'coupling_match'),
            coupling_kernel,
            coupling_cell,
            coupling_checks,
            ('max_two_sample_ks', 'require_coupling_match', 'max_exact_gap'),
            extra=coupling_extra,
        ),
        Experiment('coupling-marginal', ('open_count', 'bond'), coupling_marginal_kernel, coupling_marginal_cell, coupling_marginal_checks, ('max_edge_se', 'joint_quantile')),
        Experiment(
            'accessibility',
            ('pne_count', 'unreachable_pne_count', 'all_accessible', 'all_tie_count', 'even_all_tie_count'),
            accessibility_kernel,
            accessibility_cell,
            accessibility_checks,
            ('min_all_accessible_below_half', 'min_unreachable_above_half', 'min_unreachable_at_half'),
        ),
        Experiment(
            'brd-steps',
            ('start', 'brd_steps', 'brd_converged'),
            brd_kernel,
            brd_cell,
            brd_checks,
            ('min_converged_fraction', 'median_nondecreasing', 'max_median_ratio'),
        ),
    )
}

CHECK_KEYS = {name: e.check_keys for name, e in EXPERIMENTS.items()}


def trial_seeds(config: ExperimentConfig) -> list[tuple[int, int, float, Seed]]:
    """(trial, n, parameter, seed) of every trial in emission order."""
    jobs = []
    for _, n, a in config.grid():
        for _ in range(config.trials):
            t = len(jobs)
            jobs.append((t, n, a, derive_seed(config.seed, config.name, t)))
    return jobs


def run_trials(config: ExperimentConfig, kernel: Kernel, threads: int = 1, progress: bool = False) -> list[TrialRecord]:
    """Run every trial of the grid; records come back in trial order whatever the thread count."""

    def one(job: tuple[int, int, float, Seed]) -> TrialRecord:
        t, n, a, seed = job
        return TrialRecord(config.name, n, a, t, seed, kernel(n, a, seed, config))

    jobs = trial_seeds(config)
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = pool.map(one, jobs)
        return list(tqdm(results, total=len(jobs), desc=config.name, file=sys.stderr, disable=not progress, leave=False))


def run_experiment(config: ExperimentConfig, threads: int = 1, progress: bool = False) -> ExperimentResult:
    experiment = EXPERIMENTS[config.name]
    log.info('%s: %d cells x %d trials, master seed %d', config.name, len(config.grid()), config.trials, config.seed)
    records = run_trials(config, experiment.kernel, threads, progress)

    cells = []
    for k, (rep, n, a) in enumerate(config.grid()):
        chunk = records[k * config.trials : (k + 1) * config.trials]
        cell = {'rep': rep, 'n': n, 'alpha': a, 'param': experiment.param, **experiment.summarize_cell(chunk, n, a)}
        log.info('%s %s: %s', config.name, cell_label(cell), {key: v for key, v in cell.items() if key not in ('rep', 'n', 'alpha', 'param')})
        cells.append(cell)

    extra = experiment.extra(config) if experiment.extra else {}
    checks = experiment.check(config, cells, extra)
    for c in checks:
        log.log(logging.INFO if c.passed else logging.WARNING, '%s check %s %s: %s', config.name, c.name, 'passed' if c.passed else 'FAILED', c.detail)
    return ExperimentResult(config, records, cells, extra, checks)


def exp_mean_pne(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    return run_experiment(dataclasses.replace(config, name='mean-pne'), threads)


def exp_clt(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    return run_experiment(dataclasses.replace(config, name='clt'), threads)


def exp_spne(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    return run_experiment(dataclasses.replace(config, name='spne'), threads)


def exp_isolated(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    return run_experiment(dataclasses.replace(config, name='isolated'), threads)


def exp_coupling(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    return run_experiment(dataclasses.replace(config, name='coupling'), threads)


def exp_coupling_marginal(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    return run_experiment(dataclasses.replace(config, name='coupling-marginal'), threads)


def exp_accessibility(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    return run_experiment(dataclasses.replace(config, name='accessibility'), threads)


def exp_brd(config: ExperimentConfig, threads: int = 1) -> ExperimentResult:
    return run_experiment(dataclasses.replace(config, name='brd-steps'), threads)


# config files


def as_tuple(key: str, value: object, kind: type) -> tuple:
    values = value if isinstance(value, list) else [value]
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or (kind is int and not isinstance(v, int)):
            raise ValidationError(f'{key} must be {kind.__name__} or a list of them, got {v!r}')
        out.append(kind(v))
    return tuple(out)


def as_int(key: str, value: object) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f'{key} must be an integer, got {value!r}')
    return value


def config_from_mapping(data: Mapping[str, object]) -> ExperimentConfig:
    name = data.get('name')
    if name not in EXPERIMENTS:
        raise ValidationError(f'Unknown experiment {name!r}, expected one of {", ".join(EXPERIMENTS)}')
    experiment = EXPERIMENTS[name]
    unknown = set(data) - set(BASE_KEYS) - set(experiment.check_keys)
    if unknown:
        raise ValidationError(f'Unknown config keys for {name}: {", ".join(sorted(unknown))}')
    for key, value in data.items():
        if isinstance(value, dict) or (isinstance(value, list) and any(isinstance(v, (dict, list)) for v in value)):
            raise ValidationError(f'config must be flat; {key} is nested')
    other = 'alpha' if experiment.param == 'p' else 'p'
    if other in data:
        raise ValidationError(f'{name} takes {experiment.param}, not {other}')
    for key in ('n', experiment.param, 'trials'):
        if key not in data:
            raise ValidationError(f'{name} config is missing {key}')

    checks = {k: data[k] for k in experiment.check_keys if k in data}
    return ExperimentConfig(
        name=name,
        n_values=as_tuple('n', data['n'], int),
        params=as_tuple(experiment.param, data[experiment.param], float),
        trials=as_int('trials', data['trials']),
        master_seed=None if data.get('master_seed') is None else as_int('master_seed', data['master_seed']),
        max_steps=None if data.get('max_steps') is None else as_int('max_steps', data['max_steps']),
        output=None if data.get('output') is None else str(data['output']),
        meta_repetitions=as_int('meta_repetitions', data.get('meta_repetitions', 1)),
        checks=checks,
    )


def parse_config(text: str, name: str | None = None) -> ExperimentConfig:
    """Read a flat YAML experiment config; name, when given, replaces the config's own."""
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        mark = e.problem_mark
        raise ParseError(str(e.problem), mark.line + 1 if mark else 1, mark.column + 1 if mark else 1) from e
    except yaml.YAMLError as e:
        raise ParseError(str(e), 1) from e
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ValidationError('experiment config must be a mapping of key: value lines')
    if name is not None:
        data['name'] = name
    return config_from_mapping(data)


def load_config(file_path: str | Path, name: str | None = None) -> ExperimentConfig:
    return parse_config(Path(file_path).read_text(), name)


# output


def records_csv(result: ExperimentResult) -> str:
    keys = EXPERIMENTS[result.config.name].observables
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator='\n')
    writer.writerow([*RECORD_COLUMNS, *keys])
    for r in result.records:
        writer.writerow([r.experiment, r.n, r.alpha, r.trial, r.seed, *(r.observables[k] for k in keys)])
    return buf.getvalue()


def plain(value: object) -> object:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, dict):
        return {str(k): plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(v) for v in value]
    return value


def summary_json(result: ExperimentResult) -> str:
    document = {
        'format': FORMAT_VERSION,
        'experiment': result.config.name,
        'config': result.config.as_dict(),
        'cells': result.cells,
        'extra': result.extra,
        'checks': [dataclasses.asdict(c) for c in result.checks],
        'passed': result.passed,
    }
    return json.dumps(plain(document), sort_keys=True, indent=2) + '\n'


def write_outputs(result: ExperimentResult, output: str | Path) -> tuple[Path, Path]:
    """Write <output>.csv and <output>.json; returns both paths."""
    base = Path(output)
    base.parent.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = base.with_name(base.name + '.csv'), base.with_name(base.name + '.json')
    csv_path.write_text(records_csv(result))
    json_path.write_text(summary_json(result))
    return csv_path, json_path


TABLE_SKIP = ('rep', 'param', 'low', 'high')


def format_table(result: ExperimentResult) -> str:
    cells = result.cells
    keys = [k for k in cells[0] if k not in TABLE_SKIP] if cells else []
    if result.config.meta_repetitions > 1:
        keys.insert(0, 'rep')
    param = EXPERIMENTS[result.config.name].param
    header = [param if k == 'alpha' else k for k in keys]
    rows = [[c.get(k) for k in keys] for c in cells]
    text = tabulate(rows, headers=header, floatfmt='.4g')
    if result.checks:
        checks = [[c.name, 'pass' if c.passed else 'FAIL', c.detail] for c in result.checks]
        text += '\n\n' + tabulate(checks, headers=['check', 'result', 'detail'])
    return text
