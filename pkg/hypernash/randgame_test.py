import math

import numpy as np
import pytest
from scipy import stats

from hypernash import DimensionError, ParseError, ValidationError
from hypernash.hypercube import edge_count
from hypernash.randgame import (
    DiscreteDistribution,
    Mark,
    OrientedCube,
    PayoffTable,
    TieParameter,
    all_mark_configurations,
    alpha_of,
    dump_cube,
    figure_game,
    load_cube,
    marks_of,
    sample_marks,
    sample_payoffs,
)

FIGURE_MARKS = [
    [2, 1, 2, 1],
    [2, 1, 2, 2],
    [2, 1, 2, 2],
]


def test_alpha_of_two_point_law() -> None:
    t = alpha_of(DiscreteDistribution.parse('uniform:-1,1'))
    assert t.alpha == pytest.approx(0.5)
    assert t.beta == pytest.approx(0.25)


def test_alpha_of_single_atom() -> None:
    assert alpha_of(DiscreteDistribution((0.0,), (1.0,))).alpha == 1.0


def test_alpha_of_four_atoms() -> None:
    assert alpha_of(DiscreteDistribution.uniform([1, 2, 3, 4])).alpha == pytest.approx(0.25)


def test_tie_parameter_identity() -> None:
    for a in (0.0, 0.3, 1.0):
        t = TieParameter(a)
        assert t.alpha + 2 * t.beta == pytest.approx(1.0)


@pytest.mark.parametrize(
    'bad',
    [
        lambda: DiscreteDistribution((1.0, 0.0), (0.5, 0.5)),
        lambda: DiscreteDistribution((0.0, 0.0), (0.5, 0.5)),
        lambda: DiscreteDistribution((0.0, 1.0), (0.6, 0.6)),
        lambda: DiscreteDistribution((0.0, 1.0), (1.5, -0.5)),
        lambda: DiscreteDistribution.parse('normal:0,1'),
        lambda: DiscreteDistribution.parse('atoms:1@x'),
        lambda: TieParameter(1.5),
    ],
)
def test_invalid_distributions_are_rejected(bad) -> None:  # noqa: ANN001
    with pytest.raises(ValidationError):
        bad()


def test_parse_atoms_sorts_support() -> None:
    d = DiscreteDistribution.parse('atoms:1@0.25,-1@0.25,0@0.5')
    assert d.support == (-1.0, 0.0, 1.0)
    assert d.probs == (0.25, 0.5, 0.25)


def test_sample_marks_extremes() -> None:
    assert np.all(sample_marks(6, 1.0, 3).marks == Mark.TIE)
    assert np.all(sample_marks(6, 1.0, 4).marks == Mark.TIE)
    assert not np.any(sample_marks(6, 0.0, 3).marks == Mark.TIE)


def test_sample_marks_tie_frequency() -> None:
    cube = sample_marks(14, 0.5, 11)
    k = cube.marks.size
    assert k == edge_count(14)
    se = math.sqrt(0.25 / k)
    assert abs(np.mean(cube.marks == Mark.TIE) - 0.5) < 4 * se
    # the two orientations are equally likely
    assert abs(np.mean(cube.marks == Mark.TOWARD_ONE) - 0.25) < 4 * math.sqrt(0.25 * 0.75 / k)


def test_sample_marks_is_deterministic() -> None:
    a = sample_marks(8, 0.3, 99)
    b = sample_marks(8, 0.3, 99)
    c = sample_marks(8, 0.3, 100)
    assert np.array_equal(a.marks, b.marks)
    assert not np.array_equal(a.marks, c.marks)
    assert a.alpha == 0.3


def test_sample_payoffs_single_atom() -> None:
    table = sample_payoffs(4, DiscreteDistribution((2.5,), (1.0,)), 0)
    assert np.all(table.z == 2.5)


def test_sample_payoffs_support_and_frequencies() -> None:
    dist = DiscreteDistribution((-1.0, 0.0, 3.0), (0.2, 0.3, 0.5))
    table = sample_payoffs(13, dist, 5)
    assert set(np.unique(table.z)) <= set(dist.support)
    k = table.z.size
    for value, p in zip(dist.support, dist.probs, strict=True):
        assert abs(np.mean(table.z == value) - p) < 4 * math.sqrt(p * (1 - p) / k)
    assert set(np.unique(sample_payoffs(1, DiscreteDistribution.parse('uniform:-1,1'), 1).z)) <= {-1.0, 1.0}


def test_marks_of_constant_table_is_all_ties() -> None:
    table = PayoffTable(3, np.zeros((3, 8)))
    assert np.all(marks_of(table).marks == Mark.TIE)


def test_marks_of_figure_game() -> None:
    cube = marks_of(figure_game())
    assert cube.marks.tolist() == FIGURE_MARKS
    assert cube.alpha is None
    # the edge between (1,1,1) and (1,1,0) points toward (1,1,0)
    assert cube.mark(0b111, 2) == Mark.TOWARD_ZERO


def test_marks_of_is_invariant_under_increasing_relabeling() -> None:
    dist = DiscreteDistribution.uniform([-2, -1, 0, 1, 2])
    table = sample_payoffs(6, dist, 8)
    relabeled = PayoffTable(6, np.exp(table.z) * 3 + 1)
    assert np.array_equal(marks_of(table).marks, marks_of(relabeled).marks)


def edge_mark_chi_square(cubes: list[OrientedCube], alpha: float) -> tuple[float, int]:
    beta = (1 - alpha) / 2
    stacked = np.stack([c.marks.ravel() for c in cubes])
    total, dof = 0.0, 0
    for col in stacked.T:
        observed = np.bincount(col, minlength=3)
        expected = np.array([alpha, beta, beta]) * len(col)
        total += stats.chisquare(observed, expected).statistic
        dof += 2
    return total, dof


@pytest.mark.parametrize('dist_text', ['uniform:-1,1', 'atoms:0@0.1,1@0.6,2@0.3'])
def test_payoff_pipeline_matches_direct_mark_law(dist_text: str) -> None:
    dist = DiscreteDistribution.parse(dist_text)
    alpha = alpha_of(dist).alpha
    via_payoffs = [marks_of(sample_payoffs(3, dist, s)) for s in range(4000)]
    direct = [sample_marks(3, alpha, s) for s in range(4000)]
    for cubes in (via_payoffs, direct):
        statistic, dof = edge_mark_chi_square(cubes, alpha)
        assert statistic < stats.chi2.ppf(0.9999, dof)


def test_adjacent_edge_marks_are_independent() -> None:
    dist = DiscreteDistribution.parse('uniform:-1,1')
    table = np.zeros((3, 3))
    for s in range(4000):
        cube = marks_of(sample_payoffs(2, dist, s))
        # both edges at vertex 0
        table[cube.mark(0, 0), cube.mark(0, 1)] += 1
    assert stats.chi2_contingency(table).pvalue > 1e-4


def test_outgoing_and_ties_masks() -> None:
    cube = marks_of(figure_game())
    # (1,1,1) can improve through players 2 and 3
    assert cube.outgoing[0b111] == 0b110
    assert cube.outgoing[0b000] == 0
    assert cube.outgoing[0b011] == 0
    assert not np.any(cube.ties)
    tie_cube = OrientedCube(2, np.zeros((2, 2)), 1.0)
    assert np.all(tie_cube.ties == 0b11)
    assert np.all(tie_cube.tie_degrees == 2)


def test_cube_validation() -> None:
    with pytest.raises(ValidationError):
        OrientedCube(3, np.zeros((3, 3)))
    with pytest.raises(ValidationError):
        OrientedCube(1, np.full((1, 1), 7))
    with pytest.raises(DimensionError):
        OrientedCube(0, np.zeros((0, 0)))


def test_cube_marks_are_read_only() -> None:
    cube = sample_marks(3, 0.5, 0)
    with pytest.raises(ValueError):
        cube.marks[0, 0] = 1


def test_all_mark_configurations_weights_sum_to_one() -> None:
    configs, weights = all_mark_configurations(2, 0.5)
    assert configs.shape == (81, 2, 2)
    assert weights.sum() == pytest.approx(1.0, abs=1e-12)
    assert len({c.tobytes() for c in configs}) == 81


def test_dump_and_load_cube_roundtrip() -> None:
    for cube in (sample_marks(5, 0.4, 2), marks_of(figure_game())):
        again = load_cube(dump_cube(cube))
        assert again.n == cube.n
        assert again.alpha == cube.alpha
        assert np.array_equal(again.marks, cube.marks)


def test_dump_cube_format() -> None:
    assert dump_cube(marks_of(figure_game())) == 'hrg 1\nn=3 alpha=unknown\n<><>\n<><<\n<><<\n'
    assert dump_cube(OrientedCube(1, np.zeros((1, 1)), 1.0)) == 'hrg 1\nn=1 alpha=1.0\n=\n'


@pytest.mark.parametrize(
    ('text', 'line', 'column'),
    [
        ('hrx 1\nn=1 alpha=0.5\n=\n', 1, 1),
        ('hrg 1\nn=1 beta=0.5\n=\n', 2, 1),
        ('hrg 1\nn=2 alpha=0.5\n==\n=?\n', 4, 2),
        ('hrg 1\nn=2 alpha=0.5\n==\n=\n', 4, 2),
        ('hrg 1\nn=2 alpha=0.5\n==\n', 4, 1),
        ('hrg 1\nn=1 alpha=0.5\n=', 3, 1),
    ],
)
def test_load_cube_reports_line_and_column(text: str, line: int, column: int) -> None:
    with pytest.raises(ParseError) as info:
        load_cube(text)
    assert (info.value.line, info.value.column) == (line, column)
