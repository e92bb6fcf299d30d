import json
import logging
from collections.abc import Iterator
from pathlib import Path

import pytest

from hypernash import MAX_DIMENSION, SEED_ENV_VAR
from hypernash.cli import EXIT_CHECKS_FAILED, EXIT_IO, EXIT_OK, EXIT_USAGE, resolve_seed, run
from hypernash.hypercube import set_max_dimension
from hypernash.percolation import load_bond_from_file
from hypernash.randgame import dump_cube, figure_game, load_cube_from_file, marks_of


@pytest.fixture(autouse=True)
def clean_process(monkeypatch: pytest.MonkeyPatch) -> Iterator[None]:
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)
    yield
    set_max_dimension(MAX_DIMENSION)
    root = logging.getLogger()
    for handler in root.handlers[:]:
        root.removeHandler(handler)


@pytest.fixture
def figure(tmp_path: Path) -> Path:
    path = tmp_path / 'figure.hrg'
    path.write_text(dump_cube(marks_of(figure_game())))
    return path


@pytest.fixture
def all_tie(tmp_path: Path) -> Path:
    path = tmp_path / 'ties.hrg'
    path.write_text('hrg 1\nn=2 alpha=1.0\n==\n==\n')
    return path


def test_gen_digest_is_deterministic(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    assert run(['gen', '--n', '3', '--alpha', '0.5', '--seed', '7', '--out', str(tmp_path / 'a.hrg')]) == EXIT_OK
    assert run(['gen', '--n', '3', '--alpha', '0.5', '--seed', '7', '--out', str(tmp_path / 'b.hrg')]) == EXIT_OK
    first, second = capsys.readouterr().out.splitlines()
    assert first.split()[0] == second.split()[0]
    assert (tmp_path / 'a.hrg').read_text() == (tmp_path / 'b.hrg').read_text()


def test_gen_full_ties(tmp_path: Path) -> None:
    out = tmp_path / 'one.hrg'
    assert run(['gen', '--n', '1', '--alpha', '1', '--out', str(out)]) == EXIT_OK
    assert out.read_text().splitlines()[2] == '='


def test_gen_from_payoff_law(tmp_path: Path) -> None:
    out = tmp_path / 'payoffs.hrg'
    assert run(['gen', '--n', '4', '--dist', 'atoms:0@0.5,1@0.5', '--out', str(out)]) == EXIT_OK
    assert load_cube_from_file(out).alpha == 0.5


def test_gen_to_stdout(capsys: pytest.CaptureFixture[str]) -> None:
    assert run(['gen', '--n', '2', '--alpha', '0.0']) == EXIT_OK
    captured = capsys.readouterr()
    assert captured.out.startswith('hrg 1\nn=2 alpha=0.0\n')
    assert captured.err.startswith('sha256=')


def test_gen_needs_a_law(capsys: pytest.CaptureFixture[str]) -> None:
    with pytest.raises(SystemExit) as info:
        run(['gen', '--n', '3'])
    assert info.value.code == EXIT_USAGE


def test_analyze_all_ties(all_tie: Path, capsys: pytest.CaptureFixture[str]) -> None:
    assert run(['analyze', str(all_tie)]) == EXIT_OK
    out = capsys.readouterr().out
    assert 'pne_count=4 spne_count=0' in out
    assert 'all_tie_count=4' in out


def test_analyze_figure_json(figure: Path, capsys: pytest.CaptureFixture[str]) -> None:
    assert run(['analyze', str(figure), '--format', 'json']) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc['pne'] == [0, 3]
    assert doc['pne_count'] == 2
    assert doc['alpha'] == 'unknown'


def test_brd_from_equilibrium(figure: Path, capsys: pytest.CaptureFixture[str]) -> None:
    assert run(['brd', str(figure), '--start', '3']) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out[0] == 'converged steps=0 final=3'
    assert out[1] == 'path 3'


def test_brd_single_edge(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    path = tmp_path / 'edge.hrg'
    path.write_text('hrg 1\nn=1 alpha=0.0\n>\n')
    assert run(['brd', str(path)]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert out == ['converged steps=1 final=1', 'path 0 1']


def test_brd_start_out_of_range(figure: Path, capsys: pytest.CaptureFixture[str]) -> None:
    assert run(['brd', str(figure), '--start', '8']) == EXIT_USAGE
    assert 'error:' in capsys.readouterr().err


def test_access_figure(figure: Path, capsys: pytest.CaptureFixture[str]) -> None:
    assert run(['access', str(figure), '--format', 'json']) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc['unreachable_pne'] == [3]
    assert doc['trap_count'] == 0


def test_perc_sample_and_write(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    out = tmp_path / 'bond.hrp'
    assert run(['perc', '--n', '4', '--p', '1', '--out', str(out), '--format', 'json']) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc['component_count'] == 1
    assert doc['largest_size'] == 16
    assert load_bond_from_file(out).is_open.all()


def test_perc_of_instance(all_tie: Path, capsys: pytest.CaptureFixture[str]) -> None:
    assert run(['perc', '--instance', str(all_tie)]) == EXIT_OK
    out = capsys.readouterr().out
    assert 'p=derived' in out
    assert 'isolated_count=4' in out


def test_perc_needs_a_source(capsys: pytest.CaptureFixture[str]) -> None:
    assert run(['perc', '--n', '4']) == EXIT_USAGE


def test_missing_file_is_io_error(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    assert run(['analyze', str(tmp_path / 'absent.hrg')]) == EXIT_IO
    assert 'absent.hrg' in capsys.readouterr().err


def test_malformed_instance(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    path = tmp_path / 'bad.hrg'
    path.write_text('hrg 1\nn=1 alpha=0.5\n?\n')
    assert run(['analyze', str(path)]) == EXIT_USAGE
    assert 'unexpected character' in capsys.readouterr().err


def test_dimension_cap(tmp_path: Path) -> None:
    assert run(['gen', '--n', '5', '--alpha', '0.5', '--max-dimension', '4', '--out', str(tmp_path / 'x.hrg')]) == EXIT_USAGE
    assert run(['gen', '--n', '4', '--alpha', '0.5', '--max-dimension', '4', '--out', str(tmp_path / 'x.hrg')]) == EXIT_OK


def test_seed_precedence(monkeypatch: pytest.MonkeyPatch) -> None:
    assert resolve_seed(None) == 0
    assert resolve_seed(None, 5) == 5
    monkeypatch.setenv(SEED_ENV_VAR, '9')
    assert resolve_seed(None, 5) == 9
    assert resolve_seed(3, 5) == 3


def test_env_seed_drives_gen(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv(SEED_ENV_VAR, '41')
    run(['gen', '--n', '5', '--alpha', '0.5', '--out', str(tmp_path / 'env.hrg')])
    run(['gen', '--n', '5', '--alpha', '0.5', '--seed', '41', '--out', str(tmp_path / 'flag.hrg')])
    assert (tmp_path / 'env.hrg').read_text() == (tmp_path / 'flag.hrg').read_text()


def test_bad_env_seed(monkeypatch: pytest.MonkeyPatch, capsys: pytest.CaptureFixture[str]) -> None:
    monkeypatch.setenv(SEED_ENV_VAR, 'seven')
    assert run(['gen', '--n', '2', '--alpha', '0.5']) == EXIT_USAGE


def test_experiment_passes_and_writes(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    config = tmp_path / 'mean.yaml'
    config.write_text('name: mean-pne\nn: [2, 3]\nalpha: 1.0\ntrials: 4\nmean_within_se: 4\n')
    assert run(['experiment', str(config), '--output', str(tmp_path / 'out' / 'mean'), '--threads', '2']) == EXIT_OK
    assert 'mean_within_se' in capsys.readouterr().out
    doc = json.loads((tmp_path / 'out' / 'mean.json').read_text())
    assert doc['passed'] is True
    assert (tmp_path / 'out' / 'mean.csv').read_text().startswith('experiment,n,alpha,trial,seed,pne_count')


def test_experiment_failed_checks(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    config = tmp_path / 'strict.yaml'
    config.write_text('name: mean-pne\nn: 6\nalpha: 0.5\ntrials: 30\nmean_within_se: 0\n')
    assert run(['experiment', str(config)]) == EXIT_CHECKS_FAILED
    assert 'mean_within_se' in capsys.readouterr().err


def test_experiment_config_seed_and_flag(tmp_path: Path) -> None:
    config = tmp_path / 'seeded.yaml'
    config.write_text('name: brd-steps\nn: 4\nalpha: 0.5\ntrials: 5\nmaster_seed: 12\n')
    run(['experiment', str(config), '--output', str(tmp_path / 'a')])
    run(['experiment', str(config), '--seed', '12', '--output', str(tmp_path / 'b')])
    run(['experiment', str(config), '--seed', '13', '--output', str(tmp_path / 'c')])
    a, b, c = ((tmp_path / f'{x}.csv').read_text() for x in 'abc')
    assert a == b
    assert a != c


def test_experiment_bad_config(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    config = tmp_path / 'bad.yaml'
    config.write_text('name: mean-pne\nn: 3\nalpha: 0.5\n')
    assert run(['experiment', str(config)]) == EXIT_USAGE
    assert 'missing trials' in capsys.readouterr().err
