import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
from pathlib import Path

from . import DEFAULT_SEED, MAX_DIMENSION, SEED_ENV_VAR, HypernashError, ValidationError
from .dynamics import accessible_set, all_tie_vertices, brd_run, trap_components, unreachable_equilibria
from .equilibrium import enumerate_equilibria
from .experiments import format_table, load_config, run_experiment, write_outputs
from .hypercube import set_max_dimension
from .percolation import cluster_of, components, dump_bond, nonlargest_all_singletons, orientation_subgraph, sample_bond
from .randgame import DiscreteDistribution, alpha_of, dump_cube, load_cube_from_file, marks_of, sample_marks, sample_payoffs
from .streams import Seed

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_CHECKS_FAILED = 2
EXIT_IO = 3


class Parser(argparse.ArgumentParser):
    """Usage errors exit 1; status 2 means failed acceptance checks."""

    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f'{self.prog}: error: {message}\n')


def seed_arg(text: str) -> Seed:
    return int(text, 0)


def resolve_seed(flag: Seed | None, config_seed: Seed | None = None) -> Seed:
    """--seed, then $HYPERNASH_SEED, then the config's master_seed, then 0."""
    if flag is not None:
        return flag
    env = os.environ.get(SEED_ENV_VAR)
    if env:
        try:
            return int(env, 0)
        except ValueError as e:
            raise ValidationError(f'{SEED_ENV_VAR}={env!r} is not an integer') from e
    if config_seed is not None:
        return config_seed
    return DEFAULT_SEED


def emit(args: argparse.Namespace, fields: dict, lines: list[str]) -> None:
    if args.format == 'json':
        print(json.dumps(fields, sort_keys=True))
    else:
        print('\n'.join(lines))


def cmd_gen(args: argparse.Namespace) -> int:
    seed = resolve_seed(args.seed)
    if args.dist is not None:
        dist = DiscreteDistribution.parse(args.dist)
        cube = marks_of(sample_payoffs(args.n, dist, seed), alpha_of(dist))
    else:
        cube = sample_marks(args.n, args.alpha, seed)
    text = dump_cube(cube)
    digest = hashlib.sha256(text.encode()).hexdigest()
    if args.out == '-':
        sys.stdout.write(text)
        print(f'sha256={digest}', file=sys.stderr)
    else:
        Path(args.out).write_text(text)
        print(f'{digest}  {args.out}')
    return EXIT_OK


def cmd_analyze(args: argparse.Namespace) -> int:
    cube = load_cube_from_file(args.instance)
    report = enumerate_equilibria(cube)
    all_tie = len(all_tie_vertices(cube))
    alpha = 'unknown' if cube.alpha is None else cube.alpha
    fields = {
        'n': cube.n,
        'alpha': alpha,
        'pne': list(report.pne),
        'spne': list(report.spne),
        'pne_count': report.pne_count,
        'spne_count': report.spne_count,
        'all_tie_count': all_tie,
    }
    lines = [
        f'n={cube.n} alpha={alpha}',
        f'pne={list(report.pne)}',
        f'spne={list(report.spne)}',
        f'pne_count={report.pne_count} spne_count={report.spne_count}',
        f'all_tie_count={all_tie}',
    ]
    emit(args, fields, lines)
    return EXIT_OK


def cmd_brd(args: argparse.Namespace) -> int:
    cube = load_cube_from_file(args.instance)
    trace = brd_run(cube, args.start, resolve_seed(args.seed), args.max_steps)
    fields = {'start': trace.start, 'final': trace.final, 'steps': trace.steps, 'outcome': trace.outcome.value, 'path': list(trace.path)}
    lines = [f'{trace.outcome.value} steps={trace.steps} final={trace.final}', 'path ' + ' '.join(str(v) for v in trace.path)]
    emit(args, fields, lines)
    return EXIT_OK


def cmd_access(args: argparse.Namespace) -> int:
    cube = load_cube_from_file(args.instance)
    part = accessible_set(cube, args.start)
    unreachable = sorted(unreachable_equilibria(cube, args.start))
    traps = trap_components(cube)
    fields = {
        'start': args.start,
        'accessible_size': len(part.accessible),
        'unreachable_pne': unreachable,
        'all_tie_count': len(all_tie_vertices(cube)),
        'trap_count': len(traps),
        'trap_sizes': [len(t) for t in traps],
    }
    lines = [
        f'accessible_size={fields["accessible_size"]}',
        f'unreachable_pne={unreachable}',
        f'all_tie_count={fields["all_tie_count"]}',
        f'trap_count={len(traps)}',
    ]
    emit(args, fields, lines)
    return EXIT_OK


def cmd_perc(args: argparse.Namespace) -> int:
    if args.instance is not None:
        bond = orientation_subgraph(load_cube_from_file(args.instance))
    elif args.n is not None and args.p is not None:
        bond = sample_bond(args.n, args.p, resolve_seed(args.seed))
    else:
        raise ValidationError('perc needs either --instance or both --n and --p')
    result = components(bond)
    fields = {
        'n': bond.n,
        'p': 'derived' if bond.p is None else bond.p,
        'component_count': result.component_count,
        'largest_size': result.largest_size,
        'isolated_count': result.isolated_count,
        'nonlargest_singletons': nonlargest_all_singletons(result),
        'start_cluster_size': len(cluster_of(bond, args.start)),
    }
    if args.out is not None:
        Path(args.out).write_text(dump_bond(bond))
    emit(args, fields, [f'{k}={v}' for k, v in fields.items()])
    return EXIT_OK


def cmd_experiment(args: argparse.Namespace) -> int:
    config = load_config(args.config, args.name)
    seed = resolve_seed(args.seed, config.master_seed)
    config = dataclasses.replace(config, master_seed=seed)
    result = run_experiment(config, threads=args.threads, progress=args.progress)
    output = args.output or config.output
    if output:
        csv_path, json_path = write_outputs(result, output)
        log.info('wrote %s and %s', csv_path, json_path)
    print(format_table(result))
    if not result.passed:
        failed = ', '.join(c.name for c in result.checks if not c.passed)
        print(f'acceptance checks failed: {failed}', file=sys.stderr)
        return EXIT_CHECKS_FAILED
    return EXIT_OK


def build_parser() -> Parser:
    common = Parser(add_help=False)
    common.add_argument('--seed', type=seed_arg, default=None, help=f'master seed (default: ${SEED_ENV_VAR}, then {DEFAULT_SEED})')
    common.add_argument('--max-dimension', type=int, default=MAX_DIMENSION, help='largest accepted n')
    common.add_argument('-v', '--verbose', action='store_true', help='debug logging on stderr')
    common.add_argument('-q', '--quiet', action='store_true', help='only log errors')

    formatted = Parser(add_help=False)
    formatted.add_argument('--format', choices=['text', 'json'], default='text')

    parser = Parser(prog='hypernash', description='Random games on the hypercube: equilibria, best-response dynamics and percolation.')
    sub = parser.add_subparsers(dest='command', required=True)

    gen = sub.add_parser('gen', parents=[common], help='sample an instance file')
    gen.add_argument('--n', type=int, required=True)
    source = gen.add_mutually_exclusive_group(required=True)
    source.add_argument('--alpha', type=float, help='tie probability of every edge')
    source.add_argument('--dist', help='payoff law, e.g. "uniform:-1,1" or "atoms:0@0.5,1@0.5"')
    gen.add_argument('--out', default='-', help='instance path (default: stdout)')
    gen.set_defaults(func=cmd_gen)

    analyze = sub.add_parser('analyze', parents=[common, formatted], help='list the equilibria of an instance')
    analyze.add_argument('instance')
    analyze.set_defaults(func=cmd_analyze)

    brd = sub.add_parser('brd', parents=[common, formatted], help='run best-response dynamics on an instance')
    brd.add_argument('instance')
    brd.add_argument('--start', type=int, default=0)
    brd.add_argument('--max-steps', type=int, default=None, help='default 64*n*2^n')
    brd.set_defaults(func=cmd_brd)

    access = sub.add_parser('access', parents=[common, formatted], help='accessible set and unreachable equilibria')
    access.add_argument('instance')
    access.add_argument('--start', type=int, default=0)
    access.set_defaults(func=cmd_access)

    perc = sub.add_parser('perc', parents=[common, formatted], help='bond percolation components')
    perc.add_argument('--instance', help='use the orientation subgraph of this instance')
    perc.add_argument('--n', type=int)
    perc.add_argument('--p', type=float)
    perc.add_argument('--start', type=int, default=0)
    perc.add_argument('--out', help='write the bond configuration here')
    perc.set_defaults(func=cmd_perc)

    experiment = sub.add_parser('experiment', parents=[common], help='run an experiment from a YAML config')
    experiment.add_argument('config')
    experiment.add_argument('--name', help='override the experiment named in the config')
    experiment.add_argument('--output', help='write <output>.csv and <output>.json')
    experiment.add_argument('--threads', type=int, default=1, help='worker threads (never changes the output)')
    experiment.add_argument('--progress', action='store_true', help='progress bar on stderr')
    experiment.set_defaults(func=cmd_experiment)
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.DEBUG if args.verbose else logging.ERROR if args.quiet else logging.WARNING
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s', stream=sys.stderr, force=True)
    try:
        set_max_dimension(args.max_dimension)
        return args.func(args)
    except HypernashError as e:
        print(f'error: {e}', file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f'error: {e.filename or ""}: {e.strerror or e}', file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run())


if __name__ == '__main__':
    main()
