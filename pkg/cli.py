#!/usr/bin/env python3
import argparse
import csv
import logging
import shlex
import sys
from pathlib import Path

import numpy as np

from python.layered_fmm.errors import (DomainError, FixtureError, GeometryError,
                                       NumericalError)
from python.layered_fmm.fmm import (DEFAULT_MAX_LEAF, DEFAULT_TOL, ConvolveJob,
                                    convolve_with_stats, direct_sum)
from python.layered_fmm.greens import KERNEL_TAGS, make_kernel
from python.layered_fmm.sommerfeld import (ContourPlan, EvalRequest, Variant, choose_direction,
                                           eval_kernel)
from python.layered_fmm.studies import (expansion_study, freeze_study_references,
                                        list_presets, load_study_config, quadrature_study)
from python.layered_fmm.validation import run_property_suite

CHECK_SAMPLE = 500
SOURCE_COLUMNS = ('x', 'y', 'q_re', 'q_im')
TARGET_COLUMNS = ('x', 'y')
POTENTIAL_COLUMNS = ('x', 'y', 'phi_re', 'phi_im')
QUAD_PRESET = "impedance-near-interface"


def add_kernel_args(parser):
    group = parser.add_argument_group('kernel')
    group.add_argument('--kernel', choices=KERNEL_TAGS, default='free',
                       help='Kernel family (default: free)')
    group.add_argument('--k', type=float, help='Wavenumber (free, dirichlet, impedance)')
    group.add_argument('--alpha', type=float, default=0.0,
                       help='Impedance parameter in du/dy - i alpha u = 0 (default: 0)')
    group.add_argument('--k1', type=float, help='Top-layer wavenumber (three-layer)')
    group.add_argument('--k2', type=float, help='Middle-layer wavenumber (three-layer)')
    group.add_argument('--k3', type=float, help='Bottom-layer wavenumber (three-layer)')
    group.add_argument('--d', type=float, help='Middle-layer thickness (three-layer)')
    group.add_argument('--component', choices=['s1', 's2t', 's2b', 's3'],
                       help='Three-layer scattered-field piece')


def kernel_from_args(args):
    return make_kernel(args.kernel, k=args.k, alpha=args.alpha, k1=args.k1, k2=args.k2,
                       k3=args.k3, d=args.d, component=args.component)


def build_parser():
    parser = argparse.ArgumentParser(
        description='Layered-media Helmholtz Green\'s functions: evaluation, FMM '
                    'convolution and quadrature/expansion studies'
    )
    parser.add_argument('-v', '--verbose', action='store_true', help='Log debug messages')
    commands = parser.add_subparsers(dest='command', required=True)

    green = commands.add_parser('eval-green', help='Evaluate g(target, source) and print "re im"')
    add_kernel_args(green)
    green.add_argument('--target', type=float, nargs=2, required=True, metavar=('X', 'Y'))
    green.add_argument('--source', type=float, nargs=2, required=True, metavar=('X0', 'Y0'))
    green.add_argument('--tol', type=float, default=1e-10, help='Relative tolerance')
    green.add_argument('--variant', choices=[v.value for v in Variant], default='contour1',
                       help='Representation of the evanescent tails (default: contour1)')

    conv = commands.add_parser('convolve', help='phi_i = sum_j q_j g(x_i, y_j) with the FMM')
    add_kernel_args(conv)
    conv.add_argument('--sources', required=True,
                      help='CSV with header x,y,q_re,q_im (q_im optional)')
    conv.add_argument('--targets', required=True, help='CSV with header x,y')
    conv.add_argument('-o', '--output', default='phi.csv',
                      help='Output CSV with columns x, y, phi_re, phi_im (default: phi.csv)')
    conv.add_argument('--tol', type=float, default=DEFAULT_TOL,
                      help=f'Relative l2 tolerance (default: {DEFAULT_TOL:g})')
    conv.add_argument('--max-leaf', type=int, default=DEFAULT_MAX_LEAF,
                      help=f'Points per leaf box (default: {DEFAULT_MAX_LEAF})')
    conv.add_argument('--order', type=int, help='Fixed expansion order (default: from tol)')
    conv.add_argument('--threads', type=int, default=1, help='Worker threads (default: 1)')
    conv.add_argument('--m2l-cache-mb', type=float, default=256.0,
                      help='M2L matrix cache size in MB (default: 256)')
    conv.add_argument('--check', action='store_true',
                      help=f'Compare with a direct sum on up to {CHECK_SAMPLE} targets')
    conv.add_argument('--stats', action='store_true', help='Print FMM operation counts')

    quad = commands.add_parser('quad-study', help='Error vs rule size for each tail representation')
    quad.add_argument('config', nargs='?', default=QUAD_PRESET,
                      help=f'Study YAML file or preset name (default: {QUAD_PRESET})')
    quad.add_argument('-o', '--output', help='Output CSV (default: stdout)')
    quad.add_argument('--fixtures', help='Frozen reference file')
    quad.add_argument('--dx', type=float, help='Override the horizontal separation')
    quad.add_argument('--h', type=float, help='Override the vertical separation')
    quad.add_argument('--shift-c', type=float, help='Override the segment IV length c')
    quad.add_argument('--laguerre-nodes', type=int, nargs='+', help='Override the Laguerre sweep')
    quad.add_argument('--segment-nodes', type=int, nargs='+', help='Override the segment IV sweep')
    quad.add_argument('--tol', type=float, help='Override the reference accuracy')

    expansion = commands.add_parser('expansion-study',
                                    help='Term magnitudes and ratios of multipole/local expansions')
    expansion.add_argument('config', help=f'Study YAML file or preset name ({", ".join(list_presets())})')
    expansion.add_argument('-o', '--output', help='Output CSV (default: stdout)')
    expansion.add_argument('--dx', type=float, help='Override the horizontal separation')
    expansion.add_argument('--h', type=float, help='Override the vertical separation')
    expansion.add_argument('--radius', type=float, help='Override the expansion radius r')
    expansion.add_argument('--variant', choices=[v.value for v in Variant],
                           help='Override the tail representation')
    expansion.add_argument('--parts', choices=['all', 'propagating', 'evanescent'],
                           help='Override which parts are integrated')
    expansion.add_argument('--max-order', type=int, help='Override the largest |p|')
    expansion.add_argument('--tol', type=float, help='Override the quadrature tolerance')

    validate = commands.add_parser('validate', help='Run the property suite')
    validate.add_argument('--seed', type=int, default=0, help='Random seed (default: 0)')
    validate.add_argument('--freeze', metavar='PATH',
                          help='Also compute and write the quad-study reference fixture')
    validate.add_argument('--preset', default=QUAD_PRESET,
                          help=f'Quadrature study to freeze (default: {QUAD_PRESET})')
    return parser


def cmd_eval_green(args):
    spec = kernel_from_args(args)
    request = EvalRequest(spec, tuple(args.target), tuple(args.source), args.tol)
    plan = None
    if args.variant != 'contour1':
        sep = request.separation()
        direction = choose_direction(float(sep.dx[0]), float(sep.h[0]))
        plan = ContourPlan(direction, Variant(args.variant))
    value = eval_kernel(request, plan)
    print(f"{value.real:.17g} {value.imag:.17g}")


def _is_numeric(row):
    try:
        [float(value) for value in row]
    except ValueError:
        return False
    return True


def _read_points(path, columns, required, what):
    """
    Numeric columns of a point file. A first row that is not numeric is a
    header and selects the named columns; without one, columns are positional.
    """
    if not Path(path).exists():
        raise FileNotFoundError(f"{what} file '{path}' does not exist")
    with open(path, newline='') as f:
        rows = [row for row in csv.reader(f) if row and not row[0].lstrip().startswith('#')]
    header = None
    if rows and not _is_numeric(rows[0]):
        header = [name.strip() for name in rows.pop(0)]
    if not rows:
        raise DomainError(f"{what} file '{path}' holds no points", what, path)
    data = np.array(rows, dtype=float)
    if header is not None:
        missing = [name for name in columns[:required] if name not in header]
        if missing:
            raise DomainError(f"{what} file '{path}' has no column {', '.join(missing)}",
                              what, header)
        data = data[:, [header.index(name) for name in columns if name in header]]
    if data.shape[1] < required:
        raise DomainError(f"{what} file '{path}' needs at least {required} columns",
                          what, data.shape[1])
    return data[:, :len(columns)]


def _write_points(path, columns, data):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(columns)
        writer.writerows([[f"{value:.17g}" for value in row] for row in data])


def cmd_convolve(args):
    spec = kernel_from_args(args)
    sources = _read_points(args.sources, SOURCE_COLUMNS, 3, 'sources')
    targets = _read_points(args.targets, TARGET_COLUMNS, 2, 'targets')
    charges = sources[:, 2] + (1j * sources[:, 3] if sources.shape[1] > 3 else 0)
    job = ConvolveJob(spec, sources[:, :2], charges, targets, tol=args.tol,
                      max_leaf=args.max_leaf, order=args.order, threads=args.threads,
                      m2l_cache_mb=args.m2l_cache_mb)
    phi, stats = convolve_with_stats(job)
    _write_points(args.output, POTENTIAL_COLUMNS, np.column_stack([targets, phi.real, phi.imag]))
    print(f"Wrote {len(phi)} potentials to {args.output}")

    if args.stats:
        for name, count in stats.as_dict().items():
            print(f"  {name}: {count}")

    if args.check:
        rng = np.random.default_rng(0)
        sample = np.sort(rng.choice(len(targets), min(CHECK_SAMPLE, len(targets)), replace=False))
        reference = direct_sum(ConvolveJob(spec, job.source_points, job.charges, targets[sample],
                                           tol=args.tol))
        error = np.linalg.norm(phi[sample] - reference) / np.linalg.norm(reference)
        print(f"Relative l2 error on {len(sample)} targets: {error:.3e}")
        if error > args.tol:
            raise NumericalError(f"FMM error {error:.3e} exceeds tol {args.tol:g}",
                                 estimate=error)


def _open_output(path):
    return open(path, 'w', newline='') if path else sys.stdout


def _write_rows(path, header, rows):
    f = _open_output(path)
    try:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)
    finally:
        if path:
            f.close()
    if path:
        print(f"Wrote {len(rows)} rows to {path}")


def cmd_quad_study(args):
    overrides = {
        'geometry': {'dx': args.dx, 'h': args.h},
        'contour': {'shift_c': args.shift_c},
        'sweep': {'laguerre_nodes': args.laguerre_nodes, 'segment_nodes': args.segment_nodes},
        'tol': args.tol,
    }
    config = load_study_config(args.config, overrides)
    rows = quadrature_study(config, args.fixtures)
    _write_rows(args.output, ['representation', 'n', 'abs_error'],
                [(row.representation, row.n, repr(row.abs_error)) for row in rows])


def cmd_expansion_study(args):
    overrides = {
        'geometry': {'dx': args.dx, 'h': args.h, 'radius': args.radius},
        'contour': {'variant': args.variant, 'parts': args.parts},
        'sweep': {'max_order': args.max_order},
        'tol': args.tol,
    }
    config = load_study_config(args.config, overrides)
    rows = expansion_study(config)
    _write_rows(args.output, ['p', 'magnitude', 'ratio', 'propagating', 'evanescent', 'converged'],
                [(row.p, repr(row.magnitude), repr(row.ratio), repr(row.propagating),
                  repr(row.evanescent), int(row.converged)) for row in rows])


def cmd_validate(args):
    report = run_property_suite(args.seed)
    for line in report.lines():
        print(line)
    if args.freeze:
        config = load_study_config(args.preset)
        path = freeze_study_references(config, args.freeze, shlex.join(sys.argv))
        print(f"Froze references for {config.name} to {path}")
    if not report.passed:
        raise NumericalError(f"{len(report.failures)} properties failed")


COMMANDS = {
    'eval-green': cmd_eval_green,
    'convolve': cmd_convolve,
    'quad-study': cmd_quad_study,
    'expansion-study': cmd_expansion_study,
    'validate': cmd_validate,
}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format='%(levelname)s %(name)s: %(message)s')

    try:
        COMMANDS[args.command](args)
    except (DomainError, GeometryError, FixtureError) as e:
        print(f"Error: {e.message}", file=sys.stderr)
        sys.exit(2)
    except (OSError, ValueError) as e:
        print(f"Error: {str(e)}", file=sys.stderr)
        sys.exit(2)
    except NumericalError as e:
        print(f"Error: {e.message}", file=sys.stderr)
        sys.exit(3)
    except Exception as e:
        print(f"Error: {str(e)}", file=sys.stderr)
        sys.exit(1)

if __name__ == '__main__':
    main()
