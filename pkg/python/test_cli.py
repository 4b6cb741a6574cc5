"""Tests for the command-line entry points."""

import csv
import math

import numpy as np
import pytest
from scipy import special

from cli import main


def run(argv):
    """Run the CLI and return the exit code (0 when main returns normally)."""
    try:
        main(argv)
    except SystemExit as e:
        return e.code
    return 0


class TestEvalGreen:

    def test_free_space_value(self, capsys):
        code = run(['eval-green', '--kernel', 'free', '--k', '1.0',
                    '--target', '1.0', '1.0', '--source', '0.0', '0.0'])
        assert code == 0
        re, im = (float(v) for v in capsys.readouterr().out.split())
        exact = 0.25j * special.hankel1(0, math.sqrt(2.0))
        assert complex(re, im) == pytest.approx(exact, rel=1e-9)

    def test_contour_variant(self, capsys):
        code = run(['eval-green', '--kernel', 'dirichlet', '--k', '2.0', '--variant', 'contour2',
                    '--target', '0.5', '1.0', '--source', '0.0', '0.5'])
        assert code == 0
        re, im = (float(v) for v in capsys.readouterr().out.split())
        exact = -0.25j * special.hankel1(0, 2.0 * math.hypot(0.5, 1.5))
        assert complex(re, im) == pytest.approx(exact, rel=1e-9)

    def test_source_outside_layer(self, capsys):
        code = run(['eval-green', '--kernel', 'dirichlet', '--k', '1.0',
                    '--target', '0.0', '1.0', '--source', '0.0', '-1.0'])
        assert code == 2
        assert capsys.readouterr().err.startswith('Error:')

    def test_missing_wavenumber(self):
        assert run(['eval-green', '--kernel', 'free', '--target', '0', '1',
                    '--source', '0', '0']) == 2

    def test_real_poles_are_numerical_errors(self):
        assert run(['eval-green', '--kernel', 'impedance', '--k', '1.0', '--alpha', '-0.5',
                    '--target', '0', '1', '--source', '0', '0.5']) == 3


def test_help_exits_cleanly(capsys):
    assert run(['--help']) == 0
    assert 'eval-green' in capsys.readouterr().out


def write_csv(path, header, rows):
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f)
        writer.writerow(header)
        writer.writerows(rows)


def read_csv(path):
    with open(path, newline='') as f:
        return list(csv.reader(f))


class TestConvolve:

    @pytest.fixture
    def points(self, tmp_path):
        rng = np.random.default_rng(0)
        sources = np.column_stack([rng.uniform(0, 1, (60, 2)), rng.normal(size=(60, 2))])
        targets = rng.uniform(1.5, 2.5, (40, 2))
        write_csv(tmp_path / 'sources.csv', ['x', 'y', 'q_re', 'q_im'], sources.tolist())
        write_csv(tmp_path / 'targets.csv', ['x', 'y'], targets.tolist())
        return tmp_path

    def test_writes_potentials_and_checks(self, points, capsys):
        output = points / 'phi.csv'
        code = run(['convolve', '--kernel', 'free', '--k', '1.0',
                    '--sources', str(points / 'sources.csv'),
                    '--targets', str(points / 'targets.csv'),
                    '-o', str(output), '--tol', '1e-6', '--max-leaf', '8', '--check', '--stats'])
        assert code == 0
        rows = read_csv(output)
        assert rows[0] == ['x', 'y', 'phi_re', 'phi_im']
        assert len(rows) == 41 and all(len(row) == 4 for row in rows[1:])
        out = capsys.readouterr().out
        assert 'Relative l2 error on 40 targets' in out
        assert 'm2l:' in out

    def test_output_reruns_identically(self, points):
        """The potentials file is itself a valid targets file; re-running reproduces it."""
        first, second = points / 'phi.csv', points / 'phi2.csv'
        common = ['convolve', '--kernel', 'free', '--k', '1.0', '--max-leaf', '8',
                  '--sources', str(points / 'sources.csv')]
        assert run(common + ['--targets', str(points / 'targets.csv'), '-o', str(first)]) == 0
        assert run(common + ['--targets', str(first), '-o', str(second)]) == 0
        assert read_csv(second) == read_csv(first)

    def test_headerless_and_commented_files(self, points):
        sources = read_csv(points / 'sources.csv')[1:]
        write_csv(points / 'bare.csv', ['# x', 'y', 'q_re', 'q_im'], sources)
        assert run(['convolve', '--k', '1.0', '--sources', str(points / 'bare.csv'),
                    '--targets', str(points / 'targets.csv'), '-o', str(points / 'out.csv')]) == 0
        assert len(read_csv(points / 'out.csv')) == 41

    def test_missing_named_column(self, points, capsys):
        write_csv(points / 'partial.csv', ['x', 'y', 'charge'], [[0.1, 0.2, 1.0]])
        assert run(['convolve', '--k', '1.0', '--sources', str(points / 'partial.csv'),
                    '--targets', str(points / 'targets.csv')]) == 2
        assert 'q_re' in capsys.readouterr().err

    def test_empty_sources(self, tmp_path):
        (tmp_path / 'sources.csv').write_text('# x,y,q_re\n')
        (tmp_path / 'targets.csv').write_text('1.0,1.0\n')
        assert run(['convolve', '--k', '1.0', '--sources', str(tmp_path / 'sources.csv'),
                    '--targets', str(tmp_path / 'targets.csv')]) == 2

    def test_missing_file(self, tmp_path):
        assert run(['convolve', '--k', '1.0', '--sources', str(tmp_path / 'none.csv'),
                    '--targets', str(tmp_path / 'none.csv')]) == 2


def test_expansion_study_csv(tmp_path):
    output = tmp_path / 'ratio.csv'
    code = run(['expansion-study', 'impedance-multipole-ratio', '--max-order', '5',
                '-o', str(output)])
    assert code == 0
    with open(output) as f:
        rows = list(csv.reader(f))
    assert rows[0] == ['p', 'magnitude', 'ratio', 'propagating', 'evanescent', 'converged']
    assert [int(row[0]) for row in rows[1:]] == list(range(-5, 6))


def test_unknown_study(capsys):
    assert run(['quad-study', 'no-such-preset']) == 2
    assert 'neither a study file nor a preset' in capsys.readouterr().err


@pytest.mark.slow
def test_validate_passes(capsys):
    assert run(['validate', '--seed', '0']) == 0
    assert capsys.readouterr().out.strip().endswith('passed')
