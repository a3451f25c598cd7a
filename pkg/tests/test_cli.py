"""btdkit subcommands end to end on small inputs."""

import json

import pytest

from cli.btdkit import main


def _outputs(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir())}


def test_mc_is_byte_identical(tmp_path):
    argv = ['mc', '--runs', '1', '--levels', '0', '1e-2', '--n-starts', '2',
            '--max-sweeps', '200', '--seed', '7']
    assert main(argv + ['--out', str(tmp_path / 'a')]) == 0
    assert main(argv + ['--out', str(tmp_path / 'b')]) == 0
    assert _outputs(tmp_path / 'a') == _outputs(tmp_path / 'b')
    report = json.loads((tmp_path / 'a' / 'mc_report.json').read_text())
    assert report['levels'] == [0.0, 0.01]
    assert report['tol_residual'] == 1e-10


def test_swamp_is_byte_identical(tmp_path):
    argv = ['swamp', '--dims', '4', '5', '6', '--L', '2', '--R', '2',
            '--max-sweeps', '100', '--seeds', '1', '2', '--seed', '0']
    assert main(argv + ['--out', str(tmp_path / 'a')]) == 0
    assert main(argv + ['--out', str(tmp_path / 'b')]) == 0
    outputs = _outputs(tmp_path / 'a')
    assert outputs == _outputs(tmp_path / 'b')
    assert {'swamp_seed1.json', 'swamp_seed2_traces.csv', 'swamp_summary.json'} <= set(outputs)
    summary = json.loads(outputs['swamp_summary.json'])
    assert summary['config']['relative'] is True
    assert summary['config']['lambda0'] == 1e-3


def test_synth_then_fit(tmp_path):
    assert main(['synth', '--dims', '3', '4', '5', '--L', '1', '--R', '2',
                 '--seed', '4', '--out', str(tmp_path)]) == 0
    assert (tmp_path / 'truth_C.csv').exists()
    assert main(['fit', str(tmp_path / 'tensor.txt'), '--L', '1', '--R', '2',
                 '--max-sweeps', '50', '--out', str(tmp_path / 'fit')]) == 0
    text = (tmp_path / 'fit' / 'fit_report.txt').read_text()
    assert 'R = 2' in text
    assert (tmp_path / 'fit' / 'factors_A.csv').exists()


def test_surrogate_then_apportion(tmp_path):
    assert main(['surrogate', '--days', '3', '--seed', '2', '--out', str(tmp_path)]) == 0
    out = tmp_path / 'report'
    assert main(['apportion', str(tmp_path / 'samples.csv'), '--P', '2', '--L', '1',
                 '--starts', '2', '--max-sweeps', '30', '--seed', '0',
                 '--save-model', '--out', str(out)]) == 0
    names = set(_outputs(out))
    assert {'profiles.csv', 'contributions.csv', 'weekday_weekend.csv',
            'fit_report.txt', 'source_model.joblib'} <= names


def test_seed_is_required_for_experiments():
    with pytest.raises(SystemExit):
        main(['mc'])


def test_failures_exit_nonzero(tmp_path):
    missing = tmp_path / 'missing.csv'
    assert main(['apportion', str(missing), '--seed', '0', '--out', str(tmp_path)]) == 1
