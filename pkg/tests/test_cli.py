#!/usr/bin/env python3

import sys
import os
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import json

import pandas as pd
import pytest

from main import run
from src.services import VerificationService
from tests.helpers import FIXTURES

NOISELESS = os.path.join(FIXTURES, 'noiseless_linear_iv.csv')


def _read(path):
    with open(path) as f:
        return json.load(f)


def test_estimate_recovers_the_noiseless_slope(tmp_path):
    out, residuals = tmp_path / 'report.json', tmp_path / 'residuals.csv'
    code = run(['estimate', '--data', NOISELESS, '--out', str(out), '--residuals', str(residuals), '--k', '1'])
    assert code == 0
    report = _read(out)
    assert report['estimate']['theta'][0] == pytest.approx(1.5, abs=1e-6)
    assert report['inference']['method'] == 'sandwich'
    assert report['config']['estimator']['k'] == 1
    assert len(pd.read_csv(residuals)) == 40


def test_estimate_report_is_reproducible(tmp_path):
    out = tmp_path / 'report.json'
    argv = ['estimate', '--data', NOISELESS, '--out', str(out), '--estimator', 'owgmm', '--seed', '3']
    assert run(argv) == 0
    first = _read(out)
    assert run(argv) == 0
    second = _read(out)
    first.pop('timestamp')
    second.pop('timestamp')
    assert first == second


def test_estimate_with_a_config_file(tmp_path):
    config = tmp_path / 'run.json'
    config.write_text(json.dumps({
        'data': NOISELESS,
        'estimator': {'name': 'kernel-iv', 'k': 1, 'lam': 1e-10},
        'inference': {'method': 'none'},
    }))
    out = tmp_path / 'report.json'
    assert run(['estimate', '--config', str(config), '--out', str(out)]) == 0
    report = _read(out)
    assert report['estimate']['theta'][0] == pytest.approx(1.5, abs=1e-4)
    assert report['inference'] is None


def test_missing_column_is_a_usage_error(tmp_path):
    data = tmp_path / 'data.csv'
    data.write_text('z,t\n0.1,1.0\n0.2,2.0\n')
    assert run(['estimate', '--data', str(data)]) == 2


def test_non_finite_value_is_a_usage_error(tmp_path):
    data = tmp_path / 'data.csv'
    data.write_text('z,t,y\n0.1,1.0,1.5\n0.2,inf,3.0\n')
    assert run(['estimate', '--data', str(data)]) == 2


def test_unknown_config_key_is_a_usage_error(tmp_path):
    config = tmp_path / 'run.json'
    config.write_text(json.dumps({'estimatr': {'k': 2}}))
    assert run(['estimate', '--config', str(config), '--data', NOISELESS]) == 2


def test_bad_arguments_exit_with_the_usage_code():
    with pytest.raises(SystemExit) as info:
        run(['estimate', '--estimator', 'ols'])
    assert info.value.code == 2
    assert run(['verify', 'no-such-suite']) == 2


def test_verify_writes_a_passing_report(tmp_path):
    out = tmp_path / 'verify.json'
    assert run(['verify', 'variational-identity', '--seed', '1', '--out', str(out)]) == 0
    report = _read(out)
    assert report['passed'] and len(report['checks']) == 100
    details = [c['detail'] for c in report['checks']]
    assert {d['alpha'] for d in details} == {1e-3, 1.0, 10.0}
    assert max(d['dim'] for d in details) <= 10


def test_identity_suites_pass():
    report = VerificationService(seed=2, parallel=False).run('lemma6')
    assert report['passed'], [c for c in report['checks'] if not c['passed']]


def test_simulate_writes_every_artifact(tmp_path):
    config = tmp_path / 'sim.json'
    config.write_text(json.dumps({
        'estimator': {'name': 'owgmm'},
        'inference': {'method': 'gmm'},
        'simulation': {'n': 60, 'reps': 3},
    }))
    serial_dir, parallel_dir = tmp_path / 'serial', tmp_path / 'parallel'
    assert run(['simulate', '--config', str(config), '--out-dir', str(serial_dir), '--serial']) == 0
    assert run(['simulate', '--config', str(config), '--out-dir', str(parallel_dir), '--parallel']) == 0
    for name in ('reps.csv', 'summary.json', 'timing.json'):
        assert (serial_dir / name).exists()
    assert len(pd.read_csv(serial_dir / 'reps.csv')) == 3
    assert _read(serial_dir / 'summary.json')['results'] == _read(parallel_dir / 'summary.json')['results']


def test_simulate_falls_back_to_the_configured_out_dir(tmp_path):
    out_dir = tmp_path / 'configured'
    config = tmp_path / 'sim.json'
    config.write_text(json.dumps({
        'out': str(out_dir),
        'estimator': {'name': 'owgmm'},
        'inference': {'method': 'gmm'},
        'simulation': {'n': 40, 'reps': 2},
    }))
    assert run(['simulate', '--config', str(config), '--serial']) == 0
    assert len(pd.read_csv(out_dir / 'reps.csv')) == 2


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
