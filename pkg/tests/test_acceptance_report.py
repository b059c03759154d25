import json

import numpy as np
import pytest
import yaml

from acceptance_report import AcceptanceGate, build_report, check_acceptance, generate_report, save_results
from concurrent_runner import ConcurrentReproOrchestrator, map_ordered, run_concurrent_repro
from evaluators.principle_evaluator import metric
from repro_run import create_evaluator, get_config, run_targets


def _result(target, status='passed', passed=True, within_runtime=True):
    return {
        'target': target,
        'status': status,
        'metrics_scores': {'check': metric(np.float64(1.0), passed, reference_value=1.0, tolerance=1e-6)},
        'execution_time': 0.5,
        'within_runtime': within_runtime
    }


def test_config_ignores_missing_overrides():
    config = get_config({'AQ_SEED': None, 'AQ_SOLVER': 'scs', 'AQ_GAP_TOL': 1e-5})
    assert isinstance(config['AQ_SEED'], int)
    assert config['solver_settings'].backend == 'SCS'
    assert config['solver_settings'].gap_tol == 1e-5


def test_unknown_target():
    with pytest.raises(ValueError):
        create_evaluator('section9', get_config())


def test_acceptance_gate_rejects_negative_error_budget():
    with pytest.raises(ValueError):
        AcceptanceGate(max_error_targets=-1)


def test_acceptance_checks():
    results = [_result('a'), _result('b', 'failed', passed=False), _result('c', within_runtime=False)]
    acceptance = check_acceptance(results, AcceptanceGate())
    assert not acceptance['passed']
    assert acceptance['actual_values']['failed_checks'] == ['b.check']
    relaxed = check_acceptance(results, AcceptanceGate(require_all_checks=False))
    assert relaxed['passed']
    assert not check_acceptance(results, AcceptanceGate(require_all_checks=False, enforce_runtime=True))['passed']


def test_error_budget():
    results = [_result('a'), {'target': 'b', 'status': 'error', 'error': 'boom', 'metrics_scores': {}}]
    assert not check_acceptance(results, AcceptanceGate())['passed']
    assert check_acceptance(results, AcceptanceGate(max_error_targets=1))['passed']


def test_report_is_plain_json(settings):
    report = build_report([_result('a')], {'solver_settings': settings, 'AQ_SEED': 3})
    assert report['status'] == 'passed'
    assert report['seed'] == 3
    assert isinstance(report['targets'][0]['metrics_scores']['check']['score'], float)
    assert json.loads(generate_report(report, 'json'))['tool_version'] == '0.1.0'
    assert yaml.safe_load(generate_report(report, 'yaml'))['status'] == 'passed'


def test_markdown_report(settings):
    report = build_report([_result('a'), _result('b', 'failed', passed=False)], {'solver_settings': settings})
    text = generate_report(report, 'markdown')
    assert '| check | 1 | 1 | 1e-06 | ✅ |' in text
    assert '❌ FAILED' in text


def test_unsupported_format(settings, tmp_path):
    report = build_report([], {'solver_settings': settings})
    with pytest.raises(ValueError):
        generate_report(report, 'xml')
    with pytest.raises(ValueError):
        save_results(report, str(tmp_path), 'xml')


def test_save_results(settings, tmp_path):
    report = build_report([_result('a')], {'solver_settings': settings})
    path = save_results(report, str(tmp_path / 'out'), 'yaml')
    assert path.suffix == '.yaml'
    assert yaml.safe_load(path.read_text())['targets'][0]['target'] == 'a'


def test_map_ordered_keeps_submission_order():
    assert map_ordered(lambda x: x * x, list(range(10)), max_workers=4) == [x * x for x in range(10)]


def test_orchestrator_turns_exceptions_into_errors():
    orchestrator = ConcurrentReproOrchestrator(get_config(), max_workers=2)
    result = orchestrator.evaluate_target('section9')
    assert result['status'] == 'error'
    assert 'section9' in result['error']


def test_sequential_and_concurrent_runs_agree():
    config = get_config()
    sequential = run_targets(['chsh', 'ntcc'], config)
    concurrent = run_concurrent_repro(['chsh', 'ntcc'], config, max_workers=2)
    assert [r['target'] for r in concurrent['targets']] == ['chsh', 'ntcc']
    assert [r['status'] for r in concurrent['targets']] == [r['status'] for r in sequential]
    assert concurrent['summary']['passed_targets'] == 2
    assert concurrent['summary']['pass_rate'] == 1.0


def test_inexact_solves_are_flagged(settings):
    result = _result('table1')
    result['metrics_scores']['check'] = metric(0.707, True, 'noise', 0.707, 0.002, solver_status='max_iterations')
    report = build_report([result], {'solver_settings': settings})
    assert report['status'] == 'passed'
    assert report['acceptance']['actual_values']['inexact_checks'] == ['table1.check']
    assert '⚠️ max_iterations' in generate_report(report, 'markdown')
    assert 'last iterate' in report['targets'][0]['metrics_scores']['check']['explanation']
