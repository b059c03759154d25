import math

import numpy as np
import pytest

from evaluators import ic_evaluator
from evaluators.ic_evaluator import (
    E_ALMOST_QUANTUM, Table1Evaluator, UffinkEvaluator, correlators, critical_noise, pr_box,
    pr_zero_table, random_functional, uffink_lhs
)
from helpers.conic_solver import LinearOptimum, Solution, SolverStatus
from helpers.errors import ScenarioStructureError
from helpers.scenario import LevelSpec, Scenario, uniform_box, validate_box


def test_correlators_of_pr(pr):
    assert np.allclose(correlators(pr), [[1.0, 1.0], [1.0, -1.0]])


def test_uffink_of_pr_family():
    for E in np.linspace(0.0, 1.0, 11):
        assert uffink_lhs(pr_box(2, E)) == pytest.approx(8 * E ** 2)


def test_uffink_needs_2222():
    with pytest.raises(ScenarioStructureError):
        uffink_lhs(uniform_box(Scenario.bipartite(3, 2, 2, 2)))


def test_pr_family_endpoints(pr):
    assert np.allclose(pr_box(2, 1.0).table, pr.table)
    assert np.allclose(pr_box(3, 0.0).table, 1 / 9)


@pytest.mark.parametrize('d', [2, 3, 4])
def test_pr_family_is_no_signalling(d):
    assert validate_box(pr_box(d, 0.6)).valid
    assert pr_zero_table(d).sum() == pytest.approx(2 * d)


def test_pr_family_rejects_bad_parameters():
    with pytest.raises(ScenarioStructureError):
        pr_box(1, 0.5)
    with pytest.raises(ScenarioStructureError):
        pr_box(2, 1.5)


def test_random_functional_is_seeded(chsh_scenario):
    first = random_functional(chsh_scenario, np.random.default_rng(3))
    second = random_functional(chsh_scenario, np.random.default_rng(3))
    assert first.coefficients.shape == (8,)
    assert np.allclose(first.coefficients, second.coefficients)


def test_critical_noise_two_outputs(settings):
    assert critical_noise(2, LevelSpec.ALMOST_QUANTUM, settings) == pytest.approx(1 / math.sqrt(2), abs=1e-4)


def test_critical_noise_three_outputs(settings):
    value = critical_noise(3, LevelSpec.ALMOST_QUANTUM, settings)
    assert value == pytest.approx(E_ALMOST_QUANTUM[3], abs=0.002)
    assert critical_noise(3, LevelSpec.Q1, settings) >= value - 1e-6


@pytest.mark.slow
def test_critical_noise_four_outputs(settings):
    assert critical_noise(4, LevelSpec.ALMOST_QUANTUM, settings) == pytest.approx(E_ALMOST_QUANTUM[4], abs=0.003)


def test_table_evaluator_reports_errors(settings):
    result = Table1Evaluator({'solver_settings': settings}, 'table1', {'table1_dims': (1,)}).run_evaluation()
    assert result['status'] == 'error'
    assert result['metrics_scores'] == {}


def test_table_evaluator_small(settings):
    result = Table1Evaluator({'solver_settings': settings}, 'table1', {'table1_dims': (2,)}).run_evaluation()
    assert result['status'] == 'passed'
    assert result['metrics_scores']['critical_noise_d2']['reference_value'] == 0.707


def test_uffink_evaluator(settings):
    result = UffinkEvaluator({'solver_settings': settings}, 'uffink', {'uffink_functionals': 4}).run_evaluation()
    assert result['status'] == 'passed', result['metrics_scores']


def test_table_evaluator_surfaces_inexact_solves(monkeypatch, settings):
    solution = Solution(SolverStatus.MAX_ITERATIONS, 0.7071, None, [], 1e-4, 1e-5, 500, 'CLARABEL',
                        raw_status='optimal_inaccurate')
    monkeypatch.setattr(ic_evaluator, 'critical_noise_optimum',
                        lambda d, level, settings: LinearOptimum(0.7071, None, None, solution, t=0.7071))
    result = Table1Evaluator({'solver_settings': settings}, 'table1', {'table1_dims': (2,)}).run_evaluation()
    entry = result['metrics_scores']['critical_noise_d2']
    assert entry['solver_status'] == 'max_iterations'
    assert 'last iterate' in entry['explanation']
