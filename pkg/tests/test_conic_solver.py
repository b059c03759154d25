import math

import numpy as np
import pytest
from scipy import sparse

from evaluators.ic_evaluator import random_functional
from helpers.conic_solver import (
    ConicProblem, SolverStatus, certify_membership, create_backend, local_bound,
    lp_local_membership, maximize_linear, maximize_no_signalling, solve
)
from helpers.errors import ProblemStructureError, ScenarioStructureError
from helpers.moment_certificates import AffineFamily, FixedBox, FreeBox, build_moment_problem
from helpers.quantum_baseline import PUBLISHED
from helpers.scenario import LevelSpec, Scenario, chsh_functional, deterministic_box, validate_box

TSIRELSON = 2 * math.sqrt(2)


def test_small_sdp():
    # max x subject to [[1, x], [x, 1]] PSD
    problem = ConicProblem()
    x = problem.add_variable('x')
    coefficients = sparse.csr_matrix(np.array([[0.0], [1.0], [1.0], [0.0]]))
    problem.add_psd_block(2, coefficients, np.array([1.0, 0.0, 0.0, 1.0]))
    problem.set_objective({x: 1.0}, sense='max')
    solution = solve(problem)
    assert solution.status is SolverStatus.OPTIMAL
    assert solution.value_of(problem, 'x') == pytest.approx(1.0, abs=1e-6)


def test_small_lp_with_equality():
    problem = ConicProblem()
    problem.add_variables(['a', 'b'])
    problem.add_equality({0: 1.0, 1: 1.0}, 1.0)
    problem.add_nonneg_block(sparse.identity(2, format='csr'), np.zeros(2))
    problem.set_objective({0: 2.0, 1: 1.0}, sense='min')
    solution = solve(problem)
    assert solution.objective == pytest.approx(1.0, abs=1e-6)
    assert solution.equality_residual < 1e-6


def test_problem_structure_errors():
    problem = ConicProblem()
    problem.add_variable('x')
    with pytest.raises(ProblemStructureError):
        problem.add_variable('x')
    with pytest.raises(ProblemStructureError):
        problem.position('y')
    with pytest.raises(ProblemStructureError):
        problem.add_equality({3: 1.0}, 0.0)
    with pytest.raises(ProblemStructureError):
        problem.add_psd_block(2, np.array([[0.0], [1.0], [0.0], [0.0]]), np.zeros(4))
    with pytest.raises(ValueError):
        problem.set_objective({0: 1.0}, sense='sideways')


def test_unknown_backend():
    with pytest.raises(ValueError):
        create_backend('NOPE')


@pytest.mark.parametrize('level', [LevelSpec.ALMOST_QUANTUM, LevelSpec.Q1])
def test_chsh_maximum_is_tsirelson(chsh_scenario, settings, level):
    problem = build_moment_problem(chsh_scenario, level, FreeBox())
    optimum = maximize_linear(problem, chsh_functional(), settings)
    assert optimum.value == pytest.approx(TSIRELSON, abs=1e-4)
    assert validate_box(optimum.box, tolerance=1e-6, eps_zero=1e-6).valid
    assert chsh_functional().evaluate(optimum.box) == pytest.approx(TSIRELSON, abs=1e-4)


def test_chsh_minimum_is_symmetric(chsh_scenario, settings):
    problem = build_moment_problem(chsh_scenario, LevelSpec.ALMOST_QUANTUM, FreeBox())
    optimum = maximize_linear(problem, chsh_functional(sense='min'), settings)
    assert optimum.value == pytest.approx(-TSIRELSON, abs=1e-4)


def test_chsh_no_signalling_and_local(settings):
    assert maximize_no_signalling(chsh_functional(), settings).value == pytest.approx(4.0, abs=1e-6)
    optimum = local_bound(chsh_functional())
    assert optimum.value == pytest.approx(2.0, abs=1e-8)
    assert chsh_functional().evaluate(optimum.box) == pytest.approx(2.0)


def test_local_bound_minimum(chsh_scenario):
    assert local_bound(chsh_functional(sense='min')).value == pytest.approx(-2.0)


def test_critical_visibility_of_pr_mixture(chsh_scenario, pr, uniform, settings):
    family = AffineFamily(uniform, pr.table - uniform.table)
    problem = build_moment_problem(chsh_scenario, LevelSpec.ALMOST_QUANTUM, family)
    optimum = maximize_linear(problem, settings=settings)
    assert optimum.t == pytest.approx(1 / math.sqrt(2), abs=1e-4)


def test_fixed_box_cannot_be_optimized(published_box, settings):
    problem = build_moment_problem(published_box.scenario, LevelSpec.ALMOST_QUANTUM, FixedBox(published_box))
    with pytest.raises(ProblemStructureError):
        maximize_linear(problem, chsh_functional(), settings)


def test_free_box_needs_objective(chsh_scenario, settings):
    problem = build_moment_problem(chsh_scenario, LevelSpec.ALMOST_QUANTUM, FreeBox())
    with pytest.raises(ProblemStructureError):
        maximize_linear(problem, None, settings)
    with pytest.raises(ProblemStructureError):
        certify_membership(problem, settings)


def test_objective_scenario_must_match(settings):
    problem = build_moment_problem(Scenario.bipartite(3, 2, 2, 2), LevelSpec.Q1, FreeBox())
    with pytest.raises(ScenarioStructureError):
        maximize_linear(problem, chsh_functional(), settings)


def test_lp_local_membership(pr, uniform, chsh_scenario, settings):
    pr_result = lp_local_membership(pr, settings)
    assert not pr_result.member
    assert pr_result.visibility == pytest.approx(0.5, abs=1e-6)
    assert lp_local_membership(uniform, settings).member
    assert lp_local_membership(deterministic_box(chsh_scenario, [(0, 1), (1, 1)]), settings).member


def test_margin_of_a_fixed_matrix_is_its_smallest_eigenvalue():
    # max lambda subject to gamma - lambda * I PSD
    gamma = PUBLISHED.gamma()
    size = gamma.shape[0]
    problem = ConicProblem()
    lam = problem.add_variable('lambda')
    problem.add_psd_block(size, sparse.csr_matrix(-np.eye(size).reshape(-1, 1)), gamma.reshape(-1))
    problem.set_objective({lam: 1.0}, sense='max')
    solution = solve(problem)
    assert solution.value_of(problem, 'lambda') == pytest.approx(np.linalg.eigvalsh(gamma)[0], abs=1e-6)


def test_relaxations_sandwich_the_local_bound(chsh_scenario, rng, settings):
    aq_problem = build_moment_problem(chsh_scenario, LevelSpec.ALMOST_QUANTUM, FreeBox())
    q1_problem = build_moment_problem(chsh_scenario, LevelSpec.Q1, FreeBox())
    for _ in range(4):
        functional = random_functional(chsh_scenario, rng)
        local = local_bound(functional).value
        aq = maximize_linear(aq_problem, functional, settings).value
        assert local <= aq + 1e-6
        assert aq <= maximize_linear(q1_problem, functional, settings).value + 1e-6
        assert aq <= maximize_no_signalling(functional, settings).value + 1e-6


def test_published_functional_minimum_over_almost_quantum(published_box, settings):
    functional = PUBLISHED.bell_functional()
    problem = build_moment_problem(functional.scenario, LevelSpec.ALMOST_QUANTUM, FreeBox())
    optimum = maximize_linear(problem, functional, settings)
    # the stored coefficients and point reach about -1.023 and -1.003, not the quoted -1.052
    assert optimum.value < -1.0
    assert optimum.value <= functional.evaluate(published_box) + 1e-6
    assert functional.evaluate(optimum.box) == pytest.approx(optimum.value, abs=1e-5)
