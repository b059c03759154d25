"""
Equality-constrained conic programs over PSD, nonnegative and free blocks.

ConicProblem is a backend-neutral description; backends turn it into a
Solution. The default backend models the problem with cvxpy and solves it
with the Clarabel interior-point solver.
"""

import logging
import math
import time
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Hashable, List, Optional, Sequence, Tuple, Union

import cvxpy as cp
import numpy as np
from scipy import sparse

from helpers.errors import (
    InconsistentOptimumError, InvalidCGError, ProblemStructureError,
    ScenarioStructureError, SolverError
)
from helpers.moment_certificates import AffineFamily, FixedBox, FreeBox, MomentProblem, T_VARIABLE
from helpers.scenario import (
    BellFunctional, Box, CGVector, LevelSpec, Scenario, cg_to_box, cg_to_full_map,
    deterministic_box, party_strategies, strategy_count, uniform_box, validate_box
)

logger = logging.getLogger(__name__)

MEMBERSHIP_THRESHOLD = -1e-7
OPTIMUM_VALIDATION_TOL = 1e-6
MAX_STRATEGIES = 10 ** 5
VISIBILITY_CAP = 1e3


class SolverStatus(Enum):
    OPTIMAL = 'optimal'
    INFEASIBLE = 'infeasible'
    UNBOUNDED = 'unbounded'
    MAX_ITERATIONS = 'max_iterations'


@dataclass
class SolverSettings:
    """Accuracy targets and backend choice for every solve"""
    backend: str = 'CLARABEL'
    gap_tol: float = 1e-7
    feas_tol: float = 1e-7
    max_iters: int = 500
    verbose: bool = False

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class PSDBlock:
    """Square matrix block with row-major vec(X) = coefficients @ z + offset"""
    size: int
    coefficients: sparse.csr_matrix
    offset: np.ndarray
    name: str = 'psd'


@dataclass
class NonnegBlock:
    coefficients: sparse.csr_matrix
    offset: np.ndarray
    name: str = 'nonneg'


@dataclass
class FreeBlock:
    variables: Tuple[int, ...]
    name: str = 'free'


ConeBlock = Union[PSDBlock, NonnegBlock, FreeBlock]


def _as_csr(matrix, num_variables: int, rows: int, name: str) -> sparse.csr_matrix:
    matrix = sparse.csr_matrix(matrix, dtype=float)
    if matrix.shape != (rows, num_variables):
        raise ProblemStructureError(
            f"Block '{name}' has coefficient shape {matrix.shape}, expected {(rows, num_variables)}"
        )
    return matrix


class ConicProblem:
    """
    Linear objective over registered scalar variables, subject to
    equalities and cone blocks whose entries are affine in the variables.
    """

    def __init__(self):
        self.variable_names: List[Hashable] = []
        self._positions: Dict[Hashable, int] = {}
        self.objective: Dict[int, float] = {}
        self.objective_constant = 0.0
        self.sense = 'min'
        self._equality_rows: List[Tuple[Dict[int, float], float]] = []
        self.blocks: List[ConeBlock] = []

    @property
    def num_variables(self) -> int:
        return len(self.variable_names)

    def add_variable(self, name: Hashable) -> int:
        if name in self._positions:
            raise ProblemStructureError(f"Variable {name!r} registered twice")
        self._positions[name] = len(self.variable_names)
        self.variable_names.append(name)
        return self._positions[name]

    def add_variables(self, names: Sequence[Hashable]) -> List[int]:
        return [self.add_variable(name) for name in names]

    def position(self, name: Hashable) -> int:
        try:
            return self._positions[name]
        except KeyError:
            raise ProblemStructureError(f"Unknown variable {name!r}")

    def _check_terms(self, terms: Dict[int, float]) -> Dict[int, float]:
        for variable in terms:
            if not 0 <= variable < self.num_variables:
                raise ProblemStructureError(f"Term references unregistered variable {variable}")
        return {int(k): float(v) for k, v in terms.items()}

    def set_objective(self, terms: Dict[int, float], constant: float = 0.0, sense: str = 'min') -> None:
        if sense not in ('min', 'max'):
            raise ValueError(f"Unknown optimization sense: {sense}")
        self.objective = self._check_terms(terms)
        self.objective_constant = float(constant)
        self.sense = sense

    def add_equality(self, terms: Dict[int, float], rhs: float) -> None:
        self._equality_rows.append((self._check_terms(terms), float(rhs)))

    def add_equalities(self, matrix, rhs: np.ndarray) -> None:
        """Rows of matrix @ z == rhs"""
        matrix = sparse.csr_matrix(matrix, dtype=float)
        rhs = np.asarray(rhs, dtype=float).reshape(-1)
        if matrix.shape[1] != self.num_variables or matrix.shape[0] != rhs.size:
            raise ProblemStructureError(f"Equality block shape {matrix.shape} does not fit {rhs.size} rows")
        for row in range(matrix.shape[0]):
            start, stop = matrix.indptr[row], matrix.indptr[row + 1]
            terms = dict(zip(matrix.indices[start:stop].tolist(), matrix.data[start:stop].tolist()))
            if not terms:
                if abs(rhs[row]) > 0.0:
                    raise ProblemStructureError(f"Equality row {row} reads 0 == {rhs[row]}")
                continue
            self._equality_rows.append((terms, float(rhs[row])))

    def add_psd_block(self, size: int, coefficients, offset: np.ndarray, name: str = 'psd') -> PSDBlock:
        matrix = _as_csr(coefficients, self.num_variables, size * size, name)
        offset = np.asarray(offset, dtype=float).reshape(-1)
        transpose = np.arange(size * size).reshape(size, size).T.reshape(-1)
        if abs(matrix - matrix[transpose]).max() > 1e-12 or np.max(np.abs(offset - offset[transpose])) > 1e-12:
            raise ProblemStructureError(f"PSD block '{name}' is not symmetric")
        block = PSDBlock(size, matrix, offset, name)
        self.blocks.append(block)
        return block

    def add_nonneg_block(self, coefficients, offset: np.ndarray, name: str = 'nonneg') -> NonnegBlock:
        offset = np.asarray(offset, dtype=float).reshape(-1)
        block = NonnegBlock(_as_csr(coefficients, self.num_variables, offset.size, name), offset, name)
        self.blocks.append(block)
        return block

    def add_free_block(self, variables: Sequence[int], name: str = 'free') -> FreeBlock:
        self._check_terms({v: 0.0 for v in variables})
        block = FreeBlock(tuple(variables), name)
        self.blocks.append(block)
        return block

    def equality_system(self) -> Tuple[sparse.csr_matrix, np.ndarray]:
        rows, cols, values = [], [], []
        rhs = []
        for row, (terms, value) in enumerate(self._equality_rows):
            for variable, coefficient in terms.items():
                rows.append(row)
                cols.append(variable)
                values.append(coefficient)
            rhs.append(value)
        matrix = sparse.csr_matrix((values, (rows, cols)), shape=(len(rhs), self.num_variables))
        return matrix, np.array(rhs)

    def objective_vector(self) -> np.ndarray:
        vector = np.zeros(self.num_variables)
        for variable, coefficient in self.objective.items():
            vector[variable] = coefficient
        return vector


@dataclass
class Solution:
    status: SolverStatus
    objective: Optional[float]
    values: Optional[np.ndarray]
    block_values: List[Optional[np.ndarray]]
    duality_gap: Optional[float]
    equality_residual: Optional[float]
    iterations: Optional[int]
    backend: str
    solve_time: float = 0.0
    raw_status: str = ''

    def value_of(self, problem: ConicProblem, name: Hashable) -> float:
        return float(self.values[problem.position(name)])

    def diagnostics(self) -> Dict[str, Any]:
        return {
            'status': self.status.value,
            'raw_status': self.raw_status,
            'objective': self.objective,
            'duality_gap': self.duality_gap,
            'equality_residual': self.equality_residual,
            'iterations': self.iterations,
            'backend': self.backend,
            'solve_time': self.solve_time
        }


class ConicBackend(ABC):
    @abstractmethod
    def solve(self, problem: ConicProblem, settings: SolverSettings) -> Solution:
        """
        Solve a conic problem

        Args:
            problem (ConicProblem): Problem to solve
            settings (SolverSettings): Accuracy targets and iteration cap

        Returns:
            Solution with status, values and diagnostics
        """
        pass


class CvxpyBackend(ConicBackend):
    STATUS_MAP = {
        cp.OPTIMAL: SolverStatus.OPTIMAL,
        cp.OPTIMAL_INACCURATE: SolverStatus.MAX_ITERATIONS,
        cp.USER_LIMIT: SolverStatus.MAX_ITERATIONS,
        cp.INFEASIBLE: SolverStatus.INFEASIBLE,
        cp.INFEASIBLE_INACCURATE: SolverStatus.INFEASIBLE,
        cp.UNBOUNDED: SolverStatus.UNBOUNDED,
        cp.UNBOUNDED_INACCURATE: SolverStatus.UNBOUNDED
    }

    def __init__(self, solver: str):
        self.solver = solver

    def _solver_options(self, settings: SolverSettings) -> Dict[str, Any]:
        # Internal targets sit one decade below the reported ones
        inner_gap = settings.gap_tol / 10.0
        inner_feas = settings.feas_tol / 10.0
        if self.solver == cp.CLARABEL:
            return {'tol_gap_abs': inner_gap, 'tol_gap_rel': inner_gap,
                    'tol_feas': inner_feas, 'max_iter': settings.max_iters}
        if self.solver == cp.SCS:
            return {'eps_abs': inner_feas, 'eps_rel': inner_gap, 'max_iters': max(settings.max_iters, 100000)}
        if self.solver == cp.CVXOPT:
            return {'abstol': inner_gap, 'reltol': inner_gap, 'feastol': inner_feas,
                    'max_iters': settings.max_iters}
        return {}

    def solve(self, problem: ConicProblem, settings: SolverSettings) -> Solution:
        z = cp.Variable(problem.num_variables)
        constraints = []

        equality_matrix, equality_rhs = problem.equality_system()
        if equality_matrix.shape[0]:
            constraints.append(cp.Constant(equality_matrix) @ z == equality_rhs)

        block_expressions = []
        block_constraints = []
        for block in problem.blocks:
            if isinstance(block, PSDBlock):
                flat = cp.Constant(block.coefficients) @ z + block.offset
                matrix = cp.reshape(flat, (block.size, block.size), order='C')
                constraint = matrix >> 0
            elif isinstance(block, NonnegBlock):
                matrix = cp.Constant(block.coefficients) @ z + block.offset
                constraint = matrix >= 0
            else:
                block_expressions.append(None)
                block_constraints.append(None)
                continue
            block_expressions.append(matrix)
            block_constraints.append(constraint)
            constraints.append(constraint)

        objective_expression = problem.objective_vector() @ z + problem.objective_constant
        if problem.sense == 'max':
            model = cp.Problem(cp.Maximize(objective_expression), constraints)
        else:
            model = cp.Problem(cp.Minimize(objective_expression), constraints)

        start_time = time.time()
        try:
            model.solve(solver=self.solver, verbose=settings.verbose, **self._solver_options(settings))
        except cp.error.SolverError as e:
            raise SolverError(f"{self.solver} failed: {str(e)}", {'backend': self.solver})
        solve_time = time.time() - start_time

        raw_status = model.status
        status = self.STATUS_MAP.get(raw_status)
        if status is None:
            raise SolverError(f"{self.solver} returned status {raw_status}", {'backend': self.solver})

        iterations = model.solver_stats.num_iters if model.solver_stats is not None else None
        if z.value is None:
            return Solution(status, None, None, [None] * len(problem.blocks), None, None,
                            iterations, self.solver, solve_time, raw_status)

        values = np.asarray(z.value, dtype=float)
        block_values = [None if e is None else np.asarray(e.value, dtype=float) for e in block_expressions]

        # Complementarity sum_k <Z_k, X_k> equals primal minus dual objective
        gap = 0.0
        for value, constraint in zip(block_values, block_constraints):
            if constraint is None or constraint.dual_value is None:
                continue
            gap += float(np.sum(np.asarray(constraint.dual_value) * value))
        residual = float(np.max(np.abs(equality_matrix @ values - equality_rhs))) if equality_matrix.shape[0] else 0.0

        objective = float(model.value)
        scale = max(1.0, abs(objective))
        if status is SolverStatus.OPTIMAL and (abs(gap) > settings.gap_tol * scale or residual > settings.feas_tol * scale):
            logger.warning(f"{self.solver} reported optimal with gap {gap:.2e} and residual {residual:.2e}")
            status = SolverStatus.MAX_ITERATIONS

        return Solution(status, objective, values, block_values, abs(gap), residual,
                        iterations, self.solver, solve_time, raw_status)


backend_map: Dict[str, Callable[[], ConicBackend]] = {
    'CLARABEL': lambda: CvxpyBackend(cp.CLARABEL),
    'SCS': lambda: CvxpyBackend(cp.SCS),
    'CVXOPT': lambda: CvxpyBackend(cp.CVXOPT)
}


def create_backend(name: str) -> ConicBackend:
    factory = backend_map.get(name.upper())
    if not factory:
        raise ValueError(f"Unknown solver backend: {name}")
    return factory()


def solve(problem: ConicProblem, settings: Optional[SolverSettings] = None) -> Solution:
    settings = settings or SolverSettings()
    solution = create_backend(settings.backend).solve(problem, settings)
    logger.debug(f"Solve finished: {solution.diagnostics()}")
    return solution


def _require_values(solution: Solution, context: str) -> Solution:
    if solution.status in (SolverStatus.INFEASIBLE, SolverStatus.UNBOUNDED) or solution.values is None:
        raise SolverError(f"{context}: solver returned {solution.status.value}", solution.diagnostics())
    if solution.status is SolverStatus.MAX_ITERATIONS:
        logger.warning(f"{context}: using best iterate after {solution.raw_status} ({solution.diagnostics()})")
    return solution


@dataclass
class MembershipResult:
    margin: float
    member: bool
    gamma: np.ndarray
    solution: Solution


def certify_membership(mp: MomentProblem, settings: Optional[SolverSettings] = None,
                       threshold: float = MEMBERSHIP_THRESHOLD) -> MembershipResult:
    """Maximize lambda with Gamma - lambda * I PSD over the problem's free entries"""
    if not isinstance(mp.binding, FixedBox):
        raise ProblemStructureError("Membership needs a FixedBox binding")

    problem = ConicProblem()
    problem.add_variables(mp.variables)
    margin_variable = problem.add_variable('lambda')

    coefficients, offset = mp.gamma_map()
    identity = sparse.csr_matrix(-np.eye(mp.size).reshape(-1, 1))
    problem.add_psd_block(mp.size, sparse.hstack([coefficients, identity]), offset, name='gamma')
    problem.set_objective({margin_variable: 1.0}, sense='max')

    solution = _require_values(solve(problem, settings), 'psd_margin')
    margin = solution.value_of(problem, 'lambda')
    gamma = mp.gamma_at(solution.values[:mp.num_variables])
    logger.debug(f"PSD margin {margin:.3e} at level {mp.level.value}")
    return MembershipResult(margin, margin >= threshold, gamma, solution)


def psd_margin(mp: MomentProblem, settings: Optional[SolverSettings] = None) -> float:
    return certify_membership(mp, settings).margin


@dataclass
class LinearOptimum:
    value: float
    box: Optional[Box]
    gamma: Optional[np.ndarray]
    solution: Solution
    t: Optional[float] = None


def _full_table_nonneg(problem: ConicProblem, scenario: Scenario,
                       cg_coefficients: sparse.csr_matrix, cg_offset: np.ndarray) -> None:
    columns, offset = cg_to_full_map(scenario)
    matrix = sparse.csr_matrix(columns @ cg_coefficients.toarray())
    problem.add_nonneg_block(matrix, columns @ cg_offset + offset, name='full_table')


def _validated(box: Box, context: str) -> Box:
    report = validate_box(box, tolerance=OPTIMUM_VALIDATION_TOL, eps_zero=OPTIMUM_VALIDATION_TOL)
    if not report.valid:
        raise InconsistentOptimumError(f"{context}: optimizer box fails validation {report.violations}")
    return box


def _box_from_cg(scenario: Scenario, coefficients: np.ndarray, context: str) -> Box:
    try:
        box = cg_to_box(CGVector(scenario, coefficients), eps_zero=OPTIMUM_VALIDATION_TOL)
    except InvalidCGError as e:
        raise InconsistentOptimumError(f"{context}: {str(e)}")
    return _validated(box, context)


def maximize_linear(mp: MomentProblem, objective: Optional[BellFunctional] = None,
                    settings: Optional[SolverSettings] = None) -> LinearOptimum:
    """
    Optimize a Bell functional (FreeBox) or the family parameter t (AffineFamily)

    Args:
        mp (MomentProblem): Problem with a FreeBox or AffineFamily binding
        objective (BellFunctional): Functional in the problem's CG coordinates; None maximizes t
        settings (SolverSettings): Solver settings

    Returns:
        LinearOptimum with value, validated optimizer box and certificate
    """
    binding = mp.binding
    if isinstance(binding, FixedBox):
        raise ProblemStructureError("maximize_linear needs a FreeBox or AffineFamily binding")
    if objective is None and not isinstance(binding, AffineFamily):
        raise ProblemStructureError("A FreeBox problem needs a Bell functional objective")
    if objective is not None and objective.scenario != mp.scenario:
        raise ScenarioStructureError("Objective belongs to a different scenario")

    problem = ConicProblem()
    problem.add_variables(mp.variables)
    cg_coefficients, cg_offset = mp.cg_map()

    if objective is None:
        t_position = problem.position(T_VARIABLE)
        problem.set_objective({t_position: 1.0}, sense='max')
    else:
        weights = cg_coefficients.T @ objective.coefficients
        terms = {i: float(w) for i, w in enumerate(weights) if w != 0.0}
        problem.set_objective(terms, float(objective.coefficients @ cg_offset) + objective.constant,
                              sense=objective.sense)

    if isinstance(binding, AffineFamily):
        t_position = problem.position(T_VARIABLE)
        low, high = binding.bounds
        bounds = sparse.csr_matrix(([1.0, -1.0], ([0, 1], [t_position, t_position])), shape=(2, problem.num_variables))
        problem.add_nonneg_block(bounds, np.array([-low, high]), name='t_bounds')

    gamma_coefficients, gamma_offset = mp.gamma_map()
    problem.add_psd_block(mp.size, gamma_coefficients, gamma_offset, name='gamma')
    if mp.level is LevelSpec.Q1:
        _full_table_nonneg(problem, mp.scenario, cg_coefficients, cg_offset)

    solution = _require_values(solve(problem, settings), 'maximize_linear')
    z = solution.values
    gamma = mp.gamma_at(z)

    if isinstance(binding, AffineFamily):
        t = solution.value_of(problem, T_VARIABLE)
        box = _validated(binding.box_at(t), 'maximize_linear')
        value = solution.objective if objective is not None else t
        return LinearOptimum(value, box, gamma, solution, t)

    box = _box_from_cg(mp.scenario, cg_coefficients @ z + cg_offset, 'maximize_linear')
    return LinearOptimum(solution.objective, box, gamma, solution)


def maximize_no_signalling(functional: BellFunctional, settings: Optional[SolverSettings] = None) -> LinearOptimum:
    """Optimize over the no-signalling polytope: CG variables with a nonnegative full table"""
    scenario = functional.scenario
    count = functional.coefficients.size
    problem = ConicProblem()
    problem.add_variables([('cg', i) for i in range(count)])
    problem.add_free_block(list(range(count)), name='cg')
    problem.set_objective({i: float(w) for i, w in enumerate(functional.coefficients)},
                          functional.constant, sense=functional.sense)
    _full_table_nonneg(problem, scenario, sparse.identity(count, format='csr'), np.zeros(count))

    solution = _require_values(solve(problem, settings), 'maximize_no_signalling')
    box = _box_from_cg(scenario, solution.values, 'maximize_no_signalling')
    return LinearOptimum(solution.objective, box, None, solution)


def _strategy_tensors(scenario: Scenario) -> List[np.ndarray]:
    count = strategy_count(scenario)
    if count > MAX_STRATEGIES:
        raise ScenarioStructureError(f"{count} deterministic strategies exceed the cap of {MAX_STRATEGIES}")
    return [party_strategies(scenario, k) for k in range(scenario.num_parties)]


def _deterministic_tables(scenario: Scenario) -> np.ndarray:
    """(strategies, table_size) matrix of every deterministic box"""
    n = scenario.num_parties
    operands = []
    for k, one_hot in enumerate(_strategy_tensors(scenario)):
        operands += [one_hot, [k, n + k, 2 * n + k]]
    tables = np.einsum(*operands, list(range(3 * n)), optimize=True)
    return tables.reshape(strategy_count(scenario), scenario.table_size)


@dataclass
class LocalOptimum:
    value: float
    box: Box
    strategy: Tuple[Tuple[int, ...], ...]


def local_bound(functional: BellFunctional) -> LocalOptimum:
    """Exact optimum over deterministic strategies, the vertices of the local polytope"""
    scenario = functional.scenario
    n = scenario.num_parties
    tensors = _strategy_tensors(scenario)
    operands = [functional.full_coefficients(), list(range(n, 3 * n))]
    for k, one_hot in enumerate(tensors):
        operands += [one_hot, [k, n + k, 2 * n + k]]
    values = np.einsum(*operands, list(range(n)), optimize=True) + functional.constant

    flat = int(np.argmax(values) if functional.sense == 'max' else np.argmin(values))
    chosen = np.unravel_index(flat, values.shape)
    strategy = tuple(tuple(int(a) for a in tensors[k][chosen[k]].argmax(axis=1)) for k in range(n))
    return LocalOptimum(float(values.reshape(-1)[flat]), deterministic_box(scenario, strategy), strategy)


@dataclass
class LocalMembership:
    member: bool
    visibility: float
    solution: Solution

    @property
    def margin(self) -> float:
        return self.visibility - 1.0


def lp_local_membership(box: Box, settings: Optional[SolverSettings] = None,
                        tolerance: float = 1e-7) -> LocalMembership:
    """
    Largest v with v * P + (1 - v) * uniform a mixture of deterministic boxes

    The box is local iff v >= 1 (within tolerance).
    """
    scenario = box.scenario
    tables = _deterministic_tables(scenario)
    strategies = tables.shape[0]
    uniform = uniform_box(scenario).table.reshape(-1)
    target = box.table.reshape(-1)

    problem = ConicProblem()
    problem.add_variables([('q', i) for i in range(strategies)])
    visibility = problem.add_variable('v')

    equalities = sparse.hstack([sparse.csr_matrix(tables.T), sparse.csr_matrix((uniform - target)[:, None])])
    problem.add_equalities(equalities, uniform)
    problem.add_equality({i: 1.0 for i in range(strategies)}, 1.0)

    bounds = sparse.vstack([
        sparse.identity(strategies + 1, format='csr'),
        sparse.csr_matrix(([-1.0], ([0], [visibility])), shape=(1, strategies + 1))
    ])
    offset = np.zeros(strategies + 2)
    offset[-1] = VISIBILITY_CAP
    problem.add_nonneg_block(bounds, offset, name='weights')
    problem.set_objective({visibility: 1.0}, sense='max')

    solution = _require_values(solve(problem, settings), 'lp_local_membership')
    v = solution.value_of(problem, 'v')
    return LocalMembership(v >= 1.0 - tolerance, v, solution)
