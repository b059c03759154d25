"""
Nonlocal computation: two parties holding x and y = x XOR z try to output
bits whose XOR equals f(z). Classical, spectral and macroscopic-locality
values of the task.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np
from scipy.linalg import hadamard
from tqdm import tqdm

from evaluators.principle_evaluator import PrincipleEvaluator, metric
from helpers.conic_solver import SolverSettings, maximize_linear
from helpers.errors import ScenarioStructureError
from helpers.moment_certificates import FreeBox, build_moment_problem
from helpers.scenario import BellFunctional, LevelSpec, Scenario

logger = logging.getLogger(__name__)

MAX_NLC_INPUTS = 16
PRIOR_TOLERANCE = 1e-12


@dataclass(frozen=True, eq=False)
class NonlocalComputationTask:
    n: int
    f: np.ndarray
    prior: np.ndarray

    def __post_init__(self):
        f = np.asarray(self.f, dtype=int).reshape(-1)
        prior = np.asarray(self.prior, dtype=float).reshape(-1)
        if self.n < 1:
            raise ScenarioStructureError(f"A task needs at least one bit, got n={self.n}")
        size = 2 ** self.n
        if f.size != size or prior.size != size:
            raise ScenarioStructureError(f"Truth table and prior need {size} entries, got {f.size} and {prior.size}")
        if not np.isin(f, (0, 1)).all():
            raise ScenarioStructureError("Truth table values must be 0 or 1")
        if (prior < 0).any() or abs(prior.sum() - 1.0) > PRIOR_TOLERANCE:
            raise ScenarioStructureError(f"Prior must be nonnegative and sum to 1, sums to {prior.sum():.15f}")
        object.__setattr__(self, 'f', f)
        object.__setattr__(self, 'prior', prior)

    @property
    def size(self) -> int:
        return 2 ** self.n

    def signed_prior(self) -> np.ndarray:
        return np.where(self.f == 1, -1.0, 1.0) * self.prior

    def to_dict(self) -> Dict[str, Any]:
        return {'n': self.n, 'f': self.f.tolist(), 'prior': self.prior.tolist()}


@dataclass(frozen=True, eq=False)
class PhiOperator:
    """Phi[x, y] = (-1)^f(x XOR y) * prior(x XOR y)"""
    matrix: np.ndarray

    @classmethod
    def from_task(cls, task: NonlocalComputationTask) -> 'PhiOperator':
        z = np.bitwise_xor.outer(np.arange(task.size), np.arange(task.size))
        return cls(task.signed_prior()[z])

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.matrix, 2))


def nlc_classical_bound(task: NonlocalComputationTask) -> float:
    """1/2 (1 + max_u |sum_z (-1)^(f(z) + u.z) prior(z)|) through a Walsh-Hadamard transform"""
    spectrum = hadamard(task.size) @ task.signed_prior()
    return 0.5 * (1.0 + float(np.max(np.abs(spectrum))))


def nlc_phi_bound(task: NonlocalComputationTask) -> float:
    return 0.5 * (1.0 + PhiOperator.from_task(task).norm)


def nlc_functional(task: NonlocalComputationTask) -> BellFunctional:
    """Success probability 2^-n prior(x XOR y) [a XOR b = f(x XOR y)] as a Bell functional"""
    size = task.size
    scenario = Scenario.bipartite(size, 2, size, 2)
    z = np.bitwise_xor.outer(np.arange(size), np.arange(size))
    weight = task.prior[z] / size
    target = task.f[z]
    parity = np.array([[0, 1], [1, 0]])
    wins = parity[np.newaxis, np.newaxis, :, :] == target[:, :, np.newaxis, np.newaxis]
    return BellFunctional.from_full(scenario, weight[:, :, np.newaxis, np.newaxis] * wins)


def nlc_q1_value(task: NonlocalComputationTask, settings: Optional[SolverSettings] = None) -> float:
    """Maximum success probability over the macroscopic-locality relaxation"""
    if task.size > MAX_NLC_INPUTS:
        raise ScenarioStructureError(f"{task.size} inputs per party exceed the cap of {MAX_NLC_INPUTS}")
    functional = nlc_functional(task)
    problem = build_moment_problem(functional.scenario, LevelSpec.Q1, FreeBox())
    return float(maximize_linear(problem, functional, settings).value)


def random_task(n: int, rng: np.random.Generator) -> NonlocalComputationTask:
    """Random truth table with a Dirichlet prior"""
    size = 2 ** n
    prior = rng.dirichlet(np.ones(size))
    return NonlocalComputationTask(n, rng.integers(0, 2, size=size), prior / prior.sum())


class NLCEvaluator(PrincipleEvaluator):
    runtime_gate = 300.0

    def evaluate(self) -> Dict[str, Dict[str, Any]]:
        count = int(self.param('nlc_tasks', 20))
        seed = int(self.param('aq_seed', 2014))
        rng = np.random.default_rng(seed)

        worst_gap = -np.inf
        worst_mismatch = 0.0
        for i in tqdm(range(count), desc='NLC tasks', disable=not self.verbose):
            task = random_task(2 + i % 2, rng)
            classical = nlc_classical_bound(task)
            worst_gap = max(worst_gap, nlc_q1_value(task, self.settings) - classical)
            worst_mismatch = max(worst_mismatch, abs(nlc_phi_bound(task) - classical))

        return {
            'q1_minus_classical': metric(
                float(worst_gap), worst_gap <= 1e-6,
                f"Largest excess of the macroscopic-locality value over the classical value in {count} tasks",
                reference_value=0.0, tolerance=1e-6
            ),
            'phi_vs_walsh': metric(
                worst_mismatch, worst_mismatch <= 1e-9,
                "Largest difference between the spectral and Walsh-Hadamard bounds",
                reference_value=0.0, tolerance=1e-9
            )
        }
