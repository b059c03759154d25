import logging
from typing import Any, Dict, Optional, Union

import numpy as np

from evaluators.principle_evaluator import PrincipleEvaluator, metric
from helpers.conic_solver import SolverSettings, local_bound, maximize_linear, maximize_no_signalling
from helpers.errors import ScenarioStructureError
from helpers.moment_certificates import FreeBox, build_moment_problem
from helpers.scenario import BellFunctional, LevelSpec, Scenario

logger = logging.getLogger(__name__)

MAX_NTCC_BITS = 2


def ntcc_bound(n: int, m: int) -> float:
    """Average success allowed when m bits are sent to compute an n-bit inner product"""
    if m < 0 or m >= n:
        raise ScenarioStructureError(f"Need 0 <= m < n, got n={n}, m={m}")
    return 0.5 * (1.0 + 2.0 ** ((m - n) / 2.0))


def ntcc_scenario(n: int, m: int) -> Scenario:
    """Alice: input x, output message. Bob: input (message, y) flattened as message * 2^n + y"""
    return Scenario.bipartite(2 ** n, max(2 ** m, 2), 2 ** (m + n), 2)


def ntcc_functional(n: int, m: int) -> BellFunctional:
    """Uniform-average probability that Bob, fed Alice's output, outputs x.y mod 2"""
    if n > MAX_NTCC_BITS:
        raise ScenarioStructureError(f"n={n} exceeds the cap of {MAX_NTCC_BITS} bits")
    ntcc_bound(n, m)
    scenario = ntcc_scenario(n, m)
    size = 2 ** n
    full = np.zeros(scenario.table_shape)
    for x in range(size):
        for y in range(size):
            target = bin(x & y).count('1') % 2
            for a in range(scenario.outputs_per_party[0]):
                message = a if m > 0 else 0
                full[x, message * size + y, a, target] += 1.0 / size ** 2
    return BellFunctional.from_full(scenario, full)


def ntcc_game_value(n: int, m: int, level: Union[LevelSpec, str] = LevelSpec.ALMOST_QUANTUM,
                    settings: Optional[SolverSettings] = None) -> float:
    """
    Best average success of the inner-product game with an m-bit message

    Args:
        n (int): Input length
        m (int): Message length, below n
        level: LevelSpec, 'local' or 'ns'
        settings (SolverSettings): Solver settings

    Returns:
        Optimum of the success functional over the chosen set
    """
    functional = ntcc_functional(n, m)
    if level == 'local':
        return local_bound(functional).value
    if level == 'ns':
        return maximize_no_signalling(functional, settings).value
    level = LevelSpec.from_name(level) if isinstance(level, str) else level
    problem = build_moment_problem(functional.scenario, level, FreeBox())
    logger.info(f"NTCC game n={n}, m={m} at level {level.value}: {problem.size}x{problem.size} certificate")
    return float(maximize_linear(problem, functional, settings).value)


class NTCCEvaluator(PrincipleEvaluator):
    runtime_gate = 600.0

    def evaluate(self) -> Dict[str, Dict[str, Any]]:
        n = int(self.param('ntcc_n', 2))
        m = int(self.param('ntcc_m', 1))
        bound = ntcc_bound(n, m)
        value = ntcc_game_value(n, m, LevelSpec.ALMOST_QUANTUM, self.settings)
        classical = ntcc_game_value(n, m, 'local')
        return {
            'ntcc_almost_quantum': metric(
                value, value <= bound + 1e-4,
                f"Average inner-product success with {m} of {n} bits sent",
                reference_value=bound, tolerance=1e-4
            ),
            'ntcc_local_ordering': metric(
                classical, classical <= value + 1e-6,
                "Best deterministic strategy stays below the relaxation value"
            )
        }
