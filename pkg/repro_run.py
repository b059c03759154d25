import os
import sys
import logging
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from evaluators.closure_evaluator import ClosureEvaluator
from evaluators.ic_evaluator import Table1Evaluator, UffinkEvaluator
from evaluators.landmark_evaluator import CHSHEvaluator, Section3Evaluator
from evaluators.lo_evaluator import LOEvaluator
from evaluators.nlc_evaluator import NLCEvaluator
from evaluators.ntcc_evaluator import NTCCEvaluator
from evaluators.principle_evaluator import PrincipleEvaluator
from helpers.conic_solver import SolverSettings

# Load environment variables from config.env
load_dotenv('config.env')

logger = logging.getLogger(__name__)

#SOLVER
AQ_SOLVER = os.getenv('AQ_SOLVER', 'CLARABEL')
AQ_GAP_TOL = float(os.getenv('AQ_GAP_TOL', '1e-7'))
AQ_FEAS_TOL = float(os.getenv('AQ_FEAS_TOL', '1e-7'))
AQ_MAX_ITERS = int(os.getenv('AQ_MAX_ITERS', '500'))

#REPRODUCTION
AQ_GRID_RESOLUTION = int(os.getenv('AQ_GRID_RESOLUTION', '512'))
AQ_SEED = int(os.getenv('AQ_SEED', '2014'))
AQ_MAX_CLIQUE = int(os.getenv('AQ_MAX_CLIQUE', '8'))

#EXECUTION
AQ_MAX_WORKERS = int(os.getenv('AQ_MAX_WORKERS', '4'))
AQ_OUTPUT_DIR = os.getenv('AQ_OUTPUT_DIR', 'repro_results')

TARGETS = ('section3', 'table1', 'chsh', 'nlc', 'ntcc', 'closure', 'lo', 'uffink')


def get_config(overrides: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Get configuration settings, with non-None overrides replacing environment values"""
    config = {
        'AQ_SOLVER': AQ_SOLVER,
        'AQ_GAP_TOL': AQ_GAP_TOL,
        'AQ_FEAS_TOL': AQ_FEAS_TOL,
        'AQ_MAX_ITERS': AQ_MAX_ITERS,
        'AQ_GRID_RESOLUTION': AQ_GRID_RESOLUTION,
        'AQ_SEED': AQ_SEED,
        'AQ_MAX_CLIQUE': AQ_MAX_CLIQUE,
        'AQ_MAX_WORKERS': AQ_MAX_WORKERS,
        'AQ_OUTPUT_DIR': AQ_OUTPUT_DIR,
        'VERBOSE': False
    }
    config.update({key: value for key, value in (overrides or {}).items() if value is not None})
    config['solver_settings'] = SolverSettings(
        backend=config['AQ_SOLVER'].upper(),
        gap_tol=config['AQ_GAP_TOL'],
        feas_tol=config['AQ_FEAS_TOL'],
        max_iters=config['AQ_MAX_ITERS'],
        verbose=config['VERBOSE']
    )
    return config


def create_evaluator(target: str, config: Dict[str, Any],
                     params: Optional[Dict[str, Any]] = None) -> PrincipleEvaluator:
    """Create appropriate evaluator based on reproduction target"""
    evaluator_map = {
        'section3': Section3Evaluator,
        'table1': Table1Evaluator,
        'chsh': CHSHEvaluator,
        'nlc': NLCEvaluator,
        'ntcc': NTCCEvaluator,
        'closure': ClosureEvaluator,
        'lo': LOEvaluator,
        'uffink': UffinkEvaluator
    }

    evaluator_class = evaluator_map.get(target)
    if not evaluator_class:
        raise ValueError(f"Unknown reproduction target: {target}")

    return evaluator_class(config=config, target=target, params=params)


def run_targets(targets: List[str], config: Dict[str, Any],
                params: Optional[Dict[str, Any]] = None) -> List[Dict[str, Any]]:
    """Run reproduction targets one after another"""
    results = []
    for target in targets:
        evaluator = create_evaluator(target, config, params)
        logger.info(f"Running {target}")
        results.append(evaluator.run_evaluation())
    return results


# Driver
if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    selected = sys.argv[1:] or ['section3', 'chsh']
    outcomes = run_targets(selected, get_config())
    for outcome in outcomes:
        print(f"{outcome['target']}: {outcome['status']}")
    sys.exit(0 if all(o['status'] == 'passed' for o in outcomes) else 1)
