from abc import ABC, abstractmethod
from typing import Any, Dict, Iterable, Optional
from datetime import datetime
import logging
import time

from helpers.conic_solver import SolverSettings

logger = logging.getLogger(__name__)


def metric(score: Any, passed: bool, explanation: str = '',
           reference_value: Any = None, tolerance: Optional[float] = None,
           solver_status: Optional[str] = None) -> Dict[str, Any]:
    """One entry of an evaluator's metrics_scores"""
    if solver_status is not None and solver_status != 'optimal':
        note = f"solver stopped with {solver_status}, score taken from the last iterate"
        explanation = f"{explanation} ({note})" if explanation else note
    return {
        'score': score,
        'reference_value': reference_value,
        'tolerance': tolerance,
        'passed': bool(passed),
        'explanation': explanation,
        'solver_status': solver_status
    }


def worst_status(statuses: Iterable[str]) -> Optional[str]:
    """First non-optimal solver status, 'optimal' if all were, None if there were none"""
    statuses = list(statuses)
    if not statuses:
        return None
    return next((status for status in statuses if status != 'optimal'), 'optimal')


class PrincipleEvaluator(ABC):
    # Seconds a full run may take before the report flags it as slow
    runtime_gate: float = 600.0

    def __init__(self,
                 config: Dict[str, Any],
                 target: str,
                 params: Optional[Dict[str, Any]] = None):
        """
        Base class for reproduction targets

        Args:
            config (Dict[str, Any]): Configuration dictionary from get_config()
            target (str): Name of the reproduction target
            params (Dict[str, Any]): Target-specific overrides (seeds, sizes, grid resolution)
        """
        self.config = config
        self.target = target
        self.params = params or {}
        self.settings: SolverSettings = config.get('solver_settings') or SolverSettings()
        self.verbose = bool(config.get('VERBOSE', False))

    def param(self, name: str, default: Any) -> Any:
        """Target override, then config key, then default"""
        if name in self.params:
            return self.params[name]
        return self.config.get(name.upper(), default)

    @abstractmethod
    def evaluate(self) -> Dict[str, Dict[str, Any]]:
        """
        Run the target's computations

        Returns:
            Dict mapping metric name to a metric() entry
        """
        pass

    def _handle_error(self, error: Exception, stage: str, start: float) -> Dict[str, Any]:
        """Turn an exception into an error result without raising"""
        error_message = f"{stage} error: {str(error)}"
        logger.error(f"Target {self.target} failed in {stage}: {error_message}")
        return {
            'target': self.target,
            'status': 'error',
            'error': error_message,
            'metrics_scores': {},
            'execution_time': time.time() - start,
            'timestamp': datetime.now().isoformat()
        }

    def run_evaluation(self) -> Dict[str, Any]:
        """Evaluate and wrap the metrics into a result dict"""
        start = time.time()
        logger.info(f"Starting target {self.target}")
        try:
            metrics = self.evaluate()
        except Exception as e:
            return self._handle_error(e, 'evaluation', start)

        elapsed = time.time() - start
        passed = all(entry['passed'] for entry in metrics.values())
        logger.info(f"Finished target {self.target} in {elapsed:.1f}s: {'passed' if passed else 'failed'}")
        return {
            'target': self.target,
            'status': 'passed' if passed else 'failed',
            'metrics_scores': metrics,
            'execution_time': elapsed,
            'runtime_gate': self.runtime_gate,
            'within_runtime': elapsed <= self.runtime_gate,
            'timestamp': datetime.now().isoformat()
        }
