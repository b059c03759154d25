import concurrent.futures
import logging
import time
from datetime import datetime
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar

from repro_run import create_evaluator, get_config

logger = logging.getLogger(__name__)

T = TypeVar('T')
R = TypeVar('R')


def map_ordered(function: Callable[[T], R], items: Sequence[T], max_workers: int) -> List[R]:
    """Apply function over items on a thread pool; results come back in submission order"""
    results: List[Optional[R]] = [None] * len(items)
    with concurrent.futures.ThreadPoolExecutor(max_workers=max_workers) as executor:
        future_to_index = {executor.submit(function, item): i for i, item in enumerate(items)}
        for future in concurrent.futures.as_completed(future_to_index):
            results[future_to_index[future]] = future.result()
    return results


class ConcurrentReproOrchestrator:
    """
    Runs several reproduction targets at once.

    Each target is independent, so its evaluator runs on its own worker and
    the collected results keep the order the targets were requested in.
    """

    def __init__(self, config: Dict[str, Any], max_workers: int = 4):
        self.config = config
        self.max_workers = max_workers

    def evaluate_target(self, target: str, params: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """Evaluate one target; failures become error results"""
        try:
            return create_evaluator(target, self.config, params).run_evaluation()
        except Exception as e:
            logger.error(f"Exception in target {target}: {str(e)}")
            return {
                'target': target,
                'status': 'error',
                'error': str(e),
                'metrics_scores': {},
                'timestamp': datetime.now().isoformat()
            }

    def run_concurrent_targets(self, targets: Sequence[str],
                               params: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        logger.info(f"Running {len(targets)} targets on {self.max_workers} workers")
        results = map_ordered(lambda target: self.evaluate_target(target, params), list(targets), self.max_workers)
        return {
            'summary': self._generate_evaluation_summary(results),
            'targets': results,
            'timestamp': datetime.now().isoformat()
        }

    def _generate_evaluation_summary(self, results: List[Dict[str, Any]]) -> Dict[str, Any]:
        """Generate summary statistics from target results"""
        counts = {'passed': 0, 'failed': 0, 'error': 0}
        checks = passed_checks = 0
        for result in results:
            counts[result['status']] = counts.get(result['status'], 0) + 1
            for entry in result.get('metrics_scores', {}).values():
                checks += 1
                passed_checks += int(entry['passed'])

        return {
            'total_targets': len(results),
            'passed_targets': counts['passed'],
            'failed_targets': counts['failed'],
            'error_targets': counts['error'],
            'total_checks': checks,
            'passed_checks': passed_checks,
            'pass_rate': passed_checks / checks if checks > 0 else 0.0
        }


def run_concurrent_repro(targets: Sequence[str], config: Optional[Dict[str, Any]] = None,
                         max_workers: Optional[int] = None,
                         params: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Main function to run reproduction targets concurrently"""
    config = config or get_config()
    workers = max_workers or config['AQ_MAX_WORKERS']
    orchestrator = ConcurrentReproOrchestrator(config, workers)

    start_time = time.time()
    results = orchestrator.run_concurrent_targets(targets, params)
    results['execution_time'] = time.time() - start_time
    results['max_workers'] = workers

    logger.info(f"Concurrent reproduction completed in {results['execution_time']:.2f} seconds")
    logger.info(f"Summary: {results['summary']}")
    return results


if __name__ == "__main__":
    import sys

    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    results = run_concurrent_repro(sys.argv[1:] or ['section3', 'chsh', 'nlc'])

    print("\n=== Concurrent Reproduction Summary ===")
    print(f"Targets: {results['summary']['total_targets']}")
    print(f"Passed: {results['summary']['passed_targets']}")
    print(f"Check pass rate: {results['summary']['pass_rate']:.2%}")
    print(f"Execution Time: {results['execution_time']:.2f} seconds")
