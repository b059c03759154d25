from typing import Any, Dict, List
import logging

from tqdm import tqdm

from evaluators.principle_evaluator import PrincipleEvaluator, metric
from helpers.conic_solver import SolverSettings, psd_margin
from helpers.moment_certificates import FixedBox, build_moment_problem
from helpers.quantum_baseline import CHSH_SCENARIO, sample_quantum_box
from helpers.scenario import Box, LevelSpec
from helpers.wirings import coarse_grain, compose, feed_forward_xor_spec, group_parties, post_select

logger = logging.getLogger(__name__)

CLOSURE_TOLERANCE = 1e-6


def aq_margin(box: Box, settings: SolverSettings) -> float:
    return psd_margin(build_moment_problem(box.scenario, LevelSpec.ALMOST_QUANTUM, FixedBox(box)), settings)


def wired_boxes(first: Box, second: Box) -> Dict[str, Box]:
    """Post-selection, composition, adaptive grouping and coarse-graining of two bipartite boxes"""
    composed = compose(first, second)
    fine = group_parties(composed, feed_forward_xor_spec(fine_grained=True))
    merged = coarse_grain(coarse_grain(fine, 0, (0, 1, 1, 0)), 1, (0, 1, 1, 0))
    return {
        'post_selection': post_select(composed, 3, 0, 0),
        'composition': composed,
        'grouping': group_parties(composed, feed_forward_xor_spec()),
        'coarse_graining': merged
    }


class ClosureEvaluator(PrincipleEvaluator):
    """Wirings of sampled quantum boxes stay almost quantum"""
    runtime_gate = 600.0

    def evaluate(self) -> Dict[str, Dict[str, Any]]:
        count = int(self.param('closure_boxes', 25))
        seed = int(self.param('aq_seed', 2014))
        boxes = [sample_quantum_box(CHSH_SCENARIO, seed + i) for i in range(count)]

        margins: Dict[str, List[float]] = {}
        for i in tqdm(range(count), desc='closure', disable=not self.verbose):
            for operation, box in wired_boxes(boxes[i], boxes[(i + 1) % count]).items():
                margins.setdefault(operation, []).append(aq_margin(box, self.settings))

        return {
            f'closure_{operation}': metric(
                min(values), min(values) >= -CLOSURE_TOLERANCE,
                f"Smallest membership margin after {operation} over {len(values)} wirings",
                reference_value=0.0, tolerance=CLOSURE_TOLERANCE
            )
            for operation, values in margins.items()
        }
