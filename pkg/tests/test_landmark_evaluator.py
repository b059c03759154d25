import pytest

from evaluators.closure_evaluator import ClosureEvaluator, aq_margin, wired_boxes
from evaluators.landmark_evaluator import CHSHEvaluator, Section3Evaluator
from evaluators.principle_evaluator import PrincipleEvaluator, metric
from helpers.scenario import validate_box


class _Constant(PrincipleEvaluator):
    def evaluate(self):
        return {'value': metric(self.param('aq_seed', 0), self.param('aq_seed', 0) == 5)}


def test_param_lookup_order():
    assert _Constant({'AQ_SEED': 5}, 'x').run_evaluation()['status'] == 'passed'
    assert _Constant({'AQ_SEED': 5}, 'x', {'aq_seed': 6}).run_evaluation()['status'] == 'failed'


def test_result_shape():
    result = _Constant({}, 'constant').run_evaluation()
    assert result['target'] == 'constant'
    assert set(result) >= {'status', 'metrics_scores', 'execution_time', 'timestamp', 'within_runtime'}
    assert result['metrics_scores']['value']['reference_value'] is None


def test_chsh_evaluator(settings):
    result = CHSHEvaluator({'solver_settings': settings}, 'chsh').run_evaluation()
    assert result['status'] == 'passed', result['metrics_scores']
    assert set(result['metrics_scores']) == {'chsh_local', 'chsh_aq', 'chsh_q1', 'chsh_ns'}


def test_section3_evaluator(settings):
    result = Section3Evaluator({'solver_settings': settings}, 'section3', {'aq_grid_resolution': 128}).run_evaluation()
    assert result['status'] == 'passed', result['metrics_scores']
    assert result['metrics_scores']['bell_value']['reference_value'] == -1.052


def test_wired_boxes_are_valid(quantum_boxes):
    boxes = wired_boxes(quantum_boxes[0], quantum_boxes[1])
    assert set(boxes) == {'post_selection', 'composition', 'grouping', 'coarse_graining'}
    for box in boxes.values():
        assert validate_box(box).valid
    assert boxes['post_selection'].scenario.num_parties == 3


def test_grouping_of_quantum_boxes_stays_almost_quantum(quantum_boxes, settings):
    grouped = wired_boxes(quantum_boxes[2], quantum_boxes[3])['grouping']
    assert aq_margin(grouped, settings) >= -1e-6


def test_pr_box_margin_is_negative(pr, settings):
    assert aq_margin(pr, settings) < -1e-3


@pytest.mark.slow
def test_closure_evaluator(settings):
    result = ClosureEvaluator({'solver_settings': settings}, 'closure', {'closure_boxes': 3}).run_evaluation()
    assert result['status'] == 'passed', result['metrics_scores']
