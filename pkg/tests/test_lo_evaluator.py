import pytest

from evaluators import lo_evaluator
from evaluators.ic_evaluator import pr_box
from evaluators.lo_evaluator import (
    LOEvaluator, LOSearchResult, find_lo_violation, lo_events, lo_value, orthogonality_graph
)
from helpers.errors import OrthogonalityError, ScenarioStructureError
from helpers.scenario import Event, Scenario
from helpers.wirings import compose

A0_OUT0 = Event(((0, 0, 0),))
A0_OUT1 = Event(((0, 0, 1),))
A1_OUT0 = Event(((0, 1, 0),))


def test_lo_value_of_complementary_outcomes(pr):
    assert lo_value(pr, [A0_OUT0, A0_OUT1]) == pytest.approx(1.0)


def test_lo_value_rejects_compatible_events(pr):
    with pytest.raises(OrthogonalityError):
        lo_value(pr, [A0_OUT0, A1_OUT0])


def test_event_list(chsh_scenario):
    events = lo_events(chsh_scenario)
    # 4 single-party events per party, 16 joint events
    assert len(events) == 24
    assert len(lo_events(chsh_scenario, all_subsets=True)) == 24


def test_tripartite_event_lists():
    scenario = Scenario(3, (2, 2, 2), (2, 2, 2))
    # 12 single-party events and 64 tripartite ones
    assert len(lo_events(scenario)) == 76
    # plus 3 pairs of parties with 16 events each
    events = lo_events(scenario, all_subsets=True)
    assert len(events) == 124
    assert len({event.parties for event in events}) == 7


def test_graph_drops_zero_probability_events(pr, uniform):
    assert orthogonality_graph(uniform).number_of_nodes() == 24
    graph = orthogonality_graph(pr)
    assert graph.number_of_nodes() == 16
    assert graph.has_edge(A0_OUT0, A0_OUT1)
    assert not graph.has_edge(A0_OUT0, A1_OUT0)


def test_single_pr_box_satisfies_lo(pr):
    result = find_lo_violation(pr)
    assert result.exhaustive
    assert result.value == pytest.approx(1.0)
    assert not result.violation


def test_two_pr_boxes_violate_lo():
    doubled = compose(pr_box(2, 1.0), pr_box(2, 1.0))
    result = find_lo_violation(doubled)
    assert result.exhaustive
    assert result.violation
    assert lo_value(doubled, result.events) == pytest.approx(result.value)
    assert result.to_dict()['violation']


def test_node_limit_makes_search_bounded():
    doubled = compose(pr_box(2, 1.0), pr_box(2, 1.0))
    result = find_lo_violation(doubled, node_limit=5)
    assert not result.exhaustive
    assert result.nodes_visited <= 6


def test_set_size_must_be_positive(pr):
    with pytest.raises(ScenarioStructureError):
        find_lo_violation(pr, max_set_size=0)


def test_quantum_boxes_satisfy_lo(quantum_boxes):
    for box in quantum_boxes:
        assert not find_lo_violation(box).violation


@pytest.mark.slow
def test_lo_evaluator(settings):
    config = {'solver_settings': settings}
    result = LOEvaluator(config, 'lo', {'lo_boxes': 3, 'lo_node_limit': 2000}).run_evaluation()
    assert result['status'] == 'passed'
    assert result['metrics_scores']['pr_pair_lo']['score'] > 1.0
    assert result['metrics_scores']['lo_search_coverage']['passed']


def test_lo_evaluator_reports_bounded_searches(monkeypatch, settings):
    candidate_counts = []

    def fake_search(box, max_set_size=8, node_limit=None, events=None):
        candidate_counts.append(None if events is None else len(events))
        return LOSearchResult(0.75, (), events is None, 10, node_limit)

    monkeypatch.setattr(lo_evaluator, 'find_lo_violation', fake_search)
    config = {'solver_settings': settings}
    params = {'lo_boxes': 2, 'lo_node_limit': 50, 'lo_all_subsets': True}
    result = LOEvaluator(config, 'lo', params).run_evaluation()

    coverage = result['metrics_scores']['lo_search_coverage']
    assert coverage['score'] == 0.5
    assert coverage['passed']
    assert 'every party subset' in coverage['explanation']
    assert '2 searches stopped at 50 nodes' in coverage['explanation']
    # four parties after composition: 5**4 - 1 events over all subsets
    assert candidate_counts.count(624) == 2
