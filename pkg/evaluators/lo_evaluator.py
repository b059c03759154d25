"""
Local orthogonality: sums of probabilities over pairwise locally orthogonal
events, and a weighted clique search for the largest such sum.
"""

import itertools
import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import networkx as nx
from tqdm import tqdm

from evaluators.ic_evaluator import pr_box
from evaluators.principle_evaluator import PrincipleEvaluator, metric
from helpers.errors import OrthogonalityError, ScenarioStructureError
from helpers.quantum_baseline import CHSH_SCENARIO, sample_quantum_box
from helpers.scenario import Box, Event, Scenario, locally_orthogonal
from helpers.wirings import compose

logger = logging.getLogger(__name__)

LO_TOLERANCE = 1e-9
MAX_LO_EVENTS = 5000
MIN_EVENT_WEIGHT = 1e-12


def lo_value(box: Box, events: Sequence[Event]) -> float:
    """Sum of marginal probabilities of a set of pairwise locally orthogonal events"""
    events = list(events)
    for e1, e2 in itertools.combinations(events, 2):
        if not locally_orthogonal(e1, e2):
            raise OrthogonalityError(f"Events {e1.serialize()} and {e2.serialize()} are not locally orthogonal")
    return float(sum(box.marginal(event) for event in events))


def lo_events(scenario: Scenario, all_subsets: bool = False) -> List[Event]:
    """
    Candidate events for the orthogonality graph, all outputs included

    Args:
        scenario (Scenario): Scenario of the box
        all_subsets (bool): Every nonempty party subset instead of single parties and the full party set
    """
    n = scenario.num_parties
    if all_subsets:
        subsets = [s for size in range(1, n + 1) for s in itertools.combinations(range(n), size)]
    else:
        subsets = [(k,) for k in range(n)]
        if n > 1:
            subsets.append(tuple(range(n)))

    events = []
    for subset in subsets:
        input_ranges = [range(scenario.inputs_per_party[k]) for k in subset]
        output_ranges = [range(scenario.outputs_per_party[k]) for k in subset]
        for inputs in itertools.product(*input_ranges):
            for outputs in itertools.product(*output_ranges):
                events.append(Event(tuple(zip(subset, inputs, outputs))))
    return events


def orthogonality_graph(box: Box, events: Optional[Sequence[Event]] = None,
                        min_weight: float = MIN_EVENT_WEIGHT) -> nx.Graph:
    """Events with positive probability as weighted nodes, edges between locally orthogonal pairs"""
    events = lo_events(box.scenario) if events is None else list(events)
    if len(events) > MAX_LO_EVENTS:
        raise ScenarioStructureError(f"{len(events)} events exceed the orthogonality graph cap of {MAX_LO_EVENTS}")

    graph = nx.Graph()
    for event in events:
        weight = box.marginal(event)
        if weight > min_weight:
            graph.add_node(event, weight=weight)
    for e1, e2 in itertools.combinations(list(graph.nodes), 2):
        if locally_orthogonal(e1, e2):
            graph.add_edge(e1, e2)
    return graph


@dataclass
class LOSearchResult:
    value: float
    events: Tuple[Event, ...]
    exhaustive: bool
    nodes_visited: int
    node_limit: Optional[int] = None

    @property
    def violation(self) -> bool:
        return self.value > 1.0 + LO_TOLERANCE

    def to_dict(self) -> Dict[str, Any]:
        return {
            'value': self.value,
            'events': [event.serialize() for event in self.events],
            'exhaustive': self.exhaustive,
            'nodes_visited': self.nodes_visited,
            'node_limit': self.node_limit,
            'violation': self.violation
        }


class _NodeLimitReached(Exception):
    pass


class _CliqueSearch:
    """Branch-and-bound over bitset candidates with a greedy colouring bound"""

    def __init__(self, weights: List[float], adjacency: List[int], max_size: int, node_limit: Optional[int]):
        self.weights = weights
        self.adjacency = adjacency
        self.max_size = max_size
        self.node_limit = node_limit
        self.best_value = 0.0
        self.best_clique: Tuple[int, ...] = ()
        self.visited = 0

    def _bound(self, candidates: int, slots: int) -> float:
        # Vertices are indexed by decreasing weight, so a class's first vertex is its heaviest
        class_masks: List[int] = []
        class_tops: List[float] = []
        remaining = candidates
        while remaining:
            low = remaining & -remaining
            v = low.bit_length() - 1
            remaining ^= low
            for c, mask in enumerate(class_masks):
                if not mask & self.adjacency[v]:
                    class_masks[c] |= low
                    break
            else:
                class_masks.append(low)
                class_tops.append(self.weights[v])
        return sum(sorted(class_tops, reverse=True)[:slots])

    def expand(self, clique: Tuple[int, ...], value: float, candidates: int) -> None:
        self.visited += 1
        if self.node_limit is not None and self.visited > self.node_limit:
            raise _NodeLimitReached()
        if value > self.best_value:
            self.best_value = value
            self.best_clique = clique
        slots = self.max_size - len(clique)
        if slots == 0 or not candidates:
            return
        if value + self._bound(candidates, slots) <= self.best_value + LO_TOLERANCE:
            return

        remaining = candidates
        while remaining:
            low = remaining & -remaining
            v = low.bit_length() - 1
            remaining ^= low
            if value + self.weights[v] * slots <= self.best_value + LO_TOLERANCE:
                break
            self.expand(clique + (v,), value + self.weights[v], remaining & self.adjacency[v])


def find_lo_violation(box: Box, max_set_size: int = 8, node_limit: Optional[int] = None,
                      events: Optional[Sequence[Event]] = None) -> LOSearchResult:
    """
    Largest total probability over sets of pairwise locally orthogonal events

    Args:
        box (Box): Box whose event probabilities weight the graph
        max_set_size (int): Largest set considered
        node_limit (int): Stop after this many search nodes; the result is then a lower bound
        events (Sequence[Event]): Candidate events, lo_events(box.scenario) by default

    Returns:
        LOSearchResult with the best value, its witness set and whether the search finished
    """
    if max_set_size < 1:
        raise ScenarioStructureError("max_set_size must be positive")
    graph = orthogonality_graph(box, events)
    ordered = sorted(graph.nodes, key=lambda e: (-graph.nodes[e]['weight'], e.sort_key()))
    position = {event: i for i, event in enumerate(ordered)}
    adjacency = [0] * len(ordered)
    for e1, e2 in graph.edges:
        adjacency[position[e1]] |= 1 << position[e2]
        adjacency[position[e2]] |= 1 << position[e1]

    search = _CliqueSearch([graph.nodes[e]['weight'] for e in ordered], adjacency, max_set_size, node_limit)
    exhaustive = True
    try:
        search.expand((), 0.0, (1 << len(ordered)) - 1)
    except _NodeLimitReached:
        exhaustive = False
        logger.debug(f"LO search stopped after {node_limit} nodes")

    witness = tuple(ordered[v] for v in search.best_clique)
    return LOSearchResult(search.best_value, witness, exhaustive, search.visited, node_limit)


class LOEvaluator(PrincipleEvaluator):
    runtime_gate = 600.0

    def evaluate(self) -> Dict[str, Dict[str, Any]]:
        count = int(self.param('lo_boxes', 25))
        seed = int(self.param('aq_seed', 2014))
        max_size = int(self.param('aq_max_clique', 8))
        node_limit = self.param('lo_node_limit', 20000)
        all_subsets = bool(self.param('lo_all_subsets', False))

        boxes = [sample_quantum_box(CHSH_SCENARIO, seed + i) for i in range(count)]
        worst = 0.0
        bounded = 0
        for i in tqdm(range(count), desc='LO boxes', disable=not self.verbose):
            single = find_lo_violation(boxes[i], max_size)
            joint = compose(boxes[i], boxes[(i + 1) % count])
            composed = find_lo_violation(joint, max_size, node_limit, lo_events(joint.scenario, all_subsets))
            worst = max(worst, single.value, composed.value)
            bounded += int(not single.exhaustive) + int(not composed.exhaustive)

        pr = pr_box(2, 1.0)
        doubled = find_lo_violation(compose(pr, pr), max_size)
        candidates = 'every party subset' if all_subsets else 'single parties and the full party set'
        return {
            'quantum_lo_max': metric(
                worst, worst <= 1.0 + 1e-6,
                f"Largest LO sum over {count} sampled boxes and their consecutive compositions",
                reference_value=1.0, tolerance=1e-6
            ),
            'lo_search_coverage': metric(
                (2 * count - bounded) / (2 * count), True,
                f"Fraction of searches that finished; events on {candidates}. "
                f"{bounded} searches stopped at {node_limit} nodes and only give lower bounds on the LO sum",
                reference_value=1.0
            ),
            'pr_pair_lo': metric(
                doubled.value, doubled.value > 1.0,
                f"Two PR boxes composed, witness {[e.serialize() for e in doubled.events]}",
                reference_value='> 1'
            )
        }
