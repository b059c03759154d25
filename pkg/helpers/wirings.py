"""
Classical operations on boxes: post-selection, composition, grouping of
parties under adaptive decision-tree wirings, and outcome coarse-graining.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from helpers.errors import ScenarioStructureError, ZeroProbabilityError
from helpers.scenario import Box, Event, Scenario, product_table, require_valid

logger = logging.getLogger(__name__)

MIN_CONDITIONING_PROBABILITY = 1e-9


@dataclass(frozen=True)
class Leaf:
    output: int


@dataclass(frozen=True)
class MeasureNode:
    """Measure a constituent party with an input; one child per outcome"""
    party: int
    input: int
    children: Tuple['WiringTree', ...]


WiringTree = Union[Leaf, MeasureNode]


def _paths(tree: WiringTree, prefix: Tuple[Tuple[int, int, int], ...] = ()) -> Iterator[Tuple[Event, int]]:
    """(transcript event, leaf label) for every root-to-leaf path in DFS order"""
    if isinstance(tree, Leaf):
        yield Event(prefix), tree.output
        return
    for outcome, child in enumerate(tree.children):
        yield from _paths(child, prefix + ((tree.party, tree.input, outcome),))


@dataclass(frozen=True)
class WiringSpec:
    partition: Tuple[Tuple[int, ...], ...]
    trees: Tuple[Tuple[WiringTree, ...], ...]
    fine_grained: bool = False

    @classmethod
    def identity(cls, scenario: Scenario) -> 'WiringSpec':
        trees = []
        for k in range(scenario.num_parties):
            leaves = tuple(Leaf(a) for a in range(scenario.outputs_per_party[k]))
            trees.append(tuple(MeasureNode(k, x, leaves) for x in range(scenario.inputs_per_party[k])))
        return cls(tuple((k,) for k in range(scenario.num_parties)), tuple(trees))

    def _check_tree(self, tree: WiringTree, group: Sequence[int], scenario: Scenario, seen: Tuple[int, ...]) -> None:
        if isinstance(tree, Leaf):
            if tree.output < 0:
                raise ScenarioStructureError(f"Negative effective outcome {tree.output}")
            return
        if tree.party not in group:
            raise ScenarioStructureError(f"Party {tree.party} measured outside its group {tuple(group)}")
        if tree.party in seen:
            raise ScenarioStructureError(f"Party {tree.party} measured twice along one path")
        if not 0 <= tree.input < scenario.inputs_per_party[tree.party]:
            raise ScenarioStructureError(f"Input {tree.input} out of range for party {tree.party}")
        if len(tree.children) != scenario.outputs_per_party[tree.party]:
            raise ScenarioStructureError(
                f"Node on party {tree.party} needs {scenario.outputs_per_party[tree.party]} branches, "
                f"got {len(tree.children)}"
            )
        for child in tree.children:
            self._check_tree(child, group, scenario, seen + (tree.party,))

    def check(self, scenario: Scenario) -> None:
        members = sorted(k for group in self.partition for k in group)
        if members != list(range(scenario.num_parties)):
            raise ScenarioStructureError(f"Partition {self.partition} does not cover the parties exactly once")
        if len(self.trees) != len(self.partition):
            raise ScenarioStructureError("Need one list of trees per effective party")
        for group, trees in zip(self.partition, self.trees):
            if not trees:
                raise ScenarioStructureError(f"Effective party {group} has no inputs")
            for tree in trees:
                self._check_tree(tree, group, scenario, ())

    def effective_outputs(self, party: int) -> int:
        if self.fine_grained:
            count = max(sum(1 for _ in _paths(tree)) for tree in self.trees[party])
        else:
            count = max(label for tree in self.trees[party] for _, label in _paths(tree)) + 1
        return max(count, 2)

    def effective_scenario(self) -> Scenario:
        return Scenario(
            len(self.partition),
            tuple(len(trees) for trees in self.trees),
            tuple(self.effective_outputs(j) for j in range(len(self.partition)))
        )


def post_select(box: Box, party: int, input_: int, output: int) -> Box:
    """Condition the remaining parties on one party's event"""
    scenario = box.scenario
    if scenario.num_parties < 2:
        raise ScenarioStructureError("Post-selection needs at least two parties")
    require_valid(box)
    condition = Event(((party, input_, output),))
    probability = box.marginal(condition)
    if probability < MIN_CONDITIONING_PROBABILITY:
        raise ZeroProbabilityError(
            f"Cannot condition on party {party} output {output} for input {input_}: probability {probability:.3e}"
        )

    n = scenario.num_parties
    table = np.take(box.table, input_, axis=party)
    table = np.take(table, output, axis=n - 1 + party)
    remaining = [k for k in range(n) if k != party]
    reduced = Scenario(
        n - 1,
        tuple(scenario.inputs_per_party[k] for k in remaining),
        tuple(scenario.outputs_per_party[k] for k in remaining)
    )
    return Box(reduced, table / probability)


def compose(box_a: Box, box_b: Box) -> Box:
    """Independent product; B's parties follow A's"""
    a, b = box_a.scenario, box_b.scenario
    scenario = Scenario(
        a.num_parties + b.num_parties,
        a.inputs_per_party + b.inputs_per_party,
        a.outputs_per_party + b.outputs_per_party
    )
    scenario.check_size()
    return Box(scenario, product_table(box_a.table, a.num_parties, box_b.table, b.num_parties))


def group_parties(box: Box, spec: WiringSpec) -> Box:
    """
    Apply a wiring: each effective party runs its decision tree on its group

    Args:
        box (Box): Box over the constituent parties
        spec (WiringSpec): Partition and decision trees

    Returns:
        Box over the effective parties
    """
    spec.check(box.scenario)
    require_valid(box)
    effective = spec.effective_scenario()
    effective.check_size()

    # Paths of different groups touch disjoint parties, so their union is one event
    paths_per_party: List[List[List[Tuple[Event, int]]]] = []
    for trees in spec.trees:
        per_input = []
        for tree in trees:
            paths = list(_paths(tree))
            if spec.fine_grained:
                paths = [(event, position) for position, (event, _) in enumerate(paths)]
            per_input.append(paths)
        paths_per_party.append(per_input)

    table = np.zeros(effective.table_shape)
    for inputs in itertools.product(*(range(m) for m in effective.inputs_per_party)):
        choices = [paths_per_party[j][x] for j, x in enumerate(inputs)]
        for combination in itertools.product(*choices):
            event = Event(tuple(item for path, _ in combination for item in path.assignments))
            outputs = tuple(label for _, label in combination)
            table[inputs + outputs] += box.marginal(event)
    logger.debug(f"Grouped {box.scenario.num_parties} parties into {effective.num_parties}")
    return Box(effective, table)


def coarse_grain(box: Box, party: int, merge: Sequence[int]) -> Box:
    """Sum the probabilities of outputs that merge maps to the same new label"""
    scenario = box.scenario
    d = scenario.outputs_per_party[party]
    merge = [int(v) for v in merge]
    if len(merge) != d:
        raise ScenarioStructureError(f"Merge map needs {d} entries, got {len(merge)}")
    new_d = max(merge) + 1
    if min(merge) < 0 or set(merge) != set(range(new_d)):
        raise ScenarioStructureError(f"Merge map {merge} is not onto a dense output range")
    if new_d < 2:
        raise ScenarioStructureError("Coarse-graining must leave at least two outputs")

    n = scenario.num_parties
    moved = np.moveaxis(box.table, n + party, -1)
    merged = np.zeros(moved.shape[:-1] + (new_d,))
    for old, new in enumerate(merge):
        merged[..., new] += moved[..., old]
    outputs = list(scenario.outputs_per_party)
    outputs[party] = new_d
    return Box(Scenario(n, scenario.inputs_per_party, tuple(outputs)), np.moveaxis(merged, -1, n + party))


def feed_forward_xor_spec(fine_grained: bool = False) -> WiringSpec:
    """
    Two 2-input, 2-output bipartite boxes composed as parties (0, 1, 2, 3).

    Alice measures box 1 with her input and feeds the outcome to box 2 as input;
    Bob uses his input on both boxes. Both output the XOR of their two outcomes.
    """
    def chain(first: int, second: int, x: int, adaptive: bool) -> MeasureNode:
        branches = []
        for outcome in (0, 1):
            leaves = tuple(
                Leaf(2 * outcome + b if fine_grained else outcome ^ b) for b in (0, 1)
            )
            branches.append(MeasureNode(second, outcome if adaptive else x, leaves))
        return MeasureNode(first, x, tuple(branches))

    return WiringSpec(
        partition=((0, 2), (1, 3)),
        trees=(
            tuple(chain(0, 2, x, adaptive=True) for x in (0, 1)),
            tuple(chain(1, 3, y, adaptive=False) for y in (0, 1))
        ),
        fine_grained=fine_grained
    )


@dataclass
class WiringPipeline:
    """compose inputs -> post-select -> group -> coarse-grain"""
    post_selections: List[Tuple[int, int, int]] = field(default_factory=list)
    grouping: Optional[WiringSpec] = None
    coarse_grainings: List[Tuple[int, Tuple[int, ...]]] = field(default_factory=list)


def run_pipeline(boxes: Sequence[Box], pipeline: WiringPipeline) -> Box:
    if not boxes:
        raise ScenarioStructureError("A wiring needs at least one box")
    result = boxes[0]
    for other in boxes[1:]:
        result = compose(result, other)
    for party, input_, output in pipeline.post_selections:
        result = post_select(result, party, input_, output)
    if pipeline.grouping is not None:
        result = group_parties(result, pipeline.grouping)
    for party, merge in pipeline.coarse_grainings:
        result = coarse_grain(result, party, merge)
    return result
