"""
Scenarios, events and boxes.

A box over n parties is stored densely as an array of shape
(m_1, ..., m_n, d_1, ..., d_n): all inputs first, then all outputs, party 1
slowest. Collins-Gisin (CG) coordinates list the marginal probabilities of
every event whose outputs are all nonzero, in the order of enumerate_events.
"""

import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from helpers.errors import BoxValidationError, InvalidCGError, ScenarioStructureError

logger = logging.getLogger(__name__)

EPS_ZERO = 1e-10
VALIDATION_TOL = 1e-9
MAX_TABLE_ENTRIES = 10 ** 7


class LevelSpec(Enum):
    """Relaxation level of the certificate matrix"""
    ALMOST_QUANTUM = 'aq'
    Q1 = 'q1'

    @classmethod
    def from_name(cls, name: str) -> 'LevelSpec':
        for level in cls:
            if level.value == name.lower():
                return level
        raise ValueError(f"Unknown relaxation level: {name}")


@dataclass(frozen=True)
class Scenario:
    num_parties: int
    inputs_per_party: Tuple[int, ...]
    outputs_per_party: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, 'inputs_per_party', tuple(int(m) for m in self.inputs_per_party))
        object.__setattr__(self, 'outputs_per_party', tuple(int(d) for d in self.outputs_per_party))

        if self.num_parties < 1:
            raise ScenarioStructureError("A scenario needs at least one party")
        if len(self.inputs_per_party) != self.num_parties or len(self.outputs_per_party) != self.num_parties:
            raise ScenarioStructureError(
                f"Expected {self.num_parties} input and output counts, got "
                f"{len(self.inputs_per_party)} and {len(self.outputs_per_party)}"
            )
        if any(m < 1 for m in self.inputs_per_party):
            raise ScenarioStructureError(f"Every party needs at least one input: {self.inputs_per_party}")
        if any(d < 2 for d in self.outputs_per_party):
            raise ScenarioStructureError(f"Every party needs at least two outputs: {self.outputs_per_party}")

    @classmethod
    def bipartite(cls, inputs_a: int, outputs_a: int, inputs_b: int, outputs_b: int) -> 'Scenario':
        return cls(2, (inputs_a, inputs_b), (outputs_a, outputs_b))

    @property
    def table_shape(self) -> Tuple[int, ...]:
        return self.inputs_per_party + self.outputs_per_party

    @property
    def table_size(self) -> int:
        return math.prod(self.table_shape)

    @property
    def is_2222(self) -> bool:
        return self.num_parties == 2 and self.inputs_per_party == (2, 2) and self.outputs_per_party == (2, 2)

    def check_size(self, cap: int = MAX_TABLE_ENTRIES) -> None:
        if self.table_size > cap:
            raise ScenarioStructureError(
                f"Scenario table has {self.table_size} entries, above the cap of {cap}"
            )

    def to_dict(self) -> Dict[str, object]:
        return {
            'parties': self.num_parties,
            'inputs': list(self.inputs_per_party),
            'outputs': list(self.outputs_per_party)
        }


@dataclass(frozen=True)
class Event:
    """Partial assignment party -> (input, output); the empty event is the null event"""
    assignments: Tuple[Tuple[int, int, int], ...] = ()

    def __post_init__(self):
        items = tuple(sorted((int(k), int(x), int(a)) for k, x, a in self.assignments))
        parties = [k for k, _, _ in items]
        if len(set(parties)) != len(parties):
            raise ScenarioStructureError(f"Party assigned twice in event {items}")
        object.__setattr__(self, 'assignments', items)

    @classmethod
    def of(cls, mapping: Mapping[int, Tuple[int, int]]) -> 'Event':
        return cls(tuple((k, x, a) for k, (x, a) in mapping.items()))

    @property
    def parties(self) -> Tuple[int, ...]:
        return tuple(k for k, _, _ in self.assignments)

    @property
    def inputs(self) -> Tuple[int, ...]:
        return tuple(x for _, x, _ in self.assignments)

    @property
    def outputs(self) -> Tuple[int, ...]:
        return tuple(a for _, _, a in self.assignments)

    @property
    def is_null(self) -> bool:
        return not self.assignments

    def as_dict(self) -> Dict[int, Tuple[int, int]]:
        return {k: (x, a) for k, x, a in self.assignments}

    def sort_key(self) -> Tuple:
        # Same order as enumerate_events: subset size, subset, inputs, outputs
        return (len(self.assignments), self.parties, self.inputs, self.outputs)

    def union(self, other: 'Event') -> 'Event':
        merged = self.as_dict()
        for k, x, a in other.assignments:
            if k in merged and merged[k] != (x, a):
                raise ScenarioStructureError(f"Cannot merge {self.serialize()} with {other.serialize()}")
            merged[k] = (x, a)
        return Event.of(merged)

    def without(self, parties: Iterable[int]) -> 'Event':
        drop = set(parties)
        return Event(tuple(item for item in self.assignments if item[0] not in drop))

    def check(self, scenario: Scenario) -> None:
        for k, x, a in self.assignments:
            if not 0 <= k < scenario.num_parties:
                raise ScenarioStructureError(f"Party {k} outside a {scenario.num_parties}-party scenario")
            if not 0 <= x < scenario.inputs_per_party[k]:
                raise ScenarioStructureError(f"Input {x} out of range for party {k}")
            if not 0 <= a < scenario.outputs_per_party[k]:
                raise ScenarioStructureError(f"Output {a} out of range for party {k}")

    def serialize(self) -> str:
        if self.is_null:
            return 'phi'
        return ','.join(f"{k}:{x}:{a}" for k, x, a in self.assignments)

    @classmethod
    def parse(cls, text: str) -> 'Event':
        text = text.strip()
        if text == 'phi':
            return cls()
        try:
            return cls(tuple(tuple(int(v) for v in part.split(':')) for part in text.split(',')))
        except ValueError as e:
            raise ScenarioStructureError(f"Malformed event '{text}': {str(e)}")

    def __str__(self) -> str:
        return self.serialize()


NULL_EVENT = Event()


def locally_orthogonal(e1: Event, e2: Event) -> bool:
    """True iff some common party uses the same input with different outputs"""
    second = e2.as_dict()
    for k, x, a in e1.assignments:
        if k in second and second[k][0] == x and second[k][1] != a:
            return True
    return False


@lru_cache(maxsize=64)
def enumerate_events(scenario: Scenario, level: LevelSpec) -> Tuple[Event, ...]:
    """
    Ordered index of the certificate matrix

    Args:
        scenario (Scenario): Scenario the events belong to
        level (LevelSpec): ALMOST_QUANTUM uses every nonempty party subset, Q1 singletons only

    Returns:
        The null event followed by nonzero-output events grouped by party subset
    """
    sizes = range(1, scenario.num_parties + 1) if level is LevelSpec.ALMOST_QUANTUM else [1]
    events = [NULL_EVENT]
    for size in sizes:
        for subset in itertools.combinations(range(scenario.num_parties), size):
            input_ranges = [range(scenario.inputs_per_party[k]) for k in subset]
            output_ranges = [range(1, scenario.outputs_per_party[k]) for k in subset]
            for inputs in itertools.product(*input_ranges):
                for outputs in itertools.product(*output_ranges):
                    events.append(Event(tuple(zip(subset, inputs, outputs))))
    return tuple(events)


def cg_events(scenario: Scenario) -> Tuple[Event, ...]:
    return enumerate_events(scenario, LevelSpec.ALMOST_QUANTUM)[1:]


@dataclass(frozen=True, eq=False)
class Box:
    scenario: Scenario
    table: np.ndarray

    def __post_init__(self):
        self.scenario.check_size()
        table = np.array(self.table, dtype=float)
        if table.shape != self.scenario.table_shape:
            raise ScenarioStructureError(
                f"Table shape {table.shape} does not match scenario shape {self.scenario.table_shape}"
            )
        table.setflags(write=False)
        object.__setattr__(self, 'table', table)

    def marginal(self, event: Event) -> float:
        """Marginal probability of an event; omitted parties use input 0"""
        event.check(self.scenario)
        assigned = event.as_dict()
        index = []
        for k in range(self.scenario.num_parties):
            index.append(assigned[k][0] if k in assigned else 0)
        for k in range(self.scenario.num_parties):
            index.append(assigned[k][1] if k in assigned else slice(None))
        return float(np.sum(self.table[tuple(index)]))


@dataclass
class ValidationReport:
    nonneg_residual: float
    normalization_residual: float
    no_signalling_residual: float
    tolerance: float = VALIDATION_TOL
    eps_zero: float = EPS_ZERO

    @property
    def flags(self) -> Dict[str, bool]:
        return {
            'nonneg': self.nonneg_residual <= self.eps_zero,
            'normalized': self.normalization_residual <= self.tolerance,
            'no_signalling': self.no_signalling_residual <= self.tolerance
        }

    @property
    def violations(self) -> Dict[str, float]:
        residuals = {
            'nonneg': self.nonneg_residual,
            'normalized': self.normalization_residual,
            'no_signalling': self.no_signalling_residual
        }
        return {name: residuals[name] for name, ok in self.flags.items() if not ok}

    @property
    def valid(self) -> bool:
        return all(self.flags.values())


def validate_box(box: Box, tolerance: float = VALIDATION_TOL, eps_zero: float = EPS_ZERO) -> ValidationReport:
    n = box.scenario.num_parties
    table = box.table
    output_axes = tuple(range(n, 2 * n))

    nonneg = max(0.0, -float(table.min()))
    normalization = float(np.max(np.abs(table.sum(axis=output_axes) - 1.0)))

    # Single-party marginalization suffices: independence for every subset follows by induction
    no_signalling = 0.0
    for k in range(n):
        reduced = table.sum(axis=n + k)
        drift = np.abs(reduced - np.take(reduced, [0], axis=k))
        no_signalling = max(no_signalling, float(drift.max()))

    return ValidationReport(nonneg, normalization, no_signalling, tolerance, eps_zero)


def require_valid(box: Box, tolerance: float = VALIDATION_TOL, eps_zero: float = EPS_ZERO) -> None:
    report = validate_box(box, tolerance, eps_zero)
    if not report.valid:
        raise BoxValidationError(f"Box fails validation: {report.violations}")


@dataclass(frozen=True, eq=False)
class CGVector:
    scenario: Scenario
    coefficients: np.ndarray

    def __post_init__(self):
        coefficients = np.array(self.coefficients, dtype=float).reshape(-1)
        expected = len(cg_events(self.scenario))
        if coefficients.shape != (expected,):
            raise ScenarioStructureError(f"Expected {expected} CG coefficients, got {coefficients.size}")
        coefficients.setflags(write=False)
        object.__setattr__(self, 'coefficients', coefficients)


def _cg_slot_index(scenario: Scenario, event: Event, absent_input) -> Tuple:
    """Index into the slot tensor; output slot 0 stands for an absent party"""
    assigned = event.as_dict()
    n = scenario.num_parties
    inputs = [assigned[k][0] if k in assigned else absent_input for k in range(n)]
    outputs = [assigned[k][1] if k in assigned else 0 for k in range(n)]
    return tuple(inputs + outputs)


def _apply_output_map(tensor: np.ndarray, matrix_per_party: Sequence[np.ndarray], offset: int, n: int) -> np.ndarray:
    for k, matrix in enumerate(matrix_per_party):
        axis = offset + n + k
        tensor = np.moveaxis(np.moveaxis(tensor, axis, -1) @ matrix.T, -1, axis)
    return tensor


def _cg_to_tables(scenario: Scenario, coefficients: np.ndarray) -> np.ndarray:
    """Batched inclusion-exclusion: (K, n_cg) coefficients -> (K, *table_shape) tables"""
    n = scenario.num_parties
    batch = coefficients.shape[0]
    slots = np.zeros((batch,) + scenario.table_shape)
    slots[(slice(None),) + (slice(None),) * n + (0,) * n] = 1.0
    for i, event in enumerate(cg_events(scenario)):
        absent = n - len(event.assignments)
        slots[(slice(None),) + _cg_slot_index(scenario, event, slice(None))] = \
            coefficients[:, i].reshape((batch,) + (1,) * absent)

    maps = []
    for d in scenario.outputs_per_party:
        matrix = np.eye(d)
        matrix[0, 1:] = -1.0
        maps.append(matrix)
    return _apply_output_map(slots, maps, 1, n)


@lru_cache(maxsize=32)
def _cg_read_index(scenario: Scenario) -> Tuple[np.ndarray, ...]:
    positions = [_cg_slot_index(scenario, event, 0) for event in cg_events(scenario)]
    if not positions:
        return tuple(np.zeros(0, dtype=int) for _ in scenario.table_shape)
    return tuple(np.array(column) for column in zip(*positions))


def box_to_cg(box: Box) -> CGVector:
    scenario = box.scenario
    n = scenario.num_parties
    maps = []
    for d in scenario.outputs_per_party:
        matrix = np.eye(d)
        matrix[0, :] = 1.0
        maps.append(matrix)
    slots = _apply_output_map(box.table, maps, 0, n)
    return CGVector(scenario, slots[_cg_read_index(scenario)])


def cg_to_box(vector: CGVector, eps_zero: float = EPS_ZERO) -> Box:
    """Rebuild the full table by inclusion-exclusion over the omitted output 0"""
    table = _cg_to_tables(vector.scenario, vector.coefficients[np.newaxis, :])[0]
    worst = float(table.min())
    if worst < -eps_zero:
        raise InvalidCGError(f"CG coefficients reconstruct a probability of {worst:.3e}")
    return Box(vector.scenario, table)


@lru_cache(maxsize=16)
def cg_to_full_map(scenario: Scenario) -> Tuple[np.ndarray, np.ndarray]:
    """Affine map (T, t0) with flat table = T @ cg + t0"""
    scenario.check_size()
    count = len(cg_events(scenario))
    offset = _cg_to_tables(scenario, np.zeros((1, count)))[0].reshape(-1)
    columns = _cg_to_tables(scenario, np.eye(count)).reshape(count, -1).T - offset[:, np.newaxis]
    columns.setflags(write=False)
    offset.setflags(write=False)
    return columns, offset


def cg_functional_to_full(scenario: Scenario, coefficients: np.ndarray) -> np.ndarray:
    """Full-table weights f with f . P == coefficients . box_to_cg(P) for no-signalling P"""
    n = scenario.num_parties
    weights = np.zeros(scenario.table_shape)
    for value, event in zip(coefficients, cg_events(scenario)):
        assigned = event.as_dict()
        index = [assigned[k][0] if k in assigned else 0 for k in range(n)]
        index += [assigned[k][1] if k in assigned else slice(None) for k in range(n)]
        weights[tuple(index)] += value
    return weights


@dataclass(frozen=True, eq=False)
class BellFunctional:
    """Linear objective coefficients . cg + constant over one scenario"""
    scenario: Scenario
    coefficients: np.ndarray
    constant: float = 0.0
    sense: str = 'max'

    def __post_init__(self):
        coefficients = np.array(self.coefficients, dtype=float).reshape(-1)
        expected = len(cg_events(self.scenario))
        if coefficients.shape != (expected,):
            raise ScenarioStructureError(f"Functional needs {expected} CG coefficients, got {coefficients.size}")
        if self.sense not in ('max', 'min'):
            raise ValueError(f"Unknown optimization sense: {self.sense}")
        coefficients.setflags(write=False)
        object.__setattr__(self, 'coefficients', coefficients)
        object.__setattr__(self, 'constant', float(self.constant))

    @classmethod
    def from_full(cls, scenario: Scenario, full_coefficients: np.ndarray,
                  constant: float = 0.0, sense: str = 'max') -> 'BellFunctional':
        weights = np.asarray(full_coefficients, dtype=float).reshape(-1)
        if weights.size != scenario.table_size:
            raise ScenarioStructureError(
                f"Full-basis functional needs {scenario.table_size} coefficients, got {weights.size}"
            )
        columns, offset = cg_to_full_map(scenario)
        return cls(scenario, columns.T @ weights, constant + float(weights @ offset), sense)

    def evaluate(self, box: Box) -> float:
        if box.scenario != self.scenario:
            raise ScenarioStructureError("Functional and box belong to different scenarios")
        return float(self.coefficients @ box_to_cg(box).coefficients + self.constant)

    def full_coefficients(self) -> np.ndarray:
        return cg_functional_to_full(self.scenario, self.coefficients)

    def with_sense(self, sense: str) -> 'BellFunctional':
        return BellFunctional(self.scenario, self.coefficients, self.constant, sense)


def correlator_functional(weights: np.ndarray, sense: str = 'max') -> BellFunctional:
    """sum_xy w[x, y] <A_x B_y> in the 2-output bipartite scenario with w's shape of inputs"""
    weights = np.asarray(weights, dtype=float)
    scenario = Scenario.bipartite(weights.shape[0], 2, weights.shape[1], 2)
    signs = np.array([[1.0, -1.0], [-1.0, 1.0]])
    full = weights[:, :, np.newaxis, np.newaxis] * signs[np.newaxis, np.newaxis, :, :]
    return BellFunctional.from_full(scenario, full, sense=sense)


def chsh_functional(sense: str = 'max') -> BellFunctional:
    """<A0B0> + <A0B1> + <A1B0> - <A1B1>"""
    return correlator_functional(np.array([[1.0, 1.0], [1.0, -1.0]]), sense)


def product_table(table_a: np.ndarray, parties_a: int, table_b: np.ndarray, parties_b: int) -> np.ndarray:
    """Independent product of two boxes' tables, party order A then B"""
    outer = np.multiply.outer(table_a, table_b)
    inputs_a = list(range(parties_a))
    outputs_a = list(range(parties_a, 2 * parties_a))
    inputs_b = list(range(2 * parties_a, 2 * parties_a + parties_b))
    outputs_b = list(range(2 * parties_a + parties_b, 2 * parties_a + 2 * parties_b))
    return np.transpose(outer, inputs_a + inputs_b + outputs_a + outputs_b)


def uniform_box(scenario: Scenario) -> Box:
    return Box(scenario, np.full(scenario.table_shape, 1.0 / math.prod(scenario.outputs_per_party)))


def deterministic_box(scenario: Scenario, strategy: Sequence[Sequence[int]]) -> Box:
    """strategy[k][x] is the output party k returns on input x"""
    table = None
    for k, responses in enumerate(strategy):
        if len(responses) != scenario.inputs_per_party[k]:
            raise ScenarioStructureError(f"Strategy for party {k} must cover {scenario.inputs_per_party[k]} inputs")
        local = np.zeros((scenario.inputs_per_party[k], scenario.outputs_per_party[k]))
        local[np.arange(len(responses)), list(responses)] = 1.0
        table = local if table is None else product_table(table, k, local, 1)
    return Box(scenario, table)


def strategy_count(scenario: Scenario) -> int:
    return math.prod(d ** m for m, d in zip(scenario.inputs_per_party, scenario.outputs_per_party))


def party_strategies(scenario: Scenario, party: int) -> np.ndarray:
    """One-hot tensor (strategies, inputs, outputs) of a party's deterministic responses"""
    m = scenario.inputs_per_party[party]
    d = scenario.outputs_per_party[party]
    responses = np.array(list(itertools.product(range(d), repeat=m)), dtype=int).reshape(-1, m)
    one_hot = np.zeros((responses.shape[0], m, d))
    one_hot[np.arange(responses.shape[0])[:, None], np.arange(m)[None, :], responses] = 1.0
    return one_hot
