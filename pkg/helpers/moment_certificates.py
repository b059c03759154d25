"""
Certificate matrices for the almost-quantum and Q1 relaxations.

Rows and columns of a certificate are labelled by events with nonzero
outputs (plus the null event). Every entry is classified as

* ZERO: the two events disagree on a common party's output for the same input,
* PROB: the entry equals the marginal probability of the merged event,
* FREE: an unconstrained real shared by every entry with the same PairKey.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Hashable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from helpers.errors import NotPSDError, ScenarioStructureError
from helpers.scenario import (
    Box, Event, LevelSpec, Scenario,
    cg_events, enumerate_events, require_valid
)

logger = logging.getLogger(__name__)

MAX_INDEX_SIZE = 2000
CERTIFICATE_TOL = 1e-9


class EntryKind(Enum):
    ZERO = 'zero'
    PROB = 'prob'
    FREE = 'free'


@dataclass(frozen=True)
class PairKey:
    """Unordered pair of reduced events, stored in canonical order"""
    first: Event
    second: Event

    def __post_init__(self):
        if self.second.sort_key() < self.first.sort_key():
            first, second = self.second, self.first
            object.__setattr__(self, 'first', first)
            object.__setattr__(self, 'second', second)

    def sort_key(self) -> Tuple:
        return (self.first.sort_key(), self.second.sort_key())

    def serialize(self) -> str:
        return f"{{{self.first.serialize()}}}|{{{self.second.serialize()}}}"


@dataclass(frozen=True)
class EntryClass:
    kind: EntryKind
    event: Optional[Event] = None
    key: Optional[PairKey] = None


ZERO_ENTRY = EntryClass(EntryKind.ZERO)


def classify_pair(e1: Event, e2: Event) -> EntryClass:
    """
    Classify the certificate entry between two events

    Args:
        e1 (Event): Row event, every output nonzero
        e2 (Event): Column event, every output nonzero

    Returns:
        EntryClass of the entry
    """
    for event in (e1, e2):
        if any(a == 0 for a in event.outputs):
            raise ScenarioStructureError(f"Certificate events must have nonzero outputs: {event.serialize()}")

    left = e1.as_dict()
    right = e2.as_dict()
    for k in left.keys() & right.keys():
        if left[k][0] == right[k][0] and left[k][1] != right[k][1]:
            return ZERO_ENTRY

    # A factor measured on one side only can be written on both sides
    full_left = dict(left)
    full_right = dict(right)
    for k, assignment in right.items():
        full_left.setdefault(k, assignment)
    for k, assignment in left.items():
        full_right.setdefault(k, assignment)

    if full_left == full_right:
        return EntryClass(EntryKind.PROB, event=Event.of(full_left))

    shared = [k for k in full_left if full_left[k] == full_right[k]]
    side_left = Event.of(full_left)
    side_right = Event.of(full_right)
    candidates = [
        PairKey(side_left.without(shared), side_right),
        PairKey(side_left, side_right.without(shared))
    ]
    return EntryClass(EntryKind.FREE, key=min(candidates, key=PairKey.sort_key))


@dataclass(frozen=True, eq=False)
class FixedBox:
    box: Box


@dataclass(frozen=True, eq=False)
class AffineFamily:
    """Boxes base + t * direction with t inside bounds"""
    base: Box
    direction: np.ndarray
    bounds: Tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        direction = np.array(self.direction, dtype=float)
        if direction.shape != self.base.scenario.table_shape:
            raise ScenarioStructureError(
                f"Direction shape {direction.shape} does not match {self.base.scenario.table_shape}"
            )
        direction.setflags(write=False)
        object.__setattr__(self, 'direction', direction)

    def box_at(self, t: float) -> Box:
        return Box(self.base.scenario, self.base.table + t * self.direction)


@dataclass(frozen=True)
class FreeBox:
    pass


BindingSpec = Union[FixedBox, AffineFamily, FreeBox]

T_VARIABLE = ('t',)


@dataclass(frozen=True, eq=False)
class MomentProblem:
    scenario: Scenario
    level: LevelSpec
    index: Tuple[Event, ...]
    classification: Tuple[Tuple[EntryClass, ...], ...]
    binding: BindingSpec
    variables: Tuple[Hashable, ...]
    registry: Dict[Hashable, int] = field(repr=False)

    @property
    def size(self) -> int:
        return len(self.index)

    @property
    def num_variables(self) -> int:
        return len(self.variables)

    def _event_affine(self, event: Event) -> Tuple[float, Dict[int, float]]:
        """Value of P(event) as constant + linear terms over the registry"""
        if event.is_null:
            return 1.0, {}
        binding = self.binding
        if isinstance(binding, FixedBox):
            return binding.box.marginal(event), {}
        if isinstance(binding, AffineFamily):
            slope = Box(self.scenario, binding.direction).marginal(event)
            return binding.base.marginal(event), {self.registry[T_VARIABLE]: slope}
        return 0.0, {self.registry[('prob', event)]: 1.0}

    def gamma_map(self) -> Tuple[sparse.csr_matrix, np.ndarray]:
        """Affine map vec(Gamma) = F @ z + f0, row-major over the index"""
        n = self.size
        offset = np.zeros(n * n)
        rows, cols, values = [], [], []
        memo: Dict[Event, Tuple[float, Dict[int, float]]] = {}
        for i in range(n):
            for j in range(n):
                entry = self.classification[i][j]
                position = i * n + j
                if entry.kind is EntryKind.ZERO:
                    continue
                if entry.kind is EntryKind.FREE:
                    rows.append(position)
                    cols.append(self.registry[('free', entry.key)])
                    values.append(1.0)
                    continue
                if entry.event not in memo:
                    memo[entry.event] = self._event_affine(entry.event)
                constant, linear = memo[entry.event]
                offset[position] = constant
                for variable, coefficient in linear.items():
                    rows.append(position)
                    cols.append(variable)
                    values.append(coefficient)
        coefficients = sparse.csr_matrix((values, (rows, cols)), shape=(n * n, self.num_variables))
        return coefficients, offset

    def cg_map(self) -> Tuple[sparse.csr_matrix, np.ndarray]:
        """Affine map from the registry to the scenario's CG coordinates"""
        events = cg_events(self.scenario)
        offset = np.zeros(len(events))
        rows, cols, values = [], [], []
        for row, event in enumerate(events):
            if isinstance(self.binding, FreeBox) and ('prob', event) not in self.registry:
                raise ScenarioStructureError(
                    f"Event {event.serialize()} is not constrained at level {self.level.value}"
                )
            constant, linear = self._event_affine(event)
            offset[row] = constant
            for variable, coefficient in linear.items():
                rows.append(row)
                cols.append(variable)
                values.append(coefficient)
        coefficients = sparse.csr_matrix((values, (rows, cols)), shape=(len(events), self.num_variables))
        return coefficients, offset

    def gamma_at(self, z: np.ndarray) -> np.ndarray:
        coefficients, offset = self.gamma_map()
        return (coefficients @ np.asarray(z, dtype=float) + offset).reshape(self.size, self.size)


def build_moment_problem(scenario: Scenario, level: LevelSpec, binding: BindingSpec) -> MomentProblem:
    """
    Classify every certificate entry and register the SDP variables

    Args:
        scenario (Scenario): Scenario of the box or family
        level (LevelSpec): ALMOST_QUANTUM or Q1
        binding (BindingSpec): FixedBox, AffineFamily or FreeBox

    Returns:
        MomentProblem ready for the conic layer
    """
    scenario.check_size()
    if isinstance(binding, FixedBox):
        if binding.box.scenario != scenario:
            raise ScenarioStructureError("Bound box does not belong to the scenario")
        require_valid(binding.box)
    elif isinstance(binding, AffineFamily) and binding.base.scenario != scenario:
        raise ScenarioStructureError("Affine family does not belong to the scenario")

    index = enumerate_events(scenario, level)
    if len(index) > MAX_INDEX_SIZE:
        raise ScenarioStructureError(f"Certificate index of {len(index)} events exceeds {MAX_INDEX_SIZE}")

    rows: List[List[EntryClass]] = [[ZERO_ENTRY] * len(index) for _ in index]
    prob_events = set()
    free_keys = set()
    for i, e1 in enumerate(index):
        for j in range(i, len(index)):
            entry = classify_pair(e1, index[j])
            rows[i][j] = entry
            rows[j][i] = entry
            if entry.kind is EntryKind.PROB and not entry.event.is_null:
                prob_events.add(entry.event)
            elif entry.kind is EntryKind.FREE:
                free_keys.add(entry.key)

    variables: List[Hashable] = []
    if isinstance(binding, FreeBox):
        variables += [('prob', event) for event in sorted(prob_events, key=Event.sort_key)]
    variables += [('free', key) for key in sorted(free_keys, key=PairKey.sort_key)]
    if isinstance(binding, AffineFamily):
        variables.append(T_VARIABLE)

    logger.debug(
        f"Built {level.value} moment problem: {len(index)} events, "
        f"{len(prob_events)} probability entries, {len(free_keys)} free keys"
    )
    return MomentProblem(
        scenario=scenario,
        level=level,
        index=index,
        classification=tuple(tuple(row) for row in rows),
        binding=binding,
        variables=tuple(variables),
        registry={name: position for position, name in enumerate(variables)}
    )


@dataclass
class CertificateReport:
    min_eigenvalue: float
    zero_residual: float
    prob_residual: float
    free_residual: float
    phi_residual: float
    asymmetry: float
    tolerance: float = CERTIFICATE_TOL

    @property
    def accepted(self) -> bool:
        residuals = (self.zero_residual, self.prob_residual, self.free_residual,
                     self.phi_residual, self.asymmetry)
        return self.min_eigenvalue >= -self.tolerance and max(residuals) <= self.tolerance

    def to_dict(self) -> Dict[str, float]:
        return {
            'min_eigenvalue': self.min_eigenvalue,
            'zero_residual': self.zero_residual,
            'prob_residual': self.prob_residual,
            'free_residual': self.free_residual,
            'phi_residual': self.phi_residual,
            'asymmetry': self.asymmetry,
            'accepted': self.accepted
        }


def validate_certificate(gamma: np.ndarray, box: Box, level: LevelSpec,
                         tolerance: float = CERTIFICATE_TOL) -> CertificateReport:
    """Check a candidate certificate entry by entry against a box"""
    gamma = np.asarray(gamma, dtype=float)
    problem = build_moment_problem(box.scenario, level, FixedBox(box))
    n = problem.size
    if gamma.shape != (n, n):
        raise ScenarioStructureError(f"Certificate must be {n}x{n}, got {gamma.shape}")

    zero = prob = 0.0
    groups: Dict[PairKey, List[float]] = {}
    for i in range(n):
        for j in range(n):
            entry = problem.classification[i][j]
            value = gamma[i, j]
            if entry.kind is EntryKind.ZERO:
                zero = max(zero, abs(value))
            elif entry.kind is EntryKind.PROB:
                target = 1.0 if entry.event.is_null else box.marginal(entry.event)
                prob = max(prob, abs(value - target))
            else:
                groups.setdefault(entry.key, []).append(value)
    free = max((max(values) - min(values) for values in groups.values()), default=0.0)

    symmetric = 0.5 * (gamma + gamma.T)
    return CertificateReport(
        min_eigenvalue=float(np.linalg.eigvalsh(symmetric)[0]),
        zero_residual=float(zero),
        prob_residual=float(prob),
        free_residual=float(free),
        phi_residual=float(abs(gamma[0, 0] - 1.0)),
        asymmetry=float(np.max(np.abs(gamma - gamma.T))),
        tolerance=tolerance
    )


def gram_vectors(gamma: np.ndarray, tolerance: float = CERTIFICATE_TOL) -> List[np.ndarray]:
    """Vectors whose pairwise inner products reproduce gamma"""
    symmetric = 0.5 * (np.asarray(gamma, dtype=float) + np.asarray(gamma, dtype=float).T)
    eigenvalues, eigenvectors = np.linalg.eigh(symmetric)
    if eigenvalues[0] < -tolerance:
        raise NotPSDError(f"Matrix has eigenvalue {eigenvalues[0]:.3e} below -{tolerance:g}")
    keep = eigenvalues > tolerance
    factors = eigenvectors[:, keep] * np.sqrt(eigenvalues[keep])
    return [row.copy() for row in factors]


def restrict_certificate(gamma: np.ndarray, index: Sequence[Event], subset: Sequence[Event]) -> np.ndarray:
    """Principal submatrix of gamma on the events of subset"""
    position = {event: i for i, event in enumerate(index)}
    try:
        keep = [position[event] for event in subset]
    except KeyError as e:
        raise ScenarioStructureError(f"Event {e} is not in the certificate index")
    return np.asarray(gamma)[np.ix_(keep, keep)]
