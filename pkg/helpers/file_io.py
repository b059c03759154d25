"""
JSON files for boxes, Bell functionals, certificates, wiring pipelines and
nonlocal computation tasks.

Box probabilities are stored flat: input tuples lexicographic with the
first party slowest, then output tuples in the same order.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from evaluators.nlc_evaluator import NonlocalComputationTask
from helpers.errors import ScenarioStructureError
from helpers.scenario import BellFunctional, Box, Event, LevelSpec, Scenario
from helpers.wirings import Leaf, MeasureNode, WiringPipeline, WiringSpec, WiringTree

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
SYMMETRY_TOLERANCE = 1e-12


def _read_json(path: PathLike) -> Dict[str, Any]:
    with open(path, 'r') as f:
        data = json.load(f)
    if not isinstance(data, dict):
        raise ScenarioStructureError(f"{path} must hold a JSON object")
    return data


def _write_json(data: Dict[str, Any], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(data, f, indent=2)
    logger.debug(f"Wrote {path}")
    return path


def _field(data: Dict[str, Any], name: str, source: str) -> Any:
    if name not in data:
        raise ScenarioStructureError(f"{source} is missing the '{name}' field")
    return data[name]


def _finite_array(values: Any, expected: int, source: str) -> np.ndarray:
    array = np.asarray(values, dtype=float).reshape(-1)
    if array.size != expected:
        raise ScenarioStructureError(f"{source} needs {expected} numbers, got {array.size}")
    if not np.isfinite(array).all():
        raise ScenarioStructureError(f"{source} holds non-finite numbers")
    return array


def scenario_from_dict(data: Dict[str, Any], source: str = 'scenario') -> Scenario:
    return Scenario(
        int(_field(data, 'parties', source)),
        tuple(_field(data, 'inputs', source)),
        tuple(_field(data, 'outputs', source))
    )


def box_to_dict(box: Box) -> Dict[str, Any]:
    return {**box.scenario.to_dict(), 'probabilities': box.table.reshape(-1).tolist()}


def box_from_dict(data: Dict[str, Any], source: str = 'box') -> Box:
    scenario = scenario_from_dict(data, source)
    scenario.check_size()
    probabilities = _finite_array(_field(data, 'probabilities', source), scenario.table_size, source)
    return Box(scenario, probabilities.reshape(scenario.table_shape))


def load_box(path: PathLike) -> Box:
    return box_from_dict(_read_json(path), str(path))


def save_box(box: Box, path: PathLike) -> Path:
    return _write_json(box_to_dict(box), path)


def functional_to_dict(functional: BellFunctional, basis: str = 'collins-gisin') -> Dict[str, Any]:
    if basis == 'collins-gisin':
        coefficients = functional.coefficients
    elif basis == 'full':
        coefficients = functional.full_coefficients().reshape(-1)
    else:
        raise ValueError(f"Unknown coefficient basis: {basis}")
    return {
        'scenario': functional.scenario.to_dict(),
        'basis': basis,
        'coefficients': coefficients.tolist(),
        'constant': functional.constant,
        'sense': functional.sense
    }


def load_functional(path: PathLike) -> BellFunctional:
    source = str(path)
    data = _read_json(path)
    scenario = scenario_from_dict(_field(data, 'scenario', source), source)
    basis = data.get('basis', 'collins-gisin')
    sense = data.get('sense', 'max')
    constant = float(data.get('constant', 0.0))
    coefficients = _field(data, 'coefficients', source)

    if basis == 'full':
        weights = _finite_array(coefficients, scenario.table_size, source)
        return BellFunctional.from_full(scenario, weights, constant, sense)
    if basis == 'collins-gisin':
        return BellFunctional(scenario, _finite_array(coefficients, len(np.ravel(coefficients)), source), constant, sense)
    raise ValueError(f"Unknown coefficient basis: {basis}")


def save_functional(functional: BellFunctional, path: PathLike, basis: str = 'collins-gisin') -> Path:
    return _write_json(functional_to_dict(functional, basis), path)


def certificate_to_dict(gamma: np.ndarray, index: List[Event], level: LevelSpec,
                        margin: Optional[float] = None) -> Dict[str, Any]:
    return {
        'level': level.value,
        'index': [event.serialize() for event in index],
        'matrix': np.asarray(gamma, dtype=float).reshape(-1).tolist(),
        'psd_margin': margin
    }


def save_certificate(gamma: np.ndarray, index: List[Event], level: LevelSpec, path: PathLike,
                     margin: Optional[float] = None) -> Path:
    return _write_json(certificate_to_dict(gamma, index, level, margin), path)


def load_certificate(path: PathLike) -> Dict[str, Any]:
    """Certificate file as {'level', 'index', 'matrix', 'psd_margin'} with parsed events and a square matrix"""
    source = str(path)
    data = _read_json(path)
    index = [Event.parse(text) for text in _field(data, 'index', source)]
    size = len(index)
    matrix = _finite_array(_field(data, 'matrix', source), size * size, source).reshape(size, size)
    if np.max(np.abs(matrix - matrix.T), initial=0.0) > SYMMETRY_TOLERANCE:
        raise ScenarioStructureError(f"{source}: certificate matrix is not symmetric")
    return {
        'level': LevelSpec.from_name(_field(data, 'level', source)),
        'index': index,
        'matrix': matrix,
        'psd_margin': data.get('psd_margin')
    }


def tree_from_dict(data: Dict[str, Any]) -> WiringTree:
    if 'output' in data:
        return Leaf(int(data['output']))
    try:
        return MeasureNode(
            int(data['party']),
            int(data['input']),
            tuple(tree_from_dict(child) for child in data['children'])
        )
    except KeyError as e:
        raise ScenarioStructureError(f"Wiring tree node is missing {e}")


def tree_to_dict(tree: WiringTree) -> Dict[str, Any]:
    if isinstance(tree, Leaf):
        return {'output': tree.output}
    return {'party': tree.party, 'input': tree.input, 'children': [tree_to_dict(child) for child in tree.children]}


def pipeline_from_dict(data: Dict[str, Any]) -> WiringPipeline:
    """Empty or missing sections are skipped; an empty object is the identity"""
    try:
        post_selections = [(int(p['party']), int(p['input']), int(p['output'])) for p in data.get('post_select', [])]
        coarse_grainings = [(int(c['party']), tuple(int(v) for v in c['merge'])) for c in data.get('coarse_grain', [])]
    except KeyError as e:
        raise ScenarioStructureError(f"Wiring step is missing {e}")

    grouping = None
    if data.get('partition') is not None:
        trees = data.get('trees')
        if trees is None:
            raise ScenarioStructureError("A partition needs decision trees")
        grouping = WiringSpec(
            tuple(tuple(int(k) for k in group) for group in data['partition']),
            tuple(tuple(tree_from_dict(tree) for tree in per_party) for per_party in trees),
            bool(data.get('fine_grained', False))
        )
    return WiringPipeline(post_selections, grouping, coarse_grainings)


def load_pipeline(path: PathLike) -> WiringPipeline:
    return pipeline_from_dict(_read_json(path))


def load_task(path: PathLike) -> NonlocalComputationTask:
    source = str(path)
    data = _read_json(path)
    return NonlocalComputationTask(
        int(_field(data, 'n', source)),
        np.asarray(_field(data, 'f', source)),
        np.asarray(_field(data, 'prior', source), dtype=float)
    )


def save_task(task: NonlocalComputationTask, path: PathLike) -> Path:
    return _write_json(task.to_dict(), path)


def json_default(value: Any) -> Any:
    """json.dump fallback for numpy scalars, arrays and enums in reports"""
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if hasattr(value, 'value'):
        return value.value
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")
