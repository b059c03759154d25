import json

import numpy as np
import pytest

from helpers.errors import ScenarioStructureError
from helpers.file_io import (
    json_default, load_box, load_certificate, load_functional, load_pipeline, load_task, save_box,
    save_certificate, save_functional, save_task
)
from helpers.quantum_baseline import PUBLISHED
from helpers.scenario import LevelSpec, chsh_functional, enumerate_events


def test_stored_pr_box(pr, data_dir):
    assert np.allclose(load_box(data_dir / 'pr_box.json').table, pr.table)


def test_stored_point_matches_constants(published_box, data_dir):
    assert np.allclose(load_box(data_dir / 'section3_box.json').table, published_box.table, atol=1e-12)


def test_stored_functionals(pr, published_box, data_dir):
    chsh = load_functional(data_dir / 'chsh_functional.json')
    assert chsh.evaluate(pr) == pytest.approx(4.0)
    published = load_functional(data_dir / 'section3_functional.json')
    assert published.sense == 'min'
    assert published.evaluate(published_box) == pytest.approx(PUBLISHED.bell_functional().evaluate(published_box))


def test_box_file_roundtrip(published_box, tmp_path):
    path = save_box(published_box, tmp_path / 'nested' / 'box.json')
    assert np.allclose(load_box(path).table, published_box.table)


def test_functional_file_in_full_basis(quantum_boxes, tmp_path):
    path = save_functional(chsh_functional(), tmp_path / 'chsh.json', basis='full')
    loaded = load_functional(path)
    for box in quantum_boxes:
        assert loaded.evaluate(box) == pytest.approx(chsh_functional().evaluate(box))


def test_unknown_basis(tmp_path):
    with pytest.raises(ValueError):
        save_functional(chsh_functional(), tmp_path / 'f.json', basis='polar')


def test_box_with_wrong_length(tmp_path):
    path = tmp_path / 'box.json'
    path.write_text(json.dumps({'parties': 2, 'inputs': [2, 2], 'outputs': [2, 2], 'probabilities': [0.25] * 15}))
    with pytest.raises(ScenarioStructureError):
        load_box(path)


def test_box_missing_field(tmp_path):
    path = tmp_path / 'box.json'
    path.write_text(json.dumps({'parties': 2, 'inputs': [2, 2]}))
    with pytest.raises(ScenarioStructureError):
        load_box(path)


def test_box_must_be_an_object(tmp_path):
    path = tmp_path / 'box.json'
    path.write_text('[1, 2, 3]')
    with pytest.raises(ScenarioStructureError):
        load_box(path)


def test_certificate_roundtrip(chsh_scenario, tmp_path):
    index = list(enumerate_events(chsh_scenario, LevelSpec.ALMOST_QUANTUM))
    path = save_certificate(PUBLISHED.gamma(), index, LevelSpec.ALMOST_QUANTUM, tmp_path / 'gamma.json', margin=0.01)
    loaded = load_certificate(path)
    assert loaded['level'] is LevelSpec.ALMOST_QUANTUM
    assert loaded['index'] == index
    assert np.allclose(loaded['matrix'], PUBLISHED.gamma())
    assert loaded['psd_margin'] == 0.01


def test_asymmetric_certificate_rejected(chsh_scenario, tmp_path):
    index = list(enumerate_events(chsh_scenario, LevelSpec.Q1))
    gamma = np.eye(5)
    gamma[0, 1] = 0.5
    path = save_certificate(gamma, index, LevelSpec.Q1, tmp_path / 'gamma.json')
    with pytest.raises(ScenarioStructureError):
        load_certificate(path)


def test_empty_pipeline_is_identity(pr, tmp_path):
    path = tmp_path / 'wiring.json'
    path.write_text('{}')
    pipeline = load_pipeline(path)
    assert pipeline.grouping is None
    assert pipeline.post_selections == [] and pipeline.coarse_grainings == []


def test_partition_without_trees(tmp_path):
    path = tmp_path / 'wiring.json'
    path.write_text(json.dumps({'partition': [[0], [1]]}))
    with pytest.raises(ScenarioStructureError):
        load_pipeline(path)


def test_task_roundtrip(data_dir, tmp_path):
    task = load_task(data_dir / 'and_task.json')
    reloaded = load_task(save_task(task, tmp_path / 'task.json'))
    assert reloaded.n == 2
    assert reloaded.f.tolist() == [0, 0, 0, 1]


def test_json_default_handles_numpy():
    text = json.dumps({'a': np.float64(1.5), 'b': np.arange(3), 'c': LevelSpec.Q1}, default=json_default)
    assert json.loads(text) == {'a': 1.5, 'b': [0, 1, 2], 'c': LevelSpec.Q1.value}
