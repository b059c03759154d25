import json

import numpy as np
import pytest

from aq_run import EXIT_ERROR, EXIT_FAILED, EXIT_OK, main, setup_argument_parser
from helpers.file_io import load_box, load_certificate, load_functional, save_box
from helpers.scenario import LevelSpec, validate_box


def test_parser_requires_a_command():
    with pytest.raises(SystemExit):
        setup_argument_parser().parse_args([])


def test_parser_normalizes_solver_name():
    args = setup_argument_parser().parse_args(['check', 'box.json', '--solver', 'scs'])
    assert args.solver == 'SCS'


def test_check_member(data_dir, tmp_path):
    certificate = tmp_path / 'gamma.json'
    code = main(['check', str(data_dir / 'section3_box.json'), '--emit-certificate', str(certificate)])
    assert code == EXIT_OK
    loaded = load_certificate(certificate)
    assert loaded['level'] is LevelSpec.ALMOST_QUANTUM
    assert loaded['matrix'].shape == (9, 9)


def test_check_non_member(data_dir):
    assert main(['check', str(data_dir / 'pr_box.json'), '--level', 'q1']) == EXIT_FAILED


def test_check_local_level(data_dir, published_box, tmp_path):
    assert main(['check', str(data_dir / 'pr_box.json'), '--level', 'local']) == EXIT_FAILED
    # the published point violates a Bell inequality
    path = save_box(published_box, tmp_path / 'point.json')
    assert main(['check', str(path), '--level', 'local']) == EXIT_FAILED


def test_check_missing_file(tmp_path):
    assert main(['check', str(tmp_path / 'missing.json')]) == EXIT_ERROR


def test_check_malformed_json(tmp_path):
    path = tmp_path / 'broken.json'
    path.write_text('{"parties": 2,')
    assert main(['check', str(path)]) == EXIT_ERROR


def test_check_signalling_box(tmp_path):
    path = tmp_path / 'signalling.json'
    path.write_text(json.dumps({
        'parties': 2, 'inputs': [2, 2], 'outputs': [2, 2],
        'probabilities': [1, 0, 0, 0, 0, 0, 0, 1, 1, 0, 0, 0, 0, 0, 0, 1]
    }))
    assert main(['check', str(path)]) == EXIT_ERROR


def test_bell_writes_outputs(data_dir, tmp_path):
    out = tmp_path / 'bell'
    assert main(['bell', str(data_dir / 'chsh_functional.json'), '--level', 'q1', '--out', str(out)]) == EXIT_OK
    assert validate_box(load_box(out / 'optimizer_box.json'), tolerance=1e-6, eps_zero=1e-6).valid
    assert load_certificate(out / 'certificate.json')['level'] is LevelSpec.Q1


def test_bell_local_level_has_no_certificate(data_dir, tmp_path):
    out = tmp_path / 'bell'
    assert main(['bell', str(data_dir / 'section3_functional.json'), '--level', 'local', '--out', str(out)]) == EXIT_OK
    assert (out / 'optimizer_box.json').exists()
    assert not (out / 'certificate.json').exists()


def test_wire(data_dir, tmp_path):
    out = tmp_path / 'wired.json'
    code = main([
        'wire', str(data_dir / 'pr_box.json'), str(data_dir / 'section3_box.json'),
        '--spec', str(data_dir / 'feed_forward_wiring.json'), '--out', str(out)
    ])
    assert code == EXIT_OK
    assert load_box(out).scenario.table_shape == (2, 2, 2, 2)


def test_wire_with_bad_spec(data_dir, tmp_path):
    spec = tmp_path / 'spec.json'
    spec.write_text(json.dumps({'coarse_grain': [{'party': 0, 'merge': [0, 0]}]}))
    code = main(['wire', str(data_dir / 'pr_box.json'), '--spec', str(spec), '--out', str(tmp_path / 'o.json')])
    assert code == EXIT_ERROR


def test_repro_writes_markdown(tmp_path):
    code = main(['repro', 'chsh', '--out', str(tmp_path), '--output-format', 'markdown', '--max-workers', '1'])
    assert code == EXIT_OK
    reports = list(tmp_path.glob('repro_report_*.md'))
    assert len(reports) == 1
    assert 'chsh_aq' in reports[0].read_text()


def test_bell_on_published_functional(data_dir, published_box, tmp_path):
    out = tmp_path / 'bell'
    assert main(['bell', str(data_dir / 'section3_functional.json'), '--out', str(out)]) == EXIT_OK
    functional = load_functional(data_dir / 'section3_functional.json')
    value = functional.evaluate(load_box(out / 'optimizer_box.json'))
    assert value < -1.0
    assert value <= functional.evaluate(published_box) + 1e-5


@pytest.mark.parametrize('argv', [
    ['check', 'b.json'],
    ['bell', 'f.json'],
    ['repro', 'chsh'],
    ['wire', 'b.json', '--spec', 's.json', '--out', 'o.json'],
    ['nlc', 't.json']
])
def test_every_command_accepts_seed(argv):
    assert setup_argument_parser().parse_args(argv + ['--seed', '9']).seed == 9


def test_check_sampled_box_is_member():
    assert main(['check', 'sampled', '--seed', '3']) == EXIT_OK


def test_wire_sampled_boxes_is_seeded(data_dir, tmp_path):
    spec = str(data_dir / 'feed_forward_wiring.json')
    first, second, other = tmp_path / 'a.json', tmp_path / 'b.json', tmp_path / 'c.json'
    for out, seed in ((first, '5'), (second, '5'), (other, '6')):
        assert main(['wire', 'sampled', 'sampled', '--spec', spec, '--out', str(out), '--seed', seed]) == EXIT_OK
    assert np.array_equal(load_box(first).table, load_box(second).table)
    assert not np.allclose(load_box(first).table, load_box(other).table)


def test_bell_sampled_functional(tmp_path):
    assert main(['bell', 'sampled', '--seed', '4', '--level', 'q1', '--out', str(tmp_path)]) == EXIT_OK
    assert (tmp_path / 'optimizer_box.json').exists()


def test_nlc_task_file(data_dir):
    assert main(['nlc', str(data_dir / 'and_task.json')]) == EXIT_OK


def test_nlc_sampled_task():
    assert main(['nlc', 'sampled', '--bits', '1', '--seed', '2']) == EXIT_OK


def test_nlc_bad_task(tmp_path):
    path = tmp_path / 'task.json'
    path.write_text(json.dumps({'n': 2, 'f': [0, 1, 2, 0], 'prior': [0.25] * 4}))
    assert main(['nlc', str(path)]) == EXIT_ERROR
