import json
import logging
from dataclasses import asdict, dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List

import yaml

from helpers.file_io import json_default

logger = logging.getLogger(__name__)

TOOL_VERSION = '0.1.0'


@dataclass
class AcceptanceGate:
    """What a reproduction run must satisfy to pass"""
    require_all_checks: bool = True
    enforce_runtime: bool = False
    max_error_targets: int = 0

    def __post_init__(self):
        if self.max_error_targets < 0:
            raise ValueError(f"max_error_targets must be nonnegative, got {self.max_error_targets}")


def _plain(data: Any) -> Any:
    """Numpy scalars and enums replaced by plain JSON values"""
    return json.loads(json.dumps(data, default=json_default))


def check_acceptance(results: List[Dict[str, Any]], gate: AcceptanceGate) -> Dict[str, Any]:
    """Check target results against the acceptance gate"""
    errors = [r['target'] for r in results if r['status'] == 'error']
    failed_checks = [
        f"{r['target']}.{name}"
        for r in results
        for name, entry in r.get('metrics_scores', {}).items()
        if not entry['passed']
    ]
    slow = [r['target'] for r in results if r.get('within_runtime') is False]
    inexact = [
        f"{r['target']}.{name}"
        for r in results
        for name, entry in r.get('metrics_scores', {}).items()
        if entry.get('solver_status') not in (None, 'optimal')
    ]

    checks = {
        'errors': len(errors) <= gate.max_error_targets,
        'checks': not gate.require_all_checks or not failed_checks,
        'runtime': not gate.enforce_runtime or not slow
    }
    return {
        'passed': all(checks.values()),
        'checks': checks,
        'thresholds': asdict(gate),
        'actual_values': {
            'error_targets': errors, 'failed_checks': failed_checks,
            'slow_targets': slow, 'inexact_checks': inexact
        }
    }


def build_report(results: List[Dict[str, Any]], config: Dict[str, Any],
                 gate: AcceptanceGate = None) -> Dict[str, Any]:
    acceptance = check_acceptance(results, gate or AcceptanceGate())
    settings = config.get('solver_settings')
    return _plain({
        'status': 'passed' if acceptance['passed'] else 'failed',
        'timestamp': datetime.now().isoformat(),
        'tool_version': TOOL_VERSION,
        'solver_settings': settings.to_dict() if settings is not None else {},
        'seed': config.get('AQ_SEED'),
        'acceptance': acceptance,
        'targets': results
    })


def _format_value(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return '-' if value is None else str(value)


def generate_markdown_report(report: Dict[str, Any]) -> str:
    """Generate markdown report with computed values next to published ones"""
    status_emoji = {
        'passed': '✅',
        'failed': '❌',
        'error': '⚠️'
    }

    lines = [
        '# Almost-Quantum Reproduction Report',
        '',
        f"**Status:** {status_emoji.get(report['status'], '❓')} {report['status'].upper()}",
        '',
        f"**Timestamp:** {report['timestamp']}",
        f"**Tool version:** {report['tool_version']}",
        f"**Solver:** {report['solver_settings']}",
        ''
    ]

    for result in report['targets']:
        lines.append(f"## {status_emoji.get(result['status'], '❓')} {result['target']}")
        if 'execution_time' in result:
            lines.append(f"_Execution time: {result['execution_time']:.2f} s_")
        if result['status'] == 'error':
            lines.append(f"Error: {result.get('error')}")
        lines += ['', '| Check | Computed | Published | Tolerance | Result |', '|---|---|---|---|---|']
        for name, entry in result.get('metrics_scores', {}).items():
            mark = '✅' if entry['passed'] else '❌'
            if entry['passed'] and entry.get('solver_status') not in (None, 'optimal'):
                mark = f"⚠️ {entry['solver_status']}"
            lines.append(
                f"| {name} | {_format_value(entry['score'])} | {_format_value(entry['reference_value'])} "
                f"| {_format_value(entry['tolerance'])} | {mark} |"
            )
        lines.append('')

    acceptance = report['acceptance']
    lines.append('## Acceptance Gate')
    for check_name, passed in acceptance['checks'].items():
        lines.append(f"- {'✅' if passed else '❌'} {check_name}")
    return '\n'.join(lines) + '\n'


def generate_report(report: Dict[str, Any], output_format: str = 'json') -> str:
    if output_format == 'json':
        return json.dumps(report, indent=2, default=json_default)
    elif output_format == 'yaml':
        return yaml.dump(_plain(report), default_flow_style=False, allow_unicode=True)
    elif output_format == 'markdown':
        return generate_markdown_report(report)
    else:
        raise ValueError(f"Unsupported output format: {output_format}")


def save_results(report: Dict[str, Any], output_dir: str, output_format: str = 'json') -> Path:
    """Write the report to a timestamped file under output_dir"""
    extensions = {'json': 'json', 'yaml': 'yaml', 'markdown': 'md'}
    if output_format not in extensions:
        raise ValueError(f"Unsupported output format: {output_format}")
    directory = Path(output_dir)
    directory.mkdir(parents=True, exist_ok=True)

    timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
    path = directory / f"repro_report_{timestamp}.{extensions[output_format]}"
    path.write_text(generate_report(report, output_format))
    logger.info(f"Report saved to {path}")
    return path
