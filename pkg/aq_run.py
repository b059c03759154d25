#!/usr/bin/env python3
"""
Almost-quantum membership, Bell optimization, wirings and reproduction runs
from the command line.

Exit codes: 0 member / success / all checks passed, 1 non-member / a check
failed, 2 error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from acceptance_report import build_report, save_results
from concurrent_runner import run_concurrent_repro
from evaluators.ic_evaluator import random_functional
from evaluators.nlc_evaluator import nlc_classical_bound, nlc_phi_bound, nlc_q1_value, random_task
from helpers.conic_solver import (
    MEMBERSHIP_THRESHOLD, certify_membership, local_bound, lp_local_membership,
    maximize_linear, maximize_no_signalling
)
from helpers.errors import AlmostQuantumError
from helpers.file_io import load_box, load_functional, load_pipeline, load_task, save_box, save_certificate
from helpers.moment_certificates import FixedBox, FreeBox, build_moment_problem
from helpers.quantum_baseline import CHSH_SCENARIO, sample_quantum_box
from helpers.scenario import Box, LevelSpec
from helpers.wirings import run_pipeline
from repro_run import TARGETS, get_config, run_targets

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_ERROR = 2

SAMPLED = 'sampled'
NLC_TOLERANCE = 1e-6


def setup_argument_parser() -> argparse.ArgumentParser:
    """Setup command line argument parser"""
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--verbose', '-v', action='store_true', help='Enable verbose logging')
    common.add_argument('--solver', choices=['CLARABEL', 'SCS', 'CVXOPT'], type=str.upper,
                        help='Conic solver backend (default from AQ_SOLVER)')
    common.add_argument('--seed', type=int, default=None,
                        help='Seed for sampled boxes, random functionals and tasks (default from AQ_SEED)')

    parser = argparse.ArgumentParser(
        description='Almost-quantum correlation toolkit',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Is a box almost quantum?
  python aq_run.py check data_files/section3_box.json --level aq

  # Maximize CHSH over the macroscopic-locality relaxation
  python aq_run.py bell data_files/chsh_functional.json --level q1 --out bell_results

  # Reproduce published results into a markdown report
  python aq_run.py repro section3 chsh table1 --output-format markdown

  # Wire two boxes together
  python aq_run.py wire box_a.json box_b.json --spec data_files/feed_forward_wiring.json --out wired.json

  # Bounds of a nonlocal computation task
  python aq_run.py nlc data_files/and_task.json
        """
    )
    commands = parser.add_subparsers(dest='command', required=True)

    check = commands.add_parser('check', parents=[common], help='Membership test for a box')
    check.add_argument('box', help=f'Box JSON file, or "{SAMPLED}" for a seeded two-qubit box')
    check.add_argument('--level', choices=['aq', 'q1', 'local'], default='aq', help='Set to test against')
    check.add_argument('--tol', type=float, default=None,
                       help=f'Membership tolerance (default {-MEMBERSHIP_THRESHOLD:g})')
    check.add_argument('--emit-certificate', default=None, help='Write the certificate matrix to this path')

    bell = commands.add_parser('bell', parents=[common], help='Optimize a Bell functional')
    bell.add_argument('functional', help=f'Functional JSON file, or "{SAMPLED}" for a seeded random functional')
    bell.add_argument('--level', choices=['aq', 'q1', 'local', 'ns'], default='aq', help='Set to optimize over')
    bell.add_argument('--out', default=None, help='Directory for the optimizer box and certificate')

    repro = commands.add_parser('repro', parents=[common], help='Reproduce published results')
    repro.add_argument('targets', nargs='+', choices=TARGETS, help='Reproduction targets')
    repro.add_argument('--out', default=None, help='Output directory (default from AQ_OUTPUT_DIR)')
    repro.add_argument('--output-format', choices=['json', 'yaml', 'markdown'], default='json',
                       help='Report format')
    repro.add_argument('--grid', type=int, default=None, help='Bell-operator scan points per angle')
    repro.add_argument('--max-clique', type=int, default=None, help='Largest LO event set')
    repro.add_argument('--max-workers', type=int, default=None, help='Targets run concurrently')

    wire = commands.add_parser('wire', parents=[common], help='Apply a wiring to boxes')
    wire.add_argument('boxes', nargs='+', help=f'Box JSON files or "{SAMPLED}", composed in order')
    wire.add_argument('--spec', required=True, help='Wiring JSON file')
    wire.add_argument('--out', required=True, help='Output box JSON file')

    nlc = commands.add_parser('nlc', parents=[common], help='Bounds of a nonlocal computation task')
    nlc.add_argument('task', help=f'Task JSON file, or "{SAMPLED}" for a seeded random task')
    nlc.add_argument('--bits', type=int, default=2, help='Bits per input for a sampled task')
    return parser


def _config(args: argparse.Namespace, **overrides: Any) -> Dict[str, Any]:
    return get_config({'AQ_SOLVER': args.solver, 'AQ_SEED': args.seed, 'VERBOSE': args.verbose or None, **overrides})


def _box(source: str, seed: int) -> Box:
    if source == SAMPLED:
        logger.info(f"Sampling a two-qubit box with seed {seed}")
        return sample_quantum_box(CHSH_SCENARIO, seed)
    return load_box(source)


def _banner(title: str, lines: List[str]) -> None:
    print("\n" + "=" * 50)
    print(title)
    print("=" * 50)
    for line in lines:
        print(line)
    print("=" * 50)


def run_check(args: argparse.Namespace) -> int:
    config = _config(args)
    settings = config['solver_settings']
    box = _box(args.box, config['AQ_SEED'])
    tolerance = args.tol if args.tol is not None else -MEMBERSHIP_THRESHOLD

    if args.level == 'local':
        result = lp_local_membership(box, settings, tolerance=tolerance)
        member, margin = result.member, result.margin
        if args.emit_certificate:
            logger.warning("The local level has no certificate matrix; --emit-certificate ignored")
    else:
        level = LevelSpec.from_name(args.level)
        problem = build_moment_problem(box.scenario, level, FixedBox(box))
        result = certify_membership(problem, settings, threshold=-tolerance)
        member, margin = result.member, result.margin
        if args.emit_certificate:
            save_certificate(result.gamma, list(problem.index), level, args.emit_certificate, margin)

    _banner("MEMBERSHIP CHECK", [
        f"Box: {args.box}",
        f"Level: {args.level}",
        f"Margin: {margin:.3e}",
        f"Verdict: {'member' if member else 'not a member'}"
    ])
    return EXIT_OK if member else EXIT_FAILED


def run_bell(args: argparse.Namespace) -> int:
    config = _config(args)
    settings = config['solver_settings']
    if args.functional == SAMPLED:
        functional = random_functional(CHSH_SCENARIO, np.random.default_rng(config['AQ_SEED']))
    else:
        functional = load_functional(args.functional)

    gamma = index = None
    if args.level == 'local':
        optimum = local_bound(functional)
        value, box = optimum.value, optimum.box
    elif args.level == 'ns':
        optimum = maximize_no_signalling(functional, settings)
        value, box = optimum.value, optimum.box
    else:
        level = LevelSpec.from_name(args.level)
        problem = build_moment_problem(functional.scenario, level, FreeBox())
        optimum = maximize_linear(problem, functional, settings)
        value, box, gamma, index = optimum.value, optimum.box, optimum.gamma, list(problem.index)

    lines = [f"Functional: {args.functional}", f"Level: {args.level} ({functional.sense})", f"Optimum: {value:.8f}"]
    if args.out:
        out = Path(args.out)
        lines.append(f"Optimizer box: {save_box(box, out / 'optimizer_box.json')}")
        if gamma is not None:
            lines.append(f"Certificate: {save_certificate(gamma, index, LevelSpec.from_name(args.level), out / 'certificate.json')}")
    _banner("BELL OPTIMIZATION", lines)
    return EXIT_OK


def run_repro(args: argparse.Namespace) -> int:
    config = _config(
        args,
        AQ_GRID_RESOLUTION=args.grid,
        AQ_MAX_CLIQUE=args.max_clique,
        AQ_MAX_WORKERS=args.max_workers,
        AQ_OUTPUT_DIR=args.out
    )
    targets = list(dict.fromkeys(args.targets))
    if len(targets) > 1 and config['AQ_MAX_WORKERS'] > 1:
        results = run_concurrent_repro(targets, config)['targets']
    else:
        results = run_targets(targets, config)

    report = build_report(results, config)
    output_file = save_results(report, config['AQ_OUTPUT_DIR'], args.output_format)

    lines = []
    for result in results:
        mark = '✅' if result['status'] == 'passed' else '❌'
        lines.append(f"{mark} {result['target']}: {result['status']}")
    lines += [f"Report Status: {report['status']}", f"Results saved to: {output_file}"]
    _banner("REPRODUCTION COMPLETED", lines)
    return EXIT_OK if report['status'] == 'passed' else EXIT_FAILED


def run_wire(args: argparse.Namespace) -> int:
    seed = _config(args)['AQ_SEED']
    # each sampled operand gets its own seed so two of them are independent
    boxes = [_box(path, seed + i) for i, path in enumerate(args.boxes)]
    result = run_pipeline(boxes, load_pipeline(args.spec))
    save_box(result, args.out)
    _banner("WIRING APPLIED", [
        f"Inputs: {', '.join(args.boxes)}",
        f"Result scenario: {result.scenario.to_dict()}",
        f"Saved to: {args.out}"
    ])
    return EXIT_OK


def run_nlc(args: argparse.Namespace) -> int:
    config = _config(args)
    if args.task == SAMPLED:
        task = random_task(args.bits, np.random.default_rng(config['AQ_SEED']))
    else:
        task = load_task(args.task)

    classical = nlc_classical_bound(task)
    phi = nlc_phi_bound(task)
    q1 = nlc_q1_value(task, config['solver_settings'])
    holds = q1 <= classical + NLC_TOLERANCE
    _banner("NONLOCAL COMPUTATION", [
        f"Task: {args.task} (n={task.n})",
        f"Classical bound: {classical:.8f}",
        f"Spectral bound: {phi:.8f}",
        f"Q1 value: {q1:.8f}",
        f"{'✅' if holds else '❌'} Q1 value {'within' if holds else 'above'} the classical bound"
    ])
    return EXIT_OK if holds else EXIT_FAILED


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point"""
    logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    parser = setup_argument_parser()
    args = parser.parse_args(argv)

    if args.verbose:
        logging.getLogger().setLevel(logging.DEBUG)

    handlers = {'check': run_check, 'bell': run_bell, 'repro': run_repro, 'wire': run_wire, 'nlc': run_nlc}
    try:
        return handlers[args.command](args)
    except (AlmostQuantumError, ValueError, OSError, json.JSONDecodeError) as e:
        logger.error(f"{args.command} failed: {str(e)}")
        return EXIT_ERROR
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
