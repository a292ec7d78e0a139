#!/usr/bin/env python3
"""
Command-line front end for the Po4 solver.

    po4_cli.py value  problems/example3.json --json
    po4_cli.py solve  problems/qsic_independent.json --epsilon 1e-3 --trace
    po4_cli.py qsic   problems/spheres_disjoint.json --rho 1e-8
    po4_cli.py aqp    problems/aqp_example.json
    po4_cli.py range  problems/example1.json --box 2 --count 5000 --seed 7 --out cloud.csv

Exit codes: 0 ok, 1 input error, 2 unbounded, 3 infeasible, 4 numerical trouble.
"""
import os
import sys
import json
import math
import time
import logging
import argparse
from typing import Any, Dict, List, Optional

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from apps.aqp import solve_aqp
from apps.qsic import solve_qsic
from core.errors import Po4Error, SolverError
from core.log_setup import setup_logging
from core.settings import SolverOptions, load_settings
from oracle.sampling import convexity_probe, sample_range, write_csv
from solvers.recovery import solve_po4_full
from solvers.sprocedure import solve_value
from storage.problem_file import ProblemFile

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_UNBOUNDED = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4

EXIT_CODES = {
    'Optimal': EXIT_OK,
    'Unbounded': EXIT_UNBOUNDED,
    'Infeasible': EXIT_INFEASIBLE,
    'NumericalTrouble': EXIT_NUMERICAL,
}


def exit_code_for(status: str) -> int:
    """Statuses outside the four (Po4) outcomes count as numerical trouble"""
    return EXIT_CODES.get(status, EXIT_NUMERICAL)


def json_ready(value: Any) -> Any:
    """Replace non-finite floats so the report is strict JSON"""
    if isinstance(value, float):
        if math.isnan(value):
            return None
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return value
    if isinstance(value, dict):
        return {k: json_ready(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [json_ready(v) for v in value]
    return value


def _format(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    if isinstance(value, list):
        return "[" + ", ".join(_format(v) for v in value) + "]"
    return str(value)


def print_report(report: Dict[str, Any], as_json: bool, headline: Optional[str] = None):
    if as_json:
        print(json.dumps(json_ready(report), indent=2))
        return
    if headline:
        print(headline)
    for key, value in report.items():
        if key == 'audit':
            for entry in value:
                verdict = "accepted" if entry['accepted'] else "rejected"
                print(f"  branch {entry['branch']}: {verdict} ({entry['reason']})")
            continue
        if isinstance(value, dict):
            print(f"{key}:")
            for sub_key, sub_value in value.items():
                print(f"  {sub_key}: {_format(sub_value)}")
            continue
        print(f"{key}: {_format(value)}")


def _options(args) -> SolverOptions:
    options = load_settings(args.config)
    return options.replace(gap_tol=args.tol, epsilon=getattr(args, 'epsilon', None),
                           rho=getattr(args, 'rho', None), restarts=getattr(args, 'restarts', None),
                           seed=getattr(args, 'seed', None))


def cmd_value(args, doc: ProblemFile, options: SolverOptions):
    result = solve_value(doc.problem, options)
    report = result.to_dict()
    headline = "UNBOUNDED" if report['status'] == 'Unbounded' else None
    return report, headline


def cmd_solve(args, doc: ProblemFile, options: SolverOptions):
    solution = solve_po4_full(doc.problem, epsilon=options.epsilon, options=options,
                              restarts=options.restarts)
    report = solution.to_dict(doc.problem)
    headline = None
    if report['status'] == 'Unbounded':
        headline = "UNBOUNDED"
    elif solution.message.startswith("RECOVERY FAILED"):
        headline = "RECOVERY FAILED (possible non-attainment)"
    return report, headline


def cmd_qsic(args, doc: ProblemFile, options: SolverOptions):
    result = solve_qsic(doc.problem.f, doc.problem.g, rho=options.rho, options=options,
                        epsilon=options.epsilon)
    return result.to_dict(), result.decision


def cmd_aqp(args, doc: ProblemFile, options: SolverOptions):
    result = solve_aqp(doc.problem.f, doc.problem.g, options)
    return result.to_dict(), None


def cmd_range(args, doc: ProblemFile, options: SolverOptions):
    box = options.grid_box if args.box is None else args.box
    cloud = sample_range(doc.problem.f, doc.problem.g, box, args.count, seed=options.seed)
    write_csv(cloud, args.out)
    report = {'status': 'Optimal', 'value': None, 'rows': cloud.count, 'out': args.out}
    if args.probe:
        report['convexity_probe'] = convexity_probe(cloud, pairs=args.probe, seed=options.seed).to_dict()
    return report, None


COMMANDS = {
    'value': cmd_value,
    'solve': cmd_solve,
    'qsic': cmd_qsic,
    'aqp': cmd_aqp,
    'range': cmd_range,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='Solver for quadratic problems in two quadratic functions (Po4)')
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('file', help='Problem file (JSON)')
    common.add_argument('--json', action='store_true', help='Emit one JSON object')
    common.add_argument('--tol', type=float, help='SDP relative duality gap tolerance')
    common.add_argument('--config', help='YAML file overriding config/solver_config.yaml')
    common.add_argument('--dump', action='store_true', help='Print the parsed problem file and exit')
    common.add_argument('--verbose', action='store_true', help='Log SDP iterations')
    common.add_argument('--trace', action='store_true', help='Log every bisection step')

    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('value', parents=[common], help='Optimal value by SDP')

    solve = sub.add_parser('solve', parents=[common], help='Optimal value and recovered x')
    solve.add_argument('--epsilon', type=float, help='Recovery accuracy on F')
    solve.add_argument('--restarts', type=int, help='Newton restarts')
    solve.add_argument('--seed', type=int, help='Newton start seed')

    qsic = sub.add_parser('qsic', parents=[common], help='Quadric surfaces intersection test')
    qsic.add_argument('--rho', type=float, help='Intersection threshold on inf f^2 + g^2')
    qsic.add_argument('--epsilon', type=float, help='Recovery accuracy')
    qsic.add_argument('--restarts', type=int, help='Newton restarts')

    sub.add_parser('aqp', parents=[common], help='min |f(x)| s.t. g(x) <= 0')

    rng = sub.add_parser('range', parents=[common], help='Sample the joint range to CSV')
    rng.add_argument('--box', type=float, help='Half-width of the sampling box')
    rng.add_argument('--count', type=int, default=1000, help='Number of samples')
    rng.add_argument('--seed', type=int, help='Sampling seed')
    rng.add_argument('--out', required=True, help='CSV output path')
    rng.add_argument('--probe', type=int, default=0, help='Midpoint pairs for the convexity probe')
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(logging.INFO if args.verbose else logging.WARNING,
                  trace=args.trace, verbose=args.verbose)

    try:
        doc = ProblemFile.load(args.file)
        if args.dump:
            print(doc.dumps())
            return EXIT_OK
        options = _options(args)
        start = time.perf_counter()
        report, headline = COMMANDS[args.command](args, doc, options)
    except SolverError as e:
        logger.error(f"Solver failure: {e}")
        print_report({'status': 'NumericalTrouble', 'value': None, 'stage': e.stage,
                      'message': str(e), 'elapsed_ms': 0.0}, args.json)
        return EXIT_NUMERICAL
    except (Po4Error, ValueError) as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT

    report['elapsed_ms'] = round((time.perf_counter() - start) * 1000.0, 3)
    print_report(report, args.json, headline)
    return exit_code_for(report['status'])


if __name__ == "__main__":
    sys.exit(main())
