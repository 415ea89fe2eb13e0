"""``track`` command line: run tracking scenarios, certify steps, check weights.

Exit codes: 0 on success, 2 when a certification or weight validation
fails, 3 on solver errors.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .errors import NetAllocError
from .graphs import design_weights, graph_from_json, validate_weight_matrix
from .solver import StepSizes, certify, estimate_lipschitz
from .tracking import (
    Scenario,
    export_log,
    initial_positions,
    run_tracking,
    step_problem,
)

EXIT_OK = 0
EXIT_UNCERTIFIED = 2
EXIT_SOLVER_ERROR = 3


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="track",
        description="Barycenter tracking over a robot network via regularized "
        "saddle-point iterations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a tracking scenario and export the log")
    p_run.add_argument("--scenario", required=True, help="scenario JSON file")
    p_run.add_argument(
        "--mode", choices=["centralized", "distributed"], default="centralized"
    )
    p_run.add_argument(
        "--oracle-check",
        action="store_true",
        help="re-solve every step with the reference solver and log deviations",
    )
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--format", choices=["csv", "json"], default="csv")

    p_cert = sub.add_parser(
        "certify", help="evaluate the step-size certificate for a scenario"
    )
    p_cert.add_argument("--scenario", required=True)
    p_cert.add_argument("--samples", type=int, default=200)
    p_cert.add_argument("--seed", type=int, default=0)
    p_cert.add_argument(
        "--box",
        type=float,
        default=None,
        help="sampling radius for the Lipschitz estimate (default: derived "
        "from the initial spread)",
    )

    p_val = sub.add_parser(
        "validate-weights", help="validate a weight matrix against a graph"
    )
    p_val.add_argument(
        "--graph",
        required=True,
        help='graph JSON file ({"nodes": N, "edges": [...]}); an optional '
        '"weights" entry holds the matrix to validate, otherwise the '
        "designed matrix is checked",
    )
    p_val.add_argument(
        "--strategy", choices=["laplacian", "scaled_laplacian"], default="laplacian"
    )
    p_val.add_argument("--tol", type=float, default=1e-10)
    return parser


def _cmd_run(args):
    scenario = Scenario.from_json(args.scenario)
    try:
        log = run_tracking(
            scenario, mode=args.mode, oracle_check=args.oracle_check
        )
    except NetAllocError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER_ERROR
    paths = export_log(log, args.out, fmt=args.format)
    out = {
        "written": paths,
        "summary": {
            k: v for k, v in log.summary.items() if not k.startswith("wall_time")
        },
    }
    if log.message_stats is not None:
        out["message_stats"] = log.message_stats
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _cmd_certify(args):
    scenario = Scenario.from_json(args.scenario)
    pos = initial_positions(scenario)
    p1 = step_problem(scenario, 1, pos)
    box = args.box
    if box is None:
        spread = float(
            np.max(np.linalg.norm(pos - scenario.target_path[0], axis=1))
        )
        box = 1.0 + 2.0 * spread
    est = estimate_lipschitz(p1, box=box, samples=args.samples, seed=args.seed)
    w = design_weights(scenario.graph, scenario.weight_strategy)
    cert = certify(
        w.spectral,
        phi=min(scenario.nu, scenario.epsilon),
        f_phi=est.value,
        s=StepSizes(alpha=scenario.alpha, beta=scenario.beta),
        w_matrix=w,
        f_phi_source="estimated",
    )
    print(cert.to_json())
    return EXIT_OK if cert.certified else EXIT_UNCERTIFIED


def _cmd_validate_weights(args):
    with open(args.graph, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    g = graph_from_json(doc)
    if "weights" in doc:
        entries = np.asarray(doc["weights"], dtype=float)
        report = validate_weight_matrix(entries, g, tol=args.tol)
    else:
        report = validate_weight_matrix(
            design_weights(g, args.strategy).entries, g, tol=args.tol
        )
    print(json.dumps(report.as_dict(), indent=2))
    return EXIT_OK if report.all_ok else EXIT_UNCERTIFIED


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "certify":
            return _cmd_certify(args)
        return _cmd_validate_weights(args)
    except NetAllocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER_ERROR


if __name__ == "__main__":
    sys.exit(main())
