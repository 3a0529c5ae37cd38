"""Command-line front end.

Exit codes: 0 success, 1 an algebraic (tier-1) check or invariant failed,
2 invalid configuration, 3 propagation/decomposition failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from . import __version__
from . import decomposition as dc
from . import study
from .errors import ConfigError, HolodynError
from .linalg import dagger, frobenius_norms
from .models import load_config
from .propagation import evolve_frames

SEED_ENV = "HOLODYN_SEED"

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _seed_override():
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return None
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def _floats(arr):
    return [float(x) for x in np.asarray(arr).ravel()]


def tier1_checks(config, rows, traj_list):
    """Algebraic identities that must hold to rounding on every grid."""
    tol = config.tolerances["identity"]
    anti = max(float(frobenius_norms(t.F + dagger(t.F)).max()) for t in traj_list)
    return {
        "identity_eq3": max(r["res_identity_max"] for r in rows) <= tol,
        "circularity_eq4": max(r["res_circularity"] for r in rows) <= tol,
        "antihermitian_F": anti <= study.ALGEBRAIC_TOL,
    }


def build_report(config, traj, result, rows, fitted, wall_time):
    checks = tier1_checks(config, rows, [traj])
    return {
        "version": __version__,
        "seed": int(config.model.params.get("seed", 0)),
        "config": config.to_dict(),
        "series": {
            "times_interior": _floats(traj.times[1:-1]),
            "ode": _floats(result.residual_ode),
            "identity_eq3": _floats(result.residual_identity_eq3),
        },
        "scalars": {
            "factorization": result.residual_factorization,
            "circularity_eq4": result.residual_circularity_eq4,
        },
        "isometry_defect_holonomy": {
            "source": result.isometry_defect_holonomy[0],
            "target": result.isometry_defect_holonomy[1],
        },
        "convergence": {"rows": rows, **fitted},
        "tier1": checks,
        "wall_time_s": wall_time,
    }


def _write(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_run(args):
    start = time.perf_counter()
    config = load_config(args.config, _seed_override())
    traj = evolve_frames(config.model, config)
    result = dc.verify_factorization(traj)
    row = study.summarize(traj, result)
    report = build_report(config, traj, result, [row],
                          {"fitted_order_fact": None, "fitted_order_ode": None},
                          time.perf_counter() - start)
    _write(json.dumps(report, indent=2) + "\n", args.out)
    return EXIT_OK if all(report["tier1"].values()) else EXIT_CHECK_FAILED


def cmd_convergence(args):
    if args.halvings < 2:
        raise ConfigError("--halvings must be ≥ 2")
    start = time.perf_counter()
    config = load_config(args.config, _seed_override())
    conv = study.convergence_study(config, args.halvings)
    csv_text = "\n".join(study.convergence_csv_rows(conv)) + "\n"
    _write(csv_text, args.out)
    traj = conv.trajectories[-1]
    fitted = {
        "fitted_order_fact": conv.fitted_order_fact,
        "fitted_order_ode": conv.fitted_order_ode,
    }
    report = build_report(config, traj, dc.verify_factorization(traj), conv.rows, fitted,
                          time.perf_counter() - start)
    report["tier1"] = tier1_checks(config, conv.rows, conv.trajectories)
    if args.out is not None:
        _write(json.dumps(report, indent=2) + "\n", args.out + ".json")
    return EXIT_OK if all(report["tier1"].values()) else EXIT_CHECK_FAILED


def cmd_verify(args):
    if args.halvings < 2:
        raise ConfigError("--halvings must be ≥ 2")
    config = load_config(args.config, _seed_override())
    checks = study.invariant_suite(config, args.halvings)
    for check in checks:
        print(check.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} invariants passed")
    return EXIT_OK if failed == 0 else EXIT_CHECK_FAILED


def build_parser():
    parser = argparse.ArgumentParser(
        prog="holodyn",
        description="Holonomy/dynamic factorization of subspace evolution operators.",
    )
    parser.add_argument("--version", action="version", version=f"holodyn {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run the pipeline once and write a JSON report")
    run.add_argument("config")
    run.add_argument("--out", help="report path (default: stdout)")
    run.set_defaults(func=cmd_run)

    conv = sub.add_parser("convergence", help="step-halving study; CSV table plus JSON report")
    conv.add_argument("config")
    conv.add_argument("--halvings", type=int, required=True)
    conv.add_argument("--out", help="CSV path (report goes to <out>.json; default: CSV to stdout)")
    conv.set_defaults(func=cmd_convergence)

    verify = sub.add_parser("verify", help="evaluate the invariant suite")
    verify.add_argument("config")
    verify.add_argument("--halvings", type=int, default=4)
    verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (HolodynError, np.linalg.LinAlgError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
