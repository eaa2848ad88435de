"""Command-line interface: analyze, solve, certify, selftest.

Exit codes form a small contract for shell pipelines:

    0  success (analyze/certify done, trajectory global to the horizon)
    2  problem-file or specification error
    3  regular block has index above one
    4  finite-time blow-up detected
    5  left the domain, constraint failure, or singular constraint Jacobian
    6  inconsistent initial data (including a missing free-component pin)

The environment variable DAE_PENCIL_SEED overrides the default seed; every
report embeds the seed, tolerances and package version for reproducibility.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .certificates import combined_verdict, parse_certificates, run_certificate
from .decomposition import decompose
from .errors import (DaePencilError, DegreeOverflow, IndexTooHigh,
                     InconsistentStart, NoConvergence, PhiSingular,
                     ProblemFormatError, ShapeMismatch)
from .integrate import (FreePin, IntegratorOptions, integrate, lagrange_report,
                        write_csv)
from .kernel import minimal_indices
from .pencil import DEFAULT_SEED, RankTolerance, classify
from .problem import load_problem
from .reduction import build_reduced, consistency_project
from .selftest import run_selftest

EXIT_OK = 0
EXIT_SPEC = 2
EXIT_INDEX = 3
EXIT_BLOWUP = 4
EXIT_FAILED = 5
EXIT_INCONSISTENT = 6


def _seed_from_env(cli_seed):
    if cli_seed is not None:
        return int(cli_seed)
    env = os.environ.get("DAE_PENCIL_SEED")
    return int(env) if env else DEFAULT_SEED


def _envelope(command: str, seed: int, payload: dict) -> dict:
    return {"tool": "daepencil", "version": __version__, "command": command,
            "seed": seed, **payload}


def _emit(report: dict, path: str | None):
    text = json.dumps(report, indent=2, sort_keys=False)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)


def cmd_analyze(args) -> int:
    seed = _seed_from_env(args.seed)
    tol = RankTolerance(seed=seed)
    try:
        pf = load_problem(args.problem)
    except ProblemFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    pencil = pf.dae.pencil
    cls = classify(pencil, tol)
    payload = {
        "classification": {
            "kind": cls.kind.value, "rank": cls.rank, "defect": cls.defect,
            "dual_defect": cls.dual_defect, "total_defect": cls.total_defect,
            "index": cls.index,
        },
    }
    try:
        prim, dual = minimal_indices(pencil, tol)
        payload["minimal_indices"] = {"primal": prim, "dual": dual}
    except DegreeOverflow as exc:
        payload["minimal_indices"] = {"error": str(exc)}
    try:
        dec = decompose(pencil, tol=tol)
    except IndexTooHigh as exc:
        payload["index_verdict"] = f"rejected: {exc}"
        _emit(_envelope("analyze", seed, payload), args.report)
        return EXIT_INDEX
    except DaePencilError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    payload["index_verdict"] = "regular block has index <= 1"
    payload["dims"] = dec.dims
    payload["identity_residuals"] = dec.report.to_dict()
    payload["tolerances"] = {"rank_rel": tol.threshold(pencil.shape),
                             "identity_tol": 1e-10}
    _emit(_envelope("analyze", seed, payload), args.report)
    return EXIT_OK


def _integrator_options(pf) -> IntegratorOptions:
    opts = IntegratorOptions()
    for key, val in pf.integrator.items():
        if hasattr(opts, key):
            setattr(opts, key, type(getattr(opts, key))(val)
                    if getattr(opts, key) is not None else val)
    return opts


def cmd_solve(args) -> int:
    seed = _seed_from_env(args.seed)
    try:
        pf = load_problem(args.problem)
    except ProblemFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    if pf.t0 is None or pf.x0 is None:
        print("error: problem file has no 'initial' block", file=sys.stderr)
        return EXIT_SPEC
    try:
        dec = decompose(pf.dae.pencil, tol=RankTolerance(seed=seed))
    except IndexTooHigh as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INDEX
    rs = build_reduced(pf.dae, dec)
    opts = _integrator_options(pf)
    pin = None
    if pf.phi_s2 is not None:
        pin = FreePin(curve=pf.phi_s2, functionals=pf.phi_s2_pins)
    x0 = pf.x0
    if args.project:
        try:
            x0 = consistency_project(rs, pf.t0, pf.x0).x
        except (PhiSingular, NoConvergence) as exc:
            print(f"error: cannot project x0 onto the manifold: {exc}",
                  file=sys.stderr)
            return EXIT_INCONSISTENT
    try:
        traj = integrate(rs, pf.t0, x0, phi_s2=pin, horizon=args.horizon,
                         opts=opts)
    except InconsistentStart as exc:
        res = rs.constraint_residuals(pf.t0, x0)
        print(f"error: inconsistent start: {exc}\n"
              f"residuals: algebraic {res.ae1:.6e}, overdetermined "
              f"{res.ae2 if res.ae2 is not None else 0.0:.6e}", file=sys.stderr)
        return EXIT_INCONSISTENT
    except ShapeMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC

    files = {}
    if args.out:
        write_csv(traj, args.out, pf.dae.n)
        files["trajectory_csv"] = args.out
    if args.plot:
        from .plotting import render_trajectory_figure
        target = args.out or "trajectory.csv"
        fig_path = str(Path(target).with_suffix(".png"))
        files["figure"] = render_trajectory_figure(
            traj, fig_path, pf.dae.n, title=Path(args.problem).stem)
    lagr = lagrange_report(traj, sup_bound=pf.bounds.get("sup_norm"))
    payload = {
        "verdict": traj.verdict.to_dict(),
        "lagrange": lagr,
        "sup_norm": traj.sup_norm(),
        "residual_max": {"ae1": max(traj.res_ae1), "ae2": max(traj.res_ae2)},
        "steps": {"accepted": traj.stats.get("accepted"),
                  "rejected": traj.stats.get("rejected"),
                  "nfev": traj.stats.get("nfev")},
        "tolerances": {"rtol": opts.rtol, "atol": opts.atol,
                       "consistency_tol": opts.consistency_tol},
        "files": files,
    }
    _emit(_envelope("solve", seed, payload), args.report)
    kind = traj.verdict.kind
    if kind == "global":
        return EXIT_OK
    if kind == "blowup":
        return EXIT_BLOWUP
    return EXIT_FAILED


def cmd_certify(args) -> int:
    seed = _seed_from_env(args.seed)
    try:
        pf = load_problem(args.problem)
        if not pf.certificates:
            print("error: problem file has no 'certificates' block",
                  file=sys.stderr)
            return EXIT_SPEC
        specs = parse_certificates(pf.certificates, pf.dae.n)
    except ProblemFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC
    try:
        dec = decompose(pf.dae.pencil, tol=RankTolerance(seed=seed))
    except IndexTooHigh as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INDEX
    rs = build_reduced(pf.dae, dec)
    reports = [run_certificate(rs, spec) for spec in specs]
    payload = {
        "checks": [r.to_dict() for r in reports],
        "combined": combined_verdict(reports),
        "semantics": "sampled evidence only; never a proof",
        "tolerances": {"margin_rel": 1e-9, "projection_tol": 1e-10},
    }
    _emit(_envelope("certify", seed, payload), args.report)
    return EXIT_OK


def cmd_selftest(args) -> int:
    ok = run_selftest(jobs=args.jobs)
    return EXIT_OK if ok else 1


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="daepencil",
        description="pencil analysis, semilinear DAE integration and "
                    "sampled solvability certificates")
    ap.add_argument("--seed", type=int, default=None,
                    help="seed override (also DAE_PENCIL_SEED)")
    sub = ap.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="classify the pencil and verify its "
                                       "block decomposition")
    a.add_argument("problem")
    a.add_argument("--report", default=None, help="write the JSON report here")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("solve", help="integrate the problem and emit "
                                     "trajectory CSV + JSON verdict")
    s.add_argument("problem")
    s.add_argument("--horizon", type=float, default=10.0)
    s.add_argument("--out", default="trajectory.csv",
                   help="trajectory CSV path ('' to skip)")
    s.add_argument("--report", default=None)
    s.add_argument("--project", action="store_true",
                   help="project x0 onto the consistency manifold first")
    s.add_argument("--plot", action="store_true",
                   help="render a figure next to the CSV output")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("certify", help="run the declared certificate checks")
    c.add_argument("problem")
    c.add_argument("--report", default=None)
    c.set_defaults(func=cmd_certify)

    t = sub.add_parser("selftest", help="run the acceptance corpus")
    t.add_argument("--jobs", type=int, default=1)
    t.set_defaults(func=cmd_selftest)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DaePencilError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SPEC


if __name__ == "__main__":
    sys.exit(main())
