"""Command-line front end: run certification jobs and benchmark suites.

Exit status contract: 0 when the target bound is proved (or the run
completes with no target); nonzero otherwise, with a machine-readable
error category (parse, domain, budget, certification) on stderr.
"""

from __future__ import annotations

import argparse
import os
import shlex
import sys
import time

from .expr import ParseError, parse_problem
from .interval import DomainError
from .optimizer import RunConfig, certify_bound, initial_control_points

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_DOMAIN = 3
EXIT_BUDGET = 4
EXIT_CERTIFICATION = 5

_CATEGORY_EXIT = {"parse": EXIT_PARSE, "domain": EXIT_DOMAIN,
                  "budget": EXIT_BUDGET, "certification": EXIT_CERTIFICATION}


class CLIError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


def _fail(category: str, message: str) -> int:
    sys.stderr.write(f"error: {category}: {message}\n")
    return _CATEGORY_EXIT[category]


def _bundled_dir() -> str:
    return os.path.join(os.path.dirname(__file__), "problems")


def _resolve_problem(path: str) -> str:
    if os.path.exists(path):
        return path
    bundled = os.path.join(_bundled_dir(), path)
    if os.path.exists(bundled):
        return bundled
    raise CLIError("parse", f"problem file not found: {path}")


def _load_problem(path: str):
    path = _resolve_problem(path)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise CLIError("parse", str(exc))
    name = os.path.splitext(os.path.basename(path))[0]
    try:
        return parse_problem(text, name=name)
    except ParseError as exc:
        raise CLIError("parse", str(exc))


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--order", type=int, default=2,
                   help="relaxation order k (default 2)")
    p.add_argument("--target", type=float, default=None,
                   help="lower bound to prove (overrides the file's goal)")
    p.add_argument("--max-boxes", type=int, default=64)
    p.add_argument("--control-points", type=int, default=1)
    p.add_argument("--template-threshold", type=int, default=6)
    p.add_argument("--box-iteration-cap", type=int, default=4)
    p.add_argument("--mode", choices=("numeric", "certified", "ia_sos"),
                   default="numeric")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", default=None, help="report output path")
    p.add_argument("--cert-dir", default=None,
                   help="directory for certificate files (certified mode)")


def _config_from_args(args, problem) -> RunConfig:
    target = args.target
    if target is None and problem.goal is not None:
        target = float(problem.goal)
    try:
        return RunConfig(
            order=args.order, mode=args.mode, target=target,
            max_boxes=args.max_boxes, control_points=args.control_points,
            template_threshold=args.template_threshold,
            box_iteration_cap=args.box_iteration_cap, tol=args.tol,
            seed=args.seed, jobs=args.jobs, cert_dir=args.cert_dir,
            problem_name=problem.name or "problem")
    except ValueError as exc:
        raise CLIError("parse", str(exc))


def _run_one(problem, cfg: RunConfig):
    if cfg.cert_dir is not None:
        os.makedirs(cfg.cert_dir, exist_ok=True)
    try:
        return certify_bound(problem.tree, problem.box, cfg)
    except DomainError as exc:
        raise CLIError("domain", str(exc))


def cmd_run(args) -> int:
    try:
        problem = _load_problem(args.problem)
        cfg = _config_from_args(args, problem)
        report = _run_one(problem, cfg)
    except CLIError as exc:
        return _fail(exc.category, str(exc))
    text = report.render()
    if args.report:
        with open(args.report, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    if cfg.mode == "certified" and cfg.cert_dir is not None:
        from .cert import check_estimator_certificates
        verdict = check_estimator_certificates(report, cfg.cert_dir)
        sys.stdout.write(f"certificates: {verdict.status}\n")
        if verdict.status == "Invalid":
            return _fail("certification", "; ".join(verdict.failures))
    if report.status == "proved" or (cfg.target is None
                                     and report.status == "completed"):
        return EXIT_OK
    return _fail("budget",
                 f"target {cfg.target} not proved within {cfg.max_boxes} "
                 f"boxes; best bound {report.bound!r}")


def _root_lifting_count(problem, cfg: RunConfig) -> int:
    from .optimizer import _Session, _estimate
    points = initial_control_points(problem.tree, problem.box,
                                    cfg.control_points, cfg.seed)
    sess = _Session(cfg, points)
    est, _ = _estimate(problem.tree, problem.box, sess)
    return est.n_lifting


def cmd_bench(args) -> int:
    try:
        with open(_resolve_problem(args.suite)) as fh:
            lines = fh.read().splitlines()
    except CLIError as exc:
        return _fail(exc.category, str(exc))
    except OSError as exc:
        return _fail("parse", str(exc))
    rows = []
    for line in lines:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = shlex.split(line)
        if len(parts) < 2:
            return _fail("parse", f"suite line needs 'name problem ...': {line!r}")
        rows.append((parts[0], parts[1], parts[2:]))

    header = (f"{'name':10} {'mode':8} {'k':>2} {'#s':>3} {'n_lift':>6} "
              f"{'#boxes':>6} {'time_s':>8} {'status':9} bound")
    print(header)
    print("-" * len(header))
    failures = 0
    parser = argparse.ArgumentParser()
    _add_run_flags(parser)
    for name, prob_path, extra in rows:
        for mode in ("numeric", "ia_sos"):
            try:
                row_args = parser.parse_args(extra)
                row_args.mode = mode
                problem = _load_problem(prob_path)
                cfg = _config_from_args(row_args, problem)
                n_lift = _root_lifting_count(problem, cfg)
                t0 = time.time()
                report = _run_one(problem, cfg)
                dt = time.time() - t0
                print(f"{name:10} {mode:8} {cfg.order:>2} "
                      f"{cfg.control_points:>3} {n_lift:>6} "
                      f"{report.boxes_processed:>6} {dt:>8.1f} "
                      f"{report.status:9} {report.bound!r}")
                if report.status == "failure":
                    failures += 1
            except (CLIError, SystemExit) as exc:
                msg = getattr(exc, "args", [exc])[0]
                print(f"{name:10} {mode:8} {'-':>2} {'-':>3} {'-':>6} "
                      f"{'-':>6} {'-':>8} {'error':9} {msg}")
                failures += 1
    return EXIT_OK if failures == 0 else EXIT_BUDGET


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="certbound",
        description="Certified lower bounds over boxes via SOS relaxations "
                    "with max-plus quadratic templates.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="certify one problem file")
    p_run.add_argument("problem", help="problem file (path or bundled name)")
    _add_run_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="run a benchmark suite")
    p_bench.add_argument("suite", help="suite file: 'name problem flags...'")
    p_bench.set_defaults(func=cmd_bench)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
