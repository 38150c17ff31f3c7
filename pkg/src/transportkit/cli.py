"""Command line entry point: run scenario files and the bundled corpus."""

from __future__ import annotations

import argparse
import os
import sys
import tempfile
from pathlib import Path

from .exprfield import DomainError, UnresolvedParameterError
from .ode import TransportError
from .scenarios import Report, ScenarioError, bundled, dumps, load, run_scenario

EXIT_OK, EXIT_CHECK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3


def _write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _emit(report: Report, out: Path | None):
    text = dumps(report.to_json())
    if out is None:
        sys.stdout.write(text)
        return
    for name, body in sorted(report.artifacts.items()):
        _write_atomic(out / name, body)
    _write_atomic(out / f"{report.scenario}.json", text)


def _run_one(path, out, seed, tol) -> int:
    try:
        scenario = load(path)
    except (ScenarioError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        report = run_scenario(scenario, seed=seed, tol=tol)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (TransportError, DomainError, UnresolvedParameterError, ArithmeticError, ValueError) as exc:
        print(f"runtime error in {scenario.id}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _emit(report, out)
    for name in report.failures:
        print(f"check failed: {scenario.id}: {name}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_CHECK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="transportkit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one scenario file")
    run.add_argument("scenario", help="scenario JSON file or bundled scenario name")
    run.add_argument("--out", type=Path, help="directory for the JSON report and artifacts")
    run.add_argument("--tol", type=float, help="transport tolerance override")
    run.add_argument("--seed", type=int, help="seed for randomized sampling")
    sub.add_parser("list-scenarios", help="list bundled scenarios")
    verify = sub.add_parser("verify-all", help="run the bundled corpus")
    verify.add_argument("--out", type=Path)
    args = parser.parse_args(argv)

    if args.command == "list-scenarios":
        for name in bundled():
            print(name)
        return EXIT_OK
    if args.command == "run":
        if args.tol is not None and args.tol <= 0:
            print("error: --tol must be positive", file=sys.stderr)
            return EXIT_INVALID
        path = args.scenario
        files = bundled()
        if not Path(path).exists() and path in files:
            path = files[path]
        return _run_one(path, args.out, args.seed, args.tol)

    worst = EXIT_OK
    for name, path in bundled().items():
        code = _run_one(path, args.out or Path("reports"), None, None)
        print(f"{'PASS' if code == EXIT_OK else 'FAIL'} {name} (exit {code})")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
