"""Command line: ``active-stokes run | check | export-config``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import yaml

from .experiments import ExperimentSpec, default_manifest, load_manifest, run_all
from .io import read_structured, to_builtin, write_metadata

log = logging.getLogger("active_stokes")


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=None,
                   help="base seed; experiment seeds become seed, seed+1, ...")
    p.add_argument("--threads", type=int, default=None, help="number of numba worker threads")
    p.add_argument("--out-dir", type=Path, default=Path("results"),
                   help="directory for CSV and metadata files (default: ./results)")
    p.add_argument("--tolerance-scale", type=float, default=1.0,
                   help="multiply every check tolerance by this factor")
    p.add_argument("--jobs", type=int, default=1,
                   help="run up to this many experiments concurrently (separate processes)")
    p.add_argument("-v", "--verbose", action="store_true", help="print every check")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="active-stokes",
                                 description="Run verification experiments for active suspensions.")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run the experiments listed in a YAML/JSON manifest")
    p.add_argument("spec_file", type=Path)
    _common(p)
    p = sub.add_parser("check", help="run the single-swimmer identity suite with default parameters")
    _common(p)
    p = sub.add_parser("export-config", help="write the default manifest (all experiment families)")
    p.add_argument("-o", "--output", type=Path, default=None, help="file to write (default: stdout)")
    _common(p)
    return ap


def _print_report(rep, verbose):
    status = "PASS" if rep.passed else "FAIL"
    print(f"{status} {rep.spec.name} ({rep.runtime:.1f} s)")
    if rep.error:
        print(f"    error: {rep.error}")
    for c in rep.checks:
        if verbose or not c.passed:
            mark = "ok " if c.passed else "BAD"
            print(f"    [{mark}] {c.name}: value={c.value:.6g} tol={c.tol:.3g} {c.detail}".rstrip())
    sys.stdout.flush()


def _configure(args):
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads is not None:
        import numba
        numba.set_num_threads(max(1, min(args.threads, numba.config.NUMBA_NUM_THREADS)))


def _run(specs, args):
    summary = run_all(specs, args.out_dir, args.tolerance_scale, args.seed,
                      log=lambda r: _print_report(r, args.verbose), jobs=max(1, args.jobs))
    write_metadata(Path(args.out_dir) / "summary.yaml", {
        "exit_status": summary.exit_status,
        "first_failure": summary.first_failure,
        "experiments": [{"name": r.spec.name, "id": r.spec.id, "passed": r.passed,
                         "error": r.error} for r in summary.reports],
    })
    if summary.first_failure:
        print(f"first failure: {summary.first_failure}")
    print(f"{sum(r.passed for r in summary.reports)}/{len(summary.reports)} experiments passed")
    return summary.exit_status


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _configure(args)
    if args.command == "export-config":
        text = yaml.safe_dump(to_builtin(default_manifest()), sort_keys=False)
        if args.output is None:
            sys.stdout.write(text)
        else:
            args.output.parent.mkdir(parents=True, exist_ok=True)
            with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
        return 0
    if args.command == "check":
        return _run([ExperimentSpec("identity_checks")], args)
    try:
        specs = load_manifest(read_structured(args.spec_file))
    except (OSError, yaml.YAMLError, ValueError) as exc:
        print(f"cannot read manifest {args.spec_file}: {exc}", file=sys.stderr)
        return 2
    return _run(specs, args)


if __name__ == "__main__":
    sys.exit(main())
