"""Command-line front door: solve, validate, export, report."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import __version__
from .case import CaseError, NetworkCase, load_profiles, resolve_case, to_per_unit, validate_case
from .model import build_model, loss_coefficients, shed_coefficients
from .mps import FORMATS, write_mps
from .pipeline import MODE_NAMES, exit_status, solve_case
from .report import (ReportError, read_schedule, write_figure_data, write_schedule,
                     write_summary, write_topology)
from .solver import SolverOptions
from .verify import verify_schedule

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_LIMIT, EXIT_REJECTED = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    # usage errors share the invalid-input code; 2 is reserved for infeasibility
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _load(args) -> NetworkCase:
    case = resolve_case(args.case)
    if getattr(args, "profile", None):
        case = case.with_profiles(load_profiles(Path(args.profile).read_text()))
        problems = validate_case(case)
        if problems:
            raise CaseError("invalid profile override: " + "; ".join(map(str, problems)), problems)
    return case


def _solver_options(args, log) -> SolverOptions:
    return SolverOptions(rel_gap_tol=args.gap, time_limit_s=args.time_limit,
                         threads=args.threads, deterministic=args.deterministic,
                         verbose=args.verbose, log=log)


def cmd_solve(args) -> int:
    net = to_per_unit(_load(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    modes = MODE_NAMES[args.mode]
    result = solve_case(net, modes, _solver_options(args, sys.stderr))
    code = exit_status(result)
    # every file is written here, after the solve has finished
    (out / "solve.log").write_text("".join(line + "\n" for line in result.log))
    write_summary(result, out / "summary.txt")
    if result.schedule is None:
        print(f"no solution: {result.status}", file=sys.stderr)
        return EXIT_INFEASIBLE if code == 2 else EXIT_LIMIT
    write_schedule(result.schedule, out / "schedule.csv")
    write_topology(result.schedule, net, out / "topology.csv")
    report = verify_schedule(result.schedule, net)
    (out / "verification.txt").write_text(report.to_text())
    s = result.split
    print(f"status={result.status} OF={s.of:.6f} OF1={s.of1:.6f} OF2={s.of2:.6f} "
          f"gap={result.gap:.3e} nodes={result.nodes} runtime={result.runtime:.1f}s")
    if not report.passed:
        for c in report.violations:
            print(f"rejected: {c.line()}", file=sys.stderr)
        return EXIT_REJECTED
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        case = _load(args)
    except CaseError as exc:
        for v in exc.violations or [exc]:
            print(f"violation: {v}")
        return EXIT_INPUT
    if not args.solution:
        print(f"case {case.name}: valid")
        return EXIT_OK
    net = to_per_unit(case)
    path = Path(args.solution)
    if path.is_dir():
        path = path / "schedule.csv"
    sched = read_schedule(path, net)
    report = verify_schedule(sched, net)
    sys.stdout.write(report.to_text())
    return EXIT_OK if report.passed else EXIT_REJECTED


def cmd_export(args) -> int:
    if args.format not in FORMATS:
        print(f"unsupported format {args.format!r}; choose from {', '.join(FORMATS)}", file=sys.stderr)
        return EXIT_INPUT
    net = to_per_unit(_load(args))
    modes = MODE_NAMES[args.mode]
    inst = build_model(net, modes)
    # raw OF1 + OF2: the normalizers would need the pre-solves
    inst = inst.with_objective(loss_coefficients(inst) + shed_coefficients(inst))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{net.case.name}_{args.mode}.mps"
    write_mps(inst, path, args.format)
    print(f"wrote {path} ({inst.n_cols} columns, {inst.binary_columns.size} integer, "
          f"{inst.n_rows} rows, {len(inst.cones)} cones)")
    return EXIT_OK


def cmd_report(args) -> int:
    for path in write_figure_data(Path(args.schedule), Path(args.out)):
        print(f"wrote {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="adnres", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def case_args(sp, mode=True):
        sp.add_argument("--case", required=True, help="built-in case name or TOML file")
        sp.add_argument("--profile", help="TOML file with load_factor and wind_speed overrides")
        if mode:
            sp.add_argument("--mode", choices=tuple(MODE_NAMES), default="both")

    s = sub.add_parser("solve", help="pre-solves, joint solve and artifacts")
    case_args(s)
    s.add_argument("--gap", type=float, default=1e-3, help="relative gap tolerance")
    s.add_argument("--time-limit", type=float, default=3600.0, help="seconds")
    s.add_argument("--threads", type=int, default=1)
    s.add_argument("--deterministic", action="store_true",
                   help="single-threaded LP solves, bit-identical reruns")
    s.add_argument("--out", default="out")
    s.add_argument("-v", "--verbose", action="count", default=0)
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("validate", help="check a case, or a solution against it")
    case_args(v, mode=False)
    v.add_argument("--solution", help="schedule.csv or a solve output directory")
    v.set_defaults(func=cmd_validate)

    e = sub.add_parser("export", help="write the model in an MPS layout")
    case_args(e)
    e.add_argument("--format", default="mps", help=f"one of {', '.join(FORMATS)}")
    e.add_argument("--out", default="out")
    e.set_defaults(func=cmd_export)

    r = sub.add_parser("report", help="figure-data files from a schedule.csv")
    r.add_argument("--schedule", required=True)
    r.add_argument("--out", default="out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CaseError as exc:
        print(f"invalid case: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ReportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
