"""Command line interface.

Exit codes: 0 all enabled checks passed, 1 usage or IO error, 2 a stage
certificate failed (the pipeline aborted), 3 a verification check failed on
an otherwise completed run.
"""

from __future__ import annotations

import argparse
import sys

from .errors import PipelineError
from .pipeline import emit_plots, run_scenario
from .scenarios import list_scenarios, resolve_scenario, with_overrides

EXIT_PASS = 0
EXIT_USAGE = 1
EXIT_CERTIFICATION = 2
EXIT_VERIFICATION = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="proper-lift", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    run_cmd = sub.add_parser("run", help="Run a bundled or file-defined scenario")
    run_cmd.add_argument("--scenario", required=True, help="Scenario name or JSON file")
    run_cmd.add_argument("--out", default=None, help="Directory for CSV/JSON outputs")
    run_cmd.add_argument("--refine", type=int, default=0, help="Midpoint refinements")
    run_cmd.add_argument("--seed", type=int, default=None, help="Optimizer seed override")
    run_cmd.add_argument(
        "--q",
        action="append",
        default=[],
        help="Extra query point, comma separated ambient coordinates",
    )
    run_cmd.add_argument("--r-ball", type=float, default=None, help="Base ball radius")
    run_cmd.add_argument("--tube-margin", type=float, default=None, help="Clamp margin in (0,1)")
    run_cmd.add_argument("--max-passes", type=int, default=None, help="Mollifier pass limit")
    run_cmd.add_argument(
        "--dump-distance", default=None, help="Write the distance field to this CSV path"
    )

    sub.add_parser("list", help="List bundled scenarios")
    return parser


def _parse_query(text: str):
    try:
        return tuple(float(tok) for tok in text.split(","))
    except ValueError as exc:
        raise PipelineError(f"bad query point {text!r}: {exc}") from exc


def _run(args) -> int:
    scenario = resolve_scenario(args.scenario)
    scenario = with_overrides(
        scenario,
        r_ball=args.r_ball,
        tube_margin=args.tube_margin,
        max_passes=args.max_passes,
    )
    extra_queries = [_parse_query(q) for q in args.q]
    report = run_scenario(
        scenario,
        seed=args.seed,
        refine_k=args.refine,
        extra_query_points=extra_queries,
    )
    for stage in report.stages:
        print(f"[{stage.status:>5}] {stage.name}: {stage.detail}")
    if args.dump_distance and "dist" in report.artifacts:
        from .pipeline import _write_csv
        from pathlib import Path

        dist = report.artifacts["dist"]
        _write_csv(
            Path(args.dump_distance),
            ["vertex", "distance"],
            [(i, float(v)) for i, v in enumerate(dist.values)],
        )
        print(f"distance field written to {args.dump_distance}")
    if args.out:
        paths = emit_plots(report, args.out)
        print(f"wrote {len(paths)} files to {args.out}")
    if report.overall_pass:
        print("overall: pass")
        return EXIT_PASS
    print(f"overall: fail ({report.failure_kind})")
    return (
        EXIT_CERTIFICATION
        if report.failure_kind == "certification"
        else EXIT_VERIFICATION
    )


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "list":
            for name in list_scenarios():
                print(name)
            return EXIT_PASS
        return _run(args)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
