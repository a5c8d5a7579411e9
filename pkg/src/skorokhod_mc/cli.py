"""Command line entry point: ``skmc {run,validate,plan,report}``.

Exit status is 0 when every enabled check passes, 1 when some check fails,
and 2 on invalid input.
"""

from __future__ import annotations

import argparse
import json
import sys

from .distributions import SUPERMARTINGALE, all_laws, load_spec, validate_spec
from .dubins import build_split_tree, format_tree, plan_exact_law
from .supermartingale import build_super_plan
from .verify import ExperimentConfig, load_config, load_report, run_experiment, summary_json


def _print_verdicts(report, out):
    for name, ok in report.verdicts.items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}", file=out)
    print(f"overall: {'PASS' if report.passed else 'FAIL'}", file=out)


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    overrides = {"seed": args.seed, "num_paths": args.paths, "dt": args.dt,
                 "output_dir": args.out, "t_max": args.t_max}
    doc = cfg.to_json_dict()
    doc["output_dir"] = cfg.output_dir
    doc.update({k: v for k, v in overrides.items() if v is not None})
    if args.no_bridge:
        doc["bridge_correct"] = False
    report = run_experiment(ExperimentConfig.from_json_dict(doc))
    _print_verdicts(report, sys.stdout)
    return 0 if report.passed else 1


def cmd_validate(args) -> int:
    spec = load_spec(args.spec)
    problems = validate_spec(spec)
    for v in problems:
        print(v)
    if not problems:
        print(f"ok: {spec.kind}, n_max={spec.n_max}, {spec.n_kernels} kernels")
    return 1 if problems else 0


def cmd_plan(args) -> int:
    spec = load_spec(args.spec)
    problems = validate_spec(spec)
    if problems:
        for v in problems:
            print(v)
        return 1
    stages = range(spec.n_max) if args.stage is None else [args.stage]
    for n in stages:
        for x in spec.states(n):
            target = spec.kernels[(n, x)]
            print(f"stage {n}, state {x:.12g}, target {dict(target.items())}")
            if spec.kind == SUPERMARTINGALE:
                plan = build_super_plan(target, x)
                print(str(plan))
                law = plan.exact_law()
            else:
                tree = build_split_tree(target, x)
                print(format_tree(tree))
                law = plan_exact_law(tree)
            print(f"exact law {dict(law.items())}\n")
    if args.laws:
        for n, law in enumerate(all_laws(spec)):
            print(f"M_{n}: {dict(law.items())}")
    return 0


def cmd_report(args) -> int:
    report = load_report(args.directory)
    text = summary_json(report)
    if args.write:
        with open(f"{args.directory}/summary.json", "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    _print_verdicts(report, sys.stderr)
    return 0 if report.passed else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="skmc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("config")
    run.add_argument("--seed", type=int)
    run.add_argument("--paths", type=int)
    run.add_argument("--dt", type=float)
    run.add_argument("--t-max", type=float)
    run.add_argument("--out", help="output directory (overrides output_dir)")
    run.add_argument("--no-bridge", action="store_true", help="disable bridge correction")
    run.set_defaults(func=cmd_run)

    val = sub.add_parser("validate", help="check a process spec")
    val.add_argument("spec")
    val.set_defaults(func=cmd_validate)

    plan = sub.add_parser("plan", help="print split trees or super plans with exact laws")
    plan.add_argument("spec")
    plan.add_argument("--stage", type=int)
    plan.add_argument("--laws", action="store_true", help="also print unconditional laws")
    plan.set_defaults(func=cmd_plan)

    rep = sub.add_parser("report", help="recompute verdicts from stored CSVs")
    rep.add_argument("directory")
    rep.add_argument("--write", action="store_true", help="rewrite summary.json in place")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
