"""Command-line interface.

Subcommands: ``trees``, ``conditions``, ``verify``, ``evolve``, ``pareto``,
``empirical-order``.  Every subcommand accepts ``--config FILE`` pointing
at a flat ``key = value`` file (keys match the long flag names); explicit
command-line flags win over config-file values.  ``--format json`` emits
exactly one JSON document on stdout.

Exit codes: 0 success (and feasible ``verify``), 1 infeasible ``verify``,
2 usage error, 3 runtime error (e.g. implicit stages failing to converge).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import conditions as cond
from . import odecheck
from . import solver
from .es import ESConfig
from .tableau import (ButcherTableau, DimensionError, TableauFormatError,
                      load_tableau)
from .trees import MAX_ORDER, cumulative_counts, enumerate_trees

USAGE_ERROR = 2
RUNTIME_ERROR = 3


class UsageError(Exception):
    pass


def _fmt(value: float) -> str:
    return format(value, ".17g")


def _parse_config_value(text: str):
    text = text.strip()
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        pass
    return text


def _read_config(path: str) -> dict[str, object]:
    out: dict[str, object] = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip().replace("-", "_")] = _parse_config_value(value)
    return out


def _merge_options(args: argparse.Namespace, defaults: dict[str, object]
                   ) -> argparse.Namespace:
    """Overlay: hard defaults, then config file, then explicit flags."""
    merged = dict(defaults)
    if getattr(args, "config", None):
        file_values = _read_config(args.config)
        unknown = set(file_values) - set(defaults)
        if unknown:
            raise UsageError(
                f"unknown config keys: {', '.join(sorted(unknown))}")
        merged.update(file_values)
    for key in defaults:
        given = getattr(args, key, None)
        if given is not None:
            merged[key] = given
    for key, value in merged.items():
        setattr(args, key, value)
    return args


def _emit_json(doc) -> None:
    print(json.dumps(doc, indent=2))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

TREES_DEFAULTS = {"max_order": 10, "format": "table"}


def cmd_trees(args) -> int:
    args = _merge_options(args, TREES_DEFAULTS)
    if not 1 <= args.max_order <= MAX_ORDER:
        raise UsageError(f"--max-order must be in 1..{MAX_ORDER}")
    groups = enumerate_trees(args.max_order)
    counts = [len(groups[p]) for p in sorted(groups)]
    cumulative = cumulative_counts(args.max_order)
    rows = [
        {"encoding": t.encoding, "order": iv.order, "gamma": iv.gamma,
         "alpha": iv.alpha, "sigma": iv.sigma}
        for p in sorted(groups) for t, iv in groups[p]
    ]
    if args.format == "json":
        _emit_json({"max_order": args.max_order, "counts": counts,
                    "cumulative": cumulative, "trees": rows})
        return 0
    print("order  trees  cumulative")
    for p, (n, c) in enumerate(zip(counts, cumulative), start=1):
        print(f"{p:>5}  {n:>5}  {c:>10}")
    print()
    width = max(len(r["encoding"]) for r in rows)
    print(f"{'tree':<{width}}  order  gamma  alpha  sigma")
    for r in rows:
        print(f"{r['encoding']:<{width}}  {r['order']:>5}  {r['gamma']:>5}  "
              f"{r['alpha']:>5}  {r['sigma']:>5}")
    return 0


CONDITIONS_DEFAULTS = {"stages": None, "order": None, "implicit": False,
                       "amp": 4.0, "eps_base": 1e-15, "format": "table"}


def cmd_conditions(args) -> int:
    args = _merge_options(args, CONDITIONS_DEFAULTS)
    if args.stages is None or args.order is None:
        raise UsageError("--stages and --order are required")
    if args.order < 1 or args.order + 1 > MAX_ORDER:
        raise UsageError(f"--order must be in 1..{MAX_ORDER - 1}")
    system = cond.ConditionSystem.build(args.stages, args.order,
                                        explicit=not args.implicit,
                                        amplification=args.amp,
                                        eps_base=args.eps_base)
    rows = [
        {"encoding": t.encoding, "order": int(t.order),
         "gamma": int(system.gammas[k]), "alpha": int(system.alphas[k]),
         "weight": float(system.weights[k])}
        for k, t in enumerate(system.trees)
    ]
    thresholds = {str(p): system.thresholds[p] for p in sorted(system.thresholds)}
    if args.format == "json":
        _emit_json({"stages": args.stages, "order": args.order,
                    "explicit": not args.implicit, "dimension": system.dimension,
                    "conditions": rows, "thresholds": thresholds})
        return 0
    print(f"condition system: stages={args.stages} order={args.order} "
          f"explicit={not args.implicit} dimension={system.dimension}")
    width = max(len(r["encoding"]) for r in rows)
    print(f"{'tree':<{width}}  order  gamma  alpha  weight")
    for r in rows:
        print(f"{r['encoding']:<{width}}  {r['order']:>5}  {r['gamma']:>5}  "
              f"{r['alpha']:>5}  {_fmt(r['weight'])}")
    print()
    print("order  threshold")
    for p, c_p in thresholds.items():
        print(f"{p:>5}  {_fmt(c_p)}")
    return 0


VERIFY_DEFAULTS = {"tableau": None, "order": None, "tol": None,
                   "empirical": None, "format": "table"}


def cmd_verify(args) -> int:
    args = _merge_options(args, VERIFY_DEFAULTS)
    if args.tableau is None or args.order is None:
        raise UsageError("--tableau and --order are required")
    t = load_tableau(args.tableau)
    report = cond.is_feasible_to_order(t, args.order, thresholds=args.tol)
    slope = None
    if args.empirical:
        problem = odecheck.PROBLEMS.get(args.empirical)
        if problem is None:
            raise UsageError(f"unknown problem {args.empirical!r}; choose from "
                             f"{sorted(odecheck.PROBLEMS)}")
        slope = odecheck.global_order(t, problem).slope
    if args.format == "json":
        doc = {"tableau": str(args.tableau), "stages": report.stages,
               "explicit": report.explicit, "order": report.order,
               "feasible": report.feasible,
               "per_order": [{"order": o.order, "metric": o.metric,
                              "threshold": o.threshold, "passed": o.passed}
                             for o in report.per_order],
               "tree_errors": [{"encoding": enc, "order": p, "e": e}
                               for enc, p, e in report.tree_errors]}
        if slope is not None:
            doc["empirical_slope"] = slope
        _emit_json(doc)
    else:
        print(f"tableau {args.tableau}: stages={report.stages} "
              f"explicit={report.explicit}")
        print("order  metric                 threshold              verdict")
        for o in report.per_order:
            verdict = "pass" if o.passed else "FAIL"
            print(f"{o.order:>5}  {_fmt(o.metric):<21}  {_fmt(o.threshold):<21}  "
                  f"{verdict}")
        width = max(len(enc) for enc, _, _ in report.tree_errors)
        print(f"\n{'tree':<{width}}  order  e")
        for enc, p, e in report.tree_errors:
            print(f"{enc:<{width}}  {p:>5}  {_fmt(e)}")
        if slope is not None:
            print(f"\nempirical global slope on {args.empirical!r}: {_fmt(slope)}")
        print(f"\nverdict: {'feasible' if report.feasible else 'infeasible'} "
              f"to order {args.order}")
    return 0 if report.feasible else 1


EVOLVE_DEFAULTS = {"stages": None, "implicit": False, "start_order": 2,
                   "seed": 0, "pop": 1000, "parents": None,
                   "max_iters": 100_000, "eps_base": 1e-15, "amp": 4.0,
                   "archive": None, "restarts": 3, "max_order": 9,
                   "archive_cap": 10_000, "penalty": None}


def cmd_evolve(args) -> int:
    args = _merge_options(args, EVOLVE_DEFAULTS)
    if args.stages is None:
        raise UsageError("--stages is required")
    if args.archive is None:
        raise UsageError("--archive is required")
    if args.start_order < 1:
        raise UsageError("--start-order must be >= 1")
    parents = args.parents if args.parents is not None else max(1, args.pop // 2)
    threads = int(os.environ.get("RK_EVOLVE_THREADS", "1") or "0")
    es = ESConfig(population=args.pop, parents=parents,
                  max_iterations=args.max_iters, rng_seed=args.seed,
                  threads=threads)
    result = solver.evolve_runge_kutta(
        stages=args.stages, q_start=args.start_order,
        explicit=not args.implicit, es=es, restarts=args.restarts,
        max_order=args.max_order, archive_capacity=args.archive_cap,
        hard_penalty=args.penalty, amplification=args.amp,
        eps_base=args.eps_base)
    solver.write_archives(result.archives, args.archive)
    print(f"stages={args.stages} explicit={not args.implicit} "
          f"start_order={args.start_order} seed={args.seed}")
    for c in result.cycles:
        gens = sum(r.generations for r in c.runs)
        evals = sum(r.evaluations for r in c.runs)
        print(f"cycle q={c.order}: new order-{c.target_order} records="
              f"{c.new_records} generations={gens} evaluations={evals} "
              f"success={c.success}")
    for p in sorted(result.archives):
        print(f"archive order {p}: {len(result.archives[p])} records")
    print(f"q_max: {result.q_max}")
    if result.final_errors:
        pretty = ", ".join(f"{enc}: {_fmt(v)}"
                           for enc, v in result.final_errors.items())
        print(f"next-order error coefficients at final best: {pretty}")
    print(f"archive written to {args.archive}")
    return 0


PARETO_DEFAULTS = {"archive": None, "order": None, "stages": None,
                   "implicit": False, "out": None}


def cmd_pareto(args) -> int:
    args = _merge_options(args, PARETO_DEFAULTS)
    if args.archive is None or args.order is None or args.out is None:
        raise UsageError("--archive, --order and --out are required")
    archives = solver.read_archives(args.archive)
    archive = archives.get(args.order)
    if archive is None or not len(archive):
        raise UsageError(f"archive has no order-{args.order} records")
    dim = len(archive.records[0].x)
    if args.stages is not None:
        stages = args.stages
    else:
        stages = _infer_stages(dim, explicit=not args.implicit)
    front = solver.pareto_front(archive, args.order, stages=stages,
                                explicit=not args.implicit)
    header = _vector_labels(stages, explicit=not args.implicit)
    header += [f"e{t.encoding}" for t in front.trees]
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for record, coords in zip(front.records, front.coordinates):
            writer.writerow([_fmt(v) for v in record.x]
                            + [_fmt(v) for v in coords])
    print(f"pareto front of order {args.order}: {len(front.records)} of "
          f"{len(archive)} records -> {args.out}")
    return 0


def _infer_stages(dim: int, explicit: bool) -> int:
    s = 1
    while True:
        expected = s * (s + 1) // 2 if explicit else s * (s + 1)
        if expected == dim:
            return s
        if expected > dim:
            raise UsageError(
                f"cannot infer stage count from vector length {dim}; "
                f"pass --stages")
        s += 1


def _vector_labels(stages: int, explicit: bool) -> list[str]:
    labels = []
    if explicit:
        for i in range(1, stages):
            labels += [f"a{i + 1}{j + 1}" for j in range(i)]
    else:
        labels += [f"a{i + 1}{j + 1}" for i in range(stages)
                   for j in range(stages)]
    labels += [f"w{i + 1}" for i in range(stages)]
    return labels


EMPIRICAL_DEFAULTS = {"tableau": None, "problem": None, "h0": 0.1,
                      "levels": 6, "kind": "local", "format": "table"}


def cmd_empirical(args) -> int:
    args = _merge_options(args, EMPIRICAL_DEFAULTS)
    if args.tableau is None or args.problem is None:
        raise UsageError("--tableau and --problem are required")
    problem = odecheck.PROBLEMS.get(args.problem)
    if problem is None:
        raise UsageError(f"unknown problem {args.problem!r}; choose from "
                         f"{sorted(odecheck.PROBLEMS)}")
    t = load_tableau(args.tableau)
    fn = odecheck.local_order if args.kind == "local" else odecheck.global_order
    estimate = fn(t, problem, h0=args.h0, levels=args.levels)
    if args.format == "json":
        _emit_json({"tableau": str(args.tableau), "problem": args.problem,
                    "kind": estimate.kind,
                    "step_sizes": list(estimate.step_sizes),
                    "errors": list(estimate.errors),
                    "slope": estimate.slope,
                    "fit_residual": estimate.fit_residual,
                    "dropped_levels": list(estimate.dropped)})
        return 0
    print(f"{estimate.kind} order estimate: tableau={args.tableau} "
          f"problem={args.problem}")
    print("level  h                      error")
    for k, (h, e) in enumerate(zip(estimate.step_sizes, estimate.errors)):
        mark = "  (dropped)" if k in estimate.dropped else ""
        print(f"{k:>5}  {_fmt(h):<21}  {_fmt(e)}{mark}")
    print(f"slope: {_fmt(estimate.slope)}   fit residual: "
          f"{_fmt(estimate.fit_residual)}")
    return 0


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rkevolve",
        description="Design and verify Runge-Kutta methods via staged "
                    "evolutionary search over the order conditions.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key = value config file; "
                                        "explicit flags win")

    p = sub.add_parser("trees", help="enumerate rooted trees and invariants")
    add_common(p)
    p.add_argument("--max-order", dest="max_order", type=int)
    p.add_argument("--format", choices=["table", "json"])
    p.set_defaults(func=cmd_trees)

    p = sub.add_parser("conditions", help="print the order-condition system")
    add_common(p)
    p.add_argument("--stages", type=int)
    p.add_argument("--order", type=int)
    p.add_argument("--implicit", action="store_const", const=True)
    p.add_argument("--amp", type=float)
    p.add_argument("--eps-base", dest="eps_base", type=float)
    p.add_argument("--format", choices=["table", "json"])
    p.set_defaults(func=cmd_conditions)

    p = sub.add_parser("verify", help="check a tableau against the order "
                                      "conditions")
    add_common(p)
    p.add_argument("--tableau")
    p.add_argument("--order", type=int)
    p.add_argument("--tol", type=float,
                   help="uniform threshold replacing the per-order defaults")
    p.add_argument("--empirical", metavar="PROBLEM",
                   help="also report the global convergence slope")
    p.add_argument("--format", choices=["table", "json"])
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("evolve", help="search for methods of increasing order")
    add_common(p)
    p.add_argument("--stages", type=int)
    p.add_argument("--implicit", action="store_const", const=True)
    p.add_argument("--start-order", dest="start_order", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--pop", type=int)
    p.add_argument("--parents", type=int)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    p.add_argument("--eps-base", dest="eps_base", type=float)
    p.add_argument("--amp", type=float)
    p.add_argument("--archive", help="output archive (one JSON object per line)")
    p.add_argument("--restarts", type=int)
    p.add_argument("--max-order", dest="max_order", type=int)
    p.add_argument("--archive-cap", dest="archive_cap", type=int)
    p.add_argument("--penalty", type=float,
                   help="hard multiplier on out-of-tube order metrics")
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("pareto", help="extract the non-dominated archive front")
    add_common(p)
    p.add_argument("--archive")
    p.add_argument("--order", type=int)
    p.add_argument("--stages", type=int)
    p.add_argument("--implicit", action="store_const", const=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("empirical-order", help="estimate convergence order "
                                               "on a test problem")
    add_common(p)
    p.add_argument("--tableau")
    p.add_argument("--problem")
    p.add_argument("--h0", type=float)
    p.add_argument("--levels", type=int)
    group = p.add_mutually_exclusive_group()
    group.add_argument("--local", dest="kind", action="store_const",
                       const="local")
    group.add_argument("--global", dest="kind", action="store_const",
                       const="global")
    p.add_argument("--format", choices=["table", "json"])
    p.set_defaults(func=cmd_empirical)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else USAGE_ERROR
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except (TableauFormatError, DimensionError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except odecheck.StageIterationError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
