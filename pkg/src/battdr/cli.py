"""Command-line front end.

    battdr simulate        one run of the configured policy
    battdr oracle          offline optimum for the same config
    battdr sweep           re-run across values of one config field
    battdr compare-schemes grid-only / battery / deferral / combined
    battdr gen-trace       write the configured trace to CSV
    battdr validate        self-checks: solvers, invariants, examples

Exit codes: 0 success, 1 configuration problem, 2 a guarantee did not
hold at runtime (invariant violation or infeasible decision).
"""

from __future__ import annotations

import argparse
import copy
import os
import sys

from .harness import (
    build_experiment,
    compare_schemes,
    load_config,
    run_experiment,
    sweep,
    write_rows_csv,
    write_slots_csv,
    write_summary_json,
)
from .model import ConfigError, InfeasibleDecisionError
from .verify import run_all


def _apply_overrides(d: dict, args) -> dict:
    d = copy.deepcopy(d)
    if getattr(args, "slots", None) is not None:
        tr = d.setdefault("trace", {})
        kind = tr.get("kind")
        if kind in ("frame_periodic", "iid_uniform"):
            tr["n_slots"] = args.slots
        elif kind == "daily_periodic":
            raise ConfigError("--slots does not apply to daily_periodic; set n_days")
        else:
            raise ConfigError(f"--slots does not apply to trace kind {kind!r}")
    if getattr(args, "seed", None) is not None:
        tr = d.setdefault("trace", {})
        if tr.get("kind") != "iid_uniform":
            raise ConfigError("--seed only applies to iid_uniform traces")
        tr["seed"] = args.seed
    if getattr(args, "v", None) is not None:
        value = args.v
        if value != "max":
            try:
                value = float(value)
            except ValueError:
                raise ConfigError(f"--v must be a number or 'max', got {value!r}")
        d.setdefault("policy", {"kind": "battery"})["v"] = value
    if getattr(args, "ymax", None) is not None:
        if "battery" not in d or not isinstance(d["battery"], dict):
            raise ConfigError("--ymax needs a battery section in the config")
        d["battery"]["charge_max"] = args.ymax
    return d


def _outdir(args) -> str:
    os.makedirs(args.out, exist_ok=True)
    return args.out


def _print_summary(summary) -> None:
    print(f"slots simulated    {summary.n_slots}")
    print(f"total cost         {summary.total_cost:.2f}")
    print(f"avg cost per slot  {summary.avg_cost_per_slot:.2f}")
    print(f"avg cost per hour  {summary.avg_cost_per_hour:.2f}")
    if summary.max_backlog > 0 or summary.delay_bound is not None:
        bound = "none" if summary.delay_bound is None else summary.delay_bound
        print(f"max backlog        {summary.max_backlog:.6g}")
        print(f"max job delay      {summary.max_job_delay} (bound {bound})")
    if summary.violations:
        print(f"VIOLATIONS         {summary.violations}")


def _finish_run(result, out: str, d: dict, args, plot_fn=None, plot_name=None) -> int:
    slots_path = os.path.join(out, "slots.csv")
    write_slots_csv(result.records, slots_path)
    write_summary_json(result, os.path.join(out, "summary.json"), config=d)
    written = [slots_path, os.path.join(out, "summary.json")]
    if not args.no_plots and plot_fn is not None:
        written.append(plot_fn(result.records, os.path.join(out, plot_name)))
    _print_summary(result.summary)
    for path in written:
        print(f"wrote {path}")
    if result.check is not None and not result.check.passed:
        print(str(result.check), file=sys.stderr)
        return 2
    return 0


def cmd_simulate(args) -> int:
    d = _apply_overrides(load_config(args.config), args)
    exp = build_experiment(d)
    result = run_experiment(exp, check=args.check_invariants, keep_records=True)
    from .report import render_slots

    return _finish_run(
        result, _outdir(args), d, args, plot_fn=render_slots, plot_name="slots.png"
    )


def cmd_oracle(args) -> int:
    d = _apply_overrides(load_config(args.config), args)
    d["policy"] = {"kind": "oracle", "step": args.step}
    exp = build_experiment(d)
    result = run_experiment(exp, check=args.check_invariants, keep_records=True)
    from .report import render_slots

    return _finish_run(
        result, _outdir(args), d, args, plot_fn=render_slots, plot_name="slots.png"
    )


def cmd_sweep(args) -> int:
    d = _apply_overrides(load_config(args.config), args)
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values must be comma-separated numbers, got {args.values!r}")
    if not values:
        raise ConfigError("--values is empty")
    rows = sweep(
        d, args.axis, values,
        include_oracle=args.oracle, oracle_step=args.step,
        check=args.check_invariants,
    )
    out = _outdir(args)
    path = os.path.join(out, "sweep.csv")
    write_rows_csv(rows, path)
    print(f"{'value':>12}  {'avg cost/slot':>14}  {'oracle/slot':>12}  error")
    for row in rows:
        avg = row["avg_cost_per_slot"]
        orc = row["oracle_total_cost"]
        orc = orc / row["n_slots"] if orc is not None else None
        print(
            f"{row['value']:>12g}  "
            f"{avg if avg is None else format(avg, '>14.2f')}  "
            f"{orc if orc is None else format(orc, '>12.2f')}  "
            f"{row['error'] or ''}"
        )
    print(f"wrote {path}")
    if not args.no_plots and any(r["error"] is None for r in rows):
        from .report import render_sweep

        print(f"wrote {render_sweep(rows, os.path.join(out, 'sweep.png'))}")
    if all(r["error"] is not None for r in rows):
        print("error: every sweep point failed", file=sys.stderr)
        return 1
    if any(r["violations"] for r in rows if r["violations"] is not None):
        return 2
    return 0


def cmd_compare_schemes(args) -> int:
    d = _apply_overrides(load_config(args.config), args)
    rows = compare_schemes(d, check=args.check_invariants)
    out = _outdir(args)
    path = os.path.join(out, "schemes.csv")
    write_rows_csv(rows, path)
    print(f"{'scheme':<8} {'label':<20} {'total cost':>12} {'vs grid':>9}")
    for row in rows:
        ratio = "n/a" if row["ratio_pct"] is None else f"{row['ratio_pct']:.1f}%"
        print(
            f"{row['scheme']:<8} {row['label']:<20} "
            f"{row['total_cost']:>12.2f} {ratio:>9}"
        )
    print(f"wrote {path}")
    if not args.no_plots:
        from .report import render_schemes

        print(f"wrote {render_schemes(rows, os.path.join(out, 'schemes.png'))}")
    if any(row["violations"] for row in rows):
        return 2
    return 0


def cmd_gen_trace(args) -> int:
    d = load_config(args.config)
    exp_like = {
        "trace": d.get("trace"),
        "slot_minutes": d.get("slot_minutes", 60.0),
        "price_model": d.get("price_model", {"kind": "flat", "p_peak": 1e12}),
    }
    exp = build_experiment(exp_like)
    exp.trace.to_csv(args.out)
    print(f"wrote {args.out} ({len(exp.trace)} slots)")
    return 0


def cmd_validate(args) -> int:
    results = run_all(
        seed=args.seed or 0,
        total_slots=args.slots or 20000,
        n_solver_states=args.n_random_states,
    )
    failed = 0
    for res in results:
        print(str(res))
        if not res.passed:
            failed += 1
    total = sum(r.n_checked for r in results)
    print(f"{len(results)} suites, {total} checks, {failed} failed")
    return 2 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="battdr",
        description="electricity-cost control for data centers with "
        "battery storage and deferrable workloads",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="experiment JSON file")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--no-plots", action="store_true", help="skip PNG rendering")
    common.add_argument(
        "--check-invariants", action="store_true",
        help="replay every slot through the record checker",
    )
    common.add_argument("--slots", type=int, help="override the trace length")
    common.add_argument("--seed", type=int, help="override the trace seed")
    common.add_argument("--v", help="override the cost weight (number or 'max')")
    common.add_argument("--ymax", type=float, help="override battery.charge_max")

    p = sub.add_parser("simulate", parents=[common], help="run the configured policy")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", parents=[common], help="offline optimum via DP")
    p.add_argument("--step", type=float, default=1.0, help="charge discretization")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", parents=[common], help="re-run across one field")
    p.add_argument(
        "--axis", default="battery.charge_max", help="config field to sweep"
    )
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--oracle", action="store_true", help="also run the oracle per point")
    p.add_argument("--step", type=float, default=1.0, help="oracle charge step")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser(
        "compare-schemes", parents=[common],
        help="grid-only vs battery vs deferral vs combined",
    )
    p.set_defaults(func=cmd_compare_schemes)

    p = sub.add_parser("gen-trace", help="write the configured trace to CSV")
    p.add_argument("--config", required=True, help="experiment JSON file")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_gen_trace)

    p = sub.add_parser("validate", help="run the verification suites")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--slots", type=int, default=20000, help="randomized-suite slots")
    p.add_argument(
        "--n-random-states", type=int, default=2000,
        help="states per solver cross-check",
    )
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InfeasibleDecisionError as exc:
        print(f"runtime guarantee failed: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
