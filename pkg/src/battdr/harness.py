"""Experiment harness: JSON-configured runs, sweeps, and scheme comparisons.

A config is a JSON object with these sections (unknown keys rejected):

  slot_minutes   minutes per slot (default 60)
  trace          {"kind": "frame_periodic" | "iid_uniform" | "daily_periodic"
                  | "csv", ...generator parameters}; iid_uniform accepts an
                 optional "price_profile" (24 hourly values, or "default")
                 that overlays a daily price shape on the random arrivals
  price_model    {"kind": "flat", "p_peak": .., "levels": [..]?}  or
                 {"kind": "convex_linear", "p_peak": .., "slope": ..}
                 (unit price = state * (1 + slope * draw / p_peak))
  battery        BatteryConfig fields; omit for no battery
  limits         workload limits; omitted means observed from the trace
  policy         {"kind": "battery" | "deferral" | "grid_only" |
                  "threshold" | "oracle", ...policy parameters};
                 "v" accepts a number or "max"

``build_experiment`` validates everything at once and reports every
problem found, not just the first.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .baselines import (
    GridOnlyPolicy,
    ThresholdPolicy,
    deferral_only_controller,
    offline_oracle,
)
from .battery_ctrl import BatteryController
from .deferral_ctrl import DeferralController
from .model import (
    SLOT_FIELDS,
    BatteryConfig,
    ConfigError,
    ConvexPriceModel,
    CostModel,
    FlatPriceModel,
    MetricsAccumulator,
    RunSummary,
    SlotRecord,
    WorkloadLimits,
    time_average_metrics,
)
from .traces import (
    DAILY_PRICE_PROFILE,
    DAILY_WORKLOAD_PROFILE,
    Trace,
    apply_daily_price_profile,
    gen_daily_periodic,
    gen_frame_periodic,
    gen_iid_uniform,
)
from .verify import RecordChecker, SuiteResult

_TOP_KEYS = {"slot_minutes", "trace", "price_model", "battery", "limits", "policy"}
_POLICY_KINDS = {"battery", "deferral", "grid_only", "threshold", "oracle"}


@dataclass
class Experiment:
    """A fully built, validated experiment ready to run."""

    trace: Trace
    cost_model: CostModel
    battery: BatteryConfig
    limits: WorkloadLimits
    policy_spec: dict
    slot_minutes: float


@dataclass
class SimulationResult:
    records: list[SlotRecord] | None
    summary: RunSummary
    check: SuiteResult | None


def load_config(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(d, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return d


def _build_trace(spec, slot_minutes: float, errors: list) -> Trace | None:
    if not isinstance(spec, dict):
        errors.append("trace: must be an object")
        return None
    kind = spec.get("kind")
    known = {
        "frame_periodic": {"kind", "frame_len", "w_levels", "c_levels", "n_slots"},
        "iid_uniform": {
            "kind", "w_range", "c_set", "n_slots", "seed", "flex_fraction",
            "price_profile",
        },
        "daily_periodic": {"kind", "n_days", "w_profile", "c_profile", "flex_fraction"},
        "csv": {"kind", "path"},
    }
    if kind not in known:
        errors.append(f"trace: unknown kind {kind!r} (expected one of {sorted(known)})")
        return None
    extra = set(spec) - known[kind]
    if extra:
        errors.append(f"trace: unknown fields {sorted(extra)} for kind {kind!r}")
        return None
    try:
        if kind == "frame_periodic":
            return gen_frame_periodic(
                frame_len=int(spec["frame_len"]),
                w_levels=tuple(spec["w_levels"]),
                c_levels=tuple(spec["c_levels"]),
                n_slots=int(spec["n_slots"]),
                slot_minutes=slot_minutes,
            )
        if kind == "iid_uniform":
            profile = spec.get("price_profile")
            if profile is not None and "c_set" not in spec:
                c_set = [0.0]  # placeholder, overwritten by the profile
            else:
                c_set = list(spec["c_set"])
            trace = gen_iid_uniform(
                w_range=tuple(spec["w_range"]),
                c_set=c_set,
                n_slots=int(spec["n_slots"]),
                seed=int(spec.get("seed", 0)),
                flex_fraction=float(spec.get("flex_fraction", 0.0)),
                slot_minutes=slot_minutes,
            )
            if profile is not None:
                if profile == "default":
                    profile = DAILY_PRICE_PROFILE
                trace = apply_daily_price_profile(trace, tuple(profile))
            return trace
        if kind == "daily_periodic":
            return gen_daily_periodic(
                w_profile=list(spec.get("w_profile", DAILY_WORKLOAD_PROFILE)),
                c_profile=list(spec.get("c_profile", DAILY_PRICE_PROFILE)),
                slot_minutes=slot_minutes,
                n_days=int(spec["n_days"]),
                flex_fraction=float(spec.get("flex_fraction", 0.0)),
            )
        return Trace.from_csv(spec["path"], slot_minutes=slot_minutes)
    except KeyError as exc:
        errors.append(f"trace ({kind}): missing required field {exc.args[0]!r}")
    except OSError as exc:
        errors.append(f"trace ({kind}): {exc}")
    except (TypeError, ValueError) as exc:
        errors.append(f"trace ({kind}): {exc}")
    return None


def _build_cost_model(spec, trace: Trace | None, errors: list) -> CostModel | None:
    if not isinstance(spec, dict):
        errors.append("price_model: must be an object")
        return None
    kind = spec.get("kind")
    try:
        if kind == "flat":
            extra = set(spec) - {"kind", "p_peak", "levels"}
            if extra:
                errors.append(f"price_model: unknown fields {sorted(extra)}")
                return None
            levels = spec.get("levels")
            if levels is None:
                if trace is None:
                    errors.append("price_model: levels required when no trace is built")
                    return None
                levels = trace.distinct_prices()
            cm = FlatPriceModel(levels, p_peak=float(spec["p_peak"]))
            if trace is not None:
                missing = sorted(set(trace.distinct_prices()) - set(cm.states))
                if missing:
                    errors.append(
                        f"price_model: trace prices {missing} missing from levels"
                    )
            return cm
        if kind == "convex_linear":
            extra = set(spec) - {"kind", "p_peak", "slope"}
            if extra:
                errors.append(f"price_model: unknown fields {sorted(extra)}")
                return None
            p_peak = float(spec["p_peak"])
            slope = float(spec["slope"])
            if slope <= 0:
                errors.append("price_model: slope must be positive")
                return None
            states = trace.distinct_prices() if trace is not None else (1.0,)
            return ConvexPriceModel(
                lambda s, p: s * (1.0 + slope * p / p_peak),
                p_peak=p_peak,
                dfn=lambda s, p: s * slope / p_peak,
                states=states,
            )
        errors.append(f"price_model: unknown kind {kind!r}")
    except KeyError as exc:
        errors.append(f"price_model ({kind}): missing required field {exc.args[0]!r}")
    except (TypeError, ValueError) as exc:
        errors.append(f"price_model ({kind}): {exc}")
    return None


def _build_battery(spec, errors: list) -> BatteryConfig | None:
    if spec is None:
        return BatteryConfig.none()
    if not isinstance(spec, dict):
        errors.append("battery: must be an object")
        return None
    fields = {
        "charge_min", "charge_max", "charge_init", "recharge_max",
        "discharge_max", "recharge_cost", "discharge_cost",
    }
    extra = set(spec) - fields
    if extra:
        errors.append(f"battery: unknown fields {sorted(extra)}")
        return None
    try:
        return BatteryConfig(
            charge_min=float(spec.get("charge_min", 0.0)),
            charge_max=float(spec["charge_max"]),
            charge_init=float(spec.get("charge_init", spec.get("charge_min", 0.0))),
            recharge_max=float(spec["recharge_max"]),
            discharge_max=float(spec["discharge_max"]),
            recharge_cost=float(spec.get("recharge_cost", 0.0)),
            discharge_cost=float(spec.get("discharge_cost", 0.0)),
        )
    except KeyError as exc:
        errors.append(f"battery: missing required field {exc.args[0]!r}")
    except (TypeError, ValueError) as exc:
        errors.append(f"battery: {exc}")
    return None


def _build_limits(spec, trace: Trace | None, errors: list) -> WorkloadLimits | None:
    if spec is None:
        return trace.observed_limits() if trace is not None else None
    if not isinstance(spec, dict):
        errors.append("limits: must be an object")
        return None
    extra = set(spec) - {"total_max", "flex_max", "firm_max"}
    if extra:
        errors.append(f"limits: unknown fields {sorted(extra)}")
        return None
    try:
        limits = WorkloadLimits(
            total_max=float(spec["total_max"]),
            flex_max=float(spec.get("flex_max", 0.0)),
            firm_max=float(spec["firm_max"]) if "firm_max" in spec else None,
        )
        if trace is not None:
            trace.check(limits)
        return limits
    except KeyError as exc:
        errors.append(f"limits: missing required field {exc.args[0]!r}")
    except (TypeError, ValueError) as exc:
        errors.append(f"limits: {exc}")
    return None


def _check_policy_spec(spec, errors: list) -> dict | None:
    if not isinstance(spec, dict):
        errors.append("policy: must be an object")
        return None
    kind = spec.get("kind")
    if kind not in _POLICY_KINDS:
        errors.append(f"policy: unknown kind {kind!r} (expected one of {sorted(_POLICY_KINDS)})")
        return None
    allowed = {
        "battery": {"kind", "v"},
        "deferral": {"kind", "v", "min_service_rate", "grid_n"},
        "grid_only": {"kind"},
        "threshold": {"kind", "threshold"},
        "oracle": {"kind", "step"},
    }[kind]
    extra = set(spec) - allowed
    if extra:
        errors.append(f"policy: unknown fields {sorted(extra)} for kind {kind!r}")
    if kind == "threshold" and "threshold" not in spec:
        errors.append("policy: threshold kind needs a 'threshold' value")
    v = spec.get("v")
    if v is not None and v != "max" and not isinstance(v, (int, float)):
        errors.append(f"policy: v must be a number or \"max\", got {v!r}")
    return dict(spec)


def build_experiment(d: dict) -> Experiment:
    """Validate a config dict and build every part of the experiment.

    Raises ConfigError listing all problems found.
    """
    errors: list[str] = []
    if not isinstance(d, dict):
        raise ConfigError("config must be an object")
    extra = set(d) - _TOP_KEYS
    if extra:
        errors.append(f"unknown top-level fields {sorted(extra)}")
    slot_minutes = d.get("slot_minutes", 60.0)
    if not isinstance(slot_minutes, (int, float)) or slot_minutes <= 0:
        errors.append(f"slot_minutes must be a positive number, got {slot_minutes!r}")
        slot_minutes = 60.0
    slot_minutes = float(slot_minutes)

    if "trace" in d:
        trace = _build_trace(d["trace"], slot_minutes, errors)
    else:
        errors.append("config: missing required field 'trace'")
        trace = None
    if "price_model" in d:
        cm = _build_cost_model(d["price_model"], trace, errors)
    else:
        errors.append("config: missing required field 'price_model'")
        cm = None
    battery = _build_battery(d.get("battery"), errors)
    limits = _build_limits(d.get("limits"), trace, errors)
    policy_spec = _check_policy_spec(
        d.get("policy", {"kind": "battery"}), errors
    )

    if trace is not None and cm is not None:
        totals = trace.total
        if np.any(totals > cm.p_peak + 1e-9):
            bad = int(np.argmax(totals > cm.p_peak + 1e-9))
            errors.append(
                f"trace: slot {bad} arrival {totals[bad]} exceeds p_peak {cm.p_peak}"
            )
    if errors:
        raise ConfigError("invalid experiment config: " + "; ".join(errors))
    return Experiment(trace, cm, battery, limits, policy_spec, slot_minutes)


def _weight(spec: dict):
    v = spec.get("v")
    return None if v in (None, "max") else float(v)


def make_policy(exp: Experiment, spec: dict | None = None):
    """Fresh policy instance for the experiment (controllers carry state,
    so every run needs its own)."""
    spec = exp.policy_spec if spec is None else spec
    kind = spec["kind"]
    if kind == "battery":
        return BatteryController(exp.battery, exp.cost_model, v=_weight(spec))
    if kind == "deferral":
        return DeferralController(
            exp.battery,
            exp.cost_model,
            exp.limits,
            v=_weight(spec),
            min_service_rate=spec.get("min_service_rate"),
            grid_n=int(spec.get("grid_n", 4096)),
        )
    if kind == "grid_only":
        return GridOnlyPolicy(exp.battery, exp.cost_model)
    if kind == "threshold":
        return ThresholdPolicy(exp.battery, exp.cost_model, float(spec["threshold"]))
    raise ConfigError(f"policy kind {kind!r} cannot be stepped; use run_experiment")


def checker_for(policy) -> RecordChecker:
    """Record checker matching a policy's own configuration (scheme C,
    for instance, runs on a different battery than the experiment's)."""
    kind = policy.kind
    if kind == "battery":
        return RecordChecker(policy.cfg, policy.cm, "battery", v=policy.v)
    if kind == "deferral":
        return RecordChecker(
            policy.cfg, policy.cm, "deferral",
            v=policy.v, limits=policy.limits,
            min_service_rate=policy.min_service_rate,
        )
    return RecordChecker(policy.cfg, policy.cm, kind)


def simulate(
    policy,
    trace: Trace,
    checker: RecordChecker | None = None,
    keep_records: bool = True,
) -> SimulationResult:
    """Run a stepped policy over the whole trace."""
    acc = MetricsAccumulator(
        slot_minutes=trace.slot_minutes,
        delay_bound=getattr(policy, "delay_bound_slots", None),
    )
    records: list[SlotRecord] | None = [] if keep_records else None
    aux = trace.aux_state
    for t in range(len(trace)):
        rec = policy.step(t, trace.sample(t), aux[t])
        acc.update(rec)
        if checker is not None:
            checker.check(rec)
        if records is not None:
            records.append(rec)
    check = None
    if checker is not None:
        check = checker.finalize()
        acc.violations = check.n_failures
    return SimulationResult(records, acc.summary(), check)


def run_experiment(
    exp: Experiment, check: bool = False, keep_records: bool = True
) -> SimulationResult:
    """Run the experiment's configured policy over its trace."""
    if exp.policy_spec["kind"] == "oracle":
        step = float(exp.policy_spec.get("step", 1.0))
        records, _total = offline_oracle(exp.trace, exp.battery, exp.cost_model, step)
        suite = None
        violations = 0
        if check:
            checker = RecordChecker(exp.battery, exp.cost_model, "oracle")
            for rec in records:
                checker.check(rec)
            suite = checker.finalize()
            violations = suite.n_failures
        summary = time_average_metrics(
            records, slot_minutes=exp.slot_minutes, violations=violations
        )
        return SimulationResult(records if keep_records else None, summary, suite)
    policy = make_policy(exp)
    checker = checker_for(policy) if check else None
    return simulate(policy, exp.trace, checker, keep_records)


# ---------------------------------------------------------------------------
# sweeps


def _set_path(d: dict, dotted: str, value) -> dict:
    """Copy of ``d`` with ``section.field`` replaced by ``value``."""
    section, _, field = dotted.partition(".")
    if not field or "." in field:
        raise ConfigError(f"sweep axis must look like 'section.field', got {dotted!r}")
    out = dict(d)
    sub = dict(out.get(section) or {})
    sub[field] = value
    out[section] = sub
    return out


def sweep(
    base: dict,
    axis: str,
    values,
    include_oracle: bool = False,
    oracle_step: float = 1.0,
    check: bool = False,
) -> list[dict]:
    """Re-run the experiment at each value of ``axis`` (e.g.
    "battery.charge_max"), collecting one summary row per point.

    Points run concurrently, each with its own trace, battery, and
    controller state; rows come back in the order of ``values``.
    Failures at individual points are reported in the row's ``error``
    column instead of aborting the whole sweep.
    """

    def point(value) -> dict:
        row = {
            "axis": axis,
            "value": value,
            "n_slots": None,
            "v": None,
            "total_cost": None,
            "avg_cost_per_slot": None,
            "avg_cost_per_hour": None,
            "gap_bound": None,
            "oracle_total_cost": None,
            "violations": None,
            "error": None,
        }
        try:
            exp = build_experiment(_set_path(base, axis, value))
            result = run_experiment(exp, check=check, keep_records=False)
            row["n_slots"] = result.summary.n_slots
            row["total_cost"] = result.summary.total_cost
            row["avg_cost_per_slot"] = result.summary.avg_cost_per_slot
            row["avg_cost_per_hour"] = result.summary.avg_cost_per_hour
            row["violations"] = result.summary.violations
            policy_kind = exp.policy_spec["kind"]
            if policy_kind in ("battery", "deferral"):
                policy = make_policy(exp)
                row["v"] = policy.v
                if policy.v > 0:
                    row["gap_bound"] = policy.cost_gap_bound()
            if include_oracle:
                _, oracle_total = offline_oracle(
                    exp.trace, exp.battery, exp.cost_model, oracle_step
                )
                row["oracle_total_cost"] = oracle_total
        except (ConfigError, RuntimeError) as exc:
            row["error"] = str(exc)
        return row

    values = list(values)
    if len(values) <= 1:
        return [point(v) for v in values]
    with ThreadPoolExecutor(max_workers=min(len(values), os.cpu_count() or 1)) as pool:
        return list(pool.map(point, values))


# ---------------------------------------------------------------------------
# scheme comparison


SCHEME_LABELS = {
    "A": "grid only",
    "B": "battery only",
    "C": "deferral only",
    "D": "battery + deferral",
}


def compare_schemes(base: dict, check: bool = False) -> list[dict]:
    """Run the four schemes on one trace: A grid only, B battery control,
    C deferral control without the battery, D both combined.

    C reuses D's cost weight and minimum service rate so their delay
    guarantees match and the comparison isolates the battery's
    contribution; B serves all work firm through the battery controller.
    """
    exp = build_experiment(base)
    if exp.limits.flex_max <= 0:
        raise ConfigError(
            "scheme comparison needs flexible work in the trace "
            "(limits.flex_max must be positive)"
        )
    spec = exp.policy_spec
    if spec["kind"] not in ("battery", "deferral"):
        spec = {"kind": "deferral"}

    scheme_d = DeferralController(
        exp.battery, exp.cost_model, exp.limits,
        v=_weight(spec) if spec["kind"] == "deferral" else None,
        min_service_rate=spec.get("min_service_rate"),
        grid_n=int(spec.get("grid_n", 4096)),
    )
    policies = {
        "A": GridOnlyPolicy(exp.battery, exp.cost_model),
        "B": BatteryController(
            exp.battery, exp.cost_model,
            v=_weight(spec) if spec["kind"] == "battery" else None,
        ),
        "C": deferral_only_controller(
            exp.cost_model, exp.limits,
            v=scheme_d.v, min_service_rate=scheme_d.min_service_rate,
        ),
        "D": scheme_d,
    }
    rows = []
    base_cost = None
    for name in "ABCD":
        policy = policies[name]
        checker = checker_for(policy) if check else None
        result = simulate(policy, exp.trace, checker, keep_records=False)
        total = result.summary.total_cost
        if name == "A":
            base_cost = total
        rows.append(
            {
                "scheme": name,
                "label": SCHEME_LABELS[name],
                "total_cost": total,
                "avg_cost_per_hour": result.summary.avg_cost_per_hour,
                "ratio_pct": 100.0 * total / base_cost if base_cost else None,
                "max_backlog": result.summary.max_backlog,
                "max_job_delay": result.summary.max_job_delay,
                "delay_bound": getattr(policy, "delay_bound_slots", None),
                "violations": result.summary.violations,
            }
        )
    return rows


# ---------------------------------------------------------------------------
# output writers


def _cell(value) -> str:
    if value is None:
        return "n/a"
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value)).lower()
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    return str(value)


def write_slots_csv(records, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(SLOT_FIELDS) + "\n")
        for rec in records:
            fh.write(",".join(_cell(getattr(rec, f)) for f in SLOT_FIELDS) + "\n")


def write_summary_json(result: SimulationResult, path: str, config: dict | None = None) -> None:
    payload = {"summary": result.summary.as_dict()}
    if result.check is not None:
        payload["check"] = result.check.as_dict()
    if config is not None:
        payload["config"] = config
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_rows_csv(rows: list[dict], path: str) -> None:
    """Rows share one header taken from the first row's keys."""
    if not rows:
        raise ConfigError("nothing to write")
    fields = list(rows[0])
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(fields) + "\n")
        for row in rows:
            fh.write(",".join(_cell(row.get(f)) for f in fields) + "\n")
