"""Runtime verification: invariant monitoring and self-checks.

Everything here recomputes expectations independently of the controllers
and policies:

* ``RecordChecker``  replays a stream of slot records against the model
  laws (power balance, battery window, queue recurrences, analytic queue
  caps and bands, threshold guards, per-slot drift bounds).
* solver cross-checks  compare each closed-form slot solver against the
  brute-force grid solver on randomized states.
* ``check_frozen_examples``  pins hand-computed values of the core
  quantities so regressions in the formulas are caught immediately.
* ``run_random_invariant_suite``  simulates randomized scenarios across
  every controller and baseline with a checker attached.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import battery_ctrl, deferral_ctrl
from .baselines import GridOnlyPolicy, ThresholdPolicy, deferral_only_controller
from .battery_ctrl import BatteryController, max_cost_weight
from .deferral_ctrl import DeferralController, delay_bound, max_cost_weight_ext
from .model import (
    TOL,
    BatteryConfig,
    ControlDecision,
    ConvexPriceModel,
    CostModel,
    FlatPriceModel,
    InfeasibleDecisionError,
    SlotRecord,
    WorkloadLimits,
    WorkloadSample,
    check_decision,
    slot_cost,
    verify_max_marginal_price,
)
from .traces import gen_iid_uniform

DRIFT_TOL = 1e-6
MATCH_TOL = 1e-9


@dataclass
class SuiteResult:
    """Outcome of one verification pass."""

    name: str
    n_checked: int = 0
    n_failures: int = 0
    failures: list[str] = field(default_factory=list)
    _max_kept: int = 20

    @property
    def passed(self) -> bool:
        return self.n_failures == 0

    def record(self, message: str) -> None:
        self.n_failures += 1
        if len(self.failures) < self._max_kept:
            self.failures.append(message)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "n_checked": self.n_checked,
            "n_failures": self.n_failures,
            "failures": list(self.failures),
        }

    def __str__(self) -> str:
        status = "ok" if self.passed else f"FAIL ({self.n_failures})"
        out = f"{self.name}: {status}, {self.n_checked} checks"
        for msg in self.failures:
            out += f"\n  - {msg}"
        return out


# ---------------------------------------------------------------------------
# record-stream invariant monitor


class RecordChecker:
    """Replays slot records against independently recomputed laws.

    ``kind`` selects which guarantees apply: "battery" and "deferral"
    check the full queue/band/drift machinery; "grid_only" additionally
    pins the battery idle; "threshold" and "oracle" check only the
    physical laws every schedule must satisfy.
    """

    def __init__(
        self,
        cfg: BatteryConfig,
        cm: CostModel,
        kind: str,
        v: float | None = None,
        limits: WorkloadLimits | None = None,
        min_service_rate: float | None = None,
    ) -> None:
        if kind not in {"battery", "deferral", "grid_only", "threshold", "oracle"}:
            raise ValueError(f"unknown policy kind {kind!r}")
        self.cfg = cfg
        self.cm = cm
        self.kind = kind
        self.result = SuiteResult(name=f"{kind} record invariants")
        self._charge = cfg.charge_init
        self._u = 0.0
        self._z = 0.0
        chi = cm.max_marginal_price if kind in ("battery", "deferral") else None

        if kind == "battery":
            if v is None:
                raise ValueError("battery checking needs the cost weight")
            self.v = float(v)
            shift = self.v * chi + cfg.discharge_max + cfg.charge_min
            self._x = cfg.charge_init - shift
            self._shift = shift
            self.queue_low = -self.v * chi - cfg.discharge_max
            self.queue_high = cfg.capacity - self.v * chi - cfg.discharge_max
            self.drift_const = max(cfg.recharge_max**2, cfg.discharge_max**2) / 2.0
        elif kind == "deferral":
            if v is None or limits is None or min_service_rate is None:
                raise ValueError(
                    "deferral checking needs cost weight, limits, and "
                    "min_service_rate"
                )
            self.v = float(v)
            self.limits = limits
            self.eps = float(min_service_rate)
            self.u_cap = self.v * chi + limits.flex_max
            self.z_cap = self.v * chi + self.eps
            self.q_cap = self.v * chi + limits.flex_max + self.eps
            shift = self.q_cap + cfg.discharge_max + cfg.charge_min
            self._x = cfg.charge_init - shift
            self._shift = shift
            self.queue_low = -self.q_cap - cfg.discharge_max
            self.queue_high = cfg.capacity - self.q_cap - cfg.discharge_max
            self.delay_bound_slots = (
                delay_bound(self.u_cap, self.z_cap, self.eps) if self.eps > 0 else None
            )
            self.drift_const = (
                (cm.p_peak + cfg.discharge_max) ** 2
                + (limits.flex_max**2 + self.eps**2) / 2.0
                + max(cfg.recharge_max**2, cfg.discharge_max**2) / 2.0
            )
        else:
            self._x = None
        self.limits = limits

    def _fail(self, rec: SlotRecord, message: str) -> None:
        self.result.record(f"slot {rec.slot}: {message}")

    def check(self, rec: SlotRecord) -> None:
        cfg, cm = self.cfg, self.cm
        self.result.n_checked += 1
        dec = ControlDecision(rec.grid_power, rec.recharge, rec.discharge, rec.flex_frac)
        sample = WorkloadSample(flex=rec.flex, firm=rec.firm)
        s = rec.aux_state

        if self.limits is not None:
            try:
                sample.check(self.limits)
            except Exception as exc:
                self._fail(rec, str(exc))
        try:
            check_decision(dec, sample, cfg, cm, deferral=self.kind == "deferral")
        except InfeasibleDecisionError as exc:
            self._fail(rec, str(exc))

        expected_cost = slot_cost(dec, cm, s, cfg)
        if abs(rec.cost - expected_cost) > MATCH_TOL * max(1.0, abs(expected_cost)):
            self._fail(rec, f"cost {rec.cost} != recomputed {expected_cost}")
        expected_price = cm.price(s, dec.grid_power)
        if abs(rec.unit_price - expected_price) > MATCH_TOL * max(1.0, abs(expected_price)):
            self._fail(rec, f"unit price {rec.unit_price} != {expected_price}")

        if abs(rec.charge_before - self._charge) > MATCH_TOL:
            self._fail(
                rec, f"charge_before {rec.charge_before} != carried {self._charge}"
            )
        stepped = rec.charge_before - dec.discharge + dec.recharge
        if abs(rec.charge_after - stepped) > MATCH_TOL:
            self._fail(rec, f"charge_after {rec.charge_after} != {stepped}")
        if not cfg.charge_min - TOL <= rec.charge_after <= cfg.charge_max + TOL:
            self._fail(
                rec,
                f"charge {rec.charge_after} outside "
                f"[{cfg.charge_min}, {cfg.charge_max}]",
            )
        self._charge = rec.charge_after

        if self.kind == "grid_only" and (dec.recharge != 0.0 or dec.discharge != 0.0):
            self._fail(rec, "grid-only schedule moved the battery")

        if self.kind == "battery":
            self._check_battery(rec, dec)
        elif self.kind == "deferral":
            self._check_deferral(rec, dec, sample)

    def _check_battery(self, rec: SlotRecord, dec: ControlDecision) -> None:
        x_prev = self._x
        x_now = x_prev + dec.recharge - dec.discharge
        if abs(rec.charge_queue - x_now) > MATCH_TOL:
            self._fail(rec, f"charge queue {rec.charge_queue} != {x_now}")
        if abs(x_now - (rec.charge_after - self._shift)) > MATCH_TOL:
            self._fail(rec, "charge queue detached from battery charge")
        if not self.queue_low - TOL <= x_now <= self.queue_high + TOL:
            self._fail(
                rec,
                f"charge queue {x_now} outside band "
                f"[{self.queue_low}, {self.queue_high}]",
            )
        if dec.uses_recharge and x_prev > -self.v * self.cm.min_unit_price + TOL:
            self._fail(rec, f"recharge above the no-recharge threshold (x={x_prev})")
        if dec.uses_discharge and x_prev < -self.v * self.cm.max_marginal_price - TOL:
            self._fail(rec, f"discharge below the no-discharge threshold (x={x_prev})")
        move = dec.recharge - dec.discharge
        if (x_now**2 - x_prev**2) / 2.0 - x_prev * move > self.drift_const + DRIFT_TOL:
            self._fail(rec, "per-slot drift bound violated")
        self._x = x_now

    def _check_deferral(
        self, rec: SlotRecord, dec: ControlDecision, sample: WorkloadSample
    ) -> None:
        u_prev, z_prev, x_prev = self._u, self._z, self._x
        service = dec.flex_frac * dec.delivered
        u_now = deferral_ctrl.update_backlog(u_prev, service, sample.flex)
        z_now = deferral_ctrl.update_delay_queue(
            z_prev, service, u_prev > 0.0, self.eps
        )
        x_now = x_prev + dec.recharge - dec.discharge
        if abs(rec.backlog - u_now) > MATCH_TOL:
            self._fail(rec, f"backlog {rec.backlog} != recomputed {u_now}")
        if abs(rec.delay_queue - z_now) > MATCH_TOL:
            self._fail(rec, f"delay queue {rec.delay_queue} != recomputed {z_now}")
        if abs(rec.charge_queue - x_now) > MATCH_TOL:
            self._fail(rec, f"charge queue {rec.charge_queue} != {x_now}")
        if abs(x_now - (rec.charge_after - self._shift)) > MATCH_TOL:
            self._fail(rec, "charge queue detached from battery charge")

        if u_now > self.u_cap + TOL:
            self._fail(rec, f"backlog {u_now} above cap {self.u_cap}")
        if z_now > self.z_cap + TOL:
            self._fail(rec, f"delay queue {z_now} above cap {self.z_cap}")
        if u_now + z_now > self.q_cap + TOL:
            self._fail(rec, f"combined queues {u_now + z_now} above cap {self.q_cap}")
        if not self.queue_low - TOL <= x_now <= self.queue_high + TOL:
            self._fail(
                rec,
                f"charge queue {x_now} outside band "
                f"[{self.queue_low}, {self.queue_high}]",
            )
        if dec.uses_recharge and x_prev > -self.v * self.cm.min_unit_price + TOL:
            self._fail(rec, f"recharge above the no-recharge threshold (x={x_prev})")
        if dec.uses_discharge and x_prev < -self.q_cap - TOL:
            self._fail(rec, f"discharge below the no-discharge threshold (x={x_prev})")
        if self.delay_bound_slots is not None and rec.max_delay > self.delay_bound_slots:
            self._fail(
                rec, f"job delay {rec.max_delay} above bound {self.delay_bound_slots}"
            )

        grow = self.eps if u_prev > 0.0 else 0.0
        lhs = (
            u_now**2 + z_now**2 + x_now**2 - u_prev**2 - z_prev**2 - x_prev**2
        ) / 2.0
        rhs = (
            self.drift_const
            + u_prev * sample.flex
            + z_prev * grow
            - (u_prev + z_prev) * (dec.grid_power - sample.firm)
            - (x_prev + u_prev + z_prev) * (dec.discharge - dec.recharge)
        )
        if lhs > rhs + DRIFT_TOL:
            self._fail(rec, "per-slot drift bound violated")
        self._u, self._z, self._x = u_now, z_now, x_now

    def finalize(self) -> SuiteResult:
        return self.result


# ---------------------------------------------------------------------------
# solver cross-checks


def _random_flat_setup(rng: np.random.Generator):
    while True:
        levels = np.sort(rng.uniform(1.0, 9.0, size=rng.integers(2, 5)))
        if levels[-1] - levels[0] >= 0.5:
            break
    r_max = float(rng.uniform(0.5, 5.0))
    d_max = float(rng.uniform(0.5, 5.0))
    charge_min = float(rng.uniform(0.0, 3.0))
    capacity = r_max + d_max + float(rng.uniform(1.0, 40.0))
    cfg = BatteryConfig(
        charge_min,
        charge_min + capacity,
        charge_min + float(rng.uniform(0.0, capacity)),
        r_max,
        d_max,
        recharge_cost=float(rng.uniform(0.0, 2.0)),
        discharge_cost=float(rng.uniform(0.0, 2.0)),
    )
    w_max = rng.uniform(2.0, 10.0)
    p_peak = w_max + max(r_max, d_max) + rng.uniform(0.5, 3.0)
    cm = FlatPriceModel(levels, p_peak=p_peak)
    return cfg, cm, w_max


def check_battery_flat_solver(
    n_states: int = 10000, seed: int = 0, solver=None
) -> SuiteResult:
    """Closed-form flat-price slot solver against the grid solver."""
    if solver is None:
        solver = battery_ctrl.solve_flat
    rng = np.random.default_rng(seed)
    result = SuiteResult(name="battery flat solver vs grid")
    for _ in range(n_states):
        cfg, cm, w_max = _random_flat_setup(rng)
        v = rng.uniform(0.05, 1.0) * max_cost_weight(cfg, cm)
        chi = cm.max_marginal_price
        x = rng.uniform(-v * chi - cfg.discharge_max - 2.0, cfg.capacity)
        total = rng.uniform(0.0, w_max)
        price = float(rng.choice(cm.states))
        result.n_checked += 1
        try:
            fast = solver(x, v, total, price, cfg, cm)
            check_decision(fast, WorkloadSample(0.0, total), cfg, cm, deferral=False)
            slow = battery_ctrl.solve_grid(x, v, total, price, cfg, cm)
        except Exception as exc:
            result.record(f"x={x} v={v} total={total} price={price}: {exc}")
            continue
        obj_fast = battery_ctrl.slot_objective(x, v, fast, price, cfg, cm)
        obj_slow = battery_ctrl.slot_objective(x, v, slow, price, cfg, cm)
        tol = MATCH_TOL * max(1.0, abs(obj_slow))
        if abs(obj_fast - obj_slow) > tol:
            result.record(
                f"x={x} v={v} total={total} price={price}: closed form "
                f"{obj_fast} vs grid {obj_slow}"
            )
    return result


def check_battery_convex_solver(
    n_states: int = 2000, seed: int = 1, solver=None
) -> SuiteResult:
    """Closed-form convex-price slot solver against the grid solver."""
    if solver is None:
        solver = battery_ctrl.solve_convex
    rng = np.random.default_rng(seed)
    result = SuiteResult(name="battery convex solver vs grid")
    for _ in range(n_states):
        cfg, _flat, w_max = _random_flat_setup(rng)
        p_peak = w_max + max(cfg.recharge_max, cfg.discharge_max) + rng.uniform(0.5, 3.0)
        base = float(rng.uniform(1.0, 6.0))
        slope = float(rng.uniform(0.2, 2.0))
        states = (base, base * float(rng.uniform(1.1, 2.0)))
        cm = ConvexPriceModel(
            lambda s, p, _k=slope, _pp=p_peak: s * (1.0 + _k * p / _pp),
            p_peak=p_peak,
            dfn=lambda s, p, _k=slope, _pp=p_peak: s * _k / _pp,
            states=states,
        )
        v = rng.uniform(0.05, 1.0) * max_cost_weight(cfg, cm)
        chi = cm.max_marginal_price
        x = rng.uniform(-v * chi - cfg.discharge_max - 2.0, cfg.capacity)
        total = rng.uniform(0.0, w_max)
        s = float(rng.choice(states))
        result.n_checked += 1
        try:
            fast = solver(x, v, total, s, cfg, cm)
            check_decision(fast, WorkloadSample(0.0, total), cfg, cm, deferral=False)
            slow = battery_ctrl.solve_grid(x, v, total, s, cfg, cm)
        except Exception as exc:
            result.record(f"x={x} v={v} total={total} s={s}: {exc}")
            continue
        obj_fast = battery_ctrl.slot_objective(x, v, fast, s, cfg, cm)
        obj_slow = battery_ctrl.slot_objective(x, v, slow, s, cfg, cm)
        tol = MATCH_TOL * max(1.0, abs(obj_slow))
        if abs(obj_fast - obj_slow) > tol:
            result.record(
                f"x={x} v={v} total={total} s={s}: closed form {obj_fast} "
                f"vs grid {obj_slow}"
            )
    return result


def check_deferral_flat_solver(
    n_states: int = 10000, seed: int = 2, solver=None
) -> SuiteResult:
    """Deferral case-table solver against the grid solver (flat prices)."""
    if solver is None:
        solver = deferral_ctrl.solve_flat
    rng = np.random.default_rng(seed)
    result = SuiteResult(name="deferral flat solver vs grid")
    for _ in range(n_states):
        cfg, cm, w_max = _random_flat_setup(rng)
        v = rng.uniform(0.5, 20.0)
        chi = cm.max_marginal_price
        firm = rng.uniform(0.0, w_max) if rng.random() < 0.9 else 0.0
        u = rng.uniform(0.0, 1.5 * v * chi) if rng.random() < 0.9 else 0.0
        z = rng.uniform(0.0, 1.5 * v * chi) if rng.random() < 0.9 else 0.0
        x = rng.uniform(-1.5 * v * chi - cfg.discharge_max, cfg.capacity)
        price = float(rng.choice(cm.states))
        result.n_checked += 1
        try:
            fast = solver(x, u, z, v, firm, price, cfg, cm)
            check_decision(
                fast, WorkloadSample(0.0, firm), cfg, cm, deferral=True
            )
            slow = deferral_ctrl.solve_grid(x, u, z, v, firm, price, cfg, cm)
        except Exception as exc:
            result.record(f"x={x} u={u} z={z} v={v} firm={firm}: {exc}")
            continue
        obj_fast = deferral_ctrl.slot_objective(x, u, z, v, fast, price, cfg, cm)
        obj_slow = deferral_ctrl.slot_objective(x, u, z, v, slow, price, cfg, cm)
        tol = MATCH_TOL * max(1.0, abs(obj_slow))
        if abs(obj_fast - obj_slow) > tol:
            result.record(
                f"x={x} u={u} z={z} v={v} firm={firm} price={price}: "
                f"case table {obj_fast} vs grid {obj_slow}"
            )
    return result


def check_price_dominance_models(models=None) -> SuiteResult:
    """Marginal-price ceiling property on representative cost models."""
    result = SuiteResult(name="price dominance")
    if models is None:
        models = [
            FlatPriceModel([2.0, 6.0, 10.0], p_peak=20.0),
            ConvexPriceModel(
                lambda s, p: p * p, p_peak=2.0, dfn=lambda s, p: 2.0 * p
            ),
            ConvexPriceModel(
                lambda s, p: s * (1.0 + p / 20.0),
                p_peak=20.0,
                dfn=lambda s, p: s / 20.0,
                states=(3.0, 5.0),
            ),
        ]
    for cm in models:
        result.n_checked += 1
        for msg in verify_max_marginal_price(cm):
            result.record(f"{cm.variant}: {msg}")
    return result


# ---------------------------------------------------------------------------
# frozen spot values


def check_frozen_examples() -> SuiteResult:
    """Hand-computed values of the core derived quantities."""
    result = SuiteResult(name="frozen examples")

    def expect(name: str, got, want, tol=1e-12) -> None:
        result.n_checked += 1
        ok = (
            abs(got - want) <= tol
            if isinstance(want, float)
            else got == want
        )
        if not ok:
            result.record(f"{name}: got {got!r}, expected {want!r}")

    flat = FlatPriceModel([2.0, 6.0, 10.0], p_peak=20.0)
    expect("flat price ceiling", flat.max_marginal_price, 10.0)

    quad = ConvexPriceModel(lambda s, p: p * p, p_peak=2.0, dfn=lambda s, p: 2.0 * p)
    expect("convex marginal ceiling", quad.max_marginal_price, 12.0)

    cfg = BatteryConfig(0.0, 100.0, 0.0, 10.0, 10.0, 5.0, 5.0)
    expect("battery cost weight cap", max_cost_weight(cfg, flat), 10.0)

    limits = WorkloadLimits(total_max=30.0, flex_max=25.0, firm_max=5.0)
    expect(
        "deferral cost weight cap",
        max_cost_weight_ext(cfg, flat, limits, min_service_rate=5.0),
        6.25,
    )

    expect("delay bound", delay_bound(110.0, 110.0, 10.0), 22)

    dec = battery_ctrl.solve_flat(-40.0, 10.0, 10.0, 2.0, cfg, flat)
    expect("cheap-slot recharge draw", dec.grid_power, 20.0)
    expect("cheap-slot recharge amount", dec.recharge, 10.0)

    dec = battery_ctrl.solve_flat(-30.0, 10.0, 20.0, 10.0, cfg, flat)
    expect("dear-slot discharge draw", dec.grid_power, 10.0)
    expect("dear-slot discharge amount", dec.discharge, 10.0)

    cfg2 = BatteryConfig(0.0, 100.0, 0.0, 10.0, 10.0, 2.0, 2.0)
    dec = deferral_ctrl.solve_flat(-35.0, 40.0, 0.0, 10.0, 3.0, 2.0, cfg2, flat)
    expect("deferral discharge draw", dec.grid_power, 20.0)
    expect("deferral discharge amount", dec.discharge, 10.0)
    expect("deferral flex share", dec.flex_frac, 0.9)

    expect(
        "recharge slot cost",
        slot_cost(ControlDecision(20.0, recharge=10.0), flat, 2.0, cfg),
        45.0,
    )
    expect(
        "discharge slot cost",
        slot_cost(ControlDecision(10.0, discharge=10.0), flat, 10.0, cfg),
        105.0,
    )
    return result


# ---------------------------------------------------------------------------
# randomized end-to-end suite


def _random_scenario(rng: np.random.Generator, flavor: str, n_slots: int) -> SuiteResult:
    while True:
        levels = np.sort(rng.uniform(1.0, 9.0, size=rng.integers(2, 4)))
        if levels[-1] - levels[0] >= 0.5:
            break
    r_max = float(rng.uniform(0.5, 4.0))
    d_max = float(rng.uniform(0.5, 4.0))
    charge_min = float(rng.uniform(0.0, 3.0))
    rc = float(rng.uniform(0.0, 1.5))
    dc = float(rng.uniform(0.0, 1.5))
    w_max = float(rng.uniform(2.0, 10.0))
    deferral = flavor.startswith("deferral")
    flex_fraction = float(rng.uniform(0.45, 0.7)) if deferral else 0.0
    flex_max = flex_fraction * w_max
    firm_max = (1.0 - flex_fraction) * w_max
    eps = float(rng.uniform(0.3, 0.9)) * (w_max - firm_max) if deferral else 0.0
    pad = float(rng.uniform(1.0, 20.0))
    capacity = r_max + d_max + flex_max + eps + pad
    cfg = BatteryConfig(
        charge_min,
        charge_min + capacity,
        charge_min + float(rng.uniform(0.0, capacity)),
        r_max,
        d_max,
        rc,
        dc,
    )
    p_peak = w_max + max(r_max, d_max) + float(rng.uniform(0.5, 3.0))
    if flavor.endswith("convex"):
        slope = float(rng.uniform(0.2, 1.5))
        cm = ConvexPriceModel(
            lambda s, p, _k=slope, _pp=p_peak: s * (1.0 + _k * p / _pp),
            p_peak=p_peak,
            dfn=lambda s, p, _k=slope, _pp=p_peak: s * _k / _pp,
            states=tuple(float(c) for c in levels),
        )
    else:
        cm = FlatPriceModel(levels, p_peak=p_peak)

    trace = gen_iid_uniform(
        (0.0, w_max),
        [float(c) for c in levels],
        n_slots,
        seed=int(rng.integers(0, 2**31)),
        flex_fraction=flex_fraction,
    )

    if deferral:
        limits = WorkloadLimits(w_max, flex_max=flex_max, firm_max=firm_max)
        v = float(rng.uniform(0.2, 1.0)) * max_cost_weight_ext(cfg, cm, limits, eps)
        policy = DeferralController(
            cfg, cm, limits, v=v, min_service_rate=eps,
            grid_n=512 if flavor.endswith("convex") else 4096,
        )
        checker = RecordChecker(
            cfg, cm, "deferral", v=v, limits=limits, min_service_rate=eps
        )
    elif flavor == "battery-flat" or flavor == "battery-convex":
        v = float(rng.uniform(0.2, 1.0)) * max_cost_weight(cfg, cm)
        policy = BatteryController(cfg, cm, v=v)
        checker = RecordChecker(cfg, cm, "battery", v=v)
    elif flavor == "threshold":
        policy = ThresholdPolicy(cfg, cm, threshold=float(rng.choice(levels)))
        checker = RecordChecker(cfg, cm, "threshold")
    elif flavor == "grid-only":
        policy = GridOnlyPolicy(cfg, cm)
        checker = RecordChecker(cfg, cm, "grid_only")
    else:
        raise ValueError(f"unknown scenario flavor {flavor!r}")

    try:
        for t in range(len(trace)):
            checker.check(policy.step(t, trace.sample(t), trace.aux_state[t]))
    except Exception as exc:
        checker.result.record(f"run aborted: {exc!r}")
    out = checker.finalize()
    out.name = f"{flavor} scenario"
    return out


_FLAVOR_CYCLE = (
    ("battery-flat", 2500),
    ("deferral-flat", 2500),
    ("battery-convex", 2000),
    ("threshold", 2500),
    ("grid-only", 2500),
    ("deferral-convex", 400),
)


def run_random_invariant_suite(
    total_slots: int = 20000, seed: int = 0
) -> list[SuiteResult]:
    """Randomized scenarios across all policies until ``total_slots`` slots
    have been simulated under a record checker."""
    rng = np.random.default_rng(seed)
    results = []
    done = 0
    i = 0
    while done < total_slots:
        flavor, chunk = _FLAVOR_CYCLE[i % len(_FLAVOR_CYCLE)]
        chunk = min(chunk, max(total_slots - done, 50))
        results.append(_random_scenario(rng, flavor, chunk))
        done += chunk
        i += 1
    return results


def run_all(
    seed: int = 0, total_slots: int = 20000, n_solver_states: int = 2000
) -> list[SuiteResult]:
    """Every verification pass; the CLI's validate command."""
    results = [
        check_frozen_examples(),
        check_price_dominance_models(),
        check_battery_flat_solver(n_states=n_solver_states, seed=seed),
        check_battery_convex_solver(n_states=max(n_solver_states // 4, 100), seed=seed + 1),
        check_deferral_flat_solver(n_states=n_solver_states, seed=seed + 2),
    ]
    results.extend(run_random_invariant_suite(total_slots=total_slots, seed=seed + 3))
    return results
