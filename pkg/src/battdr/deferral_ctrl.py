"""Online controller for battery arbitrage plus deferrable workloads.

Arrivals split into a firm part served the slot it arrives and a
flexible part that may wait.  The controller keeps three queues:

* ``backlog``      pending flexible work (real queue),
* ``delay_queue``  a virtual queue that grows by ``min_service_rate``
  whenever backlog is pending and drains with actual service, forcing
  every unit of flexible work out within a computable number of slots,
* ``charge_queue`` the shifted battery-charge tracker.

Each slot it maximizes

    (backlog + delay_queue) * P  -  v * (slot cost)
        + (charge_queue + backlog + delay_queue) * (D - R)

over grid draw P, recharge R, discharge D with the firm share served
exactly.  The same cost weight logic as the battery-only controller
applies, with the queue caps carved out of the battery capacity window;
all queue bounds, the battery window, and the per-job delay bound are
asserted at runtime.

Flat pricing has an exact case-table solution; other price models use
grid search over the draw with the battery move resolved exactly (the
objective is linear in R and D for any price model).
"""

from __future__ import annotations

import math
from collections import deque

from .model import (
    TOL,
    BatteryConfig,
    BatteryState,
    ConfigError,
    ControlDecision,
    CostModel,
    InfeasibleDecisionError,
    SlotRecord,
    WorkloadLimits,
    WorkloadSample,
    battery_apply,
    check_decision,
    make_decision,
    slot_cost,
)

import numpy as np


# ---------------------------------------------------------------------------
# queue dynamics


def update_backlog(backlog: float, service: float, flex_arrival: float) -> float:
    """Drain pending flexible work by the service delivered, then add the
    new flexible arrival."""
    return max(backlog - service, 0.0) + flex_arrival


def update_delay_queue(
    delay_queue: float,
    service: float,
    backlog_positive: bool,
    min_service_rate: float,
) -> float:
    """Virtual-queue update: accrues ``min_service_rate`` per slot while
    flexible work is pending, drains with actual service, floors at 0."""
    growth = min_service_rate if backlog_positive else 0.0
    return max(delay_queue - service + growth, 0.0)


def delay_bound(
    backlog_cap: float, delay_queue_cap: float, min_service_rate: float
) -> int:
    """Worst-case slots any unit of flexible work can wait: the combined
    queue cap divided by the guaranteed drain rate, rounded up."""
    if min_service_rate <= 0:
        raise ConfigError("delay bound needs a positive minimum service rate")
    return math.ceil((backlog_cap + delay_queue_cap) / min_service_rate)


def max_cost_weight_ext(
    cfg: BatteryConfig,
    cm: CostModel,
    limits: WorkloadLimits,
    min_service_rate: float,
) -> float:
    """Largest cost weight the battery supports once the workload queues'
    caps are carved out of the capacity window."""
    headroom = cfg.capacity - (
        cfg.recharge_max + cfg.discharge_max + limits.flex_max + min_service_rate
    )
    if headroom <= 0:
        raise ConfigError(
            "battery too small for deferral control: capacity window must "
            "exceed recharge_max + discharge_max + flex_max + min_service_rate"
        )
    return headroom / (cm.max_marginal_price - cm.min_unit_price)


# ---------------------------------------------------------------------------
# slot solvers


def slot_objective(
    x: float,
    u: float,
    z: float,
    v: float,
    dec: ControlDecision,
    s,
    cfg: BatteryConfig,
    cm: CostModel,
) -> float:
    """Per-slot objective the controller maximizes."""
    cost = dec.grid_power * cm.price(s, dec.grid_power)
    if dec.uses_recharge:
        cost += cfg.recharge_cost
    if dec.uses_discharge:
        cost += cfg.discharge_cost
    return (
        (u + z) * dec.grid_power
        - v * cost
        + (x + u + z) * (dec.discharge - dec.recharge)
    )


def _build(p: float, r: float, d: float, firm: float, cfg: BatteryConfig) -> ControlDecision:
    delivered = p - r + d
    flex_frac = 1.0 - firm / delivered if delivered > 0 else 0.0
    return make_decision(p, r, d, flex_frac, cfg)


def solve_flat(
    x: float,
    u: float,
    z: float,
    v: float,
    firm: float,
    price: float,
    cfg: BatteryConfig,
    cm: CostModel,
) -> ControlDecision:
    """Exact slot decision under a flat unit price.

    For each battery mode (idle, recharge, discharge) the objective is
    linear in the draw and the move, so each mode's best value has a
    closed form in the two aggregates ``q1 = u + z - v * price`` (queue
    pressure net of price) and ``q2 = x + u + z``.  Candidates whose
    optimum is approached but not attained (the move shrinking to zero)
    are capped by the idle value and written in terms of it, so idle wins
    such ties.  Tie order: idle, then recharge, then discharge.
    """
    q1 = u + z - v * price
    q2 = x + u + z
    p_peak = cm.p_peak
    r_max, d_max = cfg.recharge_max, cfg.discharge_max
    vc_rc = v * cfg.recharge_cost
    vc_dc = v * cfg.discharge_cost

    p_idle = p_peak if q1 >= 0 else firm
    theta1 = q1 * p_idle
    best_theta = theta1
    best = (p_idle, 0.0, 0.0)

    if r_max > 0:
        if q2 < 0:
            if q1 >= 0:
                theta2 = theta1 - q2 * r_max - vc_rc
                rec = (p_peak, r_max, 0.0)
            elif q1 >= q2:
                theta2 = q1 * (r_max + firm) - q2 * r_max - vc_rc
                rec = (firm + r_max, r_max, 0.0)
            else:
                theta2, rec = theta1 - vc_rc, None
        else:
            theta2, rec = theta1 - vc_rc, None
        if rec is not None and theta2 > best_theta:
            best_theta, best = theta2, rec

    if d_max > 0:
        low_p = max(0.0, firm - d_max)
        if q1 >= 0:
            if q2 >= 0:
                theta3 = theta1 + q2 * d_max - vc_dc
                rec = (p_peak, 0.0, d_max)
            else:
                theta3, rec = theta1 - vc_dc, None
        elif q2 >= 0:
            theta3 = q1 * low_p + q2 * d_max - vc_dc
            rec = (low_p, 0.0, d_max)
        elif q1 <= q2:
            amount = min(firm, d_max)
            theta3 = q1 * low_p + q2 * amount - vc_dc
            rec = (low_p, 0.0, amount) if amount > 0 else None
        else:
            theta3, rec = theta1 - vc_dc, None
        if rec is not None and theta3 > best_theta:
            best_theta, best = theta3, rec

    return _build(best[0], best[1], best[2], firm, cfg)


def solve_grid(
    x: float,
    u: float,
    z: float,
    v: float,
    firm: float,
    s,
    cfg: BatteryConfig,
    cm: CostModel,
    grid_n: int = 4096,
    refine: int = 3,
) -> ControlDecision:
    """Brute-force slot decision over a draw grid.

    For a fixed draw the objective is linear in the battery move
    regardless of the price model, so the move is resolved exactly from
    the sign of ``q2 = x + u + z`` and only the draw is gridded.  Window
    endpoints and kink draws are included exactly, making the search
    exact under flat pricing; zoom passes refine smooth-price optima.
    """
    if grid_n < 2:
        raise ConfigError("grid_n must be at least 2")
    q2 = x + u + z
    p_peak = cm.p_peak
    r_max, d_max = cfg.recharge_max, cfg.discharge_max
    vc_rc = v * cfg.recharge_cost
    vc_dc = v * cfg.discharge_cost

    def gain(pts: np.ndarray) -> np.ndarray:
        try:
            c = np.asarray(cm.price(s, pts), dtype=float)
            if c.shape != pts.shape:
                c = np.broadcast_to(c, pts.shape)
        except (TypeError, ValueError):
            c = np.array([cm.price(s, float(p)) for p in pts])
        return (u + z) * pts - v * pts * c

    breaks = [0.0, p_peak, firm, min(p_peak, firm + r_max), max(0.0, firm - d_max)]
    base = np.unique(
        np.concatenate([np.linspace(0.0, p_peak, grid_n), np.clip(breaks, 0.0, p_peak)])
    )

    def maximize(lo: float, hi: float, obj_fn) -> tuple[float, float] | None:
        """Best (objective, draw) for one mode over the feasible draw
        window [lo, hi]; candidate draws are projected onto the window so
        tolerance slack can never manufacture an infeasible winner.
        obj_fn marks degenerate draws with -inf.  Zoom passes narrow
        around the incumbent."""
        if hi < lo:
            return None
        pts = np.unique(np.clip(base, lo, hi))
        best_obj = -np.inf
        best_p = None
        for _ in range(refine + 1):
            obj = obj_fn(pts)
            i = int(np.argmax(obj))
            if not np.isfinite(obj[i]):
                break
            if obj[i] > best_obj:
                best_obj, best_p = float(obj[i]), float(pts[i])
            w_lo = pts[max(i - 1, 0)]
            w_hi = pts[min(i + 1, len(pts) - 1)]
            if w_hi - w_lo <= 1e-15 * max(1.0, p_peak):
                break
            pts = np.linspace(w_lo, w_hi, max(grid_n // 4, 64))
        return None if best_p is None else (best_obj, best_p)

    # candidate = (objective, mode rank, p, r, d); mode ranks: idle 0,
    # recharge 1, discharge 2, matching the closed form's tie order
    cands: list[tuple[float, int, float, float, float]] = []

    got = maximize(firm, p_peak, gain)
    if got is not None:
        cands.append((got[0], 0, got[1], 0.0, 0.0))

    if r_max > 0 and q2 < 0:
        def recharge_obj(pts: np.ndarray) -> np.ndarray:
            room = np.minimum(r_max, pts - firm)
            return np.where(room > 0, gain(pts) - q2 * room - vc_rc, -np.inf)

        got = maximize(firm, p_peak, recharge_obj)
        if got is not None:
            cands.append(
                (got[0], 1, got[1], min(r_max, got[1] - firm), 0.0)
            )

    if d_max > 0:
        if q2 > 0:
            got = maximize(
                max(firm - d_max, 0.0), p_peak,
                lambda pts: gain(pts) + q2 * d_max - vc_dc,
            )
            if got is not None:
                cands.append((got[0], 2, got[1], 0.0, d_max))
        else:
            def discharge_obj(pts: np.ndarray) -> np.ndarray:
                need = firm - pts
                return np.where(need > 0, gain(pts) + q2 * need - vc_dc, -np.inf)

            got = maximize(max(firm - d_max, 0.0), firm, discharge_obj)
            if got is not None:
                cands.append((got[0], 2, got[1], 0.0, firm - got[1]))

    best = None
    for obj, rank, p, r, d in cands:
        if best is None or obj > best[0] or (obj == best[0] and rank < best[1]):
            best = (obj, rank, p, r, d)
    _, _, p, r, d = best
    if r < TOL and d < TOL:
        r = d = 0.0
    return _build(p, r, d, firm, cfg)


# ---------------------------------------------------------------------------
# job tracking


class JobLedger:
    """FIFO of (arrival slot, remaining work) for measuring per-job delay.

    Served strictly first-in-first-out with the slot's service amount;
    residues below 1e-12 are treated as completed so float dust cannot
    age into phantom delay violations.
    """

    _DUST = 1e-12

    def __init__(self) -> None:
        self._jobs: deque[list] = deque()

    def __len__(self) -> int:
        return len(self._jobs)

    def total(self) -> float:
        return math.fsum(job[1] for job in self._jobs)

    def add(self, slot: int, amount: float) -> None:
        if amount > self._DUST:
            self._jobs.append([slot, amount])

    def oldest_arrival(self) -> int | None:
        return self._jobs[0][0] if self._jobs else None

    def serve(self, amount: float, slot: int) -> int:
        """Drain up to ``amount``; returns the largest completed-job delay
        in this slot (0 when nothing completed)."""
        max_delay = 0
        remaining = amount
        while self._jobs and remaining > self._DUST:
            job = self._jobs[0]
            if job[1] <= remaining + self._DUST:
                remaining -= job[1]
                self._jobs.popleft()
                max_delay = max(max_delay, slot - job[0])
            else:
                job[1] -= remaining
                remaining = 0.0
        return max_delay


# ---------------------------------------------------------------------------
# controller


class DeferralController:
    """Stateful per-slot controller; see the module docstring.

    With a degenerate (absent) battery this runs deferral-only control:
    the cost weight must then be supplied explicitly since no capacity
    window exists to derive it from.
    """

    kind = "deferral"

    def __init__(
        self,
        cfg: BatteryConfig,
        cm: CostModel,
        limits: WorkloadLimits,
        v: float | None = None,
        min_service_rate: float | None = None,
        grid_n: int = 4096,
    ) -> None:
        self.cfg = cfg
        self.cm = cm
        self.limits = limits
        self.grid_n = int(grid_n)
        if limits.flex_max <= 0:
            raise ConfigError(
                "deferral control needs a positive flexible workload limit"
            )
        if cm.p_peak < limits.total_max + max(cfg.recharge_max, cfg.discharge_max) - TOL:
            raise ConfigError(
                "p_peak must cover the peak arrival plus the larger battery "
                "rate cap"
            )
        if min_service_rate is None:
            min_service_rate = limits.total_max / 2.0
        slack = limits.total_max - limits.firm_max
        if not 0.0 <= min_service_rate <= slack + TOL:
            raise ConfigError(
                f"min_service_rate must lie in [0, {slack}] (peak arrival "
                "minus peak firm arrival) to be guaranteed servable"
            )
        self.min_service_rate = float(min_service_rate)

        if cfg.is_degenerate:
            if v is None:
                raise ConfigError(
                    "deferral-only operation (no battery) needs an explicit "
                    "cost weight"
                )
            self.v_cap = None
        else:
            self.v_cap = max_cost_weight_ext(cfg, cm, limits, self.min_service_rate)
            if v is None:
                v = self.v_cap
            if v > self.v_cap + TOL:
                raise ConfigError(
                    f"cost weight {v} exceeds the battery-supported maximum "
                    f"{self.v_cap}"
                )
        if v <= 0:
            raise ConfigError("cost weight must be positive")
        self.v = float(v)

        chi = cm.max_marginal_price
        self.backlog_cap = self.v * chi + limits.flex_max
        self.delay_queue_cap = self.v * chi + self.min_service_rate
        self.combined_cap = self.v * chi + limits.flex_max + self.min_service_rate
        self.delay_bound_slots = (
            delay_bound(self.backlog_cap, self.delay_queue_cap, self.min_service_rate)
            if self.min_service_rate > 0
            else None
        )
        shift = self.combined_cap + cfg.discharge_max + cfg.charge_min
        self.charge_queue = cfg.charge_init - shift
        self.queue_low = -self.combined_cap - cfg.discharge_max
        self.queue_high = cfg.capacity - self.combined_cap - cfg.discharge_max
        b_batt = max(cfg.recharge_max**2, cfg.discharge_max**2) / 2.0
        self.drift_const = (
            (cm.p_peak + cfg.discharge_max) ** 2
            + (limits.flex_max**2 + self.min_service_rate**2) / 2.0
            + b_batt
        )
        self.state = BatteryState(cfg.charge_init)
        self.backlog = 0.0
        self.delay_queue = 0.0
        self.max_delay = 0
        self._ledger = JobLedger()
        self._flat = cm.variant == "flat"

    def ledger_total(self) -> float:
        return self._ledger.total()

    def cost_gap_bound(self) -> float:
        """Worst-case excess of the achieved time-average cost over the
        offline optimum, shrinking as the cost weight grows."""
        return self.drift_const / self.v

    def decide(self, sample: WorkloadSample, s) -> ControlDecision:
        if self._flat:
            return solve_flat(
                self.charge_queue, self.backlog, self.delay_queue, self.v,
                sample.firm, self.cm.price(s, 0.0), self.cfg, self.cm,
            )
        return solve_grid(
            self.charge_queue, self.backlog, self.delay_queue, self.v,
            sample.firm, s, self.cfg, self.cm, grid_n=self.grid_n,
        )

    def step(self, t: int, sample: WorkloadSample, s) -> SlotRecord:
        cfg, cm = self.cfg, self.cm
        sample.check(self.limits)
        dec = self.decide(sample, s)
        x = self.charge_queue
        if dec.uses_recharge and x > -self.v * cm.min_unit_price + TOL:
            raise InfeasibleDecisionError(
                f"recharge with charge queue {x} above the no-recharge threshold"
            )
        if dec.uses_discharge and x < -self.combined_cap - TOL:
            raise InfeasibleDecisionError(
                f"discharge with charge queue {x} below the no-discharge threshold"
            )
        check_decision(dec, sample, cfg, cm, deferral=True)

        service = dec.flex_frac * dec.delivered
        u_before = self.backlog
        completed_delay = self._ledger.serve(service, t)
        self._ledger.add(t, sample.flex)
        if completed_delay > self.max_delay:
            self.max_delay = completed_delay
        if self.delay_bound_slots is not None:
            if completed_delay > self.delay_bound_slots:
                raise InfeasibleDecisionError(
                    f"job delay {completed_delay} exceeded bound "
                    f"{self.delay_bound_slots}"
                )
            oldest = self._ledger.oldest_arrival()
            if oldest is not None and t - oldest >= self.delay_bound_slots:
                raise InfeasibleDecisionError(
                    f"pending job from slot {oldest} cannot finish within the "
                    f"delay bound {self.delay_bound_slots}"
                )

        self.backlog = update_backlog(u_before, service, sample.flex)
        self.delay_queue = update_delay_queue(
            self.delay_queue, service, u_before > 0.0, self.min_service_rate
        )
        before = self.state.charge
        self.state = battery_apply(self.state, dec, cfg)
        self.charge_queue = x - dec.discharge + dec.recharge

        if self.backlog > self.backlog_cap + TOL:
            raise InfeasibleDecisionError(
                f"backlog {self.backlog} exceeded cap {self.backlog_cap}"
            )
        if self.delay_queue > self.delay_queue_cap + TOL:
            raise InfeasibleDecisionError(
                f"delay queue {self.delay_queue} exceeded cap {self.delay_queue_cap}"
            )
        if self.backlog + self.delay_queue > self.combined_cap + TOL:
            raise InfeasibleDecisionError(
                f"combined queues {self.backlog + self.delay_queue} exceeded "
                f"cap {self.combined_cap}"
            )
        if not (self.queue_low - TOL <= self.charge_queue <= self.queue_high + TOL):
            raise InfeasibleDecisionError(
                f"charge queue {self.charge_queue} left its band "
                f"[{self.queue_low}, {self.queue_high}]"
            )

        return SlotRecord(
            slot=t,
            flex=sample.flex,
            firm=sample.firm,
            aux_state=float(s),
            unit_price=cm.price(s, dec.grid_power),
            grid_power=dec.grid_power,
            recharge=dec.recharge,
            discharge=dec.discharge,
            flex_frac=dec.flex_frac,
            cost=slot_cost(dec, cm, s, cfg),
            charge_before=before,
            charge_after=self.state.charge,
            charge_queue=self.charge_queue,
            backlog=self.backlog,
            delay_queue=self.delay_queue,
            max_delay=self.max_delay,
        )
