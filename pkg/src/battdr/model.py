"""Physical and economic model for battery-backed grid power control.

A facility draws power from the grid in discrete slots.  Work arrives each
slot, split into a firm part that must be served immediately and a flexible
part that may be deferred.  A battery sits between the grid and the load:
the controller may recharge it (drawing extra grid power) or discharge it
(substituting for grid power), subject to per-slot rate caps, capacity
limits, and a fixed bookkeeping cost per recharge or discharge operation.
Grid energy is priced per unit by a state-dependent cost model that is
non-decreasing in the amount drawn.

Units convention: all energy quantities (work, battery charge, grid draw)
are in MW-slot units, i.e. average MW held for one slot.  Prices are
dollars per MW-slot; per-slot costs are dollars.  Slot duration is
metadata carried by traces and only affects per-hour reporting.

This module holds the shared types (workload samples and limits, battery
configuration and state, cost models, control decisions, per-slot records)
and the operations on them: applying a decision to the battery, pricing a
slot, computing the max-marginal-price constant that the online
controllers need, and aggregating run metrics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

# Absolute tolerance used for all feasibility comparisons.  Decisions are
# snapped into their boxes when within this distance, and hard faults fire
# only beyond it.
TOL = 1e-9


class ConfigError(ValueError):
    """Invalid configuration or input data."""


class DegenerateCostError(ConfigError):
    """Cost model admits no price spread for the controller to exploit."""


class InfeasibleDecisionError(RuntimeError):
    """A control decision violated a hard feasibility constraint.

    This signals a controller bug: decisions are never clamped after the
    fact, the simulation stops instead.
    """


# ---------------------------------------------------------------------------
# workload


@dataclass(frozen=True, slots=True)
class WorkloadSample:
    """One slot of arriving work: ``flex`` may wait, ``firm`` may not."""

    flex: float = 0.0
    firm: float = 0.0

    @property
    def total(self) -> float:
        return self.flex + self.firm

    def check(self, limits: "WorkloadLimits") -> None:
        if self.flex < -TOL or self.firm < -TOL:
            raise ConfigError(f"negative workload sample: {self}")
        if self.flex > limits.flex_max + TOL:
            raise ConfigError(f"flex={self.flex} exceeds flex_max={limits.flex_max}")
        if self.firm > limits.firm_max + TOL:
            raise ConfigError(f"firm={self.firm} exceeds firm_max={limits.firm_max}")
        if self.total > limits.total_max + TOL:
            raise ConfigError(f"total={self.total} exceeds total_max={limits.total_max}")


@dataclass(frozen=True, slots=True)
class WorkloadLimits:
    """A-priori bounds on per-slot arrivals, used to size controller queues."""

    total_max: float
    flex_max: float = 0.0
    firm_max: float | None = None

    def __post_init__(self) -> None:
        firm_max = self.total_max if self.firm_max is None else self.firm_max
        object.__setattr__(self, "firm_max", firm_max)
        if self.total_max <= 0:
            raise ConfigError("total_max must be positive")
        if self.flex_max < 0 or self.firm_max < 0:
            raise ConfigError("workload limits must be non-negative")
        if self.flex_max > self.total_max + TOL:
            raise ConfigError("flex_max cannot exceed total_max")
        if self.firm_max > self.total_max + TOL:
            raise ConfigError("firm_max cannot exceed total_max")


# ---------------------------------------------------------------------------
# battery


@dataclass(frozen=True, slots=True)
class BatteryConfig:
    """Battery capacity window, per-slot rate caps, and operation costs.

    ``charge_min <= charge <= charge_max`` must hold at all times.  Each
    slot may either recharge (up to ``recharge_max``) or discharge (up to
    ``discharge_max``), never both; a nonzero operation incurs the fixed
    cost ``recharge_cost`` or ``discharge_cost``.

    A degenerate configuration with both rate caps zero and a collapsed
    capacity window models "no battery at all" and is accepted so that
    deferral-only operation can reuse the same controller.
    """

    charge_min: float
    charge_max: float
    charge_init: float
    recharge_max: float
    discharge_max: float
    recharge_cost: float = 0.0
    discharge_cost: float = 0.0

    def __post_init__(self) -> None:
        if not 0 <= self.charge_min <= self.charge_init <= self.charge_max:
            raise ConfigError(
                "battery charge window must satisfy "
                "0 <= charge_min <= charge_init <= charge_max"
            )
        if self.recharge_cost < 0 or self.discharge_cost < 0:
            raise ConfigError("battery operation costs must be non-negative")
        if self.recharge_max < 0 or self.discharge_max < 0:
            raise ConfigError("battery rate caps must be non-negative")
        if self.is_degenerate:
            return
        if self.recharge_max <= 0 or self.discharge_max <= 0:
            raise ConfigError("rate caps must both be positive (or both zero)")
        # The capacity window must admit one full recharge plus one full
        # discharge of headroom; equality leaves the online controller no
        # cost-weight room (v_max = 0) but is still a runnable system.
        if self.capacity < self.recharge_max + self.discharge_max - TOL:
            raise ConfigError(
                "capacity window smaller than recharge_max + discharge_max"
            )

    @property
    def capacity(self) -> float:
        return self.charge_max - self.charge_min

    @property
    def is_degenerate(self) -> bool:
        return (
            self.recharge_max == 0.0
            and self.discharge_max == 0.0
            and self.charge_max == self.charge_min
        )

    @staticmethod
    def none(charge_level: float = 0.0) -> "BatteryConfig":
        """A placeholder battery that can never charge or discharge."""
        return BatteryConfig(
            charge_min=charge_level,
            charge_max=charge_level,
            charge_init=charge_level,
            recharge_max=0.0,
            discharge_max=0.0,
        )


@dataclass(slots=True)
class BatteryState:
    charge: float


def battery_apply(state: BatteryState, decision: "ControlDecision", cfg: BatteryConfig) -> BatteryState:
    """Advance the battery one slot; hard-fault if the decision overruns it."""
    new_charge = state.charge - decision.discharge + decision.recharge
    if new_charge < cfg.charge_min - TOL or new_charge > cfg.charge_max + TOL:
        raise InfeasibleDecisionError(
            f"infeasible decision: charge {state.charge} with recharge="
            f"{decision.recharge}, discharge={decision.discharge} leaves "
            f"{new_charge} outside [{cfg.charge_min}, {cfg.charge_max}]"
        )
    return BatteryState(new_charge)


# ---------------------------------------------------------------------------
# cost models


class CostModel:
    """Unit price of grid energy as a function of (aux state, grid draw).

    Subclasses set ``min_unit_price``, ``max_unit_price`` and
    ``max_marginal_price``.  The latter is the smallest constant that
    upper-bounds the marginal cost of the last unit drawn, uniformly over
    states and draws; the online controllers shift their charge queue by
    it, and it must strictly exceed ``min_unit_price`` for the battery to
    be worth operating.
    """

    variant: str = "generic"

    def __init__(self, p_peak: float, states: Sequence) -> None:
        if p_peak <= 0:
            raise ConfigError("p_peak must be positive")
        if not states:
            raise ConfigError("cost model needs at least one aux state")
        self.p_peak = float(p_peak)
        self.states = tuple(states)
        self.min_unit_price = 0.0
        self.max_unit_price = 0.0
        self.max_marginal_price = 0.0

    def price(self, s, p: float) -> float:
        raise NotImplementedError

    def price_derivative(self, s, p: float) -> float | None:
        """d(price)/dP where available, else None."""
        return None

    def _scan_prices(self, n: int = 101) -> None:
        """Grid-scan for price bounds and basic sanity (non-negative,
        non-decreasing in the draw)."""
        lo, hi = math.inf, -math.inf
        for s in self.states:
            prev = -math.inf
            for p in np.linspace(0.0, self.p_peak, n):
                c = self.price(s, float(p))
                if c < -TOL:
                    raise ConfigError(f"negative unit price at s={s}, p={p}")
                if c < prev - TOL:
                    raise ConfigError(f"unit price decreasing in draw at s={s}, p={p}")
                prev = c
                lo = min(lo, c)
                hi = max(hi, c)
        self.min_unit_price = lo
        self.max_unit_price = hi


class FlatPriceModel(CostModel):
    """Per-slot flat unit price; the aux state *is* the price."""

    variant = "flat"

    def __init__(self, prices: Iterable[float], p_peak: float) -> None:
        table = tuple(sorted(set(float(c) for c in prices)))
        super().__init__(p_peak, table)
        for c in table:
            if c < 0:
                raise ConfigError(f"negative price {c} in price table")
        self.min_unit_price = table[0]
        self.max_unit_price = table[-1]
        self.max_marginal_price = max_marginal_price(self)

    def price(self, s, p: float) -> float:
        return s


class ConvexPriceModel(CostModel):
    """Smooth convex unit price in the draw, optionally state-dependent.

    ``fn(s, p)`` returns the unit price; ``dfn(s, p)`` its derivative in
    ``p``.  Without a derivative accessor the marginal-price constant is
    estimated by a one-sided difference and then verified on a grid, and
    the closed-form slot solver falls back to grid search.
    """

    variant = "convex"

    def __init__(
        self,
        fn: Callable,
        p_peak: float,
        dfn: Callable | None = None,
        states: Sequence = (0.0,),
    ) -> None:
        super().__init__(p_peak, states)
        self._fn = fn
        self._dfn = dfn
        self._scan_prices()
        self.max_marginal_price = max_marginal_price(self)
        if dfn is None:
            failures = verify_max_marginal_price(self)
            if failures:
                raise ConfigError(
                    "numerically estimated max marginal price failed "
                    f"verification: {failures[0]}"
                )

    def price(self, s, p: float) -> float:
        return self._fn(s, p)

    def price_derivative(self, s, p: float) -> float | None:
        if self._dfn is None:
            return None
        return self._dfn(s, p)


class GenericPriceModel(CostModel):
    """Arbitrary non-decreasing unit price with a caller-supplied
    max-marginal-price constant, verified on a grid at construction."""

    variant = "generic"

    def __init__(
        self,
        fn: Callable,
        p_peak: float,
        max_marginal: float,
        states: Sequence = (0.0,),
    ) -> None:
        super().__init__(p_peak, states)
        self._fn = fn
        self._scan_prices()
        self.max_marginal_price = float(max_marginal)
        if self.max_marginal_price <= self.min_unit_price + TOL:
            raise DegenerateCostError(
                "degenerate cost model: max marginal price does not exceed "
                "the minimum unit price"
            )
        failures = verify_max_marginal_price(self)
        if failures:
            raise ConfigError(
                f"supplied max marginal price fails verification: {failures[0]}"
            )

    def price(self, s, p: float) -> float:
        return self._fn(s, p)


def max_marginal_price(cm: CostModel) -> float:
    """Smallest constant chi such that P * (price(S, P) - chi) is
    non-increasing in P for every state, i.e. an upper bound on the
    marginal cost of the last unit drawn.

    Flat models: the largest table price.  Convex models: the marginal
    cost at peak draw, maximized over states.  Raises if the result does
    not strictly exceed the minimum unit price, since then the battery can
    never buy low and sell high.
    """
    if cm.variant == "flat":
        chi = cm.max_unit_price
    elif cm.variant == "convex":
        chi = -math.inf
        for s in cm.states:
            dc = cm.price_derivative(s, cm.p_peak)
            if dc is None:
                h = max(cm.p_peak * 1e-7, 1e-9)
                dc = (cm.price(s, cm.p_peak) - cm.price(s, cm.p_peak - h)) / h
            chi = max(chi, cm.price(s, cm.p_peak) + cm.p_peak * dc)
    else:
        raise ConfigError(
            "generic cost models need a caller-supplied max marginal price"
        )
    if chi <= cm.min_unit_price + TOL:
        raise DegenerateCostError(
            "degenerate cost model: max marginal price does not exceed the "
            "minimum unit price"
        )
    return chi


def verify_max_marginal_price(cm: CostModel, n: int = 100, tol: float = TOL) -> list[str]:
    """Check the defining property of ``max_marginal_price`` on a grid.

    For every state and every ordered pair P1 <= P2 on an ``n``-point grid,
    P1 * (price(P1) - chi) >= P2 * (price(P2) - chi) must hold.  Returns a
    list of human-readable violations (empty when the property holds).
    """
    chi = cm.max_marginal_price
    failures: list[str] = []
    grid = np.linspace(0.0, cm.p_peak, n)
    for s in cm.states:
        vals = np.array([p * (cm.price(s, float(p)) - chi) for p in grid])
        # non-increasing along the grid implies the pairwise property
        diffs = vals[1:] - vals[:-1]
        bad = np.nonzero(diffs > tol)[0]
        for i in bad[:3]:
            failures.append(
                f"s={s}: P*(price-chi) rises from P={grid[i]:.6g} "
                f"to P={grid[i + 1]:.6g} by {diffs[i]:.3g}"
            )
    return failures


# ---------------------------------------------------------------------------
# decisions


@dataclass(frozen=True, slots=True)
class ControlDecision:
    """One slot's choice: grid draw, battery operation, and the share of
    delivered power routed to flexible work."""

    grid_power: float
    recharge: float = 0.0
    discharge: float = 0.0
    flex_frac: float = 0.0

    @property
    def delivered(self) -> float:
        """Power reaching the load: grid draw minus recharge plus discharge."""
        return self.grid_power - self.recharge + self.discharge

    @property
    def uses_recharge(self) -> bool:
        return self.recharge > 0.0

    @property
    def uses_discharge(self) -> bool:
        return self.discharge > 0.0


def _snap(value: float, low: float, high: float) -> float:
    """Round float noise onto [low, high] endpoints; genuine violations
    pass through so the feasibility check can fault on them."""
    if low - TOL <= value <= low:
        return low
    if high <= value <= high + TOL:
        return high
    return value


def make_decision(
    p: float,
    r: float,
    d: float,
    flex_frac: float,
    cfg: BatteryConfig,
) -> ControlDecision:
    """Build a decision, absorbing float noise at the box boundaries."""
    p = _snap(p, 0.0, math.inf)
    r = _snap(r, 0.0, cfg.recharge_max)
    d = _snap(d, 0.0, cfg.discharge_max)
    flex_frac = _snap(flex_frac, 0.0, 1.0)
    return ControlDecision(p, r, d, flex_frac)


def check_decision(
    dec: ControlDecision,
    sample: WorkloadSample,
    cfg: BatteryConfig,
    cm: CostModel,
    deferral: bool,
) -> None:
    """Feasibility check; raises InfeasibleDecisionError on any violation.

    Without deferral the full arrival must be served this slot; with it,
    the firm share of delivered power must equal the firm arrival.
    """
    msgs = []
    if dec.grid_power < -TOL or dec.grid_power > cm.p_peak + TOL:
        msgs.append(f"grid draw {dec.grid_power} outside [0, {cm.p_peak}]")
    if dec.recharge < -TOL or dec.recharge > cfg.recharge_max + TOL:
        msgs.append(f"recharge {dec.recharge} outside [0, {cfg.recharge_max}]")
    if dec.discharge < -TOL or dec.discharge > cfg.discharge_max + TOL:
        msgs.append(f"discharge {dec.discharge} outside [0, {cfg.discharge_max}]")
    if dec.recharge > TOL and dec.discharge > TOL:
        msgs.append("recharge and discharge in the same slot")
    if not -TOL <= dec.flex_frac <= 1.0 + TOL:
        msgs.append(f"flex fraction {dec.flex_frac} outside [0, 1]")
    delivered = dec.delivered
    if deferral:
        firm_served = (1.0 - dec.flex_frac) * delivered
        if abs(firm_served - sample.firm) > TOL:
            msgs.append(
                f"firm work not met: delivered*(1-flex_frac)={firm_served} "
                f"vs firm={sample.firm}"
            )
    else:
        if abs(delivered - sample.total) > TOL:
            msgs.append(
                f"power balance broken: delivered={delivered} vs "
                f"arrival={sample.total}"
            )
    if msgs:
        raise InfeasibleDecisionError("infeasible decision: " + "; ".join(msgs))


def slot_cost(dec: ControlDecision, cm: CostModel, s, cfg: BatteryConfig) -> float:
    """Dollar cost of one slot: energy at the realized unit price plus the
    fixed cost of any battery operation."""
    cost = dec.grid_power * cm.price(s, dec.grid_power)
    if dec.uses_recharge:
        cost += cfg.recharge_cost
    if dec.uses_discharge:
        cost += cfg.discharge_cost
    return cost


# ---------------------------------------------------------------------------
# telemetry


@dataclass(slots=True)
class SlotRecord:
    """Everything observable about one simulated slot."""

    slot: int
    flex: float
    firm: float
    aux_state: float
    unit_price: float
    grid_power: float
    recharge: float
    discharge: float
    flex_frac: float
    cost: float
    charge_before: float
    charge_after: float
    charge_queue: float    # shifted battery-charge tracker used by the controller
    backlog: float         # pending flexible work after this slot
    delay_queue: float     # virtual queue enforcing bounded deferral
    max_delay: int         # largest completed-job delay observed so far


SLOT_FIELDS = (
    "slot", "flex", "firm", "aux_state", "unit_price", "grid_power",
    "recharge", "discharge", "flex_frac", "cost", "charge_before",
    "charge_after", "charge_queue", "backlog", "delay_queue", "max_delay",
)


@dataclass(slots=True)
class RunSummary:
    """Aggregates over a simulated run."""

    n_slots: int
    total_cost: float
    avg_cost_per_slot: float
    avg_cost_per_hour: float
    avg_recharge: float
    avg_discharge: float
    max_charge: float
    avg_charge: float
    max_backlog: float
    avg_backlog: float
    max_delay_queue: float
    max_abs_charge_queue: float
    max_job_delay: int
    delay_bound: int | None
    violations: int
    slot_minutes: float

    def as_dict(self) -> dict:
        return {
            "n_slots": self.n_slots,
            "total_cost": self.total_cost,
            "avg_cost_per_slot": self.avg_cost_per_slot,
            "avg_cost_per_hour": self.avg_cost_per_hour,
            "avg_recharge": self.avg_recharge,
            "avg_discharge": self.avg_discharge,
            "max_charge": self.max_charge,
            "avg_charge": self.avg_charge,
            "max_backlog": self.max_backlog,
            "avg_backlog": self.avg_backlog,
            "max_delay_queue": self.max_delay_queue,
            "max_abs_charge_queue": self.max_abs_charge_queue,
            "max_job_delay": self.max_job_delay,
            "delay_bound": self.delay_bound,
            "violations": self.violations,
            "slot_minutes": self.slot_minutes,
        }


class MetricsAccumulator:
    """Streaming aggregation so long runs need not retain every record."""

    def __init__(self, slot_minutes: float = 60.0, delay_bound: int | None = None):
        self.slot_minutes = slot_minutes
        self.delay_bound = delay_bound
        self.n = 0
        self.total_cost = 0.0
        self.sum_recharge = 0.0
        self.sum_discharge = 0.0
        self.sum_charge = 0.0
        self.sum_backlog = 0.0
        self.max_charge = -math.inf
        self.max_backlog = 0.0
        self.max_delay_queue = 0.0
        self.max_abs_cq = 0.0
        self.max_delay = 0
        self.violations = 0

    def update(self, rec: SlotRecord) -> None:
        self.n += 1
        self.total_cost += rec.cost
        self.sum_recharge += rec.recharge
        self.sum_discharge += rec.discharge
        self.sum_charge += rec.charge_after
        self.sum_backlog += rec.backlog
        if rec.charge_after > self.max_charge:
            self.max_charge = rec.charge_after
        if rec.backlog > self.max_backlog:
            self.max_backlog = rec.backlog
        if rec.delay_queue > self.max_delay_queue:
            self.max_delay_queue = rec.delay_queue
        a = abs(rec.charge_queue)
        if a > self.max_abs_cq:
            self.max_abs_cq = a
        if rec.max_delay > self.max_delay:
            self.max_delay = rec.max_delay

    def summary(self) -> RunSummary:
        if self.n == 0:
            raise ConfigError("no slots simulated")
        avg = self.total_cost / self.n
        return RunSummary(
            n_slots=self.n,
            total_cost=self.total_cost,
            avg_cost_per_slot=avg,
            avg_cost_per_hour=avg * 60.0 / self.slot_minutes,
            avg_recharge=self.sum_recharge / self.n,
            avg_discharge=self.sum_discharge / self.n,
            max_charge=self.max_charge,
            avg_charge=self.sum_charge / self.n,
            max_backlog=self.max_backlog,
            avg_backlog=self.sum_backlog / self.n,
            max_delay_queue=self.max_delay_queue,
            max_abs_charge_queue=self.max_abs_cq,
            max_job_delay=self.max_delay,
            delay_bound=self.delay_bound,
            violations=self.violations,
            slot_minutes=self.slot_minutes,
        )


def time_average_metrics(
    records: Sequence[SlotRecord],
    slot_minutes: float = 60.0,
    delay_bound: int | None = None,
    violations: int = 0,
) -> RunSummary:
    acc = MetricsAccumulator(slot_minutes, delay_bound)
    for rec in records:
        acc.update(rec)
    acc.violations = violations
    return acc.summary()
