"""Reference policies and the offline optimum.

* ``GridOnlyPolicy``    serve every arrival from the grid, battery idle.
* ``ThresholdPolicy``   recharge below a fixed unit price, discharge
  above it; the classic static arbitrage rule.
* ``deferral_only_controller``  queue-based postponement with no battery,
  for isolating how much of the saving comes from deferral alone.
* ``offline_oracle``    minimum-cost schedule with the whole trace known
  in advance, by dynamic programming over a discretized charge level;
  the yardstick the online controllers are measured against.
"""

from __future__ import annotations

import math

import numpy as np

from .deferral_ctrl import DeferralController
from .model import (
    TOL,
    BatteryConfig,
    BatteryState,
    ConfigError,
    CostModel,
    SlotRecord,
    WorkloadLimits,
    WorkloadSample,
    battery_apply,
    check_decision,
    make_decision,
    slot_cost,
)
from .traces import Trace


def _record(t, sample, s, dec, cost, before, after):
    total = sample.total
    return SlotRecord(
        slot=t,
        flex=sample.flex,
        firm=sample.firm,
        aux_state=float(s),
        unit_price=0.0,
        grid_power=dec.grid_power,
        recharge=dec.recharge,
        discharge=dec.discharge,
        flex_frac=dec.flex_frac,
        cost=cost,
        charge_before=before,
        charge_after=after,
        charge_queue=0.0,
        backlog=0.0,
        delay_queue=0.0,
        max_delay=0,
    )


class GridOnlyPolicy:
    """Draw exactly the arriving load every slot; the battery never moves."""

    kind = "grid_only"

    def __init__(self, cfg: BatteryConfig, cm: CostModel) -> None:
        self.cfg = cfg
        self.cm = cm
        self.state = BatteryState(cfg.charge_init)

    def step(self, t: int, sample: WorkloadSample, s) -> SlotRecord:
        total = sample.total
        if total > self.cm.p_peak + TOL:
            raise ConfigError(f"slot {t}: arrival {total} exceeds p_peak")
        dec = make_decision(total, 0.0, 0.0, 0.0, self.cfg)
        check_decision(dec, sample, self.cfg, self.cm, deferral=False)
        rec = _record(
            t, sample, s, dec,
            slot_cost(dec, self.cm, s, self.cfg),
            self.state.charge, self.state.charge,
        )
        rec.unit_price = self.cm.price(s, dec.grid_power)
        return rec


class ThresholdPolicy:
    """Static arbitrage: recharge whole slots whose unit price is below the
    threshold, discharge into the load when it is above, idle at equality.

    Moves are capped by the rate limits, the charge window, zero grid
    draw (no export), and the draw ceiling.  Meaningful for price models
    whose unit price does not depend on the draw.
    """

    kind = "threshold"

    def __init__(self, cfg: BatteryConfig, cm: CostModel, threshold: float) -> None:
        if cfg.is_degenerate:
            raise ConfigError("threshold policy needs a usable battery")
        self.cfg = cfg
        self.cm = cm
        self.threshold = float(threshold)
        self.state = BatteryState(cfg.charge_init)

    def step(self, t: int, sample: WorkloadSample, s) -> SlotRecord:
        cfg, cm = self.cfg, self.cm
        total = sample.total
        if total > cm.p_peak + TOL:
            raise ConfigError(f"slot {t}: arrival {total} exceeds p_peak")
        price = cm.price(s, total)
        charge = self.state.charge
        r = d = 0.0
        if price < self.threshold:
            r = min(cfg.recharge_max, cfg.charge_max - charge, cm.p_peak - total)
            r = max(r, 0.0)
        elif price > self.threshold:
            d = min(cfg.discharge_max, charge - cfg.charge_min, total)
            d = max(d, 0.0)
        dec = make_decision(total - d + r, r, d, 0.0, cfg)
        check_decision(dec, sample, cfg, cm, deferral=False)
        before = self.state.charge
        self.state = battery_apply(self.state, dec, cfg)
        rec = _record(
            t, sample, s, dec, slot_cost(dec, cm, s, cfg), before, self.state.charge
        )
        rec.unit_price = cm.price(s, dec.grid_power)
        return rec


def deferral_only_controller(
    cm: CostModel,
    limits: WorkloadLimits,
    v: float,
    min_service_rate: float | None = None,
    charge_level: float = 0.0,
) -> DeferralController:
    """Deferral control with an absent battery: same queues and cost
    weight semantics, no storage.  The weight must be given explicitly."""
    return DeferralController(
        BatteryConfig.none(charge_level), cm, limits,
        v=v, min_service_rate=min_service_rate,
    )


# ---------------------------------------------------------------------------
# offline optimum


def offline_oracle(
    trace: Trace,
    cfg: BatteryConfig,
    cm: CostModel,
    step: float = 1.0,
) -> tuple[list[SlotRecord], float]:
    """Minimum total cost over the whole horizon with full knowledge of the
    trace, serving all work the slot it arrives (no deferral).

    Dynamic program over charge levels spaced ``step`` apart; the rate
    caps, the charge window, and the initial offset from empty must all
    be whole multiples of ``step`` so every reachable charge sits on the
    grid.  Ties prefer the most-discharging move.  Returns the slot
    records of one optimal schedule and its total cost.
    """
    if step <= 0:
        raise ConfigError("step must be positive")

    def steps_of(value: float, name: str) -> int:
        k = round(value / step)
        if abs(value - k * step) > 1e-9:
            raise ConfigError(
                f"discretization misaligned: {name} ({value}) is not a "
                f"multiple of step {step}"
            )
        return k

    n_y = steps_of(cfg.capacity, "capacity window") + 1
    r_steps = steps_of(cfg.recharge_max, "recharge_max")
    d_steps = steps_of(cfg.discharge_max, "discharge_max")
    init_idx = steps_of(cfg.charge_init - cfg.charge_min, "initial charge offset")

    totals = trace.total
    if np.any(totals > cm.p_peak + TOL):
        bad = int(np.argmax(totals > cm.p_peak + TOL))
        raise ConfigError(f"slot {bad}: arrival {totals[bad]} exceeds p_peak")

    n_slots = len(trace)
    no_move = np.iinfo(np.int16).max
    choice = np.full((n_slots, n_y), no_move, dtype=np.int16)
    g = np.full(n_y, np.inf)
    g[init_idx] = 0.0

    for t in range(n_slots):
        w = float(totals[t])
        s = trace.aux_state[t]
        new_g = np.full(n_y, np.inf)
        ch = choice[t]
        for k in range(-d_steps, r_steps + 1):
            p = w + k * step
            if p < -1e-12 or p > cm.p_peak + 1e-12:
                continue
            p = max(p, 0.0)
            c = p * cm.price(s, p)
            if k > 0:
                c += cfg.recharge_cost
                reach = g[: n_y - k] + c
                better = reach < new_g[k:]
                new_g[k:] = np.where(better, reach, new_g[k:])
                ch[k:][better] = k
            elif k < 0:
                c += cfg.discharge_cost
                reach = g[-k:] + c
                better = reach < new_g[: n_y + k]
                new_g[: n_y + k] = np.where(better, reach, new_g[: n_y + k])
                ch[: n_y + k][better] = k
            else:
                better = g + c < new_g
                new_g = np.where(better, g + c, new_g)
                ch[better] = 0
        if not np.any(np.isfinite(new_g)):
            raise ConfigError(f"slot {t}: no feasible battery move")
        g = new_g

    j = int(np.argmin(g))
    total_cost = float(g[j])
    path = np.empty(n_slots, dtype=np.int64)
    for t in range(n_slots - 1, -1, -1):
        k = int(choice[t, j])
        if k == no_move:
            raise RuntimeError("oracle backtrack hit an unreached state")
        path[t] = k
        j -= k

    records = []
    state = BatteryState(cfg.charge_init)
    for t in range(n_slots):
        sample = trace.sample(t)
        s = trace.aux_state[t]
        k = int(path[t])
        r = k * step if k > 0 else 0.0
        d = -k * step if k < 0 else 0.0
        p = max(sample.total - d + r, 0.0)
        frac = 1.0 - sample.firm / sample.total if sample.total > 0 else 0.0
        dec = make_decision(p, r, d, frac, cfg)
        check_decision(dec, cm=cm, sample=sample, cfg=cfg, deferral=False)
        before = state.charge
        state = battery_apply(state, dec, cfg)
        rec = _record(
            t, sample, s, dec, slot_cost(dec, cm, s, cfg), before, state.charge
        )
        rec.unit_price = cm.price(s, dec.grid_power)
        records.append(rec)

    rebuilt = math.fsum(r.cost for r in records)
    if abs(rebuilt - total_cost) > 1e-6 * max(1.0, abs(total_cost)):
        raise RuntimeError(
            f"oracle reconstruction cost {rebuilt} disagrees with DP value "
            f"{total_cost}"
        )
    return records, total_cost
