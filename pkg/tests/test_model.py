"""Core domain types: workload, battery, price models, decisions, metrics."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from battdr.model import (
    TOL,
    BatteryConfig,
    BatteryState,
    ConfigError,
    ControlDecision,
    ConvexPriceModel,
    DegenerateCostError,
    FlatPriceModel,
    GenericPriceModel,
    InfeasibleDecisionError,
    MetricsAccumulator,
    SlotRecord,
    WorkloadLimits,
    WorkloadSample,
    battery_apply,
    check_decision,
    make_decision,
    max_marginal_price,
    slot_cost,
    time_average_metrics,
    verify_max_marginal_price,
)


class TestWorkload:
    def test_total(self):
        assert WorkloadSample(flex=2.0, firm=3.0).total == 5.0

    def test_limits_default_firm_max(self):
        lim = WorkloadLimits(total_max=10.0, flex_max=4.0)
        assert lim.firm_max == 10.0

    def test_limits_reject_flex_over_total(self):
        with pytest.raises(ConfigError):
            WorkloadLimits(total_max=5.0, flex_max=6.0)

    def test_limits_reject_nonpositive_total(self):
        with pytest.raises(ConfigError):
            WorkloadLimits(total_max=0.0)

    def test_sample_check_against_limits(self):
        lim = WorkloadLimits(total_max=10.0, flex_max=4.0, firm_max=8.0)
        WorkloadSample(4.0, 6.0).check(lim)
        with pytest.raises(ConfigError):
            WorkloadSample(5.0, 1.0).check(lim)
        with pytest.raises(ConfigError):
            WorkloadSample(1.0, 9.0).check(lim)
        with pytest.raises(ConfigError):
            WorkloadSample(4.0, 7.0).check(lim)
        with pytest.raises(ConfigError):
            WorkloadSample(-1.0, 1.0).check(lim)


class TestBatteryConfig:
    def test_capacity(self):
        cfg = BatteryConfig(5.0, 30.0, 10.0, 4.0, 6.0)
        assert cfg.capacity == 25.0
        assert not cfg.is_degenerate

    def test_reject_bad_charge_ordering(self):
        with pytest.raises(ConfigError):
            BatteryConfig(10.0, 5.0, 7.0, 1.0, 1.0)
        with pytest.raises(ConfigError):
            BatteryConfig(0.0, 10.0, 11.0, 1.0, 1.0)

    def test_reject_negative_costs_and_caps(self):
        with pytest.raises(ConfigError):
            BatteryConfig(0.0, 10.0, 0.0, 1.0, 1.0, recharge_cost=-1.0)
        with pytest.raises(ConfigError):
            BatteryConfig(0.0, 10.0, 0.0, -1.0, 1.0)

    def test_reject_window_smaller_than_rate_caps(self):
        # one full recharge plus one full discharge must fit
        with pytest.raises(ConfigError):
            BatteryConfig(0.0, 5.0, 0.0, 4.0, 4.0)

    def test_reject_single_zero_rate_cap(self):
        with pytest.raises(ConfigError):
            BatteryConfig(0.0, 10.0, 0.0, 0.0, 5.0)

    def test_degenerate_none(self):
        cfg = BatteryConfig.none(charge_level=3.0)
        assert cfg.is_degenerate
        assert cfg.capacity == 0.0
        assert cfg.charge_init == 3.0


class TestBatteryApply:
    def test_recharge_and_discharge_move_charge(self):
        cfg = BatteryConfig(0.0, 20.0, 5.0, 10.0, 10.0)
        st1 = battery_apply(BatteryState(5.0), make_decision(7.0, 3.0, 0.0, 0.0, cfg), cfg)
        assert st1.charge == 8.0
        st2 = battery_apply(st1, make_decision(0.0, 0.0, 2.0, 0.0, cfg), cfg)
        assert st2.charge == 6.0

    def test_rejects_overcharge(self):
        cfg = BatteryConfig(0.0, 20.0, 15.0, 10.0, 10.0)
        with pytest.raises(InfeasibleDecisionError):
            battery_apply(BatteryState(15.0), ControlDecision(10.0, 10.0, 0.0), cfg)

    def test_rejects_overdischarge(self):
        cfg = BatteryConfig(0.0, 20.0, 5.0, 10.0, 10.0)
        with pytest.raises(InfeasibleDecisionError):
            battery_apply(BatteryState(5.0), ControlDecision(0.0, 0.0, 6.0), cfg)


class TestFlatPriceModel:
    def test_bounds_and_marginal_price(self):
        cm = FlatPriceModel((2.0, 6.0, 10.0), p_peak=20.0)
        assert cm.min_unit_price == 2.0
        assert cm.max_unit_price == 10.0
        assert cm.max_marginal_price == 10.0
        assert cm.price(6.0, 12.0) == 6.0

    def test_single_price_is_degenerate(self):
        # no spread means the battery can never buy low and sell high
        with pytest.raises(DegenerateCostError):
            FlatPriceModel((5.0,), p_peak=10.0)

    def test_rejects_negative_price(self):
        with pytest.raises(ConfigError):
            FlatPriceModel((-1.0, 5.0), p_peak=10.0)

    def test_rejects_bad_p_peak(self):
        with pytest.raises(ConfigError):
            FlatPriceModel((2.0, 10.0), p_peak=0.0)


class TestConvexPriceModel:
    def test_linear_price_marginal_constant(self):
        # price a + b*p: marginal cost of the last unit at peak is a + 2*b*p_peak
        a, b, p_peak = 1.0, 0.5, 8.0
        cm = ConvexPriceModel(
            lambda s, p: a + b * p, p_peak, dfn=lambda s, p: b
        )
        assert cm.max_marginal_price == pytest.approx(a + 2 * b * p_peak)
        assert not verify_max_marginal_price(cm)

    def test_derivative_free_estimation(self):
        cm = ConvexPriceModel(lambda s, p: 1.0 + 0.25 * p * p, p_peak=4.0)
        want = 1.0 + 0.25 * 16 + 4.0 * (0.5 * 4.0)
        assert cm.max_marginal_price == pytest.approx(want, rel=1e-5)

    def test_decreasing_price_rejected(self):
        with pytest.raises(ConfigError):
            ConvexPriceModel(lambda s, p: 10.0 - p, p_peak=5.0, dfn=lambda s, p: -1.0)


class TestGenericPriceModel:
    def test_supplied_marginal_price_verified(self):
        cm = GenericPriceModel(lambda s, p: 2.0 + p, 5.0, max_marginal=12.0)
        assert cm.max_marginal_price == 12.0

    def test_understated_marginal_price_rejected(self):
        # true marginal at peak is 2 + 2*5 = 12; claiming 8 must fail the scan
        with pytest.raises(ConfigError):
            GenericPriceModel(lambda s, p: 2.0 + p, 5.0, max_marginal=8.0)

    def test_marginal_price_below_min_price_degenerate(self):
        with pytest.raises(DegenerateCostError):
            GenericPriceModel(lambda s, p: 5.0, 5.0, max_marginal=4.0)


class TestMaxMarginalPriceHelpers:
    def test_flat_uses_table_max(self):
        cm = FlatPriceModel((3.0, 7.0), p_peak=10.0)
        assert max_marginal_price(cm) == 7.0

    def test_verifier_catches_lowered_constant(self):
        cm = FlatPriceModel((2.0, 10.0), p_peak=20.0)
        cm.max_marginal_price = 5.0  # below the top table price
        assert verify_max_marginal_price(cm)


class TestDecisions:
    def test_delivered_and_flags(self):
        dec = ControlDecision(grid_power=7.0, recharge=2.0, discharge=0.0)
        assert dec.delivered == 5.0
        assert dec.uses_recharge and not dec.uses_discharge

    def test_make_decision_snaps_float_dust(self):
        cfg = BatteryConfig(0.0, 20.0, 0.0, 10.0, 10.0)
        dec = make_decision(5.0, -1e-12, 10.0 + 1e-12, 0.0, cfg)
        assert dec.recharge == 0.0
        assert dec.discharge == 10.0

    def test_make_decision_keeps_real_violations(self):
        cfg = BatteryConfig(0.0, 20.0, 0.0, 10.0, 10.0)
        dec = make_decision(5.0, 11.0, 0.0, 0.0, cfg)
        assert dec.recharge == 11.0  # left intact for check_decision to fault on

    def test_check_decision_violations(self):
        cfg = BatteryConfig(0.0, 20.0, 0.0, 10.0, 10.0)
        cm = FlatPriceModel((2.0, 10.0), p_peak=20.0)
        sample = WorkloadSample(0.0, 5.0)
        ok = ControlDecision(5.0, 0.0, 0.0)
        check_decision(ok, sample, cfg, cm, deferral=False)
        bad = [
            ControlDecision(25.0, 20.0, 0.0),        # draw above the ceiling
            ControlDecision(-1.0, 0.0, 6.0),         # negative draw
            ControlDecision(16.0, 11.0, 0.0),        # recharge above cap
            ControlDecision(5.0, 1.0, 1.0),          # both battery modes at once
            ControlDecision(6.0, 0.0, 0.0),          # power balance broken
            ControlDecision(5.0, 0.0, 0.0, 2.0),     # flex fraction outside [0, 1]
        ]
        for dec in bad:
            with pytest.raises(InfeasibleDecisionError):
                check_decision(dec, sample, cfg, cm, deferral=False)

    def test_check_decision_deferral_pins_firm_share(self):
        cfg = BatteryConfig(0.0, 20.0, 0.0, 10.0, 10.0)
        cm = FlatPriceModel((2.0, 10.0), p_peak=20.0)
        sample = WorkloadSample(flex=3.0, firm=4.0)
        # delivered 8, flex share 0.5 -> firm share 4: feasible
        check_decision(ControlDecision(8.0, 0.0, 0.0, 0.5), sample, cfg, cm, deferral=True)
        with pytest.raises(InfeasibleDecisionError):
            check_decision(ControlDecision(8.0, 0.0, 0.0, 0.25), sample, cfg, cm, deferral=True)

    def test_slot_cost_charges_fees_only_when_used(self):
        cfg = BatteryConfig(0.0, 20.0, 0.0, 10.0, 10.0, 5.0, 7.0)
        cm = FlatPriceModel((2.0, 6.0), p_peak=30.0)
        assert slot_cost(ControlDecision(10.0, 0.0, 0.0), cm, 6.0, cfg) == 60.0
        assert slot_cost(ControlDecision(10.0, 3.0, 0.0), cm, 6.0, cfg) == 65.0
        assert slot_cost(ControlDecision(10.0, 0.0, 3.0), cm, 2.0, cfg) == 27.0


def _record(slot, cost, charge=0.0, backlog=0.0):
    return SlotRecord(
        slot=slot, flex=0.0, firm=1.0, aux_state=2.0, unit_price=2.0,
        grid_power=1.0, recharge=0.0, discharge=0.0, flex_frac=0.0,
        cost=cost, charge_before=charge, charge_after=charge,
        charge_queue=charge - 1.0, backlog=backlog, delay_queue=0.0,
        max_delay=0,
    )


class TestMetrics:
    def test_time_averages(self):
        recs = [_record(0, 10.0, charge=2.0), _record(1, 20.0, charge=4.0, backlog=3.0)]
        summary = time_average_metrics(recs, slot_minutes=15.0)
        assert summary.n_slots == 2
        assert summary.total_cost == 30.0
        assert summary.avg_cost_per_slot == 15.0
        assert summary.avg_cost_per_hour == 60.0
        assert summary.max_charge == 4.0
        assert summary.avg_charge == 3.0
        assert summary.max_backlog == 3.0
        assert summary.as_dict()["total_cost"] == 30.0

    def test_empty_run_rejected(self):
        with pytest.raises(ConfigError):
            MetricsAccumulator().summary()

    def test_streaming_matches_batch(self):
        recs = [_record(i, float(i)) for i in range(5)]
        acc = MetricsAccumulator(slot_minutes=60.0)
        for rec in recs:
            acc.update(rec)
        assert acc.summary() == time_average_metrics(recs, slot_minutes=60.0)


class TestErrorHierarchy:
    def test_config_error_is_value_error(self):
        assert issubclass(ConfigError, ValueError)
        assert issubclass(DegenerateCostError, ConfigError)
        assert issubclass(InfeasibleDecisionError, RuntimeError)


class TestSnapProperties:
    @given(
        value=st.floats(-5.0, 25.0, allow_nan=False),
        r=st.floats(0.0, 10.0, allow_nan=False),
    )
    @settings(max_examples=200, deadline=None)
    def test_snapped_decisions_round_trip(self, value, r):
        """Values already inside the box are never altered."""
        cfg = BatteryConfig(0.0, 40.0, 0.0, 10.0, 10.0)
        dec = make_decision(max(value, 0.0), min(r, cfg.recharge_max), 0.0, 0.0, cfg)
        assert 0.0 <= dec.recharge <= cfg.recharge_max
        assert dec.grid_power >= 0.0

    @given(eps=st.floats(0.0, TOL, allow_nan=False))
    @settings(max_examples=100, deadline=None)
    def test_boundary_dust_absorbed(self, eps):
        cfg = BatteryConfig(0.0, 40.0, 0.0, 10.0, 10.0)
        dec = make_decision(1.0, -eps, 10.0 + eps, 0.0, cfg)
        assert dec.recharge == 0.0
        assert dec.discharge == 10.0


class TestPriceModelScan:
    @given(
        a=st.floats(0.1, 5.0, allow_nan=False),
        b=st.floats(0.01, 1.0, allow_nan=False),
    )
    @settings(max_examples=50, deadline=None)
    def test_linear_models_always_verify(self, a, b):
        cm = ConvexPriceModel(lambda s, p: a + b * p, p_peak=6.0, dfn=lambda s, p: b)
        assert verify_max_marginal_price(cm) == []
        grid = np.linspace(0.0, cm.p_peak, 50)
        vals = grid * (a + b * grid - cm.max_marginal_price)
        assert np.all(np.diff(vals) <= 1e-9)
