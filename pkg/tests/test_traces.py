"""Trace generators, CSV round-trips, and hourly price-feed ingestion."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from battdr.model import ConfigError, WorkloadLimits
from battdr.traces import (
    DAILY_PRICE_PROFILE,
    DAILY_WORKLOAD_PROFILE,
    PRICE_HEADER,
    TRACE_HEADER,
    Trace,
    apply_daily_price_profile,
    emit_price_csv,
    gen_daily_periodic,
    gen_frame_periodic,
    gen_iid_uniform,
    ingest_price_csv,
)


class TestTrace:
    def test_rejects_empty_and_mismatched(self):
        with pytest.raises(ConfigError):
            Trace(np.array([]), np.array([]), np.array([]), np.array([]))
        with pytest.raises(ConfigError):
            Trace(np.ones(3), np.ones(2), np.ones(3), np.ones(3))

    def test_rejects_negative_columns(self):
        with pytest.raises(ConfigError):
            Trace(np.array([-1.0]), np.ones(1), np.ones(1), np.ones(1))

    def test_observed_limits_and_check(self):
        tr = Trace(np.array([1.0, 2.0]), np.array([3.0, 1.0]),
                   np.ones(2), np.ones(2))
        lim = tr.observed_limits()
        assert lim.total_max == 4.0
        assert lim.flex_max == 2.0
        assert lim.firm_max == 3.0
        tr.check(lim)
        with pytest.raises(ConfigError):
            tr.check(WorkloadLimits(total_max=3.5, flex_max=2.0, firm_max=3.0))

    def test_csv_round_trip_exact(self, tmp_path):
        tr = gen_iid_uniform((0.1, 1.5), (2.0, 6.0), 50, seed=3,
                             flex_fraction=0.4, slot_minutes=5.0)
        path = tmp_path / "trace.csv"
        tr.to_csv(path)
        back = Trace.from_csv(path, slot_minutes=5.0)
        assert np.array_equal(back.flex, tr.flex)
        assert np.array_equal(back.firm, tr.firm)
        assert np.array_equal(back.price, tr.price)
        assert back.slot_minutes == 5.0

    def test_from_csv_rejects_bad_header_and_order(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("wrong,header\n")
        with pytest.raises(ConfigError):
            Trace.from_csv(path)
        path.write_text(TRACE_HEADER + "\n1,0.0,1.0,2.0,2.0\n")
        with pytest.raises(ConfigError):
            Trace.from_csv(path)


class TestFramePeriodic:
    def test_pattern(self):
        tr = gen_frame_periodic(5, (10.0, 15.0, 20.0), (2.0, 6.0, 10.0), 20)
        # frames of five slots; the first frame ends low, the second high
        want_w = [15, 15, 15, 15, 10, 15, 15, 15, 15, 20] * 2
        want_c = [6, 6, 6, 6, 2, 6, 6, 6, 6, 10] * 2
        assert tr.firm.tolist() == want_w
        assert tr.price.tolist() == want_c
        assert np.all(tr.flex == 0.0)
        assert np.array_equal(tr.aux_state, tr.price)

    def test_validation(self):
        with pytest.raises(ConfigError):
            gen_frame_periodic(1, (1.0, 2.0, 3.0), (1.0, 2.0, 3.0), 10)
        with pytest.raises(ConfigError):
            gen_frame_periodic(5, (1.0, 2.0, 3.0), (1.0, 2.0, 3.0), 0)


class TestIidUniform:
    def test_reproducible_and_bounded(self):
        a = gen_iid_uniform((10.0, 90.0), (2.0, 6.0, 10.0), 500, seed=7)
        b = gen_iid_uniform((10.0, 90.0), (2.0, 6.0, 10.0), 500, seed=7)
        c = gen_iid_uniform((10.0, 90.0), (2.0, 6.0, 10.0), 500, seed=8)
        assert np.array_equal(a.total, b.total)
        assert not np.array_equal(a.total, c.total)
        assert np.all((a.total >= 10.0) & (a.total <= 90.0))
        assert set(np.unique(a.price)) <= {2.0, 6.0, 10.0}

    def test_flex_split(self):
        tr = gen_iid_uniform((1.0, 2.0), (5.0, 9.0), 100, seed=0, flex_fraction=0.25)
        assert np.allclose(tr.flex, 0.25 * (tr.flex + tr.firm))

    def test_validation(self):
        with pytest.raises(ConfigError):
            gen_iid_uniform((5.0, 1.0), (2.0,), 10, seed=0)
        with pytest.raises(ConfigError):
            gen_iid_uniform((1.0, 5.0), (), 10, seed=0)
        with pytest.raises(ConfigError):
            gen_iid_uniform((1.0, 5.0), (2.0,), 10, seed=0, flex_fraction=1.5)


class TestDailyPeriodic:
    def test_tiling(self):
        tr = gen_daily_periodic(DAILY_WORKLOAD_PROFILE, DAILY_PRICE_PROFILE,
                                slot_minutes=5.0, n_days=2)
        assert len(tr) == 2 * 24 * 12
        # each hourly value held for 12 five-minute slots
        assert np.all(tr.firm[:12] == DAILY_WORKLOAD_PROFILE[0])
        assert np.all(tr.price[12:24] == DAILY_PRICE_PROFILE[1])
        # day two repeats day one
        assert np.array_equal(tr.firm[: 24 * 12], tr.firm[24 * 12 :])

    def test_profiles_shape(self):
        assert len(DAILY_WORKLOAD_PROFILE) == 24
        assert len(DAILY_PRICE_PROFILE) == 24
        assert max(DAILY_PRICE_PROFILE) == 100.0
        assert min(DAILY_PRICE_PROFILE) == 50.0

    def test_validation(self):
        with pytest.raises(ConfigError):
            gen_daily_periodic((1.0,) * 23, DAILY_PRICE_PROFILE, 5.0, 1)
        with pytest.raises(ConfigError):
            gen_daily_periodic(DAILY_WORKLOAD_PROFILE, DAILY_PRICE_PROFILE, 7.0, 1)

    def test_apply_price_profile_keeps_workload(self):
        tr = gen_iid_uniform((0.1, 1.5), (1.0,), 300, seed=1, slot_minutes=5.0)
        out = apply_daily_price_profile(tr, DAILY_PRICE_PROFILE)
        assert np.array_equal(out.firm, tr.firm)
        assert np.array_equal(out.flex, tr.flex)
        assert np.all(out.price[:12] == DAILY_PRICE_PROFILE[0])
        assert len(out) == len(tr)


PRICE_LINES = [
    PRICE_HEADER,
    "2020-01-01T00:00:00,30.0",
    "2020-01-01T01:00:00,45.5",
    "2020-01-01T02:00:00,60",
]


class TestPriceFeed:
    def test_ingest_converts_to_per_slot(self, tmp_path):
        path = tmp_path / "prices.csv"
        path.write_text("\n".join(PRICE_LINES) + "\n")
        rows, per_slot = ingest_price_csv(path, slot_minutes=15.0)
        assert len(rows) == 3
        # 30 dollars/MWh over 15-minute slots is 7.5 dollars per MW-slot
        assert per_slot[0] == pytest.approx(7.5)
        assert len(per_slot) == 3 * 4
        assert np.all(per_slot[:4] == per_slot[0])

    def test_emit_round_trip_bit_exact(self, tmp_path):
        src = tmp_path / "prices.csv"
        text = "\n".join(PRICE_LINES) + "\n"
        src.write_text(text)
        rows, _ = ingest_price_csv(src)
        dst = tmp_path / "out.csv"
        emit_price_csv(rows, dst)
        assert dst.read_text() == text

    @pytest.mark.parametrize(
        "lines",
        [
            ["bad,header", "2020-01-01T00:00:00,30.0"],
            [PRICE_HEADER, "2020-01-01T00:30:00,30.0"],       # not on the hour
            [PRICE_HEADER, "2020-01-01T00:00:00,30.0",
             "2020-01-01T02:00:00,30.0"],                      # missing hour
            [PRICE_HEADER, "2020-01-01T00:00:00,-3.0"],        # negative price
            [PRICE_HEADER, "2020-01-01T00:00:00,abc"],
            [PRICE_HEADER],                                    # no data rows
        ],
    )
    def test_ingest_rejects_malformed_feeds(self, tmp_path, lines):
        path = tmp_path / "prices.csv"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(ConfigError):
            ingest_price_csv(path)


class TestGeneratorProperties:
    @given(
        seed=st.integers(0, 2**31),
        n=st.integers(1, 200),
        frac=st.floats(0.0, 1.0, allow_nan=False),
    )
    @settings(max_examples=60, deadline=None)
    def test_iid_split_conserves_total(self, seed, n, frac):
        tr = gen_iid_uniform((0.5, 2.5), (1.0, 3.0), n, seed=seed, flex_fraction=frac)
        assert np.all(tr.total >= 0.5 - 1e-12)
        assert np.all(tr.total <= 2.5 + 1e-12)
        assert np.allclose(tr.flex + tr.firm, tr.total)

    @given(n_days=st.integers(1, 5), per=st.sampled_from([5.0, 15.0, 30.0, 60.0]))
    @settings(max_examples=30, deadline=None)
    def test_daily_period_is_exact(self, n_days, per):
        tr = gen_daily_periodic(DAILY_WORKLOAD_PROFILE, DAILY_PRICE_PROFILE, per, n_days)
        day = int(24 * 60 / per)
        assert len(tr) == n_days * day
        for k in range(1, n_days):
            assert np.array_equal(tr.price[:day], tr.price[k * day : (k + 1) * day])
