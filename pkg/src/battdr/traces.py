"""Workload and price trace generation, ingestion, and serialization.

A trace is a finite sequence of slots, each carrying an arriving workload
sample (flexible and firm parts), an auxiliary pricing state, and a flat
unit price for that slot.  For flat-price runs the auxiliary state is the
price itself; cost models that depend on the draw consume the auxiliary
state and ignore the price column.

All energy values are MW-slot units and prices are dollars per MW-slot.
Slot duration in minutes is carried as metadata and used only for
per-hour reporting and for converting hourly price feeds.

CSV formats
-----------
Trace files:   header ``slot,w1,w2,aux_state,price_per_mw_slot``.
Price feeds:   header ``timestamp,price_per_mwh`` with ISO-8601 hourly
timestamps, strictly increasing, no gaps.  Prices are converted from
dollars per MWh to dollars per MW-slot by ``slot_minutes / 60``.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timedelta

import numpy as np

from .model import ConfigError, WorkloadLimits, WorkloadSample

TRACE_HEADER = "slot,w1,w2,aux_state,price_per_mw_slot"
PRICE_HEADER = "timestamp,price_per_mwh"

# Stand-in hourly shapes with a pronounced day/night spread, used by the
# bundled experiment configs.  The price profile is a stylized two-level
# time-of-use tariff: off-peak 50 $/MW-slot (hours 0-7 and 22-23), peak
# 100 $/MW-slot (hours 8-21).  The workload profile peaks in business
# hours.
DAILY_PRICE_PROFILE = (
    50.0, 50.0, 50.0, 50.0, 50.0, 50.0,
    50.0, 50.0, 100.0, 100.0, 100.0, 100.0,
    100.0, 100.0, 100.0, 100.0, 100.0, 100.0,
    100.0, 100.0, 100.0, 100.0, 50.0, 50.0,
)
DAILY_WORKLOAD_PROFILE = (
    0.50, 0.45, 0.40, 0.40, 0.40, 0.45,
    0.55, 0.70, 0.90, 1.05, 1.15, 1.25,
    1.30, 1.35, 1.30, 1.25, 1.20, 1.15,
    1.10, 1.00, 0.90, 0.75, 0.65, 0.55,
)


@dataclass(slots=True)
class Trace:
    """Parallel per-slot arrays plus slot-duration metadata."""

    flex: np.ndarray
    firm: np.ndarray
    aux_state: np.ndarray
    price: np.ndarray
    slot_minutes: float = 60.0

    def __post_init__(self) -> None:
        n = len(self.flex)
        if n == 0:
            raise ConfigError("empty trace")
        if not (len(self.firm) == len(self.aux_state) == len(self.price) == n):
            raise ConfigError("trace columns have mismatched lengths")
        if self.slot_minutes <= 0:
            raise ConfigError("slot_minutes must be positive")
        for name, col in (("flex", self.flex), ("firm", self.firm),
                          ("price", self.price)):
            if np.any(col < 0):
                raise ConfigError(f"negative {name} value in trace")

    def __len__(self) -> int:
        return len(self.flex)

    def sample(self, i: int) -> WorkloadSample:
        return WorkloadSample(float(self.flex[i]), float(self.firm[i]))

    @property
    def total(self) -> np.ndarray:
        return self.flex + self.firm

    def distinct_prices(self) -> tuple[float, ...]:
        return tuple(sorted(set(float(c) for c in self.price)))

    def observed_limits(self) -> WorkloadLimits:
        """Workload limits read off the trace itself (tight bounds)."""
        return WorkloadLimits(
            total_max=float(np.max(self.flex + self.firm)),
            flex_max=float(np.max(self.flex)),
            firm_max=float(np.max(self.firm)),
        )

    def check(self, limits: WorkloadLimits) -> None:
        obs = self.observed_limits()
        if obs.total_max > limits.total_max + 1e-9:
            raise ConfigError(
                f"trace total workload {obs.total_max} exceeds limit "
                f"{limits.total_max}"
            )
        if obs.flex_max > limits.flex_max + 1e-9:
            raise ConfigError(
                f"trace flexible workload {obs.flex_max} exceeds limit "
                f"{limits.flex_max}"
            )
        if obs.firm_max > limits.firm_max + 1e-9:
            raise ConfigError(
                f"trace firm workload {obs.firm_max} exceeds limit "
                f"{limits.firm_max}"
            )

    # -- serialization ------------------------------------------------------

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(TRACE_HEADER + "\n")
            for i in range(len(self)):
                fh.write(
                    f"{i},{float(self.flex[i])!r},{float(self.firm[i])!r},"
                    f"{float(self.aux_state[i])!r},{float(self.price[i])!r}\n"
                )

    @staticmethod
    def from_csv(path, slot_minutes: float = 60.0) -> "Trace":
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
        if not lines or lines[0].strip() != TRACE_HEADER:
            raise ConfigError(
                f"trace file {path}: expected header '{TRACE_HEADER}'"
            )
        flex, firm, aux, price = [], [], [], []
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise ConfigError(f"trace file {path} line {lineno}: "
                                  f"expected 5 fields, got {len(parts)}")
            try:
                slot = int(parts[0])
                vals = [float(x) for x in parts[1:]]
            except ValueError as exc:
                raise ConfigError(
                    f"trace file {path} line {lineno}: {exc}"
                ) from None
            if slot != len(flex):
                raise ConfigError(
                    f"trace file {path} line {lineno}: slot index {slot} out "
                    f"of order (expected {len(flex)})"
                )
            flex.append(vals[0])
            firm.append(vals[1])
            aux.append(vals[2])
            price.append(vals[3])
        return Trace(
            np.array(flex), np.array(firm), np.array(aux), np.array(price),
            slot_minutes=slot_minutes,
        )


# ---------------------------------------------------------------------------
# generators


def gen_frame_periodic(
    frame_len: int,
    w_levels: tuple[float, float, float],
    c_levels: tuple[float, float, float],
    n_slots: int,
    slot_minutes: float = 60.0,
) -> Trace:
    """Deterministic two-frame cycle: frames of ``frame_len`` slots where
    odd-numbered frames (the first frame is number 1) run at the middle
    workload level and end with one low slot, and even-numbered frames end
    with one high slot.  The price level tracks the workload level, so
    every window of ``2 * frame_len`` slots has exactly one cheap slot and
    one expensive slot.  All work is firm.
    """
    if frame_len < 2:
        raise ConfigError("frame_len must be at least 2")
    if n_slots <= 0:
        raise ConfigError("n_slots must be positive")
    w_low, w_mid, w_high = w_levels
    c_low, c_mid, c_high = c_levels
    w = np.full(n_slots, w_mid)
    c = np.full(n_slots, c_mid)
    for t in range(n_slots):
        frame_no = t // frame_len + 1
        if (t + 1) % frame_len == 0:
            if frame_no % 2 == 1:
                w[t], c[t] = w_low, c_low
            else:
                w[t], c[t] = w_high, c_high
    zeros = np.zeros(n_slots)
    return Trace(zeros, w, c.copy(), c, slot_minutes=slot_minutes)


def gen_iid_uniform(
    w_range: tuple[float, float],
    c_set: tuple[float, ...],
    n_slots: int,
    seed: int,
    flex_fraction: float = 0.0,
    slot_minutes: float = 60.0,
) -> Trace:
    """Independent slots: workload uniform on ``w_range``, price drawn
    uniformly from the finite set ``c_set``.  ``flex_fraction`` of each
    arrival is flexible, the rest firm.  PCG64 generator, reproducible
    from the seed.
    """
    w_low, w_high = w_range
    if not 0 <= w_low <= w_high:
        raise ConfigError("invalid workload range")
    if not 0.0 <= flex_fraction <= 1.0:
        raise ConfigError("flex_fraction must lie in [0, 1]")
    if not c_set:
        raise ConfigError("empty price set")
    rng = np.random.Generator(np.random.PCG64(seed))
    w = rng.uniform(w_low, w_high, n_slots)
    c = rng.choice(np.asarray(c_set, dtype=float), n_slots)
    flex = w * flex_fraction
    firm = w - flex
    return Trace(flex, firm, c.copy(), c, slot_minutes=slot_minutes)


def gen_daily_periodic(
    w_profile: tuple[float, ...],
    c_profile: tuple[float, ...],
    slot_minutes: float,
    n_days: int,
    flex_fraction: float = 0.0,
) -> Trace:
    """Tile 24-entry hourly workload and price profiles over ``n_days``.

    Each hourly value is held constant across the slots of that hour, so
    ``slot_minutes`` must divide 60.
    """
    if len(w_profile) != 24 or len(c_profile) != 24:
        raise ConfigError("daily profiles need exactly 24 hourly entries")
    if n_days <= 0:
        raise ConfigError("n_days must be positive")
    per_hour = 60.0 / slot_minutes
    if abs(per_hour - round(per_hour)) > 1e-9:
        raise ConfigError("slot_minutes must divide 60")
    per_hour = int(round(per_hour))
    w = np.repeat(np.asarray(w_profile, dtype=float), per_hour)
    c = np.repeat(np.asarray(c_profile, dtype=float), per_hour)
    w = np.tile(w, n_days)
    c = np.tile(c, n_days)
    flex = w * flex_fraction
    firm = w - flex
    return Trace(flex, firm, c.copy(), c, slot_minutes=slot_minutes)


def apply_daily_price_profile(
    trace: Trace, c_profile: tuple[float, ...]
) -> Trace:
    """Replace a trace's prices with a tiled 24-hour profile, keeping the
    workload columns.  Used to pair random arrivals with a deterministic
    daily price shape."""
    if len(c_profile) != 24:
        raise ConfigError("daily price profile needs exactly 24 hourly entries")
    per_hour = 60.0 / trace.slot_minutes
    if abs(per_hour - round(per_hour)) > 1e-9:
        raise ConfigError("slot_minutes must divide 60")
    per_hour = int(round(per_hour))
    day = np.repeat(np.asarray(c_profile, dtype=float), per_hour)
    reps = int(np.ceil(len(trace) / len(day)))
    c = np.tile(day, reps)[: len(trace)]
    return Trace(
        trace.flex.copy(), trace.firm.copy(), c.copy(), c,
        slot_minutes=trace.slot_minutes,
    )


# ---------------------------------------------------------------------------
# hourly price feeds


@dataclass(frozen=True, slots=True)
class PriceRow:
    """One parsed feed row; raw text is kept so re-emission is bit-exact."""

    timestamp: str
    price_per_mwh: float
    raw_price: str


def ingest_price_csv(path, slot_minutes: float = 60.0) -> tuple[list[PriceRow], np.ndarray]:
    """Parse an hourly price feed and expand it to per-slot prices.

    Returns the parsed rows (for round-tripping) and a per-slot price
    array in dollars per MW-slot: each hourly price is scaled by
    ``slot_minutes / 60`` and repeated over the slots of its hour.
    """
    per_hour = 60.0 / slot_minutes
    if abs(per_hour - round(per_hour)) > 1e-9:
        raise ConfigError("slot_minutes must divide 60")
    per_hour = int(round(per_hour))

    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != PRICE_HEADER:
        raise ConfigError(f"price file {path}: expected header '{PRICE_HEADER}'")

    rows: list[PriceRow] = []
    prev_dt: datetime | None = None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 2:
            raise ConfigError(
                f"price file {path} line {lineno}: expected 2 fields, "
                f"got {len(parts)}"
            )
        ts_text, price_text = parts
        try:
            dt = datetime.fromisoformat(ts_text)
        except ValueError:
            raise ConfigError(
                f"price file {path} line {lineno}: bad timestamp '{ts_text}'"
            ) from None
        if dt.minute or dt.second or dt.microsecond:
            raise ConfigError(
                f"price file {path} line {lineno}: timestamp '{ts_text}' is "
                "not on an hour boundary"
            )
        try:
            price = float(price_text)
        except ValueError:
            raise ConfigError(
                f"price file {path} line {lineno}: bad price '{price_text}'"
            ) from None
        if price < 0:
            raise ConfigError(
                f"price file {path} line {lineno}: negative price {price}"
            )
        if prev_dt is not None:
            gap = dt - prev_dt
            if gap <= timedelta(0):
                raise ConfigError(
                    f"price file {path} line {lineno}: timestamps not "
                    "strictly increasing"
                )
            if gap != timedelta(hours=1):
                raise ConfigError(
                    f"price file {path} line {lineno}: missing hour before "
                    f"'{ts_text}'"
                )
        prev_dt = dt
        rows.append(PriceRow(ts_text, price, price_text))
    if not rows:
        raise ConfigError(f"price file {path}: no data rows")

    scale = slot_minutes / 60.0
    per_slot = np.repeat(
        np.array([r.price_per_mwh for r in rows]) * scale, per_hour
    )
    return rows, per_slot


def emit_price_csv(rows: list[PriceRow], path) -> None:
    """Write rows back in feed format; inverse of ingest for valid files."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(PRICE_HEADER + "\n")
        for r in rows:
            fh.write(f"{r.timestamp},{r.raw_price}\n")
