"""Shared fixtures: the deterministic frame-cycle setup used across suites."""

import json

import pytest

from battdr.model import BatteryConfig, FlatPriceModel
from battdr.traces import gen_frame_periodic

FRAME_LEN = 5
W_LEVELS = (10.0, 15.0, 20.0)
C_LEVELS = (2.0, 6.0, 10.0)


def frame_battery(charge_max: float) -> BatteryConfig:
    """The reference battery: 10-unit rate caps, 5-dollar operation fees."""
    return BatteryConfig(
        charge_min=0.0,
        charge_max=charge_max,
        charge_init=0.0,
        recharge_max=10.0,
        discharge_max=10.0,
        recharge_cost=5.0,
        discharge_cost=5.0,
    )


@pytest.fixture(scope="session")
def frame_trace():
    return gen_frame_periodic(FRAME_LEN, W_LEVELS, C_LEVELS, n_slots=1000)


@pytest.fixture(scope="session")
def frame_cm():
    return FlatPriceModel(C_LEVELS, p_peak=20.0)


@pytest.fixture
def write_config(tmp_path):
    """Write a config dict to a temp JSON file, returning its path."""

    def _write(d: dict, name: str = "config.json") -> str:
        path = tmp_path / name
        path.write_text(json.dumps(d), encoding="utf-8")
        return str(path)

    return _write


def frame_config(n_slots: int = 1000, charge_max: float = 100.0) -> dict:
    """Config-dict form of the frame-cycle experiment."""
    return {
        "slot_minutes": 60.0,
        "trace": {
            "kind": "frame_periodic",
            "frame_len": FRAME_LEN,
            "w_levels": list(W_LEVELS),
            "c_levels": list(C_LEVELS),
            "n_slots": n_slots,
        },
        "price_model": {"kind": "flat", "p_peak": 20.0},
        "battery": {
            "charge_min": 0.0,
            "charge_max": charge_max,
            "charge_init": 0.0,
            "recharge_max": 10.0,
            "discharge_max": 10.0,
            "recharge_cost": 5.0,
            "discharge_cost": 5.0,
        },
        "policy": {"kind": "battery", "v": "max"},
    }
