"""Electricity-cost control for data centers: battery arbitrage and
delay-tolerant workload deferral under time-varying prices."""

from .baselines import (
    GridOnlyPolicy,
    ThresholdPolicy,
    deferral_only_controller,
    offline_oracle,
)
from .battery_ctrl import BatteryController, max_cost_weight
from .deferral_ctrl import DeferralController, delay_bound, max_cost_weight_ext
from .harness import (
    Experiment,
    SimulationResult,
    build_experiment,
    compare_schemes,
    load_config,
    make_policy,
    run_experiment,
    simulate,
    sweep,
)
from .model import (
    TOL,
    BatteryConfig,
    BatteryState,
    ConfigError,
    ControlDecision,
    ConvexPriceModel,
    CostModel,
    DegenerateCostError,
    FlatPriceModel,
    GenericPriceModel,
    InfeasibleDecisionError,
    MetricsAccumulator,
    RunSummary,
    SlotRecord,
    WorkloadLimits,
    WorkloadSample,
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
    ingest_price_csv,
)
from .verify import (
    RecordChecker,
    SuiteResult,
    check_frozen_examples,
    run_random_invariant_suite,
)

__version__ = "0.1.0"

__all__ = [
    "BatteryConfig",
    "BatteryController",
    "BatteryState",
    "ConfigError",
    "ControlDecision",
    "ConvexPriceModel",
    "CostModel",
    "DAILY_PRICE_PROFILE",
    "DAILY_WORKLOAD_PROFILE",
    "DeferralController",
    "DegenerateCostError",
    "Experiment",
    "FlatPriceModel",
    "GenericPriceModel",
    "GridOnlyPolicy",
    "InfeasibleDecisionError",
    "MetricsAccumulator",
    "RecordChecker",
    "RunSummary",
    "SimulationResult",
    "SlotRecord",
    "SuiteResult",
    "ThresholdPolicy",
    "TOL",
    "Trace",
    "WorkloadLimits",
    "WorkloadSample",
    "apply_daily_price_profile",
    "build_experiment",
    "check_frozen_examples",
    "compare_schemes",
    "deferral_only_controller",
    "delay_bound",
    "gen_daily_periodic",
    "gen_frame_periodic",
    "gen_iid_uniform",
    "ingest_price_csv",
    "load_config",
    "make_policy",
    "max_cost_weight",
    "max_cost_weight_ext",
    "offline_oracle",
    "run_experiment",
    "run_random_invariant_suite",
    "simulate",
    "sweep",
    "time_average_metrics",
]
