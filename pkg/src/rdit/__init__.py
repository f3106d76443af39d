"""Regression discontinuity in time for strike-level casualty data."""

from .breaks import BreakEstimate, chow_f_test, estimate_breaks
from .counterfactual import AvertedResult, donor_pool, projection_series, run_monte_carlo, vsl_scale
from .errors import (
    CheckFailure,
    ConfigError,
    EmptyCorpusError,
    EstimationError,
    IngestError,
    RditError,
)
from .localpoly import local_polynomial_fit, weighted_least_squares
from .rd import RdConfig, RdEstimate, estimate_rd, rd_bandwidth, rd_estimate, select_bandwidth_mserd
from .robustness import (
    DonutSpec,
    anova_by_exposure,
    autocorrelation_diagnostic,
    donut_rd,
    falsification_rd,
    one_way_anova,
    polynomial_sweep,
    rolling_rd,
)
from .strikes import (
    MonthlyPanel,
    StrikeRecord,
    SyntheticConfig,
    build_monthly_panel,
    generate_synthetic_corpus,
    parse_strike_csv,
    summary_table,
    write_strike_csv,
)

__version__ = "0.1.0"

__all__ = [
    "AvertedResult",
    "BreakEstimate",
    "CheckFailure",
    "ConfigError",
    "DonutSpec",
    "EmptyCorpusError",
    "EstimationError",
    "IngestError",
    "MonthlyPanel",
    "RdConfig",
    "RdEstimate",
    "RditError",
    "StrikeRecord",
    "SyntheticConfig",
    "anova_by_exposure",
    "autocorrelation_diagnostic",
    "build_monthly_panel",
    "chow_f_test",
    "donor_pool",
    "donut_rd",
    "estimate_breaks",
    "estimate_rd",
    "falsification_rd",
    "generate_synthetic_corpus",
    "local_polynomial_fit",
    "one_way_anova",
    "parse_strike_csv",
    "polynomial_sweep",
    "projection_series",
    "rd_bandwidth",
    "rd_estimate",
    "rolling_rd",
    "run_monte_carlo",
    "select_bandwidth_mserd",
    "summary_table",
    "vsl_scale",
    "weighted_least_squares",
    "write_strike_csv",
]
