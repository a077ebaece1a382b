"""Multi-factor lognormal forward curve engine for energy markets.

The pipeline: quoted swaps -> arbitrage-free monthly curves -> rolling
relative-tenor panels -> PCA factor calibration -> exact Monte Carlo of
forwards, swaps and spot -> contract pricing (European, virtual power
plant, swing, gas storage).
"""

from .calibration import (
    CovarianceEstimate,
    FactorModel,
    PcaResult,
    build_sigma_star,
    correlation_surface,
    estimate_covariance,
    full_sigma,
    pca,
    select_factors,
)
from .curve import (
    BootstrapReport,
    StepwiseCurve,
    bootstrap_monthly_curve,
    extract_fixed_delivery,
    read_curve_csv,
    verify_no_arbitrage,
    write_curve_csv,
)
from .errors import (
    CalibrationError,
    HjmkitError,
    InfeasibleCurveError,
    PricingError,
    SimulationError,
    ValidationError,
)
from .marketdata import (
    DistributionMoments,
    LogReturnMatrix,
    QuotedSwap,
    RelativePanel,
    acf,
    build_relative_panel,
    combine_log_returns,
    default_tenor_labels,
    filter_outliers,
    log_returns,
    normality_diagnostics,
    parse_quotes,
    parse_tenor,
    tenor_months,
    write_panel_csv,
)
from .pricing import (
    ContinuationFit,
    LsmcSettings,
    PolicyValuation,
    StorageContract,
    StorageValuation,
    SwingContract,
    SwingValuation,
    VppContract,
    VppValuation,
    american_option,
    black_price,
    call_payoff,
    lsmc_continuation,
    mc_european,
    price_storage,
    price_swing,
    price_vpp,
    put_payoff,
)
from .simulation import (
    ContractDescriptor,
    ExponentialVol,
    PathSet,
    SanityReport,
    SimConfig,
    bucket_occupancy,
    normals,
    path_log_returns,
    require_sane,
    sanity_check,
    simulate_fixed_delivery,
    simulate_short_horizon,
    simulate_spot,
    simulate_swap,
    theoretical_log_variance,
    write_paths_csv,
    write_summary_csv,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "ContinuationFit",
    "ContractDescriptor",
    "CovarianceEstimate",
    "DistributionMoments",
    "ExponentialVol",
    "FactorModel",
    "HjmkitError",
    "InfeasibleCurveError",
    "LogReturnMatrix",
    "LsmcSettings",
    "PathSet",
    "PcaResult",
    "PolicyValuation",
    "PricingError",
    "QuotedSwap",
    "RelativePanel",
    "SanityReport",
    "SimConfig",
    "SimulationError",
    "StepwiseCurve",
    "StorageContract",
    "StorageValuation",
    "SwingContract",
    "SwingValuation",
    "ValidationError",
    "VppContract",
    "VppValuation",
    "acf",
    "american_option",
    "black_price",
    "bootstrap_monthly_curve",
    "bucket_occupancy",
    "build_relative_panel",
    "build_sigma_star",
    "call_payoff",
    "combine_log_returns",
    "correlation_surface",
    "default_tenor_labels",
    "estimate_covariance",
    "extract_fixed_delivery",
    "filter_outliers",
    "full_sigma",
    "log_returns",
    "lsmc_continuation",
    "mc_european",
    "normality_diagnostics",
    "normals",
    "parse_quotes",
    "parse_tenor",
    "path_log_returns",
    "pca",
    "price_storage",
    "price_swing",
    "price_vpp",
    "put_payoff",
    "read_curve_csv",
    "require_sane",
    "sanity_check",
    "select_factors",
    "simulate_fixed_delivery",
    "simulate_short_horizon",
    "simulate_spot",
    "simulate_swap",
    "tenor_months",
    "theoretical_log_variance",
    "verify_no_arbitrage",
    "write_curve_csv",
    "write_panel_csv",
    "write_paths_csv",
    "write_summary_csv",
    "BootstrapReport",
]
