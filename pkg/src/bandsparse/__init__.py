"""Sparse line-spectral estimation with integrated wideband dictionaries."""
from .costs import admm_cost, relative_complexity, zoom_budget
from .dictionary import (
    DPSS,
    NARROWBAND,
    WIDEBAND,
    BandGrid,
    Dictionary,
    DpssConfig,
    SamplingScheme,
    build_dictionary,
    inner_product_scan,
)
from .numerics import NumericsError
from .solve import (
    LassoConfig,
    SolveResult,
    SpiceConfig,
    estimate_amplitudes,
    lambda_heuristic,
    lambda_max,
    lasso_admm,
    soft_threshold,
    spice,
)
from .zoom import StageSpec, ZoomPlan, ZoomResult, band_ratio, recommend_bands, run_zoom

__version__ = "0.1.0"

__all__ = [
    "DPSS",
    "NARROWBAND",
    "WIDEBAND",
    "BandGrid",
    "Dictionary",
    "DpssConfig",
    "LassoConfig",
    "NumericsError",
    "SamplingScheme",
    "SolveResult",
    "SpiceConfig",
    "StageSpec",
    "ZoomPlan",
    "ZoomResult",
    "admm_cost",
    "band_ratio",
    "build_dictionary",
    "estimate_amplitudes",
    "inner_product_scan",
    "lambda_heuristic",
    "lambda_max",
    "lasso_admm",
    "recommend_bands",
    "relative_complexity",
    "run_zoom",
    "soft_threshold",
    "spice",
    "zoom_budget",
]
