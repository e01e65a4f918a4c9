"""Chance-constrained STL input synthesis with Wasserstein robustness."""

from ._core import (
    DimensionError,
    ParseError,
    Scenario,
    ScenarioError,
    check,
    h_gaussian,
    h_gaussian_inverse,
    l2_bound,
    load_scenario,
    radius_from_confidence,
    satisfaction_rate,
    scenario_from_json,
    solve,
    spectral_norm,
    wasserstein_1,
)

__all__ = [
    "DimensionError",
    "ParseError",
    "Scenario",
    "ScenarioError",
    "check",
    "h_gaussian",
    "h_gaussian_inverse",
    "l2_bound",
    "load_scenario",
    "radius_from_confidence",
    "satisfaction_rate",
    "scenario_from_json",
    "solve",
    "spectral_norm",
    "wasserstein_1",
]
