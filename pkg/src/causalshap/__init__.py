"""Structural causal models and causal-context Shapley attribution."""
from .attribution import (AttributionResult, ImportancePair, Mode, backdoor_importance,
                          cc_shapley_values, importance_do, importance_do_with_shortcuts,
                          importance_obs, sap_check, shapley_values, shapley_weight)
from .data import Dataset
from .estimators import EstimatorSpec, fit
from .graph import CausalGraph, Path, WeightedGraph, d_separated
from .scm import NoiseSpec, Scm, intervene_atomic, intervene_stochastic, sample

__all__ = [
    "AttributionResult", "CausalGraph", "Dataset", "EstimatorSpec", "ImportancePair", "Mode",
    "NoiseSpec", "Path", "Scm", "WeightedGraph", "backdoor_importance", "cc_shapley_values",
    "d_separated", "fit", "importance_do", "importance_do_with_shortcuts", "importance_obs",
    "intervene_atomic", "intervene_stochastic", "sample", "sap_check", "shapley_values",
    "shapley_weight",
]
