"""Projection-pursuit Bayesian regression for symmetric matrix predictors."""

from .backfitter import initialize, predict, run_chain
from .data_model import (
    Chain,
    ComponentState,
    Dataset,
    Direction,
    FitConfig,
    ModelState,
    RidgeFunction,
    SSLHyper,
    SymMatrix,
    UniformPrior,
    check_identifiability,
    frobenius_index,
)
from .evaluation import acs, align, mspe, waic
from .simulation import ScenarioSpec, gen_scenario
from .streams import stream

__all__ = [
    "Chain",
    "ComponentState",
    "Dataset",
    "Direction",
    "FitConfig",
    "ModelState",
    "RidgeFunction",
    "SSLHyper",
    "ScenarioSpec",
    "SymMatrix",
    "UniformPrior",
    "acs",
    "align",
    "check_identifiability",
    "frobenius_index",
    "gen_scenario",
    "initialize",
    "mspe",
    "predict",
    "run_chain",
    "stream",
    "waic",
]

__version__ = "0.1.0"
