"""HIV viral dynamics with time-varying drug efficacy and a hierarchical Bayesian fit."""

from .efficacy import AdherenceProfile, DrugInputs, EfficacyInputs, IC50Profile, gamma_at
from .inference import (
    ChainOutput,
    Hyperpriors,
    MCMCConfig,
    PopulationState,
    SubjectState,
    run_chain,
    summarize,
)
from .ode import (
    DynamicParams,
    IntegratorConfig,
    OriginalParams,
    State,
    efficacy_threshold,
    half_life,
    integrate,
    predict_log10_viral_load,
)
from .records import Baselines, SubjectRecord

__all__ = [
    "AdherenceProfile",
    "Baselines",
    "ChainOutput",
    "DrugInputs",
    "DynamicParams",
    "EfficacyInputs",
    "Hyperpriors",
    "IC50Profile",
    "IntegratorConfig",
    "MCMCConfig",
    "OriginalParams",
    "PopulationState",
    "State",
    "SubjectRecord",
    "SubjectState",
    "efficacy_threshold",
    "gamma_at",
    "half_life",
    "integrate",
    "predict_log10_viral_load",
    "run_chain",
    "summarize",
]
