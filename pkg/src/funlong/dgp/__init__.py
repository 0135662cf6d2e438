from funlong.core.data import Dataset
from funlong.dgp.config import (
    CtmcConfig,
    DgpConfig,
    DiffusionConfig,
    DiscreteRegularConfig,
    HazardSpec,
    MppConfig,
    StepSpec,
)
from funlong.dgp.ctmc import simulate_finite_state_ctmc
from funlong.dgp.diffusion import simulate_linear_gaussian_diffusion
from funlong.dgp.discrete import simulate_discrete_regular
from funlong.dgp.events import attach_death_and_censoring
from funlong.dgp.interventional import simulate_interventional, simulate_observational
from funlong.dgp.mpp import simulate_marked_point_process

__all__ = [
    "Dataset", "DgpConfig", "DiscreteRegularConfig", "DiffusionConfig", "CtmcConfig",
    "MppConfig", "StepSpec", "HazardSpec",
    "simulate_discrete_regular", "simulate_linear_gaussian_diffusion",
    "simulate_finite_state_ctmc", "simulate_marked_point_process",
    "attach_death_and_censoring", "simulate_interventional", "simulate_observational",
]
