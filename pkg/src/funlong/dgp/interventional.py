"""Interventional simulation: same covariate, death and noise mechanisms,
treatment draws replaced by the regime, censoring forced off.

Because every simulator consumes its random streams in a fixed pattern,
running the same (config, n, seed) under two regimes couples the noise:
subjects keep their covariate and event innovations while treatments vary,
which realizes counterfactual paths consistently.
"""
from __future__ import annotations

from funlong.core.data import Dataset
from funlong.core.errors import UnsupportedOperationError
from funlong.core.regimes import Regime
from funlong.dgp.config import CtmcConfig, DiffusionConfig, DiscreteRegularConfig, DgpConfig, MppConfig
from funlong.dgp.ctmc import simulate_finite_state_ctmc
from funlong.dgp.diffusion import simulate_linear_gaussian_diffusion
from funlong.dgp.discrete import simulate_discrete_regular
from funlong.dgp.events import attach_death_and_censoring
from funlong.dgp.mpp import simulate_marked_point_process


def simulate_observational(cfg: DgpConfig, n: int, seed: int) -> Dataset:
    if isinstance(cfg, DiscreteRegularConfig):
        ds = simulate_discrete_regular(cfg, n, seed)
        if cfg.death is not None or cfg.censoring is not None:
            ds = attach_death_and_censoring(ds, cfg, seed)
        return ds
    if isinstance(cfg, DiffusionConfig):
        return simulate_linear_gaussian_diffusion(cfg, n, seed)
    if isinstance(cfg, CtmcConfig):
        return simulate_finite_state_ctmc(cfg, n, seed)
    if isinstance(cfg, MppConfig):
        return simulate_marked_point_process(cfg, n, seed)
    raise UnsupportedOperationError(f"unknown config type {type(cfg).__name__}")


def simulate_interventional(cfg: DgpConfig, regime: Regime, n: int, seed: int) -> Dataset:
    if isinstance(cfg, DiscreteRegularConfig):
        ds = simulate_discrete_regular(cfg, n, seed, regime=regime)
        if cfg.death is not None:
            ds = attach_death_and_censoring(ds, cfg, seed, censor=False)
        return ds
    if isinstance(cfg, DiffusionConfig):
        return simulate_linear_gaussian_diffusion(cfg, n, seed, regime=regime)
    if isinstance(cfg, CtmcConfig):
        return simulate_finite_state_ctmc(cfg, n, seed, regime=regime)
    if isinstance(cfg, MppConfig):
        return simulate_marked_point_process(cfg, n, seed, regime=regime)
    raise UnsupportedOperationError(f"unknown config type {type(cfg).__name__}")
