"""Canonical, named instances used across tests, studies and the CLI.

``two_visit_feedback`` is the workhorse finite instance: two real treatment
decisions with treatment-confounder feedback, 16 positive-probability paths,
everything exactly enumerable.  The rest cover the remaining process kinds
at desk scale.
"""
from __future__ import annotations

import numpy as np

from funlong.core.regimes import (
    DiscreteRegime,
    GaussianRegime,
    PointMassRegime,
    Regime,
    bernoulli_regime,
)
from funlong.dgp.config import (
    CtmcConfig,
    DiffusionConfig,
    DiscreteRegularConfig,
    HazardSpec,
    MppConfig,
    StepSpec,
)


def two_visit_feedback() -> DiscreteRegularConfig:
    """Two-visit binary design on the grid {0, 1, 2}.

    Index 0 is a null treatment slot (point mass at 0) so the first real
    treatment decision, at index 1, can condition on the baseline
    confounder; the terminal confounder carries, making the outcome the
    index-1 confounder read at the end of the grid.
    """
    return DiscreteRegularConfig(
        n_steps=2,
        treatment=(
            StepSpec(kind="point", value=0.0),
            StepSpec(coefs={"intercept": 0.3, "l_prev": 0.4}),
            StepSpec(coefs={"intercept": 0.2, "a_prev": 0.3, "l_prev": 0.3}),
        ),
        confounder=(
            StepSpec(coefs={"intercept": 0.5}),
            StepSpec(coefs={"intercept": 0.2, "a": 0.5, "l_prev": 0.2}),
            StepSpec(kind="carry"),
        ),
    )


def two_visit_always_treat() -> PointMassRegime:
    return PointMassRegime((0.0, 1.0, 1.0))


def two_visit_never_treat() -> PointMassRegime:
    return PointMassRegime((0.0, 0.0, 0.0))


def two_visit_null_effect() -> DiscreteRegularConfig:
    """Same propensities, but the outcome path is exogenous noise: there is
    nothing to confound, so even doubly-wrong nuisances stay unbiased."""
    return DiscreteRegularConfig(
        n_steps=2,
        treatment=(
            StepSpec(kind="point", value=0.0),
            StepSpec(coefs={"intercept": 0.3, "l_prev": 0.4}),
            StepSpec(coefs={"intercept": 0.2, "a_prev": 0.3, "l_prev2": 0.3}),
        ),
        confounder=(
            StepSpec(coefs={"intercept": 0.5}),
            StepSpec(coefs={"intercept": 0.4}),
            StepSpec(kind="carry"),
        ),
    )


def coin_flip(n_steps: int = 2) -> DiscreteRegularConfig:
    """Everything fair: all propensities and transitions are 0.5."""
    half = StepSpec(coefs={"intercept": 0.5})
    return DiscreteRegularConfig(
        n_steps=n_steps,
        treatment=tuple(half for _ in range(n_steps + 1)),
        confounder=tuple(half for _ in range(n_steps + 1)),
    )


def coin_flip_regime(n_steps: int = 2) -> Regime:
    return bernoulli_regime(lambda j, a_hist: 0.5)


def logistic_design(n_steps: int = 3) -> DiscreteRegularConfig:
    """Logistic-link propensities; used for coefficient-recovery checks."""
    trt = StepSpec(coefs={"intercept": -0.4, "a_prev": 0.6, "l_prev": 0.8}, link="logit")
    conf = StepSpec(coefs={"intercept": 0.25, "a": 0.3, "l_prev": 0.25})
    first_trt = StepSpec(coefs={"intercept": -0.4}, link="logit")
    first_conf = StepSpec(coefs={"intercept": 0.5, "a": 0.2})
    return DiscreteRegularConfig(
        n_steps=n_steps,
        treatment=(first_trt,) + tuple(trt for _ in range(n_steps)),
        confounder=(first_conf,) + tuple(conf for _ in range(n_steps)),
    )


def survival_feedback(n_steps: int = 10, l_dependent_censoring: bool = True) -> DiscreteRegularConfig:
    """Ten-visit design with death and right censoring.

    The confounder raises both future treatment and the death hazard while
    treatment is protective, so naive analyses are confounded.  Censoring
    optionally tracks the confounder, which is the case an outcome-blind
    censoring model cannot absorb.
    """
    cens = ({"intercept": 0.004, "l_prev": 0.15} if l_dependent_censoring
            else {"intercept": 0.07})
    return DiscreteRegularConfig(
        n_steps=n_steps,
        treatment=(StepSpec(coefs={"intercept": 0.35}),)
        + tuple(StepSpec(coefs={"intercept": 0.25, "a_prev": 0.2, "l_prev": 0.4})
                for _ in range(n_steps)),
        confounder=(StepSpec(coefs={"intercept": 0.2, "a": -0.15, "l_prev": 0.6}),)
        + tuple(StepSpec(coefs={"intercept": 0.2, "a": -0.15, "l_prev": 0.6})
                for _ in range(n_steps)),
        death=HazardSpec({"intercept": 0.045, "a": -0.03, "l_prev": 0.15}),
        censoring=HazardSpec(cens),
    )


def small_censored(n_steps: int = 4) -> DiscreteRegularConfig:
    """Small enough for exact enumeration with events."""
    return DiscreteRegularConfig(
        n_steps=n_steps,
        treatment=(StepSpec(coefs={"intercept": 0.4}),)
        + tuple(StepSpec(coefs={"intercept": 0.3, "a_prev": 0.2, "l_prev": 0.3})
                for _ in range(n_steps)),
        confounder=(StepSpec(coefs={"intercept": 0.5}),)
        + tuple(StepSpec(coefs={"intercept": 0.3, "a": 0.25, "l_prev": 0.3})
                for _ in range(n_steps)),
        death=HazardSpec({"intercept": 0.1}),
        censoring=HazardSpec({"intercept": 0.05}),
    )


def always_treat(n_steps: int) -> PointMassRegime:
    return PointMassRegime(tuple(1.0 for _ in range(n_steps + 1)))


def mostly_treat(p: float = 0.75) -> Regime:
    """Stochastic regime: treat with a fixed high probability at every
    decision, keeping overlap healthy on long horizons."""
    return bernoulli_regime(lambda j, a_hist: p)


def diffusion_feedback() -> DiffusionConfig:
    """Confounded linear-Gaussian diffusion, treatment updated 65 times.

    The confounder loading on the treatment update is moderate relative to
    the update noise so that 65-fold weight products stay usable, while the
    strong treatment effect keeps misspecification biases visible.
    """
    return DiffusionConfig(
        tau=1.0, n_fine=512, update_every=8, store_every=8,
        l0_mean=0.4, l0_sd=0.3,
        alpha0=0.1, alpha_a=0.5, alpha_l=0.18, sigma_a=0.55,
        beta0=0.1, beta_a=0.9, beta_l=-0.8, sigma_l=0.3,
    )


def diffusion_null_effect() -> DiffusionConfig:
    cfg = diffusion_feedback()
    return DiffusionConfig(**{**cfg.__dict__, "beta_a": 0.0})


def constant_dose(level: float = 1.0) -> PointMassRegime:
    """Point mass at a fixed dose; only valid on discrete treatment spaces."""
    return PointMassRegime(lambda j, a_hist: np.full(a_hist.shape[0], level))


def diffusion_regime() -> GaussianRegime:
    """Raised dose rule matching the propensity's autoregression and scale,
    which keeps the density ratios well behaved over 65 updates."""
    return GaussianRegime(intercept=0.27, prev_coef=0.5, sd=0.55)


def ctmc_slow_feedback() -> CtmcConfig:
    """Rates tuned so the partition-indexed intervened measures converge
    visibly but fast along the K ladder."""
    return CtmcConfig(tau=1.0, n_fine=128, a_flip=(0.22, 0.3), l_flip=(0.4, 0.42),
                      a0_p1=0.3, l0_p1=0.4)


def ctmc_all_on_regime() -> PointMassRegime:
    return PointMassRegime(lambda j, a_hist: np.ones(a_hist.shape[0]))


def mpp_feedback_intensity() -> MppConfig:
    """Treatment jumps arrive faster while the confounder is high."""
    return MppConfig(tau=1.0, n_fine=256, a_rate0=0.5, a_rate_l=1.0,
                     l_rate0=1.0, l_rate_a=0.8, a_mark_kind="flip", a0=0.0, l0=0)


def mpp_gaussian_marks() -> MppConfig:
    """Constant visit intensity, confounder-driven dose marks."""
    return MppConfig(tau=1.0, n_fine=256, a_rate0=2.0, a_rate_l=0.0,
                     l_rate0=1.2, l_rate_a=1.0, a_mark_kind="gaussian",
                     a_mark_coefs=(0.2, 0.4, 0.6, 0.5), a0=0.0, l0=0)


def mpp_mark_regime() -> GaussianRegime:
    """Dose regime: same visit frequency, marks blind to the confounder."""
    return GaussianRegime(intercept=0.5, prev_coef=0.4, sd=0.5)


INSTANCES = {
    "two_visit_feedback": two_visit_feedback,
    "two_visit_null_effect": two_visit_null_effect,
    "coin_flip": coin_flip,
    "logistic_design": logistic_design,
    "survival_feedback": survival_feedback,
    "small_censored": small_censored,
    "diffusion_feedback": diffusion_feedback,
    "diffusion_null_effect": diffusion_null_effect,
    "ctmc_slow_feedback": ctmc_slow_feedback,
    "mpp_feedback_intensity": mpp_feedback_intensity,
    "mpp_gaussian_marks": mpp_gaussian_marks,
}
