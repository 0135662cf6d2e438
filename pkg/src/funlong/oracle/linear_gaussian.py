"""Closed-form mean propagation for the linear-Gaussian diffusion.

Every mechanism is affine with zero-mean noise, so interventional means of
linear functionals follow from iterating the deterministic skeleton.  This
is the independent oracle the Monte Carlo diffusion results are checked
against.
"""
from __future__ import annotations

import numpy as np

from funlong.core.errors import UnsupportedOperationError
from funlong.core.processes import NuisanceProcess
from funlong.core.regimes import GaussianRegime, Regime
from funlong.core.targets import TargetFunctional
from funlong.dgp.config import DiffusionConfig
from funlong.dgp.diffusion import block_mean_coefs


def _regime_mean(regime: Regime, j: int, prev_mean: float) -> float:
    if isinstance(regime, GaussianRegime):
        return regime.intercept if j == 0 else regime.intercept + regime.prev_coef * prev_mean
    raise UnsupportedOperationError(
        "closed form needs a Gaussian (or no) treatment rule; point masses are "
        "invalid on continuous treatments"
    )


def mean_paths(cfg: DiffusionConfig, regime: Regime | None) -> tuple[np.ndarray, np.ndarray]:
    """(E[A], E[L]) at every fine index under the regime (or observationally)."""
    m = cfg.n_fine
    h = cfg.h
    ea = np.empty(m + 1)
    el = np.empty(m + 1)
    a_mean, l_mean = 0.0, cfg.l0_mean
    upd = 0
    for i in range(m + 1):
        if i % cfg.update_every == 0:
            if regime is None:
                a_mean = cfg.alpha0 if upd == 0 else (
                    cfg.alpha0 + cfg.alpha_a * a_mean + cfg.alpha_l * l_mean
                )
            else:
                a_mean = _regime_mean(regime, upd, a_mean)
            upd += 1
        if i > 0:
            l_mean = l_mean + (cfg.beta0 + cfg.beta_a * a_mean + cfg.beta_l * l_mean) * h
        ea[i] = a_mean
        el[i] = l_mean
    return ea, el


def closed_form_linear_gaussian(cfg: DiffusionConfig, regime: Regime | None,
                                nu: TargetFunctional) -> float:
    """E_regime[nu] for nu linear in the terminal confounder."""
    if nu.label.startswith("const("):
        return float(nu.label[6:-1])
    if not nu.label.startswith("terminal_y"):
        raise UnsupportedOperationError(f"closed form needs a linear target, got {nu.label}")
    _, el = mean_paths(cfg, regime)
    return float(el[-1])


class DiffusionExactH(NuisanceProcess):
    """Exact g-computation process on the treatment-update grid.

    Affine in (a_j, a_{j-1}, l_{j-1}): within-block confounder means
    propagate affinely, treatment means follow the regime recursion, and
    the terminal confounder mean is the target value.
    """

    label = "H-like"
    quadratic_in_a = True

    def __init__(self, cfg: DiffusionConfig, regime: GaussianRegime):
        from funlong.dgp.diffusion import block_noise_var

        if not isinstance(regime, GaussianRegime):
            raise UnsupportedOperationError("exact diffusion H needs a Gaussian regime")
        self.cfg = cfg
        self.regime = regime
        self.k = cfg.n_fine // cfg.update_every
        self._blk = block_mean_coefs(cfg, cfg.update_every - 1)
        # observing a_j is informative about the pre-update confounder, so
        # conditioning tilts its mean by the usual Gaussian regression gain
        v_mid = block_noise_var(cfg, cfg.update_every - 1)
        self._gain = (cfg.alpha_l * v_mid
                      / (cfg.sigma_a ** 2 + cfg.alpha_l ** 2 * v_mid))
        # coefficient table: H_j = c[j,0] + c[j,1] a_j + c[j,2] a_prev + c[j,3] l_prev
        self.coefs = np.zeros((self.k + 1, 4))
        base = np.array([self._value(j, 0.0, 0.0, 0.0) for j in range(self.k + 1)])
        for col, probe in ((1, (1.0, 0.0, 0.0)), (2, (0.0, 1.0, 0.0)), (3, (0.0, 0.0, 1.0))):
            vals = np.array([self._value(j, *probe) for j in range(self.k + 1)])
            self.coefs[:, col] = vals - base
        self.coefs[:, 0] = base

    def _value(self, j: int, a_j: float, a_prev: float, l_prev: float) -> float:
        cfg = self.cfg
        h = cfg.h
        c0, ca, cl = self._blk
        if j == 0:
            ea, el = a_j, cfg.l0_mean
        else:
            l_mid = c0 + ca * a_prev + cl * l_prev
            prior_a = cfg.alpha0 + cfg.alpha_a * a_prev + cfg.alpha_l * l_mid
            l_mid = l_mid + self._gain * (a_j - prior_a)
            el = l_mid + (cfg.beta0 + cfg.beta_a * a_j + cfg.beta_l * l_mid) * h
            ea = a_j
        for _ in range(j + 1, self.k + 1):
            l_mid = c0 + ca * ea + cl * el
            # composing the next index's H under the regime keeps its
            # conditioning gain, evaluated at the regime mean instead of an
            # observational draw
            prior_a = cfg.alpha0 + cfg.alpha_a * ea + cfg.alpha_l * l_mid
            ea_new = self.regime.intercept + self.regime.prev_coef * ea
            l_mid = l_mid + self._gain * (ea_new - prior_a)
            el = l_mid + (cfg.beta0 + cfg.beta_a * ea_new + cfg.beta_l * l_mid) * h
            ea = ea_new
        return el

    def evaluate_batch(self, batch) -> np.ndarray:
        j = batch.j
        c = self.coefs[j]
        out = np.full(batch.n, c[0]) + c[1] * batch.a[:, j]
        if j >= 1:
            out = out + c[2] * batch.a[:, j - 1] + c[3] * batch.l[:, j - 1, 0]
        return out
