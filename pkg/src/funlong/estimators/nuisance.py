"""Propensity and censoring-hazard models.

Every model evaluates on adapted batches: a propensity density at index j
sees the proposed treatment plus data strictly before it, a censoring
step-survival for interval (t_{j-1}, t_j] sees the index-j treatment and
data through t_{j-1}.  Models carry a ``mode`` so study reports can state
which nuisances were true, fitted, or deliberately misspecified.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from funlong.core.errors import DegenerateDesignError, InvalidArgumentError
from funlong.core.view import GBatch, PartitionView
from funlong.dgp.config import CtmcConfig, DiffusionConfig, DiscreteRegularConfig
from funlong.dgp.diffusion import block_mean_coefs, block_noise_var
from funlong.estimators.features import FeatureSpec, lagged_codes, lagged_design

_SEP_NORM = 30.0
_RIDGE_FALLBACK = 1e-6


class PropensityModel:
    mode: str = "true_oracle"
    flags: dict

    def density_batch(self, batch: GBatch) -> np.ndarray:
        """Density/pmf of batch.a[:, j] given the history below it.

        Rows whose event is already known by t_{j-1} carry no fresh draw
        and must return 1.
        """
        raise NotImplementedError

    def _frozen_ones(self, batch: GBatch, dens: np.ndarray) -> np.ndarray:
        frozen = batch.dead_prev | batch.cens_prev
        return np.where(frozen, 1.0, dens)


class DiscreteTruePropensity(PropensityModel):
    """Wraps the configuration's own treatment conditionals."""

    def __init__(self, cfg: DiscreteRegularConfig):
        self.cfg = cfg
        self.mode = "true_oracle"
        self.flags = {}

    def density_batch(self, batch: GBatch) -> np.ndarray:
        spec = self.cfg.treatment[batch.j]
        a_val = batch.a[:, batch.j]
        if spec.kind == "point":
            dens = (a_val == float(spec.value)).astype(float)
        elif spec.kind == "carry":
            dens = (a_val == batch.a[:, batch.j - 1]).astype(float)
        else:
            p1 = spec.prob_one(batch.j, batch.a, batch.l, include_current_a=False)
            dens = np.where(a_val == 1.0, p1, 1.0 - p1)
        return self._frozen_ones(batch, dens)


class CtmcGridPropensity(PropensityModel):
    """Exact grid-sampled treatment conditionals of the joint chain."""

    def __init__(self, cfg: CtmcConfig, k: int):
        from funlong.oracle.ctmc_exact import grid_initial, grid_propensity

        self.table = grid_propensity(cfg, k)
        self.pa0, _ = grid_initial(cfg)
        self.mode = "true_oracle"
        self.flags = {}

    def density_batch(self, batch: GBatch) -> np.ndarray:
        j = batch.j
        a_new = batch.a[:, j].astype(int)
        if j == 0:
            return self.pa0[a_new]
        a_prev = batch.a[:, j - 1].astype(int)
        l_prev = batch.l[:, j - 1, 0].astype(int)
        return self.table[a_prev, l_prev, a_new]


class DiffusionGridPropensity(PropensityModel):
    """Exact Gaussian update-grid propensity of the linear diffusion.

    At the update grid, the conditional of a(t_j) given grid history is
    Gaussian with mean affine in (a(t_{j-1}), l(t_{j-1})): the within-block
    confounder mean propagates affinely and its noise inflates the
    variance through the alpha_l loading.
    """

    def __init__(self, cfg: DiffusionConfig, partition_points) -> None:
        if tuple(partition_points) != cfg.update_grid_points:
            raise InvalidArgumentError(
                "exact diffusion propensity requires the treatment-update grid"
            )
        self.cfg = cfg
        m = cfg.update_every
        c0, ca, cl = block_mean_coefs(cfg, m - 1)
        self.mean_const = cfg.alpha0 + cfg.alpha_l * c0
        self.mean_aprev = cfg.alpha_a + cfg.alpha_l * ca
        self.mean_lprev = cfg.alpha_l * cl
        self.var = cfg.sigma_a ** 2 + cfg.alpha_l ** 2 * block_noise_var(cfg, m - 1)
        self.mode = "true_oracle"
        self.flags = {}

    def density_batch(self, batch: GBatch) -> np.ndarray:
        j = batch.j
        a_val = batch.a[:, j]
        if j == 0:
            mean = np.full(batch.n, self.cfg.alpha0)
            var = self.cfg.sigma_a ** 2
        else:
            mean = (self.mean_const + self.mean_aprev * batch.a[:, j - 1]
                    + self.mean_lprev * batch.l[:, j - 1, 0])
            var = self.var
        z2 = (a_val - mean) ** 2 / var
        return np.exp(-0.5 * z2) / math.sqrt(2.0 * math.pi * var)


def _logistic_irls(x: np.ndarray, y: np.ndarray, w: np.ndarray, ridge: float = 0.0,
                   max_iter: int = 60) -> tuple[np.ndarray, bool]:
    beta = np.zeros(x.shape[1])
    ok = True
    for _ in range(max_iter):
        eta = np.clip(x @ beta, -30, 30)
        p = 1.0 / (1.0 + np.exp(-eta))
        wt = w * p * (1.0 - p) + 1e-12
        z = eta + (y - p) / (p * (1.0 - p) + 1e-12)
        xtw = x.T * wt
        lhs = xtw @ x + ridge * np.eye(x.shape[1])
        beta_new = np.linalg.solve(lhs, xtw @ z)
        if not np.all(np.isfinite(beta_new)):
            ok = False
            break
        if np.max(np.abs(beta_new - beta)) < 1e-10:
            beta = beta_new
            break
        beta = beta_new
    if np.max(np.abs(beta)) > _SEP_NORM:
        ok = False
    return beta, ok


@dataclass
class _IndexFit:
    kind: str            # 'tabular' | 'logistic' | 'gaussian' | 'degenerate'
    codes: np.ndarray | None = None
    probs: np.ndarray | None = None
    beta: np.ndarray | None = None
    sd: float = 1.0
    const_value: float | None = None


class FittedPropensity(PropensityModel):
    """Per-index fits; family 'tabular', 'logistic' (binary) or 'gaussian'."""

    def __init__(self, family: str, spec: FeatureSpec, fits: dict[int, _IndexFit],
                 mode: str, flags: dict):
        self.family = family
        self.spec = spec
        self.fits = fits
        self.mode = mode
        self.flags = flags

    def density_batch(self, batch: GBatch) -> np.ndarray:
        fit = self.fits[batch.j]
        a_val = batch.a[:, batch.j]
        if fit.kind == "degenerate":
            dens = (a_val == fit.const_value).astype(float)
        elif fit.kind == "tabular":
            q = lagged_codes(self.spec, batch)
            pos = np.clip(np.searchsorted(fit.codes, q), 0, len(fit.codes) - 1)
            p1 = np.where(fit.codes[pos] == q, fit.probs[pos], float(fit.probs.mean()))
            dens = np.where(a_val == 1.0, p1, 1.0 - p1)
        elif fit.kind == "logistic":
            x = lagged_design(self.spec, batch)
            p1 = 1.0 / (1.0 + np.exp(-np.clip(x @ fit.beta, -30, 30)))
            dens = np.where(a_val == 1.0, p1, 1.0 - p1)
        else:
            x = lagged_design(self.spec, batch)
            mean = x @ fit.beta
            z2 = (a_val - mean) ** 2 / fit.sd ** 2
            dens = np.exp(-0.5 * z2) / (fit.sd * math.sqrt(2.0 * math.pi))
        return self._frozen_ones(batch, dens)


def fit_propensity(view: PartitionView, family: str = "tabular",
                   include_l: bool = True, lags: int = 1) -> FittedPropensity:
    """Maximum-likelihood treatment model per partition index.

    Fits run on rows still under observation entering each interval.  A
    constant-treatment index is flagged degenerate (point-mass fit); an
    IRLS fit that separates falls back to a ridge-regularized one with a
    warning.
    """
    spec = FeatureSpec(kind="tabular" if family == "tabular" else "poly",
                       include_l=include_l, lags=lags)
    flags: dict = {"degenerate_indices": [], "ridge_fallback_indices": []}
    fits: dict[int, _IndexFit] = {}
    w = view.weights
    for j in range(view.K + 1):
        batch = view.g_batch(j)
        rows = view.at_risk(j - 1) if j >= 1 else np.ones(view.n, dtype=bool)
        a_val = batch.a[rows, j]
        if np.all(a_val == a_val[0]):
            flags["degenerate_indices"].append(j)
            fits[j] = _IndexFit(kind="degenerate", const_value=float(a_val[0]))
            continue
        if family == "tabular":
            codes = lagged_codes(spec, batch)[rows]
            uniq, inv = np.unique(codes, return_inverse=True)
            wsum = np.bincount(inv, weights=w[rows], minlength=len(uniq))
            asum = np.bincount(inv, weights=w[rows] * a_val, minlength=len(uniq))
            fits[j] = _IndexFit(kind="tabular", codes=uniq,
                                probs=asum / np.where(wsum > 0, wsum, 1.0))
        elif family == "logistic":
            x = lagged_design(spec, batch)[rows]
            beta, ok = _logistic_irls(x, a_val, w[rows])
            if not ok:
                warnings.warn(f"propensity fit at index {j} separated; ridge fallback")
                flags["ridge_fallback_indices"].append(j)
                beta, _ = _logistic_irls(x, a_val, w[rows], ridge=_RIDGE_FALLBACK)
            fits[j] = _IndexFit(kind="logistic", beta=beta)
        elif family == "gaussian":
            x = lagged_design(spec, batch)[rows]
            sw = np.sqrt(w[rows])
            beta, _, rank, _ = np.linalg.lstsq(x * sw[:, None], a_val * sw, rcond=None)
            if rank == 0:
                raise DegenerateDesignError(f"gaussian propensity design degenerate at {j}")
            resid = a_val - x @ beta
            sd = float(np.sqrt(np.sum(w[rows] * resid ** 2) / np.sum(w[rows])))
            fits[j] = _IndexFit(kind="gaussian", beta=beta, sd=max(sd, 1e-12))
        else:
            raise InvalidArgumentError(f"unknown propensity family {family!r}")
    mode = "parametric_fit" if include_l else "misspecified"
    return FittedPropensity(family, spec, fits, mode, flags)


class CensoringModel:
    mode: str = "true_oracle"
    flags: dict

    def step_survival_batch(self, batch: GBatch) -> np.ndarray:
        """P(uncensored over (t_{j-1}, t_j] | at risk, history); 1 for rows
        not at risk entering the interval."""
        raise NotImplementedError


class TrivialCensoring(CensoringModel):
    def __init__(self, note: str = "no censoring"):
        self.mode = "true_oracle"
        self.flags = {"note": note}

    def step_survival_batch(self, batch: GBatch) -> np.ndarray:
        return np.ones(batch.n)


class DiscreteTrueCensoring(CensoringModel):
    def __init__(self, cfg: DiscreteRegularConfig):
        if cfg.censoring is None:
            raise InvalidArgumentError("configuration has no censoring hazard")
        self.cfg = cfg
        self.mode = "true_oracle"
        self.flags = {}

    def step_survival_batch(self, batch: GBatch) -> np.ndarray:
        j = batch.j
        if j == 0:
            return np.ones(batch.n)
        dt = batch.times[j] - batch.times[j - 1]
        haz = self.cfg.censoring.step_prob(j, batch.a, batch.l[:, :, 0], dt)
        surv = 1.0 - haz
        frozen = batch.dead_prev | batch.cens_prev
        return np.where(frozen, 1.0, surv)


class FittedCensoring(CensoringModel):
    """Pooled logistic discrete hazard on at-risk person-intervals."""

    def __init__(self, spec: FeatureSpec, beta: np.ndarray, mode: str, flags: dict):
        self.spec = spec
        self.beta = beta
        self.mode = mode
        self.flags = flags

    def step_survival_batch(self, batch: GBatch) -> np.ndarray:
        if batch.j == 0:
            return np.ones(batch.n)
        x = lagged_design(self.spec, batch, with_current_a=True)
        haz = 1.0 / (1.0 + np.exp(-np.clip(x @ self.beta, -30, 30)))
        frozen = batch.dead_prev | batch.cens_prev
        return np.where(frozen, 1.0, 1.0 - haz)


def fit_censoring(view: PartitionView, include_l: bool = True, lags: int = 1) -> CensoringModel:
    """Pooled logistic hazard fit; returns a trivial survival model (with a
    note) when the data holds no censoring events."""
    if not np.any(view.cens_by[:, -1]):
        return TrivialCensoring(note="no censoring events in data")
    spec = FeatureSpec(kind="poly", include_l=include_l, lags=lags)
    xs, ys, ws = [], [], []
    for j in range(1, view.K + 1):
        # censoring risk set: under observation entering the interval and
        # not dead within it (a within-interval death preempts censoring)
        dead_now = view.dead_by[:, j] & view.at_risk(j - 1)
        rows = view.at_risk(j - 1) & ~dead_now
        if not np.any(rows):
            continue
        batch = view.g_batch(j)
        x = lagged_design(spec, batch, with_current_a=True)[rows]
        censored_now = (view.cens_by[:, j] & ~view.cens_by[:, j - 1])[rows]
        xs.append(x)
        ys.append(censored_now.astype(float))
        ws.append(view.weights[rows])
    x = np.vstack(xs)
    y = np.concatenate(ys)
    w = np.concatenate(ws)
    beta, ok = _logistic_irls(x, y, w)
    flags: dict = {}
    if not ok:
        warnings.warn("censoring fit separated; ridge fallback")
        beta, _ = _logistic_irls(x, y, w, ridge=_RIDGE_FALLBACK)
        flags["ridge_fallback"] = True
    mode = "parametric_fit" if include_l else "misspecified"
    return FittedCensoring(spec, beta, mode, flags)
