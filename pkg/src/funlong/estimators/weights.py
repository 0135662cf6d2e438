"""Inverse-probability weight paths.

The cumulative weight at index j multiplies treatment density ratios
through j with inverse censoring step-survivals for intervals through
(t_{j-1}, t_j]: within-interval events precede t_j in the continuous-time
reading, and the treatment-side residual telescopes only under this
placement.  Censored subjects hit a hard zero at their censoring interval;
post-event indices contribute unit factors because frozen paths carry no
fresh randomness.
"""
from __future__ import annotations

import numpy as np

from funlong.core.data import Dataset, Trajectory
from funlong.core.errors import PositivityError
from funlong.core.grid import Partition
from funlong.core.processes import NuisanceProcess
from funlong.core.regimes import Regime
from funlong.core.view import GBatch, PartitionView
from funlong.estimators.nuisance import CensoringModel, PropensityModel

_DENS_TOL = 1e-300


def _ratio_from_batch(batch: GBatch, regime: Regime, prop: PropensityModel,
                      truncate_quantile: float | None) -> np.ndarray:
    from funlong.core.regimes import PointMassRegime

    j = batch.j
    at_risk = ~(batch.dead_prev | batch.cens_prev)
    g_w = regime.weight(j, batch.a[:, j], batch.a[:, :j])
    dens = prop.density_batch(batch)
    bad = at_risk & (np.abs(dens) <= _DENS_TOL) & (np.abs(g_w) > 0)
    if isinstance(regime, PointMassRegime) and np.any(at_risk):
        # probe the density at the regime's target: a point mass sitting on
        # a treatment the data law never assigns is a positivity failure
        probe = GBatch(j=j, a=batch.a.copy(), l=batch.l, dead_prev=batch.dead_prev,
                       cens_prev=batch.cens_prev, x_prev=batch.x_prev,
                       times=batch.times, frozen_value=batch.frozen_value)
        probe.a[:, j] = regime.target(j, batch.a[:, :j])
        bad = bad | (at_risk & (np.abs(prop.density_batch(probe)) <= _DENS_TOL))
    if np.any(bad):
        raise PositivityError(
            f"zero propensity density with positive regime weight at index {j}",
            index=j,
            history=f"{int(bad.sum())} subject(s), first row {int(np.argmax(bad))}",
        )
    ratio = np.where(at_risk, g_w / np.where(np.abs(dens) <= _DENS_TOL, 1.0, dens), 1.0)
    if truncate_quantile is not None and np.any(at_risk):
        cap = float(np.quantile(ratio[at_risk], truncate_quantile))
        ratio = np.minimum(ratio, cap)
    return ratio


def _censor_factor(view: PartitionView, j: int, cens: CensoringModel | None) -> np.ndarray:
    """Factor for interval (t_{j-1}, t_j]: 0 once censored there, inverse
    step-survival for rows that stayed under observation, and 1 for rows
    whose event already happened."""
    if j == 0:
        return np.ones(view.n)
    at_risk = view.at_risk(j - 1)
    censored_now = view.cens_by[:, j] & at_risk
    died_now = view.dead_by[:, j] & at_risk
    out = np.ones(view.n)
    out[censored_now] = 0.0
    if cens is not None:
        # a within-interval death preempts censoring: its intervened and
        # observational probabilities cancel, so no factor for those rows
        surv = cens.step_survival_batch(view.g_batch(j))
        live = at_risk & ~censored_now & ~died_now
        out[live] = 1.0 / surv[live]
    return out


def weight_columns(view: PartitionView, regime: Regime, prop: PropensityModel,
                   cens: CensoringModel | None = None,
                   truncate_quantile: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(Q columns (n, K+1), terminal weights (n,)).

    Column j holds treatment ratios and censoring factors through interval
    j; the terminal weight is the full data ratio (column K).
    """
    n, k = view.n, view.K
    sentinel = view.partition.is_infinite
    cols = np.empty((n, k + 1))
    q = _ratio_from_batch(view.g_batch(0), regime, prop, truncate_quantile)
    cols[:, 0] = q
    for j in range(1, k + 1):
        # the censoring factor for interval (t_{j-1}, t_j] enters at index
        # j: within-interval events precede t_j in continuous time, and the
        # treatment residual telescopes only under this placement
        if sentinel and j == k:
            late_cens = view.cens_by[:, k] & view.at_risk(k - 1)
            q = np.where(late_cens, 0.0, q)
        else:
            tr = _ratio_from_batch(view.g_batch(j), regime, prop, truncate_quantile)
            q = q * tr * _censor_factor(view, j, cens)
        cols[:, j] = q
    return cols, cols[:, k].copy()


class ModelQProcess(NuisanceProcess):
    """Adapted cumulative-weight process backed by fitted or true models."""

    label = "Q-like"

    def __init__(self, regime: Regime, prop: PropensityModel,
                 cens: CensoringModel | None = None,
                 truncate_quantile: float | None = None):
        self.regime = regime
        self.prop = prop
        self.cens = cens
        self.truncate_quantile = truncate_quantile

    def columns(self, view: PartitionView) -> np.ndarray:
        cols, _ = weight_columns(view, self.regime, self.prop, self.cens,
                                 self.truncate_quantile)
        return cols

    def terminal_batch(self, view: PartitionView) -> np.ndarray:
        _, term = weight_columns(view, self.regime, self.prop, self.cens,
                                 self.truncate_quantile)
        return term

    def evaluate_batch(self, batch: GBatch) -> np.ndarray:
        """Reconstruct the cumulative product from one adapted batch.

        Censoring factors for intervals realized within the batch's window
        (strictly before t_j) are included; the index-j interval's factor is
        not observable from a G-prefix and appears only in ``columns`` /
        ``terminal_batch``, which see the full event data.
        """
        times = np.asarray(batch.times, dtype=float)
        x = np.where(np.isnan(batch.x_prev), np.inf, batch.x_prev)
        q = np.ones(batch.n)
        for i in range(batch.j + 1):
            t_prev = times[i - 1] if i >= 1 else -np.inf
            known = np.isfinite(x) & (x <= t_prev)
            sub = GBatch(
                j=i,
                a=batch.a[:, : i + 1],
                l=batch.l[:, :i, :],
                dead_prev=known & batch.dead_prev,
                cens_prev=known & batch.cens_prev,
                x_prev=np.where(known, x, np.nan),
                times=batch.times,
            )
            q = q * _ratio_from_batch(sub, self.regime, self.prop, self.truncate_quantile)
            if 1 <= i <= batch.j - 1:
                at_risk = ~known
                event_now = at_risk & np.isfinite(x) & (x <= times[i])
                censored_now = event_now & batch.cens_prev
                died_now = event_now & batch.dead_prev
                fac = np.ones(batch.n)
                fac[censored_now] = 0.0
                if self.cens is not None:
                    surv = self.cens.step_survival_batch(sub)
                    live = at_risk & ~censored_now & ~died_now
                    fac[live] = 1.0 / surv[live]
                q = q * fac
        return q


def ipw_weight_path(traj: Trajectory, partition: Partition, regime: Regime,
                    prop: PropensityModel, cens: CensoringModel | None = None) -> np.ndarray:
    """Per-index cumulative weights for one subject, terminal value last."""
    ds = Dataset(grid=traj.grid, a=traj.a_path[None, :].copy(),
                 l=traj.l_path[None, :, :].copy(),
                 y_indices=traj.y_indices, x=np.array([traj.event_time]),
                 delta=np.array([traj.event_indicator]))
    view = PartitionView(ds, partition)
    cols, term = weight_columns(view, regime, prop, cens)
    return np.concatenate([cols[0], [term[0]]])
