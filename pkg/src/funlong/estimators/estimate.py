"""Sample-level estimators on a partition: backward-regression
g-computation, inverse probability weighting, the outcome and treatment
estimating-equation residuals, and the doubly robust combination.

All three point estimators accept weighted datasets, so plugging an exact
path measure in (one pseudo-subject per path, weight = probability) turns
them into their population-level counterparts.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from funlong.core.data import Dataset
from funlong.core.errors import InternalSimulationError, PositivityError
from funlong.core.grid import Partition
from funlong.core.processes import NuisanceProcess
from funlong.core.regimes import GH_DEFAULT_ORDER, Regime, expect_over_regime
from funlong.core.targets import TargetFunctional
from funlong.core.view import GBatch, PartitionView
from funlong.dgp.rng import stream
from funlong.estimators.nuisance import CensoringModel, PropensityModel
from funlong.estimators.regression import OutcomeRegressionBackend
from funlong.estimators.weights import weight_columns


@dataclass
class EstimateReport:
    estimate: float
    se: float
    n: int
    estimator: str
    partition_k: int
    horizon: str
    nuisance_modes: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (math.isnan(self.se) or self.se >= 0.0):
            raise ValueError("se must be nonnegative")

    def to_json(self) -> str:
        return json.dumps({
            "estimate": self.estimate, "se": self.se, "n": self.n,
            "estimator": self.estimator, "partition_k": self.partition_k,
            "horizon": self.horizon, "nuisance_modes": self.nuisance_modes,
            "extras": {k: v for k, v in self.extras.items() if _jsonable(v)},
        }, sort_keys=True)

    def csv_row(self) -> pd.DataFrame:
        return pd.DataFrame([{
            "estimator": self.estimator, "estimate": self.estimate, "se": self.se,
            "n": self.n, "partition_k": self.partition_k, "horizon": self.horizon,
            "nuisance_modes": json.dumps(self.nuisance_modes, sort_keys=True),
        }])


def _jsonable(v) -> bool:
    return isinstance(v, (str, int, float, bool, type(None), list, dict))


def _wmean_se(values: np.ndarray, w: np.ndarray) -> tuple[float, float]:
    mean = float(np.sum(w * values))
    se = float(np.sqrt(np.sum((w * (values - mean)) ** 2)))
    return mean, se


# ---------------------------------------------------------------- IPW


def ipw_estimate(ds: Dataset, partition: Partition, regime: Regime,
                 prop: PropensityModel, cens: CensoringModel | None,
                 target: TargetFunctional,
                 truncate_quantile: float | None = None) -> EstimateReport:
    view = PartitionView(ds, partition, target=target)
    _, terminal = weight_columns(view, regime, prop, cens, truncate_quantile)
    nu_vals = target.evaluate_batch(ds)
    # the target is undefined on censored rows, which carry zero weight
    contrib = terminal * np.where(view.cens_by[:, -1], 0.0, nu_vals)
    mean, se = _wmean_se(contrib, view.weights)
    return EstimateReport(
        estimate=mean, se=se, n=ds.n, estimator="ipw",
        partition_k=partition.n_intervals, horizon=partition.horizon_kind,
        nuisance_modes={"propensity": prop.mode,
                        "censoring": cens.mode if cens else "none"},
        extras={"mean_terminal_weight": float(np.sum(view.weights * terminal)),
                "truncate_quantile": truncate_quantile},
    )


# ---------------------------------------------------------------- g-computation


class _SplitPredictor:
    """Within-interval composition for censored recursions:

        H(cell) = P(die in interval | cell) * E[nu | die, cell]
                  + P(survive) * E[continuation | survive, cell]

    Each component regression runs on a selection-free risk set (the death
    indicator is observed for every subject at risk, deaths carry their own
    outcome, survivors their continuation value), which avoids the
    censoring tilt a single pooled regression would pick up.
    """

    def __init__(self, p_die, value_die, cont):
        self.p_die = p_die
        self.value_die = value_die
        self.cont = cont

    def __call__(self, batch: GBatch) -> np.ndarray:
        p = np.clip(np.asarray(self.p_die(batch), dtype=float), 0.0, 1.0)
        dead_val = np.asarray(self.value_die(batch), dtype=float) if self.value_die else 0.0
        return p * dead_val + (1.0 - p) * np.asarray(self.cont(batch), dtype=float)


class FittedHProcess(NuisanceProcess):
    """Backward-regression g-computation process (one predictor per index)."""

    label = "H-like"

    def __init__(self, predictors: dict, anchor: float, modes: dict,
                 quadratic_in_a: bool = False):
        self.predictors = predictors
        self.anchor = anchor
        self.modes = modes
        self.quadratic_in_a = quadratic_in_a

    def evaluate_batch(self, batch: GBatch) -> np.ndarray:
        vals = np.asarray(self.predictors[batch.j](batch), dtype=float)
        if batch.frozen_value is not None:
            vals = np.where(batch.dead_prev, batch.frozen_value, vals)
            vals = np.where(batch.cens_prev, 0.0, vals)
        return vals


def _mixed_column(view: PartitionView, h: NuisanceProcess, j: int, regime: Regime,
                  h_cols_j: np.ndarray | None, gh_order: int) -> np.ndarray:
    """integral of H(j, prefix with substituted a_j) over the regime;
    frozen rows keep their own-prefix value (no fresh draw to integrate)."""
    from funlong.core.regimes import GaussianRegime

    if view.partition.is_infinite and j == view.K:
        # terminal interval: no fresh treatment draw, all paths frozen
        return h_cols_j if h_cols_j is not None else h.evaluate_batch(view.g_batch(j))
    if isinstance(regime, GaussianRegime) and getattr(h, "quadratic_in_a", False):
        # three probe evaluations identify the quadratic-in-a coefficients,
        # and Gaussian moments integrate a quadratic exactly
        v0 = h.evaluate_batch(view.g_batch(j, a_override=np.zeros(view.n)))
        vp = h.evaluate_batch(view.g_batch(j, a_override=np.ones(view.n)))
        vm = h.evaluate_batch(view.g_batch(j, a_override=-np.ones(view.n)))
        c1 = 0.5 * (vp - vm)
        c2 = 0.5 * (vp + vm) - v0
        mu = regime.mean(j, view.A[:, :j])
        out = v0 + c1 * mu + c2 * (mu * mu + regime.sd ** 2)
    else:
        def f(avals: np.ndarray) -> np.ndarray:
            return h.evaluate_batch(view.g_batch(j, a_override=avals))

        out = expect_over_regime(regime, j, view.A[:, :j], f, gh_order)
    if j >= 1:
        ev = view.event_by[:, j - 1]
        if np.any(ev):
            own = h_cols_j if h_cols_j is not None else h.evaluate_batch(view.g_batch(j))
            out = np.where(ev, own, out)
    return out


def _recursion(view: PartitionView, regime: Regime, backend: OutcomeRegressionBackend,
               nu_vals: np.ndarray, w: np.ndarray, censored: bool,
               gh_order: int) -> tuple[dict, float]:
    k = view.K
    sentinel = view.partition.is_infinite
    predictors: dict[int, object] = {}
    resp = nu_vals.copy()
    quad = backend.family == "least_squares_on_basis" and backend.spec.degree <= 2
    proc = FittedHProcess(predictors, math.nan, {}, quadratic_in_a=quad)
    for j in range(k, -1, -1):
        batch = view.g_batch(j)
        if not censored:
            rows = np.ones(view.n, dtype=bool) & (w > 0)
            if not np.any(rows):
                raise PositivityError("empty stratum in the outcome recursion", index=j)
            predictors[j] = backend.fit(batch, rows, resp, w)
        else:
            at_risk_prev = view.at_risk(j - 1) if j >= 1 else np.ones(view.n, dtype=bool)
            survivors = view.at_risk(j) & (w > 0)
            if sentinel and j == k:
                survivors = at_risk_prev & (w > 0)
            if not np.any(survivors):
                raise PositivityError("empty at-risk stratum in the outcome recursion", index=j)
            cont = backend.fit(batch, survivors, resp, w)
            died_now = view.dead_by[:, j] & at_risk_prev & (w > 0) if j >= 1 else None
            if j >= 1 and not (sentinel and j == k) and np.any(died_now):
                p_die = backend.fit(batch, at_risk_prev & (w > 0),
                                    (view.dead_by[:, j] & at_risk_prev).astype(float), w)
                v_die = backend.fit(batch, died_now, nu_vals, w)
                predictors[j] = _SplitPredictor(p_die, v_die, cont)
            else:
                predictors[j] = cont
        mixed = _mixed_column(view, proc, j, regime, None, gh_order)
        if censored and j >= 1:
            mixed = np.where(view.dead_by[:, j - 1], nu_vals, mixed)
        resp = mixed
    anchor = float(np.sum(w * resp))
    return predictors, anchor


def fit_h_process(ds: Dataset, partition: Partition, regime: Regime,
                  backend: OutcomeRegressionBackend, target: TargetFunctional,
                  censored: bool = False, gh_order: int = GH_DEFAULT_ORDER) -> FittedHProcess:
    view = PartitionView(ds, partition, target=target)
    nu_vals = target.evaluate_batch(ds)
    predictors, anchor = _recursion(view, regime, backend, nu_vals, view.weights,
                                    censored, gh_order)
    modes = {"outcome_regression": backend.family, "features": backend.spec.describe()}
    quad = backend.family == "least_squares_on_basis" and backend.spec.degree <= 2
    return FittedHProcess(predictors, anchor, modes, quadratic_in_a=quad)


_COMPRESS_CAP = 4096


def _compress_paths(ds: Dataset, partition: Partition) -> Dataset | None:
    """Collapse subjects with identical partition-sampled paths into
    weighted pseudo-subjects.  Exchangeable for every estimator here, and
    it turns the bootstrap into a cheap multinomial over path types."""
    view_cols = PartitionView(ds, partition)
    flat = np.column_stack([
        view_cols.A,
        view_cols.L.reshape(ds.n, -1),
        np.where(np.isfinite(ds.x), ds.x, 1e300),
        np.asarray(ds.delta, dtype=float),
    ])
    uniq, counts = np.unique(flat, axis=0, return_counts=True)
    if len(uniq) > _COMPRESS_CAP:
        return None
    k1 = view_cols.K + 1
    d = ds.d
    a = uniq[:, :k1]
    l = uniq[:, k1:k1 + k1 * d].reshape(len(uniq), k1, d)
    x = uniq[:, -2].copy()
    x[x >= 1e300] = math.inf
    delta = uniq[:, -1].astype(np.int8)
    if partition.is_infinite:
        # the sentinel column duplicates the last finite point; store the
        # finite grid so later alignment stays consistent
        a, l = a[:, :-1], l[:, :-1, :]
        sub = Partition(partition.finite_points)
    else:
        sub = Partition(tuple(partition.points))
    return Dataset(grid=sub, a=a, l=l, y_indices=ds.y_indices, x=x, delta=delta,
                   seed=ds.seed, provenance={"compressed_from": ds.n},
                   weights=counts.astype(float))


def gcomp_estimate(ds: Dataset, partition: Partition, regime: Regime,
                   backend: OutcomeRegressionBackend, target: TargetFunctional,
                   censored: bool = False, n_boot: int = 200, seed: int = 0,
                   gh_order: int = GH_DEFAULT_ORDER) -> EstimateReport:
    """Backward-regression g-computation with a multinomial bootstrap SE.

    Unique-path compression makes the bootstrap cheap on finite instances;
    weighted (population) datasets skip the bootstrap since there is no
    sampling noise to resample.
    """
    work = ds
    if ds.weights is None and n_boot > 0:
        compressed = _compress_paths(ds, partition)
        if compressed is not None:
            work = compressed
    view = PartitionView(work, partition, target=target)
    nu_vals = target.evaluate_batch(work)
    _, anchor = _recursion(view, regime, backend, nu_vals, view.weights, censored, gh_order)

    se = math.nan
    if ds.weights is None and n_boot > 0:
        rng = stream(seed, "bootstrap")
        reps = np.empty(n_boot)
        probs = view.weights
        for b in range(n_boot):
            wb = rng.multinomial(ds.n, probs) / ds.n
            _, reps[b] = _recursion(view, regime, backend, nu_vals, wb, censored, gh_order)
        se = float(np.std(reps, ddof=1))
    return EstimateReport(
        estimate=anchor, se=se, n=ds.n, estimator="gcomp",
        partition_k=partition.n_intervals, horizon=partition.horizon_kind,
        nuisance_modes={"outcome_regression": backend.family,
                        "features": backend.spec.describe()},
        extras={"n_boot": n_boot, "censored": censored,
                "compressed": work is not ds},
    )


# ---------------------------------------------------------------- estimating equations


def _xi_components(ds: Dataset, partition: Partition, h: NuisanceProcess,
                   q: NuisanceProcess, regime: Regime, target: TargetFunctional,
                   gh_order: int) -> dict[str, np.ndarray]:
    view = PartitionView(ds, partition, target=target)
    k = view.K
    nu_vals = target.evaluate_batch(ds)
    nu_vals = np.where(view.cens_by[:, -1], 0.0, nu_vals)
    q_cols = q.columns(view)
    q_term = q.terminal_batch(view)
    h_cols = h.columns(view)
    mixed = np.empty((view.n, k + 1))
    for j in range(k + 1):
        mixed[:, j] = _mixed_column(view, h, j, regime, h_cols[:, j], gh_order)

    xi_out = q_term * (nu_vals - h_cols[:, k])
    for j in range(k):
        xi_out = xi_out + q_cols[:, j] * (mixed[:, j + 1] - h_cols[:, j])

    xi_trt = q_cols[:, 0] * h_cols[:, 0] - mixed[:, 0]
    for j in range(1, k + 1):
        qj = q_term if j == k else q_cols[:, j]
        xi_trt = xi_trt + qj * h_cols[:, j] - q_cols[:, j - 1] * mixed[:, j]

    return {"xi_out": xi_out, "xi_trt": xi_trt, "anchor": mixed[:, 0],
            "q_term": q_term, "nu": nu_vals, "weights": view.weights}


def xi_out(ds: Dataset, partition: Partition, h: NuisanceProcess, q: NuisanceProcess,
           regime: Regime, target: TargetFunctional,
           gh_order: int = GH_DEFAULT_ORDER) -> tuple[float, float]:
    parts = _xi_components(ds, partition, h, q, regime, target, gh_order)
    return _wmean_se(parts["xi_out"], parts["weights"])


def xi_trt(ds: Dataset, partition: Partition, h: NuisanceProcess, q: NuisanceProcess,
           regime: Regime, target: TargetFunctional,
           gh_order: int = GH_DEFAULT_ORDER) -> tuple[float, float]:
    parts = _xi_components(ds, partition, h, q, regime, target, gh_order)
    return _wmean_se(parts["xi_trt"], parts["weights"])


def dr_estimate(ds: Dataset, partition: Partition, h: NuisanceProcess,
                q: NuisanceProcess, regime: Regime, target: TargetFunctional,
                gh_order: int = GH_DEFAULT_ORDER,
                nuisance_modes: dict | None = None) -> EstimateReport:
    parts = _xi_components(ds, partition, h, q, regime, target, gh_order)
    form_a = parts["xi_out"] + parts["anchor"]
    form_b = parts["q_term"] * parts["nu"] - parts["xi_trt"]
    scale = max(1.0, float(np.max(np.abs(form_b))) if form_b.size else 1.0)
    gap = float(np.max(np.abs(form_a - form_b))) if form_a.size else 0.0
    if gap > 1e-12 * scale * 8:
        raise InternalSimulationError(
            f"doubly robust algebraic identity violated: max gap {gap:.3e}"
        )
    mean, se = _wmean_se(form_a, parts["weights"])
    return EstimateReport(
        estimate=mean, se=se, n=ds.n, estimator="dr",
        partition_k=partition.n_intervals, horizon=partition.horizon_kind,
        nuisance_modes=nuisance_modes or {}, extras={"identity_gap": gap},
    )
