"""Hand-coded regular-design estimators for the equivalence study.

Independent transcriptions of the classical fixed-interval displays: the
g-formula as a forward nested sum over confounder paths against fitted
transition tables, IPW as the regime mass over the product of propensity
densities, and the augmented form as the weighted residual sum.  They
consume the same fitted nuisance tables as the partition machinery, so on
the two-visit instance agreement is an arithmetic identity.
"""
from __future__ import annotations

import itertools

import numpy as np

from funlong.core.data import Dataset
from funlong.core.grid import Partition
from funlong.core.regimes import PointMassRegime, Regime
from funlong.core.targets import TargetFunctional
from funlong.core.view import PartitionView
from funlong.estimators.estimate import FittedHProcess, _mixed_column
from funlong.estimators.nuisance import PropensityModel
from funlong.estimators.weights import ModelQProcess


def fit_confounder_tables(ds: Dataset, partition: Partition) -> list[dict]:
    """P-hat(l_j = 1 | a_j, a_{j-1}, l_{j-1}) cell tables per index."""
    view = PartitionView(ds, partition)
    tables: list[dict] = []
    w = view.weights
    for j in range(view.K + 1):
        key_cols = [view.A[:, j]]
        if j >= 1:
            key_cols += [view.A[:, j - 1], view.L[:, j - 1, 0]]
        keys = list(zip(*[c.astype(int) for c in key_cols]))
        num: dict = {}
        den: dict = {}
        lj = view.L[:, j, 0]
        for key, wi, li in zip(keys, w, lj):
            num[key] = num.get(key, 0.0) + wi * li
            den[key] = den.get(key, 0.0) + wi
        tables.append({k: num[k] / den[k] for k in den})
    return tables


def discrete_g_formula(ds: Dataset, partition: Partition, regime: PointMassRegime,
                       target: TargetFunctional) -> float:
    """Forward nested sum: integrate nu against the product of fitted
    confounder transitions with the regime's treatment path plugged in."""
    k = partition.n_intervals
    tables = fit_confounder_tables(ds, partition)
    a_star: list[float] = []
    for j in range(k + 1):
        hist = np.asarray(a_star, dtype=float)[None, :]
        a_star.append(float(regime.target(j, hist)[0]))
    total = 0.0
    for l_path in itertools.product((0, 1), repeat=k + 1):
        prob = 1.0
        for j in range(k + 1):
            key = (int(a_star[j]),) if j == 0 else (
                int(a_star[j]), int(a_star[j - 1]), int(l_path[j - 1]))
            p1 = tables[j][key]
            prob *= p1 if l_path[j] == 1 else 1.0 - p1
            if prob == 0.0:
                break
        if prob == 0.0:
            continue
        traj = _make_traj(ds, partition, a_star, l_path)
        total += prob * target.evaluate(traj)
    return total


def _make_traj(ds: Dataset, partition: Partition, a_path, l_path):
    from funlong.core.data import Trajectory

    return Trajectory(
        grid=Partition(tuple(partition.points)),
        a_path=np.asarray(a_path, dtype=float),
        l_path=np.asarray(l_path, dtype=float)[:, None],
        y_indices=ds.y_indices,
    )


def discrete_ipw(ds: Dataset, partition: Partition, regime: Regime,
                 prop: PropensityModel, target: TargetFunctional) -> float:
    """mean of g(a-path) * nu / prod_j p_hat(a_j | history)."""
    view = PartitionView(ds, partition, target=target)
    nu_vals = target.evaluate_batch(ds)
    num = np.ones(view.n)
    den = np.ones(view.n)
    for j in range(view.K + 1):
        batch = view.g_batch(j)
        num = num * regime.weight(j, batch.a[:, j], batch.a[:, :j])
        den = den * prop.density_batch(batch)
    return float(np.sum(view.weights * num * nu_vals / den))


def discrete_dr(ds: Dataset, partition: Partition, regime: Regime,
                h: FittedHProcess, q: ModelQProcess, target: TargetFunctional,
                gh_order: int = 21) -> float:
    """E_n[Q(K) nu - sum_k {Q(k) H(k) - Q(k-1) int H(k) g}] with Q(-1) = 1."""
    view = PartitionView(ds, partition, target=target)
    nu_vals = target.evaluate_batch(ds)
    q_cols = q.columns(view)
    q_term = q.terminal_batch(view)
    h_cols = h.columns(view)
    acc = q_term * nu_vals
    for k in range(view.K + 1):
        mixed = _mixed_column(view, h, k, regime, h_cols[:, k], gh_order)
        q_k = q_term if k == view.K else q_cols[:, k]
        q_prev = q_cols[:, k - 1] if k >= 1 else np.ones(view.n)
        acc = acc - (q_k * h_cols[:, k] - q_prev * mixed)
    return float(np.sum(view.weights * acc))
