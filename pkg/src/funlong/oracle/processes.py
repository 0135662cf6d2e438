"""Exact g-computation and IPW processes on enumerated instances.

The g-computation process is built by backward recursion that mixes the
observational confounder transitions with the regime's treatment factors,
so it is defined on every observationally reachable history (not just on
the regime's support).  The IPW process is the ratio of intervened to
observational marginal masses at each G-history.  Both are returned as
tables plus batch-evaluable adapters for the sample-level machinery.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from funlong.core.errors import PositivityError, UnsupportedOperationError
from funlong.core.grid import Partition
from funlong.core.processes import NuisanceProcess
from funlong.core.regimes import DiscreteRegime, PointMassRegime, Regime
from funlong.core.targets import TargetFunctional
from funlong.core.view import GBatch, PartitionView
from funlong.dgp.config import DiscreteRegularConfig
from funlong.oracle.measure import PathMeasure, _measure_values, prefix_masses

_TOL = 1e-12


@dataclass
class ExactProcessTable:
    """Values of an adapted process at every (index, reachable G-history)."""

    partition: Partition
    label: str
    rows: dict[int, dict[tuple, float]]
    terminal: dict[tuple, float]
    initial: float
    meta: dict = field(default_factory=dict)

    def value(self, j: int, key: tuple) -> float:
        return self.rows[j][key]

    def as_process(self) -> "TableProcess":
        return TableProcess(self)


class TableProcess(NuisanceProcess):
    """Batch adapter over an ExactProcessTable for binary, event-free paths."""

    def __init__(self, table: ExactProcessTable):
        self.table = table
        self.label = table.label
        k1 = table.partition.n_intervals + 1
        self._pow_a = 2.0 ** np.arange(k1)
        self._pow_l = 2.0 ** np.arange(k1, 2 * k1)
        self._by_j = {}
        for j, row in table.rows.items():
            codes, vals = [], []
            for (a_t, l_t, status), v in row.items():
                codes.append(self._encode_tuple(a_t, l_t))
                vals.append(v)
            order = np.argsort(codes)
            self._by_j[j] = (np.asarray(codes, dtype=float)[order],
                             np.asarray(vals, dtype=float)[order])
        codes, vals = [], []
        for (a_t, l_t, _x, _d), v in table.terminal.items():
            codes.append(self._encode_tuple(a_t, l_t))
            vals.append(v)
        order = np.argsort(codes)
        self._term = (np.asarray(codes, dtype=float)[order],
                      np.asarray(vals, dtype=float)[order])

    def _encode_tuple(self, a_t, l_t) -> float:
        return float(
            sum(a * p for a, p in zip(a_t, self._pow_a))
            + sum(l * p for l, p in zip(l_t, self._pow_l))
        )

    @staticmethod
    def _lookup(codes_vals, query: np.ndarray) -> np.ndarray:
        codes, vals = codes_vals
        pos = np.searchsorted(codes, query)
        pos = np.clip(pos, 0, len(codes) - 1)
        if not np.all(codes[pos] == query):
            raise KeyError("history not present in the exact table")
        return vals[pos]

    def evaluate_batch(self, batch: GBatch) -> np.ndarray:
        j = batch.j
        code = batch.a @ self._pow_a[: j + 1]
        if j > 0:
            code = code + batch.l[:, :, 0] @ self._pow_l[:j]
        return self._lookup(self._by_j[j], code)

    def terminal_batch(self, view: PartitionView) -> np.ndarray:
        k1 = view.K + 1
        code = view.A @ self._pow_a[:k1] + view.L[:, :, 0] @ self._pow_l[:k1]
        return self._lookup(self._term, code)


def _require_event_free(m: PathMeasure, what: str) -> None:
    if np.any(m.x_idx >= 0):
        raise UnsupportedOperationError(f"{what} supports event-free instances only")


def _treatment_prob_columns(cfg: DiscreteRegularConfig, m: PathMeasure) -> np.ndarray:
    """Observational conditional probability of each path's treatment draw."""
    k1 = m.a_seq.shape[1]
    out = np.ones((m.n_paths, k1))
    for j in range(k1):
        spec = cfg.treatment[j]
        if spec.kind == "point":
            continue
        if spec.kind == "carry":
            continue
        p1 = spec.prob_one(j, m.a_seq[:, : j + 1], m.l_seq[:, :j], include_current_a=False)
        out[:, j] = np.where(m.a_seq[:, j] == 1.0, p1, 1.0 - p1)
    return out


def _regime_weight_columns(regime: Regime, m: PathMeasure) -> np.ndarray:
    k1 = m.a_seq.shape[1]
    out = np.ones((m.n_paths, k1))
    for j in range(k1):
        out[:, j] = regime.weight(j, m.a_seq[:, j], m.a_seq[:, :j])
    return out


def _check_regime_support(cfg: DiscreteRegularConfig, m_obs: PathMeasure, regime: Regime) -> None:
    """Every regime atom must extend an observationally reachable history."""
    k1 = m_obs.a_seq.shape[1]
    for j in range(k1):
        seen: dict[tuple, set] = {}
        for p in range(m_obs.n_paths):
            f_prev = (tuple(m_obs.a_seq[p, :j]), tuple(m_obs.l_seq[p, :j]))
            seen.setdefault(f_prev, set()).add(float(m_obs.a_seq[p, j]))
        for (a_hist, l_hist), present in seen.items():
            hist = np.asarray(a_hist, dtype=float)[None, :]
            if isinstance(regime, PointMassRegime):
                atoms = [float(regime.target(j, hist)[0])]
            elif isinstance(regime, DiscreteRegime):
                probs = regime.probs(j, hist)[0]
                atoms = [v for v, w in zip(regime.support, probs) if w > _TOL]
            else:
                raise UnsupportedOperationError("exact tables need discrete or point-mass regimes")
            for v in atoms:
                if v not in present:
                    raise PositivityError(
                        f"regime puts mass on treatment {v} at index {j} where the "
                        f"data law has none",
                        index=j,
                        history=f"a={a_hist}, l={l_hist}",
                    )


def exact_g_process(m_obs: PathMeasure, regime: Regime, nu: TargetFunctional,
                    cfg: DiscreteRegularConfig) -> ExactProcessTable:
    """g-computation process table.

    Row j holds E[nu] under the law that keeps observational confounder
    transitions but draws treatments after index j from the regime,
    conditioned on each reachable G-history; row K conditions on the full
    pre-terminal history; the terminal table is nu itself.
    """
    _require_event_free(m_obs, "exact_g_process")
    _check_regime_support(cfg, m_obs, regime)
    k = m_obs.grid.n_intervals
    nu_vals = _measure_values(m_obs, nu)
    p_cols = _treatment_prob_columns(cfg, m_obs)
    g_cols = _regime_weight_columns(regime, m_obs)
    ratio = g_cols / p_cols

    rows: dict[int, dict[tuple, float]] = {}
    suffix = np.ones(m_obs.n_paths)
    for j in range(k, -1, -1):
        # suffix currently holds prod_{i > j} ratio_i
        mixed = m_obs.weights * suffix
        num: dict[tuple, float] = {}
        den: dict[tuple, float] = {}
        for p in range(m_obs.n_paths):
            key = m_obs.g_prefix_key(p, j)
            num[key] = num.get(key, 0.0) + mixed[p] * nu_vals[p]
            den[key] = den.get(key, 0.0) + mixed[p]
        rows[j] = {key: num[key] / den[key] for key in num if abs(den[key]) > _TOL}
        suffix = suffix * ratio[:, j]

    # initial value: mix the index-0 row over the regime's initial term
    mixed0 = m_obs.weights * suffix
    initial = math.fsum((mixed0 * nu_vals).tolist())

    terminal = {m_obs.path_key(p): float(nu_vals[p]) for p in range(m_obs.n_paths)}
    return ExactProcessTable(
        partition=m_obs.grid, label="H-like", rows=rows, terminal=terminal,
        initial=initial, meta={"target": nu.label},
    )


def exact_q_process(m_obs: PathMeasure, m_int: PathMeasure) -> ExactProcessTable:
    """IPW process table: intervened over observational marginal mass at
    every reachable G-history; terminal values are the full path ratios."""
    if m_obs.grid.points != m_int.grid.points:
        raise UnsupportedOperationError("measures live on different grids")
    if m_int.dropped_mass > _TOL:
        raise PositivityError(
            "intervened measure puts mass on histories the data law never reaches",
            history=f"dropped mass {m_int.dropped_mass:.3g}",
        )
    k = m_obs.grid.n_intervals
    has_events = bool(np.any(m_obs.x_idx >= 0))
    kind = "q" if has_events else "g"
    rows: dict[int, dict[tuple, float]] = {}
    for j in range(k + 1):
        obs = prefix_masses(m_obs, j, kind)
        intv = prefix_masses(m_int, j, kind)
        for key, w in intv.items():
            if key not in obs and abs(w) > _TOL:
                raise PositivityError(
                    "intervened mass on an observationally null history",
                    index=j, history=str(key),
                )
        rows[j] = {key: intv.get(key, 0.0) / w for key, w in obs.items() if w > _TOL}

    int_by_path = {m_int.path_key(p): float(m_int.weights[p]) for p in range(m_int.n_paths)}
    terminal = {}
    for p in range(m_obs.n_paths):
        w = float(m_obs.weights[p])
        if w > _TOL:
            terminal[m_obs.path_key(p)] = int_by_path.get(m_obs.path_key(p), 0.0) / w
    initial = m_int.total_mass / m_obs.total_mass
    return ExactProcessTable(
        partition=m_obs.grid, label="Q-like", rows=rows, terminal=terminal,
        initial=initial, meta={"prefix_kind": kind},
    )


def _prefix_transitions(m: PathMeasure, j: int) -> dict[tuple, list[tuple[tuple, float]]]:
    """Conditional masses of index-(j+1) G-histories given index-j ones."""
    cur = prefix_masses(m, j)
    nxt = prefix_masses(m, j + 1)
    children: dict[tuple, list[tuple[tuple, float]]] = {}
    for p in range(m.n_paths):
        key_j = m.g_prefix_key(p, j)
        key_n = m.g_prefix_key(p, j + 1)
        children.setdefault(key_j, [])
    seen = set()
    for p in range(m.n_paths):
        key_j = m.g_prefix_key(p, j)
        key_n = m.g_prefix_key(p, j + 1)
        if (key_j, key_n) in seen:
            continue
        seen.add((key_j, key_n))
        if abs(cur[key_j]) > _TOL:
            children[key_j].append((key_n, nxt[key_n] / cur[key_j]))
    return children


def max_martingale_gap(m: PathMeasure, table: ExactProcessTable,
                       nu_terminal: bool = False) -> float:
    """max_j max_history |sum_next P(next|history) * value(j+1, next) - value(j, history)|.

    With ``nu_terminal=True`` the final comparison projects the terminal
    (full-path) values one step back, which closes the telescoping at tau.
    """
    k = m.grid.n_intervals
    worst = 0.0
    for j in range(k):
        trans = _prefix_transitions(m, j)
        row_j = table.rows[j]
        row_n = table.rows[j + 1]
        for key, kids in trans.items():
            if key not in row_j:
                continue
            acc = math.fsum(p * row_n[kn] for kn, p in kids if kn in row_n)
            worst = max(worst, abs(acc - row_j[key]))
    if nu_terminal:
        cur = prefix_masses(m, k)
        acc_num: dict[tuple, float] = {}
        for p in range(m.n_paths):
            key = m.g_prefix_key(p, k)
            acc_num[key] = acc_num.get(key, 0.0) + float(m.weights[p]) * table.terminal[m.path_key(p)]
        for key, num in acc_num.items():
            if key in table.rows[k] and abs(cur[key]) > _TOL:
                worst = max(worst, abs(num / cur[key] - table.rows[k][key]))
    return worst
