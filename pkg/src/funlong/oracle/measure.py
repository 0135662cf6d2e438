"""Exact path measures for finite-state instances.

Every discrete-regular configuration induces a finite table of paths with
multiplicative probabilities; this module enumerates that table for the
observational law and for intervened laws (treatment factors replaced by a
regime, censoring zeroed), and provides total-variation distances and exact
targets on top of it.  Sums over paths use ``math.fsum`` so results do not
depend on reduction order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from funlong.core.data import Dataset
from funlong.core.errors import (
    InvalidArgumentError,
    PositivityError,
    TooLargeError,
    UnsupportedOperationError,
)
from funlong.core.grid import Partition
from funlong.core.regimes import DiscreteRegime, PointMassRegime, Regime, SignedRegime
from funlong.core.targets import TargetFunctional
from funlong.dgp.config import DiscreteRegularConfig

PATH_CAP = 1_000_000
_MASS_TOL = 1e-12


@dataclass
class PathMeasure:
    """Enumerated (possibly signed) measure over full discrete paths.

    Paths are stored in offset form: after an event at index ``x_idx`` the
    treatment column repeats its event-index value and the confounder its
    pre-event value.  ``x_idx = -1`` means no event.
    """

    grid: Partition
    a_seq: np.ndarray            # (P, K+1)
    l_seq: np.ndarray            # (P, K+1)
    x_idx: np.ndarray            # (P,)
    delta: np.ndarray            # (P,)
    weights: np.ndarray          # (P,) signed
    y_indices: tuple[int, ...] = (0,)
    dropped_mass: float = 0.0    # regime mass lost on data-null histories
    provenance: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return len(self.weights)

    @property
    def total_mass(self) -> float:
        return math.fsum(self.weights.tolist())

    @property
    def is_probability(self) -> bool:
        return (
            abs(self.total_mass - 1.0) <= _MASS_TOL
            and float(self.weights.min(initial=0.0)) >= -_MASS_TOL
            and self.dropped_mass <= _MASS_TOL
        )

    def times(self) -> np.ndarray:
        return np.asarray(self.grid.finite_points)

    def event_times(self) -> np.ndarray:
        times = self.times()
        out = np.full(self.n_paths, math.inf)
        has = self.x_idx >= 0
        out[has] = times[self.x_idx[has]]
        return out

    def path_key(self, p: int) -> tuple:
        return (
            tuple(self.a_seq[p]),
            tuple(self.l_seq[p]),
            int(self.x_idx[p]),
            int(self.delta[p]),
        )

    def g_prefix_key(self, p: int, j: int) -> tuple:
        """Identity of the G-history at index j: treatments through j,
        confounders and event status through j-1."""
        xi = int(self.x_idx[p])
        seen = 0 <= xi <= j - 1
        return (
            tuple(self.a_seq[p, : j + 1]),
            tuple(self.l_seq[p, :j]),
            (xi, int(self.delta[p])) if seen else None,
        )

    def q_prefix_key(self, p: int, j: int) -> tuple:
        """Like the G-history but with event status through interval j,
        matching the weight process convention (within-interval events
        precede t_j in continuous time)."""
        xi = int(self.x_idx[p])
        seen = 0 <= xi <= j
        return (
            tuple(self.a_seq[p, : j + 1]),
            tuple(self.l_seq[p, :j]),
            (xi, int(self.delta[p])) if seen else None,
        )

    def to_dataset(self) -> Dataset:
        """Weighted population dataset: one pseudo-subject per path."""
        if float(self.weights.min(initial=0.0)) < -_MASS_TOL:
            raise UnsupportedOperationError("signed measures cannot back a dataset")
        x = self.event_times()
        death = np.where(self.delta == 1, x, math.inf)
        return Dataset(
            grid=self.grid,
            a=self.a_seq.copy(),
            l=self.l_seq[:, :, None].copy(),
            y_indices=self.y_indices,
            x=x,
            delta=self.delta.copy(),
            seed=None,
            provenance={"kind": "path_measure", **self.provenance},
            weights=np.maximum(self.weights, 0.0),
            death_times=death,
        )

    def dump_csv(self, path) -> None:
        k1 = self.a_seq.shape[1]
        cols = {f"a{j}": self.a_seq[:, j] for j in range(k1)}
        cols.update({f"l{j}": self.l_seq[:, j] for j in range(k1)})
        cols["x_idx"] = self.x_idx
        cols["delta"] = self.delta
        cols["weight"] = self.weights
        pd.DataFrame(cols).to_csv(path, index=False, float_format="%.17g")


@dataclass
class _State:
    a: list
    l: list
    status: str          # 'active' | 'dead' | 'cens'
    x_idx: int
    delta: int
    w: float


def _scalar_prob(spec, j, a_seq, l_seq, include_current_a) -> float:
    a = np.asarray(a_seq, dtype=float)[None, :]
    l = np.asarray(l_seq, dtype=float)[None, :]
    return float(spec.prob_one(j, a, l, include_current_a)[0])


def _obs_treatment_branches(cfg, j, st):
    spec = cfg.treatment[j]
    if spec.kind == "point":
        return [(float(spec.value), 1.0)]
    if spec.kind == "carry":
        return [(st.a[-1], 1.0)]
    p1 = _scalar_prob(spec, j, st.a + [0.0], st.l, include_current_a=False)
    return [(v, w) for v, w in ((1.0, p1), (0.0, 1.0 - p1)) if w > 0.0]


def _regime_branches(regime: Regime, j, st):
    a_hist = np.asarray(st.a, dtype=float)[None, :]
    if isinstance(regime, PointMassRegime):
        return [(float(regime.target(j, a_hist)[0]), 1.0)]
    if isinstance(regime, DiscreteRegime):
        probs = regime.probs(j, a_hist)[0]
        return [(v, float(w)) for v, w in zip(regime.support, probs) if w > 0.0]
    raise UnsupportedOperationError("exact enumeration needs a discrete or point-mass regime")


def _confounder_branches(cfg, j, a_seq, l_seq):
    spec = cfg.confounder[j]
    if spec.kind == "point":
        return [(float(spec.value), 1.0)]
    if spec.kind == "carry":
        return [(l_seq[-1], 1.0)]
    p1 = _scalar_prob(spec, j, a_seq, l_seq, include_current_a=True)
    return [(v, w) for v, w in ((1.0, p1), (0.0, 1.0 - p1)) if w > 0.0]


def _hazard_prob(spec, j, a_seq, l_seq, dt=1.0) -> float:
    a = np.asarray(a_seq, dtype=float)[None, :]
    l = np.asarray(l_seq, dtype=float)[None, :]
    return float(spec.step_prob(j, a, l, dt)[0])


def _enumerate(cfg: DiscreteRegularConfig, regime: Regime | None, keep_censoring: bool,
               path_cap: int) -> PathMeasure:
    k = cfg.n_steps
    dts = [1.0] * (k + 1)  # unit grid
    states = [_State([], [], "active", -1, 1, 1.0)]
    dropped = 0.0
    for j in range(k + 1):
        nxt: list[_State] = []
        for st in states:
            if st.status != "active":
                nxt.append(_State(st.a + [st.a[-1]], st.l + [st.l[-1]], st.status,
                                  st.x_idx, st.delta, st.w))
                continue
            if regime is None:
                branches = _obs_treatment_branches(cfg, j, st)
            else:
                branches = _regime_branches(regime, j, st)
                obs = dict(_obs_treatment_branches(cfg, j, st))
                kept = []
                for v, w in branches:
                    if obs.get(v, 0.0) <= 0.0:
                        dropped += st.w * w
                    else:
                        kept.append((v, w))
                branches = kept
            for a_val, w_a in branches:
                a_seq = st.a + [a_val]
                cont = st.w * w_a
                if j >= 1 and (cfg.death is not None or cfg.censoring is not None):
                    p_t = _hazard_prob(cfg.death, j, a_seq, st.l, dts[j]) if cfg.death else 0.0
                    p_c = (_hazard_prob(cfg.censoring, j, a_seq, st.l, dts[j])
                           if (cfg.censoring and keep_censoring) else 0.0)
                    if p_t > 0.0:
                        nxt.append(_State(a_seq, st.l + [st.l[-1]], "dead", j, 1,
                                          cont * p_t))
                    if p_c > 0.0:
                        nxt.append(_State(a_seq, st.l + [st.l[-1]], "cens", j, 0,
                                          cont * (1.0 - p_t) * p_c))
                    cont = cont * (1.0 - p_t) * (1.0 - p_c)
                if cont == 0.0:
                    continue
                for l_val, w_l in _confounder_branches(cfg, j, a_seq, st.l):
                    nxt.append(_State(a_seq, st.l + [l_val], "active", -1, 1,
                                      cont * w_l))
        states = nxt
        if len(states) > path_cap:
            raise TooLargeError(f"path table exceeds cap {path_cap} at index {j}")

    return PathMeasure(
        grid=Partition(cfg.grid_points),
        a_seq=np.array([s.a for s in states], dtype=float),
        l_seq=np.array([s.l for s in states], dtype=float),
        x_idx=np.array([s.x_idx for s in states], dtype=np.int64),
        delta=np.array([s.delta for s in states], dtype=np.int8),
        weights=np.array([s.w for s in states], dtype=float),
        dropped_mass=dropped,
        provenance={"intervened": regime is not None},
    )


def enumerate_observational_measure(cfg: DiscreteRegularConfig,
                                    path_cap: int = PATH_CAP) -> PathMeasure:
    return _enumerate(cfg, regime=None, keep_censoring=True, path_cap=path_cap)


def enumerate_intervened_measure(cfg: DiscreteRegularConfig,
                                 regime: Regime | SignedRegime,
                                 partition: Partition | None = None,
                                 path_cap: int = PATH_CAP) -> PathMeasure:
    """Replace every treatment factor by the regime and zero censoring.

    Only the native grid of the configuration is supported here; partition
    sequences for genuinely continuous instances live in the CTMC oracle.
    """
    if partition is not None and tuple(partition.points) != cfg.grid_points:
        raise InvalidArgumentError("intervened enumeration runs on the native grid")
    if isinstance(regime, SignedRegime):
        parts = [(c, _enumerate(cfg, r, keep_censoring=False, path_cap=path_cap))
                 for c, r in regime.components]
        return _combine_signed(parts)
    return _enumerate(cfg, regime, keep_censoring=False, path_cap=path_cap)


def _combine_signed(parts) -> PathMeasure:
    table: dict[tuple, float] = {}
    meta: dict[tuple, tuple] = {}
    ref = parts[0][1]
    for coef, m in parts:
        for p in range(m.n_paths):
            key = m.path_key(p)
            table[key] = table.get(key, 0.0) + coef * float(m.weights[p])
            meta[key] = key
    keys = sorted(table.keys())
    k1 = ref.a_seq.shape[1]
    a_seq = np.array([k[0] for k in keys], dtype=float).reshape(len(keys), k1)
    l_seq = np.array([k[1] for k in keys], dtype=float).reshape(len(keys), k1)
    return PathMeasure(
        grid=ref.grid,
        a_seq=a_seq,
        l_seq=l_seq,
        x_idx=np.array([k[2] for k in keys], dtype=np.int64),
        delta=np.array([k[3] for k in keys], dtype=np.int8),
        weights=np.array([table[k] for k in keys], dtype=float),
        dropped_mass=math.fsum(abs(c) * m.dropped_mass for c, m in parts),
        provenance={"intervened": True, "signed": True},
    )


def tv_distance(m1: PathMeasure, m2: PathMeasure) -> float:
    """Half the L1 gap for probability measures, the full variation norm of
    the difference for signed ones."""
    if m1.grid.points != m2.grid.points:
        raise InvalidArgumentError("measures live on different grids")
    table: dict[tuple, float] = {}
    for p in range(m1.n_paths):
        table[m1.path_key(p)] = table.get(m1.path_key(p), 0.0) + float(m1.weights[p])
    for p in range(m2.n_paths):
        table[m2.path_key(p)] = table.get(m2.path_key(p), 0.0) - float(m2.weights[p])
    total = math.fsum(abs(v) for v in table.values())
    if m1.is_probability and m2.is_probability:
        return 0.5 * total
    return total


def exact_target(m: PathMeasure, nu: TargetFunctional) -> float:
    ds = _measure_values(m, nu)
    return math.fsum((m.weights * ds).tolist())


def _measure_values(m: PathMeasure, nu: TargetFunctional) -> np.ndarray:
    ds = Dataset(
        grid=m.grid, a=m.a_seq.copy(), l=m.l_seq[:, :, None].copy(),
        y_indices=m.y_indices, x=m.event_times(), delta=m.delta.copy(),
    )
    return nu.evaluate_batch(ds)


def measure_to_dataset(m: PathMeasure) -> Dataset:
    return m.to_dataset()


def prefix_masses(m: PathMeasure, j: int, kind: str = "g") -> dict[tuple, float]:
    key_fn = m.g_prefix_key if kind == "g" else m.q_prefix_key
    out: dict[tuple, float] = {}
    for p in range(m.n_paths):
        key = key_fn(p, j)
        out[key] = out.get(key, 0.0) + float(m.weights[p])
    return out


def process_l1_norm(m: PathMeasure, values_by_path: np.ndarray) -> float:
    """L1 norm of a path functional under a finite measure, for the
    integrability side conditions the identification results carry."""
    return math.fsum((np.abs(values_by_path) * np.abs(m.weights)).tolist())
