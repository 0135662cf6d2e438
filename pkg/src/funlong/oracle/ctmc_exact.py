"""Matrix-product oracle for the finite-state chain.

The partition-indexed intervened measure keeps the observational law of
the confounder segment within each partition block, conditioned on the
treatment path assigned through the block's end.  Conditioning on a future
treatment window is exactly the treatment-confounder-feedback distortion;
it shrinks as the partition refines.  Everything here is a product of 2x2
matrices: block kernels, their Doob conditioning, projected measures on a
small evaluation grid, and grid-sampled conditionals for estimators.
"""
from __future__ import annotations

import math

import numpy as np

from funlong.core.errors import InvalidArgumentError, UnsupportedOperationError
from funlong.core.grid import Partition
from funlong.core.processes import NuisanceProcess
from funlong.core.regimes import PointMassRegime, Regime
from funlong.dgp.config import CtmcConfig, MppConfig
from funlong.dgp.ctmc import fine_kernel, generator, initial_distribution
from funlong.oracle.measure import PathMeasure


def _regime_pattern(regime: Regime, k: int) -> list[int]:
    if not isinstance(regime, PointMassRegime):
        raise UnsupportedOperationError("chain oracle needs a point-mass regime")
    vals: list[int] = []
    for j in range(k + 1):
        hist = np.asarray(vals, dtype=float)[None, :]
        vals.append(int(regime.target(j, hist)[0]))
    return vals


def _l_block(kern: np.ndarray, a_from: int, a_to: int) -> np.ndarray:
    """2x2 sub-kernel over L for a fixed treatment transition."""
    out = np.empty((2, 2))
    for l in (0, 1):
        for l2 in (0, 1):
            out[l, l2] = kern[2 * a_from + l, 2 * a_to + l2]
    return out


def _block_step_kernels(kern: np.ndarray, pattern: list[int], k: int, m: int,
                        j: int) -> list[np.ndarray]:
    """Fine-step L-matrices for partition block j (treatment switches on the
    block's final step, where the index-j assignment lands)."""
    a_prev, a_new = pattern[j - 1], pattern[j]
    mats = [_l_block(kern, a_prev, a_prev) for _ in range(m - 1)]
    mats.append(_l_block(kern, a_prev, a_new))
    return mats


def _condition_block(mats: list[np.ndarray]) -> list[np.ndarray]:
    """Doob conditioning on the block's treatment path: row-stochastic
    kernels whose product equals the normalized product of ``mats``."""
    m = len(mats)
    u = [np.ones(2) for _ in range(m + 1)]
    for i in range(m - 1, -1, -1):
        u[i] = mats[i] @ u[i + 1]
    out = []
    for i in range(m):
        kernel = mats[i] * u[i + 1][None, :]
        kernel = kernel / u[i][:, None]
        out.append(kernel)
    return out


def intervened_l_kernels(cfg: CtmcConfig, regime: Regime, k: int) -> list[np.ndarray]:
    """All fine-step kernels of the L-process under the K-block intervened
    measure (a time-inhomogeneous binary chain)."""
    if cfg.n_fine % k != 0:
        raise InvalidArgumentError("partition size must divide the fine grid")
    m = cfg.n_fine // k
    kern = fine_kernel(cfg)
    pattern = _regime_pattern(regime, k)
    steps: list[np.ndarray] = []
    for j in range(1, k + 1):
        steps.extend(_condition_block(_block_step_kernels(kern, pattern, k, m, j)))
    return steps


def _initial_l(cfg: CtmcConfig) -> np.ndarray:
    return np.array([1.0 - cfg.l0_p1, cfg.l0_p1])


def projected_intervened_measure(cfg: CtmcConfig, regime: Regime, k: int,
                                 eval_k: int = 8) -> PathMeasure:
    """Joint law of the confounder at eval_k + 1 equally spaced grid times
    under the K-block intervened measure, as an enumerated PathMeasure."""
    if cfg.n_fine % eval_k != 0:
        raise InvalidArgumentError("eval grid must divide the fine grid")
    steps = intervened_l_kernels(cfg, regime, k)
    eval_stride = cfg.n_fine // eval_k
    pattern = _regime_pattern(regime, k)
    m = cfg.n_fine // k

    p0 = _initial_l(cfg)
    # mass[(recorded tuple)][l] built incrementally
    mass: dict[tuple, np.ndarray] = {(0,): np.array([p0[0], 0.0]),
                                     (1,): np.array([0.0, p0[1]])}
    for i in range(1, cfg.n_fine + 1):
        kern = steps[i - 1]
        mass = {rec: vec @ kern for rec, vec in mass.items()}
        if i % eval_stride == 0:
            nxt: dict[tuple, np.ndarray] = {}
            for rec, vec in mass.items():
                for l in (0, 1):
                    if vec[l] != 0.0:
                        unit = np.zeros(2)
                        unit[l] = vec[l]
                        nxt[rec + (l,)] = nxt.get(rec + (l,), 0.0) + unit
            mass = nxt

    recs = sorted(mass.keys())
    weights = np.array([float(mass[r].sum()) for r in recs])
    l_seq = np.array(recs, dtype=float)
    eval_cols = [0] + list(range(eval_stride, cfg.n_fine + 1, eval_stride))
    a_seq = np.array([[float(pattern[min(c // m, k)]) for c in eval_cols]] * len(recs))
    times = tuple(c * cfg.h for c in eval_cols)
    return PathMeasure(
        grid=Partition(times),
        a_seq=a_seq,
        l_seq=l_seq,
        x_idx=np.full(len(recs), -1, dtype=np.int64),
        delta=np.ones(len(recs), dtype=np.int8),
        weights=weights,
        provenance={"kind": "ctmc_projection", "k": k, "eval_k": eval_k},
    )


def intervened_terminal_mean(cfg: CtmcConfig, regime: Regime, k: int) -> float:
    """E[L(tau)] under the K-block intervened measure."""
    steps = intervened_l_kernels(cfg, regime, k)
    vec = _initial_l(cfg)
    for kern in steps:
        vec = vec @ kern
    return float(vec[1])


def grid_block_kernel(cfg: CtmcConfig, k: int) -> np.ndarray:
    if cfg.n_fine % k != 0:
        raise InvalidArgumentError("partition size must divide the fine grid")
    m = cfg.n_fine // k
    return np.linalg.matrix_power(fine_kernel(cfg), m)


def grid_propensity(cfg: CtmcConfig, k: int) -> np.ndarray:
    """prop[a_prev, l_prev, a_new] = P(a(t_j) = a_new | state at t_{j-1})."""
    blk = grid_block_kernel(cfg, k)
    out = np.empty((2, 2, 2))
    for a in (0, 1):
        for l in (0, 1):
            for a2 in (0, 1):
                out[a, l, a2] = blk[2 * a + l, 2 * a2] + blk[2 * a + l, 2 * a2 + 1]
    return out


def grid_l_conditional(cfg: CtmcConfig, k: int) -> np.ndarray:
    """cond[a_prev, l_prev, a_new, l_new] = P(l(t_j) | state, a(t_j))."""
    blk = grid_block_kernel(cfg, k)
    out = np.empty((2, 2, 2, 2))
    for a in (0, 1):
        for l in (0, 1):
            for a2 in (0, 1):
                tot = blk[2 * a + l, 2 * a2] + blk[2 * a + l, 2 * a2 + 1]
                for l2 in (0, 1):
                    out[a, l, a2, l2] = blk[2 * a + l, 2 * a2 + l2] / tot
    return out


def grid_initial(cfg: CtmcConfig) -> tuple[np.ndarray, np.ndarray]:
    """(P(a_0), P(l_0 | a_0)) at the first grid point (independent init)."""
    pa = np.array([1.0 - cfg.a0_p1, cfg.a0_p1])
    pl = np.tile(_initial_l(cfg), (2, 1))
    return pa, pl


def exact_h_grid(cfg: CtmcConfig, regime: Regime, k: int) -> tuple[np.ndarray, float]:
    """Grid-level g-computation table for nu = terminal L.

    Returns H[j, a_j, a_prev, l_prev] (with the j = 0 slice constant over
    the unused lags) and the K-block target value H(0-).
    """
    pattern = _regime_pattern(regime, k)
    cond = grid_l_conditional(cfg, k)
    h = np.zeros((k + 1, 2, 2, 2))
    # index K: E[l_K | a_K, a_{K-1}, l_{K-1}]
    for a2 in (0, 1):
        for a in (0, 1):
            for l in (0, 1):
                h[k, a2, a, l] = cond[a, l, a2, 1]
    for j in range(k - 1, 0, -1):
        a_next = pattern[j + 1]
        for a2 in (0, 1):
            for a in (0, 1):
                for l in (0, 1):
                    acc = 0.0
                    for l2 in (0, 1):
                        acc += cond[a, l, a2, l2] * h[j + 1, a_next, a2, l2]
                    h[j, a2, a, l] = acc
    # j = 0: condition on a_0 only
    _, pl0 = grid_initial(cfg)
    a1 = pattern[1]
    for a0 in (0, 1):
        acc = 0.0
        for l0 in (0, 1):
            acc += pl0[a0, l0] * h[1, a1, a0, l0]
        h[0, a0, :, :] = acc
    target = float(h[0, pattern[0], 0, 0])
    return h, target


class CtmcExactH(NuisanceProcess):
    """Batch adapter over the grid-level g-computation table."""

    label = "H-like"

    def __init__(self, cfg: CtmcConfig, regime: Regime, k: int):
        self.h, self.target = exact_h_grid(cfg, regime, k)
        self.k = k

    def evaluate_batch(self, batch) -> np.ndarray:
        j = batch.j
        a_j = batch.a[:, j].astype(int)
        if j == 0:
            return self.h[0, a_j, 0, 0]
        a_prev = batch.a[:, j - 1].astype(int)
        l_prev = batch.l[:, j - 1, 0].astype(int)
        return self.h[j, a_j, a_prev, l_prev]


def expected_treatment_jumps(cfg: MppConfig, steps: int = 4000) -> float:
    """E[number of treatment jumps on [0, tau]] for the binary-flip process,
    via the matched joint generator and a trapezoid rule over exact
    marginals."""
    if cfg.a_mark_kind != "flip":
        raise UnsupportedOperationError("jump-count oracle covers binary-flip marks")
    sig0 = 1.0 / (1.0 + math.exp(0.0))
    sig1 = 1.0 / (1.0 + math.exp(-1.0))
    matched = CtmcConfig(
        tau=cfg.tau, n_fine=2,
        a_flip=(cfg.a_rate0, cfg.a_rate_l),
        l_flip=(cfg.l_rate0 + cfg.l_rate_a * sig0, cfg.l_rate_a * (sig1 - sig0)),
        a0_p1=float(cfg.a0), l0_p1=float(cfg.l0),
    )
    q = generator(matched)
    from scipy.linalg import expm

    h = cfg.tau / steps
    step_kernel = expm(q * h)
    pi = initial_distribution(matched)
    lam = np.array([cfg.a_rate0 + cfg.a_rate_l * (s % 2) for s in range(4)])
    vals = []
    for _ in range(steps + 1):
        vals.append(float(pi @ lam))
        pi = pi @ step_kernel
    vals = np.asarray(vals)
    return float(h * (vals[0] / 2 + vals[1:-1].sum() + vals[-1] / 2))
