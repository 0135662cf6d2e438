"""Finite-state joint chain on binary (A, L), discretized at fine resolution.

The continuous-time generator gets exponentiated once; simulation then
walks the fine grid with that exact kernel.  This is the designated vehicle
for partition-limit experiments: grid-sampled conditionals differ across
partition sizes yet stay computable with matrix products (see
``funlong.oracle.ctmc_exact``).
"""
from __future__ import annotations

import numpy as np
from scipy.linalg import expm

from funlong.core.data import Dataset
from funlong.core.errors import InvalidConfigError, UnsupportedOperationError
from funlong.core.grid import Partition
from funlong.core.regimes import PointMassRegime, Regime
from funlong.dgp.config import CtmcConfig
from funlong.dgp.rng import stream

# joint state encoding: s = 2 * a + l


def generator(cfg: CtmcConfig) -> np.ndarray:
    q = np.zeros((4, 4))
    for a in (0, 1):
        for l in (0, 1):
            s = 2 * a + l
            ra = cfg.a_flip[0] + cfg.a_flip[1] * l
            rl = cfg.l_flip[0] + cfg.l_flip[1] * a
            q[s, 2 * (1 - a) + l] += ra
            q[s, 2 * a + (1 - l)] += rl
            q[s, s] -= ra + rl
    return q


def fine_kernel(cfg: CtmcConfig) -> np.ndarray:
    return expm(generator(cfg) * cfg.h)


def initial_distribution(cfg: CtmcConfig) -> np.ndarray:
    pi = np.zeros(4)
    for a in (0, 1):
        for l in (0, 1):
            pa = cfg.a0_p1 if a == 1 else 1.0 - cfg.a0_p1
            pl = cfg.l0_p1 if l == 1 else 1.0 - cfg.l0_p1
            pi[2 * a + l] = pa * pl
    return pi


def simulate_finite_state_ctmc(cfg: CtmcConfig, n: int, seed: int,
                               regime: Regime | None = None) -> Dataset:
    """Walk the fine kernel; under a (point-mass) regime the treatment
    column is forced and the confounder follows its conditional law given
    the forced transition."""
    if n < 1:
        raise InvalidConfigError("n must be >= 1", ["n"])
    kern = fine_kernel(cfg)
    m = cfg.n_fine
    rng = stream(seed, "covariate")
    rng_init = stream(seed, "init")

    if regime is not None and not isinstance(regime, PointMassRegime):
        raise UnsupportedOperationError(
            "interventional chain simulation supports point-mass regimes"
        )

    pi0 = initial_distribution(cfg)
    state = np.searchsorted(np.cumsum(pi0), rng_init.random(n), side="right")
    a_hist = np.empty((n, m + 1))
    if regime is not None:
        a0 = np.asarray(regime.target(0, np.empty((n, 0))), dtype=int)
        state = 2 * a0 + state % 2
    a_hist[:, 0] = state // 2

    a_out = np.empty((n, m + 1), dtype=np.int8)
    l_out = np.empty((n, m + 1, 1), dtype=np.int8)
    a_out[:, 0] = state // 2
    l_out[:, 0, 0] = state % 2

    cum = np.cumsum(kern, axis=1)
    for i in range(1, m + 1):
        u = rng.random(n)
        if regime is None:
            state = (u[:, None] >= cum[state]).sum(axis=1)
        else:
            a_new = np.asarray(regime.target(i, a_hist[:, :i]), dtype=int)
            block = np.where(a_new[:, None] == 1, kern[state][:, 2:4], kern[state][:, 0:2])
            block = block / block.sum(axis=1, keepdims=True)
            l_new = (u >= block[:, 0]).astype(int)
            state = 2 * a_new + l_new
        a_hist[:, i] = state // 2
        a_out[:, i] = state // 2
        l_out[:, i, 0] = state % 2

    grid = Partition(cfg.stored_points)
    return Dataset(
        grid=grid, a=a_out, l=l_out, y_indices=(0,), seed=seed,
        provenance={"kind": cfg.kind, "n": n, "seed": seed,
                    "regime": type(regime).__name__ if regime else None},
    )
