"""Linear-Gaussian diffusion simulator (Euler-Maruyama on a fine grid).

Within each fine index i the treatment moves first (a fresh Gaussian draw
at update indices, carried otherwise), then the confounder takes one Euler
step driven by the just-assigned treatment:

    L_i = L_{i-1} + (beta0 + beta_a * A_i + beta_l * L_{i-1}) h + sigma_l sqrt(h) Z_i

Only every ``store_every``-th fine column is kept in the dataset, so
estimator partitions subsample the stored grid.
"""
from __future__ import annotations

import numpy as np

from funlong.core.data import Dataset
from funlong.core.errors import InvalidConfigError, PositivityError
from funlong.core.grid import Partition
from funlong.core.regimes import PointMassRegime, Regime
from funlong.dgp.config import DiffusionConfig
from funlong.dgp.rng import stream


def simulate_linear_gaussian_diffusion(cfg: DiffusionConfig, n: int, seed: int,
                                       regime: Regime | None = None) -> Dataset:
    if n < 1:
        raise InvalidConfigError("n must be >= 1", ["n"])
    if regime is not None and isinstance(regime, PointMassRegime):
        raise PositivityError(
            "point-mass regimes are rejected on continuous treatment spaces"
        )
    h = cfg.h
    m = cfg.n_fine
    rng_a = stream(seed, "treatment")
    rng_l = stream(seed, "covariate")
    rng_0 = stream(seed, "init")

    l_cur = cfg.l0_mean + cfg.l0_sd * rng_0.standard_normal(n)
    a_cur = np.zeros(n)

    n_upd = m // cfg.update_every + 1
    update_cols = set(range(0, m + 1, cfg.update_every))
    stored_cols = list(range(0, m + 1, cfg.store_every))
    store_pos = {c: k for k, c in enumerate(stored_cols)}
    a_out = np.empty((n, len(stored_cols)))
    l_out = np.empty((n, len(stored_cols), 1))

    a_upd_hist = np.empty((n, n_upd))
    upd_count = 0
    for i in range(m + 1):
        z_a = rng_a.standard_normal(n)
        if i in update_cols:
            if regime is None:
                mean = cfg.alpha0 + cfg.alpha_a * a_cur + cfg.alpha_l * l_cur
                if upd_count == 0:
                    mean = np.full(n, cfg.alpha0)
                a_cur = mean + cfg.sigma_a * z_a
            else:
                a_cur = np.asarray(
                    regime.sample(upd_count, a_upd_hist[:, :upd_count], rng_a), dtype=float
                )
            a_upd_hist[:, upd_count] = a_cur
            upd_count += 1
        if i > 0:
            z_l = rng_l.standard_normal(n)
            drift = cfg.beta0 + cfg.beta_a * a_cur + cfg.beta_l * l_cur
            l_cur = l_cur + drift * h + cfg.sigma_l * np.sqrt(h) * z_l
        if i in store_pos:
            k = store_pos[i]
            a_out[:, k] = a_cur
            l_out[:, k, 0] = l_cur

    grid = Partition(cfg.stored_points)
    return Dataset(
        grid=grid, a=a_out, l=l_out, y_indices=(0,), seed=seed,
        provenance={"kind": cfg.kind, "n": n, "seed": seed,
                    "regime": type(regime).__name__ if regime else None},
    )


def block_mean_coefs(cfg: DiffusionConfig, n_steps: int):
    """Affine coefficients of E[L after n_steps Euler steps | a held, l start]:
    (const, coef_a, coef_l)."""
    h = cfg.h
    c0, ca, cl = 0.0, 0.0, 1.0
    for _ in range(n_steps):
        c0 = c0 + (cfg.beta0 + cfg.beta_l * c0) * h
        ca = ca + (cfg.beta_a + cfg.beta_l * ca) * h
        cl = cl + cfg.beta_l * cl * h
    return c0, ca, cl


def block_noise_var(cfg: DiffusionConfig, n_steps: int) -> float:
    """Var[L after n_steps | a held, l start] from the Euler noise terms."""
    var = 0.0
    decay = 1.0 + cfg.beta_l * cfg.h
    for _ in range(n_steps):
        var = var * decay * decay + cfg.sigma_l ** 2 * cfg.h
    return var
