"""Regular-design simulator: sequential draws down the Markov factorization.

Per grid index j the treatment is drawn from its conditional given history
through j-1, then the confounder given the treatment history through j and
confounders through j-1.  Vectorized over subjects; one uniform per subject
per index per stream, drawn unconditionally for alignment.
"""
from __future__ import annotations

import numpy as np

from funlong.core.data import Dataset
from funlong.core.errors import InvalidConfigError
from funlong.core.grid import Partition
from funlong.core.regimes import Regime
from funlong.dgp.config import DiscreteRegularConfig, StepSpec
from funlong.dgp.rng import stream


def _step_values(spec: StepSpec, j: int, a: np.ndarray, l: np.ndarray, u: np.ndarray,
                 include_current_a: bool, prev: np.ndarray | None) -> np.ndarray:
    if spec.kind == "point":
        return np.full(u.shape[0], float(spec.value))
    if spec.kind == "carry":
        assert prev is not None
        return prev.copy()
    p = spec.prob_one(j, a, l, include_current_a)
    if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
        raise InvalidConfigError("step probability left [0,1] on realized histories")
    return (u < p).astype(float)


def simulate_discrete_regular(cfg: DiscreteRegularConfig, n: int, seed: int,
                              regime: Regime | None = None) -> Dataset:
    """Observational draw, or an interventional one when ``regime`` is given
    (treatment conditionals replaced, covariate stream untouched)."""
    if n < 1:
        raise InvalidConfigError("n must be >= 1", ["n"])
    k = cfg.n_steps
    rng_a = stream(seed, "treatment")
    rng_l = stream(seed, "covariate")
    a = np.zeros((n, k + 1))
    l = np.zeros((n, k + 1, 1))
    for j in range(k + 1):
        u_a = rng_a.random(n)
        if regime is None:
            a[:, j] = _step_values(cfg.treatment[j], j, a, l[:, :, 0], u_a,
                                   include_current_a=False,
                                   prev=a[:, j - 1] if j else None)
        else:
            a[:, j] = regime.sample(j, a[:, :j], rng_a)
        u_l = rng_l.random(n)
        l[:, j, 0] = _step_values(cfg.confounder[j], j, a, l[:, :, 0], u_l,
                                  include_current_a=True,
                                  prev=l[:, j - 1, 0] if j else None)
    grid = Partition(cfg.grid_points)
    return Dataset(
        grid=grid, a=a, l=l, y_indices=(0,), seed=seed,
        provenance={"kind": cfg.kind, "n": n, "seed": seed,
                    "regime": type(regime).__name__ if regime else None},
    )
