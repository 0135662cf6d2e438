"""Death and right censoring attached to simulated paths.

Per interval (t_{j-1}, t_j], for subjects still under observation, the
death draw fires with probability rate_T * dt given (a(t_j), history) and
the censoring draw with rate_C * dt given observed history only.  Draws are
independent given history and a death in the same interval wins the tie,
so the observable death hazard does not depend on the censoring mechanism.
Observed paths are offset (held constant) after X = min(T, C).
"""
from __future__ import annotations

import numpy as np

from funlong.core.data import Dataset
from funlong.core.errors import InvalidConfigError
from funlong.dgp.config import DiscreteRegularConfig, HazardSpec
from funlong.dgp.rng import stream

INF = float("inf")


def attach_death_and_censoring(ds: Dataset, cfg: DiscreteRegularConfig, seed: int,
                               censor: bool = True) -> Dataset:
    """Draw (T, C) on the grid of ``ds`` and return the censored dataset.

    ``censor=False`` keeps the death mechanism but forces C = inf, which is
    the interventional censoring regime.
    """
    death = cfg.death
    censoring = cfg.censoring if censor else None
    if death is None and censoring is None:
        return ds

    n = ds.n
    times = np.asarray(ds.grid.finite_points)
    dt = np.diff(times)
    rng_t = stream(seed, "death")
    rng_c = stream(seed, "censor")

    a = np.asarray(ds.a, dtype=float)
    l = ds.l[:, :, 0].astype(float)
    t_time = np.full(n, INF)
    c_time = np.full(n, INF)
    latent_alive = np.ones(n, dtype=bool)
    observed = np.ones(n, dtype=bool)      # neither dead nor censored yet

    for j in range(1, len(times)):
        u_t = rng_t.random(n)
        u_c = rng_c.random(n)
        if death is not None:
            p_t = death.step_prob(j, a[:, : j + 1], l[:, :j], dt[j - 1])
            die = latent_alive & (u_t < p_t)
            t_time[die] = times[j]
            latent_alive &= ~die
        else:
            die = np.zeros(n, dtype=bool)
        if censoring is not None:
            p_c = censoring.step_prob(j, a[:, : j + 1], l[:, :j], dt[j - 1])
            cens_now = observed & ~die & latent_alive & (u_c < p_c)
            c_time[cens_now] = times[j]
        observed &= latent_alive & (c_time == INF)

    x = np.minimum(t_time, c_time)
    delta = (t_time <= c_time).astype(np.int8)

    a_off, l_off = offset_after(ds.a, ds.l, times, x)
    prov = dict(ds.provenance)
    prov["events"] = {"death": death.coefs if death else None,
                      "censoring": censoring.coefs if censoring else None,
                      "event_seed": seed}
    return Dataset(
        grid=ds.grid, a=a_off, l=l_off, y_indices=ds.y_indices,
        x=x, delta=delta, seed=ds.seed, provenance=prov,
        weights=ds.weights, death_times=t_time,
    )


def offset_after(a: np.ndarray, l: np.ndarray, times: np.ndarray, x: np.ndarray):
    """Freeze paths after the event.

    The treatment drawn at the event index (assigned before the interval
    resolved) is kept and held afterwards; the confounder measurement at the
    event index never happens, so l freezes at the last pre-event point.
    """
    n, m1 = a.shape
    finite = np.isfinite(x)
    x_safe = np.where(finite, x, times[-1])
    last_le = np.searchsorted(times, x_safe + 1e-12, side="right") - 1
    a_cut = np.where(finite, last_le, m1 - 1)
    l_cut = np.where(finite, np.maximum(a_cut - 1, 0), m1 - 1)
    idx = np.arange(m1)[None, :]
    rows = np.arange(n)[:, None]
    a_cols = np.minimum(idx, a_cut[:, None])
    l_cols = np.minimum(idx, l_cut[:, None])
    return a[rows, a_cols], l[rows, l_cols, :]


def validate_hazard(spec: HazardSpec, dt: float) -> None:
    probs = []
    for a_cur in (0.0, 1.0):
        for a_prev in (0.0, 1.0):
            for l_prev in (0.0, 1.0):
                rate = (spec.coefs.get("intercept", 0.0)
                        + spec.coefs.get("a", 0.0) * a_cur
                        + spec.coefs.get("a_prev", 0.0) * a_prev
                        + spec.coefs.get("l_prev", 0.0) * l_prev)
                probs.append(rate * dt)
    if min(probs) < -1e-12 or max(probs) > 1 + 1e-12:
        raise InvalidConfigError("hazard step probability leaves [0,1]")
