"""Marked point process simulator via thinning.

Candidate jump times arrive at the global intensity bound; each candidate
is accepted with probability (true intensity at t-) / bound and then typed
as a treatment or confounder jump proportionally to the component
intensities.  Intensities are piecewise constant between jumps, so the
bound argument is exact.  Paths are rendered piecewise constant on the
fine grid; exact jump times stay internal.
"""
from __future__ import annotations

import math

import numpy as np

from funlong.core.data import Dataset
from funlong.core.errors import InternalSimulationError, InvalidConfigError, PositivityError
from funlong.core.grid import Partition
from funlong.core.regimes import PointMassRegime, Regime
from funlong.dgp.config import MppConfig
from funlong.dgp.rng import stream


def _sigmoid(x: float) -> float:
    return 1.0 / (1.0 + math.exp(-x))


def _intensities(cfg: MppConfig, a: float, l: int) -> tuple[float, float]:
    lam_a = cfg.a_rate0 + cfg.a_rate_l * (1.0 if l == 1 else 0.0)
    lam_l = cfg.l_rate0 + cfg.l_rate_a * _sigmoid(a) if cfg.l_rate_a else cfg.l_rate0
    return lam_a, lam_l


def _draw_a_mark(cfg: MppConfig, a: float, l: int, rng, regime: Regime | None,
                 jump_ordinal: int, a_marks_so_far: list[float]) -> float:
    if regime is not None:
        hist = np.asarray(a_marks_so_far, dtype=float)[None, :]
        return float(np.asarray(regime.sample(jump_ordinal, hist, rng)).ravel()[0])
    if cfg.a_mark_kind == "flip":
        rng.standard_normal()  # keep stream alignment with gaussian marks
        return 1.0 - a
    m0, m_ap, m_l, sd = cfg.a_mark_coefs
    return m0 + m_ap * a + m_l * l + sd * rng.standard_normal()


def simulate_marked_point_process(cfg: MppConfig, n: int, seed: int,
                                  regime: Regime | None = None) -> Dataset:
    """Observational draw, or one with the treatment mark law replaced.

    A regime replaces only the mark distribution at treatment jumps (the
    visit intensity is kept), so it must not be a point mass when marks are
    continuous.
    """
    if n < 1:
        raise InvalidConfigError("n must be >= 1", ["n"])
    if regime is not None:
        if cfg.a_mark_kind == "gaussian" and isinstance(regime, PointMassRegime):
            raise PositivityError("point-mass regimes are rejected on continuous marks")
        if cfg.a_rate_l != 0.0:
            raise PositivityError(
                "mark-law interventions need a confounder-free visit intensity"
            )
    bound = cfg.intensity_bound()
    if bound <= 0:
        raise InvalidConfigError("total intensity bound must be positive")
    rng = stream(seed, "event_loop")
    times = np.asarray(cfg.stored_points)
    m1 = len(times)

    a_out = np.empty((n, m1))
    l_out = np.empty((n, m1, 1))
    n_a_jumps = np.zeros(n, dtype=np.int64)

    for i in range(n):
        a, l = cfg.a0, cfg.l0
        t = 0.0
        jump_t: list[float] = [0.0]
        jump_a: list[float] = [a]
        jump_l: list[int] = [l]
        a_marks: list[float] = []
        while True:
            t += rng.exponential(1.0 / bound)
            if t > cfg.tau:
                break
            lam_a, lam_l = _intensities(cfg, a, l)
            total = lam_a + lam_l
            if total > bound * (1.0 + 1e-12):
                raise InternalSimulationError(
                    f"intensity {total:.4g} exceeded its bound {bound:.4g} at t={t:.4g}"
                )
            u = rng.random()
            if u >= total / bound:
                continue  # thinned out
            if u < lam_a / bound:
                a = _draw_a_mark(cfg, a, l, rng, regime, len(a_marks), a_marks)
                a_marks.append(a)
                n_a_jumps[i] += 1
            else:
                l = 1 - l
            jump_t.append(t)
            jump_a.append(a)
            jump_l.append(l)
        idx = np.searchsorted(np.asarray(jump_t), times + 1e-12, side="right") - 1
        a_out[i] = np.asarray(jump_a)[idx]
        l_out[i, :, 0] = np.asarray(jump_l)[idx]

    grid = Partition(cfg.stored_points)
    return Dataset(
        grid=grid, a=a_out, l=l_out, y_indices=(0,), seed=seed,
        provenance={"kind": cfg.kind, "n": n, "seed": seed,
                    "regime": type(regime).__name__ if regime else None,
                    "a_jump_counts_mean": float(n_a_jumps.mean())},
    )


def gaussian_mark_density(cfg: MppConfig, new_a: np.ndarray, prev_a: np.ndarray,
                          prev_l: np.ndarray) -> np.ndarray:
    """Observational mark density at a treatment jump (gaussian marks)."""
    m0, m_ap, m_l, sd = cfg.a_mark_coefs
    mean = m0 + m_ap * prev_a + m_l * prev_l
    z = (new_a - mean) / sd
    return np.exp(-0.5 * z * z) / (sd * math.sqrt(2.0 * math.pi))
