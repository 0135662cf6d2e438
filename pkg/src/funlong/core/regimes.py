"""Intervention regimes: measures on treatment paths, factorized per index.

A regime prescribes, for every partition index j, the conditional law of
the treatment given the treatment history alone.  Point-mass regimes fix a
value; stochastic regimes carry a conditional density or pmf.  Regimes
never see confounders, which is what makes them interventions.

``SignedRegime`` represents formal linear combinations such as the
always-treat minus never-treat contrast; only the exact-measure oracle
consumes those.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from funlong.core.errors import InvalidArgumentError

GH_DEFAULT_ORDER = 21


class Regime:
    """Base class. ``a_hist`` is the (n, j) array of treatments at indices
    0..j-1 (empty second axis at j=0)."""

    kind: str = "stochastic"
    is_continuous: bool = False

    def sample(self, j: int, a_hist: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def weight(self, j: int, values: np.ndarray, a_hist: np.ndarray) -> np.ndarray:
        """Conditional density / pmf / indicator of ``values`` at index j."""
        raise NotImplementedError


class PointMassRegime(Regime):
    """Deterministic treatment path. ``values`` is one value per index, or a
    callable (j, a_hist) -> (n,) for history-dependent deterministic rules."""

    kind = "point_mass"

    def __init__(self, values: Sequence[float] | Callable[[int, np.ndarray], np.ndarray]):
        self._values = values

    def target(self, j: int, a_hist: np.ndarray) -> np.ndarray:
        n = a_hist.shape[0]
        if callable(self._values):
            return np.asarray(self._values(j, a_hist), dtype=float) * np.ones(n)
        return np.full(n, float(self._values[j]))

    def sample(self, j, a_hist, rng):
        return self.target(j, a_hist)

    def weight(self, j, values, a_hist):
        return (np.asarray(values, dtype=float) == self.target(j, a_hist)).astype(float)


class DiscreteRegime(Regime):
    """Stochastic regime on a finite treatment space.

    ``probs`` maps (j, a_hist (n, j)) to an (n, S) matrix of conditional
    probabilities over ``support``.
    """

    def __init__(self, support: Sequence[float], probs: Callable[[int, np.ndarray], np.ndarray]):
        self.support = tuple(float(v) for v in support)
        self._probs = probs

    def probs(self, j: int, a_hist: np.ndarray) -> np.ndarray:
        p = np.atleast_2d(np.asarray(self._probs(j, a_hist), dtype=float))
        if p.shape[1] != len(self.support):
            raise InvalidArgumentError("probability matrix does not match support size")
        return p

    def sample(self, j, a_hist, rng):
        p = self.probs(j, a_hist)
        u = rng.random(p.shape[0])
        cum = np.cumsum(p, axis=1)
        idx = (u[:, None] >= cum).sum(axis=1)
        return np.asarray(self.support)[idx]

    def weight(self, j, values, a_hist):
        p = self.probs(j, a_hist)
        values = np.asarray(values, dtype=float)
        out = np.zeros(p.shape[0])
        for s, v in enumerate(self.support):
            out = np.where(values == v, p[:, s], out)
        return out


def bernoulli_regime(p_fn: Callable[[int, np.ndarray], np.ndarray]) -> DiscreteRegime:
    """Binary stochastic regime; ``p_fn(j, a_hist)`` is P(a=1 | history)."""

    def probs(j, a_hist):
        p1 = np.asarray(p_fn(j, a_hist), dtype=float) * np.ones(a_hist.shape[0])
        return np.column_stack([1.0 - p1, p1])

    return DiscreteRegime((0.0, 1.0), probs)


class GaussianRegime(Regime):
    """Gaussian conditional draw with mean affine in the previous treatment.

    mean_j = intercept + prev_coef * a_{j-1}   (intercept alone at j = 0)
    """

    is_continuous = True

    def __init__(self, intercept: float, prev_coef: float, sd: float):
        if sd <= 0:
            raise InvalidArgumentError("sd must be positive")
        self.intercept = float(intercept)
        self.prev_coef = float(prev_coef)
        self.sd = float(sd)

    def mean(self, j: int, a_hist: np.ndarray) -> np.ndarray:
        n = a_hist.shape[0]
        if j == 0 or a_hist.shape[1] == 0:
            return np.full(n, self.intercept)
        return self.intercept + self.prev_coef * np.asarray(a_hist[:, -1], dtype=float)

    def sample(self, j, a_hist, rng):
        return self.mean(j, a_hist) + self.sd * rng.standard_normal(a_hist.shape[0])

    def weight(self, j, values, a_hist):
        z = (np.asarray(values, dtype=float) - self.mean(j, a_hist)) / self.sd
        return np.exp(-0.5 * z * z) / (self.sd * np.sqrt(2.0 * np.pi))


@dataclass(frozen=True)
class SignedRegime:
    """Formal linear combination sum_i coef_i * regime_i (a signed measure).

    Consumed by the enumeration oracle only; sample-level estimators handle
    contrasts by linearity over the components.
    """

    components: tuple[tuple[float, Regime], ...]

    @property
    def total_mass(self) -> float:
        return float(sum(c for c, _ in self.components))


def contrast(plus: Regime, minus: Regime) -> SignedRegime:
    return SignedRegime(((1.0, plus), (-1.0, minus)))


def expect_over_regime(
    regime: Regime,
    j: int,
    a_hist: np.ndarray,
    f: Callable[[np.ndarray], np.ndarray],
    gh_order: int = GH_DEFAULT_ORDER,
) -> np.ndarray:
    """E_regime[f(a)] per subject, integrating over the index-j draw.

    Exact sums on discrete supports; Gauss-Hermite quadrature for Gaussian
    regimes (exact for polynomial integrands up to degree 2*gh_order - 1).
    """
    if isinstance(regime, PointMassRegime):
        return np.asarray(f(regime.target(j, a_hist)), dtype=float)
    if isinstance(regime, DiscreteRegime):
        p = regime.probs(j, a_hist)
        out = np.zeros(p.shape[0])
        for s, v in enumerate(regime.support):
            out += p[:, s] * np.asarray(f(np.full(p.shape[0], v)), dtype=float)
        return out
    if isinstance(regime, GaussianRegime):
        nodes, wts = np.polynomial.hermite.hermgauss(gh_order)
        mean = regime.mean(j, a_hist)
        out = np.zeros(a_hist.shape[0])
        for x, w in zip(nodes, wts):
            out += w * np.asarray(f(mean + np.sqrt(2.0) * regime.sd * x), dtype=float)
        return out / np.sqrt(np.pi)
    raise InvalidArgumentError(f"cannot integrate over regime type {type(regime).__name__}")


def check_normalization(regime: Regime, j: int, a_hist: np.ndarray, tol: float = 1e-12) -> float:
    """Max |sum of weights - 1| over the given histories (discrete spaces)."""
    if isinstance(regime, DiscreteRegime):
        total = regime.probs(j, a_hist).sum(axis=1)
        return float(np.abs(total - 1.0).max())
    if isinstance(regime, PointMassRegime):
        return 0.0
    raise InvalidArgumentError("normalization check is for discrete regimes")
