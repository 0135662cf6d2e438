"""Configuration objects for the four data-generating process kinds.

All conditional laws are specified through small coefficient dictionaries
over a fixed lag vocabulary, evaluated on adapted slices only:

    'a'       treatment at the current index (confounder / hazard specs)
    'a_prev'  treatment one index back
    'l_prev'  confounder one index back
    'a_prev2', 'l_prev2'  two indices back

Missing lags (at the start of follow-up) contribute zero.  Structural
constraints live in the vocabulary itself: treatment specs may not read the
current confounder, and hazard specs may not read anything unobserved, so
conditionally-independent censoring and sequential randomization hold by
construction.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from funlong.core.errors import InvalidConfigError

TREATMENT_FEATURES = ("a_prev", "l_prev", "a_prev2", "l_prev2")
CONFOUNDER_FEATURES = ("a", "a_prev", "l_prev", "a_prev2", "l_prev2")
HAZARD_FEATURES = ("a", "a_prev", "l_prev")


def linear_predictor(coefs: dict, j: int, a: np.ndarray, l: np.ndarray,
                     include_current_a: bool) -> np.ndarray:
    """Evaluate intercept + sum coef*lag on batch slices.

    ``a`` has columns 0..j when include_current_a else 0..j-1; ``l`` has
    columns 0..j-1.  ``l`` may be (n, cols) or (n, cols, 1).
    """
    if l.ndim == 3:
        l = l[:, :, 0]
    n = a.shape[0]
    out = np.full(n, float(coefs.get("intercept", 0.0)))

    def a_col(lag: int) -> np.ndarray:
        col = j - lag
        return a[:, col] if col >= 0 else np.zeros(n)

    def l_col(lag: int) -> np.ndarray:
        col = j - lag
        return l[:, col] if 0 <= col < l.shape[1] else np.zeros(n)

    for key, c in coefs.items():
        if key == "intercept" or c == 0.0:
            continue
        if key == "a":
            if not include_current_a:
                raise InvalidConfigError("'a' is not available to treatment specs", ["a"])
            out = out + c * a[:, j]
        elif key == "a_prev":
            out = out + c * a_col(1)
        elif key == "a_prev2":
            out = out + c * a_col(2)
        elif key == "l_prev":
            out = out + c * l_col(1)
        elif key == "l_prev2":
            out = out + c * l_col(2)
        else:
            raise InvalidConfigError(f"unknown coefficient key {key!r}", [key])
    return out


def _expit(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


@dataclass(frozen=True)
class StepSpec:
    """One conditional Bernoulli step (or a degenerate one).

    kind 'bernoulli': P(value=1) = link(linear predictor)
    kind 'point':     point mass at ``value``
    kind 'carry':     copies the previous value (confounder specs only)
    """

    kind: str = "bernoulli"
    coefs: dict = field(default_factory=dict)
    link: str = "linear"
    value: float = 0.0

    def prob_one(self, j: int, a: np.ndarray, l: np.ndarray, include_current_a: bool) -> np.ndarray:
        if self.kind != "bernoulli":
            raise InvalidConfigError("prob_one is only defined for bernoulli steps")
        eta = linear_predictor(self.coefs, j, a, l, include_current_a)
        return _expit(eta) if self.link == "logit" else eta


def _validate_linear_unit_range(coefs: dict, feature_keys: Sequence[str], where: str) -> None:
    """All feature combos over {0,1} lags must give a probability in [0,1]."""
    active = [k for k in coefs if k != "intercept"]
    bad = [k for k in active if k not in feature_keys]
    if bad:
        raise InvalidConfigError(f"{where}: unknown coefficient keys {bad}", bad)
    lo = hi = float(coefs.get("intercept", 0.0))
    for combo in itertools.product((0.0, 1.0), repeat=len(active)):
        val = coefs.get("intercept", 0.0) + sum(c * v for c, v in zip((coefs[k] for k in active), combo))
        lo, hi = min(lo, val), max(hi, val)
    if lo < -1e-12 or hi > 1.0 + 1e-12:
        raise InvalidConfigError(
            f"{where}: linear probabilities leave [0,1] (range [{lo:.3g}, {hi:.3g}])",
            list(coefs.keys()),
        )


@dataclass(frozen=True)
class HazardSpec:
    """Per-unit-time event rate, linear over HAZARD_FEATURES.

    The per-step probability is rate * dt (validated to stay in [0, 1] for
    binary histories, capped as a last resort otherwise).
    """

    coefs: dict = field(default_factory=dict)

    def step_prob(self, j: int, a: np.ndarray, l: np.ndarray, dt: float) -> np.ndarray:
        rate = linear_predictor(self.coefs, j, a, l, include_current_a=True)
        return np.clip(rate * dt, 0.0, 1.0)


@dataclass(frozen=True)
class DiscreteRegularConfig:
    """Regular longitudinal design on the integer grid 0..n_steps.

    Binary treatment and a single binary confounder; the j-th treatment spec
    conditions on history through j-1, the j-th confounder spec additionally
    on the index-j treatment.
    """

    kind = "discrete_regular"
    n_steps: int = 2
    treatment: tuple[StepSpec, ...] = ()
    confounder: tuple[StepSpec, ...] = ()
    death: HazardSpec | None = None
    censoring: HazardSpec | None = None

    def __post_init__(self):
        if self.n_steps < 1:
            raise InvalidConfigError("n_steps must be >= 1", ["n_steps"])
        if len(self.treatment) != self.n_steps + 1:
            raise InvalidConfigError("need one treatment spec per grid index", ["treatment"])
        if len(self.confounder) != self.n_steps + 1:
            raise InvalidConfigError("need one confounder spec per grid index", ["confounder"])
        for j, spec in enumerate(self.treatment):
            if spec.kind == "carry" and j == 0:
                raise InvalidConfigError("index-0 treatment cannot carry", ["treatment"])
            if spec.kind == "bernoulli" and spec.link == "linear":
                _validate_linear_unit_range(spec.coefs, TREATMENT_FEATURES, f"treatment[{j}]")
        for j, spec in enumerate(self.confounder):
            if spec.kind == "carry" and j == 0:
                raise InvalidConfigError("index-0 confounder cannot carry", ["confounder"])
            if spec.kind == "bernoulli" and spec.link == "linear":
                _validate_linear_unit_range(spec.coefs, CONFOUNDER_FEATURES, f"confounder[{j}]")
        for name, spec in (("death", self.death), ("censoring", self.censoring)):
            if spec is not None:
                _validate_linear_unit_range(spec.coefs, HAZARD_FEATURES, name)

    @property
    def grid_points(self) -> tuple[float, ...]:
        return tuple(float(j) for j in range(self.n_steps + 1))


@dataclass(frozen=True)
class DiffusionConfig:
    """Linear-Gaussian diffusion with intermittent treatment updates.

    L follows an Euler-Maruyama recursion at step h = tau / n_fine; the
    treatment is redrawn every ``update_every`` fine steps (index 0 and the
    terminal index included) and held constant in between.  Only every
    ``store_every``-th fine point is retained in the output grid.
    """

    kind = "linear_gaussian_diffusion"
    tau: float = 1.0
    n_fine: int = 512
    update_every: int = 8
    store_every: int = 8
    l0_mean: float = 0.0
    l0_sd: float = 0.3
    alpha0: float = 0.0
    alpha_a: float = 0.5
    alpha_l: float = 0.0
    sigma_a: float = 0.5
    beta0: float = 0.0
    beta_a: float = 0.0
    beta_l: float = 0.0
    sigma_l: float = 0.3

    def __post_init__(self):
        if self.tau <= 0 or self.n_fine < 1:
            raise InvalidConfigError("tau and n_fine must be positive", ["tau", "n_fine"])
        if self.sigma_a < 0 or self.sigma_l < 0 or self.l0_sd < 0:
            raise InvalidConfigError("standard deviations must be nonnegative",
                                     ["sigma_a", "sigma_l", "l0_sd"])
        for name in ("update_every", "store_every"):
            v = getattr(self, name)
            if v < 1 or self.n_fine % v != 0:
                raise InvalidConfigError(f"{name} must divide n_fine", [name])
        if self.update_every % self.store_every != 0:
            raise InvalidConfigError("store_every must divide update_every",
                                     ["store_every", "update_every"])
        for name in ("alpha0", "alpha_a", "alpha_l", "beta0", "beta_a", "beta_l"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidConfigError(f"{name} must be finite", [name])

    @property
    def h(self) -> float:
        return self.tau / self.n_fine

    @property
    def stored_points(self) -> tuple[float, ...]:
        return tuple(i * self.h for i in range(0, self.n_fine + 1, self.store_every))

    @property
    def update_grid_points(self) -> tuple[float, ...]:
        return tuple(i * self.h for i in range(0, self.n_fine + 1, self.update_every))


@dataclass(frozen=True)
class CtmcConfig:
    """Joint continuous-time Markov chain on binary (A, L), approximated at
    fine resolution tau / n_fine with exact matrix-exponential kernels.

    a_flip = (c0, c1): A flips with rate c0 + c1 * l
    l_flip = (d0, d1): L flips with rate d0 + d1 * a
    """

    kind = "finite_state_ctmc"
    tau: float = 1.0
    n_fine: int = 128
    a_flip: tuple[float, float] = (0.2, 0.2)
    l_flip: tuple[float, float] = (0.3, 0.3)
    a0_p1: float = 0.0
    l0_p1: float = 0.5

    def __post_init__(self):
        if self.tau <= 0 or self.n_fine < 2:
            raise InvalidConfigError("tau and n_fine must be positive", ["tau", "n_fine"])
        rates = [self.a_flip[0], self.a_flip[0] + self.a_flip[1],
                 self.l_flip[0], self.l_flip[0] + self.l_flip[1]]
        if min(rates) < 0:
            raise InvalidConfigError("flip rates must be nonnegative everywhere",
                                     ["a_flip", "l_flip"])
        for p in (self.a0_p1, self.l0_p1):
            if not 0.0 <= p <= 1.0:
                raise InvalidConfigError("initial probabilities must be in [0,1]",
                                         ["a0_p1", "l0_p1"])

    @property
    def h(self) -> float:
        return self.tau / self.n_fine

    @property
    def stored_points(self) -> tuple[float, ...]:
        return tuple(i * self.h for i in range(self.n_fine + 1))


@dataclass(frozen=True)
class MppConfig:
    """Marked point process on [0, tau], rendered on a fine grid.

    Treatment jumps arrive with intensity a_rate0 + a_rate_l * 1(L=1);
    marks either flip a binary treatment or redraw a Gaussian level with
    mean m0 + m_aprev*A(t-) + m_l*L(t-).  The confounder is binary and
    flips with intensity l_rate0 + l_rate_a * sigmoid(A(t-)).
    """

    kind = "marked_point_process"
    tau: float = 1.0
    n_fine: int = 256
    a_rate0: float = 1.0
    a_rate_l: float = 0.0
    l_rate0: float = 1.0
    l_rate_a: float = 0.0
    a_mark_kind: str = "flip"          # 'flip' | 'gaussian'
    a_mark_coefs: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 1.0)  # m0, m_aprev, m_l, sd
    a0: float = 0.0
    l0: int = 0

    def __post_init__(self):
        if self.tau <= 0 or self.n_fine < 2:
            raise InvalidConfigError("tau and n_fine must be positive", ["tau", "n_fine"])
        if self.a_rate0 < 0 or self.a_rate0 + self.a_rate_l < 0:
            raise InvalidConfigError("treatment intensity must be nonnegative", ["a_rate0"])
        if self.l_rate0 < 0 or self.l_rate0 + self.l_rate_a < 0:
            raise InvalidConfigError("confounder intensity must be nonnegative", ["l_rate0"])
        if self.a_mark_kind not in ("flip", "gaussian"):
            raise InvalidConfigError("a_mark_kind must be 'flip' or 'gaussian'", ["a_mark_kind"])
        if self.a_mark_kind == "gaussian" and self.a_mark_coefs[3] <= 0:
            raise InvalidConfigError("gaussian mark sd must be positive", ["a_mark_coefs"])

    @property
    def h(self) -> float:
        return self.tau / self.n_fine

    @property
    def stored_points(self) -> tuple[float, ...]:
        return tuple(i * self.h for i in range(self.n_fine + 1))

    def intensity_bound(self) -> float:
        a_max = self.a_rate0 + max(self.a_rate_l, 0.0)
        l_max = self.l_rate0 + max(self.l_rate_a, 0.0)
        return a_max + l_max


DgpConfig = DiscreteRegularConfig | DiffusionConfig | CtmcConfig | MppConfig
