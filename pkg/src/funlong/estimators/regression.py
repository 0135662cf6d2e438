"""Outcome-regression backends for the backward recursion.

``ExactFiniteState`` takes weighted cell means over tabular history codes,
which is the saturated (exact) regression on finite instances.
``LeastSquaresBasis`` is weighted least squares on a polynomial basis.
Both return plain predictors: deterministic functions of the features.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from funlong.core.errors import DegenerateDesignError
from funlong.core.view import GBatch
from funlong.estimators.features import FeatureSpec, poly_design, tabular_codes


class OutcomeRegressionBackend:
    family: str

    def __init__(self, spec: FeatureSpec):
        self.spec = spec

    def fit(self, batch: GBatch, rows: np.ndarray, y: np.ndarray, w: np.ndarray):
        raise NotImplementedError


@dataclass
class _CellPredictor:
    spec: FeatureSpec
    codes: np.ndarray
    values: np.ndarray
    fallback: float

    def __call__(self, batch: GBatch) -> np.ndarray:
        q = tabular_codes(self.spec, batch)
        pos = np.searchsorted(self.codes, q)
        pos = np.clip(pos, 0, len(self.codes) - 1)
        hit = self.codes[pos] == q
        out = np.where(hit, self.values[pos], self.fallback)
        return out


class ExactFiniteState(OutcomeRegressionBackend):
    family = "exact_finite_state"

    def __init__(self, spec: FeatureSpec | None = None):
        super().__init__(spec or FeatureSpec(kind="tabular"))

    def fit(self, batch: GBatch, rows: np.ndarray, y: np.ndarray, w: np.ndarray):
        if not np.any(rows):
            raise DegenerateDesignError("no rows to regress on")
        codes = tabular_codes(self.spec, batch)[rows]
        uniq, inv = np.unique(codes, return_inverse=True)
        wsum = np.bincount(inv, weights=w[rows], minlength=len(uniq))
        vsum = np.bincount(inv, weights=w[rows] * y[rows], minlength=len(uniq))
        means = vsum / np.where(wsum > 0, wsum, 1.0)
        overall = float(vsum.sum() / wsum.sum()) if wsum.sum() > 0 else 0.0
        return _CellPredictor(self.spec, uniq, means, overall)


@dataclass
class _LinearPredictor:
    spec: FeatureSpec
    beta: np.ndarray

    def __call__(self, batch: GBatch) -> np.ndarray:
        return poly_design(self.spec, batch) @ self.beta


class LeastSquaresBasis(OutcomeRegressionBackend):
    family = "least_squares_on_basis"

    def __init__(self, spec: FeatureSpec | None = None):
        super().__init__(spec or FeatureSpec(kind="poly", degree=2))

    def fit(self, batch: GBatch, rows: np.ndarray, y: np.ndarray, w: np.ndarray):
        if not np.any(rows):
            raise DegenerateDesignError("no rows to regress on")
        x = poly_design(self.spec, batch)[rows]
        sw = np.sqrt(w[rows])
        beta, _, rank, _ = np.linalg.lstsq(x * sw[:, None], y[rows] * sw, rcond=None)
        if rank == 0:
            raise DegenerateDesignError("design matrix has rank zero")
        return _LinearPredictor(self.spec, beta)
