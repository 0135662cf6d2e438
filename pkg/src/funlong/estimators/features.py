"""History features for nuisance regressions.

Tabular specs encode binary histories into integer cells (saturated
regressions on finite instances); polynomial specs build design matrices
from G-prefix summaries (current and previous treatment, last confounder,
running confounder mean) for continuous instances.  ``include_l=False``
is the deliberate misspecification switch used in robustness studies.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from funlong.core.errors import InvalidArgumentError
from funlong.core.view import GBatch


@dataclass(frozen=True)
class FeatureSpec:
    kind: str = "tabular"      # 'tabular' | 'poly'
    degree: int = 2
    include_l: bool = True
    lags: int = 1

    def describe(self) -> str:
        l_tag = "" if self.include_l else ",no_l"
        return f"{self.kind}(deg={self.degree},lags={self.lags}{l_tag})"


def _g_state_columns(spec: FeatureSpec, batch: GBatch) -> list[np.ndarray]:
    """Raw summary columns available at a G-prefix."""
    j = batch.j
    cols = [batch.a[:, j]]
    for lag in range(1, spec.lags + 1):
        if j - lag >= 0:
            cols.append(batch.a[:, j - lag])
    if spec.include_l:
        for lag in range(1, spec.lags + 1):
            if j - lag >= 0:
                cols.append(batch.l[:, j - lag, 0])
        if spec.kind == "poly" and j >= 2:
            cols.append(batch.l[:, :j, 0].mean(axis=1))
    return cols


def tabular_codes(spec: FeatureSpec, batch: GBatch) -> np.ndarray:
    """Integer cell per row from binary summary columns (plus event status)."""
    cols = _g_state_columns(spec, batch)
    code = np.zeros(batch.n, dtype=np.int64)
    for c in cols:
        vals = np.asarray(c)
        if not np.all((vals == 0.0) | (vals == 1.0)):
            raise InvalidArgumentError("tabular features need binary histories")
        code = code * 2 + vals.astype(np.int64)
    code = code * 3 + batch.dead_prev.astype(np.int64) + 2 * batch.cens_prev.astype(np.int64)
    return code


def poly_design(spec: FeatureSpec, batch: GBatch) -> np.ndarray:
    cols = _g_state_columns(spec, batch)
    base = [np.ones(batch.n)] + [np.asarray(c, dtype=float) for c in cols]
    if spec.degree >= 2:
        k = len(cols)
        for i in range(k):
            for j in range(i, k):
                base.append(np.asarray(cols[i]) * np.asarray(cols[j]))
    return np.column_stack(base)


def design(spec: FeatureSpec, batch: GBatch) -> np.ndarray:
    if spec.kind == "tabular":
        return tabular_codes(spec, batch)[:, None]
    return poly_design(spec, batch)


def _lagged_columns(spec: FeatureSpec, batch: GBatch, with_current_a: bool) -> list[np.ndarray]:
    """Conditioning-set columns for treatment and hazard models: everything
    strictly before the index-j treatment, optionally plus that treatment."""
    j = batch.j
    cols: list[np.ndarray] = []
    if with_current_a:
        cols.append(batch.a[:, j])
    for lag in range(1, spec.lags + 1):
        if j - lag >= 0:
            cols.append(batch.a[:, j - lag])
    if spec.include_l:
        for lag in range(1, spec.lags + 1):
            if j - lag >= 0:
                cols.append(batch.l[:, j - lag, 0])
    return cols


def lagged_design(spec: FeatureSpec, batch: GBatch, with_current_a: bool = False) -> np.ndarray:
    cols = _lagged_columns(spec, batch, with_current_a)
    return np.column_stack([np.ones(batch.n)] + [np.asarray(c, dtype=float) for c in cols])


def lagged_codes(spec: FeatureSpec, batch: GBatch, with_current_a: bool = False) -> np.ndarray:
    cols = _lagged_columns(spec, batch, with_current_a)
    code = np.zeros(batch.n, dtype=np.int64)
    for c in cols:
        vals = np.asarray(c)
        if not np.all((vals == 0.0) | (vals == 1.0)):
            raise InvalidArgumentError("tabular features need binary histories")
        code = code * 2 + vals.astype(np.int64)
    return code
