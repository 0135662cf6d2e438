"""Columnar, partition-aligned views of a dataset.

``PartitionView`` subsamples every trajectory at the partition points once,
so estimators can run index-by-index with vectorized row operations.
``GBatch`` is the batched analogue of a G-history prefix: it physically
contains only the adapted slices (treatments through t_j, confounders
through t_{j-1}, event status through t_{j-1}), so downstream code cannot
peek ahead.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from funlong.core.data import Dataset, align_columns
from funlong.core.grid import Partition


class PartitionView:
    def __init__(self, ds: Dataset, partition: Partition, target=None):
        self.ds = ds
        self.partition = partition
        cols = align_columns(ds.grid, partition)
        self.cols = cols
        self.A = ds.a[:, cols].astype(float)
        self.L = ds.l[:, cols, :].astype(float)
        self.K = partition.n_intervals
        self.n = ds.n
        pts = np.asarray(partition.points)
        finite_event = np.isfinite(ds.x)
        self.event_by = (ds.x[:, None] <= pts[None, :]) & finite_event[:, None]
        self.dead_by = self.event_by & (np.asarray(ds.delta)[:, None] == 1)
        self.cens_by = self.event_by & (np.asarray(ds.delta)[:, None] == 0)
        self.weights = ds.norm_weights()
        self.x = np.asarray(ds.x, dtype=float)
        self.delta = np.asarray(ds.delta)
        # target values are prefix-measurable once a subject is dead, which
        # is exactly when batched processes need them
        self.nu_vals = None if target is None else np.asarray(target.evaluate_batch(ds), dtype=float)

    def at_risk(self, j: int) -> np.ndarray:
        """No event by t_j (so still exposed over (t_j, t_{j+1}])."""
        return ~self.event_by[:, j]

    def uncensored_through(self, j: int) -> np.ndarray:
        return ~self.cens_by[:, j]

    def g_batch(self, j: int, a_override: np.ndarray | None = None) -> "GBatch":
        a = self.A[:, : j + 1]
        if a_override is not None:
            a = a.copy()
            a[:, j] = a_override
        dead_prev = self.dead_by[:, j - 1] if j >= 1 else np.zeros(self.n, dtype=bool)
        cens_prev = self.cens_by[:, j - 1] if j >= 1 else np.zeros(self.n, dtype=bool)
        x_prev = np.where(dead_prev | cens_prev, self.x, np.nan)
        frozen = None
        if self.nu_vals is not None:
            frozen = np.where(dead_prev, self.nu_vals, 0.0)
        return GBatch(
            j=j,
            a=a,
            l=self.L[:, :j, :],
            dead_prev=dead_prev,
            cens_prev=cens_prev,
            x_prev=x_prev,
            times=self.partition.points,
            frozen_value=frozen,
        )

    def f_batch(self, j: int) -> "FBatch":
        dead = self.dead_by[:, j]
        cens = self.cens_by[:, j]
        x_known = np.where(dead | cens, self.x, np.nan)
        return FBatch(
            j=j,
            a=self.A[:, : j + 1],
            l=self.L[:, : j + 1, :],
            dead=dead,
            cens=cens,
            x_known=x_known,
            times=self.partition.points,
        )


@dataclass
class GBatch:
    """Adapted slices at a G-index: a through t_j, l through t_{j-1}."""

    j: int
    a: np.ndarray           # (n, j+1)
    l: np.ndarray           # (n, j, d)
    dead_prev: np.ndarray   # (n,) dead by t_{j-1}
    cens_prev: np.ndarray   # (n,) censored by t_{j-1}
    x_prev: np.ndarray      # (n,) event time where known by t_{j-1}, else nan
    times: tuple
    frozen_value: np.ndarray | None = None   # target value where dead_prev

    @property
    def n(self) -> int:
        return self.a.shape[0]


@dataclass
class FBatch:
    """Adapted slices at an F-index: a and l through t_j plus status at t_j."""

    j: int
    a: np.ndarray           # (n, j+1)
    l: np.ndarray           # (n, j+1, d)
    dead: np.ndarray
    cens: np.ndarray
    x_known: np.ndarray
    times: tuple

    @property
    def n(self) -> int:
        return self.a.shape[0]
