"""Adapted nuisance processes.

A nuisance process assigns a value to every (partition index, G-history)
pair.  The two families used throughout are outcome-side ("H-like",
g-computation style projections) and treatment-side ("Q-like", cumulative
weight ratios).  The interface only ever hands the process adapted slices,
so a process cannot depend on data past its index.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from funlong.core.data import HistoryPrefix
from funlong.core.view import GBatch, PartitionView


class NuisanceProcess:
    label: str = "H-like"

    def evaluate_batch(self, batch: GBatch) -> np.ndarray:
        raise NotImplementedError

    def evaluate(self, prefix: HistoryPrefix) -> float:
        """Scalar spec-level entry point: wraps the prefix as a 1-row batch."""
        if prefix.kind != "G":
            raise ValueError("nuisance processes are evaluated at G-prefixes")
        a = np.asarray(prefix.a_values(), dtype=float)[None, :]
        l = np.asarray(prefix.l_values(), dtype=float)[None, :, :]
        seen, ind = prefix.event_before()
        dead_prev = np.array([bool(seen and ind == 1)])
        cens_prev = np.array([bool(seen and ind == 0)])
        x_prev = np.array([prefix.trajectory.event_time if seen else np.nan])
        batch = GBatch(j=prefix.j, a=a, l=l, dead_prev=dead_prev,
                       cens_prev=cens_prev, x_prev=x_prev,
                       times=prefix.partition.points)
        return float(self.evaluate_batch(batch)[0])

    def columns(self, view: PartitionView) -> np.ndarray:
        """(n, K+1) matrix of values at every index, own histories."""
        out = np.empty((view.n, view.K + 1))
        for j in range(view.K + 1):
            out[:, j] = self.evaluate_batch(view.g_batch(j))
        return out

    def terminal_batch(self, view: PartitionView) -> np.ndarray:
        """Value at the post-terminal sigma-algebra (full data).

        Equals the index-K value for processes with no extra terminal
        information; Q-like processes with censoring override this.
        """
        return self.evaluate_batch(view.g_batch(view.K))


class FunctionProcess(NuisanceProcess):
    """Process defined by a callable on adapted slices.

    ``fn(batch)`` receives a GBatch and returns an (n,) array.  Used for the
    bounded test processes in the estimating-equation studies.
    """

    def __init__(self, fn: Callable[[GBatch], np.ndarray], label: str = "H-like",
                 name: str = "fn"):
        self.fn = fn
        self.label = label
        self.name = name

    def evaluate_batch(self, batch: GBatch) -> np.ndarray:
        return np.asarray(self.fn(batch), dtype=float) * np.ones(batch.n)


class ConstantProcess(NuisanceProcess):
    def __init__(self, value: float, label: str = "H-like"):
        self.value = float(value)
        self.label = label

    def evaluate_batch(self, batch: GBatch) -> np.ndarray:
        return np.full(batch.n, self.value)


class PerturbedProcess(NuisanceProcess):
    """Base process plus ``bump`` on one (index, history-cell) stratum.

    ``where(batch) -> bool mask`` picks the stratum; the perturbation is only
    active at index ``at``.  Used as a negative control: a perturbed
    g-computation process must fail the outcome estimating equation.
    """

    def __init__(self, base: NuisanceProcess, at: int, where: Callable[[GBatch], np.ndarray],
                 bump: float):
        self.base = base
        self.at = at
        self.where = where
        self.bump = float(bump)
        self.label = base.label

    def evaluate_batch(self, batch: GBatch) -> np.ndarray:
        vals = self.base.evaluate_batch(batch)
        if batch.j == self.at:
            vals = vals + self.bump * np.asarray(self.where(batch), dtype=float)
        return vals

    def terminal_batch(self, view: PartitionView) -> np.ndarray:
        vals = self.base.terminal_batch(view)
        if self.at == view.K:
            batch = view.g_batch(view.K)
            vals = vals + self.bump * np.asarray(self.where(batch), dtype=float)
        return vals
