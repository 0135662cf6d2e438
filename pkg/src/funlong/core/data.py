"""Subject trajectories, datasets, and adapted history views.

A trajectory stores one subject's treatment and confounder paths sampled on
a shared simulation grid, plus the censored event time (X, delta).  The
death time is simulation-side bookkeeping: estimators never read it.

History prefixes are the only sanctioned way to look at partial data.  A
G-prefix at index j exposes treatments through t_j and confounders through
t_{j-1}; an F-prefix exposes both through t_j.  Reads outside the window
raise, so adaptedness is enforced by construction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from funlong.core.errors import InvalidArgumentError
from funlong.core.grid import Partition

INF = math.inf


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Trajectory:
    """One subject. Paths are step functions on ``grid`` (value holds until
    the next grid point); after the event time X both paths are offset, i.e.
    constant at their last at-risk value."""

    grid: Partition
    a_path: np.ndarray            # (m+1,)
    l_path: np.ndarray            # (m+1, d)
    y_indices: tuple[int, ...]
    event_time: float = INF       # X = min(T, C)
    event_indicator: int = 1      # delta = 1(T <= C)
    death_time: float = INF       # T; simulation-only, hidden from estimators

    def __post_init__(self):
        if self.l_path.ndim != 2:
            raise InvalidArgumentError("l_path must be (m+1, d)")
        m1 = len(self.grid.finite_points)
        if self.a_path.shape[0] != m1 or self.l_path.shape[0] != m1:
            raise InvalidArgumentError("path length does not match grid")

    @property
    def times(self) -> np.ndarray:
        return np.asarray(self.grid.finite_points)

    def a_at(self, t: float) -> float:
        """Step interpolation: value at the last grid point <= t."""
        return float(self.a_path[_step_index(self.times, t)])

    def l_at(self, t: float) -> np.ndarray:
        return self.l_path[_step_index(self.times, t)]

    def y_at(self, t: float) -> np.ndarray:
        return self.l_path[_step_index(self.times, t)][list(self.y_indices)]


def _step_index(times: np.ndarray, t: float) -> int:
    if math.isinf(t):
        return len(times) - 1
    idx = int(np.searchsorted(times, t + 1e-12, side="right")) - 1
    if idx < 0:
        raise InvalidArgumentError(f"time {t} precedes the grid")
    return idx


class HistoryPrefix:
    """Adapted view of one trajectory truncated at a partition index.

    ``kind='F'`` exposes (a, l) through t_j plus event indicators through
    t_j; ``kind='G'`` exposes a through t_j but l and indicators only
    through t_{j-1}.  Indexing past the window raises IndexError.
    """

    __slots__ = ("trajectory", "partition", "j", "kind", "_cols")

    def __init__(self, trajectory: Trajectory, j: int, kind: str, partition: Partition | None = None):
        if kind not in ("F", "G"):
            raise InvalidArgumentError("kind must be 'F' or 'G'")
        partition = partition or trajectory.grid
        if not 0 <= j <= partition.n_intervals:
            raise InvalidArgumentError(f"index {j} out of range 0..{partition.n_intervals}")
        self.trajectory = trajectory
        self.partition = partition
        self.j = j
        self.kind = kind
        self._cols = align_columns(trajectory.grid, partition)

    # -- treatments: available through index j for both kinds --
    def a_values(self) -> np.ndarray:
        cols = self._cols[: self.j + 1]
        return self.trajectory.a_path[cols]

    # -- confounders: through j (F) or j-1 (G) --
    def l_values(self) -> np.ndarray:
        hi = self.j + 1 if self.kind == "F" else self.j
        cols = self._cols[:hi]
        return self.trajectory.l_path[cols]

    def a(self, i: int) -> float:
        if not 0 <= i <= self.j:
            raise IndexError(f"a({i}) is outside this {self.kind}-prefix at j={self.j}")
        return float(self.trajectory.a_path[self._cols[i]])

    def l(self, i: int) -> np.ndarray:
        hi = self.j if self.kind == "F" else self.j - 1
        if not 0 <= i <= hi:
            raise IndexError(f"l({i}) is outside this {self.kind}-prefix at j={self.j}")
        return self.trajectory.l_path[self._cols[i]]

    # -- event indicators observed so far --
    def event_before(self) -> tuple[bool, int | None]:
        """(event observed strictly within the window, indicator) pair.

        The window ends at t_j for F-prefixes and t_{j-1} for G-prefixes.
        """
        hi_idx = self.j if self.kind == "F" else self.j - 1
        if hi_idx < 0:
            return False, None
        cutoff = self.partition.points[hi_idx]
        x = self.trajectory.event_time
        if x <= cutoff:
            return True, int(self.trajectory.event_indicator)
        return False, None


def history_prefix(trajectory: Trajectory, j: int, kind: str, partition: Partition | None = None) -> HistoryPrefix:
    return HistoryPrefix(trajectory, j, kind, partition)


def align_columns(grid: Partition, partition: Partition) -> np.ndarray:
    """Grid column index per partition point (last grid point <= t).

    The infinite sentinel maps to the last grid column: everything is
    absorbed or frozen by then, so the terminal interval reads end-of-grid
    values.
    """
    times = np.asarray(grid.finite_points)
    cols = []
    for t in partition.points:
        cols.append(_step_index(times, t))
    return np.asarray(cols, dtype=np.int64)


@dataclass
class Dataset:
    """n trajectories on one shared grid, stored columnar for speed.

    ``weights`` turns the dataset into a weighted population (used to plug
    exact path measures into the sample-level estimators); ``None`` means
    equal weights.  ``death_times`` is simulation-only.
    """

    grid: Partition
    a: np.ndarray                 # (n, m+1)
    l: np.ndarray                 # (n, m+1, d)
    y_indices: tuple[int, ...]
    x: np.ndarray | None = None   # (n,) event times, inf if none
    delta: np.ndarray | None = None
    seed: int | None = None
    provenance: dict = field(default_factory=dict)
    weights: np.ndarray | None = None
    death_times: np.ndarray | None = None

    def __post_init__(self):
        self.a = np.asarray(self.a)
        self.l = np.asarray(self.l)
        if self.l.ndim != 3:
            raise InvalidArgumentError("l must be (n, m+1, d)")
        n = self.a.shape[0]
        if self.x is None:
            self.x = np.full(n, INF)
        if self.delta is None:
            self.delta = np.ones(n, dtype=np.int8)
        self.x = np.asarray(self.x, dtype=float)
        self.delta = np.asarray(self.delta)
        for arr in (self.a, self.l, self.x, self.delta):
            _freeze(arr)
        if self.weights is not None:
            self.weights = _freeze(np.asarray(self.weights, dtype=float))
        if self.death_times is not None:
            self.death_times = _freeze(np.asarray(self.death_times, dtype=float))

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def d(self) -> int:
        return self.l.shape[2]

    def norm_weights(self) -> np.ndarray:
        if self.weights is None:
            return np.full(self.n, 1.0 / self.n)
        total = float(self.weights.sum())
        return self.weights / total

    def trajectory(self, i: int) -> Trajectory:
        return Trajectory(
            grid=self.grid,
            a_path=self.a[i],
            l_path=self.l[i],
            y_indices=self.y_indices,
            event_time=float(self.x[i]),
            event_indicator=int(self.delta[i]),
            death_time=float(self.death_times[i]) if self.death_times is not None else INF,
        )

    def trajectories(self) -> Iterator[Trajectory]:
        for i in range(self.n):
            yield self.trajectory(i)
