"""Target functionals: the deterministic map from one trajectory to the
scalar whose interventional mean we estimate."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from funlong.core.data import Dataset, Trajectory, _step_index


@dataclass(frozen=True)
class TargetFunctional:
    """``fn`` evaluates one trajectory; ``batch`` evaluates a whole dataset
    at once and must agree with fn row by row."""

    fn: Callable[[Trajectory], float]
    batch: Callable[[Dataset], np.ndarray]
    requires_event_time: bool = False
    bound: float | None = None
    label: str = "nu"

    def evaluate(self, trajectory: Trajectory) -> float:
        return float(self.fn(trajectory))

    def evaluate_batch(self, ds: Dataset) -> np.ndarray:
        return np.asarray(self.batch(ds), dtype=float)


def constant_target(c: float) -> TargetFunctional:
    return TargetFunctional(
        fn=lambda tr: float(c),
        batch=lambda ds: np.full(ds.n, float(c)),
        bound=abs(float(c)),
        label=f"const({c})",
    )


def terminal_outcome(coord: int = 0) -> TargetFunctional:
    """Designated outcome coordinate at the last grid point."""

    def fn(tr: Trajectory) -> float:
        return float(tr.l_path[-1, tr.y_indices[coord]])

    def batch(ds: Dataset) -> np.ndarray:
        return ds.l[:, -1, ds.y_indices[coord]].astype(float)

    return TargetFunctional(fn=fn, batch=batch, label=f"terminal_y{coord}")


def survival_beyond(t_star: float) -> TargetFunctional:
    """1(event time > t_star); on censoring-free data X = T."""

    def fn(tr: Trajectory) -> float:
        return 1.0 if tr.event_time > t_star else 0.0

    def batch(ds: Dataset) -> np.ndarray:
        return (ds.x > t_star).astype(float)

    return TargetFunctional(fn=fn, batch=batch, requires_event_time=True,
                            bound=1.0, label=f"surv>{t_star}")


def outcome_at_if_alive(t_star: float, coord: int = 0) -> TargetFunctional:
    """Outcome path read at t_star, zeroed for subjects gone by t_star."""

    def fn(tr: Trajectory) -> float:
        if tr.event_time <= t_star:
            return 0.0
        return float(tr.y_at(t_star)[coord])

    def batch(ds: Dataset) -> np.ndarray:
        times = np.asarray(ds.grid.finite_points)
        col = _step_index(times, t_star)
        alive = (ds.x > t_star).astype(float)
        return alive * ds.l[:, col, ds.y_indices[coord]].astype(float)

    return TargetFunctional(fn=fn, batch=batch, requires_event_time=True,
                            label=f"y@{t_star}|alive")
