"""Time partitions over a finite horizon [0, tau] or an infinite horizon [0, inf].

A partition is the index set every estimator, weight product and backward
recursion in this package runs over.  Finite partitions end at tau; infinite
partitions carry a trailing ``inf`` sentinel and treat the last finite point
as the start of one terminal interval.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from funlong.core.errors import InvalidArgumentError, UnsupportedOperationError

_INF = math.inf


@dataclass(frozen=True)
class Partition:
    """Ordered time grid. ``points`` is strictly increasing and starts at 0.

    For an infinite horizon the last entry is ``math.inf`` and the mesh rule
    adds ``1 / t_{K-1}`` so refining forces the last finite point outward.
    """

    points: tuple[float, ...]

    def __post_init__(self) -> None:
        pts = self.points
        if len(pts) < 2:
            raise InvalidArgumentError("partition needs at least two points")
        if pts[0] != 0.0:
            raise InvalidArgumentError("partition must start at 0")
        for lo, hi in zip(pts, pts[1:]):
            if not hi > lo:
                raise InvalidArgumentError("partition points must be strictly increasing")
        if math.isinf(pts[0]):
            raise InvalidArgumentError("first point cannot be infinite")
        if any(math.isinf(t) for t in pts[1:-1]):
            raise InvalidArgumentError("only the last point may be infinite")

    @property
    def horizon_kind(self) -> str:
        return "infinite" if math.isinf(self.points[-1]) else "finite"

    @property
    def is_infinite(self) -> bool:
        return math.isinf(self.points[-1])

    @property
    def n_intervals(self) -> int:
        """K: the number of intervals (index range is 0..K)."""
        return len(self.points) - 1

    @property
    def tau(self) -> float:
        return self.points[-1]

    @property
    def finite_points(self) -> tuple[float, ...]:
        return self.points[:-1] if self.is_infinite else self.points

    def contains_points_of(self, other: "Partition") -> bool:
        return set(other.points).issubset(set(self.points))


def make_uniform_partition(k: int, tau: float) -> Partition:
    """K+1 equally spaced points from 0 to tau."""
    if not isinstance(k, int) or k < 1:
        raise InvalidArgumentError(f"k must be a positive integer, got {k!r}")
    if not tau > 0:
        raise InvalidArgumentError(f"tau must be positive, got {tau!r}")
    pts = tuple(tau * j / k for j in range(k)) + (float(tau),)
    return Partition(pts)


def make_infinite_partition(finite_points) -> Partition:
    """Append the infinity sentinel to a strictly increasing finite grid."""
    pts = tuple(float(t) for t in finite_points)
    if len(pts) < 2:
        raise InvalidArgumentError("need at least {0, t} before the sentinel")
    if pts[-1] <= 0:
        raise InvalidArgumentError("last finite point must be positive")
    return Partition(pts + (_INF,))


def mesh(p: Partition) -> float:
    """Largest gap; for infinite horizons also 1/t_{K-1} competes."""
    finite = p.finite_points
    gaps = max(hi - lo for lo, hi in zip(finite, finite[1:]))
    if p.is_infinite:
        return max(gaps, 1.0 / finite[-1])
    return gaps


def refine(p: Partition, factor: int, finite_prefix: bool = False) -> Partition:
    """Split every interval into ``factor`` equal parts, keeping all points.

    Infinite partitions are rejected unless ``finite_prefix=True``, in which
    case only the finite section is refined and the sentinel is kept.
    """
    if not isinstance(factor, int) or factor < 1:
        raise InvalidArgumentError(f"factor must be a positive integer, got {factor!r}")
    if p.is_infinite and not finite_prefix:
        raise UnsupportedOperationError(
            "cannot refine an infinite-horizon partition; pass finite_prefix=True"
        )
    finite = p.finite_points
    out: list[float] = []
    for lo, hi in zip(finite, finite[1:]):
        step = (hi - lo) / factor
        out.extend(lo + i * step for i in range(factor))
    out.append(finite[-1])
    if p.is_infinite:
        return Partition(tuple(out) + (_INF,))
    return Partition(tuple(out))
