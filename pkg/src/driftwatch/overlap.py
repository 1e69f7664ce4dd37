"""Shared field-of-view estimation between a reference and a query frame.

The overlap mask is the axis-aligned bounding box of the matched query-side
keypoints. Downstream stages only reason about points inside it, which keeps
the non-overlapping border (where nothing could have matched) from being
reported as anomalous.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

Point = tuple[float, float]


class NoOverlap(Exception):
    """Raised when too few matches exist to estimate a shared field of view.

    This is a result state, not a failure: the pair is reported as
    non-comparable by the pipeline rather than anomalous.
    """


@dataclass(frozen=True)
class RectMask:
    """Closed axis-aligned rectangle in pixel coordinates."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self) -> None:
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(
                f"degenerate mask: ({self.x_min},{self.y_min})..({self.x_max},{self.y_max})"
            )

    def contains(self, point: Point) -> bool:
        x, y = point
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max

    def intersects(self, other: "RectMask") -> bool:
        return (
            self.x_min <= other.x_max
            and other.x_min <= self.x_max
            and self.y_min <= other.y_max
            and other.y_min <= self.y_max
        )

    def to_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]

    @classmethod
    def from_list(cls, raw: Sequence[float]) -> "RectMask":
        if len(raw) != 4:
            raise ValueError(f"mask needs 4 coordinates, got {len(raw)}")
        return cls(float(raw[0]), float(raw[1]), float(raw[2]), float(raw[3]))


def bounding_box(points: Iterable[Point]) -> RectMask:
    """Axis-aligned bounding box of a non-empty point collection."""
    pts = list(points)
    if not pts:
        raise ValueError("bounding_box of empty point set")
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    return RectMask(min(xs), min(ys), max(xs), max(ys))


def overlap_mask(matched_query_points: Sequence[Point], min_matches: int = 4) -> RectMask:
    """Estimate the shared field of view from matched query-side keypoints.

    Raises :class:`NoOverlap` when fewer than ``min_matches`` points are
    available; below that the box is geometrically meaningless.
    """
    if len(matched_query_points) < min_matches:
        raise NoOverlap(
            f"{len(matched_query_points)} matched points, need at least {min_matches}"
        )
    return bounding_box(matched_query_points)


def filter_points(
    points: Sequence[Point], mask: RectMask
) -> tuple[list[Point], list[Point]]:
    """Partition points by closed-interval containment in ``mask``.

    Returns ``(inside, outside)``; order within each list follows the input.
    """
    inside: list[Point] = []
    outside: list[Point] = []
    for p in points:
        (inside if mask.contains(p) else outside).append(p)
    return inside, outside
