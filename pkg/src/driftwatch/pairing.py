"""Geo-relevant pairing of query frames with clean-run reference frames.

Each query image is paired with at most one reference image whose recording
pose lies within a distance threshold ``d`` and an orientation threshold
``o``. When several references qualify, the one minimizing the normalized
combined score ``position_gap/d + yaw_gap/o`` wins, ties broken toward the
earlier reference timestamp. Queries without any candidate are reported as
unpaired rather than silently dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .dataset import ImageRecord, Pose, RunDataset


@dataclass(frozen=True)
class PairingConfig:
    max_distance: float = 0.5  # meters
    max_yaw_diff: float = 0.35  # radians

    def __post_init__(self) -> None:
        if self.max_distance <= 0:
            raise ValueError("max_distance must be positive")
        if not 0 < self.max_yaw_diff <= math.pi:
            raise ValueError("max_yaw_diff must be in (0, pi]")


@dataclass(frozen=True)
class ImagePair:
    reference: ImageRecord
    query: ImageRecord
    position_gap: float
    yaw_gap: float


@dataclass(frozen=True)
class PairingResult:
    pairs: tuple[ImagePair, ...]
    unpaired: tuple[ImageRecord, ...]  # query records with no candidate


def pose_distance(a: Pose, b: Pose) -> float:
    """Euclidean distance over (x, y, z)."""
    return math.sqrt((a.x - b.x) ** 2 + (a.y - b.y) ** 2 + (a.z - b.z) ** 2)


def yaw_difference(a: Pose, b: Pose) -> float:
    """Minimal absolute angular difference on the circle, in [0, pi]."""
    diff = (a.yaw - b.yaw) % (2.0 * math.pi)
    return min(diff, 2.0 * math.pi - diff)


def pair_images(
    reference: RunDataset, query: RunDataset, cfg: PairingConfig
) -> PairingResult:
    """Select, per query record, the best reference within both thresholds.

    Deterministic: candidates are scored as ``position_gap/d + yaw_gap/o``
    and ties go to the reference with the earlier timestamp (then earlier
    manifest order). Many-to-one is allowed; bursts of query frames near one
    pose all pair with the same reference.
    """
    if not reference.records or not query.records:
        raise ValueError("pair_images needs non-empty reference and query runs")

    pairs: list[ImagePair] = []
    unpaired: list[ImageRecord] = []
    for q in query.records:
        best: tuple[float, float, int] | None = None  # (score, ref timestamp, ref index)
        best_pair: ImagePair | None = None
        for idx, r in enumerate(reference.records):
            gap = pose_distance(q.pose, r.pose)
            if gap > cfg.max_distance:
                continue
            yaw_gap = yaw_difference(q.pose, r.pose)
            if yaw_gap > cfg.max_yaw_diff:
                continue
            score = gap / cfg.max_distance + yaw_gap / cfg.max_yaw_diff
            key = (score, r.pose.timestamp, idx)
            if best is None or key < best:
                best = key
                best_pair = ImagePair(
                    reference=r, query=q, position_gap=gap, yaw_gap=yaw_gap
                )
        if best_pair is None:
            unpaired.append(q)
        else:
            pairs.append(best_pair)
    return PairingResult(pairs=tuple(pairs), unpaired=tuple(unpaired))
