"""Density clustering of residual unmatched keypoints.

Classic DBSCAN over pixel coordinates: a core point has at least
``min_pts`` neighbors within ``eps`` (closed ball, the point itself
included); clusters are maximal density-connected sets; everything else is
noise. Cluster growth follows a fixed scan order (seed points ascending,
FIFO frontier, neighbors appended in ascending index) so a given input
always produces the same labeling, and border points reachable from several
clusters attach to whichever core point reaches them first in that order.

Neighborhoods come from a plain O(n^2) distance matrix; residual point
counts are hundreds per image at most, so a spatial index would buy
nothing.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .overlap import Point, bounding_box
from .report import AnomalyRegion, RegionSource


@dataclass(frozen=True)
class ClusterConfig:
    eps: float
    min_pts: int = 5

    def __post_init__(self) -> None:
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 2:
            raise ValueError("min_pts must be at least 2")


@dataclass(frozen=True)
class Clustering:
    """Index partition: every input index is in exactly one cluster or noise."""

    clusters: tuple[tuple[int, ...], ...]
    noise: tuple[int, ...]

    def labels(self, n: int) -> list[int]:
        """Per-index cluster number, -1 for noise (n = input size)."""
        out = [-1] * n
        for label, members in enumerate(self.clusters):
            for i in members:
                out[i] = label
        return out


def dbscan(points: Sequence[Point], cfg: ClusterConfig) -> Clustering:
    n = len(points)
    if n == 0:
        return Clustering(clusters=(), noise=())
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (x, y) pairs")

    diff = pts[:, None, :] - pts[None, :, :]
    within = np.hypot(diff[..., 0], diff[..., 1]) <= cfg.eps
    neighbor_count = within.sum(axis=1)  # diagonal is True: self included
    is_core = neighbor_count >= cfg.min_pts

    UNSEEN = -2
    labels = np.full(n, UNSEEN, dtype=np.int64)
    clusters: list[list[int]] = []
    for seed in range(n):
        if labels[seed] != UNSEEN or not is_core[seed]:
            continue
        label = len(clusters)
        members = [seed]
        labels[seed] = label
        frontier = deque([seed])
        while frontier:
            i = frontier.popleft()
            if not is_core[i]:
                continue  # border points join but never expand
            for j in np.flatnonzero(within[i]):
                if labels[j] == UNSEEN:
                    labels[j] = label
                    members.append(int(j))
                    frontier.append(int(j))
        clusters.append(sorted(members))

    noise = [i for i in range(n) if labels[i] == UNSEEN]
    return Clustering(
        clusters=tuple(tuple(c) for c in clusters),
        noise=tuple(noise),
    )


def cluster_regions(clustering: Clustering, points: Sequence[Point]) -> list[AnomalyRegion]:
    """One report region per cluster, largest cluster first."""
    regions = []
    order = sorted(
        range(len(clustering.clusters)),
        key=lambda i: (-len(clustering.clusters[i]), i),
    )
    for i in order:
        members = clustering.clusters[i]
        cluster_points = tuple((float(points[j][0]), float(points[j][1])) for j in members)
        regions.append(
            AnomalyRegion(
                source=RegionSource.CLUSTER,
                bbox=bounding_box(cluster_points),
                points=cluster_points,
            )
        )
    return regions
