"""Detection report data model shared by the pipeline and persistence layers.

A mission produces one :class:`AnomalyReport` holding one :class:`PairReport`
per query frame. Regions carry their provenance: ``segment_vote`` regions come
from the per-instance keypoint vote, ``cluster`` regions from density
clustering of residual unmatched points.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .overlap import Point, RectMask

SCHEMA_VERSION = 1


class PairStatus(str, enum.Enum):
    OK = "ok"
    UNPAIRED = "unpaired"
    NO_OVERLAP = "no_overlap"
    BACKEND_ERROR = "backend_error"


class RegionSource(str, enum.Enum):
    SEGMENT_VOTE = "segment_vote"
    CLUSTER = "cluster"


@dataclass(frozen=True)
class AnomalyRegion:
    """One detected anomalous region of a query frame.

    Source-specific fields are populated exactly per source: vote regions
    carry the instance's label, score and tallies; cluster regions carry the
    member points.
    """

    source: RegionSource
    bbox: RectMask
    class_label: str | None = None
    score: float | None = None
    n_len: int | None = None
    m_len: int | None = None
    points: tuple[Point, ...] | None = None

    def __post_init__(self) -> None:
        if self.source is RegionSource.SEGMENT_VOTE:
            if self.n_len is None or self.m_len is None:
                raise ValueError("segment_vote region needs n_len and m_len")
            if self.points is not None:
                raise ValueError("segment_vote region must not carry points")
        else:
            if self.points is None:
                raise ValueError("cluster region needs its member points")
            if self.class_label is not None or self.n_len is not None or self.m_len is not None:
                raise ValueError("cluster region must not carry vote fields")


@dataclass(frozen=True)
class PairCounts:
    keypoints_q: int = 0
    keypoints_r: int = 0
    matched: int = 0
    unmatched_in_mask: int = 0
    residual_after_removal: int = 0


@dataclass(frozen=True)
class PairReport:
    query_id: str
    reference_id: str | None = None
    timestamp: float = 0.0
    status: PairStatus = PairStatus.OK
    mask: RectMask | None = None
    counts: PairCounts = field(default_factory=PairCounts)
    regions: tuple[AnomalyRegion, ...] = ()
    error: str | None = None


@dataclass(frozen=True)
class CalibrationSummary:
    """The calibrated operating point a report was produced with."""

    delta: float
    eps: float
    min_pts: int


@dataclass(frozen=True)
class AnomalyReport:
    reference_run: str
    query_run: str
    calibration: CalibrationSummary | None = None
    pairs: tuple[PairReport, ...] = ()
    schema_version: int = SCHEMA_VERSION


@dataclass(frozen=True)
class GroundTruth:
    """Annotated anomaly boxes per query frame; empty list means clean."""

    frames: dict[str, tuple[RectMask, ...]]
