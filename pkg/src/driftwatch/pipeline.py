"""End-to-end change detection over paired runs, plus report evaluation.

Per pair the stages run in a fixed order: extract and match at the
calibrated threshold, estimate the shared field of view from matched query
points, restrict both matched and unmatched points to it, segment the query
frame, vote each instance anomalous or not, delete unmatched points inside
segmented instances, and cluster what remains. Regions from instance votes
come first in the report (largest mask first), then point clusters (largest
cluster first).

A failed stage downgrades that pair's status and records the stage name;
it never aborts the mission. Inspection runs are long, and one undecodable
frame or dropped service call must cost one pair, not the run.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .backend import (
    BackendConfig,
    BackendKind,
    FeatureBackend,
    InferenceClient,
    NativeBackend,
    RemoteBackend,
    ScriptedBackend,
)
from .calibration import CalibrationResult
from .clustering import ClusterConfig, cluster_regions, dbscan
from .dataset import RunDataset, load_grayscale
from .errors import BackendError, DatasetError, FixtureError, InputError
from .overlap import NoOverlap, Point, filter_points, overlap_mask
from .pairing import ImagePair, PairingConfig, pair_images
from .report import (
    AnomalyRegion,
    AnomalyReport,
    CalibrationSummary,
    GroundTruth,
    PairCounts,
    PairReport,
    PairStatus,
    RegionSource,
)
from .segmentation import (
    InstanceMask,
    NullSegmenter,
    RemoteSegmenter,
    ScriptedSegmenter,
    Segmenter,
    remove_segmented,
    vote,
)

REMOVAL_SCOPES = ("all_instances", "anomalous_only")


@dataclass(frozen=True)
class PipelineConfig:
    pairing: PairingConfig = field(default_factory=PairingConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    cluster: ClusterConfig = field(default_factory=lambda: ClusterConfig(eps=20.0, min_pts=5))
    removal_scope: str = "all_instances"
    min_matches: int = 4
    min_instance_score: float = 0.0
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.removal_scope not in REMOVAL_SCOPES:
            raise ValueError(
                f"removal_scope must be one of {REMOVAL_SCOPES}, got '{self.removal_scope}'"
            )
        if self.min_matches < 1:
            raise ValueError("min_matches must be positive")
        if not 0.0 <= self.min_instance_score <= 1.0:
            raise ValueError("min_instance_score must be within [0, 1]")
        if self.jobs < 1:
            raise ValueError("jobs must be positive")

    def with_calibration(self, calibration: CalibrationResult) -> "PipelineConfig":
        """Adopt the calibrated match threshold and cluster parameters."""
        return replace(
            self,
            backend=replace(self.backend, match_threshold=calibration.delta),
            cluster=ClusterConfig(eps=calibration.eps, min_pts=calibration.min_pts),
        )


@dataclass(frozen=True)
class Backends:
    """The two providers a detection needs: features and instance masks."""

    feature: FeatureBackend
    segmenter: Segmenter

    @property
    def needs_pixels(self) -> bool:
        return self.feature.needs_pixels or self.segmenter.needs_pixels


def make_backends(cfg: BackendConfig) -> Backends:
    """Build the matched feature/segmenter pair for a backend selection.

    The built-in backend ships no segmentation model, so it pairs with the
    null segmenter and all anomalies surface through clustering. The
    scripted and remote kinds reuse one fixture or one HTTP client for both
    providers.
    """
    if cfg.kind is BackendKind.NATIVE:
        return Backends(feature=NativeBackend(cfg), segmenter=NullSegmenter())
    if cfg.kind is BackendKind.SCRIPTED:
        return Backends(
            feature=ScriptedBackend(cfg), segmenter=ScriptedSegmenter(cfg.fixture_path)
        )
    if cfg.kind is BackendKind.REMOTE:
        client = InferenceClient(cfg.base_url, timeout=cfg.timeout)
        return Backends(
            feature=RemoteBackend(cfg, client=client), segmenter=RemoteSegmenter(client)
        )
    raise ValueError(f"unknown backend kind: {cfg.kind!r}")


def _vote_regions(votes) -> list[AnomalyRegion]:
    """Anomalous instances as regions, largest mask first."""
    anomalous = [v for v in votes if v.is_anomaly]
    anomalous.sort(key=lambda v: -int(np.count_nonzero(v.instance.pixels)))
    return [
        AnomalyRegion(
            source=RegionSource.SEGMENT_VOTE,
            bbox=v.instance.bbox,
            class_label=v.instance.class_label,
            score=v.instance.score,
            n_len=v.n_len,
            m_len=v.m_len,
        )
        for v in anomalous
    ]


def detect_images(
    reference_image: np.ndarray | None,
    query_image: np.ndarray | None,
    reference_id: str,
    query_id: str,
    cfg: PipelineConfig,
    backends: Backends,
    timestamp: float = 0.0,
) -> PairReport:
    """Run the per-pair stages on already-loaded frames."""
    delta = cfg.backend.match_threshold
    counts = {"keypoints_q": 0, "keypoints_r": 0, "matched": 0}

    def failed(stage: str, exc: Exception) -> PairReport:
        return PairReport(
            query_id=query_id,
            reference_id=reference_id,
            timestamp=timestamp,
            status=PairStatus.BACKEND_ERROR,
            counts=PairCounts(**counts),
            error=f"{stage}: {exc}",
        )

    try:
        kpts_r, desc_r = backends.feature.extract(reference_image, image_id=reference_id)
        counts["keypoints_r"] = len(kpts_r)
        kpts_q, desc_q = backends.feature.extract(query_image, image_id=query_id)
        counts["keypoints_q"] = len(kpts_q)
    except (BackendError, FixtureError, ValueError) as exc:
        return failed("extract", exc)

    try:
        result = backends.feature.match(
            kpts_r, desc_r, kpts_q, desc_q, delta, id_a=reference_id, id_b=query_id
        )
    except (BackendError, FixtureError, ValueError) as exc:
        return failed("match", exc)
    counts["matched"] = len(result.matches)

    matched_q: list[Point] = [(kpts_q[ib].x, kpts_q[ib].y) for _, ib, _ in result.matches]
    unmatched_q: list[Point] = [(kpts_q[i].x, kpts_q[i].y) for i in result.unmatched_b]

    try:
        mask = overlap_mask(matched_q, min_matches=cfg.min_matches)
    except NoOverlap:
        return PairReport(
            query_id=query_id,
            reference_id=reference_id,
            timestamp=timestamp,
            status=PairStatus.NO_OVERLAP,
            counts=PairCounts(**counts),
        )

    matched_in, _ = filter_points(matched_q, mask)
    unmatched_in, _ = filter_points(unmatched_q, mask)
    counts["unmatched_in_mask"] = len(unmatched_in)

    try:
        instances = backends.segmenter.segment(query_image, image_id=query_id)
    except (BackendError, FixtureError, ValueError) as exc:
        return failed("segment", exc)
    if cfg.min_instance_score > 0.0:
        instances = [m for m in instances if m.score >= cfg.min_instance_score]

    votes = [vote(inst, matched_in, unmatched_in) for inst in instances]
    if cfg.removal_scope == "all_instances":
        removal_masks: list[InstanceMask] = [v.instance for v in votes]
    else:
        removal_masks = [v.instance for v in votes if v.is_anomaly]
    residual = remove_segmented(unmatched_in, removal_masks)
    counts["residual_after_removal"] = len(residual)

    clustering = dbscan(residual, cfg.cluster)
    regions = _vote_regions(votes) + cluster_regions(clustering, residual)

    return PairReport(
        query_id=query_id,
        reference_id=reference_id,
        timestamp=timestamp,
        status=PairStatus.OK,
        mask=mask,
        counts=PairCounts(**counts),
        regions=tuple(regions),
    )


def detect_pair(pair: ImagePair, cfg: PipelineConfig, backends: Backends) -> PairReport:
    """Load the pair's frames as needed and run :func:`detect_images`."""
    timestamp = pair.query.pose.timestamp
    reference_image = query_image = None
    if backends.needs_pixels:
        try:
            reference_image = load_grayscale(pair.reference.image_path)
            query_image = load_grayscale(pair.query.image_path)
        except DatasetError as exc:
            return PairReport(
                query_id=pair.query.image_id,
                reference_id=pair.reference.image_id,
                timestamp=timestamp,
                status=PairStatus.BACKEND_ERROR,
                error=f"decode: {exc}",
            )
    return detect_images(
        reference_image,
        query_image,
        pair.reference.image_id,
        pair.query.image_id,
        cfg,
        backends,
        timestamp=timestamp,
    )


def run_mission(
    reference: RunDataset,
    query: RunDataset,
    cfg: PipelineConfig,
    calibration: CalibrationResult,
    backends: Backends | None = None,
) -> AnomalyReport:
    """Pair the runs, detect over every pair, and aggregate in time order."""
    effective = cfg.with_calibration(calibration)
    if backends is None:
        backends = make_backends(effective.backend)

    pairing = pair_images(reference, query, effective.pairing)

    if effective.jobs == 1 or not pairing.pairs:
        detected = [detect_pair(p, effective, backends) for p in pairing.pairs]
    else:
        with ThreadPoolExecutor(max_workers=effective.jobs) as pool:
            detected = list(
                pool.map(lambda p: detect_pair(p, effective, backends), pairing.pairs)
            )

    reports = list(detected)
    for record in pairing.unpaired:
        reports.append(
            PairReport(
                query_id=record.image_id,
                reference_id=None,
                timestamp=record.pose.timestamp,
                status=PairStatus.UNPAIRED,
            )
        )
    reports.sort(key=lambda r: (r.timestamp, r.query_id))

    return AnomalyReport(
        reference_run=reference.run_id,
        query_run=query.run_id,
        calibration=CalibrationSummary(
            delta=calibration.delta, eps=calibration.eps, min_pts=calibration.min_pts
        ),
        pairs=tuple(reports),
    )


# --------------------------------------------------------------------------
# Evaluation against ground truth


@dataclass(frozen=True)
class FrameJudgment:
    query_id: str
    timestamp: float
    correct: bool
    n_regions: int
    n_truth: int


@dataclass(frozen=True)
class Evaluation:
    """Frame-level confusion counts and derived rates.

    A frame is judged correct when its truth and its report agree on
    whether anything changed and, for truly changed frames flagged by the
    report, at least one reported region box intersects a truth box
    (``rule="presence"`` drops the intersection requirement). Frames whose
    status prevented detection (unpaired, no overlap, backend error) carry
    no regions and therefore count as predicted-clean.
    """

    n_frames: int
    true_positive: int
    true_negative: int
    false_positive: int
    false_negative: int
    accuracy: float
    recall: float
    precision: float
    fp_rate: float
    accuracy_over_time: tuple[tuple[float, float], ...]
    frames: tuple[FrameJudgment, ...] = ()


def evaluate(report: AnomalyReport, truth: GroundTruth, rule: str = "intersect") -> Evaluation:
    if rule not in ("intersect", "presence"):
        raise ValueError(f"unknown evaluation rule '{rule}'")

    ordered = sorted(report.pairs, key=lambda r: (r.timestamp, r.query_id))
    tp = tn = fp = fn = 0
    series: list[tuple[float, float]] = []
    frames: list[FrameJudgment] = []
    for i, pair in enumerate(ordered, start=1):
        if pair.query_id not in truth.frames:
            raise InputError(f"query '{pair.query_id}' missing from ground truth")
        truth_boxes = truth.frames[pair.query_id]
        has_truth = bool(truth_boxes)
        has_regions = bool(pair.regions)
        if has_truth and has_regions:
            localized = rule == "presence" or any(
                region.bbox.intersects(box)
                for region in pair.regions
                for box in truth_boxes
            )
            if localized:
                tp += 1
                correct = True
            else:
                fn += 1  # flagged the frame but nowhere near the change
                correct = False
        elif has_truth:
            fn += 1
            correct = False
        elif has_regions:
            fp += 1
            correct = False
        else:
            tn += 1
            correct = True
        frames.append(
            FrameJudgment(
                query_id=pair.query_id,
                timestamp=pair.timestamp,
                correct=correct,
                n_regions=len(pair.regions),
                n_truth=len(truth_boxes),
            )
        )
        series.append((pair.timestamp, (tp + tn) / i))

    total = len(ordered)
    return Evaluation(
        n_frames=total,
        true_positive=tp,
        true_negative=tn,
        false_positive=fp,
        false_negative=fn,
        accuracy=(tp + tn) / total if total else 1.0,
        recall=tp / (tp + fn) if (tp + fn) else 1.0,
        precision=tp / (tp + fp) if (tp + fp) else 1.0,
        fp_rate=fp / (fp + tn) if (fp + tn) else 0.0,
        accuracy_over_time=tuple(series),
        frames=tuple(frames),
    )
