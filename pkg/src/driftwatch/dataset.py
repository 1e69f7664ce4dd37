"""Pose-tagged mission recordings and report persistence.

A run directory holds a line-delimited pose manifest plus an images
subdirectory::

    <run>/poses.jsonl
    <run>/images/*.png

Each manifest line associates one image with one pose, either with a yaw
angle or a quaternion (exactly one form per line)::

    {"image_id": "f0001", "file": "images/f0001.png", "t": 12.5,
     "x": 1.0, "y": 2.0, "z": 0.0, "yaw": 0.12}

Loaded datasets are immutable and hold paths plus poses only; pixels are
decoded lazily so multi-thousand-frame missions load in milliseconds.
"""

from __future__ import annotations

import enum
import json
import math
import os
import tempfile
from dataclasses import dataclass, fields, is_dataclass
from pathlib import Path
from typing import Any

import numpy as np
from PIL import Image

from .errors import DatasetError
from .overlap import RectMask
from .report import (
    SCHEMA_VERSION,
    AnomalyRegion,
    AnomalyReport,
    CalibrationSummary,
    GroundTruth,
    PairCounts,
    PairReport,
    PairStatus,
    RegionSource,
)

TWO_PI = 2.0 * math.pi


def normalize_yaw(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    wrapped = theta % TWO_PI  # [0, 2*pi)
    if wrapped > math.pi:
        wrapped -= TWO_PI
    return wrapped


def quaternion_yaw(qx: float, qy: float, qz: float, qw: float) -> float:
    """Heading extracted from a unit quaternion; pitch and roll are discarded."""
    return math.atan2(2.0 * (qw * qz + qx * qy), 1.0 - 2.0 * (qy * qy + qz * qz))


class RunRole(str, enum.Enum):
    REFERENCE = "reference"
    QUERY = "query"
    CALIBRATION = "calibration"


@dataclass(frozen=True)
class Pose:
    """Planar position plus heading; yaw is always stored wrapped to (-pi, pi]."""

    x: float
    y: float
    z: float
    yaw: float
    timestamp: float


@dataclass(frozen=True)
class ImageRecord:
    image_id: str
    image_path: Path
    pose: Pose
    width: int
    height: int


@dataclass(frozen=True)
class RunDataset:
    run_id: str
    records: tuple[ImageRecord, ...]
    role: RunRole

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self, image_id: str) -> ImageRecord:
        for rec in self.records:
            if rec.image_id == image_id:
                return rec
        raise KeyError(image_id)


def load_grayscale(path: Path | str) -> np.ndarray:
    """Decode an image file to a uint8 grayscale array."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("L"), dtype=np.uint8)
    except OSError as exc:
        raise DatasetError(f"cannot decode image {path}: {exc}") from exc


def _pose_from_row(row: dict[str, Any], where: str) -> Pose:
    for key in ("t", "x", "y", "z"):
        if key not in row:
            raise DatasetError(f"{where}: missing field '{key}'")
    has_yaw = "yaw" in row
    quat_keys = ("qx", "qy", "qz", "qw")
    has_quat = any(k in row for k in quat_keys)
    if has_yaw and has_quat:
        raise DatasetError(f"{where}: give either 'yaw' or a quaternion, not both")
    if has_yaw:
        yaw = float(row["yaw"])
    elif has_quat:
        if not all(k in row for k in quat_keys):
            raise DatasetError(f"{where}: quaternion needs all of qx, qy, qz, qw")
        yaw = quaternion_yaw(*(float(row[k]) for k in quat_keys))
    else:
        raise DatasetError(f"{where}: missing orientation ('yaw' or quaternion)")
    return Pose(
        x=float(row["x"]),
        y=float(row["y"]),
        z=float(row["z"]),
        yaw=normalize_yaw(yaw),
        timestamp=float(row["t"]),
    )


def load_run(path: Path | str, role: RunRole = RunRole.QUERY) -> RunDataset:
    """Load and validate a run directory.

    Raises :class:`DatasetError` on a missing manifest, a manifest row whose
    image is not on disk, duplicate image ids, or non-monotonic timestamps.
    """
    root = Path(path)
    manifest = root / "poses.jsonl"
    if not manifest.is_file():
        raise DatasetError(f"no pose manifest at {manifest}")

    records: list[ImageRecord] = []
    seen_ids: set[str] = set()
    prev_t = -math.inf
    with open(manifest, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{manifest}:{lineno}"
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{where}: invalid JSON ({exc})") from exc
            if not isinstance(row, dict):
                raise DatasetError(f"{where}: manifest row must be an object")
            for key in ("image_id", "file"):
                if key not in row:
                    raise DatasetError(f"{where}: missing field '{key}'")
            image_id = str(row["image_id"])
            if image_id in seen_ids:
                raise DatasetError(f"{where}: duplicate image_id '{image_id}'")
            seen_ids.add(image_id)

            image_path = root / str(row["file"])
            if not image_path.is_file():
                raise DatasetError(f"{where}: image '{row['file']}' not found at {image_path}")
            try:
                with Image.open(image_path) as img:
                    width, height = img.size
            except OSError as exc:
                raise DatasetError(f"{where}: image '{row['file']}' does not decode: {exc}") from exc

            pose = _pose_from_row(row, where)
            if pose.timestamp < prev_t:
                raise DatasetError(
                    f"{where}: timestamp {pose.timestamp} precedes previous {prev_t}"
                )
            prev_t = pose.timestamp
            records.append(
                ImageRecord(
                    image_id=image_id,
                    image_path=image_path,
                    pose=pose,
                    width=width,
                    height=height,
                )
            )
    return RunDataset(run_id=root.name, records=tuple(records), role=role)


# --------------------------------------------------------------------------
# Report persistence


def atomic_write_text(path: Path | str, text: str) -> None:
    """Write via a temp file + rename so a failure leaves no partial file."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _check_finite(value: Any, where: str) -> None:
    if isinstance(value, float) and not math.isfinite(value):
        raise DatasetError(f"{where}: non-finite value {value!r}")
    if isinstance(value, dict):
        for key, sub in value.items():
            _check_finite(sub, f"{where}.{key}")
    elif isinstance(value, (list, tuple)):
        for i, sub in enumerate(value):
            _check_finite(sub, f"{where}[{i}]")
    elif is_dataclass(value) and not isinstance(value, type):
        for f in fields(value):
            _check_finite(getattr(value, f.name), f"{where}.{f.name}")


def _region_to_json(region: AnomalyRegion) -> dict[str, Any]:
    return {
        "source": region.source.value,
        "bbox": region.bbox.to_list(),
        "class_label": region.class_label,
        "score": region.score,
        "n_len": region.n_len,
        "m_len": region.m_len,
        "points": None if region.points is None else [list(p) for p in region.points],
    }


def _pair_to_json(pair: PairReport) -> dict[str, Any]:
    return {
        "query_id": pair.query_id,
        "reference_id": pair.reference_id,
        "timestamp": pair.timestamp,
        "status": pair.status.value,
        "mask": None if pair.mask is None else pair.mask.to_list(),
        "counts": {
            "keypoints_q": pair.counts.keypoints_q,
            "keypoints_r": pair.counts.keypoints_r,
            "matched": pair.counts.matched,
            "unmatched_in_mask": pair.counts.unmatched_in_mask,
            "residual_after_removal": pair.counts.residual_after_removal,
        },
        "regions": [_region_to_json(r) for r in pair.regions],
        "error": pair.error,
    }


def report_to_json(report: AnomalyReport) -> dict[str, Any]:
    doc: dict[str, Any] = {
        "schema_version": report.schema_version,
        "reference_run": report.reference_run,
        "query_run": report.query_run,
        "calibration": None
        if report.calibration is None
        else {
            "delta": report.calibration.delta,
            "eps": report.calibration.eps,
            "min_pts": report.calibration.min_pts,
        },
        "pairs": [_pair_to_json(p) for p in report.pairs],
    }
    return doc


def save_report(report: AnomalyReport, path: Path | str) -> None:
    """Serialize a report; rejects non-finite numbers anywhere in it."""
    _check_finite(report, "report")
    doc = report_to_json(report)
    atomic_write_text(path, json.dumps(doc, indent=2, allow_nan=False) + "\n")


class _Reader:
    """Schema walker that names the offending field path in error messages."""

    def __init__(self, doc: Any, where: str = "report"):
        self.doc = doc
        self.where = where

    def child(self, key: str | int) -> "_Reader":
        if isinstance(key, int):
            return _Reader(self.doc[key], f"{self.where}[{key}]")
        if not isinstance(self.doc, dict):
            raise DatasetError(f"{self.where}: expected object")
        if key not in self.doc:
            raise DatasetError(f"{self.where}: missing required field '{key}'")
        return _Reader(self.doc[key], f"{self.where}.{key}")

    def get(self, key: str, default: Any = None) -> Any:
        if not isinstance(self.doc, dict):
            raise DatasetError(f"{self.where}: expected object")
        value = self.doc.get(key, default)
        return value

    def require(self, key: str) -> Any:
        return self.child(key).doc

    def as_type(self, kind: type, what: str) -> Any:
        if kind is float and isinstance(self.doc, int) and not isinstance(self.doc, bool):
            return float(self.doc)
        if not isinstance(self.doc, kind) or isinstance(self.doc, bool):
            raise DatasetError(f"{self.where}: expected {what}")
        return self.doc


def _mask_from_json(raw: Any, where: str) -> RectMask | None:
    if raw is None:
        return None
    try:
        return RectMask.from_list(raw)
    except (TypeError, ValueError) as exc:
        raise DatasetError(f"{where}: bad mask: {exc}") from exc


def _region_from_json(node: _Reader) -> AnomalyRegion:
    raw = node.doc
    if not isinstance(raw, dict):
        raise DatasetError(f"{node.where}: expected object")
    try:
        source = RegionSource(node.require("source"))
    except ValueError as exc:
        raise DatasetError(f"{node.where}.source: unknown source {raw.get('source')!r}") from exc
    bbox = _mask_from_json(node.require("bbox"), f"{node.where}.bbox")
    if bbox is None:
        raise DatasetError(f"{node.where}.bbox: must not be null")
    points = node.get("points")
    try:
        return AnomalyRegion(
            source=source,
            bbox=bbox,
            class_label=node.get("class_label"),
            score=node.get("score"),
            n_len=node.get("n_len"),
            m_len=node.get("m_len"),
            points=None if points is None else tuple((float(p[0]), float(p[1])) for p in points),
        )
    except (TypeError, ValueError, IndexError) as exc:
        raise DatasetError(f"{node.where}: invalid region: {exc}") from exc


def _pair_from_json(node: _Reader) -> PairReport:
    status_raw = node.require("status")
    try:
        status = PairStatus(status_raw)
    except ValueError as exc:
        raise DatasetError(f"{node.where}.status: unknown status {status_raw!r}") from exc
    counts_node = node.get("counts") or {}
    counts = PairCounts(
        keypoints_q=int(counts_node.get("keypoints_q", 0)),
        keypoints_r=int(counts_node.get("keypoints_r", 0)),
        matched=int(counts_node.get("matched", 0)),
        unmatched_in_mask=int(counts_node.get("unmatched_in_mask", 0)),
        residual_after_removal=int(counts_node.get("residual_after_removal", 0)),
    )
    regions_raw = node.get("regions", [])
    if not isinstance(regions_raw, list):
        raise DatasetError(f"{node.where}.regions: expected array")
    regions = tuple(
        _region_from_json(_Reader(r, f"{node.where}.regions[{i}]"))
        for i, r in enumerate(regions_raw)
    )
    return PairReport(
        query_id=str(node.require("query_id")),
        reference_id=node.get("reference_id"),
        timestamp=float(node.get("timestamp", 0.0)),
        status=status,
        mask=_mask_from_json(node.get("mask"), f"{node.where}.mask"),
        counts=counts,
        regions=regions,
        error=node.get("error"),
    )


def load_report(path: Path | str) -> AnomalyReport:
    """Inverse of :func:`save_report`; schema errors name the field path."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except FileNotFoundError as exc:
        raise DatasetError(f"no report at {path}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: invalid JSON ({exc})") from exc

    root = _Reader(doc)
    version = root.child("schema_version").as_type(int, "integer")
    if version != SCHEMA_VERSION:
        raise DatasetError(f"report.schema_version: unsupported version {version}")
    calibration_raw = root.get("calibration")
    calibration = None
    if calibration_raw is not None:
        cal_node = root.child("calibration")
        calibration = CalibrationSummary(
            delta=cal_node.child("delta").as_type(float, "number"),
            eps=cal_node.child("eps").as_type(float, "number"),
            min_pts=cal_node.child("min_pts").as_type(int, "integer"),
        )
    pairs_raw = root.get("pairs", [])
    if not isinstance(pairs_raw, list):
        raise DatasetError("report.pairs: expected array")
    pairs = tuple(
        _pair_from_json(_Reader(p, f"report.pairs[{i}]")) for i, p in enumerate(pairs_raw)
    )
    return AnomalyReport(
        reference_run=str(root.require("reference_run")),
        query_run=str(root.require("query_run")),
        calibration=calibration,
        pairs=pairs,
        schema_version=version,
    )


def load_ground_truth(path: Path | str) -> GroundTruth:
    """Read a ground-truth file: ``{"frames": {query_id: [[x0,y0,x1,y1]...]}}``."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DatasetError(f"cannot read ground truth {path}: {exc}") from exc
    frames_raw = _Reader(doc, "truth").child("frames").as_type(dict, "object")
    frames: dict[str, tuple[RectMask, ...]] = {}
    for query_id, boxes in frames_raw.items():
        if not isinstance(boxes, list):
            raise DatasetError(f"truth.frames.{query_id}: expected array of boxes")
        frames[str(query_id)] = tuple(
            RectMask.from_list(b) for b in boxes
        )
    return GroundTruth(frames=frames)


def save_ground_truth(truth: GroundTruth, path: Path | str) -> None:
    doc = {
        "frames": {qid: [box.to_list() for box in boxes] for qid, boxes in truth.frames.items()}
    }
    atomic_write_text(path, json.dumps(doc, indent=2, allow_nan=False) + "\n")
