"""Instance masks, the per-instance anomaly vote, and mask providers.

An instance segmentation provider returns masks for the query frame; each
instance is then judged by a vote over the keypoints that fall inside its
mask: with ``n_len`` unmatched and ``m_len`` matched points, the instance is
anomalous exactly when ``n_len - m_len >= 1``. Unmatched points inside any
segmented instance are deleted before residual clustering so a confidently
segmented object is reported once, by its vote, not a second time as a
point cluster (``removal_scope`` in the pipeline config narrows deletion to
anomalous instances only).

Masks travel as uncompressed binary run-length encoding, row-major,
starting with the count of zero bits: ``{"size": [h, w], "counts": [...]}``
with zero-runs and one-runs alternating.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .backend.remote import InferenceClient
from .backend.scripted import load_fixture
from .errors import BackendError, FixtureError
from .overlap import Point, RectMask


def rle_decode(size: Sequence[int], counts: Sequence[int]) -> np.ndarray:
    """Expand alternating zero/one run lengths into an (h, w) boolean mask."""
    h, w = int(size[0]), int(size[1])
    if h <= 0 or w <= 0:
        raise ValueError(f"mask size must be positive, got {h}x{w}")
    total = sum(counts)
    if total != h * w:
        raise ValueError(f"run lengths cover {total} pixels, mask needs {h * w}")
    if any(c < 0 for c in counts):
        raise ValueError("run lengths cannot be negative")
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False  # encoding starts with the zero run, possibly of length 0
    for run in counts:
        if value:
            flat[pos : pos + run] = True
        pos += run
        value = not value
    return flat.reshape(h, w)


def rle_encode(mask: np.ndarray) -> dict[str, Any]:
    """Inverse of :func:`rle_decode`; always emits the leading zero run."""
    if mask.ndim != 2:
        raise ValueError("mask must be 2-D")
    h, w = mask.shape
    flat = np.asarray(mask, dtype=bool).ravel()
    counts: list[int] = []
    if flat.size == 0:
        raise ValueError("mask must be non-empty")
    changes = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds)
    if flat[0]:
        counts.append(0)
    counts.extend(int(r) for r in runs)
    return {"size": [h, w], "counts": counts}


@dataclass(frozen=True)
class InstanceMask:
    """One segmented instance of the query frame."""

    class_label: str
    score: float
    bbox: RectMask
    size: tuple[int, int]  # (height, width)
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"instance score {self.score} outside [0, 1]")
        pixels = rle_decode(self.size, self.counts)  # validates coverage
        rows, cols = np.nonzero(pixels)
        if len(rows):
            x0, x1 = float(cols.min()), float(cols.max())
            y0, y1 = float(rows.min()), float(rows.max())
            if (
                x0 < self.bbox.x_min
                or x1 > self.bbox.x_max
                or y0 < self.bbox.y_min
                or y1 > self.bbox.y_max
            ):
                raise ValueError(
                    f"mask pixels span ({x0}, {y0})..({x1}, {y1}), "
                    f"outside bbox {self.bbox.to_list()}"
                )

    @cached_property
    def pixels(self) -> np.ndarray:
        return rle_decode(self.size, self.counts)

    def contains_point(self, point: Point) -> bool:
        """Mask-bit membership at the rounded pixel; edge points clamp into range."""
        h, w = self.size
        col = min(max(int(math.floor(point[0] + 0.5)), 0), w - 1)
        row = min(max(int(math.floor(point[1] + 0.5)), 0), h - 1)
        return bool(self.pixels[row, col])

    def to_json(self) -> dict[str, Any]:
        return {
            "class": self.class_label,
            "score": self.score,
            "bbox": self.bbox.to_list(),
            "mask": {"size": list(self.size), "counts": list(self.counts)},
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "InstanceMask":
        try:
            bbox = RectMask.from_list(doc["bbox"])
            mask = doc["mask"]
            size = (int(mask["size"][0]), int(mask["size"][1]))
            counts = tuple(int(c) for c in mask["counts"])
            return cls(
                class_label=str(doc["class"]),
                score=float(doc["score"]),
                bbox=bbox,
                size=size,
                counts=counts,
            )
        except (KeyError, IndexError, TypeError) as exc:
            raise ValueError(f"malformed instance: {exc}") from exc


@dataclass(frozen=True)
class SegmentVote:
    """Keypoint tally for one instance; anomalous iff n_len - m_len >= 1."""

    instance: InstanceMask
    n_len: int
    m_len: int
    is_anomaly: bool

    def __post_init__(self) -> None:
        if self.n_len < 0 or self.m_len < 0:
            raise ValueError("vote counts cannot be negative")
        if self.is_anomaly != (self.n_len - self.m_len >= 1):
            raise ValueError("is_anomaly contradicts the counts")


def vote(instance: InstanceMask, matched: Sequence[Point], unmatched: Sequence[Point]) -> SegmentVote:
    """Tally mask membership of matched/unmatched points and apply the rule."""
    n_len = sum(1 for p in unmatched if instance.contains_point(p))
    m_len = sum(1 for p in matched if instance.contains_point(p))
    return SegmentVote(
        instance=instance,
        n_len=n_len,
        m_len=m_len,
        is_anomaly=n_len - m_len >= 1,
    )


def remove_segmented(
    unmatched: Sequence[Point], instances: Sequence[InstanceMask]
) -> list[Point]:
    """Unmatched points inside no instance mask, in input order.

    A point covered by several overlapping masks still disappears exactly
    once; with no instances the input comes back unchanged.
    """
    if not instances:
        return list(unmatched)
    return [
        p for p in unmatched if not any(inst.contains_point(p) for inst in instances)
    ]


# --------------------------------------------------------------------------
# Providers


class Segmenter:
    """Provider contract: instances for a query frame, best score first."""

    needs_pixels: bool = True

    def segment(
        self, image: np.ndarray | None, image_id: str | None = None
    ) -> list[InstanceMask]:
        raise NotImplementedError


class NullSegmenter(Segmenter):
    """No segmentation model: every frame reports zero instances."""

    needs_pixels = False

    def segment(
        self, image: np.ndarray | None, image_id: str | None = None
    ) -> list[InstanceMask]:
        return []


class ScriptedSegmenter(Segmenter):
    """Replays recorded instances from the fixture's ``segments`` section.

    An image id listed with an empty list is a frame with nothing segmented;
    an id absent from the fixture is a replay miss and raises.
    """

    needs_pixels = False

    def __init__(self, fixture_path: str | Path):
        self.fixture = load_fixture(fixture_path)
        self._where = str(fixture_path)

    def segment(
        self, image: np.ndarray | None, image_id: str | None = None
    ) -> list[InstanceMask]:
        if image_id is None:
            raise ValueError("scripted segmenter needs an image_id to replay")
        entries = self.fixture["segments"].get(image_id)
        if entries is None:
            raise FixtureError(f"{self._where}: no segments recorded for '{image_id}'")
        instances = []
        for i, doc in enumerate(entries):
            try:
                instances.append(InstanceMask.from_json(doc))
            except ValueError as exc:
                raise FixtureError(
                    f"{self._where}: segments['{image_id}'][{i}]: {exc}"
                ) from exc
        return sorted(instances, key=lambda m: -m.score)


class RemoteSegmenter(Segmenter):
    """Delegates to the inference service's segmentation endpoint."""

    needs_pixels = True

    def __init__(self, client: InferenceClient):
        self.client = client

    def segment(
        self, image: np.ndarray | None, image_id: str | None = None
    ) -> list[InstanceMask]:
        if image is None:
            raise ValueError("remote segmenter needs decoded pixels")
        raw = self.client.segment(image)
        instances = []
        for i, doc in enumerate(raw):
            try:
                instances.append(InstanceMask.from_json(doc))
            except ValueError as exc:
                raise BackendError(f"segment response: instances[{i}]: {exc}") from exc
        return sorted(instances, key=lambda m: -m.score)
