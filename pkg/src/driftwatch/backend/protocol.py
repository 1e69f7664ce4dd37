"""Wire schema for the HTTP inference service.

The service exposes four JSON endpoints:

    POST /v1/extract  {"image": <base64 PNG>}           -> keypoints + descriptors
    POST /v1/match    {"a": {...}, "b": {...},
                       "match_threshold": f, "options": {}} -> {"pairs": [[ia, ib, conf], ...]}
    POST /v1/segment  {"image": <base64 PNG>}           -> {"instances": [...]}
    GET  /v1/health                                      -> {"status": "ok", "models": {...}}

This module owns payload construction and response validation so the client
in :mod:`driftwatch.backend.remote` stays a thin transport. Validation is
strict: a response that fails the schema raises :class:`BackendError` with a
path-qualified message, never a bare KeyError downstream.
"""

from __future__ import annotations

import base64
import binascii
import io
from typing import Any, Sequence

import numpy as np
from PIL import Image

from ..errors import BackendError
from .base import DescriptorSet, Keypoint

EXTRACT_PATH = "/v1/extract"
MATCH_PATH = "/v1/match"
SEGMENT_PATH = "/v1/segment"
HEALTH_PATH = "/v1/health"


def encode_image(image: np.ndarray) -> str:
    """Grayscale raster to base64 PNG text."""
    if image.ndim != 2:
        raise ValueError("expected a 2-D grayscale raster")
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image, dtype=np.uint8), mode="L").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def decode_image(data: str) -> np.ndarray:
    try:
        raw = base64.b64decode(data, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise ValueError(f"invalid base64 image payload: {exc}") from exc
    with Image.open(io.BytesIO(raw)) as img:
        return np.asarray(img.convert("L"))


def extract_request(image: np.ndarray) -> dict[str, Any]:
    return {"image": encode_image(image)}


def match_request(
    kpts_a: Sequence[Keypoint],
    desc_a: DescriptorSet,
    kpts_b: Sequence[Keypoint],
    desc_b: DescriptorSet,
    delta: float,
    options: dict[str, Any] | None = None,
) -> dict[str, Any]:
    return {
        "a": {"keypoints": [kp.to_list() for kp in kpts_a], "descriptors": desc_a.to_json()},
        "b": {"keypoints": [kp.to_list() for kp in kpts_b], "descriptors": desc_b.to_json()},
        "match_threshold": delta,
        "options": dict(options or {}),
    }


def _require(obj: Any, key: str, where: str) -> Any:
    if not isinstance(obj, dict):
        raise BackendError(f"{where}: expected an object, got {type(obj).__name__}")
    if key not in obj:
        raise BackendError(f"{where}: missing required field '{key}'")
    return obj[key]


def parse_extract_response(obj: Any) -> tuple[list[Keypoint], DescriptorSet]:
    raw_kpts = _require(obj, "keypoints", "extract response")
    raw_desc = _require(obj, "descriptors", "extract response")
    if not isinstance(raw_kpts, list):
        raise BackendError("extract response: 'keypoints' must be a list")
    keypoints = []
    for i, row in enumerate(raw_kpts):
        if not isinstance(row, (list, tuple)) or len(row) != 3:
            raise BackendError(f"extract response: keypoints[{i}] must be [x, y, score]")
        try:
            keypoints.append(Keypoint(float(row[0]), float(row[1]), float(row[2])))
        except (TypeError, ValueError) as exc:
            raise BackendError(f"extract response: keypoints[{i}]: {exc}") from exc
    try:
        descriptors = DescriptorSet.from_json(raw_desc)
    except (TypeError, ValueError, KeyError) as exc:
        raise BackendError(f"extract response: descriptors: {exc}") from exc
    if len(descriptors) != len(keypoints):
        raise BackendError(
            f"extract response: {len(keypoints)} keypoints but "
            f"{len(descriptors)} descriptor rows"
        )
    return keypoints, descriptors


def parse_match_response(obj: Any) -> list[tuple[int, int, float]]:
    raw = _require(obj, "pairs", "match response")
    if not isinstance(raw, list):
        raise BackendError("match response: 'pairs' must be a list")
    pairs = []
    for i, row in enumerate(raw):
        if not isinstance(row, (list, tuple)) or len(row) != 3:
            raise BackendError(f"match response: pairs[{i}] must be [ia, ib, conf]")
        ia, ib, conf = row
        if not isinstance(ia, int) or not isinstance(ib, int) or isinstance(ia, bool) or isinstance(ib, bool):
            raise BackendError(f"match response: pairs[{i}] indices must be integers")
        try:
            pairs.append((ia, ib, float(conf)))
        except (TypeError, ValueError) as exc:
            raise BackendError(f"match response: pairs[{i}]: {exc}") from exc
    return pairs


def parse_segment_response(obj: Any) -> list[dict[str, Any]]:
    """Validate instance shapes; RLE decoding happens in the segmentation module."""
    raw = _require(obj, "instances", "segment response")
    if not isinstance(raw, list):
        raise BackendError("segment response: 'instances' must be a list")
    out: list[dict[str, Any]] = []
    for i, inst in enumerate(raw):
        where = f"segment response: instances[{i}]"
        label = _require(inst, "class", where)
        score = _require(inst, "score", where)
        bbox = _require(inst, "bbox", where)
        mask = _require(inst, "mask", where)
        if not isinstance(label, str):
            raise BackendError(f"{where}: 'class' must be a string")
        if not isinstance(score, (int, float)) or isinstance(score, bool):
            raise BackendError(f"{where}: 'score' must be a number")
        if not isinstance(bbox, (list, tuple)) or len(bbox) != 4:
            raise BackendError(f"{where}: 'bbox' must be [x0, y0, x1, y1]")
        size = _require(mask, "size", f"{where}.mask")
        counts = _require(mask, "counts", f"{where}.mask")
        if (
            not isinstance(size, (list, tuple))
            or len(size) != 2
            or not all(isinstance(v, int) and not isinstance(v, bool) and v > 0 for v in size)
        ):
            raise BackendError(f"{where}.mask: 'size' must be [height, width] of positive ints")
        if not isinstance(counts, list) or not all(
            isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in counts
        ):
            raise BackendError(f"{where}.mask: 'counts' must be non-negative integers")
        if sum(counts) != size[0] * size[1]:
            raise BackendError(
                f"{where}.mask: counts cover {sum(counts)} pixels, "
                f"size implies {size[0] * size[1]}"
            )
        out.append(
            {
                "class": label,
                "score": float(score),
                "bbox": [float(v) for v in bbox],
                "mask": {"size": [int(size[0]), int(size[1])], "counts": list(counts)},
            }
        )
    return out


def parse_health_response(obj: Any) -> dict[str, Any]:
    status = _require(obj, "status", "health response")
    models = _require(obj, "models", "health response")
    if not isinstance(models, dict):
        raise BackendError("health response: 'models' must be an object")
    return {"status": status, "models": models}
