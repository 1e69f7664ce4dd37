"""Replay backend: canned extractions and matches from a JSON fixture.

Fixture layout::

    {
      "extractions": {
        "<image_id>": {"keypoints": [[x, y, score], ...],
                        "descriptors": {"kind": ..., "dim": ..., "data": [...]}}
      },
      "matches": {
        "<id_a>|<id_b>|<delta>": {"pairs": [[ia, ib, conf], ...]},
        "<id_a>|<id_b>|*":       {"pairs": [[ia, ib, conf], ...]}
      },
      "segments": {"<image_id>": [<instance>, ...]}
    }

Thresholds in match keys are canonicalized with ``format(delta, 'g')`` so
``0.20`` and ``0.2`` name the same entry. A ``*`` entry answers any
threshold by filtering its pairs to ``conf >= delta``, which keeps replayed
results monotonic across thresholds the same way a live matcher is. An id
listed with empty keypoints is a valid empty extraction; an id absent from
the fixture is a :class:`FixtureError`, because silence and emptiness mean
different things when replaying a recorded run.

This backend works from image ids alone (``needs_pixels`` is False), so
pipelines replay byte-identically with no image decoding at all.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from ..errors import FixtureError
from .base import (
    BackendConfig,
    DescriptorSet,
    FeatureBackend,
    Keypoint,
    MatchResult,
)


def match_key(id_a: str, id_b: str, delta: float | str) -> str:
    token = delta if isinstance(delta, str) else format(delta, "g")
    return f"{id_a}|{id_b}|{token}"


def load_fixture(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    if not path.is_file():
        raise FixtureError(f"fixture not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FixtureError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FixtureError(f"{path}: fixture root must be an object")
    for section in ("extractions", "matches", "segments"):
        if section in doc and not isinstance(doc[section], dict):
            raise FixtureError(f"{path}: '{section}' must be an object")
    doc.setdefault("extractions", {})
    doc.setdefault("matches", {})
    doc.setdefault("segments", {})
    return doc


class ScriptedBackend(FeatureBackend):
    """Serves recorded extractions/matches keyed by image id."""

    needs_pixels = False

    def __init__(self, config: BackendConfig):
        if config.fixture_path is None:
            raise ValueError("scripted backend requires fixture_path")
        self.config = config
        self.fixture = load_fixture(config.fixture_path)
        self._where = str(config.fixture_path)

    def extract(
        self, image: np.ndarray | None, image_id: str | None = None
    ) -> tuple[list[Keypoint], DescriptorSet]:
        if image_id is None:
            raise ValueError("scripted backend needs an image_id to replay")
        entry = self.fixture["extractions"].get(image_id)
        if entry is None:
            raise FixtureError(f"{self._where}: no extraction recorded for '{image_id}'")
        try:
            keypoints = [Keypoint(float(x), float(y), float(s)) for x, y, s in entry["keypoints"]]
            descriptors = DescriptorSet.from_json(entry["descriptors"])
        except (KeyError, TypeError, ValueError) as exc:
            raise FixtureError(
                f"{self._where}: malformed extraction for '{image_id}': {exc}"
            ) from exc
        if len(descriptors) != len(keypoints):
            raise FixtureError(
                f"{self._where}: extraction for '{image_id}' has {len(keypoints)} "
                f"keypoints but {len(descriptors)} descriptor rows"
            )
        if len(keypoints) > self.config.max_keypoints:
            keypoints = keypoints[: self.config.max_keypoints]
            descriptors = descriptors.take(range(self.config.max_keypoints))
        return keypoints, descriptors

    def match(
        self,
        kpts_a: Sequence[Keypoint],
        desc_a: DescriptorSet,
        kpts_b: Sequence[Keypoint],
        desc_b: DescriptorSet,
        delta: float,
        *,
        id_a: str | None = None,
        id_b: str | None = None,
    ) -> MatchResult:
        if id_a is None or id_b is None:
            raise ValueError("scripted backend needs image ids to replay a match")
        matches = self.fixture["matches"]
        entry = matches.get(match_key(id_a, id_b, delta))
        if entry is None:
            entry = matches.get(match_key(id_a, id_b, "*"))
        if entry is None:
            raise FixtureError(
                f"{self._where}: no match recorded for '{id_a}' vs '{id_b}' "
                f"at threshold {format(delta, 'g')}"
            )
        try:
            pairs = [(int(ia), int(ib), float(conf)) for ia, ib, conf in entry["pairs"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise FixtureError(
                f"{self._where}: malformed match entry for '{id_a}' vs '{id_b}': {exc}"
            ) from exc
        kept = [(ia, ib, conf) for ia, ib, conf in pairs if conf >= delta]
        try:
            return MatchResult.from_pairs(kept, len(kpts_a), len(kpts_b), delta)
        except ValueError as exc:
            raise FixtureError(
                f"{self._where}: match entry for '{id_a}' vs '{id_b}' "
                f"failed validation: {exc}"
            ) from exc
