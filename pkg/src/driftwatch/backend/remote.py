"""HTTP client for an external inference service.

The client is a thin transport: payloads and response validation live in
:mod:`driftwatch.backend.protocol`. Every transport failure (connection
refused, timeout, non-2xx status, unparseable body) surfaces as
:class:`BackendError` so the pipeline can degrade a single pair instead of
aborting a mission.
"""

from __future__ import annotations

from typing import Any, Sequence

import numpy as np
import requests

from ..errors import BackendError
from . import protocol
from .base import (
    BackendConfig,
    DescriptorSet,
    FeatureBackend,
    Keypoint,
    MatchResult,
)


class InferenceClient:
    """Session-backed JSON client for the /v1 inference endpoints."""

    def __init__(self, base_url: str, timeout: float = 10.0):
        if not base_url:
            raise ValueError("base_url is required for the remote backend")
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self._session = requests.Session()

    def close(self) -> None:
        self._session.close()

    def _call(self, method: str, path: str, payload: dict[str, Any] | None = None) -> Any:
        url = self.base_url + path
        try:
            resp = self._session.request(method, url, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendError(f"{method} {url}: {exc}") from exc
        if resp.status_code != 200:
            detail = resp.text[:200].strip()
            raise BackendError(f"{method} {url}: HTTP {resp.status_code}: {detail}")
        try:
            return resp.json()
        except ValueError as exc:
            raise BackendError(f"{method} {url}: response is not valid JSON") from exc

    def extract(self, image: np.ndarray) -> tuple[list[Keypoint], DescriptorSet]:
        body = self._call("POST", protocol.EXTRACT_PATH, protocol.extract_request(image))
        return protocol.parse_extract_response(body)

    def match(
        self,
        kpts_a: Sequence[Keypoint],
        desc_a: DescriptorSet,
        kpts_b: Sequence[Keypoint],
        desc_b: DescriptorSet,
        delta: float,
        options: dict[str, Any] | None = None,
    ) -> list[tuple[int, int, float]]:
        body = self._call(
            "POST",
            protocol.MATCH_PATH,
            protocol.match_request(kpts_a, desc_a, kpts_b, desc_b, delta, options),
        )
        return protocol.parse_match_response(body)

    def segment(self, image: np.ndarray) -> list[dict[str, Any]]:
        body = self._call("POST", protocol.SEGMENT_PATH, protocol.extract_request(image))
        return protocol.parse_segment_response(body)

    def health(self) -> dict[str, Any]:
        body = self._call("GET", protocol.HEALTH_PATH)
        return protocol.parse_health_response(body)


class RemoteBackend(FeatureBackend):
    """Feature extraction and matching delegated to the inference service."""

    needs_pixels = True

    def __init__(self, config: BackendConfig, client: InferenceClient | None = None):
        if client is None:
            if not config.base_url:
                raise ValueError("remote backend requires base_url")
            client = InferenceClient(config.base_url, timeout=config.timeout)
        self.config = config
        self.client = client

    def extract(
        self, image: np.ndarray | None, image_id: str | None = None
    ) -> tuple[list[Keypoint], DescriptorSet]:
        if image is None:
            raise ValueError("remote backend needs decoded pixels")
        keypoints, descriptors = self.client.extract(image)
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
        pairs = self.client.match(
            kpts_a, desc_a, kpts_b, desc_b, delta, self.config.options
        )
        # The service already applies the threshold; enforce it again so a
        # sloppy server cannot leak low-confidence pairs into the pipeline.
        kept = [(ia, ib, conf) for ia, ib, conf in pairs if conf >= delta]
        try:
            return MatchResult.from_pairs(kept, len(kpts_a), len(kpts_b), delta)
        except ValueError as exc:
            raise BackendError(f"match response failed validation: {exc}") from exc
