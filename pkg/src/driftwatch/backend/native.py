"""Built-in deterministic feature backend.

Corner detection is a contiguous-arc intensity test on a 16-sample ring of
radius 3 (arc length >= 12, contrast above ``corner_threshold`` grey levels)
with non-maximum suppression over a 5 px radius. Descriptors are 256-bit
binary vectors from a fixed, seeded pattern of pixel-pair comparisons inside
a 31x31 patch of the box-smoothed image. Matching is mutual nearest neighbor
under Hamming distance with a symmetric distinctiveness (ratio) test;
confidence is ``1 - hamming/256`` and the threshold is applied last, so
raising it only removes matches.

Everything is a pure function of the image bytes and the config: identical
inputs give bit-identical keypoints, descriptors, and matches.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.ndimage import maximum_filter, uniform_filter

from .base import (
    BackendConfig,
    DescriptorKind,
    DescriptorSet,
    FeatureBackend,
    Keypoint,
    Match,
    MatchResult,
)

DESCRIPTOR_BITS = 256
PATCH_RADIUS = 15  # 31x31 comparison patch
RING_ARC = 12
NMS_RADIUS = 5

# 16-sample Bresenham circle of radius 3, clockwise from 12 o'clock: (dx, dy)
_RING = [
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
]

_POPCOUNT = np.array([bin(v).count("1") for v in range(256)], dtype=np.uint8)


def _brief_pattern() -> np.ndarray:
    # Fixed seed: the pattern is part of the descriptor definition.
    rng = np.random.default_rng(0x5EED_BEEF)
    return rng.integers(-PATCH_RADIUS, PATCH_RADIUS + 1, size=(DESCRIPTOR_BITS, 4))


_PATTERN = _brief_pattern()


def _nms_footprint(radius: int) -> np.ndarray:
    span = np.arange(-radius, radius + 1)
    yy, xx = np.meshgrid(span, span, indexing="ij")
    return (yy * yy + xx * xx) <= radius * radius


_FOOTPRINT = _nms_footprint(NMS_RADIUS)


def _corner_score_map(image: np.ndarray, threshold: int) -> np.ndarray:
    """Per-pixel corner score; zero where the ring test fails."""
    h, w = image.shape
    if h < 7 or w < 7:
        return np.zeros((h, w), dtype=np.float32)
    img = image.astype(np.float32)
    center = img[3 : h - 3, 3 : w - 3]
    ih, iw = center.shape

    bright = np.empty((16, ih, iw), dtype=bool)
    dark = np.empty((16, ih, iw), dtype=bool)
    excess = np.zeros((ih, iw), dtype=np.float32)
    for k, (dx, dy) in enumerate(_RING):
        ring = img[3 + dy : h - 3 + dy, 3 + dx : w - 3 + dx]
        diff = ring - center
        bright[k] = diff > threshold
        dark[k] = diff < -threshold
        excess += np.maximum(np.abs(diff) - threshold, 0)

    def has_arc(flags: np.ndarray) -> np.ndarray:
        # Circular window sums via a doubled cumulative sum along the ring.
        tiled = np.concatenate([flags, flags[: RING_ARC - 1]], axis=0).astype(np.uint8)
        csum = np.cumsum(tiled, axis=0, dtype=np.int16)
        padded = np.concatenate([np.zeros((1, ih, iw), dtype=np.int16), csum], axis=0)
        windows = padded[RING_ARC:] - padded[:-RING_ARC]  # (16, ih, iw)
        return (windows >= RING_ARC).any(axis=0)

    is_corner = has_arc(bright) | has_arc(dark)
    score = np.zeros((h, w), dtype=np.float32)
    inner = excess / (16.0 * (255.0 - threshold))
    score[3 : h - 3, 3 : w - 3] = np.where(is_corner, np.minimum(inner, 1.0), 0.0)
    return score


class NativeBackend(FeatureBackend):
    """Dependency-free detector/matcher; see module docstring for the design."""

    needs_pixels = True

    def __init__(self, config: BackendConfig | None = None):
        self.config = config or BackendConfig()

    def extract(
        self, image: np.ndarray | None, image_id: str | None = None
    ) -> tuple[list[Keypoint], DescriptorSet]:
        if image is None:
            raise ValueError("native backend needs decoded pixels")
        if image.ndim != 2:
            raise ValueError("expected a 2-D grayscale raster")
        if image.size == 0:
            raise ValueError("empty image")
        h, w = image.shape

        # Scoring runs on the same lightly smoothed raster the descriptors
        # sample: per-capture noise then barely moves corner scores, so the
        # detected set is stable across repeat visits to the same scene.
        smoothed = uniform_filter(image.astype(np.float32), size=5, mode="nearest")
        score = _corner_score_map(smoothed, self.config.corner_threshold)
        # Suppression key = quantized score with a raster-order tiebreak, so a
        # flat response plateau yields exactly one keypoint instead of several
        # near-duplicates that destabilize matching between frames.
        n = h * w
        quantized = np.rint(score * np.float64(2**32)).astype(np.int64)
        tiebreak = np.arange(n - 1, -1, -1, dtype=np.int64).reshape(h, w)
        key = quantized * n + tiebreak
        local_max = maximum_filter(key, footprint=_FOOTPRINT, mode="constant", cval=-1)
        keep = (score > 0.0) & (key >= local_max)
        ys, xs = np.nonzero(keep)

        # Descriptors need a full comparison patch inside the frame.
        margin = PATCH_RADIUS + 1
        ok = (xs >= margin) & (xs < w - margin) & (ys >= margin) & (ys < h - margin)
        ys, xs = ys[ok], xs[ok]
        scores = score[ys, xs]

        order = np.lexsort((xs, ys, -scores))[: self.config.max_keypoints]
        ys, xs, scores = ys[order], xs[order], scores[order]

        if len(xs):
            p = _PATTERN
            a = smoothed[ys[:, None] + p[None, :, 1], xs[:, None] + p[None, :, 0]]
            b = smoothed[ys[:, None] + p[None, :, 3], xs[:, None] + p[None, :, 2]]
            packed = np.packbits(a < b, axis=1)
        else:
            packed = np.zeros((0, DESCRIPTOR_BITS // 8), dtype=np.uint8)

        keypoints = [
            Keypoint(float(x), float(y), float(s)) for x, y, s in zip(xs, ys, scores)
        ]
        return keypoints, DescriptorSet(packed, DescriptorKind.BINARY, DESCRIPTOR_BITS)

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
        if desc_a.kind is not DescriptorKind.BINARY or desc_b.kind is not DescriptorKind.BINARY:
            raise ValueError("native backend matches binary descriptors only")
        if not desc_a.compatible_with(desc_b):
            raise ValueError(
                f"incompatible descriptors: {desc_a.kind.value}/{desc_a.dim} "
                f"vs {desc_b.kind.value}/{desc_b.dim}"
            )
        na, nb = len(desc_a), len(desc_b)
        if na != len(kpts_a) or nb != len(kpts_b):
            raise ValueError("descriptor count does not match keypoint count")
        if na == 0 or nb == 0:
            return MatchResult.from_pairs([], na, nb, delta)

        xor = desc_a.data[:, None, :] ^ desc_b.data[None, :, :]
        dist = _POPCOUNT[xor].sum(axis=2, dtype=np.int32)

        pairs = _mutual_pairs(dist, desc_a.dim)
        kept = [(ia, ib, conf) for ia, ib, conf in pairs if conf >= delta]
        return MatchResult.from_pairs(kept, na, nb, delta)


def _mutual_pairs(dist: np.ndarray, dim: int) -> list[Match]:
    """Mutual nearest neighbors; ambiguity shows up as low confidence.

    A point with no real counterpart still gets a mutual partner sometimes,
    but at roughly half the bits differing, so its confidence lands near 0.5
    and the caller's threshold decides whether it survives.
    """
    na, _ = dist.shape
    fwd_idx = dist.argmin(axis=1)
    bwd_idx = dist.argmin(axis=0)

    pairs: list[Match] = []
    for ia in range(na):
        ib = int(fwd_idx[ia])
        if int(bwd_idx[ib]) == ia:
            conf = 1.0 - float(dist[ia, ib]) / dim
            pairs.append((ia, ib, conf))
    return pairs
