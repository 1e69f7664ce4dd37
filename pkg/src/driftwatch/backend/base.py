"""Feature extraction/matching provider contract and shared types.

All backends agree on confidence semantics: higher means more matchable, and
the match threshold is a lower cut-off. Raising the threshold on identical
inputs never adds a match.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

Match = tuple[int, int, float]  # (index_a, index_b, confidence)


class DescriptorKind(str, enum.Enum):
    BINARY = "binary"
    REAL = "real"


class BackendKind(str, enum.Enum):
    NATIVE = "native"
    SCRIPTED = "scripted"
    REMOTE = "remote"


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    score: float

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.score]


@dataclass(frozen=True)
class DescriptorSet:
    """One fixed-length vector per keypoint.

    Binary descriptors are stored packed, one row of ``dim/8`` bytes per
    keypoint; real descriptors as float32 rows of length ``dim``.
    """

    data: np.ndarray
    kind: DescriptorKind
    dim: int  # bits for binary, components for real

    def __post_init__(self) -> None:
        if self.data.ndim != 2:
            raise ValueError("descriptor data must be 2-D (count x vector)")
        expect = self.dim // 8 if self.kind is DescriptorKind.BINARY else self.dim
        if self.data.shape[0] and self.data.shape[1] != expect:
            raise ValueError(
                f"descriptor rows have {self.data.shape[1]} entries, expected {expect}"
            )

    def __len__(self) -> int:
        return int(self.data.shape[0])

    def compatible_with(self, other: "DescriptorSet") -> bool:
        return self.kind == other.kind and self.dim == other.dim

    def take(self, indices: Iterable[int]) -> "DescriptorSet":
        idx = list(indices)
        return DescriptorSet(self.data[idx] if idx else self.data[:0], self.kind, self.dim)

    def to_json(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "dim": self.dim,
            "data": self.data.tolist(),
        }

    @classmethod
    def from_json(cls, doc: dict[str, Any]) -> "DescriptorSet":
        kind = DescriptorKind(doc["kind"])
        dim = int(doc["dim"])
        dtype = np.uint8 if kind is DescriptorKind.BINARY else np.float32
        width = dim // 8 if kind is DescriptorKind.BINARY else dim
        rows = doc["data"]
        data = np.asarray(rows, dtype=dtype)
        if data.size == 0:
            data = np.zeros((0, width), dtype=dtype)
        return cls(data=data, kind=kind, dim=dim)


@dataclass(frozen=True)
class MatchResult:
    """One-to-one matches plus the leftover indices on each side."""

    matches: tuple[Match, ...]
    unmatched_a: tuple[int, ...]
    unmatched_b: tuple[int, ...]

    @classmethod
    def from_pairs(
        cls, pairs: Sequence[Match], count_a: int, count_b: int, delta: float
    ) -> "MatchResult":
        """Build a validated result: one-to-one, confidences >= delta, and
        matched plus unmatched partitioning each side's index set."""
        seen_a: set[int] = set()
        seen_b: set[int] = set()
        cleaned: list[Match] = []
        for ia, ib, conf in pairs:
            ia, ib, conf = int(ia), int(ib), float(conf)
            if not 0 <= ia < count_a or not 0 <= ib < count_b:
                raise ValueError(f"match index ({ia},{ib}) out of range")
            if ia in seen_a or ib in seen_b:
                raise ValueError(f"match index ({ia},{ib}) repeats; matches must be one-to-one")
            if conf < delta:
                raise ValueError(f"match confidence {conf} below threshold {delta}")
            seen_a.add(ia)
            seen_b.add(ib)
            cleaned.append((ia, ib, conf))
        cleaned.sort(key=lambda m: m[0])
        unmatched_a = tuple(i for i in range(count_a) if i not in seen_a)
        unmatched_b = tuple(i for i in range(count_b) if i not in seen_b)
        return cls(tuple(cleaned), unmatched_a, unmatched_b)

    def match_set(self) -> set[tuple[int, int]]:
        return {(ia, ib) for ia, ib, _ in self.matches}


@dataclass(frozen=True)
class BackendConfig:
    """Backend selection plus kind-specific settings."""

    kind: BackendKind = BackendKind.NATIVE
    match_threshold: float = 0.2
    # native
    max_keypoints: int = 800
    corner_threshold: int = 20  # grey levels
    # scripted
    fixture_path: Path | None = None
    # remote
    base_url: str | None = None
    timeout: float = 10.0
    options: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.match_threshold < 1.0:
            raise ValueError("match_threshold must be in [0, 1)")


class FeatureBackend:
    """Stateless extract/match provider; safe for concurrent calls."""

    #: whether extract() needs decoded pixels (scripted replay does not)
    needs_pixels: bool = True

    def extract(
        self, image: np.ndarray | None, image_id: str | None = None
    ) -> tuple[list[Keypoint], DescriptorSet]:
        raise NotImplementedError

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
        raise NotImplementedError
