"""Single-shot self-calibration of the match threshold and cluster radius.

Given a handful of image pairs taken a small shift apart, sweep the match
threshold over a grid, score each setting by the normalized coefficient of
variation of matched-keypoint displacement distances, and pick the knee of
that curve as the operating threshold. A rigid shift moves every true match
by the same distance, so good matching shows up as low spread relative to
the mean displacement.

Per pair n the statistic is ``cv_n = sigma_n / mu_n`` over the Euclidean
distances between matched coordinates (population standard deviation). The
per-threshold score averages ``cv_n / mp_n`` across pairs so strong settings
(many matches, tight spread) score low; pairs with fewer than two matches at
a threshold carry no spread information and are excluded from that average
and tallied, because a threshold that destroys all matches must not win by
vacuity.

The cluster radius ``eps`` comes from k-nearest-neighbor distance curves of
keypoint sets: per set, sort every point's distance to its ``min_pts``-th
nearest neighbor and take the knee of that curve; ``eps`` is the mean knee
distance across sets.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .backend.base import FeatureBackend
from .dataset import Pose, ImageRecord, atomic_write_text, load_grayscale
from .errors import BackendError, DatasetError
from .pairing import ImagePair

from PIL import Image

Point = tuple[float, float]

MIN_PTS_DEFAULT = 5


def default_thresholds() -> tuple[float, ...]:
    """The standard sweep grid: 0.0 to 0.9 in steps of 0.1."""
    return tuple(round(i / 10, 1) for i in range(10))


@dataclass(frozen=True)
class PairStats:
    """Displacement statistics for one image pair at one threshold.

    ``cv`` is None when no matches exist; with a single match the spread is
    zero by definition, so ``cv`` is 0 but the pair still carries too little
    information to enter the sweep average (that cut is ``mp >= 2``).
    """

    pair_index: int
    mp: int
    mu: float | None = None
    sigma: float | None = None
    cv: float | None = None

    def __post_init__(self) -> None:
        if self.mp < 0:
            raise ValueError("match count cannot be negative")
        if self.mp == 0 and self.cv is not None:
            raise ValueError("cv must be undefined when there are no matches")


@dataclass(frozen=True)
class CalibrationCurve:
    """Sweep output: one cv value per threshold plus the per-pair detail.

    ``per_pair[t][n]`` holds the PairStats of pair n at ``thresholds[t]``;
    it may be empty for curves restored from disk, which keep only the
    summary. ``excluded`` tallies (threshold, pair_index) combinations that
    were dropped from the average for having fewer than two matches. A cv
    value is None when every pair was excluded at that threshold.
    """

    thresholds: tuple[float, ...]
    cv_values: tuple[float | None, ...]
    n_pairs: int = 0
    per_pair: tuple[tuple[PairStats, ...], ...] = ()
    excluded: tuple[tuple[float, int], ...] = ()

    def __post_init__(self) -> None:
        if not self.thresholds:
            raise ValueError("curve needs at least one threshold")
        for t in self.thresholds:
            if not 0.0 <= t < 1.0:
                raise ValueError(f"threshold {t} outside [0, 1)")
        if any(b <= a for a, b in zip(self.thresholds, self.thresholds[1:])):
            raise ValueError("thresholds must be strictly increasing")
        if len(self.cv_values) != len(self.thresholds):
            raise ValueError("one cv value per threshold required")
        if self.per_pair and len(self.per_pair) != len(self.thresholds):
            raise ValueError("per-pair stats must align with thresholds")


@dataclass(frozen=True)
class KneeResult:
    """Selected threshold; ``degenerate`` flags a featureless curve."""

    delta: float
    degenerate: bool = False


@dataclass(frozen=True)
class CalibrationResult:
    delta: float
    curve: CalibrationCurve
    eps: float
    min_pts: int = MIN_PTS_DEFAULT

    def __post_init__(self) -> None:
        if self.delta not in self.curve.thresholds:
            raise ValueError(f"selected threshold {self.delta} not on the sweep grid")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.min_pts < 2:
            raise ValueError("min_pts must be at least 2")


def pair_cv(match_coords: Sequence[tuple[Point, Point]], pair_index: int = 0) -> PairStats:
    """Displacement statistics for one pair's matched coordinates.

    Degenerate inputs produce flagged stats, never failures: zero matches
    leave every statistic undefined, and identical coordinates (mu of 0)
    define cv as 0 since zero spread is the ideal the statistic rewards.
    """
    mp = len(match_coords)
    if mp == 0:
        return PairStats(pair_index=pair_index, mp=0)
    a = np.asarray([p for p, _ in match_coords], dtype=np.float64)
    b = np.asarray([q for _, q in match_coords], dtype=np.float64)
    dist = np.hypot(*(a - b).T)
    mu = float(dist.mean())
    sigma = float(dist.std())  # population: spread of this pair's distances
    cv = 0.0 if mu == 0.0 else sigma / mu
    return PairStats(pair_index=pair_index, mp=mp, mu=mu, sigma=sigma, cv=cv)


def sweep_from_stats(
    stats: Sequence[Sequence[PairStats]], thresholds: Sequence[float]
) -> CalibrationCurve:
    """Aggregate a [threshold x pair] stats matrix into the sweep curve."""
    if len(stats) != len(thresholds):
        raise ValueError("one stats row per threshold required")
    n_pairs = len(stats[0]) if stats else 0
    cv_values: list[float | None] = []
    excluded: list[tuple[float, int]] = []
    for delta, row in zip(thresholds, stats):
        if len(row) != n_pairs:
            raise ValueError("ragged stats matrix")
        total = 0.0
        kept = 0
        for st in row:  # pair-index order keeps the summation bit-stable
            if st.mp >= 2:
                total += st.cv / st.mp
                kept += 1
            else:
                excluded.append((delta, st.pair_index))
        cv_values.append(total / kept if kept else None)
    return CalibrationCurve(
        thresholds=tuple(thresholds),
        cv_values=tuple(cv_values),
        n_pairs=n_pairs,
        per_pair=tuple(tuple(row) for row in stats),
        excluded=tuple(excluded),
    )


def sweep(
    pairs: Sequence[ImagePair],
    thresholds: Sequence[float],
    backend: FeatureBackend,
) -> CalibrationCurve:
    """Extract once per image, re-match per threshold, aggregate.

    Backend failures propagate with the offending pair attached so a broken
    image or service call is traceable to its input.
    """
    if not pairs:
        raise ValueError("sweep needs at least one image pair")
    if not thresholds:
        raise ValueError("sweep needs at least one threshold")
    grid = tuple(float(t) for t in thresholds)
    for t in grid:
        if not 0.0 <= t < 1.0:
            raise ValueError(f"threshold {t} outside [0, 1)")

    features: dict[str, tuple] = {}

    def extract(record: ImageRecord, n: int):
        if record.image_id not in features:
            try:
                pixels = load_grayscale(record.image_path) if backend.needs_pixels else None
                features[record.image_id] = backend.extract(pixels, image_id=record.image_id)
            except (BackendError, DatasetError) as exc:
                raise type(exc)(f"pair {n} ('{record.image_id}'): {exc}") from exc
        return features[record.image_id]

    stats: list[list[PairStats]] = [[] for _ in grid]
    for n, pair in enumerate(pairs):
        kpts_r, desc_r = extract(pair.reference, n)
        kpts_q, desc_q = extract(pair.query, n)
        for t, delta in enumerate(grid):
            try:
                result = backend.match(
                    kpts_r,
                    desc_r,
                    kpts_q,
                    desc_q,
                    delta,
                    id_a=pair.reference.image_id,
                    id_b=pair.query.image_id,
                )
            except BackendError as exc:
                raise BackendError(
                    f"pair {n} ('{pair.reference.image_id}' vs "
                    f"'{pair.query.image_id}') at threshold {delta:g}: {exc}"
                ) from exc
            coords = [
                ((kpts_r[ia].x, kpts_r[ia].y), (kpts_q[ib].x, kpts_q[ib].y))
                for ia, ib, _ in result.matches
            ]
            stats[t].append(pair_cv(coords, pair_index=n))
    return sweep_from_stats(stats, grid)


def chord_knee_index(xs: Sequence[float], ys: Sequence[float]) -> tuple[int, bool]:
    """Index of maximum vertical deviation from the first-to-last chord.

    Ties break toward the smaller x. A curve with no deviation at all
    (constant or perfectly linear) has no knee; index 0 is returned with the
    degenerate flag set.
    """
    if len(xs) != len(ys):
        raise ValueError("x and y lengths differ")
    if len(xs) < 3:
        raise ValueError(f"knee detection needs at least 3 points, got {len(xs)}")
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if not np.isfinite(y).all():
        raise ValueError("curve values must be finite")
    if x[-1] <= x[0]:
        raise ValueError("x values must increase from first to last")
    chord = y[0] + (y[-1] - y[0]) * (x - x[0]) / (x[-1] - x[0])
    deviation = np.abs(y - chord)
    best = int(deviation.argmax())  # first maximum, so ties pick the smaller x
    tol = 1e-12 * max(1.0, float(np.abs(y).max()))
    if deviation[best] <= tol:
        return 0, True
    return best, False


def knee(curve: CalibrationCurve) -> KneeResult:
    """Select the sweep threshold at the curve's knee point."""
    for delta, cv in zip(curve.thresholds, curve.cv_values):
        if cv is None:
            raise ValueError(
                f"cv undefined at threshold {delta:g}: no pair had two or more "
                "matches there, so the curve has a hole"
            )
    index, degenerate = chord_knee_index(curve.thresholds, curve.cv_values)
    return KneeResult(delta=curve.thresholds[index], degenerate=degenerate)


def k_distances(points: Sequence[Point], k: int) -> np.ndarray:
    """Sorted distances from each point to its k-th nearest neighbor (self excluded)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError("points must be (x, y) pairs")
    n = len(pts)
    if k < 1 or k > n - 1:
        raise ValueError(f"k={k} needs at least {k + 1} points, got {n}")
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(dist, np.inf)
    dist.sort(axis=1)
    return np.sort(dist[:, k - 1])


def calibrate_eps(point_sets: Sequence[Sequence[Point]], min_pts: int) -> float:
    """Mean knee of the per-set sorted k-distance curves.

    Sets with fewer than ``min_pts + 1`` points cannot supply a k-th
    neighbor for every point and are skipped; if everything is skipped there
    is nothing to calibrate from and that is an error.
    """
    if min_pts < 2:
        raise ValueError("min_pts must be at least 2")
    knees: list[float] = []
    for pts in point_sets:
        if len(pts) < min_pts + 1:
            continue
        curve = k_distances(pts, min_pts)
        index, _ = chord_knee_index(np.arange(len(curve)), curve)
        knees.append(float(curve[index]))
    if not knees:
        raise ValueError(
            f"no point set has the {min_pts + 1}+ points needed to calibrate eps"
        )
    return float(np.mean(knees))


# --------------------------------------------------------------------------
# Calibration pair manifests and result persistence

SCHEMA_VERSION = 1


def load_calibration_pairs(path: Path | str) -> list[ImagePair]:
    """Read a calibration directory: ``pairs.jsonl`` plus the images it names.

    Each line is ``{"pair_id": str, "ref": str, "query": str}`` with paths
    relative to the directory. Calibration shots carry no pose, so records
    get placeholder poses at the origin with the line number as timestamp.
    """
    root = Path(path)
    manifest = root / "pairs.jsonl"
    if not manifest.is_file():
        raise DatasetError(f"no pair manifest at {manifest}")
    pairs: list[ImagePair] = []
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
            for key in ("ref", "query"):
                if key not in row:
                    raise DatasetError(f"{where}: missing field '{key}'")
            records = []
            for key in ("ref", "query"):
                rel = str(row[key])
                image_path = root / rel
                if not image_path.is_file():
                    raise DatasetError(f"{where}: image '{rel}' not found at {image_path}")
                try:
                    with Image.open(image_path) as img:
                        width, height = img.size
                except OSError as exc:
                    raise DatasetError(f"{where}: image '{rel}' does not decode: {exc}") from exc
                records.append(
                    ImageRecord(
                        image_id=image_path.stem,
                        image_path=image_path,
                        pose=Pose(x=0.0, y=0.0, z=0.0, yaw=0.0, timestamp=float(lineno)),
                        width=width,
                        height=height,
                    )
                )
            pairs.append(
                ImagePair(reference=records[0], query=records[1], position_gap=0.0, yaw_gap=0.0)
            )
    if not pairs:
        raise DatasetError(f"{manifest}: no pairs listed")
    return pairs


def calibration_to_json(result: CalibrationResult) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "delta": result.delta,
        "eps": result.eps,
        "min_pts": result.min_pts,
        "curve": {
            "thresholds": list(result.curve.thresholds),
            "cv": list(result.curve.cv_values),
            "excluded": [[delta, n] for delta, n in result.curve.excluded],
        },
    }


def save_calibration(result: CalibrationResult, path: Path | str) -> None:
    atomic_write_text(path, json.dumps(calibration_to_json(result), indent=2) + "\n")


def load_calibration(path: Path | str) -> CalibrationResult:
    """Restore a calibration file; the curve keeps the summary only."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise DatasetError(f"calibration file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise DatasetError(f"{path}: calibration document must be an object")
    try:
        version = doc["schema_version"]
        if version != SCHEMA_VERSION:
            raise DatasetError(f"{path}: unsupported schema_version {version!r}")
        raw_curve = doc["curve"]
        curve = CalibrationCurve(
            thresholds=tuple(float(t) for t in raw_curve["thresholds"]),
            cv_values=tuple(
                None if v is None else float(v) for v in raw_curve["cv"]
            ),
            excluded=tuple(
                (float(delta), int(n)) for delta, n in raw_curve.get("excluded", [])
            ),
        )
        return CalibrationResult(
            delta=float(doc["delta"]),
            curve=curve,
            eps=float(doc["eps"]),
            min_pts=int(doc["min_pts"]),
        )
    except DatasetError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetError(f"{path}: malformed calibration file: {exc}") from exc


def calibrate(
    pairs: Sequence[ImagePair],
    backend: FeatureBackend,
    thresholds: Sequence[float] | None = None,
    min_pts: int = MIN_PTS_DEFAULT,
) -> tuple[CalibrationResult, KneeResult]:
    """Full calibration: sweep, knee selection, and eps from query keypoints."""
    grid = tuple(thresholds) if thresholds is not None else default_thresholds()
    curve = sweep(pairs, grid, backend)
    selected = knee(curve)

    point_sets = []
    for pair in pairs:
        record = pair.query
        pixels = load_grayscale(record.image_path) if backend.needs_pixels else None
        kpts, _ = backend.extract(pixels, image_id=record.image_id)
        point_sets.append([(kp.x, kp.y) for kp in kpts])
    eps = calibrate_eps(point_sets, min_pts)
    result = CalibrationResult(delta=selected.delta, curve=curve, eps=eps, min_pts=min_pts)
    return result, selected
