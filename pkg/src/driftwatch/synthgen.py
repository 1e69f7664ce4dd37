"""Deterministic synthetic scenes with exact change ground truth.

Scenes are grayscale and built for the built-in detector rather than for
the eye. Three layers matter:

* a low-amplitude relief of constant-intensity blocks (below the corner
  threshold, so it spawns no keypoints) gives descriptors structure to
  compare everywhere, the way real surfaces do;
* high-contrast speckle dots on a jittered grid supply a predictable
  density of corners, so any planted or removed object of reasonable size
  covers enough of them to cluster;
* a per-capture fixed-pattern noise field is added after any translation.
  The same field is reused for both frames of a pair, so a zero shift
  yields bit-identical frames, while a real shift samples the field at
  different scene alignments and spreads match confidences below 1.0 the
  way real sensor noise does.

Planted objects (rectangle, disc, cross) carry their own interior speckle
so every shape contributes well more than a cluster's worth of corners.
All randomness flows from explicit integer seeds through named substreams;
identical specs produce identical bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

from .dataset import Pose, atomic_write_text
from .overlap import RectMask

BACKGROUND = 128

# rng substream tags, so every layer draws from its own independent stream
_S_RELIEF = 1
_S_DOTS = 2
_S_OBJECT = 3
_S_NOISE = 4
_S_JITTER = 5
_S_PAIR = 6


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(list(key))


@dataclass(frozen=True)
class ObjectSpec:
    """A planted object: shape, placement, and base intensity."""

    shape: str  # rectangle | disc | cross
    bbox: tuple[int, int, int, int]  # x0, y0, x1, y1 inclusive
    intensity: int

    def __post_init__(self) -> None:
        if self.shape not in ("rectangle", "disc", "cross"):
            raise ValueError(f"unknown shape '{self.shape}'")
        x0, y0, x1, y1 = self.bbox
        if x1 <= x0 or y1 <= y0:
            raise ValueError(f"degenerate object bbox {self.bbox}")
        if not 0 <= self.intensity <= 255:
            raise ValueError("intensity must be a grey level")


@dataclass(frozen=True)
class EditSpec:
    """One planted change: insert a new object, or remove/move an existing one."""

    kind: str  # insert | remove | move
    object_index: int | None = None
    obj: ObjectSpec | None = None
    offset: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        if self.kind not in ("insert", "remove", "move"):
            raise ValueError(f"unknown edit kind '{self.kind}'")
        if self.kind == "insert" and self.obj is None:
            raise ValueError("insert edit needs an object")
        if self.kind in ("remove", "move") and self.object_index is None:
            raise ValueError(f"{self.kind} edit needs an object_index")


@dataclass(frozen=True)
class SceneSpec:
    """Full description of a rendered scene and its planted changes."""

    seed: int
    width: int = 640
    height: int = 480
    texture_spacing: int = 24  # grid pitch of speckle dots; density = spacing^-2
    relief_pitch: int = 12  # lattice pitch of the smooth relief field
    relief_amp: int = 9  # below the corner threshold: relief adds no keypoints
    noise_sigma: float = 2.0  # fixed-pattern capture noise, grey levels
    jitter_px: int = 2  # viewpoint jitter bound for query frames
    dot_border: int = 0  # corner-free band at the frame edge, px
    objects: tuple[ObjectSpec, ...] = ()
    anomaly_edits: tuple[EditSpec, ...] = ()

    def __post_init__(self) -> None:
        if self.width < 64 or self.height < 64:
            raise ValueError("frame must be at least 64x64")
        if self.texture_spacing < 6:
            raise ValueError("texture_spacing below 6 px floods the detector")
        if self.jitter_px < 0:
            raise ValueError("jitter_px cannot be negative")
        if self.dot_border < 0:
            raise ValueError("dot_border cannot be negative")
        for obj in self.objects:
            self._check_bbox(obj.bbox, "object")
        for i, edit in enumerate(self.anomaly_edits):
            if edit.kind == "insert":
                self._check_bbox(edit.obj.bbox, f"edit {i} insert")
            else:
                if edit.object_index >= len(self.objects) or edit.object_index < 0:
                    raise ValueError(
                        f"edit {i} references object {edit.object_index}, "
                        f"scene has {len(self.objects)}"
                    )
                if edit.kind == "move":
                    moved = _shift_bbox(self.objects[edit.object_index].bbox, edit.offset)
                    self._check_bbox(moved, f"edit {i} move target")

    def _check_bbox(self, bbox: tuple[int, int, int, int], what: str) -> None:
        x0, y0, x1, y1 = bbox
        if x0 < 0 or y0 < 0 or x1 >= self.width or y1 >= self.height:
            raise ValueError(f"{what} bbox {bbox} leaves the {self.width}x{self.height} frame")


@dataclass(frozen=True)
class Scenario:
    """A rendered change-detection case with query-frame truth boxes."""

    reference: np.ndarray
    query: np.ndarray
    truth: tuple[RectMask, ...]
    jitter: tuple[float, float]


def _shift_bbox(bbox: tuple[int, int, int, int], offset: tuple[int, int]) -> tuple[int, int, int, int]:
    x0, y0, x1, y1 = bbox
    dx, dy = offset
    return (x0 + dx, y0 + dy, x1 + dx, y1 + dy)


def translate(image: np.ndarray, dx: int, dy: int, fill: int = BACKGROUND) -> np.ndarray:
    """Integer-pixel translation with constant border fill."""
    h, w = image.shape
    out = np.full_like(image, fill)
    src_x0, src_x1 = max(0, -dx), min(w, w - dx)
    src_y0, src_y1 = max(0, -dy), min(h, h - dy)
    if src_x1 > src_x0 and src_y1 > src_y0:
        out[src_y0 + dy : src_y1 + dy, src_x0 + dx : src_x1 + dx] = image[
            src_y0:src_y1, src_x0:src_x1
        ]
    return out


def shift_image(image: np.ndarray, dx: float, dy: float, fill: int = BACKGROUND) -> np.ndarray:
    """Translation by a possibly fractional offset (bilinear resampling).

    A camera revisiting a pose never lands back on the exact pixel grid, so
    query frames carry a sub-pixel phase. An exactly integer offset takes the
    lossless path and reproduces ``translate`` bit for bit.
    """
    ix, iy = int(math.floor(dx)), int(math.floor(dy))
    fx, fy = dx - ix, dy - iy
    if fx == 0.0 and fy == 0.0:
        return translate(image, ix, iy, fill)
    w00 = (1 - fx) * (1 - fy)
    w10 = fx * (1 - fy)
    w01 = (1 - fx) * fy
    w11 = fx * fy
    # Blend the four integer-shift neighbors of the fractional offset.
    s00 = translate(image, ix, iy, fill).astype(np.float64)
    s10 = translate(image, ix + 1, iy, fill).astype(np.float64)
    s01 = translate(image, ix, iy + 1, fill).astype(np.float64)
    s11 = translate(image, ix + 1, iy + 1, fill).astype(np.float64)
    mixed = w00 * s00 + w10 * s10 + w01 * s01 + w11 * s11
    return np.rint(mixed).astype(image.dtype)


def _bilinear_field(
    rng: np.random.Generator, height: int, width: int, pitch: int, amp: int
) -> np.ndarray:
    """Smooth random intensity field: bilinear interpolation of a coarse lattice.

    The gradient is nonzero almost everywhere, so any two nearby pixels
    differ by a little. A blocky field would leave large equal-intensity
    patches where descriptor bit comparisons degenerate to noise coin flips.
    """
    gh = height // pitch + 2
    gw = width // pitch + 2
    lattice = rng.uniform(-amp, amp, size=(gh, gw))
    ys = np.arange(height) / pitch
    xs = np.arange(width) / pitch
    y0 = ys.astype(int)
    x0 = xs.astype(int)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    tl = lattice[y0][:, x0]
    tr = lattice[y0][:, x0 + 1]
    bl = lattice[y0 + 1][:, x0]
    br = lattice[y0 + 1][:, x0 + 1]
    field = (1 - fy) * ((1 - fx) * tl + fx * tr) + fy * ((1 - fx) * bl + fx * br)
    return np.rint(field).astype(np.int16)


def _render_relief(spec: SceneSpec) -> np.ndarray:
    rng = _rng(spec.seed, _S_RELIEF)
    return _bilinear_field(
        rng, spec.height, spec.width, spec.relief_pitch, spec.relief_amp
    )


def _dot_positions(spec: SceneSpec) -> list[tuple[int, int]]:
    """Jittered-grid speckle centers: near-uniform density, aperiodic layout."""
    rng = _rng(spec.seed, _S_DOTS)
    s = spec.texture_spacing
    wobble = max(1, s // 4)
    lo = max(2, spec.dot_border)
    positions = []
    for gy in range(s // 2, spec.height - s // 2, s):
        for gx in range(s // 2, spec.width - s // 2, s):
            x = gx + int(rng.integers(-wobble, wobble + 1))
            y = gy + int(rng.integers(-wobble, wobble + 1))
            if lo <= x < spec.width - lo and lo <= y < spec.height - lo:
                positions.append((x, y))
    return positions


DOT_CONTRAST = (70, 120)  # grey levels; floor keeps dots above the corner test
DOT_SIDE = (4, 5)  # px; smaller dots blur below the corner test


def _stamp_square(
    canvas: np.ndarray, x: float, y: float, side: int, value: int
) -> None:
    """Paint a square centered at a sub-pixel position, coverage-weighted.

    Sub-pixel placement matters: when a frame is later resampled at a
    fractional offset, each dot's rounding phase is independent, so the
    detector's snap-to-grid error is independent scatter rather than a
    shared bias.
    """
    h, w = canvas.shape
    half = side / 2.0
    x0f, x1f = x - half, x + half
    y0f, y1f = y - half, y + half
    px0, px1 = int(math.floor(x0f)), int(math.ceil(x1f))
    py0, py1 = int(math.floor(y0f)), int(math.ceil(y1f))
    for py in range(max(0, py0), min(h, py1)):
        cy = min(y1f, py + 1) - max(y0f, py)
        if cy <= 0:
            continue
        for px in range(max(0, px0), min(w, px1)):
            cx = min(x1f, px + 1) - max(x0f, px)
            if cx <= 0:
                continue
            cov = cx * cy
            canvas[py, px] = int(round((1 - cov) * canvas[py, px] + cov * value))


def _stamp_dots(
    canvas: np.ndarray,
    positions: Iterable[tuple[int, int]],
    rng: np.random.Generator,
    base: np.ndarray | int,
) -> None:
    """Draw small square dots; each one is a stable, high-contrast corner."""
    for x, y in positions:
        side = int(rng.integers(DOT_SIDE[0], DOT_SIDE[1] + 1))
        contrast = int(rng.integers(DOT_CONTRAST[0], DOT_CONTRAST[1] + 1))
        sign = 1 if rng.integers(0, 2) else -1
        ux = float(rng.uniform(0.0, 1.0))
        uy = float(rng.uniform(0.0, 1.0))
        local = int(base[y, x]) if isinstance(base, np.ndarray) else base
        # Flip toward the wider head-room so clipping cannot eat the contrast.
        if local + sign * contrast > 255 or local + sign * contrast < 0:
            sign = -sign
        value = int(np.clip(local + sign * contrast, 0, 255))
        _stamp_square(canvas, x + ux, y + uy, side, value)


def _shape_mask(obj: ObjectSpec) -> np.ndarray:
    x0, y0, x1, y1 = obj.bbox
    h, w = y1 - y0 + 1, x1 - x0 + 1
    if obj.shape == "rectangle":
        return np.ones((h, w), dtype=bool)
    yy, xx = np.mgrid[0:h, 0:w]
    if obj.shape == "disc":
        cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
        return ((xx - cx) / (w / 2.0)) ** 2 + ((yy - cy) / (h / 2.0)) ** 2 <= 1.0
    # cross: centered horizontal and vertical bars, each a third of the span
    bar_h = max(3, h // 3)
    bar_w = max(3, w // 3)
    horiz = (yy >= (h - bar_h) // 2) & (yy < (h - bar_h) // 2 + bar_h)
    vert = (xx >= (w - bar_w) // 2) & (xx < (w - bar_w) // 2 + bar_w)
    return horiz | vert


def _draw_object(canvas: np.ndarray, obj: ObjectSpec, spec: SceneSpec, tag: int) -> None:
    """Fill the shape, then speckle its interior so it carries many corners.

    The fill is modulated by a low-amplitude block relief of its own (seeded
    by the object's tag, in object-local coordinates, so it travels with the
    object). Without it the patches between speckle dots would be flat and
    their descriptor bits would be decided by capture noise alone, which
    reads as change where there is none.
    """
    x0, y0, x1, y1 = obj.bbox
    mask = _shape_mask(obj)
    region = canvas[y0 : y1 + 1, x0 : x1 + 1]
    rng = _rng(spec.seed, _S_OBJECT, tag)
    h, w = mask.shape

    relief = _bilinear_field(rng, h, w, spec.relief_pitch, spec.relief_amp)
    filled = (obj.intensity + relief).astype(np.int16)
    region[mask] = filled[mask]
    # Interior dot density mirrors the background grid: denser speckle would
    # give interior patches extra low-margin dot-to-dot comparisons and a
    # visibly weaker confidence tail than the rest of the frame.
    pitch = 20
    for gy in range(pitch // 2, h - pitch // 2 + 1, pitch):
        for gx in range(pitch // 2, w - pitch // 2 + 1, pitch):
            x = gx + int(rng.integers(-2, 3))
            y = gy + int(rng.integers(-2, 3))
            side = int(rng.integers(DOT_SIDE[0], DOT_SIDE[1] + 1))
            contrast = int(rng.integers(DOT_CONTRAST[0], DOT_CONTRAST[1] + 1))
            sign = 1 if rng.integers(0, 2) else -1
            if not (0 <= y < h and 0 <= x < w and mask[y, x]):
                continue
            if obj.intensity + sign * contrast > 255 or obj.intensity + sign * contrast < 0:
                sign = -sign
            value = np.clip(obj.intensity + sign * contrast, 0, 255)
            yy0, yy1 = max(0, y - side // 2), min(h, y - side // 2 + side)
            xx0, xx1 = max(0, x - side // 2), min(w, x - side // 2 + side)
            patch = region[yy0:yy1, xx0:xx1]
            patch[mask[yy0:yy1, xx0:xx1]] = value


def render_scene(
    spec: SceneSpec,
    tagged_objects: Sequence[tuple[int, ObjectSpec]] | None = None,
) -> np.ndarray:
    """Render background plus objects (defaults to spec.objects, tagged by index).

    Returns int16 grey levels before capture noise; callers add their noise
    field and quantize. The tag seeds each object's interior texture, so an
    object keeps its exact appearance across frames regardless of how many
    other objects were edited around it.
    """
    canvas = np.full((spec.height, spec.width), BACKGROUND, dtype=np.int16)
    canvas += _render_relief(spec)
    dot_rng = _rng(spec.seed, _S_DOTS, 1)
    _stamp_dots(canvas, _dot_positions(spec), dot_rng, canvas.copy())
    chosen = (
        list(enumerate(spec.objects)) if tagged_objects is None else list(tagged_objects)
    )
    for tag, obj in chosen:
        _draw_object(canvas, obj, spec, tag)
    return canvas


def _noise_field(spec: SceneSpec, tag: int) -> np.ndarray:
    if spec.noise_sigma <= 0:
        return np.zeros((spec.height, spec.width), dtype=np.int16)
    rng = _rng(spec.seed, _S_NOISE, tag)
    field = rng.normal(0.0, spec.noise_sigma, size=(spec.height, spec.width))
    return np.rint(field).astype(np.int16)


def _quantize(canvas: np.ndarray) -> np.ndarray:
    return np.clip(canvas, 0, 255).astype(np.uint8)


def generate_calibration_pairs(
    seed: int,
    shift_px: int,
    n: int,
    spec: SceneSpec | None = None,
) -> list[tuple[np.ndarray, np.ndarray, float]]:
    """Horizontally shifted scene pairs for threshold calibration.

    Each pair renders a fresh scene, translates it by ``shift_px``, and adds
    the pair's fixed-pattern noise field to both frames. With a zero shift
    the frames are bit-identical; with a real shift every true match is
    displaced by exactly the shift while descriptor confidences spread.
    """
    template = spec if spec is not None else SceneSpec(seed=seed)
    if n < 1:
        raise ValueError("need at least one calibration pair")
    if not 0 <= shift_px < template.width:
        raise ValueError(f"shift {shift_px} outside [0, frame width)")
    # Keep a corner-free band wider than shift + patch margin at the frame
    # edge: every corner then has a counterpart in the other frame, so the
    # displacement statistics measure matching quality, not border cropping.
    border = max(template.dot_border, 24 + int(math.ceil(shift_px)))
    pairs = []
    for i in range(n):
        scene_spec = replace(
            template,
            seed=seed * 100003 + i,
            dot_border=border,
            objects=(),
            anomaly_edits=(),
        )
        scene = render_scene(scene_spec)
        if shift_px > 0:
            # Sub-pixel phase: the revisit never lands back on the pixel
            # grid, and the snap-to-grid scatter it adds to matched-point
            # positions is independent of the capture noise.
            phase = _rng(scene_spec.seed, _S_PAIR, 1).uniform(-0.4, 0.4, size=2)
            shifted = shift_image(scene, shift_px + phase[0], phase[1])
        else:
            shifted = translate(scene, shift_px, 0)
        noise = _noise_field(scene_spec, _S_PAIR)
        frame_a = _quantize(scene + noise)
        frame_b = _quantize(shifted + noise)
        pairs.append((frame_a, frame_b, float(shift_px)))
    return pairs


def generate_scenario(spec: SceneSpec) -> Scenario:
    """Reference frame, edited-and-jittered query frame, and truth boxes.

    Truth boxes live in query-frame coordinates: each edit contributes the
    changed region (for a move, the union of the old and new footprints)
    shifted by the viewpoint jitter and clipped to the frame.
    """
    reference_objects = list(enumerate(spec.objects))
    query_objects: dict[int, ObjectSpec] = dict(enumerate(spec.objects))
    truth_boxes: list[tuple[int, int, int, int]] = []

    edited: set[int] = set()
    next_tag = len(spec.objects)
    for edit in spec.anomaly_edits:
        if edit.kind == "insert":
            query_objects[next_tag] = edit.obj
            next_tag += 1
            truth_boxes.append(edit.obj.bbox)
            continue
        if edit.object_index in edited:
            raise ValueError(f"object {edit.object_index} edited twice")
        edited.add(edit.object_index)
        old = spec.objects[edit.object_index].bbox
        if edit.kind == "remove":
            del query_objects[edit.object_index]
            truth_boxes.append(old)
        else:  # move: same object, same texture tag, new footprint
            new = _shift_bbox(old, edit.offset)
            query_objects[edit.object_index] = replace(
                spec.objects[edit.object_index], bbox=new
            )
            truth_boxes.append(
                (
                    min(old[0], new[0]),
                    min(old[1], new[1]),
                    max(old[2], new[2]),
                    max(old[3], new[3]),
                )
            )

    if spec.jitter_px > 0:
        jrng = _rng(spec.seed, _S_JITTER)
        jx = float(jrng.uniform(-spec.jitter_px, spec.jitter_px))
        jy = float(jrng.uniform(-spec.jitter_px, spec.jitter_px))
    else:
        jx, jy = 0.0, 0.0

    reference_scene = render_scene(spec, reference_objects)
    query_scene = shift_image(render_scene(spec, sorted(query_objects.items())), jx, jy)
    noise = _noise_field(spec, _S_PAIR)
    reference = _quantize(reference_scene + noise)
    query = _quantize(query_scene + noise)

    truth = []
    rx, ry = round(jx), round(jy)
    for x0, y0, x1, y1 in truth_boxes:
        cx0 = min(max(x0 + rx, 0), spec.width - 1)
        cy0 = min(max(y0 + ry, 0), spec.height - 1)
        cx1 = min(max(x1 + rx, 0), spec.width - 1)
        cy1 = min(max(y1 + ry, 0), spec.height - 1)
        truth.append(RectMask(float(cx0), float(cy0), float(cx1), float(cy1)))
    return Scenario(reference=reference, query=query, truth=tuple(truth), jitter=(jx, jy))


# --------------------------------------------------------------------------
# On-disk emission: standard run directories the CLI consumes


def save_png(image: np.ndarray, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(image, mode="L").save(path, format="PNG")


def write_calibration_dir(
    out_dir: Path | str, pairs: Sequence[tuple[np.ndarray, np.ndarray, float]]
) -> Path:
    """Lay out pairs.jsonl plus the paired images."""
    root = Path(out_dir)
    (root / "images").mkdir(parents=True, exist_ok=True)
    lines = []
    for i, (frame_a, frame_b, _) in enumerate(pairs):
        ref_rel = f"images/pair{i:03d}_ref.png"
        query_rel = f"images/pair{i:03d}_query.png"
        save_png(frame_a, root / ref_rel)
        save_png(frame_b, root / query_rel)
        lines.append(json.dumps({"pair_id": f"pair{i:03d}", "ref": ref_rel, "query": query_rel}))
    atomic_write_text(root / "pairs.jsonl", "\n".join(lines) + "\n")
    return root


def write_run_dir(
    out_dir: Path | str,
    frames: Sequence[tuple[str, np.ndarray, Pose]],
) -> Path:
    """Lay out poses.jsonl plus images/ for one recorded run."""
    root = Path(out_dir)
    (root / "images").mkdir(parents=True, exist_ok=True)
    lines = []
    for image_id, image, pose in frames:
        rel = f"images/{image_id}.png"
        save_png(image, root / rel)
        lines.append(
            json.dumps(
                {
                    "image_id": image_id,
                    "file": rel,
                    "t": pose.timestamp,
                    "x": pose.x,
                    "y": pose.y,
                    "z": pose.z,
                    "yaw": pose.yaw,
                }
            )
        )
    atomic_write_text(root / "poses.jsonl", "\n".join(lines) + "\n")
    return root


@dataclass(frozen=True)
class MissionLayout:
    reference_dir: Path
    query_dir: Path
    truth_path: Path
    calibration_dir: Path


def _random_object(rng: np.random.Generator, spec: SceneSpec, margin: int = 60) -> ObjectSpec:
    shape = ("rectangle", "disc", "cross")[int(rng.integers(0, 3))]
    side_w = int(rng.integers(72, 110))
    side_h = int(rng.integers(72, 110))
    x0 = int(rng.integers(margin, spec.width - margin - side_w))
    y0 = int(rng.integers(margin, spec.height - margin - side_h))
    intensity = int(rng.choice([70, 80, 186, 196]))
    return ObjectSpec(shape=shape, bbox=(x0, y0, x0 + side_w, y0 + side_h), intensity=intensity)


def _random_edit(rng: np.random.Generator, spec: SceneSpec) -> EditSpec:
    kinds = ["insert"]
    if spec.objects:
        kinds += ["remove", "move"]
    kind = kinds[int(rng.integers(0, len(kinds)))]
    if kind == "insert":
        return EditSpec(kind="insert", obj=_random_object(rng, spec))
    index = int(rng.integers(0, len(spec.objects)))
    if kind == "remove":
        return EditSpec(kind="remove", object_index=index)
    x0, y0, x1, y1 = spec.objects[index].bbox
    w, h = spec.width, spec.height
    for _ in range(50):
        dx = int(rng.integers(-120, 121))
        dy = int(rng.integers(-90, 91))
        if max(abs(dx), abs(dy)) < 40:
            continue  # a tiny move would overlap itself and blur the truth
        if 0 <= x0 + dx and x1 + dx < w and 0 <= y0 + dy and y1 + dy < h:
            return EditSpec(kind="move", object_index=index, offset=(dx, dy))
    return EditSpec(kind="remove", object_index=index)


def random_scenario_spec(seed: int, anomalous: bool, **overrides) -> SceneSpec:
    """One reproducible scenario: a furnished scene, optionally with one edit."""
    base = SceneSpec(seed=seed, **overrides)
    rng = _rng(seed, _S_PAIR, 99)
    objects = tuple(_random_object(rng, base) for _ in range(int(rng.integers(1, 3))))
    furnished = replace(base, objects=objects)
    if not anomalous:
        return furnished
    edit = _random_edit(rng, furnished)
    return replace(furnished, anomaly_edits=(edit,))


def generate_mission(
    out_dir: Path | str,
    seed: int,
    n_frames: int = 6,
    anomalous_frames: Sequence[int] = (1, 3),
    calibration_pairs: int = 3,
    calibration_shift: int = 12,
    **scene_overrides,
) -> MissionLayout:
    """Emit a full mission: reference run, query run, truth file, calibration dir."""
    root = Path(out_dir)
    anomalous = set(anomalous_frames)
    if any(f < 0 or f >= n_frames for f in anomalous):
        raise ValueError("anomalous frame index outside the mission")

    ref_frames = []
    query_frames = []
    truth_frames: dict[str, list[list[float]]] = {}
    for f in range(n_frames):
        spec = random_scenario_spec(seed * 7919 + f, anomalous=f in anomalous, **scene_overrides)
        scenario = generate_scenario(spec)
        ref_id = f"ref{f:03d}"
        query_id = f"qry{f:03d}"
        pose_ref = Pose(x=0.5 * f, y=0.0, z=0.4, yaw=0.0, timestamp=10.0 + 2.0 * f)
        pose_qry = Pose(x=0.5 * f + 0.03, y=0.02, z=0.4, yaw=0.01, timestamp=500.0 + 2.0 * f)
        ref_frames.append((ref_id, scenario.reference, pose_ref))
        query_frames.append((query_id, scenario.query, pose_qry))
        truth_frames[query_id] = [m.to_list() for m in scenario.truth]

    reference_dir = write_run_dir(root / "reference", ref_frames)
    query_dir = write_run_dir(root / "query", query_frames)

    truth_path = root / "truth.json"
    atomic_write_text(truth_path, json.dumps({"frames": truth_frames}, indent=2) + "\n")

    pairs = generate_calibration_pairs(seed, calibration_shift, calibration_pairs)
    calibration_dir = write_calibration_dir(root / "calibration", pairs)
    return MissionLayout(
        reference_dir=reference_dir,
        query_dir=query_dir,
        truth_path=truth_path,
        calibration_dir=calibration_dir,
    )
