"""Static plot artifacts: calibration curve and accuracy series.

Every plot is written as an SVG plus a CSV twin carrying the plotted
numbers, both atomically. SVG output is byte-stable across runs: text stays
text (no font paths), the hash salt is pinned, and no date metadata is
embedded, so repeated renders of the same data diff clean.
"""

from __future__ import annotations

import csv
import io
import os
import tempfile
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402  (backend must be pinned first)

from .calibration import CalibrationResult  # noqa: E402
from .dataset import atomic_write_text  # noqa: E402

matplotlib.rcParams["svg.fonttype"] = "none"
matplotlib.rcParams["svg.hashsalt"] = "driftwatch"


def _save_svg(fig, path: Path | str) -> None:
    """Render to SVG bytes and move into place atomically."""
    path = Path(path)
    buf = io.BytesIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."), suffix=".svg.tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_twin(path: Path | str) -> Path:
    return Path(path).with_suffix(".csv")


def plot_calibration_curve(result: CalibrationResult, out_svg: Path | str) -> Path:
    """Mean cv versus threshold with the selected knee marked."""
    thresholds = list(result.curve.thresholds)
    cv_values = list(result.curve.cv_values)

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(thresholds, cv_values, marker="o", color="#1f77b4", label="mean cv")
    knee_cv = cv_values[thresholds.index(result.delta)]
    marker = ax.plot(
        [result.delta], [knee_cv], marker="D", markersize=9, color="#d62728",
        linestyle="none", label=f"knee at {result.delta:g}",
    )[0]
    marker.set_gid("knee-marker")
    ax.set_xticks(thresholds)
    ax.set_xlabel("match threshold")
    ax.set_ylabel("mean normalized cv")
    ax.legend(loc="upper left")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save_svg(fig, out_svg)

    rows = io.StringIO()
    writer = csv.writer(rows)
    writer.writerow(["threshold", "cv"])
    for t, v in zip(thresholds, cv_values):
        writer.writerow([f"{t:g}", "" if v is None else repr(v)])
    twin = _csv_twin(out_svg)
    atomic_write_text(twin, rows.getvalue())
    return twin


def plot_accuracy_series(
    series: Sequence[tuple[float, float]], out_svg: Path | str
) -> Path:
    """Cumulative detection accuracy over mission time."""
    if not series:
        raise ValueError("accuracy series is empty, nothing to plot")
    times = [t for t, _ in series]
    values = [v for _, v in series]

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(times, values, marker="o", color="#2ca02c")
    ax.set_xlabel("query timestamp")
    ax.set_ylabel("cumulative accuracy")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    _save_svg(fig, out_svg)

    rows = io.StringIO()
    writer = csv.writer(rows)
    writer.writerow(["timestamp", "cumulative_accuracy"])
    for t, v in series:
        writer.writerow([repr(float(t)), repr(float(v))])
    twin = _csv_twin(out_svg)
    atomic_write_text(twin, rows.getvalue())
    return twin
