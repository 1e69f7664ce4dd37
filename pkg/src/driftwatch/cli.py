"""Command-line front door: calibrate, scan, evaluate, gen, and plot.

Option values merge three layers with fixed precedence: config file (via
``--config``, JSON object keyed by option name) below environment variables
(``DRIFTWATCH_<OPTION>``) below explicit flags. Unknown config-file keys are
rejected rather than ignored, so a typo cannot silently fall back to a
default. ``--verbose`` echoes the effective configuration to stderr.

Exit codes are a stable contract: 0 success, 2 usage or input error,
3 backend or transport error. Scan exits 0 even when anomalies are found;
detection is the product, not a failure. All output files are written
atomically, so a failed command leaves no partial file behind.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path
from typing import Any, Callable, Sequence

from .backend import BackendConfig, BackendKind, create_backend
from .calibration import (
    calibrate,
    default_thresholds,
    load_calibration,
    load_calibration_pairs,
    save_calibration,
)
from .dataset import (
    RunRole,
    atomic_write_text,
    load_ground_truth,
    load_report,
    load_run,
    save_report,
)
from .errors import BackendError, DatasetError, DriftwatchError, FixtureError, InputError
from .pairing import PairingConfig
from .pipeline import PipelineConfig, evaluate, make_backends, run_mission
from .report import PairStatus
from .synthgen import generate_mission

ENV_PREFIX = "DRIFTWATCH_"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_BACKEND = 3


def _as_int(value: Any) -> int:
    return int(value)


def _as_float(value: Any) -> float:
    return float(value)


def _as_str(value: Any) -> str:
    return str(value)


def parse_thresholds(value: Any) -> tuple[float, ...]:
    """Accept ``start:stop:step``, a comma list, or a JSON array."""
    if isinstance(value, (list, tuple)):
        out = tuple(float(v) for v in value)
    else:
        text = str(value).strip()
        if not text:
            raise ValueError("thresholds value is empty")
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ValueError(f"range form needs start:stop:step, got '{text}'")
            start, stop, step = (float(p) for p in parts)
            if step <= 0:
                raise ValueError("threshold step must be positive")
            out_list = []
            v = start
            while v <= stop + step * 1e-9:
                out_list.append(round(v, 10))
                v += step
            out = tuple(out_list)
        else:
            out = tuple(float(p) for p in text.split(","))
    if not out:
        raise ValueError("no thresholds given")
    return out


def _as_frame_list(value: Any) -> tuple[int, ...]:
    if isinstance(value, (list, tuple)):
        return tuple(int(v) for v in value)
    text = str(value).strip()
    if not text:
        return ()
    return tuple(int(p) for p in text.split(","))


class OptionSet:
    """Layered option resolution: file < environment < flags."""

    def __init__(self, args: argparse.Namespace, env: dict[str, str] | None = None):
        self._flags = vars(args)
        self._env = os.environ if env is None else env
        self._file: dict[str, Any] = {}
        self._known: set[str] = set()
        config_path = self._flags.get("config")
        if config_path:
            try:
                doc = json.loads(Path(config_path).read_text())
            except FileNotFoundError as exc:
                raise InputError(f"config file not found: {config_path}") from exc
            except json.JSONDecodeError as exc:
                raise InputError(f"{config_path}: invalid JSON: {exc}") from exc
            if not isinstance(doc, dict):
                raise InputError(f"{config_path}: config must be a JSON object")
            self._file = doc
        self._config_path = config_path

    def get(self, name: str, default: Any = None, cast: Callable[[Any], Any] = _as_str) -> Any:
        self._known.add(name)
        flag = self._flags.get(name)
        if flag is not None:
            return flag
        env_key = ENV_PREFIX + name.upper()
        if env_key in self._env:
            raw: Any = self._env[env_key]
        elif name in self._file:
            raw = self._file[name]
        else:
            return default
        try:
            return cast(raw)
        except (TypeError, ValueError) as exc:
            raise InputError(f"bad value for option '{name}': {exc}") from exc

    def finish(self) -> dict[str, Any]:
        """Reject config-file keys nothing asked for; return the known view."""
        unknown = set(self._file) - self._known
        if unknown:
            raise InputError(
                f"{self._config_path}: unknown config keys: {', '.join(sorted(unknown))}"
            )
        return {k: self._flags.get(k) for k in sorted(self._known)}


def _backend_config(opts: OptionSet) -> BackendConfig:
    kind_name = opts.get("backend", "native")
    try:
        kind = BackendKind(kind_name)
    except ValueError as exc:
        raise InputError(f"unknown backend '{kind_name}'") from exc
    fixture = opts.get("fixture")
    base_url = opts.get("base_url")
    if kind is BackendKind.SCRIPTED and not fixture:
        raise InputError("scripted backend needs --fixture")
    if kind is BackendKind.REMOTE and not base_url:
        raise InputError("remote backend needs --base-url")
    return BackendConfig(
        kind=kind,
        max_keypoints=opts.get("max_keypoints", 800, _as_int),
        corner_threshold=opts.get("corner_threshold", 20, _as_int),
        fixture_path=Path(fixture) if fixture else None,
        base_url=base_url,
        timeout=opts.get("timeout", 10.0, _as_float),
    )


def _echo_verbose(opts: OptionSet, effective: dict[str, Any]) -> None:
    print(
        "effective config: " + json.dumps(effective, sort_keys=True, default=str),
        file=sys.stderr,
    )


# --------------------------------------------------------------------------
# calibrate


def cmd_calibrate(args: argparse.Namespace) -> int:
    opts = OptionSet(args)
    backend_cfg = _backend_config(opts)
    thresholds = opts.get("thresholds", default_thresholds(), parse_thresholds)
    min_pts = opts.get("min_pts", 5, _as_int)
    pairs_dir = args.pairs
    out_path = args.out
    effective = opts.finish()
    if args.verbose:
        _echo_verbose(opts, effective)

    pairs = load_calibration_pairs(pairs_dir)
    if len(pairs) < 3:
        print(
            f"warning: only {len(pairs)} calibration pair(s); "
            "3 or more give a steadier curve",
            file=sys.stderr,
        )
    backend = create_backend(backend_cfg)
    result, selected = calibrate(pairs, backend, thresholds, min_pts=min_pts)
    save_calibration(result, out_path)

    excluded_by_t = {t: 0 for t in result.curve.thresholds}
    for t, _ in result.curve.excluded:
        excluded_by_t[t] += 1
    print(f"{'threshold':>9}  {'cv':>12}  {'excluded':>8}")
    for t, v in zip(result.curve.thresholds, result.curve.cv_values):
        cv_text = "undefined" if v is None else f"{v:.6f}"
        print(f"{t:>9g}  {cv_text:>12}  {excluded_by_t[t]:>8d}")
    if selected.degenerate:
        print(
            "warning: cv curve has no knee (flat or linear); "
            "falling back to the smallest threshold",
            file=sys.stderr,
        )
    print(f"selected delta: {result.delta:g}")
    print(f"eps: {result.eps:.3f} px (min_pts {result.min_pts})")
    print(f"calibration written to {out_path}")
    return EXIT_OK


# --------------------------------------------------------------------------
# scan


def cmd_scan(args: argparse.Namespace) -> int:
    opts = OptionSet(args)
    backend_cfg = _backend_config(opts)
    pairing = PairingConfig(
        max_distance=opts.get("max_distance", 0.5, _as_float),
        max_yaw_diff=opts.get("max_yaw", 0.35, _as_float),
    )
    try:
        cfg = PipelineConfig(
            pairing=pairing,
            backend=backend_cfg,
            removal_scope=opts.get("removal_scope", "all_instances"),
            min_matches=opts.get("min_matches", 4, _as_int),
            min_instance_score=opts.get("min_instance_score", 0.0, _as_float),
            jobs=opts.get("jobs", 1, _as_int),
        )
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    effective = opts.finish()
    if args.verbose:
        _echo_verbose(opts, effective)

    calibration = load_calibration(args.calib)
    reference = load_run(args.reference, role=RunRole.REFERENCE)
    query = load_run(args.query, role=RunRole.QUERY)

    report = run_mission(reference, query, cfg, calibration)
    save_report(report, args.out)

    by_status = {status: 0 for status in PairStatus}
    frames_with_regions = 0
    total_regions = 0
    for pair in report.pairs:
        by_status[pair.status] += 1
        if pair.regions:
            frames_with_regions += 1
            total_regions += len(pair.regions)
    print(
        f"pairs: {len(report.pairs)} total | "
        + " | ".join(f"{status.value} {by_status[status]}" for status in PairStatus)
    )
    print(f"regions: {total_regions} across {frames_with_regions} frame(s)")
    print(f"report written to {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# evaluate


def cmd_evaluate(args: argparse.Namespace) -> int:
    opts = OptionSet(args)
    rule = opts.get("rule", "intersect")
    effective = opts.finish()
    if args.verbose:
        _echo_verbose(opts, effective)

    report = load_report(args.report)
    truth = load_ground_truth(args.truth)
    try:
        result = evaluate(report, truth, rule=rule)
    except ValueError as exc:
        raise InputError(str(exc)) from exc

    rows = io.StringIO()
    writer = csv.writer(rows)
    writer.writerow(["query_id", "timestamp", "correct", "regions", "truth_boxes"])
    for frame in result.frames:
        writer.writerow(
            [
                frame.query_id,
                repr(frame.timestamp),
                "true" if frame.correct else "false",
                frame.n_regions,
                frame.n_truth,
            ]
        )
    atomic_write_text(args.out, rows.getvalue())

    print(f"frames: {result.n_frames}")
    print(f"accuracy: {result.accuracy:.4f}")
    print(f"recall: {result.recall:.4f}")
    print(f"precision: {result.precision:.4f}")
    print(f"false positive rate: {result.fp_rate:.4f}")
    print(f"per-frame results written to {args.out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# gen


_GEN_SCENE_KEYS = ("width", "height", "texture_spacing", "noise_sigma", "jitter_px")


def cmd_gen(args: argparse.Namespace) -> int:
    opts = OptionSet(args)
    effective = opts.finish()
    if args.verbose:
        _echo_verbose(opts, effective)

    try:
        doc = json.loads(Path(args.spec).read_text())
    except FileNotFoundError as exc:
        raise InputError(f"spec file not found: {args.spec}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{args.spec}: invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InputError(f"{args.spec}: spec must be a JSON object")
    if "seed" not in doc:
        raise InputError(f"{args.spec}: spec needs an integer 'seed'")

    allowed = {"seed", "n_frames", "anomalous_frames", "calibration_pairs", "calibration_shift"}
    allowed.update(_GEN_SCENE_KEYS)
    unknown = set(doc) - allowed
    if unknown:
        raise InputError(f"{args.spec}: unknown spec keys: {', '.join(sorted(unknown))}")

    kwargs: dict[str, Any] = {"seed": int(doc["seed"])}
    if "n_frames" in doc:
        kwargs["n_frames"] = int(doc["n_frames"])
    if "anomalous_frames" in doc:
        kwargs["anomalous_frames"] = _as_frame_list(doc["anomalous_frames"])
    if "calibration_pairs" in doc:
        kwargs["calibration_pairs"] = int(doc["calibration_pairs"])
    if "calibration_shift" in doc:
        kwargs["calibration_shift"] = int(doc["calibration_shift"])
    for key in _GEN_SCENE_KEYS:
        if key in doc:
            kwargs[key] = doc[key]

    try:
        layout = generate_mission(args.out, **kwargs)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{args.spec}: {exc}") from exc
    print(f"reference run: {layout.reference_dir}")
    print(f"query run: {layout.query_dir}")
    print(f"ground truth: {layout.truth_path}")
    print(f"calibration pairs: {layout.calibration_dir}")
    return EXIT_OK


# --------------------------------------------------------------------------
# plot


def cmd_plot(args: argparse.Namespace) -> int:
    opts = OptionSet(args)
    effective = opts.finish()
    if args.verbose:
        _echo_verbose(opts, effective)

    from . import plots  # deferred: pulling in matplotlib is slow

    if args.curve:
        calibration = load_calibration(args.curve)
        twin = plots.plot_calibration_curve(calibration, args.out)
    else:
        series = _read_accuracy_csv(args.accuracy)
        try:
            twin = plots.plot_accuracy_series(series, args.out)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    print(f"plot written to {args.out} (data twin: {twin})")
    return EXIT_OK


def _read_accuracy_csv(path: str) -> list[tuple[float, float]]:
    """Rebuild the cumulative-accuracy series from a per-frame results CSV."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError as exc:
        raise InputError(f"accuracy CSV not found: {path}") from exc
    reader = csv.DictReader(io.StringIO(text))
    frames = []
    for lineno, row in enumerate(reader, start=2):
        try:
            frames.append((float(row["timestamp"]), row["correct"].strip() == "true"))
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise InputError(f"{path}:{lineno}: malformed row: {exc}") from exc
    if not frames:
        raise InputError(f"{path}: no frame rows to plot")
    frames.sort(key=lambda f: f[0])
    series = []
    correct = 0
    for i, (timestamp, ok) in enumerate(frames, start=1):
        correct += 1 if ok else 0
        series.append((timestamp, correct / i))
    return series


# --------------------------------------------------------------------------
# parser assembly


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file (lowest-precedence options)")
    parser.add_argument("--verbose", action="store_true", help="echo effective config")


def _add_backend_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--backend", choices=[k.value for k in BackendKind], help="feature provider"
    )
    parser.add_argument("--fixture", help="replay fixture (scripted backend)")
    parser.add_argument("--base-url", dest="base_url", help="inference service URL (remote)")
    parser.add_argument("--timeout", type=float, help="remote request timeout, seconds")
    parser.add_argument("--max-keypoints", dest="max_keypoints", type=int)
    parser.add_argument("--corner-threshold", dest="corner_threshold", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="driftwatch",
        description="Detect changes between a reference mission and a later query run.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="select the match threshold and cluster radius")
    p.add_argument("--pairs", required=True, help="calibration pair directory")
    p.add_argument("--out", required=True, help="calibration file to write")
    p.add_argument("--thresholds", help="sweep grid: 'start:stop:step' or comma list")
    p.add_argument("--min-pts", dest="min_pts", type=int, help="cluster vote size")
    _add_backend_options(p)
    _add_common(p)
    p.set_defaults(handler=cmd_calibrate)

    p = sub.add_parser("scan", help="detect changes between two runs")
    p.add_argument("--reference", required=True, help="reference run directory")
    p.add_argument("--query", required=True, help="query run directory")
    p.add_argument("--calib", required=True, help="calibration file")
    p.add_argument("--out", required=True, help="report file to write")
    p.add_argument("--jobs", type=int, help="parallel pair detections")
    p.add_argument("--max-distance", dest="max_distance", type=float, help="pairing distance, m")
    p.add_argument("--max-yaw", dest="max_yaw", type=float, help="pairing yaw gap, rad")
    p.add_argument("--min-matches", dest="min_matches", type=int)
    p.add_argument("--min-instance-score", dest="min_instance_score", type=float)
    p.add_argument("--removal-scope", dest="removal_scope", choices=["all_instances", "anomalous_only"])
    _add_backend_options(p)
    _add_common(p)
    p.set_defaults(handler=cmd_scan)

    p = sub.add_parser("evaluate", help="score a report against ground truth")
    p.add_argument("--report", required=True, help="report file")
    p.add_argument("--truth", required=True, help="ground truth file")
    p.add_argument("--out", required=True, help="per-frame CSV to write")
    p.add_argument("--rule", choices=["intersect", "presence"], help="correctness rule")
    _add_common(p)
    p.set_defaults(handler=cmd_evaluate)

    p = sub.add_parser("gen", help="generate a synthetic mission")
    p.add_argument("--spec", required=True, help="JSON generation spec")
    p.add_argument("--out", required=True, help="output directory")
    _add_common(p)
    p.set_defaults(handler=cmd_gen)

    p = sub.add_parser("plot", help="render a calibration curve or accuracy series")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--curve", help="calibration file to plot")
    source.add_argument("--accuracy", help="per-frame results CSV to plot")
    p.add_argument("--out", required=True, help="SVG file to write")
    _add_common(p)
    p.set_defaults(handler=cmd_plot)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except (InputError, DatasetError, FixtureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DriftwatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
