"""Command-line pipeline driver.

Subcommands cover the full flow: synthesize or validate a checkpoint
store, sketch it, build the dot-product matrix once, roll observable
series out of it, and couple them to a loss series (correlation ranking,
segmentation, Granger battery, shift detection). Every run is driven by
a JSON config (flags override config keys), outputs land under
``<out_dir>/<run_id>/``, and every report embeds the fully resolved
config so a run can be reproduced from its artifacts alone.

Exit codes: 0 success, 2 config error, 3 data error, 4 degenerate
statistics under ``--strict``.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import changepoint, gram, sketch, spectral, synth
from . import timeseries as ts
from .store import (StoreError, group_spans, read_manifest, verify_store)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DEGENERATE = 4

DEFAULT_CONFIG = {
    "store_dir": None,
    "out_dir": "trajspec_out",
    "run_id": None,
    "threads": None,
    "windows": [10],
    "sketch": {"enabled": False, "d": None, "seed": 0,
               "block_size": sketch.DEFAULT_BLOCK},
    "groups": [],
    "loss_csv": None,
    "stats": {
        "max_lag": None,
        "granger_lags": 1,
        "resid_lags": 1,
        "segment_params": {},
        "sliding_window": 7,
        "cusum_reference_n": 10,
        "cusum_allowance": 1.0,
        "cusum_threshold": 8.0,
        "ttest_margin": 5,
        "shift_track": "gap_ratio",
        "null_trials": 500,
        "null_p_eff": 10_000,
        "seed": 0,
    },
}

# joint Granger set; edge_strength is gap_ratio - 1 and would be exactly
# collinear with it after z-scoring
OBSERVABLE_SET = ["gap_ratio", "k_star", "k95", "drift_speed",
                  "total_variance"]


class ConfigError(ValueError):
    pass


class DataError(RuntimeError):
    pass


def _deep_update(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_update(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: str | None, overrides: dict) -> dict:
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file is not valid JSON: {e}")
        if not isinstance(doc, dict):
            raise ConfigError("config root must be a JSON object")
        config = _deep_update(config, doc)
    config = _deep_update(config, overrides)
    windows = config.get("windows")
    if not windows:
        raise ConfigError("config key 'windows' must be a non-empty list")
    if any(int(w) < 3 for w in windows):
        raise ConfigError("every window must be >= 3")
    config["windows"] = [int(w) for w in windows]
    return config


def resolve_run_id(config: dict) -> str:
    if config.get("run_id"):
        return str(config["run_id"])
    blob = json.dumps(config, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:12]


def run_dir(config: dict) -> Path:
    d = Path(config["out_dir"]) / resolve_run_id(config)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_report(path: Path, command: str, config: dict,
                  payload: dict) -> None:
    doc = {"command": command, "config": config, **payload}
    path.write_text(json.dumps(doc, indent=1, sort_keys=True,
                               allow_nan=True) + "\n")


def _json_safe(obj):
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [_json_safe(x) for x in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_json_safe(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    return obj


def _manifest(config: dict):
    store_dir = config.get("store_dir")
    if not store_dir:
        raise ConfigError("store_dir is required (flag --store or config)")
    try:
        return read_manifest(store_dir)
    except StoreError as e:
        raise DataError(str(e))


def _sketch_config(config: dict, width_hint: int) -> sketch.SketchConfig:
    sk = config["sketch"]
    d = sk.get("d") or sketch.default_d(width_hint)
    return sketch.SketchConfig(d=int(d), seed=int(sk.get("seed", 0)),
                               block_size=int(sk.get("block_size",
                                                     sketch.DEFAULT_BLOCK)))


def _load_dots(config: dict, out: Path) -> gram.DotMatrix:
    source = "full"
    if config["sketch"]["enabled"]:
        cfg = _sketch_config(config, max(config["windows"]))
        source = f"sketched:{cfg.fingerprint}"
    try:
        return gram.load_dot_matrix(out, source)
    except StoreError:
        raise DataError(
            f"no dot matrix for source {source!r} under {out}; run "
            f"'trajspec dots' first")


def cmd_validate_store(config: dict, args) -> int:
    manifest = _manifest(config)
    try:
        verify_store(manifest)
    except StoreError as e:
        raise DataError(str(e))
    print(f"store ok: {len(manifest.steps)} checkpoints, "
          f"p={manifest.param_count}")
    return EXIT_OK


def cmd_sketch(config: dict, args) -> int:
    manifest = _manifest(config)
    out = run_dir(config)
    cfg = _sketch_config(config, max(config["windows"]))
    t0 = time.time()
    try:
        sketch.project_store(manifest, cfg, out / "sketches",
                             overwrite=getattr(args, "force", False))
    except StoreError as e:
        raise DataError(str(e))
    n = len(manifest.steps) - 1
    print(f"sketched {n} deltas to d={cfg.d} in {time.time() - t0:.1f}s "
          f"(fingerprint {cfg.fingerprint})", file=sys.stderr)
    return EXIT_OK


def cmd_dots(config: dict, args) -> int:
    manifest = _manifest(config)
    out = run_dir(config)
    sketched = config["sketch"]["enabled"]
    if sketched:
        cfg = _sketch_config(config, max(config["windows"]))
        source = f"sketched:{cfg.fingerprint}"
    else:
        source = "full"
    expected_map = list(zip(manifest.step_indices[:-1],
                            manifest.step_indices[1:]))
    if not getattr(args, "force", False):
        try:
            existing = gram.load_dot_matrix(out, source)
            if existing.step_map == expected_map:
                print(f"dots cache hit for source {source!r}; nothing to "
                      f"do", file=sys.stderr)
                return EXIT_OK
        except StoreError:
            pass
    t0 = time.time()
    if sketched:
        sketch_dir = out / "sketches"
        try:
            sketches, _ = sketch.load_sketches(sketch_dir)
        except StoreError:
            sketches = sketch.project_store(manifest, cfg, sketch_dir)
        d = sketch.sketch_dot_matrix(sketches)
    else:
        d = gram.dot_matrix_from_store(manifest)
    gram.check_dot_matrix(d)
    gram.save_dot_matrix(d, out)
    for name, pattern in config.get("groups", []):
        span = [s for s in group_spans(manifest, [(name, pattern)])
                if s.group_name == name][0]
        if span.size == 0:
            print(f"warning: group {name!r} matched no keys",
                  file=sys.stderr)
            continue
        gram.save_dot_matrix(gram.group_dot_matrix(manifest, span), out)
    print(f"dots: N={d.n}, p={manifest.param_count}, source={source}, "
          f"{time.time() - t0:.1f}s wall", file=sys.stderr)
    return EXIT_OK


def cmd_analyze(config: dict, args) -> int:
    out = run_dir(config)
    d = _load_dots(config, out)
    sources = [("", d)]
    for name, _pattern in config.get("groups", []):
        try:
            sources.append((name, gram.load_dot_matrix(out,
                                                       f"group:{name}")))
        except StoreError:
            raise DataError(
                f"no dot matrix for group {name!r}; rerun 'trajspec dots'")
    degenerate_seen = False
    for label, dots in sources:
        for width in config["windows"]:
            series = spectral.rolling_series(dots, width)
            tag = f"w{width}" + (f"_{label}" if label else "")
            spectral.series_to_csv(series, out / f"series_{tag}.csv")
            spectral.series_to_json(series, out / f"series_{tag}.json")
            degenerate_seen |= bool(series.degenerate.any())
    print(f"analyze: wrote {len(sources) * len(config['windows'])} series "
          f"files under {out}", file=sys.stderr)
    if degenerate_seen and getattr(args, "strict", False):
        print("degenerate windows present", file=sys.stderr)
        return EXIT_DEGENERATE
    return EXIT_OK


def _loss_series(config: dict) -> ts.MetricSeries:
    path = config.get("loss_csv")
    if not path:
        raise ConfigError("loss_csv is required for this command")
    try:
        return ts.read_metric_csv(path, "val_loss")
    except (OSError, ValueError) as e:
        raise DataError(str(e))


def _aligned(series: spectral.ObservableSeries,
             loss: ts.MetricSeries, track: str = "gap_ratio"):
    gap = ts.MetricSeries(series.steps, series.track(track), track)
    try:
        return ts.align(gap, loss)
    except ValueError as e:
        raise DataError(f"alignment failed: {e}")


def cmd_correlate(config: dict, args) -> int:
    out = run_dir(config)
    d = _load_dots(config, out)
    loss = _loss_series(config)
    stats = config["stats"]
    report = {}
    for width in config["windows"]:
        series = spectral.rolling_series(d, width)
        steps, raw_gap, raw_loss = _aligned(series, loss)
        x = ts.prepare(raw_gap)
        y = ts.prepare(raw_loss)
        scan = ts.xcorr_lagscan(x, y, stats["max_lag"])
        ranking = ts.rank_ratios(series, loss, stats["max_lag"])
        sliding = ts.sliding_corr(x, y, stats["sliding_window"])
        report[f"w{width}"] = _json_safe({
            "n_aligned": int(steps.size),
            "lag_scan": {
                "lags": scan.lags, "r": scan.r_at_lag,
                "n_overlap": scan.n_overlap, "peak_lag": scan.peak_lag,
                "peak_r": scan.peak_r, "omitted": scan.omitted},
            "ranking": ranking,
            "sliding_corr": {"window": stats["sliding_window"],
                             "steps": steps, "r": sliding},
        })
    _write_report(out / "correlate.json", "correlate", config, report)
    print(f"correlate: wrote {out / 'correlate.json'}", file=sys.stderr)
    return EXIT_OK


def cmd_segment(config: dict, args) -> int:
    out = run_dir(config)
    d = _load_dots(config, out)
    loss = _loss_series(config)
    stats = config["stats"]
    report = {}
    degenerate_seen = False
    for width in config["windows"]:
        series = spectral.rolling_series(d, width)
        steps, raw_gap, raw_loss = _aligned(series, loss)
        x = ts.prepare(raw_gap)
        y = ts.prepare(raw_loss)
        per_method = {}
        for method in ("peak", "derivative", "threshold"):
            seg = ts.segment_phases(raw_gap, method,
                                    dict(stats["segment_params"]))
            pc = ts.phase_corr(x, y, seg)
            degenerate_seen |= any(flag for _, _, _, flag in pc.phases)
            per_method[method] = _json_safe({
                "boundaries": [[name, int(a), int(b)]
                               for name, a, b in seg.boundaries],
                "params": seg.params,
                "no_collapse": seg.no_collapse,
                "collapse_onset": ts.collapse_onset(seg, raw_gap),
                "phase_corr": [
                    {"phase": name, "r": r, "n": n, "flagged": flag}
                    for name, r, n, flag in pc.phases],
                "global_r": pc.global_r,
            })
        report[f"w{width}"] = per_method
    _write_report(out / "segment.json", "segment", config, report)
    print(f"segment: wrote {out / 'segment.json'}", file=sys.stderr)
    if degenerate_seen and getattr(args, "strict", False):
        return EXIT_DEGENERATE
    return EXIT_OK


def cmd_granger(config: dict, args) -> int:
    out = run_dir(config)
    d = _load_dots(config, out)
    loss = _loss_series(config)
    stats = config["stats"]
    lags = int(stats["granger_lags"])
    report = {}
    flagged = False
    for width in config["windows"]:
        series = spectral.rolling_series(d, width)
        steps, raw_gap, raw_loss = _aligned(series, loss)
        edge = ts.prepare(raw_gap)
        lv = ts.prepare(raw_loss)
        fwd = ts.granger(edge, lv, lags, "edge", "val_loss")
        rev = ts.granger(lv, edge, lags, "val_loss", "edge")
        resid = ts.residualized_granger(edge, lv,
                                        int(stats["resid_lags"]), lags,
                                        "edge", "val_loss")
        common, ia, ib = np.intersect1d(series.steps, loss.steps,
                                        return_indices=True)
        observables = {}
        for name in OBSERVABLE_SET:
            values = series.track(name)[ia]
            ok = np.isfinite(values)
            if ok.all() and values.std() > 0:
                observables[name] = ts.prepare(values)
        joint = None
        if len(observables) >= 2:
            lv_full = ts.prepare(loss.values[ib])
            joint = ts.granger_multivariate(observables, lv_full, lags)
        flagged |= fwd.flagged or rev.flagged or resid.flagged \
            or (joint.flagged if joint else False)

        def as_dict(r):
            if r is None:
                return None
            return _json_safe({
                "cause": r.cause, "effect": r.effect, "lags": r.n_lags,
                "F": r.f_stat, "p": r.p_value, "delta_r2": r.delta_r2,
                "r2_explained": r.r2_explained, "flagged": r.flagged,
                "note": r.note})

        report[f"w{width}"] = {
            "edge_to_loss": as_dict(fwd),
            "loss_to_edge": as_dict(rev),
            "residualized": as_dict(resid),
            "multivariate": as_dict(joint),
            "observable_set": list(observables),
        }
    _write_report(out / "granger.json", "granger", config, report)
    print(f"granger: wrote {out / 'granger.json'}", file=sys.stderr)
    if flagged and getattr(args, "strict", False):
        return EXIT_DEGENERATE
    return EXIT_OK


def cmd_detect_shift(config: dict, args) -> int:
    out = run_dir(config)
    d = _load_dots(config, out)
    stats = config["stats"]
    true_step = getattr(args, "true_step", None)
    if true_step is None and config.get("store_dir"):
        truth_path = Path(config["store_dir"]) / "ground_truth.json"
        if truth_path.exists():
            truth = json.loads(truth_path.read_text())
            shift_idx = truth.get("shift_index")
            if shift_idx is not None:
                # ground truth records the delta index; the shift lands
                # at that delta's starting training step
                manifest = _manifest(config)
                true_step = manifest.step_indices[int(shift_idx)]
    report = {}
    track = stats.get("shift_track", "gap_ratio")
    for width in config["windows"]:
        series = spectral.rolling_series(d, width)
        raw = series.track(track)
        ok = np.isfinite(raw)
        values = raw[ok]
        steps = series.steps[ok]
        if values.size < 10:
            raise DataError("too few finite gap values for shift "
                            "detection")
        detections = {}
        for name, det in [
            ("max_derivative",
             changepoint.detect_max_derivative(values, steps)),
            ("cusum",
             changepoint.detect_cusum(
                 values, steps,
                 reference_n=int(stats["cusum_reference_n"]),
                 allowance=float(stats["cusum_allowance"]),
                 threshold=float(stats["cusum_threshold"]))),
            ("ttest",
             changepoint.detect_ttest(values, steps,
                                      margin=int(stats["ttest_margin"]))),
        ]:
            entry = {"detected_step": det.detected_step,
                     "detected_index": det.detected_index,
                     "statistic": det.statistic, "params": det.params}
            if true_step is not None and det.detected_step is not None:
                entry["true_step"] = int(true_step)
                entry["error_steps"] = changepoint.score_detection(
                    det, int(true_step))
            detections[name] = _json_safe(entry)
        report[f"w{width}"] = detections
    _write_report(out / "detect_shift.json", "detect-shift", config,
                  report)
    print(f"detect-shift: wrote {out / 'detect_shift.json'}",
          file=sys.stderr)
    no_detection = any(
        det["detected_step"] is None
        for per_w in report.values() for det in per_w.values())
    return EXIT_DEGENERATE if (no_detection and getattr(args, "strict", False)) else EXIT_OK


def cmd_report(config: dict, args) -> int:
    rc = cmd_dots(config, args)
    if rc:
        return rc
    for fn in (cmd_analyze, cmd_correlate, cmd_segment, cmd_granger,
               cmd_detect_shift):
        rc = fn(config, args) or rc
    out = run_dir(config)
    combined = {}
    for name in ("correlate", "segment", "granger", "detect_shift"):
        path = out / f"{name}.json"
        if path.exists():
            combined[name] = json.loads(path.read_text())
    _write_report(out / "report.json", "report", config, combined)
    print(f"report: wrote {out / 'report.json'}", file=sys.stderr)
    return rc


def _parse_schedule(text: str) -> synth.Schedule:
    # e.g. "constant:5", "trapezoid:0.5:8:15:30", "step:0:8:25@alternating"
    text, _, mode = text.partition("@")
    mode = mode or "iid"
    if mode not in ("iid", "drift", "alternating"):
        raise ConfigError(f"unknown coefficient mode {mode!r}")
    parts = text.split(":")
    kind = parts[0]
    try:
        params = [float(x) for x in parts[1:]]
        if kind == "constant":
            (a,) = params
            return synth.Schedule("constant", (a,), coefficients=mode)
        if kind == "ramp":
            a0, a1 = params
            return synth.Schedule("ramp", (a0, a1), coefficients=mode)
        if kind == "trapezoid":
            lo, hi, rise_end, fall_start = params
            return synth.Schedule("trapezoid",
                                  (lo, hi, int(rise_end), int(fall_start)),
                                  coefficients=mode)
        if kind == "step":
            before, after, at = params
            return synth.Schedule("step", (before, after, int(at)),
                                  coefficients=mode)
    except (ValueError, TypeError) as e:
        raise ConfigError(f"bad spike schedule {text!r}: {e}")
    raise ConfigError(f"unknown spike schedule {text!r}")


def cmd_synth(config: dict, args) -> int:
    if not args.out:
        raise ConfigError("synth requires --out")
    schedules = [_parse_schedule(s) for s in (args.spikes or [])]
    plan = synth.SpikePlan(schedules,
                           synth.NoiseSpec("isotropic", tau=args.noise_tau))
    t0 = time.time()
    manifest, truth = synth.gen_store(
        plan, args.n_deltas, args.p, args.out, seed=args.seed,
        step_stride=args.stride, start_step=args.start_step)
    print(f"synth: {len(manifest.steps)} checkpoints, p={args.p}, "
          f"{time.time() - t0:.1f}s wall", file=sys.stderr)
    if args.loss_w:
        d = gram.dot_matrix_from_store(manifest)
        series = spectral.rolling_series(d, args.loss_w)
        loss, coupling = synth.gen_coupled_loss(
            series.gap_ratio, series.steps, lag=args.loss_lag,
            sign=args.loss_sign, noise_std=args.loss_noise,
            seed=args.seed)
        loss_path = Path(args.out) / "loss.csv"
        with open(loss_path, "w") as f:
            f.write("step,value\n")
            for s, v in zip(loss.steps, loss.values):
                f.write(f"{int(s)},{float(v)!r}\n")
        truth_path = Path(args.out) / "ground_truth.json"
        doc = json.loads(truth_path.read_text())
        doc["coupling"] = coupling
        truth_path.write_text(json.dumps(doc, indent=1, sort_keys=True)
                              + "\n")
        print(f"synth: coupled loss at lag {args.loss_lag} -> "
              f"{loss_path}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    # common flags are accepted both before and after the subcommand;
    # SUPPRESS keeps an unsupplied occurrence from clobbering the other
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS,
                        help="JSON config file")
    common.add_argument("--store", default=argparse.SUPPRESS,
                        help="checkpoint store directory")
    common.add_argument("--out", default=argparse.SUPPRESS,
                        help="output directory root")
    common.add_argument("--run-id", default=argparse.SUPPRESS,
                        help="explicit run id")
    common.add_argument("--loss", default=argparse.SUPPRESS,
                        help="loss CSV (step,value)")
    common.add_argument("-W", "--window", type=int, action="append",
                        default=argparse.SUPPRESS,
                        help="window size (repeatable)")
    common.add_argument("--sketched", action="store_true",
                        default=argparse.SUPPRESS,
                        help="operate on JL sketches instead of full "
                             "deltas")
    common.add_argument("--sketch-d", type=int, default=argparse.SUPPRESS,
                        help="projection dimension (default 10*max W)")
    common.add_argument("--sketch-seed", type=int,
                        default=argparse.SUPPRESS,
                        help="projection seed")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS,
                        help="worker threads (default "
                             "$TRAJSPEC_THREADS or all)")
    common.add_argument("--strict", action="store_true",
                        default=argparse.SUPPRESS,
                        help="treat degenerate statistics as exit 4")
    common.add_argument("--force", action="store_true",
                        default=argparse.SUPPRESS,
                        help="recompute cached artifacts")

    parser = argparse.ArgumentParser(
        prog="trajspec",
        description="Spectral signal-noise analysis of training "
                    "trajectories",
        parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("dots", "analyze", "correlate", "granger", "segment",
                 "validate-store", "sketch", "report"):
        sub.add_parser(name, parents=[common])

    p_shift = sub.add_parser("detect-shift", parents=[common])
    p_shift.add_argument("--true-step", type=int,
                         help="known shift step for scoring")

    p_synth = sub.add_parser("synth")
    p_synth.add_argument("--out", dest="out", required=False)
    p_synth.add_argument("--n-deltas", type=int, default=50)
    p_synth.add_argument("--p", type=int, default=100_000)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--stride", type=int, default=200)
    p_synth.add_argument("--start-step", type=int, default=0)
    p_synth.add_argument("--noise-tau", type=float, default=1.0)
    p_synth.add_argument("--spikes", action="append",
                         help="schedule, e.g. constant:5 or "
                              "trapezoid:0.5:8:15:30 (repeatable)")
    p_synth.add_argument("--loss-w", type=int, default=None,
                         help="emit a coupled loss.csv computed at this "
                              "window size")
    p_synth.add_argument("--loss-lag", type=int, default=0)
    p_synth.add_argument("--loss-sign", type=int, default=1)
    p_synth.add_argument("--loss-noise", type=float, default=0.0)
    return parser


_COMMANDS = {
    "validate-store": cmd_validate_store,
    "dots": cmd_dots,
    "analyze": cmd_analyze,
    "correlate": cmd_correlate,
    "granger": cmd_granger,
    "segment": cmd_segment,
    "detect-shift": cmd_detect_shift,
    "sketch": cmd_sketch,
    "synth": cmd_synth,
    "report": cmd_report,
}


def _overrides_from_args(args) -> dict:
    get = lambda name: getattr(args, name, None)  # noqa: E731
    overrides: dict = {}
    if get("store"):
        overrides["store_dir"] = get("store")
    if getattr(args, "command", None) != "synth" and get("out"):
        overrides["out_dir"] = get("out")
    if get("run_id"):
        overrides["run_id"] = get("run_id")
    if get("loss"):
        overrides["loss_csv"] = get("loss")
    if get("window"):
        overrides["windows"] = get("window")
    sk: dict = {}
    if get("sketched"):
        sk["enabled"] = True
    if get("sketch_d") is not None:
        sk["d"] = get("sketch_d")
    if get("sketch_seed") is not None:
        sk["seed"] = get("sketch_seed")
    if sk:
        overrides["sketch"] = sk
    if get("threads") is not None:
        overrides["threads"] = get("threads")
    return overrides


def _apply_threads(config: dict) -> None:
    threads = config.get("threads")
    if threads is None:
        env = os.environ.get("TRAJSPEC_THREADS")
        threads = int(env) if env else None
    if threads:
        try:
            import numba
            numba.set_num_threads(max(1, int(threads)))
        except (ImportError, ValueError):
            pass


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(getattr(args, "config", None),
                             _overrides_from_args(args))
        _apply_threads(config)
        return _COMMANDS[args.command](config, args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except StoreError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as e:
        # contract violations from the numeric layers (window too large
        # for the data, short series, ...) are data errors at this level
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
