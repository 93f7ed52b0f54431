"""Command-line workflows: simulate, train, detect, coop, roc, replay.

Every command writes data files plus one ``manifest.json`` into its output
directory. ``replay`` re-executes a manifest and should reproduce the data
files byte for byte.

Exit codes: 0 success, 2 configuration error, 3 data-contract violation,
4 internal failure.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import os
import sys
import tempfile
import warnings
from dataclasses import replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config, parse_config
from .coop import CentralVerdict, run_coop_simulation, train_coop_profiles
from .detector import (
    DetectorConfig,
    InsufficientTrainingError,
    NormalProfile,
    SchemaError,
    build_profile,
    detect_stream,
    write_verdicts_csv,
)
from .evaluation import attack_intervals, roc_sweep, score_run, simulate_suite, write_roc_csv
from .flow_model import (
    TRACE_HEADER,
    RejectedRecordError,
    WindowingConfig,
    WindowStats,
    read_trace_csv,
    read_windows_csv,
    window_partition,
    write_trace_csv,
    write_windows_csv,
)
from .simulator import LabeledTrace, build_topology, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_INTERNAL = 0, 2, 3, 4


class DataContractError(Exception):
    pass


class _Outputs:
    """Collects files for one output directory, written atomically."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.hashes: dict[str, str] = {}

    def write(self, name: str, text: str) -> None:
        path = self.out_dir / name
        path.parent.mkdir(parents=True, exist_ok=True)
        data = text.encode()
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
        if name != "manifest.json":
            self.hashes[name] = hashlib.sha256(data).hexdigest()

    def write_with(self, name: str, writer: Callable[[io.StringIO], None]) -> None:
        buf = io.StringIO()
        writer(buf)
        self.write(name, buf.getvalue())


def _json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _file_hash(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _input_hashes(paths: list[Path]) -> dict[str, str]:
    hashes = {}
    for p in paths:
        files = sorted(f for f in p.rglob("*") if f.is_file()) if p.is_dir() else [p]
        for f in files:
            if f.name != "manifest.json":
                hashes[str(f)] = _file_hash(f)
    return hashes


def _write_manifest(out: _Outputs, command: str, cfg: RunConfig, options: dict,
                    inputs: list[Path], extra: dict | None = None) -> None:
    canonical = cfg.canonical()
    seedless = {k: v for k, v in canonical.items() if k != "seed"}
    doc = {
        "command": command,
        "artifact_version": __version__,
        "config": canonical,
        "config_hash": hashlib.sha256(json.dumps(seedless, sort_keys=True).encode()).hexdigest(),
        "seed": cfg.seed,
        "options": options,
        "inputs": _input_hashes(inputs),
        "output_dir": str(out.out_dir),
        "outputs": dict(sorted(out.hashes.items())),
    }
    if extra:
        doc.update(extra)
    out.write("manifest.json", _json(doc))


# --- trace loading -----------------------------------------------------------

def _read_manifest(trace_dir: Path) -> dict:
    path = trace_dir / "manifest.json"
    return json.loads(path.read_text()) if path.exists() else {}


def load_windows(path: Path, windowing: WindowingConfig):
    """Windows, truth labels (or None) and trace metadata from a trace path."""
    if path.is_dir():
        meta = _read_manifest(path).get("trace", {})
        windows, truth = read_windows_csv(path / "windows.csv", windowing.measure_set)
        return windows, truth, meta
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
    if tuple(header) == TRACE_HEADER:
        windows = window_partition(read_trace_csv(path), windowing)
        return windows, None, {"delta_ms": windowing.delta_ms}
    windows, truth = read_windows_csv(path, windowing.measure_set)
    return windows, truth, {}


def load_labeled_trace(trace_dir: Path, windowing: WindowingConfig) -> LabeledTrace:
    """Rebuild a trace with per-edge flow identities from a simulate output directory."""
    meta = _read_manifest(trace_dir).get("trace")
    if meta is None:
        raise DataContractError(f"{trace_dir}: not a simulate output directory (no manifest)")
    if float(meta["delta_ms"]) != windowing.delta_ms:
        raise DataContractError(
            f"{trace_dir}: trace was simulated with delta_ms={meta['delta_ms']}, "
            f"config uses {windowing.delta_ms}"
        )
    _, truth = read_windows_csv(trace_dir / "windows.csv", windowing.measure_set)
    n_win = len(truth or [])
    edge_windows, edge_of_flow, records = {}, {}, []
    for edge in meta["edges"]:
        recs = read_trace_csv(trace_dir / "edges" / f"{edge}.csv")
        for r in recs:
            edge_of_flow[r.flow_id] = edge
        records.extend(recs)
        edge_windows[edge] = window_partition(recs, windowing, n_windows=n_win)
    records.sort(key=lambda r: (r.timestamp, r.flow_id))
    victim = window_partition(records, windowing, n_windows=n_win)
    volumes = np.array([w.volume_bytes for w in victim], dtype=float)
    return LabeledTrace(
        delta_ms=windowing.delta_ms,
        victim_windows=victim,
        edge_windows=edge_windows,
        truth=list(truth or [False] * n_win),
        t_a_ms=meta.get("t_a_ms"),
        t_b_ms=meta.get("t_b_ms"),
        attack_end_ms=meta.get("attack_end_ms"),
        offered_bytes=volumes,
        attack_bytes=np.zeros(n_win),
        records=records,
        edge_of_flow=edge_of_flow,
    )


# --- commands ----------------------------------------------------------------

def cmd_simulate(cfg: RunConfig, options: dict, out_dir: Path) -> None:
    topo = build_topology(cfg.topology, cfg.seed)
    scenario = replace(cfg.scenario, rng_seed=cfg.seed)
    trace = run_scenario(topo, scenario, cfg.windowing)

    out = _Outputs(out_dir)
    out.write_with("trace.csv", lambda fh: write_trace_csv(trace.records, fh))
    out.write_with("windows.csv", lambda fh: write_windows_csv(trace.victim_windows, fh, trace.truth))
    for edge in topo.edges:
        out.write_with(f"edges/{edge}.csv", lambda fh, e=edge: write_trace_csv(trace.edge_records(e), fh))
    meta = {
        "delta_ms": trace.delta_ms,
        "n_windows": trace.n_windows,
        "t_a_ms": trace.t_a_ms,
        "t_b_ms": trace.t_b_ms,
        "attack_end_ms": trace.attack_end_ms,
        "edges": list(topo.edges),
    }
    _write_manifest(out, "simulate", cfg, options, [], {"trace": meta})


def cmd_train(cfg: RunConfig, options: dict, out_dir: Path) -> None:
    trace = Path(options["trace"])
    windows, truth, meta = load_windows(trace, cfg.windowing)
    if truth and any(truth) and not options.get("force"):
        raise DataContractError(
            f"{trace}: {sum(truth)} windows are labelled as attack; refusing to train (use --force)"
        )
    profile = build_profile(windows, meta.get("delta_ms", cfg.windowing.delta_ms))
    for name, sd in zip(profile.measure_names, profile.std_devs):
        if sd == 0:
            print(f"warning: zero standard deviation for measure {name!r}", file=sys.stderr)
    out = _Outputs(out_dir)
    out.write("profile.json", _json(profile.to_json()))
    _write_manifest(out, "train", cfg, options, [trace])


def _detector_config(cfg: RunConfig, options: dict) -> DetectorConfig:
    if options.get("r") is not None:
        return DetectorConfig.uniform(options["r"], len(cfg.windowing.measure_set))
    return cfg.detector_config()


def cmd_detect(cfg: RunConfig, options: dict, out_dir: Path) -> None:
    trace, profile_path = Path(options["trace"]), Path(options["profile"])
    windows, truth, meta = load_windows(trace, cfg.windowing)
    profile = NormalProfile.load(profile_path)
    if profile.measure_names != tuple(cfg.windowing.measure_set):
        raise DataContractError(
            f"profile measures {profile.measure_names} differ from {cfg.windowing.measure_set}"
        )
    if profile.delta_ms != meta.get("delta_ms", cfg.windowing.delta_ms):
        raise DataContractError("profile and trace use different window lengths")
    det_cfg = _detector_config(cfg, options)
    report = detect_stream(windows, profile, det_cfg)

    doc = {
        "tolerance_factors": list(det_cfg.tolerance_factors),
        "windows": len(windows),
        "alarms": sum(report.alarms),
        "first_detection_window": report.first_detection_window,
        "detection_time_ms": report.detection_time_ms,
        "t_a_ms": meta.get("t_a_ms"),
        "t_b_ms": meta.get("t_b_ms"),
    }
    if truth is not None:
        n_int = len(attack_intervals(truth))
        t_a = meta.get("t_a_ms")
        ev = score_run(
            report.alarms,
            truth,
            profile.delta_ms,
            t_a_ms=[t_a] * n_int if t_a is not None else None,
            t_b_ms=[meta.get("t_b_ms")] * n_int,
        )
        doc["eval"] = ev.to_json()
    out = _Outputs(out_dir)
    out.write_with("verdicts.csv", lambda fh: write_verdicts_csv(report, profile.measure_names, fh))
    out.write("report.json", _json(doc))
    _write_manifest(out, "detect", cfg, options, [trace, profile_path])


def _central_csv(verdicts: list[CentralVerdict], fh) -> None:
    fh.write("window_index,confirmed,via,sa_count,merged_flow_count\n")
    for v in verdicts:
        fh.write(f"{v.window_index},{int(v.confirmed)},{v.via or ''},{v.sa_count},{v.merged_flow_count}\n")


def cmd_coop(cfg: RunConfig, options: dict, out_dir: Path) -> None:
    trace_dir, train_dir = Path(options["trace"]), Path(options["train_trace"])
    trace = load_labeled_trace(trace_dir, cfg.windowing)
    training = load_labeled_trace(train_dir, cfg.windowing)
    if any(training.truth):
        raise DataContractError(f"{train_dir}: training trace contains attack windows")
    profiles = train_coop_profiles(training)
    result = run_coop_simulation(trace, cfg.coop, profiles)
    single = detect_stream(
        trace.victim_windows, profiles.central,
        DetectorConfig.uniform(cfg.coop.central_r, profiles.central.arity),
    )
    report = result.report.to_json()
    report["single_point_first_detection_window"] = single.first_detection_window
    if trace.truth:
        n_int = len(attack_intervals(trace.truth))
        ev = score_run(
            result.alarms,
            trace.truth,
            trace.delta_ms,
            t_a_ms=[trace.t_a_ms] * n_int if trace.t_a_ms is not None else None,
            t_b_ms=[trace.t_b_ms] * n_int,
        )
        report["eval"] = ev.to_json()
    out = _Outputs(out_dir)
    out.write_with("central_verdicts.csv", lambda fh: _central_csv(result.verdicts, fh))
    out.write("coop_report.json", _json(report))
    out.write("messages.jsonl", result.messages_jsonl())
    _write_manifest(out, "coop", cfg, options, [trace_dir, train_dir])


def cmd_roc(cfg: RunConfig, options: dict, out_dir: Path) -> None:
    r_values = options.get("r_list") or list(cfg.r_values)
    runs = simulate_suite(cfg.families, cfg.windowing)
    points, reports = roc_sweep(runs, r_values)
    out = _Outputs(out_dir)
    out.write_with("roc.csv", lambda fh: write_roc_csv(points, fh))
    out.write("reports.json", _json({repr(float(r)): rep.to_json() for r, rep in reports.items()}))
    _write_manifest(out, "roc", cfg, options, [])


COMMANDS = {
    "simulate": cmd_simulate,
    "train": cmd_train,
    "detect": cmd_detect,
    "coop": cmd_coop,
    "roc": cmd_roc,
}


def replay(manifest_path: Path, out_dir: Path) -> dict:
    """Re-run a recorded command into ``out_dir``; returns the new manifest."""
    doc = json.loads(Path(manifest_path).read_text())
    cfg = parse_config(doc["config"])
    COMMANDS[doc["command"]](cfg, doc["options"], out_dir)
    return json.loads((out_dir / "manifest.json").read_text())


def _parse_r_list(text: str) -> list[float]:
    try:
        values = sorted(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"--r-list: cannot parse {text!r}") from None
    if not values:
        raise ConfigError("--r-list: empty")
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON run configuration")
    common.add_argument("--out", type=Path, required=True, help="output directory")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key by dotted path")

    parser = argparse.ArgumentParser(prog="ddosguard", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate a labelled trace")
    p = sub.add_parser("train", parents=[common], help="learn a normal profile")
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--force", action="store_true", help="train even on attack-labelled data")
    p = sub.add_parser("detect", parents=[common], help="run the threshold detector")
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--profile", type=Path, required=True)
    p.add_argument("--r", type=float, help="uniform tolerance factor")
    p = sub.add_parser("coop", parents=[common], help="run cooperative edge/central detection")
    p.add_argument("--trace", type=Path, required=True)
    p.add_argument("--train-trace", type=Path, required=True)
    p = sub.add_parser("roc", parents=[common], help="sweep the tolerance factor")
    p.add_argument("--r-list", type=str, help="comma-separated tolerance factors")
    p = sub.add_parser("replay", help="re-run a manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, required=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "replay":
            replay(args.manifest, args.out)
            return EXIT_OK
        overrides = list(args.set)
        if args.seed is not None:
            overrides.append(f"seed={args.seed}")
        cfg = load_config(args.config, overrides)
        options: dict = {}
        for key in ("trace", "profile", "train_trace"):
            if getattr(args, key, None) is not None:
                options[key] = str(Path(getattr(args, key)).resolve())
        if getattr(args, "force", False):
            options["force"] = True
        if getattr(args, "r", None) is not None:
            options["r"] = args.r
        if getattr(args, "r_list", None):
            options["r_list"] = _parse_r_list(args.r_list)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            COMMANDS[args.command](cfg, options, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataContractError, RejectedRecordError, SchemaError, InsufficientTrainingError,
            FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
