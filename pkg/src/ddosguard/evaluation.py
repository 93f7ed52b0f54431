"""Scoring of detection runs and tolerance-factor sweeps.

An attack counts as detected when at least one alarm falls inside its
contiguous run of attack windows. False positives are alarms raised on
attack-free windows, normalised by the number of such windows.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Sequence

from .detector import DetectorConfig, NormalProfile, build_profile, detect_stream
from .flow_model import WindowingConfig
from .simulator import (
    LabeledTrace,
    ScenarioSpec,
    TopologySpec,
    build_topology,
    run_scenario,
    training_scenario,
)


class AlignmentError(ValueError):
    pass


@dataclass
class EvalReport:
    d: int
    n: int
    f: int
    m: int
    t_d_ms: list[float | None] = field(default_factory=list)
    met_deadline: list[bool | None] = field(default_factory=list)

    @property
    def R_d(self) -> float:
        return self.d / self.n if self.n else 0.0

    @property
    def R_fp(self) -> float:
        return self.f / self.m if self.m else 0.0

    def __add__(self, other: EvalReport) -> EvalReport:
        return EvalReport(
            self.d + other.d,
            self.n + other.n,
            self.f + other.f,
            self.m + other.m,
            self.t_d_ms + other.t_d_ms,
            self.met_deadline + other.met_deadline,
        )

    def to_json(self) -> dict:
        doc = asdict(self)
        doc.update(R_d=self.R_d, R_fp=self.R_fp)
        return doc


@dataclass(frozen=True)
class RocPoint:
    r: float
    R_d: float
    R_fp: float
    d: int
    n: int
    f: int
    m: int


def attack_intervals(truth: Sequence[bool]) -> list[tuple[int, int]]:
    """Contiguous runs of true labels as inclusive 0-based ``(start, end)``."""
    runs, start = [], None
    for i, flag in enumerate(truth):
        if flag and start is None:
            start = i
        elif not flag and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(truth) - 1))
    return runs


def score_run(
    alarms: Sequence[bool],
    truth: Sequence[bool],
    delta_ms: float = 200.0,
    t_a_ms: Sequence[float] | None = None,
    t_b_ms: Sequence[float | None] | None = None,
) -> EvalReport:
    """Score per-window alarms against ground truth.

    ``t_a_ms`` defaults to the start of each interval's first window. A
    latency is the end of the first alarmed window minus the onset.
    """
    if len(alarms) != len(truth):
        raise AlignmentError(f"{len(alarms)} verdicts vs {len(truth)} truth labels")
    intervals = attack_intervals(truth)
    if t_a_ms is None:
        t_a_ms = [start * delta_ms for start, _ in intervals]
    if t_b_ms is None:
        t_b_ms = [None] * len(intervals)
    if len(t_a_ms) != len(intervals) or len(t_b_ms) != len(intervals):
        raise AlignmentError("onset/overwhelm times must be given per attack interval")

    d, latencies, deadlines = 0, [], []
    for (start, end), t_a, t_b in zip(intervals, t_a_ms, t_b_ms):
        hit = next((i for i in range(start, end + 1) if alarms[i]), None)
        if hit is None:
            latencies.append(None)
            deadlines.append(None if t_b is None else False)
            continue
        d += 1
        t_d = (hit + 1) * delta_ms
        latencies.append(t_d - t_a)
        deadlines.append(None if t_b is None else t_d < t_b)

    f = sum(1 for a, t in zip(alarms, truth) if a and not t)
    m = sum(1 for t in truth if not t)
    return EvalReport(d, len(intervals), f, m, latencies, deadlines)


def window_eval_mode(alarms: Sequence[bool], truth: Sequence[bool]) -> dict[str, int]:
    if len(alarms) != len(truth):
        raise AlignmentError(f"{len(alarms)} verdicts vs {len(truth)} truth labels")
    tally = {"TP": 0, "FP": 0, "TN": 0, "FN": 0}
    for a, t in zip(alarms, truth):
        key = ("T" if a == t else "F") + ("P" if a else "N")
        tally[key] += 1
    return tally


@dataclass(frozen=True)
class SuiteFamily:
    name: str
    topology: TopologySpec
    scenario: ScenarioSpec
    runs: int = 20
    seed_start: int = 1

    def seeds(self) -> range:
        return range(self.seed_start, self.seed_start + self.runs)


@dataclass
class SuiteRun:
    family: str
    seed: int
    trace: LabeledTrace
    profile: NormalProfile
    training: LabeledTrace


def simulate_run(
    topology: TopologySpec,
    scenario: ScenarioSpec,
    seed: int,
    windowing: WindowingConfig | None = None,
    family: str = "",
) -> SuiteRun:
    """Attack trace plus an attack-free training trace over the same topology."""
    topo = build_topology(topology, seed)
    sc = replace(scenario, rng_seed=seed)
    trace = run_scenario(topo, sc, windowing)
    training = run_scenario(topo, training_scenario(sc), windowing)
    return SuiteRun(family, seed, trace, build_profile(training.victim_windows, trace.delta_ms), training)


def simulate_suite(
    families: Sequence[SuiteFamily], windowing: WindowingConfig | None = None
) -> list[SuiteRun]:
    return [
        simulate_run(fam.topology, fam.scenario, seed, windowing, fam.name)
        for fam in families
        for seed in fam.seeds()
    ]


def score_suite_run(run: SuiteRun, cfg: DetectorConfig) -> EvalReport:
    report = detect_stream(run.trace.victim_windows, run.profile, cfg)
    tr = run.trace
    n_int = len(attack_intervals(tr.truth))
    return score_run(
        report.alarms,
        tr.truth,
        tr.delta_ms,
        t_a_ms=[tr.t_a_ms] * n_int if tr.t_a_ms is not None else None,
        t_b_ms=[tr.t_b_ms] * n_int,
    )


def roc_sweep(
    runs: Sequence[SuiteRun],
    r_values: Sequence[float],
    config_for: Callable[[float], DetectorConfig] | None = None,
) -> tuple[list[RocPoint], dict[float, EvalReport]]:
    """Pooled detection and false-positive rates for each tolerance factor."""
    if not r_values:
        raise ValueError("r_values must not be empty")
    config_for = config_for or (lambda r: DetectorConfig.uniform(r))
    points, reports = [], {}
    for r in sorted(r_values):
        pooled = EvalReport(0, 0, 0, 0)
        for run in runs:
            pooled = pooled + score_suite_run(run, config_for(r))
        reports[r] = pooled
        points.append(RocPoint(r, pooled.R_d, pooled.R_fp, pooled.d, pooled.n, pooled.f, pooled.m))
    return points, reports


ROC_HEADER = ("r", "R_d", "R_fp", "d", "n", "f", "m")


def write_roc_csv(points: Sequence[RocPoint], fh: io.TextIOBase) -> None:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(ROC_HEADER)
    for p in points:
        writer.writerow((repr(p.r), repr(p.R_d), repr(p.R_fp), p.d, p.n, p.f, p.m))


def high_rate_family(runs: int = 20, seed_start: int = 1) -> SuiteFamily:
    return SuiteFamily(
        "high_rate",
        TopologySpec(clients_total=100, zombies_total=50),
        ScenarioSpec(attack_mode="constant_high", attack_rate_mbps=3.0),
        runs,
        seed_start,
    )


def low_rate_family(runs: int = 20, seed_start: int = 1) -> SuiteFamily:
    return SuiteFamily(
        "low_rate",
        TopologySpec(clients_total=400, zombies_total=100),
        ScenarioSpec(attack_mode="constant_low", attack_rate_mbps=0.1),
        runs,
        seed_start,
    )


def varied_rate_family(runs: int = 20, seed_start: int = 1) -> SuiteFamily:
    return SuiteFamily(
        "varied_rate",
        TopologySpec(clients_total=400, zombies_total=50),
        ScenarioSpec(attack_mode="varied"),
        runs,
        seed_start,
    )


def mixed_families(total: int = 40, seed_start: int = 1) -> list[SuiteFamily]:
    """High, low and varied families splitting ``total`` runs as evenly as possible."""
    makers = (high_rate_family, low_rate_family, varied_rate_family)
    sizes = [total // 3 + (1 if i < total % 3 else 0) for i in range(3)]
    fams, seed = [], seed_start
    for make, size in zip(makers, sizes):
        fams.append(make(size, seed))
        seed += size
    return fams
