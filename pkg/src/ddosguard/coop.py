"""Cooperative detection between edge routers and the victim's access router.

Each edge router runs a local detector on its own traffic and keeps the last
``retention`` windows. Every window it pushes a constant-size summary
(volume, active-flow count) to the central detector, and a Suspicious Alarm
carrying its active flow list when its local threshold trips.

The central detector never sees raw traffic. Per window it confirms an attack
when

1. at least ``sa_threshold`` distinct edges raised alarms (``sa_quorum``), or
2. the volume sum and the union of the alarmed flow lists already exceed its
   own thresholds (``central_check``). Both are lower bounds on the true
   totals, so a trip here is never spurious, or
3. ``query_on`` is set, the check trips only on the summed per-edge flow
   counts (an upper bound, since a flow may cross several edges), and the
   verdict on the exact union of flow lists, fetched by querying the silent
   edges, still trips (``query_confirmed``).
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

from .detector import (
    DetectorConfig,
    NormalProfile,
    build_profile,
    compute_thresholds,
    detect_values,
    detect_window,
)
from .flow_model import FLOW, VOLUME, WindowStats
from .simulator import LabeledTrace


class ProtocolError(ValueError):
    pass


class StaleWindowError(LookupError):
    pass


class RoutingError(LookupError):
    pass


@dataclass(frozen=True)
class CoopConfig:
    sa_threshold: int | None = None
    local_r: float = 6.0
    central_r: float = 6.0
    query_on: bool = True
    retention: int = 16

    def __post_init__(self) -> None:
        if self.sa_threshold is not None and self.sa_threshold < 1:
            raise ValueError("sa_threshold must be >= 1")
        if not (self.local_r > 0 and self.central_r > 0):
            raise ValueError("tolerance factors must be positive")
        if self.retention < 1:
            raise ValueError("retention must be >= 1")

    def quorum(self, n_edges: int) -> int:
        if self.sa_threshold is not None:
            return self.sa_threshold
        return max(1, math.ceil(n_edges / 4))


@dataclass(frozen=True)
class EdgeSummary:
    detector_id: str
    window_index: int
    volume: int
    flow_count: int


@dataclass(frozen=True)
class SuspiciousAlarm:
    detector_id: str
    window_index: int
    measures: tuple[float, ...]
    active_flows: tuple[str, ...]
    triggered_measures: frozenset[str]

    def __post_init__(self) -> None:
        if not self.triggered_measures:
            raise ProtocolError("a suspicious alarm needs at least one triggered measure")


@dataclass(frozen=True)
class QueryResponse:
    detector_id: str
    window_index: int
    stats: WindowStats

    @property
    def active_flows(self) -> list[str]:
        return self.stats.active_flows


@dataclass(frozen=True)
class CentralVerdict:
    window_index: int
    confirmed: bool
    sa_count: int
    via: str | None
    merged_flow_count: int
    queried: tuple[str, ...] = ()


def local_detect(
    edge_stats: WindowStats,
    edge_profile: NormalProfile,
    cfg: CoopConfig,
    detector_id: str = "edge",
) -> SuspiciousAlarm | None:
    thr = compute_thresholds(edge_profile, DetectorConfig.uniform(cfg.local_r, edge_profile.arity))
    verdict = detect_window(edge_stats, edge_profile, thr)
    if not verdict.is_attack:
        return None
    return SuspiciousAlarm(
        detector_id=detector_id,
        window_index=edge_stats.window_index,
        measures=edge_stats.measures,
        active_flows=tuple(edge_stats.active_flows),
        triggered_measures=verdict.triggered_measures,
    )


def merge_flow_lists(lists: Iterable[Iterable[str]]) -> int:
    merged: set[str] = set()
    for flows in lists:
        merged.update(flows)
    return len(merged)


class EdgeDetector:
    """Local detector state machine for one edge router."""

    def __init__(self, detector_id: str, profile: NormalProfile, cfg: CoopConfig):
        self.detector_id = detector_id
        self.profile = profile
        self.cfg = cfg
        self._retained: deque[WindowStats] = deque(maxlen=cfg.retention)
        self.max_retained = 0

    def observe(self, stats: WindowStats) -> tuple[EdgeSummary, SuspiciousAlarm | None]:
        self._retained.append(stats)
        self.max_retained = max(self.max_retained, len(self._retained))
        summary = EdgeSummary(
            self.detector_id, stats.window_index, stats.volume_bytes, stats.flow_count
        )
        return summary, local_detect(stats, self.profile, self.cfg, self.detector_id)

    def query(self, window_index: int) -> QueryResponse:
        for stats in self._retained:
            if stats.window_index == window_index:
                return QueryResponse(self.detector_id, window_index, stats)
        raise StaleWindowError(
            f"{self.detector_id} no longer retains window {window_index}"
        )


class EdgeNetwork:
    """The set of edge detectors reachable from the central detector."""

    def __init__(self, detectors: Iterable[EdgeDetector]):
        self.detectors = {d.detector_id: d for d in detectors}

    def query_local(self, edge_id: str, window_index: int) -> QueryResponse:
        try:
            edge = self.detectors[edge_id]
        except KeyError:
            raise RoutingError(f"unknown edge {edge_id!r}") from None
        return edge.query(window_index)


def _observed(names: Sequence[str], volume: float, flows: float) -> list[float]:
    values = {VOLUME: volume, FLOW: flows}
    return [values[n] for n in names]


def central_step(
    window_index: int,
    summaries: Sequence[EdgeSummary],
    sas: Sequence[SuspiciousAlarm],
    profile: NormalProfile,
    cfg: CoopConfig,
    query: Callable[[str, int], QueryResponse] | None = None,
    log: list[dict] | None = None,
) -> CentralVerdict:
    for msg in list(sas) + list(summaries):
        if msg.window_index != window_index:
            raise ProtocolError(
                f"message from {msg.detector_id} for window {msg.window_index} "
                f"delivered to central step {window_index}"
            )
    thr = compute_thresholds(profile, DetectorConfig.uniform(cfg.central_r, profile.arity))
    names = profile.measure_names

    lists = {sa.detector_id: sa.active_flows for sa in sas}
    sa_count = len(lists)
    volume = sum(s.volume for s in summaries)
    merged = merge_flow_lists(lists.values())

    if sa_count >= cfg.quorum(len(summaries)):
        return CentralVerdict(window_index, True, sa_count, "sa_quorum", merged)

    if detect_values(_observed(names, volume, merged), profile, thr).is_attack:
        return CentralVerdict(window_index, True, sa_count, "central_check", merged)

    silent = sorted(s.detector_id for s in summaries if s.flow_count > 0 and s.detector_id not in lists)
    if not (cfg.query_on and query is not None and silent):
        return CentralVerdict(window_index, False, sa_count, None, merged)

    upper = sum(s.flow_count for s in summaries)
    if not detect_values(_observed(names, volume, upper), profile, thr).is_attack:
        return CentralVerdict(window_index, False, sa_count, None, merged)

    for edge_id in silent:
        if log is not None:
            log.append({"type": "query", "detector_id": edge_id, "window_index": window_index,
                        "measures": [], "flows": []})
        resp = query(edge_id, window_index)
        lists[edge_id] = tuple(resp.active_flows)
        if log is not None:
            log.append(_message("resp", edge_id, window_index, resp.stats.measures, resp.active_flows))
    merged = merge_flow_lists(lists.values())
    confirmed = detect_values(_observed(names, volume, merged), profile, thr).is_attack
    return CentralVerdict(
        window_index,
        confirmed,
        sa_count,
        "query_confirmed" if confirmed else None,
        merged,
        tuple(silent),
    )


def _message(kind, detector_id, window_index, measures, flows) -> dict:
    return {
        "type": kind,
        "detector_id": detector_id,
        "window_index": window_index,
        "measures": [float(m) for m in measures],
        "flows": list(flows),
    }


@dataclass
class CoopProfiles:
    central: NormalProfile
    edges: dict[str, NormalProfile]


def train_coop_profiles(normal: LabeledTrace) -> CoopProfiles:
    """Central profile from the aggregate, one independent profile per edge."""
    if any(normal.truth):
        raise ValueError("cooperative profiles must be trained on attack-free traffic")
    return CoopProfiles(
        central=build_profile(normal.victim_windows, normal.delta_ms),
        edges={e: build_profile(ws, normal.delta_ms) for e, ws in normal.edge_windows.items()},
    )


@dataclass
class CoopReport:
    windows: int = 0
    summaries_sent: int = 0
    sas_sent: int = 0
    queries_issued: int = 0
    responses_received: int = 0
    confirmations: dict[str, int] = field(
        default_factory=lambda: {"sa_quorum": 0, "central_check": 0, "query_confirmed": 0}
    )
    first_confirmation_window: int | None = None
    edge_retained_windows: dict[str, int] = field(default_factory=dict)
    max_central_state: int = 0

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class CoopResult:
    verdicts: list[CentralVerdict]
    report: CoopReport
    messages: list[dict]

    @property
    def alarms(self) -> list[bool]:
        return [v.confirmed for v in self.verdicts]

    def messages_jsonl(self) -> str:
        return "".join(json.dumps(m, sort_keys=True) + "\n" for m in self.messages)


def run_coop_simulation(
    trace: LabeledTrace, cfg: CoopConfig, profiles: CoopProfiles
) -> CoopResult:
    edge_ids = sorted(trace.edge_windows)
    missing = [e for e in edge_ids if e not in profiles.edges]
    if missing:
        raise RoutingError(f"no profile for edges {missing}")
    detectors = [EdgeDetector(e, profiles.edges[e], cfg) for e in edge_ids]
    network = EdgeNetwork(detectors)
    report = CoopReport()
    messages: list[dict] = []
    verdicts = []

    for i in range(trace.n_windows):
        window_index = trace.victim_windows[i].window_index
        summaries, sas = [], []
        for det in detectors:
            summary, sa = det.observe(trace.edge_windows[det.detector_id][i])
            summaries.append(summary)
            messages.append(
                _message("summary", det.detector_id, window_index,
                         (summary.volume, summary.flow_count), ())
            )
            if sa is not None:
                sas.append(sa)
                messages.append(
                    _message("sa", sa.detector_id, window_index, sa.measures, sa.active_flows)
                )
        n_before = len(messages)
        verdict = central_step(
            window_index, summaries, sas, profiles.central, cfg, network.query_local, messages
        )
        verdicts.append(verdict)

        n_queries = sum(1 for m in messages[n_before:] if m["type"] == "query")
        report.windows += 1
        report.summaries_sent += len(summaries)
        report.sas_sent += len(sas)
        report.queries_issued += n_queries
        report.responses_received += n_queries
        held_flows = sum(len(sa.active_flows) for sa in sas) + sum(
            len(m["flows"]) for m in messages[n_before:] if m["type"] == "resp"
        )
        report.max_central_state = max(report.max_central_state, len(summaries) + held_flows)
        if verdict.confirmed:
            report.confirmations[verdict.via] += 1
            if report.first_confirmation_window is None:
                report.first_confirmation_window = window_index

    report.edge_retained_windows = {d.detector_id: d.max_retained for d in detectors}
    return CoopResult(verdicts, report, messages)
