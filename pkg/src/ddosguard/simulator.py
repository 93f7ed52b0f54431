"""Seeded flow-level traffic simulator.

Traffic is modelled as fluid byte rates integrated over monitoring windows.
Legitimate clients open transfers at Poisson arrival times; each transfer
moves ``client_flow_bytes`` at ``client_flow_rate_mbps``. Zombies send at a
constant or piecewise-constant rate for the whole attack interval and never
back off. Every endpoint reaches the victim through exactly one edge router,
so the victim's view of a window is the union of the edge views.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .flow_model import FlowRecord, WindowingConfig, WindowStats, window_partition

ATTACK_MODES = ("none", "constant_high", "constant_low", "varied")
PAPER_RATE_RANGE_MBPS = (0.1, 3.5)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TopologySpec:
    transit_domains: int = 4
    stub_domains_per_transit: int = 3
    clients_total: int = 400
    zombies_total: int = 100
    edge_routers: int = 8
    victim_domain: int = 4

    def validate(self) -> None:
        for name in ("transit_domains", "stub_domains_per_transit", "clients_total"):
            if getattr(self, name) < 1:
                raise ConfigError(f"topology.{name} must be >= 1")
        if self.zombies_total < 0:
            raise ConfigError("topology.zombies_total must be >= 0")
        if self.edge_routers < 1:
            raise ConfigError("topology.edge_routers must be >= 1; no edge can carry traffic")
        if not 1 <= self.victim_domain <= self.transit_domains:
            raise ConfigError(
                f"topology.victim_domain must be in 1..{self.transit_domains}"
            )


@dataclass(frozen=True)
class Topology:
    spec: TopologySpec
    seed: int
    clients: tuple[str, ...]
    zombies: tuple[str, ...]
    edges: tuple[str, ...]
    stub_of: dict[str, tuple[int, int]]
    edge_of_stub: dict[tuple[int, int], str]
    victim: str = "server"

    @property
    def endpoints(self) -> tuple[str, ...]:
        return self.clients + self.zombies

    def edge_of(self, endpoint: str) -> str:
        return self.edge_of_stub[self.stub_of[endpoint]]

    def route(self, endpoint: str) -> tuple[str, str, str]:
        return endpoint, self.edge_of(endpoint), self.victim

    def routing_map(self) -> dict[str, str]:
        return {e: self.edge_of(e) for e in self.endpoints}


def build_topology(spec: TopologySpec, seed: int = 0) -> Topology:
    """Home every client and zombie in a stub domain, and each stub on an edge.

    Stub domains are shuffled and dealt round-robin to the edge routers, so
    edge load is balanced when stubs outnumber edges.
    """
    spec.validate()
    rng = np.random.default_rng(seed)
    stubs = [
        (t, s)
        for t in range(1, spec.transit_domains + 1)
        for s in range(1, spec.stub_domains_per_transit + 1)
    ]
    edges = tuple(f"e{k:02d}" for k in range(spec.edge_routers))
    order = rng.permutation(len(stubs))
    edge_of_stub = {stubs[i]: edges[k % len(edges)] for k, i in enumerate(order)}

    clients = tuple(f"c{i:04d}" for i in range(spec.clients_total))
    zombies = tuple(f"z{i:04d}" for i in range(spec.zombies_total))
    picks = rng.integers(0, len(stubs), size=len(clients) + len(zombies))
    stub_of = {ep: stubs[int(p)] for ep, p in zip(clients + zombies, picks)}
    return Topology(spec, seed, clients, zombies, edges, stub_of, edge_of_stub)


@dataclass(frozen=True)
class ScenarioSpec:
    duration_s: float = 75.0
    attack_start_s: float = 25.0
    attack_end_s: float = 50.0
    attack_mode: str = "constant_high"
    attack_rate_mbps: float = 3.0
    client_request_rate: float = 0.2
    client_flow_bytes: int = 125_000
    client_flow_rate_mbps: float = 1.0
    victim_capacity_mbps: float = 150.0
    rng_seed: int = 1
    k_sustain: int = 3
    legit_backoff: bool = True
    varied_period_s: float = 1.0
    legit_packet_bytes: int = 1000
    attack_packet_bytes: int = 1024

    def validate(self) -> None:
        if self.attack_mode not in ATTACK_MODES:
            raise ConfigError(f"scenario.attack_mode must be one of {ATTACK_MODES}")
        if not 0 <= self.attack_start_s < self.attack_end_s <= self.duration_s:
            raise ConfigError(
                "scenario requires 0 <= attack_start_s < attack_end_s <= duration_s"
            )
        for name in (
            "attack_rate_mbps",
            "client_flow_rate_mbps",
            "victim_capacity_mbps",
            "varied_period_s",
        ):
            if not getattr(self, name) > 0:
                raise ConfigError(f"scenario.{name} must be positive")
        if self.client_request_rate < 0:
            raise ConfigError("scenario.client_request_rate must be >= 0")
        if self.client_flow_bytes < 1:
            raise ConfigError("scenario.client_flow_bytes must be >= 1")
        if self.k_sustain < 1:
            raise ConfigError("scenario.k_sustain must be >= 1")
        if self.legit_packet_bytes < 1 or self.attack_packet_bytes < 1:
            raise ConfigError("packet sizes must be >= 1 byte")
        lo, hi = PAPER_RATE_RANGE_MBPS
        if self.attack_mode.startswith("constant") and not lo <= self.attack_rate_mbps <= hi:
            warnings.warn(
                f"attack_rate_mbps={self.attack_rate_mbps} is outside {lo}-{hi} Mbps",
                stacklevel=2,
            )


@dataclass
class LabeledTrace:
    delta_ms: float
    victim_windows: list[WindowStats]
    edge_windows: dict[str, list[WindowStats]]
    truth: list[bool]
    t_a_ms: float | None
    t_b_ms: float | None
    attack_end_ms: float | None
    offered_bytes: np.ndarray
    attack_bytes: np.ndarray
    records: list[FlowRecord] = field(repr=False, default_factory=list)
    edge_of_flow: dict[str, str] = field(repr=False, default_factory=dict)

    @property
    def n_windows(self) -> int:
        return len(self.victim_windows)

    def edge_records(self, edge: str) -> list[FlowRecord]:
        return [r for r in self.records if self.edge_of_flow[r.flow_id] == edge]


def _legit_bytes(topo: Topology, sc: ScenarioSpec, rng, edges_ms) -> np.ndarray:
    n_win = len(edges_ms) - 1
    duration_ms = sc.duration_s * 1000.0
    rate_bpms = sc.client_flow_rate_mbps * 1e6 / 8 / 1000.0
    transfer_ms = sc.client_flow_bytes / rate_bpms
    out = np.zeros((len(topo.clients), n_win))
    if sc.client_request_rate == 0:
        return out
    mean_gap_ms = 1000.0 / sc.client_request_rate
    expected = duration_ms / mean_gap_ms
    chunk = int(expected + 10 * math.sqrt(expected) + 10)
    span = int(math.ceil(transfer_ms / (edges_ms[1] - edges_ms[0]))) + 1
    delta = edges_ms[1] - edges_ms[0]
    for c in range(len(topo.clients)):
        arrivals = np.cumsum(rng.exponential(mean_gap_ms, size=chunk))
        while arrivals[-1] < duration_ms:
            more = np.cumsum(rng.exponential(mean_gap_ms, size=chunk)) + arrivals[-1]
            arrivals = np.concatenate([arrivals, more])
        starts = arrivals[arrivals < duration_ms]
        if starts.size == 0:
            continue
        ends = np.minimum(starts + transfer_ms, duration_ms)
        first = np.floor(starts / delta).astype(int)
        cols = first[:, None] + np.arange(span)[None, :]
        valid = cols < n_win
        cols_c = np.where(valid, cols, 0)
        lo = np.maximum(starts[:, None], edges_ms[cols_c])
        hi = np.minimum(ends[:, None], edges_ms[cols_c + 1])
        ms = np.where(valid, np.clip(hi - lo, 0.0, None), 0.0)
        np.add.at(out[c], cols_c.ravel(), (ms * rate_bpms).ravel())
    return out


def _attack_bytes(topo: Topology, sc: ScenarioSpec, rng, edges_ms) -> np.ndarray:
    n_win = len(edges_ms) - 1
    out = np.zeros((len(topo.zombies), n_win))
    if sc.attack_mode == "none" or not topo.zombies:
        return out
    t_a = sc.attack_start_s * 1000.0
    t_e = sc.attack_end_s * 1000.0
    if sc.attack_mode == "varied":
        period = sc.varied_period_s * 1000.0
        bounds = np.append(np.arange(t_a, t_e, period), t_e)
        lo, hi = PAPER_RATE_RANGE_MBPS
        rates = rng.uniform(lo, hi, size=(len(topo.zombies), len(bounds) - 1))
    else:
        bounds = np.array([t_a, t_e])
        rates = np.full((len(topo.zombies), 1), sc.attack_rate_mbps)
    bpms = rates * 1e6 / 8 / 1000.0
    # cumulative bytes at every rate-change point, then interpolate at window edges
    cum = np.concatenate(
        [np.zeros((len(topo.zombies), 1)), np.cumsum(bpms * np.diff(bounds), axis=1)], axis=1
    )
    for z in range(len(topo.zombies)):
        at_edges = np.interp(edges_ms, bounds, cum[z])
        out[z] = np.diff(at_edges)
    return out


def _records_from_matrix(flow_ids, matrix, edges_ms, packet_bytes) -> list[FlowRecord]:
    rows, cols = np.nonzero(matrix)
    recs = []
    for r, c in zip(rows.tolist(), cols.tolist()):
        b = int(matrix[r, c])
        recs.append(FlowRecord(float(edges_ms[c + 1]), flow_ids[r], b, -(-b // packet_bytes)))
    return recs


def first_sustained_run(over: np.ndarray, k: int) -> int | None:
    """0-based index of the window completing the first run of ``k`` True values."""
    run = 0
    for i, flag in enumerate(over.tolist()):
        run = run + 1 if flag else 0
        if run >= k:
            return i
    return None


def overwhelm_time(
    trace: LabeledTrace, victim_capacity_mbps: float, k_sustain: int = 3
) -> float | None:
    """End time of the window that completes ``k_sustain`` over-capacity windows."""
    if k_sustain < 1:
        raise ValueError("k_sustain must be >= 1")
    load_mbps = np.asarray(trace.offered_bytes, dtype=float) * 8 / (trace.delta_ms * 1000.0)
    i = first_sustained_run(load_mbps > victim_capacity_mbps, k_sustain)
    return None if i is None else (i + 1) * trace.delta_ms


def run_scenario(
    topology: Topology, scenario: ScenarioSpec, windowing: WindowingConfig | None = None
) -> LabeledTrace:
    scenario.validate()
    windowing = windowing or WindowingConfig()
    delta = windowing.delta_ms
    n_win = int(math.ceil(scenario.duration_s * 1000.0 / delta))
    edges_ms = np.arange(n_win + 1) * delta

    # separate streams: legitimate traffic must not depend on attack draws
    legit_rng, attack_rng = (
        np.random.default_rng(s)
        for s in np.random.SeedSequence(scenario.rng_seed).spawn(2)
    )
    legit = _legit_bytes(topology, scenario, legit_rng, edges_ms)
    attack = _attack_bytes(topology, scenario, attack_rng, edges_ms)

    legit_total = legit.sum(axis=0)
    attack_total = attack.sum(axis=0)
    offered = legit_total + attack_total
    if scenario.legit_backoff:
        cap = scenario.victim_capacity_mbps * 1e6 / 8 * delta / 1000.0
        over = offered > cap
        share = np.ones(n_win)
        room = np.clip(cap - attack_total, 0.0, None)
        np.divide(room, legit_total, out=share, where=over & (legit_total > 0))
        legit = legit * np.minimum(share, 1.0)[None, :]
    legit_int = np.rint(legit)
    attack_int = np.rint(attack)

    records = _records_from_matrix(topology.clients, legit_int, edges_ms, scenario.legit_packet_bytes)
    records += _records_from_matrix(topology.zombies, attack_int, edges_ms, scenario.attack_packet_bytes)
    records.sort(key=lambda r: (r.timestamp, r.flow_id))

    edge_of_flow = topology.routing_map()
    per_edge: dict[str, list[FlowRecord]] = {e: [] for e in topology.edges}
    for rec in records:
        per_edge[edge_of_flow[rec.flow_id]].append(rec)

    victim_windows = window_partition(records, windowing, n_windows=n_win)
    edge_windows = {
        e: window_partition(recs, windowing, n_windows=n_win) for e, recs in per_edge.items()
    }

    attacking = scenario.attack_mode != "none" and bool(topology.zombies)
    if attacking:
        t_a = scenario.attack_start_s * 1000.0
        t_e = scenario.attack_end_s * 1000.0
        truth = [bool(hi > t_a and lo < t_e) for lo, hi in zip(edges_ms[:-1], edges_ms[1:])]
    else:
        t_a = t_e = None
        truth = [False] * n_win

    trace = LabeledTrace(
        delta_ms=delta,
        victim_windows=victim_windows,
        edge_windows=edge_windows,
        truth=truth,
        t_a_ms=t_a,
        t_b_ms=None,
        attack_end_ms=t_e,
        offered_bytes=np.rint(offered),
        attack_bytes=attack_int.sum(axis=0),
        records=records,
        edge_of_flow=edge_of_flow,
    )
    trace.t_b_ms = overwhelm_time(trace, scenario.victim_capacity_mbps, scenario.k_sustain)
    return trace


def training_scenario(scenario: ScenarioSpec, salt: int = 0x5EED) -> ScenarioSpec:
    """Attack-free companion run with an independent legitimate-traffic stream."""
    return replace(scenario, attack_mode="none", rng_seed=scenario.rng_seed * 1_000_003 + salt)


def scenario_to_dict(sc: ScenarioSpec) -> dict:
    return asdict(sc)
