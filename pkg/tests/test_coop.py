import json
from dataclasses import replace

import numpy as np
import pytest

from ddosguard.coop import (
    CoopConfig,
    CoopProfiles,
    EdgeDetector,
    EdgeNetwork,
    EdgeSummary,
    ProtocolError,
    RoutingError,
    StaleWindowError,
    SuspiciousAlarm,
    central_step,
    local_detect,
    merge_flow_lists,
    run_coop_simulation,
    train_coop_profiles,
)
from ddosguard.detector import DetectorConfig, NormalProfile, compute_thresholds, detect_window
from ddosguard.flow_model import FLOW, VOLUME, WindowStats
from ddosguard.simulator import LabeledTrace, ScenarioSpec, TopologySpec, build_topology, run_scenario


def prof(mv, sv, mf, sf):
    return NormalProfile((VOLUME, FLOW), (mv, mf), (sv, sf), 50, 200.0)


def window(flows: dict, index=1):
    return WindowStats(index, index * 200.0, flows)


def flows(prefix, n, each=100):
    return {f"{prefix}{i}": each for i in range(n)}


EDGE = prof(1000, 50, 10, 2)  # local thresholds 300 B / 12 flows at r = 6


# --- local detector -------------------------------------------------------------

def test_no_alarm_without_deviation():
    assert local_detect(window(flows("a", 10)), EDGE, CoopConfig()) is None


def test_volume_alarm_carries_flow_list():
    w = window(flows("a", 10, 160))  # 1600 B, deviation 600 = 2x threshold
    sa = local_detect(w, EDGE, CoopConfig(), "e01")
    assert sa.triggered_measures == {VOLUME}
    assert sa.detector_id == "e01" and sa.window_index == 1
    assert sa.active_flows == tuple(sorted(w.per_flow_bytes))
    assert sa.measures == (1600, 10)


def test_diluted_attack_stays_under_every_local_threshold():
    # each edge gets 6 extra flows (0.5 x the 12-flow threshold) and 150 extra bytes
    edges = [window({**flows(f"c{e}_", 10), **flows(f"z{e}_", 6, 25)}) for e in range(10)]
    assert all(local_detect(w, EDGE, CoopConfig()) is None for w in edges)


def test_alarm_requires_triggered_measure():
    with pytest.raises(ProtocolError):
        SuspiciousAlarm("e", 1, (0, 0), (), frozenset())


# --- flow list merge -------------------------------------------------------------

def test_merge_examples():
    assert merge_flow_lists([{"A", "B", "C"}, {"B", "C", "D"}]) == 4
    assert merge_flow_lists([]) == 0
    assert merge_flow_lists([set(), set()]) == 0
    assert merge_flow_lists([["a", "b", "c"], ["d", "e", "f", "g", "h"]]) == 8


# --- queries ---------------------------------------------------------------------

def test_query_retention():
    det = EdgeDetector("e00", EDGE, CoopConfig(retention=16))
    for i in range(1, 21):
        det.observe(window(flows("a", 10), i))
    net = EdgeNetwork([det])
    assert net.query_local("e00", 20).stats.window_index == 20
    assert net.query_local("e00", 5).stats.window_index == 5
    with pytest.raises(StaleWindowError):
        net.query_local("e00", 20 - 16 - 1)
    with pytest.raises(RoutingError):
        net.query_local("e99", 20)
    assert det.max_retained == 16


@pytest.fixture(scope="module")
def small_traces():
    topo = build_topology(TopologySpec(clients_total=80, zombies_total=40, edge_routers=5), 11)
    sc = ScenarioSpec(duration_s=20, attack_start_s=8, attack_end_s=14, rng_seed=11,
                      attack_mode="constant_high", attack_rate_mbps=2.0)
    attack = run_scenario(topo, sc)
    normal = run_scenario(topo, replace(sc, attack_mode="none", rng_seed=999))
    return topo, attack, normal


def test_queried_flow_lists_reproduce_victim_count(small_traces):
    topo, trace, _ = small_traces
    dets = [EdgeDetector(e, EDGE, CoopConfig(retention=200)) for e in topo.edges]
    for i in range(trace.n_windows):
        for d in dets:
            d.observe(trace.edge_windows[d.detector_id][i])
    net = EdgeNetwork(dets)
    for w in trace.victim_windows:
        lists = [net.query_local(e, w.window_index).active_flows for e in topo.edges]
        assert merge_flow_lists(lists) == w.flow_count


# --- central step ----------------------------------------------------------------

CENTRAL = prof(10_000, 500, 100, 5)  # thresholds 3000 B / 30 flows


def _summaries(windows, index=1):
    return [EdgeSummary(f"e{k:02d}", index, w.volume_bytes, w.flow_count) for k, w in enumerate(windows)]


def _sa(edge, w, index=1):
    return SuspiciousAlarm(edge, index, w.measures, tuple(w.active_flows), frozenset({VOLUME}))


def test_quorum_confirms():
    ws = [window(flows(f"e{k}_", 10)) for k in range(8)]
    sas = [_sa(f"e{k:02d}", ws[k]) for k in range(5)]
    v = central_step(1, _summaries(ws), sas, CENTRAL, CoopConfig(sa_threshold=3))
    assert v.confirmed and v.via == "sa_quorum" and v.sa_count == 5


def test_quiet_network_is_not_confirmed():
    ws = [window(flows(f"e{k}_", 10)) for k in range(10)]  # exactly the central mean
    v = central_step(1, _summaries(ws), [], CENTRAL, CoopConfig())
    assert not v.confirmed and v.via is None and v.sa_count == 0


def _diluted():
    return [window({**flows(f"c{e}_", 10), **flows(f"z{e}_", 6, 25)}) for e in range(10)]


def test_diluted_attack_confirmed_through_queries():
    ws = _diluted()
    net = {f"e{k:02d}": w for k, w in enumerate(ws)}
    log = []

    def query(edge, idx):
        from ddosguard.coop import QueryResponse

        return QueryResponse(edge, idx, net[edge])

    v = central_step(1, _summaries(ws), [], CENTRAL, CoopConfig(), query, log)
    assert v.confirmed and v.via == "query_confirmed"
    assert v.merged_flow_count == 160 and v.queried == tuple(sorted(net))
    assert [m["type"] for m in log[:2]] == ["query", "resp"]

    # single-point detector on the union of all edges agrees
    union = window({k: b for w in ws for k, b in w.per_flow_bytes.items()})
    thr = compute_thresholds(CENTRAL, DetectorConfig.uniform(6))
    assert detect_window(union, CENTRAL, thr).is_attack


def test_query_path_disabled():
    ws = _diluted()
    v = central_step(1, _summaries(ws), [], CENTRAL, CoopConfig(query_on=False))
    assert not v.confirmed


def test_partial_data_check_confirms_without_queries():
    ws = [window(flows(f"e{k}_", 10)) for k in range(10)]
    ws[0] = window(flows("e0_", 10, 600))  # +5000 B, above the 3000 B central threshold
    sas = [_sa("e00", ws[0])]
    v = central_step(1, _summaries(ws), sas, CENTRAL, CoopConfig(sa_threshold=3))
    assert v.confirmed and v.via == "central_check" and v.queried == ()


def test_mixed_window_indices_rejected():
    ws = [window(flows("a", 10))]
    sa = _sa("e00", ws[0], index=2)
    with pytest.raises(ProtocolError):
        central_step(1, _summaries(ws), [sa], CENTRAL, CoopConfig())


def test_default_quorum_scales_with_edges():
    assert CoopConfig().quorum(8) == 2 and CoopConfig().quorum(10) == 3
    assert CoopConfig(sa_threshold=5).quorum(8) == 5


# --- full runs -------------------------------------------------------------------

def test_normal_run_is_silent(small_traces):
    topo, _, normal = small_traces
    normal_sc = ScenarioSpec(duration_s=20, attack_start_s=8, attack_end_s=14, attack_mode="none")
    quiet = run_scenario(topo, replace(normal_sc, rng_seed=12))
    res = run_coop_simulation(quiet, CoopConfig(), train_coop_profiles(normal))
    assert res.report.sas_sent == 0
    assert res.report.queries_issued == 0
    assert not any(res.alarms)


def test_high_rate_run_confirms_no_later_than_single_point(small_traces):
    _, attack, normal = small_traces
    profiles = train_coop_profiles(normal)
    res = run_coop_simulation(attack, CoopConfig(), profiles)
    thr = compute_thresholds(profiles.central, DetectorConfig.uniform(6))
    single = next(w.window_index for w in attack.victim_windows
                  if detect_window(w, profiles.central, thr).is_attack)
    assert res.report.first_confirmation_window <= single


def test_full_merge_matches_single_point_verdicts(small_traces):
    _, attack, normal = small_traces
    profiles = train_coop_profiles(normal)
    no_quorum = CoopConfig(sa_threshold=len(attack.edge_windows) + 1)
    res = run_coop_simulation(attack, no_quorum, profiles)
    thr = compute_thresholds(profiles.central, DetectorConfig.uniform(6))
    single = [detect_window(w, profiles.central, thr).is_attack for w in attack.victim_windows]
    assert res.alarms == single


def _diluted_trace(n_edges=10, windows=40, attack_from=20):
    """Per-edge sub-threshold low-rate attack: 6 extra flows on every edge."""
    rng = np.random.default_rng(0)
    edge_windows = {f"e{k:02d}": [] for k in range(n_edges)}
    victim = []
    for i in range(1, windows + 1):
        union = {}
        for k, e in enumerate(edge_windows):
            n = 10 + int(rng.integers(-1, 2))
            fl = flows(f"c{k}_", n)
            if i >= attack_from:
                fl.update(flows(f"z{k}_", 6, 25))
            edge_windows[e].append(window(fl, i))
            union.update(fl)
        victim.append(window(union, i))
    truth = [i >= attack_from for i in range(1, windows + 1)]
    vol = np.array([w.volume_bytes for w in victim], dtype=float)
    return LabeledTrace(200.0, victim, edge_windows, truth, None, None, None, vol, np.zeros(windows))


def test_diluted_run_confirmed_only_through_queries():
    trace = _diluted_trace()
    profiles = CoopProfiles(central=CENTRAL, edges={e: EDGE for e in trace.edge_windows})
    res = run_coop_simulation(trace, CoopConfig(), profiles)
    assert res.report.sas_sent == 0
    assert all(v.sa_count < CoopConfig().quorum(10) for v in res.verdicts)
    confirmed = {v.via for v in res.verdicts if v.confirmed}
    assert confirmed == {"query_confirmed"}
    assert res.report.first_confirmation_window == 20
    assert res.report.queries_issued == 10 * 21


def test_quorum_monotonicity(small_traces):
    _, attack, normal = small_traces
    profiles = train_coop_profiles(normal)
    previous = None
    for k in range(1, 7):
        res = run_coop_simulation(attack, CoopConfig(sa_threshold=k), profiles)
        quorum = {v.window_index for v in res.verdicts if v.via == "sa_quorum"}
        if previous is not None:
            assert quorum <= previous
        previous = quorum


def test_overhead_bounded_by_window_state(small_traces):
    _, attack, normal = small_traces
    res = run_coop_simulation(attack, CoopConfig(retention=8), train_coop_profiles(normal))
    n_edges = len(attack.edge_windows)
    assert res.report.max_central_state <= n_edges + max(w.flow_count for w in attack.victim_windows)
    assert max(res.report.edge_retained_windows.values()) == 8
    assert res.report.summaries_sent == n_edges * attack.n_windows


def test_edge_without_deviation_never_alarms():
    trace = _diluted_trace(attack_from=10**6)
    quiet = prof(0, 0, 0, 0)
    steady = {e: [window({}, i + 1) for i in range(40)] for e in trace.edge_windows}
    trace.edge_windows = steady
    res = run_coop_simulation(trace, CoopConfig(), CoopProfiles(CENTRAL, {e: quiet for e in steady}))
    assert res.report.sas_sent == 0


def test_messages_serialise_as_json_lines(small_traces):
    _, attack, normal = small_traces
    res = run_coop_simulation(attack, CoopConfig(), train_coop_profiles(normal))
    lines = res.messages_jsonl().splitlines()
    docs = [json.loads(line) for line in lines]
    assert {d["type"] for d in docs} >= {"summary", "sa"}
    for d in docs:
        assert set(d) == {"type", "detector_id", "window_index", "measures", "flows"}


def test_training_on_attack_trace_rejected(small_traces):
    _, attack, _ = small_traces
    with pytest.raises(ValueError):
        train_coop_profiles(attack)
