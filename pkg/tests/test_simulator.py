from dataclasses import replace

import numpy as np
import pytest

from ddosguard.flow_model import WindowingConfig
from ddosguard.simulator import (
    ConfigError,
    LabeledTrace,
    ScenarioSpec,
    TopologySpec,
    build_topology,
    first_sustained_run,
    overwhelm_time,
    run_scenario,
)

SMALL = TopologySpec(clients_total=60, zombies_total=20, edge_routers=4)
SHORT = ScenarioSpec(duration_s=12, attack_start_s=4, attack_end_s=8, rng_seed=5)


def test_topology_homes_every_endpoint_once():
    spec = TopologySpec(transit_domains=4, stub_domains_per_transit=2, clients_total=400,
                        zombies_total=100)
    topo = build_topology(spec, seed=7)
    routes = topo.routing_map()
    assert len(routes) == 500
    assert set(routes.values()) <= set(topo.edges)
    for ep in topo.endpoints:
        assert topo.route(ep) == (ep, routes[ep], "server")
    again = build_topology(spec, seed=7)
    assert again.routing_map() == routes and again.edge_of_stub == topo.edge_of_stub


def test_minimal_topology():
    topo = build_topology(TopologySpec(1, 1, 1, 0, 1, 1), seed=0)
    assert topo.routing_map() == {"c0000": "e00"}


def test_different_seeds_give_different_assignments():
    spec = TopologySpec(transit_domains=4, stub_domains_per_transit=2, clients_total=400,
                        zombies_total=100)
    assert build_topology(spec, 7).routing_map() != build_topology(spec, 8).routing_map()


@pytest.mark.parametrize(
    "spec", [TopologySpec(edge_routers=0), TopologySpec(clients_total=0),
             TopologySpec(victim_domain=5), TopologySpec(zombies_total=-1)]
)
def test_invalid_topology(spec):
    with pytest.raises(ConfigError):
        build_topology(spec)


@pytest.mark.parametrize(
    "sc",
    [ScenarioSpec(attack_start_s=50, attack_end_s=25), ScenarioSpec(attack_mode="pulse"),
     ScenarioSpec(attack_end_s=80), ScenarioSpec(k_sustain=0), ScenarioSpec(victim_capacity_mbps=0)],
)
def test_invalid_scenario(sc):
    with pytest.raises(ConfigError):
        sc.validate()


def test_out_of_range_rate_warns():
    with pytest.warns(UserWarning):
        ScenarioSpec(attack_rate_mbps=10).validate()


def _volumes(windows):
    return np.array([w.volume_bytes for w in windows])


def test_normal_run_has_no_truth():
    trace = run_scenario(build_topology(SMALL, 1), replace(SHORT, attack_mode="none"))
    assert not any(trace.truth)
    assert trace.t_a_ms is None and trace.t_b_ms is None
    assert not trace.attack_bytes.any()
    assert _volumes(trace.victim_windows).mean() > 0


def test_baseline_is_stable():
    topo = build_topology(TopologySpec(clients_total=400), 1)
    trace = run_scenario(topo, ScenarioSpec(attack_mode="none", rng_seed=1))
    vol = _volumes(trace.victim_windows)
    first, second = vol[: len(vol) // 2], vol[len(vol) // 2 :]
    # 400 clients * 0.2 transfers/s * 1 Mb -> 80 Mbps -> 2 MB per 200 ms window
    assert vol.mean() == pytest.approx(2.0e6, rel=0.1)
    assert abs(first.mean() - second.mean()) < 0.1 * vol.mean()


def test_run_is_deterministic():
    topo = build_topology(SMALL, 3)
    a, b = run_scenario(topo, SHORT), run_scenario(topo, SHORT)
    assert a.records == b.records and a.truth == b.truth
    assert [w.per_flow_bytes for w in a.victim_windows] == [w.per_flow_bytes for w in b.victim_windows]
    assert all(
        [w.per_flow_bytes for w in a.edge_windows[e]] == [w.per_flow_bytes for w in b.edge_windows[e]]
        for e in topo.edges
    )


def test_truth_covers_attack_interval():
    trace = run_scenario(build_topology(SMALL, 1), SHORT)
    on = [i + 1 for i, t in enumerate(trace.truth) if t]
    # (4000, 4200] .. (7800, 8000]
    assert on == list(range(21, 41))
    assert trace.t_a_ms == 4000 and trace.attack_end_ms == 8000


@pytest.mark.parametrize("mode", ["constant_high", "constant_low", "varied", "none"])
def test_victim_is_union_of_edges(mode):
    topo = build_topology(SMALL, 2)
    trace = run_scenario(topo, replace(SHORT, attack_mode=mode, attack_rate_mbps=0.5))
    for i, w in enumerate(trace.victim_windows):
        edge_ws = [trace.edge_windows[e][i] for e in topo.edges]
        assert w.volume_bytes == sum(ew.volume_bytes for ew in edge_ws)
        union = set()
        for ew in edge_ws:
            assert not union & set(ew.per_flow_bytes)
            union |= set(ew.per_flow_bytes)
        assert union == set(w.per_flow_bytes)


@pytest.mark.parametrize("zombies, rate, per_window", [(100, 3.0, 7_500_000), (100, 0.1, 250_000)])
def test_attack_increment_matches_rate_arithmetic(zombies, rate, per_window):
    topo = build_topology(TopologySpec(clients_total=50, zombies_total=zombies), 4)
    base = ScenarioSpec(duration_s=60, attack_rate_mbps=rate, rng_seed=9, legit_backoff=False,
                        attack_mode="constant_low" if rate < 1 else "constant_high")
    attacked = run_scenario(topo, base)
    normal = run_scenario(topo, replace(base, attack_mode="none"))
    diff = _volumes(attacked.victim_windows) - _volumes(normal.victim_windows)
    truth = np.array(attacked.truth)
    np.testing.assert_array_equal(diff, attacked.attack_bytes)
    np.testing.assert_array_equal(diff[truth], per_window)
    assert not diff[~truth].any()
    flows_gain = np.array([a.flow_count - n.flow_count for a, n in
                           zip(attacked.victim_windows, normal.victim_windows)])
    assert flows_gain[truth].max() <= zombies and flows_gain[truth].min() > 0


def test_varied_rate_stays_in_range():
    topo = build_topology(TopologySpec(clients_total=10, zombies_total=30), 4)
    sc = ScenarioSpec(duration_s=60, attack_mode="varied", rng_seed=2, legit_backoff=False)
    trace = run_scenario(topo, sc)
    per_zombie = trace.attack_bytes[np.array(trace.truth)] / 30
    lo, hi = 0.1e6 / 8 * 0.2, 3.5e6 / 8 * 0.2
    assert per_zombie.min() >= lo - 1 and per_zombie.max() <= hi + 1
    assert per_zombie.std() > 0


def test_backoff_only_reduces_legitimate_traffic():
    topo = build_topology(TopologySpec(clients_total=100, zombies_total=50), 1)
    sc = ScenarioSpec(rng_seed=1)
    capped = run_scenario(topo, sc)
    free = run_scenario(topo, replace(sc, legit_backoff=False))
    assert (_volumes(capped.victim_windows) <= _volumes(free.victim_windows)).all()
    np.testing.assert_array_equal(capped.attack_bytes, free.attack_bytes)


def test_delta_is_configurable():
    trace = run_scenario(build_topology(SMALL, 1), SHORT, WindowingConfig(delta_ms=500))
    assert trace.n_windows == 24 and trace.victim_windows[-1].window_end == 12_000


def _load_trace(loads_mbps, delta=200.0):
    bytes_ = np.asarray(loads_mbps, dtype=float) * 1e6 / 8 * delta / 1000
    return LabeledTrace(delta, [], {}, [], None, None, None, bytes_, np.zeros(len(bytes_)))


def test_overwhelm_never():
    assert overwhelm_time(_load_trace([5] * 300), 10, 3) is None


def test_overwhelm_after_sustained_run():
    loads = [5] * 129 + [12] * 20
    assert overwhelm_time(_load_trace(loads), 10, 3) == 132 * 200


def test_single_spike_is_not_overwhelm():
    loads = [5] * 50 + [12] + [5] * 50
    assert overwhelm_time(_load_trace(loads), 10, 3) is None
    assert overwhelm_time(_load_trace(loads), 10, 1) == 51 * 200


def test_load_equal_to_capacity_is_not_over():
    assert first_sustained_run(np.array([False, True, True]), 3) is None
    assert overwhelm_time(_load_trace([10] * 10), 10, 1) is None


def test_overwhelm_follows_onset():
    topo = build_topology(TopologySpec(clients_total=100, zombies_total=50), 1)
    trace = run_scenario(topo, ScenarioSpec(rng_seed=4))
    assert trace.t_b_ms is not None and trace.t_a_ms < trace.t_b_ms
    assert trace.t_b_ms == 25_600
