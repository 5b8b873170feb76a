import json

import pytest

import sybilsim as ss

DIAMOND = {
    "nodes": [{"id": n, "x": x, "y": y} for n, x, y in
              [("S", 0, 0), ("A", 100, 0), ("B", 200, 50), ("C", 200, -50),
               ("D", 300, 0), ("T", 400, 0)]],
    "edges": [
        {"id": "SA", "from": "S", "to": "A", "length": 100, "lanes": 1, "speed_limit": 10},
        {"id": "AB", "from": "A", "to": "B", "length": 100, "lanes": 1, "speed_limit": 10},
        {"id": "BD", "from": "B", "to": "D", "length": 100, "lanes": 1, "speed_limit": 10},
        {"id": "AC", "from": "A", "to": "C", "length": 150, "lanes": 1, "speed_limit": 10},
        {"id": "CD", "from": "C", "to": "D", "length": 150, "lanes": 1, "speed_limit": 10},
        {"id": "DT", "from": "D", "to": "T", "length": 100, "lanes": 1, "speed_limit": 10},
    ],
}


@pytest.fixture
def diamond():
    return ss.parse_network(json.dumps(DIAMOND))


def victim(role="nmcs-user"):
    return {"id": "victim", "depart": 0, "origin": "SA", "destination": "DT", "role": role}


def test_network_round_trip(diamond):
    assert diamond.node_count == 6
    assert diamond.edge_count == 6
    again = ss.parse_network(diamond.to_json())
    assert again.edge_ids() == diamond.edge_ids()
    assert diamond.edge("AC")["length"] == 150


def test_bad_network_raises():
    with pytest.raises(ValueError):
        ss.parse_network('{"nodes": [], "edges": [{"id": "x"}]}')


def test_shortest_path_and_blocking(diamond):
    edges, total = ss.shortest_path(diamond, "S", "T")
    assert edges == ["SA", "AB", "BD", "DT"]
    assert total == pytest.approx(40.0)
    times = diamond.free_flow_times()
    times[diamond.edge_ids().index("AB")] = float("inf")
    edges, total = ss.shortest_path(diamond, "S", "T", times)
    assert edges == ["SA", "AC", "CD", "DT"]
    assert ss.shortest_path(diamond, "T", "S") is None


def test_betweenness(diamond):
    nodes, edges = ss.betweenness_centrality(diamond)
    # A lies on S->B, S->C, S->D, S->T.
    assert nodes["A"] == pytest.approx(4.0)
    assert edges["AB"] > edges["AC"]


def test_window_mean_of_cell_means():
    w = ss.EdgeSpeedWindow(1, 300)
    assert w.ingest(0, "a", 4.0, 0) == "accepted"
    assert w.ingest(0, "b", 8.0, 0) == "accepted"
    assert w.ingest(0, "a", 2.0, 1) == "accepted"
    assert w.mean_of_cell_means(0) == pytest.approx((6.0 + 2.0) / 2)
    w.advance_to(300)
    assert w.mean_of_cell_means(0) == pytest.approx(2.0)


def test_attack_detours_victim(diamond):
    base = ss.run_simulation(diamond, [victim()])
    assert base.conserved
    route = {v["id"]: v["route"] for v in base.vehicles()}["victim"]
    assert route == ["SA", "AB", "BD", "DT"]

    attack = ss.AttackSpec(["AB"], start=0, duration=120, sybil_speed=0.5)
    hit = ss.run_simulation(diamond, [victim()], attack)
    route = {v["id"]: v["route"] for v in hit.vehicles()}["victim"]
    assert route == ["SA", "AC", "CD", "DT"]
    assert hit.sybils["total_spawned"] > 0
    assert hit.stats["gap_violations"] == 0

    report = ss.compute_impact(base, hit, attack)
    assert report["affected"] == 1
    assert report["did_not_enter"] == ["victim"]
    assert report["median_travel_time_pct"] > 0


def test_strength_search(diamond):
    r = ss.minimal_strength_search(diamond, victim(), ["AB"], counts=[1, 2], speeds=[0.5, 9.0])
    assert r["min_count"] == 1
    assert r["success"][0] == [True, False]


def test_scenario_pipeline(tmp_path):
    cfg = ss.parse_scenario(json.dumps({
        "seed": 5,
        "network": {"grid": {"rows": 4, "cols": 4, "edge_length": 150}},
        "demand": {"synthetic": {"n_vehicles": 80, "depart_window": 300}},
        "sweep": {"auto_targets": 1, "durations": [300], "profiles": ["evening"],
                  "attack_start": 60, "max_active_per_target": 4, "jobs": 1},
    }))
    assert len(cfg.config_hash()) == 16
    net = ss.build_network(cfg)
    demand = ss.build_demand(cfg, net)
    assert len(demand) == 80
    assert {d["role"] for d in demand} <= {"nmcs-user", "benign-non-user"}
    targets = ss.select_targets(net, 2)
    assert len(targets) == 2
    result = ss.run_sweep(cfg, net)
    assert len(result["cells"]) == 1
    assert result["cells"][0]["error"] == ""
    run = ss.run_simulation(net, demand, horizon=3600)
    run.write(tmp_path / "run")
    assert (tmp_path / "run" / "traces.csv").exists()


def test_config_errors():
    with pytest.raises(ss.ConfigError):
        ss.parse_scenario('{"sed": 1}')
