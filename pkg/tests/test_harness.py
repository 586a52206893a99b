from dataclasses import replace

import pytest

from massim import harness
from massim.injection import Perturbation
from massim.topology import AgentNode, TopologyGraph, canonical_topology


def line_graph(n, entry_modality="textual"):
    nodes = [AgentNode("V1", "edge", entry_modality)]
    nodes += [AgentNode(f"V{i}", "relay") for i in range(2, n)]
    nodes.append(AgentNode(f"V{n}", "executor"))
    edges = [(f"V{i}", f"V{i+1}") for i in range(1, n)]
    return TopologyGraph(nodes, edges, ["V1"], f"V{n}")


def scenario_for(graph, **kw):
    return harness.Scenario(topology=graph, **kw)


def test_build_system_defaults_and_overrides():
    g = canonical_topology("chain")
    system = harness.build_system(g, {"relay": {"susceptibility": 0.5},
                                      "V7": {"fidelity": 0.9}})
    assert system.agents["V2"].susceptibility == 0.5
    assert system.agents["V1"].susceptibility == harness.DEFAULT_SUSCEPTIBILITY
    assert system.agents["V7"].fidelity == 0.9


def test_build_system_unknown_node_rejected():
    g = canonical_topology("chain")
    with pytest.raises(harness.ConfigError):
        harness.build_system(g, {"V99": {"fidelity": 1.0}})


def test_agent_model_validation():
    with pytest.raises(harness.ConfigError):
        harness.AgentModel("a", "relay", "textual", fidelity=1.5)


def test_deterministic_success_when_all_certain():
    g = line_graph(5)
    system = harness.build_system(g, {r: {"susceptibility": 1.0}
                                      for r in ("edge", "relay", "executor")})
    trace = harness.run_trial(system, scenario_for(g), seed=1)
    assert trace.outcome == "executed"
    assert trace.events[-1].kind == "execute"


def test_visual_entry_with_hopeless_hook_is_lost():
    g = line_graph(4, entry_modality="visual")
    system = harness.build_system(g, {r: {"susceptibility": 1.0}
                                      for r in ("edge", "relay", "executor")})
    attack = harness.Attack(hook=Perturbation(0.0, 1000.0))
    trace = harness.run_trial(system, scenario_for(g, attack=attack), seed=1)
    assert trace.outcome == "lost"
    assert trace.final_step == 0


def test_forced_detection_blocks():
    g = line_graph(4)
    system = harness.build_system(g, {r: {"susceptibility": 1.0}
                                      for r in ("edge", "relay", "executor")})
    scen = scenario_for(g, defense_enabled=True, detector_tpr=1.0)
    trace = harness.run_trial(system, scen, seed=1)
    assert trace.outcome == "blocked"
    assert trace.block_step is not None


def test_outcome_exclusivity_and_membership():
    g = canonical_topology("star")
    system = harness.build_system(g)
    scen = scenario_for(g, defense_enabled=True, trial_count=200)
    traceset = harness.run_experiment(system, scen)
    for trace in traceset.traces:
        assert trace.outcome in harness.OUTCOMES
        terminal = [e for e in trace.events if e.kind in
                    ("execute", "refuse", "block")]
        assert len(terminal) <= 1


def test_replay_determinism():
    g = canonical_topology("mesh")
    system = harness.build_system(g)
    scen = scenario_for(g, defense_enabled=True, trial_count=50)
    a = harness.run_experiment(system, scen)
    b = harness.run_experiment(system, scen)
    assert a.digest() == b.digest()
    c = harness.run_experiment(system, replace(scen, rng_seed=43))
    assert c.digest() != a.digest()


def test_executed_fraction_matches_independence_product():
    g = line_graph(5)
    sigma = 0.6
    system = harness.build_system(g, {r: {"susceptibility": sigma}
                                      for r in ("edge", "relay", "executor")})
    scen = scenario_for(g, trial_count=10000)
    traceset = harness.run_experiment(system, scen)
    executed = sum(1 for t in traceset.traces if t.outcome == "executed")
    assert executed / 10000 == pytest.approx(sigma ** 5, abs=0.01)


def test_monotone_hardening_common_random_numbers():
    g = line_graph(5)
    base = {r: {"susceptibility": 0.9} for r in ("edge", "relay", "executor")}
    hardened = dict(base)
    hardened["V3"] = {"susceptibility": 0.5}
    soft = harness.build_system(g, base)
    hard = harness.build_system(g, hardened)
    scen = scenario_for(g)
    for seed in range(500):
        hard_trace = harness.run_trial(hard, scen, seed)
        if hard_trace.outcome == "executed":
            assert harness.run_trial(soft, scen, seed).outcome == "executed"


def test_benign_run_completes():
    g = canonical_topology("chain")
    system = harness.build_system(g)
    scen = scenario_for(g, objective="benign", attack=None)
    trace = harness.run_trial(system, scen, seed=5)
    assert not trace.adversarial
    assert trace.outcome == "executed"


def test_benign_false_positive_rate():
    g = canonical_topology("chain")
    system = harness.build_system(g)
    scen = scenario_for(g, objective="benign", attack=None,
                        defense_enabled=True, trial_count=2000)
    traceset = harness.run_experiment(system, scen)
    flagged = sum(1 for t in traceset.traces if t.flagged)
    assert flagged / 2000 == pytest.approx(scen.detector_fpr, abs=0.015)


def test_resource_summary_fields():
    g = canonical_topology("chain")
    system = harness.build_system(g)
    traceset = harness.run_experiment(system, scenario_for(g, trial_count=20))
    summary = harness.resource_summary(traceset)
    assert set(summary) == {"throughput", "cpu", "memory", "latency"}
    assert summary["throughput"] > 0


def test_defense_overhead_is_positive():
    g = canonical_topology("chain")
    system = harness.build_system(g)
    clean = harness.resource_summary(harness.run_experiment(
        system, scenario_for(g, objective="benign", attack=None, trial_count=50)))
    defended = harness.resource_summary(harness.run_experiment(
        system, scenario_for(g, objective="benign", attack=None,
                             defense_enabled=True, trial_count=50)))
    assert defended["latency"] >= clean["latency"]


def test_scenario_loading(tmp_path):
    topo_path = tmp_path / "g.topo"
    from massim.topology import save_topology
    topo_path.write_text(save_topology(canonical_topology("star")))
    scen_text = f"""
version = 1
topology = "g.topo"
objective = "harmful"
defense = true
trials = 7
seed = 99
directive = "touch /tmp/x"

[propagation]
p = 1.3
delta = 0.8

[agents.relay]
susceptibility = 0.5
"""
    scen_path = tmp_path / "s.toml"
    scen_path.write_text(scen_text)
    scenario, agent_params = harness.load_scenario_file(scen_path)
    assert scenario.defense_enabled
    assert scenario.trial_count == 7
    assert scenario.rng_seed == 99
    assert scenario.attack.directive == "touch /tmp/x"
    assert scenario.propagation.p == 1.3
    assert agent_params == {"relay": {"susceptibility": 0.5}}
    graph = harness.resolve_graph(scenario)
    assert graph == canonical_topology("star")


def test_scenario_bad_version(tmp_path):
    path = tmp_path / "s.toml"
    path.write_text("version = 3\ntopology = \"chain\"\n")
    with pytest.raises(harness.ConfigError):
        harness.load_scenario_file(path)


def test_resolve_topology_unknown():
    with pytest.raises(harness.ConfigError):
        harness.resolve_topology("does-not-exist")
