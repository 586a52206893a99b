"""End-to-end acceptance checks for the shipped models and calibrations.

Golden per-node contamination tables for the built-in topologies live in
TABLES below; the calibrated tree/star/mesh adjacencies are expected to
reproduce them within the stated tolerance. See README for the calibration
notes and known residuals.
"""

import time
from dataclasses import replace

import pytest

from massim import defense as dfs, harness, metrics
from massim.cli import main as cli_main
from massim.injection import (HookModelParams, Perturbation, hook_probability,
                              optimize_perturbation)
from massim import payload as pl
from massim.propagation import PropagationParams, init_taint, optimal_path, \
    run_to_steady, step
from massim.topology import (AgentNode, TopologyGraph, canonical_topology,
                             flood_seed, with_entry_set, worked_example_graph)

P_VALUES = (1.0, 1.1, 1.3, 1.4)

# Golden steady-state taint targets per topology and attenuation exponent,
# listed V1..Vn.
TABLES = {
    "chain": {p: [1.00] * 7 for p in P_VALUES},
    "ring": {p: [1.00] * 7 for p in P_VALUES},
    "tree": {
        1.0: [1.00, 0.98, 0.94, 0.94, 0.50, 0.50, 0.00],
        1.1: [1.00, 0.97, 0.92, 0.89, 0.36, 0.36, 0.00],
        1.3: [1.00, 0.92, 0.88, 0.71, 0.14, 0.14, 0.00],
        1.4: [1.00, 0.88, 0.85, 0.60, 0.07, 0.07, 0.00],
    },
    "star": {
        1.0: [1.00, 1.00, 1.00, 1.00, 0.78, 0.78, 0.40, 0.00],
        1.1: [1.00, 1.00, 1.00, 1.00, 0.74, 0.71, 0.30, 0.00],
        1.3: [1.00, 1.00, 1.00, 1.00, 0.66, 0.55, 0.13, 0.00],
        1.4: [1.00, 1.00, 1.00, 1.00, 0.62, 0.46, 0.08, 0.00],
    },
    "mesh": {
        1.0: [1.00] * 7 + [0.83, 0.78, 0.75],
        1.1: [1.00] * 7 + [0.80, 0.75, 0.71],
        1.3: [1.00] * 7 + [0.73, 0.69, 0.63],
        1.4: [1.00] * 7 + [0.69, 0.66, 0.59],
    },
}


def flood_graph(name):
    graph = canonical_topology(name)
    seed = flood_seed(name)
    if not seed <= graph.entry_set:
        graph = with_entry_set(graph, graph.entry_set | seed)
    return graph, seed


def steady_taints(name, p):
    graph, seed = flood_graph(name)
    state, _ = run_to_steady(graph, seed, PropagationParams(p=p))
    return [state.taint(f"V{i}") for i in range(1, len(graph.nodes) + 1)]


# -- criterion 1: chain and ring fully saturate -----------------------------

@pytest.mark.parametrize("name", ["chain", "ring"])
def test_chain_and_ring_saturate_at_every_node(name):
    t0 = time.monotonic()
    for p in P_VALUES:
        taints = steady_taints(name, p)
        for value in taints:
            assert value == pytest.approx(1.00, abs=0.005)
    assert time.monotonic() - t0 < 1.0


# -- criterion 2: ten-node worked example -----------------------------------

def test_worked_example_intermediate_taints_and_plan():
    graph = worked_example_graph()
    params = PropagationParams(p=1.4, delta=0.9)
    state = init_taint(graph, {"V1"})
    by_step = {0: state}
    for t in range(1, 6):
        state = step(graph, state, params)
        by_step[t] = state
    assert by_step[3].taint("V6") == pytest.approx(0.59, abs=0.01)
    assert by_step[5].taint("V10") == pytest.approx(0.14, abs=0.01)
    path = optimal_path(graph, params)
    assert path.nodes == ("V1", "V3", "V5", "V6", "V7", "V9", "V10")
    assert path.strength == pytest.approx(4.32, abs=0.02)


# -- criterion 3: calibrated tree/star/mesh tables --------------------------

@pytest.mark.parametrize("name", ["tree", "star", "mesh"])
@pytest.mark.parametrize("p", P_VALUES)
def test_calibrated_topology_matches_table(name, p):
    taints = steady_taints(name, p)
    expected = TABLES[name][p]
    for i, (got, want) in enumerate(zip(taints, expected)):
        assert got == pytest.approx(want, abs=0.01), (
            f"{name} p={p} V{i+1}: got {got:.4f}, want {want:.2f}")


# -- criterion 4: threshold boundaries --------------------------------------

def test_alert_level_boundaries_exact():
    levels = [dfs.alert_level(s) for s in (0.499, 0.5, 0.8, 0.801)]
    assert levels == [dfs.ALERT_HIGH, dfs.ALERT_MEDIUM, dfs.ALERT_MEDIUM,
                      dfs.ALERT_LOW]


def test_action_boundaries_exact():
    actions = []
    for taint in (0.5, 0.501, 0.8, 0.801):
        tm = dfs.TrustMap(taint={"A": taint}, trust={"A": 1 - taint},
                          iterations_used=1, converged=True)
        actions.append(dfs.generate_rule("A", tm, clock=lambda: 0.0).action)
    assert actions == [dfs.ACTION_LOG, dfs.ACTION_RESTRICTED,
                       dfs.ACTION_RESTRICTED, dfs.ACTION_QUARANTINE]


# -- criterion 5: trust propagation properties ------------------------------

def test_trust_propagation_properties():
    nodes = [AgentNode("A", "edge"), AgentNode("B", "executor")]
    pair = TopologyGraph(nodes, [("A", "B")], ["A"], "B")
    for t in range(1, 101):
        tm = dfs.trust_propagate(pair, {"A"}, max_iter=t)
        assert tm.taint["B"] == pytest.approx(1.0 - 0.95 ** t, abs=1e-9)
        assert tm.iterations_used == t

    graph = canonical_topology("mesh")
    prev = None
    for t in (1, 5, 20, 60, 100):
        tm = dfs.trust_propagate(graph, {"V4"}, max_iter=t)
        for nid in graph.node_ids:
            assert 0.0 <= tm.taint[nid] <= 1.0
            assert tm.trust[nid] == pytest.approx(1.0 - tm.taint[nid], abs=1e-15)
            if prev is not None:
                assert tm.taint[nid] >= prev[nid] - 1e-15
        prev = tm.taint
    assert dfs.trust_propagate(graph, {"V4"}).iterations_used <= 100


# -- criterion 6: payload round-trip ----------------------------------------

class _Agent:
    def __init__(self, node_id, role, fidelity):
        self.node_id = node_id
        self.role = role
        self.fidelity = fidelity


def _line(n):
    nodes = [AgentNode("V1", "edge")]
    nodes += [AgentNode(f"V{i}", "relay") for i in range(2, n)]
    nodes.append(AgentNode(f"V{n}", "executor"))
    return TopologyGraph(nodes, [(f"V{i}", f"V{i+1}") for i in range(1, n)],
                         ["V1"], f"V{n}")


def test_payload_round_trip_thousand_cases():
    import random
    rng = random.Random(2024)
    lib = pl.default_templates()
    for case in range(1000):
        n = rng.randint(1, 7)
        graph = _line(max(n, 2))
        path = tuple(f"V{i}" for i in range(1, n + 1))
        directive = "".join(chr(rng.randint(33, 126)) for _ in range(rng.randint(1, 50)))
        built = pl.encapsulate(path, pl.Directive(directive), lib, graph)
        agents = {nid: _Agent(nid, graph.nodes[nid].role, 1.0)
                  for nid in graph.nodes}
        trace = pl.simulate_propagation(path, built, agents, case)
        assert trace.terminal_match
        assert trace.delivered_directive == directive


def test_payload_match_rate_tracks_fidelity():
    fidelity = 0.85
    graph = _line(6)
    path = tuple(f"V{i}" for i in range(1, 7))
    built = pl.encapsulate(path, pl.Directive("x"), pl.default_templates(), graph)
    agents = {nid: _Agent(nid, graph.nodes[nid].role, fidelity)
              for nid in graph.nodes}
    trials = 10000
    hits = sum(pl.simulate_propagation(path, built, agents, 31 * i).terminal_match
               for i in range(trials))
    assert hits / trials == pytest.approx(fidelity ** 5, abs=0.02)


# -- criterion 7: injection model -------------------------------------------

def test_injection_neutral_point_exact():
    assert hook_probability(Perturbation(0.0, 0.0)) == 0.5


def test_injection_optimizer_matches_grid_on_random_boxes():
    import random
    rng = random.Random(77)
    for _ in range(50):
        slo = rng.uniform(-1, 1)
        shi = slo + rng.uniform(0, 3)
        plo = rng.uniform(0, 1)
        phi = plo + rng.uniform(0, 3)
        params = HookModelParams(k1=rng.uniform(-1, 1), k2=rng.uniform(-1, 1),
                                 size_bounds=(slo, shi), pos_bounds=(plo, phi))
        best = hook_probability(optimize_perturbation(params), params)
        grid = max(hook_probability(
            Perturbation(slo + (shi - slo) * i / 50, plo + (phi - plo) * j / 50),
            params) for i in range(51) for j in range(51))
        assert best >= grid - 1e-12


def test_injection_monotonicity_grid():
    grid = [i / 10 for i in range(21)]
    for dp in grid[:11]:
        col = [hook_probability(Perturbation(ds, dp)) for ds in grid]
        assert col == sorted(col)
    for ds in grid:
        row = [hook_probability(Perturbation(ds, dp)) for dp in grid[:11]]
        assert row == sorted(row, reverse=True)


# -- criterion 8: defense end to end ----------------------------------------

def test_defense_end_to_end_all_topologies():
    t0 = time.monotonic()
    for name in ("chain", "ring", "tree", "star", "mesh"):
        graph = canonical_topology(name)
        system = harness.build_system(graph)
        base = harness.Scenario(topology=graph, trial_count=1000, rng_seed=42,
                                detector_tpr=0.94)
        undefended = harness.run_experiment(system, base)
        asr = metrics.asr(undefended)
        assert 0.40 <= asr <= 0.78, f"{name}: undefended ASR {asr:.3f}"

        defended = harness.run_experiment(system,
                                          replace(base, defense_enabled=True))
        sbr, _ = metrics.blocking_metrics(defended)
        assert sbr >= 0.90, f"{name}: SBR {sbr:.3f}"

        for trace in defended.traces:
            quarantined = {}
            for ev in trace.events:
                if ev.kind == "rule" and ev.detail == dfs.ACTION_QUARANTINE:
                    quarantined.setdefault(ev.agent, ev.step)
                if ev.kind == "execute":
                    covered = ev.agent in quarantined and \
                        quarantined[ev.agent] <= ev.step
                    assert not covered, (
                        f"{name}: quarantined agent {ev.agent} executed")
    assert time.monotonic() - t0 < 30.0


# -- criterion 9: metric formulas -------------------------------------------

def test_gcs_exact_value():
    assert metrics.gcs([0.4, 0.6]) == 0.8


def test_overhead_loss_ratio_identity():
    clean = {"throughput": 12.5, "cpu": 3.0, "memory": 7.0, "latency": 0.4}
    defended = {"throughput": 9.75, "cpu": 3.3, "memory": 8.1, "latency": 0.55}
    loss, ratio, *_ = metrics.overhead_metrics(clean, defended)
    assert abs((1.0 - loss) * ratio - 1.0) < 1e-12


def test_detection_metrics_on_200_label_fixture():
    labels = ([{"adversarial": True, "flagged": True}] * 94
              + [{"adversarial": True, "flagged": False}] * 6
              + [{"adversarial": False, "flagged": True}] * 3
              + [{"adversarial": False, "flagged": False}] * 97)
    assert len(labels) == 200
    dr, fpr = metrics.detection_metrics(labels)
    assert dr == pytest.approx(0.94)
    assert fpr == pytest.approx(0.03)


# -- criterion 10: CLI determinism ------------------------------------------

def _invoke(capsys, argv):
    code = cli_main(list(argv))
    out = capsys.readouterr().out
    return code, out


def test_cli_byte_identical_repeats(capsys, tmp_path):
    scen = tmp_path / "s.toml"
    scen.write_text('version = 1\ntopology = "tree"\ndefense = true\n'
                    "trials = 30\nseed = 5\n")
    outputs = []
    for run_dir in ("a", "b"):
        out = tmp_path / run_dir
        out.mkdir()
        trace_file = out / "t.csv"
        code, stdout = _invoke(capsys, ["simulate", "--scenario", str(scen),
                                        "--seed", "5", "--out", str(trace_file)])
        assert code == 0
        outputs.append((stdout, trace_file.read_bytes()))
    assert outputs[0] == outputs[1]

    first = _invoke(capsys, ["propagate", "--topology", "mesh", "--p", "1.1"])
    second = _invoke(capsys, ["propagate", "--topology", "mesh", "--p", "1.1"])
    assert first == second
