import pytest

from massim.topology import (AgentNode, TopologyError, TopologyGraph,
                             CANONICAL_NAMES, canonical_topology, enumerate_paths,
                             flood_seed, hop_distances, in_neighbors, load_topology,
                             save_topology, with_entry_set, worked_example_graph)


def tiny_graph():
    nodes = [AgentNode("A", "edge"), AgentNode("B", "relay"),
             AgentNode("C", "executor")]
    return TopologyGraph(nodes, [("A", "B"), ("B", "C")], ["A"], "C", name="tiny")


def test_duplicate_node_rejected():
    nodes = [AgentNode("A", "edge"), AgentNode("A", "executor")]
    with pytest.raises(TopologyError):
        TopologyGraph(nodes, [], ["A"], "A")


def test_self_loop_rejected():
    nodes = [AgentNode("A", "edge"), AgentNode("C", "executor")]
    with pytest.raises(TopologyError):
        TopologyGraph(nodes, [("A", "A")], ["A"], "C")


def test_edge_to_missing_node_rejected():
    nodes = [AgentNode("A", "edge"), AgentNode("C", "executor")]
    with pytest.raises(TopologyError):
        TopologyGraph(nodes, [("A", "Z")], ["A"], "C")


def test_entry_must_be_edge_role():
    nodes = [AgentNode("A", "relay"), AgentNode("C", "executor")]
    with pytest.raises(TopologyError):
        TopologyGraph(nodes, [("A", "C")], ["A"], "C")


def test_target_must_be_executor():
    nodes = [AgentNode("A", "edge"), AgentNode("C", "relay")]
    with pytest.raises(TopologyError):
        TopologyGraph(nodes, [("A", "C")], ["A"], "C")


def test_unknown_role_rejected():
    with pytest.raises(TopologyError):
        AgentNode("A", "wizard")


def test_in_out_neighbors():
    g = tiny_graph()
    assert in_neighbors(g, "B") == frozenset({"A"})
    assert g.out_neighbors("B") == frozenset({"C"})
    assert g.symmetric_neighbors("B") == frozenset({"A", "C"})


def test_hop_distances_unreachable_absent():
    g = tiny_graph()
    dist = hop_distances(g, "A")
    assert dist == {"A": 0, "B": 1, "C": 2}
    assert hop_distances(g, "C") == {"C": 0}


def test_enumerate_paths_simple_and_ordered():
    nodes = [AgentNode("A", "edge"), AgentNode("B", "relay"),
             AgentNode("C", "relay"), AgentNode("D", "executor")]
    edges = [("A", "B"), ("A", "C"), ("B", "D"), ("C", "D"), ("B", "C")]
    g = TopologyGraph(nodes, edges, ["A"], "D")
    paths = enumerate_paths(g, "A", "D")
    assert paths == [("A", "B", "C", "D"), ("A", "B", "D"), ("A", "C", "D")]
    assert all(len(set(p)) == len(p) for p in paths)


def test_enumerate_paths_max_len():
    nodes = [AgentNode("A", "edge"), AgentNode("B", "relay"),
             AgentNode("C", "relay"), AgentNode("D", "executor")]
    edges = [("A", "B"), ("A", "C"), ("B", "D"), ("C", "D"), ("B", "C")]
    g = TopologyGraph(nodes, edges, ["A"], "D")
    assert enumerate_paths(g, "A", "D", max_len=3) == [("A", "B", "D"), ("A", "C", "D")]


@pytest.mark.parametrize("name", CANONICAL_NAMES)
def test_canonical_topologies_valid(name):
    g = canonical_topology(name)
    assert g.entry_set
    assert g.target in g
    assert flood_seed(name) <= frozenset(g.node_ids)
    # the attack planner must have at least one route
    assert any(enumerate_paths(g, e, g.target) for e in g.entry_set)


def test_unknown_canonical_name():
    with pytest.raises(TopologyError):
        canonical_topology("torus")


def test_worked_example_shape():
    g = worked_example_graph()
    assert len(g.nodes) == 10
    assert g.target == "V10"
    assert "V1" in g.entry_set


def test_with_entry_set_promotes_role():
    g = canonical_topology("tree")
    g2 = with_entry_set(g, {"V1"})
    assert g2.entry_set == frozenset({"V1"})
    assert g2.nodes["V1"].role == "edge"
    assert g2.edges == g.edges


@pytest.mark.parametrize("name", CANONICAL_NAMES + ("example10",))
def test_config_round_trip(name):
    g = worked_example_graph() if name == "example10" else canonical_topology(name)
    text = save_topology(g)
    g2 = load_topology(text)
    assert g2 == g
    assert save_topology(g2) == text


def test_load_rejects_bad_version():
    g = canonical_topology("chain")
    text = save_topology(g).replace("version = 1", "version = 99")
    with pytest.raises(TopologyError):
        load_topology(text)


def test_load_rejects_garbage():
    with pytest.raises(TopologyError):
        load_topology("not [valid toml")
