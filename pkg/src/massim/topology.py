"""Directed agent-communication graphs: loading, validation, and path/distance queries.

A topology is a directed graph of role-tagged agent nodes with a designated
entry set (edge agents an attacker can reach) and a single attack target.
Five built-in topologies are shipped, plus a ten-node demonstration graph
used by the attack planner walkthrough.
"""

from __future__ import annotations

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib
from collections import deque
from dataclasses import dataclass

ROLES = ("orchestrator", "relay", "edge", "executor")
MODALITIES = ("textual", "visual", "none")

CONFIG_VERSION = 1


class TopologyError(ValueError):
    """Raised for malformed or invariant-violating topology configurations."""


@dataclass(frozen=True)
class AgentNode:
    id: str
    role: str
    modality: str = "textual"

    def __post_init__(self):
        if self.role not in ROLES:
            raise TopologyError(f"unknown role {self.role!r} for node {self.id!r}")
        if self.modality not in MODALITIES:
            raise TopologyError(f"unknown modality {self.modality!r} for node {self.id!r}")


class TopologyGraph:
    """Immutable directed graph over AgentNode objects.

    Invariants enforced at construction: unique node ids, edge endpoints
    present, no self loops, entry nodes carry the edge role, and the target
    is an executor-role node present in the graph.
    """

    def __init__(self, nodes, edges, entry_set, target, name="topology"):
        node_map = {}
        for n in nodes:
            if n.id in node_map:
                raise TopologyError(f"duplicate node id {n.id!r}")
            node_map[n.id] = n
        edge_set = set()
        for u, v in edges:
            if u == v:
                raise TopologyError(f"self-loop edge on {u!r}")
            if u not in node_map or v not in node_map:
                raise TopologyError(f"edge ({u!r}, {v!r}) references a missing node")
            edge_set.add((u, v))
        entry = frozenset(entry_set)
        for e in entry:
            if e not in node_map:
                raise TopologyError(f"entry node {e!r} not in graph")
            if node_map[e].role != "edge":
                raise TopologyError(f"entry node {e!r} must have the edge role")
        if target not in node_map:
            raise TopologyError(f"target node {target!r} not in graph")
        if node_map[target].role != "executor":
            raise TopologyError(f"target node {target!r} must have the executor role")
        self._nodes = node_map
        self._edges = frozenset(edge_set)
        self._entry = entry
        self._target = target
        self.name = name
        self._in = {nid: frozenset(u for u, v in edge_set if v == nid) for nid in node_map}
        self._out = {nid: frozenset(v for u, v in edge_set if u == nid) for nid in node_map}

    @property
    def nodes(self):
        return self._nodes

    @property
    def node_ids(self):
        return sorted(self._nodes)

    @property
    def edges(self):
        return self._edges

    @property
    def entry_set(self):
        return self._entry

    @property
    def target(self):
        return self._target

    def __contains__(self, node_id):
        return node_id in self._nodes

    def __eq__(self, other):
        if not isinstance(other, TopologyGraph):
            return NotImplemented
        return (self._nodes == other._nodes and self._edges == other._edges
                and self._entry == other._entry and self._target == other._target)

    def __hash__(self):
        return hash((frozenset(self._nodes.items()), self._edges, self._entry, self._target))

    def __repr__(self):
        return (f"TopologyGraph({self.name!r}, {len(self._nodes)} nodes, "
                f"{len(self._edges)} edges)")

    def out_neighbors(self, node_id):
        if node_id not in self._nodes:
            raise TopologyError(f"unknown node {node_id!r}")
        return self._out[node_id]

    def symmetric_neighbors(self, node_id):
        """Neighbors under the symmetric closure of the edge set."""
        if node_id not in self._nodes:
            raise TopologyError(f"unknown node {node_id!r}")
        return self._in[node_id] | self._out[node_id]


def in_neighbors(graph: TopologyGraph, node_id: str) -> frozenset:
    """Upstream nodes with a directed edge into node_id."""
    if node_id not in graph:
        raise TopologyError(f"unknown node {node_id!r}")
    return graph._in[node_id]


def hop_distances(graph: TopologyGraph, entry: str) -> dict:
    """Shortest directed hop counts from entry; unreachable nodes are absent."""
    if entry not in graph:
        raise TopologyError(f"unknown node {entry!r}")
    dist = {entry: 0}
    queue = deque([entry])
    while queue:
        u = queue.popleft()
        for v in sorted(graph.out_neighbors(u)):
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def enumerate_paths(graph: TopologyGraph, start: str, target: str, max_len: int | None = None):
    """All simple directed paths from start to target with at most max_len nodes.

    Paths are returned in lexicographic order of their node-id sequences.
    """
    if start not in graph:
        raise TopologyError(f"unknown node {start!r}")
    if target not in graph:
        raise TopologyError(f"unknown node {target!r}")
    if max_len is None:
        max_len = len(graph.nodes)
    results = []
    path = [start]
    seen = {start}

    def walk(u):
        if u == target:
            results.append(tuple(path))
            return
        if len(path) >= max_len:
            return
        for v in sorted(graph.out_neighbors(u)):
            if v not in seen:
                seen.add(v)
                path.append(v)
                walk(v)
                path.pop()
                seen.remove(v)

    walk(start)
    return results


# ---------------------------------------------------------------------------
# Built-in topologies.
#
# Chain and ring follow their textbook shapes. The tree, star, and mesh
# adjacencies beyond the fixed entry/target/hub constraints are calibrated so
# that the contamination model reproduces the published per-node prediction
# table; see README for the calibration notes. Unlisted adjacency is search
# output, not hand design.

_CANONICAL = {
    "chain": dict(
        n=7,
        edges=[(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7)],
        entry=["V1"], target="V7", roles={},
        seed=["V1"],
    ),
    "ring": dict(
        n=7,
        edges=[(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (7, 1)],
        entry=["V1"], target="V7", roles={},
        seed=["V1"],
    ),
    "tree": dict(
        n=7,
        edges=[(1, 3), (7, 3), (3, 2), (2, 4), (2, 5), (2, 6),
               (4, 5), (4, 6), (5, 6), (6, 5), (7, 5), (7, 6)],
        entry=["V3"], target="V5",
        roles={"V1": "orchestrator"},
        seed=["V1"],
    ),
    "star": dict(
        n=8,
        edges=[(1, 2), (1, 3), (1, 4), (1, 5), (2, 3), (2, 4), (2, 5), (3, 4),
               (3, 5), (4, 5), (4, 6), (5, 6), (5, 7), (6, 5), (6, 7), (7, 5),
               (8, 5)],
        entry=["V1"], target="V7",
        roles={"V4": "orchestrator"},
        seed=["V1"],
    ),
    "mesh": dict(
        n=10,
        edges=[(1, 8), (1, 10), (2, 1), (2, 6), (2, 7), (2, 8), (2, 9), (3, 8),
               (4, 5), (5, 2), (5, 3), (5, 8), (6, 3), (6, 8), (6, 10), (7, 3),
               (7, 8), (7, 9), (7, 10), (8, 10), (9, 8), (9, 10), (10, 8), (10, 9)],
        entry=["V4"], target="V7", roles={},
        seed=["V4"],
    ),
}

CANONICAL_NAMES = tuple(sorted(_CANONICAL))


def _build(n, edges, entry, target, roles, name):
    nodes = []
    for i in range(1, n + 1):
        nid = f"V{i}"
        if nid in roles:
            role = roles[nid]
        elif nid in entry:
            role = "edge"
        elif nid == target:
            role = "executor"
        else:
            role = "relay"
        nodes.append(AgentNode(nid, role, "textual"))
    edge_ids = [(f"V{u}", f"V{v}") for u, v in edges]
    return TopologyGraph(nodes, edge_ids, entry, target, name=name)


def canonical_topology(name: str) -> TopologyGraph:
    """One of the five built-in topologies: chain, ring, tree, star, mesh."""
    if name not in _CANONICAL:
        raise TopologyError(f"unknown canonical topology {name!r}")
    cfg = _CANONICAL[name]
    return _build(cfg["n"], cfg["edges"], cfg["entry"], cfg["target"],
                  cfg["roles"], name)


def flood_seed(name: str) -> frozenset:
    """Documented start set for the per-node prediction table of a built-in topology.

    The published table floods the tree from its root V1 rather than from the
    attack entry V3; the other topologies flood from their entry node.
    """
    if name not in _CANONICAL:
        raise TopologyError(f"unknown canonical topology {name!r}")
    return frozenset(_CANONICAL[name]["seed"])


def with_entry_set(graph: TopologyGraph, entries) -> TopologyGraph:
    """Copy of graph whose entry set is replaced; new entries get the edge role."""
    entries = frozenset(entries)
    nodes = []
    for n in graph.nodes.values():
        if n.id in entries and n.role != "edge":
            nodes.append(AgentNode(n.id, "edge", n.modality))
        else:
            nodes.append(n)
    return TopologyGraph(nodes, graph.edges, entries, graph.target, name=graph.name)


def worked_example_graph() -> TopologyGraph:
    """Ten-node demonstration graph used in the attack-planner walkthrough.

    Reconstructed to satisfy the documented intermediate taint values and
    optimal path; see README for the reconstruction notes.
    """
    edges = [(1, 3), (3, 5), (5, 6), (6, 7), (7, 9), (9, 10), (3, 4), (2, 4),
             (4, 6), (2, 9), (2, 10), (4, 8), (8, 9), (8, 10)]
    roles = {"V2": "edge"}
    return _build(10, edges, ["V1"], "V10", roles, "example10")


# ---------------------------------------------------------------------------
# Serialization (TOML).

def save_topology(graph: TopologyGraph) -> str:
    """Serialize a graph to the versioned TOML config format."""
    lines = [f"version = {CONFIG_VERSION}",
             f'name = "{graph.name}"',
             f'target = "{graph.target}"',
             "entry = [" + ", ".join(f'"{e}"' for e in sorted(graph.entry_set)) + "]",
             "edges = [" + ", ".join(f'["{u}", "{v}"]' for u, v in sorted(graph.edges)) + "]",
             ""]
    for nid in graph.node_ids:
        n = graph.nodes[nid]
        lines += ["[[nodes]]",
                  f'id = "{n.id}"',
                  f'role = "{n.role}"',
                  f'modality = "{n.modality}"',
                  ""]
    return "\n".join(lines)


def load_topology(config_text: str) -> TopologyGraph:
    """Parse and validate a topology from its TOML config text."""
    try:
        data = tomllib.loads(config_text)
    except tomllib.TOMLDecodeError as exc:
        raise TopologyError(f"config parse error: {exc}") from exc
    version = data.get("version")
    if version != CONFIG_VERSION:
        raise TopologyError(f"unsupported config version {version!r}")
    try:
        nodes = [AgentNode(d["id"], d["role"], d.get("modality", "textual"))
                 for d in data["nodes"]]
        edges = [(u, v) for u, v in data["edges"]]
        entry = data["entry"]
        target = data["target"]
    except (KeyError, TypeError, ValueError) as exc:
        raise TopologyError(f"config field error: {exc}") from exc
    return TopologyGraph(nodes, edges, entry, target, name=data.get("name", "topology"))


def load_topology_file(path) -> TopologyGraph:
    with open(path, "r", encoding="utf-8") as fh:
        return load_topology(fh.read())
