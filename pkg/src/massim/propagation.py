"""Nonlinear taint spread over a directed agent graph, plus attack-path planning.

Contamination starts at chosen entry nodes at full intensity and diffuses
synchronously: each step a node gains intensity equal to the mean taint of its
upstream neighbors raised to an attenuation exponent, saturating at 1. A run
stabilizes at the first step whose infected set matches the previous step.
Paths are scored by distance-discounted taint mass and the planner returns the
strongest entry-to-target route.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .topology import TopologyGraph, enumerate_paths, hop_distances, in_neighbors


class PlanningError(RuntimeError):
    """Raised when no entry-to-target attack path exists."""


@dataclass(frozen=True)
class PropagationParams:
    """Spread dynamics knobs.

    p is the attenuation exponent (>= 1; higher suppresses weak upstream
    contamination harder), delta the per-hop path decay base in (0, 1], and
    max_steps a safety bound on the iteration count.
    """
    p: float = 1.4
    delta: float = 0.9
    max_steps: int = 100

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("attenuation exponent p must be >= 1")
        if not (0 < self.delta <= 1):
            raise ValueError("delta must lie in (0, 1]")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")


@dataclass(frozen=True)
class TaintState:
    """Per-node taint values at one time step."""
    taints: dict
    t: int
    truncated: bool = False

    @property
    def infected(self) -> frozenset:
        return frozenset(v for v, taint in self.taints.items() if taint > 0)

    def taint(self, node_id: str) -> float:
        return self.taints[node_id]


@dataclass(frozen=True)
class AttackPath:
    nodes: tuple
    strength: float

    def __str__(self):
        return "->".join(self.nodes) + f" (strength {self.strength:.4f})"


def init_taint(graph: TopologyGraph, start) -> TaintState:
    """Initial state: taint 1 on the start nodes, 0 elsewhere."""
    start = frozenset(start)
    bad = start - graph.entry_set
    if bad:
        raise ValueError(f"start nodes outside the entry set: {sorted(bad)}")
    taints = {nid: (1.0 if nid in start else 0.0) for nid in graph.node_ids}
    return TaintState(taints=taints, t=0)


def step(graph: TopologyGraph, state: TaintState, params: PropagationParams) -> TaintState:
    """One synchronous update from the previous snapshot.

    Nodes with no upstream neighbors keep their taint. Everyone else adds
    (1 - T) * (mean upstream taint)^p, capped at 1.
    """
    prev = state.taints
    nxt = {}
    for nid in graph.node_ids:
        ins = in_neighbors(graph, nid)
        if not ins:
            nxt[nid] = prev[nid]
            continue
        mean = sum(prev[u] for u in ins) / len(ins)
        intensity = mean ** params.p
        nxt[nid] = min(1.0, prev[nid] + (1.0 - prev[nid]) * intensity)
    return TaintState(taints=nxt, t=state.t + 1)


def run_to_steady(graph: TopologyGraph, start, params: PropagationParams):
    """Iterate until the infected set stops growing; returns (state, stop_step).

    The returned state is the one at the first step whose infected set equals
    the previous step's. Infected-set growth is monotone, so stabilization is
    guaranteed within the node count; the truncated flag covers the defensive
    max_steps bound anyway.
    """
    state = init_taint(graph, start)
    prev_infected = state.infected
    for _ in range(params.max_steps):
        state = step(graph, state, params)
        if state.infected == prev_infected:
            return state, state.t
        prev_infected = state.infected
    return replace(state, truncated=True), state.t


def path_strength(path, state: TaintState, distances: dict, delta: float) -> float:
    """Distance-discounted taint mass along a path: sum of delta^d(v) * T(v)."""
    total = 0.0
    for nid in path:
        if nid not in distances:
            raise ValueError(f"node {nid!r} has no hop distance")
        total += (delta ** distances[nid]) * state.taint(nid)
    return total


def optimal_path(graph: TopologyGraph, params: PropagationParams) -> AttackPath:
    """Strongest simple entry-to-target path.

    Each entry node gets its own steady-state run and distance map; every
    enumerated path is scored and the argmax returned. Ties break toward
    shorter, then lexicographically smaller, paths.
    """
    best = None
    for entry in sorted(graph.entry_set):
        paths = enumerate_paths(graph, entry, graph.target)
        if not paths:
            continue
        state, _ = run_to_steady(graph, {entry}, params)
        dist = hop_distances(graph, entry)
        for path in paths:
            strength = path_strength(path, state, dist, params.delta)
            key = (-strength, len(path), path)
            if best is None or key < best[0]:
                best = (key, AttackPath(nodes=path, strength=strength))
    if best is None:
        raise PlanningError("no path from any entry node to the target")
    return best[1]


def replan(graph: TopologyGraph, params: PropagationParams,
           previous: AttackPath | None = None) -> AttackPath:
    """Recompute the optimal path; keeps the previous one when still optimal.

    The previous path is kept only if it is still a valid entry-to-target
    route in the (possibly changed) graph and its strength is within 1e-9 of
    the fresh optimum.
    """
    current = optimal_path(graph, params)
    if previous is None:
        return current
    if not _path_valid(graph, previous.nodes):
        return current
    entry = previous.nodes[0]
    state, _ = run_to_steady(graph, {entry}, params)
    dist = hop_distances(graph, entry)
    strength = path_strength(previous.nodes, state, dist, params.delta)
    if abs(strength - current.strength) <= 1e-9:
        return AttackPath(nodes=previous.nodes, strength=strength)
    return current


def _path_valid(graph: TopologyGraph, nodes) -> bool:
    if not nodes or len(set(nodes)) != len(nodes):
        return False
    if nodes[0] not in graph.entry_set or nodes[-1] != graph.target:
        return False
    return all((u, v) in graph.edges for u, v in zip(nodes, nodes[1:]))
