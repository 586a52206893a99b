"""Discrete-time trial harness over a topology: inject, route, compromise, defend.

Each trial walks an attack path one hop per step. The entry agent perceives
the injected content subject to the visual capture model; every agent on the
path must both accept the adversarial instruction (a seeded Bernoulli draw on
its susceptibility) and relay the nested payload intact (its fidelity draw).
With the defense enabled, per-step cross-modal checks can raise alerts whose
generated rules block later operations. Traces record every event plus
synthetic resource counters for the overhead metrics.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field, replace

import os

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from . import payload as payload_mod
from .defense import DECISION_DENY, DefenseMonitor, Thresholds
from .injection import Perturbation, hook_probability, optimize_perturbation
from .propagation import PropagationParams, optimal_path
from .topology import (TopologyGraph, canonical_topology, load_topology_file,
                       worked_example_graph)

OUTCOMES = ("executed", "refused", "lost", "blocked")
EVENT_KINDS = ("perceive", "forward", "execute", "refuse", "block", "rule")

DEFAULT_SUSCEPTIBILITY = 0.92
DEFAULT_FIDELITY = 1.0


class ConfigError(ValueError):
    """Raised for inconsistent system or scenario configuration."""


@dataclass(frozen=True)
class AgentModel:
    node_id: str
    role: str
    modality: str
    fidelity: float = DEFAULT_FIDELITY
    susceptibility: float = DEFAULT_SUSCEPTIBILITY

    def __post_init__(self):
        if not (0.0 <= self.fidelity <= 1.0 and 0.0 <= self.susceptibility <= 1.0):
            raise ConfigError("fidelity and susceptibility must lie in [0, 1]")


@dataclass(frozen=True)
class Attack:
    directive: str = "rm /root/abc"
    path: tuple | None = None
    hook: Perturbation | None = None


@dataclass(frozen=True)
class Scenario:
    topology: object = "chain"
    objective: str = "harmful"
    attack: Attack | None = field(default_factory=Attack)
    defense_enabled: bool = False
    trial_count: int = 10
    rng_seed: int = 42
    step_duration: float = 0.33
    detector_tpr: float = 0.94
    detector_fpr: float = 0.03
    propagation: PropagationParams = field(default_factory=PropagationParams)

    @property
    def adversarial(self) -> bool:
        return self.attack is not None


@dataclass(frozen=True)
class Event:
    step: int
    agent: str
    kind: str
    digest: str
    detail: str = ""


@dataclass(frozen=True)
class Trace:
    events: tuple
    outcome: str
    adversarial: bool
    flagged: bool
    inject_step: int
    final_step: int
    block_step: int | None
    step_duration: float
    resources: dict

    def digest(self) -> str:
        body = repr((self.events, self.outcome, self.adversarial, self.flagged,
                     self.inject_step, self.final_step, self.block_step,
                     sorted(self.resources.items())))
        return hashlib.sha256(body.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class TraceSet:
    traces: tuple
    scenario: Scenario

    def digest(self) -> str:
        joined = ",".join(t.digest() for t in self.traces)
        return hashlib.sha256(joined.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SimSystem:
    graph: TopologyGraph
    agents: dict


def build_system(graph: TopologyGraph, agent_params: dict | None = None) -> SimSystem:
    """Instantiate one agent model per node.

    agent_params may carry role-level defaults (keyed by role name) and
    per-node overrides (keyed by node id); values are dicts with fidelity
    and/or susceptibility entries. Unknown node keys are rejected.
    """
    agent_params = dict(agent_params or {})
    role_keys = {k: v for k, v in agent_params.items() if k in
                 ("orchestrator", "relay", "edge", "executor")}
    node_keys = {k: v for k, v in agent_params.items() if k not in role_keys}
    unknown = set(node_keys) - set(graph.nodes)
    if unknown:
        raise ConfigError(f"override for unknown node(s): {sorted(unknown)}")
    agents = {}
    for nid, node in graph.nodes.items():
        merged = {"fidelity": DEFAULT_FIDELITY,
                  "susceptibility": DEFAULT_SUSCEPTIBILITY}
        merged.update(role_keys.get(node.role, {}))
        merged.update(node_keys.get(nid, {}))
        agents[nid] = AgentModel(node_id=nid, role=node.role,
                                 modality=node.modality, **merged)
    return SimSystem(graph=graph, agents=agents)


def resolve_topology(ref) -> TopologyGraph:
    """A TopologyGraph, a built-in name, example10, or a config file path."""
    if isinstance(ref, TopologyGraph):
        return ref
    if ref == "example10":
        return worked_example_graph()
    try:
        return canonical_topology(ref)
    except Exception:
        pass
    try:
        return load_topology_file(ref)
    except FileNotFoundError:
        raise ConfigError(f"unknown topology {ref!r}: not a built-in name "
                          "or readable config file") from None


def resolve_graph(scenario: Scenario) -> TopologyGraph:
    return resolve_topology(scenario.topology)


SCENARIO_VERSION = 1


def load_scenario(text: str, base_dir: str = ".") -> tuple:
    """Parse a scenario config; returns (Scenario, agent_params dict).

    The topology field may name a built-in topology or point at a topology
    config file, resolved relative to base_dir.
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"scenario parse error: {exc}") from exc
    if data.get("version") != SCENARIO_VERSION:
        raise ConfigError(f"unsupported scenario version {data.get('version')!r}")
    topo_ref = data.get("topology", "chain")
    if topo_ref not in ("chain", "ring", "tree", "star", "mesh", "example10"):
        topo_ref = os.path.join(base_dir, topo_ref)
    graph = resolve_topology(topo_ref)
    prop = data.get("propagation", {})
    params = PropagationParams(p=float(prop.get("p", 1.4)),
                               delta=float(prop.get("delta", 0.9)),
                               max_steps=int(prop.get("max_steps", 100)))
    objective = data.get("objective", "harmful")
    if objective == "benign":
        attack = None
    else:
        attack = Attack(directive=data.get("directive", "rm /root/abc"))
    scenario = Scenario(topology=graph,
                        objective=objective,
                        attack=attack,
                        defense_enabled=bool(data.get("defense", False)),
                        trial_count=int(data.get("trials", 10)),
                        rng_seed=int(data.get("seed", 42)),
                        step_duration=float(data.get("step_duration", 0.33)),
                        detector_tpr=float(data.get("detector_tpr", 0.94)),
                        detector_fpr=float(data.get("detector_fpr", 0.03)),
                        propagation=params)
    return scenario, dict(data.get("agents", {}))


def load_scenario_file(path) -> tuple:
    with open(path, "r", encoding="utf-8") as fh:
        return load_scenario(fh.read(), base_dir=os.path.dirname(os.path.abspath(path)))


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:12]


def run_trial(system: SimSystem, scenario: Scenario, seed: int) -> Trace:
    """One seeded trial; every failure mode is an outcome, never an exception."""
    graph = system.graph
    rng = random.Random(seed)
    events = []
    cpu = 0
    clock = [0]

    def emit(step, agent, kind, digest, detail=""):
        nonlocal cpu
        events.append(Event(step, agent, kind, digest, detail))
        cpu += 1

    monitor = None
    if scenario.defense_enabled:
        monitor = DefenseMonitor(graph, clock=lambda: clock[0] * scenario.step_duration)

    if not scenario.adversarial:
        return _run_benign(system, scenario, rng, events, emit, monitor, clock)

    attack = scenario.attack
    if attack.path is not None:
        path = tuple(attack.path)
    else:
        path = optimal_path(graph, scenario.propagation).nodes
    directive = payload_mod.Directive(attack.directive)
    templates = payload_mod.default_templates()
    built = payload_mod.encapsulate(path, directive, templates, graph)
    adv_digest = _digest(attack.directive)
    flagged = False

    def finish(outcome, block_step=None):
        mem = built.depth + (len(monitor.rules) if monitor else 0)
        latency = (clock[0] + 1) * scenario.step_duration
        if monitor:
            latency += len(monitor.events) * 0.02
        resources = {"cpu": cpu, "memory": mem, "latency": round(latency, 6),
                     "steps": clock[0]}
        return Trace(events=tuple(events), outcome=outcome, adversarial=True,
                     flagged=flagged, inject_step=0, final_step=clock[0],
                     block_step=block_step, step_duration=scenario.step_duration,
                     resources=resources)

    seen_events = [0]

    def drain_rules(step):
        for kind, *rest in monitor.events[seen_events[0]:]:
            if kind == "rule":
                rule_id, action, target = rest
                emit(step, target, "rule", rule_id[:12], action)
        seen_events[0] = len(monitor.events)

    def detect(agent_id, step):
        nonlocal flagged
        if monitor is None:
            return
        if rng.random() < scenario.detector_tpr:
            flagged = True
            monitor.observe(agent_id, "quarterly report page with figures",
                            "execute hidden override directive")
        else:
            monitor.observe(agent_id, "quarterly report page with figures",
                            "quarterly report page with figures")
        drain_rules(step)

    entry = path[0]
    entry_agent = system.agents[entry]
    if entry_agent.modality == "visual":
        hook = attack.hook or optimize_perturbation()
        captured = rng.random() < hook_probability(hook)
    else:
        captured = True
    if not captured:
        emit(0, entry, "perceive", adv_digest, "capture failed")
        return finish("lost")
    emit(0, entry, "perceive", adv_digest, "capture")
    detect(entry, 0)

    layer = built.outermost
    for i, nid in enumerate(path):
        clock[0] = i
        agent = system.agents[nid]
        terminal = i == len(path) - 1
        if i > 0:
            detect(nid, i)
        if monitor is not None:
            op = "exec" if terminal else "comm"
            if monitor.check(nid, op) == DECISION_DENY:
                emit(i, nid, "block", adv_digest, f"{op} denied")
                return finish("blocked", block_step=i)
        if rng.random() >= agent.susceptibility:
            emit(i, nid, "refuse", adv_digest, "instruction rejected")
            return finish("refused")
        if terminal:
            emit(i, nid, "execute", adv_digest, "directive executed")
            return finish("executed")
        out = payload_mod.agent_transform(agent, layer, seed * 1000 + i)
        nxt = payload_mod.extract_next(out)
        if isinstance(nxt, payload_mod.PropagationLost):
            emit(i, nid, "forward", adv_digest, "payload corrupted")
            return finish("lost")
        emit(i, nid, "forward", adv_digest, f"to {path[i + 1]}")
        layer = nxt
    raise AssertionError("unreachable")


def _run_benign(system, scenario, rng, events, emit, monitor, clock):
    graph = system.graph
    path = _benign_route(graph)
    digest = _digest("routine task")
    flagged = False
    blocked = None
    emit(0, path[0], "perceive", digest, "benign task")
    if monitor is not None and rng.random() < scenario.detector_fpr:
        flagged = True
        monitor.observe(path[0], "quarterly report page with figures",
                        "unrelated stale cached summary text")
        for kind, *rest in monitor.events:
            if kind == "rule":
                rule_id, action, target = rest
                emit(0, target, "rule", rule_id[:12], action)
    outcome = "executed"
    for i, nid in enumerate(path):
        clock[0] = i
        terminal = i == len(path) - 1
        if monitor is not None:
            op = "exec" if terminal else "comm"
            if monitor.check(nid, op) == DECISION_DENY:
                emit(i, nid, "block", digest, f"{op} denied")
                outcome = "blocked"
                blocked = i
                break
        if terminal:
            emit(i, nid, "execute", digest, "task completed")
        else:
            emit(i, nid, "forward", digest, f"to {path[i + 1]}")
    latency = (clock[0] + 1) * scenario.step_duration
    if monitor:
        latency += len(monitor.events) * 0.02
    resources = {"cpu": len(events), "memory": len(path),
                 "latency": round(latency, 6), "steps": clock[0]}
    return Trace(events=tuple(events), outcome=outcome, adversarial=False,
                 flagged=flagged, inject_step=0, final_step=clock[0],
                 block_step=blocked, step_duration=scenario.step_duration,
                 resources=resources)


def _benign_route(graph: TopologyGraph):
    from .topology import enumerate_paths
    for entry in sorted(graph.entry_set):
        paths = enumerate_paths(graph, entry, graph.target)
        if paths:
            return min(paths, key=lambda p: (len(p), p))
    return (sorted(graph.entry_set)[0],)


def run_experiment(system: SimSystem, scenario: Scenario) -> TraceSet:
    """trial_count trials with seeds scenario.rng_seed + i; fully replayable."""
    if scenario.trial_count < 1:
        raise ConfigError("trial_count must be at least 1")
    traces = tuple(run_trial(system, scenario, scenario.rng_seed + i)
                   for i in range(scenario.trial_count))
    return TraceSet(traces=traces, scenario=scenario)


def resource_summary(traceset: TraceSet) -> dict:
    """Aggregate synthetic resource counters for the overhead metrics."""
    traces = traceset.traces
    total_latency = sum(t.resources["latency"] for t in traces)
    return {
        "throughput": len(traces) / total_latency if total_latency > 0 else 0.0,
        "cpu": sum(t.resources["cpu"] for t in traces) / len(traces),
        "memory": sum(t.resources["memory"] for t in traces) / len(traces),
        "latency": total_latency / len(traces),
    }
