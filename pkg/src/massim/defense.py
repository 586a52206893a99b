"""Runtime defense: cross-modal alerting, trust scoring, and rule enforcement.

Edge-agent perception is cross-checked against the agent's own summary; a low
similarity raises an alert that seeds a slow taint diffusion over the
symmetric closure of the graph. The least-trusted node's most-tainted
neighbor becomes the guard node, a JSON access-control rule is generated from
its taint, and agents consult the rule before operating.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from functools import lru_cache

from .similarity import cosine_similarity
from .topology import TopologyGraph

ALERT_HIGH = "High"
ALERT_MEDIUM = "Medium"
ALERT_LOW = "Low"

ACTION_QUARANTINE = "IMMEDIATE_QUARANTINE"
ACTION_RESTRICTED = "RESTRICTED_OPERATION"
ACTION_LOG = "LOG_SUSPICIOUS_ACTIVITY"

SEVERITIES = ("CRITICAL", "HIGH", "MEDIUM", "LOW")

OPERATIONS = ("read", "write", "exec", "comm")

DECISION_ALLOW = "allow"
DECISION_ALLOW_LOGGED = "allow_logged"
DECISION_DENY = "deny"


class ValidationError(ValueError):
    """Raised for empty cross-modal validation inputs."""


class GuardianError(RuntimeError):
    """Raised when the least-trusted node has no neighbors to guard it."""


@dataclass(frozen=True)
class Thresholds:
    """Similarity and taint cut points for alerting and rule actions."""
    sim_high_below: float = 0.5
    sim_low_above: float = 0.8
    quarantine_above: float = 0.8
    restrict_above: float = 0.5
    version: int = 0


def alert_level(sim: float, thresholds: Thresholds | None = None) -> str:
    """High below 0.5, Medium in [0.5, 0.8], Low above 0.8 (defaults)."""
    if thresholds is None:
        thresholds = Thresholds()
    if sim < thresholds.sim_high_below:
        return ALERT_HIGH
    if sim <= thresholds.sim_low_above:
        return ALERT_MEDIUM
    return ALERT_LOW


def cross_modal_validate(visual_summary: str, agent_summary: str,
                         similarity=None, thresholds: Thresholds | None = None):
    """Similarity of the two summaries plus its alert level."""
    if not visual_summary or not agent_summary:
        raise ValidationError("cross-modal validation needs both summaries")
    if similarity is None:
        similarity = cosine_similarity
    sim = similarity(visual_summary, agent_summary)
    sim = min(1.0, max(0.0, sim))
    return sim, alert_level(sim, thresholds)


@dataclass(frozen=True)
class TrustMap:
    taint: dict
    trust: dict
    iterations_used: int
    converged: bool


def trust_propagate(graph: TopologyGraph, suspects, decay: float = 0.05,
                    max_iter: int = 100, eps: float = 1e-4,
                    seeds: dict | None = None) -> TrustMap:
    """Slow taint diffusion over the symmetric closure, trust = 1 - taint.

    suspects seed at taint 1; seeds may override per-node initial taints
    (alert-strength seeding). Each iteration every node synchronously gains
    (1 - T) * mean(neighbor T) * decay. Stops when the max-abs change drops
    below eps or after max_iter iterations.
    """
    init = {nid: 0.0 for nid in graph.node_ids}
    for s in suspects:
        init[s] = 1.0
    if seeds:
        for nid, val in seeds.items():
            init[nid] = max(init[nid], float(val))
    key = (graph, tuple(sorted(init.items())), decay, max_iter, eps)
    return _trust_propagate_cached(key)


@lru_cache(maxsize=256)
def _trust_propagate_cached(key) -> TrustMap:
    graph, init_items, decay, max_iter, eps = key
    taint = dict(init_items)
    neighbors = {nid: sorted(graph.symmetric_neighbors(nid)) for nid in taint}
    iterations = 0
    delta = 0.0
    for _ in range(max_iter):
        iterations += 1
        nxt = {}
        for nid, nbrs in neighbors.items():
            if nbrs:
                mean = sum(taint[u] for u in nbrs) / len(nbrs)
                update = (1.0 - taint[nid]) * mean * decay
                nxt[nid] = min(1.0, taint[nid] + update)
            else:
                nxt[nid] = taint[nid]
        delta = max(abs(nxt[n] - taint[n]) for n in taint)
        taint = nxt
        if delta < eps:
            break
    trust = {nid: 1.0 - t for nid, t in taint.items()}
    return TrustMap(taint=taint, trust=trust, iterations_used=iterations,
                    converged=delta < eps)


def select_guardian(graph: TopologyGraph, trustmap: TrustMap) -> str:
    """Most-tainted neighbor of the least-trusted node; ties break by id."""
    vulnerable = min(trustmap.trust, key=lambda n: (trustmap.trust[n], n))
    nbrs = sorted(graph.symmetric_neighbors(vulnerable))
    if not nbrs:
        raise GuardianError(f"node {vulnerable!r} has no neighbors")
    return max(nbrs, key=lambda n: (trustmap.taint[n], [-ord(c) for c in n]))


@dataclass(frozen=True)
class DefenseRule:
    rule_id: str
    action: str
    severity: str
    target_node: str
    reason: str
    details: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> str:
        doc = {"rule_id": self.rule_id, "action": self.action,
               "severity": self.severity, "target_node": self.target_node,
               "reason": self.reason, "details": self.details}
        return json.dumps(doc, indent=2, sort_keys=True)


def generate_rule(guard: str, trustmap: TrustMap, clock=None,
                  thresholds: Thresholds | None = None) -> DefenseRule:
    """Access-control rule derived from the guard node's final taint."""
    if thresholds is None:
        thresholds = Thresholds()
    if clock is None:
        clock = time.time
    taint = trustmap.taint[guard]
    if taint > thresholds.quarantine_above:
        action, severity = ACTION_QUARANTINE, "CRITICAL"
        reason = f"taint {taint:.3f} above quarantine threshold on {guard}"
    elif taint > thresholds.restrict_above:
        action, severity = ACTION_RESTRICTED, "HIGH"
        reason = f"taint {taint:.3f} warrants restricted operation on {guard}"
    else:
        action, severity = ACTION_LOG, "MEDIUM"
        reason = f"taint {taint:.3f} on {guard}; logging suspicious activity"
    canonical = json.dumps([action, guard, round(taint, 6)], sort_keys=True)
    rule_id = hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
    details = {"taint": dict(sorted(trustmap.taint.items())),
               "trust": dict(sorted(trustmap.trust.items())),
               "iterations": trustmap.iterations_used,
               "converged": trustmap.converged,
               "generated_at": float(clock())}
    return DefenseRule(rule_id=rule_id, action=action, severity=severity,
                       target_node=guard, reason=reason, details=details)


def enforce(rule: DefenseRule, agent_id: str, operation: str) -> str:
    """Decision for an agent's operation under one rule."""
    if operation not in OPERATIONS:
        raise ValueError(f"unknown operation class {operation!r}")
    if agent_id != rule.target_node:
        return DECISION_ALLOW
    if rule.action == ACTION_QUARANTINE:
        return DECISION_DENY
    if rule.action == ACTION_RESTRICTED:
        return DECISION_ALLOW if operation == "read" else DECISION_DENY
    return DECISION_ALLOW_LOGGED


class RuleStore:
    """Single-writer rule file with atomic replacement; readers see whole rules."""

    def __init__(self, path):
        self.path = str(path)

    def publish(self, rule: DefenseRule):
        directory = os.path.dirname(os.path.abspath(self.path)) or "."
        fd, tmp = tempfile.mkstemp(prefix=".defense_rule_", dir=directory)
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(rule.to_json())
            os.replace(tmp, self.path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise

    def load(self) -> DefenseRule | None:
        try:
            with open(self.path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            return None
        return DefenseRule(rule_id=doc["rule_id"], action=doc["action"],
                           severity=doc["severity"], target_node=doc["target_node"],
                           reason=doc["reason"], details=doc.get("details", {}))


def update_policy(current: Thresholds, feedback, updater=None):
    """Apply a pluggable threshold updater; identity by default.

    Returns (thresholds, events). Non-identity updates bump the version and
    emit a policy-version event.
    """
    if updater is None:
        return current, []
    proposed = updater(current, feedback)
    base = (proposed.sim_high_below, proposed.sim_low_above,
            proposed.quarantine_above, proposed.restrict_above)
    if base == (current.sim_high_below, current.sim_low_above,
                current.quarantine_above, current.restrict_above):
        return current, []
    updated = Thresholds(*base, version=current.version + 1)
    return updated, [("policy_version", updated.version)]


class DefenseMonitor:
    """Per-simulation defense state: alert intake, rule generation, enforcement.

    One writer updates the rule set (and optional rule file); agents query
    check() before operations.
    """

    def __init__(self, graph: TopologyGraph, similarity=None,
                 thresholds: Thresholds | None = None, rule_store: RuleStore | None = None,
                 decay: float = 0.05, max_iter: int = 100, eps: float = 1e-4,
                 clock=None):
        self.graph = graph
        self.similarity = similarity or cosine_similarity
        self.thresholds = thresholds or Thresholds()
        self.rule_store = rule_store
        self.decay = decay
        self.max_iter = max_iter
        self.eps = eps
        self.clock = clock or (lambda: 0.0)
        self.rules = {}
        self.events = []

    def observe(self, agent_id: str, visual_summary: str, agent_summary: str):
        """Cross-modal check of one edge agent; may generate and publish a rule."""
        sim, level = cross_modal_validate(visual_summary, agent_summary,
                                          self.similarity, self.thresholds)
        self.events.append(("alert", agent_id, round(sim, 6), level))
        if level == ALERT_LOW:
            return None
        seed = 1.0 if level == ALERT_HIGH else 0.5
        trustmap = trust_propagate(self.graph, set(), decay=self.decay,
                                   max_iter=self.max_iter, eps=self.eps,
                                   seeds={agent_id: seed})
        guard = select_guardian(self.graph, trustmap)
        rule = generate_rule(guard, trustmap, clock=self.clock,
                             thresholds=self.thresholds)
        self.rules[rule.target_node] = rule
        self.events.append(("rule", rule.rule_id, rule.action, rule.target_node))
        if self.rule_store is not None:
            self.rule_store.publish(rule)
        if agent_id != guard:
            # Contain the suspect itself, not only its guardian: the guardian
            # can sit off the attack route, and a quarantined suspect must not
            # keep operating while its neighborhood is analyzed.
            suspect_rule = generate_rule(agent_id, trustmap, clock=self.clock,
                                         thresholds=self.thresholds)
            self.rules[suspect_rule.target_node] = suspect_rule
            self.events.append(("rule", suspect_rule.rule_id,
                                suspect_rule.action, suspect_rule.target_node))
        return rule

    def check(self, agent_id: str, operation: str) -> str:
        """Most restrictive decision across the active rules."""
        order = {DECISION_DENY: 2, DECISION_ALLOW_LOGGED: 1, DECISION_ALLOW: 0}
        decision = DECISION_ALLOW
        for rule in self.rules.values():
            verdict = enforce(rule, agent_id, operation)
            if order[verdict] > order[decision]:
                decision = verdict
        return decision

    def update_policy(self, feedback, updater=None):
        self.thresholds, events = update_policy(self.thresholds, feedback, updater)
        self.events.extend(events)
        return self.thresholds
