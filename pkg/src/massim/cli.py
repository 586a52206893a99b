"""Command-line entry point.

Subcommands are thin adapters over the library modules: gen-topology,
propagate, plan-attack, payload build/trace, injection prob, simulate,
defend, report. Exit codes: 0 success, 1 usage error, 2 runtime or
validation error. All output is deterministic for a fixed seed.
"""

from __future__ import annotations

import sys

import click

from . import harness, metrics, payload as payload_mod, topology
from .injection import HookModelParams, Perturbation, hook_probability
from .propagation import PropagationParams, init_taint, optimal_path, step

DEFAULT_SEED = 42


def _write(out, text):
    if out is None:
        click.echo(text, nl=False)
    else:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _load_topology(ref):
    return harness.resolve_topology(ref)


@click.group()
def cli():
    """Simulation toolkit for multi-hop attacks on agent topologies."""


@cli.command("gen-topology")
@click.option("--name", required=True,
              type=click.Choice(sorted(topology.CANONICAL_NAMES) + ["example10"]))
@click.option("--out", default=None, type=click.Path())
def gen_topology(name, out):
    """Write a built-in topology as a config file."""
    graph = harness.resolve_topology(name)
    _write(out, topology.save_topology(graph))


@cli.command("propagate")
@click.option("--topology", "topo", required=True)
@click.option("--entry", default=None, help="start node; defaults to the entry set")
@click.option("--p", default=1.4, type=float)
@click.option("--delta", default=0.9, type=float)
@click.option("--max-steps", default=100, type=int)
@click.option("--out", default=None, type=click.Path())
def propagate_cmd(topo, entry, p, delta, max_steps, out):
    """Run taint propagation to steady state; emit per-step CSV (t, node, taint)."""
    graph = _load_topology(topo)
    params = PropagationParams(p=p, delta=delta, max_steps=max_steps)
    start = {entry} if entry else set(graph.entry_set)
    if entry and entry not in graph.entry_set:
        graph = topology.with_entry_set(graph, graph.entry_set | {entry})
    lines = ["t,node,taint"]
    state = init_taint(graph, start)
    prev_infected = state.infected
    for nid in graph.node_ids:
        lines.append(f"0,{nid},{state.taint(nid):.4f}")
    for _ in range(params.max_steps):
        state = step(graph, state, params)
        for nid in graph.node_ids:
            lines.append(f"{state.t},{nid},{state.taint(nid):.4f}")
        if state.infected == prev_infected:
            break
        prev_infected = state.infected
    _write(out, "\n".join(lines) + "\n")


@cli.command("plan-attack")
@click.option("--topology", "topo", required=True)
@click.option("--p", default=1.4, type=float)
@click.option("--delta", default=0.9, type=float)
@click.option("--out", default=None, type=click.Path())
def plan_attack(topo, p, delta, out):
    """Print the strongest entry-to-target attack path and its strength."""
    graph = _load_topology(topo)
    path = optimal_path(graph, PropagationParams(p=p, delta=delta))
    text = ("path: " + " -> ".join(path.nodes) + "\n"
            + f"strength: {path.strength:.4f}\n")
    _write(out, text)


@cli.group("payload")
def payload_group():
    """Build or trace a nested per-hop payload."""


def _payload_path(topo, path_opt, p, delta):
    graph = _load_topology(topo)
    if path_opt:
        nodes = tuple(path_opt.split(","))
        for nid in nodes:
            if nid not in graph:
                raise topology.TopologyError(f"path node {nid!r} not in topology")
        return graph, nodes
    return graph, optimal_path(graph, PropagationParams(p=p, delta=delta)).nodes


@payload_group.command("build")
@click.option("--topology", "topo", required=True)
@click.option("--path", "path_opt", default=None, help="comma-separated node ids")
@click.option("--directive", default="rm /root/abc")
@click.option("--p", default=1.4, type=float)
@click.option("--delta", default=0.9, type=float)
@click.option("--out", default=None, type=click.Path())
def payload_build(topo, path_opt, directive, p, delta, out):
    """Emit the nested payload, one block per layer, outermost first."""
    graph, nodes = _payload_path(topo, path_opt, p, delta)
    built = payload_mod.encapsulate(nodes, payload_mod.Directive(directive),
                                    payload_mod.default_templates(), graph)
    blocks = [f"path: {' -> '.join(nodes)}", f"depth: {built.depth}"]
    for i, layer in enumerate(built.layers):
        blocks += [f"--- layer {i} ({layer.template_id}) ---", layer.wrapper_text]
    _write(out, "\n".join(blocks) + "\n")


@payload_group.command("trace")
@click.option("--topology", "topo", required=True)
@click.option("--path", "path_opt", default=None, help="comma-separated node ids")
@click.option("--directive", default="rm /root/abc")
@click.option("--fidelity", default=1.0, type=float)
@click.option("--seed", default=DEFAULT_SEED, type=int)
@click.option("--p", default=1.4, type=float)
@click.option("--delta", default=0.9, type=float)
@click.option("--out", default=None, type=click.Path())
def payload_trace(topo, path_opt, directive, fidelity, seed, p, delta, out):
    """Relay the payload hop by hop; emit CSV (hop, agent, preserved, terminal_match)."""
    graph, nodes = _payload_path(topo, path_opt, p, delta)
    system = harness.build_system(graph, {role: {"fidelity": fidelity}
                                          for role in topology.ROLES})
    built = payload_mod.encapsulate(nodes, payload_mod.Directive(directive),
                                    payload_mod.default_templates(), graph)
    trace = payload_mod.simulate_propagation(nodes, built, system.agents, seed)
    lines = ["hop,agent,preserved,terminal_match"]
    for i, hop in enumerate(trace.hops):
        lines.append(f"{i},{hop.agent_id},{hop.preserved},{trace.terminal_match}")
    lines.append(f"{len(trace.hops)},{nodes[-1]},{trace.terminal_match},{trace.terminal_match}")
    _write(out, "\n".join(lines) + "\n")


@cli.group("injection")
def injection_group():
    """Visual attention-hook model."""


@injection_group.command("prob")
@click.option("--dsize", required=True, type=float)
@click.option("--dpos", required=True, type=float)
@click.option("--k1", default=0.32, type=float)
@click.option("--k2", default=-0.18, type=float)
def injection_prob(dsize, dpos, k1, k2):
    """Print the capture probability for a perturbation."""
    params = HookModelParams(k1=k1, k2=k2)
    prob = hook_probability(Perturbation(delta_size=dsize, delta_pos=dpos), params)
    click.echo(f"{prob:.6f}")


def _trace_csv(traceset):
    lines = ["trial,step,agent,kind,outcome,adversarial,flagged,"
             "inject_step,block_step,final_step,step_duration,digest,detail"]
    for idx, trace in enumerate(traceset.traces):
        block = "" if trace.block_step is None else trace.block_step
        for ev in trace.events:
            lines.append(f"{idx},{ev.step},{ev.agent},{ev.kind},{trace.outcome},"
                         f"{trace.adversarial},{trace.flagged},{trace.inject_step},"
                         f"{block},{trace.final_step},{trace.step_duration},"
                         f"{ev.digest},{ev.detail}")
    return "\n".join(lines) + "\n"


def _summary_block(traceset):
    counts = {}
    for t in traceset.traces:
        counts[t.outcome] = counts.get(t.outcome, 0) + 1
    parts = [f"trials: {len(traceset.traces)}"]
    for outcome in harness.OUTCOMES:
        if outcome in counts:
            parts.append(f"{outcome}: {counts[outcome]}")
    parts.append(f"digest: {traceset.digest()}")
    return "\n".join(parts) + "\n"


def _run_scenario(scenario_path, trials, seed, defense=None):
    scenario, agent_params = harness.load_scenario_file(scenario_path)
    updates = {}
    if trials is not None:
        updates["trial_count"] = trials
    if seed is not None:
        updates["rng_seed"] = seed
    if defense is not None:
        updates["defense_enabled"] = defense
    if updates:
        from dataclasses import replace
        scenario = replace(scenario, **updates)
    system = harness.build_system(harness.resolve_graph(scenario), agent_params)
    return harness.run_experiment(system, scenario)


@cli.command("simulate")
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True))
@click.option("--trials", default=None, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--out", default=None, type=click.Path())
def simulate_cmd(scenario_path, trials, seed, out):
    """Run a scenario; emit per-event CSV plus a summary block."""
    traceset = _run_scenario(scenario_path, trials, seed)
    _write(out, _trace_csv(traceset))
    click.echo(_summary_block(traceset), nl=False)


@cli.command("defend")
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True))
@click.option("--trials", default=None, type=int)
@click.option("--seed", default=None, type=int)
@click.option("--out", default=None, type=click.Path())
def defend_cmd(scenario_path, trials, seed, out):
    """Run a scenario with the defense enabled; report blocked/allowed counts."""
    traceset = _run_scenario(scenario_path, trials, seed, defense=True)
    if out is not None:
        _write(out, _trace_csv(traceset))
    blocked = sum(1 for t in traceset.traces if t.outcome == "blocked")
    allowed = sum(1 for t in traceset.traces if t.outcome == "executed")
    other = len(traceset.traces) - blocked - allowed
    click.echo(f"blocked: {blocked}\nallowed: {allowed}\nother: {other}")
    click.echo(_summary_block(traceset), nl=False)


@cli.command("report")
@click.option("--traces", "traces_path", required=True, type=click.Path(exists=True))
@click.option("--out", default=None, type=click.Path())
def report_cmd(traces_path, out):
    """Compute the metrics report from a simulate/defend trace CSV."""
    import csv as csv_lib

    with open(traces_path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv_lib.DictReader(fh))
    if not rows:
        raise metrics.MetricsError("trace file has no rows")
    by_trial = {}
    for row in rows:
        by_trial.setdefault(row["trial"], row)
    traces = []
    for row in by_trial.values():
        block = row["block_step"]
        traces.append(harness.Trace(
            events=(), outcome=row["outcome"],
            adversarial=row["adversarial"] == "True",
            flagged=row["flagged"] == "True",
            inject_step=int(row["inject_step"]),
            final_step=int(row["final_step"]),
            block_step=int(block) if block != "" else None,
            step_duration=float(row["step_duration"]),
            resources={}))
    report = metrics.MetricsReport()
    report.asr = metrics.asr(traces)
    dr, fpr = metrics.detection_metrics(traces)
    report.dr, report.fpr = dr, fpr
    if any(t.adversarial for t in traces):
        report.sbr, report.sbl = metrics.blocking_metrics(traces)
    text = metrics.render_report_csv(report)
    _write(out, text)
    click.echo(metrics.render_report_summary(report), nl=False)


def main(argv=None) -> int:
    """Dispatch argv; returns 0 on success, 1 on usage error, 2 on runtime error."""
    if argv is None:
        argv = sys.argv[1:]
    try:
        cli.main(args=list(argv), prog_name="massim", standalone_mode=False)
        return 0
    except click.exceptions.Exit as exc:
        return 0 if exc.exit_code == 0 else 1
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        if exc.ctx is not None:
            click.echo(exc.ctx.get_help(), err=True)
        return 1
    except click.Abort:
        return 1
    except Exception as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
