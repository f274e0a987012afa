"""Command line pipeline: sample flows, split subtasks, build preference
pairs, train the toy policy, evaluate agents and run single episodes.

Every command writes its outputs plus a ``manifest.json`` into ``--out``.
Exit codes: 0 ok, 1 bad config or arguments, 2 bad data, 3 agent failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import random
import sys
from pathlib import Path
from typing import Any, Callable, Optional, Sequence

from . import __version__
from .bridge import BridgeAgent, ProcessTransport, SocketTransport
from .core import GuiFlow, GuiGraph
from .episode import (AgentProtocolError, EpisodeConfig, GoldenAgent, InvalidActionPolicy, PolicyAgent,
                      RandomAgent, run_episode)
from .io import (DataError, RunManifest, load_config, load_graph, read_jsonl, save_graph, write_jsonl)
from .metrics import AlignmentError, score_run
from .policy import LinearPolicy, Objective, pair_contexts, sft_examples, train
from .reward import EPISODE_STEP_CAP, NoGoldenFlow, PairSource, PreferencePair, build_preference_pairs, spec_for_flow
from .sampler import (DatasetRegistry, GraphTooSmall, SamplerConfig, filter_tasks, generate_task_text,
                      sample_flows)
from .subtasks import SimilarityConfig, extract_operation_subtasks, extract_reaching_subtasks
from . import fixtures

log = logging.getLogger("guiflow")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_AGENT = 0, 1, 2, 3

DEFAULTS: dict[str, Any] = {
    "min_len": 3,
    "max_len": 10,
    "max_attempts": 1000,
    "n_flows": 50,
    "max_task_len": 200,
    "jaccard_threshold": 0.8,
    "min_subflow_steps": 3,
    "known_element_names": "",
    "max_search_depth": None,
    "dim": 4096,
    "hash_seed": 0,
    "beta": 0.1,
    "lr": 0.5,
    "steps": 200,
    "batch_size": None,
    "max_steps": 15,
    "invalid_action_policy": "lenient",
    "iou_margin": 0.14,
    "iou_mode": "expand-intersect",
    "agent_timeout": 10.0,
}


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def resolve_config(path: Optional[str], overrides: dict[str, Any]) -> dict[str, Any]:
    cfg = dict(DEFAULTS)
    if path:
        try:
            loaded = load_config(path)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg.update(loaded)
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    return cfg


def load_graph_arg(spec: str) -> GuiGraph:
    """A graph file path, or ``fixture:<name>`` for a built-in graph."""
    if spec.startswith("fixture:"):
        name = spec.split(":", 1)[1]
        if name not in fixtures.FIXTURES:
            raise ConfigError(f"unknown fixture {name!r}; choose from {', '.join(fixtures.FIXTURES)}")
        return fixtures.FIXTURES[name]()
    return load_graph(spec)


def check_flows(flows: Sequence[GuiFlow], g: GuiGraph, source: str) -> None:
    for i, f in enumerate(flows):
        for pid in f.page_ids():
            if pid not in g:
                raise DataError(f"{source}: flow {i} refers to page {pid!r} missing from the graph")


class AgentFactory:
    """Builds the agent for each flow from an ``--agent`` spec.

    ``golden`` replays the flow it is given; ``random`` and ``policy:<ckpt>``
    are shared across flows; ``exec:<cmd>`` and ``tcp:<host:port>`` talk to
    one external agent over the line bridge.
    """

    def __init__(self, spec: str, seed: int, timeout: float):
        self.spec = spec
        kind, _, arg = spec.partition(":")
        self.kind = kind
        self._shared = None
        if kind == "golden":
            pass
        elif kind == "random":
            self._shared = RandomAgent(seed)
        elif kind == "policy":
            if not arg:
                raise ConfigError("policy agent needs a checkpoint: policy:<path>")
            try:
                self._shared = PolicyAgent(LinearPolicy.load(arg))
            except OSError as exc:
                raise DataError(f"cannot read checkpoint {arg}: {exc.strerror}") from exc
        elif kind in ("exec", "tcp"):
            if not arg:
                raise ConfigError(f"{kind} agent needs an argument: {kind}:<...>")
            try:
                transport = ProcessTransport(arg) if kind == "exec" else SocketTransport(arg, timeout)
            except (OSError, ValueError) as exc:
                raise AgentProtocolError(f"cannot start agent {spec!r}: {exc}") from exc
            self._shared = BridgeAgent(transport, timeout)
        else:
            raise ConfigError(f"unknown agent spec {spec!r}")

    def for_flow(self, flow: GuiFlow):
        if self.kind == "golden":
            return GoldenAgent(flow)
        return self._shared

    def close(self) -> None:
        if isinstance(self._shared, BridgeAgent):
            self._shared.close()


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, cfg: dict[str, Any], command: str) -> RunManifest:
    return RunManifest(command=command, seed=args.seed, config=cfg, version=__version__)


def _opt_int(v) -> Optional[int]:
    return None if v is None else int(v)


# -- commands ----------------------------------------------------------------

def cmd_fixture(args, cfg) -> int:
    out = _out_dir(args)
    g = fixtures.FIXTURES[args.name]()
    save_graph(g, out / "graph.json")
    man = _manifest(args, cfg, "fixture")
    man.add_output(out / "graph.json")
    if args.name == "mall":
        write_jsonl(out / "flows.jsonl", [fixtures.mall_flow()])
        (out / "config.json").write_text(json.dumps(
            {"known_element_names": ",".join(sorted(fixtures.MALL_KNOWN_ELEMENT_NAMES))}, indent=2) + "\n",
            encoding="utf-8")
        man.add_output(out / "flows.jsonl")
        man.add_output(out / "config.json")
    elif args.name == "two-route":
        write_jsonl(out / "flows.jsonl", [fixtures.two_route_flows(g)[0]])
        man.add_output(out / "flows.jsonl")
    man.write(out)
    print(f"wrote fixture {args.name!r} ({len(g)} pages, {len(g.edges)} edges) to {out}")
    return EXIT_OK


def cmd_build_dataset(args, cfg) -> int:
    g = load_graph_arg(args.graph)
    try:
        scfg = SamplerConfig(min_len=int(cfg["min_len"]), max_len=int(cfg["max_len"]), seed=args.seed,
                             max_attempts=int(cfg["max_attempts"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    registry = DatasetRegistry()
    flows = sample_flows(g, scfg, int(cfg["n_flows"]), registry)
    rng = random.Random(args.seed)
    annotated = []
    for f in flows:
        task, descs = generate_task_text(f, g, rng=rng)
        annotated.append(GuiFlow(task, f.steps, tuple(descs), f.terminal_page))
    kept = filter_tasks(annotated, registry, int(cfg["max_task_len"]))
    for f in kept:
        registry.register_task(f.task)
    out = _out_dir(args)
    write_jsonl(out / "flows.jsonl", kept)
    n_steps = sum(len(f) for f in kept)
    stats = {"sampled": len(flows), "kept": len(kept), "steps": n_steps,
             "steps_per_task": round(n_steps / len(kept), 4) if kept else 0.0}
    man = _manifest(args, cfg, "build-dataset")
    if not args.graph.startswith("fixture:"):
        man.add_input(args.graph)
    man.add_output(out / "flows.jsonl")
    man.stats = stats
    man.write(out)
    print(f"flows: {stats['kept']} kept of {stats['sampled']} sampled; steps: {n_steps}; "
          f"steps per task: {stats['steps_per_task']}")
    return EXIT_OK


def cmd_extract_subtasks(args, cfg) -> int:
    g = load_graph_arg(args.graph)
    flows = read_jsonl(args.flows, GuiFlow.from_dict)
    check_flows(flows, g, args.flows)
    registry = DatasetRegistry()
    known = [s.strip() for s in str(cfg["known_element_names"] or "").split(",") if s.strip()]
    registry.element_names.update(known)
    rng = random.Random(args.seed)
    simcfg = SimilarityConfig(float(cfg["jaccard_threshold"]))
    min_steps = int(cfg["min_subflow_steps"])
    records = []
    for i, f in enumerate(flows):
        found = extract_reaching_subtasks(f, g, registry, rng=rng, min_steps=min_steps)
        found += extract_operation_subtasks(f, g, simcfg, min_steps)
        for spec, sub in found:
            records.append({"source_flow": i, "kind": spec.kind.value, "spec": spec.to_dict(),
                            "flow": sub.to_dict()})
    out = _out_dir(args)
    write_jsonl(out / "subtasks.jsonl", records)
    man = _manifest(args, cfg, "extract-subtasks")
    man.add_input(args.flows)
    man.add_output(out / "subtasks.jsonl")
    n_reach = sum(r["kind"] == "reach" for r in records)
    man.stats = {"flows": len(flows), "reach": n_reach, "operate": len(records) - n_reach}
    man.write(out)
    print(f"subtasks: {n_reach} reaching, {len(records) - n_reach} operation from {len(flows)} flows")
    return EXIT_OK


def cmd_build_prefs(args, cfg) -> int:
    g = load_graph_arg(args.graph)
    flows = read_jsonl(args.flows, GuiFlow.from_dict)
    check_flows(flows, g, args.flows)
    factory = AgentFactory(args.agent, args.seed, float(cfg["agent_timeout"]))
    failures = []
    pairs: list[PreferencePair] = []
    depth = _opt_int(cfg["max_search_depth"])
    rng = random.Random(args.seed)
    try:
        for i, f in enumerate(flows):
            agent = factory.for_flow(f)
            decided = []
            try:
                for t, (pid, _) in enumerate(f.steps):
                    page = g.page(pid)
                    decided.append(agent.decide(f.task, page, list(page.action_space), f.actions()[:t]))
            except AgentProtocolError as exc:
                failures.append({"flow": i, "step": len(decided), "error": str(exc)})
                log.warning("flow %d: agent failed: %s", i, exc)
                continue
            pairs += build_preference_pairs(g, [(f, decided)], lambda fl: spec_for_flow(fl, depth), rng)
    finally:
        factory.close()
    out = _out_dir(args)
    write_jsonl(out / "prefs.jsonl", pairs)
    n_agent = sum(p.source is PairSource.AGENT_GENERATED for p in pairs)
    stats = {"pairs": len(pairs), "agent_generated": n_agent, "space_sampled": len(pairs) - n_agent,
             "failed_flows": len(failures),
             "longer_depth_cap": depth if depth is not None else f"min(2*golden, {EPISODE_STEP_CAP})"}
    man = _manifest(args, cfg, "build-prefs")
    man.add_input(args.flows)
    man.add_output(out / "prefs.jsonl")
    if failures:
        write_jsonl(out / "failures.jsonl", failures)
        man.add_output(out / "failures.jsonl")
    man.stats = stats
    man.write(out)
    print(f"pairs: {len(pairs)} (agent generated {n_agent}, space sampled {len(pairs) - n_agent}); "
          f"failed flows: {len(failures)}")
    return EXIT_AGENT if failures else EXIT_OK


def cmd_train(args, cfg) -> int:
    g = load_graph_arg(args.graph)
    objective = Objective(args.objective)
    if args.init:
        try:
            policy = LinearPolicy.load(args.init)
        except OSError as exc:
            raise DataError(f"cannot read checkpoint {args.init}: {exc.strerror}") from exc
    else:
        policy = LinearPolicy.zeros(int(cfg["dim"]), int(cfg["hash_seed"]), float(cfg["beta"]))
    if objective is Objective.SFT:
        flows = read_jsonl(args.data, GuiFlow.from_dict)
        check_flows(flows, g, args.data)
        dataset = sft_examples(flows, g)
    else:
        pairs = read_jsonl(args.data, PreferencePair.from_dict)
        for p in pairs:
            if p.page_id not in g:
                raise DataError(f"{args.data}: pair refers to page {p.page_id!r} missing from the graph")
        dataset = pair_contexts(pairs, g)
    if not dataset:
        raise DataError(f"{args.data}: empty dataset")
    steps = int(cfg["steps"])
    result = train(policy, dataset, objective, steps, float(cfg["lr"]), seed=args.seed,
                   batch_size=_opt_int(cfg["batch_size"]))
    out = _out_dir(args)
    result.policy.save(out / "checkpoint.json")
    with open(out / "loss.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "loss"] + (["mean_margin"] if result.margins else []))
        for i, loss in enumerate(result.losses):
            w.writerow([i, f"{loss:.10g}"] + ([f"{result.margins[i]:.10g}"] if result.margins else []))
    man = _manifest(args, cfg, f"train-{objective.value}")
    man.add_input(args.data)
    if args.init:
        man.add_input(args.init)
    man.add_output(out / "checkpoint.json")
    man.add_output(out / "loss.csv")
    man.stats = {"examples": len(dataset), "steps": steps, "initial_loss": result.losses[0],
                 "final_loss": result.losses[-1]}
    man.write(out)
    print(f"{objective.value}: {len(dataset)} examples, loss {result.losses[0]:.4f} -> {result.losses[-1]:.4f}")
    return EXIT_OK


def _episode_cfg(cfg) -> EpisodeConfig:
    try:
        return EpisodeConfig(int(cfg["max_steps"]), InvalidActionPolicy(cfg["invalid_action_policy"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def cmd_eval(args, cfg) -> int:
    g = load_graph_arg(args.graph)
    golds = read_jsonl(args.flows, GuiFlow.from_dict)
    check_flows(golds, g, args.flows)
    ecfg = _episode_cfg(cfg)
    factory = AgentFactory(args.agent, args.seed, float(cfg["agent_timeout"]))
    traces = []
    try:
        for f in golds:
            traces.append(run_episode(g, factory.for_flow(f), f.task, ecfg, start=f.start_page))
    finally:
        factory.close()
    report = score_run(traces, golds, None, g, margin=float(cfg["iou_margin"]), iou_mode=str(cfg["iou_mode"]),
                       max_steps=ecfg.max_steps)
    out = _out_dir(args)
    write_jsonl(out / "traces.jsonl", traces)
    (out / "metrics.json").write_text(report.to_json() + "\n", encoding="utf-8")
    man = _manifest(args, cfg, "eval")
    man.add_input(args.flows)
    man.add_output(out / "traces.jsonl")
    man.add_output(out / "metrics.json")
    man.stats = report.ratios()
    man.write(out)
    print(report.table())
    return EXIT_OK


def cmd_run_episode(args, cfg) -> int:
    g = load_graph_arg(args.graph)
    ecfg = _episode_cfg(cfg)
    if args.start is not None and args.start not in g:
        raise DataError(f"start page {args.start!r} not in graph")
    if args.agent == "golden":
        raise ConfigError("run-episode has no golden flow; use random, policy, exec or tcp")
    factory = AgentFactory(args.agent, args.seed, float(cfg["agent_timeout"]))
    try:
        trace = run_episode(g, factory.for_flow(None), args.task, ecfg, start=args.start)
    finally:
        factory.close()
    out = _out_dir(args)
    write_jsonl(out / "trace.jsonl", [trace])
    man = _manifest(args, cfg, "run-episode")
    man.add_output(out / "trace.jsonl")
    man.stats = {"steps": len(trace), "terminated_by": trace.terminated_by.value, "final_page": trace.final_page}
    man.write(out)
    for s in trace.visited:
        print(f"{s.page_id:>12}  {s.action.describe()}  [{s.outcome.value}]")
    print(f"ended by {trace.terminated_by.value} on {trace.final_page} after {len(trace)} steps")
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", help="flat JSON object of settings")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    with_graph = argparse.ArgumentParser(add_help=False)
    with_graph.add_argument("--graph", required=True, help="graph file or fixture:<name>")

    p = _Parser(prog="guiflow", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("fixture", parents=[common], help="write a built-in graph (and flows) to --out")
    s.add_argument("name", choices=sorted(fixtures.FIXTURES))
    s.set_defaults(func=cmd_fixture)

    s = sub.add_parser("build-dataset", parents=[common, with_graph], help="sample, annotate and filter flows")
    s.add_argument("--n-flows", type=int, dest="n_flows")
    s.set_defaults(func=cmd_build_dataset)

    s = sub.add_parser("extract-subtasks", parents=[common, with_graph], help="split flows into subtasks")
    s.add_argument("--flows", required=True)
    s.set_defaults(func=cmd_extract_subtasks)

    s = sub.add_parser("build-prefs", parents=[common, with_graph], help="build preference pairs")
    s.add_argument("--flows", required=True)
    s.add_argument("--agent", default="random")
    s.set_defaults(func=cmd_build_prefs)

    s = sub.add_parser("train", parents=[common, with_graph], help="train the linear policy")
    s.add_argument("--objective", choices=[o.value for o in Objective], required=True)
    s.add_argument("--data", required=True, help="flows.jsonl for sft, prefs.jsonl for dpo")
    s.add_argument("--init", help="starting checkpoint (also the DPO reference)")
    s.add_argument("--steps", type=int)
    s.add_argument("--lr", type=float)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common, with_graph], help="run an agent on golden flows and score it")
    s.add_argument("--flows", required=True)
    s.add_argument("--agent", default="golden")
    s.add_argument("--max-steps", type=int, dest="max_steps")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("run-episode", parents=[common, with_graph], help="run one agent episode")
    s.add_argument("--task", required=True)
    s.add_argument("--agent", default="random")
    s.add_argument("--start")
    s.add_argument("--max-steps", type=int, dest="max_steps")
    s.set_defaults(func=cmd_run_episode)
    return p


_OVERRIDES = ("n_flows", "steps", "lr", "max_steps")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    func: Callable = args.func
    try:
        cfg = resolve_config(args.config, {k: getattr(args, k, None) for k in _OVERRIDES})
        return func(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, GraphTooSmall, AlignmentError, NoGoldenFlow) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except AgentProtocolError as exc:
        print(f"agent error: {exc}", file=sys.stderr)
        return EXIT_AGENT


if __name__ == "__main__":
    sys.exit(main())
