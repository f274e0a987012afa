"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are
printed even when output capture is on.
"""

import json
import math
import random
import socket
import sys
import threading
import time
from collections import Counter
from contextlib import contextmanager
from fractions import Fraction

import numpy as np
import pytest

from guiflow import fixtures
from guiflow.actionspace import GestureKind, align_action
from guiflow.bridge import BridgeAgent, ProcessTransport, SocketTransport, serve_tcp_once
from guiflow.cli import main
from guiflow.core import DEFAULT_SCREEN, Action, ActionKind, BoundingBox, GuiFlow
from guiflow.episode import GoldenAgent, NeverCompleteAgent, Termination, run_episode
from guiflow.io import canonical_json, load_graph, read_jsonl
from guiflow.metrics import judge_iou, judge_text, score_run, token_f1
from guiflow.policy import CompiledDPO, CompiledSFT, LinearPolicy, SFTExample, dpo_loss_and_grad, sft_loss_and_grad, train
from guiflow.reward import RewardLevel, build_preference_pairs, candidate_actions, classify_action, spec_for_flow
from guiflow.sampler import GraphTooSmall, SamplerConfig, sample_flows
from guiflow.subtasks import extract_operation_subtasks, extract_reaching_subtasks
from guiflow.synth import off_space_action, random_graph, random_page

import oracles
from helpers import preference_dataset, random_case, random_policy_instance, random_walk


@pytest.fixture
def verdict(capsys):
    """Context manager printing ``PASS`` or ``FAIL`` with a label and timing."""
    @contextmanager
    def check(label):
        t0 = time.perf_counter()
        try:
            yield
        except BaseException:
            with capsys.disabled():
                print(f"\nFAIL  {label}  ({time.perf_counter() - t0:.2f} s)")
            raise
        with capsys.disabled():
            print(f"\nPASS  {label}  ({time.perf_counter() - t0:.2f} s)")
    return check


def test_c01_action_alignment(verdict):
    with verdict("C1 action alignment coordinates"):
        t0 = time.perf_counter()
        tap = align_action(Action.click("x", BoundingBox(273, 84, 324, 180)))
        swipe = align_action(Action.scroll("", BoundingBox(0, 528, 720, 960), "left"))
        elapsed = time.perf_counter() - t0
        assert (tap.kind, tap.start) == (GestureKind.TAP, (298, 132))
        assert (swipe.kind, swipe.start, swipe.end) == (GestureKind.SWIPE, (360, 744), (180, 744))
        assert elapsed < 1e-3, elapsed


def test_c02_action_space(verdict):
    with verdict("C2 action-space enumeration and cardinality law"):
        space = fixtures.search_page().action_space
        kinds = Counter(a.kind for a in space)
        assert kinds == {ActionKind.CLICK: 1, ActionKind.SCROLL: 4, ActionKind.INPUT: 1, ActionKind.COMPLETE: 1}
        assert {a.direction.value for a in space if a.kind is ActionKind.SCROLL} == {"up", "down", "left", "right"}
        rng = random.Random(2024)
        for i in range(1000):
            page = random_page(rng, f"p{i}", min_elements=0, max_elements=8)
            c = sum(e.clickable for e in page.elements)
            s = sum(e.scrollable for e in page.elements)
            n = sum(e.inputtable for e in page.elements)
            assert len(page.action_space) == c + 4 * s + n + 1
            assert [oracles.key(a) for a in page.action_space] == oracles.expected_space_keys(page)


def _branching_history(g, names):
    steps, page = [], "P0"
    for n in names:
        a = fixtures.branching_action(g, page, n)
        steps.append((page, a))
        page = g.transition(page, a)
    return GuiFlow("buy", tuple(steps), (), page)


def test_c03_reward_oracle_agreement(verdict):
    with verdict("C3 reward levels agree with the brute-force oracle"):
        t0 = time.perf_counter()
        levels = Counter()
        for seed in range(200):
            g, spec, rng = random_case(seed, max_nodes=12, depth=6)
            assert len(g.pages) <= 12
            best = oracles.best_completions(g, g.home, spec, 6)
            cache = {}
            for n in range(3):
                h = random_walk(g, rng, n)
                page = h.terminal_page
                for a in candidate_actions(g, page) + [off_space_action(g.page(page)), Action.complete()]:
                    want = oracles.classify(g, g.home, h.actions(), a, spec, 6, best)
                    assert classify_action(g, page, h, a, spec, cache).name.lower() == want, (seed, a)
                    levels[want] += 1
        assert set(levels) == {"golden", "longer", "incomplete", "invalid"}, levels

        g = fixtures.branching_graph()
        spec = fixtures.branching_spec(g)
        start = _branching_history(g, [])
        after_a01 = _branching_history(g, ["a01"])
        assert classify_action(g, "P0", start, fixtures.branching_action(g, "P0", "a00"), spec) is RewardLevel.GOLDEN
        assert classify_action(g, "P0", start, fixtures.branching_action(g, "P0", "a02"), spec) is RewardLevel.LONGER
        a14 = fixtures.branching_action(g, "P1_1", "a14")
        assert classify_action(g, "P1_1", after_a01, a14, spec) is RewardLevel.INCOMPLETE
        assert time.perf_counter() - t0 < 60


def test_c04_preference_pairs_strictly_ordered(verdict):
    with verdict("C4 preference pairs strictly ordered under re-classification"):
        depth = 6
        violations = 0
        n = 0
        rng = random.Random(4)
        for i in range(40):
            g = random_graph(rng, n_pages=10, edge_prob=0.6, max_elements=4)
            try:
                flows = sample_flows(g, SamplerConfig(min_len=3, max_len=4, seed=i, max_attempts=100), 5)
            except GraphTooSmall:
                continue
            flows = [GuiFlow(f"task {i}.{j}", f.steps, (), f.terminal_page) for j, f in enumerate(flows)]
            agent = random.Random(i)
            batch = [(f, [agent.choice(g.page(p).action_space) for p, _ in f.steps]) for f in flows]
            by_task = {f.task: f for f in flows}
            bests = {}
            for pair in build_preference_pairs(g, batch, lambda f: spec_for_flow(f, depth), rng=random.Random(i)):
                f = by_task[pair.task]
                spec = spec_for_flow(f, depth)
                best = bests.setdefault(pair.task, oracles.best_completions(g, f.start_page, spec, depth))
                hist = list(pair.history)
                hi = RewardLevel[oracles.classify(g, f.start_page, hist, pair.chosen, spec, depth, best).upper()]
                lo = RewardLevel[oracles.classify(g, f.start_page, hist, pair.rejected, spec, depth, best).upper()]
                violations += not hi > lo
                n += 1
        assert n > 100
        assert violations == 0


def _fd_grad(f, w, eps=1e-4):
    out = np.zeros_like(w)
    for i in range(w.size):
        e = np.zeros_like(w)
        e[i] = eps
        out[i] = (f(w + e) - f(w - e)) / (2 * eps)
    return out


def _rel_err(a, b):
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return 0.0 if scale < 1e-12 else float(np.linalg.norm(a - b) / scale)


def test_c05_losses_and_gradients(verdict):
    with verdict("C5 DPO/SFT loss values and finite-difference gradients"):
        t0 = time.perf_counter()
        g = fixtures.mall_graph()
        uniform = LinearPolicy.zeros(128)
        for pid in g.pages:
            page = g.page(pid)
            gold = page.action_space[0]
            n = len({a.match_key() for a in page.action_space})
            loss, _ = sft_loss_and_grad(uniform, [SFTExample("task", page, (), gold)])
            assert abs(loss - math.log(n)) <= 1e-9
        checked = 0
        for seed in range(100):
            policy, reference, sft, dpo = random_policy_instance(seed, dim=128)
            if dpo:
                loss, _ = dpo_loss_and_grad(policy, policy.copy(), dpo)
                assert abs(loss - math.log(2)) <= 1e-9
                d = CompiledDPO(policy.hasher, dpo, reference)
                _, grad = d.loss_and_grad(policy.weights, policy.beta)
                fd = _fd_grad(lambda w: d.loss_and_grad(w, policy.beta)[0], policy.weights)
                assert _rel_err(grad, fd) < 1e-5, seed
            c = CompiledSFT(policy.hasher, sft)
            _, grad = c.loss_and_grad(policy.weights)
            assert _rel_err(grad, _fd_grad(lambda w: c.loss_and_grad(w)[0], policy.weights)) < 1e-5, seed
            checked += 1
        assert checked == 100
        assert time.perf_counter() - t0 < 30


def test_c06_dpo_training(verdict):
    with verdict("C6 DPO training separates 1,000 synthetic pairs"):
        t0 = time.perf_counter()
        data = preference_dataset(1000, seed=0)
        assert len(data) == 1000
        start = LinearPolicy.zeros()
        result = train(start, data, "dpo", steps=200, lr=50.0)
        margins = CompiledDPO(start.hasher, data, start).margins(result.policy.weights, start.beta)
        frac = float((margins > 0).mean())
        print(f"positive margins: {frac:.4f}; mean margin {result.margins[0]:.4f} -> {result.margins[-1]:.4f}")
        assert frac >= 0.95
        assert result.margins[-1] > result.margins[0]
        assert time.perf_counter() - t0 < 60


def test_c07_metrics(verdict):
    with verdict("C7 metrics: token F1, IoU boundary, golden replay, alternate route"):
        assert token_f1("xiaomi 14 phone", "xiaomi 14") == 0.8
        assert oracles.token_f1("xiaomi 14 phone", "xiaomi 14") == Fraction(4, 5)
        box = BoundingBox(0, 0, 10, 10)
        assert not judge_text(Action.input("q", box, "xiaomi 14 phone"), Action.input("q", box, "xiaomi 14"))

        gold_box = BoundingBox(200, 200, 210, 210)
        x1, y1, x2, y2 = oracles.expanded_box(gold_box, 720, 1280, Fraction(14, 100))
        gold = Action.click("g", gold_box)

        def hit(b):
            return judge_iou(Action.click("p", b), gold, DEFAULT_SCREEN)

        assert hit(BoundingBox(x2, 300, x2 + 10, 310)) and not hit(BoundingBox(x2 + 1, 300, x2 + 11, 310))
        assert hit(BoundingBox(x1 - 10, 300, x1, 310)) and not hit(BoundingBox(x1 - 11, 300, x1 - 1, 310))
        assert hit(BoundingBox(300, y2, 310, y2 + 5)) and not hit(BoundingBox(300, y2 + 1, 310, y2 + 6))
        assert hit(BoundingBox(300, y1 - 5, 310, y1)) and not hit(BoundingBox(300, y1 - 6, 310, y1 - 1))

        g, f = fixtures.mall_graph(), fixtures.mall_flow()
        report = score_run([run_episode(g, GoldenAgent(f), f.task, start=f.start_page)], [f], None, g)
        assert len(report.ratios()) == 5
        assert report.ratios() == {k: 1.0 for k in report.ratios()}

        g = fixtures.two_route_graph()
        golden, alt = fixtures.two_route_flows(g)
        report = score_run([run_episode(g, GoldenAgent(alt), golden.task)], [golden], None, g)
        assert report.task_success_rate == 1.0 and report.task_iou_acc < 1.0


def _first_action_trace(g):
    class First:
        def decide(self, task, page, action_space, history):
            return action_space[0]
    return run_episode(g, First(), "go").to_dict()


def test_c08_episode_runner(verdict):
    with verdict("C8 episode cap, golden replay, bridge transports"):
        g = fixtures.demo_graph()
        trace = run_episode(g, NeverCompleteAgent(), "never done")
        assert len(trace) == 15 and trace.terminated_by is Termination.STEP_LIMIT

        mg, f = fixtures.mall_graph(), fixtures.mall_flow()
        replay = run_episode(mg, GoldenAgent(f), f.task, start=f.start_page).to_flow()
        want = GuiFlow(f.task, f.steps, (), f.terminal_page)
        assert canonical_json(replay.to_dict()) == canonical_json(want.to_dict())

        want = _first_action_trace(g)
        agent = BridgeAgent(ProcessTransport([sys.executable, "-m", "guiflow.bridge"]), timeout=10)
        try:
            assert run_episode(g, agent, "go").to_dict() == want
        finally:
            agent.close()

        server = socket.create_server(("127.0.0.1", 0))
        port = server.getsockname()[1]
        t = threading.Thread(target=serve_tcp_once, args=(server,), daemon=True)
        t.start()
        agent = BridgeAgent(SocketTransport(f"127.0.0.1:{port}"), timeout=10)
        try:
            assert run_episode(g, agent, "go").to_dict() == want
        finally:
            agent.close()
            t.join(5)
            server.close()


def _dir_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_c09_pipeline_determinism(verdict, tmp_path):
    with verdict("C9 pipeline determinism and flow validity"):
        assert main(["fixture", "demo", "--out", str(tmp_path / "fx")]) == 0
        graph = str(tmp_path / "fx" / "graph.json")
        runs = []
        for r in ("r1", "r2"):
            base = tmp_path / r
            assert main(["build-dataset", "--graph", graph, "--seed", "11", "--out", str(base / "ds")]) == 0
            flows = str(base / "ds" / "flows.jsonl")
            assert main(["build-prefs", "--graph", graph, "--flows", flows, "--agent", "random", "--seed", "11",
                         "--out", str(base / "prefs")]) == 0
            assert main(["eval", "--graph", graph, "--flows", flows, "--agent", "random", "--seed", "11",
                         "--out", str(base / "eval")]) == 0
            runs.append({d: _dir_bytes(base / d) for d in ("ds", "prefs", "eval")})
        assert runs[0] == runs[1]

        g = load_graph(graph)
        flows = read_jsonl(tmp_path / "r1" / "ds" / "flows.jsonl", GuiFlow.from_dict)
        assert flows
        for f in flows:
            assert 3 <= len(f) <= 10
            acts = f.actions()
            assert all(oracles.step_key(a) != oracles.step_key(b) for a, b in zip(acts, acts[1:]))
            assert all(oracles.in_space(g.page(p), a) for p, a in f.steps)
        manifest = json.loads((tmp_path / "r1" / "ds" / "manifest.json").read_text())
        assert manifest["seed"] == 11


VISIT = "Visit the {text} page."
NAVIGATE = "Help me navigate to {text} interface."


def test_c10_subtask_extraction(verdict):
    with verdict("C10 subtask extraction on the shopping fixture flow"):
        from guiflow.sampler import DatasetRegistry

        g, f = fixtures.mall_graph(), fixtures.mall_flow()
        reg = DatasetRegistry()
        reg.element_names.update(fixtures.MALL_KNOWN_ELEMENT_NAMES)
        picks = iter([VISIT, NAVIGATE])
        reach = extract_reaching_subtasks(f, g, reg, choose=lambda templates, rng: next(picks))
        ops = extract_operation_subtasks(f, g)
        assert [(s.target_page, s.task_text, len(sub.page_ids())) for s, sub in reach] == [
            ("P4", "Visit the search results page.", 4),
            ("P5", "Help me navigate to “Xiaomi 14” interface.", 5),
        ]
        assert [(s.target_page, len(sub.page_ids())) for s, sub in ops] == [("P6", 7), ("P7", 8)]
        assert ops[0][0].required_action == f.steps[5][1]
        assert ops[1][0].required_action == f.steps[6][1]
        assert len(reach) + len(ops) == 4
