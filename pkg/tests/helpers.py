"""Shared generators for tests."""

import random

from guiflow.core import GuiFlow, SubtaskSpec
from guiflow.reward import CompletionSpec
from guiflow.synth import random_graph


def random_walk(g, rng, length, start=None):
    """A walk following live edges; stops early at a dead end."""
    page = start or g.home
    steps = []
    for _ in range(length):
        edges = g.live_edges(page)
        if not edges:
            break
        e = rng.choice(edges)
        steps.append((page, e.action))
        page = e.dst
    return GuiFlow("walk", tuple(steps), (), page)


def random_case(seed, max_nodes=12, depth=6):
    """A random graph with a satisfiable spec drawn from a short walk."""
    rng = random.Random(seed)
    while True:
        g = random_graph(rng, n_pages=rng.randint(3, max_nodes), edge_prob=rng.uniform(0.3, 0.7),
                         min_elements=1, max_elements=3)
        walk = random_walk(g, rng, rng.randint(1, 4))
        if not walk.steps:
            continue
        subs = [SubtaskSpec.operate(p, a) for p, a in walk.steps if rng.random() < 0.4]
        if not subs or rng.random() < 0.7:
            subs.append(SubtaskSpec.reach(walk.terminal_page))
        spec = CompletionSpec(tuple(subs), depth)
        return g, spec, rng


def annotated_flows(g, cfg, n, rng):
    from guiflow.sampler import generate_task_text, sample_flows

    out = []
    for f in sample_flows(g, cfg, n):
        task, descs = generate_task_text(f, g, rng=rng)
        out.append(GuiFlow(task, f.steps, tuple(descs), f.terminal_page))
    return out


def preference_dataset(n_pairs=1000, seed=0):
    """DPO contexts from random graphs, random-agent rollouts and sampled flows."""
    from guiflow.policy import pair_contexts
    from guiflow.reward import build_preference_pairs
    from guiflow.sampler import GraphTooSmall, SamplerConfig

    rng = random.Random(seed)
    data = []
    i = 0
    while len(data) < n_pairs:
        i += 1
        g = random_graph(rng, n_pages=12, edge_prob=0.6)
        try:
            flows = annotated_flows(g, SamplerConfig(seed=i, max_attempts=200), 8, rng)
        except GraphTooSmall:
            continue
        agent = random.Random(i)
        batch = [(f, [agent.choice(g.page(p).action_space) for p, _ in f.steps]) for f in flows]
        data += pair_contexts(build_preference_pairs(g, batch, rng=rng), g)
    return data[:n_pairs]


def random_policy_instance(seed, dim=128):
    """A random page, task, history and weights for gradient checks."""
    import numpy as np

    from guiflow.policy import LinearPolicy, FeatureHasher, PairContext, SFTExample
    from guiflow.actionspace import unique_action_space

    rng = random.Random(seed)
    nrng = np.random.default_rng(seed)
    g = random_graph(rng, n_pages=6, min_elements=2, max_elements=5)
    hasher = FeatureHasher(dim, seed % 7)
    policy = LinearPolicy(nrng.normal(size=dim), beta=rng.choice([0.1, 0.5, 1.0]), hasher=hasher)
    reference = LinearPolicy(nrng.normal(size=dim), beta=policy.beta, hasher=hasher)
    sft, dpo = [], []
    for _ in range(rng.randint(1, 4)):
        page = g.page(rng.choice(list(g.pages)))
        space = unique_action_space(page)
        hist = tuple(rng.choice(space) for _ in range(rng.randint(0, 4)))
        task = " ".join(rng.choice(["open", "cart", "find", "red", "shoes", "settings"]) for _ in range(4))
        sft.append(SFTExample(task, page, hist, rng.choice(space)))
        if len(space) >= 2:
            w, l = rng.sample(space, 2)
            dpo.append(PairContext(task, page, hist, w, l))
    return policy, reference, sft, dpo
