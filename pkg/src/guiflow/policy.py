"""Toy linear softmax policy over a page's candidate actions.

Scores are ``w . phi(task, page, history, action)`` with hashed sparse
features; probabilities are a softmax over the page's action space. The
SFT objective is mean negative log-likelihood of the golden action, the
DPO objective the logistic loss on the beta-scaled difference of
policy-vs-reference log-ratios. Both come with exact gradients.
"""

from __future__ import annotations

import hashlib
import json
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from typing import Any, Iterable, NamedTuple, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .actionspace import space_index, unique_action_space
from .core import Action, GuiGraph, GuiPage

HISTORY_SLOTS = 3
DEFAULT_DIM = 4096
DEFAULT_BETA = 0.1

_TOKEN_RE = re.compile(r"\w+", re.UNICODE)


class GoldenNotInSpace(ValueError):
    pass


class ActionNotInSpace(ValueError):
    pass


def tokens(text: str) -> list[str]:
    return _TOKEN_RE.findall((text or "").lower())


@lru_cache(maxsize=1 << 18)
def _hash(token: str, seed: int) -> int:
    key = seed.to_bytes(8, "little", signed=False)
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest(), "little")


@dataclass(frozen=True)
class FeatureHasher:
    """Signed feature hashing into ``dim`` buckets.

    Distinct tokens can collide; with the default 4096 buckets two distinct
    actions on one page essentially never map to the same vector.
    """

    dim: int = DEFAULT_DIM
    seed: int = 0

    def __post_init__(self) -> None:
        if self.dim <= 0 or self.dim & (self.dim - 1):
            raise ValueError(f"dim must be a power of two, got {self.dim}")

    def add(self, feats: dict[int, float], token: str) -> None:
        h = _hash(token, self.seed)
        idx = h & (self.dim - 1)
        feats[idx] = feats.get(idx, 0.0) + (1.0 if (h >> 40) & 1 else -1.0)


def _action_tokens(a: Action) -> list[str]:
    toks = [f"kind={a.kind.value}"]
    if a.direction is not None:
        toks.append(f"dir={a.direction.value}")
        toks.append(f"kind={a.kind.value}&dir={a.direction.value}")
    for t in tokens(a.element_name):
        toks.append(f"name={t}")
    toks.append(f"box={a.bounds}")
    return toks


def _history_descriptor(a: Action) -> str:
    return f"{a.kind.value}:{a.element_name.lower()}:{a.direction.value if a.direction else ''}"


def featurize(hasher: FeatureHasher, task: str, page: GuiPage, history: Sequence[Action], a: Action) -> dict[int, float]:
    """Sparse hashed features as ``{bucket: value}``.

    Namespaces: action descriptor; task words crossed with the action's
    kind, name and direction; page element words, alone and crossed the
    same way; the last three history actions crossed the same way.
    Input text is not featurised; the policy chooses among input slots.
    """
    feats: dict[int, float] = {}
    atoks = _action_tokens(a)
    for t in atoks:
        hasher.add(feats, "a:" + t)
    kind = f"kind={a.kind.value}"
    names = [t for t in atoks if t.startswith(("name=", "dir="))]
    for w in tokens(task):
        hasher.add(feats, f"ta:{w}&{kind}")
        for n in names:
            hasher.add(feats, f"ta:{w}&{n}")
    page_words = sorted({w for e in page.elements for w in tokens(e.name)})
    for w in page_words:
        hasher.add(feats, "p:" + w)
        hasher.add(feats, f"pa:{w}&{kind}")
        for n in names:
            hasher.add(feats, f"pa:{w}&{n}")
    for j, h in enumerate(reversed(list(history)[-HISTORY_SLOTS:])):
        desc = _history_descriptor(h)
        hasher.add(feats, f"h{j}:{desc}&{kind}")
        for n in names:
            hasher.add(feats, f"h{j}:{desc}&{n}")
    return feats


@dataclass
class LinearPolicy:
    weights: np.ndarray
    beta: float = DEFAULT_BETA
    hasher: FeatureHasher = field(default_factory=FeatureHasher)

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (self.hasher.dim,):
            raise ValueError(f"weights must have shape ({self.hasher.dim},)")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights must be finite")
        if not self.beta > 0:
            raise ValueError("beta must be positive")

    @classmethod
    def zeros(cls, dim: int = DEFAULT_DIM, seed: int = 0, beta: float = DEFAULT_BETA) -> "LinearPolicy":
        return cls(np.zeros(dim), beta, FeatureHasher(dim, seed))

    def copy(self, weights: Optional[np.ndarray] = None) -> "LinearPolicy":
        w = self.weights.copy() if weights is None else np.asarray(weights, dtype=np.float64)
        return LinearPolicy(w, self.beta, self.hasher)

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": "guiflow-linear-policy",
            "version": 1,
            "dim": self.hasher.dim,
            "seed": self.hasher.seed,
            "beta": self.beta,
            "weights": self.weights.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LinearPolicy":
        if d.get("format") != "guiflow-linear-policy" or d.get("version") != 1:
            raise ValueError("unsupported checkpoint format")
        return cls(np.array(d["weights"], dtype=np.float64), float(d["beta"]), FeatureHasher(int(d["dim"]), int(d["seed"])))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "LinearPolicy":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


class Context(NamedTuple):
    """Compiled decision point: one feature row per candidate action."""

    actions: list
    phi: sp.csr_matrix


def compile_context(hasher: FeatureHasher, task: str, page: GuiPage, history: Sequence[Action]) -> Context:
    actions = unique_action_space(page)
    rows, cols, vals = [], [], []
    for i, a in enumerate(actions):
        for j, v in featurize(hasher, task, page, history, a).items():
            rows.append(i)
            cols.append(j)
            vals.append(v)
    phi = sp.csr_matrix((vals, (rows, cols)), shape=(len(actions), hasher.dim))
    return Context(actions, phi)


def _log_softmax(scores: np.ndarray) -> np.ndarray:
    m = scores.max()
    return scores - (m + np.log(np.exp(scores - m).sum()))


def action_logprobs(policy: LinearPolicy, task: str, page: GuiPage, history: Sequence[Action]) -> dict[Action, float]:
    """Log-probability of every distinct action in the page's action space."""
    ctx = compile_context(policy.hasher, task, page, history)
    lp = _log_softmax(ctx.phi @ policy.weights)
    return {a: float(v) for a, v in zip(ctx.actions, lp)}


class SFTExample(NamedTuple):
    task: str
    page: GuiPage
    history: tuple
    golden: Action


class PairContext(NamedTuple):
    task: str
    page: GuiPage
    history: tuple
    chosen: Action
    rejected: Action


class _Stacked:
    """Many contexts stacked into one CSR matrix with segment offsets."""

    def __init__(self, contexts: Sequence[Context]):
        self.phi = sp.vstack([c.phi for c in contexts], format="csr") if contexts else None
        sizes = np.array([len(c.actions) for c in contexts], dtype=np.int64)
        self.starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        self.sizes = sizes
        self.seg = np.repeat(np.arange(len(contexts)), sizes)

    def log_softmax(self, w: np.ndarray) -> np.ndarray:
        s = self.phi @ w
        m = np.maximum.reduceat(s, self.starts)
        z = np.add.reduceat(np.exp(s - m[self.seg]), self.starts)
        return s - (m + np.log(z))[self.seg]


def _locate(a: Action, actions: list, err: type[Exception]) -> int:
    i = space_index(a, actions)
    if i is None:
        raise err(f"{a.describe()} is not in the page action space")
    return i


class CompiledSFT:
    def __init__(self, hasher: FeatureHasher, batch: Iterable[SFTExample]):
        contexts, targets = [], []
        for ex in batch:
            ctx = compile_context(hasher, ex.task, ex.page, ex.history)
            contexts.append(ctx)
            targets.append(_locate(ex.golden, ctx.actions, GoldenNotInSpace))
        if not contexts:
            raise ValueError("empty batch")
        self.stack = _Stacked(contexts)
        self.rows = self.stack.starts + np.array(targets, dtype=np.int64)
        self.n = len(contexts)

    def loss_and_grad(self, w: np.ndarray) -> tuple[float, np.ndarray]:
        lp = self.stack.log_softmax(w)
        loss = -lp[self.rows].mean()
        coef = np.exp(lp)
        coef[self.rows] -= 1.0
        grad = self.stack.phi.T @ coef / self.n
        return float(loss), np.asarray(grad).ravel()


class CompiledDPO:
    def __init__(self, hasher: FeatureHasher, batch: Iterable[PairContext], reference: LinearPolicy):
        contexts, win, lose = [], [], []
        for ex in batch:
            ctx = compile_context(hasher, ex.task, ex.page, ex.history)
            contexts.append(ctx)
            win.append(_locate(ex.chosen, ctx.actions, ActionNotInSpace))
            lose.append(_locate(ex.rejected, ctx.actions, ActionNotInSpace))
        if not contexts:
            raise ValueError("empty batch")
        self.stack = _Stacked(contexts)
        self.win = self.stack.starts + np.array(win, dtype=np.int64)
        self.lose = self.stack.starts + np.array(lose, dtype=np.int64)
        self.n = len(contexts)
        ref = self.stack.log_softmax(reference.weights)
        self.ref_gap = ref[self.win] - ref[self.lose]

    def margins(self, w: np.ndarray, beta: float) -> np.ndarray:
        lp = self.stack.log_softmax(w)
        return beta * ((lp[self.win] - lp[self.lose]) - self.ref_gap)

    def loss_and_grad(self, w: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
        z = self.margins(w, beta)
        loss = np.logaddexp(0.0, -z).mean()
        # d/dz of -log sigmoid(z) is -sigmoid(-z); log-prob differences within
        # a page reduce to score differences, so only the two rows get weight.
        g = -beta * _sigmoid(-z) / self.n
        coef = np.zeros(self.stack.phi.shape[0])
        np.add.at(coef, self.win, g)
        np.add.at(coef, self.lose, -g)
        grad = self.stack.phi.T @ coef
        return float(loss), np.asarray(grad).ravel()


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))


def sft_loss_and_grad(policy: LinearPolicy, batch: Iterable[SFTExample]) -> tuple[float, np.ndarray]:
    """Mean cross-entropy of the golden actions and its exact gradient.

    Raises:
        GoldenNotInSpace: a golden action is not among the page's actions.
    """
    return CompiledSFT(policy.hasher, batch).loss_and_grad(policy.weights)


def dpo_loss_and_grad(policy: LinearPolicy, reference: LinearPolicy,
                      batch: Iterable[PairContext]) -> tuple[float, np.ndarray]:
    """Mean DPO loss and its gradient with respect to ``policy`` only.

    Raises:
        ActionNotInSpace: a chosen or rejected action is not among the page's actions.
    """
    if reference.hasher != policy.hasher:
        raise ValueError("policy and reference must share a feature hasher")
    return CompiledDPO(policy.hasher, batch, reference).loss_and_grad(policy.weights, policy.beta)


def pair_contexts(pairs: Iterable, g: GuiGraph) -> list[PairContext]:
    """DPO contexts for preference pairs whose pages live in ``g``."""
    return [PairContext(p.task, g.page(p.page_id), tuple(p.history), p.chosen, p.rejected) for p in pairs]


def sft_examples(flows: Iterable, g: GuiGraph) -> list[SFTExample]:
    """One example per flow step, history being the flow's earlier actions."""
    out = []
    for f in flows:
        acts = f.actions()
        for t, (pid, a) in enumerate(f.steps):
            out.append(SFTExample(f.task, g.page(pid), tuple(acts[:t]), a))
    return out


class Objective(str, Enum):
    SFT = "sft"
    DPO = "dpo"


@dataclass
class TrainResult:
    policy: LinearPolicy
    losses: list[float]
    margins: list[float] = field(default_factory=list)


def train(policy: LinearPolicy, dataset: Sequence, objective: Objective | str, steps: int, lr: float,
          seed: int = 0, reference: Optional[LinearPolicy] = None, batch_size: Optional[int] = None) -> TrainResult:
    """Plain gradient descent with a fixed learning rate.

    ``dataset`` holds ``SFTExample`` or ``PairContext`` items. Full-batch by
    default; with ``batch_size`` the data is reshuffled each epoch from
    ``seed``. ``losses[i]`` is the loss before update ``i``, plus a final
    entry after the last update. For DPO, ``margins`` tracks the mean
    beta-scaled log-ratio margin at the same points, and ``reference``
    defaults to a frozen copy of the starting policy.
    """
    objective = Objective(objective)
    if not dataset:
        raise ValueError("empty dataset")
    rng = random.Random(seed)
    w = policy.weights.copy()
    losses: list[float] = []
    margins: list[float] = []
    if objective is Objective.DPO:
        reference = reference if reference is not None else policy.copy()
        full = CompiledDPO(policy.hasher, dataset, reference)
    else:
        full = CompiledSFT(policy.hasher, dataset)

    def batches():
        if batch_size is None or batch_size >= len(dataset):
            while True:
                yield full
        idx = list(range(len(dataset)))
        while True:
            rng.shuffle(idx)
            for i in range(0, len(idx), batch_size):
                chunk = [dataset[j] for j in idx[i:i + batch_size]]
                if objective is Objective.DPO:
                    yield CompiledDPO(policy.hasher, chunk, reference)
                else:
                    yield CompiledSFT(policy.hasher, chunk)

    def evaluate(compiled, w):
        if objective is Objective.DPO:
            return compiled.loss_and_grad(w, policy.beta)
        return compiled.loss_and_grad(w)

    it = batches()
    for _ in range(steps):
        compiled = next(it)
        loss, grad = evaluate(compiled, w)
        if compiled is full:
            losses.append(loss)
        else:
            losses.append(evaluate(full, w)[0])
        if objective is Objective.DPO:
            margins.append(float(full.margins(w, policy.beta).mean()))
        w = w - lr * grad
    losses.append(evaluate(full, w)[0])
    if objective is Objective.DPO:
        margins.append(float(full.margins(w, policy.beta).mean()))
    return TrainResult(policy.copy(w), losses, margins)


def greedy_action(policy: LinearPolicy, task: str, page: GuiPage, history: Sequence[Action]) -> Action:
    """Most probable action; ties go to the earlier action in the space."""
    ctx = compile_context(policy.hasher, task, page, history)
    scores = ctx.phi @ policy.weights
    return ctx.actions[int(np.argmax(scores))]

