"""Four-level action rewards and preference-pair construction.

Levels are decided on the graph by searching product states
``(page, number of subtasks satisfied so far)``. Flow lengths count the
final Complete action as one step.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Any, Callable, Iterable, Optional, Sequence

from .actionspace import action_in_space
from .core import (
    Action,
    ActionKind,
    GuiFlow,
    GuiGraph,
    SubtaskKind,
    SubtaskSpec,
    edge_matches,
)

EPISODE_STEP_CAP = 15


class RewardLevel(IntEnum):
    INVALID = 0
    INCOMPLETE = 1
    LONGER = 2
    GOLDEN = 3


class PairSource(str, Enum):
    AGENT_GENERATED = "agent_generated"
    SPACE_SAMPLED = "space_sampled"


class NoGoldenFlow(ValueError):
    """The completion spec cannot be satisfied from the flow's start page."""


@dataclass(frozen=True)
class CompletionSpec:
    """Ordered Reach/Operate obligations of a task.

    ``max_search_depth`` bounds flow length (Complete included). When left
    as ``None`` the golden search runs to the episode cap and classification
    allows up to twice the golden length, never beyond the cap.
    """

    subtasks: tuple[SubtaskSpec, ...]
    max_search_depth: Optional[int] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "subtasks", tuple(self.subtasks))
        if not self.subtasks:
            raise ValueError("completion spec needs at least one subtask")

    def __len__(self) -> int:
        return len(self.subtasks)

    def search_depth(self) -> int:
        return self.max_search_depth if self.max_search_depth is not None else EPISODE_STEP_CAP

    def classify_depth(self, golden: int) -> int:
        if self.max_search_depth is not None:
            return self.max_search_depth
        return min(2 * golden, EPISODE_STEP_CAP)

    def to_dict(self) -> dict[str, Any]:
        return {"subtasks": [s.to_dict() for s in self.subtasks], "max_search_depth": self.max_search_depth}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CompletionSpec":
        return cls(tuple(SubtaskSpec.from_dict(s) for s in d["subtasks"]), d.get("max_search_depth"))


def spec_for_flow(f: GuiFlow, max_search_depth: Optional[int] = None) -> CompletionSpec:
    """Default obligations for a navigation flow: every scroll/input step as
    an operation, in order, then reaching the flow's terminal page."""
    subs = [SubtaskSpec.operate(p, a) for p, a in f.steps if a.kind in (ActionKind.SCROLL, ActionKind.INPUT)]
    subs.append(SubtaskSpec.reach(f.terminal_page))
    return CompletionSpec(tuple(subs), max_search_depth)


def arrive(spec: CompletionSpec, k: int, page: str) -> int:
    subs = spec.subtasks
    while k < len(subs) and subs[k].kind is SubtaskKind.REACH and subs[k].target_page == page:
        k += 1
    return k


def act(spec: CompletionSpec, k: int, page: str, a: Action) -> int:
    subs = spec.subtasks
    if k < len(subs) and subs[k].kind is SubtaskKind.OPERATE and subs[k].target_page == page \
            and edge_matches(subs[k].required_action, a):
        return k + 1
    return k


def progress_after(spec: CompletionSpec, pages: Sequence[str], actions: Sequence[Action]) -> int:
    """Subtasks satisfied after visiting ``pages`` via ``actions`` (len(pages) == len(actions) + 1)."""
    k = arrive(spec, 0, pages[0])
    for i, a in enumerate(actions):
        k = arrive(spec, act(spec, k, pages[i], a), pages[i + 1])
    return k


class ProgressSearch:
    """Distance-to-completion table over product states for one (graph, spec).

    ``remaining(page, k)`` is the fewest actions, Complete included, that
    finish every subtask from that state; ``None`` when impossible.
    Computed once by reverse BFS from the finished states.
    """

    def __init__(self, g: GuiGraph, spec: CompletionSpec):
        self.g = g
        self.spec = spec
        n = len(spec)
        preds: dict[tuple[str, int], list[tuple[str, int]]] = {}
        for k in range(n + 1):
            for pid in g.pages:
                for e in g.live_edges(pid):
                    nk = arrive(spec, act(spec, k, pid, e.action), e.dst)
                    preds.setdefault((e.dst, nk), []).append((pid, k))
        dist: dict[tuple[str, int], int] = {}
        queue: deque = deque()
        for pid in g.pages:
            dist[(pid, n)] = 1
            queue.append((pid, n))
        while queue:
            s = queue.popleft()
            for p in preds.get(s, ()):
                if p not in dist:
                    dist[p] = dist[s] + 1
                    queue.append(p)
        self._dist = dist

    def remaining(self, page: str, k: int) -> Optional[int]:
        return self._dist.get((page, k))


def _search(g: GuiGraph, spec: CompletionSpec, cache: Optional[dict]) -> ProgressSearch:
    if cache is None:
        return ProgressSearch(g, spec)
    key = (id(g), spec)
    if key not in cache:
        cache[key] = ProgressSearch(g, spec)
    return cache[key]


def golden_length(g: GuiGraph, start: str, spec: CompletionSpec, cache: Optional[dict] = None) -> Optional[int]:
    """Length of the shortest completing flow from ``start`` within the search depth."""
    if start not in g.pages:
        raise KeyError(start)
    search = _search(g, spec, cache)
    L = search.remaining(start, arrive(spec, 0, start))
    if L is None or L > spec.search_depth():
        return None
    return L


def classify_action(g: GuiGraph, page_id: str, history: GuiFlow, a: Action, spec: CompletionSpec,
                    cache: Optional[dict] = None) -> RewardLevel:
    """Reward level of taking ``a`` on ``page_id`` after the executed ``history``.

    ``history`` starts at the flow's start page and ends at ``page_id``
    (an empty history is a flow with no steps and ``terminal_page`` set).

    Raises:
        NoGoldenFlow: no flow satisfies the completion spec from the history's start.
    """
    pages = history.page_ids()
    if pages[-1] != page_id:
        raise ValueError(f"history ends at {pages[-1]!r}, not {page_id!r}")
    page = g.page(page_id)
    start = pages[0]
    golden = golden_length(g, start, spec, cache)
    if golden is None:
        raise NoGoldenFlow(f"spec unsatisfiable from {start!r}")
    if not action_in_space(a, page):
        return RewardLevel.INVALID
    search = _search(g, spec, cache)
    k = progress_after(spec, pages, history.actions())
    done_so_far = len(history.steps) + 1
    if a.is_complete:
        total = done_so_far if k == len(spec) else None
    else:
        dst = g.transition(page_id, a)
        if dst is None:
            return RewardLevel.INCOMPLETE if a.kind is ActionKind.INPUT else RewardLevel.INVALID
        rem = search.remaining(dst, arrive(spec, act(spec, k, page_id, a), dst))
        total = None if rem is None else done_so_far + rem
    if total is None or total > spec.classify_depth(golden):
        return RewardLevel.INCOMPLETE
    if total == golden:
        return RewardLevel.GOLDEN
    return RewardLevel.LONGER


@dataclass(frozen=True)
class PreferencePair:
    task: str
    page_id: str
    chosen: Action
    rejected: Action
    chosen_level: RewardLevel
    rejected_level: RewardLevel
    source: PairSource
    history: tuple[Action, ...] = ()
    step_index: int = 0
    golden_length: Optional[int] = None
    max_search_depth: Optional[int] = None
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if not self.chosen_level > self.rejected_level:
            raise ValueError("chosen level must be strictly above rejected level")

    def to_dict(self) -> dict[str, Any]:
        d = dict(self.extra)
        d.update(
            task=self.task,
            page_id=self.page_id,
            step_index=self.step_index,
            history=[a.to_dict() for a in self.history],
            chosen=self.chosen.to_dict(),
            rejected=self.rejected.to_dict(),
            chosen_level=self.chosen_level.name.lower(),
            rejected_level=self.rejected_level.name.lower(),
            source=self.source.value,
            golden_length=self.golden_length,
            max_search_depth=self.max_search_depth,
        )
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PreferencePair":
        known = {"task", "page_id", "step_index", "history", "chosen", "rejected", "chosen_level",
                 "rejected_level", "source", "golden_length", "max_search_depth"}
        return cls(
            task=str(d["task"]),
            page_id=str(d["page_id"]),
            chosen=Action.from_dict(d["chosen"]),
            rejected=Action.from_dict(d["rejected"]),
            chosen_level=RewardLevel[str(d["chosen_level"]).upper()],
            rejected_level=RewardLevel[str(d["rejected_level"]).upper()],
            source=PairSource(d["source"]),
            history=tuple(Action.from_dict(a) for a in d.get("history", ())),
            step_index=int(d.get("step_index", 0)),
            golden_length=d.get("golden_length"),
            max_search_depth=d.get("max_search_depth"),
            extra={k: v for k, v in d.items() if k not in known},
        )


def candidate_actions(g: GuiGraph, page_id: str) -> list[Action]:
    """Page action space with each input slot also bound to every text its
    outgoing edges accept."""
    out: list[Action] = []
    edges = g.out_edges(page_id)
    for a in g.page(page_id).action_space:
        out.append(a)
        if a.kind is ActionKind.INPUT:
            texts = []
            for e in edges:
                if e.action.match_key() == a.match_key() and e.action.input_text not in texts:
                    texts.append(e.action.input_text)
            out.extend(Action.input(a.element_name, a.bounds, t) for t in texts if t)
    return out


def build_preference_pairs(
    g: GuiGraph,
    flows: Iterable[tuple[GuiFlow, Sequence[Optional[Action]]]],
    spec_fn: Callable[[GuiFlow], CompletionSpec] = spec_for_flow,
    rng: Optional[random.Random] = None,
) -> list[PreferencePair]:
    """Pair each golden step with an agent action ranked strictly lower, or
    failing that with a uniformly drawn lower-ranked action from the page.

    Rejected actions never share the golden action's slot (an input on the
    same element with other text), since a policy choosing among slots
    cannot tell them apart. Steps where nothing ranks below the golden
    action are skipped; flows whose spec cannot be completed are skipped.
    """
    rng = rng if rng is not None else random.Random(0)
    cache: dict = {}
    pairs: list[PreferencePair] = []
    for golden_flow, agent_actions in flows:
        spec = spec_fn(golden_flow)
        L = golden_length(g, golden_flow.start_page, spec, cache)
        if L is None:
            continue
        for t, (page_id, gold) in enumerate(golden_flow.steps):
            history = golden_flow.prefix(t)
            chosen_level = classify_action(g, page_id, history, gold, spec, cache)
            common = dict(task=golden_flow.task, page_id=page_id, chosen=gold, chosen_level=chosen_level,
                          history=tuple(history.actions()), step_index=t, golden_length=L,
                          max_search_depth=spec.classify_depth(L))
            agent = agent_actions[t] if t < len(agent_actions) else None
            if agent is not None and agent.match_key() != gold.match_key():
                level = classify_action(g, page_id, history, agent, spec, cache)
                if level < chosen_level:
                    pairs.append(PreferencePair(rejected=agent, rejected_level=level,
                                                source=PairSource.AGENT_GENERATED, **common))
                    continue
            lower = []
            for cand in candidate_actions(g, page_id):
                if cand.match_key() == gold.match_key():
                    continue
                level = classify_action(g, page_id, history, cand, spec, cache)
                if level < chosen_level:
                    lower.append((cand, level))
            if not lower:
                continue
            cand, level = rng.choice(lower)
            pairs.append(PreferencePair(rejected=cand, rejected_level=level,
                                        source=PairSource.SPACE_SAMPLED, **common))
    return pairs
