"""Sample GUI flows from a graph, validate them, attach task text and filter.

The text step is a deterministic template stand-in for an LLM annotator;
anything with the ``TaskTextGenerator`` call signature can replace it.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Optional, Protocol

from .actionspace import action_in_space
from .core import Action, ActionKind, GuiFlow, GuiGraph, GuiPage

DEFAULT_MAX_TASK_LEN = 200

BRIEF_TEMPLATES = (
    "Starting from the {start}, {first}, and get to the {end}.",
    "Go to the {end} from the {start}, finishing with: {last}.",
    "From the {start}, {first} and keep going until the {end} is shown.",
)

# Violation codes returned by validate_flow.
V_SEEN_PATH = "V1"
V_ALL_ACTIONS_SEEN = "V2"
V_REPEATED_ACTION = "V3"
V_OUT_OF_SPACE = "V4"


class GraphTooSmall(ValueError):
    """No walk of the minimum length starts at the home page."""


@dataclass
class SamplerConfig:
    min_len: int = 3
    max_len: int = 10
    seed: int = 0
    max_attempts: int = 1000

    def __post_init__(self) -> None:
        if not 3 <= self.min_len <= self.max_len:
            raise ValueError(f"need 3 <= min_len <= max_len, got {self.min_len}, {self.max_len}")
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be positive")


def action_record_key(page_id: str, a: Action) -> tuple:
    return (page_id, a.match_key(), (a.input_text or "").strip())


@dataclass
class DatasetRegistry:
    """What the current training set already contains.

    Paths are page-id sequences; actions are keyed by the page they were
    taken on. Dedup scope is whatever the caller shares this object across
    (by default one run).
    """

    paths: set = field(default_factory=set)
    actions: set = field(default_factory=set)
    tasks: set = field(default_factory=set)
    element_names: set = field(default_factory=set)

    def register_flow(self, f: GuiFlow) -> None:
        self.paths.add(f.signature())
        self.actions.update(action_record_key(p, a) for p, a in f.steps)

    def register_task(self, task: str) -> None:
        self.tasks.add(task)


class PageNameRegistry:
    """Page names handed out so far; a name never maps to two pages."""

    def __init__(self) -> None:
        self.names: dict[str, str] = {}
        self.usage: dict[str, int] = {}

    def claim(self, name: str, page_id: str) -> str:
        candidate, k = name, 1
        while candidate in self.names and self.names[candidate] != page_id:
            k += 1
            candidate = f"{name} {k}"
        self.names[candidate] = page_id
        self.usage[candidate] = self.usage.get(candidate, 0) + 1
        return candidate


def validate_flow(f: GuiFlow, g: GuiGraph, registry: Optional[DatasetRegistry] = None,
                  check_dedup: bool = True) -> tuple[bool, list[str]]:
    """Check a flow against the dataset validity rules.

    Returns ``(ok, codes)`` with ``codes`` drawn from V1 (path already
    present), V2 (every action already present), V3 (consecutive repeated
    action) and V4 (action outside its page's action space).
    """
    codes: list[str] = []
    if check_dedup and registry is not None:
        if f.signature() in registry.paths:
            codes.append(V_SEEN_PATH)
        keys = [action_record_key(p, a) for p, a in f.steps]
        if keys and all(k in registry.actions for k in keys):
            codes.append(V_ALL_ACTIONS_SEEN)
    acts = f.actions()
    if any(_same_action(a, b) for a, b in zip(acts, acts[1:])):
        codes.append(V_REPEATED_ACTION)
    for p, a in f.steps:
        if p not in g.pages or not action_in_space(a, g.pages[p]):
            codes.append(V_OUT_OF_SPACE)
            break
    return not codes, codes


def _same_action(a: Action, b: Action) -> bool:
    return a.match_key() == b.match_key() and (a.input_text or "") == (b.input_text or "")


def _walk_table(g: GuiGraph, max_len: int) -> list[set]:
    """``table[k]``: pages from which some walk of exactly k more steps exists."""
    table = [set(g.pages)]
    for _ in range(max_len):
        prev = table[-1]
        table.append({pid for pid in g.pages if any(e.dst in prev for e in g.live_edges(pid))})
    return table


def sample_flows(g: GuiGraph, cfg: SamplerConfig, n: int,
                 registry: Optional[DatasetRegistry] = None) -> list[GuiFlow]:
    """Random walks from ``g.home`` with rejection on validity failure.

    Walk length is drawn uniformly from the feasible lengths in
    ``[cfg.min_len, cfg.max_len]``; each hop picks uniformly among edges
    that can still finish the walk. Accepted flows are registered so later
    draws are checked against them. Output is a pure function of the graph,
    ``cfg`` and the registry state.
    """
    if n < 0:
        raise ValueError("n must be non-negative")
    table = _walk_table(g, cfg.max_len)
    lengths = [L for L in range(cfg.min_len, cfg.max_len + 1) if g.home in table[L]]
    if not lengths:
        raise GraphTooSmall(f"no walk of length {cfg.min_len} from {g.home!r}")
    registry = registry if registry is not None else DatasetRegistry()
    rng = random.Random(cfg.seed)
    flows: list[GuiFlow] = []
    attempts = 0
    while len(flows) < n and attempts < cfg.max_attempts:
        attempts += 1
        L = rng.choice(lengths)
        page, steps = g.home, []
        for remaining in range(L, 0, -1):
            viable = [e for e in g.live_edges(page) if e.dst in table[remaining - 1]]
            e = rng.choice(viable)
            steps.append((page, e.action))
            page = e.dst
        f = GuiFlow(task="", steps=tuple(steps), terminal_page=page)
        ok, _ = validate_flow(f, g, registry)
        if ok:
            registry.register_flow(f)
            flows.append(f)
    return flows


def page_label(page: GuiPage) -> str:
    name = re.sub(r"^(?:the|a|an)\s+", "", page.display_name(), flags=re.I)
    return name if re.search(r"\b(page|interface)$", name, re.I) else f"{name} page"


def action_phrase(a: Action) -> str:
    if a.kind is ActionKind.CLICK:
        return f'click "{a.element_name}"'
    if a.kind is ActionKind.SCROLL:
        on = f' on "{a.element_name}"' if a.element_name else ""
        return f"scroll {a.direction.value}{on}"
    if a.kind is ActionKind.INPUT:
        return f'enter "{a.input_text}" in "{a.element_name}"'
    return "finish the task"


class TaskTextGenerator(Protocol):
    def __call__(self, f: GuiFlow, g: GuiGraph) -> tuple[str, list[str]]: ...


def generate_task_text(f: GuiFlow, g: GuiGraph, templates: Iterable[str] = BRIEF_TEMPLATES,
                       rng: Optional[random.Random] = None) -> tuple[str, list[str]]:
    """Template brief task and one ``On the <page>, <verb> <element>.`` line per step.

    Templates may use ``{start}``, ``{end}``, ``{first}`` and ``{last}``.
    Without ``rng`` the first template is used.
    """
    templates = list(templates)
    if not templates:
        raise ValueError("no templates given")
    descs = [f"On the {page_label(g.page(p))}, {action_phrase(a)}." for p, a in f.steps]
    tpl = rng.choice(templates) if rng is not None else templates[0]
    acts = f.actions()
    brief = tpl.format(
        start=page_label(g.page(f.start_page)),
        end=page_label(g.page(f.terminal_page)),
        first=action_phrase(acts[0]) if acts else "",
        last=action_phrase(acts[-1]) if acts else "",
    )
    return brief, descs


def filter_tasks(flows: Iterable[GuiFlow], registry: Optional[DatasetRegistry] = None,
                 max_task_len: int = DEFAULT_MAX_TASK_LEN) -> list[GuiFlow]:
    """Drop flows whose brief task is already known (A), whose description
    count differs from the step count (B) or whose task is too long (C).

    The registry is read, not updated; register the survivors separately.
    """
    known = registry.tasks if registry is not None else set()
    seen: set[str] = set()
    out = []
    for f in flows:
        if f.task in known or f.task in seen:
            continue
        if len(f.step_descriptions) != len(f.steps):
            continue
        if len(f.task) > max_task_len:
            continue
        seen.add(f.task)
        out.append(f)
    return out


_LEAD_PAGE_RE = re.compile(
    r"^\s*(?:\d+\.\s*)?on\s+the\s+([^,.;:\"“”]+?\s(?:page|interface))\b", re.IGNORECASE
)
_QUOTED_PAGE_RE = re.compile(r"[\"“]([^\"“”]+)[\"”]\s+(?:page|interface)\b", re.IGNORECASE)
_QUOTED_RE = re.compile(r"[\"“]([^\"“”]+)[\"”]")


def find_page_phrase(step_desc: str) -> Optional[str]:
    """Page named by a step description: its leading ``On the X page`` clause,
    or a quoted name directly followed by ``page``/``interface``."""
    m = _LEAD_PAGE_RE.search(step_desc or "")
    if m:
        return m.group(1).strip()
    m = _QUOTED_PAGE_RE.search(step_desc or "")
    if m:
        return m.group(1).strip()
    return None


def name_page(p: GuiPage, incoming: Optional[Action], step_desc: str,
              registry: Optional[PageNameRegistry] = None) -> str:
    """Name a page from its step description, else the action that led to it,
    else its caption. Collisions with another page get a numeric suffix."""
    name = find_page_phrase(step_desc)
    if not name:
        m = _QUOTED_RE.search(step_desc or "")
        name = m.group(1).strip() if m else None
    if not name and incoming is not None:
        name = incoming.element_name.strip() or (incoming.input_text or "").strip()
    if not name:
        name = p.display_name()
    return registry.claim(name, p.page_id) if registry is not None else name

