"""Split annotated flows into page-reaching and page-operation subtasks."""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

from .core import ActionKind, GuiFlow, GuiGraph, GuiPage, SubtaskSpec
from .sampler import DatasetRegistry, PageNameRegistry, action_phrase, find_page_phrase

REACH_TEMPLATES = (
    "Navigate to {text} page.",
    "Go to {text} page.",
    "From the current page, what interactions should be performed to reach {text} page?",
    "What actions need to be performed to reach {text} image?",
    "Determine the actions that need to be taken to display {text} page.",
    "Visit the {text} page.",
    "What actions should you take to advance to the page showing {text}?",
    "I want to go to {text} interface.",
    "What actions will take you to {text} image?",
    "Describe the steps that need to be taken on the current image to find {text} image.",
    "Is the page showing {text}?",
    "First, find {text} page.",
    "Help me find the page with {text}.",
    "Perform a series of actions to reach {text}.",
    "First visit {text} page.",
    "What actions do I need to take to find {text} page?",
    "How do I get to {text} page?",
    "Help me navigate to {text} interface.",
    "Go to {text} interface.",
    "Jump to {text} page.",
    "Next, enter {text} page.",
    "Visit the page showing {text}?",
    "Find the image with {text}?",
    "How to get to the page with {text}?",
    "I want to go to {text} page.",
    "Open {text} image?",
    "Next, go to {text} page.",
    "Need to visit {text}.",
    "Enter {text} page.",
    "Navigate to {text}.",
    "How to get to the page with {text}?",
    "Guide to the image with {text}.",
)

#: Subflows shorter than this many actions are not emitted.
DEFAULT_MIN_SUBFLOW_STEPS = 3

_SUFFIX_RE = re.compile(r"\s+(?:page|interface)$", re.IGNORECASE)

TemplateChooser = Callable[[Sequence[str], Optional[random.Random]], str]


def _default_choose(templates: Sequence[str], rng: Optional[random.Random]) -> str:
    return rng.choice(list(templates)) if rng is not None else templates[0]


def core_name(name: str) -> str:
    """Page name without a trailing ``page``/``interface``; templates add their own."""
    return _SUFFIX_RE.sub("", name.strip())


def quote_name(name: str) -> str:
    return f"“{name}”"


@dataclass(frozen=True)
class SimilarityConfig:
    jaccard_threshold: float = 0.8

    def __post_init__(self) -> None:
        if not 0.0 <= self.jaccard_threshold <= 1.0:
            raise ValueError("jaccard_threshold must be in [0, 1]")


def page_similarity(a: GuiPage, b: GuiPage) -> float:
    """Jaccard index over ``(id, name, bounds)`` element signatures."""
    sa = {e.signature() for e in a.elements}
    sb = {e.signature() for e in b.elements}
    union = sa | sb
    if not union:
        return 1.0
    return len(sa & sb) / len(union)


def _mentions(desc: str, core: str) -> bool:
    return re.search(r"(?<!\w)" + re.escape(core) + r"(?!\w)", desc, re.IGNORECASE) is not None


def extract_reaching_subtasks(
    f: GuiFlow,
    g: GuiGraph,
    registry: DatasetRegistry,
    templates: Sequence[str] = REACH_TEMPLATES,
    rng: Optional[random.Random] = None,
    names: Optional[PageNameRegistry] = None,
    min_steps: int = DEFAULT_MIN_SUBFLOW_STEPS,
    choose: TemplateChooser = _default_choose,
) -> list[tuple[SubtaskSpec, GuiFlow]]:
    """Page-reaching subtasks of one flow.

    Rule 1: a step description whose leading clause names its page, with
    that name mentioned in no other step, yields the prefix ending at that
    page. Rule 2: a click on an element name the registry has not seen yet
    names the page it leads to and yields the prefix through the click.
    Each target page is emitted at most once (rule 1 first). All click
    names of the flow are added to ``registry.element_names``.
    """
    names = names if names is not None else PageNameRegistry()
    pages = f.page_ids()
    descs = list(f.step_descriptions)
    out: list[tuple[SubtaskSpec, GuiFlow]] = []
    targets: set[str] = set()

    def emit(n_steps: int, shown: str, claim: str, rule: str) -> None:
        target = pages[n_steps]
        if n_steps < min_steps or target in targets:
            return
        names.claim(claim, target)
        text = choose(templates, rng).format(text=shown)
        targets.add(target)
        sub = f.prefix(n_steps, task=text)
        sub.extra.update(rule=rule, page_name=claim)
        out.append((SubtaskSpec.reach(target, text), sub))

    for i, desc in enumerate(descs[: len(f.steps)]):
        phrase = find_page_phrase(desc)
        if not phrase:
            continue
        core = core_name(phrase)
        if core and sum(_mentions(d, core) for d in descs) == 1:
            emit(i, core, phrase, "reach-described")

    for i, (_, a) in enumerate(f.steps):
        if a.kind is not ActionKind.CLICK:
            continue
        label = a.element_name.strip()
        if not label or label in registry.element_names:
            continue
        registry.element_names.add(label)
        emit(i + 1, quote_name(label), label, "reach-new-element")
    return out


def extract_operation_subtasks(
    f: GuiFlow,
    g: GuiGraph,
    simcfg: SimilarityConfig = SimilarityConfig(),
    min_steps: int = DEFAULT_MIN_SUBFLOW_STEPS,
) -> list[tuple[SubtaskSpec, GuiFlow]]:
    """Page-operation subtasks: scroll/input steps, and steps whose pages
    before and after are similar. One subtask per step, in step order."""
    pages = f.page_ids()
    out: list[tuple[SubtaskSpec, GuiFlow]] = []
    for i, (p, a) in enumerate(f.steps):
        n_steps = i + 1
        if n_steps < min_steps:
            continue
        rule = None
        if a.kind in (ActionKind.SCROLL, ActionKind.INPUT):
            rule = "operate-scroll-input"
        else:
            sim = page_similarity(g.page(p), g.page(pages[i + 1]))
            if sim >= simcfg.jaccard_threshold:
                rule = "operate-similar-pages"
        if rule is None:
            continue
        text = f.step_descriptions[i] if i < len(f.step_descriptions) else action_phrase(a)
        sub = f.prefix(n_steps, task=text)
        sub.extra.update(rule=rule)
        out.append((SubtaskSpec.operate(p, a, text), sub))
    return out
