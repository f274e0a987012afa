"""Step-level, task-level and task-success metrics for predicted flows."""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass
from typing import Any, Optional, Sequence, Union

from .core import Action, ActionKind, GuiFlow, GuiGraph, ScreenSize, bbox_center, bbox_expand, bbox_intersects
from .episode import DEFAULT_MAX_STEPS, EpisodeTrace, Outcome, reset, step
from .reward import CompletionSpec, act, arrive, spec_for_flow

DEFAULT_MARGIN = 0.14
F1_THRESHOLD = 0.8
MODE_EXPAND = "expand-intersect"
MODE_CENTER = "center-in-expanded"


class AlignmentError(ValueError):
    pass


def judge_iou(pred: Action, gold: Action, screen: ScreenSize, margin: float = DEFAULT_MARGIN,
              mode: str = MODE_EXPAND) -> bool:
    """Location check: the predicted box must touch the golden box grown by
    ``margin`` of the screen size (or, in centre mode, contain the
    predicted centre). Complete actions match on kind alone."""
    if pred.kind is not gold.kind:
        return False
    if gold.kind is ActionKind.COMPLETE:
        return True
    grown = bbox_expand(gold.bounds, screen, margin)
    if mode == MODE_CENTER:
        x, y = bbox_center(pred.bounds)
        return grown.x1 <= x <= grown.x2 and grown.y1 <= y <= grown.y2
    if mode != MODE_EXPAND:
        raise ValueError(f"unknown IoU mode {mode!r}")
    return bbox_intersects(pred.bounds, grown)


def token_f1(pred: str, gold: str) -> float:
    p = (pred or "").lower().split()
    g = (gold or "").lower().split()
    if not p and not g:
        return 1.0
    if not p or not g:
        return 0.0
    overlap = sum((Counter(p) & Counter(g)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(p)
    recall = overlap / len(g)
    return 2 * precision * recall / (precision + recall)


def judge_text(pred: Action, gold: Action) -> bool:
    """Text check per action kind; typed text needs token F1 strictly above 0.8,
    everything else must match exactly."""
    if pred.kind is not gold.kind:
        return False
    if gold.kind is ActionKind.CLICK:
        return pred.element_name == gold.element_name
    if gold.kind is ActionKind.SCROLL:
        return pred.direction == gold.direction and pred.element_name == gold.element_name
    if gold.kind is ActionKind.INPUT:
        return pred.element_name == gold.element_name and token_f1(pred.input_text, gold.input_text) > F1_THRESHOLD
    return pred.complete_text == gold.complete_text


@dataclass
class MetricReport:
    n_flows: int = 0
    n_gold_steps: int = 0
    step_iou_hits: int = 0
    step_text_hits: int = 0
    task_iou_hits: int = 0
    task_text_hits: int = 0
    task_success_hits: int = 0
    margin: float = DEFAULT_MARGIN
    iou_mode: str = MODE_EXPAND
    max_steps: int = DEFAULT_MAX_STEPS

    @staticmethod
    def _ratio(num: int, den: int) -> float:
        return num / den if den else 0.0

    @property
    def step_iou_acc(self) -> float:
        return self._ratio(self.step_iou_hits, self.n_gold_steps)

    @property
    def step_text_acc(self) -> float:
        return self._ratio(self.step_text_hits, self.n_gold_steps)

    @property
    def task_iou_acc(self) -> float:
        return self._ratio(self.task_iou_hits, self.n_flows)

    @property
    def task_text_acc(self) -> float:
        return self._ratio(self.task_text_hits, self.n_flows)

    @property
    def task_success_rate(self) -> float:
        return self._ratio(self.task_success_hits, self.n_flows)

    def ratios(self) -> dict[str, float]:
        return {
            "step_iou_acc": self.step_iou_acc,
            "step_text_acc": self.step_text_acc,
            "task_iou_acc": self.task_iou_acc,
            "task_text_acc": self.task_text_acc,
            "task_success_rate": self.task_success_rate,
        }

    def to_dict(self) -> dict[str, Any]:
        return {"counts": asdict(self), "metrics": self.ratios()}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "MetricReport":
        return cls(**d["counts"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def table(self) -> str:
        rows = [
            ("Step IoU Acc", self.step_iou_hits, self.n_gold_steps),
            ("Step Text Acc", self.step_text_hits, self.n_gold_steps),
            ("Task IoU Acc", self.task_iou_hits, self.n_flows),
            ("Task Text Acc", self.task_text_hits, self.n_flows),
            ("Task Success", self.task_success_hits, self.n_flows),
        ]
        lines = [f"{'metric':<15} {'value':>8}  count"]
        for name, num, den in rows:
            lines.append(f"{name:<15} {100 * self._ratio(num, den):7.2f}%  {num}/{den}")
        return "\n".join(lines)


Prediction = Union[EpisodeTrace, GuiFlow, None]


def _pred_actions(pred: Prediction) -> list[Action]:
    if pred is None:
        return []
    return pred.actions()


def gold_actions(gold: GuiFlow) -> list[Action]:
    """Golden action sequence, closed by a Complete when the flow lacks one."""
    acts = gold.actions()
    if not acts or not acts[-1].is_complete:
        acts.append(Action.complete())
    return acts


def completes_spec(g: GuiGraph, start: str, actions: Sequence[Action], spec: CompletionSpec,
                   max_steps: int = DEFAULT_MAX_STEPS) -> bool:
    """Replay actions from ``start``; success means a Complete issued within
    ``max_steps`` steps after every subtask is satisfied in order."""
    state = reset(g, "", start)
    k = arrive(spec, 0, start)
    for a in actions[:max_steps]:
        page = state.page_id
        state, outcome = step(state, a)
        if a.is_complete:
            return k == len(spec)
        if outcome is Outcome.EXECUTED:
            k = arrive(spec, act(spec, k, page, a), state.page_id)
    return False


def _start_of(pred: Prediction, gold: GuiFlow) -> str:
    if isinstance(pred, EpisodeTrace):
        return pred.start
    if isinstance(pred, GuiFlow) and pred.steps:
        return pred.start_page
    return gold.start_page


def score_run(preds: Sequence[Prediction], golds: Sequence[GuiFlow], specs: Optional[Sequence[CompletionSpec]],
              g: GuiGraph, margin: float = DEFAULT_MARGIN, iou_mode: str = MODE_EXPAND,
              max_steps: int = DEFAULT_MAX_STEPS, judgments: Optional[list] = None) -> MetricReport:
    """Score predictions against golden flows.

    Steps are compared position by position; missing predictions count as
    wrong. Task IoU and task text are judged separately. Task success
    replays each prediction on ``g`` against its completion spec
    (``spec_for_flow`` of the golden flow when ``specs`` is None).
    Per-step verdicts are appended to ``judgments`` when a list is passed.

    Raises:
        AlignmentError: more predictions than golden flows, or a task mismatch.
    """
    if len(preds) > len(golds):
        raise AlignmentError(f"{len(preds)} predictions for {len(golds)} golden flows")
    if specs is not None and len(specs) != len(golds):
        raise AlignmentError("one completion spec per golden flow is required")
    report = MetricReport(margin=margin, iou_mode=iou_mode, max_steps=max_steps)
    for i, gold in enumerate(golds):
        pred = preds[i] if i < len(preds) else None
        if pred is not None and pred.task != gold.task:
            raise AlignmentError(f"flow {i}: predicted task {pred.task!r} != golden task {gold.task!r}")
        p_acts = _pred_actions(pred)
        g_acts = gold_actions(gold)
        pages = gold.page_ids()
        all_iou = all_text = len(p_acts) == len(g_acts)
        for t, ga in enumerate(g_acts):
            pa = p_acts[t] if t < len(p_acts) else None
            screen = g.page(pages[min(t, len(pages) - 1)]).screen
            iou_ok = pa is not None and judge_iou(pa, ga, screen, margin, iou_mode)
            text_ok = pa is not None and judge_text(pa, ga)
            report.step_iou_hits += iou_ok
            report.step_text_hits += text_ok
            all_iou &= iou_ok
            all_text &= text_ok
            if judgments is not None:
                judgments.append({"flow": i, "step": t, "iou_ok": iou_ok, "text_ok": text_ok})
        report.n_gold_steps += len(g_acts)
        report.n_flows += 1
        report.task_iou_hits += all_iou
        report.task_text_hits += all_text
        spec = specs[i] if specs is not None else spec_for_flow(gold)
        if pred is not None and completes_spec(g, _start_of(pred, gold), p_acts, spec, max_steps):
            report.task_success_hits += 1
    return report
