"""Turn UIAutomator-style XML dumps into elements and aligned candidate actions."""

from __future__ import annotations

import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .core import (
    COMPLETE_TEXT,
    SCROLL_ORDER,
    Action,
    ActionKind,
    BoundingBox,
    Direction,
    Element,
    GuiPage,
    MalformedBounds,
    ScreenSize,
    bbox_center,
)

logger = logging.getLogger(__name__)

#: Swipe length as a fraction of the element extent along the scroll axis.
SWIPE_FRACTION = 0.25

_INPUT_CLASS_HINTS = ("edittext", "input")


class MalformedXml(ValueError):
    """The page document could not be parsed at all."""


class NotAlignable(ValueError):
    """The action has no screen gesture (Complete)."""


def _flag(node: ET.Element, name: str) -> Optional[bool]:
    raw = node.get(name)
    if raw is None:
        return None
    return raw.strip().lower() == "true"


def parse_page_xml(
    xml: str, screen: ScreenSize, errors: Optional[list[MalformedBounds]] = None
) -> list[Element]:
    """Parse an element-tree dump into elements in document order.

    Every node with a ``bounds`` attribute yields one element. Nodes whose
    bounds cannot be parsed are skipped, logged and appended to ``errors``
    when a list is given. Bounds are clamped to ``screen``.

    Raises:
        MalformedXml: the document itself is not well formed.
    """
    if not xml or not xml.strip():
        return []
    try:
        root = ET.fromstring(xml)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from exc

    out: list[Element] = []

    def visit(node: ET.Element, path: str) -> None:
        raw_bounds = node.get("bounds")
        if raw_bounds is not None:
            try:
                bounds = BoundingBox.parse(raw_bounds).clamp(screen)
            except MalformedBounds as exc:
                logger.warning("skipping node %s: %s", path, exc)
                if errors is not None:
                    errors.append(MalformedBounds(f"{path}: {exc}"))
            else:
                out.append(_make_element(node, path, bounds))
        counts: dict[str, int] = {}
        for child in node:
            i = counts.get(child.tag, 0)
            counts[child.tag] = i + 1
            visit(child, f"{path}/{child.tag}[{i}]")

    visit(root, f"/{root.tag}")
    return out


def _make_element(node: ET.Element, path: str, bounds: BoundingBox) -> Element:
    text = node.get("text", "") or ""
    name = text if text.strip() else (node.get("content-desc", "") or "")
    cls = (node.get("class", "") or "").lower()
    editable = _flag(node, "editable")
    if editable is None:
        editable = _flag(node, "inputtable")
    inputtable = bool(editable) or any(h in cls for h in _INPUT_CLASS_HINTS)
    clickable = _flag(node, "clickable")
    if clickable is None:
        clickable = inputtable
    return Element(
        id=node.get("resource-id") or path,
        name=name,
        bounds=bounds,
        clickable=clickable,
        scrollable=bool(_flag(node, "scrollable")),
        inputtable=inputtable,
    )


def enumerate_action_space(page: GuiPage) -> list[Action]:
    """Candidate actions of a page: per element Click, 4 Scrolls, Input; Complete last."""
    space: list[Action] = []
    for e in page.elements:
        if e.clickable:
            space.append(Action.click(e.name, e.bounds))
        if e.scrollable:
            space.extend(Action.scroll(e.name, e.bounds, d) for d in SCROLL_ORDER)
        if e.inputtable:
            space.append(Action.input(e.name, e.bounds, ""))
    space.append(Action.complete(COMPLETE_TEXT))
    return space


def unique_action_space(page: GuiPage) -> list[Action]:
    """Action space with duplicate match keys removed, first occurrence kept."""
    seen: set = set()
    out = []
    for a in page.action_space:
        k = a.match_key()
        if k not in seen:
            seen.add(k)
            out.append(a)
    return out


def action_in_space(a: Action, page: GuiPage) -> bool:
    """Membership by kind, bounds, element name and direction; input text is ignored."""
    if a.kind is ActionKind.COMPLETE:
        return True
    key = a.match_key()
    return any(m.match_key() == key for m in page.action_space)


def space_index(a: Action, space: list[Action]) -> Optional[int]:
    key = a.match_key()
    for i, m in enumerate(space):
        if m.match_key() == key:
            return i
    return None


class GestureKind(str, Enum):
    TAP = "tap"
    SWIPE = "swipe"
    TYPE_AT = "type_at"


@dataclass(frozen=True)
class AlignedGesture:
    kind: GestureKind
    start: tuple[int, int]
    end: Optional[tuple[int, int]] = None
    text: Optional[str] = None

    def __post_init__(self) -> None:
        if (self.kind is GestureKind.SWIPE) != (self.end is not None):
            raise ValueError("end point is required exactly for swipes")
        if (self.kind is GestureKind.TYPE_AT) != (self.text is not None):
            raise ValueError("text is required exactly for typing")


def align_action(a: Action, screen: Optional[ScreenSize] = None, swipe_fraction: float = SWIPE_FRACTION) -> AlignedGesture:
    """Map an action to its gesture: element centre for taps and typing,
    a central-axis swipe of ``swipe_fraction`` of the extent for scrolls.

    ``screen`` is accepted for interface symmetry; aligned gestures always
    stay inside the element box, so no clamping is needed.
    """
    if a.kind is ActionKind.COMPLETE:
        raise NotAlignable("complete has no gesture")
    cx, cy = bbox_center(a.bounds)
    if a.kind is ActionKind.CLICK:
        return AlignedGesture(GestureKind.TAP, (cx, cy))
    if a.kind is ActionKind.INPUT:
        return AlignedGesture(GestureKind.TYPE_AT, (cx, cy), text=a.input_text)
    dx = math.floor(a.bounds.width * swipe_fraction)
    dy = math.floor(a.bounds.height * swipe_fraction)
    end = {
        Direction.LEFT: (cx - dx, cy),
        Direction.RIGHT: (cx + dx, cy),
        Direction.UP: (cx, cy - dy),
        Direction.DOWN: (cx, cy + dy),
    }[a.direction]
    return AlignedGesture(GestureKind.SWIPE, (cx, cy), end=end)
