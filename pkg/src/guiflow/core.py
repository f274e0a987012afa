"""Domain types shared across the toolkit, plus integer box geometry."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Optional

COMPLETE_TEXT = "STATUS_TASK_COMPLETE"

_BOUNDS_RE = re.compile(r"^\s*\[\s*(-?\d+)\s*,\s*(-?\d+)\s*\]\s*\[\s*(-?\d+)\s*,\s*(-?\d+)\s*\]\s*$")


class MalformedBounds(ValueError):
    """A bounds string did not match ``[x1,y1][x2,y2]`` or had inverted corners."""


@dataclass(frozen=True, order=True)
class BoundingBox:
    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self) -> None:
        if self.x1 > self.x2 or self.y1 > self.y2:
            raise MalformedBounds(f"inverted box {self.as_list()}")

    @classmethod
    def parse(cls, text: str) -> "BoundingBox":
        m = _BOUNDS_RE.match(text or "")
        if m is None:
            raise MalformedBounds(f"cannot parse bounds {text!r}")
        return cls(*(int(v) for v in m.groups()))

    @classmethod
    def from_list(cls, values: Iterable[int]) -> "BoundingBox":
        x1, y1, x2, y2 = (int(v) for v in values)
        return cls(x1, y1, x2, y2)

    def as_list(self) -> list[int]:
        return [self.x1, self.y1, self.x2, self.y2]

    @property
    def width(self) -> int:
        return self.x2 - self.x1

    @property
    def height(self) -> int:
        return self.y2 - self.y1

    def clamp(self, screen: "ScreenSize") -> "BoundingBox":
        def c(v: int, hi: int) -> int:
            return min(max(v, 0), hi)

        return BoundingBox(
            c(self.x1, screen.width), c(self.y1, screen.height),
            c(self.x2, screen.width), c(self.y2, screen.height),
        )

    def translate(self, dx: int, dy: int) -> "BoundingBox":
        return BoundingBox(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)

    def __str__(self) -> str:
        return f"[{self.x1},{self.y1}][{self.x2},{self.y2}]"


ZERO_BOX = BoundingBox(0, 0, 0, 0)


@dataclass(frozen=True)
class ScreenSize:
    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"screen size must be positive, got {self.width}x{self.height}")


DEFAULT_SCREEN = ScreenSize(720, 1280)


def bbox_center(b: BoundingBox) -> tuple[int, int]:
    """Integer midpoint of a box, rounding toward minus infinity."""
    return (b.x1 + b.x2) // 2, (b.y1 + b.y2) // 2


def bbox_intersects(a: BoundingBox, b: BoundingBox) -> bool:
    """True iff the closed rectangles share at least one point."""
    return a.x1 <= b.x2 and b.x1 <= a.x2 and a.y1 <= b.y2 and b.y1 <= a.y2


def bbox_expand(b: BoundingBox, screen: ScreenSize, frac: float) -> BoundingBox:
    """Grow each edge outward by ``frac`` of the screen extent on that axis.

    Coordinates are floored after expansion and clamped to the screen last.
    """
    if not 0.0 <= frac <= 1.0:
        raise ValueError(f"frac must be in [0, 1], got {frac}")
    dx = frac * screen.width
    dy = frac * screen.height

    def clamp(v: float, hi: int) -> int:
        return min(max(math.floor(v), 0), hi)

    return BoundingBox(
        clamp(b.x1 - dx, screen.width),
        clamp(b.y1 - dy, screen.height),
        clamp(b.x2 + dx, screen.width),
        clamp(b.y2 + dy, screen.height),
    )


@dataclass(frozen=True)
class Element:
    id: str
    name: str
    bounds: BoundingBox
    clickable: bool = False
    scrollable: bool = False
    inputtable: bool = False

    def signature(self) -> tuple[str, str, BoundingBox]:
        return (self.id, self.name, self.bounds)


class ActionKind(str, Enum):
    CLICK = "click"
    SCROLL = "scroll"
    INPUT = "input"
    COMPLETE = "complete"


class Direction(str, Enum):
    """Scroll direction, naming the finger motion on screen."""

    UP = "up"
    DOWN = "down"
    LEFT = "left"
    RIGHT = "right"


SCROLL_ORDER = (Direction.UP, Direction.DOWN, Direction.LEFT, Direction.RIGHT)


@dataclass(frozen=True)
class Action:
    """One agent action.

    ``input_text`` is set only for INPUT, ``direction`` only for SCROLL and
    ``complete_text`` only for COMPLETE. An INPUT whose text is the empty
    string is an unbound slot as produced by action-space enumeration.
    """

    kind: ActionKind
    element_name: str = ""
    bounds: BoundingBox = ZERO_BOX
    direction: Optional[Direction] = None
    input_text: Optional[str] = None
    complete_text: Optional[str] = None

    def __post_init__(self) -> None:
        kind = ActionKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.direction is not None:
            object.__setattr__(self, "direction", Direction(self.direction))
        if (kind is ActionKind.SCROLL) != (self.direction is not None):
            raise ValueError("direction must be set exactly for scroll actions")
        if (kind is ActionKind.INPUT) != (self.input_text is not None):
            raise ValueError("input_text must be set exactly for input actions")
        if (kind is ActionKind.COMPLETE) != (self.complete_text is not None):
            raise ValueError("complete_text must be set exactly for complete actions")
        if kind is ActionKind.COMPLETE and (self.element_name or self.bounds != ZERO_BOX):
            raise ValueError("complete actions carry no element")

    @classmethod
    def click(cls, name: str, bounds: BoundingBox) -> "Action":
        return cls(ActionKind.CLICK, name, bounds)

    @classmethod
    def scroll(cls, name: str, bounds: BoundingBox, direction: Direction | str) -> "Action":
        return cls(ActionKind.SCROLL, name, bounds, direction=Direction(direction))

    @classmethod
    def input(cls, name: str, bounds: BoundingBox, text: str = "") -> "Action":
        return cls(ActionKind.INPUT, name, bounds, input_text=text)

    @classmethod
    def complete(cls, text: str = COMPLETE_TEXT) -> "Action":
        return cls(ActionKind.COMPLETE, complete_text=text)

    @property
    def is_complete(self) -> bool:
        return self.kind is ActionKind.COMPLETE

    def match_key(self) -> tuple:
        """Identity used for action-space membership; ignores any typed text."""
        if self.kind is ActionKind.COMPLETE:
            return (ActionKind.COMPLETE,)
        return (self.kind, self.bounds, self.element_name, self.direction)

    def unbound(self) -> "Action":
        """The action-space slot form of this action (input text cleared)."""
        if self.kind is ActionKind.INPUT and self.input_text:
            return Action.input(self.element_name, self.bounds, "")
        return self

    def describe(self) -> str:
        if self.kind is ActionKind.CLICK:
            return f'click("{self.element_name}", {self.bounds})'
        if self.kind is ActionKind.SCROLL:
            return f'scroll({self.bounds}, "{self.direction.value}")'
        if self.kind is ActionKind.INPUT:
            return f'input("{self.element_name}", {self.bounds}, "{self.input_text}")'
        return f'complete("{self.complete_text}")'

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind.value}
        if self.kind is not ActionKind.COMPLETE:
            d["name"] = self.element_name
            d["bounds"] = self.bounds.as_list()
        if self.direction is not None:
            d["direction"] = self.direction.value
        if self.input_text is not None:
            d["input_text"] = self.input_text
        if self.complete_text is not None:
            d["complete_text"] = self.complete_text
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Action":
        if not isinstance(d, dict) or "kind" not in d:
            raise ValueError(f"not a serialized action: {d!r}")
        kind = ActionKind(d["kind"])
        if kind is ActionKind.COMPLETE:
            return cls.complete(str(d.get("complete_text", COMPLETE_TEXT)))
        bounds = BoundingBox.from_list(d["bounds"])
        name = str(d.get("name", ""))
        if kind is ActionKind.CLICK:
            return cls.click(name, bounds)
        if kind is ActionKind.SCROLL:
            return cls.scroll(name, bounds, d["direction"])
        return cls.input(name, bounds, str(d.get("input_text", "")))


@dataclass(frozen=True, eq=False)
class GuiPage:
    """A screen state: an XML element tree plus an optional screenshot path.

    ``elements`` is derived from ``xml`` at construction and never set by hand.
    """

    page_id: str
    xml: str
    screen: ScreenSize = DEFAULT_SCREEN
    screenshot_ref: Optional[str] = None
    caption: Optional[str] = None
    elements: tuple[Element, ...] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        from .actionspace import parse_page_xml

        object.__setattr__(self, "elements", tuple(parse_page_xml(self.xml, self.screen)))

    @property
    def action_space(self) -> tuple[Action, ...]:
        cached = self.__dict__.get("_space")
        if cached is None:
            from .actionspace import enumerate_action_space

            cached = tuple(enumerate_action_space(self))
            object.__setattr__(self, "_space", cached)
        return cached

    def display_name(self) -> str:
        """Short human label: first caption sentence, else the page id."""
        if self.caption:
            first = re.split(r"(?<=[.!?])\s", self.caption.strip(), maxsplit=1)[0]
            return first.rstrip(".!? ").strip() or self.page_id
        return self.page_id


@dataclass(frozen=True)
class Edge:
    src: str
    action: Action
    dst: str


class GraphError(ValueError):
    """Referential or structural problem in a GuiGraph."""


def _norm_text(text: Optional[str]) -> str:
    return (text or "").strip()


def edge_matches(edge_action: Action, a: Action) -> bool:
    """Environment matching rule between an edge label and an issued action.

    Kind, bounds, element name and direction must agree; input actions also
    need equal text after trimming.
    """
    if edge_action.match_key() != a.match_key():
        return False
    if a.kind is ActionKind.INPUT:
        return _norm_text(edge_action.input_text) == _norm_text(a.input_text)
    return True


class GuiGraph:
    """Directed multigraph of pages connected by actions."""

    def __init__(self, pages: Iterable[GuiPage], edges: Iterable[Edge], home: str, *, check_space: bool = True):
        self.pages: dict[str, GuiPage] = {}
        for p in pages:
            if p.page_id in self.pages:
                raise GraphError(f"duplicate page id {p.page_id!r}")
            self.pages[p.page_id] = p
        if home not in self.pages:
            raise GraphError(f"home page {home!r} not in graph")
        self.home = home
        self.edges: tuple[Edge, ...] = tuple(edges)
        self._out: dict[str, list[Edge]] = {pid: [] for pid in self.pages}
        from .actionspace import action_in_space

        for e in self.edges:
            if e.src not in self.pages or e.dst not in self.pages:
                raise GraphError(f"edge endpoint missing: {e.src!r} -> {e.dst!r}")
            if e.action.is_complete:
                raise GraphError("complete actions cannot label edges")
            if check_space and not action_in_space(e.action, self.pages[e.src]):
                raise GraphError(f"edge action {e.action.describe()} not in action space of {e.src!r}")
            self._out[e.src].append(e)

    def __contains__(self, page_id: str) -> bool:
        return page_id in self.pages

    def __len__(self) -> int:
        return len(self.pages)

    def page(self, page_id: str) -> GuiPage:
        return self.pages[page_id]

    def out_edges(self, page_id: str) -> list[Edge]:
        return self._out.get(page_id, [])

    def live_edges(self, page_id: str) -> list[Edge]:
        """Outgoing edges the environment can actually follow.

        An edge whose action is already matched by an earlier edge of the
        same page is shadowed, since ``transition`` takes the first match.
        """
        out = self._out.get(page_id, [])
        return [e for i, e in enumerate(out)
                if not any(edge_matches(f.action, e.action) for f in out[:i])]

    def transition(self, page_id: str, a: Action) -> Optional[str]:
        """Destination of executing ``a`` on ``page_id``; first matching edge wins."""
        for e in self._out.get(page_id, ()):
            if edge_matches(e.action, a):
                return e.dst
        return None


@dataclass(frozen=True)
class GuiFlow:
    """Alternating chain of pages and actions with its task annotations.

    ``steps[i]`` is the page acted on and the action taken there;
    ``terminal_page`` is where the last action lands. ``extra`` carries
    unrecognised JSON fields through a load/save round trip.
    """

    task: str
    steps: tuple[tuple[str, Action], ...]
    step_descriptions: tuple[str, ...] = ()
    terminal_page: str = ""
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "steps", tuple((str(p), a) for p, a in self.steps))
        object.__setattr__(self, "step_descriptions", tuple(self.step_descriptions))

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def start_page(self) -> str:
        return self.steps[0][0] if self.steps else self.terminal_page

    def page_ids(self) -> list[str]:
        return [p for p, _ in self.steps] + [self.terminal_page]

    def actions(self) -> list[Action]:
        return [a for _, a in self.steps]

    def prefix(self, n_steps: int, task: Optional[str] = None) -> "GuiFlow":
        """Sub-flow made of the first ``n_steps`` steps."""
        pages = self.page_ids()
        return GuiFlow(
            task=self.task if task is None else task,
            steps=self.steps[:n_steps],
            step_descriptions=self.step_descriptions[:n_steps],
            terminal_page=pages[n_steps],
        )

    def signature(self) -> tuple[str, ...]:
        return tuple(self.page_ids())

    def to_dict(self) -> dict[str, Any]:
        d = dict(self.extra)
        d.update(
            task=self.task,
            steps=[{"page_id": p, "action": a.to_dict()} for p, a in self.steps],
            step_descriptions=list(self.step_descriptions),
            terminal_page=self.terminal_page,
        )
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GuiFlow":
        known = {"task", "steps", "step_descriptions", "terminal_page"}
        return cls(
            task=str(d["task"]),
            steps=tuple((s["page_id"], Action.from_dict(s["action"])) for s in d["steps"]),
            step_descriptions=tuple(d.get("step_descriptions", ())),
            terminal_page=str(d["terminal_page"]),
            extra={k: v for k, v in d.items() if k not in known},
        )


class SubtaskKind(str, Enum):
    REACH = "reach"
    OPERATE = "operate"


@dataclass(frozen=True)
class SubtaskSpec:
    kind: SubtaskKind
    target_page: str
    required_action: Optional[Action] = None
    task_text: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", SubtaskKind(self.kind))
        if self.kind is SubtaskKind.OPERATE and self.required_action is None:
            raise ValueError("operate subtasks need a required action")

    @classmethod
    def reach(cls, page_id: str, task_text: str = "") -> "SubtaskSpec":
        return cls(SubtaskKind.REACH, page_id, None, task_text)

    @classmethod
    def operate(cls, page_id: str, action: Action, task_text: str = "") -> "SubtaskSpec":
        return cls(SubtaskKind.OPERATE, page_id, action, task_text)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind.value, "target_page": self.target_page, "task_text": self.task_text}
        if self.required_action is not None:
            d["required_action"] = self.required_action.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SubtaskSpec":
        ra = d.get("required_action")
        return cls(
            SubtaskKind(d["kind"]), str(d["target_page"]),
            Action.from_dict(ra) if ra is not None else None, str(d.get("task_text", "")),
        )
