"""Synthetic pages and graphs for tests, fixtures and demos."""

from __future__ import annotations

import random
from typing import Iterable, Optional, Sequence
from xml.sax.saxutils import quoteattr

from .core import DEFAULT_SCREEN, Action, ActionKind, BoundingBox, Edge, GuiGraph, GuiPage, ScreenSize

VOCAB = (
    "search", "cart", "home", "profile", "settings", "orders", "phones", "laptops", "deals", "help",
    "messages", "wallet", "coupons", "camera", "music", "maps", "news", "weather", "share", "save",
    "filter", "sort", "login", "logout", "history", "favorites", "download", "upload", "play", "pause",
)
INPUT_TEXTS = ("xiaomi 14", "red shoes", "pizza near me", "weather tomorrow", "cheap flights")
PAGE_TOPICS = (
    "home", "search", "search results", "product detail", "shopping cart", "order list", "settings",
    "profile", "wallet", "coupon center", "message center", "category", "deal list", "help center",
    "login", "checkout", "address book", "favorites", "history", "notification",
)


def node_xml(name: str = "", bounds: BoundingBox | Sequence[int] = (0, 0, 0, 0), *, cls: str = "android.view.View",
             rid: str = "", desc: str = "", clickable: Optional[bool] = None, scrollable: bool = False,
             editable: bool = False) -> str:
    b = bounds if isinstance(bounds, BoundingBox) else BoundingBox.from_list(bounds)
    attrs = [("class", cls), ("text", name), ("content-desc", desc), ("resource-id", rid), ("bounds", str(b))]
    if clickable is not None:
        attrs.append(("clickable", "true" if clickable else "false"))
    attrs.append(("scrollable", "true" if scrollable else "false"))
    if editable:
        attrs.append(("editable", "true"))
    return "<node " + " ".join(f"{k}={quoteattr(v)}" for k, v in attrs) + " />"


def page_xml(nodes: Iterable[str]) -> str:
    body = "\n  ".join(nodes)
    return f"<?xml version='1.0' encoding='UTF-8'?>\n<hierarchy rotation=\"0\">\n  {body}\n</hierarchy>\n"


def random_page(rng: random.Random, page_id: str, screen: ScreenSize = DEFAULT_SCREEN, min_elements: int = 1,
                max_elements: int = 6, caption: Optional[str] = None) -> GuiPage:
    """A page of randomly placed elements with random interaction flags.

    Element (name, bounds) pairs are unique so every action-space entry is distinct.
    """
    n = rng.randint(min_elements, max_elements)
    nodes, used = [], set()
    names = rng.sample(VOCAB, k=min(n, len(VOCAB)))
    for i, name in enumerate(names):
        w = rng.randint(40, screen.width // 2)
        h = rng.randint(30, screen.height // 6)
        x = rng.randint(0, screen.width - w)
        y = rng.randint(0, screen.height - h)
        box = BoundingBox(x, y, x + w, y + h)
        if (name, box) in used:
            continue
        used.add((name, box))
        kind = rng.random()
        if kind < 0.55:
            nodes.append(node_xml(name, box, cls="android.widget.Button", rid=f"app:id/{name}", clickable=True))
        elif kind < 0.72:
            nodes.append(node_xml(name, box, cls="androidx.recyclerview.widget.RecyclerView",
                                  rid=f"app:id/{name}_list", clickable=False, scrollable=True))
        elif kind < 0.87:
            nodes.append(node_xml(name, box, cls="android.widget.EditText", rid=f"app:id/{name}_box", editable=True))
        else:
            nodes.append(node_xml(name, box, cls="android.widget.TextView", rid=f"app:id/{name}_label",
                                  clickable=False))
    return GuiPage(page_id, page_xml(nodes), screen, caption=caption)


def random_graph(rng: random.Random, n_pages: int = 12, edge_prob: float = 0.6, screen: ScreenSize = DEFAULT_SCREEN,
                 min_elements: int = 1, max_elements: int = 5) -> GuiGraph:
    """Random app graph: each non-Complete action of each page becomes an edge
    to a random page with probability ``edge_prob``; input slots get one or
    two concrete texts. Page ``p0`` is home."""
    pages = []
    for i in range(n_pages):
        topic = PAGE_TOPICS[i % len(PAGE_TOPICS)]
        pages.append(random_page(rng, f"p{i}", screen, min_elements, max_elements, caption=f"The {topic} page."))
    ids = [p.page_id for p in pages]
    edges = []
    for p in pages:
        for a in p.action_space:
            if a.is_complete or rng.random() > edge_prob:
                continue
            if a.kind is ActionKind.INPUT:
                for text in rng.sample(INPUT_TEXTS, k=rng.randint(1, 2)):
                    edges.append(Edge(p.page_id, Action.input(a.element_name, a.bounds, text), rng.choice(ids)))
            else:
                edges.append(Edge(p.page_id, a, rng.choice(ids)))
    return GuiGraph(pages, edges, "p0")


def off_space_action(page: GuiPage) -> Action:
    """A click on a box that matches no element of ``page``."""
    boxes = {e.bounds for e in page.elements}
    x = 1
    while BoundingBox(x, 1, x + 1, 2) in boxes:
        x += 2
    return Action.click("ghost", BoundingBox(x, 1, x + 1, 2))
