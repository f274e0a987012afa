"""Hand-built graphs and flows used by tests, the acceptance suite and the CLI.

* ``mall_graph`` / ``mall_flow``: a nine-page shopping flow (search a phone,
  open it, add a white one to the cart) with its step-by-step description.
* ``branching_graph``: several routes to a product page with one operation
  to do there, including a longer detour and a dead end.
* ``two_route_graph``: two different routes to the same target page.
* ``demo_graph``: a seeded synthetic app for the end-to-end pipeline.
"""

from __future__ import annotations

import random

from .core import DEFAULT_SCREEN, Action, BoundingBox, Edge, GuiFlow, GuiGraph, GuiPage
from .reward import CompletionSpec
from .core import SubtaskSpec
from .synth import node_xml, page_xml, random_graph

B = BoundingBox


def _page(pid: str, nodes: list[str], caption: str) -> GuiPage:
    return GuiPage(pid, page_xml(nodes), DEFAULT_SCREEN, caption=caption)


def _button(name: str, box: BoundingBox, rid: str = "") -> str:
    return node_xml(name, box, cls="android.widget.Button", rid=rid or f"mall:id/{name.lower().replace(' ', '_')}",
                    clickable=True)


def _label(name: str, box: BoundingBox, rid: str = "") -> str:
    return node_xml(name, box, cls="android.widget.TextView", rid=rid, clickable=False)


MALL_SEARCH_ICON = B(177, 96, 273, 168)
MALL_SEARCH_BOX = B(231, 72, 555, 168)
MALL_SEARCH_BUTTON = B(597, 48, 702, 192)
MALL_RESULT = B(425, 1074, 628, 1125)
MALL_ADD_TO_CART = B(294, 1122, 429, 1154)
MALL_PARAM_LIST = B(0, 585, 720, 1088)
MALL_WHITE = B(187, 693, 235, 722)
MALL_OK = B(333, 1121, 387, 1153)

MALL_ACTIONS = (
    Action.click("search", MALL_SEARCH_ICON),
    Action.input("water purifier", MALL_SEARCH_BOX, "xiaomi 14"),
    Action.click("search", MALL_SEARCH_BUTTON),
    Action.click("Xiaomi 14", MALL_RESULT),
    Action.click("Add to cart", MALL_ADD_TO_CART),
    Action.scroll("", MALL_PARAM_LIST, "up"),
    Action.click("white", MALL_WHITE),
    Action.click("OK", MALL_OK),
)

MALL_DESCRIPTIONS = (
    "On the homepage of Xiaomi Mall, click the search icon to enter the search page.",
    'On the search page, enter "xiaomi 14" in the search box to search.',
    "On the search page, click the search icon to search.",
    'On the search results page, select the detailed information of "xiaomi 14".',
    'On the detailed information page, select and click "Add to Cart" to enter the parameter page of the phone.',
    "On the parameter page, scroll the page to view more parameter information.",
    "On the parameter page, select “white\" to confirm the parameters of the phone.",
    'On the parameter page, click the "Confirm" button at the bottom to confirm the parameter configuration of the phone.',
)

MALL_TASK = "Help me find detailed information about xiaomi 14, and add a white one to the shopping cart."

#: Click names treated as already present in the dataset when splitting the mall flow.
MALL_KNOWN_ELEMENT_NAMES = frozenset({"search", "Add to cart", "white", "OK"})


def _param_sheet(pid: str, price: str, selected: str, scrolled: bool) -> GuiPage:
    top = 585 if scrolled else 640
    nodes = [
        node_xml("", MALL_PARAM_LIST, cls="androidx.recyclerview.widget.RecyclerView", rid="mall:id/params",
                 clickable=False, scrollable=True),
        _label("Xiaomi 14", B(180, top - 80, 500, top - 40), "mall:id/sheet_title"),
        _label(price, B(180, top - 40, 360, top - 5), "mall:id/price"),
        _label("Color", B(40, 650, 160, 690), "mall:id/color_label"),
        _button("white", MALL_WHITE, "mall:id/color_white"),
        _button("black", B(250, 693, 310, 722), "mall:id/color_black"),
        _button("green", B(325, 693, 395, 722), "mall:id/color_green"),
        _label("Version", B(40, 760, 180, 800), "mall:id/version_label"),
        _button("12GB+256GB", B(40, 810, 300, 850), "mall:id/v1"),
        _button("16GB+512GB", B(320, 810, 580, 850), "mall:id/v2"),
        _button("OK", MALL_OK, "mall:id/ok"),
        _label(f"selected: {selected}", B(40, 1000, 400, 1040), "mall:id/selected"),
    ]
    if scrolled:
        nodes.insert(1, _button("close", B(640, 500, 700, 560), "mall:id/close"))
    return _page(pid, nodes, "A parameter selection sheet for the phone.")


def mall_graph() -> GuiGraph:
    pages = [
        _page("P1", [
            _button("search", MALL_SEARCH_ICON, "mall:id/search_icon"),
            _button("Phones", B(40, 300, 200, 380)),
            _button("Cart", B(560, 1180, 700, 1270)),
            _label("Xiaomi Mall", B(20, 20, 300, 80), "mall:id/title"),
        ], "The homepage of Xiaomi Mall."),
        _page("P2", [
            node_xml("water purifier", MALL_SEARCH_BOX, cls="android.widget.EditText", rid="mall:id/search_box",
                     editable=True),
            _button("back", B(0, 72, 120, 168)),
            _label("Hot searches", B(20, 220, 300, 260)),
            _button("air purifier", B(20, 280, 240, 330)),
        ], "The search page with suggested keywords."),
        _page("P3", [
            node_xml("xiaomi 14", MALL_SEARCH_BOX, cls="android.widget.EditText", rid="mall:id/search_box",
                     editable=True),
            _button("search", MALL_SEARCH_BUTTON, "mall:id/search_go"),
            _button("back", B(0, 72, 120, 168)),
            _label("xiaomi 14 pro", B(20, 220, 300, 260)),
        ], "The search page with a typed query."),
        _page("P4", [
            _button("Xiaomi 14", MALL_RESULT, "mall:id/result_title"),
            _button("Xiaomi 14 Pro", B(425, 500, 628, 551), "mall:id/result_title"),
            _button("Sort", B(20, 200, 140, 250)),
            _button("Filter", B(560, 200, 700, 250)),
        ], "The search results page."),
        _page("P5", [
            _label("Xiaomi 14", B(20, 700, 400, 760), "mall:id/product_name"),
            _label("¥3999", B(20, 770, 200, 820), "mall:id/product_price"),
            _button("Add to cart", MALL_ADD_TO_CART, "mall:id/add_cart"),
            _button("Buy now", B(450, 1122, 700, 1154), "mall:id/buy_now"),
        ], "The detailed information page of the phone."),
        _page("P6", [
            node_xml("", MALL_PARAM_LIST, cls="androidx.recyclerview.widget.RecyclerView", rid="mall:id/params",
                     clickable=False, scrollable=True),
            _label("Xiaomi 14", B(180, 560, 500, 600), "mall:id/sheet_title"),
            _label("Loading options", B(40, 650, 400, 690), "mall:id/loading"),
        ], "A parameter selection sheet, partly shown."),
        _param_sheet("P7", "¥3999", "none", scrolled=True),
        _param_sheet("P8", "¥3999", "white", scrolled=True),
        _page("P9", [
            _label("Added to cart", B(200, 600, 520, 660), "mall:id/toast"),
            _button("Go to cart", B(200, 700, 520, 760), "mall:id/go_cart"),
            _label("Xiaomi 14", B(20, 700 - 300, 400, 460), "mall:id/product_name"),
        ], "The detailed information page with a cart confirmation."),
    ]
    ids = [p.page_id for p in pages]
    edges = [Edge(ids[i], a, ids[i + 1]) for i, a in enumerate(MALL_ACTIONS)]
    edges += [
        Edge("P2", Action.click("back", B(0, 72, 120, 168)), "P1"),
        Edge("P4", Action.click("Xiaomi 14 Pro", B(425, 500, 628, 551)), "P5"),
        Edge("P5", Action.click("Buy now", B(450, 1122, 700, 1154)), "P6"),
        Edge("P7", Action.click("black", B(250, 693, 310, 722)), "P8"),
    ]
    return GuiGraph(pages, edges, "P1")


def mall_flow() -> GuiFlow:
    steps = tuple((f"P{i + 1}", a) for i, a in enumerate(MALL_ACTIONS))
    return GuiFlow(MALL_TASK, steps, MALL_DESCRIPTIONS, "P9")


def branching_graph() -> GuiGraph:
    """Routes from P0 to the product page P2 where "add to cart" leads to P3.

    P0 -a00-> P1 -> P2 and P0 -a01-> P1_1 -a11-> P2 take three actions plus
    Complete; P0 -a02-> P1_2 -> P2_2 -> P2 takes one more; from P1_1, a13
    detours through P2_2 and a14 reaches P3_1, from which P2 is unreachable.
    """
    def button_page(pid, caption, names):
        nodes = [_button(n, B(40, 100 + 120 * i, 680, 200 + 120 * i), f"fig:id/{n}") for i, n in enumerate(names)]
        return _page(pid, nodes, caption)

    pages = [
        button_page("P0", "The home page.", ["a00", "a01", "a02"]),
        button_page("P1", "A category page.", ["to product"]),
        button_page("P1_1", "A search page.", ["a11", "a12", "a13", "a14"]),
        button_page("P1_2", "A deals page.", ["to list"]),
        button_page("P2", "The product A page.", ["add to cart", "back"]),
        button_page("P2_2", "A product list page.", ["product A"]),
        button_page("P3", "The cart page.", ["checkout"]),
        button_page("P3_1", "The help page.", ["faq"]),
    ]
    by_id = {p.page_id: p for p in pages}

    def click(pid, name):
        e = next(e for e in by_id[pid].elements if e.name == name)
        return Action.click(name, e.bounds)

    edges = [
        Edge("P0", click("P0", "a00"), "P1"),
        Edge("P0", click("P0", "a01"), "P1_1"),
        Edge("P0", click("P0", "a02"), "P1_2"),
        Edge("P1", click("P1", "to product"), "P2"),
        Edge("P1_1", click("P1_1", "a11"), "P2"),
        Edge("P1_1", click("P1_1", "a13"), "P2_2"),
        Edge("P1_1", click("P1_1", "a14"), "P3_1"),
        Edge("P1_2", click("P1_2", "to list"), "P2_2"),
        Edge("P2_2", click("P2_2", "product A"), "P2"),
        Edge("P2", click("P2", "add to cart"), "P3"),
        Edge("P2", click("P2", "back"), "P0"),
        Edge("P3_1", click("P3_1", "faq"), "P3_1"),
    ]
    return GuiGraph(pages, edges, "P0")


def branching_spec(g: GuiGraph) -> CompletionSpec:
    add = next(e.action for e in g.out_edges("P2") if e.action.element_name == "add to cart")
    return CompletionSpec((
        SubtaskSpec.reach("P2", 'Go to the "Product A" page.'),
        SubtaskSpec.operate("P2", add, "Add Product A to the cart on the product page."),
    ))


def branching_action(g: GuiGraph, page_id: str, name: str) -> Action:
    return next(e.action for e in g.out_edges(page_id) if e.action.element_name == name)


def two_route_graph() -> GuiGraph:
    """H reaches T either via A (the golden route) or via B then C."""
    def p(pid, caption, names):
        return _page(pid, [_button(n, B(40, 100 + 150 * i, 680, 220 + 150 * i), f"two:id/{n}")
                           for i, n in enumerate(names)], caption)

    pages = [
        p("H", "The home page.", ["shop", "browse"]),
        p("A", "The shop page.", ["open target"]),
        p("B", "The browse page.", ["category"]),
        p("C", "The category page.", ["item"]),
        p("T", "The target page.", ["done"]),
    ]
    by_id = {pg.page_id: pg for pg in pages}

    def click(pid, name):
        e = next(e for e in by_id[pid].elements if e.name == name)
        return Action.click(name, e.bounds)

    edges = [
        Edge("H", click("H", "shop"), "A"),
        Edge("A", click("A", "open target"), "T"),
        Edge("H", click("H", "browse"), "B"),
        Edge("B", click("B", "category"), "C"),
        Edge("C", click("C", "item"), "T"),
    ]
    return GuiGraph(pages, edges, "H")


def two_route_flows(g: GuiGraph) -> tuple[GuiFlow, GuiFlow]:
    """(golden flow via A, alternate completing flow via B and C)."""
    def act(pid, name):
        return next(e.action for e in g.out_edges(pid) if e.action.element_name == name)

    task = "Open the target page."
    golden = GuiFlow(task, (("H", act("H", "shop")), ("A", act("A", "open target"))), (), "T")
    alt = GuiFlow(task, (("H", act("H", "browse")), ("B", act("B", "category")), ("C", act("C", "item"))), (), "T")
    return golden, alt


def demo_graph(seed: int = 7, n_pages: int = 24) -> GuiGraph:
    """Seeded synthetic app graph used for pipeline runs."""
    return random_graph(random.Random(seed), n_pages=n_pages, edge_prob=0.7, min_elements=2, max_elements=6)


FIXTURES = {
    "mall": mall_graph,
    "branching": branching_graph,
    "two-route": two_route_graph,
    "demo": demo_graph,
}


SEARCH_BOX = B(231, 72, 555, 168)
RESULT_LIST = B(0, 528, 720, 960)


def search_page() -> GuiPage:
    """A search box (typed into and tapped) above a scrollable result list."""
    nodes = [
        node_xml("search box", SEARCH_BOX, cls="android.widget.EditText", rid="fig:id/search_box", editable=True),
        node_xml("", RESULT_LIST, cls="androidx.recyclerview.widget.RecyclerView", rid="fig:id/results",
                 clickable=False, scrollable=True),
        _label("Results", B(20, 460, 300, 510), "fig:id/results_label"),
    ]
    return _page("search", nodes, "A search page.")
