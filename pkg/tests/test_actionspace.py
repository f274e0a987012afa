import random
import xml.etree.ElementTree as ET

import pytest
from hypothesis import given, strategies as st

from guiflow import fixtures
from guiflow.actionspace import (GestureKind, MalformedXml, NotAlignable, action_in_space, align_action,
                                 enumerate_action_space, parse_page_xml)
from guiflow.core import DEFAULT_SCREEN, Action, BoundingBox, GuiPage, ScreenSize
from guiflow.synth import node_xml, page_xml, random_page

import oracles


def test_search_box_is_inputtable_and_clickable():
    xml = page_xml([node_xml("search box", BoundingBox(231, 72, 555, 168), cls="android.widget.EditText",
                             editable=True)])
    (e,) = parse_page_xml(xml, DEFAULT_SCREEN)
    assert (e.name, e.bounds, e.inputtable, e.clickable) == ("search box", BoundingBox(231, 72, 555, 168), True, True)


def test_recycler_view_is_scrollable():
    xml = ('<hierarchy><node class="androidx.recyclerview.widget.RecyclerView" scrollable="true" '
           'bounds="[0,528][720,960]" /></hierarchy>')
    (e,) = parse_page_xml(xml, DEFAULT_SCREEN)
    assert e.scrollable and not e.inputtable and not e.clickable


def test_empty_document():
    assert parse_page_xml("", DEFAULT_SCREEN) == []
    assert parse_page_xml("   \n", DEFAULT_SCREEN) == []
    assert enumerate_action_space(GuiPage("e", "")) == [Action.complete()]


def test_malformed_document_raises():
    with pytest.raises(MalformedXml):
        parse_page_xml("<hierarchy><node></hierarchy>", DEFAULT_SCREEN)


def test_bad_bounds_node_is_skipped_and_reported():
    xml = ('<hierarchy><node text="ok" clickable="true" bounds="[0,0][10,10]" />'
           '<node text="bad" clickable="true" bounds="[0,0][10]" /></hierarchy>')
    errors = []
    els = parse_page_xml(xml, DEFAULT_SCREEN, errors)
    assert [e.name for e in els] == ["ok"]
    assert len(errors) == 1 and "node[1]" in str(errors[0])


def test_names_ids_and_clamping():
    xml = ('<hierarchy><node text="" content-desc="Back" clickable="true" bounds="[-5,0][800,1300]" />'
           '<node text="Go" resource-id="app:id/go" clickable="true" bounds="[1,1][2,2]" /></hierarchy>')
    a, b = parse_page_xml(xml, DEFAULT_SCREEN)
    assert (a.name, a.id, a.bounds) == ("Back", "/hierarchy/node[0]", BoundingBox(0, 0, 720, 1280))
    assert (b.name, b.id) == ("Go", "app:id/go")


def test_explicit_not_clickable_input():
    xml = '<hierarchy><node class="android.widget.EditText" clickable="false" bounds="[0,0][9,9]" /></hierarchy>'
    (e,) = parse_page_xml(xml, DEFAULT_SCREEN)
    assert e.inputtable and not e.clickable


def test_search_page_enumeration_order():
    space = fixtures.search_page().action_space
    kinds = [(a.kind.value, a.direction.value if a.direction else None) for a in space]
    assert kinds == [("click", None), ("input", None), ("scroll", "up"), ("scroll", "down"),
                     ("scroll", "left"), ("scroll", "right"), ("complete", None)]
    assert len(space) == 7


def test_single_clickable_page():
    b = BoundingBox(0, 0, 50, 50)
    page = GuiPage("p", page_xml([node_xml("ok", b, clickable=True)]))
    assert list(page.action_space) == [Action.click("ok", b), Action.complete()]


def _raw_counts(xml):
    """Count interaction flags straight from the XML attributes."""
    clickable = scrollable = inputtable = 0
    for node in ET.fromstring(xml).iter("node"):
        cls = node.get("class", "").lower()
        inp = node.get("editable") == "true" or "edittext" in cls or "input" in cls
        clk = node.get("clickable")
        clickable += (clk == "true") if clk is not None else inp
        scrollable += node.get("scrollable") == "true"
        inputtable += inp
    return clickable, scrollable, inputtable


def test_cardinality_law_on_random_pages():
    rng = random.Random(1234)
    for i in range(1000):
        page = random_page(rng, f"p{i}", min_elements=0, max_elements=8)
        c, s, n = _raw_counts(page.xml)
        assert len(page.action_space) == c + 4 * s + n + 1
        assert sorted(map(repr, (oracles.key(a) for a in page.action_space))) == \
            sorted(map(repr, oracles.expected_space_keys(page)))


@given(st.integers(0, 10_000))
def test_enumerated_actions_are_members(seed):
    page = random_page(random.Random(seed), "p")
    for a in page.action_space:
        assert action_in_space(a, page)


def test_membership():
    g = fixtures.mall_graph()
    p1 = g.page("P1")
    assert action_in_space(Action.click("search", BoundingBox(177, 96, 273, 168)), p1)
    assert not action_in_space(Action.scroll("", BoundingBox(0, 0, 720, 100), "up"), p1)
    box = BoundingBox(231, 72, 555, 168)
    assert action_in_space(Action.input("water purifier", box, "anything at all"), g.page("P2"))
    assert not action_in_space(Action.input("other name", box, "x"), g.page("P2"))


def test_align_click():
    g = align_action(Action.click("x", BoundingBox(273, 84, 324, 180)))
    assert (g.kind, g.start, g.end) == (GestureKind.TAP, (298, 132), None)


def test_align_input_types_at_center():
    g = align_action(Action.input("x", BoundingBox(273, 84, 324, 180), "hello"))
    assert (g.kind, g.start, g.text) == (GestureKind.TYPE_AT, (298, 132), "hello")


@pytest.mark.parametrize("direction,end", [("left", (180, 744)), ("right", (540, 744)),
                                           ("up", (360, 636)), ("down", (360, 852))])
def test_align_scroll(direction, end):
    g = align_action(Action.scroll("", BoundingBox(0, 528, 720, 960), direction))
    assert g.kind is GestureKind.SWIPE and g.start == (360, 744) and g.end == end


def test_complete_not_alignable():
    with pytest.raises(NotAlignable):
        align_action(Action.complete())


@given(st.integers(0, 700), st.integers(0, 1200), st.integers(0, 700), st.integers(0, 1200),
       st.sampled_from(["up", "down", "left", "right"]))
def test_swipes_stay_in_box_on_the_central_axis(x1, y1, w, h, d):
    b = BoundingBox(x1, y1, x1 + w, y1 + h)
    g = align_action(Action.scroll("", b, d), ScreenSize(2000, 2500))
    (sx, sy), (ex, ey) = g.start, g.end
    cx, cy = (b.x1 + b.x2) // 2, (b.y1 + b.y2) // 2
    assert (sx, sy) == (cx, cy)
    if d in ("left", "right"):
        assert ey == cy and ex == cx + (1 if d == "right" else -1) * (w // 4)
    else:
        assert ex == cx and ey == cy + (1 if d == "down" else -1) * (h // 4)
    assert b.x1 <= ex <= b.x2 and b.y1 <= ey <= b.y2
