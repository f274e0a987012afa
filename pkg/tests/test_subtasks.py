import random

from guiflow import fixtures
from guiflow.core import Action, ActionKind, BoundingBox, GuiFlow, SubtaskKind
from guiflow.sampler import DatasetRegistry, PageNameRegistry
from guiflow.subtasks import (REACH_TEMPLATES, SimilarityConfig, core_name, extract_operation_subtasks,
                              extract_reaching_subtasks, page_similarity)

VISIT = "Visit the {text} page."
NAVIGATE = "Help me navigate to {text} interface."


def scripted_chooser(*picks):
    it = iter(picks)
    return lambda templates, rng: next(it)


def _registry():
    reg = DatasetRegistry()
    reg.element_names.update(fixtures.MALL_KNOWN_ELEMENT_NAMES)
    return reg


def mall_subtasks(mall):
    g, f = mall
    reach = extract_reaching_subtasks(f, g, _registry(), choose=scripted_chooser(VISIT, NAVIGATE))
    return reach, extract_operation_subtasks(f, g)


def test_templates_have_a_single_slot():
    assert len(REACH_TEMPLATES) == 32
    assert all(t.count("{text}") == 1 for t in REACH_TEMPLATES)


def test_core_name():
    assert core_name("search results page") == "search results"
    assert core_name("Settings Interface") == "Settings"
    assert core_name("homepage") == "homepage"


def test_mall_reaching_subtasks(mall):
    reach, _ = mall_subtasks(mall)
    got = [(s.target_page, s.task_text, sub.page_ids()) for s, sub in reach]
    assert got == [
        ("P4", "Visit the search results page.", ["P1", "P2", "P3", "P4"]),
        ("P5", "Help me navigate to “Xiaomi 14” interface.", ["P1", "P2", "P3", "P4", "P5"]),
    ]
    assert all(s.kind is SubtaskKind.REACH for s, _ in reach)
    assert all(sub.task == s.task_text for s, sub in reach)


def test_mall_operation_subtasks(mall):
    g, f = mall
    _, ops = mall_subtasks(mall)
    assert [(s.target_page, len(sub.page_ids())) for s, sub in ops] == [("P6", 7), ("P7", 8)]
    (s6, sub6), (s7, sub7) = ops
    assert s6.required_action == Action.scroll("", BoundingBox(0, 585, 720, 1088), "up")
    assert sub6.task == "On the parameter page, scroll the page to view more parameter information."
    assert s7.required_action == Action.click("white", BoundingBox(187, 693, 235, 722))
    assert sub7.task == "On the parameter page, select “white\" to confirm the parameters of the phone."
    assert sub7.extra["rule"] == "operate-similar-pages"


def test_similarity_marks_only_the_colour_pick(mall):
    g, f = mall
    ids = f.page_ids()
    sims = [page_similarity(g.page(a), g.page(b)) for a, b in zip(ids, ids[1:])]
    assert [s >= 0.8 for s in sims] == [False] * 6 + [True, False]


def test_shared_name_mentions_block_rule_one(mall):
    g, f = mall
    reach, _ = mall_subtasks(mall)
    names = {sub.extra["page_name"] for _, sub in reach}
    assert "detailed information page" not in names and "parameter page" not in names


def test_known_element_names_suppress_rule_two(mall):
    g, f = mall
    reg = _registry()
    reg.element_names.add("Xiaomi 14")
    reach = extract_reaching_subtasks(f, g, reg, choose=scripted_chooser(VISIT))
    assert [s.target_page for s, _ in reach] == ["P4"]


def test_rule_two_registers_new_names(mall):
    g, f = mall
    reg = _registry()
    extract_reaching_subtasks(f, g, reg, rng=random.Random(0))
    assert "Xiaomi 14" in reg.element_names
    again = extract_reaching_subtasks(f, g, reg, rng=random.Random(0))
    assert [s.target_page for s, _ in again] == ["P4"]


def test_page_names_are_claimed(mall):
    g, f = mall
    names = PageNameRegistry()
    extract_reaching_subtasks(f, g, _registry(), rng=random.Random(0), names=names)
    assert names.names == {"search results page": "P4", "Xiaomi 14": "P5"}


def test_minimum_length_drops_short_prefixes(mall):
    g, f = mall
    ops = extract_operation_subtasks(f, g, min_steps=1)
    assert [s.required_action.kind for s, _ in ops] == [ActionKind.INPUT, ActionKind.SCROLL, ActionKind.CLICK]


def test_similarity_threshold_is_configurable(mall):
    g, f = mall
    ops = extract_operation_subtasks(f, g, SimilarityConfig(0.95))
    assert [s.target_page for s, _ in ops] == ["P6"]


def test_empty_flow_has_no_subtasks(mall):
    g, _ = mall
    f = GuiFlow("", (), (), "P1")
    assert extract_reaching_subtasks(f, g, DatasetRegistry()) == []
    assert extract_operation_subtasks(f, g) == []


def test_subtask_text_names_its_target(mall):
    reach, _ = mall_subtasks(mall)
    for s, sub in reach:
        assert core_name(sub.extra["page_name"]) in s.task_text
