"""Reference implementations written independently of the package internals.

They trade speed for obviousness: explicit enumeration instead of search,
exact rationals instead of floats.
"""

from __future__ import annotations

import math
from fractions import Fraction

from guiflow.core import ActionKind, BoundingBox, SubtaskKind

DIRECTIONS = ("up", "down", "left", "right")


def key(a):
    d = a.direction.value if a.direction is not None else None
    return (a.kind.value, tuple(a.bounds.as_list()), a.element_name, d)


def text(a):
    return (a.input_text or "").strip()


def expected_space_keys(page):
    """Action keys a page should offer, straight from its element flags."""
    keys = []
    for e in page.elements:
        b = tuple(e.bounds.as_list())
        if e.clickable:
            keys.append(("click", b, e.name, None))
        if e.scrollable:
            keys.extend(("scroll", b, e.name, d) for d in DIRECTIONS)
        if e.inputtable:
            keys.append(("input", b, e.name, None))
    keys.append(("complete", (0, 0, 0, 0), "", None))
    return keys


def in_space(page, a):
    if a.kind is ActionKind.COMPLETE:
        return True
    return key(a) in set(expected_space_keys(page))


def same_action(edge_action, a):
    if key(edge_action) != key(a):
        return False
    return a.kind is not ActionKind.INPUT or text(edge_action) == text(a)


def execute(g, page_id, a):
    """Destination of ``a`` on ``page_id``: the first edge, in file order, that matches."""
    for e in g.edges:
        if e.src == page_id and same_action(e.action, a):
            return e.dst
    return None


def satisfied(spec, pages, actions):
    """Walk the subtask list in order over a page/action sequence."""
    subs = list(spec.subtasks)
    i = 0
    for t, page in enumerate(pages):
        while i < len(subs) and subs[i].kind is SubtaskKind.REACH and subs[i].target_page == page:
            i += 1
        if t < len(actions) and i < len(subs):
            s = subs[i]
            if s.kind is SubtaskKind.OPERATE and s.target_page == page and same_action(s.required_action, actions[t]):
                i += 1
    return i == len(subs)


def distinct_moves(g, page_id):
    """One representative per distinct executable action on a page."""
    seen, out = [], []
    for e in g.edges:
        if e.src != page_id:
            continue
        if any(same_action(s, e.action) for s in seen):
            continue
        seen.append(e.action)
        out.append((e.action, execute(g, page_id, e.action)))
    return out


def best_completions(g, start, spec, depth):
    """Map every action-prefix (as a tuple of oracle step keys) to the shortest
    completing flow length (Complete included, at most ``depth``) extending it."""
    best: dict[tuple, int] = {}

    def note(prefix, length):
        for n in range(len(prefix) + 1):
            p = prefix[:n]
            if p not in best or best[p] > length:
                best[p] = length

    def walk(pages, actions, prefix):
        if satisfied(spec, pages, actions):
            note(prefix + (("complete",),), len(actions) + 1)
        if len(actions) + 1 >= depth:
            return
        for a, dst in distinct_moves(g, pages[-1]):
            walk(pages + [dst], actions + [a], prefix + ((key(a), text(a)),))

    walk([start], [], ())
    return best


def step_key(a):
    if a.kind is ActionKind.COMPLETE:
        return ("complete",)
    return (key(a), text(a))


def classify(g, start, history, a, spec, depth, best=None):
    """Reward level name for taking ``a`` after ``history`` (a list of actions
    from ``start``), with every flow length capped at ``depth``."""
    best = best if best is not None else best_completions(g, start, spec, depth)
    golden = best.get(())
    if golden is None:
        raise ValueError("no completing flow within depth")
    pages = [start]
    for h in history:
        pages.append(execute(g, pages[-1], h))
    page = g.page(pages[-1])
    if not in_space(page, a):
        return "invalid"
    if a.kind is not ActionKind.COMPLETE and execute(g, pages[-1], a) is None:
        return "incomplete" if a.kind is ActionKind.INPUT else "invalid"
    prefix = tuple(step_key(h) for h in history) + (step_key(a),)
    total = best.get(prefix)
    if total is None or total > depth:
        return "incomplete"
    return "golden" if total == golden else "longer"


def expanded_box(b: BoundingBox, width: int, height: int, margin: Fraction):
    """Exact-rational box growth by ``margin`` of the screen, floored then clamped."""
    dx, dy = margin * width, margin * height

    def fl(v, hi):
        return min(max(math.floor(v), 0), hi)

    return (fl(b.x1 - dx, width), fl(b.y1 - dy, height), fl(b.x2 + dx, width), fl(b.y2 + dy, height))


def token_f1(pred: str, gold: str) -> Fraction:
    p, g = pred.lower().split(), gold.lower().split()
    if not p and not g:
        return Fraction(1)
    common = 0
    pool = list(g)
    for w in p:
        if w in pool:
            pool.remove(w)
            common += 1
    if common == 0:
        return Fraction(0)
    prec, rec = Fraction(common, len(p)), Fraction(common, len(g))
    return 2 * prec * rec / (prec + rec)


def log_softmax(scores):
    m = max(scores)
    z = sum(math.exp(s - m) for s in scores)
    return [s - m - math.log(z) for s in scores]
