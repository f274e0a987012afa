"""File formats: graph containers, JSONL corpora, run manifests and config."""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Iterator, Optional, TypeVar

from .core import Action, Edge, GraphError, GuiGraph, GuiPage, ScreenSize

GRAPH_FORMAT = "guiflow-graph"
GRAPH_VERSION = 1
MANIFEST_NAME = "manifest.json"

T = TypeVar("T")


class DataError(ValueError):
    """An input file is missing, unreadable or inconsistent."""


class JsonlError(DataError):
    def __init__(self, path, line_no: int, reason: str):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = str(path)
        self.line_no = line_no


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


# -- graph container ---------------------------------------------------------

def graph_to_dict(g: GuiGraph) -> dict[str, Any]:
    screens = {p.screen for p in g.pages.values()}
    screen = next(iter(screens)) if len(screens) == 1 else g.page(g.home).screen
    pages = []
    for p in g.pages.values():
        row: dict[str, Any] = {"page_id": p.page_id, "xml": p.xml}
        if p.screenshot_ref is not None:
            row["screenshot"] = p.screenshot_ref
        if p.caption is not None:
            row["caption"] = p.caption
        if p.screen != screen:
            row["screen"] = [p.screen.width, p.screen.height]
        pages.append(row)
    return {
        "header": {"format": GRAPH_FORMAT, "version": GRAPH_VERSION, "screen": [screen.width, screen.height],
                   "home": g.home},
        "pages": pages,
        "edges": [{"src": e.src, "action": e.action.to_dict(), "dst": e.dst} for e in g.edges],
    }


def graph_from_dict(d: dict[str, Any]) -> GuiGraph:
    try:
        header = d["header"]
        if header.get("format", GRAPH_FORMAT) != GRAPH_FORMAT:
            raise DataError(f"not a graph file: format {header.get('format')!r}")
        if int(header["version"]) != GRAPH_VERSION:
            raise DataError(f"unsupported graph version {header['version']!r}")
        screen = ScreenSize(*header["screen"])
        pages = [
            GuiPage(str(r["page_id"]), r["xml"], ScreenSize(*r["screen"]) if "screen" in r else screen,
                    screenshot_ref=r.get("screenshot"), caption=r.get("caption"))
            for r in d["pages"]
        ]
        edges = [Edge(str(r["src"]), Action.from_dict(r["action"]), str(r["dst"])) for r in d["edges"]]
        return GuiGraph(pages, edges, str(header["home"]))
    except GraphError as exc:
        raise DataError(f"inconsistent graph: {exc}") from exc
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"malformed graph file: {exc!r}") from exc


def dumps_graph(g: GuiGraph) -> str:
    return json.dumps(graph_to_dict(g), ensure_ascii=False, indent=1, sort_keys=True) + "\n"


def save_graph(g: GuiGraph, path) -> None:
    Path(path).write_text(dumps_graph(g), encoding="utf-8")


def load_graph(path) -> GuiGraph:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read graph {path}: {exc.strerror}") from exc
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON at line {exc.lineno}") from exc
    return graph_from_dict(d)


# -- JSONL -------------------------------------------------------------------

def iter_jsonl(path, decode: Optional[Callable[[dict], T]] = None) -> Iterator[T]:
    """Yield one object per non-blank line.

    Raises:
        JsonlError: with the 1-based line number of the first bad line.
        DataError: the file cannot be opened.
    """
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from exc
    with fh:
        for no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise JsonlError(path, no, f"invalid JSON ({exc.msg})") from exc
            if not isinstance(obj, dict):
                raise JsonlError(path, no, "record is not an object")
            if decode is None:
                yield obj
                continue
            try:
                yield decode(obj)
            except (KeyError, TypeError, ValueError) as exc:
                raise JsonlError(path, no, f"bad record: {exc!r}") from exc


def read_jsonl(path, decode: Optional[Callable[[dict], T]] = None) -> list[T]:
    return list(iter_jsonl(path, decode))


def write_jsonl(path, records: Iterable[Any]) -> int:
    """Write records (dicts, or objects with ``to_dict``) one per line; returns the count."""
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in records:
            d = r.to_dict() if hasattr(r, "to_dict") else r
            fh.write(canonical_json(d) + "\n")
            n += 1
    return n


# -- manifests ---------------------------------------------------------------

def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def config_hash(config: dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()


@dataclass
class RunManifest:
    """What a command read and wrote, enough to audit a rerun.

    Paths are recorded by base name so manifests from different output
    directories compare equal when the contents do.
    """

    command: str
    seed: int
    config: dict[str, Any]
    version: str
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    stats: dict[str, Any] = field(default_factory=dict)

    def add_input(self, path) -> None:
        self.inputs[os.path.basename(str(path))] = file_digest(path)

    def add_output(self, path) -> None:
        self.outputs[os.path.basename(str(path))] = file_digest(path)

    def to_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "seed": self.seed,
            "config": self.config,
            "config_sha256": config_hash(self.config),
            "version": self.version,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": dict(sorted(self.outputs.items())),
            "stats": self.stats,
        }

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / MANIFEST_NAME
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                        encoding="utf-8")
        return path


# -- config ------------------------------------------------------------------

def load_config(path) -> dict[str, Any]:
    """Flat JSON object of ``key: value`` settings."""
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ValueError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ValueError(f"config {path} is not valid JSON (line {exc.lineno})") from exc
    if not isinstance(d, dict):
        raise ValueError("config must be a JSON object")
    for k, v in d.items():
        if isinstance(v, (dict, list)):
            raise ValueError(f"config key {k!r}: nested values are not allowed")
    return d
