"""Project builder: check every source file with a disk cache, merge
the indexes, and emit a static HTML view.

A project is a directory with a flat ``project.toml`` (all keys
optional)::

    source = source
    cache = .cache
    include = *.mmt

Files build in include order.  Each produces one cache entry keyed by
a chained content hash: the file's own text hash plus the keys of the
files it includes from, so an upstream change invalidates everything
downstream while untouched subtrees load from disk without any kernel
work.  Entries are plain JSON with no timestamps, written atomically;
two builds of identical sources produce identical bytes.
"""

from __future__ import annotations

import fnmatch
import hashlib
import json
import os
import time
from dataclasses import dataclass
from html import escape
from pathlib import Path
from typing import Optional

from .changes import (
    DepGraph,
    SlotNode,
    _reparse_slot,
    _restructure,
    _revalidate,
    result_fingerprint,
    task_fingerprint,
)
from .document import DEF_SLOT, TYPE_SLOT, Document, parse_document, slot_id
from .engine import HoleRecord, SolveResult
from .index import (
    RelationalIndex,
    TermIndex,
    _head_names,
    relational_index,
    term_index,
)
from .lf import kernel_for
from .model import (
    Equal,
    Inhabitable,
    Judgment,
    Problem,
    Term,
    Typing,
    entry_from_json,
    entry_to_json,
    ref_from_json,
    ref_to_json,
    term_from_json,
    term_to_json,
)
from .render import RenderResult, render_with_paths
from .structure import CheckTask
from .termparse import NotationTable

CACHE_VERSION = 1
CONFIG_NAME = "project.toml"


class ProjectError(Exception):
    """Unusable project layout or configuration."""


@dataclass(frozen=True)
class ProjectConfig:
    root: Path
    source_dir: Path
    cache_dir: Path
    includes: tuple[str, ...] = ("*.mmt",)


def _parse_flat_toml(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ProjectError(f"line {lineno}: expected key = value, got {raw!r}")
        key, _, value = line.partition("=")
        value = value.strip()
        if value[:1] in {'"', "'"} and value[-1:] == value[:1]:
            value = value[1:-1]
        out[key.strip()] = value
    return out


def load_config(root: Path | str) -> ProjectConfig:
    root = Path(root).resolve()
    if not root.is_dir():
        raise ProjectError(f"not a directory: {root}")
    values: dict[str, str] = {}
    cfg = root / CONFIG_NAME
    if cfg.is_file():
        values = _parse_flat_toml(cfg.read_text(encoding="utf-8"))
    source = root / values.get("source", "source")
    cache = root / os.environ.get("LOGON_CACHE", values.get("cache", ".cache"))
    includes = tuple(
        g.strip() for g in values.get("include", "*.mmt").split(",") if g.strip()
    )
    return ProjectConfig(root, source, cache, includes)


# --- serialization of check results ------------------------------------------


def _problem_to_json(p: Problem, default_file: str) -> dict:
    d: dict = {"msg": p.message, "ref": ref_to_json(p.source_ref, default_file)}
    if p.severity != "error":
        d["sev"] = p.severity
    if p.log:
        d["log"] = list(p.log)
    return d


def _problem_from_json(d: dict, default_file: str) -> Problem:
    return Problem(
        d["msg"],
        ref_from_json(d.get("ref"), default_file),
        d.get("sev", "error"),
        tuple(d.get("log", ())),
    )


def _judgment_to_json(j: Judgment, default_file: str) -> dict:
    if isinstance(j, Typing):
        return {
            "kind": "typing",
            "theory": j.theory,
            "subject": term_to_json(j.subject, default_file),
            "expected": term_to_json(j.expected, default_file),
        }
    if isinstance(j, Inhabitable):
        return {
            "kind": "inhabitable",
            "theory": j.theory,
            "term": term_to_json(j.term, default_file),
        }
    if isinstance(j, Equal):
        d = {
            "kind": "equal",
            "theory": j.theory,
            "left": term_to_json(j.left, default_file),
            "right": term_to_json(j.right, default_file),
        }
        if j.at is not None:
            d["at"] = term_to_json(j.at, default_file)
        return d
    raise ProjectError(f"unknown judgment {j!r}")


def _judgment_from_json(d: dict, default_file: str) -> Judgment:
    kind = d["kind"]
    if kind == "typing":
        return Typing(
            d["theory"],
            term_from_json(d["subject"], default_file),
            term_from_json(d["expected"], default_file),
        )
    if kind == "inhabitable":
        return Inhabitable(d["theory"], term_from_json(d["term"], default_file))
    if kind == "equal":
        return Equal(
            d["theory"],
            term_from_json(d["left"], default_file),
            term_from_json(d["right"], default_file),
            term_from_json(d["at"], default_file) if "at" in d else None,
        )
    raise ProjectError(f"unknown judgment kind {kind!r}")


def task_to_json(task: CheckTask, default_file: str) -> dict:
    d: dict = {
        "slot": task.slot,
        "theory": task.theory,
        "judgment": _judgment_to_json(task.judgment, default_file),
        "metas": [entry_to_json(e, default_file) for e in task.metas],
    }
    if task.parse_errors:
        d["parseErrors"] = [
            _problem_to_json(p, default_file) for p in task.parse_errors
        ]
    if task.type_meta is not None:
        d["typeMeta"] = task.type_meta
    if task.source_ref is not None:
        d["ref"] = ref_to_json(task.source_ref, default_file)
    return d


def task_from_json(d: dict, default_file: str) -> CheckTask:
    return CheckTask(
        d["slot"],
        d["theory"],
        _judgment_from_json(d["judgment"], default_file),
        tuple(entry_from_json(e, default_file) for e in d["metas"]),
        tuple(_problem_from_json(p, default_file) for p in d.get("parseErrors", ())),
        d.get("typeMeta"),
        ref_from_json(d.get("ref"), default_file),
    )


def _hole_to_json(h: HoleRecord, default_file: str) -> dict:
    return {
        "ref": ref_to_json(h.source_ref, default_file),
        "theory": h.theory,
        "slot": h.slot,
        "ctx": [entry_to_json(e, default_file) for e in h.ctx],
        "expected": term_to_json(h.expected, default_file),
    }


def _hole_from_json(d: dict, default_file: str) -> HoleRecord:
    return HoleRecord(
        ref_from_json(d.get("ref"), default_file),
        d["theory"],
        d["slot"],
        tuple(entry_from_json(e, default_file) for e in d["ctx"]),
        term_from_json(d["expected"], default_file),
    )


def result_to_json(res: SolveResult, default_file: str) -> dict:
    return {
        "slot": res.slot,
        "ok": res.ok,
        "substitution": {
            k: term_to_json(v, default_file)
            for k, v in sorted(res.substitution.items())
        },
        "solved": {k: v for k, v in sorted(res.solved.items())},
        "problems": [_problem_to_json(p, default_file) for p in res.problems],
        "dependencies": sorted(res.dependencies),
        "elaborated": (
            term_to_json(res.elaborated, default_file)
            if res.elaborated is not None
            else None
        ),
        "expected": (
            term_to_json(res.expected, default_file)
            if res.expected is not None
            else None
        ),
        "holes": [_hole_to_json(h, default_file) for h in res.holes],
    }


def result_from_json(d: dict, default_file: str) -> SolveResult:
    return SolveResult(
        d["slot"],
        d["ok"],
        {k: term_from_json(v, default_file) for k, v in d["substitution"].items()},
        dict(d["solved"]),
        tuple(_problem_from_json(p, default_file) for p in d["problems"]),
        frozenset(d["dependencies"]),
        term_from_json(d["elaborated"], default_file)
        if d.get("elaborated") is not None
        else None,
        term_from_json(d["expected"], default_file)
        if d.get("expected") is not None
        else None,
        tuple(_hole_from_json(h, default_file) for h in d.get("holes", ())),
    )


# --- cache -------------------------------------------------------------------


def _sha(data: str) -> str:
    return hashlib.sha256(data.encode("utf-8")).hexdigest()


def _dumps(obj: object) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _entry_path(cache_dir: Path, name: str) -> Path:
    return cache_dir / (name.replace("/", "__") + ".json")


# --- building ----------------------------------------------------------------


@dataclass
class FileReport:
    name: str
    status: str  # "built" | "cached"
    errors: int
    seconds: float


@dataclass
class BuildReport:
    files: tuple[FileReport, ...]
    errors: int
    seconds: float
    problems: tuple[Problem, ...] = ()
    graph: Optional[DepGraph] = None

    @property
    def ok(self) -> bool:
        return self.errors == 0

    def to_json(self) -> dict:
        return {
            "files": [
                {
                    "name": f.name,
                    "status": f.status,
                    "errors": f.errors,
                    "seconds": round(f.seconds, 6),
                }
                for f in self.files
            ],
            "errors": self.errors,
            "seconds": round(self.seconds, 6),
            "ok": self.ok,
        }


def discover_sources(config: ProjectConfig) -> dict[str, str]:
    """Relative file name -> content, sorted by name."""
    if not config.source_dir.is_dir():
        raise ProjectError(f"source directory missing: {config.source_dir}")
    out: dict[str, str] = {}
    for path in sorted(config.source_dir.rglob("*")):
        if not path.is_file():
            continue
        rel = path.relative_to(config.source_dir).as_posix()
        if any(fnmatch.fnmatch(rel, g) for g in config.includes):
            out[rel] = path.read_text(encoding="utf-8")
    return out


def file_dependencies(docs: dict[str, Document]) -> dict[str, set[str]]:
    """file -> files it includes theories from (cross-file only)."""
    theory_file: dict[str, str] = {}
    for name, doc in docs.items():
        for th in doc.theories:
            theory_file.setdefault(th.name, name)
    deps: dict[str, set[str]] = {name: set() for name in docs}
    for name, doc in docs.items():
        for th in doc.theories:
            for inc in th.includes:
                target = theory_file.get(inc.target)
                if target is not None and target != name:
                    deps[name].add(target)
    return deps


def order_files(docs: dict[str, Document]) -> tuple[list[str], Optional[Problem]]:
    """Topological order by cross-file includes, names as tiebreak."""
    deps = file_dependencies(docs)
    done: list[str] = []
    ready = sorted(n for n, d in deps.items() if not d)
    pending = {n: set(d) for n, d in deps.items() if d}
    while ready:
        n = ready.pop(0)
        done.append(n)
        newly = []
        for m in list(pending):
            pending[m].discard(n)
            if not pending[m]:
                del pending[m]
                newly.append(m)
        ready = sorted(ready + newly)
    if pending:
        cycle = ", ".join(sorted(pending))
        return sorted(docs), Problem(f"include cycle across files: {cycle}", None)
    return done, None


def _slots_of_file(g: DepGraph, name: str) -> list[str]:
    index = g.slot_index()
    out: list[str] = []
    for th in g.docs[name].theories:
        decl = g.decls.get(th.name)
        if decl is None or decl is not th:
            continue  # duplicate theory: the first declaration won
        for cd in decl.constants:
            if cd.type_unit is not None:
                out.append(slot_id(th.name, cd.name, TYPE_SLOT))
            if cd.def_unit is not None:
                out.append(slot_id(th.name, cd.name, DEF_SLOT))
    return sorted(out, key=lambda s: index.get(s, 10**9))


def _store_loaded_type(g: DepGraph, sid: str, res: SolveResult, task: CheckTask) -> None:
    qname = sid.rsplit("!", 1)[0]
    if not res.ok or qname in g.type_slots:
        return
    if task.type_meta is not None:
        produced = res.substitution.get(task.type_meta)
    elif sid.endswith("!" + TYPE_SLOT):
        produced = res.elaborated
    else:
        return
    if produced is not None:
        g.types[qname] = produced
        g.type_slots[qname] = sid


def _file_shard(g: DepGraph, slots: list[str]) -> dict:
    """This file's contribution to the relational index."""
    refers: set[tuple[str, str]] = set()
    depends: set[tuple[str, str]] = set()
    for sid in slots:
        res = g.nodes[sid].validated
        if res is None:
            continue
        qname = sid.rsplit("!", 1)[0]
        for dep in res.dependencies:
            depends.add((sid, dep))
        if res.elaborated is not None:
            used: set[str] = set()
            _head_names(res.elaborated, used)
            refers.update((qname, u) for u in used)
    return {"RefersTo": sorted(refers), "DependsOn": sorted(depends)}


def build_project(config: ProjectConfig, force: bool = False) -> BuildReport:
    t0 = time.monotonic()
    sources = discover_sources(config)
    docs = {name: parse_document(text, name) for name, text in sources.items()}
    order, cycle_problem = order_files(docs)

    g = DepGraph(
        file_order=list(order),
        files=dict(sources),
        docs=docs,
        decls={},
        sigs={},
        order=(),
        tables={},
        structure_problems=(),
        rules=None,  # type: ignore[arg-type]  # set right below
    )
    _restructure(g)
    g.rules = kernel_for(g.validation())
    if cycle_problem is not None:
        g.structure_problems = g.structure_problems + (cycle_problem,)

    index = g.slot_index()
    keys: dict[str, str] = {}
    deps = file_dependencies(docs)
    reports: list[FileReport] = []

    for name in order:
        f0 = time.monotonic()
        # a dep later in the order only happens under an include cycle;
        # its raw content hash keeps the key deterministic
        key = _sha(
            _dumps(
                [
                    CACHE_VERSION,
                    _sha(sources[name]),
                    [
                        keys.get(d, _sha(sources[d]))
                        for d in sorted(deps[name])
                    ],
                ]
            )
        )
        keys[name] = key
        slots = _slots_of_file(g, name)
        entry_file = _entry_path(config.cache_dir, name)
        entry: Optional[dict] = None
        if not force and entry_file.is_file():
            try:
                candidate = json.loads(entry_file.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError):
                candidate = None
            if (
                isinstance(candidate, dict)
                and candidate.get("version") == CACHE_VERSION
                and candidate.get("key") == key
                and sorted(s["task"]["slot"] for s in candidate.get("slots", ()))
                == sorted(slots)
            ):
                entry = candidate

        errors = 0
        if entry is not None:
            for s in entry["slots"]:
                task = task_from_json(s["task"], name)
                res = result_from_json(s["result"], name)
                g.nodes[task.slot] = SlotNode(
                    id=task.slot,
                    file=name,
                    string_rep=s.get("string", ""),
                    context_string=s.get("context", ""),
                    parsed=task,
                    parsed_hash=task_fingerprint(task),
                    validated=res,
                )
            for sid in slots:  # the type store applies in task order
                node = g.nodes[sid]
                _store_loaded_type(g, sid, node.validated, node.parsed)
                qname = sid.rsplit("!", 1)[0]
                node.validated_hash = result_fingerprint(
                    node.validated,
                    g.types.get(qname) if g.type_slots.get(qname) == sid else None,
                )
                errors += sum(
                    1 for p in node.validated.problems if p.severity == "error"
                )
            status = "cached"
        else:
            for sid in slots:
                _reparse_slot(g, sid)
                _revalidate(g, sid, index)
                errors += sum(
                    1
                    for p in g.nodes[sid].validated.problems
                    if p.severity == "error"
                )
            payload = {
                "version": CACHE_VERSION,
                "file": name,
                "key": key,
                "hash": _sha(sources[name]),
                "slots": [
                    {
                        "task": task_to_json(g.nodes[sid].parsed, name),
                        "result": result_to_json(g.nodes[sid].validated, name),
                        "string": g.nodes[sid].string_rep,
                        "context": g.nodes[sid].context_string,
                    }
                    for sid in slots
                ],
                "diagnostics": [
                    _problem_to_json(p, name)
                    for sid in slots
                    for p in g.nodes[sid].validated.problems
                ],
                "index": _file_shard(g, slots),
            }
            _write_atomic(entry_file, _dumps(payload))
            status = "built"
        reports.append(FileReport(name, status, errors, time.monotonic() - f0))

    lib = g.library()
    rel = relational_index(lib)
    terms = term_index(lib)
    _write_atomic(
        config.cache_dir / "relations.json",
        _dumps({"version": CACHE_VERSION, "relations": rel.to_json()}),
    )
    _write_atomic(
        config.cache_dir / "terms.json",
        _dumps({"version": CACHE_VERSION, "entries": terms.to_json()}),
    )
    manifest = {
        "version": CACHE_VERSION,
        "files": {n: {"hash": _sha(sources[n]), "key": keys[n]} for n in order},
    }
    _write_atomic(config.cache_dir / "manifest.json", _dumps(manifest))

    total_errors = sum(r.errors for r in reports) + sum(
        1 for p in g.structure_problems if p.severity == "error"
    )
    return BuildReport(
        tuple(reports),
        total_errors,
        time.monotonic() - t0,
        g.structure_problems,
        g,
    )


def project_indexes(report: BuildReport) -> tuple[RelationalIndex, TermIndex]:
    lib = report.graph.library()
    return relational_index(lib), term_index(lib)


def query_table(g: DepGraph) -> NotationTable:
    """The table for search queries: the last theory in include order
    sees every notation of its includes."""
    if not g.order:
        raise ProjectError("project has no theories")
    return g.tables[g.order[-1]]


# --- HTML view ---------------------------------------------------------------


def _span_tree_html(r: RenderResult) -> str:
    """Nested spans with term-path attributes from a flat preorder span list."""
    text = r.text

    def emit(start: int, end: int, children: list) -> str:
        out: list[str] = []
        pos = start
        for (s, e, path), inner in children:
            out.append(escape(text[pos:s]))
            body = emit(s, e, inner)
            out.append(
                f'<span class="t" data-path="{escape("/".join(path))}">{body}</span>'
            )
            pos = e
        out.append(escape(text[pos:end]))
        return "".join(out)

    # group the preorder spans into a containment tree
    root_children: list = []
    stack: list[tuple[tuple[int, int, tuple], list]] = []
    for span in r.spans:
        s, e, _ = span
        node = (span, [])
        while stack and not (stack[-1][0][0] <= s and e <= stack[-1][0][1]):
            stack.pop()
        (stack[-1][1] if stack else root_children).append(node)
        stack.append(node)
    return emit(0, len(text), root_children)


_PAGE_CSS = """
body { font-family: ui-monospace, 'Cascadia Code', monospace; margin: 2rem; }
h1 { font-size: 1.2rem; }
h2 { font-size: 1.05rem; margin-top: 1.4rem; }
.decl { margin: 0.6rem 0; }
.name { font-weight: bold; }
.full { display: none; }
body.show-inferred .full { display: inline; }
body.show-inferred .short { display: none; }
.t:hover { background: #e8f0fe; }
.toggle { font-family: sans-serif; font-size: 0.9rem; }
"""

_PAGE_JS = """
var box = document.querySelector('#inferred');
if (box) box.addEventListener('change', function (e) {
  document.body.classList.toggle('show-inferred', e.target.checked);
});
"""


def _component_html(term: Term, table: NotationTable) -> str:
    short = render_with_paths(term, table, show_inferred=False)
    full = render_with_paths(term, table, show_inferred=True)
    return (
        f'<span class="short">{_span_tree_html(short)}</span>'
        f'<span class="full">{_span_tree_html(full)}</span>'
    )


def _page(title: str, body: str) -> str:
    return (
        "<!DOCTYPE html><html><head><meta charset='utf-8'>"
        f"<title>{escape(title)}</title><style>{_PAGE_CSS}</style></head>"
        f"<body>{body}<script>{_PAGE_JS}</script></body></html>"
    )


def render_html(config: ProjectConfig, report: Optional[BuildReport] = None) -> list[Path]:
    """One page per source file plus an index page, under ``html/``."""
    if report is None:
        report = build_project(config)
    g = report.graph
    out_dir = config.root / "html"
    written: list[Path] = []

    pages: list[tuple[str, str]] = []
    for name in g.file_order:
        parts = [
            f"<h1>{escape(name)}</h1>",
            '<label class="toggle"><input type="checkbox" id="inferred"> '
            "show inferred parts</label>",
        ]
        for th in g.docs[name].theories:
            if g.decls.get(th.name) is not th:
                continue
            table = g.tables[th.name]
            parts.append(f"<h2>theory {escape(th.name)}</h2>")
            for inc in th.includes:
                parts.append(f'<div class="decl">include {escape(inc.target)}</div>')
            for cd in th.constants:
                line = [f'<span class="name">{escape(cd.name)}</span>']
                for comp, sep in ((TYPE_SLOT, " : "), (DEF_SLOT, " = ")):
                    node = g.nodes.get(slot_id(th.name, cd.name, comp))
                    if (
                        node is not None
                        and node.validated is not None
                        and node.validated.elaborated is not None
                    ):
                        line.append(
                            sep + _component_html(node.validated.elaborated, table)
                        )
                parts.append(f'<div class="decl">{"".join(line)}</div>')
        out = out_dir / (name.replace("/", "__") + ".html")
        _write_atomic(out, _page(name, "".join(parts)))
        written.append(out)
        pages.append((name, out.name))

    listing = "".join(
        f'<li><a href="{escape(href)}">{escape(name)}</a></li>' for name, href in pages
    )
    idx = out_dir / "index.html"
    _write_atomic(idx, _page("project", f"<h1>project files</h1><ul>{listing}</ul>"))
    written.append(idx)
    return written
