"""IDE backend: the whole feature set behind one JSON request surface.

A ``Session`` keeps one dependency graph per open document, built over
the project's sources with the open text overlaid, and answers every
request against the document version it echoes back.  Queries never
parse or check on their own; they read the graph the last edit left
behind, so a replayed request log reproduces every response byte for
byte.

The same payloads travel over two transports: newline-delimited JSON
on stdio (``{"id", "method", "params"}`` per line) and HTTP POST with
one route per method under ``/rpc/``.  Field names and error codes are
pinned in ``docs/format.md`` and ``protocol/*.schema.json``.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Iterator, Optional

from . import index as indexes
from .changes import DepGraph, build_graph, check_incremental
from .document import DEF_SLOT, TYPE_SLOT, parse_document, slot_id
from .engine import HoleRecord, Solver
from .model import (
    Complex,
    ConstRef,
    Context,
    ContextEntry,
    SourceRef,
    Term,
    Typing,
    VarRef,
    children_with_paths,
    free_vars,
    qname_local,
    term_to_json,
)
from .project import ProjectError, discover_sources, load_config, order_files
from .render import render_term

PROTOCOL_VERSION = 1

# inference queries solve for this meta; the name cannot collide with
# parse metas, which are numbered /X1, /X2, ...
_QUERY_META = "/T1"


class ServerError(Exception):
    """Protocol-level failure; ``code`` is one of the pinned error codes."""

    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code
        self.message = message


def _bad(message: str) -> ServerError:
    return ServerError("BadRequest", message)


def _str_param(params: dict, key: str) -> str:
    v = params.get(key)
    if not isinstance(v, str):
        raise _bad(f"missing string parameter {key!r}")
    return v


def _int_param(params: dict, key: str) -> int:
    v = params.get(key)
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise _bad(f"parameter {key!r} must be a non-negative integer")
    return v


def _range_param(params: dict, key: str) -> tuple[int, int]:
    v = params.get(key)
    if (
        not isinstance(v, list)
        or len(v) != 2
        or any(isinstance(x, bool) or not isinstance(x, int) or x < 0 for x in v)
        or v[0] > v[1]
    ):
        raise _bad(f"parameter {key!r} must be [start, end] with start <= end")
    return v[0], v[1]


def _span(r: Optional[SourceRef]) -> Optional[list[int]]:
    return [r.start, r.end] if r is not None else None


@dataclass
class OpenDoc:
    uri: str
    version: int
    text: str
    graph: DepGraph


# --- locating terms under the cursor -----------------------------------------


def _deepest(
    t: Term, ctx: Context, path: tuple[str, ...], start: int, end: int
) -> Optional[tuple[Term, Context, tuple[str, ...]]]:
    """Deepest node whose span contains [start, end), with the binder
    context in scope there.  Descends through span-less nodes, so
    inferred wrappers never hide their source children."""
    best = None
    if t.source_ref is not None and t.source_ref.contains(start, end):
        best = (t, ctx, path)
    if not isinstance(t, Complex):
        return best
    inner = list(ctx)
    for i, e in enumerate(t.bound):
        if e.type is not None:
            hit = _deepest(e.type, tuple(inner), path + (f"bound:{i}:type",), start, end)
            if hit is not None:
                best = hit
        if e.definiens is not None:
            hit = _deepest(e.definiens, tuple(inner), path + (f"bound:{i}:def",), start, end)
            if hit is not None:
                best = hit
        inner.append(e)
    for i, a in enumerate(t.args):
        hit = _deepest(a, tuple(inner), path + (f"arg:{i}",), start, end)
        if hit is not None:
            best = hit
    return best


def _slot_terms(g: DepGraph, uri: str) -> Iterator[tuple[str, object, Term]]:
    """Every term slot of the file with its best term: the elaborated
    result when validated, the parse otherwise (partial answers beat
    none)."""
    for sid in g.slot_order():
        node = g.nodes.get(sid)
        if node is None or node.file != uri:
            continue
        if node.validated is not None:
            term = node.validated.elaborated
        else:
            j = node.parsed.judgment
            term = getattr(j, "subject", None) or getattr(j, "term", None)
        if term is not None:
            yield sid, node, term


def _decl_name_at(g: DepGraph, uri: str, offset: int) -> Optional[str]:
    for th, decl in g.decls.items():
        for cd in decl.constants:
            r = cd.name_ref
            if r is not None and r.file == uri and r.contains(offset, offset + 1):
                return f"{th}?{cd.name}"
    return None


def _infer_type(g: DepGraph, theory: str, term: Term, ctx: Context) -> Optional[Term]:
    """Type a compound subterm in its context by solving for a fresh
    meta; tooltip queries must never fabricate a type, so any error or
    leftover unknown returns None."""
    table = g.tables.get(theory)
    if table is None or g.rules is None:
        return None

    def lookup(q: str) -> Optional[tuple[str, Term]]:
        tp = g.types.get(q)
        if tp is None:
            return None
        return (g.type_slots.get(q, ""), tp)

    solver = Solver(g.rules, theory, table, (ContextEntry(_QUERY_META),), lookup)
    target = solver.meta_occurrence(_QUERY_META, ctx)
    solver.push(Typing(theory, term, target), ctx, term.source_ref, None)
    solver.run()
    if any(p.severity == "error" for p in solver.problems):
        return None
    tp = solver.inst(target)
    if _QUERY_META in free_vars(tp):
        return None
    return tp


def _tree_json(t: Term, path: tuple[str, ...] = ()) -> dict:
    if isinstance(t, VarRef):
        label = t.name
    elif isinstance(t, ConstRef):
        label = qname_local(t.name)
    else:
        label = qname_local(t.head)
    node: dict = {
        "label": label,
        "range": _span(t.source_ref),
        "path": "/".join(path),
        "inferred": t.inferred,
        "children": [],
    }
    if isinstance(t, Complex):
        node["children"] = [
            _tree_json(child, path + (step,)) for step, child in children_with_paths(t)
        ]
    return node


# --- the session --------------------------------------------------------------


class Session:
    """Transport-independent protocol state machine.

    ``handle`` maps one request to one JSON-serializable result and
    touches nothing but session state; all randomness-free, so identical
    request logs yield identical response logs."""

    METHODS = (
        "initialize",
        "didOpen",
        "didChange",
        "didClose",
        "typeAt",
        "completionsAt",
        "definitionAt",
        "related",
        "search",
        "astOf",
        "subtermAt",
        "stats",
        "openLocation",
        "pollNotifications",
        "shutdown",
    )

    def __init__(self, root: Optional[Path | str] = None):
        self.docs: dict[str, OpenDoc] = {}
        self.outbox: list[dict] = []
        self.closed = False
        self.project_texts: dict[str, str] = {}
        self.root: Optional[Path] = None
        if root is not None:
            config = load_config(root)
            self.root = config.root
            try:
                self.project_texts = discover_sources(config)
            except ProjectError:
                # a project without sources still serves scratch documents
                self.project_texts = {}
        self._base: Optional[DepGraph] = None

    # --- dispatch ------------------------------------------------------------

    def handle(self, method: str, params: dict) -> dict:
        if method not in self.METHODS:
            raise ServerError("UnknownMethod", f"unknown method: {method}")
        if not isinstance(params, dict):
            raise _bad("params must be a JSON object")
        return getattr(self, "_op_" + method)(params)

    def drain_notifications(self) -> list[dict]:
        out, self.outbox = self.outbox, []
        return out

    # --- graphs ----------------------------------------------------------------

    def _build(self, files: dict[str, str]) -> DepGraph:
        # include order first: cross-file notations must exist before use
        docs = {f: parse_document(t, f) for f, t in files.items()}
        order, _cycle = order_files(docs)
        return build_graph({f: files[f] for f in order})

    def _base_graph(self) -> DepGraph:
        if self._base is None:
            self._base = self._build(dict(self.project_texts))
        return self._base

    def _doc(self, params: dict) -> OpenDoc:
        uri = _str_param(params, "uri")
        doc = self.docs.get(uri)
        if doc is None:
            raise ServerError("NotFound", f"document not open: {uri}")
        return doc

    # --- lifecycle -------------------------------------------------------------

    def _op_initialize(self, params: dict) -> dict:
        return {
            "protocolVersion": PROTOCOL_VERSION,
            "name": "logon",
            "methods": list(self.METHODS),
        }

    def _op_didOpen(self, params: dict) -> dict:
        uri = _str_param(params, "uri")
        text = params.get("text")
        if text is None:
            text = self.project_texts.get(uri)
            if text is None:
                raise _bad(f"no text given and no project source named {uri!r}")
        if not isinstance(text, str):
            raise _bad("parameter 'text' must be a string")
        version = params.get("version", 1)
        if isinstance(version, bool) or not isinstance(version, int):
            raise _bad("parameter 'version' must be an integer")
        files = dict(self.project_texts)
        files[uri] = text
        graph = self._build(files)
        self.docs[uri] = OpenDoc(uri, version, text, graph)
        return self._doc_state(self.docs[uri])

    def _op_didChange(self, params: dict) -> dict:
        doc = self._doc(params)
        version = _int_param(params, "version")
        text = _str_param(params, "text")
        if version <= doc.version:
            raise ServerError(
                "StaleVersion",
                f"version {version} is not newer than {doc.version} for {doc.uri}",
            )
        check_incremental(doc.graph, doc.uri, text)
        doc.text = text
        doc.version = version
        return self._doc_state(doc)

    def _op_didClose(self, params: dict) -> dict:
        doc = self._doc(params)
        del self.docs[doc.uri]
        return {"uri": doc.uri, "closed": True}

    def _op_shutdown(self, params: dict) -> dict:
        self.closed = True
        return {"ok": True}

    def _doc_state(self, doc: OpenDoc) -> dict:
        return {
            "uri": doc.uri,
            "version": doc.version,
            "diagnostics": self._diag_json(doc.graph, doc.uri),
            "holes": self._holes_json(doc.graph, doc.uri),
        }

    def _diag_json(self, g: DepGraph, uri: str) -> list[dict]:
        probs = [
            p
            for p in g.structure_problems
            if p.source_ref is None or p.source_ref.file == uri
        ]
        for sid in g.slot_order():
            node = g.nodes.get(sid)
            if node is None or node.file != uri:
                continue
            probs.extend(
                node.validated.problems if node.validated else node.parsed.parse_errors
            )
        out = []
        for p in probs:
            r = p.source_ref
            in_file = r is not None and r.file == uri
            out.append(
                {
                    "range": _span(r) if in_file else None,
                    "severity": p.severity,
                    "message": p.message,
                    "log": list(p.log),
                }
            )
        out.sort(
            key=lambda d: (d["range"] is None, d["range"] or [], d["severity"], d["message"])
        )
        return out

    def _holes_json(self, g: DepGraph, uri: str) -> list[dict]:
        out = []
        for sid in g.slot_order():
            node = g.nodes.get(sid)
            if node is None or node.file != uri or node.validated is None:
                continue
            table = g.tables.get(node.parsed.theory)
            for h in node.validated.holes:
                r = h.source_ref
                if r is None or r.file != uri or table is None:
                    continue
                out.append(
                    {
                        "range": [r.start, r.end],
                        "expected": render_term(h.expected, table),
                        "slot": sid,
                    }
                )
        out.sort(key=lambda d: d["range"])
        return out

    # --- queries -----------------------------------------------------------------

    def _node_at(
        self, g: DepGraph, uri: str, start: int, end: int
    ) -> Optional[tuple[str, object, Term, Context, tuple[str, ...]]]:
        for sid, node, term in _slot_terms(g, uri):
            hit = _deepest(term, (), (), start, end)
            if hit is not None:
                t, ctx, path = hit
                return sid, node, t, ctx, path
        return None

    def _op_typeAt(self, params: dict) -> dict:
        doc = self._doc(params)
        offset = _int_param(params, "offset")
        g = doc.graph
        tp: Optional[Term] = None
        theory = ""
        qname = _decl_name_at(g, doc.uri, offset)
        if qname is not None:
            # the declaration's name token shows the declared type
            tp = g.types.get(qname)
            theory = qname.partition("?")[0]
        else:
            hit = self._node_at(g, doc.uri, offset, offset + 1)
            if hit is not None:
                _sid, node, t, ctx, _path = hit
                theory = node.parsed.theory
                if isinstance(t, VarRef):
                    tp = next(
                        (e.type for e in reversed(ctx) if e.name == t.name), None
                    )
                elif isinstance(t, ConstRef):
                    tp = g.types.get(t.name)
                else:
                    tp = _infer_type(g, theory, t, ctx)
        if tp is None or theory not in g.tables:
            return {"uri": doc.uri, "version": doc.version, "type": None, "term": None}
        return {
            "uri": doc.uri,
            "version": doc.version,
            "type": render_term(tp, g.tables[theory]),
            "term": term_to_json(tp, doc.uri),
        }

    def _hole_at(self, g: DepGraph, uri: str, offset: int) -> Optional[HoleRecord]:
        for sid in g.slot_order():
            node = g.nodes.get(sid)
            if node is None or node.file != uri or node.validated is None:
                continue
            for h in node.validated.holes:
                r = h.source_ref
                # edges included: completing right at a hole's bracket works
                if r is not None and r.file == uri and r.start <= offset <= r.end:
                    return h
        return None

    def _op_completionsAt(self, params: dict) -> dict:
        doc = self._doc(params)
        offset = _int_param(params, "offset")
        g = doc.graph
        items: list[dict] = []
        hole = self._hole_at(g, doc.uri, offset)
        if hole is not None:
            lib = g.library()
            hints = []
            for hook in g.rules.completions if g.rules else ():
                hints.extend(hook(g.rules, lib, hole))
            hints.sort(key=lambda h: (h.remaining_goals, h.head_name))
            for h in hints:
                items.append(
                    {
                        "label": h.head_name,
                        "kind": "hint",
                        "insertText": h.rendered_text,
                        "remainingGoals": h.remaining_goals,
                        "range": _span(hole.source_ref),
                    }
                )
            theory, ctx = hole.theory, hole.ctx
        else:
            hit = self._node_at(g, doc.uri, offset, offset + 1)
            if hit is None:
                return {"uri": doc.uri, "version": doc.version, "items": []}
            _sid, node, _t, ctx, _path = hit
            theory = node.parsed.theory
        seen: set[str] = set()
        for e in reversed(ctx):
            if e.name in seen:
                continue
            seen.add(e.name)
            items.append({"label": e.name, "kind": "scope", "insertText": e.name})
        table = g.tables.get(theory)
        for q in table.by_qname if table is not None else ():
            local = qname_local(q)
            items.append({"label": local, "kind": "scope", "insertText": local})
        return {"uri": doc.uri, "version": doc.version, "items": items}

    def _decl_location(self, g: DepGraph, qname: str) -> Optional[dict]:
        th, _, local = qname.partition("?")
        decl = g.decls.get(th)
        if decl is None:
            return None
        for cd in decl.constants:
            if cd.name == local and cd.name_ref is not None:
                return {
                    "uri": cd.name_ref.file,
                    "range": [cd.name_ref.start, cd.name_ref.end],
                }
        return None

    def _const_at(self, g: DepGraph, uri: str, offset: int) -> Optional[str]:
        """Constant named at the offset: a reference written in source,
        or the constant whose notation produced the delimiter token the
        cursor sits on (its head ConstRef carries no span of its own)."""
        hit = self._node_at(g, uri, offset, offset + 1)
        if hit is None:
            return None
        t = hit[2]
        if isinstance(t, ConstRef):
            return t.name
        if isinstance(t, Complex):
            first = t.args[0] if t.args else None
            if isinstance(first, ConstRef) and first.source_ref is None:
                return first.name
            if "?" in t.head:
                return t.head
        return None

    def _op_definitionAt(self, params: dict) -> dict:
        doc = self._doc(params)
        offset = _int_param(params, "offset")
        qname = self._const_at(doc.graph, doc.uri, offset)
        if qname is None:
            raise ServerError("NotFound", f"no constant reference at offset {offset}")
        loc = self._decl_location(doc.graph, qname)
        if loc is None:
            raise ServerError("NotFound", f"no declaration found for {qname}")
        return {
            "uri": doc.uri,
            "version": doc.version,
            "name": qname,
            "location": loc,
        }

    def _op_related(self, params: dict) -> dict:
        doc = self._doc(params)
        offset = _int_param(params, "offset")
        relation = _str_param(params, "relation")
        g = doc.graph
        qname = _decl_name_at(g, doc.uri, offset)
        if qname is None:
            qname = self._const_at(g, doc.uri, offset)
        if qname is None:
            raise ServerError(
                "NotFound", f"no declaration or constant reference at offset {offset}"
            )
        try:
            names = indexes.related(indexes.relational_index(g.library()), qname, relation)
        except indexes.UnknownRelation as e:
            raise ServerError("QueryParseError", str(e)) from e
        locations = []
        for q in sorted(names):
            loc = self._decl_location(g, q)
            if loc is not None:
                locations.append({"name": q, **loc})
        return {
            "uri": doc.uri,
            "version": doc.version,
            "element": qname,
            "locations": locations,
        }

    def _op_search(self, params: dict) -> dict:
        query = _str_param(params, "query")
        uri = params.get("uri")
        if uri is not None:
            doc = self.docs.get(uri)
            if doc is None:
                raise ServerError("NotFound", f"document not open: {uri}")
            g = doc.graph
        else:
            g = self._base_graph()
        if not g.order:
            raise _bad("nothing to search: no theories loaded")
        table = g.tables[g.order[-1]]
        try:
            q = indexes.parse_query(query, table)
        except indexes.QueryParseError as e:
            raise ServerError("QueryParseError", str(e)) from e
        hits = indexes.search(indexes.term_index(g.library()), q)
        out = []
        for h in hits:
            r = h.source_ref
            out.append(
                {
                    "slot": h.slot,
                    "uri": r.file if r is not None else None,
                    "range": _span(r),
                    "path": "/".join(h.path),
                    "substitution": {
                        k: render_term(v, table) for k, v in sorted(h.substitution.items())
                    },
                    "inferred": h.inferred,
                }
            )
        return {"query": query, "hits": out}

    def _op_astOf(self, params: dict) -> dict:
        doc = self._doc(params)
        g = doc.graph
        docobj = g.docs.get(doc.uri)
        theories = []
        for th in docobj.theories if docobj is not None else ():
            constants = []
            for cd in th.constants:
                components = []
                for kind, comp, unit in (
                    ("type", TYPE_SLOT, cd.type_unit),
                    ("definiens", DEF_SLOT, cd.def_unit),
                ):
                    if unit is None:
                        continue
                    sid = slot_id(th.name, cd.name, comp)
                    found = [
                        (s, n, t) for s, n, t in _slot_terms(g, doc.uri) if s == sid
                    ]
                    if not found:
                        continue
                    _s, node, term = found[0]
                    table = g.tables.get(node.parsed.theory)
                    components.append(
                        {
                            "kind": kind,
                            "slot": sid,
                            "range": _span(unit.source_ref),
                            "rendered": render_term(term, table) if table else None,
                            "tree": _tree_json(term),
                        }
                    )
                constants.append(
                    {
                        "name": cd.name,
                        "nameRange": _span(cd.name_ref),
                        "range": _span(cd.source_ref),
                        "components": components,
                    }
                )
            theories.append(
                {
                    "name": th.name,
                    "range": _span(th.source_ref),
                    "includes": [
                        {"target": i.target, "range": _span(i.source_ref)}
                        for i in th.includes
                    ],
                    "constants": constants,
                }
            )
        return {"uri": doc.uri, "version": doc.version, "theories": theories}

    def _op_subtermAt(self, params: dict) -> dict:
        doc = self._doc(params)
        start, end = _range_param(params, "range")
        hit = self._node_at(doc.graph, doc.uri, start, end)
        if hit is None:
            return {
                "uri": doc.uri,
                "version": doc.version,
                "slot": None,
                "range": None,
                "path": None,
            }
        sid, _node, t, _ctx, path = hit
        return {
            "uri": doc.uri,
            "version": doc.version,
            "slot": sid,
            "range": _span(t.source_ref),
            "path": "/".join(path),
        }

    def _op_stats(self, params: dict) -> dict:
        uri = params.get("uri")
        if uri is not None:
            doc = self._doc(params)
            snap = doc.graph.stats.snapshot()
            return {"uri": doc.uri, "version": doc.version, **snap}
        totals = {"edits": 0, "reparsed": 0, "revalidated": 0}
        for doc in self.docs.values():
            for k, v in doc.graph.stats.snapshot().items():
                totals[k] += v
        return {"openDocuments": len(self.docs), **totals}

    # --- notifications ----------------------------------------------------------

    def _op_openLocation(self, params: dict) -> dict:
        uri = _str_param(params, "uri")
        rng = None
        if params.get("range") is not None:
            rng = list(_range_param(params, "range"))
        self.outbox.append(
            {"method": "openLocation", "params": {"uri": uri, "range": rng}}
        )
        return {"queued": True}

    def _op_pollNotifications(self, params: dict) -> dict:
        return {"notifications": self.drain_notifications()}


# --- transports -----------------------------------------------------------------


def _dumps(obj: object) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def serve_stdio(session: Session, rin, rout) -> None:
    """One request per line, one response per line, notifications pushed
    after the response that caused them.  Runs until EOF or shutdown."""
    for line in rin:
        line = line.strip()
        if not line:
            continue
        rid = None
        try:
            req = json.loads(line)
            if not isinstance(req, dict):
                raise _bad("request must be a JSON object")
            rid = req.get("id")
            method = req.get("method")
            if not isinstance(method, str):
                raise _bad("missing request method")
            params = req.get("params", {})
            result = session.handle(method, params)
            rout.write(_dumps({"id": rid, "result": result}) + "\n")
        except ServerError as e:
            rout.write(
                _dumps({"id": rid, "error": {"code": e.code, "message": e.message}})
                + "\n"
            )
        except json.JSONDecodeError as e:
            rout.write(
                _dumps(
                    {"id": rid, "error": {"code": "BadRequest", "message": f"bad JSON: {e}"}}
                )
                + "\n"
            )
        for note in session.drain_notifications():
            rout.write(_dumps(note) + "\n")
        rout.flush()
        if session.closed:
            break


_STATUS = {
    "BadRequest": 400,
    "QueryParseError": 400,
    "NotFound": 404,
    "UnknownMethod": 404,
    "StaleVersion": 409,
    "InternalError": 500,
}

_MIME = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".json": "application/json",
    ".map": "application/json",
    ".svg": "image/svg+xml",
    ".png": "image/png",
    ".ico": "image/x-icon",
    ".txt": "text/plain; charset=utf-8",
}


def make_http_server(
    session: Session,
    host: str = "127.0.0.1",
    port: int = 0,
    static_dir: Optional[Path | str] = None,
) -> ThreadingHTTPServer:
    """HTTP face of the session: POST /rpc/<method> with the params
    object as body.  Handling is serialized under one lock in arrival
    order, so the replay guarantee carries over.  GET serves the bundled
    client from static_dir when one is configured."""
    lock = threading.Lock()
    static_root = Path(static_dir).resolve() if static_dir is not None else None

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):  # tests and the CLI want a quiet server
            pass

        def _send_json(self, status: int, payload: dict) -> None:
            body = _dumps(payload).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _send_error(self, code: str, message: str) -> None:
            self._send_json(
                _STATUS.get(code, 400), {"error": {"code": code, "message": message}}
            )

        def do_POST(self):
            if not self.path.startswith("/rpc/"):
                self._send_error("NotFound", f"unknown route: {self.path}")
                return
            method = self.path[len("/rpc/") :]
            length = int(self.headers.get("Content-Length") or 0)
            raw = self.rfile.read(length) if length else b""
            try:
                params = json.loads(raw.decode("utf-8")) if raw.strip() else {}
                with lock:
                    result = session.handle(method, params)
                self._send_json(200, {"result": result})
            except ServerError as e:
                self._send_error(e.code, e.message)
            except (json.JSONDecodeError, UnicodeDecodeError) as e:
                self._send_error("BadRequest", f"bad JSON: {e}")
            except Exception as e:  # a failing request must not kill the server
                self._send_error("InternalError", repr(e))
            if session.closed:
                threading.Thread(target=self.server.shutdown, daemon=True).start()

        def do_GET(self):
            if static_root is None:
                self._send_error("NotFound", "no static content configured")
                return
            rel = self.path.split("?", 1)[0].lstrip("/")
            target = (static_root / rel).resolve() if rel else static_root / "index.html"
            if static_root != target and static_root not in target.parents:
                self._send_error("NotFound", "outside static root")
                return
            if target.is_dir():
                target = target / "index.html"
            if not target.is_file():
                self._send_error("NotFound", f"no such file: {self.path}")
                return
            body = target.read_bytes()
            self.send_response(200)
            self.send_header(
                "Content-Type", _MIME.get(target.suffix, "application/octet-stream")
            )
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

    server = ThreadingHTTPServer((host, port), Handler)
    server.daemon_threads = True
    return server
