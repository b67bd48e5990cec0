"""Command line front end.

Four subcommands: ``build`` checks a whole project and fills the cache,
``check`` validates one file, ``search`` runs a pattern query over a
project, and ``serve`` starts the editor-facing server. Every command
exits 0 exactly when no errors were found.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import index as indexes
from .changes import build_graph
from .document import parse_document
from .project import (
    ProjectError,
    build_project,
    load_config,
    order_files,
    project_indexes,
    query_table,
    render_html,
)
from .render import render_term
from .server import Session, make_http_server, serve_stdio


def _dump(obj: object) -> str:
    return json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True)


def _cmd_build(args: argparse.Namespace) -> int:
    config = load_config(args.dir)
    report = build_project(config, force=args.force)
    if args.html:
        render_html(config, report)
    if args.json:
        print(_dump(report.to_json()))
    else:
        for f in report.files:
            print(f"{f.status:>6}  {f.name}  ({f.errors} errors, {f.seconds:.3f}s)")
        for p in report.problems:
            print(f"project: {p.severity}: {p.message}")
        print(f"{len(report.files)} files, {report.errors} errors, {report.seconds:.3f}s")
    return 0 if report.ok else 1


def _file_diagnostics(path: Path) -> list[dict]:
    """Check one file, loading its sibling files so includes resolve."""
    path = path.resolve()
    if not path.is_file():
        raise ProjectError(f"not a file: {path}")
    files = {
        p.name: p.read_text(encoding="utf-8")
        for p in sorted(path.parent.glob("*.mmt"))
    }
    files.setdefault(path.name, path.read_text(encoding="utf-8"))
    docs = {name: parse_document(text, name) for name, text in files.items()}
    order, _ = order_files(docs)
    g = build_graph({name: files[name] for name in order})
    own = {th.name for th in docs[path.name].theories}
    out = []
    for origin, file, start, end, severity, message in g.diagnostics():
        anchored_here = file == path.name
        # unanchored problems count when they come from this file's slots
        ours = file == "" and origin.split("?", 1)[0] in own
        if anchored_here or ours:
            out.append(
                {
                    "file": path.name,
                    "range": [start, end] if start >= 0 else None,
                    "severity": severity,
                    "message": message,
                }
            )
    return out


def _cmd_check(args: argparse.Namespace) -> int:
    diags = _file_diagnostics(Path(args.file))
    if args.json:
        print(_dump({"diagnostics": diags, "ok": not diags}))
    else:
        for d in diags:
            where = d["file"]
            if d["range"] is not None:
                where += f":{d['range'][0]}..{d['range'][1]}"
            print(f"{where}: {d['severity']}: {d['message']}")
        print(f"{len(diags)} problems" if diags else "ok")
    return 0 if not diags else 1


def _cmd_search(args: argparse.Namespace) -> int:
    config = load_config(args.dir)
    report = build_project(config)
    _, term_idx = project_indexes(report)
    table = query_table(report.graph)
    try:
        query = indexes.parse_query(args.query, table)
    except indexes.QueryParseError as e:
        print(f"bad query: {e}", file=sys.stderr)
        return 2
    hits = indexes.search(term_idx, query)
    rows = []
    for h in hits:
        sub = {k: render_term(v, table) for k, v in sorted(h.substitution.items())}
        r = h.source_ref
        rows.append(
            {
                "slot": h.slot,
                "file": r.file if r else None,
                "range": [r.start, r.end] if r else None,
                "path": "/".join(h.path),
                "substitution": sub,
                "inferred": h.inferred,
            }
        )
    if args.json:
        print(_dump({"hits": rows}))
    else:
        for row in rows:
            where = row["file"] or "?"
            if row["range"]:
                where += f":{row['range'][0]}..{row['range'][1]}"
            binds = ", ".join(f"{k}={v}" for k, v in row["substitution"].items())
            flag = " (inferred)" if row["inferred"] else ""
            print(f"{where}  {row['slot']}  [{binds}]{flag}")
        print(f"{len(rows)} hits")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    session = Session(args.dir)
    if args.stdio:
        serve_stdio(session, sys.stdin, sys.stdout)
        return 0
    static = Path(args.static).resolve() if args.static else None
    server = make_http_server(session, port=args.port, static_dir=static)
    host, port = server.server_address[:2]
    print(f"listening on http://{host}:{port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="logon")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="check every file in a project and cache results")
    p.add_argument("dir", help="project root")
    p.add_argument("--force", action="store_true", help="ignore existing cache entries")
    p.add_argument("--html", action="store_true", help="also write the HTML view")
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.set_defaults(run=_cmd_build)

    p = sub.add_parser("check", help="validate a single file")
    p.add_argument("file")
    p.add_argument("--json", action="store_true")
    p.set_defaults(run=_cmd_check)

    p = sub.add_parser("search", help="query a project for term patterns")
    p.add_argument("dir", help="project root")
    p.add_argument("query", help='pattern, e.g. "$x: x∧x"')
    p.add_argument("--json", action="store_true")
    p.set_defaults(run=_cmd_search)

    p = sub.add_parser("serve", help="run the editor server for a project")
    p.add_argument("dir", help="project root")
    p.add_argument("--port", type=int, default=8642)
    p.add_argument("--stdio", action="store_true", help="newline-delimited JSON on stdio")
    p.add_argument("--static", help="directory of web client files to serve")
    p.set_defaults(run=_cmd_serve)

    args = parser.parse_args(argv)
    try:
        return args.run(args)
    except ProjectError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
