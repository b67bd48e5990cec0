"""Cross-reference relations and subterm search over a checked library.

Two indexes are rebuilt after every validation pass:

* a relational store of name-level facts (includes, declarations,
  references, slot dependencies) queried through a small relation
  algebra: a base relation, its inverse, unions, transitive closure,
  and restriction to one theory;
* a flat table of every subterm of every validated term, inferred
  parts included, searched by matching a pattern with named query
  variables against each entry.

Matching is one-way and syntactic: query variables bind subterms,
repeated variables must bind alpha-equal subterms, and no evaluation
of any kind is applied.  A filter on the head symbol keeps the scan
cheap; the matcher itself never changes with the backend.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from typing import Iterator, Optional

from .engine import LibraryResult
from .model import (
    Complex,
    ConstRef,
    SourceRef,
    Term,
    VarRef,
    alpha_equal,
    nearest_source_ref,
    ref_from_json,
    ref_to_json,
    subterms_with_paths,
    term_from_json,
    term_to_json,
)
from .termparse import NotationTable, parse_term_text

Pair = tuple[str, str]

RELATION_NAMES = ("Includes", "Declares", "RefersTo", "DependsOn")


class UnknownRelation(Exception):
    """The relation expression names no known relation or operator."""


class QueryParseError(Exception):
    """A search query's variables or pattern could not be parsed."""


# --- relational index -------------------------------------------------------


@dataclass(frozen=True)
class RelationalIndex:
    includes: frozenset[Pair]  # (includer theory, included theory)
    declares: frozenset[Pair]  # (theory, constant qname)
    refers_to: frozenset[Pair]  # (user constant, used constant)
    depends_on: frozenset[Pair]  # (slot, slot it looked up)

    def base(self, name: str) -> frozenset[Pair]:
        try:
            return {
                "Includes": self.includes,
                "Declares": self.declares,
                "RefersTo": self.refers_to,
                "DependsOn": self.depends_on,
            }[name]
        except KeyError:
            raise UnknownRelation(name) from None

    def to_json(self) -> dict:
        return {
            "Includes": sorted(self.includes),
            "Declares": sorted(self.declares),
            "RefersTo": sorted(self.refers_to),
            "DependsOn": sorted(self.depends_on),
        }

    @staticmethod
    def from_json(data: dict) -> "RelationalIndex":
        def pairs(name: str) -> frozenset[Pair]:
            return frozenset((a, b) for a, b in data.get(name, ()))

        return RelationalIndex(
            pairs("Includes"), pairs("Declares"), pairs("RefersTo"), pairs("DependsOn")
        )


def _head_names(t: Term, out: set[str]) -> None:
    if isinstance(t, ConstRef):
        out.add(t.name)
        return
    if isinstance(t, VarRef):
        return
    out.add(t.head)
    for e in t.bound:
        if e.type is not None:
            _head_names(e.type, out)
        if e.definiens is not None:
            _head_names(e.definiens, out)
    for a in t.args:
        _head_names(a, out)


def relational_index(lib: LibraryResult) -> RelationalIndex:
    v = lib.validation
    includes: set[Pair] = set()
    declares: set[Pair] = set()
    refers: set[Pair] = set()
    depends: set[Pair] = set()
    for name in v.order:
        th = v.theories[name]
        for target in th.includes:
            includes.add((name, target))
        for c in th.constants:
            declares.add((name, f"{name}?{c.name}"))
    for slot, res in lib.results.items():
        qname = slot.rsplit("!", 1)[0]
        for dep in res.dependencies:
            depends.add((slot, dep))
        if res.elaborated is not None:
            used: set[str] = set()
            _head_names(res.elaborated, used)
            for u in used:
                refers.add((qname, u))
    return RelationalIndex(
        frozenset(includes), frozenset(declares), frozenset(refers), frozenset(depends)
    )


# --- relation algebra -------------------------------------------------------

_REL_TOKEN = re.compile(r"\s*([A-Za-z_][\w?!.-]*|\(|\)|,)")


def _rel_tokens(text: str) -> list[str]:
    out, pos = [], 0
    while pos < len(text):
        m = _REL_TOKEN.match(text, pos)
        if m is None:
            if text[pos:].strip():
                raise UnknownRelation(f"bad relation syntax at {text[pos:]!r}")
            break
        out.append(m.group(1))
        pos = m.end()
    return out


def _transitive(pairs: frozenset[Pair]) -> frozenset[Pair]:
    out = set(pairs)
    changed = True
    while changed:
        changed = False
        by_left: dict[str, set[str]] = {}
        for a, b in out:
            by_left.setdefault(a, set()).add(b)
        for a, b in list(out):
            for c in by_left.get(b, ()):
                if (a, c) not in out:
                    out.add((a, c))
                    changed = True
    return frozenset(out)


def _theory_of(element: str) -> str:
    return element.split("?", 1)[0]


def eval_relation(index: RelationalIndex, expr: str) -> frozenset[Pair]:
    """Evaluate a relation expression: a base relation name, or
    inverse(E), closure(E), union(E, E), restrict(E, Theory)."""
    toks = _rel_tokens(expr)
    pos = 0

    def peek() -> Optional[str]:
        return toks[pos] if pos < len(toks) else None

    def take(expected: Optional[str] = None) -> str:
        nonlocal pos
        if pos >= len(toks):
            raise UnknownRelation(f"unexpected end of relation expression {expr!r}")
        t = toks[pos]
        if expected is not None and t != expected:
            raise UnknownRelation(f"expected {expected!r}, found {t!r} in {expr!r}")
        pos += 1
        return t

    def parse() -> frozenset[Pair]:
        name = take()
        if peek() != "(":
            return index.base(name)
        take("(")
        if name == "inverse":
            inner = parse()
            take(")")
            return frozenset((b, a) for a, b in inner)
        if name == "closure":
            inner = parse()
            take(")")
            return _transitive(inner)
        if name == "union":
            left = parse()
            take(",")
            right = parse()
            take(")")
            return left | right
        if name == "restrict":
            inner = parse()
            take(",")
            theory = take()
            take(")")
            return frozenset(
                (a, b)
                for a, b in inner
                if _theory_of(a) == theory and _theory_of(b) == theory
            )
        raise UnknownRelation(name)

    result = parse()
    if pos != len(toks):
        raise UnknownRelation(f"trailing input in relation expression {expr!r}")
    return result


def related(index: RelationalIndex, element: str, expr: str) -> frozenset[str]:
    """All elements the expression relates the given one to."""
    return frozenset(b for a, b in eval_relation(index, expr) if a == element)


# --- term index --------------------------------------------------------------


@dataclass(frozen=True)
class IndexEntry:
    slot: str
    path: tuple[str, ...]
    term: Term
    source_ref: Optional[SourceRef]  # nearest source-visible position
    inferred: bool  # the subterm itself is not written in the source


@dataclass(frozen=True)
class TermIndex:
    entries: tuple[IndexEntry, ...]
    by_head: dict[str, tuple[int, ...]]  # head symbol -> entry positions

    def candidates(self, head: Optional[str]) -> Iterator[IndexEntry]:
        if head is None:
            yield from self.entries
        else:
            for i in self.by_head.get(head, ()):
                yield self.entries[i]

    def to_json(self) -> list:
        return [
            {
                "slot": e.slot,
                "path": list(e.path),
                "term": term_to_json(e.term),
                "ref": ref_to_json(e.source_ref, ""),
                "inf": e.inferred,
            }
            for e in self.entries
        ]

    @staticmethod
    def from_json(data: list) -> "TermIndex":
        entries: list[IndexEntry] = []
        by_head: dict[str, list[int]] = {}
        for d in data:
            entry = IndexEntry(
                d["slot"],
                tuple(d["path"]),
                term_from_json(d["term"], ""),
                ref_from_json(d.get("ref"), ""),
                d["inf"],
            )
            by_head.setdefault(_head_key(entry.term), []).append(len(entries))
            entries.append(entry)
        return TermIndex(tuple(entries), {h: tuple(p) for h, p in by_head.items()})


def _head_key(t: Term) -> str:
    if isinstance(t, ConstRef):
        return t.name
    if isinstance(t, VarRef):
        return ""
    return t.head


def term_index(lib: LibraryResult) -> TermIndex:
    entries: list[IndexEntry] = []
    by_head: dict[str, list[int]] = {}
    for task in lib.validation.tasks:
        res = lib.results.get(task.slot)
        if res is None or res.elaborated is None:
            continue
        root = res.elaborated
        for path, sub in subterms_with_paths(root):
            ref = nearest_source_ref(root, path)
            entry = IndexEntry(
                task.slot, path, sub, ref, sub.inferred or sub.source_ref is None
            )
            by_head.setdefault(_head_key(sub), []).append(len(entries))
            entries.append(entry)
    return TermIndex(tuple(entries), {h: tuple(ps) for h, ps in by_head.items()})


# --- search ------------------------------------------------------------------


@dataclass(frozen=True)
class SearchQuery:
    vars: tuple[str, ...]
    pattern: Term
    # notation-implicit positions in the pattern match anything; their
    # bindings are not reported
    wildcards: tuple[str, ...] = ()


@dataclass(frozen=True)
class Hit:
    slot: str
    path: tuple[str, ...]
    source_ref: Optional[SourceRef]
    substitution: dict[str, Term]
    inferred: bool


_QUERY_VARS = re.compile(r"^\s*\$\s*(\w+)\s*((?:,\s*\$\s*\w+\s*)*):")


def parse_query(text: str, table: NotationTable) -> SearchQuery:
    """``$x,$y: pattern`` or a bare ground pattern."""
    m = _QUERY_VARS.match(text)
    names: tuple[str, ...] = ()
    body = text
    if m is not None:
        names = (m.group(1),) + tuple(re.findall(r"\$\s*(\w+)", m.group(2)))
        if len(set(names)) != len(names):
            raise QueryParseError(f"duplicate query variable in {text!r}")
        body = text[m.end() :]
    if not body.strip():
        raise QueryParseError("empty search pattern")
    res = parse_term_text(body, table, ambient=names)
    if res.errors:
        raise QueryParseError("; ".join(p.message for p in res.errors))
    return SearchQuery(names, res.term, tuple(e.name for e in res.metas))


def _rename_free(t: Term, mapping: dict[str, str]) -> Term:
    """Rename free variables, respecting the term's own binders.
    Each binder shadows its name for everything after it in the
    telescope and for the arguments."""
    if not mapping:
        return t
    if isinstance(t, VarRef):
        return replace(t, name=mapping[t.name]) if t.name in mapping else t
    if isinstance(t, ConstRef):
        return t
    cur = dict(mapping)
    bound = []
    for e in t.bound:
        ty = _rename_free(e.type, cur) if e.type is not None else None
        df = _rename_free(e.definiens, cur) if e.definiens is not None else None
        bound.append(replace(e, type=ty, definiens=df))
        cur.pop(e.name, None)
    args = tuple(_rename_free(a, cur) for a in t.args)
    return replace(t, bound=tuple(bound), args=args)


def match_pattern(
    pattern: Term, pvars: tuple[str, ...], term: Term
) -> Optional[dict[str, Term]]:
    """One-way syntactic match; returns the substitution or None.
    Repeated variables must bind alpha-equal subterms; binder names
    are compared positionally."""
    pv = set(pvars)
    sigma: dict[str, Term] = {}

    def go(p: Term, t: Term, env: dict[str, str]) -> bool:
        if isinstance(p, VarRef):
            if p.name not in env and p.name in pv:
                # capture: translate term-side binder names back to the
                # pattern's, so sigma(pattern) reproduces the subterm
                back = {tn: pn for pn, tn in env.items()}
                captured = _rename_free(t, back)
                if p.name in sigma:
                    return alpha_equal(sigma[p.name], captured)
                sigma[p.name] = captured
                return True
            return isinstance(t, VarRef) and env.get(p.name, p.name) == t.name
        if isinstance(p, ConstRef):
            return isinstance(t, ConstRef) and p.name == t.name
        if not isinstance(t, Complex):
            return False
        if p.head != t.head or len(p.bound) != len(t.bound) or len(p.args) != len(t.args):
            return False
        inner = dict(env)
        for pe, te in zip(p.bound, t.bound):
            if (pe.type is None) != (te.type is None):
                return False
            if pe.type is not None and not go(pe.type, te.type, inner):
                return False
            if (pe.definiens is None) != (te.definiens is None):
                return False
            if pe.definiens is not None and not go(pe.definiens, te.definiens, inner):
                return False
            inner[pe.name] = te.name
        return all(go(pa, ta, inner) for pa, ta in zip(p.args, t.args))

    return sigma if go(pattern, term, {}) else None


def substitute(pattern: Term, sigma: dict[str, Term]) -> Term:
    """Replace query variables by their bindings, respecting shadowing."""
    if isinstance(pattern, VarRef):
        return sigma.get(pattern.name, pattern)
    if isinstance(pattern, ConstRef):
        return pattern
    cur = dict(sigma)
    bound = []
    for e in pattern.bound:
        ty = substitute(e.type, cur) if e.type is not None else None
        df = substitute(e.definiens, cur) if e.definiens is not None else None
        bound.append(replace(e, type=ty, definiens=df))
        cur.pop(e.name, None)
    args = tuple(substitute(a, cur) for a in pattern.args)
    return replace(pattern, bound=tuple(bound), args=args)


def _pattern_head(q: SearchQuery) -> Optional[str]:
    if isinstance(q.pattern, VarRef) and (
        q.pattern.name in q.vars or q.pattern.name in q.wildcards
    ):
        return None  # a bare variable matches everything
    return _head_key(q.pattern)


def _hit_key(hit: Hit) -> tuple:
    r = hit.source_ref
    return (
        (r.file, r.start, r.end) if r is not None else ("", -1, -1),
        hit.slot,
        hit.path,
    )


def search(index: TermIndex, query: SearchQuery) -> tuple[Hit, ...]:
    pvars = query.vars + query.wildcards
    hits: list[Hit] = []
    for entry in index.candidates(_pattern_head(query)):
        sigma = match_pattern(query.pattern, pvars, entry.term)
        if sigma is not None:
            reported = {k: v for k, v in sigma.items() if k in query.vars}
            hits.append(
                Hit(entry.slot, entry.path, entry.source_ref, reported, entry.inferred)
            )
    hits.sort(key=_hit_key)
    return tuple(hits)
