"""Incremental checking: a dependency graph over constant components.

Each component (a constant's type, a constant's definiens) is one slot
carrying three layers: the source string, the parsed check task, and
the solver result, each with a content hash.  An edit dirties as
little as possible:

* a slot is reparsed only if its own source string changed (edge
  whitespace ignored, otherwise bit-compared); the definiens slot of a
  typed constant also counts the type string, because its task embeds
  a parsed copy of the type;
* a reparsed slot is revalidated only if the parse hash changed, so a
  formatting or comment edit stops after the reparse;
* a revalidated slot whose result hash changed triggers its dependents
  along the recorded lookup edges, transitively, in task order.

Structural edits (declarations added/removed/reordered, includes or
notations changed) rebuild theory structure; when the notation table
is invalidated the affected theories and all their transitive
includers reparse wholesale.  Slots untouched by an edit keep their
results verbatim; their stored source positions are shifted to the
new text so ranges stay valid.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional

from .document import (
    DEF_SLOT,
    TYPE_SLOT,
    ConstantDecl,
    Document,
    TheoryDecl,
    parse_document,
    slot_id,
)
from .engine import LibraryResult, RuleSet, SolveResult, check_library, solve
from .lf import kernel_for
from .model import (
    Complex,
    ConstRef,
    Constant,
    ContextEntry,
    Equal,
    Inhabitable,
    Judgment,
    Problem,
    SourceRef,
    Term,
    Theory,
    Typing,
    VarRef,
)
from .structure import CheckTask, Validation, _include_order, constant_tasks, validate
from .termparse import (
    NotationTable,
    ParseResult,
    TheorySig,
    parse_unit,
    sig_from_declaration,
)


class CycleDetected(Exception):
    """The horizontal dependency edges contain a cycle."""


@dataclass(frozen=True)
class Plan:
    """What an edit requires: the slots to reparse, whether theory
    structure changed, and the slots that no longer exist."""

    reparse: frozenset[str]
    structural: bool
    removed: frozenset[str] = frozenset()


@dataclass
class Stats:
    edits: int = 0
    reparsed: int = 0
    revalidated: int = 0

    def snapshot(self) -> dict[str, int]:
        return {
            "edits": self.edits,
            "reparsed": self.reparsed,
            "revalidated": self.revalidated,
        }


@dataclass
class SlotNode:
    id: str
    file: str
    string_rep: str
    context_string: str  # typed definiens slots: the type unit's text
    parsed: CheckTask
    parsed_hash: str
    validated: Optional[SolveResult] = None
    validated_hash: Optional[str] = None


DiagKey = tuple[str, str, int, int, str, str]  # origin, file, start, end, severity, msg


@dataclass(frozen=True)
class DiagnosticsDelta:
    added: tuple[DiagKey, ...]
    removed: tuple[DiagKey, ...]


# --- content hashing -------------------------------------------------------
# Hashes ignore source positions: a slot that reparses to the same term
# modulo offsets must not revalidate, and a result that differs only in
# ranges must not wake its dependents.


def _fp(obj: object) -> str:
    blob = json.dumps(obj, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _term_key(t: Optional[Term]) -> object:
    if t is None:
        return None
    if isinstance(t, VarRef):
        return ["v", t.name, t.inferred]
    if isinstance(t, ConstRef):
        return ["c", t.name, t.inferred]
    return [
        "x",
        t.head,
        [[e.name, _term_key(e.type), _term_key(e.definiens)] for e in t.bound],
        [_term_key(a) for a in t.args],
        t.inferred,
    ]


def _judgment_key(j: Judgment) -> object:
    if isinstance(j, Typing):
        return ["typing", j.theory, _term_key(j.subject), _term_key(j.expected)]
    if isinstance(j, Inhabitable):
        return ["inhabitable", j.theory, _term_key(j.term)]
    if isinstance(j, Equal):
        return ["equal", j.theory, _term_key(j.left), _term_key(j.right)]
    return ["?", repr(j)]


def task_fingerprint(task: CheckTask) -> str:
    return _fp(
        [
            _judgment_key(task.judgment),
            [[e.name, _term_key(e.type)] for e in task.metas],
            sorted((p.message, p.severity) for p in task.parse_errors),
            task.type_meta,
        ]
    )


def result_fingerprint(res: SolveResult, produced_type: Optional[Term]) -> str:
    return _fp(
        [
            res.ok,
            _term_key(res.elaborated),
            _term_key(produced_type),
            sorted((p.message, p.severity) for p in res.problems),
        ]
    )


# --- source-position rewriting ---------------------------------------------

RefMap = Callable[[Optional[SourceRef]], Optional[SourceRef]]


def _map_term(t: Term, fn: RefMap) -> Term:
    if isinstance(t, (VarRef, ConstRef)):
        nr = fn(t.source_ref)
        return t if nr is t.source_ref else replace(t, source_ref=nr)
    bound = tuple(_map_entry(e, fn) for e in t.bound)
    args = tuple(_map_term(a, fn) for a in t.args)
    nr = fn(t.source_ref)
    if bound == t.bound and args == t.args and nr is t.source_ref:
        return t
    return replace(t, bound=bound, args=args, source_ref=nr)


def _map_entry(e: ContextEntry, fn: RefMap) -> ContextEntry:
    ty = _map_term(e.type, fn) if e.type is not None else None
    df = _map_term(e.definiens, fn) if e.definiens is not None else None
    if ty is e.type and df is e.definiens:
        return e
    return replace(e, type=ty, definiens=df)


def _map_judgment(j: Judgment, fn: RefMap) -> Judgment:
    if isinstance(j, Typing):
        return replace(j, subject=_map_term(j.subject, fn), expected=_map_term(j.expected, fn))
    if isinstance(j, Inhabitable):
        return replace(j, term=_map_term(j.term, fn))
    if isinstance(j, Equal):
        left, right = _map_term(j.left, fn), _map_term(j.right, fn)
        at = _map_term(j.at, fn) if j.at is not None else None
        return replace(j, left=left, right=right, at=at)
    return j


def _map_problem(p: Problem, fn: RefMap) -> Problem:
    nr = fn(p.source_ref)
    return p if nr is p.source_ref else replace(p, source_ref=nr)


def _map_task(task: CheckTask, fn: RefMap) -> CheckTask:
    return replace(
        task,
        judgment=_map_judgment(task.judgment, fn),
        metas=tuple(_map_entry(e, fn) for e in task.metas),
        parse_errors=tuple(_map_problem(p, fn) for p in task.parse_errors),
        source_ref=fn(task.source_ref),
    )


def _map_result(res: SolveResult, fn: RefMap) -> SolveResult:
    holes = tuple(
        replace(
            h,
            source_ref=fn(h.source_ref),
            ctx=tuple(_map_entry(e, fn) for e in h.ctx),
            expected=_map_term(h.expected, fn),
        )
        for h in res.holes
    )
    return replace(
        res,
        problems=tuple(_map_problem(p, fn) for p in res.problems),
        substitution={k: _map_term(v, fn) for k, v in res.substitution.items()},
        elaborated=_map_term(res.elaborated, fn),
        expected=_map_term(res.expected, fn) if res.expected is not None else None,
        holes=holes,
    )


def _interval_map(file: str, intervals: list[tuple[int, int, int]]) -> RefMap:
    """Shift refs inside any matched old unit span by that unit's delta."""

    def fn(r: Optional[SourceRef]) -> Optional[SourceRef]:
        if r is None or r.file != file:
            return r
        for start, end, delta in intervals:
            if start <= r.start and r.end <= end:
                return r if delta == 0 else r.shifted(delta)
        return r

    return fn


def _paired_refs(old: Term, new: Term, out: dict[SourceRef, SourceRef]) -> None:
    """Walk two structurally equal terms, pairing their positions."""
    if old.source_ref is not None and new.source_ref is not None:
        out[old.source_ref] = new.source_ref
    if isinstance(old, Complex) and isinstance(new, Complex):
        for oe, ne in zip(old.bound, new.bound):
            if oe.type is not None and ne.type is not None:
                _paired_refs(oe.type, ne.type, out)
            if oe.definiens is not None and ne.definiens is not None:
                _paired_refs(oe.definiens, ne.definiens, out)
        for oa, na in zip(old.args, new.args):
            _paired_refs(oa, na, out)


def _rekey_map(old: CheckTask, new: CheckTask, fallback: RefMap) -> RefMap:
    """Exact ref translation between two identical parses of a slot,
    falling back to interval shifting for borrowed positions."""
    pairs: dict[SourceRef, SourceRef] = {}
    oj, nj = old.judgment, new.judgment
    if isinstance(oj, Typing) and isinstance(nj, Typing):
        _paired_refs(oj.subject, nj.subject, pairs)
        _paired_refs(oj.expected, nj.expected, pairs)
    elif isinstance(oj, Inhabitable) and isinstance(nj, Inhabitable):
        _paired_refs(oj.term, nj.term, pairs)

    def fn(r: Optional[SourceRef]) -> Optional[SourceRef]:
        if r is None:
            return None
        hit = pairs.get(r)
        return hit if hit is not None else fallback(r)

    return fn


# --- the graph --------------------------------------------------------------


@dataclass
class DepGraph:
    file_order: list[str]
    files: dict[str, str]
    docs: dict[str, Document]
    decls: dict[str, TheoryDecl]
    sigs: dict[str, TheorySig]
    order: tuple[str, ...]
    tables: dict[str, NotationTable]
    structure_problems: tuple[Problem, ...]
    rules: RuleSet
    nodes: dict[str, SlotNode] = field(default_factory=dict)
    types: dict[str, Term] = field(default_factory=dict)
    type_slots: dict[str, str] = field(default_factory=dict)
    stats: Stats = field(default_factory=Stats)
    # position shifts from the latest edit, for refs borrowed across slots
    last_shift: Optional[RefMap] = None

    # --- views -----------------------------------------------------------

    def slot_order(self) -> list[str]:
        out: list[str] = []
        for th in self.order:
            decl = self.decls.get(th)
            if decl is None:
                continue
            for cd in decl.constants:
                if cd.type_unit is not None:
                    out.append(slot_id(th, cd.name, TYPE_SLOT))
                if cd.def_unit is not None:
                    out.append(slot_id(th, cd.name, DEF_SLOT))
        return out

    def slot_index(self) -> dict[str, int]:
        return {s: i for i, s in enumerate(self.slot_order())}

    def validation(self) -> Validation:
        theories: dict[str, Theory] = {}
        tasks: list[CheckTask] = []
        for th in self.order:
            decl = self.decls.get(th)
            if decl is None:
                continue
            constants: list[Constant] = []
            for cd in decl.constants:
                tp_node = self.nodes.get(slot_id(th, cd.name, TYPE_SLOT))
                df_node = self.nodes.get(slot_id(th, cd.name, DEF_SLOT))
                tp_term = tp_node.parsed.judgment.term if tp_node else None
                df_term = df_node.parsed.judgment.subject if df_node else None
                constants.append(
                    Constant(cd.name, tp_term, df_term, cd.notation, cd.source_ref)
                )
                if tp_node:
                    tasks.append(tp_node.parsed)
                if df_node:
                    tasks.append(df_node.parsed)
            theories[th] = Theory(
                th, tuple(i.target for i in decl.includes), tuple(constants)
            )
        return Validation(
            theories,
            self.order,
            tuple(tasks),
            self.structure_problems,
            self.tables,
            self.sigs,
        )

    def library(self) -> LibraryResult:
        problems = list(self.structure_problems)
        results: dict[str, SolveResult] = {}
        for sid in self.slot_order():
            node = self.nodes.get(sid)
            if node is None or node.validated is None:
                continue
            results[sid] = node.validated
            problems.extend(node.validated.problems)
        return LibraryResult(
            self.validation(),
            results,
            dict(self.types),
            dict(self.type_slots),
            tuple(problems),
        )

    def diagnostics(self) -> tuple[DiagKey, ...]:
        out: list[DiagKey] = []
        for p in self.structure_problems:
            out.append(_diag_key("doc", p))
        for sid in self.slot_order():
            node = self.nodes.get(sid)
            if node is None:
                continue
            probs = node.validated.problems if node.validated else node.parsed.parse_errors
            for p in probs:
                out.append(_diag_key(sid, p))
        return tuple(out)


def _diag_key(origin: str, p: Problem) -> DiagKey:
    r = p.source_ref
    if r is None:
        return (origin, "", -1, -1, p.severity, p.message)
    return (origin, r.file, r.start, r.end, p.severity, p.message)


def _slot_units(decl: TheoryDecl) -> dict[str, tuple[object, Optional[object]]]:
    """slot id -> (its unit, the context unit whose text it also embeds)."""
    out: dict[str, tuple[object, Optional[object]]] = {}
    for cd in decl.constants:
        if cd.type_unit is not None:
            out[slot_id(decl.name, cd.name, TYPE_SLOT)] = (cd.type_unit, None)
        if cd.def_unit is not None:
            out[slot_id(decl.name, cd.name, DEF_SLOT)] = (cd.def_unit, cd.type_unit)
    return out


def _norm(s: Optional[str]) -> str:
    return s.strip() if isinstance(s, str) else ""


def _restructure(g: DepGraph) -> None:
    """Recompute theory-level structure from the current documents."""
    problems: list[Problem] = []
    for f in g.file_order:
        problems.extend(g.docs[f].errors)
    decls: dict[str, TheoryDecl] = {}
    for f in g.file_order:
        for th in g.docs[f].theories:
            if th.name in decls:
                problems.append(Problem(f"duplicate theory {th.name!r}", th.name_ref))
                continue
            decls[th.name] = th
    sigs = {name: sig_from_declaration(th) for name, th in decls.items()}
    order = _include_order(sigs, decls, problems)
    g.decls = decls
    g.sigs = sigs
    g.order = order
    g.tables = {name: NotationTable.for_theory(name, sigs) for name in order}
    g.structure_problems = tuple(problems)


def build_graph(files: Mapping[str, str]) -> DepGraph:
    """Full check of a file set, recording every layer and hash."""
    file_order = list(files)
    docs = {f: parse_document(files[f], f) for f in file_order}
    validation = validate([docs[f] for f in file_order])
    rules = kernel_for(validation)
    lib = check_library(validation, rules)
    g = DepGraph(
        file_order=file_order,
        files=dict(files),
        docs=docs,
        decls={},
        sigs=validation.sigs,
        order=validation.order,
        tables=validation.tables,
        structure_problems=(),
        rules=rules,
    )
    _restructure(g)
    theory_file = {
        th.name: f for f in file_order for th in docs[f].theories
    }
    for task in validation.tasks:
        theory = task.theory
        f = theory_file.get(theory, file_order[0] if file_order else "")
        unit, ctx = _slot_units(g.decls[theory]).get(task.slot, (None, None))
        res = lib.results[task.slot]
        qname = task.slot.rsplit("!", 1)[0]
        produced = (
            lib.types.get(qname) if lib.type_slots.get(qname) == task.slot else None
        )
        g.nodes[task.slot] = SlotNode(
            id=task.slot,
            file=f,
            string_rep=getattr(unit, "text", ""),
            context_string=getattr(ctx, "text", "") if ctx is not None else "",
            parsed=task,
            parsed_hash=task_fingerprint(task),
            validated=res,
            validated_hash=result_fingerprint(res, produced),
        )
    g.types = dict(lib.types)
    g.type_slots = dict(lib.type_slots)
    return g


# --- the edit plan -----------------------------------------------------------


def apply_edit(g: DepGraph, file: str, new_text: str) -> Plan:
    """Reparse the document structure of one file and decide which term
    slots need reparsing.  Mutates the graph's structural state (docs,
    tables, order) and shifts retained slots' stored positions; term
    reparsing itself is left to ``check_incremental``."""
    if new_text == g.files.get(file):
        return Plan(frozenset(), False)
    old_doc = g.docs.get(file)
    if old_doc is None:
        old_doc = Document(file, "", (), ())
    new_doc = parse_document(new_text, file)
    g.files[file] = new_text
    g.docs[file] = new_doc
    if file not in g.file_order:
        g.file_order.append(file)

    old_ths = {t.name: t for t in old_doc.theories}
    new_ths = {t.name: t for t in new_doc.theories}
    structural = bool(new_doc.errors) or set(old_ths) != set(new_ths)
    invalidated: set[str] = set()  # theories whose notation table changed
    reparse: set[str] = set()
    removed: set[str] = set()
    intervals: list[tuple[int, int, int]] = []

    for name in set(old_ths) - set(new_ths):
        removed.update(_slot_units(old_ths[name]))
        invalidated.add(name)
    for name in set(new_ths) - set(old_ths):
        reparse.update(_slot_units(new_ths[name]))

    for name in set(old_ths) & set(new_ths):
        ot, nt = old_ths[name], new_ths[name]
        old_units = _slot_units(ot)
        new_units = _slot_units(nt)
        old_names = [c.name for c in ot.constants]
        new_names = [c.name for c in nt.constants]
        shared = set(old_names) & set(new_names)
        old_shared = [n for n in old_names if n in shared]
        new_shared = [n for n in new_names if n in shared]
        if old_names != new_names:
            structural = True
        if [i.target for i in ot.includes] != [i.target for i in nt.includes]:
            structural = True
            invalidated.add(name)
        if old_shared != new_shared or len(old_names) != len(old_shared):
            # reorders and removals shift what earlier slots may see
            invalidated.add(name)
        old_cds = {c.name: c for c in ot.constants}
        new_cds = {c.name: c for c in nt.constants}
        for cname in shared:
            if _norm(old_cds[cname].notation_text) != _norm(new_cds[cname].notation_text):
                structural = True
                invalidated.add(name)
        for cname in set(new_names) - shared:
            if new_cds[cname].notation is not None:
                invalidated.add(name)
        removed.update(set(old_units) - set(new_units))
        reparse.update(set(new_units) - set(old_units))
        if set(old_units) != set(new_units):
            structural = True
        for sid in set(old_units) & set(new_units):
            ou, octx = old_units[sid]
            nu, nctx = new_units[sid]
            if _norm(ou.text) != _norm(nu.text) or _norm(
                getattr(octx, "text", None)
            ) != _norm(getattr(nctx, "text", None)):
                reparse.add(sid)
            osr, nsr = ou.source_ref, nu.source_ref
            intervals.append((osr.start, osr.end, nsr.start - osr.start))

    _restructure(g)

    if invalidated:
        structural = True
        affected = set(invalidated)
        changed_any = True
        while changed_any:
            changed_any = False
            for th, sig in g.sigs.items():
                if th not in affected and affected & set(sig.includes):
                    affected.add(th)
                    changed_any = True
            # a removed theory is still an include target in stale sigs
        for th in affected:
            decl = g.decls.get(th)
            if decl is not None:
                reparse.update(_slot_units(decl))

    # drop slots for declarations that no longer exist
    valid_slots = {
        sid
        for th in g.order
        if th in g.decls
        for sid in _slot_units(g.decls[th])
    }
    for sid in list(g.nodes):
        if sid not in valid_slots:
            removed.add(sid)
    reparse &= valid_slots

    # shift retained positions to the new text
    moved = [iv for iv in intervals if iv[2] != 0]
    shift = _interval_map(file, moved)
    g.last_shift = shift
    if moved:
        for sid, node in g.nodes.items():
            if sid in reparse or sid in removed:
                continue
            node.parsed = _map_task(node.parsed, shift)
            if node.validated is not None:
                node.validated = _map_result(node.validated, shift)
        g.types = {q: _map_term(t, shift) for q, t in g.types.items()}

    for sid in removed:
        node = g.nodes.pop(sid, None)
        if node is None:
            continue
        qname = sid.rsplit("!", 1)[0]
        if g.type_slots.get(qname) == sid:
            del g.types[qname]
            del g.type_slots[qname]

    g.stats.edits += 1
    return Plan(frozenset(reparse), structural, frozenset(removed))


def _reparse_slot(g: DepGraph, sid: str) -> bool:
    """Rebuild one slot's parsed layer.  Returns True if the parse hash
    changed (the slot must revalidate)."""
    qname, comp = sid.rsplit("!", 1)
    theory, cname = qname.split("?", 1)
    decl = g.decls.get(theory)
    cd = next((c for c in decl.constants if c.name == cname), None) if decl else None
    if cd is None:
        return False
    table = g.tables[theory]
    tp_res: Optional[ParseResult] = None
    if cd.type_unit is not None:
        tp_node = g.nodes.get(slot_id(theory, cname, TYPE_SLOT))
        if comp == DEF_SLOT and tp_node is not None:
            # dirty type slots reparse before their definiens slot, so
            # this parse is current; reusing it keeps the refs shared
            old = tp_node.parsed
            tp_res = ParseResult(old.judgment.term, old.metas, old.parse_errors)
        else:
            tp_res = parse_unit(cd.type_unit, table)
    df_res = parse_unit(cd.def_unit, table) if cd.def_unit is not None else None
    tasks = {
        t.slot: t for t in constant_tasks(theory, cd, tp_res, df_res)
    }
    task = tasks.get(sid)
    if task is None:
        return False
    fp = task_fingerprint(task)
    unit, ctx = _slot_units(decl)[sid]
    node = g.nodes.get(sid)
    if node is None:
        g.nodes[sid] = SlotNode(
            id=sid,
            file=unit.source_ref.file,
            string_rep=unit.text,
            context_string=getattr(ctx, "text", "") if ctx is not None else "",
            parsed=task,
            parsed_hash=fp,
        )
        return True
    changed = fp != node.parsed_hash
    if not changed and node.validated is not None:
        # same parse at new positions: keep the result, retarget its refs;
        # positions borrowed from other slots fall back to interval shifts
        fallback = g.last_shift if g.last_shift is not None else (lambda r: r)
        rekey = _rekey_map(node.parsed, task, fallback)
        node.validated = _map_result(node.validated, rekey)
    node.string_rep = unit.text
    node.context_string = getattr(ctx, "text", "") if ctx is not None else ""
    node.parsed = task
    node.parsed_hash = fp
    if changed:
        # validated_hash stays: revalidation compares against it to decide
        # whether dependents must wake
        node.validated = None
    return changed


def _dependents(g: DepGraph) -> dict[str, set[str]]:
    out: dict[str, set[str]] = {}
    for sid, node in g.nodes.items():
        if node.validated is None:
            continue
        for dep in node.validated.dependencies:
            out.setdefault(dep, set()).add(sid)
    return out


def _check_acyclic(g: DepGraph) -> None:
    edges: dict[str, set[str]] = {}
    for sid, node in g.nodes.items():
        if node.validated is None:
            continue
        edges[sid] = {d for d in node.validated.dependencies if d in g.nodes}
    seen: dict[str, int] = {}

    def visit(s: str, chain: list[str]) -> None:
        st = seen.get(s)
        if st == 2:
            return
        if st == 1:
            cycle = chain[chain.index(s) :] + [s]
            raise CycleDetected(" -> ".join(cycle))
        seen[s] = 1
        for d in edges.get(s, ()):
            visit(d, chain + [s])
        seen[s] = 2

    for s in edges:
        visit(s, [])


def propagate(g: DepGraph, revalidated: Mapping[str, bool]) -> tuple[str, ...]:
    """Slots that must revalidate because a dependency's result changed:
    the direct dependents of the changed entries, excluding anything in
    ``revalidated`` (the caller loops to the fixpoint).  Returned in task
    order, which is dependency order for backward edges."""
    _check_acyclic(g)
    deps_of = _dependents(g)
    frontier: set[str] = set()
    for sid, changed in revalidated.items():
        if not changed:
            continue
        for d in deps_of.get(sid, ()):
            if d not in revalidated and d in g.nodes:
                frontier.add(d)
    index = g.slot_index()
    return tuple(sorted(frontier, key=lambda s: index.get(s, 10**9)))


def _revalidate(g: DepGraph, sid: str, index: Mapping[str, int]) -> bool:
    node = g.nodes[sid]
    qname = sid.rsplit("!", 1)[0]
    my_index = index.get(sid, 10**9)

    def lookup(q: str):
        if q == qname:
            return None
        pslot = g.type_slots.get(q)
        if pslot is None or index.get(pslot, 10**9) >= my_index:
            return None
        return (pslot, g.types[q])

    res = solve(node.parsed, g.rules, lookup, g.tables[node.parsed.theory])
    g.stats.revalidated += 1
    produced: Optional[Term] = None
    if res.ok:
        if node.parsed.type_meta is not None:
            produced = res.substitution.get(node.parsed.type_meta)
        elif sid.endswith("!" + TYPE_SLOT):
            produced = res.elaborated
    was_producer = g.type_slots.get(qname) == sid
    if produced is not None and (was_producer or qname not in g.type_slots):
        g.types[qname] = produced
        g.type_slots[qname] = sid
    elif produced is None and was_producer:
        del g.types[qname]
        del g.type_slots[qname]
    new_hash = result_fingerprint(
        res, produced if g.type_slots.get(qname) == sid else None
    )
    changed = new_hash != node.validated_hash
    node.validated = res
    node.validated_hash = new_hash
    return changed


def check_incremental(g: DepGraph, file: str, new_text: str) -> DiagnosticsDelta:
    """Run the whole edit policy: plan, reparse, revalidate the affected
    closure.  Returns the diagnostics added and removed by the edit.

    Revalidation runs over the dependency closure of the dirty slots in
    ascending task order.  A slot only ever sees results of slots before
    it, so that order finalizes every visible dependency first, even
    when a dirty slot sits far behind a slot it depends on.  Each slot
    in the closure actually revalidates only if its own parse changed or
    a recorded dependency's result changed; anything else keeps its
    result untouched."""
    before = Counter(g.diagnostics())
    plan = apply_edit(g, file, new_text)
    if plan.structural:
        g.rules = kernel_for(g.validation())
    index = g.slot_index()
    seeds: set[str] = set()
    # type slots parse before definiens slots of the same constant
    for sid in sorted(plan.reparse, key=lambda s: index.get(s, 10**9)):
        if _reparse_slot(g, sid):
            seeds.add(sid)
    g.stats.reparsed += len(plan.reparse)

    # everything an edit could reach, over the recorded edges
    deps_of = _dependents(g)
    affected = set(seeds)
    stack = list(seeds) + list(plan.removed)
    seen = set(stack) | affected
    while stack:
        for d in deps_of.get(stack.pop(), ()):
            if d in g.nodes and d not in seen:
                seen.add(d)
                affected.add(d)
                stack.append(d)

    changed: dict[str, bool] = {sid: True for sid in plan.removed}
    for sid in sorted(affected, key=lambda s: index.get(s, 10**9)):
        node = g.nodes.get(sid)
        if node is None:
            continue
        old_deps = node.validated.dependencies if node.validated else ()
        if sid in seeds or any(changed.get(d) for d in old_deps):
            changed[sid] = _revalidate(g, sid, index)

    try:
        _check_acyclic(g)
    except CycleDetected as e:
        # user-level mutual references; task order still terminates, so
        # the check degrades to a warning instead of aborting
        note = Problem(f"circular dependency: {e}", None, "warning", ())
        if note.message not in {p.message for p in g.structure_problems}:
            g.structure_problems = g.structure_problems + (note,)
    after = Counter(g.diagnostics())
    added = tuple(sorted((after - before).elements()))
    removed = tuple(sorted((before - after).elements()))
    return DiagnosticsDelta(added, removed)
