"""Structural validation: documents in, semantic theories and check
tasks out.

The validator resolves includes (reporting missing targets and cycles),
parses every term component with its theory's notation table, builds
semantic :class:`~logon.model.Theory` values holding the *parsed* terms,
and emits one :class:`CheckTask` per component for the rule engine:

* ``c : A``             -> ``A`` must be inhabitable          (slot c!tp)
* ``c : A = t``         -> additionally ``t : A``             (slot c!df)
* ``c = t``             -> ``t : /X`` for a fresh type meta whose
                           solution becomes the constant's type (slot c!df)

The two components of one constant are checked independently: the
definiens is checked against the parsed type, not the elaborated one.
Since each component numbers its metas from ``/X1``, the type's metas
are renumbered to follow the definiens' before the two meet in one task.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional

from .document import (
    DEF_SLOT,
    TYPE_SLOT,
    ConstantDecl,
    Document,
    TheoryDecl,
    slot_id,
)
from .model import (
    Complex,
    ConstRef,
    Constant,
    Context,
    ContextEntry,
    ERROR_META_PREFIX,
    Inhabitable,
    Judgment,
    META_PREFIX,
    Problem,
    SourceRef,
    Term,
    Theory,
    Typing,
    VarRef,
    is_meta_name,
)
from .termparse import (
    NotationTable,
    ParseResult,
    TheorySig,
    parse_unit,
    sig_from_declaration,
)


@dataclass(frozen=True)
class CheckTask:
    """One engine work item: validate a single component."""

    slot: str  # "Theory?const!tp" or "...!df"
    theory: str
    judgment: Judgment
    metas: Context  # fresh meta-variables the judgment may solve
    parse_errors: tuple[Problem, ...] = ()
    # definiens-only constants: the expected type is this meta; its
    # solution is the constant's type
    type_meta: Optional[str] = None
    source_ref: Optional[SourceRef] = None


@dataclass(frozen=True)
class Validation:
    theories: dict[str, Theory]
    order: tuple[str, ...]  # theory names, include-before-includer
    tasks: tuple[CheckTask, ...]
    problems: tuple[Problem, ...]
    tables: dict[str, NotationTable]
    sigs: dict[str, TheorySig]


def rename_metas(t: Term, mapping: Mapping[str, str]) -> Term:
    """Rename meta-variables throughout, keeping refs and inferred flags.
    Metas are never bound by the term itself, so no capture is possible."""
    if isinstance(t, VarRef):
        if t.name in mapping:
            return dataclasses.replace(t, name=mapping[t.name])
        return t
    if isinstance(t, ConstRef):
        return t
    bound = tuple(
        dataclasses.replace(
            e,
            type=rename_metas(e.type, mapping) if e.type is not None else None,
            definiens=rename_metas(e.definiens, mapping)
            if e.definiens is not None
            else None,
        )
        for e in t.bound
    )
    args = tuple(rename_metas(a, mapping) for a in t.args)
    if bound == t.bound and args == t.args:
        return t
    return dataclasses.replace(t, bound=bound, args=args)


def _shift_metas(result: ParseResult, offset: int) -> tuple[Term, Context, dict[str, str]]:
    """Renumber a parse result's metas to start after ``offset``."""
    mapping: dict[str, str] = {}
    entries: list[ContextEntry] = []
    for j, e in enumerate(result.metas):
        prefix = ERROR_META_PREFIX if e.name.startswith(ERROR_META_PREFIX) else META_PREFIX + "X"
        new = f"{prefix}{offset + j + 1}"
        mapping[e.name] = new
        entries.append(dataclasses.replace(e, name=new))
    return rename_metas(result.term, mapping), tuple(entries), mapping


def _include_order(
    sigs: Mapping[str, TheorySig],
    decls: Mapping[str, TheoryDecl],
    problems: list[Problem],
) -> tuple[str, ...]:
    """Depth-first topological order over includes; cycles are reported
    and broken at the back edge, missing targets reported once each."""
    order: list[str] = []
    state: dict[str, int] = {}  # 1 visiting, 2 done

    def visit(name: str, chain: tuple[str, ...]) -> None:
        st = state.get(name)
        if st == 2:
            return
        if st == 1:
            cycle = " -> ".join(chain[chain.index(name) :] + (name,))
            ref = decls[chain[-1]].source_ref if chain[-1] in decls else None
            problems.append(Problem(f"include cycle: {cycle}", ref))
            return
        state[name] = 1
        for inc in sigs[name].includes:
            if inc not in sigs:
                decl = decls.get(name)
                ref = None
                if decl is not None:
                    for d in decl.includes:
                        if d.target == inc:
                            ref = d.source_ref
                problems.append(Problem(f"include of unknown theory {inc!r}", ref))
                continue
            visit(inc, chain + (name,))
        state[name] = 2
        order.append(name)

    for name in sigs:
        visit(name, ())
    return tuple(order)


def validate(docs: Iterable[Document]) -> Validation:
    docs = list(docs)
    problems: list[Problem] = []
    for doc in docs:
        problems.extend(doc.errors)

    decls: dict[str, TheoryDecl] = {}
    for doc in docs:
        for th in doc.theories:
            if th.name in decls:
                problems.append(
                    Problem(f"duplicate theory {th.name!r}", th.name_ref)
                )
                continue
            decls[th.name] = th

    sigs = {name: sig_from_declaration(th) for name, th in decls.items()}

    order = _include_order(sigs, decls, problems)

    tables: dict[str, NotationTable] = {
        name: NotationTable.for_theory(name, sigs) for name in order
    }

    theories: dict[str, Theory] = {}
    tasks: list[CheckTask] = []
    for name in order:
        decl = decls[name]
        table = tables[name]
        constants: list[Constant] = []
        for cd in decl.constants:
            tp = parse_unit(cd.type_unit, table) if cd.type_unit else None
            df = parse_unit(cd.def_unit, table) if cd.def_unit else None
            constants.append(
                Constant(
                    cd.name,
                    tp.term if tp else None,
                    df.term if df else None,
                    cd.notation,
                    cd.source_ref,
                )
            )
            tasks.extend(constant_tasks(name, cd, tp, df))
        theories[name] = Theory(
            name, tuple(i.target for i in decl.includes), tuple(constants)
        )

    return Validation(theories, order, tuple(tasks), tuple(problems), tables, sigs)


def constant_tasks(
    theory: str,
    cd: ConstantDecl,
    tp: Optional[ParseResult],
    df: Optional[ParseResult],
) -> list[CheckTask]:
    tasks: list[CheckTask] = []
    if tp is not None:
        tasks.append(
            CheckTask(
                slot_id(theory, cd.name, TYPE_SLOT),
                theory,
                Inhabitable(theory, tp.term),
                tp.metas,
                tp.errors,
                source_ref=cd.type_unit.source_ref,
            )
        )
    if df is None:
        return tasks
    if tp is not None:
        expected, tp_metas, _ = _shift_metas(tp, len(df.metas))
        tasks.append(
            CheckTask(
                slot_id(theory, cd.name, DEF_SLOT),
                theory,
                Typing(theory, df.term, expected),
                df.metas + tp_metas,
                df.errors,
                source_ref=cd.def_unit.source_ref,
            )
        )
    else:
        type_meta = f"{META_PREFIX}X{len(df.metas) + 1}"
        tasks.append(
            CheckTask(
                slot_id(theory, cd.name, DEF_SLOT),
                theory,
                Typing(theory, df.term, VarRef(type_meta, None, True)),
                df.metas + (ContextEntry(type_meta),),
                df.errors,
                type_meta=type_meta,
                source_ref=cd.def_unit.source_ref,
            )
        )
    return tasks
