"""Dependently typed kernel: the rules for a framework theory declaring
type/kind sorts, dependent products, abstraction, application, an arrow
shorthand, and typed holes.

The framework theory is ordinary source; its symbols are found by their
local names in a notation table rather than being baked in, so the kernel
works for any theory that declares this vocabulary.  Everything here plugs
into the generic solver through a RuleSet; the two pieces are separable
(products/abstraction vs. holes and their completions).
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from .engine import (
    EMPTY_RULES,
    Goal,
    HoleRecord,
    LibraryResult,
    Outcome,
    RuleSet,
    Solver,
    SortCheck,
    register_rules,
    unify,
)
from .model import (
    Complex,
    ConstRef,
    Context,
    ContextEntry,
    Equal,
    Inhabitable,
    SourceRef,
    Term,
    Typing,
    VarRef,
    free_vars,
    fresh_name,
    qname_local,
    substitute,
)
from .render import render_term
from .structure import Validation
from .termparse import NotationTable

_CORE_LOCALS = ("type", "kind", "Pi", "lambda", "apply", "arrow", "hole")


@dataclass(frozen=True)
class LFNames:
    """Qualified names of the framework symbols, as declared by whichever
    theory provides them."""

    type: str
    kind: str
    pi: str
    lam: str
    apply: str
    arrow: str
    hole: str


def lf_names(table: NotationTable) -> Optional[LFNames]:
    found: dict[str, str] = {}
    for q, e in table.by_qname.items():
        if e.primitive and qname_local(q) in _CORE_LOCALS:
            found[qname_local(q)] = q
    if len(found) < len(_CORE_LOCALS):
        return None
    return LFNames(
        type=found["type"],
        kind=found["kind"],
        pi=found["Pi"],
        lam=found["lambda"],
        apply=found["apply"],
        arrow=found["arrow"],
        hole=found["hole"],
    )


def kernel_for(validation: Validation) -> RuleSet:
    """The merged rule set for a validated library: framework rules plus the
    hole plugin when a framework theory is present, empty otherwise (the
    solver then accepts everything with a warning)."""
    for theory in validation.order:
        names = lf_names(validation.tables[theory])
        if names is not None:
            rules = register_rules(EMPTY_RULES, LFRules(names))
            return register_rules(rules, HoleRules(names))
    return EMPTY_RULES


def _ref(t: Term, fallback: Optional[SourceRef]) -> Optional[SourceRef]:
    ref = getattr(t, "source_ref", None)
    return ref if ref is not None else fallback


class LFRules:
    """Products, abstraction, application, and the sorts."""

    def __init__(self, names: LFNames):
        self.n = names

    def rule_set(self) -> RuleSet:
        n = self.n
        return RuleSet(
            inference={
                n.type: self.infer_type,
                n.pi: self.infer_pi,
                n.lam: self.infer_lambda,
                n.apply: self.infer_apply,
            },
            checking={n.pi: self.check_pi},
            rewrites=(self.rewrite_arrow, self.rewrite_beta),
            solutions=(self.solve_meta,),
            inhabitable=self.inhabitable,
            sorts=frozenset({n.type, n.kind}),
            spine_head=n.apply,
            binder_head=n.lam,
        )

    def _is_pi(self, t: Term) -> bool:
        return (
            isinstance(t, Complex)
            and t.head == self.n.pi
            and len(t.bound) == 1
            and len(t.args) == 1
        )

    def _is_lambda(self, t: Term) -> bool:
        return (
            isinstance(t, Complex)
            and t.head == self.n.lam
            and len(t.bound) == 1
            and len(t.args) == 1
        )

    # --- inference ----------------------------------------------------------

    def infer_type(self, solver: Solver, goal: Goal, t: Term) -> Outcome:
        return ("ok", ConstRef(self.n.kind), [])

    def infer_pi(self, solver: Solver, goal: Goal, t: Complex) -> Outcome:
        if not self._is_pi(t):
            return ("error", "malformed dependent product")
        theory = _theory(goal)
        entry = t.bound[0]
        # the product's sort is its body's sort
        s = VarRef(solver.fresh_meta(), None, True)
        return (
            "ok",
            s,
            [
                (
                    Typing(theory, t.args[0], s),
                    goal.ctx + (entry,),
                    _ref(t.args[0], goal.source_ref),
                ),
                (SortCheck(theory, s), goal.ctx, goal.source_ref),
            ],
        )

    def infer_lambda(self, solver: Solver, goal: Goal, t: Complex) -> Outcome:
        if not self._is_lambda(t):
            return ("error", "malformed abstraction")
        theory = _theory(goal)
        entry = t.bound[0]
        body_ctx = goal.ctx + (entry,)
        occ = solver.meta_occurrence(solver.fresh_meta(), body_ctx)
        return (
            "ok",
            Complex(self.n.pi, (entry,), (occ,)),
            [(Typing(theory, t.args[0], occ), body_ctx, _ref(t.args[0], goal.source_ref))],
        )

    def infer_apply(self, solver: Solver, goal: Goal, t: Complex) -> Outcome:
        if len(t.args) < 2 or t.bound:
            return ("error", "malformed application")
        theory = _theory(goal)
        f = solver.whnf(t.args[0])
        if self._is_pi(f):
            return ("error", "cannot apply a dependent product")
        out = solver.infer(goal, f)
        if out[0] != "ok":
            return out
        ftype, subgoals = out[1], list(out[2])
        for a in t.args[1:]:
            ftype = solver.whnf(ftype)
            if not self._is_pi(ftype):
                if solver.meta_headed(ftype):
                    return ("blocked",)
                return (
                    "error",
                    f"cannot apply {solver.render(f)}: "
                    f"{solver.render(ftype)} is not a function type",
                )
            entry = ftype.bound[0]
            if entry.type is None:
                return ("error", "product binder lacks a type")
            subgoals.append(
                (Typing(theory, a, entry.type), goal.ctx, _ref(a, goal.source_ref))
            )
            ftype = substitute(ftype.args[0], {entry.name: a})
        return ("ok", ftype, subgoals)

    # --- checking against a product ------------------------------------------

    def check_pi(
        self, solver: Solver, goal: Goal, subject: Term, expected: Complex
    ) -> Outcome:
        theory = _theory(goal)
        e = expected.bound[0]
        body = expected.args[0]
        if (
            isinstance(subject, Complex)
            and subject.head == self.n.hole
            and len(subject.args) == 1
            and not subject.bound
        ):
            solver.record_hole(goal, subject.args[0], _ref(subject, goal.source_ref))
            return (
                "done",
                [(Equal(theory, subject.args[0], expected), goal.ctx, goal.source_ref)],
            )
        if self._is_lambda(subject):
            s = subject.bound[0]
            subs: list = []
            if s.type is not None and e.type is not None:
                subs.append(
                    (Equal(theory, s.type, e.type), goal.ctx, _ref(s.type, goal.source_ref))
                )
            body_expected = (
                body if e.name == s.name else substitute(body, {e.name: VarRef(s.name)})
            )
            subs.append(
                (
                    Typing(theory, subject.args[0], body_expected),
                    goal.ctx + (s,),
                    _ref(subject.args[0], goal.source_ref),
                )
            )
            return ("done", subs)
        # eta: any other subject is checked applied to a fresh variable
        base = e.name if e.name != "_" else "x"
        avoid = (
            free_vars(subject)
            | free_vars(body)
            | frozenset(c.name for c in goal.ctx)
            | {e.name}
        )
        x = fresh_name(base, avoid)
        applied = solver.spine(subject, VarRef(x))
        body_expected = substitute(body, {e.name: VarRef(x)})
        return (
            "done",
            [
                (
                    Typing(theory, applied, body_expected),
                    goal.ctx + (ContextEntry(x, e.type),),
                    goal.source_ref,
                )
            ],
        )

    # --- rewriting -------------------------------------------------------------

    def rewrite_arrow(self, solver: Solver, t: Term) -> Optional[Term]:
        if not (
            isinstance(t, Complex)
            and t.head == self.n.arrow
            and len(t.args) == 2
            and not t.bound
        ):
            return None
        x = fresh_name("_", free_vars(t.args[1]))
        return Complex(
            self.n.pi, (ContextEntry(x, t.args[0]),), (t.args[1],), t.source_ref
        )

    def rewrite_beta(self, solver: Solver, t: Term) -> Optional[Term]:
        if not (
            isinstance(t, Complex)
            and t.head == self.n.apply
            and len(t.args) >= 2
            and not t.bound
        ):
            return None
        lam = t.args[0]
        if not self._is_lambda(lam):
            return None
        out = substitute(lam.args[0], {lam.bound[0].name: t.args[1]})
        rest = t.args[2:]
        return solver.spine(out, *rest) if rest else out

    # --- meta solutions -----------------------------------------------------------

    def solve_meta(
        self, solver: Solver, goal: Goal, left: Term, right: Term
    ) -> Optional[tuple[str, Term]]:
        """Pattern solutions: a meta applied to distinct context variables
        equals a term whose free variables those are."""
        ms = solver.meta_spine(left)
        if ms is None:
            return None
        name, args = ms
        ctx_types: dict[str, Optional[Term]] = {e.name: e.type for e in goal.ctx}
        spine_names: list[str] = []
        seen: set[str] = set()
        for a in args:
            if not isinstance(a, VarRef) or solver.is_meta(a.name):
                return None
            if a.name in seen or a.name not in ctx_types:
                return None
            seen.add(a.name)
            spine_names.append(a.name)
        for v in free_vars(right):
            if v == name:
                return None  # occurs
            if not solver.is_meta(v) and v not in seen:
                return None  # out of scope
        sol = right
        for n_ in reversed(spine_names):
            sol = Complex(self.n.lam, (ContextEntry(n_, ctx_types[n_]),), (sol,))
        return (name, sol)

    # --- inhabitability -------------------------------------------------------------

    def inhabitable(self, solver: Solver, goal: Goal, t: Term) -> Outcome:
        theory = _theory(goal)
        if isinstance(t, ConstRef) and t.name in solver.rules.sorts:
            return ("solved",)
        if self._is_pi(t):
            return (
                "done",
                [
                    (
                        Inhabitable(theory, t.args[0]),
                        goal.ctx + (t.bound[0],),
                        _ref(t.args[0], goal.source_ref),
                    )
                ],
            )
        if solver.meta_headed(t):
            return ("blocked",)
        out = solver.infer(goal, t)
        if out[0] != "ok":
            return out
        return (
            "done",
            list(out[2]) + [(SortCheck(theory, out[1]), goal.ctx, goal.source_ref)],
        )


def _theory(goal: Goal) -> str:
    j = goal.judgment
    return j.theory


# --- holes and their completions ---------------------------------------------------


@dataclass(frozen=True)
class Hint:
    """One way to make progress at a hole: insert head_name applied to
    solved implicit arguments and fresh holes for what remains."""

    head_name: str
    insertion_term: Term
    rendered_text: str
    remaining_goals: int


class HoleRules:
    """Typed holes: a hole carries its type, typechecks at it, and is
    reported so completions can be offered."""

    def __init__(self, names: LFNames):
        self.n = names

    def rule_set(self) -> RuleSet:
        return RuleSet(
            inference={self.n.hole: self.infer_hole},
            completions=(self.hints_for_hole,),
        )

    def infer_hole(self, solver: Solver, goal: Goal, t: Complex) -> Outcome:
        if len(t.args) != 1 or t.bound:
            return ("error", "malformed hole")
        solver.record_hole(goal, t.args[0], _ref(t, goal.source_ref))
        return ("ok", t.args[0], [])

    # --- completion search ------------------------------------------------------

    def hints_for_hole(
        self, rules: RuleSet, library: LibraryResult, hole: HoleRecord
    ) -> list[Hint]:
        validation = library.validation
        table = validation.tables[hole.theory]
        order = {t.slot: i for i, t in enumerate(validation.tasks)}
        here = order.get(hole.slot, len(validation.tasks))
        self_qname = hole.slot.rsplit("!", 1)[0] if hole.slot else ""
        scratch = Solver(rules, hole.theory, table, (), lambda q: None)

        candidates: list[tuple[str, Term, Term]] = []
        seen_vars: set[str] = set()
        for e in reversed(hole.ctx):
            if e.name in seen_vars or e.type is None:
                continue
            seen_vars.add(e.name)
            candidates.append((e.name, VarRef(e.name), e.type))
        for qname in table.by_qname:
            tp = library.types.get(qname)
            if tp is None or qname == self_qname:
                continue
            if order.get(library.type_slots[qname], len(order) + 1) >= here:
                continue
            candidates.append((qname_local(qname), ConstRef(qname), tp))

        hints = []
        for display, head_term, tp in candidates:
            hint = self._try_candidate(
                rules, library, hole, table, scratch, display, head_term, tp
            )
            if hint is not None:
                hints.append(hint)
        lam = self._lambda_hint(hole, table, scratch)
        if lam is not None:
            hints.append(lam)
        hints.sort(key=lambda h: (h.remaining_goals, h.head_name))
        return hints

    def _try_candidate(
        self,
        rules: RuleSet,
        library: LibraryResult,
        hole: HoleRecord,
        table: NotationTable,
        scratch: Solver,
        display: str,
        head_term: Term,
        tp: Term,
    ) -> Optional[Hint]:
        entries: list[tuple[ContextEntry, bool]] = []
        t = scratch.whnf(tp)
        while (
            isinstance(t, Complex)
            and t.head == self.n.pi
            and len(t.bound) == 1
            and len(t.args) == 1
        ):
            entry, body = t.bound[0], t.args[0]
            entries.append((entry, entry.name in free_vars(body)))
            t = scratch.whnf(body)
        sub: dict[str, Term] = {}
        metas: list[ContextEntry] = []
        for i, (entry, dependent) in enumerate(entries):
            if dependent:
                name = f"/H{i + 1}"
                metas.append(ContextEntry(name))
                sub[entry.name] = scratch.meta_occurrence(name, hole.ctx)
        pattern = substitute(t, sub) if sub else t
        solution = unify(
            pattern,
            hole.expected,
            tuple(metas),
            theory=hole.theory,
            rules=rules,
            lookup=lambda q: None,
            table=table,
            ctx=hole.ctx,
        )
        if solution is None:
            return None
        ctx_args = [VarRef(n) for n in _distinct_names(hole.ctx)]
        args: list[Term] = []
        solved_deps: dict[str, Term] = {}
        remaining = 0
        for i, (entry, dependent) in enumerate(entries):
            if dependent:
                value = scratch.beta_apply(solution[f"/H{i + 1}"], ctx_args)
                value = value if value.inferred else replace(value, inferred=True)
                args.append(value)
                solved_deps[entry.name] = value
            else:
                goal_type = substitute(entry.type, solved_deps) if solved_deps else entry.type
                args.append(Complex(self.n.hole, (), (goal_type,)))
                remaining += 1
        insertion = scratch.spine(head_term, *args) if args else head_term
        return Hint(display, insertion, render_term(insertion, table), remaining)

    def _lambda_hint(
        self, hole: HoleRecord, table: NotationTable, scratch: Solver
    ) -> Optional[Hint]:
        t = scratch.whnf(hole.expected)
        if not (
            isinstance(t, Complex)
            and t.head == self.n.pi
            and len(t.bound) == 1
            and len(t.args) == 1
        ):
            return None
        entry, body = t.bound[0], t.args[0]
        base = entry.name if entry.name != "_" else "p"
        x = fresh_name(base, free_vars(body) | frozenset(e.name for e in hole.ctx))
        new_body = body if x == entry.name else substitute(body, {entry.name: VarRef(x)})
        binder_type = entry.type
        if binder_type is not None and not binder_type.inferred:
            binder_type = replace(binder_type, inferred=True)
        insertion = Complex(
            self.n.lam,
            (ContextEntry(x, binder_type),),
            (Complex(self.n.hole, (), (new_body,)),),
        )
        return Hint(f"[{x}]", insertion, render_term(insertion, table), 1)


def _distinct_names(ctx: Context) -> list[str]:
    names: list[str] = []
    seen: set[str] = set()
    for e in reversed(ctx):
        if e.name not in seen:
            seen.add(e.name)
            names.append(e.name)
    names.reverse()
    return names
