"""Generic judgment solver.

The solver owns only structure: a goal queue with blocked-goal retry, the
meta-variable substitution, structural congruence, rewriting-to-head-normal
dispatch, and dependency recording.  What heads mean — how types are
inferred, which equations solve metas — arrives as a RuleSet plugged in by
a kernel module.

Scheduling: goals live in a FIFO queue and are processed in rounds.  A goal
blocked on an unsolved meta is re-queued; any goal that is solved,
decomposed into subgoals, or failed counts as progress.  A full round with
no progress flushes whatever is left as unsolved constraints.

Every goal carries the branch of the derivation that produced it, as a list
of judgments rendered at push time; failures attach that log to the
reported problem.
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Mapping, Optional, Union

from .model import (
    Complex,
    ConstRef,
    Context,
    ContextEntry,
    ERROR_META_PREFIX,
    Equal,
    Inhabitable,
    Judgment,
    Problem,
    SourceRef,
    Term,
    Typing,
    VarRef,
    alpha_equal,
    free_vars,
    qname_local,
    substitute,
)
from .render import describe_judgment, render_term
from .structure import CheckTask, Validation
from .termparse import NotationTable

REWRITE_FUEL = 10_000

# A subgoal a rule wants pushed: (judgment, context, source ref or None).
Subgoal = tuple[object, Context, Optional[SourceRef]]

# Rule outcomes are tagged tuples:
#   ("solved",)            the goal holds
#   ("blocked",)           retry once some meta gets solved
#   ("done", [subgoal...]) decomposed; subgoals carry the claim
#   ("error", message)     the goal fails
Outcome = tuple


@dataclass(frozen=True)
class SortCheck:
    """Residual claim that a term is one of the kernel's sorts."""

    theory: str
    term: Term


@dataclass(frozen=True)
class Goal:
    judgment: object  # Judgment | SortCheck
    ctx: Context
    source_ref: Optional[SourceRef]
    log: tuple[str, ...]


class DuplicateRuleError(Exception):
    def __init__(self, head: str):
        super().__init__(f"duplicate inference rule for head '{head}'")
        self.head = head


@dataclass(frozen=True)
class RuleSet:
    """Language plugin surface.  Maps are keyed by head qnames.

    spine_head/binder_head name the kernel's application and abstraction
    heads; the engine needs them to apply substitutions at raised
    meta-occurrences and to build solution binders' eta counterpart.
    """

    inference: Mapping[str, Callable] = field(default_factory=dict)
    checking: Mapping[str, Callable] = field(default_factory=dict)
    equality: Mapping[str, Callable] = field(default_factory=dict)
    rewrites: tuple[Callable, ...] = ()
    solutions: tuple[Callable, ...] = ()
    completions: tuple[Callable, ...] = ()
    inhabitable: Optional[Callable] = None
    sorts: frozenset[str] = frozenset()
    spine_head: Optional[str] = None
    binder_head: Optional[str] = None


EMPTY_RULES = RuleSet()


def register_rules(base: RuleSet, plugin) -> RuleSet:
    """Merge a plugin's rules into a RuleSet.  A plugin is either a RuleSet
    or an object with a rule_set() method."""
    add = plugin.rule_set() if hasattr(plugin, "rule_set") else plugin
    inference = dict(base.inference)
    for head, rule in add.inference.items():
        if head in inference:
            raise DuplicateRuleError(head)
        inference[head] = rule
    checking = dict(base.checking)
    checking.update(add.checking)
    equality = dict(base.equality)
    equality.update(add.equality)
    return RuleSet(
        inference=inference,
        checking=checking,
        equality=equality,
        rewrites=base.rewrites + add.rewrites,
        solutions=base.solutions + add.solutions,
        completions=base.completions + add.completions,
        inhabitable=add.inhabitable or base.inhabitable,
        sorts=base.sorts | add.sorts,
        spine_head=add.spine_head or base.spine_head,
        binder_head=add.binder_head or base.binder_head,
    )


@dataclass(frozen=True)
class HoleRecord:
    source_ref: Optional[SourceRef]
    theory: str
    slot: str
    ctx: Context
    expected: Term


@dataclass(frozen=True)
class SolveResult:
    slot: str
    ok: bool
    substitution: dict[str, Term]  # deep-resolved; tops tagged inferred
    solved: dict[str, bool]
    problems: tuple[Problem, ...]
    dependencies: frozenset[str]  # slot ids looked up
    elaborated: Term
    expected: Optional[Term]  # Typing tasks: the instantiated expected type
    holes: tuple[HoleRecord, ...]


# lookup: qname -> (producing slot id, validated type) or None
Lookup = Callable[[str], Optional[tuple[str, Term]]]


class _OutOfFuel(Exception):
    pass


_META_NUM = re.compile(r"^/[X!](\d+)$")


class Solver:
    def __init__(
        self,
        rules: RuleSet,
        theory: str,
        table: NotationTable,
        metas: Context,
        lookup: Lookup,
        slot: str = "",
    ):
        self.rules = rules
        self.theory = theory
        self.table = table
        self.slot = slot
        self._lookup = lookup
        self.gamma: dict[str, Optional[Term]] = {}
        self.meta_order: list[str] = []
        highest = 0
        for e in metas:
            self.gamma[e.name] = e.type
            self.meta_order.append(e.name)
            m = _META_NUM.match(e.name)
            if m:
                highest = max(highest, int(m.group(1)))
        self._next_meta = highest + 1
        self.sigma: dict[str, Term] = {}
        self.queue: deque[Goal] = deque()
        self.problems: list[Problem] = []
        self.holes: dict[object, HoleRecord] = {}
        self.deps: set[str] = set()
        self.fuel = REWRITE_FUEL

    # --- metas ------------------------------------------------------------

    def fresh_meta(self) -> str:
        name = f"/X{self._next_meta}"
        self._next_meta += 1
        self.gamma[name] = None
        self.meta_order.append(name)
        return name

    def meta_occurrence(self, name: str, ctx: Context) -> Term:
        """The standard occurrence of a meta: applied to the distinct
        context variables it may depend on (innermost shadowing wins)."""
        names: list[str] = []
        seen: set[str] = set()
        for e in reversed(ctx):
            if e.name not in seen:
                seen.add(e.name)
                names.append(e.name)
        names.reverse()
        head = VarRef(name, None, True)
        if not names:
            return head
        args = tuple(VarRef(n, None, True) for n in names)
        return Complex(self.rules.spine_head, (), (head,) + args, None, True)

    def is_meta(self, name: str) -> bool:
        return name in self.gamma

    def unsolved_meta(self, name: str) -> bool:
        return name in self.gamma and name not in self.sigma

    def meta_spine(self, t: Term) -> Optional[tuple[str, tuple[Term, ...]]]:
        """(name, args) when t is an unsolved meta or a spine headed by
        one; None otherwise.  Expects t already instantiated."""
        if isinstance(t, VarRef) and self.unsolved_meta(t.name):
            return (t.name, ())
        if (
            isinstance(t, Complex)
            and t.head == self.rules.spine_head
            and t.args
            and isinstance(t.args[0], VarRef)
            and self.unsolved_meta(t.args[0].name)
        ):
            return (t.args[0].name, t.args[1:])
        return None

    def meta_headed(self, t: Term) -> bool:
        return self.meta_spine(t) is not None

    def bind(self, name: str, solution: Term) -> None:
        assert name not in self.sigma, name
        self.sigma[name] = solution

    # --- substitution and rewriting ----------------------------------------

    def inst(self, t: Term) -> Term:
        """Apply the current substitution throughout, beta-reducing at
        raised occurrence sites.  The occurrence's inferred flag survives
        onto the replacement's top node."""
        if isinstance(t, VarRef):
            if t.name in self.sigma:
                out = self.inst(self.sigma[t.name])
                return _flag_inferred(out) if t.inferred else out
            return t
        if isinstance(t, ConstRef):
            return t
        if (
            t.head == self.rules.spine_head
            and t.args
            and isinstance(t.args[0], VarRef)
            and t.args[0].name in self.sigma
        ):
            sol = self.inst(self.sigma[t.args[0].name])
            args = [self.inst(a) for a in t.args[1:]]
            out = self.beta_apply(sol, args)
            return _flag_inferred(out) if t.inferred else out
        bound = tuple(
            replace(
                e,
                type=self.inst(e.type) if e.type is not None else None,
                definiens=self.inst(e.definiens) if e.definiens is not None else None,
            )
            for e in t.bound
        )
        args = tuple(self.inst(a) for a in t.args)
        if bound == t.bound and args == t.args:
            return t
        return replace(t, bound=bound, args=args)

    def beta_apply(self, f: Term, args: Iterable[Term]) -> Term:
        rest = list(args)
        bh = self.rules.binder_head
        while (
            rest
            and isinstance(f, Complex)
            and f.head == bh
            and len(f.bound) == 1
            and len(f.args) == 1
        ):
            f = substitute(f.args[0], {f.bound[0].name: rest.pop(0)})
        if not rest:
            return f
        return self.spine(f, *rest)

    def spine(self, f: Term, *args: Term) -> Term:
        """Application keeping spines flat."""
        if isinstance(f, Complex) and f.head == self.rules.spine_head and not f.bound:
            return Complex(self.rules.spine_head, (), f.args + tuple(args))
        return Complex(self.rules.spine_head, (), (f,) + tuple(args))

    def spend_fuel(self) -> None:
        if self.fuel <= 0:
            raise _OutOfFuel()
        self.fuel -= 1

    def whnf(self, t: Term) -> Term:
        """Instantiate and rewrite at the head until no rule applies."""
        t = self.inst(t)
        while True:
            out = None
            for rule in self.rules.rewrites:
                out = rule(self, t)
                if out is not None:
                    break
            if out is None:
                return t
            self.spend_fuel()
            t = self.inst(out)

    def normalize(self, t: Term) -> Term:
        """Full normalization, leftmost-innermost, first matching rule."""
        t = self.inst(t)
        if isinstance(t, Complex):
            bound = tuple(
                replace(
                    e,
                    type=self.normalize(e.type) if e.type is not None else None,
                    definiens=self.normalize(e.definiens)
                    if e.definiens is not None
                    else None,
                )
                for e in t.bound
            )
            args = tuple(self.normalize(a) for a in t.args)
            if bound != t.bound or args != t.args:
                t = replace(t, bound=bound, args=args)
        for rule in self.rules.rewrites:
            out = rule(self, t)
            if out is not None:
                self.spend_fuel()
                return self.normalize(out)
        return t

    # --- lookups ------------------------------------------------------------

    def lookup_type(self, qname: str) -> Outcome:
        hit = self._lookup(qname)
        if hit is None:
            # record the slots that could later supply the type, so change
            # propagation reaches this unit when the constant appears
            self.deps.add(f"{qname}!tp")
            self.deps.add(f"{qname}!df")
            return (
                "error",
                f"constant '{qname_local(qname)}' has no validated type here",
            )
        slot_id, tp = hit
        self.deps.add(slot_id)
        return ("ok", tp, [])

    # --- goals ---------------------------------------------------------------

    def render(self, t: Term) -> str:
        return render_term(self.inst(t), self.table)

    def describe(self, judgment: object) -> str:
        if isinstance(judgment, SortCheck):
            return f"{self.render(judgment.term)} is a sort"
        j = judgment
        if isinstance(j, Typing):
            j = replace(j, subject=self.inst(j.subject), expected=self.inst(j.expected))
        elif isinstance(j, Equal):
            j = replace(j, left=self.inst(j.left), right=self.inst(j.right))
        elif isinstance(j, Inhabitable):
            j = replace(j, term=self.inst(j.term))
        return describe_judgment(j, self.table)

    def push(
        self,
        judgment: object,
        ctx: Context,
        ref: Optional[SourceRef],
        parent: Optional[Goal],
    ) -> None:
        if ref is None and parent is not None:
            ref = parent.source_ref
        log = (parent.log if parent else ()) + (self.describe(judgment),)
        self.queue.append(Goal(judgment, ctx, ref, log))

    def error(self, goal: Goal, message: str) -> None:
        self.problems.append(Problem(message, goal.source_ref, "error", goal.log))

    def record_hole(
        self, goal: Goal, declared: Term, ref: Optional[SourceRef] = None
    ) -> None:
        if ref is None:
            ref = goal.source_ref
        key = ref if ref is not None else len(self.holes)
        self.holes[key] = HoleRecord(ref, self.theory, self.slot, goal.ctx, declared)

    # --- the loop -------------------------------------------------------------

    def run(self) -> None:
        while self.queue:
            progress = False
            for _ in range(len(self.queue)):
                goal = self.queue.popleft()
                try:
                    consumed = self.step(goal)
                except _OutOfFuel:
                    self.error(goal, "rewriting did not terminate")
                    consumed = True
                if consumed:
                    progress = True
                else:
                    self.queue.append(goal)
            if not progress:
                break
        for goal in self.queue:
            self.error(goal, f"unsolved constraint: {self.describe(goal.judgment)}")
        self.queue.clear()

    def step(self, goal: Goal) -> bool:
        j = goal.judgment
        if isinstance(j, SortCheck):
            return self.step_sort(goal, j)
        if isinstance(j, Inhabitable):
            return self.step_inhabitable(goal, j)
        if isinstance(j, Typing):
            return self.step_typing(goal, j)
        if isinstance(j, Equal):
            return self.step_equal(goal, j)
        self.error(goal, f"no rule for judgment kind {type(j).__name__}")
        return True

    def apply_outcome(self, goal: Goal, out: Outcome) -> bool:
        tag = out[0]
        if tag == "solved":
            return True
        if tag == "blocked":
            return False
        if tag == "error":
            self.error(goal, out[1])
            return True
        assert tag == "done", out
        for judgment, ctx, ref in out[1]:
            self.push(judgment, ctx, ref, goal)
        return True

    def step_sort(self, goal: Goal, j: SortCheck) -> bool:
        t = self.whnf(j.term)
        if isinstance(t, ConstRef) and t.name in self.rules.sorts:
            return True
        if self.meta_headed(t):
            return False
        self.error(goal, f"not a valid sort: {self.render(t)}")
        return True

    def step_inhabitable(self, goal: Goal, j: Inhabitable) -> bool:
        hook = self.rules.inhabitable
        if hook is None:
            self.problems.append(
                Problem(
                    f"no inhabitability rule installed; accepting {self.render(j.term)}",
                    goal.source_ref,
                    "warning",
                    goal.log,
                )
            )
            return True
        return self.apply_outcome(goal, hook(self, goal, self.whnf(j.term)))

    def step_typing(self, goal: Goal, j: Typing) -> bool:
        subject = self.whnf(j.subject)
        expected = self.whnf(j.expected)
        rule = self.rules.checking.get(_head_of(expected))
        if rule is not None:
            return self.apply_outcome(goal, rule(self, goal, subject, expected))
        out = self.infer(goal, subject)
        if out[0] != "ok":
            return self.apply_outcome(goal, out)
        _, inferred, subgoals = out
        for judgment, ctx, ref in subgoals:
            self.push(judgment, ctx, ref, goal)
        self.push(Equal(j.theory, inferred, expected), goal.ctx, goal.source_ref, goal)
        return True

    def infer(self, goal: Goal, t: Term) -> Outcome:
        """Shallow type inference: dispatches one head to its rule and
        returns ('ok', type, subgoals) without pushing anything, so a
        blocked retry repeats no work."""
        t = self.whnf(t)
        if isinstance(t, VarRef):
            if t.name in self.gamma:
                ty = self.gamma[t.name]
                return ("blocked",) if ty is None else ("ok", self.inst(ty), [])
            for e in reversed(goal.ctx):
                if e.name == t.name:
                    if e.type is None:
                        return ("error", f"variable {t.name} has no declared type")
                    return ("ok", self.inst(e.type), [])
            return ("error", f"unbound variable {t.name}")
        if isinstance(t, ConstRef):
            rule = self.rules.inference.get(t.name)
            if rule is not None:
                return rule(self, goal, t)
            return self.lookup_type(t.name)
        rule = self.rules.inference.get(t.head)
        if rule is None:
            return ("error", f"no inference rule for head '{qname_local(t.head)}'")
        return rule(self, goal, t)

    def step_equal(self, goal: Goal, j: Equal) -> bool:
        l = self.whnf(j.left)
        r = self.whnf(j.right)
        for rule in self.rules.solutions:
            hit = rule(self, goal, l, r) or rule(self, goal, r, l)
            if hit is not None:
                self.bind(*hit)
                return True
        if j.at is not None:
            eq = self.rules.equality.get(_head_of(self.whnf(j.at)))
            if eq is not None:
                return self.apply_outcome(goal, eq(self, goal, l, r, j.at))
        if alpha_equal(l, r):
            return True
        bh = self.rules.binder_head
        l_binds = _is_binder(l, bh)
        r_binds = _is_binder(r, bh)
        if l_binds != r_binds and (l_binds or r_binds):
            # eta: compare the binder's body against the other side applied
            lam, other = (l, r) if l_binds else (r, l)
            entry = lam.bound[0]
            applied = self.spine(other, VarRef(entry.name))
            left, right = (lam.args[0], applied) if l_binds else (applied, lam.args[0])
            self.push(
                Equal(j.theory, left, right),
                goal.ctx + (entry,),
                goal.source_ref,
                goal,
            )
            return True
        if isinstance(l, Complex) and isinstance(r, Complex) and l.head == r.head:
            return self.congruence(goal, j, l, r)
        if self.meta_headed(l) or self.meta_headed(r):
            return False
        self.error(goal, f"found {self.render(l)}, expected {self.render(r)}")
        return True

    def congruence(self, goal: Goal, j: Equal, l: Complex, r: Complex) -> bool:
        if len(l.bound) != len(r.bound) or len(l.args) != len(r.args):
            if self.meta_headed(l) or self.meta_headed(r):
                return False
            self.error(goal, f"found {self.render(l)}, expected {self.render(r)}")
            return True
        ctx = goal.ctx
        ren: dict[str, Term] = {}
        for el, er in zip(l.bound, r.bound):
            er_type = substitute(er.type, ren) if er.type is not None else None
            if (el.type is None) != (er_type is None):
                self.error(goal, f"found {self.render(l)}, expected {self.render(r)}")
                return True
            if el.type is not None:
                self.push(
                    Equal(j.theory, el.type, er_type),
                    ctx,
                    _ref_of(el.type, goal.source_ref),
                    goal,
                )
            ctx = ctx + (el,)
            if er.name != el.name:
                ren[er.name] = VarRef(el.name)
        for al, ar in zip(l.args, r.args):
            self.push(
                Equal(j.theory, al, substitute(ar, ren) if ren else ar),
                ctx,
                _ref_of(al, goal.source_ref),
                goal,
            )
        return True

    # --- results ------------------------------------------------------------

    def finalize(self, task: CheckTask) -> SolveResult:
        substitution: dict[str, Term] = {}
        solved: dict[str, bool] = {}
        problems = list(task.parse_errors) + self.problems
        for name in self.meta_order:
            if name in self.sigma:
                solved[name] = True
                substitution[name] = _flag_inferred(self.inst(self.sigma[name]))
            else:
                solved[name] = False
                if not name.startswith(ERROR_META_PREFIX):
                    problems.append(
                        Problem(
                            f"could not infer a value for {name}",
                            task.source_ref,
                            "error",
                            (),
                        )
                    )
        j = task.judgment
        subject = _subject_of(j)
        expected = self.inst(j.expected) if isinstance(j, Typing) else None
        holes = tuple(
            replace(
                h,
                ctx=tuple(
                    replace(
                        e,
                        type=self.inst(e.type) if e.type is not None else None,
                    )
                    for e in h.ctx
                ),
                expected=self.inst(h.expected),
            )
            for h in self.holes.values()
        )
        ok = not any(p.severity == "error" for p in problems)
        return SolveResult(
            slot=task.slot,
            ok=ok,
            substitution=substitution,
            solved=solved,
            problems=tuple(problems),
            dependencies=frozenset(self.deps) - {task.slot},
            elaborated=self.inst(subject),
            expected=expected,
            holes=holes,
        )


def _flag_inferred(t: Term) -> Term:
    return t if t.inferred else replace(t, inferred=True)


def _head_of(t: Term) -> Optional[str]:
    if isinstance(t, Complex):
        return t.head
    if isinstance(t, ConstRef):
        return t.name
    return None


def _is_binder(t: Term, binder_head: Optional[str]) -> bool:
    return (
        isinstance(t, Complex)
        and t.head == binder_head
        and len(t.bound) == 1
        and len(t.args) == 1
    )


def _ref_of(t: Term, fallback: Optional[SourceRef]) -> Optional[SourceRef]:
    ref = getattr(t, "source_ref", None)
    return ref if ref is not None else fallback


def _subject_of(j: object) -> Term:
    if isinstance(j, Typing):
        return j.subject
    if isinstance(j, (Inhabitable, SortCheck)):
        return j.term
    assert isinstance(j, Equal), j
    return j.left


def solve(
    task: CheckTask,
    rules: RuleSet,
    lookup: Lookup,
    table: NotationTable,
    root_ctx: Context = (),
) -> SolveResult:
    s = Solver(rules, task.theory, table, task.metas, lookup, task.slot)
    j = task.judgment
    s.push(j, root_ctx, _ref_of(_subject_of(j), task.source_ref), None)
    s.run()
    return s.finalize(task)


def unify(
    left: Term,
    right: Term,
    metas: Context,
    *,
    theory: str,
    rules: RuleSet,
    lookup: Lookup,
    table: NotationTable,
    ctx: Context = (),
) -> Optional[dict[str, Term]]:
    """Solve left = right for the given metas; None unless every meta gets
    a value without errors."""
    s = Solver(rules, theory, table, metas, lookup)
    s.push(Equal(theory, left, right), ctx, None, None)
    s.run()
    if any(p.severity == "error" for p in s.problems):
        return None
    if any(e.name not in s.sigma for e in metas):
        return None
    return {e.name: s.inst(s.sigma[e.name]) for e in metas}


# --- whole-library driver ----------------------------------------------------


@dataclass(frozen=True)
class LibraryResult:
    validation: Validation
    results: dict[str, SolveResult]  # by slot id
    types: dict[str, Term]  # constant qname -> validated type
    type_slots: dict[str, str]  # constant qname -> slot that produced the type
    problems: tuple[Problem, ...]

    @property
    def ok(self) -> bool:
        return not any(p.severity == "error" for p in self.problems)


def check_library(validation: Validation, rules: RuleSet) -> LibraryResult:
    types: dict[str, tuple[str, Term]] = {}
    results: dict[str, SolveResult] = {}
    problems: list[Problem] = list(validation.problems)
    for task in validation.tasks:
        qname = task.slot.rsplit("!", 1)[0]

        def lookup(q: str, _self=qname, _types=types):
            # a constant may not look itself up while being validated
            if q == _self:
                return None
            return _types.get(q)

        res = solve(task, rules, lookup, validation.tables[task.theory])
        results[task.slot] = res
        problems.extend(res.problems)
        if res.ok and qname not in types:
            if task.type_meta is not None:
                sol = res.substitution.get(task.type_meta)
                if sol is not None:
                    types[qname] = (task.slot, sol)
            elif task.slot.endswith("!tp"):
                types[qname] = (task.slot, res.elaborated)
    return LibraryResult(
        validation,
        results,
        {q: t for q, (_, t) in types.items()},
        {q: s for q, (s, _) in types.items()},
        tuple(problems),
    )


def erases_to(elaborated: Term, parsed: Term, metas: frozenset[str], spine_head: str) -> bool:
    """Does the elaborated term have the parsed term's structure once
    substituted meta-occurrences are erased back to their metas?"""

    def occurrence(t: Term) -> bool:
        if isinstance(t, VarRef) and t.name in metas:
            return True
        return (
            isinstance(t, Complex)
            and t.head == spine_head
            and bool(t.args)
            and isinstance(t.args[0], VarRef)
            and t.args[0].name in metas
        )

    def walk(e: Term, p: Term) -> bool:
        if occurrence(p):
            return True
        if isinstance(p, VarRef):
            return isinstance(e, VarRef) and e.name == p.name
        if isinstance(p, ConstRef):
            return isinstance(e, ConstRef) and e.name == p.name
        if not isinstance(e, Complex):
            return False
        if e.head != p.head or len(e.bound) != len(p.bound) or len(e.args) != len(p.args):
            return False
        for ee, pe in zip(e.bound, p.bound):
            if ee.name != pe.name:
                return False
            if (pe.type is None) != (ee.type is None):
                return False
            if pe.type is not None and not walk(ee.type, pe.type):
                return False
        return all(walk(ea, pa) for ea, pa in zip(e.args, p.args))

    return walk(elaborated, parsed)
