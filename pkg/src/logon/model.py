"""Core data model: source-tracked terms, contexts, notations, judgments.

Everything here is an immutable value.  Terms come in exactly three shapes:
constant references, variable references, and complex terms (a head constant
binding a context and taking arguments), which subsume binding and
application.  Meta-variables are context variables whose names start with
``/``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Mapping, Optional, Union

META_PREFIX = "/"
# Parse-error placeholders are metas too; they keep broken spans well-scoped.
ERROR_META_PREFIX = "/!"


def qname_join(theory: str, name: str) -> str:
    return f"{theory}?{name}"


def qname_theory(qname: str) -> str:
    return qname.split("?", 1)[0] if "?" in qname else ""


def qname_local(qname: str) -> str:
    return qname.split("?", 1)[1] if "?" in qname else qname


@dataclass(frozen=True)
class SourceRef:
    """Half-open region [start, end) of codepoint offsets in a source file."""

    file: str
    start: int
    end: int

    def contains(self, start: int, end: int) -> bool:
        return self.start <= start and end <= self.end

    def shifted(self, delta: int) -> "SourceRef":
        return SourceRef(self.file, self.start + delta, self.end + delta)


@dataclass(frozen=True)
class Problem:
    """A collected (never raised) error or warning with a source region and,
    for validation failures, the derivation branch that led to it."""

    message: str
    source_ref: Optional[SourceRef] = None
    severity: str = "error"
    log: tuple[str, ...] = ()


@dataclass(frozen=True)
class ConstRef:
    name: str  # qualified: "Theory?const"
    source_ref: Optional[SourceRef] = None
    inferred: bool = False


@dataclass(frozen=True)
class VarRef:
    name: str
    source_ref: Optional[SourceRef] = None
    inferred: bool = False


@dataclass(frozen=True)
class ContextEntry:
    name: str
    type: Optional["Term"] = None
    definiens: Optional["Term"] = None


Context = tuple[ContextEntry, ...]


@dataclass(frozen=True)
class Complex:
    head: str  # qualified name of the head constant
    bound: Context = ()
    args: tuple["Term", ...] = ()
    source_ref: Optional[SourceRef] = None
    inferred: bool = False


Term = Union[ConstRef, VarRef, Complex]


def is_meta_name(name: str) -> bool:
    return name.startswith(META_PREFIX)


def is_hole(t: Term) -> bool:
    return (
        isinstance(t, Complex)
        and qname_local(t.head) == "hole"
        and not t.bound
        and len(t.args) == 1
    )


def hole_type(t: Term) -> Term:
    assert is_hole(t)
    return t.args[0]


# --- notations ---------------------------------------------------------


@dataclass(frozen=True)
class Delimiter:
    text: str


@dataclass(frozen=True)
class ArgMarker:
    index: int
    sequence: bool = False


@dataclass(frozen=True)
class VarMarker:
    index: int
    sequence: bool = False


Marker = Union[Delimiter, ArgMarker, VarMarker]


@dataclass(frozen=True)
class Notation:
    """Mixfix template.  Marker indices count bound variables first, then
    arguments; an argument position absent from the template is implicit."""

    markers: tuple[Marker, ...]
    precedence: int = 0

    @property
    def binding_arity(self) -> int:
        return max((m.index for m in self.markers if isinstance(m, VarMarker)), default=0)

    @property
    def arity(self) -> int:
        return max((m.index for m in self.markers if not isinstance(m, Delimiter)), default=0)

    def explicit_positions(self) -> tuple[int, ...]:
        return tuple(m.index for m in self.markers if isinstance(m, ArgMarker))

    def implicit_positions(self) -> tuple[int, ...]:
        seen = set(self.explicit_positions())
        return tuple(
            i for i in range(self.binding_arity + 1, self.arity + 1) if i not in seen
        )

    def delimiters(self) -> tuple[str, ...]:
        return tuple(m.text for m in self.markers if isinstance(m, Delimiter))


# --- declarations ------------------------------------------------------


@dataclass(frozen=True)
class Constant:
    """A validated constant declaration c[:A][=t][#N]."""

    name: str  # local name
    type: Optional[Term] = None
    definiens: Optional[Term] = None
    notation: Optional[Notation] = None
    source_ref: Optional[SourceRef] = None


@dataclass(frozen=True)
class Theory:
    name: str
    includes: tuple[str, ...] = ()
    constants: tuple[Constant, ...] = ()

    def constant(self, local: str) -> Optional[Constant]:
        for c in self.constants:
            if c.name == local:
                return c
        return None


# --- judgments ---------------------------------------------------------


@dataclass(frozen=True)
class Inhabitable:
    theory: str
    term: Term


@dataclass(frozen=True)
class Typing:
    theory: str
    subject: Term
    expected: Term


@dataclass(frozen=True)
class Equal:
    theory: str
    left: Term
    right: Term
    at: Optional[Term] = None


Judgment = Union[Inhabitable, Typing, Equal]


# --- term operations ----------------------------------------------------


def equals_structural(a: Optional[Term], b: Optional[Term]) -> bool:
    """Structural equality erasing sourceRefs and inferred-flags.  Binder
    names compare literally; there is no alpha-renaming here."""
    if a is None or b is None:
        return a is b
    if isinstance(a, ConstRef):
        return isinstance(b, ConstRef) and a.name == b.name
    if isinstance(a, VarRef):
        return isinstance(b, VarRef) and a.name == b.name
    if not isinstance(b, Complex):
        return False
    if a.head != b.head or len(a.bound) != len(b.bound) or len(a.args) != len(b.args):
        return False
    for ea, eb in zip(a.bound, b.bound):
        if ea.name != eb.name:
            return False
        if not equals_structural(ea.type, eb.type):
            return False
        if not equals_structural(ea.definiens, eb.definiens):
            return False
    return all(equals_structural(x, y) for x, y in zip(a.args, b.args))


def alpha_equal(a: Term, b: Term, _env: Optional[dict[str, str]] = None) -> bool:
    """Structural equality modulo renaming of bound variables."""
    env = _env or {}
    if isinstance(a, ConstRef):
        return isinstance(b, ConstRef) and a.name == b.name
    if isinstance(a, VarRef):
        return isinstance(b, VarRef) and env.get(a.name, a.name) == b.name
    if not isinstance(b, Complex):
        return False
    if a.head != b.head or len(a.bound) != len(b.bound) or len(a.args) != len(b.args):
        return False
    inner = dict(env)
    for ea, eb in zip(a.bound, b.bound):
        ta, tb = ea.type, eb.type
        if (ta is None) != (tb is None) or (ta is not None and not alpha_equal(ta, tb, inner)):
            return False
        da, db = ea.definiens, eb.definiens
        if (da is None) != (db is None) or (da is not None and not alpha_equal(da, db, inner)):
            return False
        inner[ea.name] = eb.name
    return all(alpha_equal(x, y, inner) for x, y in zip(a.args, b.args))


def free_vars(t: Term) -> frozenset[str]:
    if isinstance(t, VarRef):
        return frozenset((t.name,))
    if isinstance(t, ConstRef):
        return frozenset()
    out: set[str] = set()
    bound: set[str] = set()
    for e in t.bound:
        if e.type is not None:
            out |= free_vars(e.type) - bound
        if e.definiens is not None:
            out |= free_vars(e.definiens) - bound
        bound.add(e.name)
    for a in t.args:
        out |= free_vars(a) - bound
    return frozenset(out)


def all_names(t: Term) -> frozenset[str]:
    """Every variable or binder name occurring anywhere; used to pick fresh
    names that cannot capture."""
    if isinstance(t, VarRef):
        return frozenset((t.name,))
    if isinstance(t, ConstRef):
        return frozenset()
    out: set[str] = set()
    for e in t.bound:
        out.add(e.name)
        if e.type is not None:
            out |= all_names(e.type)
        if e.definiens is not None:
            out |= all_names(e.definiens)
    for a in t.args:
        out |= all_names(a)
    return frozenset(out)


def fresh_name(base: str, avoid: frozenset[str]) -> str:
    if base not in avoid:
        return base
    i = 1
    while f"{base}{i}" in avoid:
        i += 1
    return f"{base}{i}"


def substitute(t: Term, sub: Mapping[str, Term]) -> Term:
    """Capture-avoiding simultaneous substitution.  Unchanged subterms are
    returned as-is (pointer-equal); substituted-in values keep their own
    sourceRefs.  Captured binders are renamed with a numeric suffix."""
    if not sub:
        return t
    if isinstance(t, VarRef):
        return sub.get(t.name, t)
    if isinstance(t, ConstRef):
        return t
    eff: dict[str, Term] = {k: v for k, v in sub.items() if k in free_vars(t)}
    if not eff:
        return t
    avoid = all_names(t)
    for v in eff.values():
        avoid |= all_names(v)
    new_entries: list[ContextEntry] = []
    changed = False
    for e in t.bound:
        nty = substitute(e.type, eff) if e.type is not None else None
        ndf = substitute(e.definiens, eff) if e.definiens is not None else None
        eff.pop(e.name, None)
        name = e.name
        if eff and any(name in free_vars(v) for v in eff.values()):
            name = fresh_name(name, avoid)
            avoid = avoid | {name}
            eff[e.name] = VarRef(name)
        if name != e.name or nty is not e.type or ndf is not e.definiens:
            changed = True
        new_entries.append(ContextEntry(name, nty, ndf))
    new_args = tuple(substitute(a, eff) if eff else a for a in t.args)
    if not changed and all(na is a for na, a in zip(new_args, t.args)):
        return t
    return replace(t, bound=tuple(new_entries), args=new_args)


PathStep = str  # "arg:<i>" | "bound:<i>:type" | "bound:<i>:def"


def children_with_paths(t: Term) -> Iterator[tuple[PathStep, Term]]:
    if not isinstance(t, Complex):
        return
    for i, e in enumerate(t.bound):
        if e.type is not None:
            yield f"bound:{i}:type", e.type
        if e.definiens is not None:
            yield f"bound:{i}:def", e.definiens
    for i, a in enumerate(t.args):
        yield f"arg:{i}", a


def at_path(t: Term, path: list[PathStep]) -> Optional[Term]:
    cur = t
    for step in path:
        nxt = None
        for s, child in children_with_paths(cur):
            if s == step:
                nxt = child
                break
        if nxt is None:
            return None
        cur = nxt
    return cur


def subterm_at(t: Term, start: int, end: int) -> Optional[tuple[Term, list[PathStep]]]:
    """Deepest subterm whose sourceRef contains [start, end); ties between
    identical regions go to the deeper node.  None if outside the root."""
    if t.source_ref is None or not t.source_ref.contains(start, end):
        return None
    best: tuple[Term, list[PathStep]] = (t, [])
    for step, child in children_with_paths(t):
        hit = subterm_at(child, start, end)
        if hit is not None:
            best = (hit[0], [step] + hit[1])
    return best


def subterms_with_paths(t: Term) -> Iterator[tuple[list[PathStep], Term]]:
    """Every subterm, preorder, including binder types and definientia."""
    yield [], t
    for step, child in children_with_paths(t):
        for path, s in subterms_with_paths(child):
            yield [step] + path, s


def nearest_source_ref(root: Term, path: list[PathStep]) -> Optional[SourceRef]:
    """SourceRef of the node at path, or of its nearest ancestor that has
    one (inferred material resolves to visible source)."""
    refs: list[Optional[SourceRef]] = [root.source_ref]
    cur = root
    for step in path:
        nxt = at_path(cur, [step])
        if nxt is None:
            break
        refs.append(nxt.source_ref)
        cur = nxt
    for r in reversed(refs):
        if r is not None:
            return r
    return None


def well_scoped(t: Term, bound: frozenset[str], constants: frozenset[str]) -> list[str]:
    """Names of out-of-scope references (empty means well-scoped)."""
    bad: list[str] = []
    if isinstance(t, VarRef):
        if t.name not in bound:
            bad.append(t.name)
        return bad
    if isinstance(t, ConstRef):
        if t.name not in constants:
            bad.append(t.name)
        return bad
    inner = bound
    for e in t.bound:
        if e.type is not None:
            bad += well_scoped(e.type, inner, constants)
        if e.definiens is not None:
            bad += well_scoped(e.definiens, inner, constants)
        inner = inner | {e.name}
    for a in t.args:
        bad += well_scoped(a, inner, constants)
    return bad


# --- serialization ------------------------------------------------------
# Field names are pinned in docs/format.md; the round-trip is lossless.


def ref_to_json(r: Optional[SourceRef], default_file: str) -> object:
    if r is None:
        return None
    if r.file == default_file:
        return [r.start, r.end]
    return [r.file, r.start, r.end]


def ref_from_json(v: object, default_file: str) -> Optional[SourceRef]:
    if v is None:
        return None
    assert isinstance(v, list)
    if len(v) == 2:
        return SourceRef(default_file, v[0], v[1])
    return SourceRef(v[0], v[1], v[2])


def term_to_json(t: Term, default_file: str = "") -> dict:
    d: dict = {}
    if isinstance(t, ConstRef):
        d = {"k": "const", "name": t.name}
    elif isinstance(t, VarRef):
        d = {"k": "var", "name": t.name}
    else:
        d = {
            "k": "complex",
            "head": t.head,
            "bound": [entry_to_json(e, default_file) for e in t.bound],
            "args": [term_to_json(a, default_file) for a in t.args],
        }
    if t.source_ref is not None:
        d["ref"] = ref_to_json(t.source_ref, default_file)
    if t.inferred:
        d["inf"] = True
    return d


def entry_to_json(e: ContextEntry, default_file: str = "") -> dict:
    d: dict = {"name": e.name}
    if e.type is not None:
        d["type"] = term_to_json(e.type, default_file)
    if e.definiens is not None:
        d["def"] = term_to_json(e.definiens, default_file)
    return d


def term_from_json(d: dict, default_file: str = "") -> Term:
    ref = ref_from_json(d.get("ref"), default_file)
    inf = bool(d.get("inf", False))
    k = d["k"]
    if k == "const":
        return ConstRef(d["name"], ref, inf)
    if k == "var":
        return VarRef(d["name"], ref, inf)
    return Complex(
        d["head"],
        tuple(entry_from_json(e, default_file) for e in d["bound"]),
        tuple(term_from_json(a, default_file) for a in d["args"]),
        ref,
        inf,
    )


def entry_from_json(d: dict, default_file: str = "") -> ContextEntry:
    return ContextEntry(
        d["name"],
        term_from_json(d["type"], default_file) if "type" in d else None,
        term_from_json(d["def"], default_file) if "def" in d else None,
    )


def notation_to_json(n: Notation) -> dict:
    ms = []
    for m in n.markers:
        if isinstance(m, Delimiter):
            ms.append({"m": "delim", "text": m.text})
        elif isinstance(m, ArgMarker):
            ms.append({"m": "arg", "n": m.index, "seq": m.sequence})
        else:
            ms.append({"m": "var", "n": m.index, "seq": m.sequence})
    return {"markers": ms, "prec": n.precedence}


def notation_from_json(d: dict) -> Notation:
    ms: list[Marker] = []
    for m in d["markers"]:
        if m["m"] == "delim":
            ms.append(Delimiter(m["text"]))
        elif m["m"] == "arg":
            ms.append(ArgMarker(m["n"], m["seq"]))
        else:
            ms.append(VarMarker(m["n"], m["seq"]))
    return Notation(tuple(ms), d["prec"])


def judgment_to_json(j: Judgment, default_file: str = "") -> dict:
    if isinstance(j, Inhabitable):
        return {"j": "inhabitable", "theory": j.theory, "term": term_to_json(j.term, default_file)}
    if isinstance(j, Typing):
        return {
            "j": "typing",
            "theory": j.theory,
            "subject": term_to_json(j.subject, default_file),
            "expected": term_to_json(j.expected, default_file),
        }
    return {
        "j": "equal",
        "theory": j.theory,
        "left": term_to_json(j.left, default_file),
        "right": term_to_json(j.right, default_file),
        "at": term_to_json(j.at, default_file) if j.at is not None else None,
    }


def judgment_from_json(d: dict, default_file: str = "") -> Judgment:
    if d["j"] == "inhabitable":
        return Inhabitable(d["theory"], term_from_json(d["term"], default_file))
    if d["j"] == "typing":
        return Typing(
            d["theory"],
            term_from_json(d["subject"], default_file),
            term_from_json(d["expected"], default_file),
        )
    return Equal(
        d["theory"],
        term_from_json(d["left"], default_file),
        term_from_json(d["right"], default_file),
        term_from_json(d["at"], default_file) if d.get("at") is not None else None,
    )
