"""Notation-driven term parsing.

A :class:`NotationTable` collects every notation visible in a theory
(own constants plus transitive includes).  :func:`parse_unit` turns one
unparsed component into a term over that table, producing

* fresh meta-variables ``/X1, /X2, ...`` for implicit argument positions
  and omitted binder types, each raised over the binders enclosing its
  insertion point (the occurrence is an application spine over them),
* per-node SourceRefs in codepoint offsets, ``inferred`` on every
  synthesized node,
* collected errors with placeholder metas ``/!n`` so the result term is
  always well-scoped, never an exception.

Extent conventions (see the renderer for the inverse):

* juxtaposition is application, flattened into n-ary spines;
* visible arguments of prefix notations parse tightly (one step above
  application), except an argument bounded by a following delimiter or
  the trailing argument of a binder notation, which parse maximally;
* infix chains of the same operator follow its associativity: right for
  binder notations and untyped framework symbols, left otherwise;
  mixing distinct operators of equal precedence is an error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Union

from .document import Document, ParsingUnit, TheoryDecl
from .model import (
    ArgMarker,
    Complex,
    ConstRef,
    Context,
    ContextEntry,
    Delimiter,
    ERROR_META_PREFIX,
    META_PREFIX,
    Notation,
    Problem,
    SourceRef,
    Term,
    Theory,
    VarMarker,
    VarRef,
    fresh_name,
    qname_join,
    qname_local,
)

# Grouping and binder-type annotation are built into the grammar.
_BUILTIN_SYMS = ("(", ")", ":")

# Tight-argument precedence when the table has no application notation.
_NO_APPLY_TIGHT = 1_000_000


def _is_word_char(ch: str) -> bool:
    return ch.isalnum() or ch in "_'"


@dataclass(frozen=True)
class Token:
    text: str
    start: int  # absolute codepoint offset
    end: int
    word: bool


def tokenize(text: str, base: int, sym_delims: Sequence[str]) -> list[Token]:
    """Split term text.  Word characters clump; symbolic delimiters match
    longest-first; ``//`` comments count as whitespace.  Offsets are
    absolute (base + local index)."""
    out: list[Token] = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        if ch == "/" and text.startswith("//", i):
            j = text.find("\n", i)
            i = n if j < 0 else j + 1
            continue
        if ch.isspace():
            i += 1
            continue
        if _is_word_char(ch):
            j = i + 1
            while j < n and _is_word_char(text[j]):
                j += 1
            out.append(Token(text[i:j], base + i, base + j, True))
            i = j
            continue
        for d in sym_delims:
            if text.startswith(d, i):
                out.append(Token(d, base + i, base + i + len(d), False))
                i += len(d)
                break
        else:
            out.append(Token(ch, base + i, base + i + 1, False))
            i += 1
    return out


@dataclass(frozen=True)
class TableEntry:
    qname: str
    notation: Optional[Notation]
    primitive: bool  # no type and no definiens: a framework symbol


@dataclass(frozen=True)
class TheorySig:
    """What term parsing needs to know about one theory."""

    name: str
    includes: tuple[str, ...]
    constants: tuple[TableEntry, ...]


def sig_from_declaration(decl: TheoryDecl) -> TheorySig:
    return TheorySig(
        decl.name,
        tuple(inc.target for inc in decl.includes),
        tuple(
            TableEntry(qname_join(decl.name, c.name), c.notation, c.is_primitive)
            for c in decl.constants
        ),
    )


def sigs_from_documents(docs: Iterable[Document]) -> dict[str, TheorySig]:
    sigs: dict[str, TheorySig] = {}
    for doc in docs:
        for th in doc.theories:
            sigs[th.name] = sig_from_declaration(th)
    return sigs


def sig_from_theory(theory: Theory) -> TheorySig:
    return TheorySig(
        theory.name,
        tuple(theory.includes),
        tuple(
            TableEntry(
                qname_join(theory.name, c.name),
                c.notation,
                c.type is None and c.definiens is None,
            )
            for c in theory.constants
        ),
    )


class NotationTable:
    """Notations visible in one theory, indexed for parsing."""

    def __init__(self, theory: str, order: Sequence[TableEntry]):
        self.theory = theory
        self.entries: dict[str, TableEntry] = {}
        self.by_qname: dict[str, TableEntry] = {}
        self.prefix: dict[str, list[TableEntry]] = {}
        self.infix: dict[str, list[TableEntry]] = {}
        self.apply: Optional[TableEntry] = None
        delims: set[str] = set()
        for e in order:
            self.entries[qname_local(e.qname)] = e
            self.by_qname[e.qname] = e
            nt = e.notation
            if nt is None or not nt.markers:
                continue
            delims.update(nt.delimiters())
            m0 = nt.markers[0]
            if isinstance(m0, Delimiter):
                self.prefix.setdefault(m0.text, []).append(e)
            elif (
                isinstance(m0, ArgMarker)
                and len(nt.markers) >= 2
                and isinstance(nt.markers[1], Delimiter)
            ):
                self.infix.setdefault(nt.markers[1].text, []).append(e)
            elif (
                len(nt.markers) == 2
                and all(isinstance(m, ArgMarker) and not m.sequence for m in nt.markers)
                and nt.markers[0].index == 1
                and nt.markers[1].index == 2
            ):
                if self.apply is None:
                    self.apply = e
            # anything else (leading variable marker, ...) resolves by bare name only
        self.delimiters = frozenset(delims)
        self.sym_delims = tuple(
            sorted(
                {d for d in delims if not all(_is_word_char(c) for c in d)}
                | set(_BUILTIN_SYMS),
                key=len,
                reverse=True,
            )
        )

    @staticmethod
    def for_theory(name: str, sigs: Mapping[str, TheorySig]) -> "NotationTable":
        """Include-closure table; the theory's own names shadow included ones.
        Missing include targets are skipped here (the validator reports them)."""
        seen: set[str] = set()
        order: list[TableEntry] = []

        def visit(n: str) -> None:
            if n in seen:
                return
            seen.add(n)
            sig = sigs.get(n)
            if sig is None:
                return
            for inc in sig.includes:
                visit(inc)
            order.extend(sig.constants)

        visit(name)
        return NotationTable(name, order)


@dataclass(frozen=True)
class ParseResult:
    term: Term
    metas: Context  # fresh meta-variables, in creation order
    errors: tuple[Problem, ...]


def parse_unit(unit: ParsingUnit, table: NotationTable) -> ParseResult:
    return parse_term_text(
        unit.text, table, file=unit.source_ref.file, base=unit.source_ref.start
    )


def parse_term_text(
    text: str,
    table: NotationTable,
    *,
    file: str = "<term>",
    base: int = 0,
    ambient: Sequence[str] = (),
) -> ParseResult:
    """Parse free-standing term text (search queries, tests).  ``ambient``
    names resolve as free variables; metas are not raised over them."""
    toks = tokenize(text, base, table.sym_delims)
    p = _Parser(toks, table, file, base, ambient)
    term = p.parse()
    return ParseResult(term, tuple(p.gamma), tuple(p.errors))


_NO_STOPS: frozenset[str] = frozenset()


class _Parser:
    def __init__(
        self,
        toks: list[Token],
        table: NotationTable,
        file: str,
        base: int,
        ambient: Sequence[str],
    ):
        self.toks = toks
        self.pos = 0
        self.table = table
        self.file = file
        self.ambient = frozenset(ambient)
        self.scope: list[str] = []  # binders introduced within the term
        self.gamma: list[ContextEntry] = []
        self.errors: list[Problem] = []
        self.counter = 0
        self.last_end = base
        if table.apply is not None:
            self.apply_prec: Optional[int] = table.apply.notation.precedence
            self.tight = self.apply_prec + 1
        else:
            self.apply_prec = None
            self.tight = _NO_APPLY_TIGHT

    # --- plumbing -------------------------------------------------------

    def peek(self) -> Optional[Token]:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def next(self) -> Token:
        tok = self.toks[self.pos]
        self.pos += 1
        self.last_end = tok.end
        return tok

    def span(self, start: int, end: int) -> SourceRef:
        return SourceRef(self.file, start, max(start, end))

    def tok_ref(self, tok: Optional[Token]) -> SourceRef:
        if tok is None:
            return self.span(self.last_end, self.last_end)
        return SourceRef(self.file, tok.start, tok.end)

    def err(self, message: str, ref: SourceRef) -> None:
        self.errors.append(Problem(message, ref))

    def fresh_meta(self, error: bool = False, ref: Optional[SourceRef] = None) -> Term:
        """A new meta-variable, recorded in gamma; the returned occurrence is
        raised over the binders currently in scope."""
        self.counter += 1
        prefix = ERROR_META_PREFIX if error else META_PREFIX + "X"
        name = f"{prefix}{self.counter}"
        self.gamma.append(ContextEntry(name))
        occ: Term = VarRef(name, ref, True)
        if self.scope and self.table.apply is not None:
            args = (occ,) + tuple(VarRef(v, None, True) for v in self.scope)
            occ = Complex(self.table.apply.qname, (), args, ref, True)
        return occ

    # --- grammar --------------------------------------------------------

    def parse(self) -> Term:
        if not self.toks:
            self.err("empty term", self.span(self.last_end, self.last_end))
            return self.fresh_meta(error=True)
        term = self.expr(0, _NO_STOPS)
        while (tok := self.peek()) is not None:
            self.next()
            self.err(f"unexpected {tok.text!r}", self.tok_ref(tok))
        return term

    def starts_expr(self, tok: Token, stops: frozenset[str]) -> bool:
        if tok.text in stops or tok.text in (")", ":"):
            return False
        if tok.text in self.table.infix:
            return False
        if tok.text == "(" or tok.text in self.table.prefix:
            return True
        return tok.text not in self.table.delimiters

    def expr(
        self,
        min_prec: int,
        stops: frozenset[str],
        chain: Optional[tuple[int, str]] = None,
    ) -> Term:
        left = self.head(stops)
        prev = chain
        while True:
            tok = self.peek()
            if tok is None or tok.text in stops or tok.text == ")":
                break
            candidates = self.table.infix.get(tok.text)
            if candidates:
                entry = candidates[0]
                prec = entry.notation.precedence
                if prec < min_prec:
                    break
                if len(candidates) > 1:
                    self.err(
                        f"delimiter {tok.text!r} matches several notations "
                        f"({candidates[0].qname}, {candidates[1].qname})",
                        self.tok_ref(tok),
                    )
                if prev is not None and prec == prev[0] and entry.qname != prev[1]:
                    self.err(
                        f"ambiguous: {qname_local(prev[1])} and "
                        f"{qname_local(entry.qname)} have equal precedence; "
                        "use parentheses",
                        self.tok_ref(tok),
                    )
                self.next()
                left = self.match_notation(entry, stops, left=left, lead_tok=tok)
                prev = (prec, entry.qname)
                continue
            if (
                self.apply_prec is not None
                and self.apply_prec >= min_prec
                and self.starts_expr(tok, stops)
            ):
                arg = self.expr(self.tight, stops)
                left = self.spine(left, arg)
                continue
            break
        return left

    def head(self, stops: frozenset[str]) -> Term:
        tok = self.peek()
        if tok is None or not self.starts_expr(tok, stops):
            what = "end of input" if tok is None else repr(tok.text)
            self.err(f"expected a term, found {what}", self.tok_ref(tok))
            return self.fresh_meta(error=True, ref=self.tok_ref(tok))
        if tok.text == "(":
            self.next()
            inner = self.expr(0, stops | {")"})
            self.expect(")", stops)
            return inner  # grouping is transparent: no node, inner refs kept
        if tok.word and tok.text in self.scope:
            self.next()
            return VarRef(tok.text, self.tok_ref(tok))
        if tok.word and tok.text in self.ambient:
            self.next()
            return VarRef(tok.text, self.tok_ref(tok))
        candidates = self.table.prefix.get(tok.text)
        if candidates:
            if len(candidates) > 1:
                self.err(
                    f"delimiter {tok.text!r} matches several notations "
                    f"({candidates[0].qname}, {candidates[1].qname})",
                    self.tok_ref(tok),
                )
            self.next()
            return self.match_notation(candidates[0], stops, lead_tok=tok)
        entry = self.table.entries.get(tok.text)
        if entry is not None:
            self.next()
            return ConstRef(entry.qname, self.tok_ref(tok))
        self.next()
        kind = "name" if tok.word else "token"
        self.err(f"unknown {kind} {tok.text!r}", self.tok_ref(tok))
        return self.fresh_meta(error=True, ref=self.tok_ref(tok))

    def expect(self, text: str, stops: frozenset[str]) -> None:
        tok = self.peek()
        if tok is not None and tok.text == text:
            self.next()
            return
        self.err(f"expected {text!r}", self.tok_ref(tok))
        j = self.pos
        while j < len(self.toks) and self.toks[j].text not in stops:
            if self.toks[j].text == text:
                self.pos = j + 1
                self.last_end = self.toks[j].end
                return
            j += 1
        # missing entirely: leave position, caller continues

    def binder_group(
        self, marker: VarMarker, next_delim: Optional[str], stops: frozenset[str]
    ) -> list[ContextEntry]:
        """Parse ``x`` or ``x : T`` (or several names for sequence markers).
        Entries are appended to the scope as they are made, so an omitted
        type's meta is raised over everything bound to its left."""
        names: list[str] = []
        while True:
            tok = self.peek()
            if (
                tok is None
                or not tok.word
                or tok.text in stops
                or tok.text in self.table.delimiters
            ):
                break
            self.next()
            names.append(tok.text)
            if not marker.sequence:
                break
        if not names:
            self.err("expected a bound variable name", self.tok_ref(self.peek()))
            names = [fresh_name("v", frozenset(self.scope) | self.ambient)]
        ty: Optional[Term] = None
        tok = self.peek()
        if tok is not None and tok.text == ":":
            self.next()
            sub = stops | ({next_delim} if next_delim is not None else frozenset())
            ty = self.expr(0, sub)
        entries: list[ContextEntry] = []
        for name in names:
            t = ty if ty is not None else self.fresh_meta()
            entries.append(ContextEntry(name, t))
            self.scope.append(name)
        return entries

    def match_notation(
        self,
        entry: TableEntry,
        stops: frozenset[str],
        left: Optional[Term] = None,
        lead_tok: Optional[Token] = None,
    ) -> Term:
        """Parse the rest of a notation whose first delimiter (and, for
        infix, leading argument) has been consumed."""
        nt = entry.notation
        markers = nt.markers
        parsed: dict[int, Union[Term, tuple[Term, ...]]] = {}
        if left is not None:
            parsed[markers[0].index] = left
            i = 2  # leading argument + its delimiter are done
        else:
            i = 1  # the first delimiter is done
        # implicit arguments are created before visible ones are parsed,
        # so their metas number before any the arguments introduce
        implicit = {p: self.fresh_meta() for p in nt.implicit_positions()}
        bound: list[ContextEntry] = []
        pushed = 0
        while i < len(markers):
            m = markers[i]
            nxt = next(
                (x.text for x in markers[i + 1 :] if isinstance(x, Delimiter)), None
            )
            if isinstance(m, Delimiter):
                self.expect(m.text, stops)
            elif isinstance(m, VarMarker):
                for ce in self.binder_group(m, nxt, stops):
                    bound.append(ce)
                    pushed += 1
            elif m.sequence:
                vals: list[Term] = []
                sub = stops | ({nxt} if nxt is not None else frozenset())
                while (tok := self.peek()) is not None and self.starts_expr(tok, sub):
                    vals.append(self.expr(self.tight, sub))
                parsed[m.index] = tuple(vals)
            elif nxt is not None:
                parsed[m.index] = self.expr(0, stops | {nxt})
            elif i == len(markers) - 1 and nt.binding_arity > 0:
                parsed[m.index] = self.expr(0, stops)  # binder body: maximal
            elif i == len(markers) - 1 and left is not None:
                right = entry.primitive or nt.binding_arity > 0
                parsed[m.index] = self.expr(
                    nt.precedence if right else nt.precedence + 1,
                    stops,
                    chain=(nt.precedence, entry.qname),
                )
            else:
                parsed[m.index] = self.expr(self.tight, stops)
            i += 1
        del self.scope[len(self.scope) - pushed :]
        args: list[Term] = []
        for p in range(nt.binding_arity + 1, nt.arity + 1):
            got = parsed.get(p)
            if got is None:
                args.append(implicit[p])
            elif isinstance(got, tuple):
                args.extend(got)
            else:
                args.append(got)
        if left is not None and left.source_ref is not None:
            start = left.source_ref.start
        elif lead_tok is not None:
            start = lead_tok.start
        else:
            start = self.last_end
        ref = self.span(start, self.last_end)
        return self.build(entry, tuple(bound), tuple(args), ref)

    def build(
        self, entry: TableEntry, bound: Context, args: tuple[Term, ...], ref: SourceRef
    ) -> Term:
        if entry.primitive:
            if not bound and not args:
                return ConstRef(entry.qname, ref)
            return Complex(entry.qname, bound, args, ref)
        if bound:
            # a typed constant that binds: parsed faithfully, no rule will
            # accept it downstream
            return Complex(entry.qname, bound, args, ref)
        if not args:
            return ConstRef(entry.qname, ref)
        head = ConstRef(entry.qname)  # no ref: clicks on the delimiter hit the spine
        if self.table.apply is None:
            return Complex(entry.qname, (), args, ref)
        return Complex(self.table.apply.qname, (), (head,) + args, ref)

    def spine(self, f: Term, arg: Term) -> Term:
        starts = [
            r.start for r in (f.source_ref, arg.source_ref) if r is not None
        ]
        start = min(starts) if starts else self.last_end
        ref = self.span(start, self.last_end)
        aq = self.table.apply.qname
        if isinstance(f, Complex) and f.head == aq and not f.bound:
            return Complex(aq, (), f.args + (arg,), ref)
        return Complex(aq, (), (f, arg), ref)
