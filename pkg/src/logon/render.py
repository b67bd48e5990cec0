"""Term rendering: the inverse of notation-driven parsing.

Conventions, pinned so that render-parse-render is byte-stable:

* pieces join tightly except where two word characters would touch (so
  symbolic delimiters sit tight: ``A∧A``, ``ded A→ded B``), plus an
  explicit single space after a binder group's closing delimiter and
  between juxtaposed spine members;
* parenthesization is minimal by precedence, except that a term rendered
  with one infix notation is always parenthesized inside a *different*
  infix notation (``A⟹(A∧A)``), and a right-open term (a binder body or
  trailing argument extends maximally when reparsed) is parenthesized
  anywhere but rightmost position.  Delimiter-led notations are immune
  to precedence on their left edge (``impI [p] andI p p`` stays bare);
* an application spine whose head constant has a notation renders
  through it, showing exactly the explicit argument positions.  With
  ``show_inferred`` and hidden positions present it falls back to plain
  juxtaposition of *all* arguments, parenthesizing every non-atomic one;
* a Pi whose binder does not occur in the body renders through the
  arrow notation, if the theory has one;
* with ``show_inferred`` off, an inferred binder type is dropped
  (``[A]`` rather than ``[A:prop]``).

``render_with_paths`` additionally maps every displayed subterm to a
character span: spans are listed preorder (whole term first), nest
properly, and include any parentheses the context added around the
subterm.  Span paths use the model's step strings, so they resolve
through ``at_path``.  ``parenthesize=True`` wraps every compound
subterm regardless of precedence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

from .model import (
    ArgMarker,
    Complex,
    ConstRef,
    Delimiter,
    Equal,
    Inhabitable,
    Judgment,
    Term,
    Typing,
    VarMarker,
    VarRef,
    free_vars,
    qname_local,
)
from .termparse import NotationTable, TableEntry, _is_word_char

ATOM = 10**9

Path = tuple[str, ...]
Span = tuple[int, int, Path]


class _Out(NamedTuple):
    text: str
    spans: tuple[Span, ...]


def _shift(spans: tuple[Span, ...], d: int) -> tuple[Span, ...]:
    if d == 0:
        return spans
    return tuple((s + d, e + d, p) for s, e, p in spans)


def _tight(parts: list[_Out]) -> _Out:
    out = ""
    spans: list[Span] = []
    for p in parts:
        if not p.text:
            continue
        if out and _is_word_char(out[-1]) and _is_word_char(p.text[0]):
            out += " "
        spans.extend(_shift(p.spans, len(out)))
        out += p.text
    return _Out(out, tuple(spans))


def _spaced(parts: list[_Out]) -> _Out:
    out = ""
    spans: list[Span] = []
    for p in parts:
        if out:
            out += " "
        spans.extend(_shift(p.spans, len(out)))
        out += p.text
    return _Out(out, tuple(spans))


def _pad_left(p: _Out) -> _Out:
    return _Out(" " + p.text, _shift(p.spans, 1))


@dataclass(frozen=True)
class _Piece:
    text: str
    prec: int
    infix_op: Optional[str] = None  # qname when rendered with an infix notation
    left_closed: bool = True  # starts with a delimiter or is atomic
    right_open: bool = False  # reparsing would extend past its end
    spans: tuple[Span, ...] = ()


@dataclass(frozen=True)
class RenderResult:
    text: str
    spans: tuple[Span, ...]  # preorder; spans[0] covers the whole text


def render_term(t: Term, table: NotationTable, show_inferred: bool = False) -> str:
    return _Renderer(table, show_inferred).piece(t, rightmost=True).text


def render_with_paths(
    t: Term,
    table: NotationTable,
    show_inferred: bool = False,
    parenthesize: bool = False,
) -> RenderResult:
    p = _Renderer(table, show_inferred, parenthesize).piece(t, rightmost=True)
    return RenderResult(p.text, p.spans)


def describe_judgment(
    j: Judgment, table: NotationTable, show_inferred: bool = False
) -> str:
    def r(t: Term) -> str:
        return render_term(t, table, show_inferred)

    if isinstance(j, Typing):
        return f"{r(j.subject)} : {r(j.expected)}"
    if isinstance(j, Equal):
        return f"{r(j.left)} = {r(j.right)}"
    if isinstance(j, Inhabitable):
        return f"{r(j.term)} inhabitable"
    return str(j)


class _Renderer:
    def __init__(
        self, table: NotationTable, show_inferred: bool, parenthesize: bool = False
    ):
        self.table = table
        self.show = show_inferred
        self.parens_all = parenthesize
        ap = table.apply
        self.apply_qname = ap.qname if ap else None
        self.apply_prec = ap.notation.precedence if ap else 100
        self.tight = self.apply_prec + 1
        self.arrow: Optional[TableEntry] = None
        self.pi_qname: Optional[str] = None
        for e in table.by_qname.values():
            if e.notation is None or not e.primitive:
                continue
            local = qname_local(e.qname)
            if local == "arrow":
                self.arrow = e
            elif local == "Pi":
                self.pi_qname = e.qname

    # --- wrapping ---------------------------------------------------------

    def wrapped(
        self,
        p: _Piece,
        ctx_prec: int,
        rightmost: bool,
        parent_infix: Optional[str] = None,
        force: bool = False,
    ) -> bool:
        if p.prec == ATOM:
            return False
        if force or self.parens_all:
            return True
        if p.right_open and not rightmost:
            return True
        if p.infix_op is not None and parent_infix is not None and p.infix_op != parent_infix:
            return True
        return not p.left_closed and p.prec < ctx_prec

    def slot(
        self,
        t: Term,
        ctx_prec: int,
        rightmost: bool,
        parent_infix: Optional[str] = None,
        force: bool = False,
        path: Path = (),
    ) -> tuple[_Out, bool]:
        """Rendered child plus whether it ended bare and right-open."""
        p = self.piece(t, rightmost, path)
        if self.wrapped(p, ctx_prec, rightmost, parent_infix, force):
            # context parens belong to the subterm's span
            spans = ((0, len(p.text) + 2, path),) + _shift(p.spans[1:], 1)
            return _Out(f"({p.text})", spans), False
        return _Out(p.text, p.spans), p.right_open

    def _seal(
        self,
        out: _Out,
        path: Path,
        prec: int,
        infix_op: Optional[str] = None,
        left_closed: bool = True,
        right_open: bool = False,
    ) -> _Piece:
        spans = ((0, len(out.text), path),) + out.spans
        return _Piece(out.text, prec, infix_op, left_closed, right_open, spans)

    # --- node dispatch ------------------------------------------------------

    def piece(self, t: Term, rightmost: bool, path: Path = ()) -> _Piece:
        if isinstance(t, VarRef):
            return _Piece(t.name, ATOM, spans=((0, len(t.name), path),))
        if isinstance(t, ConstRef):
            text = qname_local(t.name)
            return _Piece(text, ATOM, spans=((0, len(text), path),))
        head = t.head
        if (
            head == self.pi_qname
            and self.arrow is not None
            and len(t.bound) == 1
            and t.bound[0].type is not None
            and t.bound[0].name not in free_vars(t.args[0])
        ):
            by_pos = {
                1: (t.bound[0].type, path + ("bound:0:type",)),
                2: (t.args[0], path + ("arg:0",)),
            }
            return self.notation(self.arrow, (), by_pos, rightmost, path)
        if head == self.apply_qname and not t.bound and t.args:
            return self.spine(t, rightmost, path)
        entry = self.table.by_qname.get(head)
        if entry is not None and entry.notation is not None:
            shift = entry.notation.binding_arity
            by_pos = {
                shift + 1 + i: (a, path + (f"arg:{i}",))
                for i, a in enumerate(t.args)
            }
            return self.notation(entry, t.bound, by_pos, rightmost, path)
        head_out = _Out(qname_local(head), ())
        args = [(a, path + (f"arg:{i}",)) for i, a in enumerate(t.args)]
        return self.jux(head_out, args, rightmost, path, force=True)

    def spine(self, t: Complex, rightmost: bool, path: Path) -> _Piece:
        f, args = t.args[0], t.args[1:]
        indexed = [(a, path + (f"arg:{i + 1}",)) for i, a in enumerate(args)]
        if isinstance(f, ConstRef):
            fpath = path + ("arg:0",)
            ftext = qname_local(f.name)
            head_out = _Out(ftext, ((0, len(ftext), fpath),))
            entry = self.table.by_qname.get(f.name)
            nt = entry.notation if entry else None
            if nt is not None and nt.binding_arity == 0 and len(args) == nt.arity:
                if self.show and nt.implicit_positions():
                    return self.jux(head_out, indexed, rightmost, path, force=True)
                by_pos = {i + 1: pair for i, pair in enumerate(indexed)}
                return self.notation(entry, (), by_pos, rightmost, path)
            # plain heads juxtapose; a notation head that cannot use its
            # notation falls back with everything parenthesized
            return self.jux(head_out, indexed, rightmost, path, force=nt is not None)
        fout, _ = self.slot(f, self.tight, rightmost=False, path=path + ("arg:0",))
        return self.jux(fout, indexed, rightmost, path)

    def jux(
        self,
        head: _Out,
        args: list[tuple[Term, Path]],
        rightmost: bool,
        path: Path,
        force: bool = False,
    ) -> _Piece:
        parts = [head]
        tail_open = False
        for i, (a, apath) in enumerate(args):
            last = i == len(args) - 1
            out, bare_open = self.slot(
                a, self.tight, rightmost and last, force=force, path=apath
            )
            parts.append(out)
            if last:
                tail_open = bare_open
        return self._seal(
            _spaced(parts), path, self.apply_prec, left_closed=False, right_open=tail_open
        )

    def notation(
        self,
        entry: TableEntry,
        bound: tuple,
        by_pos: dict[int, tuple[Term, Path]],
        rightmost: bool,
        path: Path,
    ) -> _Piece:
        nt = entry.notation
        markers = nt.markers
        is_infix = (
            len(markers) >= 2
            and isinstance(markers[0], ArgMarker)
            and isinstance(markers[1], Delimiter)
        )
        right_assoc = entry.primitive or nt.binding_arity > 0
        pieces: list[_Out] = []
        tail_open = False
        for i, m in enumerate(markers):
            if isinstance(m, Delimiter):
                pieces.append(_Out(m.text, ()))
                tail_open = False
                continue
            if isinstance(m, VarMarker):
                pieces.append(self.binder_group(bound, path))
                continue
            pair = by_pos.get(m.index)
            if pair is None:
                continue  # hidden position
            a, apath = pair
            last = i == len(markers) - 1
            bounded = any(isinstance(x, Delimiter) for x in markers[i + 1 :])
            if is_infix and i == 0:
                # the leading operand reparses before the notation is known,
                # so it is the one bounded position that is precedence-sensitive
                ctx = nt.precedence + (1 if right_assoc else 0)
                out, _ = self.slot(
                    a, ctx, rightmost=False, parent_infix=entry.qname, path=apath
                )
                pieces.append(out)
            elif bounded:
                out, _ = self.slot(a, 0, rightmost=True, path=apath)
                pieces.append(out)
            elif last and nt.binding_arity > 0:
                # a binder body: parens, if needed, go around the whole notation
                out, _ = self.slot(a, 0, rightmost=True, path=apath)
                pieces.append(_pad_left(out))
                tail_open = True
            elif last and is_infix:
                ctx = nt.precedence + (0 if right_assoc else 1)
                out, bare_open = self.slot(
                    a, ctx, rightmost, parent_infix=entry.qname, path=apath
                )
                pieces.append(out)
                tail_open = bare_open
            else:
                out, bare_open = self.slot(a, self.tight, rightmost and last, path=apath)
                pieces.append(_pad_left(out))
                if last:
                    tail_open = bare_open
        closed = isinstance(markers[-1], Delimiter)
        if closed and not is_infix:
            return self._seal(_tight(pieces), path, ATOM)
        return self._seal(
            _tight(pieces),
            path,
            nt.precedence,
            entry.qname if is_infix else None,
            left_closed=not is_infix,
            right_open=tail_open,
        )

    def binder_group(self, bound: tuple, path: Path) -> _Out:
        parts: list[_Out] = []
        for i, e in enumerate(bound):
            ty = e.type
            if ty is not None and not self.show and getattr(ty, "inferred", False):
                ty = None
            if ty is None:
                parts.append(_Out(e.name, ()))
            else:
                out, _ = self.slot(
                    ty, 0, rightmost=True, path=path + (f"bound:{i}:type",)
                )
                parts.append(_Out(f"{e.name}:{out.text}", _shift(out.spans, len(e.name) + 1)))
        return _spaced(parts)
