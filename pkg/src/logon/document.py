"""Surface syntax: delimiter-structured documents holding unparsed term slots.

A file is a sequence of theory modules separated by ``❚`` (or ASCII 28);
declarations inside a module are separated by ``❙`` (ASCII 29) and split
into components by ``❘`` (ASCII 30).  ASCII 31 is reserved and rejected.
``//`` starts a line comment anywhere; comments are blanked before any
splitting so delimiters inside them do not count.  Term components stay
unparsed here: every :class:`ParsingUnit` carries the bit-exact file
substring at its SourceRef for the notation-based term parser.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .model import (
    ArgMarker,
    Delimiter,
    Marker,
    Notation,
    Problem,
    SourceRef,
    VarMarker,
    qname_join,
)

MODULE_DELIM = "❚"  # ❚
DECL_DELIM = "❙"  # ❙
COMP_DELIM = "❘"  # ❘
RESERVED = "\x1f"

KEYWORDS = {"theory", "include"}

TYPE_SLOT = "tp"
DEF_SLOT = "df"


def slot_id(theory: str, constant: str, component: str) -> str:
    return f"{qname_join(theory, constant)}!{component}"


@dataclass(frozen=True)
class ParsingUnit:
    """One unparsed term: scope theory, delimiter expectations are implied
    by the table, text and slot address the work item."""

    theory: str
    slot: str  # slot_id(...)
    text: str
    source_ref: SourceRef


# Document-level problems share the model's error shape.
DocError = Problem


@dataclass(frozen=True)
class IncludeDecl:
    target: str
    source_ref: SourceRef


@dataclass(frozen=True)
class ConstantDecl:
    name: str
    name_ref: SourceRef
    source_ref: SourceRef  # whole declaration
    type_unit: Optional[ParsingUnit] = None
    def_unit: Optional[ParsingUnit] = None
    notation: Optional[Notation] = None
    notation_ref: Optional[SourceRef] = None
    notation_text: Optional[str] = None

    @property
    def is_primitive(self) -> bool:
        """Neither type nor definiens: a primitive symbol, not an object."""
        return self.type_unit is None and self.def_unit is None


@dataclass(frozen=True)
class TheoryDecl:
    name: str
    name_ref: SourceRef
    source_ref: SourceRef
    includes: tuple[IncludeDecl, ...] = ()
    constants: tuple[ConstantDecl, ...] = ()

    def declarations(self) -> tuple[object, ...]:
        """Includes and constants in source order."""
        items: list[tuple[int, object]] = [(i.source_ref.start, i) for i in self.includes]
        items += [(c.source_ref.start, c) for c in self.constants]
        return tuple(d for _, d in sorted(items, key=lambda p: p[0]))


@dataclass(frozen=True)
class Document:
    file: str
    text: str
    theories: tuple[TheoryDecl, ...] = ()
    errors: tuple[DocError, ...] = ()

    def units(self) -> list[ParsingUnit]:
        out = []
        for th in self.theories:
            for c in th.constants:
                if c.type_unit:
                    out.append(c.type_unit)
                if c.def_unit:
                    out.append(c.def_unit)
        return out


def strip_comments(text: str) -> str:
    """Blank ``//`` line comments with spaces; offsets are preserved."""
    out = []
    i, n = 0, len(text)
    while i < n:
        if text[i] == "/" and i + 1 < n and text[i + 1] == "/":
            j = i
            while j < n and text[j] != "\n":
                j += 1
            out.append(" " * (j - i))
            i = j
        else:
            out.append(text[i])
            i += 1
    return "".join(out)


def _normalize_delims(text: str) -> str:
    return (
        text.replace("\x1c", MODULE_DELIM)
        .replace("\x1d", DECL_DELIM)
        .replace("\x1e", COMP_DELIM)
    )


def _trimmed_span(text: str, start: int, end: int) -> tuple[int, int]:
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    return start, end


_BRACKETS = {"(": ")", "[": "]", "{": "}", "⟨": "⟩"}
_CLOSERS = set(_BRACKETS.values())


def _find_top_level(text: str, needle: str, start: int) -> int:
    """First occurrence of needle outside any bracket pair, or -1."""
    depth = 0
    for i in range(start, len(text)):
        ch = text[i]
        if ch in _BRACKETS:
            depth += 1
        elif ch in _CLOSERS:
            depth = max(0, depth - 1)
        elif ch == needle and depth == 0:
            return i
    return -1


def parse_notation(text: str) -> Notation:
    """Notation micro-syntax: ints are argument markers, ``Vn`` variable
    markers, ``…`` directly after a marker sets its sequence flag, a
    trailing ``prec <int>`` sets the precedence, anything else is a
    delimiter.  Raises ValueError on malformed input."""
    raw = text.split()
    prec = 0
    if len(raw) >= 2 and raw[-2] == "prec":
        try:
            prec = int(raw[-1])
        except ValueError:
            raise ValueError(f"precedence is not an integer: {raw[-1]!r}")
        raw = raw[:-2]
    markers: list[Marker] = []
    for tok in raw:
        seq = False
        if tok.endswith("…") and len(tok) > 1:
            tok, seq = tok[:-1], True
        if tok == "…":
            if not markers or isinstance(markers[-1], Delimiter):
                raise ValueError("sequence flag without a preceding marker")
            m = markers[-1]
            markers[-1] = type(m)(m.index, True)
            continue
        if tok.isdigit():
            markers.append(ArgMarker(int(tok), seq))
        elif tok.startswith("V") and tok[1:].isdigit():
            markers.append(VarMarker(int(tok[1:]), seq))
        else:
            if seq:
                raise ValueError("sequence flag on a delimiter")
            markers.append(Delimiter(tok))
    n = Notation(tuple(markers), prec)
    var_idx = sorted(m.index for m in n.markers if isinstance(m, VarMarker))
    if var_idx != list(range(1, len(var_idx) + 1)):
        raise ValueError("variable markers must be numbered 1..m without gaps")
    arg_idx = [m.index for m in n.markers if isinstance(m, ArgMarker)]
    if len(set(arg_idx)) != len(arg_idx) or any(i <= n.binding_arity for i in arg_idx):
        raise ValueError("argument marker indices must be unique and follow the variables")
    if not n.markers:
        raise ValueError("empty notation")
    return n


def parse_document(text: str, file: str) -> Document:
    """Split a source file into theories, declarations and term slots.
    Recovers per declaration: errors are collected, never raised."""
    original = _normalize_delims(text)
    stripped = strip_comments(original)
    errors: list[DocError] = []
    for i, ch in enumerate(stripped):
        if ch == RESERVED:
            errors.append(DocError("reserved delimiter (ASCII 31)", SourceRef(file, i, i + 1)))
    stripped = stripped.replace(RESERVED, " ")

    theories: list[TheoryDecl] = []
    chunk_start = 0
    for chunk in stripped.split(MODULE_DELIM):
        chunk_end = chunk_start + len(chunk)
        th = _parse_theory_chunk(original, stripped, file, chunk_start, chunk_end, errors)
        if th is not None:
            theories.append(th)
        chunk_start = chunk_end + 1
    return Document(file, original, tuple(theories), tuple(errors))


def _parse_theory_chunk(
    original: str,
    stripped: str,
    file: str,
    start: int,
    end: int,
    errors: list[DocError],
) -> Optional[TheoryDecl]:
    s, e = _trimmed_span(stripped, start, end)
    if s >= e:
        return None
    head = stripped[s:e]
    if not head.startswith("theory"):
        errors.append(DocError("expected 'theory <Name> ='", SourceRef(file, s, e)))
        for i in range(s, e):  # stray declarations in the rejected chunk still count
            if stripped[i] == DECL_DELIM:
                errors.append(DocError("declaration outside a theory", SourceRef(file, i, i + 1)))
        return None
    # header: theory <Name> = ... (the first declaration follows the =)
    after_kw = s + len("theory")
    m_start = after_kw
    while m_start < e and stripped[m_start].isspace():
        m_start += 1
    m_end = m_start
    while m_end < e and not stripped[m_end].isspace() and stripped[m_end] != "=":
        m_end += 1
    name = stripped[m_start:m_end]
    eq = stripped.find("=", m_end, e)
    if not name or eq < 0:
        errors.append(DocError("malformed theory header", SourceRef(file, s, e)))
        return None
    name_ref = SourceRef(file, m_start, m_end)

    includes: list[IncludeDecl] = []
    constants: list[ConstantDecl] = []
    seen: set[str] = set()
    spans: list[tuple[int, int]] = []
    pos = eq + 1
    while pos <= e:
        nxt = stripped.find(DECL_DELIM, pos, e)
        spans.append((pos, nxt if nxt >= 0 else e))
        if nxt < 0:
            break
        pos = nxt + 1
    for i, (a, b) in enumerate(spans):
        ta, tb = _trimmed_span(stripped, a, b)
        if ta >= tb:
            # the segment after the final delimiter is the conventional
            # terminator position; any other empty segment is a mistake
            if i < len(spans) - 1:
                errors.append(DocError("empty declaration", SourceRef(file, a, max(a + 1, b))))
            continue
        _parse_declaration(
            original, stripped, file, name, a, b, includes, constants, seen, errors
        )
    return TheoryDecl(name, name_ref, SourceRef(file, s, e), tuple(includes), tuple(constants))


def _parse_declaration(
    original: str,
    stripped: str,
    file: str,
    theory: str,
    start: int,
    end: int,
    includes: list[IncludeDecl],
    constants: list[ConstantDecl],
    seen: set[str],
    errors: list[DocError],
) -> None:
    s, e = _trimmed_span(stripped, start, end)
    if s >= e:
        return
    decl_ref = SourceRef(file, s, e)
    pieces: list[tuple[int, int]] = []
    p = s
    while p <= e:
        nxt = stripped.find(COMP_DELIM, p, e)
        pieces.append((p, nxt if nxt >= 0 else e))
        if nxt < 0:
            break
        p = nxt + 1

    ps, pe = _trimmed_span(stripped, *pieces[0])
    first = stripped[ps:pe]
    if first.startswith("include") and (len(first) == 7 or first[7].isspace()):
        target = first[7:].strip()
        if not target:
            errors.append(DocError("include without a target", decl_ref))
        else:
            includes.append(IncludeDecl(target, decl_ref))
        for extra in pieces[1:]:
            errors.append(DocError("include takes no components", SourceRef(file, *extra)))
        return

    # constant: name [: type] [= definiens] in the first piece
    n_end = ps
    while n_end < pe and not stripped[n_end].isspace() and stripped[n_end] not in ":=#":
        n_end += 1
    name = stripped[ps:n_end]
    if not name:
        errors.append(DocError("declaration without a name", decl_ref))
        return
    if name in KEYWORDS or "?" in name or "!" in name or name.startswith("/"):
        errors.append(DocError(f"illegal constant name {name!r}", SourceRef(file, ps, n_end)))
        return
    if name in seen:
        errors.append(DocError(f"duplicate constant {name!r}", SourceRef(file, ps, n_end)))
        return
    seen.add(name)

    type_span: Optional[tuple[int, int]] = None
    def_span: Optional[tuple[int, int]] = None
    nota_span: Optional[tuple[int, int]] = None

    def assign(kind: str, a: int, b: int) -> None:
        nonlocal type_span, def_span, nota_span
        a, b = _trimmed_span(stripped, a, b)
        if a >= b:
            errors.append(DocError(f"empty {kind} component", SourceRef(file, a, max(a + 1, b))))
            return
        cur = {"type": type_span, "definiens": def_span, "notation": nota_span}[kind]
        if cur is not None:
            errors.append(DocError(f"duplicate {kind} component", SourceRef(file, a, b)))
            return
        if kind == "type":
            type_span = (a, b)
        elif kind == "definiens":
            def_span = (a, b)
        else:
            nota_span = (a, b)

    rest_start = n_end
    rs, re_ = _trimmed_span(stripped, rest_start, pe)
    if rs < re_:
        head = stripped[rs]
        if head == ":":
            eq = _find_top_level(stripped[rs:re_], "=", 1)
            if eq >= 0:
                assign("type", rs + 1, rs + eq)
                assign("definiens", rs + eq + 1, re_)
            else:
                assign("type", rs + 1, re_)
        elif head == "=":
            assign("definiens", rs + 1, re_)
        elif head == "#":
            assign("notation", rs + 1, re_)
        else:
            errors.append(DocError("expected ':', '=' or '#'", SourceRef(file, rs, re_)))

    for a, b in pieces[1:]:
        ca, cb = _trimmed_span(stripped, a, b)
        if ca >= cb:
            errors.append(DocError("empty component", SourceRef(file, a, b)))
            continue
        head = stripped[ca]
        if head == ":":
            assign("type", ca + 1, cb)
        elif head == "=":
            assign("definiens", ca + 1, cb)
        elif head == "#":
            assign("notation", ca + 1, cb)
        else:
            errors.append(DocError("component must start with ':', '=' or '#'", SourceRef(file, ca, cb)))

    notation = None
    notation_ref = None
    notation_text = None
    if nota_span is not None:
        notation_ref = SourceRef(file, *nota_span)
        notation_text = original[nota_span[0] : nota_span[1]]
        try:
            notation = parse_notation(stripped[nota_span[0] : nota_span[1]])
        except ValueError as exc:
            errors.append(DocError(f"bad notation: {exc}", notation_ref))

    def unit(span: Optional[tuple[int, int]], comp: str) -> Optional[ParsingUnit]:
        if span is None:
            return None
        ref = SourceRef(file, *span)
        return ParsingUnit(theory, slot_id(theory, name, comp), original[span[0] : span[1]], ref)

    constants.append(
        ConstantDecl(
            name,
            SourceRef(file, ps, n_end),
            decl_ref,
            unit(type_span, TYPE_SLOT),
            unit(def_span, DEF_SLOT),
            notation,
            notation_ref,
            notation_text,
        )
    )


def declaration_at(doc: Document, offset: int) -> Optional[ConstantDecl]:
    for th in doc.theories:
        for c in th.constants:
            if c.source_ref.start <= offset < c.source_ref.end:
                return c
    return None


def serialize(doc: Document) -> str:
    """Delimiters plus raw component texts; reparsing is structurally equal."""
    parts = []
    for th in doc.theories:
        decls = []
        for d in th.declarations():
            if isinstance(d, IncludeDecl):
                decls.append(f"include {d.target}")
            else:
                assert isinstance(d, ConstantDecl)
                comps = [d.name]
                if d.type_unit is not None:
                    comps[0] += f" : {d.type_unit.text}"
                if d.def_unit is not None:
                    comps[0] += f" = {d.def_unit.text}"
                if d.notation_text is not None:
                    comps.append(f"# {d.notation_text}")
                decls.append(f" {COMP_DELIM} ".join(comps))
        body = f" {DECL_DELIM}\n  ".join(decls)
        parts.append(f"theory {th.name} =\n  {body} {DECL_DELIM}\n{MODULE_DELIM}")
    return "\n".join(parts) + "\n"


def doc_equals_structural(a: Document, b: Document) -> bool:
    """Names, component texts (stripped of layout), notations and includes."""

    def shape(doc: Document):
        out = []
        for th in doc.theories:
            decls = []
            for d in th.declarations():
                if isinstance(d, IncludeDecl):
                    decls.append(("include", d.target))
                else:
                    assert isinstance(d, ConstantDecl)
                    decls.append(
                        (
                            d.name,
                            d.type_unit.text.strip() if d.type_unit else None,
                            d.def_unit.text.strip() if d.def_unit else None,
                            d.notation,
                        )
                    )
            out.append((th.name, tuple(decls)))
        return out

    return shape(a) == shape(b)
