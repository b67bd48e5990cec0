"""Surface parser: delimiter splitting, recovery, notation micro-syntax."""

from __future__ import annotations

import importlib.resources

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from logon.document import (
    COMP_DELIM,
    DECL_DELIM,
    MODULE_DELIM,
    Document,
    declaration_at,
    doc_equals_structural,
    parse_document,
    parse_notation,
    serialize,
    strip_comments,
)
from logon.model import ArgMarker, Delimiter, Notation, VarMarker


def fixture_text(name: str) -> str:
    return (importlib.resources.files("logon") / "fixtures" / name).read_text()


def test_spec_shaped_document():
    text = "theory PL = prop : type ❘ # prop ❙ and : prop→prop→prop ❘ # 1 ∧ 2 ❙ ❚"
    doc = parse_document(text, "pl.mmt")
    assert doc.errors == ()
    assert len(doc.theories) == 1
    th = doc.theories[0]
    assert th.name == "PL"
    assert [c.name for c in th.constants] == ["prop", "and"]
    and_ = th.constants[1]
    assert and_.type_unit is not None
    assert and_.type_unit.text == "prop→prop→prop"
    assert and_.notation == Notation((ArgMarker(1), Delimiter("∧"), ArgMarker(2)), 0)


def test_unit_text_bit_exact():
    text = "theory T = c : foo  bar ❙ ❚"
    doc = parse_document(text, "t.mmt")
    unit = doc.theories[0].constants[0].type_unit
    assert unit is not None
    r = unit.source_ref
    assert text[r.start : r.end] == unit.text == "foo  bar"
    assert unit.slot == "T?c!tp"
    assert unit.theory == "T"


def test_ascii_delimiter_aliases():
    text = "theory T = a : x \x1e # a \x1d b = y \x1d \x1c"
    doc = parse_document(text, "t.mmt")
    assert doc.errors == ()
    names = [c.name for c in doc.theories[0].constants]
    assert names == ["a", "b"]
    assert doc.theories[0].constants[1].def_unit.text == "y"


def test_ascii_31_rejected():
    doc = parse_document("theory T = a : x\x1fy ❙ ❚", "t.mmt")
    assert any("reserved" in e.message for e in doc.errors)


def test_type_and_definiens_in_first_piece():
    text = "theory T = example : {A} ded (A ⟹ (A ∧ A)) = [A] impI [p] andI p p ❙ ❚"
    doc = parse_document(text, "t.mmt")
    c = doc.theories[0].constants[0]
    assert c.type_unit.text == "{A} ded (A ⟹ (A ∧ A))"
    assert c.def_unit.text == "[A] impI [p] andI p p"


def test_top_level_equals_detection_skips_brackets():
    # '=' inside brackets must not split the type
    text = "theory T = c : {x = y} foo ❙ ❚"
    doc = parse_document(text, "t.mmt")
    c = doc.theories[0].constants[0]
    assert c.type_unit.text == "{x = y} foo"
    assert c.def_unit is None


def test_include_and_keyword():
    doc = parse_document("theory PL = include LF ❙ p : type ❙ ❚", "t.mmt")
    th = doc.theories[0]
    assert [i.target for i in th.includes] == ["LF"]
    assert [c.name for c in th.constants] == ["p"]


def test_comments_blanked_offsets_preserved():
    text = "theory T = // header\n  c : type ❙ ❚"
    assert len(strip_comments(text)) == len(text)
    doc = parse_document(text, "t.mmt")
    assert doc.errors == ()
    assert doc.theories[0].constants[0].name == "c"


def test_comment_hides_delimiters():
    text = "theory T = c : a // ❙ not a delimiter\n ❙ ❚"
    doc = parse_document(text, "t.mmt")
    assert len(doc.theories[0].constants) == 1


def test_recovery_bad_declaration_keeps_neighbors():
    text = "theory T = : type ❙ ok : type ❙ ❚"
    doc = parse_document(text, "t.mmt")
    assert [c.name for c in doc.theories[0].constants] == ["ok"]
    assert len(doc.errors) == 1


def test_duplicate_component_reported():
    text = "theory T = c : a ❘ : b ❙ ❚"
    doc = parse_document(text, "t.mmt")
    assert any("duplicate type" in e.message for e in doc.errors)
    assert doc.theories[0].constants[0].type_unit.text == "a"


def test_declaration_at():
    text = "theory T = a : x ❙ b : y ❙ ❚"
    doc = parse_document(text, "t.mmt")
    b = doc.theories[0].constants[1]
    assert declaration_at(doc, b.source_ref.start) is b
    assert declaration_at(doc, 0) is None


def test_fixture_lf_parses_clean():
    doc = parse_document(fixture_text("lf.mmt"), "lf.mmt")
    assert doc.errors == ()
    th = doc.theories[0]
    assert th.name == "LF"
    assert [c.name for c in th.constants] == [
        "type", "kind", "Pi", "lambda", "apply", "arrow", "hole",
    ]
    assert all(c.is_primitive for c in th.constants)
    pi = th.constants[2]
    assert pi.notation == Notation((Delimiter("{"), VarMarker(1), Delimiter("}"), ArgMarker(2)), 0)
    assert th.constants[4].notation == Notation((ArgMarker(1), ArgMarker(2)), 100)
    assert th.constants[5].notation.precedence == 5


def test_fixture_pl_parses_clean():
    doc = parse_document(fixture_text("pl.mmt"), "pl.mmt")
    assert doc.errors == ()
    th = doc.theories[0]
    assert [i.target for i in th.includes] == ["LF"]
    assert [c.name for c in th.constants] == [
        "prop", "ded", "imp", "and", "andI", "impI", "example",
    ]
    ded = th.constants[1]
    assert ded.notation is None and ded.type_unit.text == "prop → type"
    ex = th.constants[6]
    assert ex.def_unit.text == "[A] impI [p] andI p p"
    assert th.constants[4].notation == Notation(
        (Delimiter("andI"), ArgMarker(3), ArgMarker(4)), 0
    )


class TestNotationMicroSyntax:
    def test_markers(self):
        n = parse_notation("[ V1 ] 2")
        assert n.markers == (Delimiter("["), VarMarker(1), Delimiter("]"), ArgMarker(2))

    def test_precedence(self):
        assert parse_notation("1 → 2 prec 5").precedence == 5

    def test_sequence_flag(self):
        assert parse_notation("f 2…").markers[1] == ArgMarker(2, True)
        assert parse_notation("f 2 …").markers[1] == ArgMarker(2, True)

    def test_rejects_gap_in_variables(self):
        with pytest.raises(ValueError):
            parse_notation("{ V2 } 3")

    def test_rejects_duplicate_args(self):
        with pytest.raises(ValueError):
            parse_notation("1 + 1")

    def test_rejects_arg_index_inside_binders(self):
        with pytest.raises(ValueError):
            parse_notation("[ V1 ] 1")


def test_serialize_reparse_idempotent_on_fixtures():
    for name in ("lf.mmt", "pl.mmt"):
        doc = parse_document(fixture_text(name), name)
        again = parse_document(serialize(doc), name)
        assert doc_equals_structural(doc, again)
        assert again.errors == ()


@st.composite
def documents(draw):
    names = st.sampled_from(["a", "b", "c", "dd", "e1"])
    decls = draw(
        st.lists(
            st.tuples(names, st.booleans(), st.booleans()),
            min_size=0,
            max_size=5,
            unique_by=lambda t: t[0],
        )
    )
    body = []
    for n, has_ty, has_df in decls:
        parts = n
        if has_ty:
            parts += " : type"
        if has_df:
            parts += " = x"
        body.append(parts)
    return "theory G = " + f" {DECL_DELIM} ".join(body) + f" {DECL_DELIM} {MODULE_DELIM}"


@given(documents())
@settings(max_examples=60)
def test_serialize_idempotence_property(text):
    doc = parse_document(text, "g.mmt")
    again = parse_document(serialize(doc), "g.mmt")
    assert doc_equals_structural(doc, again)


@given(st.text(alphabet=list("abc:=# \n") + [DECL_DELIM, COMP_DELIM, MODULE_DELIM], max_size=80))
@settings(max_examples=150)
def test_nothing_silently_dropped(junk):
    text = "theory J = " + junk
    doc = parse_document(text, "j.mmt")
    delims = junk.count(DECL_DELIM)
    ndecl = sum(len(t.includes) + len(t.constants) for t in doc.theories)
    assert ndecl + len(doc.errors) >= delims
