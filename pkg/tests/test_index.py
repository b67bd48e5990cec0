"""Relational queries and subterm search over the checked fixtures."""

from pathlib import Path

import pytest

import logon
from logon.document import parse_document
from logon.engine import check_library
from logon.index import (
    QueryParseError,
    RelationalIndex,
    UnknownRelation,
    eval_relation,
    match_pattern,
    parse_query,
    related,
    relational_index,
    search,
    substitute,
    term_index,
)
from logon.lf import kernel_for
from logon.model import alpha_equal, at_path
from logon.render import render_term
from logon.structure import validate
from logon.termparse import NotationTable, parse_term_text

FIXTURES = Path(logon.__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def lib():
    docs = [
        parse_document((FIXTURES / n).read_text(encoding="utf-8"), n)
        for n in ("lf.mmt", "pl.mmt")
    ]
    v = validate(docs)
    out = check_library(v, kernel_for(v))
    assert out.ok
    return out


@pytest.fixture(scope="module")
def rel(lib):
    return relational_index(lib)


@pytest.fixture(scope="module")
def terms(lib):
    return term_index(lib)


@pytest.fixture(scope="module")
def table(lib):
    return NotationTable.for_theory("PL", lib.validation.sigs)


def test_refers_to_inverse_finds_conjunction_users(rel):
    assert related(rel, "PL?and", "inverse(RefersTo)") == {"PL?andI", "PL?example"}


def test_includes_closure(rel):
    assert related(rel, "PL", "closure(Includes)") == {"LF"}


def test_includes_closure_is_transitive(lib):
    docs = [
        parse_document((FIXTURES / n).read_text(encoding="utf-8"), n)
        for n in ("lf.mmt", "pl.mmt")
    ] + [parse_document("theory T = include PL ❙ t0 : prop ❙ ❚", "t.mmt")]
    v = validate(docs)
    out = check_library(v, kernel_for(v))
    r = relational_index(out)
    assert related(r, "T", "Includes") == {"PL"}
    assert related(r, "T", "closure(Includes)") == {"PL", "LF"}


def test_declares_lists_the_theory_constants(rel):
    assert related(rel, "PL", "Declares") == {
        "PL?prop",
        "PL?ded",
        "PL?imp",
        "PL?and",
        "PL?andI",
        "PL?impI",
        "PL?example",
    }


def test_relations_of_unrelated_element_are_empty(rel):
    assert related(rel, "PL?prop", "Includes") == frozenset()
    assert related(rel, "nowhere", "RefersTo") == frozenset()


def test_union_and_inverse(rel):
    back = related(rel, "LF", "inverse(Includes)")
    assert back == {"PL"}
    both = related(rel, "PL", "union(Includes, inverse(Includes))")
    assert both == {"LF"}


def test_restriction_keeps_only_the_theory(rel):
    inside = related(rel, "PL?example", "restrict(RefersTo, PL)")
    assert inside == {
        "PL?prop",
        "PL?ded",
        "PL?imp",
        "PL?and",
        "PL?andI",
        "PL?impI",
    }
    everything = related(rel, "PL?example", "RefersTo")
    assert "LF?lambda" in everything  # binders count as uses


def test_depends_on_mirrors_solver_dependencies(rel, lib):
    for slot, res in lib.results.items():
        assert related(rel, slot, "DependsOn") == res.dependencies


def test_unknown_relation_raises(rel):
    with pytest.raises(UnknownRelation):
        related(rel, "PL", "Universe")
    with pytest.raises(UnknownRelation):
        related(rel, "PL", "transpose(Includes)")
    with pytest.raises(UnknownRelation):
        eval_relation(rel, "union(Includes")
    with pytest.raises(UnknownRelation):
        eval_relation(rel, "Includes extra")


def test_relational_index_json_roundtrip(rel):
    again = RelationalIndex.from_json(rel.to_json())
    assert again == rel


def test_term_index_includes_inferred_subterms(terms):
    inferred = [e for e in terms.entries if e.inferred]
    assert inferred
    # every inferred entry still resolves to a source position
    assert all(e.source_ref is not None for e in inferred)


def test_search_nonlinear_conjunction(lib, terms, table):
    pl_text = (FIXTURES / "pl.mmt").read_text(encoding="utf-8")
    hits = search(terms, parse_query("$x: x∧x", table))
    assert [(h.slot, h.inferred) for h in hits] == [
        ("PL?example!df", True),
        ("PL?example!tp", False),
    ]
    for h in hits:
        # the inferred argument keeps the position it was unified from
        assert pl_text[h.source_ref.start : h.source_ref.end] == "A ∧ A"
        assert render_term(h.substitution["x"], table) == "A"


def test_search_three_variable_pattern(terms, table):
    hits = search(terms, parse_query("$x,$y,$z: x⟹(y∧z)", table))
    assert len(hits) == 1
    h = hits[0]
    assert h.slot == "PL?example!tp"
    assert {k: render_term(t, table) for k, t in h.substitution.items()} == {
        "x": "A",
        "y": "A",
        "z": "A",
    }


def test_search_ground_pattern_without_occurrence(terms, table):
    assert search(terms, parse_query("prop∧prop", table)) == ()


def test_search_ground_constant_occurrences(lib, terms, table):
    hits = search(terms, parse_query("ded", table))
    assert hits
    for h in hits:
        sub = at_path(lib.results[h.slot].elaborated, h.path)
        assert sub.name == "PL?ded"


def test_search_soundness(lib, terms, table):
    for text in ("$x: x∧x", "$x,$y,$z: x⟹(y∧z)", "$a,$b: a⟹b"):
        q = parse_query(text, table)
        for h in search(terms, q):
            located = at_path(lib.results[h.slot].elaborated, h.path)
            assert alpha_equal(substitute(q.pattern, dict(h.substitution)), located)


def test_search_agrees_with_brute_force(lib, terms, table):
    from logon.model import subterms_with_paths

    for text in ("$x: x∧x", "$x,$y,$z: x⟹(y∧z)", "ded", "$a: ded a", "prop∧prop"):
        q = parse_query(text, table)
        brute = []
        for task in lib.validation.tasks:
            res = lib.results.get(task.slot)
            if res is None or res.elaborated is None:
                continue
            for path, sub in subterms_with_paths(res.elaborated):
                if match_pattern(q.pattern, q.vars + q.wildcards, sub) is not None:
                    brute.append((task.slot, path))
        assert sorted(brute) == sorted((h.slot, h.path) for h in search(terms, q))


def test_implicit_notation_arguments_match_as_wildcards(terms, table):
    hits = search(terms, parse_query("$p: andI p p", table))
    assert [h.slot for h in hits] == ["PL?example!df"]
    assert set(hits[0].substitution) == {"p"}


def test_binder_patterns_match_modulo_alpha(table):
    pat = parse_term_text("[y] y", table).term
    same = parse_term_text("[z] z", table).term
    other = parse_term_text("[z] prop", table).term
    assert match_pattern(pat, (), same) is not None
    assert match_pattern(pat, (), other) is None


def test_query_parse_errors(table):
    with pytest.raises(QueryParseError):
        parse_query("$x,$x: x", table)
    with pytest.raises(QueryParseError):
        parse_query("$x:", table)
    with pytest.raises(QueryParseError):
        parse_query("$x: x ∧", table)
