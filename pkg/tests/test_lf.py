"""Kernel oracles on the shipped fixtures: solved metas, elaboration,
error recovery, definiens-only types, hole hints.  Expected strings were
computed by hand from the rules and frozen here."""

from pathlib import Path

import pytest

import logon
from logon.document import parse_document
from logon.engine import check_library, erases_to, solve
from logon.lf import kernel_for
from logon.model import Inhabitable, Typing, equals_structural
from logon.render import render_term
from logon.structure import CheckTask, validate

FIXTURES = Path(logon.__file__).parent / "fixtures"

LF_TEXT = (FIXTURES / "lf.mmt").read_text(encoding="utf-8")
PL_TEXT = (FIXTURES / "pl.mmt").read_text(encoding="utf-8")


def build(pl_text=PL_TEXT):
    docs = [parse_document(LF_TEXT, "lf.mmt"), parse_document(pl_text, "pl.mmt")]
    validation = validate(docs)
    rules = kernel_for(validation)
    return validation, rules, check_library(validation, rules)


@pytest.fixture(scope="module")
def checked():
    return build()


@pytest.fixture(scope="module")
def validation(checked):
    return checked[0]


@pytest.fixture(scope="module")
def rules(checked):
    return checked[1]


@pytest.fixture(scope="module")
def lib(checked):
    return checked[2]


@pytest.fixture(scope="module")
def table(validation):
    return validation.tables["PL"]


def inject(unit_text):
    """Add one constant declaration at the end of theory PL."""
    return PL_TEXT.replace("❚", unit_text + " ❚")


# --- the shipped fixtures check clean ------------------------------------------


def test_fixture_library_checks_without_problems(lib):
    assert lib.problems == ()
    assert lib.ok
    assert set(lib.types) == {
        "PL?prop",
        "PL?ded",
        "PL?imp",
        "PL?and",
        "PL?andI",
        "PL?impI",
        "PL?example",
    }


def test_validated_types_render_like_their_sources(lib, table):
    expected = {
        "PL?prop": "type",
        "PL?ded": "prop→type",
        "PL?imp": "prop→prop→prop",
        "PL?and": "prop→prop→prop",
        "PL?andI": "{A} {B} ded A→ded B→ded (A∧B)",
        "PL?impI": "{A} {B} (ded A→ded B)→ded (A⟹B)",
        "PL?example": "{A} ded (A⟹(A∧A))",
    }
    for qname, text in expected.items():
        assert render_term(lib.types[qname], table) == text, qname


def test_binder_type_metas_resolve_in_validated_types(lib, table):
    # {A} {B} binders get their types filled in during validation
    assert (
        render_term(lib.types["PL?andI"], table, show_inferred=True)
        == "{A:prop} {B:prop} ded A→ded B→ded (A∧B)"
    )


# --- the example proof: solved substitution and elaboration ----------------------


EXAMPLE_DF = "PL?example!df"

# deep-resolved solutions of every meta of example's definiens unit
SIGMA_ORACLE = {
    "/X1": "prop",
    "/X2": "[A] A",
    "/X3": "[A] A∧A",
    "/X4": "[A] ded A",
    "/X5": "[A] [p] A",
    "/X6": "[A] [p] A",
    "/X7": "prop",
}


def test_example_definiens_substitution_matches_oracle(lib, table):
    res = lib.results[EXAMPLE_DF]
    assert res.ok
    assert set(res.substitution) == set(SIGMA_ORACLE)
    for name, text in SIGMA_ORACLE.items():
        assert render_term(res.substitution[name], table) == text, name
        assert res.solved[name]
        assert res.substitution[name].inferred


def test_example_elaborated_definiens_exact_strings(lib, table):
    res = lib.results[EXAMPLE_DF]
    assert (
        render_term(res.elaborated, table, show_inferred=True)
        == "[A:prop] impI A (A∧A) ([p:ded A] andI A A p p)"
    )
    assert render_term(res.elaborated, table) == "[A] impI [p] andI p p"


def test_example_elaboration_erases_back_to_parsed(lib, validation, table):
    res = lib.results[EXAMPLE_DF]
    task = next(t for t in validation.tasks if t.slot == EXAMPLE_DF)
    parsed = task.judgment.subject
    metas = frozenset(e.name for e in task.metas)
    assert erases_to(res.elaborated, parsed, metas, "LF?apply")


def test_example_expected_type_is_instantiated(lib, table):
    res = lib.results[EXAMPLE_DF]
    assert render_term(res.expected, table) == "{A} ded (A⟹(A∧A))"
    assert render_term(res.expected, table, show_inferred=True) == "{A:prop} ded (A⟹(A∧A))"


def test_recorded_dependencies(lib):
    deps = {slot: lib.results[slot].dependencies for slot in lib.results}
    assert deps["PL?prop!tp"] == frozenset()
    assert deps["PL?ded!tp"] == frozenset()
    assert deps["PL?imp!tp"] == frozenset({"PL?prop!tp"})
    assert deps["PL?and!tp"] == frozenset({"PL?prop!tp"})
    assert deps["PL?andI!tp"] == frozenset({"PL?ded!tp", "PL?and!tp"})
    assert deps["PL?impI!tp"] == frozenset({"PL?ded!tp", "PL?imp!tp"})
    assert deps["PL?example!tp"] == frozenset(
        {"PL?ded!tp", "PL?imp!tp", "PL?and!tp"}
    )
    # impI and andI are applied; `and` is looked up when the solved
    # implicit argument A∧A is itself typechecked on retry
    assert deps[EXAMPLE_DF] == frozenset({"PL?impI!tp", "PL?andI!tp", "PL?and!tp"})


# --- error recovery: one failed judgment, everything else still solved ------------


def test_faulty_definiens_yields_single_diagnostic_with_log(table):
    text = inject("equiv : prop → prop → prop = [x] [y] (x ⟹ y) ∧ ded ❙")
    validation, rules, lib = build(text)
    errors = [p for p in lib.problems if p.severity == "error"]
    assert len(errors) == 1
    err = errors[0]
    assert err.message == "found prop→type, expected prop"
    assert "ded : prop" in err.log
    # the diagnostic points at the offending token
    assert err.source_ref is not None
    assert text[err.source_ref.start : err.source_ref.end] == "ded"

    res = lib.results["PL?equiv!df"]
    assert not res.ok
    assert res.solved == {"/X1": True, "/X2": True}
    assert render_term(res.substitution["/X1"], table) == "prop"
    # the second binder's type meta is raised over the first binder
    assert render_term(res.substitution["/X2"], table) == "[x] prop"
    # the partial AST keeps the solved binder types
    assert (
        render_term(res.elaborated, table, show_inferred=True)
        == "[x:prop] [y:prop] (x⟹y)∧ded"
    )


def test_faulty_definiens_log_records_the_derivation_branch(table):
    text = inject("equiv : prop → prop → prop = [x] [y] (x ⟹ y) ∧ ded ❙")
    _, _, lib = build(text)
    err = next(p for p in lib.problems if p.severity == "error")
    # the branch runs from the root typing goal down to the failure
    assert err.log[-1] == "prop→type = prop"
    position = err.log.index("ded : prop")
    assert position == len(err.log) - 2


# --- definiens-only constants get a stored type ------------------------------------


def test_definiens_only_constant_infers_its_type(table):
    text = inject("conj2 = [A] [B] [p : ded A] [q : ded B] andI p q ❙")
    _, _, lib = build(text)
    assert lib.ok
    assert render_term(lib.types["PL?conj2"], table) == "{A} {B} ded A→ded B→ded (A∧B)"
    assert lib.type_slots["PL?conj2"] == "PL?conj2!df"


def test_definiens_only_alias_shares_the_aliased_type(table):
    # example has no notation, so the bare name parses as a plain reference
    text = inject("example2 = example ❙")
    _, _, lib = build(text)
    assert lib.ok
    assert equals_structural(lib.types["PL?example2"], lib.types["PL?example"])
    assert lib.results["PL?example2!df"].dependencies == frozenset({"PL?example!tp"})


def test_self_referential_definiens_is_refused(table):
    text = inject("selfish = selfish ❙")
    _, _, lib = build(text)
    errors = [p for p in lib.problems if p.severity == "error"]
    assert any(
        "'selfish' has no validated type here" in p.message for p in errors
    )


def test_sort_check_rejects_non_sort_types(table):
    text = inject("bad : example ❙")
    _, _, lib = build(text)
    errors = [p for p in lib.problems if p.severity == "error"]
    assert len(errors) == 1
    assert errors[0].message.startswith("not a valid sort: ")


# --- re-solving a validated unit is a no-op -------------------------------------


def recheck(lib, validation, slot):
    res = lib.results[slot]
    task = next(t for t in validation.tasks if t.slot == slot)
    if isinstance(task.judgment, Inhabitable):
        judgment = Inhabitable(task.theory, res.elaborated)
    else:
        judgment = Typing(task.theory, res.elaborated, res.expected)
    qname = slot.rsplit("!", 1)[0]

    def lookup(q):
        if q == qname:
            return None
        if q in lib.types:
            return (lib.type_slots[q], lib.types[q])
        return None

    redo = CheckTask(slot, task.theory, judgment, ())
    return solve(redo, kernel_for(validation), lookup, validation.tables[task.theory])


def test_resolving_validated_units_is_idempotent(lib, validation):
    for slot, res in lib.results.items():
        again = recheck(lib, validation, slot)
        assert again.ok, (slot, again.problems)
        assert again.substitution == {}, slot
        assert equals_structural(again.elaborated, res.elaborated), slot
        assert again.dependencies == res.dependencies, slot


# --- holes and hints ----------------------------------------------------------------


HOLE_START = "[A] ⟨ ded (A ⟹ (A ∧ A)) ⟩"


def with_example_definiens(df_text):
    return PL_TEXT.replace("[A] impI [p] andI p p", df_text)


def hints_at(rules, lib, hole):
    out = []
    for completion in rules.completions:
        out.extend(completion(rules, lib, hole))
    return out


def test_hole_is_recorded_with_span_context_and_type(table):
    text = with_example_definiens(HOLE_START)
    assert HOLE_START in text
    _, rules, lib = build(text)
    res = lib.results[EXAMPLE_DF]
    assert len(res.holes) == 1
    hole = res.holes[0]
    assert text[hole.source_ref.start : hole.source_ref.end] == "⟨ ded (A ⟹ (A ∧ A)) ⟩"
    assert [e.name for e in hole.ctx] == ["A"]
    assert render_term(hole.expected, table) == "ded (A⟹(A∧A))"
    assert hole.slot == EXAMPLE_DF
    # the only failure is the binder type the hole leaves unconstrained
    errors = [p for p in lib.problems if p.severity == "error"]
    assert len(errors) == 1
    assert errors[0].message.startswith("could not infer a value for ")


def test_first_round_offers_exactly_the_implication_introduction(table):
    text = with_example_definiens(HOLE_START)
    _, rules, lib = build(text)
    hole = lib.results[EXAMPLE_DF].holes[0]
    hints = hints_at(rules, lib, hole)
    assert [h.head_name for h in hints] == ["impI"]
    assert hints[0].rendered_text == "impI ⟨ded A→ded (A∧A)⟩"
    assert hints[0].remaining_goals == 1


def test_greedy_hint_application_completes_the_proof_in_four_rounds(table):
    text = with_example_definiens(HOLE_START)
    seen_heads = []
    for round_no in range(1, 5):
        _, rules, lib = build(text)
        holes = sorted(
            lib.results[EXAMPLE_DF].holes, key=lambda h: h.source_ref.start, reverse=True
        )
        assert holes, f"no holes left before round {round_no}"
        heads = []
        for hole in holes:
            hints = hints_at(rules, lib, hole)
            assert hints, f"no hint for hole in round {round_no}"
            top = hints[0]
            heads.append(top.head_name)
            start, end = hole.source_ref.start, hole.source_ref.end
            text = text[:start] + top.rendered_text + text[end:]
        seen_heads.append(heads)
        if "⟨" not in text:
            break
    assert seen_heads == [["impI"], ["[p]"], ["andI"], ["p", "p"]]

    _, rules, lib = build(text)
    res = lib.results[EXAMPLE_DF]
    assert lib.problems == ()
    assert res.holes == ()
    assert "[A] impI [p] andI p p" in text
    baseline, _, base_lib = build()
    assert equals_structural(res.elaborated, base_lib.results[EXAMPLE_DF].elaborated)


def test_hole_constant_is_not_its_own_hint_candidate(table):
    # a later twin of example would be offered; the constant itself is not
    text = inject("goal : {A} ded (A ⟹ (A ∧ A)) = [A] ⟨ ded (A ⟹ (A ∧ A)) ⟩ ❙")
    _, rules, lib = build(text)
    hole = lib.results["PL?goal!df"].holes[0]
    hints = hints_at(rules, lib, hole)
    assert [h.head_name for h in hints] == ["example", "impI"]
    assert hints[0].remaining_goals == 0
    assert hints[0].rendered_text == "example A"


def test_lambda_hint_offers_fresh_binder_for_function_holes(table):
    text = with_example_definiens("[A] impI ⟨ ded A → ded (A ∧ A) ⟩")
    _, rules, lib = build(text)
    hole = lib.results[EXAMPLE_DF].holes[0]
    hints = hints_at(rules, lib, hole)
    assert [h.head_name for h in hints] == ["[p]"]
    assert hints[0].rendered_text == "[p] ⟨ded (A∧A)⟩"
    assert hints[0].remaining_goals == 1


def test_context_variables_rank_before_partial_hints(table):
    text = with_example_definiens("[A] impI [p] andI ⟨ ded A ⟩ p")
    _, rules, lib = build(text)
    hole = lib.results[EXAMPLE_DF].holes[0]
    hints = hints_at(rules, lib, hole)
    assert hints[0].head_name == "p"
    assert hints[0].remaining_goals == 0
    assert hints[0].rendered_text == "p"
