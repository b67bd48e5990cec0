"""Top-level acceptance: the eight headline behaviors, one test each.

Each test is self-contained and runs headless. Randomized sections use
fixed seeds so failures reproduce; every expected string was computed
from the shipped rules and frozen here.
"""

import json
import random
import time
from pathlib import Path

import pytest

import logon
from logon import changes, cli
from logon.changes import build_graph, check_incremental
from logon.document import parse_document
from logon.engine import check_library, erases_to, solve
from logon.index import (
    IndexEntry,
    SearchQuery,
    TermIndex,
    _head_key,
    match_pattern,
    parse_query,
    search,
    term_index,
)
from logon.lf import kernel_for
from logon.model import (
    Complex,
    ConstRef,
    ContextEntry,
    Inhabitable,
    Typing,
    VarRef,
    equals_structural,
    subterms_with_paths,
)
from logon.project import build_project, load_config
from logon.render import render_term
from logon.structure import CheckTask, validate
from logon.termparse import parse_term_text, parse_unit

FIXTURES = Path(logon.__file__).parent / "fixtures"
LF_TEXT = (FIXTURES / "lf.mmt").read_text(encoding="utf-8")
PL_TEXT = (FIXTURES / "pl.mmt").read_text(encoding="utf-8")
EXAMPLE_DF = "PL?example!df"


def build(pl_text=PL_TEXT, extra=None):
    docs = [parse_document(LF_TEXT, "lf.mmt"), parse_document(pl_text, "pl.mmt")]
    for name, text in (extra or {}).items():
        docs.append(parse_document(text, name))
    validation = validate(docs)
    rules = kernel_for(validation)
    return validation, rules, check_library(validation, rules)


def fixture_project(tmp_path):
    src = tmp_path / "source"
    src.mkdir()
    (src / "lf.mmt").write_text(LF_TEXT, encoding="utf-8")
    (src / "pl.mmt").write_text(PL_TEXT, encoding="utf-8")
    return tmp_path


# --- 1: whole-project check of the shipped fixtures ------------------------------


def test_c1_project_build_of_fixtures_is_clean_and_fast(tmp_path, capsys):
    root = fixture_project(tmp_path)
    t0 = time.perf_counter()
    rc = cli.main(["build", str(root), "--json"])
    elapsed = time.perf_counter() - t0
    report = json.loads(capsys.readouterr().out)
    assert rc == 0
    assert report["ok"] is True and report["errors"] == 0
    assert [(f["name"], f["status"]) for f in report["files"]] == [
        ("lf.mmt", "built"),
        ("pl.mmt", "built"),
    ]
    assert elapsed < 5.0


# --- 2: elaboration inserts implicit arguments and erases back --------------------


def test_c2_elaborated_definiens_shows_implicits_and_erases_back():
    validation, rules, lib = build()
    res = lib.results[EXAMPLE_DF]
    table = validation.tables["PL"]
    assert (
        render_term(res.elaborated, table, show_inferred=True)
        == "[A:prop] impI A (A∧A) ([p:ded A] andI A A p p)"
    )
    assert render_term(res.elaborated, table) == "[A] impI [p] andI p p"
    task = next(t for t in validation.tasks if t.slot == EXAMPLE_DF)
    metas = frozenset(e.name for e in task.metas)
    assert erases_to(res.elaborated, task.judgment.subject, metas, "LF?apply")


# --- 3: one diagnostic with the kernel log, partial result keeps solved metas -----


def test_c3_type_error_yields_one_logged_diagnostic_with_solved_binders():
    text = PL_TEXT.replace(
        "❚", "equiv : prop → prop → prop = [x] [y] (x ⟹ y) ∧ ded ❙ ❚"
    )
    validation, _, lib = build(text)
    errors = [p for p in lib.problems if p.severity == "error"]
    assert len(errors) == 1
    err = errors[0]
    assert "ded : prop" in err.log
    assert text[err.source_ref.start : err.source_ref.end] == "ded"

    table = validation.tables["PL"]
    res = lib.results["PL?equiv!df"]
    assert res.solved == {"/X1": True, "/X2": True}
    assert render_term(res.substitution["/X1"], table) == "prop"
    assert render_term(res.substitution["/X2"], table) == "[x] prop"
    assert (
        render_term(res.elaborated, table, show_inferred=True)
        == "[x:prop] [y:prop] (x⟹y)∧ded"
    )


# --- 4: greedy top-hint application finishes the proof ----------------------------


def test_c4_greedy_hint_rounds_reach_the_proof_within_four_steps():
    text = PL_TEXT.replace(
        "[A] impI [p] andI p p", "[A] ⟨ ded (A ⟹ (A ∧ A)) ⟩"
    )
    rounds = 0
    while rounds < 5:
        _, rules, lib = build(text)
        holes = sorted(
            lib.results[EXAMPLE_DF].holes,
            key=lambda h: h.source_ref.start,
            reverse=True,
        )
        if not holes:
            break
        for hole in holes:
            hints = []
            for completion in rules.completions:
                hints.extend(completion(rules, lib, hole))
            top = hints[0]
            s, e = hole.source_ref.start, hole.source_ref.end
            text = text[:s] + top.rendered_text + text[e:]
        rounds += 1
    assert rounds <= 4

    validation, _, lib = build(text)
    res = lib.results[EXAMPLE_DF]
    assert lib.problems == ()
    assert res.holes == ()
    assert "[A] impI [p] andI p p" in text
    base_validation, _, base_lib = build()
    final_task = next(t for t in validation.tasks if t.slot == EXAMPLE_DF)
    base_task = next(t for t in base_validation.tasks if t.slot == EXAMPLE_DF)
    assert equals_structural(final_task.judgment.subject, base_task.judgment.subject)
    assert equals_structural(res.elaborated, base_lib.results[EXAMPLE_DF].elaborated)


# --- 5: search hits on the fixtures, then brute-force agreement -------------------


def test_c5_search_hit_sets_and_brute_force_agreement_on_random_corpora():
    validation, _, lib = build()
    table = validation.tables["PL"]
    terms = term_index(lib)

    hits = search(terms, parse_query("$x: x∧x", table))
    assert [
        (h.slot, tuple(h.path), render_term(h.substitution["x"], table), h.inferred)
        for h in hits
    ] == [
        (EXAMPLE_DF, ("arg:0", "arg:2"), "A", True),
        ("PL?example!tp", ("arg:0", "arg:1", "arg:2"), "A", False),
    ]
    for h in hits:
        assert PL_TEXT[h.source_ref.start : h.source_ref.end] == "A ∧ A"

    hits = search(terms, parse_query("$x,$y,$z: x⟹(y∧z)", table))
    assert len(hits) == 1
    h = hits[0]
    assert h.slot == "PL?example!tp" and not h.inferred
    assert {k: render_term(t, table) for k, t in h.substitution.items()} == {
        "x": "A",
        "y": "A",
        "z": "A",
    }
    assert PL_TEXT[h.source_ref.start : h.source_ref.end] == "A ⟹ (A ∧ A)"

    # randomized corpora: the index must agree with a literal scan
    rng = random.Random(1789)
    consts = [ConstRef("T?a"), ConstRef("T?b"), ConstRef("T?c")]

    def gen(depth, scope, var_chance=0.0):
        roll = rng.random()
        if roll < var_chance:
            return VarRef(rng.choice(("qx", "qy")))
        if depth <= 0 or roll < 0.35 + var_chance:
            if scope and rng.random() < 0.4:
                return VarRef(rng.choice(scope))
            return rng.choice(consts)
        kind = rng.random()
        if kind < 0.4:
            return Complex("T?f", (), (gen(depth - 1, scope, var_chance),))
        if kind < 0.8:
            return Complex(
                "T?g",
                (),
                (gen(depth - 1, scope, var_chance), gen(depth - 1, scope, var_chance)),
            )
        x = f"v{rng.randrange(4)}"
        return Complex(
            "T?bind", (ContextEntry(x),), (gen(depth - 1, scope + [x], var_chance),)
        )

    def make_index(corpus):
        entries, by_head = [], {}
        for slot, t in corpus:
            for path, sub in subterms_with_paths(t):
                e = IndexEntry(slot, path, sub, None, True)
                by_head.setdefault(_head_key(sub), []).append(len(entries))
                entries.append(e)
        return TermIndex(tuple(entries), {h: tuple(p) for h, p in by_head.items()})

    total_hits = 0
    for corpus_no in range(1000):
        corpus = [
            (f"T?t{i}!df", gen(rng.randint(1, 3), []))
            for i in range(rng.randint(2, 5))
        ]
        idx = make_index(corpus)
        pattern = gen(rng.randint(1, 2), [], var_chance=0.35)
        names = tuple(
            sorted(
                {
                    s.name
                    for _, s in subterms_with_paths(pattern)
                    if isinstance(s, VarRef) and s.name in ("qx", "qy")
                }
            )
        )
        q = SearchQuery(names, pattern)
        brute = sorted(
            (slot, tuple(path))
            for slot, t in corpus
            for path, sub in subterms_with_paths(t)
            if match_pattern(q.pattern, q.vars, sub) is not None
        )
        assert brute == sorted((h.slot, tuple(h.path)) for h in search(idx, q)), corpus_no
        total_hits += len(brute)
    assert total_hits > 1000  # the corpora actually exercise matching


# --- 6: incremental checking does minimal work and agrees with full rebuilds ------

TWO_CONSTANT_SRC = (
    "theory S = include LF ❙ base : type ❙ w : base ❙ u : base ❙ "
    "c : base = w ❙ d : base = c ❙ l : base = ([x : base] x) w ❙ ❚"
)


def test_c6_minimal_revalidation_and_fuzzed_incremental_equivalence(monkeypatch):
    calls = []
    orig = changes._revalidate

    def spy(g, sid, index):
        calls.append(sid)
        return orig(g, sid, index)

    monkeypatch.setattr(changes, "_revalidate", spy)

    # definiens edit with the type unchanged: the one slot, nothing else
    g = build_graph({"lf.mmt": LF_TEXT, "s.mmt": TWO_CONSTANT_SRC})
    assert g.diagnostics() == ()
    assert sorted(g.nodes["S?d!df"].validated.dependencies) == ["S?c!tp"]
    calls.clear()
    check_incremental(
        g, "s.mmt", TWO_CONSTANT_SRC.replace("c : base = w", "c : base = u")
    )
    assert calls == ["S?c!df"]

    # type edit: both own slots plus the definiens that references c
    g = build_graph({"lf.mmt": LF_TEXT, "s.mmt": TWO_CONSTANT_SRC})
    calls.clear()
    check_incremental(
        g, "s.mmt", TWO_CONSTANT_SRC.replace("c : base = w", "c : type = w")
    )
    assert sorted(calls) == ["S?c!df", "S?c!tp", "S?d!df"]

    # fuzzed edit scripts: incremental state equals a fresh build, with
    # never more revalidations than the fresh build performs
    variants = [
        TWO_CONSTANT_SRC,
        TWO_CONSTANT_SRC.replace("c : base = w", "c : base = u"),
        TWO_CONSTANT_SRC.replace("c : base = w", "c : type = w"),
        TWO_CONSTANT_SRC.replace("[x : base] x", "[y : base] y"),
        TWO_CONSTANT_SRC.replace("❚", "extra : base ❙ ❚"),
        TWO_CONSTANT_SRC.replace("d : base = c ❙ ", ""),
        TWO_CONSTANT_SRC.replace("c : base = w", "c :  base = w"),
        "// note\n" + TWO_CONSTANT_SRC,
        TWO_CONSTANT_SRC.replace("d : base = c", "d : base = w"),
        TWO_CONSTANT_SRC.replace("w : base", "w : type"),
    ]

    def hashes(g):
        return {s: n.validated_hash for s, n in g.nodes.items()}

    full_cache = {}

    def full(text):
        if text not in full_cache:
            fresh = build_graph({"lf.mmt": LF_TEXT, "s.mmt": text})
            full_cache[text] = (
                set(fresh.nodes),
                hashes(fresh),
                sorted(fresh.diagnostics()),
                len(fresh.nodes),
            )
        return full_cache[text]

    rng = random.Random(31415)
    for script_no in range(500):
        g = build_graph({"lf.mmt": LF_TEXT, "s.mmt": TWO_CONSTANT_SRC})
        for _ in range(rng.randint(1, 3)):
            text = rng.choice(variants)
            calls.clear()
            check_incremental(g, "s.mmt", text)
            revalidations = len(calls)
            nodes, node_hashes, diags, slot_count = full(text)
            assert set(g.nodes) == nodes, script_no
            assert hashes(g) == node_hashes, script_no
            assert sorted(g.diagnostics()) == diags, script_no
            assert revalidations <= slot_count, script_no


# --- 7: parse/render round-trips and byte-stable caching --------------------------


def test_c7_fixture_round_trips_and_cache_byte_stability(tmp_path):
    validation, _, _ = build()
    units = 0
    for name, text in (("lf.mmt", LF_TEXT), ("pl.mmt", PL_TEXT)):
        doc = parse_document(text, name)
        for unit in doc.units():
            table = validation.tables[unit.slot.split("?", 1)[0]]
            r1 = parse_unit(unit, table)
            r2 = parse_term_text(render_term(r1.term, table), table)
            assert equals_structural(r1.term, r2.term), unit.slot
            units += 1
    # pl.mmt: seven typed constants plus the worked example's definiens
    assert units == 8

    root = fixture_project(tmp_path)
    config = load_config(root)
    first = build_project(config)
    assert first.ok
    cache_files = sorted(config.cache_dir.rglob("*.json"))
    assert cache_files
    snapshot = {p: p.read_bytes() for p in cache_files}
    second = build_project(config, force=True)
    assert second.ok
    assert {p: p.read_bytes() for p in cache_files} == snapshot


# --- 8: solver invariants on the fixtures and generated well-typed terms ----------

GENERATOR_SIG = "theory G = include LF ❙ o : type ❙ k : o ❙ f : o → o ❙ g : o → o → o ❙ ❚"


def _invariants(validation, rules, lib, slots, spot_removals):
    """Re-solving must be a fixed point; recorded lookups must suffice."""
    tasks = {t.slot: t for t in validation.tasks}

    def lookup_for(qname, allowed=None):
        def lookup(q):
            if q == qname:
                return None
            if q in lib.types and (allowed is None or lib.type_slots[q] in allowed):
                return (lib.type_slots[q], lib.types[q])
            return None

        return lookup

    removed = 0
    for slot in slots:
        res = lib.results[slot]
        task = tasks[slot]
        qname = slot.rsplit("!", 1)[0]
        table = validation.tables[task.theory]

        if res.ok:
            if isinstance(task.judgment, Inhabitable):
                j = Inhabitable(task.theory, res.elaborated)
            else:
                j = Typing(task.theory, res.elaborated, res.expected)
            redo = CheckTask(slot, task.theory, j, ())
            again = solve(redo, rules, lookup_for(qname), table)
            assert again.ok, (slot, again.problems)
            assert again.substitution == {}, slot
            assert equals_structural(again.elaborated, res.elaborated), slot

        restricted = solve(
            task, rules, lookup_for(qname, res.dependencies), table
        )
        assert restricted.ok == res.ok, slot
        assert equals_structural(restricted.elaborated, res.elaborated), slot
        assert restricted.dependencies == res.dependencies, slot

        if removed < spot_removals and res.dependencies:
            drop = sorted(res.dependencies)[0]
            damaged = solve(
                task, rules, lookup_for(qname, res.dependencies - {drop}), table
            )
            changed = (not damaged.ok) or any(
                p.severity == "error" for p in damaged.problems
            )
            assert changed, (slot, drop)
            removed += 1


def test_c8_solver_invariants_on_fixtures_and_generated_terms():
    validation, rules, lib = build()
    _invariants(validation, rules, lib, sorted(lib.results), spot_removals=5)

    rng = random.Random(20260821)
    fresh = iter(range(10**6))

    def value(depth, scope):
        roll = rng.random()
        if depth <= 0 or roll < 0.3:
            return rng.choice(["k"] + scope)
        return f"({function(depth - 1, scope)} {value(depth - 1, scope)})"

    def function(depth, scope):
        roll = rng.random()
        if depth <= 0 or roll < 0.4:
            return "f"
        if roll < 0.7:
            return f"(g {value(depth - 1, scope)})"
        x = f"x{next(fresh)}"
        return f"([{x} : o] {value(depth - 1, scope + [x])})"

    terms = [value(rng.randint(1, 5), []) for _ in range(1000)]
    body = " ".join(f"t{i} : o = {t} ❙" for i, t in enumerate(terms))
    validation, rules, lib = build(
        extra={"g.mmt": GENERATOR_SIG, "h.mmt": f"theory H = include G ❙ {body} ❚"}
    )
    assert not [p for p in lib.problems if p.severity == "error"]
    generated = sorted(s for s in lib.results if s.startswith("H?"))
    assert len(generated) == 2000  # a type and a definiens slot per constant
    _invariants(validation, rules, lib, generated, spot_removals=25)
