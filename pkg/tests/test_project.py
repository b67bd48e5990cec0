"""Project builds: cache skipping, determinism, round-trips, HTML."""

import json
import re
from html import unescape
from pathlib import Path

import pytest

import logon
from logon.document import parse_document
from logon.project import (
    ProjectError,
    build_project,
    discover_sources,
    file_dependencies,
    load_config,
    order_files,
    project_indexes,
    render_html,
    result_from_json,
    result_to_json,
    task_from_json,
    task_to_json,
)

FIXTURES = Path(logon.__file__).parent / "fixtures"
LF = (FIXTURES / "lf.mmt").read_text(encoding="utf-8")
PL = (FIXTURES / "pl.mmt").read_text(encoding="utf-8")

# breaks example's definiens: the inner proof now proves A instead of A∧A
PL_BAD = PL.replace("= [A] impI [p] andI p p", "= [A] impI [p] p")
assert PL_BAD != PL


def make_project(root: Path, files: dict[str, str]) -> Path:
    src = root / "source"
    src.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (src / name).write_text(text, encoding="utf-8")
    return root


def fixture_project(root: Path) -> Path:
    return make_project(root, {"lf.mmt": LF, "pl.mmt": PL})


def page_text(html: str) -> str:
    """Visible text of a page: tags plus style/script bodies stripped."""
    html = re.sub(r"<(style|script)[^>]*>.*?</\1>", "", html, flags=re.S)
    return unescape(re.sub(r"<[^>]+>", "", html))


# --- configuration ------------------------------------------------------------


def test_config_defaults(tmp_path):
    cfg = load_config(fixture_project(tmp_path))
    assert cfg.root == tmp_path.resolve()
    assert cfg.source_dir == cfg.root / "source"
    assert cfg.cache_dir == cfg.root / ".cache"
    assert cfg.includes == ("*.mmt",)


def test_config_file_and_env_override(tmp_path, monkeypatch):
    (tmp_path / "project.toml").write_text(
        '# build settings\nsource = "src"\ncache = work\ninclude = *.mmt, extra/*.mm\n'
    )
    cfg = load_config(tmp_path)
    assert cfg.source_dir == tmp_path.resolve() / "src"
    assert cfg.cache_dir == tmp_path.resolve() / "work"
    assert cfg.includes == ("*.mmt", "extra/*.mm")
    monkeypatch.setenv("LOGON_CACHE", "elsewhere")
    assert load_config(tmp_path).cache_dir == tmp_path.resolve() / "elsewhere"


def test_config_rejects_missing_dir_and_bad_lines(tmp_path):
    with pytest.raises(ProjectError):
        load_config(tmp_path / "nope")
    (tmp_path / "project.toml").write_text("just some words\n")
    with pytest.raises(ProjectError):
        load_config(tmp_path)


def test_missing_source_dir_is_fatal(tmp_path):
    cfg = load_config(tmp_path)
    with pytest.raises(ProjectError):
        discover_sources(cfg)


# --- build and cache -----------------------------------------------------------


def test_fresh_build_of_fixtures(tmp_path):
    rep = build_project(load_config(fixture_project(tmp_path)))
    assert [(f.name, f.status, f.errors) for f in rep.files] == [
        ("lf.mmt", "built", 0),
        ("pl.mmt", "built", 0),
    ]
    assert rep.errors == 0 and rep.ok
    names = sorted(p.name for p in (tmp_path / ".cache").iterdir())
    assert names == [
        "lf.mmt.json",
        "manifest.json",
        "pl.mmt.json",
        "relations.json",
        "terms.json",
    ]


def test_immediate_rebuild_skips_everything(tmp_path):
    cfg = load_config(fixture_project(tmp_path))
    build_project(cfg)
    rep = build_project(cfg)
    assert [(f.name, f.status) for f in rep.files] == [
        ("lf.mmt", "cached"),
        ("pl.mmt", "cached"),
    ]
    assert rep.errors == 0


def test_error_still_writes_cache_with_partial_ast(tmp_path):
    cfg = load_config(make_project(tmp_path, {"lf.mmt": LF, "pl.mmt": PL_BAD}))
    rep = build_project(cfg)
    assert rep.errors == 1 and not rep.ok
    assert [(f.name, f.errors) for f in rep.files] == [("lf.mmt", 0), ("pl.mmt", 1)]
    entry = json.loads((cfg.cache_dir / "pl.mmt.json").read_text())
    assert [d["msg"] for d in entry["diagnostics"]] == ["found A, expected A∧A"]
    slots = [s["task"]["slot"] for s in entry["slots"]]
    assert "PL?example!df" in slots and len(slots) == 8


def test_cache_bytes_identical_across_independent_builds(tmp_path):
    a = fixture_project(tmp_path / "a")
    b = fixture_project(tmp_path / "b")
    build_project(load_config(a))
    build_project(load_config(b))
    for f in sorted((a / ".cache").iterdir()):
        assert f.read_bytes() == (b / ".cache" / f.name).read_bytes(), f.name


def test_forced_rebuild_writes_identical_bytes(tmp_path):
    cfg = load_config(fixture_project(tmp_path))
    build_project(cfg)
    before = {p.name: p.read_bytes() for p in cfg.cache_dir.iterdir()}
    rep = build_project(cfg, force=True)
    assert all(f.status == "built" for f in rep.files)
    after = {p.name: p.read_bytes() for p in cfg.cache_dir.iterdir()}
    assert before == after


def test_round_trip_preserves_tasks_and_results(tmp_path):
    rep = build_project(load_config(fixture_project(tmp_path)))
    g = rep.graph
    assert g.nodes, "fixtures produce slots"
    for node in g.nodes.values():
        task = task_from_json(task_to_json(node.parsed, node.file), node.file)
        assert task == node.parsed  # includes refs and inferred flags via term eq
        res = result_from_json(result_to_json(node.validated, node.file), node.file)
        assert res == node.validated


def test_skipped_build_indexes_equal_forced_rebuild(tmp_path):
    cfg = load_config(fixture_project(tmp_path))
    build_project(cfg)
    skipped = build_project(cfg)
    assert all(f.status == "cached" for f in skipped.files)
    forced = build_project(cfg, force=True)
    rel_s, terms_s = project_indexes(skipped)
    rel_f, terms_f = project_indexes(forced)
    assert rel_s == rel_f
    assert terms_s.to_json() == terms_f.to_json()


def test_upstream_edit_invalidates_downstream_entry(tmp_path):
    root = fixture_project(tmp_path)
    cfg = load_config(root)
    build_project(cfg)
    (root / "source" / "lf.mmt").write_text(
        LF.replace("1 → 2 prec 5", "1 → 2 prec 6"), encoding="utf-8"
    )
    rep = build_project(cfg)
    assert [(f.name, f.status) for f in rep.files] == [
        ("lf.mmt", "built"),
        ("pl.mmt", "built"),
    ]
    assert rep.errors == 0
    rep = build_project(cfg)
    assert all(f.status == "cached" for f in rep.files)


def test_downstream_only_edit_keeps_upstream_cached(tmp_path):
    root = fixture_project(tmp_path)
    cfg = load_config(root)
    build_project(cfg)
    (root / "source" / "pl.mmt").write_text(PL_BAD, encoding="utf-8")
    rep = build_project(cfg)
    assert [(f.name, f.status) for f in rep.files] == [
        ("lf.mmt", "cached"),
        ("pl.mmt", "built"),
    ]
    assert rep.errors == 1


def test_corrupt_or_outdated_entry_rebuilds(tmp_path):
    cfg = load_config(fixture_project(tmp_path))
    build_project(cfg)
    (cfg.cache_dir / "pl.mmt.json").write_text("{not json", encoding="utf-8")
    rep = build_project(cfg)
    assert [(f.name, f.status) for f in rep.files] == [
        ("lf.mmt", "cached"),
        ("pl.mmt", "built"),
    ]
    entry = json.loads((cfg.cache_dir / "pl.mmt.json").read_text())
    entry["version"] = 0
    (cfg.cache_dir / "pl.mmt.json").write_text(json.dumps(entry), encoding="utf-8")
    rep = build_project(cfg)
    assert [f.status for f in rep.files] == ["cached", "built"]


def test_file_order_follows_cross_file_includes(tmp_path):
    t = "theory T = include PL ❙ idem : {A} ded (A ⟹ A) = [A] impI [p] p ❙ ❚"
    root = make_project(tmp_path, {"a_t.mmt": t, "lf.mmt": LF, "pl.mmt": PL})
    cfg = load_config(root)
    sources = discover_sources(cfg)
    docs = {n: parse_document(s, n) for n, s in sources.items()}
    assert file_dependencies(docs) == {
        "a_t.mmt": {"pl.mmt"},
        "lf.mmt": set(),
        "pl.mmt": {"lf.mmt"},
    }
    order, problem = order_files(docs)
    assert order == ["lf.mmt", "pl.mmt", "a_t.mmt"] and problem is None
    rep = build_project(cfg)
    assert rep.errors == 0
    assert [f.name for f in rep.files] == order
    assert "T?idem!df" in rep.graph.nodes


def test_include_cycle_reported_not_fatal(tmp_path):
    root = make_project(
        tmp_path,
        {
            "a.mmt": "theory A = include B ❙ x : y ❙ ❚",
            "b.mmt": "theory B = include A ❙ y : x ❙ ❚",
        },
    )
    rep = build_project(load_config(root))
    msgs = [p.message for p in rep.problems]
    assert any("include cycle across files" in m for m in msgs)
    assert not rep.ok


# --- HTML view -----------------------------------------------------------------


def test_render_pl_page_matches_tree_view(tmp_path):
    cfg = load_config(fixture_project(tmp_path))
    rep = build_project(cfg)
    paths = render_html(cfg, rep)
    assert sorted(p.name for p in paths) == [
        "index.html",
        "lf.mmt.html",
        "pl.mmt.html",
    ]
    text = page_text((tmp_path / "html" / "pl.mmt.html").read_text())
    assert "example : {A} ded (A⟹(A∧A))" in text


def test_render_inferred_copy_shows_implicit_arguments(tmp_path):
    cfg = load_config(fixture_project(tmp_path))
    render_html(cfg, build_project(cfg))
    page = (tmp_path / "html" / "pl.mmt.html").read_text()
    # the full copy is in the page but hidden until the toggle is checked
    assert "impI A (A∧A)" in page_text(page)
    assert ".full { display: none; }" in page
    assert "body.show-inferred .full { display: inline; }" in page
    assert 'id="inferred"' in page


def test_render_spans_carry_term_paths(tmp_path):
    cfg = load_config(fixture_project(tmp_path))
    render_html(cfg, build_project(cfg))
    page = (tmp_path / "html" / "pl.mmt.html").read_text()
    assert page.count("data-path=") > 20
    assert re.search(r'<span class="t" data-path="[^"]*">', page)


def test_render_empty_project_lists_nothing(tmp_path):
    (tmp_path / "source").mkdir()
    cfg = load_config(tmp_path)
    paths = render_html(cfg, build_project(cfg))
    assert [p.name for p in paths] == ["index.html"]
    index = (tmp_path / "html" / "index.html").read_text()
    assert "<li>" not in index
    assert "project files" in page_text(index)


def test_index_page_links_every_file(tmp_path):
    cfg = load_config(fixture_project(tmp_path))
    render_html(cfg, build_project(cfg))
    index = (tmp_path / "html" / "index.html").read_text()
    assert '<a href="lf.mmt.html">lf.mmt</a>' in index
    assert '<a href="pl.mmt.html">pl.mmt</a>' in index
