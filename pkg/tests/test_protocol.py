"""Schema conformance: live server traffic must validate against protocol/."""

import io
import json
from pathlib import Path

import jsonschema
import pytest

import logon
from logon.server import Session, serve_stdio

PROTOCOL = Path(__file__).resolve().parent.parent / "protocol"
FIXTURES = Path(logon.__file__).parent / "fixtures"
PL = (FIXTURES / "pl.mmt").read_text(encoding="utf-8")
HOLE_PL = PL.replace("= [A] impI [p] andI p p", "= [A] ⟨ded (A ⟹ (A ∧ A))⟩")


def schema(name: str) -> dict:
    return json.loads((PROTOCOL / f"{name}.schema.json").read_text(encoding="utf-8"))


@pytest.fixture()
def session(tmp_path):
    src = tmp_path / "source"
    src.mkdir()
    for f in FIXTURES.glob("*.mmt"):
        (src / f.name).write_text(f.read_text(encoding="utf-8"), encoding="utf-8")
    return Session(tmp_path)


def test_every_method_has_a_schema_and_vice_versa(session):
    methods = set(session.handle("initialize", {})["methods"])
    files = {p.name[: -len(".schema.json")] for p in PROTOCOL.glob("*.schema.json")}
    assert files == methods | {"envelope"}


# one representative call per endpoint; hole text exercises hint items
CALLS = [
    ("initialize", {}),
    ("didOpen", {"uri": "pl.mmt", "text": HOLE_PL}),
    ("completionsAt", {"uri": "pl.mmt", "offset": HOLE_PL.index("⟨") + 1}),
    ("didChange", {"uri": "pl.mmt", "version": 2, "text": PL}),
    ("typeAt", {"uri": "pl.mmt", "offset": PL.index("andI p p") + len("andI ")}),
    ("typeAt", {"uri": "pl.mmt", "offset": 0}),
    ("definitionAt", {"uri": "pl.mmt", "offset": PL.index("impI [p] andI") + len("impI [p] ")}),
    ("related", {"uri": "pl.mmt", "offset": PL.index("and : prop"), "relation": "inverse(RefersTo)"}),
    ("search", {"query": "$x: x∧x", "uri": "pl.mmt"}),
    ("search", {"query": "$x,$y,$z: x⟹(y∧z)"}),
    ("astOf", {"uri": "pl.mmt"}),
    ("subtermAt", {"uri": "pl.mmt", "range": [PL.index("(A ∧ A)") + 3, PL.index("(A ∧ A)") + 4]}),
    ("subtermAt", {"uri": "pl.mmt", "range": [0, 1]}),
    ("stats", {"uri": "pl.mmt"}),
    ("stats", {}),
    ("openLocation", {"uri": "pl.mmt", "range": [3, 9]}),
    ("pollNotifications", {}),
    ("didClose", {"uri": "pl.mmt"}),
    ("shutdown", {}),
]


def test_live_responses_validate_against_their_schemas(session):
    exercised = set()
    for method, params in CALLS:
        result = session.handle(method, params)
        jsonschema.validate(
            {"params": params, "result": result},
            schema(method),
            cls=jsonschema.Draft7Validator,
        )
        exercised.add(method)
    assert exercised == set(session.METHODS)


def test_stdio_lines_validate_against_the_envelope(session, tmp_path):
    requests = [
        {"id": 1, "method": "initialize", "params": {}},
        {"id": 2, "method": "didOpen", "params": {"uri": "pl.mmt"}},
        {"id": 3, "method": "openLocation", "params": {"uri": "pl.mmt", "range": [0, 2]}},
        {"id": 4, "method": "bogus", "params": {}},
        {"id": "five", "method": "didChange", "params": {"uri": "pl.mmt", "version": 1, "text": ""}},
        {"id": 6, "method": "shutdown", "params": {}},
    ]
    rin = io.StringIO("\n".join(json.dumps(r) for r in requests) + "\n")
    rout = io.StringIO()
    serve_stdio(session, rin, rout)
    envelope = schema("envelope")
    validator = jsonschema.Draft7Validator(envelope)
    seen_error_codes = set()
    for raw in requests:
        validator.validate(raw)
    for line in rout.getvalue().splitlines():
        msg = json.loads(line)
        validator.validate(msg)
        if "error" in msg:
            seen_error_codes.add(msg["error"]["code"])
    assert seen_error_codes == {"UnknownMethod", "StaleVersion"}
