from __future__ import annotations

import json

import httpx
import pytest

from triz_agents.conversation import ToolCall
from triz_agents.tools import (
    CONTRADICTION_MATRIX,
    INVENTIVE_PRINCIPLES,
    TRIZ_FEATURES,
    TRIZ_RAG,
    WEB_SEARCH,
    FixtureSearch,
    build_registry,
    load_corpus,
)
from triz_agents.tools.registry import BadArguments, Tool, ToolDescriptor, ToolParam, ToolRegistry, ToolResult
from triz_agents.tools.search import (
    EmptyQuery,
    MissFixture,
    ProviderFailure,
    SearchResult,
    TavilySearch,
    normalize_query,
    web_search,
)
from triz_agents.tools.triz import EMPTY_CELL_TEXT

from conftest import SEARCH_FIXTURES, TRIZ_CORPUS

FIXTURES = {
    "Gantry crane sway control": [
        {"url": "https://example.org/a", "content": "input shaping"},
        {"url": "https://example.org/b", "content": "anti-sway"},
    ]
}


@pytest.fixture
def registry(kb):
    reg = build_registry(kb, FixtureSearch(FIXTURES), load_corpus(TRIZ_CORPUS))
    reg.grant("TRIZSpecialist", [WEB_SEARCH, TRIZ_FEATURES, CONTRADICTION_MATRIX, INVENTIVE_PRINCIPLES, TRIZ_RAG])
    reg.grant("MechanicalEngineer", [WEB_SEARCH])
    return reg


def call(name, **args):
    return ToolCall("c1", name, json.dumps(args))


def test_toolsets(registry):
    assert [d.name for d in registry.toolset("TRIZSpecialist")] == [
        WEB_SEARCH, TRIZ_FEATURES, CONTRADICTION_MATRIX, INVENTIVE_PRINCIPLES, TRIZ_RAG
    ]
    assert [d.name for d in registry.toolset("MechanicalEngineer")] == [WEB_SEARCH]
    assert registry.toolset("ProjectManager") == []


def test_registry_rejects_duplicates_and_unknown_grants(kb):
    reg = ToolRegistry()
    t = Tool(ToolDescriptor("x", "d"), lambda a: "r")
    reg.register(t)
    with pytest.raises(ValueError):
        reg.register(t)
    with pytest.raises(KeyError):
        reg.grant("A", ["y"])


def test_matrix_tool(registry):
    r = registry.dispatch("TRIZSpecialist", call(CONTRADICTION_MATRIX, improving=9, worsening=13))
    assert r.ok and r.call_id == "c1"
    assert r.content.splitlines() == [
        "Improving: 9. Speed",
        "Worsening: 13. Stability of the object's composition",
        "Recommended inventive principles:",
        "1. Principle 28: Mechanics substitution",
        "2. Principle 33: Homogeneity",
        "3. Principle 1: Segmentation",
        "4. Principle 18: Mechanical vibration",
    ]


def test_matrix_tool_by_name(registry):
    r = registry.dispatch("TRIZSpecialist", call(CONTRADICTION_MATRIX, improving="Speed", worsening="13"))
    assert r.ok and "Principle 28" in r.content


def test_matrix_empty_cell_is_success(registry):
    r = registry.dispatch("TRIZSpecialist", call(CONTRADICTION_MATRIX, improving=1, worsening=2))
    assert r.ok
    assert EMPTY_CELL_TEXT in r.content


def test_matrix_same_parameter_is_failure(registry):
    r = registry.dispatch("TRIZSpecialist", call(CONTRADICTION_MATRIX, improving=9, worsening=9))
    assert not r.ok and r.content.startswith("Error calling contradiction_matrix")


def test_features_tool(registry):
    r = registry.dispatch("TRIZSpecialist", ToolCall("c2", TRIZ_FEATURES, "{}"))
    lines = r.content.splitlines()
    assert len(lines) == 39
    assert lines[0].startswith("1. ") and lines[8] == "9. Speed"


def test_principles_tool(registry, kb):
    r = registry.dispatch("TRIZSpecialist", call(INVENTIVE_PRINCIPLES, ids=[35, 1]))
    assert r.ok
    assert r.content.startswith("1. Principle 35: ")
    assert "2. Principle 1: Segmentation" in r.content
    for sub in kb.principle(1).sub_principles:
        assert sub in r.content


def test_principles_tool_unknown_id(registry):
    r = registry.dispatch("TRIZSpecialist", call(INVENTIVE_PRINCIPLES, ids=[41]))
    assert not r.ok
    assert "41" in r.content


@pytest.mark.parametrize(
    "raw,fragment",
    [
        ("{not json", "not valid JSON"),
        ("[1, 2]", "JSON object"),
        ('{"ids": "1,2"}', "expected array"),
        ('{"ids": [1, true]}', "every item"),
        ("{}", "is required"),
    ],
)
def test_bad_arguments(registry, raw, fragment):
    r = registry.dispatch("TRIZSpecialist", ToolCall("c1", INVENTIVE_PRINCIPLES, raw))
    assert not r.ok
    assert fragment in r.content


def test_ungranted_tool(registry):
    r = registry.dispatch("MechanicalEngineer", call(CONTRADICTION_MATRIX, improving=9, worsening=13))
    assert not r.ok and "unknown tool" in r.content
    r = registry.dispatch("TRIZSpecialist", call("teleport"))
    assert not r.ok


def test_handler_crash_is_contained():
    reg = ToolRegistry()
    reg.register(Tool(ToolDescriptor("boom", "d"), lambda a: 1 / 0))
    reg.grant("A", ["boom"])
    r = reg.dispatch("A", ToolCall("c", "boom", "{}"))
    assert not r.ok and r.diagnostics


def test_tool_result_requires_content():
    with pytest.raises(ValueError):
        ToolResult("c", "")


def test_schema_shape():
    d = ToolDescriptor("t", "d", (ToolParam("a", "integer", alt_types=("string",)), ToolParam("b", "string", required=False)))
    schema = d.to_wire()["function"]["parameters"]
    assert schema["required"] == ["a"]
    assert schema["properties"]["a"]["anyOf"] == [{"type": "integer"}, {"type": "string"}]
    with pytest.raises(BadArguments):
        d.parse_arguments('{"a": 1.5}')


def test_rag_tool(registry):
    r = registry.dispatch("TRIZSpecialist", call(TRIZ_RAG, query="physical contradiction separation"))
    assert r.ok
    assert "physical_contradictions.md" in r.content


# -- web search --------------------------------------------------------------------


def test_web_search_tool_returns_json(registry):
    r = registry.dispatch("MechanicalEngineer", call(WEB_SEARCH, query="  gantry CRANE   sway control "))
    assert r.ok
    rows = json.loads(r.content)
    assert rows == FIXTURES["Gantry crane sway control"]


def test_web_search_empty_query(registry):
    r = registry.dispatch("MechanicalEngineer", call(WEB_SEARCH, query="   "))
    assert not r.ok and "must not be empty" in r.content
    with pytest.raises(EmptyQuery):
        web_search(FixtureSearch({}), "")


def test_fixture_miss(registry):
    r = registry.dispatch("MechanicalEngineer", call(WEB_SEARCH, query="unknown topic"))
    assert not r.ok
    with pytest.raises(MissFixture):
        FixtureSearch({}).search("x", 3)


def test_web_search_caps_k():
    s = FixtureSearch(FIXTURES)
    assert len(web_search(s, "gantry crane sway control", 1)) == 1
    with pytest.raises(ValueError):
        web_search(s, "gantry crane sway control", 0)


def test_normalize_query():
    assert normalize_query("  A  b\tC ") == "a b c"


def test_shipped_search_fixtures_load():
    s = FixtureSearch.from_file(SEARCH_FIXTURES)
    assert s._results


def test_tavily(monkeypatch):
    monkeypatch.setenv("TAVILY_API_KEY", "tv-key")
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        assert request.headers["authorization"] == "Bearer tv-key"
        return httpx.Response(
            200,
            json={"query": "q", "results": [{"url": "u1", "content": "c1", "score": 0.9}, {"url": "u2", "content": "c2"}]},
        )

    t = TavilySearch(transport=httpx.MockTransport(handler))
    assert t.search("q", 1) == [SearchResult("u1", "c1")]
    assert seen == [{"query": "q", "max_results": 1}]


def test_tavily_failures(monkeypatch):
    monkeypatch.delenv("TAVILY_API_KEY", raising=False)
    with pytest.raises(ProviderFailure):
        TavilySearch()
    monkeypatch.setenv("TAVILY_API_KEY", "k")
    t = TavilySearch(transport=httpx.MockTransport(lambda r: httpx.Response(432, text="limit")))
    with pytest.raises(ProviderFailure) as info:
        t.search("q", 3)
    assert info.value.status == 432
    t = TavilySearch(transport=httpx.MockTransport(lambda r: httpx.Response(200, json={"nope": 1})))
    with pytest.raises(ProviderFailure):
        t.search("q", 3)
