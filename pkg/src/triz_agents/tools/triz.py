"""Tool adapters exposing the knowledge base, search and retrieval to agents."""

from __future__ import annotations

import json
from typing import Any, Mapping

from ..knowledge import KnowledgeBase, list_parameters, lookup_matrix, principle_details
from .rag import RagStore, rag_query
from .registry import BadArguments, Tool, ToolDescriptor, ToolParam
from .search import SearchProvider, web_search

WEB_SEARCH = "web_search"
TRIZ_FEATURES = "triz_features"
CONTRADICTION_MATRIX = "contradiction_matrix"
INVENTIVE_PRINCIPLES = "inventive_principles"
TRIZ_RAG = "triz_rag"

TRIZ_TOOL_NAMES = (TRIZ_FEATURES, CONTRADICTION_MATRIX, INVENTIVE_PRINCIPLES, TRIZ_RAG)

EMPTY_CELL_TEXT = "no inventive principles recorded for this pair"


def render_features(kb: KnowledgeBase) -> str:
    return "\n".join(f"{p.id}. {p.name}" for p in list_parameters(kb))


def render_matrix_cell(kb: KnowledgeBase, improving: int | str, worsening: int | str) -> str:
    imp = kb.resolve_parameter(improving)
    wor = kb.resolve_parameter(worsening)
    ids = lookup_matrix(kb, imp.id, wor.id)
    head = f"Improving: {imp.id}. {imp.name}\nWorsening: {wor.id}. {wor.name}"
    if not ids:
        return f"{head}\nResult: {EMPTY_CELL_TEXT}."
    lines = [f"{n}. Principle {p.id}: {p.name}" for n, p in enumerate(principle_details(kb, ids), start=1)]
    return head + "\nRecommended inventive principles:\n" + "\n".join(lines)


def render_principles(kb: KnowledgeBase, ids: list[int]) -> str:
    records = principle_details(kb, ids)
    if not records:
        return "No principle ids given."
    blocks = []
    for n, p in enumerate(records, start=1):
        block = [f"{n}. Principle {p.id}: {p.name}", f"   {p.description}"]
        block += [f"   - {s}" for s in p.sub_principles]
        blocks.append("\n".join(block))
    return "\n".join(blocks)


def triz_features_tool(kb: KnowledgeBase) -> Tool:
    return Tool(
        ToolDescriptor(TRIZ_FEATURES, "Return the list of the 39 TRIZ parameters (features) with their ids."),
        lambda args: render_features(kb),
    )


def contradiction_matrix_tool(kb: KnowledgeBase) -> Tool:
    def handler(args: Mapping[str, Any]) -> str:
        return render_matrix_cell(kb, args["improving"], args["worsening"])

    return Tool(
        ToolDescriptor(
            CONTRADICTION_MATRIX,
            "Look up the classical contradiction matrix. Give the improving and the worsening TRIZ "
            "parameter (id 1-39 or exact name); returns the recommended inventive principles.",
            (
                ToolParam("improving", "integer", "parameter that should improve", alt_types=("string",)),
                ToolParam("worsening", "integer", "parameter that gets worse", alt_types=("string",)),
            ),
        ),
        handler,
    )


def inventive_principles_tool(kb: KnowledgeBase) -> Tool:
    def handler(args: Mapping[str, Any]) -> str:
        return render_principles(kb, list(args["ids"]))

    return Tool(
        ToolDescriptor(
            INVENTIVE_PRINCIPLES,
            "Return details and sub-principles for the given inventive principle ids (1-40).",
            (ToolParam("ids", "array", "principle ids", items="integer"),),
        ),
        handler,
    )


def rag_tool(store: RagStore, k: int = 4) -> Tool:
    def handler(args: Mapping[str, Any]) -> str:
        context, _ = rag_query(store, args["query"], k)
        return context

    return Tool(
        ToolDescriptor(
            TRIZ_RAG,
            "Search TRIZ source material (books, articles, reference pages) and return the most relevant passages.",
            (ToolParam("query", "string", "question about the TRIZ method"),),
        ),
        handler,
    )


def web_search_tool(provider: SearchProvider, k: int = 5) -> Tool:
    def handler(args: Mapping[str, Any]) -> str:
        query = args["query"]
        if not query.strip():
            raise BadArguments("query", "must not be empty")
        results = web_search(provider, query, k)
        return json.dumps([r.to_dict() for r in results], ensure_ascii=False, indent=2)

    return Tool(
        ToolDescriptor(
            WEB_SEARCH,
            "Search the web. Returns a list of results with url and content snippet.",
            (ToolParam("query", "string", "search query"),),
        ),
        handler,
    )
