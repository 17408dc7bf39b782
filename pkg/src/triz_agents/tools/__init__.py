"""Agent tools: web search, TRIZ retrieval and the TRIZ knowledge tools."""

from __future__ import annotations

from pathlib import Path

from ..conversation import ToolCall
from ..knowledge import KnowledgeBase
from .rag import RagChunk, RagStore, ingest_directory, rag_ingest, rag_query
from .registry import (
    BadArguments,
    Tool,
    ToolDescriptor,
    ToolError,
    ToolParam,
    ToolRegistry,
    ToolResult,
    dispatch_tool,
)
from .search import FixtureSearch, SearchProvider, SearchResult, TavilySearch, web_search
from .triz import (
    CONTRADICTION_MATRIX,
    INVENTIVE_PRINCIPLES,
    TRIZ_FEATURES,
    TRIZ_RAG,
    TRIZ_TOOL_NAMES,
    WEB_SEARCH,
    contradiction_matrix_tool,
    inventive_principles_tool,
    rag_tool,
    triz_features_tool,
    web_search_tool,
)


def build_registry(
    kb: KnowledgeBase,
    search: SearchProvider,
    store: RagStore | None = None,
    *,
    search_k: int = 5,
    rag_k: int = 4,
) -> ToolRegistry:
    """Registry holding web search and the four TRIZ tools; nothing granted yet."""
    registry = ToolRegistry()
    registry.register(web_search_tool(search, search_k))
    registry.register(triz_features_tool(kb))
    registry.register(contradiction_matrix_tool(kb))
    registry.register(inventive_principles_tool(kb))
    registry.register(rag_tool(store if store is not None else RagStore(), rag_k))
    return registry


def load_corpus(corpus: Path | str | None) -> RagStore:
    store = RagStore()
    if corpus is not None:
        ingest_directory(store, corpus)
    return store


__all__ = [
    "BadArguments",
    "CONTRADICTION_MATRIX",
    "FixtureSearch",
    "INVENTIVE_PRINCIPLES",
    "RagChunk",
    "RagStore",
    "SearchProvider",
    "SearchResult",
    "TRIZ_FEATURES",
    "TRIZ_RAG",
    "TRIZ_TOOL_NAMES",
    "TavilySearch",
    "Tool",
    "ToolCall",
    "ToolDescriptor",
    "ToolError",
    "ToolParam",
    "ToolRegistry",
    "ToolResult",
    "WEB_SEARCH",
    "build_registry",
    "dispatch_tool",
    "ingest_directory",
    "load_corpus",
    "rag_ingest",
    "rag_query",
    "web_search",
]
