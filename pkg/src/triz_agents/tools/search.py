"""Web search providers: an offline fixture provider and a live HTTP one."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Protocol

import httpx

DEFAULT_K = 5
TAVILY_URL = "https://api.tavily.com/search"


class SearchError(Exception):
    pass


class EmptyQuery(SearchError):
    def __init__(self) -> None:
        super().__init__("search query is empty")


class MissFixture(SearchError):
    def __init__(self, query: str):
        super().__init__(f"no fixture results recorded for query {query!r}")
        self.query = query


class ProviderFailure(SearchError):
    def __init__(self, status: int | None, detail: str = ""):
        super().__init__(f"search provider failed (status={status}) {detail}".strip())
        self.status = status


@dataclass(frozen=True)
class SearchResult:
    url: str
    content: str

    def to_dict(self) -> dict[str, str]:
        return {"url": self.url, "content": self.content}


class SearchProvider(Protocol):
    def search(self, query: str, k: int) -> list[SearchResult]: ...


def normalize_query(query: str) -> str:
    return " ".join(query.casefold().split())


class FixtureSearch:
    """Canned results keyed by normalized query, read from a JSON object file."""

    def __init__(self, fixtures: Mapping[str, list[Mapping[str, str]]]):
        self._results = {
            normalize_query(q): [SearchResult(r["url"], r["content"]) for r in rows] for q, rows in fixtures.items()
        }

    @classmethod
    def from_file(cls, path: Path | str) -> FixtureSearch:
        return cls(json.loads(Path(path).read_text(encoding="utf-8")))

    def search(self, query: str, k: int) -> list[SearchResult]:
        key = normalize_query(query)
        if key not in self._results:
            raise MissFixture(query)
        return self._results[key][:k]


class TavilySearch:
    """Live search through the Tavily JSON API."""

    def __init__(
        self,
        api_key_env: str = "TAVILY_API_KEY",
        url: str = TAVILY_URL,
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
    ):
        key = os.environ.get(api_key_env, "")
        if not key:
            raise ProviderFailure(None, f"environment variable {api_key_env} is not set")
        self._url = url
        self._client = httpx.Client(
            timeout=timeout, transport=transport, headers={"Authorization": f"Bearer {key}"}
        )

    def search(self, query: str, k: int) -> list[SearchResult]:
        try:
            resp = self._client.post(self._url, json={"query": query, "max_results": k})
        except httpx.HTTPError as exc:
            raise ProviderFailure(None, str(exc)) from None
        if resp.status_code != 200:
            raise ProviderFailure(resp.status_code, resp.text[:200])
        try:
            rows: list[Any] = resp.json()["results"]
            return [SearchResult(r["url"], r.get("content", "")) for r in rows][:k]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProviderFailure(resp.status_code, f"unexpected body: {exc!r}") from None


def web_search(provider: SearchProvider, query: str, k: int = DEFAULT_K) -> list[SearchResult]:
    if not query or not query.strip():
        raise EmptyQuery()
    if k < 1:
        raise ValueError("k must be >= 1")
    return list(provider.search(query.strip(), k))[:k]
