"""Lexical retrieval over TRIZ source material.

Documents are cut into overlapping character windows and ranked with Okapi
BM25 (``k1=1.2``, ``b=0.75``) using the non-negative idf
``ln(1 + (N - n + 0.5) / (n + 0.5))``. Each distinct query term is counted once.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

CHUNK_SIZE = 800
CHUNK_OVERLAP = 200
BM25_K1 = 1.2
BM25_B = 0.75
DEFAULT_K = 4
CORPUS_SUFFIXES = (".txt", ".md", ".markdown")

_WORD = re.compile(r"[^\W_]+")


class RagError(Exception):
    pass


class DuplicateDoc(RagError):
    def __init__(self, doc_id: str):
        super().__init__(f"document {doc_id!r} already ingested")
        self.doc_id = doc_id


class EmptyBody(RagError):
    def __init__(self, doc_id: str):
        super().__init__(f"document {doc_id!r} is empty")


class EmptyStore(RagError):
    def __init__(self) -> None:
        super().__init__("retrieval store has no documents")


class EmptyQuery(RagError):
    def __init__(self) -> None:
        super().__init__("retrieval query is empty")


def tokenize(text: str) -> list[str]:
    return _WORD.findall(text.casefold())


def chunk_starts(length: int, size: int = CHUNK_SIZE, overlap: int = CHUNK_OVERLAP) -> list[int]:
    """Nominal window starts: one window if the text fits, else every stride."""
    if length <= size:
        return [0]
    return list(range(0, length, size - overlap))


def split_chunks(text: str, size: int = CHUNK_SIZE, overlap: int = CHUNK_OVERLAP) -> list[tuple[int, str]]:
    """Cut ``text`` into ``(start, chunk)`` windows.

    The number of windows is fixed by :func:`chunk_starts`. A start that falls
    inside a word moves forward to the next word, and an end that falls inside
    a word moves back to the previous whitespace, each by at most ``overlap // 2``
    characters, so consecutive windows still meet or overlap.
    """
    if size <= overlap or overlap < 0:
        raise ValueError("chunk size must exceed overlap, and overlap must be >= 0")
    snap = overlap // 2
    out = []
    n = len(text)
    for s in chunk_starts(n, size, overlap):
        start = s
        if 0 < s < n and not text[s - 1].isspace() and not text[s].isspace():
            limit = min(n, s + snap)
            j = s
            while j < limit and not text[j].isspace():
                j += 1
            if j < limit:
                start = j + 1
        end = min(n, s + size)
        if end < n and not text[end].isspace() and not text[end - 1].isspace():
            j = end
            floor = max(start + 1, end - snap)
            while j > floor and not text[j - 1].isspace():
                j -= 1
            if j > floor:
                end = j
        out.append((start, text[start:end]))
    return out


@dataclass(frozen=True)
class RagChunk:
    doc_id: str
    index: int
    text: str
    start: int = 0
    score: float = 0.0


@dataclass(frozen=True)
class IngestStats:
    doc_id: str
    chunk_count: int
    char_count: int
    token_estimate: int


@dataclass
class RagStore:
    chunk_size: int = CHUNK_SIZE
    overlap: int = CHUNK_OVERLAP
    k1: float = BM25_K1
    b: float = BM25_B
    docs: dict[str, str] = field(default_factory=dict)
    chunks: list[RagChunk] = field(default_factory=list)
    _tf: list[Counter] = field(default_factory=list, repr=False)
    _df: Counter = field(default_factory=Counter, repr=False)
    _total_len: int = field(default=0, repr=False)

    def __len__(self) -> int:
        return len(self.chunks)

    def ingest(self, doc_id: str, body: str) -> IngestStats:
        return rag_ingest(self, doc_id, body)

    def query(self, query: str, k: int = DEFAULT_K) -> tuple[str, list[RagChunk]]:
        return rag_query(self, query, k)

    def _add_chunk(self, chunk: RagChunk) -> None:
        tf = Counter(tokenize(chunk.text))
        self.chunks.append(chunk)
        self._tf.append(tf)
        self._df.update(tf.keys())
        self._total_len += sum(tf.values())

    def scores(self, query: str) -> list[float]:
        terms = set(tokenize(query))
        n = len(self.chunks)
        avgdl = self._total_len / n if n else 0.0
        out = []
        for tf in self._tf:
            dl = sum(tf.values())
            s = 0.0
            for term in terms:
                f = tf.get(term, 0)
                if not f:
                    continue
                df = self._df[term]
                idf = math.log(1 + (n - df + 0.5) / (df + 0.5))
                norm = 1 - self.b + self.b * (dl / avgdl if avgdl else 0.0)
                s += idf * f * (self.k1 + 1) / (f + self.k1 * norm)
            out.append(s)
        return out

    def to_json(self) -> str:
        return json.dumps(
            {"chunk_size": self.chunk_size, "overlap": self.overlap, "docs": self.docs},
            ensure_ascii=False,
            indent=1,
        )

    @classmethod
    def from_json(cls, text: str) -> RagStore:
        data = json.loads(text)
        store = cls(chunk_size=data["chunk_size"], overlap=data["overlap"])
        for doc_id, body in data["docs"].items():
            store.ingest(doc_id, body)
        return store

    def save(self, path: Path | str) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: Path | str) -> RagStore:
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def rag_ingest(store: RagStore, doc_id: str, body: str) -> IngestStats:
    if doc_id in store.docs:
        raise DuplicateDoc(doc_id)
    if not body.strip():
        raise EmptyBody(doc_id)
    pieces = split_chunks(body, store.chunk_size, store.overlap)
    store.docs[doc_id] = body
    for i, (start, text) in enumerate(pieces):
        store._add_chunk(RagChunk(doc_id, i, text, start))
    return IngestStats(doc_id, len(pieces), len(body), math.ceil(len(body) / 4))


def ingest_directory(store: RagStore, corpus: Path | str) -> list[IngestStats]:
    """Ingest every text/markdown file below ``corpus``; doc id is the relative path."""
    root = Path(corpus)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {root}")
    files = sorted(p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in CORPUS_SUFFIXES)
    return [store.ingest(p.relative_to(root).as_posix(), p.read_text(encoding="utf-8")) for p in files]


def rank(store: RagStore, query: str) -> list[RagChunk]:
    scores = store.scores(query)
    ranked = [replace(c, score=s) for c, s in zip(store.chunks, scores)]
    ranked.sort(key=lambda c: (-c.score, c.doc_id, c.index))
    return ranked


def format_context(chunks: Iterable[RagChunk]) -> str:
    return "\n\n".join(f"[source: {c.doc_id}#{c.index}]\n{c.text.strip()}" for c in chunks)


def rag_query(store: RagStore, query: str, k: int = DEFAULT_K) -> tuple[str, list[RagChunk]]:
    """Top ``k`` chunks by BM25 score, ties broken by (doc id, chunk index)."""
    if not store.chunks:
        raise EmptyStore()
    if not query or not tokenize(query):
        raise EmptyQuery()
    if k < 1:
        raise ValueError("k must be >= 1")
    top = rank(store, query)[:k]
    return format_context(top), top
