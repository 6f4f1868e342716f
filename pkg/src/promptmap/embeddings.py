"""Embedding data types, the embedding container format, and a deterministic toy embedder.

Token and prompt vectors are treated as precomputed inputs: any external
encoder can produce them (see the JSON-lines import). The toy embedder exists
so the full pipeline runs and tests deterministically without a language
model.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

__all__ = [
    "TokenEmbedding",
    "DocumentEmbeddings",
    "EmbeddingStore",
    "PromptEmbedding",
    "EmbeddingFormatError",
    "ToyEmbedder",
    "tokenize",
    "toy_embed_document",
    "toy_embed_prompt",
    "save_store",
    "load_store",
    "import_jsonl",
]

_MAGIC = b"PMES"
_VERSION = 1
_MASK64 = 0xFFFFFFFFFFFFFFFF
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_GOLDEN = 0x9E3779B97F4A7C15


class EmbeddingFormatError(ValueError):
    """Raised for malformed embedding containers or inconsistent dimensions."""


@dataclass(frozen=True)
class TokenEmbedding:
    """A single token string with its embedding vector."""

    token: str
    vector: np.ndarray


@dataclass(frozen=True)
class PromptEmbedding:
    """Sentence-level embedding of a prompt."""

    prompt_text: str
    vector: np.ndarray

    def __post_init__(self):
        vec = np.asarray(self.vector, dtype=np.float64)
        if vec.ndim != 1 or vec.size == 0:
            raise ValueError("prompt vector must be a non-empty 1-D array")
        if not np.all(np.isfinite(vec)):
            raise ValueError("prompt vector contains non-finite components")
        object.__setattr__(self, "vector", vec)

    @property
    def dim(self) -> int:
        return int(self.vector.shape[0])


@dataclass(frozen=True)
class DocumentEmbeddings:
    """One document: metadata plus its ordered token embeddings.

    ``vectors`` is the (n_tokens, dim) matrix of token embeddings, row i
    belonging to ``tokens[i]``.
    """

    doc_id: str
    title: str
    text: str
    tokens: tuple[str, ...]
    vectors: np.ndarray

    def __post_init__(self):
        tokens = tuple(self.tokens)
        vectors = np.asarray(self.vectors, dtype=np.float64)
        if len(tokens) == 0:
            raise ValueError(f"document {self.doc_id!r} has no tokens")
        if vectors.ndim != 2 or vectors.shape[0] != len(tokens):
            raise ValueError(
                f"document {self.doc_id!r}: vectors shape {vectors.shape} does not "
                f"match {len(tokens)} tokens"
            )
        if not np.all(np.isfinite(vectors)):
            raise ValueError(f"document {self.doc_id!r} has non-finite vector components")
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "vectors", vectors)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1])

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)

    def token_embeddings(self) -> tuple[TokenEmbedding, ...]:
        return tuple(TokenEmbedding(t, v) for t, v in zip(self.tokens, self.vectors))

    def token_sum(self) -> np.ndarray:
        """Sum of all token vectors (the document's aggregate vector)."""
        return self.vectors.sum(axis=0)


@dataclass
class EmbeddingStore:
    """An immutable collection of documents with a shared embedding dimension."""

    dim: int
    documents: list[DocumentEmbeddings] = field(default_factory=list)

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")
        seen: dict[str, int] = {}
        for doc in self.documents:
            if doc.dim != self.dim:
                raise EmbeddingFormatError(
                    f"document {doc.doc_id!r} has dim {doc.dim}, store expects {self.dim}"
                )
            if doc.doc_id in seen:
                raise EmbeddingFormatError(f"duplicate doc_id {doc.doc_id!r}")
            seen[doc.doc_id] = 1
        self._by_id = {doc.doc_id: doc for doc in self.documents}

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[DocumentEmbeddings]:
        return iter(self.documents)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    def get(self, doc_id: str) -> DocumentEmbeddings:
        try:
            return self._by_id[doc_id]
        except KeyError:
            raise KeyError(f"unknown doc_id {doc_id!r}") from None

    @property
    def doc_ids(self) -> list[str]:
        return [doc.doc_id for doc in self.documents]


# ---------------------------------------------------------------------------
# Toy embedder: hash-seeded random projection, no model required.
# ---------------------------------------------------------------------------


def tokenize(text: str) -> list[str]:
    """Whitespace tokenization after lowercasing; the toy embedder's only tokenizer."""
    return text.lower().split()


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def _scramble64(x: int) -> int:
    x = (x + _GOLDEN) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def _splitmix_stream(state: int, count: int) -> np.ndarray:
    """`count` splitmix64 outputs from `state`; counter-based, so vectorizable."""
    idx = np.arange(1, count + 1, dtype=np.uint64)
    z = np.uint64(state & _MASK64) + idx * np.uint64(_GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


def _token_vector(token: str, dim: int, seed: int) -> np.ndarray:
    """Unit vector for a token: hash-seeded standard-normal draws, normalized."""
    state = _fnv1a64(token.encode("utf-8")) ^ _scramble64(seed)
    n_pairs = (dim + 1) // 2
    bits = _splitmix_stream(state, 2 * n_pairs)
    # (0, 1] uniforms from the top 53 bits; u1 > 0 keeps the log finite.
    u1 = ((bits[0::2] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    u2 = ((bits[1::2] >> np.uint64(11)).astype(np.float64) + 1.0) * 2.0**-53
    radius = np.sqrt(-2.0 * np.log(u1))
    angle = 2.0 * np.pi * u2
    normals = np.stack([radius * np.cos(angle), radius * np.sin(angle)], axis=1).ravel()[:dim]
    norm = float(np.linalg.norm(normals))
    if norm == 0.0:  # vanishing probability but keeps the contract total
        normals[0] = 1.0
        norm = 1.0
    return normals / norm


class ToyEmbedder:
    """Deterministic stand-in for a document/prompt encoder pair.

    Identical tokens always map to identical unit vectors; everything is a
    pure function of (token, dim, seed).
    """

    def __init__(self, dim: int, seed: int = 0):
        if dim < 2:
            raise ValueError("toy embedder requires dim >= 2")
        self.dim = int(dim)
        self.seed = int(seed)
        self._cache: dict[str, np.ndarray] = {}

    def token_vector(self, token: str) -> np.ndarray:
        vec = self._cache.get(token)
        if vec is None:
            vec = _token_vector(token, self.dim, self.seed)
            self._cache[token] = vec
        return vec

    def embed_document(self, text: str, doc_id: str = "doc", title: str = "") -> DocumentEmbeddings:
        tokens = tokenize(text)
        if not tokens:
            raise ValueError("cannot embed empty or whitespace-only text")
        vectors = np.stack([self.token_vector(t) for t in tokens])
        return DocumentEmbeddings(doc_id=doc_id, title=title, text=text, tokens=tuple(tokens), vectors=vectors)

    def embed_prompt(self, text: str) -> PromptEmbedding:
        tokens = tokenize(text)
        if not tokens:
            raise ValueError("cannot embed empty or whitespace-only prompt")
        mean = np.mean([self.token_vector(t) for t in tokens], axis=0)
        norm = float(np.linalg.norm(mean))
        if norm == 0.0:
            mean = self.token_vector(tokens[0]).copy()
            norm = 1.0
        return PromptEmbedding(prompt_text=text, vector=mean / norm)

    def embed_corpus(self, records: Iterable[tuple[str, str, str]]) -> EmbeddingStore:
        """Embed (doc_id, title, text) records into a store."""
        docs = [self.embed_document(text, doc_id=doc_id, title=title) for doc_id, title, text in records]
        return EmbeddingStore(dim=self.dim, documents=docs)


def toy_embed_document(text: str, dim: int, seed: int, doc_id: str = "doc", title: str = "") -> DocumentEmbeddings:
    return ToyEmbedder(dim, seed).embed_document(text, doc_id=doc_id, title=title)


def toy_embed_prompt(text: str, dim: int, seed: int) -> PromptEmbedding:
    return ToyEmbedder(dim, seed).embed_prompt(text)


# ---------------------------------------------------------------------------
# Container format. Binary, self-describing, float32 vector storage;
# computation everywhere else is float64.
# ---------------------------------------------------------------------------


def _write_str(out, s: str):
    data = s.encode("utf-8")
    out.write(struct.pack("<I", len(data)))
    out.write(data)


def _read_exact(f, n: int) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise EmbeddingFormatError("truncated embedding file")
    return data


def _read_str(f) -> str:
    (n,) = struct.unpack("<I", _read_exact(f, 4))
    return _read_exact(f, n).decode("utf-8")


def save_store(store: EmbeddingStore, path: str | Path):
    """Write a store to the binary container.

    Vectors are stored as little-endian float32. Loading a saved store and
    saving it again is byte-identical; a save→load round trip is bit-exact
    whenever the in-memory vectors are float32-representable (true for
    anything that came out of ``load_store``).
    """
    path = Path(path)
    with open(path, "wb") as out:
        out.write(_MAGIC)
        out.write(struct.pack("<III", _VERSION, store.dim, len(store.documents)))
        for doc in store.documents:
            _write_str(out, doc.doc_id)
            _write_str(out, doc.title)
            _write_str(out, doc.text)
            out.write(struct.pack("<I", doc.n_tokens))
            vecs32 = np.ascontiguousarray(doc.vectors, dtype="<f4")
            for token, row in zip(doc.tokens, vecs32):
                _write_str(out, token)
                out.write(row.tobytes())


def load_store(path: str | Path) -> EmbeddingStore:
    """Read a store from the binary container format."""
    path = Path(path)
    with open(path, "rb") as f:
        if _read_exact(f, 4) != _MAGIC:
            raise EmbeddingFormatError(f"{path}: not an embedding container (bad magic)")
        version, dim, n_docs = struct.unpack("<III", _read_exact(f, 12))
        if version != _VERSION:
            raise EmbeddingFormatError(f"{path}: unsupported container version {version}")
        if dim < 1:
            raise EmbeddingFormatError(f"{path}: invalid dim {dim}")
        docs = []
        for _ in range(n_docs):
            doc_id = _read_str(f)
            title = _read_str(f)
            text = _read_str(f)
            (n_tokens,) = struct.unpack("<I", _read_exact(f, 4))
            if n_tokens == 0:
                raise EmbeddingFormatError(f"{path}: document {doc_id!r} has no tokens")
            tokens = []
            vectors = np.empty((n_tokens, dim), dtype=np.float64)
            for i in range(n_tokens):
                tokens.append(_read_str(f))
                row = np.frombuffer(_read_exact(f, 4 * dim), dtype="<f4")
                vectors[i] = row.astype(np.float64)
            docs.append(
                DocumentEmbeddings(doc_id=doc_id, title=title, text=text, tokens=tuple(tokens), vectors=vectors)
            )
        if f.read(1):
            raise EmbeddingFormatError(f"{path}: trailing bytes after last document")
    return EmbeddingStore(dim=dim, documents=docs)


def import_jsonl(path: str | Path, dim: int | None = None) -> EmbeddingStore:
    """Import a store from JSON lines, one document per line.

    Record shape: ``{"id": ..., "title": ..., "text": ..., "tokens":
    [{"t": ..., "v": [...]}, ...]}``. This is the interop path for external
    encoder scripts; ``dim`` is inferred from the first token if omitted.
    """
    path = Path(path)
    docs = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EmbeddingFormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            try:
                raw_tokens = rec["tokens"]
                doc_id = str(rec["id"])
            except (KeyError, TypeError) as exc:
                raise EmbeddingFormatError(f"{path}:{lineno}: missing required field: {exc}") from exc
            if not raw_tokens:
                raise EmbeddingFormatError(f"{path}:{lineno}: document {doc_id!r} has no tokens")
            tokens = []
            rows = []
            for tok in raw_tokens:
                tokens.append(str(tok["t"]))
                rows.append(np.asarray(tok["v"], dtype=np.float64))
            if dim is None:
                dim = int(rows[0].shape[0])
            for t, row in zip(tokens, rows):
                if row.shape != (dim,):
                    raise EmbeddingFormatError(
                        f"{path}:{lineno}: token {t!r} has {row.shape[0]} components, expected {dim}"
                    )
            docs.append(
                DocumentEmbeddings(
                    doc_id=doc_id,
                    title=str(rec.get("title", "")),
                    text=str(rec.get("text", "")),
                    tokens=tuple(tokens),
                    vectors=np.stack(rows),
                )
            )
    if dim is None:
        raise EmbeddingFormatError(f"{path}: empty import and no dim given")
    return EmbeddingStore(dim=dim, documents=docs)
