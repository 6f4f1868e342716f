"""Corpus-level attention topics.

Stacks every document's softmax attention weights into a documents-by-tokens
matrix, factorizes it with nonnegative matrix factorization, and picks the
topic count by restart-consensus stability. Softmax weights (not raw scores)
populate the matrix so all entries are nonnegative by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .attention import PromptResult
from .embeddings import EmbeddingStore
from .validation import check_fitted

__all__ = [
    "AttentionMatrix",
    "TopicDecomposition",
    "AttentionTopicModel",
    "build_attention_matrix",
    "nmf",
    "select_topic_count",
    "top_tokens",
    "export_topics",
    "save_topics",
]

_EPS = 1e-9
DEFAULT_VOCAB_CAP = 5000


@dataclass(frozen=True)
class AttentionMatrix:
    """Documents-by-tokens nonnegative attention weight matrix."""

    v: np.ndarray
    doc_ids: tuple[str, ...]
    vocab: tuple[str, ...]

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError(f"v must be 2-D, got shape {v.shape}")
        if v.shape != (len(self.doc_ids), len(self.vocab)):
            raise ValueError(
                f"v shape {v.shape} does not match {len(self.doc_ids)} docs x {len(self.vocab)} tokens"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("attention matrix has non-finite entries")
        if np.any(v < 0):
            raise ValueError("attention matrix has negative entries")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "doc_ids", tuple(self.doc_ids))
        object.__setattr__(self, "vocab", tuple(self.vocab))


@dataclass(frozen=True)
class TopicDecomposition:
    """NMF factors: w (docs x topics) and h (topics x tokens)."""

    w: np.ndarray
    h: np.ndarray
    k: int
    reconstruction_error: float
    error_history: tuple[float, ...]
    doc_ids: tuple[str, ...]
    vocab: tuple[str, ...]

    def __post_init__(self):
        w = np.asarray(self.w, dtype=np.float64)
        h = np.asarray(self.h, dtype=np.float64)
        if w.ndim != 2 or h.ndim != 2 or w.shape[1] != self.k or h.shape[0] != self.k:
            raise ValueError(f"inconsistent factor shapes w{w.shape}, h{h.shape} for k={self.k}")
        if np.any(w < 0) or np.any(h < 0):
            raise ValueError("NMF factors must be nonnegative")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "h", h)


def build_attention_matrix(
    results: Sequence[PromptResult] | Mapping[str, PromptResult],
    store: EmbeddingStore,
    vocab_cap: int = DEFAULT_VOCAB_CAP,
) -> AttentionMatrix:
    """Aggregate per-document softmax attention into a docs-by-tokens matrix.

    Entry [d, t] sums the softmax weights of every occurrence of token t in
    document d, so each row sums to 1. When the corpus vocabulary exceeds
    ``vocab_cap``, only the tokens with the highest total attention are kept
    (rows then sum to less than 1).
    """
    if len(store) == 0:
        raise ValueError("empty corpus")
    if isinstance(results, Mapping):
        by_id = dict(results)
    else:
        by_id = {r.doc_id: r for r in results}
    missing = [doc.doc_id for doc in store if doc.doc_id not in by_id]
    if missing:
        raise ValueError(f"results missing for documents: {missing[:5]}")

    vocab: dict[str, int] = {}
    for doc in store:
        for tok in doc.tokens:
            if tok not in vocab:
                vocab[tok] = len(vocab)
    v = np.zeros((len(store), len(vocab)))
    for d, doc in enumerate(store):
        weights = np.asarray(by_id[doc.doc_id].weights, dtype=np.float64)
        if weights.shape != (doc.n_tokens,):
            raise ValueError(
                f"result for {doc.doc_id!r} has {weights.shape[0]} weights, "
                f"document has {doc.n_tokens} tokens"
            )
        for tok, w in zip(doc.tokens, weights):
            v[d, vocab[tok]] += w

    tokens = list(vocab)
    if len(tokens) > vocab_cap:
        keep = np.argsort(-v.sum(axis=0), kind="stable")[:vocab_cap]
        keep.sort()  # preserve first-seen vocabulary order
        v = v[:, keep]
        tokens = [tokens[i] for i in keep]
    return AttentionMatrix(v=v, doc_ids=tuple(store.doc_ids), vocab=tuple(tokens))


def _nmf_arrays(v: np.ndarray, k: int, iters: int, seed) -> tuple[np.ndarray, np.ndarray, list[float]]:
    rng = np.random.default_rng(seed)
    scale = max(v.mean(), _EPS)
    w = rng.uniform(0.0, 1.0, size=(v.shape[0], k)) * scale
    h = rng.uniform(0.0, 1.0, size=(k, v.shape[1])) * scale
    errors = [float(np.linalg.norm(v - w @ h))]
    for _ in range(iters):
        h *= (w.T @ v) / (w.T @ w @ h + _EPS)
        w *= (v @ h.T) / (w @ (h @ h.T) + _EPS)
        errors.append(float(np.linalg.norm(v - w @ h)))
    return w, h, errors


def nmf(matrix: AttentionMatrix, k: int, iters: int = 200, seed: int = 0) -> TopicDecomposition:
    """Frobenius NMF by multiplicative updates from a seeded random init.

    Factors start uniform in (0,1) scaled by mean(v); the recorded error
    history (initial value plus one entry per iteration) is non-increasing up
    to tiny numerical slack.
    """
    n, m = matrix.v.shape
    if not 1 <= k <= min(n, m):
        raise ValueError(f"k must be in [1, {min(n, m)}], got {k}")
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    w, h, errors = _nmf_arrays(matrix.v, k, iters, seed)
    return TopicDecomposition(
        w=w,
        h=h,
        k=k,
        reconstruction_error=errors[-1],
        error_history=tuple(errors),
        doc_ids=matrix.doc_ids,
        vocab=matrix.vocab,
    )


def _consensus_stability(v: np.ndarray, k: int, restarts: int, iters: int, seed: int) -> tuple[float, int]:
    """Stability of dominant-topic co-assignment across restarts.

    Returns (stability in [0,1], effective cluster count of the last restart).
    Stability is 1 minus twice the mean distance of consensus entries from
    {0,1}; perfectly repeatable partitions score 1.
    """
    n = v.shape[0]
    consensus = np.zeros((n, n))
    labels = None
    for r in range(restarts):
        w, _, _ = _nmf_arrays(v, k, iters, np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, k, r]))
        labels = w.argmax(axis=1)
        consensus += labels[:, None] == labels[None, :]
    consensus /= restarts
    iu = np.triu_indices(n, k=1)
    off_diag = consensus[iu]
    if off_diag.size == 0:
        return 1.0, 1
    dispersion = float(np.abs(off_diag - np.round(off_diag)).mean())
    return 1.0 - 2.0 * dispersion, int(len(np.unique(labels)))


def select_topic_count(
    matrix: AttentionMatrix,
    k_range: Sequence[int],
    restarts: int = 8,
    iters: int = 100,
    seed: int = 0,
    stability_floor: float = 0.9,
) -> int:
    """Pick the topic count whose NMF restarts agree the most.

    For each candidate k, `restarts` factorizations vote on dominant-topic
    co-assignment; k is scored by how close the consensus matrix sits to a
    hard partition, and the smallest top-scoring k wins. k=1 is trivially
    stable, so it is only chosen when it is the lone candidate, when the best
    multi-topic candidate collapses to a single effective topic, or when no
    candidate clears ``stability_floor``.
    """
    ks = sorted(set(int(k) for k in k_range))
    if not ks:
        raise ValueError("k_range is empty")
    n, m = matrix.v.shape
    if ks[0] < 1 or ks[-1] > min(n, m):
        raise ValueError(f"k_range must lie within [1, {min(n, m)}]")
    if restarts < 2:
        raise ValueError(f"restarts must be >= 2, got {restarts}")
    allow_one = 1 in ks
    candidates = [k for k in ks if k >= 2]
    if not candidates:
        return 1
    best_k = None
    best_score = -np.inf
    best_effective = 0
    for k in candidates:
        score, effective = _consensus_stability(matrix.v, k, restarts, iters, seed)
        if score > best_score + 1e-12:  # strictly better; ties keep smaller k
            best_k, best_score, best_effective = k, score, effective
    if allow_one and (best_effective <= 1 or best_score < stability_floor):
        return 1
    return best_k


def top_tokens(decomp: TopicDecomposition, topic: int, threshold: float = 0.1) -> list[tuple[str, float]]:
    """Tokens whose weight in the topic's row reaches the threshold, descending."""
    if not 0 <= topic < decomp.k:
        raise ValueError(f"topic must be in [0, {decomp.k - 1}], got {topic}")
    row = decomp.h[topic]
    order = np.argsort(-row, kind="stable")
    return [(decomp.vocab[i], float(row[i])) for i in order if row[i] >= threshold]


def export_topics(decomp: TopicDecomposition, threshold: float = 0.1, max_tokens: int = 30) -> dict:
    """Serializable topic summary: per-topic token bars plus the full doc-topic matrix."""
    topics = []
    for t in range(decomp.k):
        bars = top_tokens(decomp, t, threshold)[:max_tokens]
        topics.append({"id": t, "tokens": [{"t": tok, "w": w} for tok, w in bars]})
    return {
        "k": decomp.k,
        "topics": topics,
        "doc_topic_weights": {
            doc_id: [float(x) for x in row] for doc_id, row in zip(decomp.doc_ids, decomp.w)
        },
    }


def save_topics(decomp: TopicDecomposition, path: str | Path, threshold: float = 0.1):
    path = Path(path)
    with open(path, "w", encoding="utf-8") as out:
        json.dump(export_topics(decomp, threshold), out, sort_keys=True)
        out.write("\n")


class AttentionTopicModel(BaseEstimator):
    """Estimator wrapper: build the attention matrix, choose k, factorize.

    n_topics=None turns on consensus-based selection over 2..k_max (with 1 as
    the collapse fallback); an integer pins the topic count.
    """

    def __init__(self, n_topics: int | None = None, k_max: int = 8, restarts: int = 8,
                 iters: int = 200, selection_iters: int = 100, seed: int = 0,
                 vocab_cap: int = DEFAULT_VOCAB_CAP):
        self.n_topics = n_topics
        self.k_max = k_max
        self.restarts = restarts
        self.iters = iters
        self.selection_iters = selection_iters
        self.seed = seed
        self.vocab_cap = vocab_cap

    def fit(self, results, store: EmbeddingStore):
        matrix = build_attention_matrix(results, store, vocab_cap=self.vocab_cap)
        if self.n_topics is None:
            upper = min(self.k_max, min(matrix.v.shape))
            k = select_topic_count(
                matrix, range(1, upper + 1), restarts=self.restarts,
                iters=self.selection_iters, seed=self.seed,
            )
        else:
            k = self.n_topics
        self.matrix_ = matrix
        self.decomposition_ = nmf(matrix, k, iters=self.iters, seed=self.seed)
        self.k_ = k
        return self

    def top_tokens(self, topic: int, threshold: float = 0.1) -> list[tuple[str, float]]:
        check_fitted(self, "decomposition_")
        return top_tokens(self.decomposition_, topic, threshold)

    def export(self, threshold: float = 0.1) -> dict:
        check_fitted(self, "decomposition_")
        return export_topics(self.decomposition_, threshold)
