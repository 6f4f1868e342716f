"""Prompt-conditioned attention over token embeddings.

A single bilinear layer scores every document token against a prompt. Token
scores aggregate to a document relevance score, and their softmax gives a
prompt-specific weighted document embedding. The layer is trained with a
contrastive objective on (prompt, positive document) pairs against sampled
in-batch negatives; gradients are analytic, optimization is plain SGD.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .embeddings import DocumentEmbeddings, EmbeddingStore, PromptEmbedding
from .validation import as_matrix, as_vector, check_fitted, check_positive

__all__ = [
    "AttentionLayer",
    "PromptResult",
    "ContrastiveBatch",
    "TrainConfig",
    "PromptWeighting",
    "PromptAttention",
    "attention",
    "attention_weights",
    "relevance",
    "dynamic_embedding",
    "evaluate_prompt",
    "contrastive_loss",
    "loss_gradient",
    "train",
    "compose_prompts",
    "rar",
    "save_layer",
    "load_layer",
]

_CKPT_MAGIC = b"PMAT"
_CKPT_VERSION = 1


@dataclass(eq=False)
class AttentionLayer:
    """Query/key projection pair, both (dim, dim) float64."""

    w_q: np.ndarray
    w_k: np.ndarray

    def __post_init__(self):
        self.w_q = as_matrix(self.w_q, "w_q")
        self.w_k = as_matrix(self.w_k, "w_k")
        if self.w_q.shape[0] != self.w_q.shape[1]:
            raise ValueError(f"w_q must be square, got {self.w_q.shape}")
        if self.w_k.shape != self.w_q.shape:
            raise ValueError(f"w_q {self.w_q.shape} and w_k {self.w_k.shape} differ in shape")

    @classmethod
    def identity(cls, dim: int) -> "AttentionLayer":
        """Untrained layer: scores reduce to plain dot products."""
        return cls(np.eye(dim), np.eye(dim))

    @property
    def dim(self) -> int:
        return int(self.w_q.shape[0])

    def copy(self) -> "AttentionLayer":
        return AttentionLayer(self.w_q.copy(), self.w_k.copy())


@dataclass(frozen=True)
class PromptResult:
    """Everything the layer says about one (prompt, document) pair."""

    doc_id: str
    attention: np.ndarray   # raw per-token scores, (n_tokens,)
    weights: np.ndarray     # softmax of attention / sqrt(dim), sums to 1
    relevance: float
    dynamic_embedding: np.ndarray  # (dim,)


@dataclass(frozen=True)
class ContrastiveBatch:
    """One training step: a prompt, its positive document, sampled negatives."""

    prompt_vector: np.ndarray
    positive_id: str
    negative_ids: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "prompt_vector", as_vector(self.prompt_vector, "prompt_vector"))
        if len(self.negative_ids) < 1:
            raise ValueError("a contrastive batch needs at least one negative")
        if self.positive_id in self.negative_ids:
            raise ValueError("positive document cannot also appear as a negative")


@dataclass
class TrainConfig:
    epochs: int = 20
    learning_rate: float = 0.05
    batch_size: int = 16  # 1 positive + (batch_size - 1) negatives
    seed: int = 0
    init_scale: float = 0.01

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        check_positive(self.learning_rate, "learning_rate")
        if self.batch_size < 2:
            raise ValueError(f"batch_size must be >= 2, got {self.batch_size}")
        if self.init_scale < 0:
            raise ValueError(f"init_scale must be >= 0, got {self.init_scale}")


@dataclass(frozen=True)
class PromptWeighting:
    """Convex mixture of prompts; weights are normalized to sum to one."""

    prompts: tuple[PromptEmbedding, ...]
    weights: np.ndarray

    def __post_init__(self):
        if len(self.prompts) == 0:
            raise ValueError("need at least one prompt")
        w = as_vector(self.weights, "weights", size=len(self.prompts))
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        total = float(w.sum())
        if total <= 0:
            raise ValueError("weights must not all be zero")
        object.__setattr__(self, "weights", w / total)
        dims = {p.dim for p in self.prompts}
        if len(dims) != 1:
            raise ValueError(f"prompts disagree on dimension: {sorted(dims)}")

    @property
    def dim(self) -> int:
        return self.prompts[0].dim

    def composite_vector(self) -> np.ndarray:
        """Weighted mean of prompt vectors; scores are linear in the prompt,
        so this reproduces the weighted sum of per-prompt scores exactly."""
        return self.weights @ np.stack([p.vector for p in self.prompts])


def _prompt_vec(prompt, dim: int) -> np.ndarray:
    if isinstance(prompt, PromptWeighting):
        vec = prompt.composite_vector()
    elif isinstance(prompt, PromptEmbedding):
        vec = prompt.vector
    else:
        vec = as_vector(prompt, "prompt")
    if vec.shape[0] != dim:
        raise ValueError(f"prompt has dim {vec.shape[0]}, layer expects {dim}")
    return vec


def attention(layer: AttentionLayer, prompt, doc: DocumentEmbeddings) -> np.ndarray:
    """Raw score of every document token against the prompt: (W_q p) . (W_k t)."""
    p = _prompt_vec(prompt, layer.dim)
    query = layer.w_q @ p
    return (doc.vectors @ layer.w_k.T) @ query


def attention_weights(layer: AttentionLayer, prompt, doc: DocumentEmbeddings) -> np.ndarray:
    """Softmax of the token scores, temperature sqrt(dim). Sums to 1."""
    scores = attention(layer, prompt, doc) / np.sqrt(layer.dim)
    scores -= scores.max()
    e = np.exp(scores)
    return e / e.sum()


def relevance(layer: AttentionLayer, prompt, doc: DocumentEmbeddings) -> float:
    """Total attention the prompt pays to the document.

    Computed against the document's token-sum vector, which equals the sum of
    per-token scores without materializing them.
    """
    p = _prompt_vec(prompt, layer.dim)
    return float((layer.w_q @ p) @ (layer.w_k @ doc.token_sum()))


def dynamic_embedding(layer: AttentionLayer, prompt, doc: DocumentEmbeddings) -> np.ndarray:
    """Prompt-conditioned document vector: attention-weighted mean of tokens.

    For a prompt mixture this is the weighted sum of the per-prompt dynamic
    embeddings (the softmax step is nonlinear, so mixtures are combined after
    it, not before).
    """
    if isinstance(prompt, PromptWeighting):
        parts = np.stack([dynamic_embedding(layer, p, doc) for p in prompt.prompts])
        return prompt.weights @ parts
    return attention_weights(layer, prompt, doc) @ doc.vectors


def evaluate_prompt(layer: AttentionLayer, prompt, doc: DocumentEmbeddings) -> PromptResult:
    """Bundle scores, softmax weights, relevance and the dynamic embedding."""
    att = attention(layer, prompt, doc)
    scaled = att / np.sqrt(layer.dim)
    scaled -= scaled.max()
    e = np.exp(scaled)
    weights = e / e.sum()
    if isinstance(prompt, PromptWeighting):
        dyn = dynamic_embedding(layer, prompt, doc)
    else:
        dyn = weights @ doc.vectors
    return PromptResult(
        doc_id=doc.doc_id,
        attention=att,
        weights=weights,
        relevance=float(att.sum()),
        dynamic_embedding=dyn,
    )


def _scores(layer: AttentionLayer, p: np.ndarray, sums: np.ndarray) -> np.ndarray:
    return (sums @ layer.w_k.T) @ (layer.w_q @ p)


def contrastive_loss(layer: AttentionLayer, prompt, positive_sum, negative_sums) -> float:
    """Softmax cross-entropy of the positive's relevance against the negatives'.

    ``positive_sum`` is the positive document's token-sum vector and
    ``negative_sums`` the (n_neg, dim) stack for the negatives. Uses the
    log-sum-exp shift, so large relevance values do not overflow.
    """
    p = _prompt_vec(prompt, layer.dim)
    pos = as_vector(positive_sum, "positive_sum", size=layer.dim)
    negs = as_matrix(negative_sums, "negative_sums")
    sums = np.vstack([pos[None, :], negs])
    scores = _scores(layer, p, sums)
    shift = scores.max()
    return float(np.log(np.exp(scores - shift).sum()) + shift - scores[0])


def loss_gradient(layer: AttentionLayer, prompt, positive_sum, negative_sums) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradients of the contrastive loss w.r.t. (w_q, w_k).

    With a = softmax(scores) and m = sum_d (a_d - y_d) s_d (y one-hot on the
    positive), both gradients are rank one:
    dL/dw_q = (W_k m) p^T and dL/dw_k = (W_q p) m^T.
    """
    p = _prompt_vec(prompt, layer.dim)
    pos = as_vector(positive_sum, "positive_sum", size=layer.dim)
    negs = as_matrix(negative_sums, "negative_sums")
    sums = np.vstack([pos[None, :], negs])
    scores = _scores(layer, p, sums)
    scores = scores - scores.max()
    alpha = np.exp(scores)
    alpha /= alpha.sum()
    coef = alpha.copy()
    coef[0] -= 1.0
    m = coef @ sums
    grad_q = np.outer(layer.w_k @ m, p)
    grad_k = np.outer(layer.w_q @ p, m)
    return grad_q, grad_k


def train(
    store: EmbeddingStore,
    pairs: Sequence[tuple],
    config: TrainConfig | None = None,
    prompt_embedder=None,
) -> tuple[AttentionLayer, list[float]]:
    """Fit the attention layer on (prompt, positive doc id) pairs.

    Prompts may be PromptEmbedding instances, raw vectors, or plain strings;
    strings are embedded through ``prompt_embedder.embed_prompt``. Each step
    scores the positive against batch_size - 1 negatives drawn uniformly
    without replacement from the rest of the store. Weights start at identity
    plus scaled Gaussian noise and follow plain SGD. Returns the layer and
    the mean per-epoch loss trace. Fully deterministic for a fixed config
    seed.
    """
    config = config or TrainConfig()
    if len(pairs) == 0:
        raise ValueError("no training pairs given")
    if len(store) < config.batch_size:
        raise ValueError(
            f"store has {len(store)} documents but batch_size {config.batch_size} "
            f"needs at least that many"
        )
    dim = store.dim
    doc_ids = store.doc_ids
    index_of = {doc_id: i for i, doc_id in enumerate(doc_ids)}
    sums = np.stack([doc.token_sum() for doc in store])

    resolved = []
    for prompt, pos_id in pairs:
        if isinstance(prompt, str):
            if prompt_embedder is None:
                raise ValueError("text prompts require a prompt_embedder")
            prompt = prompt_embedder.embed_prompt(prompt)
        if pos_id not in index_of:
            raise KeyError(f"positive doc_id {pos_id!r} not in store")
        resolved.append((_prompt_vec(prompt, dim), index_of[pos_id]))

    rng = np.random.default_rng(config.seed)
    w_q = np.eye(dim) + config.init_scale * rng.standard_normal((dim, dim))
    w_k = np.eye(dim) + config.init_scale * rng.standard_normal((dim, dim))
    layer = AttentionLayer(w_q, w_k)

    n_docs = len(doc_ids)
    n_neg = config.batch_size - 1
    loss_history = []
    for _ in range(config.epochs):
        order = rng.permutation(len(resolved))
        epoch_loss = 0.0
        for step in order:
            p, pos_idx = resolved[step]
            # uniform negatives, skipping past the positive index
            draw = rng.choice(n_docs - 1, size=n_neg, replace=False)
            neg_idx = np.where(draw >= pos_idx, draw + 1, draw)
            batch = np.vstack([sums[pos_idx][None, :], sums[neg_idx]])
            scores = _scores(layer, p, batch)
            shift = scores.max()
            exp = np.exp(scores - shift)
            total = exp.sum()
            epoch_loss += float(np.log(total) + shift - scores[0])
            alpha = exp / total
            alpha[0] -= 1.0
            m = alpha @ batch
            layer.w_q -= config.learning_rate * np.outer(layer.w_k @ m, p)
            layer.w_k -= config.learning_rate * np.outer(layer.w_q @ p, m)
        loss_history.append(epoch_loss / len(resolved))
    return layer, loss_history


def compose_prompts(prompts: Sequence[PromptEmbedding], weights) -> PromptWeighting:
    """Build a weighted prompt mixture; weights normalize to sum to one."""
    return PromptWeighting(prompts=tuple(prompts), weights=np.asarray(weights, dtype=np.float64))


def rar(layer: AttentionLayer, prompt, doc: DocumentEmbeddings, answer_indices) -> float:
    """Share of the document's attention mass landing on the answer tokens.

    Scores are shifted by the per-document minimum so mass is non-negative.
    Returns 0.0 when the shifted mass vanishes everywhere (flat attention).
    """
    idx = np.asarray(answer_indices, dtype=np.intp)
    if idx.size == 0:
        raise ValueError("answer_indices is empty")
    if idx.min() < 0 or idx.max() >= doc.n_tokens:
        raise ValueError(
            f"answer_indices out of range for document {doc.doc_id!r} with {doc.n_tokens} tokens"
        )
    scores = attention(layer, prompt, doc)
    mass = scores - scores.min()
    total = float(mass.sum())
    if total == 0.0:
        return 0.0
    return float(mass[idx].sum()) / total


# ---------------------------------------------------------------------------
# Checkpoint format: magic, version, dim, then w_q and w_k as row-major
# little-endian float64.
# ---------------------------------------------------------------------------


def save_layer(layer: AttentionLayer, path: str | Path):
    path = Path(path)
    with open(path, "wb") as out:
        out.write(_CKPT_MAGIC)
        out.write(struct.pack("<II", _CKPT_VERSION, layer.dim))
        out.write(np.ascontiguousarray(layer.w_q, dtype="<f8").tobytes())
        out.write(np.ascontiguousarray(layer.w_k, dtype="<f8").tobytes())


def load_layer(path: str | Path) -> AttentionLayer:
    path = Path(path)
    with open(path, "rb") as f:
        magic = f.read(4)
        if magic != _CKPT_MAGIC:
            raise ValueError(f"{path}: not an attention checkpoint (bad magic)")
        header = f.read(8)
        if len(header) != 8:
            raise ValueError(f"{path}: truncated checkpoint header")
        version, dim = struct.unpack("<II", header)
        if version != _CKPT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint version {version}")
        n = 8 * dim * dim
        raw_q = f.read(n)
        raw_k = f.read(n)
        if len(raw_q) != n or len(raw_k) != n:
            raise ValueError(f"{path}: truncated checkpoint payload")
        if f.read(1):
            raise ValueError(f"{path}: trailing bytes after checkpoint payload")
    w_q = np.frombuffer(raw_q, dtype="<f8").reshape(dim, dim).astype(np.float64)
    w_k = np.frombuffer(raw_k, dtype="<f8").reshape(dim, dim).astype(np.float64)
    return AttentionLayer(w_q, w_k)


class PromptAttention(BaseEstimator):
    """Estimator wrapper around the trainable attention layer.

    fit() expects an EmbeddingStore and (prompt, positive doc id) pairs;
    afterwards the layer is available as w_q_ / w_k_ and through scoring
    helpers. transform() produces the matrix of prompt-conditioned document
    embeddings used by the map and clustering stages.
    """

    def __init__(self, learning_rate: float = 0.05, epochs: int = 20,
                 batch_size: int = 16, seed: int = 0, init_scale: float = 0.01):
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.seed = seed
        self.init_scale = init_scale

    def _config(self) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            seed=self.seed,
            init_scale=self.init_scale,
        )

    def fit(self, store: EmbeddingStore, pairs: Sequence[tuple], prompt_embedder=None):
        layer, history = train(store, pairs, self._config(), prompt_embedder=prompt_embedder)
        self.w_q_ = layer.w_q
        self.w_k_ = layer.w_k
        self.dim_ = layer.dim
        self.loss_history_ = history
        return self

    @property
    def layer_(self) -> AttentionLayer:
        check_fitted(self, "w_q_", "w_k_")
        return AttentionLayer(self.w_q_, self.w_k_)

    def relevance(self, prompt, doc: DocumentEmbeddings) -> float:
        return relevance(self.layer_, prompt, doc)

    def transform(self, store: EmbeddingStore, prompt) -> np.ndarray:
        """Dynamic embedding of every document under one prompt, (n_docs, dim)."""
        layer = self.layer_
        return np.stack([dynamic_embedding(layer, prompt, doc) for doc in store])

    def rank(self, prompt, store: EmbeddingStore, top_k: int | None = None) -> list[tuple[str, float]]:
        """Documents sorted by relevance, highest first. Ties keep store order."""
        layer = self.layer_
        scored = [(doc.doc_id, relevance(layer, prompt, doc)) for doc in store]
        scored.sort(key=lambda pair: -pair[1])
        return scored if top_k is None else scored[:top_k]

    def evaluate(self, prompt, doc: DocumentEmbeddings) -> PromptResult:
        return evaluate_prompt(self.layer_, prompt, doc)

    def save(self, path: str | Path):
        save_layer(self.layer_, path)

    def load(self, path: str | Path):
        """Populate fitted state from a checkpoint written by save()."""
        layer = load_layer(path)
        self.w_q_ = layer.w_q
        self.w_k_ = layer.w_k
        self.dim_ = layer.dim
        self.loss_history_ = []
        return self
