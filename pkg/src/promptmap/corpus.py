"""Corpus ingestion and dataset builders.

Covers the CSV corpus format, question/answer triplet handling for
contrastive training, the 8x8 digits evaluation set, and a seeded synthetic
corpus generator with planted group structure for benchmarks.
"""

from __future__ import annotations

import csv
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .embeddings import EmbeddingStore, PromptEmbedding, ToyEmbedder
from .gridmap import MapItem

DATA_DIR_ENV = "PROMPTMAP_DATA_DIR"


def resolve_data_path(raw: str | Path) -> Path:
    """Resolve a possibly-relative path against the data directory env var.

    Relative paths prefer the directory named by PROMPTMAP_DATA_DIR when that
    candidate exists (or the plain relative path does not); absolute paths
    pass through untouched.
    """
    path = Path(raw)
    if not path.is_absolute():
        base = os.environ.get(DATA_DIR_ENV)
        if base:
            candidate = Path(base) / path
            if candidate.exists() or not path.exists():
                return candidate
    return path

__all__ = [
    "CorpusRecord",
    "QATriplet",
    "SynthConfig",
    "SynthCorpus",
    "load_corpus_csv",
    "save_corpus_csv",
    "embed_records",
    "triplets_to_training",
    "answer_token_indices",
    "load_qa_triplets",
    "save_qa_triplets",
    "load_training_pairs",
    "save_training_pairs",
    "load_digits_csv",
    "write_digits_csv",
    "digits_items",
    "digits_labels",
    "synth_corpus",
]


@dataclass(frozen=True)
class CorpusRecord:
    id: str
    title: str
    text: str
    source: str | None = None
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"record {self.id!r} has empty text")


@dataclass(frozen=True)
class QATriplet:
    """Extractive question/answer pair: the answer appears verbatim in context."""

    question: str
    answer: str
    context: str

    def __post_init__(self):
        if self.answer not in self.context:
            raise ValueError(f"answer {self.answer!r} is not a substring of its context")


def load_corpus_csv(path: str | Path, column_map: dict | None = None) -> list[CorpusRecord]:
    """Read a corpus CSV with header-driven columns.

    column_map maps the roles id/title/text (and optionally source) to header
    names; defaults are the role names themselves. Every unmapped column is
    kept in the record's labels dict.
    """
    path = Path(path)
    cols = {"id": "id", "title": "title", "text": "text"}
    cols.update(column_map or {})
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise ValueError(f"{path}: empty file")
        for role in ("id", "title", "text"):
            if cols[role] not in reader.fieldnames:
                raise ValueError(f"{path}: missing column {cols[role]!r} (mapped to {role})")
        mapped = {cols[role] for role in cols if cols.get(role)}
        records = []
        seen = set()
        for row in reader:
            rec_id = (row[cols["id"]] or "").strip()
            if not rec_id:
                raise ValueError(f"{path}: row {reader.line_num}: empty id")
            if rec_id in seen:
                raise ValueError(f"{path}: duplicate id {rec_id!r}")
            seen.add(rec_id)
            source = row.get(cols["source"]) if "source" in cols else None
            labels = {k: v for k, v in row.items() if k not in mapped and k is not None}
            records.append(
                CorpusRecord(
                    id=rec_id,
                    title=row[cols["title"]] or "",
                    text=row[cols["text"]] or "",
                    source=source,
                    labels=labels,
                )
            )
    if not records:
        raise ValueError(f"{path}: no data rows")
    return records


def save_corpus_csv(records: Sequence[CorpusRecord], path: str | Path):
    """Write records back out as id,title,text CSV (used by lasso exports)."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["id", "title", "text"])
        for rec in records:
            writer.writerow([rec.id, rec.title, rec.text])


def embed_records(records: Sequence[CorpusRecord], dim: int, seed: int = 0) -> EmbeddingStore:
    """Run the toy embedder over corpus records."""
    embedder = ToyEmbedder(dim, seed)
    return embedder.embed_corpus((rec.id, rec.title, rec.text) for rec in records)


# ---------------------------------------------------------------------------
# QA triplets -> contrastive training data
# ---------------------------------------------------------------------------


def triplets_to_training(
    triplets: Sequence[QATriplet], n: int = 16
) -> tuple[list[CorpusRecord], list[tuple[str, str]]]:
    """Turn QA triplets into a context corpus plus (prompt, positive id) pairs.

    Distinct contexts become documents (duplicates collapse to one id);
    each triplet contributes its question as a prompt pointing at its
    context's document. ``n`` is the intended contrastive batch size, so
    there must be at least n distinct contexts to sample negatives from.
    """
    if not triplets:
        raise ValueError("no triplets given")
    ctx_ids: dict[str, str] = {}
    records = []
    for t in triplets:
        if t.context not in ctx_ids:
            ctx_id = f"ctx-{len(ctx_ids):04d}"
            ctx_ids[t.context] = ctx_id
            records.append(CorpusRecord(id=ctx_id, title="", text=t.context))
    if len(records) < n:
        raise ValueError(
            f"only {len(records)} distinct contexts; contrastive batches of size {n} "
            f"need at least {n}"
        )
    pairs = [(t.question, ctx_ids[t.context]) for t in triplets]
    return records, pairs


def answer_token_indices(context: str, answer: str) -> list[int]:
    """Indices of whitespace tokens overlapping the answer's character span.

    Alignment is by character offsets of the first occurrence of the answer,
    matching the lowercasing whitespace tokenizer (offsets are unaffected by
    case folding).
    """
    if not answer.strip():
        raise ValueError("empty answer")
    start = context.find(answer)
    if start < 0:
        raise ValueError(f"answer {answer!r} not found in context")
    end = start + len(answer)
    indices = []
    for i, match in enumerate(re.finditer(r"\S+", context)):
        if match.start() < end and match.end() > start:
            indices.append(i)
    if not indices:
        raise ValueError(f"answer {answer!r} does not overlap any token")
    return indices


def load_qa_triplets(path: str | Path) -> list[QATriplet]:
    """JSON-lines {question, answer, context} loader."""
    path = Path(path)
    triplets = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            try:
                triplets.append(
                    QATriplet(question=rec["question"], answer=rec["answer"], context=rec["context"])
                )
            except KeyError as exc:
                raise ValueError(f"{path}:{lineno}: missing field {exc}") from exc
    if not triplets:
        raise ValueError(f"{path}: no triplets")
    return triplets


def save_qa_triplets(triplets: Sequence[QATriplet], path: str | Path):
    with open(path, "w", encoding="utf-8") as out:
        for t in triplets:
            out.write(json.dumps(
                {"question": t.question, "answer": t.answer, "context": t.context},
                sort_keys=True,
            ))
            out.write("\n")


def load_training_pairs(path: str | Path) -> list[tuple[str, str]]:
    """JSON-lines {prompt, positive_doc_id} loader (the training-file format)."""
    path = Path(path)
    pairs = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            try:
                pairs.append((str(rec["prompt"]), str(rec["positive_doc_id"])))
            except KeyError as exc:
                raise ValueError(f"{path}:{lineno}: missing field {exc}") from exc
    if not pairs:
        raise ValueError(f"{path}: no training pairs")
    return pairs


def save_training_pairs(pairs: Sequence[tuple[str, str]], path: str | Path):
    with open(path, "w", encoding="utf-8") as out:
        for prompt, doc_id in pairs:
            out.write(json.dumps({"prompt": prompt, "positive_doc_id": doc_id}, sort_keys=True))
            out.write("\n")


# ---------------------------------------------------------------------------
# Digits evaluation set
# ---------------------------------------------------------------------------


def digits_items(pixels: np.ndarray, digits: np.ndarray) -> list[MapItem]:
    """Map items from raw 8x8 digit data: pixels/16 features, relevance 1/(digit+1)."""
    pixels = np.asarray(pixels, dtype=np.float64)
    digits = np.asarray(digits)
    if pixels.ndim != 2 or pixels.shape[1] != 64:
        raise ValueError(f"expected 64 pixel columns, got shape {pixels.shape}")
    if digits.shape != (pixels.shape[0],):
        raise ValueError("pixel rows and labels disagree in length")
    items = []
    for i in range(pixels.shape[0]):
        d = int(digits[i])
        if d != digits[i] or d < 0:
            raise ValueError(f"row {i}: non-integer or negative label {digits[i]!r}")
        items.append(MapItem(id=str(i), embedding=pixels[i] / 16.0, relevance=1.0 / (d + 1)))
    return items


def load_digits_csv(path: str | Path) -> list[MapItem]:
    """Read the digits CSV (64 pixel columns + label; header row optional)."""
    path = Path(path)
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        for row in reader:
            if not row:
                continue
            rows.append(row)
    if not rows:
        raise ValueError(f"{path}: empty file")
    try:
        float(rows[0][0])
    except ValueError:
        rows = rows[1:]  # header row
    if not rows:
        raise ValueError(f"{path}: no data rows")
    pixels = np.empty((len(rows), 64))
    labels = np.empty(len(rows), dtype=np.int64)
    for i, row in enumerate(rows):
        if len(row) != 65:
            raise ValueError(f"{path}: row {i} has {len(row)} columns, expected 65")
        values = [float(v) for v in row]
        label = values[64]
        if label != int(label):
            raise ValueError(f"{path}: row {i}: non-integer label {row[64]!r}")
        pixels[i] = values[:64]
        labels[i] = int(label)
    return digits_items(pixels, labels)


def write_digits_csv(path: str | Path, pixels: np.ndarray, digits: np.ndarray):
    """Write digits data in the CSV layout load_digits_csv expects."""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([f"p{i}" for i in range(64)] + ["label"])
        for row, d in zip(np.asarray(pixels), np.asarray(digits)):
            writer.writerow([int(v) if float(v).is_integer() else float(v) for v in row] + [int(d)])


def digits_labels(items: Sequence[MapItem]) -> np.ndarray:
    """Recover digit values from item relevances (relevance = 1/(digit+1))."""
    return np.array([int(round(1.0 / item.relevance - 1.0)) for item in items])


# ---------------------------------------------------------------------------
# Synthetic planted-structure corpus
# ---------------------------------------------------------------------------


@dataclass
class SynthConfig:
    """Shape of the generated corpus.

    Documents carry two independent planted labelings: a topic group and
    (when n_styles > 0) a style group, assigned on orthogonal cycles so the
    two systems are uncorrelated. Each group owns a signature vocabulary that
    appears only in its documents and a disjoint query vocabulary that
    appears only in prompts, which keeps untrained dot-product retrieval
    uninformative.
    """

    n_docs: int = 200
    n_groups: int = 4
    n_styles: int = 3
    background_docs: int = 0
    dual_eval_docs: int = 0
    sig_tokens_per_doc: int = 10
    style_tokens_per_doc: int = 10
    background_tokens_per_doc: int = 16
    filler_tokens: int | None = None
    eval_sig_tokens: int | None = None
    eval_background_tokens: int | None = None
    signature_vocab: int = 6
    query_vocab: int = 8
    background_vocab: int = 300
    prompt_len: int = 3
    train_prompts_per_group: int = 20
    eval_prompts_per_group: int = 10
    dim: int = 48

    def __post_init__(self):
        if self.n_docs < self.n_groups or self.n_groups < 1:
            raise ValueError("need n_docs >= n_groups >= 1")
        if self.n_styles < 0 or self.background_docs < 0:
            raise ValueError("n_styles and background_docs must be >= 0")
        if self.prompt_len > self.query_vocab:
            raise ValueError("prompt_len cannot exceed query_vocab")
        if self.sig_tokens_per_doc < 1:
            raise ValueError("documents need at least one signature token")


@dataclass
class SynthCorpus:
    """Generated corpus bundle: store, ground-truth labels, prompts, triplets.

    Label arrays cover every document in store order; -1 marks documents
    outside that labeling (fillers, or single-facet training carriers when
    dual-labeled evaluation documents are generated).
    """

    config: SynthConfig
    seed: int
    store: EmbeddingStore
    labels: dict[str, np.ndarray]
    train_pairs: list[tuple[str, str]]      # (prompt text, positive doc id)
    eval_prompts: list[tuple[str, int]]     # held-out topic prompts with group ids
    facet_prompts: dict[str, str]           # one broad prompt per label system
    triplets: list[QATriplet]
    eval_doc_ids: tuple[str, ...] = ()

    def embedder(self) -> ToyEmbedder:
        return ToyEmbedder(self.config.dim, self.seed)

    def embed_prompt(self, text: str) -> PromptEmbedding:
        return self.embedder().embed_prompt(text)

    def training_store(self) -> EmbeddingStore:
        """Store without the held-out dual-labeled documents."""
        drop = set(self.eval_doc_ids)
        return EmbeddingStore(self.store.dim, [d for d in self.store if d.doc_id not in drop])


def _facet_vocab(prefix: str, group: int, kind: str, size: int) -> list[str]:
    return [f"{prefix}{group}{kind}{i}" for i in range(size)]


def synth_corpus(cfg: SynthConfig | None = None, seed: int = 0) -> SynthCorpus:
    """Generate the planted corpus, its prompts, and extractive triplets.

    Topic group of document i is i mod n_groups and style group is
    (i // n_groups) mod n_styles, so both labelings are balanced and mutually
    orthogonal. Prompts are built from the query vocabularies; training and
    held-out evaluation prompts use disjoint random token combinations.
    Deterministic for a fixed seed.
    """
    cfg = cfg or SynthConfig()
    rng = np.random.default_rng(seed)

    topic_sig = [_facet_vocab("t", g, "sig", cfg.signature_vocab) for g in range(cfg.n_groups)]
    topic_qry = [_facet_vocab("t", g, "qry", cfg.query_vocab) for g in range(cfg.n_groups)]
    style_sig = [_facet_vocab("s", h, "sig", cfg.signature_vocab) for h in range(cfg.n_styles)]
    style_qry = [_facet_vocab("s", h, "qry", cfg.query_vocab) for h in range(cfg.n_styles)]
    background = [f"bg{i}" for i in range(cfg.background_vocab)]

    dual = cfg.dual_eval_docs > 0 and cfg.n_styles > 0
    topic_labels: list[int] = []
    style_labels: list[int] = []
    records = []
    doc_tokens = []

    def add_doc(tokens: list[str], topic: int, style: int) -> None:
        i = len(records)
        rng.shuffle(tokens)
        doc_tokens.append(tokens)
        records.append((f"d{i:04d}", f"synthetic record {i}", " ".join(tokens)))
        topic_labels.append(topic)
        style_labels.append(style)

    def bg_draw(count: int) -> list[str]:
        return list(rng.choice(background, size=count)) if count > 0 else []

    for i in range(cfg.n_docs):
        if dual:
            # Training carriers hold one facet each, so a facet's contrastive
            # batches never see the other facet's vocabulary in positives.
            if i % 2 == 0:
                g = (i // 2) % cfg.n_groups
                tokens = list(rng.choice(topic_sig[g], size=cfg.sig_tokens_per_doc))
                add_doc(tokens + bg_draw(cfg.background_tokens_per_doc), g, -1)
            else:
                h = (i // 2) % cfg.n_styles
                tokens = list(rng.choice(style_sig[h], size=cfg.style_tokens_per_doc))
                add_doc(tokens + bg_draw(cfg.background_tokens_per_doc), -1, h)
            continue
        g = i % cfg.n_groups
        h = (i // cfg.n_groups) % max(cfg.n_styles, 1)
        tokens = list(rng.choice(topic_sig[g], size=cfg.sig_tokens_per_doc))
        if cfg.n_styles > 0 and cfg.style_tokens_per_doc > 0:
            tokens += list(rng.choice(style_sig[h], size=cfg.style_tokens_per_doc))
        add_doc(tokens + bg_draw(cfg.background_tokens_per_doc),
                g, h if cfg.n_styles > 0 else -1)

    # Unlabeled filler documents (label -1) made of background tokens only.
    # They dilute the contrastive negative pool the way a broad QA corpus
    # does, which keeps facet-wide query associations from cancelling out.
    filler_len = cfg.filler_tokens
    if filler_len is None:
        filler_len = cfg.sig_tokens_per_doc + cfg.style_tokens_per_doc + cfg.background_tokens_per_doc
    for _ in range(cfg.background_docs):
        add_doc(bg_draw(filler_len), -1, -1)

    # Held-out documents carrying both facets at once; never used as training
    # positives, so both label systems can be recovered from them cleanly.
    eval_bg = (cfg.background_tokens_per_doc if cfg.eval_background_tokens is None
               else cfg.eval_background_tokens)
    eval_sig = cfg.eval_sig_tokens
    eval_ids = []
    for j in range(cfg.dual_eval_docs if dual else 0):
        g = j % cfg.n_groups
        h = (j // cfg.n_groups) % cfg.n_styles
        tokens = list(rng.choice(topic_sig[g], size=eval_sig or cfg.sig_tokens_per_doc))
        tokens += list(rng.choice(style_sig[h], size=eval_sig or cfg.style_tokens_per_doc))
        eval_ids.append(f"d{len(records):04d}")
        add_doc(tokens + bg_draw(eval_bg), g, h)

    topic_of = np.array(topic_labels)
    style_of = np.array(style_labels)

    store = ToyEmbedder(cfg.dim, seed).embed_corpus(records)
    doc_ids = [rec[0] for rec in records]

    def make_prompts(qry: list[list[str]], member_docs: list[np.ndarray], sig: list[list[str]],
                     count: int, used: set[str]) -> tuple[list[tuple[str, str]], list[QATriplet], list[tuple[str, int]]]:
        pairs, trips, prompts = [], [], []
        for g in range(len(qry)):
            made = 0
            while made < count:
                chosen = sorted(rng.choice(qry[g], size=cfg.prompt_len, replace=False))
                text = " ".join(chosen)
                if text in used:
                    continue  # keep train/eval prompt sets disjoint
                used.add(text)
                doc_idx = int(rng.choice(member_docs[g]))
                answer = next(t for t in doc_tokens[doc_idx] if t in set(sig[g]))
                pairs.append((text, doc_ids[doc_idx]))
                trips.append(QATriplet(question=text, answer=answer, context=records[doc_idx][2]))
                prompts.append((text, g))
                made += 1
        return pairs, trips, prompts

    # Positives are always drawn from the training carriers, never from
    # held-out dual-labeled documents.
    train_topic = topic_of[:cfg.n_docs]
    train_style = style_of[:cfg.n_docs]
    topic_members = [np.flatnonzero(train_topic == g) for g in range(cfg.n_groups)]
    used: set[str] = set()
    train_pairs, triplets, _ = make_prompts(
        topic_qry, topic_members, topic_sig, cfg.train_prompts_per_group, used)
    _, _, eval_prompts = make_prompts(
        topic_qry, topic_members, topic_sig, cfg.eval_prompts_per_group, used)
    eval_prompts = [(text, g) for text, g in eval_prompts]

    labels = {"topic": topic_of}
    facet_prompts = {"topic": " ".join(tok for vocab in topic_qry for tok in vocab)}
    if cfg.n_styles > 0:
        style_members = [np.flatnonzero(train_style == h) for h in range(cfg.n_styles)]
        style_pairs, style_trips, _ = make_prompts(
            style_qry, style_members, style_sig, cfg.train_prompts_per_group, used)
        train_pairs += style_pairs
        triplets += style_trips
        labels["style"] = style_of
        facet_prompts["style"] = " ".join(tok for vocab in style_qry for tok in vocab)

    return SynthCorpus(
        config=cfg,
        seed=seed,
        store=store,
        labels=labels,
        train_pairs=train_pairs,
        eval_prompts=eval_prompts,
        facet_prompts=facet_prompts,
        triplets=triplets,
        eval_doc_ids=tuple(eval_ids),
    )
