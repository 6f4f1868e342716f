"""Shared fixtures: random document factories, the per-fit map invariant
checker, and the cached digits benchmark runs used by several test modules."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import pytest
from scipy.stats import spearmanr

from promptmap import clustering, corpus, gridmap
from promptmap.embeddings import DocumentEmbeddings, EmbeddingStore


def random_doc(doc_id: str, dim: int, n_tokens: int, rng: np.random.Generator) -> DocumentEmbeddings:
    tokens = tuple(f"w{i}" for i in range(n_tokens))
    return DocumentEmbeddings(
        doc_id=doc_id,
        title=f"title {doc_id}",
        text=" ".join(tokens),
        tokens=tokens,
        vectors=rng.standard_normal((n_tokens, dim)),
    )


def random_store(n_docs: int, dim: int, seed: int = 0, n_tokens: int = 5) -> EmbeddingStore:
    rng = np.random.default_rng(seed)
    return EmbeddingStore(dim=dim, documents=[random_doc(f"d{i}", dim, n_tokens, rng)
                                              for i in range(n_docs)])


def assert_map_invariants(grid: gridmap.GridMap, items, history) -> None:
    """One-to-one assignment, gamma range, center vacancy, global cost drop."""
    assert sorted(grid.assignments) == sorted(item.id for item in items)
    cells = list(grid.assignments.values())
    assert len(set(cells)) == len(cells), "two items share a cell"
    assert np.all(grid.gammas >= 0.0) and np.all(grid.gammas <= 1.0)
    assert np.all(np.linalg.norm(grid.positions, axis=1) > 0.0), "a cell sits at the center"
    assert history[-1] < history[0], "fit did not reduce the global cost"


@pytest.fixture(scope="session")
def map_invariants():
    """The invariant checker as a fixture so every fit in the suite can use it."""
    return assert_map_invariants


@pytest.fixture(scope="session")
def doc_factory():
    return random_doc


@pytest.fixture(scope="session")
def store_factory():
    return random_store


@dataclass
class DigitsRun:
    omega_s: float
    omega_r: float
    grid: gridmap.GridMap
    history: list
    items: list
    digits: np.ndarray
    coords: np.ndarray
    layers: np.ndarray
    seconds: float
    silhouette: float
    spearman: float
    rpc_initial: float
    rpc_final: float


def _run_digits(items, digits, omega_s: float, omega_r: float) -> DigitsRun:
    cfg = gridmap.MapConfig(omega_s=omega_s, omega_r=omega_r, epochs=30,
                            lr0=0.5, slack=0.2, seed=0)
    start = time.perf_counter()
    grid, history = gridmap.fit(items, cfg)
    seconds = time.perf_counter() - start
    assert_map_invariants(grid, items, history)
    coords = np.stack([grid.positions[grid.assignments[it.id]] for it in items])
    layers = np.array([grid.layers[grid.assignments[it.id]] for it in items])
    return DigitsRun(
        omega_s=omega_s,
        omega_r=omega_r,
        grid=grid,
        history=history,
        items=items,
        digits=digits,
        coords=coords,
        layers=layers,
        seconds=seconds,
        silhouette=clustering.silhouette(coords, digits),
        spearman=float(spearmanr(digits, layers).statistic),
        rpc_initial=gridmap.rpc(grid, items, gammas=grid.initial_gammas),
        rpc_final=gridmap.rpc(grid, items),
    )


@pytest.fixture(scope="session")
def digits_run():
    """Fit the 1797-sample digits set under a similarity/relevance weighting.

    Returns a memoizing callable: each (omega_s, omega_r) pair is fitted at
    most once per session because the full runs cost tens of seconds.
    """
    from sklearn.datasets import load_digits

    data = load_digits()
    items = corpus.digits_items(data.data, data.target)
    digits = corpus.digits_labels(items)
    cache: dict[tuple[float, float], DigitsRun] = {}

    def run(omega_s: float, omega_r: float) -> DigitsRun:
        key = (omega_s, omega_r)
        if key not in cache:
            cache[key] = _run_digits(items, digits, omega_s, omega_r)
        return cache[key]

    return run
