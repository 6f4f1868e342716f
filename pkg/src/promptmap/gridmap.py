"""Relevance-preserving circular document map.

Items are placed one-to-one onto concentric rings of cells. Every cell
carries a weight vector in embedding space plus a target relevance in [0,1];
an item claims the vacant cell minimizing a weighted mix of embedding
distance and relevance mismatch. After each placement the winner's
neighborhood pulls its weights toward the item and the winner's ring shifts
its relevance toward the item's. Radius therefore ends up encoding relevance
while angle/locality encode similarity.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from sklearn.base import BaseEstimator

from .validation import as_vector, check_fitted, check_positive

__all__ = [
    "GridCell",
    "GridMap",
    "MapConfig",
    "MapItem",
    "RelevanceMap",
    "build_grid",
    "matching_cost",
    "assign_epoch",
    "update_weights",
    "update_relevance",
    "global_cost",
    "fit",
    "rpc",
    "normalize_relevance",
    "export_layout",
    "save_layout",
]

_SIGMA_FLOOR = 0.01


@dataclass(frozen=True)
class GridCell:
    """Snapshot view of one cell; the map's arrays are the source of truth."""

    index: int
    layer: int
    position: tuple[float, float]
    weight: np.ndarray
    relevance: float
    occupant: str | None


@dataclass(frozen=True)
class MapItem:
    id: str
    embedding: np.ndarray
    relevance: float

    def __post_init__(self):
        object.__setattr__(self, "embedding", as_vector(self.embedding, f"embedding of {self.id!r}"))
        r = float(self.relevance)
        if not (0.0 <= r <= 1.0) or not math.isfinite(r):
            raise ValueError(f"item {self.id!r}: relevance must be in [0,1], got {r}")
        object.__setattr__(self, "relevance", r)


@dataclass
class MapConfig:
    omega_s: float = 1.0
    omega_r: float = 0.0
    epochs: int = 20
    lr0: float = 0.5
    sigma0: float | None = None  # None: half the grid radius, resolved at fit
    slack: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.omega_s < 0 or self.omega_r < 0:
            raise ValueError("omega_s and omega_r must be non-negative")
        if self.omega_s + self.omega_r <= 0:
            raise ValueError("omega_s + omega_r must be positive")
        check_positive(self.epochs, "epochs")
        check_positive(self.lr0, "lr0")
        if self.sigma0 is not None:
            check_positive(self.sigma0, "sigma0")
        check_positive(self.slack, "slack")


class GridMap:
    """Circular grid state: cell arrays, occupancy, and the item assignment."""

    def __init__(self, weights: np.ndarray, gammas: np.ndarray, positions: np.ndarray,
                 layers: np.ndarray):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.gammas = np.asarray(gammas, dtype=np.float64)
        self.positions = np.asarray(positions, dtype=np.float64)
        self.layers = np.asarray(layers, dtype=np.intp)
        m = self.weights.shape[0]
        if not (self.gammas.shape == (m,) and self.positions.shape == (m, 2) and self.layers.shape == (m,)):
            raise ValueError("cell arrays disagree on cell count")
        if np.any(self.gammas < 0) or np.any(self.gammas > 1):
            raise ValueError("cell relevance out of [0,1]")
        if np.any(np.all(self.positions == 0.0, axis=1)):
            raise ValueError("the center position must stay vacant: no cell may sit at (0,0)")
        self.occupants: list[str | None] = [None] * m
        self.assignments: dict[str, int] = {}
        self.initial_gammas = self.gammas.copy()

    @property
    def n_cells(self) -> int:
        return int(self.weights.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.weights.shape[1])

    @property
    def layer_count(self) -> int:
        return int(self.layers.max())

    @property
    def cells(self) -> list[GridCell]:
        return [
            GridCell(
                index=i,
                layer=int(self.layers[i]),
                position=(float(self.positions[i, 0]), float(self.positions[i, 1])),
                weight=self.weights[i].copy(),
                relevance=float(self.gammas[i]),
                occupant=self.occupants[i],
            )
            for i in range(self.n_cells)
        ]

    def occupied_mask(self) -> np.ndarray:
        return np.array([o is not None for o in self.occupants], dtype=bool)

    def clear_occupancy(self):
        self.occupants = [None] * self.n_cells
        self.assignments = {}

    def place(self, item_id: str, cell_index: int):
        if self.occupants[cell_index] is not None:
            raise ValueError(f"cell {cell_index} already occupied by {self.occupants[cell_index]!r}")
        if item_id in self.assignments:
            raise ValueError(f"item {item_id!r} already assigned")
        self.occupants[cell_index] = item_id
        self.assignments[item_id] = cell_index


def build_grid(n_items: int, feature_dim: int, slack: float = 0.2, seed: int = 0) -> GridMap:
    """Construct the empty circular grid for n_items.

    Ring L holds round(2*pi*L) evenly spaced cells at radius L; rings are
    added until the cell count reaches ceil(n_items * (1 + slack)), which
    keeps strictly more cells than items. Weights start uniform in [-1, 1];
    cell relevance starts at 1/L and is then min-max normalized so the
    innermost ring reads 1 and the outermost 0.
    """
    if n_items < 1:
        raise ValueError("n_items must be >= 1")
    check_positive(feature_dim, "feature_dim")
    check_positive(slack, "slack")
    target = math.ceil(n_items * (1.0 + slack))
    positions = []
    layers = []
    ring = 0
    while len(positions) < target:
        ring += 1
        count = round(2.0 * math.pi * ring)
        for i in range(count):
            angle = 2.0 * math.pi * i / count
            positions.append((ring * math.cos(angle), ring * math.sin(angle)))
            layers.append(ring)
    layers = np.asarray(layers, dtype=np.intp)
    gammas = 1.0 / layers.astype(np.float64)
    span = gammas.max() - gammas.min()
    if span > 0:
        gammas = (gammas - gammas.min()) / span
    else:
        gammas = np.full_like(gammas, 0.5)  # single ring: same degenerate rule as normalize_relevance
    rng = np.random.default_rng(seed)
    weights = rng.uniform(-1.0, 1.0, size=(len(layers), feature_dim))
    return GridMap(weights=weights, gammas=gammas, positions=np.asarray(positions), layers=layers)


def matching_cost(cell: GridCell, item: MapItem, cfg: MapConfig) -> float:
    """omega_s * ||e - w||_2 + omega_r * |r - gamma| for one cell/item pair."""
    w = np.asarray(cell.weight, dtype=np.float64)
    if w.shape != item.embedding.shape:
        raise ValueError(
            f"cell weight dim {w.shape[0]} does not match item embedding dim {item.embedding.shape[0]}"
        )
    return float(
        cfg.omega_s * np.linalg.norm(item.embedding - w)
        + cfg.omega_r * abs(item.relevance - cell.relevance)
    )


def _cost_vector(grid: GridMap, embedding: np.ndarray, relevance: float, cfg: MapConfig) -> np.ndarray:
    # Each term is skipped when its weight is zero; values are unchanged
    # (weights and embeddings are finite) but the dominant norm is avoided.
    cost = np.zeros(grid.n_cells)
    if cfg.omega_s != 0.0:
        cost += cfg.omega_s * np.linalg.norm(grid.weights - embedding[None, :], axis=1)
    if cfg.omega_r != 0.0:
        cost += cfg.omega_r * np.abs(grid.gammas - relevance)
    return cost


def update_weights(grid: GridMap, winner: int, item: MapItem, lr_t: float, sigma_t: float):
    """Pull every cell's weight toward the item, Gaussian-damped by layout
    distance from the winning cell."""
    diff = grid.positions - grid.positions[winner][None, :]
    sq_dist = np.einsum("ij,ij->i", diff, diff)
    kernel = np.exp(-sq_dist / (2.0 * sigma_t * sigma_t))
    grid.weights += (lr_t * kernel)[:, None] * (item.embedding[None, :] - grid.weights)


def update_relevance(grid: GridMap, winner: int, item: MapItem, lr_t: float):
    """Shift the whole winning ring's relevance toward the item's relevance.

    Every cell on the ring moves by the same amount, lr_t times the gap
    between the item and the winner (not each cell's own gap); results are
    clamped to [0,1].
    """
    ring = grid.layers == grid.layers[winner]
    delta = lr_t * (item.relevance - grid.gammas[winner])
    grid.gammas[ring] = np.clip(grid.gammas[ring] + delta, 0.0, 1.0)


def _schedule(cfg: MapConfig, sigma0: float, epoch: int) -> tuple[float, float]:
    frac = 1.0 - epoch / cfg.epochs
    return cfg.lr0 * frac, sigma0 * frac + _SIGMA_FLOOR


def assign_epoch(grid: GridMap, items: Sequence[MapItem], cfg: MapConfig, epoch: int,
                 sigma0: float | None = None) -> GridMap:
    """Run one full assignment pass, mutating the grid in place.

    All cells are vacated, then items compete for cells. When relevance has
    weight (omega_r > 0) items are visited in descending relevance order,
    ties broken by the (seed, epoch) shuffle stream: the most relevant items
    must claim the scarce central cells first, since arbitrary order lets
    large equal-relevance groups capture whichever rings happen to have
    capacity, scrambling the radial ordering. With omega_r = 0 relevance
    carries no weight in the competition and the visit order is the plain
    shuffle. Each item claims the vacant cell with minimal matching cost
    (cost ties break to the lowest cell index) and triggers the weight and
    ring-relevance updates at this epoch's learning rate and neighborhood
    width.
    """
    if len(items) >= grid.n_cells:
        raise ValueError(f"{len(items)} items need more than {grid.n_cells} cells")
    sigma0 = cfg.sigma0 if sigma0 is None else sigma0
    if sigma0 is None:
        sigma0 = max(1.0, grid.layer_count / 2.0)
    lr_t, sigma_t = _schedule(cfg, sigma0, epoch)
    rng = np.random.default_rng([cfg.seed & 0xFFFFFFFFFFFFFFFF, epoch])
    order = rng.permutation(len(items))
    if cfg.omega_r > 0:
        rel = np.array([items[i].relevance for i in order])
        order = order[np.argsort(-rel, kind="stable")]
    grid.clear_occupancy()
    occupied = np.zeros(grid.n_cells, dtype=bool)
    for idx in order:
        item = items[idx]
        costs = _cost_vector(grid, item.embedding, item.relevance, cfg)
        costs[occupied] = np.inf
        winner = int(np.argmin(costs))  # first minimum: lowest index wins ties
        grid.place(item.id, winner)
        occupied[winner] = True
        update_weights(grid, winner, item, lr_t, sigma_t)
        update_relevance(grid, winner, item, lr_t)
    return grid


def global_cost(grid: GridMap, items: Sequence[MapItem], cfg: MapConfig) -> float:
    """Sum over items of each item's best-cell matching cost, occupancy ignored."""
    total = 0.0
    for item in items:
        total += float(_cost_vector(grid, item.embedding, item.relevance, cfg).min())
    return total


def _check_items(items: Sequence[MapItem]) -> Sequence[MapItem]:
    if len(items) == 0:
        raise ValueError("no items to map")
    dims = {item.embedding.shape[0] for item in items}
    if len(dims) != 1:
        raise ValueError(f"items disagree on embedding dim: {sorted(dims)}")
    ids = {item.id for item in items}
    if len(ids) != len(items):
        raise ValueError("duplicate item ids")
    return items


def fit(items: Sequence[MapItem], cfg: MapConfig | None = None) -> tuple[GridMap, list[float]]:
    """Build a grid and run the full assignment schedule.

    Learning rate and neighborhood width decay linearly over epochs (width is
    floored at 0.01). The returned loss history has epochs+1 entries: the
    global cost of the untouched grid, then the cost after each epoch, so
    history[-1] against history[0] measures total improvement. Assignments
    are those of the final epoch. Deterministic for a fixed cfg.seed.
    """
    cfg = cfg or MapConfig()
    items = _check_items(items)
    grid = build_grid(len(items), items[0].embedding.shape[0], slack=cfg.slack, seed=cfg.seed)
    sigma0 = cfg.sigma0 if cfg.sigma0 is not None else max(1.0, grid.layer_count / 2.0)
    history = [global_cost(grid, items, cfg)]
    for epoch in range(cfg.epochs):
        assign_epoch(grid, items, cfg, epoch, sigma0=sigma0)
        history.append(global_cost(grid, items, cfg))
    return grid, history


def rpc(grid: GridMap, items: Sequence[MapItem], gammas: np.ndarray | None = None) -> float:
    """Correlation between item relevance and assigned-cell relevance.

    Pearson over (r_item, gamma_assigned_cell) pairs; pass gammas to score an
    alternative relevance field (e.g. grid.initial_gammas) under the same
    assignments. Zero variance on either side is defined as 0.
    """
    if len(items) < 2:
        raise ValueError("rpc needs at least 2 items")
    gam = grid.gammas if gammas is None else np.asarray(gammas, dtype=np.float64)
    r = np.empty(len(items))
    g = np.empty(len(items))
    for i, item in enumerate(items):
        if item.id not in grid.assignments:
            raise ValueError(f"item {item.id!r} has no assignment")
        r[i] = item.relevance
        g[i] = gam[grid.assignments[item.id]]
    r_c = r - r.mean()
    g_c = g - g.mean()
    denom = np.sqrt((r_c @ r_c) * (g_c @ g_c))
    if denom == 0.0:
        return 0.0
    return float((r_c @ g_c) / denom)


def normalize_relevance(raw) -> np.ndarray:
    """Min-max normalize raw relevance scores to [0,1]; constant input -> 0.5."""
    arr = as_vector(raw, "raw relevance scores")
    span = arr.max() - arr.min()
    if span == 0.0:
        return np.full_like(arr, 0.5)
    return (arr - arr.min()) / span


def export_layout(grid: GridMap, loss_history: Sequence[float]) -> dict:
    """Layout dict for serialization: cells, assignments, loss history."""
    return {
        "cells": [
            {
                "index": i,
                "layer": int(grid.layers[i]),
                "x": float(grid.positions[i, 0]),
                "y": float(grid.positions[i, 1]),
                "gamma": float(grid.gammas[i]),
                "occupant": grid.occupants[i],
            }
            for i in range(grid.n_cells)
        ],
        "assignments": dict(sorted(grid.assignments.items())),
        "loss_history": [float(v) for v in loss_history],
    }


def save_layout(grid: GridMap, loss_history: Sequence[float], path: str | Path):
    path = Path(path)
    with open(path, "w", encoding="utf-8") as out:
        json.dump(export_layout(grid, loss_history), out, sort_keys=True)
        out.write("\n")


class RelevanceMap(BaseEstimator):
    """Estimator wrapper around the circular-grid fit.

    Parameters mirror MapConfig; fit() takes a list of MapItem and exposes
    map_, loss_history_, assignments_ afterwards.
    """

    def __init__(self, omega_s: float = 1.0, omega_r: float = 0.0, epochs: int = 20,
                 lr0: float = 0.5, sigma0: float | None = None, slack: float = 0.2,
                 seed: int = 0):
        self.omega_s = omega_s
        self.omega_r = omega_r
        self.epochs = epochs
        self.lr0 = lr0
        self.sigma0 = sigma0
        self.slack = slack
        self.seed = seed

    def _config(self) -> MapConfig:
        return MapConfig(
            omega_s=self.omega_s,
            omega_r=self.omega_r,
            epochs=self.epochs,
            lr0=self.lr0,
            sigma0=self.sigma0,
            slack=self.slack,
            seed=self.seed,
        )

    def fit(self, items: Sequence[MapItem]):
        grid, history = fit(items, self._config())
        self.map_ = grid
        self.loss_history_ = history
        self.assignments_ = dict(grid.assignments)
        self.items_ = list(items)
        return self

    def rpc_(self, initial: bool = False) -> float:
        check_fitted(self, "map_")
        gammas = self.map_.initial_gammas if initial else None
        return rpc(self.map_, self.items_, gammas=gammas)

    def transform(self, items: Sequence[MapItem] | None = None) -> np.ndarray:
        """Layout coordinates of each fitted item, (n_items, 2), in item order."""
        check_fitted(self, "map_")
        items = self.items_ if items is None else items
        coords = np.empty((len(items), 2))
        for i, item in enumerate(items):
            coords[i] = self.map_.positions[self.map_.assignments[item.id]]
        return coords
