"""Mini-batch training of the embedding model with early stopping.

Deterministic given the config seed: initialization, batch order and the
returned best-validation checkpoint all flow from named derived seeds.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError
from .graph import RelationGraph
from .model import (
    EmbeddingModel,
    OBJECTIVES,
    Vocabulary,
    batch_from_edges,
    load_pretrained_embeddings,
    loss_and_gradients,
    training_loss,
)
from .optim import Adam, clip_global_norm
from .util import derive_seed

Edge = tuple[int, int]


@dataclass
class TrainConfig:
    """Desk-scale defaults; `paper_scale()` gives the large reference profile
    (GRU state 300, 300-d token vectors, batch 128)."""

    objective: str = "global"
    embed_size: int = 32
    state_size: int = 32
    batch_size: int = 32
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    max_epochs: int = 200
    patience: int = 10
    seed: int = 0
    clip_norm: float | None = 5.0
    embeddings_path: str | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.objective not in OBJECTIVES:
            raise ConfigError(f"objective must be one of {OBJECTIVES}, got {self.objective!r}")

    @classmethod
    def paper_scale(cls, **overrides) -> "TrainConfig":
        base = dict(embed_size=300, state_size=300, batch_size=128)
        base.update(overrides)
        return cls(**base)


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_loss: float
    elapsed: float


@dataclass
class TrainResult:
    model: EmbeddingModel
    history: list[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    best_val_loss: float = float("inf")


def _usable_edges(graph: RelationGraph, edges: Sequence[Edge], objective: str) -> list[Edge]:
    """Drop edges an objective cannot train on: the distribution regression
    needs strictly positive target weights (PPMI rows may contain zeros)."""
    if objective == "global":
        if graph.weights is None:
            raise DataError("global objective needs a normalized graph")
        return [(i, j) for i, j in edges if graph.weights[i][j] > 0.0]
    return list(edges)


def evaluate_loss(
    model: EmbeddingModel,
    graph: RelationGraph,
    vocab: Vocabulary,
    edges: Sequence[Edge],
    objective: str,
    batch_size: int = 512,
) -> float:
    """Loss over an edge list, accumulated exactly (not a mean of batch means)."""
    if not edges:
        raise DataError("cannot evaluate on an empty edge list")
    if objective == "global":
        total = 0.0
        for start in range(0, len(edges), batch_size):
            chunk = edges[start : start + batch_size]
            batch = batch_from_edges(graph, vocab, chunk)
            total += training_loss(model, batch, objective) * len(chunk)
        return total / len(edges)
    # local: weight each chunk by its share of the total count mass
    total_counts = sum(graph.counts[i][j] for i, j in edges)
    acc = 0.0
    for start in range(0, len(edges), batch_size):
        chunk = edges[start : start + batch_size]
        batch = batch_from_edges(graph, vocab, chunk)
        acc += training_loss(model, batch, objective) * float(batch.counts.sum())
    return acc / total_counts


def train(
    graph: RelationGraph,
    config: TrainConfig,
    train_edges: Sequence[Edge] | None = None,
    val_edges: Sequence[Edge] | None = None,
) -> TrainResult:
    """Adam over mini-batches; keeps the checkpoint with the best validation
    loss and stops after `patience` epochs without improvement."""
    all_edges = list(graph.edges())
    train_edges = _usable_edges(graph, train_edges if train_edges is not None else all_edges, config.objective)
    val_edges = _usable_edges(graph, val_edges if val_edges is not None else all_edges, config.objective)
    if not train_edges:
        raise DataError("empty training edge set")
    if not val_edges:
        raise DataError("empty validation edge set")

    vocab = Vocabulary.from_graph(graph)
    model = EmbeddingModel.create(
        vocab, graph.kb, config.embed_size, config.state_size, seed=derive_seed(config.seed, "init")
    )
    if config.embeddings_path:
        load_pretrained_embeddings(config.embeddings_path, model)

    optimizer = Adam(
        model.params,
        lr=config.learning_rate,
        beta1=config.adam_beta1,
        beta2=config.adam_beta2,
        eps=config.adam_epsilon,
    )
    rng = np.random.default_rng(derive_seed(config.seed, "batch-order"))

    result = TrainResult(model=model)
    best_params = model.copy_params()
    epochs_since_best = 0
    started = time.perf_counter()
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_edges))
        losses = []
        for start in range(0, len(order), config.batch_size):
            chunk = [train_edges[k] for k in order[start : start + config.batch_size]]
            batch = batch_from_edges(graph, vocab, chunk)
            loss, grads = loss_and_gradients(model, batch, config.objective)
            if config.clip_norm is not None:
                clip_global_norm(grads, config.clip_norm)
            optimizer.step(grads)
            losses.append(loss)
            for key, tensor in model.params.items():
                if not np.all(np.isfinite(tensor)):
                    raise DataError(f"parameter {key} became non-finite at epoch {epoch}")
        val_loss = evaluate_loss(model, graph, vocab, val_edges, config.objective)
        result.history.append(
            EpochStats(epoch, float(np.mean(losses)), val_loss, time.perf_counter() - started)
        )
        if val_loss < result.best_val_loss:
            result.best_val_loss = val_loss
            result.best_epoch = epoch
            best_params = model.copy_params()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= config.patience:
                break
    model.set_params(best_params)
    return result


def write_training_log(history: Sequence[EpochStats], path: str | Path) -> None:
    """CSV log; the elapsed column is wall-clock and varies run to run, so
    this file stays out of the reproducibility manifest."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss", "elapsed_seconds"])
        for row in history:
            writer.writerow([row.epoch, repr(row.train_loss), repr(row.val_loss), f"{row.elapsed:.3f}"])
