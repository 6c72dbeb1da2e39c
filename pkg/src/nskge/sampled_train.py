"""
sampled_train.py

Purpose
- Negative-sampling baseline that shares the square loss, scoring,
  initializer and TransE projection of the non-sampling trainer, so timing
  and accuracy comparisons isolate sampling vs. non-sampling:
      loss(batch) = sum_pos c+ (1 - f)^2 + sum_sampled_neg c- f^2
- Uniform head-or-tail corruption that never emits a known training triple.

Negatives are redrawn for every batch of every epoch.
"""
from __future__ import annotations

import logging
import math
import time
from typing import Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from .config import SamplerConfig, TrainConfig
from .data import AdjacencyIndex, Dataset, Triple, as_triples, build_index
from .errors import NumericError
from .linalg import AdamState, adam_step
from .models import (
    ROLES,
    ModelKind,
    ParameterSet,
    accumulate_score_grad,
    init_params,
    project_unit_norm,
    score_triples,
)
from .ns_train import EpochRecord, TrainHistory, decay_epoch

logger = logging.getLogger(__name__)


# -----------------------------
# Corruption
# -----------------------------

def sample_batch_negatives(
    triples: np.ndarray,
    k: int,
    index: AdjacencyIndex,
    entity_count: int,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """k corruptions per triple; returns (negatives, row of the source triple)."""
    triples = as_triples(triples)
    n = len(triples)
    if n == 0:
        return np.zeros((0, 3), dtype=np.int64), np.zeros(0, dtype=np.int64)
    head_full = np.array([len(index.heads(t, r)) >= entity_count for _, r, t in triples.tolist()])
    tail_full = np.array([len(index.tails(h, r)) >= entity_count for h, r, _ in triples.tolist()])
    keep = ~(head_full & tail_full)
    for row in np.flatnonzero(~keep):
        logger.warning("triple %s has no legal corruption on either side; skipped", tuple(triples[row]))

    corrupt_head = rng.integers(0, 2, size=(n, k)).astype(bool)
    corrupt_head[head_full] = False
    corrupt_head[tail_full] = True
    cand = rng.integers(0, entity_count, size=(n, k))

    base = np.repeat(triples[:, None, :], k, axis=1)
    neg = base.copy()
    neg[..., 0] = np.where(corrupt_head, cand, base[..., 0])
    neg[..., 2] = np.where(corrupt_head, base[..., 2], cand)

    # rejection: redraw only the slots that hit a known triple
    bad = index.contains(neg[..., 0], neg[..., 1], neg[..., 2]) & keep[:, None]
    while bad.any():
        redraw = rng.integers(0, entity_count, size=int(bad.sum()))
        rows, cols = np.nonzero(bad)
        col = np.where(corrupt_head[rows, cols], 0, 2)
        neg[rows, cols, col] = redraw
        bad[rows, cols] = index.contains(neg[rows, cols, 0], neg[rows, cols, 1], neg[rows, cols, 2])

    src = np.repeat(np.arange(n), k)
    flat = neg.reshape(-1, 3)
    mask = np.repeat(keep, k)
    return flat[mask], src[mask]


def sample_negatives(
    triple,
    k: int,
    index: AdjacencyIndex,
    rng: np.random.Generator,
    entity_count: int,
) -> List[Triple]:
    neg, _ = sample_batch_negatives(np.asarray([tuple(triple)], dtype=np.int64), k, index, entity_count, rng)
    return [Triple(int(h), int(r), int(t)) for h, r, t in neg]


def enumerate_corruptions(dataset: Dataset, index: Optional[AdjacencyIndex] = None) -> np.ndarray:
    """Every legal head or tail corruption of every training triple, deduplicated."""
    index = index or build_index(dataset.train)
    E = dataset.entity_count
    ents = np.arange(E, dtype=np.int64)
    parts = []
    for h, r, t in dataset.train.tolist():
        heads = np.stack([ents, np.full(E, r), np.full(E, t)], axis=1)
        tails = np.stack([np.full(E, h), np.full(E, r), ents], axis=1)
        both = np.concatenate([heads, tails])
        parts.append(both[~index.contains(both[:, 0], both[:, 1], both[:, 2])])
    if not parts:
        return np.zeros((0, 3), dtype=np.int64)
    return np.unique(np.concatenate(parts), axis=0)


# -----------------------------
# Loss
# -----------------------------

def sampled_loss(kind, params: ParameterSet, positives, negatives, c_pos: float, c_neg: float) -> float:
    pos, neg = as_triples(positives), as_triples(negatives)
    total = 0.0
    if len(pos):
        f = score_triples(kind, params, pos[:, 0], pos[:, 1], pos[:, 2])
        total += float(np.sum(c_pos * (1.0 - f) ** 2))
    if len(neg):
        g = score_triples(kind, params, neg[:, 0], neg[:, 1], neg[:, 2])
        total += float(np.sum(c_neg * g * g))
    return total


def sampled_loss_and_gradients(
    kind,
    params: ParameterSet,
    positives: np.ndarray,
    negatives: np.ndarray,
    config: TrainConfig,
) -> Tuple[Tuple[float, float, float], Dict[str, np.ndarray]]:
    """Returns ((positive part, negative part, penalty), grads)."""
    kind = ModelKind.parse(kind)
    grads = params.zeros_like()
    f = score_triples(kind, params, positives[:, 0], positives[:, 1], positives[:, 2])
    g = score_triples(kind, params, negatives[:, 0], negatives[:, 1], negatives[:, 2]) if len(negatives) else np.zeros(0)
    pos_part = float(np.sum(config.c_pos * (1.0 - f) ** 2))
    neg_part = float(np.sum(config.c_neg * g * g))
    if not (math.isfinite(pos_part) and math.isfinite(neg_part)):
        raise NumericError("non-finite sampled loss", max_abs_param=params.max_abs())
    accumulate_score_grad(kind, params, positives, -2.0 * config.c_pos * (1.0 - f), grads)
    if len(negatives):
        accumulate_score_grad(kind, params, negatives, 2.0 * config.c_neg * g, grads)
    reg = 0.0
    if config.l2 > 0 and kind is not ModelKind.TRANSE:
        for role, table in params.tables.items():
            reg += config.l2 * float(np.sum(table * table))
            grads[role] += 2.0 * config.l2 * table
    return (pos_part, neg_part, reg), grads


# -----------------------------
# Training loop
# -----------------------------

def run_sampled_epoch(
    params: ParameterSet,
    states: Dict[str, AdamState],
    dataset: Dataset,
    index: AdjacencyIndex,
    config: TrainConfig,
    sampler: SamplerConfig,
    rng: np.random.Generator,
    lr: float,
) -> Tuple[ParameterSet, Tuple[float, float, float]]:
    """One shuffled pass over the positives in mini-batches with fresh negatives."""
    kind = params.kind
    train_set = dataset.train
    order = rng.permutation(len(train_set))
    pos_total = neg_total = reg_total = 0.0
    for start in range(0, len(order), sampler.batch_size):
        batch = train_set[order[start:start + sampler.batch_size]]
        negs, _ = sample_batch_negatives(batch, sampler.negatives_per_positive, index, dataset.entity_count, rng)
        (p, n, reg), grads = sampled_loss_and_gradients(kind, params, batch, negs, config)
        pos_total, neg_total, reg_total = pos_total + p, neg_total + n, reg_total + reg
        for role, _ in ROLES[kind]:
            adam_step(params.tables[role], grads[role], states[role], lr,
                      config.beta1, config.beta2, config.eps, name=role)
        if kind is ModelKind.TRANSE:
            params = project_unit_norm(params)
    return params, (pos_total, neg_total, reg_total)


def train_sampled(
    config: TrainConfig,
    sampler: SamplerConfig,
    dataset: Dataset,
    progress: bool = False,
) -> Tuple[ParameterSet, TrainHistory]:
    config.validate()
    sampler.validate()
    kind = config.kind
    params = init_params(kind, dataset.entity_count, dataset.relation_count, config.dim, config.seed)
    states = {role: AdamState.zeros_like(params.tables[role]) for role, _ in ROLES[kind]}
    index = build_index(dataset.train)
    rng = np.random.default_rng([config.seed, 1])
    history = TrainHistory()
    lr = config.lr
    step_down = decay_epoch(config.epochs)
    train_set = dataset.train
    logger.info(
        "%s (sampled, k=%d, batch=%d): train=%d d=%d epochs=%d",
        kind.label, sampler.negatives_per_positive, sampler.batch_size, len(train_set), config.dim, config.epochs,
    )

    for epoch in tqdm(range(1, config.epochs + 1), desc=kind.label, disable=not progress):
        t0 = time.perf_counter()
        try:
            params, (pos_total, neg_total, reg_total) = run_sampled_epoch(
                params, states, dataset, index, config, sampler, rng, lr)
        except NumericError as exc:
            exc.epoch = epoch
            exc.history = list(history.records)
            logger.error("diverged at epoch %d: %s", epoch, exc)
            raise
        if epoch == step_down and config.lr_decay != 1.0:
            lr *= config.lr_decay
        loss = pos_total + neg_total + reg_total
        history.append(EpochRecord(epoch, loss, pos_total, neg_total, time.perf_counter() - t0, params.norms()))
        if config.log_every and (epoch % config.log_every == 0 or epoch == config.epochs):
            logger.info("epoch %d loss=%.6g (%.3fs)", epoch, loss, history.records[-1].seconds)

    return params, history
