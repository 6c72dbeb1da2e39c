"""
ns_train.py

Purpose
- Non-sampling objective  L = L^P + L^A (+ l2 penalty), where
      L^P = sum over training triples of (c+ - c-) f^2 - 2 c+ f
      L^A = c- * sum over every (h, r, t) of f^2
  and L^A is evaluated from d x d factor matrices (GramCache) in
  O(d^2 (|E| + |R|)) instead of O(d |R| |E|^2).
- Exact gradients of that objective for every parameter table.
- Full-batch Adam training loop with a single-step lr decay and, for TransE,
  unit-norm projection after every update.

The constant c+ * |train| that completes the square is reported alongside the
loss but never differentiated.

Usage
    params, history = train(TrainConfig(kind="distmult", dim=64, epochs=200), dataset)
    history.write_csv("run/history.csv")
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from .config import TrainConfig
from .data import Dataset, as_triples
from .errors import NumericError
from .linalg import AdamState, adam_step, column_sums, cross_gram, hadamard_sum, matmul
from .models import (
    ROLES,
    Count,
    Gram,
    IndexSet,
    ModelKind,
    MomentOuter,
    ParameterSet,
    TermSpec,
    accumulate_score_grad,
    init_params,
    project_unit_norm,
    score_triples,
    square_terms,
)

logger = logging.getLogger(__name__)


def _positives(data: Union[Dataset, np.ndarray, Sequence]) -> np.ndarray:
    return data.train if isinstance(data, Dataset) else as_triples(data)


# -----------------------------
# Gram cache
# -----------------------------

@dataclass
class GramCache:
    """Cross-Gram matrices keyed by role pair and column sums keyed by role."""
    grams: Dict[Tuple[str, str], np.ndarray] = field(default_factory=dict)
    sums: Dict[str, np.ndarray] = field(default_factory=dict)
    entity_count: int = 0
    relation_count: int = 0

    @classmethod
    def build(cls, params: ParameterSet, terms: Sequence[TermSpec]) -> "GramCache":
        cache = cls(entity_count=params.entity_count, relation_count=params.relation_count)
        T = params.tables
        for term in terms:
            for f in term.factors:
                if isinstance(f, Gram) and (f.role_a, f.role_b) not in cache.grams:
                    # Gram(b, a) is the transpose of Gram(a, b)
                    if (f.role_b, f.role_a) in cache.grams:
                        cache.grams[(f.role_a, f.role_b)] = cache.grams[(f.role_b, f.role_a)].T
                    else:
                        cache.grams[(f.role_a, f.role_b)] = cross_gram(T[f.role_a], T[f.role_b])
                elif isinstance(f, MomentOuter):
                    for role in (f.role_a, f.role_b):
                        if role not in cache.sums:
                            cache.sums[role] = column_sums(T[role])
        return cache

    def count(self, index_set: IndexSet) -> int:
        return self.relation_count if index_set is IndexSet.REL else self.entity_count

    def matrix(self, factor) -> np.ndarray:
        if isinstance(factor, Gram):
            return self.grams[(factor.role_a, factor.role_b)]
        if isinstance(factor, MomentOuter):
            return np.outer(self.sums[factor.role_a], self.sums[factor.role_b])
        raise TypeError(f"{factor!r} has no matrix form")


def gram_count(terms: Sequence[TermSpec]) -> int:
    """Distinct d x d Grams GramCache.build computes for `terms`; transposes are free."""
    return len({tuple(sorted((f.role_a, f.role_b))) for t in terms for f in t.factors if isinstance(f, Gram)})


def _split_factors(term: TermSpec, cache: GramCache) -> Tuple[float, List]:
    scale = float(term.coefficient)
    dense = []
    for f in term.factors:
        if isinstance(f, Count):
            scale *= cache.count(f.index_set)
        else:
            dense.append(f)
    return scale, dense


def term_values(params: ParameterSet, terms: Sequence[TermSpec], cache: Optional[GramCache] = None) -> List[float]:
    """Value of every term (without c-); their sum is sum_{h,r,t} f^2."""
    cache = cache or GramCache.build(params, terms)
    out = []
    for term in terms:
        scale, dense = _split_factors(term, cache)
        out.append(scale * hadamard_sum([cache.matrix(f) for f in dense]))
    return out


# -----------------------------
# Loss terms
# -----------------------------

def positive_loss(kind, params: ParameterSet, dataset, c_pos: float, c_neg: float) -> float:
    pos = _positives(dataset)
    if len(pos) == 0:
        return 0.0
    f = score_triples(kind, params, pos[:, 0], pos[:, 1], pos[:, 2])
    return float(np.sum((c_pos - c_neg) * f * f - 2.0 * c_pos * f))


def all_pairs_loss(
    kind,
    params: ParameterSet,
    c_neg: float,
    terms: Optional[Sequence[TermSpec]] = None,
    cache: Optional[GramCache] = None,
) -> float:
    terms = square_terms(kind) if terms is None else terms
    if c_neg == 0:
        return 0.0
    return c_neg * float(sum(term_values(params, terms, cache)))


def constant_term(dataset, c_pos: float) -> float:
    return c_pos * len(_positives(dataset))


@dataclass
class LossBreakdown:
    lp: float
    la: float
    reg: float
    constant: float

    @property
    def objective(self) -> float:
        """What the optimizer minimizes: L^P + L^A + penalty."""
        return self.lp + self.la + self.reg

    @property
    def full(self) -> float:
        """objective plus the constant, i.e. the weighted square loss itself."""
        return self.objective + self.constant

    def __float__(self) -> float:
        return self.objective


def loss_and_gradients(
    kind,
    params: ParameterSet,
    dataset,
    config: TrainConfig,
    terms: Optional[Sequence[TermSpec]] = None,
    cache: Optional[GramCache] = None,
    epoch: Optional[int] = None,
) -> Tuple[LossBreakdown, Dict[str, np.ndarray]]:
    kind = ModelKind.parse(kind)
    terms = square_terms(kind) if terms is None else terms
    cache = cache or GramCache.build(params, terms)
    T = params.tables
    grads = params.zeros_like()
    c_pos, c_neg = config.c_pos, config.c_neg

    # L^P
    pos = _positives(dataset)
    lp = 0.0
    if len(pos):
        f = score_triples(kind, params, pos[:, 0], pos[:, 1], pos[:, 2])
        lp = float(np.sum((c_pos - c_neg) * f * f - 2.0 * c_pos * f))
        if not math.isfinite(lp):
            raise NumericError("non-finite L^P", epoch=epoch, max_abs_param=params.max_abs())
        upstream = 2.0 * (c_pos - c_neg) * f - 2.0 * c_pos
        accumulate_score_grad(kind, params, pos, upstream, grads)

    # L^A, through the factor matrices
    la = 0.0
    if c_neg != 0:
        for ti, term in enumerate(terms):
            scale, dense = _split_factors(term, cache)
            scale *= c_neg
            mats = [cache.matrix(f) for f in dense]
            value = scale * hadamard_sum(mats)
            if not math.isfinite(value):
                raise NumericError("non-finite L^A term", epoch=epoch, term=ti, max_abs_param=params.max_abs())
            la += value
            for k, f in enumerate(dense):
                W = np.full_like(mats[k], scale)
                for l, m in enumerate(mats):
                    if l != k:
                        W *= m
                if isinstance(f, Gram):
                    grads[f.role_a] += matmul(T[f.role_b], W.T)
                    grads[f.role_b] += matmul(T[f.role_a], W)
                else:
                    grads[f.role_a] += (W @ cache.sums[f.role_b])[None, :]
                    grads[f.role_b] += (W.T @ cache.sums[f.role_a])[None, :]

    # penalty; TransE rows are held on the unit sphere instead
    reg = 0.0
    if config.l2 > 0 and kind is not ModelKind.TRANSE:
        for role, table in T.items():
            reg += config.l2 * float(np.sum(table * table))
            grads[role] += 2.0 * config.l2 * table

    return LossBreakdown(lp, la, reg, constant_term(pos, c_pos)), grads


# -----------------------------
# History
# -----------------------------

@dataclass
class EpochRecord:
    epoch: int
    loss: float
    lp: float
    la: float
    seconds: float
    norms: Dict[str, float] = field(default_factory=dict)


@dataclass
class TrainHistory:
    records: List[EpochRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for r in self.records:
            row = {"epoch": r.epoch, "loss": r.loss, "lp": r.lp, "la": r.la, "seconds": r.seconds}
            row.update({f"norm_{k}": v for k, v in r.norms.items()})
            rows.append(row)
        return pd.DataFrame(rows, columns=None if rows else ["epoch", "loss", "lp", "la", "seconds"])

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path


# -----------------------------
# Training loop
# -----------------------------

def decay_epoch(epochs: int) -> int:
    return math.ceil(epochs / 2)


def run_epoch(
    params: ParameterSet,
    states: Dict[str, AdamState],
    dataset: Dataset,
    config: TrainConfig,
    terms: Sequence[TermSpec],
    lr: float,
    epoch: Optional[int] = None,
) -> Tuple[ParameterSet, LossBreakdown]:
    """One full-batch step: rebuild the cache, loss + gradients, Adam on every table."""
    kind = params.kind
    cache = GramCache.build(params, terms)
    loss, grads = loss_and_gradients(kind, params, dataset, config, terms, cache, epoch=epoch)
    for role, _ in ROLES[kind]:
        adam_step(params.tables[role], grads[role], states[role], lr,
                  config.beta1, config.beta2, config.eps, name=role)
    if kind is ModelKind.TRANSE:
        params = project_unit_norm(params)
    return params, loss


def train(
    config: TrainConfig,
    dataset: Dataset,
    terms: Optional[Sequence[TermSpec]] = None,
    progress: bool = False,
) -> Tuple[ParameterSet, TrainHistory]:
    config.validate()
    kind = config.kind
    terms = square_terms(kind) if terms is None else terms
    params = init_params(kind, dataset.entity_count, dataset.relation_count, config.dim, config.seed)
    states = {role: AdamState.zeros_like(params.tables[role]) for role, _ in ROLES[kind]}
    history = TrainHistory()
    lr = config.lr
    step_down = decay_epoch(config.epochs)
    logger.info(
        "NS-%s: |E|=%d |R|=%d train=%d d=%d epochs=%d c-=%g",
        kind.label, dataset.entity_count, dataset.relation_count, len(dataset.train),
        config.dim, config.epochs, config.c_neg,
    )

    for epoch in tqdm(range(1, config.epochs + 1), desc=f"NS-{kind.label}", disable=not progress):
        t0 = time.perf_counter()
        try:
            params, loss = run_epoch(params, states, dataset, config, terms, lr, epoch)
        except NumericError as exc:
            exc.epoch = exc.epoch if exc.epoch is not None else epoch
            exc.history = list(history.records)
            logger.error("diverged at epoch %d: %s", epoch, exc)
            raise
        if epoch == step_down and config.lr_decay != 1.0:
            lr *= config.lr_decay
            logger.debug("lr decayed to %g after epoch %d", lr, epoch)

        history.append(EpochRecord(epoch, loss.full, loss.lp, loss.la, time.perf_counter() - t0, params.norms()))
        if config.log_every and (epoch % config.log_every == 0 or epoch == config.epochs):
            logger.info("epoch %d loss=%.6g lp=%.6g la=%.6g (%.3fs)", epoch, loss.full, loss.lp, loss.la, history.records[-1].seconds)

    return params, history
