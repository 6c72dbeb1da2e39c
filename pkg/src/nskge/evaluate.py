"""
evaluate.py

Purpose
- Link-prediction ranking: for every test triple, rank the true tail among
  all entities given (h, r), and the true head given (r, t); 2|S| rankings.
- MR, MRR and HR@{1,3,10} over those ranks, in raw or filtered mode.

Ties use the mid-tie rule: rank = 1 + #strictly higher + floor(#equal / 2),
so a constant-score model lands in the middle instead of at either end.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence

import numpy as np
from tqdm import tqdm

from .data import AdjacencyIndex, as_triples
from .errors import ConfigError, DataError
from .models import ParameterSet, score_triples

logger = logging.getLogger(__name__)

HITS_AT = (1, 3, 10)
MODES = ("raw", "filtered")


class Query(NamedTuple):
    entity: int      # the fixed side
    relation: int
    direction: str   # "tail": rank tails for (entity, r, ?); "head": rank heads for (?, r, entity)


def _check_mode(mode: str, index: Optional[AdjacencyIndex]) -> None:
    if mode not in MODES:
        raise ConfigError(f"unknown ranking mode '{mode}' (expected one of {MODES})")
    if mode == "filtered" and index is None:
        raise ConfigError("filtered ranking needs an index over train + valid + test")


def candidate_scores(kind, params: ParameterSet, query: Query) -> np.ndarray:
    cands = np.arange(params.entity_count)
    if query.direction == "tail":
        return score_triples(kind, params, query.entity, query.relation, cands)
    if query.direction == "head":
        return score_triples(kind, params, cands, query.relation, query.entity)
    raise ConfigError(f"query direction must be 'head' or 'tail', got '{query.direction}'")


def rank_from_scores(scores: np.ndarray, truth: int, exclude: Sequence[int] = ()) -> int:
    target = scores[truth]
    keep = np.ones(len(scores), dtype=bool)
    keep[truth] = False
    if len(exclude):
        keep[np.asarray(exclude, dtype=np.int64)] = False
        keep[truth] = False
    others = scores[keep]
    higher = int(np.count_nonzero(others > target))
    equal = int(np.count_nonzero(others == target))
    return 1 + higher + equal // 2


def rank_one(
    kind,
    params: ParameterSet,
    query: Query,
    truth: int,
    mode: str = "raw",
    index: Optional[AdjacencyIndex] = None,
) -> int:
    _check_mode(mode, index)
    scores = candidate_scores(kind, params, query)
    exclude: Sequence[int] = ()
    if mode == "filtered":
        if query.direction == "tail":
            exclude = index.tails(query.entity, query.relation)
        else:
            exclude = index.heads(query.entity, query.relation)
    return rank_from_scores(scores, truth, exclude)


@dataclass
class RankMetrics:
    mr: float
    mrr: float
    hr: Dict[int, float]
    evaluation_count: int
    ranks: List[int] = field(default_factory=list, repr=False)

    @classmethod
    def from_ranks(cls, ranks: Sequence[int]) -> "RankMetrics":
        if len(ranks) == 0:
            raise DataError("no rankings to aggregate")
        arr = np.asarray(ranks, dtype=np.float64)
        return cls(
            mr=float(arr.mean()),
            mrr=float(np.mean(1.0 / arr)),
            hr={k: float(np.mean(arr <= k)) for k in HITS_AT},
            evaluation_count=len(arr),
            ranks=[int(r) for r in ranks],
        )

    def to_json(self, **context) -> Dict:
        out = dict(context)
        out.update({
            "mr": self.mr,
            "mrr": self.mrr,
            "hr1": self.hr[1],
            "hr3": self.hr[3],
            "hr10": self.hr[10],
            "evaluation_count": self.evaluation_count,
        })
        return out


def evaluate(
    kind,
    params: ParameterSet,
    triples,
    mode: str = "raw",
    index: Optional[AdjacencyIndex] = None,
    progress: bool = False,
) -> RankMetrics:
    _check_mode(mode, index)
    triples = as_triples(triples)
    if len(triples) == 0:
        raise DataError("empty evaluation set")
    ranks: List[int] = []
    for h, r, t in tqdm(triples.tolist(), desc=f"eval[{mode}]", disable=not progress):
        ranks.append(rank_one(kind, params, Query(t, r, "head"), h, mode, index))
        ranks.append(rank_one(kind, params, Query(h, r, "tail"), t, mode, index))
    metrics = RankMetrics.from_ranks(ranks)
    logger.debug("evaluated %d triples (%s): MRR=%.4f HR@10=%.4f", len(triples), mode, metrics.mrr, metrics.hr[10])
    return metrics


def raw_hit1_ceiling(triples) -> float:
    """Best raw HR@1 any model can reach when ranking `triples` against each other.

    A query with m true answers in the set puts at most one of them at rank 1,
    so the ceiling is (#distinct (h, r) + #distinct (r, t)) / 2|S|.
    """
    triples = as_triples(triples)
    if len(triples) == 0:
        raise DataError("empty evaluation set")
    tail_queries = len(np.unique(triples[:, :2], axis=0))
    head_queries = len(np.unique(triples[:, 1:], axis=0))
    return (tail_queries + head_queries) / (2 * len(triples))
