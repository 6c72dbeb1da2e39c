"""Ranking with the mid-tie rule and MR / MRR / HR@K aggregation."""

import numpy as np
import pytest

from nskge.data import build_index
from nskge.errors import ConfigError, DataError
from nskge.evaluate import Query, RankMetrics, evaluate, rank_from_scores, rank_one, raw_hit1_ceiling
from nskge.models import ModelKind, ParameterSet
from nskge.oracle import random_params


def _sort_rank(scores, truth, exclude=()):
    """Independent oracle: stable sort, then apply the same mid-tie rule."""
    keep = [i for i in range(len(scores)) if i == truth or i not in set(exclude)]
    ordered = sorted(keep, key=lambda i: -scores[i])
    higher = sum(1 for i in ordered if scores[i] > scores[truth])
    ties = sum(1 for i in ordered if i != truth and scores[i] == scores[truth])
    return 1 + higher + ties // 2


class TestRankFromScores:

    def test_best(self):
        assert rank_from_scores(np.array([0.9, 0.5, 0.1]), 0) == 1

    @pytest.mark.parametrize("n", [1, 2, 5, 10])
    def test_all_tie(self, n):
        assert rank_from_scores(np.zeros(n), n - 1) == 1 + (n - 1) // 2

    def test_exclusion_never_drops_truth(self):
        assert rank_from_scores(np.array([0.1, 0.9, 0.5]), 0, exclude=[0, 1]) == 2

    def test_matches_sort_oracle(self, rng):
        for _ in range(50):
            scores = rng.integers(0, 5, size=12).astype(float)
            truth = int(rng.integers(0, 12))
            exclude = [int(x) for x in rng.choice(12, size=3, replace=False)]
            assert rank_from_scores(scores, truth, exclude) == _sort_rank(scores, truth, exclude)

    def test_raising_truth_never_hurts(self, rng):
        scores = rng.normal(size=20)
        before = rank_from_scores(scores, 4)
        scores[4] += 0.5
        assert rank_from_scores(scores, 4) <= before


class TestRankMetrics:

    def test_formulas(self):
        m = RankMetrics.from_ranks([2, 4])
        assert m.mr == 3.0
        assert m.mrr == 0.375
        assert m.hr[3] == 0.5
        assert m.hr[1] == 0.0 and m.hr[10] == 1.0
        assert m.evaluation_count == 2

    def test_perfect(self):
        m = RankMetrics.from_ranks([1] * 6)
        assert (m.mr, m.mrr, m.hr[1], m.hr[3], m.hr[10]) == (1.0, 1.0, 1.0, 1.0, 1.0)

    def test_json_keys(self):
        out = RankMetrics.from_ranks([1, 3]).to_json(model="distmult", mode="raw")
        assert set(out) == {"model", "mode", "mr", "mrr", "hr1", "hr3", "hr10", "evaluation_count"}

    def test_empty(self):
        with pytest.raises(DataError):
            RankMetrics.from_ranks([])


class TestEvaluate:

    def _perfect(self):
        return ParameterSet(ModelKind.DISTMULT, {
            "entity": np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]),
            "relation": np.array([[0.0, 0.0]]),
        })

    def test_one_triple_two_evaluations(self, rng):
        params = random_params("distmult", 5, 1, 3, rng)
        m = evaluate("distmult", params, [(0, 0, 1)])
        assert m.evaluation_count == 2

    def test_filtered_not_worse_than_raw(self, tiny_dataset, rng):
        params = random_params("complex", 6, 2, 3, rng)
        index = build_index(tiny_dataset.all_known())
        for h, r, t in tiny_dataset.train.tolist():
            raw = rank_one("complex", params, Query(h, r, "tail"), t, "raw")
            filt = rank_one("complex", params, Query(h, r, "tail"), t, "filtered", index)
            assert filt <= raw

    def test_permutation_invariant(self, tiny_dataset, rng):
        params = random_params("transe", 6, 2, 3, rng)
        a = evaluate("transe", params, tiny_dataset.train)
        b = evaluate("transe", params, tiny_dataset.train[::-1])
        assert (a.mr, a.hr) == (b.mr, b.hr)
        assert a.mrr == pytest.approx(b.mrr, rel=1e-14)
        assert sorted(a.ranks) == sorted(b.ranks)

    def test_filtered_needs_index(self, toy_dataset):
        with pytest.raises(ConfigError):
            evaluate("distmult", self._perfect(), toy_dataset.test, "filtered")

    def test_empty_set(self, rng):
        with pytest.raises(DataError):
            evaluate("distmult", random_params("distmult", 3, 1, 2, rng), [])

    def test_unknown_mode(self, rng):
        with pytest.raises(ConfigError):
            evaluate("distmult", random_params("distmult", 3, 1, 2, rng), [(0, 0, 1)], "strict")


class TestRawHit1Ceiling:

    def test_one_answer_per_query(self):
        assert raw_hit1_ceiling([(0, 0, 1), (1, 0, 2), (2, 1, 0)]) == 1.0

    def test_shared_head_relation(self):
        # (0, 0) has two tails, the head queries stay distinct
        assert raw_hit1_ceiling([(0, 0, 1), (0, 0, 2)]) == 0.75

    def test_perfect_model_meets_it(self):
        triples = [(0, 0, 1), (0, 0, 2)]
        params = ParameterSet(ModelKind.DISTMULT, {
            "entity": np.array([[1.0, 1.5], [1.0, -0.5], [0.5, -0.5]]),
            "relation": np.array([[1.0, -1.0]]),
        })
        assert evaluate("distmult", params, triples).hr[1] == raw_hit1_ceiling(triples)

    def test_empty(self):
        with pytest.raises(DataError):
            raw_hit1_ceiling([])
