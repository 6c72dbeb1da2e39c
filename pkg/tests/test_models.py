"""Scoring, square-term expansions, projection and checkpoints."""

import numpy as np
import pytest

from nskge.errors import ConfigError, DataError, DimensionError, NumericError
from nskge.models import (
    ROLES,
    Count,
    Gram,
    IndexSet,
    ModelKind,
    MomentOuter,
    ParameterSet,
    TermSpec,
    init_params,
    load_checkpoint,
    project_unit_norm,
    save_checkpoint,
    score,
    score_triples,
    square_terms,
)
from nskge.ns_train import term_values
from nskge.oracle import random_params


def _params(kind, **tables):
    return ParameterSet(ModelKind.parse(kind), {k: np.asarray(v, dtype=float) for k, v in tables.items()}).validate()


class TestScore:

    def test_distmult(self):
        p = _params("distmult", entity=[[1, 2], [1, 1]], relation=[[1, 1]])
        assert score("distmult", p, (0, 0, 1)) == 3.0

    def test_transe_exact_translation(self):
        p = _params("transe", entity=[[1, 0], [1, 1], [0, 1]], relation=[[0, 1]])
        assert score("transe", p, (0, 0, 1)) == 1.0

    def test_transe_residual(self):
        p = _params("transe", entity=[[1, 0], [1, 1], [0, 1]], relation=[[0, 1]])
        assert score("transe", p, (0, 0, 2)) == pytest.approx(2.0 / 3.0)

    def test_complex_real_only_is_distmult(self, rng):
        E, R = rng.normal(size=(5, 3)), rng.normal(size=(2, 3))
        cx = _params("complex", entity_re=E, entity_im=np.zeros_like(E), relation_re=R, relation_im=np.zeros_like(R))
        dm = _params("distmult", entity=E, relation=R)
        h, r, t = np.meshgrid(np.arange(5), np.arange(2), np.arange(5), indexing="ij")
        np.testing.assert_allclose(score_triples("complex", cx, h, r, t), score_triples("distmult", dm, h, r, t))

    def test_simple_averages_both_directions(self, rng):
        p = random_params("simple", 4, 2, 3, rng)
        T = p.tables
        want = 0.5 * (np.sum(T["entity_head"][1] * T["relation"][0] * T["entity_tail"][3])
                      + np.sum(T["entity_tail"][1] * T["relation_inverse"][0] * T["entity_head"][3]))
        assert score("simple", p, (1, 0, 3)) == pytest.approx(want)

    def test_out_of_range(self):
        p = _params("distmult", entity=[[1.0]], relation=[[1.0]])
        with pytest.raises(DataError):
            score("distmult", p, (0, 0, 1))

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            ModelKind.parse("rotate")


class TestSquareTerms:

    @pytest.mark.parametrize("kind,count", [("distmult", 1), ("simple", 3), ("complex", 10), ("transe", 6)])
    def test_term_counts(self, kind, count):
        assert len(square_terms(kind)) == count

    def test_distmult_term(self):
        (term,) = square_terms("distmult")
        assert term.coefficient == 1.0
        assert term.factors == (
            Gram("entity", "entity", IndexSet.HEAD),
            Gram("relation", "relation", IndexSet.REL),
            Gram("entity", "entity", IndexSet.TAIL),
        )

    def test_simple_coefficients(self):
        terms = square_terms("simple")
        assert [t.coefficient for t in terms] == [0.25, 0.5, 0.25]
        assert terms[1].factors == (
            Gram("entity_head", "entity_tail", IndexSet.HEAD),
            Gram("relation", "relation_inverse", IndexSet.REL),
            Gram("entity_tail", "entity_head", IndexSet.TAIL),
        )

    def test_transe_uses_count_and_moment(self):
        factors = [f for t in square_terms("transe") for f in t.factors]
        assert any(isinstance(f, Count) for f in factors)
        assert any(isinstance(f, MomentOuter) for f in factors)

    @pytest.mark.parametrize("kind", list(ModelKind))
    def test_terms_match_brute_force(self, kind, rng):
        for _ in range(4):
            E, R, d = int(rng.integers(1, 11)), int(rng.integers(1, 4)), int(rng.integers(1, 5))
            p = random_params(kind, E, R, d, rng)
            h, r, t = np.meshgrid(np.arange(E), np.arange(R), np.arange(E), indexing="ij")
            brute = float(np.sum(score_triples(kind, p, h, r, t) ** 2))
            fast = sum(term_values(p, square_terms(kind)))
            assert abs(fast - brute) <= 1e-8 * max(1.0, abs(brute))

    def test_invalid_term_rejected(self):
        with pytest.raises(ConfigError):
            TermSpec(1.0, (Gram("entity", "entity", IndexSet.HEAD), Count(IndexSet.REL))).validate()
        with pytest.raises(ConfigError):
            TermSpec(1.0, (Gram("entity", "entity", IndexSet.REL), Count(IndexSet.HEAD), Count(IndexSet.TAIL))).validate(ModelKind.DISTMULT)


class TestProjection:

    def test_three_four_five(self):
        p = _params("transe", entity=[[3, 4]], relation=[[0, 2]])
        out = project_unit_norm(p)
        np.testing.assert_allclose(out.tables["entity"], [[0.6, 0.8]])
        np.testing.assert_allclose(out.tables["relation"], [[0.0, 1.0]])

    def test_idempotent(self, rng):
        once = project_unit_norm(random_params("transe", 6, 2, 4, rng))
        twice = project_unit_norm(once)
        np.testing.assert_allclose(twice.tables["entity"], once.tables["entity"], atol=1e-15)

    def test_random_rows_unit(self, rng):
        p = _params("transe", entity=rng.normal(size=(20, 5)), relation=rng.normal(size=(3, 5)))
        for table in project_unit_norm(p).tables.values():
            np.testing.assert_allclose(np.linalg.norm(table, axis=1), 1.0, atol=1e-12)

    def test_zero_row(self):
        p = _params("transe", entity=[[0, 0], [1, 0]], relation=[[1, 0]])
        with pytest.raises(NumericError, match="entity"):
            project_unit_norm(p)

    def test_transe_only(self):
        with pytest.raises(ConfigError):
            project_unit_norm(init_params("distmult", 3, 1, 2, 0))


class TestParameters:

    @pytest.mark.parametrize("kind", list(ModelKind))
    def test_init_shapes_and_bounds(self, kind):
        p = init_params(kind, 7, 3, 5, seed=0)
        for role, space in ROLES[kind]:
            rows = 7 if space == "entity" else 3
            assert p.tables[role].shape == (rows, 5)
            if kind is not ModelKind.TRANSE:
                assert np.abs(p.tables[role]).max() <= np.sqrt(6.0 / (rows + 5))

    def test_init_seeded(self):
        a, b = init_params("complex", 5, 2, 3, 11), init_params("complex", 5, 2, 3, 11)
        for role in a.tables:
            assert np.array_equal(a.tables[role], b.tables[role])

    def test_validate_rejects_missing_role(self):
        with pytest.raises(DimensionError):
            ParameterSet(ModelKind.SIMPLE, {"entity": np.zeros((2, 2))}).validate()


class TestCheckpoint:

    def test_save_load(self, tmp_path, rng):
        p = random_params("simple", 6, 2, 3, rng)
        save_checkpoint(p, tmp_path / "ckpt", extra={"config_hash": "abc"})
        back = load_checkpoint(tmp_path / "ckpt")
        assert back.kind is ModelKind.SIMPLE
        for role in p.tables:
            assert np.array_equal(back.tables[role], p.tables[role])

    def test_missing_table_named(self, tmp_path, rng):
        save_checkpoint(random_params("distmult", 3, 1, 2, rng), tmp_path / "ckpt")
        (tmp_path / "ckpt" / "relation.bin").unlink()
        with pytest.raises(DataError, match="relation.bin"):
            load_checkpoint(tmp_path / "ckpt")
