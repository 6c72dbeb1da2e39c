"""
models.py

Purpose
- Scoring functions for DistMult, SimplE, ComplEx and TransE.
- For each model, the expansion of the squared score into product-of-sums
  terms (TermSpec). ns_train evaluates those terms with d x d Gram matrices
  instead of visiting every (h, r, t).
- Parameter tables, their initializer, TransE unit-norm projection and the
  checkpoint directory format.

Three of the models are sums of weighted trilinear products
    f = sum_p w_p * sum_i X_p[h, i] * Y_p[r, i] * Z_p[t, i]
and their squares are generated from that summand list. TransE is the
exception: its score 1 - |h + r - t|^2 / 3 equals
(2/3)(h.t + r.t - r.h) on unit vectors, and the six terms of that square are
listed by hand.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations_with_replacement
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from . import __version__
from .errors import ConfigError, DataError, DimensionError, NumericError

logger = logging.getLogger(__name__)


class ModelKind(str, Enum):
    DISTMULT = "distmult"
    SIMPLE = "simple"
    COMPLEX = "complex"
    TRANSE = "transe"

    @classmethod
    def parse(cls, value: Union[str, "ModelKind"]) -> "ModelKind":
        if isinstance(value, ModelKind):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ConfigError(f"unknown model '{value}' (expected one of {[k.value for k in cls]})")

    @property
    def label(self) -> str:
        return {"distmult": "DistMult", "simple": "SimplE", "complex": "ComplEx", "transe": "TransE"}[self.value]


ENTITY = "entity"
RELATION = "relation"

# role name -> which index space its rows live in
ROLES: Dict[ModelKind, Tuple[Tuple[str, str], ...]] = {
    ModelKind.DISTMULT: (("entity", ENTITY), ("relation", RELATION)),
    ModelKind.SIMPLE: (
        ("entity_head", ENTITY),
        ("entity_tail", ENTITY),
        ("relation", RELATION),
        ("relation_inverse", RELATION),
    ),
    ModelKind.COMPLEX: (
        ("entity_re", ENTITY),
        ("entity_im", ENTITY),
        ("relation_re", RELATION),
        ("relation_im", RELATION),
    ),
    ModelKind.TRANSE: (("entity", ENTITY), ("relation", RELATION)),
}


def role_space(kind: ModelKind, role: str) -> str:
    for name, space in ROLES[kind]:
        if name == role:
            return space
    raise ConfigError(f"{kind.label} has no parameter role '{role}'")


# -----------------------------
# Parameter tables
# -----------------------------

@dataclass(eq=False)
class ParameterSet:
    kind: ModelKind
    tables: Dict[str, np.ndarray]
    seed: Optional[int] = None

    @property
    def dim(self) -> int:
        return next(iter(self.tables.values())).shape[1]

    @property
    def entity_count(self) -> int:
        return self.tables[ROLES[self.kind][0][0]].shape[0]

    @property
    def relation_count(self) -> int:
        rel = next(name for name, space in ROLES[self.kind] if space == RELATION)
        return self.tables[rel].shape[0]

    def count(self, space: str) -> int:
        return self.entity_count if space == ENTITY else self.relation_count

    def copy(self) -> "ParameterSet":
        return ParameterSet(self.kind, {k: v.copy() for k, v in self.tables.items()}, self.seed)

    def zeros_like(self) -> Dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.tables.items()}

    def norms(self) -> Dict[str, float]:
        return {k: float(np.linalg.norm(v)) for k, v in self.tables.items()}

    def max_abs(self) -> float:
        return max(float(np.max(np.abs(v))) if v.size else 0.0 for v in self.tables.values())

    def validate(self) -> "ParameterSet":
        expected = [name for name, _ in ROLES[self.kind]]
        if sorted(self.tables) != sorted(expected):
            raise DimensionError(f"{self.kind.label} expects tables {expected}, got {sorted(self.tables)}")
        dims = {v.shape[1] for v in self.tables.values() if v.ndim == 2}
        if len(dims) != 1 or any(v.ndim != 2 for v in self.tables.values()):
            raise DimensionError("all tables must be 2-D with a shared column count")
        for space in (ENTITY, RELATION):
            rows = {self.tables[name].shape[0] for name, s in ROLES[self.kind] if s == space}
            if len(rows) != 1:
                raise DimensionError(f"{space} tables disagree on row count: {sorted(rows)}")
        return self


def init_params(kind, entity_count: int, relation_count: int, dim: int, seed: int) -> ParameterSet:
    """Uniform(-b, b) with b = sqrt(6 / (rows + cols)), one rng stream per call."""
    kind = ModelKind.parse(kind)
    rng = np.random.default_rng(seed)
    tables: Dict[str, np.ndarray] = {}
    for role, space in ROLES[kind]:
        rows = entity_count if space == ENTITY else relation_count
        bound = np.sqrt(6.0 / (rows + dim))
        tables[role] = rng.uniform(-bound, bound, size=(rows, dim))
    params = ParameterSet(kind, tables, seed).validate()
    if kind is ModelKind.TRANSE:
        params = project_unit_norm(params)
    return params


def project_unit_norm(params: ParameterSet) -> ParameterSet:
    """Rescale every row of every table to Euclidean length one."""
    if params.kind is not ModelKind.TRANSE:
        raise ConfigError(f"unit-norm projection applies to TransE only, got {params.kind.label}")
    out: Dict[str, np.ndarray] = {}
    for role, table in params.tables.items():
        norms = np.linalg.norm(table, axis=1, keepdims=True)
        if np.any(norms == 0.0):
            bad = int(np.flatnonzero(norms[:, 0] == 0.0)[0])
            raise NumericError(f"zero-norm row {bad} cannot be projected", table=role)
        out[role] = table / norms
    return ParameterSet(params.kind, out, params.seed)


# -----------------------------
# Scoring
# -----------------------------

@dataclass(frozen=True)
class Summand:
    weight: float
    head_role: str
    rel_role: str
    tail_role: str


TRILINEAR: Dict[ModelKind, Tuple[Summand, ...]] = {
    ModelKind.DISTMULT: (Summand(1.0, "entity", "relation", "entity"),),
    ModelKind.SIMPLE: (
        Summand(0.5, "entity_head", "relation", "entity_tail"),
        Summand(0.5, "entity_tail", "relation_inverse", "entity_head"),
    ),
    ModelKind.COMPLEX: (
        Summand(1.0, "entity_re", "relation_re", "entity_re"),
        Summand(1.0, "entity_im", "relation_re", "entity_im"),
        Summand(1.0, "entity_re", "relation_im", "entity_im"),
        Summand(-1.0, "entity_im", "relation_im", "entity_re"),
    ),
}


def score_triples(kind, params: ParameterSet, heads, rels, tails) -> np.ndarray:
    """Vectorized score; index arguments broadcast against each other."""
    kind = ModelKind.parse(kind)
    T = params.tables
    if kind is ModelKind.TRANSE:
        u = T["entity"][heads] + T["relation"][rels] - T["entity"][tails]
        return 1.0 - np.sum(u * u, axis=-1) / 3.0
    out = None
    for s in TRILINEAR[kind]:
        part = s.weight * np.sum(T[s.head_role][heads] * T[s.rel_role][rels] * T[s.tail_role][tails], axis=-1)
        out = part if out is None else out + part
    return out


def score(kind, params: ParameterSet, triple) -> float:
    h, r, t = (int(x) for x in triple)
    E, R = params.entity_count, params.relation_count
    if not (0 <= h < E and 0 <= t < E and 0 <= r < R):
        raise DataError(f"triple ({h}, {r}, {t}) out of range for |E|={E}, |R|={R}")
    return float(score_triples(kind, params, h, r, t))


def accumulate_score_grad(
    kind,
    params: ParameterSet,
    triples: np.ndarray,
    upstream: np.ndarray,
    grads: Dict[str, np.ndarray],
) -> None:
    """grads[role] += sum over triples of upstream * d score / d role."""
    kind = ModelKind.parse(kind)
    T = params.tables
    h, r, t = triples[:, 0], triples[:, 1], triples[:, 2]
    g = upstream[:, None]
    if kind is ModelKind.TRANSE:
        u = T["entity"][h] + T["relation"][r] - T["entity"][t]
        d = (-2.0 / 3.0) * g * u
        np.add.at(grads["entity"], h, d)
        np.add.at(grads["relation"], r, d)
        np.add.at(grads["entity"], t, -d)
        return
    for s in TRILINEAR[kind]:
        X, Y, Z = T[s.head_role][h], T[s.rel_role][r], T[s.tail_role][t]
        w = s.weight * g
        np.add.at(grads[s.head_role], h, w * Y * Z)
        np.add.at(grads[s.rel_role], r, w * X * Z)
        np.add.at(grads[s.tail_role], t, w * X * Y)


# -----------------------------
# Square-term decomposition
# -----------------------------

class IndexSet(str, Enum):
    HEAD = "head"
    REL = "rel"
    TAIL = "tail"

    @property
    def space(self) -> str:
        return RELATION if self is IndexSet.REL else ENTITY


@dataclass(frozen=True)
class Gram:
    """sum over the index set of X[k, i] * Y[k, j]."""
    role_a: str
    role_b: str
    index_set: IndexSet

    @property
    def consumes(self) -> Tuple[IndexSet, ...]:
        return (self.index_set,)


@dataclass(frozen=True)
class MomentOuter:
    """outer(column_sums(A over set_a), column_sums(B over set_b))."""
    role_a: str
    set_a: IndexSet
    role_b: str
    set_b: IndexSet

    @property
    def consumes(self) -> Tuple[IndexSet, ...]:
        return (self.set_a, self.set_b)


@dataclass(frozen=True)
class Count:
    """|index set|, broadcast over the d x d grid."""
    index_set: IndexSet

    @property
    def consumes(self) -> Tuple[IndexSet, ...]:
        return (self.index_set,)


Factor = Union[Gram, MomentOuter, Count]


@dataclass(frozen=True)
class TermSpec:
    coefficient: float
    factors: Tuple[Factor, ...] = field(default_factory=tuple)

    def consumed(self) -> List[IndexSet]:
        return [s for f in self.factors for s in f.consumes]

    def validate(self, kind: Optional[ModelKind] = None) -> "TermSpec":
        used = sorted(s.value for s in self.consumed())
        if used != sorted(s.value for s in IndexSet):
            raise ConfigError(f"term must consume head, rel and tail exactly once, got {used}")
        if not any(not isinstance(f, Count) for f in self.factors):
            raise ConfigError("term needs at least one Gram or MomentOuter factor")
        if kind is not None:
            for f in self.factors:
                pairs = []
                if isinstance(f, Gram):
                    pairs = [(f.role_a, f.index_set), (f.role_b, f.index_set)]
                elif isinstance(f, MomentOuter):
                    pairs = [(f.role_a, f.set_a), (f.role_b, f.set_b)]
                for role, iset in pairs:
                    if role_space(kind, role) != iset.space:
                        raise ConfigError(f"role '{role}' cannot range over the {iset.value} index set")
        return self


def expand_trilinear(summands: Sequence[Summand]) -> List[TermSpec]:
    """Square of sum_p w_p <X_p, Y_p, Z_p>: p == q gives w_p^2, p < q gives 2 w_p w_q."""
    terms: List[TermSpec] = []
    for p, q in combinations_with_replacement(range(len(summands)), 2):
        a, b = summands[p], summands[q]
        coef = a.weight * b.weight * (1.0 if p == q else 2.0)
        terms.append(TermSpec(coef, (
            Gram(a.head_role, b.head_role, IndexSet.HEAD),
            Gram(a.rel_role, b.rel_role, IndexSet.REL),
            Gram(a.tail_role, b.tail_role, IndexSet.TAIL),
        )))
    return terms


def _transe_terms() -> List[TermSpec]:
    # (2/3)^2 (h.t + r.t - r.h)^2, every cross term kept
    s = 4.0 / 9.0
    H, R, T = IndexSet.HEAD, IndexSet.REL, IndexSet.TAIL
    return [
        TermSpec(s, (Gram("entity", "entity", H), Count(R), Gram("entity", "entity", T))),
        TermSpec(s, (Count(H), Gram("relation", "relation", R), Gram("entity", "entity", T))),
        TermSpec(s, (Gram("entity", "entity", H), Gram("relation", "relation", R), Count(T))),
        TermSpec(2 * s, (MomentOuter("entity", H, "relation", R), Gram("entity", "entity", T))),
        TermSpec(-2 * s, (Gram("entity", "entity", H), MomentOuter("entity", T, "relation", R))),
        TermSpec(-2 * s, (Gram("relation", "relation", R), MomentOuter("entity", T, "entity", H))),
    ]


def square_terms(kind) -> List[TermSpec]:
    kind = ModelKind.parse(kind)
    terms = _transe_terms() if kind is ModelKind.TRANSE else expand_trilinear(TRILINEAR[kind])
    return [t.validate(kind) for t in terms]


# -----------------------------
# Checkpoints
# -----------------------------

MANIFEST = "manifest.json"


def save_checkpoint(params: ParameterSet, directory: Union[str, Path], extra: Optional[Dict] = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    roles = [name for name, _ in ROLES[params.kind]]
    for role in roles:
        np.ascontiguousarray(params.tables[role], dtype="<f8").tofile(directory / f"{role}.bin")
    manifest = {
        "kind": params.kind.value,
        "dim": params.dim,
        "entity_count": params.entity_count,
        "relation_count": params.relation_count,
        "roles": roles,
        "seed": params.seed,
        "version": __version__,
    }
    manifest.update(extra or {})
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    logger.debug("wrote checkpoint %s (%s, d=%d)", directory, params.kind.label, params.dim)
    return directory


def read_manifest(directory: Union[str, Path]) -> Dict:
    path = Path(directory) / MANIFEST
    if not path.exists():
        raise DataError("checkpoint manifest not found", path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"malformed manifest ({exc.msg})", path, exc.lineno)


def load_checkpoint(directory: Union[str, Path]) -> ParameterSet:
    directory = Path(directory)
    manifest = read_manifest(directory)
    kind = ModelKind.parse(manifest["kind"])
    dim = int(manifest["dim"])
    tables: Dict[str, np.ndarray] = {}
    for role, space in ROLES[kind]:
        path = directory / f"{role}.bin"
        if not path.exists():
            raise DataError("checkpoint table not found", path)
        rows = int(manifest["entity_count"] if space == ENTITY else manifest["relation_count"])
        flat = np.fromfile(path, dtype="<f8")
        if flat.size != rows * dim:
            raise DataError(f"expected {rows * dim} float64 values, found {flat.size}", path)
        tables[role] = flat.reshape(rows, dim).astype(np.float64)
    return ParameterSet(kind, tables, manifest.get("seed")).validate()
