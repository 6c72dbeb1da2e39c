"""
oracle.py

Purpose
- Brute-force reference paths that the efficient code is checked against:
    naive_full_loss   literal loop over every (h, r, t), O(d |R| |E|^2)
    brute_all_pairs   same complexity, numpy-vectorized over (r, t) per head
    fd_gradient       central finite differences of either loss path
- run_verify: the property suite behind `nskge verify`.

Size guards are hard errors. Relative errors use max(1, |reference|) as the
denominator so comparisons stay meaningful near zero.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .config import TrainConfig
from .data import Dataset, as_triples, make_synthetic
from .errors import ConfigError, GuardError
from .models import (
    ROLES,
    ModelKind,
    ParameterSet,
    TermSpec,
    project_unit_norm,
    score,
    score_triples,
    square_terms,
)
from .ns_train import all_pairs_loss, constant_term, loss_and_gradients, positive_loss

logger = logging.getLogger(__name__)

NAIVE_GUARD = (64, 8, 16)      # |E|, |R|, d
BRUTE_GUARD = (2048, 64, 256)

TermsFn = Callable[[ModelKind], List[TermSpec]]


def _guard(params: ParameterSet, limits: Tuple[int, int, int], what: str) -> None:
    E, R, d = params.entity_count, params.relation_count, params.dim
    if E > limits[0] or R > limits[1] or d > limits[2]:
        raise GuardError(f"{what}: |E|={E}, |R|={R}, d={d} exceeds guard |E|<={limits[0]}, |R|<={limits[1]}, d<={limits[2]}")


def rel_error(value: float, reference: float) -> float:
    return abs(value - reference) / max(1.0, abs(reference))


# -----------------------------
# Loss oracles
# -----------------------------

def naive_full_loss(kind, params: ParameterSet, dataset, c_pos: float, c_neg: float) -> float:
    """sum over all (h, r, t) of c * (f - f_hat)^2, c = c+ on positives, c- elsewhere."""
    kind = ModelKind.parse(kind)
    _guard(params, NAIVE_GUARD, "naive_full_loss")
    pos = dataset.train if isinstance(dataset, Dataset) else as_triples(dataset)
    positives = {tuple(x) for x in pos.tolist()}
    total = 0.0
    for h in range(params.entity_count):
        for r in range(params.relation_count):
            for t in range(params.entity_count):
                f_hat = score(kind, params, (h, r, t))
                if (h, r, t) in positives:
                    total += c_pos * (1.0 - f_hat) ** 2
                else:
                    total += c_neg * f_hat * f_hat
    return total


def naive_all_pairs(kind, params: ParameterSet, c_neg: float) -> float:
    kind = ModelKind.parse(kind)
    _guard(params, NAIVE_GUARD, "naive_all_pairs")
    total = 0.0
    for h in range(params.entity_count):
        for r in range(params.relation_count):
            for t in range(params.entity_count):
                total += score(kind, params, (h, r, t)) ** 2
    return c_neg * total


def brute_all_pairs(kind, params: ParameterSet, c_neg: float) -> float:
    kind = ModelKind.parse(kind)
    _guard(params, BRUTE_GUARD, "brute_all_pairs")
    rels = np.arange(params.relation_count)[:, None]
    tails = np.arange(params.entity_count)[None, :]
    total = 0.0
    for h in range(params.entity_count):
        f = score_triples(kind, params, h, rels, tails)
        total += float(np.sum(f * f))
    return c_neg * total


def restricted_all_pairs(kind, params: ParameterSet, support, c_neg: float) -> float:
    """c- * sum of f^2 over an explicit set of triples."""
    sup = as_triples(support)
    if len(sup) == 0:
        return 0.0
    f = score_triples(kind, params, sup[:, 0], sup[:, 1], sup[:, 2])
    return c_neg * float(np.sum(f * f))


def efficient_objective(kind, params: ParameterSet, dataset, config: TrainConfig,
                        terms: Optional[Sequence[TermSpec]] = None) -> float:
    breakdown, _ = loss_and_gradients(kind, params, dataset, config, terms)
    return breakdown.objective


def naive_objective(kind, params: ParameterSet, dataset, config: TrainConfig) -> float:
    kind = ModelKind.parse(kind)
    reg = 0.0
    if config.l2 > 0 and kind is not ModelKind.TRANSE:
        reg = config.l2 * sum(float(np.sum(t * t)) for t in params.tables.values())
    return naive_full_loss(kind, params, dataset, config.c_pos, config.c_neg) - constant_term(dataset, config.c_pos) + reg


# -----------------------------
# Finite differences
# -----------------------------

def central_difference(fn: Callable[[Dict[str, np.ndarray]], float],
                       tables: Dict[str, np.ndarray], step: float) -> Dict[str, np.ndarray]:
    """Perturbs each entry of `tables` in place (restored afterwards)."""
    out: Dict[str, np.ndarray] = {}
    for role, table in tables.items():
        grad = np.zeros_like(table)
        flat, gflat = table.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + step
            up = fn(tables)
            flat[i] = old - step
            down = fn(tables)
            flat[i] = old
            gflat[i] = (up - down) / (2.0 * step)
        out[role] = grad
    return out


def fd_gradient(kind, params: ParameterSet, dataset, config: TrainConfig, step: float = 1e-5,
                path: str = "efficient", terms: Optional[Sequence[TermSpec]] = None) -> Dict[str, np.ndarray]:
    kind = ModelKind.parse(kind)
    if not 1e-7 <= step <= 1e-3:
        raise ConfigError(f"fd step {step} outside [1e-7, 1e-3]")
    _guard(params, NAIVE_GUARD, "fd_gradient")
    work = params.copy()
    if path == "efficient":
        fn = lambda _tables: efficient_objective(kind, work, dataset, config, terms)
    elif path == "naive":
        fn = lambda _tables: naive_objective(kind, work, dataset, config)
    else:
        raise ConfigError(f"fd path must be 'efficient' or 'naive', got '{path}'")
    return central_difference(fn, work.tables, step)


def max_gradient_error(analytic: Dict[str, np.ndarray], numeric: Dict[str, np.ndarray]) -> float:
    worst = 0.0
    for role, a in analytic.items():
        n = numeric[role]
        err = np.abs(a - n) / np.maximum(1.0, np.abs(n))
        worst = max(worst, float(err.max()) if err.size else 0.0)
    return worst


def tangent_component(params: ParameterSet, grads: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    """Remove the radial part of each row's gradient (rows assumed unit length)."""
    out = {}
    for role, g in grads.items():
        x = params.tables[role]
        out[role] = g - np.sum(g * x, axis=1, keepdims=True) * x
    return out


# -----------------------------
# Random instances
# -----------------------------

def random_params(kind, entity_count: int, relation_count: int, dim: int,
                  rng: np.random.Generator, scale: float = 0.5) -> ParameterSet:
    kind = ModelKind.parse(kind)
    tables = {}
    for role, space in ROLES[kind]:
        rows = entity_count if space == "entity" else relation_count
        tables[role] = rng.normal(scale=scale, size=(rows, dim))
    params = ParameterSet(kind, tables).validate()
    return project_unit_norm(params) if kind is ModelKind.TRANSE else params


def random_instance(kind, rng: np.random.Generator, max_e: int, max_r: int, max_d: int
                    ) -> Tuple[ParameterSet, Dataset]:
    E = int(rng.integers(2, max_e + 1))
    R = int(rng.integers(1, max_r + 1))
    d = int(rng.integers(1, max_d + 1))
    n_pos = int(rng.integers(0, max(1, E * E * R // 4) + 1))
    ds = make_synthetic(int(rng.integers(0, 2**31)), E, R, n_pos)
    return random_params(kind, E, R, d, rng), ds


# -----------------------------
# Verify suite
# -----------------------------

@dataclass
class PropertyResult:
    kind: ModelKind
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.error)) and self.error <= self.tolerance

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.kind.label:<8} {self.name:<16} err={self.error:.3e} tol={self.tolerance:.0e}"


SCALES = {
    # loss instances, gradient instances, max |E|, max |R|, max d
    "tiny": (5, 2, 10, 3, 4),
    "small": (50, 10, 30, 5, 8),
}


def run_verify(scale: str = "tiny", seed: int = 0, terms_fn: TermsFn = square_terms,
               kinds: Sequence = tuple(ModelKind)) -> List[PropertyResult]:
    if scale not in SCALES:
        raise ConfigError(f"unknown verify scale '{scale}' (expected one of {sorted(SCALES)})")
    n_loss, n_grad, max_e, max_r, max_d = SCALES[scale]
    results: List[PropertyResult] = []
    for kind in (ModelKind.parse(k) for k in kinds):
        rng = np.random.default_rng([seed, list(ModelKind).index(kind)])
        terms = terms_fn(kind)
        loss_err = la_err = 0.0
        for _ in range(n_loss):
            params, ds = random_instance(kind, rng, max_e, max_r, max_d)
            c_pos, c_neg = 1.0, float(rng.uniform(0.05, 1.0))
            efficient = (positive_loss(kind, params, ds, c_pos, c_neg)
                         + all_pairs_loss(kind, params, c_neg, terms)
                         + constant_term(ds, c_pos))
            loss_err = max(loss_err, rel_error(efficient, naive_full_loss(kind, params, ds, c_pos, c_neg)))
            la_err = max(la_err, rel_error(all_pairs_loss(kind, params, 1.0, terms), brute_all_pairs(kind, params, 1.0)))
        results.append(PropertyResult(kind, "loss-identity", loss_err, 1e-8))
        results.append(PropertyResult(kind, "all-pairs", la_err, 1e-8))

        grad_err = 0.0
        for _ in range(n_grad):
            params, ds = random_instance(kind, rng, min(max_e, 8), min(max_r, 3), min(max_d, 4))
            config = TrainConfig(kind=kind, c_neg=float(rng.uniform(0.05, 1.0)), l2=0.01)
            _, analytic = loss_and_gradients(kind, params, ds, config, terms)
            numeric = fd_gradient(kind, params, ds, config, 1e-5, "efficient", terms)
            grad_err = max(grad_err, max_gradient_error(analytic, numeric))
        results.append(PropertyResult(kind, "gradient", grad_err, 1e-4))

    for r in results:
        logger.debug(r.line())
    return results
