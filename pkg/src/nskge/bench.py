"""
bench.py

Purpose
- Desk-scale timing of the efficiency claims:
    time_loss_paths     efficient Gram-based L^A vs brute-force all-pairs loop
    dim_scaling         efficient L^A time as d grows (expected ~quadratic)
    compare_epoch_time  NS epoch vs sampled epoch, per model kind
    negatives_scaling   sampled epoch time as negatives_per_positive grows (expected linear)
- Reports as JSON, an aligned text table and an .xlsx workbook.

Every timing is a median over `repeats` runs after one discarded warm-up,
and no timing is reported before both arms agree on the loss value.
"""
from __future__ import annotations

import json
import logging
import os
import timeit
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from . import __version__
from .config import SamplerConfig, TrainConfig
from .data import Dataset, build_index
from .errors import ConfigError, NumericError
from .linalg import AdamState, is_deterministic
from .models import ROLES, ModelKind, init_params, square_terms
from .ns_train import all_pairs_loss, gram_count, run_epoch
from .oracle import brute_all_pairs, random_params, rel_error
from .sampled_train import run_sampled_epoch

logger = logging.getLogger(__name__)

HANDSHAKE_TOL = 1e-8


def thread_count() -> Optional[int]:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        if os.environ.get(var):
            return int(os.environ[var])
    return None


def time_call(fn: Callable[[], object], repeats: int = 5) -> Dict[str, float]:
    """Median / min / max wall time of fn() over `repeats` runs after one warm-up."""
    if repeats < 1:
        raise ConfigError("repeats must be >= 1")
    fn()
    samples = []
    for _ in range(repeats):
        t0 = timeit.default_timer()
        fn()
        samples.append(timeit.default_timer() - t0)
    return {"median": float(np.median(samples)), "min": float(min(samples)), "max": float(max(samples)), "repeats": repeats}


def _handshake(value: float, reference: float, what: str) -> float:
    err = rel_error(value, reference)
    if not err <= HANDSHAKE_TOL:
        raise NumericError(f"{what}: efficient and brute-force losses disagree (rel err {err:.3e})")
    return err


# -----------------------------
# Kernel timing
# -----------------------------

def time_loss_paths(kind, sizes: Tuple[int, int, int], repeats: int = 5, seed: int = 0, naive: bool = True) -> Dict:
    kind = ModelKind.parse(kind)
    E, R, d = sizes
    params = random_params(kind, E, R, d, np.random.default_rng(seed), scale=0.1)
    terms = square_terms(kind)
    efficient_value = all_pairs_loss(kind, params, 1.0, terms)
    report: Dict = {
        "kind": kind.value, "entities": E, "relations": R, "dim": d,
        "efficient_value": efficient_value, "threads": thread_count(),
        "deterministic": is_deterministic(),
    }
    if naive:
        naive_value = brute_all_pairs(kind, params, 1.0)
        report["naive_value"] = naive_value
        report["rel_error"] = _handshake(efficient_value, naive_value, f"{kind.label} L^A")
    report["efficient"] = time_call(lambda: all_pairs_loss(kind, params, 1.0, terms), repeats)
    if naive:
        report["naive"] = time_call(lambda: brute_all_pairs(kind, params, 1.0), repeats)
        report["ratio"] = report["efficient"]["median"] / report["naive"]["median"]
    logger.debug("time_loss_paths %s %s: %s", kind.label, sizes, report.get("ratio"))
    return report


def dim_scaling(kind, entity_count: int, relation_count: int, dims: Sequence[int], repeats: int = 5, seed: int = 0) -> List[Dict]:
    rows = []
    for d in dims:
        rep = time_loss_paths(kind, (entity_count, relation_count, d), repeats, seed, naive=False)
        rows.append({"dim": d, "median": rep["efficient"]["median"]})
    for prev, cur in zip(rows, rows[1:]):
        cur["growth"] = cur["median"] / prev["median"] if prev["median"] > 0 else float("inf")
    return rows


# -----------------------------
# Epoch timing
# -----------------------------

def ns_cost_key(kind) -> Tuple[int, int]:
    """(distinct Grams, term count) of one NS epoch, cheapest first.

    Each Gram costs O(|E| d^2) to build and to back-propagate through, and term
    count breaks ties: TransE (2 Grams, 6 terms) sorts ahead of SimplE (6, 3).
    """
    terms = square_terms(kind)
    return gram_count(terms), len(terms)


def _ns_epoch_timer(kind: ModelKind, dataset: Dataset, config: TrainConfig) -> Callable[[], object]:
    terms = square_terms(kind)
    state = {"params": init_params(kind, dataset.entity_count, dataset.relation_count, config.dim, config.seed)}
    adam = {role: AdamState.zeros_like(state["params"].tables[role]) for role, _ in ROLES[kind]}

    def step():
        state["params"], _ = run_epoch(state["params"], adam, dataset, config, terms, config.lr)
    return step


def _sampled_epoch_timer(kind: ModelKind, dataset: Dataset, config: TrainConfig, sampler: SamplerConfig) -> Callable[[], object]:
    state = {"params": init_params(kind, dataset.entity_count, dataset.relation_count, config.dim, config.seed)}
    adam = {role: AdamState.zeros_like(state["params"].tables[role]) for role, _ in ROLES[kind]}
    index = build_index(dataset.train)
    rng = np.random.default_rng([config.seed, 1])

    def step():
        state["params"], _ = run_sampled_epoch(state["params"], adam, dataset, index, config, sampler, rng, config.lr)
    return step


def compare_epoch_time(
    dataset: Dataset,
    kinds: Sequence = tuple(ModelKind),
    dim: int = 64,
    repeats: int = 10,
    negatives: int = 25,
    batch_size: int = 4000,
    seed: int = 0,
    sampled_repeats: Optional[int] = None,
) -> Dict:
    if not kinds:
        raise ConfigError("compare_epoch_time needs at least one model kind")
    sampler = SamplerConfig(negatives_per_positive=negatives, batch_size=batch_size).validate()
    rows: List[Dict] = []
    ns_seconds: Dict[str, float] = {}
    for kind in (ModelKind.parse(k) for k in kinds):
        # value handshake on a brute-forceable instance before any timing
        small = random_params(kind, 20, 3, min(dim, 8), np.random.default_rng(seed))
        _handshake(all_pairs_loss(kind, small, 1.0), brute_all_pairs(kind, small, 1.0), f"{kind.label} L^A")

        ns_cfg = TrainConfig(kind=kind, dim=dim, epochs=1, seed=seed).validate()
        sp_cfg = TrainConfig(kind=kind, dim=dim, epochs=1, seed=seed, c_neg=1.0).validate()
        ns = time_call(_ns_epoch_timer(kind, dataset, ns_cfg), repeats)
        sp = time_call(_sampled_epoch_timer(kind, dataset, sp_cfg, sampler), sampled_repeats or repeats)
        ns_seconds[kind.value] = ns["median"]
        speedup = sp["median"] / ns["median"] if ns["median"] > 0 else float("inf")
        rows.append({"model": kind.label, "kind": kind.value, "mode": "sampled", "seconds": sp["median"],
                     "min": sp["min"], "max": sp["max"], "speedup": None})
        rows.append({"model": f"NS-{kind.label}", "kind": kind.value, "mode": "ns", "seconds": ns["median"],
                     "min": ns["min"], "max": ns["max"], "speedup": speedup})
        logger.info("%s: NS %.4fs vs sampled %.4fs per epoch (x%.1f)", kind.label, ns["median"], sp["median"], speedup)

    return {
        "dataset": dataset.name,
        "dim": dim,
        "negatives": negatives,
        "batch_size": batch_size,
        "repeats": repeats,
        "threads": thread_count(),
        "deterministic": is_deterministic(),
        "version": __version__,
        "rows": rows,
        "ns_ordering": sorted(ns_seconds, key=ns_seconds.get),
        "cost_ordering": sorted(ns_seconds, key=ns_cost_key),
    }


def negatives_scaling(
    dataset: Dataset,
    kind=ModelKind.DISTMULT,
    negatives: Sequence[int] = (5, 10, 20, 40),
    dim: int = 32,
    repeats: int = 5,
    batch_size: int = 4000,
    seed: int = 0,
) -> Dict:
    """Sampled epoch time per negatives_per_positive, with a least-squares line through it."""
    kind = ModelKind.parse(kind)
    if len(negatives) < 2:
        raise ConfigError("negatives_scaling needs at least two negative counts")
    cfg = TrainConfig(kind=kind, dim=dim, epochs=1, seed=seed, c_neg=1.0).validate()
    rows = []
    for k in negatives:
        sampler = SamplerConfig(negatives_per_positive=k, batch_size=batch_size).validate()
        stats = time_call(_sampled_epoch_timer(kind, dataset, cfg, sampler), repeats)
        rows.append({"negatives": int(k), "seconds": stats["median"], "min": stats["min"], "max": stats["max"]})
    x = np.array([r["negatives"] for r in rows], dtype=np.float64)
    y = np.array([r["seconds"] for r in rows])
    slope, intercept = np.polyfit(x, y, 1)
    residual = y - (slope * x + intercept)
    spread = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(residual ** 2)) / spread if spread > 0 else 1.0
    logger.info("%s sampled epoch: %.3es per negative, r2=%.3f", kind.label, slope, r2)
    return {"kind": kind.value, "dim": dim, "rows": rows, "slope": float(slope),
            "intercept": float(intercept), "r2": r2, "threads": thread_count()}


# -----------------------------
# Report output
# -----------------------------

def report_frame(report: Dict) -> pd.DataFrame:
    df = pd.DataFrame(report["rows"])
    return df[["model", "mode", "seconds", "min", "max", "speedup"]].rename(columns={"speedup": "speed-up"})


def format_table(report: Dict) -> str:
    df = report_frame(report)
    return df.to_string(index=False, na_rep="-", float_format=lambda v: f"{v:.4f}")


def write_report(report: Dict, path: Union[str, Path]) -> List[Path]:
    """JSON at `path`, plus sibling .txt table and .xlsx workbook."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2), encoding="utf-8")
    txt = path.with_suffix(".txt")
    txt.write_text(format_table(report) + "\n", encoding="utf-8")
    xlsx = path.with_suffix(".xlsx")
    with pd.ExcelWriter(xlsx, engine="xlsxwriter") as writer:
        report_frame(report).to_excel(writer, sheet_name="EpochTime", index=False)
        meta = {k: v for k, v in report.items() if k not in ("rows", "ns_ordering", "cost_ordering", "kernel")}
        meta["ns_ordering"] = " < ".join(report.get("ns_ordering", []))
        meta["cost_ordering"] = " < ".join(report.get("cost_ordering", []))
        pd.DataFrame(sorted(meta.items()), columns=["Field", "Value"]).to_excel(writer, sheet_name="Header", index=False)
        if report.get("kernel"):
            kernel = pd.DataFrame([{
                "kind": k["kind"], "entities": k["entities"], "relations": k["relations"], "dim": k["dim"],
                "efficient_s": k["efficient"]["median"], "naive_s": k.get("naive", {}).get("median"),
                "ratio": k.get("ratio"), "rel_error": k.get("rel_error"),
            } for k in report["kernel"]])
            kernel.to_excel(writer, sheet_name="Kernel", index=False)
    logger.debug("wrote %s, %s, %s", path, txt, xlsx)
    return [path, txt, xlsx]
