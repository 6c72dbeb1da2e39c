"""
data.py

Purpose
- Load, validate and index integer-encoded knowledge graphs stored in the
  OpenKE directory layout:
      entity2id.txt / relation2id.txt   count line, then "name<TAB>id"
      train2id.txt / valid2id.txt / test2id.txt
                                        count line, then "h t r" (tail before relation)
- Write the same layout back out, and generate synthetic graphs for oracle
  tests and learnability checks.

Triples are held as int64 arrays of shape (n, 3) in (head, relation, tail)
column order; the on-disk "h t r" order only exists inside the parser/writer.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Tuple, Union

import numpy as np

from .errors import ConfigError, DataError

logger = logging.getLogger(__name__)

ENTITY_FILE = "entity2id.txt"
RELATION_FILE = "relation2id.txt"
SPLIT_FILES = {"train": "train2id.txt", "valid": "valid2id.txt", "test": "test2id.txt"}
REQUIRED_FILES = (ENTITY_FILE, RELATION_FILE, SPLIT_FILES["train"], SPLIT_FILES["test"])

# bit widths used to pack (h, r, t) into one int64 membership key
_ENTITY_BITS = 24
_RELATION_BITS = 15
MAX_ENTITIES = 1 << _ENTITY_BITS
MAX_RELATIONS = 1 << _RELATION_BITS


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


def as_triples(triples: Union[np.ndarray, Iterable]) -> np.ndarray:
    """Coerce a list of Triple / (h, r, t) tuples or an array into an (n, 3) int64 array."""
    arr = np.asarray(list(triples) if not isinstance(triples, np.ndarray) else triples, dtype=np.int64)
    if arr.size == 0:
        return np.zeros((0, 3), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise DataError(f"expected (n, 3) triples, got shape {arr.shape}")
    return arr


def pack_keys(heads, rels, tails) -> np.ndarray:
    heads = np.asarray(heads, dtype=np.int64)
    rels = np.asarray(rels, dtype=np.int64)
    tails = np.asarray(tails, dtype=np.int64)
    return (heads << (_RELATION_BITS + _ENTITY_BITS)) | (rels << _ENTITY_BITS) | tails


# -----------------------------
# Dataset
# -----------------------------

@dataclass(frozen=True, eq=False)
class Dataset:
    entity_count: int
    relation_count: int
    train: np.ndarray
    valid: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    test: np.ndarray = field(default_factory=lambda: np.zeros((0, 3), dtype=np.int64))
    entity_names: Optional[List[str]] = None
    relation_names: Optional[List[str]] = None
    name: str = ""

    def split(self, which: str) -> np.ndarray:
        if which not in SPLIT_FILES:
            raise ConfigError(f"unknown split '{which}' (expected one of {sorted(SPLIT_FILES)})")
        return getattr(self, which)

    def triples(self, which: str = "train") -> List[Triple]:
        return [Triple(int(h), int(r), int(t)) for h, r, t in self.split(which)]

    def all_known(self) -> np.ndarray:
        """train + valid + test, the support of the filtered ranking setting."""
        parts = [self.train, self.valid, self.test]
        known = np.concatenate([p for p in parts if len(p)] or [np.zeros((0, 3), dtype=np.int64)])
        return np.unique(known, axis=0) if len(known) else known

    def validate(self) -> "Dataset":
        if self.entity_count < 1 or self.relation_count < 1:
            raise DataError(f"dataset needs at least one entity and relation, got {self.entity_count}/{self.relation_count}")
        if self.entity_count > MAX_ENTITIES or self.relation_count > MAX_RELATIONS:
            raise DataError(f"dataset too large for the index key layout ({self.entity_count} entities, {self.relation_count} relations)")
        for which in SPLIT_FILES:
            arr = self.split(which)
            if len(arr) == 0:
                continue
            _check_bounds(arr, self.entity_count, self.relation_count, which)
            keys = pack_keys(arr[:, 0], arr[:, 1], arr[:, 2])
            if len(np.unique(keys)) != len(keys):
                raise DataError(f"duplicate triples in split '{which}'")
        return self


def _check_bounds(arr: np.ndarray, entity_count: int, relation_count: int, where: str) -> None:
    if arr.min() < 0:
        raise DataError(f"{where}: negative index")
    if arr[:, [0, 2]].max() >= entity_count:
        raise DataError(f"{where}: entity index out of range (entity_count={entity_count})")
    if arr[:, 1].max() >= relation_count:
        raise DataError(f"{where}: relation index out of range (relation_count={relation_count})")


# -----------------------------
# Parsing
# -----------------------------

def _read_lines(path: Path) -> List[str]:
    try:
        return path.read_text(encoding="ascii").splitlines()
    except UnicodeDecodeError as exc:
        raise DataError(f"not ASCII text ({exc.reason})", path) from exc


def _read_count(lines: List[str], path: Path) -> int:
    if not lines:
        raise DataError("empty file, expected a count line", path, 1)
    try:
        count = int(lines[0].strip())
    except ValueError:
        raise DataError(f"malformed count line '{lines[0].strip()}'", path, 1)
    if count < 0:
        raise DataError("negative count", path, 1)
    return count


def read_dictionary(path: Path) -> List[str]:
    """Read a "name<TAB>id" dictionary; returns names indexed by id."""
    lines = _read_lines(path)
    count = _read_count(lines, path)
    body = [(i, ln) for i, ln in enumerate(lines[1:], start=2) if ln.strip()]
    if len(body) != count:
        raise DataError(f"count mismatch: header says {count}, found {len(body)} entries", path, 1)
    names: List[Optional[str]] = [None] * count
    for lineno, ln in body:
        parts = ln.rstrip("\n").split("\t") if "\t" in ln else ln.split()
        if len(parts) != 2:
            raise DataError(f"expected 'name<TAB>id', got '{ln.strip()}'", path, lineno)
        name, raw_id = parts[0].strip(), parts[1].strip()
        try:
            idx = int(raw_id)
        except ValueError:
            raise DataError(f"malformed id '{raw_id}'", path, lineno)
        if not 0 <= idx < count:
            raise DataError(f"id {idx} out of range [0, {count})", path, lineno)
        if names[idx] is not None:
            raise DataError(f"duplicate id {idx}", path, lineno)
        names[idx] = name
    return names  # type: ignore[return-value]


def read_triples(path: Path, entity_count: int, relation_count: int) -> np.ndarray:
    """Read an OpenKE "h t r" split file into an (n, 3) array of (h, r, t)."""
    lines = _read_lines(path)
    count = _read_count(lines, path)
    body = [(i, ln) for i, ln in enumerate(lines[1:], start=2) if ln.strip()]
    if len(body) != count:
        raise DataError(f"count mismatch: header says {count}, found {len(body)} triples", path, 1)

    out = np.empty((count, 3), dtype=np.int64)
    seen: Dict[Tuple[int, int, int], int] = {}
    for row, (lineno, ln) in enumerate(body):
        parts = ln.split()
        if len(parts) != 3:
            raise DataError(f"expected 'h t r', got '{ln.strip()}'", path, lineno)
        try:
            h, t, r = (int(p) for p in parts)
        except ValueError:
            raise DataError(f"non-integer field in '{ln.strip()}'", path, lineno)
        if not (0 <= h < entity_count and 0 <= t < entity_count):
            raise DataError(f"entity index out of range [0, {entity_count})", path, lineno)
        if not 0 <= r < relation_count:
            raise DataError(f"relation index out of range [0, {relation_count})", path, lineno)
        key = (h, r, t)
        if key in seen:
            raise DataError(f"duplicate triple (first seen on line {seen[key]})", path, lineno)
        seen[key] = lineno
        out[row] = key
    return out


def load_dataset(directory: Union[str, Path]) -> Dataset:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataError("dataset directory not found", directory)
    for fname in REQUIRED_FILES:
        if not (directory / fname).exists():
            raise DataError("missing required file", directory / fname)

    entity_names = read_dictionary(directory / ENTITY_FILE)
    relation_names = read_dictionary(directory / RELATION_FILE)
    E, R = len(entity_names), len(relation_names)

    splits: Dict[str, np.ndarray] = {}
    for which, fname in SPLIT_FILES.items():
        path = directory / fname
        if not path.exists():
            splits[which] = np.zeros((0, 3), dtype=np.int64)
            continue
        splits[which] = read_triples(path, E, R)

    ds = Dataset(
        entity_count=E,
        relation_count=R,
        train=splits["train"],
        valid=splits["valid"],
        test=splits["test"],
        entity_names=entity_names,
        relation_names=relation_names,
        name=directory.name,
    ).validate()
    logger.debug(
        "loaded %s: |E|=%d |R|=%d train=%d valid=%d test=%d",
        ds.name, E, R, len(ds.train), len(ds.valid), len(ds.test),
    )
    return ds


def write_dataset(dataset: Dataset, directory: Union[str, Path]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    ent = dataset.entity_names or [f"e{i}" for i in range(dataset.entity_count)]
    rel = dataset.relation_names or [f"r{i}" for i in range(dataset.relation_count)]

    def dictionary(names: List[str]) -> str:
        return "".join([f"{len(names)}\n"] + [f"{n}\t{i}\n" for i, n in enumerate(names)])

    (directory / ENTITY_FILE).write_text(dictionary(ent), encoding="ascii")
    (directory / RELATION_FILE).write_text(dictionary(rel), encoding="ascii")
    for which, fname in SPLIT_FILES.items():
        arr = dataset.split(which)
        lines = [f"{len(arr)}\n"] + [f"{h} {t} {r}\n" for h, r, t in arr]
        (directory / fname).write_text("".join(lines), encoding="ascii")
    logger.debug("wrote dataset to %s", directory)
    return directory


# -----------------------------
# Adjacency index
# -----------------------------

@dataclass(frozen=True, eq=False)
class AdjacencyIndex:
    by_head_relation: Dict[Tuple[int, int], Tuple[int, ...]]
    by_tail_relation: Dict[Tuple[int, int], Tuple[int, ...]]
    keys: np.ndarray  # sorted packed (h, r, t) keys

    def __len__(self) -> int:
        return len(self.keys)

    def tails(self, head: int, relation: int) -> Tuple[int, ...]:
        return self.by_head_relation.get((head, relation), ())

    def heads(self, tail: int, relation: int) -> Tuple[int, ...]:
        return self.by_tail_relation.get((tail, relation), ())

    def contains(self, heads, rels, tails) -> np.ndarray:
        """Vectorized membership test; returns a bool array."""
        q = pack_keys(heads, rels, tails)
        if len(self.keys) == 0:
            return np.zeros(np.shape(q), dtype=bool)
        pos = np.searchsorted(self.keys, q)
        pos = np.minimum(pos, len(self.keys) - 1)
        return self.keys[pos] == q

    def triples(self) -> List[Triple]:
        return [Triple(h, r, t) for (h, r), ts in sorted(self.by_head_relation.items()) for t in ts]


def build_index(triples) -> AdjacencyIndex:
    arr = as_triples(triples)
    hr: Dict[Tuple[int, int], set] = {}
    tr: Dict[Tuple[int, int], set] = {}
    for h, r, t in arr.tolist():
        hr.setdefault((h, r), set()).add(t)
        tr.setdefault((t, r), set()).add(h)
    keys = np.unique(pack_keys(arr[:, 0], arr[:, 1], arr[:, 2])) if len(arr) else np.zeros(0, dtype=np.int64)
    return AdjacencyIndex(
        by_head_relation={k: tuple(sorted(v)) for k, v in hr.items()},
        by_tail_relation={k: tuple(sorted(v)) for k, v in tr.items()},
        keys=keys,
    )


# -----------------------------
# Synthetic graphs
# -----------------------------

def _decode(flat: np.ndarray, entity_count: int, relation_count: int) -> np.ndarray:
    h, rest = np.divmod(flat, relation_count * entity_count)
    r, t = np.divmod(rest, entity_count)
    return np.stack([h, r, t], axis=1).astype(np.int64)


def make_synthetic(seed: int, entity_count: int, relation_count: int, positive_count: int) -> Dataset:
    """Uniformly random distinct positives; everything lands in `train`."""
    total = entity_count * entity_count * relation_count
    if entity_count < 1 or relation_count < 1:
        raise ConfigError("make_synthetic: entity_count and relation_count must be >= 1")
    if not 0 <= positive_count <= total:
        raise ConfigError(f"make_synthetic: positive_count {positive_count} exceeds |E|^2|R| = {total}")
    rng = np.random.default_rng(seed)
    flat = np.sort(rng.choice(total, size=positive_count, replace=False))
    return Dataset(
        entity_count=entity_count,
        relation_count=relation_count,
        train=_decode(flat, entity_count, relation_count),
        name=f"synthetic-s{seed}",
    ).validate()


def make_planted(
    seed: int,
    entity_count: int,
    relation_count: int,
    positive_count: int,
    dim: int = 16,
    test_fraction: float = 0.0,
) -> Dataset:
    """Positives are the top-scoring triples of a hidden DistMult model."""
    total = entity_count * entity_count * relation_count
    if not 0 < positive_count <= total:
        raise ConfigError(f"make_planted: positive_count {positive_count} not in (0, {total}]")
    if total > 10_000_000:
        raise ConfigError("make_planted: graph too large to score exhaustively")
    if not 0.0 <= test_fraction < 1.0:
        raise ConfigError("make_planted: test_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    ent = rng.normal(size=(entity_count, dim))
    rel = rng.normal(size=(relation_count, dim))
    scores = np.einsum("hd,rd,td->hrt", ent, rel, ent).ravel()
    top = np.argsort(-scores, kind="stable")[:positive_count]
    triples = _decode(np.sort(top), entity_count, relation_count)

    n_test = int(round(test_fraction * positive_count))
    order = rng.permutation(positive_count)
    test = triples[np.sort(order[:n_test])]
    train = triples[np.sort(order[n_test:])]
    return Dataset(
        entity_count=entity_count,
        relation_count=relation_count,
        train=train,
        test=test,
        name=f"planted-s{seed}",
    ).validate()


def dataset_stats(dataset: Dataset) -> Dict[str, float]:
    index = build_index(dataset.train)
    slots = len(index.by_head_relation)
    return {
        "entities": dataset.entity_count,
        "relations": dataset.relation_count,
        "train": len(dataset.train),
        "valid": len(dataset.valid),
        "test": len(dataset.test),
        "mean_tails_per_head_relation": (len(dataset.train) / slots) if slots else 0.0,
    }
