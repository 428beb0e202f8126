"""Permutations of sample parts and maximally diverse permutation pools.

Indices are 0-based everywhere, in memory and on disk (the usual jigsaw
literature writes them 1-based).  ``apply`` follows the gather convention:
``apply(p, parts)[j] == parts[p.indices[j]]``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InfeasibleError, ParseError, RejectedInput, ValidationError

EXHAUSTIVE_LIMIT = 9
RANDOM_POOL_SIZE = 100_000


@dataclass(frozen=True)
class Permutation:
    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        object.__setattr__(self, "indices", idx)
        if len(idx) < 2:
            raise RejectedInput(f"permutation needs at least 2 elements, got {len(idx)}")
        if sorted(idx) != list(range(len(idx))):
            raise RejectedInput(f"{idx} is not a bijection on 0..{len(idx) - 1}")

    @property
    def n(self) -> int:
        return len(self.indices)

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(tuple(range(n)))

    def __len__(self):
        return len(self.indices)


def apply(perm: Permutation, parts: Sequence):
    """Reorder ``parts`` so that position j receives ``parts[perm.indices[j]]``."""
    if len(parts) != perm.n:
        raise RejectedInput(f"permutation of length {perm.n} applied to {len(parts)} parts")
    if isinstance(parts, np.ndarray):
        return parts[list(perm.indices)]
    out = [parts[i] for i in perm.indices]
    return type(parts)(out) if isinstance(parts, tuple) else out


def invert(perm: Permutation) -> Permutation:
    inv = [0] * perm.n
    for j, i in enumerate(perm.indices):
        inv[i] = j
    return Permutation(tuple(inv))


def compose(a: Permutation, b: Permutation) -> Permutation:
    """Permutation equivalent to applying ``b`` first, then ``a``."""
    if a.n != b.n:
        raise RejectedInput("cannot compose permutations of different lengths")
    return Permutation(tuple(b.indices[i] for i in a.indices))


def hamming(a: Permutation, b: Permutation) -> int:
    if a.n != b.n:
        raise RejectedInput(f"hamming distance between lengths {a.n} and {b.n}")
    return sum(x != y for x, y in zip(a.indices, b.indices))


def _pairwise_min(table: np.ndarray) -> int:
    if len(table) < 2:
        return 0
    best = table.shape[1]
    for i in range(len(table) - 1):
        d = (table[i + 1:] != table[i]).sum(axis=1).min()
        best = min(best, int(d))
    return best


@dataclass(frozen=True, eq=False)
class PermutationSet:
    """An ordered pool of distinct permutations of ``n`` parts.

    ``table`` holds one permutation per row in selection order; row index is
    the class label of the ordering task.
    """

    n: int
    table: np.ndarray
    seed: int
    min_pairwise_hamming: int = field(init=False)

    def __post_init__(self):
        table = np.array(self.table, dtype=np.int64, copy=True)
        if table.ndim != 2 or table.shape[1] != self.n:
            raise ValidationError(f"expected rows of length {self.n}, got shape {table.shape}")
        ref = np.arange(self.n)
        for row, p in enumerate(table):
            if not np.array_equal(np.sort(p), ref):
                raise ValidationError(f"row {row} {p.tolist()} is not a bijection on 0..{self.n - 1}")
        if len({tuple(p) for p in table.tolist()}) != len(table):
            seen = {}
            for row, p in enumerate(map(tuple, table.tolist())):
                if p in seen:
                    raise ValidationError(f"row {row} duplicates row {seen[p]}: {list(p)}")
                seen[p] = row
        table.setflags(write=False)
        object.__setattr__(self, "table", table)
        object.__setattr__(self, "min_pairwise_hamming", _pairwise_min(table))

    def __len__(self):
        return len(self.table)

    def __getitem__(self, i) -> Permutation:
        return Permutation(tuple(self.table[i].tolist()))

    @property
    def perms(self) -> list[Permutation]:
        return [self[i] for i in range(len(self))]

    def __eq__(self, other):
        if not isinstance(other, PermutationSet):
            return NotImplemented
        return (self.n == other.n and self.seed == other.seed
                and np.array_equal(self.table, other.table))

    def hamming_to_identity(self) -> np.ndarray:
        return (self.table != np.arange(self.n)).sum(axis=1)

    def index_of(self, perm: Permutation) -> int:
        hits = np.flatnonzero((self.table == np.asarray(perm.indices)).all(axis=1))
        if len(hits) == 0:
            raise KeyError(perm.indices)
        return int(hits[0])


def _candidates(n: int, seed: int) -> np.ndarray:
    if n <= EXHAUSTIVE_LIMIT:
        # itertools yields lexicographic order, which doubles as the final tie-break
        return np.array(list(itertools.permutations(range(n))), dtype=np.int8)
    rng = np.random.Generator(np.random.Philox(seed))
    pool = set()
    while len(pool) < RANDOM_POOL_SIZE:
        pool.add(tuple(rng.permutation(n).tolist()))
    return np.array(sorted(pool), dtype=np.int8)


def generate_set(n: int, size: int, seed: int) -> PermutationSet:
    """Greedy max-min Hamming selection.

    The first permutation is a seeded uniform draw from the candidate pool.
    Every later pick maximises the minimum distance to the chosen ones, with
    ties broken by the largest distance sum and then lexicographic order.
    """
    if n < 2:
        raise RejectedInput("n must be at least 2")
    if size < 1:
        raise RejectedInput("size must be at least 1")
    if size > math.factorial(n):
        raise InfeasibleError(f"size {size} exceeds {n}! = {math.factorial(n)}")
    cands = _candidates(n, seed)
    if size > len(cands):
        raise InfeasibleError(f"size {size} exceeds candidate pool of {len(cands)}")

    rng = np.random.Generator(np.random.Philox(seed))
    first = int(rng.integers(len(cands)))
    chosen = [first]
    min_d = (cands != cands[first]).sum(axis=1).astype(np.int64)
    sum_d = min_d.copy()
    for _ in range(size - 1):
        best_min = min_d.max()
        tied = np.flatnonzero(min_d == best_min)
        pick = int(tied[np.argmax(sum_d[tied])])  # argmax returns first (lexicographic) on ties
        chosen.append(pick)
        d = (cands != cands[pick]).sum(axis=1)
        np.minimum(min_d, d, out=min_d)
        sum_d += d
    return PermutationSet(n=n, table=cands[chosen].astype(np.int64), seed=seed)


def random_distinct_set(n: int, size: int, rng: np.random.Generator) -> PermutationSet:
    """Uniformly random distinct permutations; the baseline greedy selection must beat."""
    if size > math.factorial(n):
        raise InfeasibleError(f"size {size} exceeds {n}!")
    seen: dict[tuple, None] = {}
    while len(seen) < size:
        seen.setdefault(tuple(rng.permutation(n).tolist()), None)
    return PermutationSet(n=n, table=np.array(list(seen)), seed=-1)


def dumps_set(pset: PermutationSet) -> str:
    rows = ",\n    ".join(json.dumps(r) for r in pset.table.tolist())
    return f'{{\n  "n": {pset.n},\n  "seed": {pset.seed},\n  "permutations": [\n    {rows}\n  ]\n}}\n'


def save_set(pset: PermutationSet, path) -> None:
    Path(path).write_text(dumps_set(pset), encoding="utf-8")


def loads_set(text: str) -> PermutationSet:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"permutation file is not valid JSON (line {exc.lineno}): {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise ParseError("permutation file must hold a JSON object")
    for key in ("n", "seed", "permutations"):
        if key not in obj:
            raise ParseError(f"missing field {key!r}")
    n, seed, rows = obj["n"], obj["seed"], obj["permutations"]
    if not isinstance(n, int) or isinstance(n, bool):
        raise ParseError(f"field 'n' must be an integer, got {n!r}")
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ParseError(f"field 'seed' must be an integer, got {seed!r}")
    if not isinstance(rows, list) or not rows:
        raise ParseError("field 'permutations' must be a non-empty list")
    for i, r in enumerate(rows):
        if not isinstance(r, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in r):
            raise ParseError(f"permutations[{i}] is not a list of integers")
        if len(r) != n:
            raise ValidationError(f"permutations[{i}] has length {len(r)}, expected {n}")
    return PermutationSet(n=n, table=np.array(rows, dtype=np.int64), seed=seed)


def load_set(path) -> PermutationSet:
    return loads_set(Path(path).read_text(encoding="utf-8"))
