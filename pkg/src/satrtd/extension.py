"""Learned-clause pools and Bernoulli-sampled extensions of a base formula."""
from __future__ import annotations

import functools
import hashlib
import io
import math
import os
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .cnf import EXTENSION, Clause, Formula, open_maybe_gz
from .solver import LearnedClauseRecord, Solver, SolverConfig

POOL_MAGIC = "c pool v1"
EXT_MAGIC = "c ext v1"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


class PoolFormatError(ValueError):
    pass


@dataclass(frozen=True)
class ClausePool:
    records: tuple[LearnedClauseRecord, ...]
    source_id: str = ""
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        batches = [r.batch_index for r in self.records]
        if any(b > a for a, b in zip(batches[1:], batches)):
            raise ValueError("pool batch indices must be non-decreasing")

    def __len__(self):
        return len(self.records)

    def lbds(self) -> np.ndarray:
        return np.array([r.lbd for r in self.records], dtype=np.int64)

    @functools.cached_property
    def pool_id(self) -> str:
        """Content hash; stable across gzip/plain storage."""
        return hashlib.sha256(format_pool(self)).hexdigest()[:16]


@dataclass(frozen=True)
class ExtensionSpec:
    pool_id: str
    p: float
    seed: int
    indices: tuple[int, ...] = ()
    empty_pool: bool = False

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("extension indices must be strictly increasing")
        if self.indices and self.indices[0] < 0:
            raise ValueError("extension indices must be non-negative")

    def __len__(self):
        return len(self.indices)


@dataclass(frozen=True)
class ExtensionStats:
    size: int
    relative_increase: float
    lbd_quantiles: Optional[tuple[int, int, int, int, int]]
    mean_width: Optional[float]

    def as_dict(self) -> dict:
        q = self.lbd_quantiles or (None,) * 5
        return {
            "size": self.size,
            "relative_increase": self.relative_increase,
            "lbd_min": q[0], "lbd_q25": q[1], "lbd_median": q[2], "lbd_q75": q[3], "lbd_max": q[4],
            "mean_width": self.mean_width,
        }


# -- pool files ----------------------------------------------------------------

def format_pool(pool: ClausePool) -> bytes:
    out = [f"{POOL_MAGIC} seed={pool.seed}\n"]
    if pool.source_id:
        out.append(f"c source {pool.source_id}\n")
    for r in pool.records:
        out.append(f"{r.batch_index} {r.conflict_number} {r.lbd} "
                   + " ".join(map(str, r.clause.literals)) + " 0\n")
    return "".join(out).encode("ascii")


def parse_pool(data) -> ClausePool:
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("ascii")
    lines = io.StringIO(data)
    header = lines.readline().strip()
    if not header.startswith(POOL_MAGIC):
        raise PoolFormatError(f"not a clause pool (header {header!r})")
    try:
        seed = int(header.split("seed=", 1)[1].split()[0])
    except (IndexError, ValueError):
        raise PoolFormatError(f"pool header lacks seed: {header!r}") from None
    source = ""
    records = []
    for lineno, line in enumerate(lines, start=2):
        line = line.strip()
        if not line:
            continue
        if line.startswith("c"):
            if line.startswith("c source "):
                source = line[len("c source "):]
            continue
        toks = [int(t) for t in line.split()]
        if len(toks) < 4 or toks[-1] != 0:
            raise PoolFormatError(f"line {lineno}: malformed pool record")
        batch, conflict, lbd = toks[:3]
        records.append(LearnedClauseRecord(Clause.of(toks[3:-1]), lbd, batch, conflict))
    return ClausePool(tuple(records), source, seed)


def write_pool(pool: ClausePool, path) -> None:
    with open_maybe_gz(path, "wb") as fh:
        fh.write(format_pool(pool))


def read_pool(path) -> ClausePool:
    with open_maybe_gz(path, "rb") as fh:
        return parse_pool(fh.read())


class PoolWriter:
    """Streams learned-clause records to a pool file as they are produced."""

    def __init__(self, fh, seed=0, source_id=""):
        self.fh = fh
        self.count = 0
        fh.write(f"{POOL_MAGIC} seed={seed}\n".encode())
        if source_id:
            fh.write(f"c source {source_id}\n".encode())

    def __call__(self, r: LearnedClauseRecord):
        self.fh.write((f"{r.batch_index} {r.conflict_number} {r.lbd} "
                       + " ".join(map(str, r.clause.literals)) + " 0\n").encode())
        self.count += 1


def record_learned_clauses(f: Formula, config: SolverConfig = None, sink=None,
                           source_id: str = "", max_conflicts=None):
    """Solve ``f`` once and capture every learned clause in learning order.

    ``sink`` may be a path, a binary file object, or None (keep in memory).
    Returns ``(pool, outcome)``.
    """
    config = config or SolverConfig()
    records = []
    if sink is None:
        outcome = Solver(f, config, on_learn=records.append).solve(max_conflicts=max_conflicts)
        return ClausePool(tuple(records), source_id, config.seed), outcome

    def run(fh):
        writer = PoolWriter(fh, config.seed, source_id)

        def on_learn(r):
            records.append(r)
            writer(r)

        return Solver(f, config, on_learn=on_learn).solve(max_conflicts=max_conflicts)

    if isinstance(sink, (str, os.PathLike)):
        with open_maybe_gz(sink, "wb") as fh:
            outcome = run(fh)
    else:
        outcome = run(sink)
    return ClausePool(tuple(records), source_id, config.seed), outcome


# -- sampling -------------------------------------------------------------------

def _splitmix64(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def counter_uniform(seed: int, indices) -> np.ndarray:
    """Uniform [0, 1) draws keyed by (seed, index); independent of array length."""
    idx = np.asarray(indices, dtype=np.uint64)
    key = _splitmix64(np.array([seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64))
    with np.errstate(over="ignore"):
        z = _splitmix64(key ^ (idx * _M2))
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def sample_extension(pool: ClausePool, p: float, seed: int) -> ExtensionSpec:
    """Select each pool record independently with probability ``p``."""
    if not 0.0 < p <= 1.0:
        raise ValueError(f"sampling probability must lie in (0, 1], got {p}")
    if len(pool) == 0:
        warnings.warn("sampling from an empty clause pool", RuntimeWarning, stacklevel=2)
        return ExtensionSpec(pool.pool_id, p, seed, (), empty_pool=True)
    u = counter_uniform(seed, np.arange(len(pool)))
    chosen = np.flatnonzero(u < p)
    return ExtensionSpec(pool.pool_id, p, seed, tuple(chosen.tolist()))


def materialize(base: Formula, pool: ClausePool, spec: ExtensionSpec) -> Formula:
    """Base clauses followed by the selected pool clauses, tagged as extension."""
    n = len(pool)
    for i in spec.indices:
        if not 0 <= i < n:
            raise IndexError(f"extension index {i} out of bounds for a pool of {n}")
    return base.extend((pool.records[i].clause for i in spec.indices), EXTENSION)


def nearest_rank(values: Sequence, q: float):
    """Nearest-rank quantile: the ceil(q * n)-th smallest value (q = 0 gives the min)."""
    s = sorted(values)
    if not s:
        raise ValueError("quantile of an empty sequence")
    rank = max(1, math.ceil(q * len(s)))
    return s[rank - 1]


def extension_stats(base: Formula, pool: ClausePool, spec: ExtensionSpec) -> ExtensionStats:
    recs = [pool.records[i] for i in spec.indices]
    inc = len(recs) / len(base.clauses) if len(base.clauses) else 0.0
    if not recs:
        return ExtensionStats(0, inc, None, None)
    lbds = [r.lbd for r in recs]
    quant = tuple(int(nearest_rank(lbds, q)) for q in (0.0, 0.25, 0.5, 0.75, 1.0))
    width = float(np.mean([r.size for r in recs]))
    return ExtensionStats(len(recs), inc, quant, width)


# -- extension spec files ----------------------------------------------------------

def format_extension(spec: ExtensionSpec) -> bytes:
    out = [f"{EXT_MAGIC} pool={spec.pool_id} p={spec.p!r} seed={spec.seed}\n"]
    out.extend(f"{i}\n" for i in spec.indices)
    return "".join(out).encode("ascii")


def parse_extension(data) -> ExtensionSpec:
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("ascii")
    lines = data.splitlines()
    if not lines or not lines[0].startswith(EXT_MAGIC):
        raise PoolFormatError("not an extension spec file")
    fields = dict(tok.split("=", 1) for tok in lines[0][len(EXT_MAGIC):].split())
    try:
        spec = ExtensionSpec(fields["pool"], float(fields["p"]), int(fields["seed"]),
                             tuple(int(l) for l in lines[1:] if l.strip()))
    except KeyError as exc:
        raise PoolFormatError(f"extension header lacks {exc.args[0]}") from None
    return spec


def write_extension(spec: ExtensionSpec, path) -> None:
    with open_maybe_gz(path, "wb") as fh:
        fh.write(format_extension(spec))


def read_extension(path) -> ExtensionSpec:
    with open_maybe_gz(path, "rb") as fh:
        return parse_extension(fh.read())
