"""CNF formulas, DIMACS I/O and a brute-force consequence oracle.

Literals are signed DIMACS integers throughout: ``3`` is x3, ``-3`` its
negation. Variables are 1-indexed.
"""
from __future__ import annotations

import gzip
import io
import os
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

BASE = "base"
EXTENSION = "extension"
LEARNED = "learned"
ORIGINS = (BASE, EXTENSION, LEARNED)

MAX_ORACLE_VARS = 24


class DimacsError(ValueError):
    """Malformed DIMACS input; ``line`` is 1-based when known."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


def negate(lit: int) -> int:
    return -lit


def variable(lit: int) -> int:
    return lit if lit > 0 else -lit


@dataclass(frozen=True)
class Clause:
    literals: tuple[int, ...]
    tautology: bool = False

    @classmethod
    def of(cls, lits: Iterable[int]) -> "Clause":
        """Normalize: drop duplicate literals (first occurrence wins), flag tautologies."""
        seen = {}
        for lit in lits:
            lit = int(lit)
            if lit == 0:
                raise ValueError("literal 0 is not allowed inside a clause")
            seen.setdefault(lit, None)
        lits = tuple(seen)
        taut = any(-lit in seen for lit in lits)
        return cls(lits, taut)

    def __len__(self):
        return len(self.literals)

    def __iter__(self):
        return iter(self.literals)

    @property
    def max_var(self) -> int:
        return max((variable(l) for l in self.literals), default=0)


@dataclass(frozen=True)
class Formula:
    num_vars: int
    clauses: tuple[Clause, ...] = ()
    origins: tuple[str, ...] = field(default=None)

    def __post_init__(self):
        clauses = tuple(c if isinstance(c, Clause) else Clause.of(c) for c in self.clauses)
        object.__setattr__(self, "clauses", clauses)
        origins = self.origins
        if origins is None:
            origins = (BASE,) * len(clauses)
        origins = tuple(origins)
        if len(origins) != len(clauses):
            raise ValueError("one origin label per clause required")
        bad = set(origins) - set(ORIGINS)
        if bad:
            raise ValueError(f"unknown origin labels {sorted(bad)}")
        object.__setattr__(self, "origins", origins)
        for c in clauses:
            if c.max_var > self.num_vars:
                raise ValueError(f"clause {c.literals} exceeds num_vars={self.num_vars}")

    def __len__(self):
        return len(self.clauses)

    def literal_lists(self) -> list[list[int]]:
        return [list(c.literals) for c in self.clauses]

    def extend(self, clauses: Iterable[Clause], origin: str = EXTENSION) -> "Formula":
        clauses = [c if isinstance(c, Clause) else Clause.of(c) for c in clauses]
        return Formula(
            self.num_vars,
            self.clauses + tuple(clauses),
            self.origins + (origin,) * len(clauses),
        )


# -- DIMACS -------------------------------------------------------------------

def parse_dimacs(data) -> Formula:
    """Parse DIMACS CNF from ``bytes`` or ``str``.

    Comment lines start with ``c``; ``%`` terminates the body (SATLIB style).
    Clauses may span lines; the last clause may omit its terminating 0.
    """
    if isinstance(data, (bytes, bytearray)):
        data = data.decode("ascii", errors="replace")
    num_vars = num_clauses = None
    clauses = []
    current = []
    for lineno, raw in enumerate(io.StringIO(data), start=1):
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("%"):
            break
        if line.startswith("p"):
            parts = line.split()
            if num_vars is not None:
                raise DimacsError("duplicate header", lineno)
            if len(parts) != 4 or parts[1] != "cnf":
                raise DimacsError(f"malformed header {line!r}", lineno)
            try:
                num_vars, num_clauses = int(parts[2]), int(parts[3])
            except ValueError:
                raise DimacsError(f"malformed header {line!r}", lineno) from None
            if num_vars < 0 or num_clauses < 0:
                raise DimacsError(f"negative counts in header {line!r}", lineno)
            continue
        if num_vars is None:
            raise DimacsError("clause data before header", lineno)
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise DimacsError(f"bad token {tok!r}", lineno) from None
            if lit == 0:
                clauses.append(Clause.of(current))
                current = []
                continue
            if abs(lit) > num_vars:
                raise DimacsError(f"variable {abs(lit)} exceeds header bound {num_vars}", lineno)
            current.append(lit)
    if num_vars is None:
        raise DimacsError("missing header")
    if current:
        clauses.append(Clause.of(current))
    if len(clauses) != num_clauses:
        raise DimacsError(f"header declares {num_clauses} clauses, found {len(clauses)}")
    return Formula(num_vars, tuple(clauses))


def write_dimacs(f: Formula, comments: Iterable[str] = ()) -> bytes:
    out = [f"c {c}\n" for c in comments]
    out.append(f"p cnf {f.num_vars} {len(f.clauses)}\n")
    for c in f.clauses:
        out.append(" ".join(map(str, c.literals + (0,))) + "\n")
    return "".join(out).encode("ascii")


def open_maybe_gz(path, mode="rb"):
    path = os.fspath(path)
    if path.endswith(".gz"):
        if "w" in mode:
            # fixed mtime keeps compressed output byte-reproducible
            return gzip.GzipFile(path, mode, mtime=0)
        return gzip.open(path, mode)
    return open(path, mode)


def read_dimacs(path) -> Formula:
    with open_maybe_gz(path, "rb") as fh:
        return parse_dimacs(fh.read())


def save_dimacs(f: Formula, path, comments: Iterable[str] = ()) -> None:
    with open_maybe_gz(path, "wb") as fh:
        fh.write(write_dimacs(f, comments))


# -- semantics ----------------------------------------------------------------

def lit_value(lit: int, assignment: Mapping[int, int]):
    """Value of ``lit`` under a partial assignment, or None if unassigned."""
    v = assignment.get(variable(lit))
    if v is None:
        return None
    return v if lit > 0 else 1 - v


def restrict(f: Formula, assignment: Mapping[int, int]) -> Formula:
    """Apply a partial assignment: satisfied clauses vanish, false literals drop out.

    An empty clause in the result means the assignment falsifies ``f``.
    """
    clauses, origins = [], []
    for c, origin in zip(f.clauses, f.origins):
        keep = []
        for lit in c.literals:
            val = lit_value(lit, assignment)
            if val == 1:
                break
            if val is None:
                keep.append(lit)
        else:
            clauses.append(Clause.of(keep))
            origins.append(origin)
    return Formula(f.num_vars, tuple(clauses), tuple(origins))


def satisfies(model: Mapping[int, int], clauses: Iterable) -> bool:
    """True iff the (total enough) assignment satisfies every clause."""
    for c in clauses:
        if not any(lit_value(l, model) == 1 for l in c):
            return False
    return True


def _truth_table(num_vars):
    idx = np.arange(1 << num_vars, dtype=np.uint32)
    # bits[v-1] is the value of variable v in each assignment
    return [((idx >> (v - 1)) & 1).astype(bool) for v in range(1, num_vars + 1)]


def _clause_mask(bits, lits):
    mask = np.zeros(len(bits[0]) if bits else 1, dtype=bool)
    for lit in lits:
        col = bits[variable(lit) - 1]
        mask |= col if lit > 0 else ~col
    return mask


class ConsequenceOracle:
    """Exhaustive 2^n enumeration of a formula's models.

    Built once per formula so that many candidate clauses can be checked
    cheaply; never consults the solver.
    """

    def __init__(self, f: Formula):
        if f.num_vars > MAX_ORACLE_VARS:
            raise ValueError(
                f"{f.num_vars} variables exceeds the enumeration guard of {MAX_ORACLE_VARS}"
            )
        self.num_vars = f.num_vars
        self._bits = _truth_table(f.num_vars)
        models = np.ones(1 << f.num_vars, dtype=bool)
        for c in f.clauses:
            models &= _clause_mask(self._bits, c.literals)
        self.models = models

    @property
    def satisfiable(self) -> bool:
        return bool(self.models.any())

    def implies(self, c) -> bool:
        lits = c.literals if isinstance(c, Clause) else tuple(c)
        if any(variable(l) > self.num_vars for l in lits):
            raise ValueError("clause mentions variables outside the formula")
        sat = _clause_mask(self._bits, lits)
        return not bool((self.models & ~sat).any())

    def equivalent(self, other: Formula) -> bool:
        return bool(np.array_equal(self.models, ConsequenceOracle(other).models))


def is_logical_consequence(f: Formula, c) -> bool:
    """True iff every model of ``f`` satisfies ``c`` (exhaustive, <= 24 variables)."""
    c = c if isinstance(c, Clause) else Clause.of(c)
    if c.tautology:
        return True
    return ConsequenceOracle(f).implies(c)
