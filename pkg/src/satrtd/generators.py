"""Small instance families used for testing and the bundled demo."""
from __future__ import annotations

import itertools

import numpy as np

from .cnf import Clause, Formula


def random_ksat(num_vars: int, num_clauses: int, k: int = 3, seed: int = 0) -> Formula:
    """Uniform random k-SAT: k distinct variables per clause, random signs."""
    if k > num_vars:
        raise ValueError("clause width exceeds the number of variables")
    rng = np.random.default_rng(seed)
    clauses = []
    for _ in range(num_clauses):
        vs = rng.choice(num_vars, size=k, replace=False) + 1
        signs = rng.integers(0, 2, size=k) * 2 - 1
        clauses.append(Clause.of((vs * signs).tolist()))
    return Formula(num_vars, tuple(clauses))


def pigeonhole(pigeons: int, holes: int) -> Formula:
    """PHP(p, h): every pigeon in some hole, no hole shared. UNSAT iff p > h."""
    var = lambda i, j: i * holes + j + 1  # noqa: E731
    clauses = [Clause.of([var(i, j) for j in range(holes)]) for i in range(pigeons)]
    for j in range(holes):
        for a, b in itertools.combinations(range(pigeons), 2):
            clauses.append(Clause.of([-var(a, j), -var(b, j)]))
    return Formula(pigeons * holes, tuple(clauses))
