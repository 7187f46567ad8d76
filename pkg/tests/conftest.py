"""Shared fixtures and independent oracles for the test suite."""
from __future__ import annotations

import sys

import numpy as np
import pytest

sys.setrecursionlimit(10_000)

from satrtd.cnf import Clause, Formula  # noqa: E402

# x1, x2, x3, s, t, u, v, w, x, y
X1, X2, X3, S, T, U, V, W, X, Y = range(1, 11)
FIG1_CLAUSES = [
    [-X1, X2], [-X2, X3, S], [-X2, -T], [-S, T, U],
    [-V, W], [-W, -X], [X, -Y], [X3, -W, Y],
]


def fig1_formula() -> Formula:
    return Formula(10, tuple(Clause.of(c) for c in FIG1_CLAUSES))


def _simplify(clauses, lit):
    out = []
    for c in clauses:
        if lit in c:
            continue
        if -lit in c:
            c = c - {-lit}
            if not c:
                return None
        out.append(c)
    return out


def dpll(clauses, assignment=None):
    """Plain recursive DPLL with unit propagation; returns a model dict or None."""
    assignment = dict(assignment or {})
    clauses = [frozenset(c) for c in clauses]
    while True:
        unit = next((c for c in clauses if len(c) == 1), None)
        if unit is None:
            break
        (lit,) = unit
        assignment[abs(lit)] = lit > 0
        clauses = _simplify(clauses, lit)
        if clauses is None:
            return None
    if not clauses:
        return assignment
    counts = {}
    for c in clauses:
        for l in c:
            counts[l] = counts.get(l, 0) + (1 << max(0, 8 - len(c)))
    lit = max(counts, key=lambda l: (counts[l] + counts.get(-l, 0), l))
    for choice in (lit, -lit):
        reduced = _simplify(clauses, choice)
        if reduced is None:
            continue
        res = dpll(reduced, {**assignment, abs(choice): choice > 0})
        if res is not None:
            return res
    return None


def dpll_status(f: Formula) -> str:
    return "SAT" if dpll([c.literals for c in f.clauses if not c.tautology]) is not None else "UNSAT"


def brute_force_models(f: Formula):
    n = f.num_vars
    out = []
    for bits in range(1 << n):
        a = {v: bool(bits >> (v - 1) & 1) for v in range(1, n + 1)}
        if all(any(a[abs(l)] == (l > 0) for l in c.literals) for c in f.clauses):
            out.append(a)
    return out


@pytest.fixture
def fig1():
    return fig1_formula()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
