import gzip

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import FIG1_CLAUSES, W, X3, brute_force_models, fig1_formula
from satrtd.cnf import (BASE, EXTENSION, Clause, ConsequenceOracle, DimacsError, Formula,
                        is_logical_consequence, negate, parse_dimacs, read_dimacs, restrict,
                        satisfies, save_dimacs, variable, write_dimacs)


def test_literal_helpers():
    assert negate(3) == -3 and negate(-3) == 3
    assert variable(-7) == 7


def test_clause_normalization():
    c = Clause.of([1, 2, 1, -3])
    assert c.literals == (1, 2, -3) and not c.tautology
    assert Clause.of([1, -1]).tautology
    with pytest.raises(ValueError):
        Clause.of([1, 0])


def test_parse_fig1():
    text = "c fig1\np cnf 10 8\n" + "".join(" ".join(map(str, c)) + " 0\n" for c in FIG1_CLAUSES)
    f = parse_dimacs(text)
    assert len(f.clauses) == 8 and all(len(c) <= 3 for c in f.clauses)
    assert f.num_vars == 10
    assert all(o == BASE for o in f.origins)


def test_parse_variants():
    assert parse_dimacs(b"p cnf 3 2\n1 -2\n 3 0 2 0\n").literal_lists() == [[1, -2, 3], [2]]
    assert parse_dimacs("p cnf 2 1\n1 2 0\n%\n0\n").literal_lists() == [[1, 2]]
    assert parse_dimacs("p cnf 2 1\n1 2\n").literal_lists() == [[1, 2]]
    assert parse_dimacs("p cnf 0 0\n").clauses == ()


@pytest.mark.parametrize("text,lineno", [
    ("p cnf 2 1\n1 3 0\n", 2),
    ("p cnf 2\n1 0\n", 1),
    ("1 0\np cnf 1 1\n", 1),
    ("p cnf 1 1\np cnf 1 1\n1 0\n", 2),
    ("p cnf 2 1\n1 x 0\n", 2),
])
def test_parse_errors_carry_line_numbers(text, lineno):
    with pytest.raises(DimacsError) as exc:
        parse_dimacs(text)
    assert exc.value.line == lineno


def test_parse_count_mismatch_and_missing_header():
    with pytest.raises(DimacsError):
        parse_dimacs("p cnf 2 2\n1 0\n")
    with pytest.raises(DimacsError):
        parse_dimacs("c nothing\n")


def test_write_dimacs_examples():
    assert write_dimacs(Formula(1, (Clause.of([1]),))) == b"p cnf 1 1\n1 0\n"
    assert write_dimacs(Formula(4)) == b"p cnf 4 0\n"


def test_round_trip_fig1_and_gzip(tmp_path):
    f = fig1_formula()
    assert parse_dimacs(write_dimacs(f)).clauses == f.clauses
    p = tmp_path / "f.cnf.gz"
    save_dimacs(f, p)
    assert gzip.open(p).read() == write_dimacs(f)
    assert read_dimacs(p).clauses == f.clauses
    first = p.read_bytes()
    save_dimacs(f, p)
    assert p.read_bytes() == first


clause_st = st.lists(st.integers(1, 8).flatmap(lambda v: st.sampled_from([v, -v])),
                     min_size=0, max_size=5).map(Clause.of)
formula_st = st.lists(clause_st, max_size=12).map(lambda cs: Formula(8, tuple(cs)))


@given(formula_st)
def test_round_trip_property(f):
    g = parse_dimacs(write_dimacs(f))
    assert g.clauses == f.clauses and g.num_vars == f.num_vars


@given(formula_st, st.dictionaries(st.integers(1, 8), st.integers(0, 1)))
def test_restrict_monotone(f, a):
    r = restrict(f, a)
    assert len(r.clauses) <= len(f.clauses)
    # every surviving clause comes from a clause of f, minus false literals
    for c in r.clauses:
        assert all(variable(l) not in a for l in c.literals)


def test_restrict_examples():
    f = Formula(2, (Clause.of([-1, 2]),))
    assert restrict(f, {1: 1}).literal_lists() == [[2]]
    assert restrict(Formula(2, (Clause.of([1, 2]),)), {1: 1}).clauses == ()
    assert restrict(Formula(1, (Clause.of([1]),)), {1: 0}).literal_lists() == [[]]


def test_extend_tags_origin():
    f = fig1_formula().extend([Clause.of([X3, -W])])
    assert f.origins[-1] == EXTENSION and len(f.clauses) == 9
    with pytest.raises(ValueError):
        Formula(2, (Clause.of([3]),))


def test_logical_consequence_examples(fig1):
    assert is_logical_consequence(fig1, [X3, -W])
    assert is_logical_consequence(fig1, [4, -4])
    assert not is_logical_consequence(Formula(1, (Clause.of([1]),)), [-1])
    with pytest.raises(ValueError):
        ConsequenceOracle(Formula(25))


@settings(max_examples=60)
@given(st.lists(st.lists(st.integers(1, 6).flatmap(lambda v: st.sampled_from([v, -v])),
                         min_size=1, max_size=3), max_size=10),
       st.lists(st.integers(1, 6).flatmap(lambda v: st.sampled_from([v, -v])), min_size=1, max_size=3))
def test_oracle_matches_brute_force(clauses, cand):
    f = Formula(6, tuple(Clause.of(c) for c in clauses))
    models = brute_force_models(f)
    expected = all(satisfies({v: int(b) for v, b in m.items()}, [cand]) for m in models)
    assert ConsequenceOracle(f).implies(cand) == expected
    assert ConsequenceOracle(f).satisfiable == bool(models)
