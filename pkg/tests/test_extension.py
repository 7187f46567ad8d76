import io
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import fig1_formula
from satrtd.cnf import EXTENSION, Clause, ConsequenceOracle
from satrtd.extension import (ClausePool, ExtensionSpec, PoolFormatError, counter_uniform,
                              extension_stats, format_extension, format_pool, materialize,
                              nearest_rank, parse_extension, parse_pool, read_extension,
                              read_pool, record_learned_clauses, sample_extension,
                              write_extension, write_pool)
from satrtd.generators import random_ksat
from satrtd.solver import LearnedClauseRecord


def make_pool(n=50):
    recs = [LearnedClauseRecord(Clause.of([i % 7 + 1, -(i % 5 + 2)]), 2 + i % 4, i // 10, i + 1)
            for i in range(n)]
    return ClausePool(tuple(recs), "toy", 3)


@pytest.fixture(scope="module")
def recorded():
    f = random_ksat(18, 77, 3, 11)
    pool, out = record_learned_clauses(f, source_id="r18")
    return f, pool, out


def test_recorded_pool_is_sound_and_ordered(recorded):
    f, pool, out = recorded
    assert len(pool) == out.stats.learned_count > 0
    oracle = ConsequenceOracle(f)
    assert all(oracle.implies(r.clause) for r in pool.records)
    conf = [r.conflict_number for r in pool.records]
    assert conf == sorted(conf)


def test_pool_file_round_trip(tmp_path, recorded):
    _, pool, _ = recorded
    for name in ("pool.txt", "pool.txt.gz"):
        write_pool(pool, tmp_path / name)
        back = read_pool(tmp_path / name)
        assert back.records == pool.records and back.pool_id == pool.pool_id
        assert back.source_id == "r18"


def test_streaming_sink_matches_format(tmp_path):
    f = random_ksat(18, 77, 3, 5)
    buf = io.BytesIO()
    pool, _ = record_learned_clauses(f, sink=buf, source_id="s")
    assert buf.getvalue() == format_pool(pool)
    pool2, _ = record_learned_clauses(f, sink=tmp_path / "p.gz", source_id="s")
    assert read_pool(tmp_path / "p.gz").records == pool.records == pool2.records


def test_pool_rejects_bad_input():
    with pytest.raises(PoolFormatError):
        parse_pool("p cnf 1 1\n")
    with pytest.raises(PoolFormatError):
        parse_pool("c pool v1 seed=0\n1 2 3\n")
    r = LearnedClauseRecord(Clause.of([1]), 1, 5, 1)
    with pytest.raises(ValueError):
        ClausePool((r, LearnedClauseRecord(Clause.of([2]), 1, 4, 2)))


def test_sampling_is_deterministic_and_bernoulli():
    pool = make_pool(20000)
    a = sample_extension(pool, 0.01, 42)
    b = sample_extension(pool, 0.01, 42)
    assert a == b and a.pool_id == pool.pool_id
    assert abs(len(a) - 200) < 4 * np.sqrt(200 * 0.99)
    assert sample_extension(pool, 0.01, 43) != a
    assert len(sample_extension(pool, 1.0, 0)) == len(pool)


def test_counter_uniform_prefix_stable():
    u = counter_uniform(9, np.arange(100))
    assert np.array_equal(u[:10], counter_uniform(9, np.arange(10)))
    assert np.all((u >= 0) & (u < 1))


@pytest.mark.parametrize("p", [0.0, -0.1, 1.5])
def test_sampling_probability_validation(p):
    with pytest.raises(ValueError):
        sample_extension(make_pool(), p, 0)


def test_empty_pool_warns():
    with pytest.warns(RuntimeWarning):
        spec = sample_extension(ClausePool(()), 0.5, 0)
    assert spec.empty_pool and len(spec) == 0


def test_materialize():
    base = fig1_formula()
    pool = make_pool(30)
    spec = sample_extension(pool, 0.3, 1)
    f = materialize(base, pool, spec)
    assert f.clauses[:len(base.clauses)] == base.clauses
    assert f.clauses[len(base.clauses):] == tuple(pool.records[i].clause for i in spec.indices)
    assert set(f.origins[len(base.clauses):]) <= {EXTENSION}
    with pytest.raises(IndexError):
        materialize(base, pool, ExtensionSpec(pool.pool_id, 0.3, 1, (99,)))


def test_extension_stats():
    base = fig1_formula()
    pool = make_pool(30)
    spec = ExtensionSpec(pool.pool_id, 0.5, 0, (0, 1, 2, 3))
    s = extension_stats(base, pool, spec)
    assert s.size == 4 and s.relative_increase == 4 / 8
    assert s.lbd_quantiles == (2, 2, 3, 4, 5)
    assert s.mean_width == 2.0
    empty = extension_stats(base, pool, ExtensionSpec(pool.pool_id, 0.5, 0))
    assert empty.lbd_quantiles is None and empty.as_dict()["lbd_median"] is None


def test_nearest_rank():
    vals = [15, 20, 35, 40, 50]
    assert nearest_rank(vals, 0.0) == 15
    assert nearest_rank(vals, 0.3) == 20
    assert nearest_rank(vals, 0.4) == 20
    assert nearest_rank(vals, 0.5) == 35
    assert nearest_rank(vals, 1.0) == 50


def test_extension_file_round_trip(tmp_path):
    pool = make_pool(300)
    spec = sample_extension(pool, 0.1, 77)
    write_extension(spec, tmp_path / "e.txt")
    assert read_extension(tmp_path / "e.txt") == spec
    assert parse_extension(format_extension(spec)) == spec
    with pytest.raises(PoolFormatError):
        parse_extension("c ext v1 p=0.1 seed=1\n")


@settings(max_examples=50)
@given(st.integers(0, 2**64 - 1), st.floats(0.001, 1.0))
def test_reconstruction_property(seed, p):
    pool = make_pool(200)
    spec = sample_extension(pool, p, seed)
    assert parse_extension(format_extension(spec)) == spec
    u = counter_uniform(seed, np.arange(len(pool)))
    assert spec.indices == tuple(np.flatnonzero(u < p).tolist())
