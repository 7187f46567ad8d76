import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from satrtd.extension import record_learned_clauses
from satrtd.generators import random_ksat
from satrtd.harness import (CONFLICTS, TIME, Campaign, CampaignError, CensoringPolicy, RunRecord,
                            _observe, append_record, assign_censoring, observations,
                            observations_csv, paired_baseline, read_observations_csv,
                            read_runlog, records_csv, run_campaign, split_baseline, usable)
from satrtd.solver import ERROR, SAT, TIMEOUT, UNSAT


@pytest.fixture(scope="module")
def campaign():
    f = random_ksat(45, 192, 3, 2)
    pool, _ = record_learned_clauses(f)
    return Campaign(f, pool, p=0.05, n=12, censoring=CensoringPolicy(5, 60, 1, seed=3), seed=9,
                    instance_id="r45")


def test_censoring_policy_validation():
    for bad in (dict(offset=-1), dict(mean_excess=0), dict(granularity=20, mean_excess=10)):
        with pytest.raises(ValueError):
            CensoringPolicy(**bad)
    assert CensoringPolicy.paper_scale().offset == 5000
    assert CensoringPolicy.paper_scale().mean_excess == 12 * 3600


def test_censoring_distribution():
    pol = CensoringPolicy(offset=5, mean_excess=10, granularity=1, seed=1)
    b = np.array([assign_censoring(pol, j) for j in range(20000)])
    assert b.min() >= 6
    assert np.all(b == np.round(b))
    assert abs(b.mean() - 15) < 0.3
    assert assign_censoring(pol, 7) == assign_censoring(pol, 7)


@settings(max_examples=40)
@given(st.floats(0, 1e4), st.floats(1, 1e4), st.integers(0, 2**63), st.integers(0, 10**6))
def test_budget_exceeds_offset(offset, mean, seed, job):
    pol = CensoringPolicy(offset, mean, 1.0, seed)
    assert assign_censoring(pol, job) >= offset + 1


def test_observe_rule():
    assert _observe(CONFLICTS, SAT, 10, 0.1, 11) == (10.0, 0, SAT)
    assert _observe(CONFLICTS, UNSAT, 11, 0.1, 11) == (11.0, 1, TIMEOUT)
    assert _observe(CONFLICTS, TIMEOUT, 11, 0.1, 11) == (11.0, 1, TIMEOUT)
    assert _observe(TIME, SAT, 10, 2.5, 3.0) == (2.5, 0, SAT)
    obs = _observe(CONFLICTS, ERROR, 0, 0, 5)
    assert np.isnan(obs[0]) and obs[2] == ERROR


def test_campaign_records(campaign):
    recs = run_campaign(campaign)
    assert [r.job for r in recs] == list(range(12))
    for r in recs:
        assert r.observed <= r.budget
        if r.censored:
            assert r.status == TIMEOUT and r.observed == r.budget
        else:
            assert r.observed == r.conflicts < r.budget
    again = run_campaign(campaign)
    assert [r.key() for r in recs] == [r.key() for r in again]


def test_parallel_matches_serial(campaign):
    serial = run_campaign(campaign, workers=1)
    par = run_campaign(campaign, workers=2)
    assert [r.key() for r in serial] == [r.key() for r in par]


def test_runlog_resume_and_torn_tail(tmp_path, campaign):
    log = tmp_path / "run.jsonl"
    full = run_campaign(campaign, runlog=log)
    lines = log.read_text().splitlines()
    header = json.loads(lines[0])
    assert header["pool_id"] == campaign.pool.pool_id and header["n"] == 12
    # simulate a crash: keep 5 records plus half a line
    log.write_text("\n".join(lines[:6]) + "\n" + lines[6][:20])
    h, partial = read_runlog(log)
    assert len(partial) == 5
    resumed = run_campaign(campaign, runlog=log)
    assert [r.key() for r in resumed] == [r.key() for r in full]
    _, recs = read_runlog(log)
    assert sorted(r.job for r in recs) == list(range(12))


def test_runlog_rejects_foreign_campaign(tmp_path, campaign):
    log = tmp_path / "run.jsonl"
    run_campaign(campaign, runlog=log)
    other = Campaign(campaign.base, campaign.pool, p=0.02, n=3, seed=9)
    with pytest.raises(CampaignError):
        run_campaign(other, runlog=log)


def test_baseline_and_split(tmp_path, campaign):
    b = paired_baseline(campaign)
    assert b.job == -1 and b.censored == 0 and b.status in (SAT, UNSAT)
    log = tmp_path / "r.jsonl"
    run_campaign(campaign, runlog=log)
    append_record(log, b)
    _, recs = read_runlog(log)
    base, jobs = split_baseline(recs)
    assert base.key() == b.key() and len(jobs) == 12
    with pytest.raises(CampaignError):
        paired_baseline(campaign, safety_cap=1)


def test_crashed_job_becomes_error(monkeypatch, campaign):
    import satrtd.harness as h

    def boom(*a, **k):
        raise RuntimeError("boom")
    monkeypatch.setattr(h, "materialize", boom)
    rec = h.run_job(campaign, 0)
    assert rec.status == ERROR and np.isnan(rec.observed)
    assert usable([rec]) == []


def test_csv_helpers(tmp_path, campaign):
    recs = run_campaign(campaign)
    text = records_csv(recs)
    assert text.splitlines()[0].split(",") == list(RunRecord.DETERMINISTIC)
    assert "cpu_time" in records_csv(recs, deterministic_only=False)
    t, c = observations(recs)
    p = tmp_path / "obs.csv"
    p.write_text(observations_csv(t, c))
    t2, c2 = read_observations_csv(p)
    assert np.array_equal(t, t2) and np.array_equal(c, c2)


def test_campaign_validation(campaign):
    with pytest.raises(ValueError):
        Campaign(campaign.base, campaign.pool, n=0)
    with pytest.raises(ValueError):
        Campaign(campaign.base, campaign.pool, budget_unit="seconds")
    with pytest.raises(ValueError):
        run_campaign(campaign, workers=0)
