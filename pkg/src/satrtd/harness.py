"""Censored solving campaigns over sampled extensions of one base instance."""
from __future__ import annotations

import csv
import io
import json
import logging
import os
import socket
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .cnf import Formula
from .extension import ClausePool, _splitmix64, materialize, sample_extension
from .solver import ERROR, SAT, TIMEOUT, UNSAT, Solver, SolverConfig

log = logging.getLogger(__name__)

TIME = "time"
CONFLICTS = "conflicts"
BUDGET_UNITS = (TIME, CONFLICTS)

RUNLOG_MAGIC = "satrtd-runlog-v1"
SAFETY_CAP = 10_000_000


class CampaignError(RuntimeError):
    pass


@dataclass(frozen=True)
class CensoringPolicy:
    """Censoring budget ``offset + granularity * K`` with ``K ~ Geometric``.

    ``K`` counts trials up to the first success, success probability
    ``granularity / mean_excess``, so the expected budget is
    ``offset + mean_excess``.
    """

    offset: float = 5.0
    mean_excess: float = 10.0
    granularity: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.offset < 0:
            raise ValueError("censoring offset must be >= 0")
        if self.mean_excess <= 0 or self.granularity <= 0:
            raise ValueError("mean_excess and granularity must be > 0")
        if self.granularity > self.mean_excess:
            raise ValueError("granularity cannot exceed mean_excess")

    @classmethod
    def paper_scale(cls, seed=0) -> "CensoringPolicy":
        """5000 s cut-off plus a geometric excess with mean 12 h, in seconds."""
        return cls(offset=5000.0, mean_excess=12 * 3600.0, granularity=1.0, seed=seed)

    @classmethod
    def desk_conflicts(cls, seed=0) -> "CensoringPolicy":
        return cls(offset=10_000, mean_excess=20_000, granularity=1, seed=seed)


def assign_censoring(policy: CensoringPolicy, job_index: int) -> float:
    rng = np.random.default_rng([policy.seed & 0xFFFFFFFF, policy.seed >> 32, job_index])
    k = rng.geometric(policy.granularity / policy.mean_excess)
    return policy.offset + policy.granularity * float(k)


def job_seed(campaign_seed: int, job_index: int) -> int:
    x = np.array([(campaign_seed * 0x100000001B3 + job_index) & 0xFFFFFFFFFFFFFFFF],
                 dtype=np.uint64)
    return int(_splitmix64(x)[0])


@dataclass
class RunRecord:
    instance_id: str
    job: int
    extension_seed: int
    extension_size: int
    budget: float
    observed: float
    censored: int
    status: str
    conflicts: int
    propagations: int
    decisions: int
    cpu_time: float = 0.0
    host: str = ""

    DETERMINISTIC = ("instance_id", "job", "extension_seed", "extension_size", "budget",
                     "observed", "censored", "status", "conflicts", "propagations", "decisions")

    def key(self) -> tuple:
        """Fields that are reproducible independent of host and clock."""
        return tuple(getattr(self, f) for f in self.DETERMINISTIC)


@dataclass
class Campaign:
    base: Formula
    pool: ClausePool
    p: float = 0.01
    n: int = 200
    config: SolverConfig = field(default_factory=SolverConfig)
    censoring: CensoringPolicy = field(default_factory=CensoringPolicy.desk_conflicts)
    budget_unit: str = CONFLICTS
    seed: int = 0
    instance_id: str = "instance"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("a campaign needs N >= 1")
        if self.budget_unit not in BUDGET_UNITS:
            raise ValueError(f"budget unit must be one of {BUDGET_UNITS}")

    def header(self) -> dict:
        cfg = asdict(self.config)
        cfg["deletion"] = self.config.deletion.value
        return {
            "format": RUNLOG_MAGIC,
            "instance_id": self.instance_id,
            "pool_id": self.pool.pool_id,
            "pool_size": len(self.pool),
            "p": self.p,
            "n": self.n,
            "seed": self.seed,
            "budget_unit": self.budget_unit,
            "censoring": asdict(self.censoring),
            "solver": cfg,
        }


def _observe(unit, status, conflicts, cpu_time, budget):
    """Apply the censoring rule: censored iff the run did not finish before its budget."""
    if status == ERROR:
        return float("nan"), 0, status
    t = conflicts if unit == CONFLICTS else cpu_time
    if status in (SAT, UNSAT) and t < budget:
        return float(t), 0, status
    return float(budget), 1, TIMEOUT


def run_job(c: Campaign, job: int, host: str = "") -> RunRecord:
    seed = job_seed(c.seed, job)
    budget = assign_censoring(c.censoring, job)
    try:
        spec = sample_extension(c.pool, c.p, seed)
        f = materialize(c.base, c.pool, spec)
        solver = Solver(f, c.config)
        if c.budget_unit == CONFLICTS:
            out = solver.solve(max_conflicts=int(budget))
        else:
            out = solver.solve(time_limit=budget)
        st = out.stats
        observed, cen, status = _observe(c.budget_unit, out.status, st.conflicts, st.cpu_time, budget)
        return RunRecord(c.instance_id, job, seed, len(spec), budget, observed, cen, status,
                         st.conflicts, st.propagations, st.decisions, st.cpu_time, host)
    except Exception:  # a crashing job must not sink the campaign
        log.exception("job %d crashed", job)
        return RunRecord(c.instance_id, job, seed, 0, budget, float("nan"), 0, ERROR, 0, 0, 0, 0.0, host)


def paired_baseline(c: Campaign, safety_cap: int = SAFETY_CAP) -> RunRecord:
    """Solve the unextended base instance with the campaign's solver config, uncensored."""
    out = Solver(c.base, c.config).solve(max_conflicts=safety_cap)
    st = out.stats
    if out.status == TIMEOUT:
        raise CampaignError(
            f"baseline for {c.instance_id} exceeded the safety cap of {safety_cap} conflicts")
    observed = st.conflicts if c.budget_unit == CONFLICTS else st.cpu_time
    return RunRecord(c.instance_id, -1, 0, 0, float("inf"), float(observed), 0, out.status,
                     st.conflicts, st.propagations, st.decisions, st.cpu_time, socket.gethostname())


# -- run log ----------------------------------------------------------------------

def _record_to_json(r: RunRecord) -> str:
    d = asdict(r)
    for k in ("observed", "budget"):
        if isinstance(d[k], float) and not np.isfinite(d[k]):
            d[k] = None if np.isnan(d[k]) else "inf"
    return json.dumps(d, sort_keys=True)


def _record_from_json(line: str) -> RunRecord:
    d = json.loads(line)
    for k in ("observed", "budget"):
        if d[k] is None:
            d[k] = float("nan")
        elif d[k] == "inf":
            d[k] = float("inf")
    return RunRecord(**d)


def read_runlog(path):
    """Return ``(header, records)``; a torn final line from a crash is ignored."""
    header, records = None, []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError:
                log.warning("ignoring torn run-log line in %s", path)
                continue
            if header is None:
                if obj.get("format") != RUNLOG_MAGIC:
                    raise CampaignError(f"{path} is not a run log")
                header = obj
                continue
            records.append(_record_from_json(line))
    if header is None:
        raise CampaignError(f"{path} is empty")
    return header, records


_WORKER_CAMPAIGN = None


def _init_worker(c):
    global _WORKER_CAMPAIGN
    _WORKER_CAMPAIGN = c


def _worker_job(job):
    return run_job(_WORKER_CAMPAIGN, job, socket.gethostname())


def run_campaign(c: Campaign, workers: int = 1, runlog=None) -> list[RunRecord]:
    """Run all N jobs and return their records ordered by job index.

    With ``runlog`` set, records are appended as jobs finish and jobs already
    present in an existing log are not rerun.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    done = {}
    fh = None
    if runlog is not None:
        if os.path.exists(runlog) and os.path.getsize(runlog) > 0:
            header, old = read_runlog(runlog)
            if header.get("pool_id") != c.pool.pool_id or header.get("seed") != c.seed \
                    or header.get("p") != c.p:
                raise CampaignError(f"{runlog} belongs to a different campaign")
            done = {r.job: r for r in old if 0 <= r.job < c.n}
            _repair_tail(runlog)
            fh = open(runlog, "a", encoding="utf-8")
        else:
            fh = open(runlog, "w", encoding="utf-8")
            fh.write(json.dumps(c.header(), sort_keys=True) + "\n")
            fh.flush()
    todo = [j for j in range(c.n) if j not in done]
    host = socket.gethostname()

    def emit(rec):
        done[rec.job] = rec
        if fh is not None:
            fh.write(_record_to_json(rec) + "\n")
            fh.flush()

    try:
        if workers == 1 or len(todo) <= 1:
            for j in todo:
                emit(run_job(c, j, host))
        else:
            with ProcessPoolExecutor(workers, initializer=_init_worker, initargs=(c,)) as ex:
                futures = [ex.submit(_worker_job, j) for j in todo]
                for fut in as_completed(futures):
                    emit(fut.result())
    finally:
        if fh is not None:
            fh.close()
    return [done[j] for j in range(c.n)]


def append_record(runlog, rec: RunRecord) -> None:
    _repair_tail(runlog)
    with open(runlog, "a", encoding="utf-8") as fh:
        fh.write(_record_to_json(rec) + "\n")


def split_baseline(records):
    """Separate the paired baseline (job -1) from the campaign jobs."""
    base = [r for r in records if r.job < 0]
    jobs = sorted((r for r in records if r.job >= 0), key=lambda r: r.job)
    return (base[-1] if base else None), jobs


def _repair_tail(path):
    with open(path, "rb+") as fh:
        data = fh.read()
        if data and not data.endswith(b"\n"):
            fh.truncate(data.rfind(b"\n") + 1)


# -- CSV export ---------------------------------------------------------------------

def usable(records):
    """Drop crashed jobs; they stay in the log but not in the statistics."""
    return [r for r in records if r.status != ERROR]


def observations(records, measure: str = "observed"):
    """``(values, censored)`` arrays for a measure (``observed``, ``conflicts``, ...)."""
    recs = usable(records)
    vals = np.array([float(getattr(r, measure)) for r in recs])
    cen = np.array([r.censored for r in recs], dtype=int)
    return vals, cen


def records_csv(records, deterministic_only: bool = True) -> str:
    cols = list(RunRecord.DETERMINISTIC)
    if not deterministic_only:
        cols += ["cpu_time", "host"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in records:
        w.writerow([getattr(r, k) for k in cols])
    return buf.getvalue()


def observations_csv(values, censored) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["observed", "censored"])
    for v, c in zip(values, censored):
        w.writerow([repr(float(v)), int(c)])
    return buf.getvalue()


def read_observations_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return (np.array([float(r["observed"]) for r in rows]),
            np.array([int(r["censored"]) for r in rows], dtype=int))
