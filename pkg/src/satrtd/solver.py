"""Conflict-driven clause learning solver.

Two-watched-literal propagation, first-UIP learning with optional recursive
minimization, VSIDS with phase saving, Luby or LBD-average restarts, and the
``none`` / ``glucose`` / ``chanseok-oh`` learned-clause deletion policies.

Internally a literal is coded as ``2 * (var - 1) + negative``; the public
methods accept and return DIMACS integers.
"""
from __future__ import annotations

import enum
import heapq
import random
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from .cnf import BASE, EXTENSION, LEARNED, Clause, Formula, satisfies

SAT = "SAT"
UNSAT = "UNSAT"
TIMEOUT = "TIMEOUT"
ERROR = "ERROR"

_TRUE, _FALSE, _UNDEF = 1, -1, 0


class DeletionPolicy(str, enum.Enum):
    NONE = "none"
    GLUCOSE_LBD = "glucose"
    CHANSEOK_OH = "chanseok-oh"

    @classmethod
    def parse(cls, value) -> "DeletionPolicy":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("_", "-"))
        except ValueError:
            raise ValueError(f"unknown deletion policy {value!r}") from None


@dataclass(frozen=True)
class SolverConfig:
    var_decay: float = 0.95
    clause_decay: float = 0.999
    restart: str = "luby"  # luby | glucose | none
    luby_base: int = 100
    deletion: DeletionPolicy = DeletionPolicy.GLUCOSE_LBD
    minimize: bool = True
    phase_saving: bool = True
    random_freq: float = 0.0
    seed: int = 0
    first_reduce: int = 2000
    reduce_inc: int = 300
    core_lbd: int = 3
    tier2_lbd: int = 6

    def __post_init__(self):
        object.__setattr__(self, "deletion", DeletionPolicy.parse(self.deletion))
        if self.restart not in ("luby", "glucose", "none"):
            raise ValueError(f"unknown restart strategy {self.restart!r}")
        if not 0.0 < self.var_decay < 1.0:
            raise ValueError("var_decay must lie in (0, 1)")


@dataclass
class SolveStats:
    conflicts: int = 0
    propagations: int = 0
    decisions: int = 0
    restarts: int = 0
    learned_count: int = 0
    deleted_count: int = 0
    cpu_time: float = 0.0

    def counters(self) -> dict:
        return {
            "conflicts": self.conflicts,
            "propagations": self.propagations,
            "decisions": self.decisions,
            "restarts": self.restarts,
            "learned_count": self.learned_count,
            "deleted_count": self.deleted_count,
        }


@dataclass
class SolveOutcome:
    status: str
    model: Optional[dict] = None
    stats: SolveStats = field(default_factory=SolveStats)

    @property
    def satisfiable(self):
        return {SAT: True, UNSAT: False}.get(self.status)


@dataclass(frozen=True)
class LearnedClauseRecord:
    clause: Clause
    lbd: int
    batch_index: int
    conflict_number: int

    @property
    def size(self) -> int:
        return len(self.clause)


class _Clause:
    __slots__ = ("lits", "learnt", "origin", "lbd", "activity", "tier", "used", "removed")

    def __init__(self, lits, learnt=False, origin=BASE, lbd=0):
        self.lits = lits
        self.learnt = learnt
        self.origin = origin
        self.lbd = lbd
        self.activity = 0.0
        self.tier = None
        self.used = 0
        self.removed = False

    def dimacs(self):
        return [_to_dimacs(l) for l in self.lits]


def _to_code(lit: int) -> int:
    return 2 * (lit - 1) if lit > 0 else 2 * (-lit - 1) + 1


def _to_dimacs(code: int) -> int:
    v = (code >> 1) + 1
    return -v if code & 1 else v


def luby(i: int) -> int:
    """i-th element (0-based) of the Luby sequence 1 1 2 1 1 2 4 ..."""
    size, seq = 1, 0
    while size < i + 1:
        seq += 1
        size = 2 * size + 1
    while size - 1 != i:
        size = (size - 1) >> 1
        seq -= 1
        i = i % size
    return 1 << seq


class Solver:
    """A single-threaded CDCL solver instance over one formula.

    Parameters
    ----------
    formula : Formula
        Base clauses (and any extension clauses) to solve. Clauses tagged
        ``learned`` are loaded as deletable learned clauses, everything else
        is permanent.
    config : SolverConfig, optional
    on_learn : callable, optional
        Called with a :class:`LearnedClauseRecord` for every clause learned
        from a conflict, in learning order.
    """

    def __init__(self, formula: Formula, config: SolverConfig = None,
                 on_learn: Callable[[LearnedClauseRecord], None] = None):
        self.config = config or SolverConfig()
        self.on_learn = on_learn
        self.num_vars = n = formula.num_vars
        self.stats = SolveStats()

        self.vals = [_UNDEF] * (2 * n)
        self.level = [0] * n
        self.reason = [None] * n
        self.trail = []
        self.trail_lim = []
        self.qhead = 0
        self.watches = [[] for _ in range(2 * n)]
        self.clauses = []
        self.learnts = []

        self.activity = [0.0] * n
        self.var_inc = 1.0
        self.cla_inc = 1.0
        self.polarity = [True] * n  # True = negative phase
        self.heap = [(0.0, v) for v in range(n)]
        heapq.heapify(self.heap)
        self.seen = bytearray(n)
        self.rng = random.Random(self.config.seed)

        self.ok = True
        self._conflict = None
        self.num_reductions = 0
        self._lbd_stamp = [0] * (n + 1)
        self._lbd_counter = 0
        self._lbd_fast = deque(maxlen=50)
        self._lbd_sum = 0
        self._lbd_count = 0

        for c, origin in zip(formula.clauses, formula.origins):
            if c.tautology:
                continue
            lits = [_to_code(l) for l in c.literals]
            if origin == LEARNED:
                self._add_input_learnt(lits)
            else:
                self._add_problem(lits, origin)

    # -- clause database -------------------------------------------------------

    def _add_problem(self, lits, origin=BASE):
        if not self.ok:
            return
        if self.trail_lim:
            raise RuntimeError("problem clauses can only be added at decision level 0")
        vals = self.vals
        if any(vals[l] == _TRUE and self.level[l >> 1] == 0 for l in lits):
            # permanently satisfied; still keep it for model checking via _problem_lits
            self.clauses.append(_Clause(list(lits), origin=origin))
            self.clauses[-1].removed = True
            return
        live = [l for l in lits if vals[l] != _FALSE]
        if not live:
            self.ok = False
            return
        if len(live) == 1:
            self._enqueue(live[0], None)
            if self.propagate_codes() is not None:
                self.ok = False
            c = _Clause(list(lits), origin=origin)
            c.removed = True
            self.clauses.append(c)
            return
        c = _Clause(live, origin=origin)
        self.clauses.append(c)
        self._watch(c)

    def _add_input_learnt(self, lits):
        c = _Clause(list(lits), learnt=True, origin=LEARNED, lbd=len(lits))
        if len(lits) < 2:
            self._add_problem(lits, LEARNED)
            return
        self.learnts.append(c)
        self._assign_tier(c)
        self._watch(c)

    def _watch(self, c):
        self.watches[c.lits[0]].append(c)
        self.watches[c.lits[1]].append(c)

    def add_clause(self, lits, origin=EXTENSION):
        """Add a permanent clause (DIMACS literals) at decision level 0."""
        c = Clause.of(lits)
        if c.tautology:
            return
        self._add_problem([_to_code(l) for l in c.literals], origin)

    # -- assignment --------------------------------------------------------------

    @property
    def decision_level(self) -> int:
        return len(self.trail_lim)

    def _enqueue(self, code, reason):
        v = code >> 1
        self.vals[code] = _TRUE
        self.vals[code ^ 1] = _FALSE
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason
        self.trail.append(code)

    def value(self, lit: int):
        """1, 0 or None for a DIMACS literal under the current trail."""
        val = self.vals[_to_code(lit)]
        return None if val == _UNDEF else int(val == _TRUE)

    def level_of(self, var: int) -> int:
        return self.level[var - 1]

    def trail_literals(self):
        """Current trail as (DIMACS literal, level, is_decision) triples."""
        out = []
        for code in self.trail:
            v = code >> 1
            out.append((_to_dimacs(code), self.level[v], self.reason[v] is None))
        return out

    def decide(self, lit: int) -> None:
        """Open a new decision level and assign ``lit`` true."""
        code = _to_code(lit)
        if self.vals[code] != _UNDEF:
            raise ValueError(f"literal {lit} is already assigned")
        self.trail_lim.append(len(self.trail))
        self.stats.decisions += 1
        self._enqueue(code, None)

    # -- propagation -------------------------------------------------------------

    def propagate_codes(self):
        vals = self.vals
        watches = self.watches
        trail = self.trail
        level = self.level
        reason = self.reason
        dl = len(self.trail_lim)
        nprops = 0
        confl = None
        while self.qhead < len(trail):
            false_lit = trail[self.qhead] ^ 1
            self.qhead += 1
            ws = watches[false_lit]
            i = j = 0
            n = len(ws)
            while i < n:
                c = ws[i]
                i += 1
                lits = c.lits
                if lits[0] == false_lit:
                    lits[0] = lits[1]
                    lits[1] = false_lit
                first = lits[0]
                if vals[first] == _TRUE:
                    ws[j] = c
                    j += 1
                    continue
                for k in range(2, len(lits)):
                    lk = lits[k]
                    if vals[lk] != _FALSE:
                        lits[1] = lk
                        lits[k] = false_lit
                        watches[lk].append(c)
                        break
                else:
                    ws[j] = c
                    j += 1
                    if vals[first] == _FALSE:
                        confl = c
                        while i < n:
                            ws[j] = ws[i]
                            j += 1
                            i += 1
                    else:
                        v = first >> 1
                        vals[first] = _TRUE
                        vals[first ^ 1] = _FALSE
                        level[v] = dl
                        reason[v] = c
                        trail.append(first)
                        nprops += 1
            del ws[j:]
            if confl is not None:
                self.qhead = len(trail)
                break
        self.stats.propagations += nprops
        self._conflict = confl
        return confl

    def propagate(self):
        """Run unit propagation; return the falsified clause (DIMACS) or None."""
        confl = self.propagate_codes()
        return None if confl is None else confl.dimacs()

    # -- VSIDS -------------------------------------------------------------------

    def _bump_var(self, v):
        act = self.activity[v] + self.var_inc
        self.activity[v] = act
        if act > 1e100:
            self.activity = [a * 1e-100 for a in self.activity]
            self.var_inc *= 1e-100
            self._rebuild_heap()
        elif self.vals[2 * v] == _UNDEF:
            heapq.heappush(self.heap, (-act, v))

    def _rebuild_heap(self):
        act = self.activity
        vals = self.vals
        self.heap = [(-act[v], v) for v in range(self.num_vars) if vals[2 * v] == _UNDEF]
        heapq.heapify(self.heap)

    def _bump_clause(self, c):
        c.activity += self.cla_inc
        if c.activity > 1e20:
            for d in self.learnts:
                d.activity *= 1e-20
            self.cla_inc *= 1e-20

    def _pick_branch(self):
        vals = self.vals
        if self.config.random_freq > 0 and self.rng.random() < self.config.random_freq:
            free = [v for v in range(self.num_vars) if vals[2 * v] == _UNDEF]
            if free:
                v = self.rng.choice(free)
                return 2 * v + (1 if self.polarity[v] else 0)
        heap = self.heap
        act = self.activity
        while heap:
            neg_act, v = heapq.heappop(heap)
            if vals[2 * v] != _UNDEF or -neg_act != act[v]:
                continue
            return 2 * v + (1 if self.polarity[v] else 0)
        return None

    # -- conflict analysis -----------------------------------------------------------

    def _analyze(self, confl):
        seen = self.seen
        level = self.level
        trail = self.trail
        reason = self.reason
        dl = len(self.trail_lim)
        learnt = [0]
        path = 0
        p = None
        idx = len(trail) - 1
        c = confl
        while True:
            if c.learnt:
                self._bump_clause(c)
                self._refresh_lbd(c)
            for q in (c.lits if p is None else c.lits[1:]):
                v = q >> 1
                if not seen[v] and level[v] > 0:
                    self._bump_var(v)
                    seen[v] = 1
                    if level[v] >= dl:
                        path += 1
                    else:
                        learnt.append(q)
            while not seen[trail[idx] >> 1]:
                idx -= 1
            p = trail[idx]
            idx -= 1
            c = reason[p >> 1]
            seen[p >> 1] = 0
            path -= 1
            if path <= 0:
                break
        learnt[0] = p ^ 1

        if self.config.minimize and len(learnt) > 2:
            abstract = 0
            for q in learnt[1:]:
                abstract |= 1 << (level[q >> 1] & 63)
            to_clear = list(learnt)
            kept = [learnt[0]]
            for q in learnt[1:]:
                if reason[q >> 1] is None or not self._redundant(q, abstract, to_clear):
                    kept.append(q)
            for q in to_clear:
                seen[q >> 1] = 0
            learnt = kept
        else:
            for q in learnt:
                seen[q >> 1] = 0

        if len(learnt) == 1:
            bt = 0
        else:
            best = 1
            for i in range(2, len(learnt)):
                if level[learnt[i] >> 1] > level[learnt[best] >> 1]:
                    best = i
            learnt[1], learnt[best] = learnt[best], learnt[1]
            bt = level[learnt[1] >> 1]
        return learnt, bt, self._lbd(learnt)

    def _redundant(self, p, abstract, to_clear):
        # MiniSat's litRedundant: p is implied by other literals already in the clause
        seen = self.seen
        level = self.level
        reason = self.reason
        stack = [p]
        top = len(to_clear)
        while stack:
            c = reason[stack.pop() >> 1]
            for q in c.lits[1:]:
                v = q >> 1
                if not seen[v] and level[v] > 0:
                    if reason[v] is not None and (1 << (level[v] & 63)) & abstract:
                        seen[v] = 1
                        stack.append(q)
                        to_clear.append(q)
                    else:
                        for r in to_clear[top:]:
                            seen[r >> 1] = 0
                        del to_clear[top:]
                        return False
        return True

    def _lbd(self, codes):
        self._lbd_counter += 1
        stamp = self._lbd_counter
        marks = self._lbd_stamp
        level = self.level
        n = 0
        for q in codes:
            lv = level[q >> 1]
            if marks[lv] != stamp:
                marks[lv] = stamp
                n += 1
        return n

    def _refresh_lbd(self, c):
        c.used = self.num_reductions + 1
        if c.lbd > 2:
            lbd = self._lbd(c.lits)
            if lbd + 1 < c.lbd:
                c.lbd = lbd
                self._assign_tier(c)

    def analyze(self, conflict=None):
        """First-UIP analysis of a conflict (DIMACS clause, as from :meth:`propagate`).

        Returns ``(learned clause, backjump level, lbd)``; the asserting
        literal comes first. Raises ``ValueError`` at decision level 0, where
        a conflict means the formula is unsatisfiable.
        """
        if self.decision_level == 0:
            raise ValueError("conflict at decision level 0: formula is unsatisfiable")
        confl = self._conflict
        if conflict is not None and (confl is None or sorted(confl.dimacs()) != sorted(conflict)):
            confl = self._find_clause(conflict)
        if confl is None:
            raise ValueError("no conflict to analyze")
        learnt, bt, lbd = self._analyze(confl)
        return [_to_dimacs(q) for q in learnt], bt, lbd

    def _find_clause(self, lits):
        target = sorted(_to_code(l) for l in lits)
        for c in self.clauses + self.learnts:
            if not c.removed and sorted(c.lits) == target:
                return c
        raise ValueError(f"clause {lits} is not in the database")

    def compute_lbd(self, lits) -> int:
        """Number of distinct decision levels among the (assigned) literals."""
        codes = [_to_code(l) for l in lits]
        for lit, q in zip(lits, codes):
            if self.vals[q] == _UNDEF:
                raise ValueError(f"literal {lit} is unassigned")
        return self._lbd(codes)

    # -- backjumping -----------------------------------------------------------------

    def backjump(self, level: int) -> None:
        """Undo every assignment above ``level``, saving phases."""
        if level >= self.decision_level:
            return
        vals = self.vals
        act = self.activity
        heap = self.heap
        stop = self.trail_lim[level]
        save = self.config.phase_saving
        for code in reversed(self.trail[stop:]):
            v = code >> 1
            vals[code] = _UNDEF
            vals[code ^ 1] = _UNDEF
            self.reason[v] = None
            if save:
                self.polarity[v] = bool(code & 1)
            heapq.heappush(heap, (-act[v], v))
        del self.trail[stop:]
        del self.trail_lim[level:]
        self.qhead = len(self.trail)
        if len(heap) > 4 * self.num_vars + 64:
            self._rebuild_heap()

    def learn(self, lits, lbd=None):
        """Add a learned clause after backjumping and assert its first literal."""
        codes = [_to_code(l) for l in lits]
        return self._learn(codes, self._lbd(codes) if lbd is None else lbd)

    def _learn(self, codes, lbd):
        st = self.stats
        st.learned_count += 1
        if self.on_learn is not None:
            self.on_learn(LearnedClauseRecord(
                Clause(tuple(_to_dimacs(q) for q in codes)), lbd, st.restarts, st.conflicts))
        if len(codes) == 1:
            self._enqueue(codes[0], None)
            return None
        c = _Clause(codes, learnt=True, origin=LEARNED, lbd=lbd)
        c.used = self.num_reductions + 1
        self._assign_tier(c)
        self.learnts.append(c)
        self._watch(c)
        self._bump_clause(c)
        self._enqueue(codes[0], c)
        return c

    # -- clause deletion -------------------------------------------------------------

    def _assign_tier(self, c):
        if c.lbd <= self.config.core_lbd:
            c.tier = "core"
        elif c.lbd <= self.config.tier2_lbd:
            c.tier = "tier2"
        elif c.tier is None:
            c.tier = "local"

    def _locked(self, c):
        v = c.lits[0] >> 1
        return self.reason[v] is c and self.vals[c.lits[0]] == _TRUE

    def reduce_db(self, policy=None) -> int:
        """Delete learned clauses per ``policy``; returns the number deleted.

        Problem and extension clauses are never candidates.
        """
        policy = DeletionPolicy.parse(policy if policy is not None else self.config.deletion)
        self.num_reductions += 1
        if policy is DeletionPolicy.NONE or not self.learnts:
            return 0
        if policy is DeletionPolicy.GLUCOSE_LBD:
            ranked = sorted(self.learnts, key=lambda c: (c.lbd, -c.activity))
            doomed = [c for c in ranked[len(ranked) // 2:]
                      if c.lbd > 2 and not self._locked(c)]
        else:
            r = self.num_reductions
            local = []
            for c in self.learnts:
                if c.tier == "tier2" and r - c.used >= 2:
                    c.tier = "local"
                if c.tier == "local":
                    local.append(c)
            local.sort(key=lambda c: -c.activity)
            doomed = [c for c in local[len(local) // 2:] if not self._locked(c)]
        for c in doomed:
            c.removed = True
        if doomed:
            self.learnts = [c for c in self.learnts if not c.removed]
            for ws in self.watches:
                ws[:] = [c for c in ws if not c.removed]
        self.stats.deleted_count += len(doomed)
        return len(doomed)

    # -- search ----------------------------------------------------------------------

    def _restart_due(self, conflicts_since, lbd):
        mode = self.config.restart
        if mode == "none":
            return False
        if mode == "luby":
            return conflicts_since >= self._restart_limit
        fast = self._lbd_fast
        if len(fast) < fast.maxlen:
            return False
        return (sum(fast) / len(fast)) * 0.8 > self._lbd_sum / self._lbd_count

    def solve(self, max_conflicts: Optional[int] = None,
              time_limit: Optional[float] = None) -> SolveOutcome:
        """Search for a model.

        ``max_conflicts`` and ``time_limit`` (CPU seconds) are optional
        budgets; when either is reached the outcome is ``TIMEOUT``. A run
        that reaches the cap exactly is reported as ``TIMEOUT``, so every
        decided run used strictly fewer conflicts than the cap.
        """
        start = time.process_time()
        st = self.stats
        cfg = self.config
        status = self._search(max_conflicts, time_limit, start)
        st.cpu_time += time.process_time() - start
        model = None
        if status == SAT:
            model = {v + 1: int(self.vals[2 * v] == _TRUE) for v in range(self.num_vars)}
            if not satisfies(model, ([_to_dimacs(q) for q in c.lits] for c in self.clauses)):
                raise AssertionError("internal error: model does not satisfy the formula")
        return SolveOutcome(status, model, replace(st))

    def _search(self, max_conflicts, time_limit, start):
        if not self.ok:
            return UNSAT
        st = self.stats
        cfg = self.config
        if self.propagate_codes() is not None:
            self.ok = False
            return UNSAT
        self._restart_limit = luby(st.restarts) * cfg.luby_base
        since_restart = 0
        reduce_interval = cfg.first_reduce
        next_reduce = st.conflicts + reduce_interval
        while True:
            confl = self.propagate_codes()
            if confl is not None:
                st.conflicts += 1
                since_restart += 1
                if max_conflicts is not None and st.conflicts >= max_conflicts:
                    return TIMEOUT
                if time_limit is not None and time.process_time() - start >= time_limit:
                    return TIMEOUT
                if not self.trail_lim:
                    self.ok = False
                    return UNSAT
                learnt, bt, lbd = self._analyze(confl)
                self.backjump(bt)
                self._learn(learnt, lbd)
                self.var_inc /= cfg.var_decay
                self.cla_inc /= cfg.clause_decay
                if cfg.restart == "glucose":
                    self._lbd_fast.append(lbd)
                    self._lbd_sum += lbd
                    self._lbd_count += 1
                continue
            if self._restart_due(since_restart, None):
                st.restarts += 1
                since_restart = 0
                self._lbd_fast.clear()
                self._restart_limit = luby(st.restarts) * cfg.luby_base
                self.backjump(0)
            if st.conflicts >= next_reduce:
                reduce_interval += cfg.reduce_inc
                next_reduce = st.conflicts + reduce_interval
                if cfg.deletion is not DeletionPolicy.NONE:
                    self.reduce_db()
            if time_limit is not None and st.decisions % 1024 == 0 \
                    and time.process_time() - start >= time_limit:
                return TIMEOUT
            code = self._pick_branch()
            if code is None:
                return SAT
            self.trail_lim.append(len(self.trail))
            st.decisions += 1
            self._enqueue(code, None)


def solve(f: Formula, config: SolverConfig = None, max_conflicts=None, time_limit=None,
          on_learn=None) -> SolveOutcome:
    """Solve ``f`` from scratch with a fresh solver."""
    return Solver(f, config, on_learn=on_learn).solve(max_conflicts, time_limit)
