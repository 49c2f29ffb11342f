"""Discrete-event core: per-edge Poisson meeting clocks, failures, trial and experiment drivers.

Two interchangeable backends run the meeting loop. The pure-Python one below
is the reference; the compiled one (``oppsim._kernel``) is chosen
automatically when it imports. Both consume the same generator draws in the
same order, so a seed gives identical metrics on either.
"""
from __future__ import annotations

import heapq
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from ._rng import exp_interval, make_rng, uniform_index
from .coding.lt import SolitonParams
from .graph import ContactGraph
from .metrics import TrialMetrics
from .seeding import all_centralities, make_factory, make_plan, select_mcu, SeedingPlan
from .strategies import NodeState, Strategy, deliver, select

log = logging.getLogger(__name__)

try:
    from . import _kernel
except ImportError:  # pragma: no cover - depends on the build
    _kernel = None

HARD_TIME_CAP = 1e7
PILOT_FACTOR = 100.0

FAILURE_KINDS = ("none", "periodic", "mcu_partial")


def available_backends() -> list:
    return ["cython", "python"] if _kernel is not None else ["python"]


def default_backend() -> str:
    forced = os.environ.get("OPPSIM_BACKEND", "").strip().lower()
    if forced in ("python", "cython"):
        return forced
    return "cython" if _kernel is not None else "python"


@dataclass(frozen=True)
class FailureModel:
    kind: str = "none"
    interval: Optional[float] = None
    fraction: Optional[float] = None

    def __post_init__(self):
        if self.kind not in FAILURE_KINDS:
            raise ValueError(f"unknown failure kind {self.kind!r}")
        if self.kind == "periodic" and not (self.interval and self.interval > 0):
            raise ValueError("periodic failure needs interval > 0")
        if self.kind == "mcu_partial" and not (self.fraction is not None and 0 < self.fraction < 1):
            raise ValueError("mcu_partial failure needs fraction in (0, 1)")

    @classmethod
    def none(cls) -> "FailureModel":
        return cls()

    @classmethod
    def periodic(cls, interval: float) -> "FailureModel":
        return cls("periodic", interval=float(interval))

    @classmethod
    def mcu_partial(cls, fraction: float) -> "FailureModel":
        return cls("mcu_partial", fraction=float(fraction))

    @property
    def code(self) -> int:
        return FAILURE_KINDS.index(self.kind)

    def threshold(self, k: int) -> int:
        return math.ceil(self.fraction * k) if self.kind == "mcu_partial" else 0

    def to_dict(self) -> dict:
        return {"kind": self.kind, "interval": self.interval, "fraction": self.fraction}


@dataclass
class TrialConfig:
    graph: ContactGraph
    strategy: Strategy
    seeding: str
    k: int = 80
    failure: FailureModel = field(default_factory=FailureModel)
    seed: int = 0
    max_sim_time: Optional[float] = None
    time_unit_label: str = "abstract"
    soliton: Optional[SolitonParams] = None

    def __post_init__(self):
        self.strategy = Strategy(self.strategy)
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_sim_time is not None:
            if not self.max_sim_time > 0:
                raise ValueError("max_sim_time must be positive")
            self.max_sim_time = float(self.max_sim_time)

    @property
    def horizon(self) -> float:
        return self.max_sim_time if self.max_sim_time is not None else HARD_TIME_CAP


@dataclass(frozen=True, order=True)
class MeetingEvent:
    time: float
    u: int
    v: int

    @property
    def edge(self) -> tuple:
        return (self.u, self.v)


def next_meeting_time(now: float, w: float, rng) -> float:
    if not w > 0:
        raise ValueError(f"meeting rate must be positive, got {w!r}")
    return now + exp_interval(rng, w)


@dataclass
class TrialSetup:
    """Seeded t=0 state shared by both backends."""

    cfg: TrialConfig
    states: list
    plan: SeedingPlan
    symbols: Optional[dict]
    mcu: list
    threshold: int


def prepare_trial(cfg: TrialConfig, rng, scores: Optional[dict] = None) -> TrialSetup:
    g = cfg.graph
    strategy = cfg.strategy
    needs_scores = cfg.seeding.startswith("s") or cfg.failure.kind == "mcu_partial"
    if needs_scores and scores is None:
        scores = all_centralities(g)
    factory = make_factory(strategy.value, cfg.k, cfg.soliton)
    plan = make_plan(cfg.seeding, g, cfg.k, factory, rng, scores)
    symbols = getattr(factory, "symbols", None)
    states = [NodeState.empty(v, cfg.k, strategy) for v in range(g.n)]
    for v, pkt in plan.placements:
        st = states[v]
        if strategy is Strategy.NC:
            st.decoder.ingest(pkt)
        elif strategy is Strategy.ERASURE:
            st.buffer.add(pkt)
            st.decoder.add(symbols[pkt])
        else:
            st.buffer.add(pkt)
    mcu = []
    if cfg.failure.kind == "mcu_partial":
        mcu = [select_mcu(scores[c]) for c in g.communities()]
    return TrialSetup(cfg, states, plan, symbols, mcu, cfg.failure.threshold(cfg.k))


def apply_failure(model: FailureModel, states: list, now: float, rng, node: Optional[int] = None) -> Optional[int]:
    """Kill one node: ``node`` if given, else a uniform alive node. Returns the victim id."""
    if model.kind == "none":
        raise ValueError("apply_failure needs a failure model")
    if node is None:
        alive = [s.id for s in states if s.alive]
        if not alive:
            return None
        node = alive[uniform_index(rng, len(alive))]
    st = states[node]
    st.alive = False
    st.buffer = set()
    st.decoder = None
    st.finish_time = None
    st.forwarded_log.clear()
    return node


class _Run:
    """Mutable bookkeeping for the reference loop."""

    def __init__(self, setup: TrialSetup, rng, event_log: Optional[Callable[[str], None]]):
        self.setup = setup
        self.cfg = setup.cfg
        self.rng = rng
        self.emit = event_log
        n = self.cfg.graph.n
        self.sent = [0] * n
        self.recv = [0] * n
        self.nonin = [0] * n
        self.meetings = 0
        self.innov = 0
        self.noninnov = 0
        self.failures = []
        self.n_alive = n
        self.unfinished = 0
        self.mcu = set(setup.mcu)
        self.mcu_seeded = {v: set(setup.states[v].buffer) for v in setup.mcu}
        self.mcu_spread = {v: set() for v in setup.mcu}
        self.mcu_innov = dict.fromkeys(setup.mcu, 0)

    def kill(self, node: Optional[int], now: float, rng) -> None:
        st = self.setup.states
        if node is None:
            alive = [s.id for s in st if s.alive]
            if not alive:
                return
            node = alive[uniform_index(rng, len(alive))]
        if not st[node].alive:
            return
        was_unfinished = st[node].finish_time is None
        apply_failure(self.cfg.failure, st, now, rng, node)
        self.failures.append((now, node))
        self.n_alive -= 1
        if was_unfinished:
            self.unfinished -= 1
        if self.emit:
            self.emit(f"t={now:.9g} ev=fail node={node}")

    def spread(self, v: int) -> int:
        if self.cfg.strategy is Strategy.NC:
            return self.mcu_innov[v]
        return len(self.mcu_spread[v])


def _run_python(setup: TrialSetup, rng, event_log=None) -> TrialMetrics:
    cfg = setup.cfg
    g = cfg.graph
    strategy = cfg.strategy
    states = setup.states
    run = _Run(setup, rng, event_log)
    horizon = cfg.horizon
    lr = strategy.local_rarest
    failure = cfg.failure

    # a node that is already complete after seeding finishes at t=0
    for st in states:
        if st.complete:
            st.finish_time = 0.0
        else:
            run.unfinished += 1

    us, vs, ws = g.edge_arrays()
    heap = []
    for e in range(len(us)):
        heap.append((exp_interval(rng, float(ws[e])), int(us[e]), int(vs[e]), e))
    heapq.heapify(heap)

    periodic = failure.kind == "periodic"
    j = 1
    next_fail = failure.interval if periodic else math.inf
    truncated = False
    now = 0.0
    emit = event_log

    while True:
        if run.n_alive == 0:
            truncated = True
            break
        if run.unfinished == 0:
            break
        top = heap[0][0] if heap else math.inf
        if next_fail <= top:
            if next_fail > horizon:
                truncated = True
                now = horizon
                break
            now = next_fail
            run.kill(None, now, rng)
            j += 1
            next_fail = j * failure.interval
            continue
        if not heap or top > horizon:
            truncated = True
            now = horizon if heap else now
            break
        t, u, v, e = heapq.heappop(heap)
        now = t
        a, b = states[u], states[v]
        if not (a.alive and b.alive):
            continue
        run.meetings += 1
        if lr:
            ids_a, ids_b = frozenset(a.buffer), frozenset(b.buffer)
            a.observe(v, ids_b)
            b.observe(u, ids_a)
        x_ab = select(strategy, a, b, rng)
        x_ba = select(strategy, b, a, rng)
        for snd, rcv, x in ((a, b, x_ab), (b, a, x_ba)):
            if x is None:
                continue
            useful = deliver(strategy, snd, rcv, x, setup.symbols)
            run.sent[snd.id] += 1
            run.recv[rcv.id] += 1
            if useful:
                run.innov += 1
            else:
                run.noninnov += 1
                run.nonin[rcv.id] += 1
            if snd.id in run.mcu:
                if strategy is Strategy.NC:
                    run.mcu_innov[snd.id] += useful
                elif x in run.mcu_seeded[snd.id]:
                    run.mcu_spread[snd.id].add(x)
        if emit:
            emit(f"t={t:.9g} ev=meet u={u} v={v} ab={_tag(x_ab)} ba={_tag(x_ba)}")
        for rcv in (b, a):
            if rcv.finish_time is None and rcv.complete:
                rcv.finish_time = t
                run.unfinished -= 1
                if emit:
                    emit(f"t={t:.9g} ev=finish node={rcv.id}")
        if run.mcu:
            for snd in (a, b):
                if snd.id in run.mcu and snd.alive and run.spread(snd.id) >= setup.threshold:
                    run.kill(snd.id, t, rng)
        heapq.heappush(heap, (t + exp_interval(rng, float(ws[e])), u, v, e))

    return _collect(setup, run, truncated, now)


def _tag(x) -> str:
    if x is None:
        return "-"
    if hasattr(x, "coeffs"):
        return "c"
    return str(x)


def _collect(setup: TrialSetup, run: _Run, truncated: bool, now: float) -> TrialMetrics:
    n = setup.cfg.graph.n
    finish = {s.id: s.finish_time for s in setup.states if s.alive and s.finish_time is not None}
    per_node = {v: {"sent": run.sent[v], "received": run.recv[v], "noninnovative_received": run.nonin[v]}
                for v in range(n)}
    return TrialMetrics(
        n_nodes=n,
        finish_times=finish,
        meetings_total=run.meetings,
        transmissions_total=sum(run.sent),
        innovative_total=run.innov,
        noninnovative_total=run.noninnov,
        per_node=per_node,
        truncated=truncated,
        seeded_total=setup.plan.total,
        failures=list(run.failures),
        end_time=float(now),
        seed=setup.cfg.seed,
    )


# ---------------------------------------------------------------------------
# compiled backend glue

def kernel_inputs(setup: TrialSetup) -> dict:
    """Flatten a seeded setup into the arrays the compiled kernel consumes."""
    cfg = setup.cfg
    g = cfg.graph
    n, k = g.n, cfg.k
    strategy = cfg.strategy
    us, vs, ws = g.edge_arrays()
    ptr = np.zeros(n + 1, dtype=np.int64)
    ids = []
    rows = np.zeros((n, k, k) if strategy is Strategy.NC else (0, 0, 0), dtype=np.uint8)
    ranks = np.zeros(n, dtype=np.int64)
    for v, st in enumerate(setup.states):
        if strategy is Strategy.NC:
            r = st.decoder.rank
            rows[v, :r] = st.decoder.rows
            ranks[v] = r
            ptr[v + 1] = ptr[v]
        else:
            held = sorted(st.buffer)
            ids.extend(held)
            ptr[v + 1] = ptr[v] + len(held)
    n_sym = 0
    sym_ptr = np.zeros(1, dtype=np.int64)
    sym_pk = np.zeros(0, dtype=np.int64)
    if strategy is Strategy.ERASURE:
        n_sym = len(setup.symbols)
        sym_ptr = np.zeros(n_sym + 1, dtype=np.int64)
        flat = []
        for s in range(n_sym):
            nb = sorted(setup.symbols[s].neighbors)
            flat.extend(nb)
            sym_ptr[s + 1] = sym_ptr[s] + len(nb)
        sym_pk = np.asarray(flat, dtype=np.int64)
    mcu = np.zeros(n, dtype=np.int8)
    for v in setup.mcu:
        mcu[v] = 1
    fm = cfg.failure
    return dict(
        n=n, k=k, strategy=strategy.code,
        us=us, vs=vs, ws=ws,
        init_ptr=ptr, init_ids=np.asarray(ids, dtype=np.int64),
        init_rows=rows, init_rank=ranks,
        n_sym=n_sym, sym_ptr=sym_ptr, sym_pk=sym_pk,
        failure=fm.code, interval=float(fm.interval or 0.0), threshold=setup.threshold, mcu=mcu,
        horizon=float(cfg.horizon),
    )


def _run_kernel(setup: TrialSetup, rng) -> TrialMetrics:
    out = _kernel.run_trial_kernel(kernel_inputs(setup), rng.bit_generator)
    n = setup.cfg.graph.n
    finish = {v: float(out["finish"][v]) for v in range(n)
              if out["alive"][v] and not math.isnan(out["finish"][v])}
    per_node = {v: {"sent": int(out["sent"][v]), "received": int(out["recv"][v]),
                    "noninnovative_received": int(out["nonin"][v])} for v in range(n)}
    return TrialMetrics(
        n_nodes=n,
        finish_times=finish,
        meetings_total=int(out["meetings"]),
        transmissions_total=int(out["sent"].sum()),
        innovative_total=int(out["innov"]),
        noninnovative_total=int(out["noninnov"]),
        per_node=per_node,
        truncated=bool(out["truncated"]),
        seeded_total=setup.plan.total,
        failures=[(float(t), int(v)) for t, v in out["failures"]],
        end_time=float(out["end_time"]),
        seed=setup.cfg.seed,
    )


def run_trial(cfg: TrialConfig, backend: Optional[str] = None, scores: Optional[dict] = None,
              event_log: Optional[Callable[[str], None]] = None) -> TrialMetrics:
    """Seed at t=0 and run one trial to completion, truncation or the horizon.

    ``event_log`` (a callable taking one line) forces the Python backend,
    which is the only one that narrates events.
    """
    backend = backend or default_backend()
    if event_log is not None:
        backend = "python"
    if backend == "cython" and _kernel is None:
        raise RuntimeError("compiled kernel is not available; rebuild the package or use backend='python'")
    if backend not in ("cython", "python"):
        raise ValueError(f"unknown backend {backend!r}")
    rng = make_rng(cfg.seed)
    setup = prepare_trial(cfg, rng, scores)
    if backend == "cython":
        return _run_kernel(setup, rng)
    return _run_python(setup, rng, event_log)


# ---------------------------------------------------------------------------
# experiments

@dataclass
class ExperimentResult:
    trials: list
    seeds: list
    max_sim_time: float

    @property
    def truncated(self) -> list:
        return [i for i, t in enumerate(self.trials) if t.truncated]

    @property
    def any_truncated(self) -> bool:
        return bool(self.truncated)


def pilot_horizon(cfg: TrialConfig, backend: Optional[str] = None, scores: Optional[dict] = None) -> float:
    """``PILOT_FACTOR`` times the finish time of one failure-free trial, capped at ``HARD_TIME_CAP``."""
    pilot = run_trial(replace(cfg, failure=FailureModel(), max_sim_time=HARD_TIME_CAP), backend, scores)
    if pilot.truncated:
        return HARD_TIME_CAP
    return min(HARD_TIME_CAP, PILOT_FACTOR * max(pilot.network_finish, 1e-9))


def _trial_job(args):
    cfg, backend, scores = args
    return run_trial(cfg, backend, scores)


def run_experiment(cfg: TrialConfig, n_trials: int, base_seed: Optional[int] = None,
                   backend: Optional[str] = None, workers: int = 1) -> ExperimentResult:
    """``n_trials`` independent trials with seeds ``base_seed + i``.

    When ``cfg.max_sim_time`` is None it is set from a pilot run. Truncated
    trials are kept and listed in the result.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    base = cfg.seed if base_seed is None else base_seed
    scores = None
    if cfg.seeding.startswith("s") or cfg.failure.kind == "mcu_partial":
        scores = all_centralities(cfg.graph)
    if cfg.max_sim_time is None:
        cfg = replace(cfg, seed=base, max_sim_time=pilot_horizon(replace(cfg, seed=base), backend, scores))
    seeds = [base + i for i in range(n_trials)]
    jobs = [(replace(cfg, seed=s), backend, scores) for s in seeds]
    if workers > 1 and n_trials > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(_trial_job, jobs))
    else:
        trials = [_trial_job(j) for j in jobs]
    result = ExperimentResult(trials, seeds, cfg.max_sim_time)
    if result.any_truncated:
        log.warning("%d of %d trials truncated (%s / %s)", len(result.truncated), n_trials,
                    cfg.strategy.value, cfg.seeding)
    return result
