"""Weighted community contact graphs (LFR-style generator, file I/O, validation).

Edge weights are meeting rates: a pair ``(i, j)`` meets as a Poisson process
with rate ``w_ij`` and mean inter-contact time ``1 / w_ij``.
"""
from __future__ import annotations

import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

log = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-6
WEIGHT_MODES = ("interval", "strength")

# mu_w = 0.001 gives inter-community contact intervals ~10x the intra ones and
# mu_w = 0.01 makes them equal; 0.01 / mu_w passes through both anchors.
INTERVAL_ANCHOR = 0.01


def interval_ratio_for(mu_w: float) -> float:
    if not mu_w > 0:
        raise ValueError("interval calibration needs mu_w > 0")
    return INTERVAL_ANCHOR / mu_w


class GenerationError(RuntimeError):
    pass


class GraphFormatError(ValueError):
    def __init__(self, msg: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


class GraphValidationError(ValueError):
    pass


@dataclass(frozen=True)
class GraphParams:
    n: int = 200
    avg_degree: float = 10.0
    max_degree: int = 50
    gamma: float = 2.0
    community_exponent: float = 1.5
    minc: int = 5
    maxc: int = 50
    mu_t: float = 0.1
    mu_w: float = 0.001
    beta: float = 1.0
    n_communities: Optional[int] = None
    seed: int = 0
    connect_communities: bool = True
    weight_mode: str = "interval"
    interval_ratio: Optional[float] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0 <= self.mu_t < 1:
            raise ValueError("mu_t must lie in [0, 1)")
        if not 0 <= self.mu_w < 1:
            raise ValueError("mu_w must lie in [0, 1)")
        if self.gamma <= 1:
            raise ValueError("gamma must be > 1")
        if self.minc < 1 or self.minc > self.maxc:
            raise ValueError("need 1 <= minc <= maxc")
        if self.max_degree < 2:
            raise ValueError("max_degree must be >= 2")
        if self.n_communities is not None and self.n_communities < 1:
            raise ValueError("n_communities must be >= 1")
        if self.weight_mode not in WEIGHT_MODES:
            raise ValueError(f"weight_mode must be one of {WEIGHT_MODES}")
        if self.interval_ratio is not None and not self.interval_ratio > 0:
            raise ValueError("interval_ratio must be positive")

    def resolved_interval_ratio(self) -> Optional[float]:
        """Target mean intra/inter edge-weight ratio, or None for pure strength targets."""
        if self.weight_mode == "strength":
            return None
        if self.interval_ratio is not None:
            return self.interval_ratio
        return interval_ratio_for(self.mu_w)


@dataclass(frozen=True)
class StrengthSplit:
    s: float
    s_in: float
    s_out: float


def strength_split(degree: int, mu_w: float, beta: float = 1.0) -> StrengthSplit:
    s = float(degree) ** beta
    return StrengthSplit(s, (1 - mu_w) * s, mu_w * s)


@dataclass
class ContactGraph:
    """Undirected weighted graph with hard community membership.

    ``edges`` maps ``(u, v)`` with ``u < v`` to the meeting rate.
    """

    n: int
    membership: list
    edges: dict = field(default_factory=dict)

    def __post_init__(self):
        self.membership = [int(c) for c in self.membership]
        norm = {}
        for (u, v), w in self.edges.items():
            u, v = int(u), int(v)
            if u > v:
                u, v = v, u
            norm[(u, v)] = float(w)
        self.edges = norm

    @property
    def nodes(self) -> list:
        return list(range(self.n))

    @property
    def n_communities(self) -> int:
        return len(set(self.membership))

    def communities(self) -> dict:
        out = defaultdict(list)
        for v, c in enumerate(self.membership):
            out[c].append(v)
        return dict(sorted(out.items()))

    def weight(self, u: int, v: int) -> float:
        return self.edges[(u, v) if u < v else (v, u)]

    def adjacency(self) -> list:
        adj = [dict() for _ in range(self.n)]
        for (u, v), w in self.edges.items():
            adj[u][v] = w
            adj[v][u] = w
        return adj

    def neighbors(self, v: int) -> list:
        return sorted(self.adjacency()[v])

    def degrees(self) -> list:
        deg = [0] * self.n
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def strengths(self) -> list:
        s = [0.0] * self.n
        for (u, v), w in self.edges.items():
            s[u] += w
            s[v] += w
        return s

    def is_internal(self, u: int, v: int) -> bool:
        return self.membership[u] == self.membership[v]

    def edge_arrays(self):
        """``(us, vs, ws)`` numpy arrays in sorted edge order."""
        keys = sorted(self.edges)
        us = np.array([e[0] for e in keys], dtype=np.int64)
        vs = np.array([e[1] for e in keys], dtype=np.int64)
        ws = np.array([self.edges[e] for e in keys], dtype=np.float64)
        return us, vs, ws

    def subgraph_adjacency(self, community) -> dict:
        members = set(self.communities()[community])
        adj = {v: {} for v in sorted(members)}
        for (u, v), w in self.edges.items():
            if u in members and v in members:
                adj[u][v] = w
                adj[v][u] = w
        return adj

    def mixing_stats(self) -> dict:
        """Realised topology and weight mixing fractions."""
        n_int = n_ext = 0
        w_int = w_ext = 0.0
        for (u, v), w in self.edges.items():
            if self.membership[u] == self.membership[v]:
                n_int += 1
                w_int += w
            else:
                n_ext += 1
                w_ext += w
        total = n_int + n_ext
        return {
            "edges": total,
            "inter_edges": n_ext,
            "mu_t": n_ext / total if total else 0.0,
            "mu_w": w_ext / (w_int + w_ext) if total else 0.0,
            "mean_w_intra": w_int / n_int if n_int else float("nan"),
            "mean_w_inter": w_ext / n_ext if n_ext else float("nan"),
        }

    def validate(self) -> None:
        if len(self.membership) != self.n:
            raise GraphValidationError(f"membership lists {len(self.membership)} nodes, graph has {self.n}")
        for (u, v), w in self.edges.items():
            if u == v:
                raise GraphValidationError(f"self-loop on node {u}")
            if not (0 <= u < self.n and 0 <= v < self.n):
                raise GraphValidationError(f"edge ({u}, {v}) references unknown node")
            if not w > 0 or not math.isfinite(w):
                raise GraphValidationError(f"edge ({u}, {v}) has non-positive weight {w!r}")
        for c, members in self.communities().items():
            if len(_components(self.subgraph_adjacency(c))) > 1:
                raise GraphValidationError(f"community {c} induces a disconnected subgraph")


def _components(adj: dict) -> list:
    seen = set()
    comps = []
    for s in adj:
        if s in seen:
            continue
        stack = [s]
        seen.add(s)
        comp = []
        while stack:
            x = stack.pop()
            comp.append(x)
            for y in adj[x]:
                if y not in seen:
                    seen.add(y)
                    stack.append(y)
        comps.append(sorted(comp))
    return comps


def mean_intercontact(w: float) -> float:
    if not w > 0:
        raise ValueError(f"meeting rate must be positive, got {w!r}")
    return 1.0 / w


# ---------------------------------------------------------------------------
# power-law sampling

def _discrete_powerlaw_pmf(lo: float, hi: int, exponent: float) -> np.ndarray:
    """pmf over integers ``floor(lo)..hi`` of ``floor(X)`` with X ~ x^-exponent on ``[lo, hi+1)``."""
    a = 1.0 - exponent
    start = int(math.floor(lo))
    edges = np.arange(start, hi + 2, dtype=float)
    edges[0] = lo
    if abs(a) < 1e-12:
        cdf = np.log(edges)
    else:
        cdf = edges ** a / a
    mass = np.diff(cdf)
    return start, mass / mass.sum()


def _powerlaw_support(target_mean: float, hi: int, exponent: float, floor: int = 2):
    """Lower cut-off of the continuous law whose floored mean hits ``target_mean``."""
    def mean_of(lo):
        start, pmf = _discrete_powerlaw_pmf(lo, hi, exponent)
        return float(np.dot(np.arange(start, start + len(pmf)), pmf))

    lo_b, hi_b = float(floor), float(hi)
    if mean_of(lo_b) >= target_mean:
        return _discrete_powerlaw_pmf(lo_b, hi, exponent)
    if mean_of(hi_b) <= target_mean:
        return _discrete_powerlaw_pmf(hi_b, hi, exponent)
    for _ in range(100):
        mid = 0.5 * (lo_b + hi_b)
        if mean_of(mid) < target_mean:
            lo_b = mid
        else:
            hi_b = mid
    return _discrete_powerlaw_pmf(0.5 * (lo_b + hi_b), hi, exponent)


def _inverse_cdf(start: int, pmf: np.ndarray, rng: np.random.Generator, size: int) -> np.ndarray:
    cdf = np.cumsum(pmf)
    idx = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")
    return start + np.minimum(idx, len(pmf) - 1)


def sample_degree_sequence(params: GraphParams, rng: np.random.Generator, max_tries: int = 200) -> list:
    hi = params.max_degree
    target = min(max(params.avg_degree, 2.0), float(hi))
    start, pmf = _powerlaw_support(target, hi, params.gamma)
    for _ in range(max_tries):
        deg = _inverse_cdf(start, pmf, rng, params.n)
        deg = np.clip(deg, 2, hi)
        if abs(deg.mean() - target) <= 0.1 * target:
            break
    else:
        raise GenerationError(
            f"mean degree {target:g} not reached within 10% after {max_tries} draws "
            f"(gamma={params.gamma}, max_degree={hi})"
        )
    deg = [int(d) for d in deg]
    if sum(deg) % 2:
        i = int(rng.integers(params.n))
        deg[i] += 1 if deg[i] < hi else -1
    return deg


def sample_community_sizes(params: GraphParams, rng: np.random.Generator) -> list:
    n, lo, hi = params.n, params.minc, min(params.maxc, params.n)
    if n < lo:
        raise GenerationError(f"n={n} is smaller than the minimum community size {lo}")
    if lo > hi:
        raise GenerationError(f"minc={lo} exceeds the usable maximum community size {hi}")
    start, pmf = _discrete_powerlaw_pmf(float(lo), hi, params.community_exponent)
    c = params.n_communities
    if c is not None:
        if not c * lo <= n <= c * hi:
            raise GenerationError(f"{c} communities of size {lo}..{hi} cannot hold {n} nodes")
        sizes = [int(s) for s in _inverse_cdf(start, pmf, rng, c)]
        while sum(sizes) != n:
            if sum(sizes) < n:
                cand = [i for i, s in enumerate(sizes) if s < hi]
                sizes[cand[int(rng.integers(len(cand)))]] += 1
            else:
                cand = [i for i, s in enumerate(sizes) if s > lo]
                sizes[cand[int(rng.integers(len(cand)))]] -= 1
        return sizes
    sizes = []
    while sum(sizes) < n:
        sizes.append(int(_inverse_cdf(start, pmf, rng, 1)[0]))
    excess = sum(sizes) - n
    sizes[-1] -= excess
    if sizes[-1] < lo:
        leftover = sizes.pop()
        while leftover > 0:
            cand = [i for i, s in enumerate(sizes) if s < hi]
            if not cand:
                raise GenerationError(f"cannot place {leftover} nodes within maxc={hi}")
            sizes[cand[int(rng.integers(len(cand)))]] += 1
            leftover -= 1
    return sizes


# ---------------------------------------------------------------------------
# topology

def _stochastic_round(x: float, rng: np.random.Generator) -> int:
    f = math.floor(x)
    return int(f + (rng.random() < x - f))


def _is_graphical(seq) -> bool:
    s = sorted(seq, reverse=True)
    if sum(s) % 2:
        return False
    n = len(s)
    total = 0
    for r in range(1, n + 1):
        total += s[r - 1]
        rhs = r * (r - 1) + sum(min(d, r) for d in s[r:])
        if total > rhs:
            return False
    return True


def _havel_hakimi(nodes: list, deg: dict) -> set:
    rem = {v: deg[v] for v in nodes}
    edges = set()
    while True:
        order = sorted((v for v in nodes if rem[v] > 0), key=lambda v: (-rem[v], v))
        if not order:
            return edges
        v = order[0]
        d = rem[v]
        targets = order[1 : d + 1]
        if len(targets) < d:
            raise GenerationError("degree sequence is not graphical")
        rem[v] = 0
        for t in targets:
            rem[t] -= 1
            edges.add((min(v, t), max(v, t)))


def _randomize(edges: set, rng: np.random.Generator, n_swaps: int) -> set:
    """Degree-preserving double-edge swaps keeping the graph simple."""
    el = sorted(edges)
    es = set(el)
    m = len(el)
    if m < 2:
        return es
    for _ in range(n_swaps):
        i, j = rng.integers(m, size=2)
        if i == j:
            continue
        a, b = el[i]
        c, d = el[j]
        if rng.random() < 0.5:
            c, d = d, c
        if len({a, b, c, d}) < 4:
            continue
        e1, e2 = (min(a, c), max(a, c)), (min(b, d), max(b, d))
        if e1 in es or e2 in es:
            continue
        es.discard(el[i])
        es.discard(el[j])
        es.add(e1)
        es.add(e2)
        el[i], el[j] = e1, e2
    return es


def _adj_of(nodes, edges) -> dict:
    adj = {v: set() for v in nodes}
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    return adj


def _connect_community(nodes: list, edges: set, rng: np.random.Generator, max_passes: int = 200) -> set:
    """Join components with degree-preserving swaps; add an edge when no swap is possible."""
    edges = set(edges)
    for _ in range(max_passes):
        comps = _components(_adj_of(nodes, edges))
        if len(comps) == 1:
            return edges
        comps.sort(key=len)
        small, rest = comps[0], set().union(*comps[1:])
        small_set = set(small)
        small_edges = sorted(e for e in edges if e[0] in small_set)
        other_edges = sorted(e for e in edges if e[0] in rest)
        rng.shuffle(other_edges)
        done = False
        if small_edges:
            a, b = small_edges[int(rng.integers(len(small_edges)))]
            for c, d in other_edges:
                trial = (edges - {(a, b), (c, d)})
                # (c, d) must not be a bridge of its component
                adj = _adj_of(rest, [e for e in trial if e[0] in rest])
                if len(_components(adj)) != len(comps) - 1:
                    continue
                e1, e2 = (min(a, c), max(a, c)), (min(b, d), max(b, d))
                if e1 in edges or e2 in edges:
                    continue
                edges = trial | {e1, e2}
                done = True
                break
        if not done:
            u = small[int(rng.integers(len(small)))]
            others = sorted(rest)
            v = others[int(rng.integers(len(others)))]
            edges.add((min(u, v), max(u, v)))
    raise GenerationError("could not connect community subgraph within the pass budget")


def _assign_nodes(kin: list, sizes: list, rng: np.random.Generator) -> list:
    """Place nodes into communities so that each node's internal degree fits.

    Nodes whose internal degree exceeds every remaining community get their
    internal degree clamped (``kin`` is updated in place).
    """
    n = len(kin)
    slots = list(sizes)
    membership = [-1] * n
    order = sorted(range(n), key=lambda v: (-kin[v], v))
    for v in order:
        open_ = [c for c in range(len(sizes)) if slots[c] > 0]
        fit = [c for c in open_ if sizes[c] - 1 >= kin[v]]
        if not fit:
            best = max(sizes[c] for c in open_)
            fit = [c for c in open_ if sizes[c] == best]
            kin[v] = best - 1
        c = fit[int(rng.integers(len(fit)))]
        membership[v] = c
        slots[c] -= 1
    return membership


def _match_external(kout: list, membership: list, rng: np.random.Generator, max_passes: int = 50) -> set:
    stubs = [v for v, k in enumerate(kout) for _ in range(k)]
    if len(stubs) % 2:
        stubs.pop(int(rng.integers(len(stubs))))
    if not stubs:
        return set()
    stubs = list(rng.permutation(stubs))
    pairs = [[int(stubs[2 * i]), int(stubs[2 * i + 1])] for i in range(len(stubs) // 2)]

    def bad(idx, seen):
        u, v = pairs[idx]
        key = (min(u, v), max(u, v))
        return u == v or membership[u] == membership[v] or key in seen

    for _ in range(max_passes):
        seen = set()
        bad_idx = []
        for i, (u, v) in enumerate(pairs):
            if bad(i, seen):
                bad_idx.append(i)
            else:
                seen.add((min(u, v), max(u, v)))
        if not bad_idx:
            return {(min(u, v), max(u, v)) for u, v in pairs}
        for i in bad_idx:
            j = int(rng.integers(len(pairs)))
            if j == i:
                continue
            a, b = pairs[i]
            c, d = pairs[j]
            pairs[i], pairs[j] = [a, d], [c, b]
    # drop pairs that stay invalid; each costs at most one external edge per endpoint
    out = set()
    dropped = 0
    for u, v in pairs:
        key = (min(u, v), max(u, v))
        if u == v or membership[u] == membership[v] or key in out:
            dropped += 1
            continue
        out.add(key)
    if dropped > max(1, len(pairs) // 20):
        raise GenerationError(f"external stub matching left {dropped} invalid pairs after {max_passes} passes")
    return out


def _connect_communities(membership: list, edges: set, rng: np.random.Generator) -> set:
    """Add inter-community edges until the community-level graph is connected."""
    edges = set(edges)
    n_comm = max(membership) + 1
    while True:
        cadj = {c: set() for c in range(n_comm)}
        for u, v in edges:
            cu, cv = membership[u], membership[v]
            if cu != cv:
                cadj[cu].add(cv)
                cadj[cv].add(cu)
        comps = _components(cadj)
        if len(comps) == 1:
            return edges
        comps.sort(key=len)
        small = set(comps[0])
        a_nodes = [v for v, c in enumerate(membership) if c in small]
        b_nodes = [v for v, c in enumerate(membership) if c not in small]
        u = a_nodes[int(rng.integers(len(a_nodes)))]
        v = b_nodes[int(rng.integers(len(b_nodes)))]
        edges.add((min(u, v), max(u, v)))


def build_topology(degrees: list, sizes: list, mu_t: float, rng: np.random.Generator,
                   connect_communities: bool = False) -> ContactGraph:
    """Unit-weight community graph with roughly ``mu_t`` of each node's edges external."""
    n = len(degrees)
    if sum(sizes) != n:
        raise GenerationError(f"community sizes sum to {sum(sizes)}, expected {n}")
    kout = [_stochastic_round(mu_t * d, rng) for d in degrees]
    kin = [d - o for d, o in zip(degrees, kout)]
    membership = _assign_nodes(kin, sizes, rng)
    edges = set()
    for c in range(len(sizes)):
        members = [v for v in range(n) if membership[v] == c]
        seq = {v: min(kin[v], len(members) - 1) for v in members}
        if sum(seq.values()) % 2:
            cand = [v for v in members if seq[v] < len(members) - 1]
            if cand:
                seq[cand[int(rng.integers(len(cand)))]] += 1
            else:
                seq[members[int(rng.integers(len(members)))]] -= 1
        while not _is_graphical(list(seq.values())):
            top = max(members, key=lambda v: (seq[v], -v))
            seq[top] -= 1
            if sum(seq.values()) % 2:
                seq[max(members, key=lambda v: (seq[v], -v))] -= 1
        internal = _havel_hakimi(members, seq)
        internal = _randomize(internal, rng, 10 * len(internal))
        if len(members) > 1:
            internal = _connect_community(members, internal, rng)
        edges |= internal
    edges |= _match_external(kout, membership, rng)
    if connect_communities and len(sizes) > 1:
        edges = _connect_communities(membership, edges, rng)
    return ContactGraph(n, membership, {e: 1.0 for e in edges})


# ---------------------------------------------------------------------------
# weights

def assign_weights(graph: ContactGraph, mu_w: float, beta: float = 1.0, max_sweeps: int = 20,
                   tol: float = 0.05, floor: float = WEIGHT_FLOOR,
                   interval_ratio: Optional[float] = None) -> ContactGraph:
    """Weight edges so each node's strength is ``k^beta``, split between internal and external edges.

    With ``interval_ratio=None`` the split is ``(1-mu_w, mu_w)``. Otherwise
    the split is chosen per node so that its mean internal edge weight is
    ``interval_ratio`` times its mean external edge weight, keeping the
    total strength. Proportional initialisation is followed by pairwise
    residual sweeps; topology and membership are unchanged.
    """
    n = graph.n
    deg = graph.degrees()
    kin = [0] * n
    kout = [0] * n
    for u, v in graph.edges:
        if graph.is_internal(u, v):
            kin[u] += 1
            kin[v] += 1
        else:
            kout[u] += 1
            kout[v] += 1
    s_in = [0.0] * n
    s_out = [0.0] * n
    for i in range(n):
        sp = strength_split(deg[i], mu_w, beta)
        s_in[i], s_out[i] = sp.s_in, sp.s_out
        if interval_ratio is not None and kin[i] and kout[i]:
            x = sp.s / (kin[i] + kout[i] / interval_ratio)
            s_in[i], s_out[i] = x * kin[i], sp.s - x * kin[i]
        if kin[i] == 0 and s_in[i] > 0:
            log.warning("node %d has no internal edges; moving its internal strength outside", i)
            s_out[i] += s_in[i]
            s_in[i] = 0.0
        if kout[i] == 0 and s_out[i] > 0:
            if kout[i] == 0 and kin[i] > 0:
                log.debug("node %d has no external edges; moving its external strength inside", i)
            s_in[i] += s_out[i]
            s_out[i] = 0.0

    weights = {}
    for internal, target, kcls in ((True, s_in, kin), (False, s_out, kout)):
        cls_edges = sorted(e for e in graph.edges if graph.is_internal(*e) == internal)
        if not cls_edges:
            continue
        w = {}
        rho = [0.0] * n
        for u, v in cls_edges:
            x = max(floor, 0.5 * (target[u] / kcls[u] + target[v] / kcls[v]))
            w[(u, v)] = x
            rho[u] += x
            rho[v] += x
        scale = [max(deg[i], 1) ** beta for i in range(n)]
        for _ in range(max_sweeps):
            worst = max(abs(rho[i] - target[i]) / scale[i] for i in range(n) if kcls[i])
            if worst < tol:
                break
            for u, v in cls_edges:
                delta = 0.5 * ((target[u] - rho[u]) / kcls[u] + (target[v] - rho[v]) / kcls[v])
                x = max(floor, w[(u, v)] + delta)
                d = x - w[(u, v)]
                w[(u, v)] = x
                rho[u] += d
                rho[v] += d
        weights.update(w)
    return ContactGraph(n, list(graph.membership), weights)


def generate_graph(params: GraphParams, max_attempts: int = 20) -> ContactGraph:
    """Full pipeline: degrees, community sizes, topology, weights. Deterministic in ``params.seed``."""
    rng = np.random.default_rng(params.seed)
    last = None
    for _ in range(max_attempts):
        try:
            degrees = sample_degree_sequence(params, rng)
            sizes = sample_community_sizes(params, rng)
            topo = build_topology(degrees, sizes, params.mu_t, rng, params.connect_communities)
            return assign_weights(topo, params.mu_w, params.beta,
                                  interval_ratio=params.resolved_interval_ratio())
        except GenerationError as exc:
            last = exc
    raise GenerationError(f"graph generation failed after {max_attempts} attempts: {last}")


def reweight(graph: ContactGraph, mu_w: float, beta: float = 1.0, weight_mode: str = "interval") -> ContactGraph:
    """Same topology and membership, weights recomputed for a new ``mu_w``."""
    unit = ContactGraph(graph.n, list(graph.membership), {e: 1.0 for e in graph.edges})
    ratio = interval_ratio_for(mu_w) if weight_mode == "interval" else None
    return assign_weights(unit, mu_w, beta, interval_ratio=ratio)


# ---------------------------------------------------------------------------
# file format

def save_graph(graph: ContactGraph, path) -> None:
    lines = [f"nodes {graph.n} communities {graph.n_communities}"]
    lines += [f"m {v} {c}" for v, c in enumerate(graph.membership)]
    lines += [f"e {u} {v} {graph.edges[(u, v)]:.16e}" for u, v in sorted(graph.edges)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_graph(path) -> ContactGraph:
    n = None
    n_comm = None
    membership = {}
    edges = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tok = line.split()
            try:
                if tok[0] == "nodes":
                    if n is not None:
                        raise GraphFormatError("duplicate header", lineno)
                    if len(tok) != 4 or tok[2] != "communities":
                        raise GraphFormatError("header must read 'nodes <n> communities <c>'", lineno)
                    n, n_comm = int(tok[1]), int(tok[3])
                elif n is None:
                    raise GraphFormatError("expected header line first", lineno)
                elif tok[0] == "m" and len(tok) == 3:
                    v, c = int(tok[1]), int(tok[2])
                    if not 0 <= v < n:
                        raise GraphFormatError(f"node {v} out of range", lineno)
                    if v in membership:
                        raise GraphFormatError(f"node {v} has two memberships", lineno)
                    membership[v] = c
                elif tok[0] == "e" and len(tok) == 4:
                    u, v, w = int(tok[1]), int(tok[2]), float(tok[3])
                    key = (min(u, v), max(u, v))
                    if key in edges:
                        raise GraphFormatError(f"duplicate edge {key}", lineno)
                    edges[key] = w
                else:
                    raise GraphFormatError(f"unrecognised record {tok[0]!r}", lineno)
            except ValueError as exc:
                if isinstance(exc, GraphFormatError):
                    raise
                raise GraphFormatError(str(exc), lineno) from None
    if n is None:
        raise GraphFormatError("missing header")
    missing = [v for v in range(n) if v not in membership]
    if missing:
        raise GraphValidationError(f"nodes without membership: {missing[:10]}")
    for (u, v), w in edges.items():
        if u == v:
            raise GraphValidationError(f"self-loop on node {u}")
        if not (0 <= u < n and 0 <= v < n):
            raise GraphValidationError(f"edge ({u}, {v}) references unknown node")
        if not w > 0:
            raise GraphValidationError(f"edge ({u}, {v}) has non-positive weight {w!r}")
    g = ContactGraph(n, [membership[v] for v in range(n)], edges)
    if g.n_communities != n_comm:
        raise GraphValidationError(f"header declares {n_comm} communities, memberships use {g.n_communities}")
    g.validate()
    return g
