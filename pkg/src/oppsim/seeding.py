"""Initial packet placement at t=0: community percentage, network-random, S1 and S2 (MCU) schemes."""
from __future__ import annotations

import heapq
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._rng import uniform_index
from .coding.lt import SolitonParams, lt_encode, robust_soliton
from .coding.rlnc import RlncDecoder, RlncPacket
from .graph import ContactGraph

CENTRALITY_KINDS = ("degree", "betweenness", "closeness")
PCT_SCHEMES = {"150": 1.5, "100": 1.0, "90": 0.9, "80": 0.8}
SCHEMES = tuple(PCT_SCHEMES) + ("random",) + tuple(f"s1-{k}" for k in CENTRALITY_KINDS) + ("s2",)


@dataclass
class SeedingPlan:
    scheme: str
    allocations: dict = field(default_factory=dict)
    placements: list = field(default_factory=list)

    @property
    def total(self) -> int:
        return sum(self.allocations.values())

    def add(self, node: int, packet) -> None:
        self.allocations[node] = self.allocations.get(node, 0) + 1
        self.placements.append((node, packet))

    def to_dict(self) -> dict:
        return {
            "scheme": self.scheme,
            "total": self.total,
            "allocations": {str(v): c for v, c in sorted(self.allocations.items())},
        }


@dataclass
class CentralityScores:
    community: int
    degree: dict
    betweenness: dict
    closeness: dict

    def aggregate(self) -> dict:
        return {v: self.degree[v] + self.betweenness[v] + self.closeness[v] for v in self.degree}

    def of_kind(self, kind: str) -> dict:
        if kind not in CENTRALITY_KINDS:
            raise ValueError(f"unknown centrality kind {kind!r}")
        return getattr(self, kind)


# ---------------------------------------------------------------------------
# packet factories; each tracks what every node already holds so a seeded
# packet is always new (or innovative) to its recipient

class PlainPackets:
    kind = "plain"

    def __init__(self, k: int):
        self.k = k
        self.held: dict = {}

    def batch(self, m: int, rng) -> list:
        if m <= self.k:
            return [int(x) for x in rng.choice(self.k, size=m, replace=False)]
        return [i % self.k for i in range(m)]

    def accepts(self, node: int, pkt) -> bool:
        return pkt not in self.held.get(node, ())

    def place(self, node: int, pkt) -> None:
        self.held.setdefault(node, set()).add(pkt)


class RlncPackets:
    """Dense random coefficient vectors; the first ``min(m, k)`` of a batch are independent."""

    kind = "nc"

    def __init__(self, k: int):
        self.k = k
        self.held: dict = {}

    def batch(self, m: int, rng) -> list:
        basis = RlncDecoder(self.k)
        out = []
        for i in range(m):
            while True:
                c = rng.integers(0, 256, size=self.k, dtype=np.uint8)
                if not c.any():
                    continue
                if i < self.k and not basis.ingest(RlncPacket(c)):
                    continue
                break
            out.append(RlncPacket(c))
        return out

    def accepts(self, node: int, pkt) -> bool:
        dec = self.held.get(node)
        return dec is None or dec.is_innovative(pkt.coeffs)

    def place(self, node: int, pkt) -> None:
        self.held.setdefault(node, RlncDecoder(self.k)).ingest(pkt)


class LtPackets:
    """Fresh LT symbols (neighbour sets only) with globally distinct ids."""

    kind = "erasure"

    def __init__(self, params: SolitonParams):
        self.params = params
        self.k = params.k
        self.mu = robust_soliton(params)
        self.symbols: dict = {}

    def batch(self, m: int, rng) -> list:
        out = []
        for _ in range(m):
            sid = len(self.symbols)
            sym = lt_encode(None, self.params, rng, symbol_id=sid, mu=self.mu)
            self.symbols[sid] = sym
            out.append(sid)
        return out

    def accepts(self, node: int, pkt) -> bool:
        return True

    def place(self, node: int, pkt) -> None:
        pass


def make_factory(strategy: str, k: int, soliton: Optional[SolitonParams] = None):
    if strategy == "nc":
        return RlncPackets(k)
    if strategy == "erasure":
        return LtPackets(soliton or SolitonParams(k))
    return PlainPackets(k)


def _place_all(plan: SeedingPlan, factory, members: list, packets: list, rng, attempts: int = 64) -> None:
    for pkt in packets:
        for _ in range(attempts):
            v = members[uniform_index(rng, len(members))]
            if factory.accepts(v, pkt):
                break
        else:
            ok = [v for v in members if factory.accepts(v, pkt)]
            if not ok:
                warnings.warn(f"no node can take seeded packet {pkt!r}; dropped", stacklevel=3)
                continue
            v = ok[uniform_index(rng, len(ok))]
        factory.place(v, pkt)
        plan.add(v, pkt)


def seed_community_pct(graph: ContactGraph, k: int, p: float, packet_factory, rng,
                       scheme: Optional[str] = None) -> SeedingPlan:
    """Per community, ``round(p*k)`` packets on uniformly drawn members."""
    if not p > 0:
        raise ValueError(f"seeding fraction must be positive, got {p!r}")
    plan = SeedingPlan(scheme or f"{round(100 * p)}")
    m = int(round(p * k))
    for c, members in graph.communities().items():
        _place_all(plan, packet_factory, members, packet_factory.batch(m, rng), rng)
    return plan


def seed_random_network(graph: ContactGraph, k: int, n_communities: int, packet_factory, rng) -> SeedingPlan:
    """``n_communities * k`` packets (k per batch) on uniform draws over all nodes."""
    plan = SeedingPlan("random")
    nodes = graph.nodes
    for _ in range(n_communities):
        _place_all(plan, packet_factory, nodes, packet_factory.batch(k, rng), rng)
    return plan


# ---------------------------------------------------------------------------
# centralities on community subgraphs, shortest-path length 1/w

def _dijkstra_counts(adj: dict, s: int):
    """Single-source shortest paths: (order of settlement, preds, sigma, dist)."""
    dist = {s: 0.0}
    sigma = dict.fromkeys(adj, 0)
    sigma[s] = 1
    preds = {v: [] for v in adj}
    order = []
    seen = {s: 0.0}
    heap = [(0.0, s, s)]
    done = set()
    while heap:
        d, _, v = heapq.heappop(heap)
        if v in done:
            continue
        done.add(v)
        dist[v] = d
        order.append(v)
        for u, w in adj[v].items():
            nd = d + 1.0 / w
            if u not in seen or nd < seen[u]:
                seen[u] = nd
                sigma[u] = sigma[v]
                preds[u] = [v]
                heapq.heappush(heap, (nd, u, u))
            elif nd == seen[u] and u not in done:
                sigma[u] += sigma[v]
                preds[u].append(v)
    return order, preds, sigma, dist


def compute_centralities(graph: ContactGraph, community) -> CentralityScores:
    adj = graph.subgraph_adjacency(community)
    nodes = sorted(adj)
    nc = len(nodes)
    bc = dict.fromkeys(nodes, 0.0)
    cc = dict.fromkeys(nodes, 0.0)
    dc = {v: (len(adj[v]) / (nc - 1) if nc > 1 else 0.0) for v in nodes}
    for s in nodes:
        order, preds, sigma, dist = _dijkstra_counts(adj, s)
        if len(order) != nc:
            raise ValueError(f"community {community} is disconnected; closeness is undefined")
        total = sum(dist.values())
        cc[s] = (nc - 1) / total if total > 0 else 0.0
        delta = dict.fromkeys(nodes, 0.0)
        for w in reversed(order):
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                bc[w] += delta[w]
    if nc > 2:
        # each unordered pair was counted from both ends
        norm = (nc - 1) * (nc - 2)
        bc = {v: b / norm for v, b in bc.items()}
    else:
        bc = dict.fromkeys(nodes, 0.0)
    return CentralityScores(community, dc, bc, cc)


def all_centralities(graph: ContactGraph) -> dict:
    return {c: compute_centralities(graph, c) for c in graph.communities()}


def s1_allocate(scores: CentralityScores, kind: str, k: int) -> dict:
    """Counts proportional to the chosen centrality, largest-remainder rounded to sum to ``k``."""
    vals = scores.of_kind(kind)
    total = sum(vals.values())
    if not total > 0:
        raise ValueError(f"all {kind} centralities are zero in community {scores.community}")
    quota = {v: vals[v] / total * k for v in sorted(vals)}
    counts = {v: int(math.floor(q)) for v, q in quota.items()}
    short = k - sum(counts.values())
    by_rem = sorted(quota, key=lambda v: (-(quota[v] - counts[v]), v))
    for v in by_rem[:short]:
        counts[v] += 1
    return counts


def select_mcu(scores: CentralityScores) -> int:
    agg = scores.aggregate()
    return min(agg, key=lambda v: (-agg[v], v))


def seed_s1(graph: ContactGraph, k: int, kind: str, packet_factory, rng, scores: Optional[dict] = None) -> SeedingPlan:
    scores = scores or all_centralities(graph)
    plan = SeedingPlan(f"s1-{kind}")
    for c in graph.communities():
        try:
            counts = s1_allocate(scores[c], kind, k)
        except ValueError:
            # no shortest path passes through any member: the limit of equal scores
            warnings.warn(f"{kind} centrality is zero across community {c}; allocating uniformly", stacklevel=2)
            flat = CentralityScores(c, *(dict.fromkeys(scores[c].degree, 1.0) for _ in range(3)))
            counts = s1_allocate(flat, kind, k)
        packets = iter(packet_factory.batch(k, rng))
        for v, cnt in counts.items():
            for _ in range(cnt):
                pkt = next(packets)
                packet_factory.place(v, pkt)
                plan.add(v, pkt)
    return plan


def seed_s2(graph: ContactGraph, k: int, packet_factory, rng, scores: Optional[dict] = None) -> SeedingPlan:
    scores = scores or all_centralities(graph)
    plan = SeedingPlan("s2")
    for c in graph.communities():
        v = select_mcu(scores[c])
        for pkt in packet_factory.batch(k, rng):
            packet_factory.place(v, pkt)
            plan.add(v, pkt)
    return plan


def make_plan(scheme: str, graph: ContactGraph, k: int, packet_factory, rng,
              scores: Optional[dict] = None) -> SeedingPlan:
    if scheme in PCT_SCHEMES:
        return seed_community_pct(graph, k, PCT_SCHEMES[scheme], packet_factory, rng, scheme)
    if scheme == "random":
        return seed_random_network(graph, k, graph.n_communities, packet_factory, rng)
    if scheme.startswith("s1-"):
        return seed_s1(graph, k, scheme[3:], packet_factory, rng, scores)
    if scheme == "s2":
        return seed_s2(graph, k, packet_factory, rng, scores)
    try:
        p = float(scheme)
    except ValueError:
        raise ValueError(f"unknown seeding scheme {scheme!r}; choose from {', '.join(SCHEMES)}") from None
    return seed_community_pct(graph, k, p / 100.0, packet_factory, rng, scheme)
