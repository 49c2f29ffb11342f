import warnings

import networkx as nx
import numpy as np
import pytest

from oppsim.graph import ContactGraph
from oppsim.seeding import (CentralityScores, PlainPackets, all_centralities, compute_centralities, make_factory,
                            make_plan, s1_allocate, seed_community_pct, seed_random_network, select_mcu)


def rng(s=0):
    return np.random.default_rng(s)


def star(n_leaves=4, w=1.0):
    return ContactGraph(n_leaves + 1, [0] * (n_leaves + 1), {(0, i): w for i in range(1, n_leaves + 1)})


@pytest.mark.parametrize("strategy", ["epidemic_random", "nc", "erasure"])
@pytest.mark.parametrize("scheme,total", [("150", 1680), ("100", 1120), ("90", 1008), ("80", 896),
                                          ("random", 1120)])
def test_seeded_totals(default_graph, strategy, scheme, total):
    plan = make_plan(scheme, default_graph, 80, make_factory(strategy, 80), rng())
    assert plan.total == total == len(plan.placements)


def test_per_community_counts(default_graph):
    plan = seed_community_pct(default_graph, 80, 1.5, PlainPackets(80), rng())
    per = {}
    for v, _ in plan.placements:
        c = default_graph.membership[v]
        per[c] = per.get(c, 0) + 1
    assert set(per.values()) == {120}


def test_plain_seeding_is_never_duplicate(default_graph):
    for scheme in ("150", "100", "80", "random"):
        plan = make_plan(scheme, default_graph, 80, PlainPackets(80), rng(1))
        held = {}
        for v, p in plan.placements:
            assert p not in held.setdefault(v, set())
            held[v].add(p)


def test_full_community_seeding_covers_file(default_graph):
    plan = seed_community_pct(default_graph, 80, 1.0, PlainPackets(80), rng(2))
    for c, members in default_graph.communities().items():
        got = {p for v, p in plan.placements if v in members}
        assert got == set(range(80))


def test_allocation_sum_over_seeds(desk_graph):
    for s in range(100):
        plan = seed_random_network(desk_graph, 16, desk_graph.n_communities, PlainPackets(16), rng(s))
        assert sum(plan.allocations.values()) == plan.total == 16 * desk_graph.n_communities


def test_single_community_random_matches_pct():
    g = ContactGraph(6, [0] * 6, {(i, i + 1): 1.0 for i in range(5)})
    hist_a = np.zeros(6)
    hist_b = np.zeros(6)
    for s in range(400):
        for v, c in seed_random_network(g, 12, 1, PlainPackets(12), rng(s)).allocations.items():
            hist_a[v] += c
        for v, c in seed_community_pct(g, 12, 1.0, PlainPackets(12), rng(10_000 + s)).allocations.items():
            hist_b[v] += c
    assert hist_a.sum() == hist_b.sum() == 400 * 12
    assert np.allclose(hist_a / hist_a.sum(), hist_b / hist_b.sum(), atol=0.02)


def test_star_centralities():
    sc = compute_centralities(star(), 0)
    assert sc.degree[0] == 1.0 and all(sc.degree[i] == 0.25 for i in range(1, 5))
    assert sc.betweenness[0] == pytest.approx(1.0)
    assert all(sc.betweenness[i] == 0 for i in range(1, 5))
    assert select_mcu(sc) == 0


def test_path_closeness():
    g = ContactGraph(3, [0, 0, 0], {(0, 1): 1.0, (1, 2): 1.0})
    sc = compute_centralities(g, 0)
    assert sc.closeness[1] == pytest.approx(1.0)
    assert sc.closeness[0] == pytest.approx(2 / 3)


def test_matches_networkx(default_graph):
    for c, members in list(default_graph.communities().items())[:6]:
        G = nx.Graph()
        for (u, v), w in default_graph.edges.items():
            if u in members and v in members:
                G.add_edge(u, v, dist=1.0 / w)
        sc = compute_centralities(default_graph, c)
        bc = nx.betweenness_centrality(G, weight="dist", normalized=True)
        cc = nx.closeness_centrality(G, distance="dist")
        dc = nx.degree_centrality(G)
        for v in members:
            assert sc.betweenness[v] == pytest.approx(bc[v], abs=1e-12)
            assert sc.closeness[v] == pytest.approx(cc[v], rel=1e-12)
            assert sc.degree[v] == pytest.approx(dc[v], rel=1e-12)


def test_mcu_matches_bruteforce_on_random_community():
    r = rng(3)
    G = nx.connected_watts_strogatz_graph(10, 4, 0.5, seed=3)
    edges = {(min(u, v), max(u, v)): float(r.uniform(0.1, 2.0)) for u, v in G.edges}
    g = ContactGraph(10, [0] * 10, edges)
    for (u, v), w in edges.items():
        G[u][v]["dist"] = 1.0 / w
    bc = nx.betweenness_centrality(G, weight="dist")
    cc = nx.closeness_centrality(G, distance="dist")
    dc = nx.degree_centrality(G)
    agg = {v: bc[v] + cc[v] + dc[v] for v in G}
    assert select_mcu(compute_centralities(g, 0)) == max(sorted(agg), key=lambda v: agg[v])


def test_mcu_tie_takes_lower_id():
    g = ContactGraph(2, [0, 0], {(0, 1): 1.0})
    assert select_mcu(compute_centralities(g, 0)) == 0


def test_mcu_scale_invariant(default_graph):
    scaled = ContactGraph(default_graph.n, default_graph.membership,
                          {e: 7.5 * w for e, w in default_graph.edges.items()})
    a = all_centralities(default_graph)
    b = all_centralities(scaled)
    assert all(select_mcu(a[c]) == select_mcu(b[c]) for c in a)


def _flat(n, value=1.0):
    d = {i: value for i in range(n)}
    return CentralityScores(0, dict(d), dict(d), dict(d))


def test_s1_allocations():
    assert s1_allocate(_flat(4), "degree", 80) == {0: 20, 1: 20, 2: 20, 3: 20}
    assert s1_allocate(_flat(1), "closeness", 80) == {0: 80}
    sc = CentralityScores(0, {0: 0.5, 1: 0.3, 2: 0.2}, {}, {})
    assert s1_allocate(sc, "degree", 10) == {0: 5, 1: 3, 2: 2}
    sc = CentralityScores(0, {0: 1.0, 1: 1.0, 2: 1.0}, {}, {})
    got = s1_allocate(sc, "degree", 10)
    assert sum(got.values()) == 10 and sorted(got.values()) == [3, 3, 4]


def test_s1_zero_betweenness_falls_back_to_uniform():
    g = ContactGraph(2, [0, 0], {(0, 1): 1.0})
    with pytest.warns(UserWarning, match="uniformly"):
        plan = make_plan("s1-betweenness", g, 10, PlainPackets(10), rng())
    assert plan.allocations == {0: 5, 1: 5}


def test_s2_puts_everything_on_mcu(default_graph):
    scores = all_centralities(default_graph)
    plan = make_plan("s2", default_graph, 80, PlainPackets(80), rng(), scores)
    assert plan.total == 1120
    assert set(plan.allocations) == {select_mcu(s) for s in scores.values()}
    assert set(plan.allocations.values()) == {80}


def test_s1_totals(default_graph):
    scores = all_centralities(default_graph)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for kind in ("degree", "betweenness", "closeness"):
            assert make_plan(f"s1-{kind}", default_graph, 80, make_factory("nc", 80), rng(), scores).total == 1120


def test_unknown_scheme():
    with pytest.raises(ValueError, match="unknown seeding"):
        make_plan("bogus", star(), 4, PlainPackets(4), rng())


def test_nc_seeding_full_rank_per_community(default_graph):
    from oppsim.coding.rlnc import RlncDecoder
    plan = make_plan("100", default_graph, 80, make_factory("nc", 80), rng(4))
    for c, members in default_graph.communities().items():
        dec = RlncDecoder(80)
        for v, p in plan.placements:
            if v in members:
                dec.ingest(p)
        assert dec.complete
