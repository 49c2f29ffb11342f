import warnings

import numpy as np
import pytest

from oppsim.graph import (ContactGraph, GenerationError, GraphFormatError, GraphParams, GraphValidationError,
                          assign_weights, build_topology, generate_graph, load_graph, mean_intercontact,
                          reweight, sample_community_sizes, sample_degree_sequence, save_graph, strength_split)


def rng(seed=0):
    return np.random.default_rng(seed)


def test_single_node_degree_clamped():
    for gamma in (1.5, 2.0, 3.0):
        assert sample_degree_sequence(GraphParams(n=1, max_degree=2, gamma=gamma, minc=1, maxc=1), rng()) == [2]


def test_mean_degree_over_seeds():
    ok = 0
    for s in range(100):
        deg = sample_degree_sequence(GraphParams(n=200, gamma=2, avg_degree=10), rng(s))
        ok += 9 <= np.mean(deg) <= 11
    assert ok >= 95


def test_degree_sum_even():
    r = rng(1)
    for _ in range(50):
        p = GraphParams(n=int(r.integers(5, 300)), gamma=float(r.uniform(1.8, 3.0)),
                        avg_degree=float(r.uniform(8, 12)), max_degree=int(r.integers(15, 60)), minc=1)
        assert sum(sample_degree_sequence(p, r)) % 2 == 0


def test_forced_uniform_community_sizes():
    assert sample_community_sizes(GraphParams(n=200, minc=10, maxc=10), rng()) == [10] * 20


def test_community_sizes_bounded():
    for s in range(100):
        sizes = sample_community_sizes(GraphParams(n=200, minc=8, maxc=40, community_exponent=1.5), rng(s))
        assert sum(sizes) == 200
        assert all(8 <= x <= 40 for x in sizes)


def test_too_few_nodes_for_community():
    with pytest.raises(GenerationError):
        sample_community_sizes(GraphParams(n=7, minc=10, maxc=20), rng())


def test_mu_t_zero_has_no_external_edges():
    g = build_topology([4] * 20, [10, 10], 0.0, rng(2))
    assert all(g.is_internal(u, v) for u, v in g.edges)
    assert set(g.edges.values()) == {1.0}


def test_topology_unit_weights_before_weighting():
    g = build_topology(sample_degree_sequence(GraphParams(n=100), rng(3)), [20] * 5, 0.1, rng(3))
    assert max(g.edges.values()) == min(g.edges.values()) == 1.0


def test_default_graph_mixing(default_graph):
    st = default_graph.mixing_stats()
    assert default_graph.n == 200 and default_graph.n_communities == 14
    assert 0.08 <= st["mu_t"] <= 0.12
    assert 7 <= st["mean_w_intra"] / st["mean_w_inter"] <= 13


def test_mu_t_sweep_tracks_target():
    for mu_t in (0.05, 0.1, 0.2, 0.3):
        st = generate_graph(GraphParams(mu_t=mu_t, n_communities=14, seed=4)).mixing_stats()
        assert abs(st["mu_t"] - mu_t) < 0.35 * mu_t + 0.01


def test_interval_ratio_one_at_high_mu_w(default_graph):
    st = reweight(default_graph, 0.01).mixing_stats()
    assert st["mean_w_intra"] / st["mean_w_inter"] == pytest.approx(1.0, rel=0.3)


def test_strength_mode_hits_targets():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        g = generate_graph(GraphParams(n_communities=14, weight_mode="strength"))
    deg = g.degrees()
    s = g.strengths()
    assert all(abs(s[i] - deg[i]) <= 0.05 * deg[i] for i in range(g.n))
    st = g.mixing_stats()
    assert st["mu_w"] < 0.01


def test_split_zero_mu_w_uses_floor():
    sp = strength_split(5, 0.0)
    assert sp.s_out == 0 and sp.s_in == 5
    topo = ContactGraph(4, [0, 0, 1, 1], {(0, 1): 1.0, (2, 3): 1.0, (1, 2): 1.0})
    g = assign_weights(topo, 0.0)
    assert g.weight(1, 2) > 0
    assert g.weight(1, 2) < 1e-3


def test_one_edge_closed_form():
    g = assign_weights(ContactGraph(2, [0, 0], {(0, 1): 1.0}), 0.0, beta=1.0)
    assert g.weight(0, 1) == pytest.approx(1.0)


@pytest.mark.parametrize("w,expected", [(0.5, 2.0), (1.0, 1.0), (0.001, 1000.0)])
def test_mean_intercontact(w, expected):
    assert mean_intercontact(w) == pytest.approx(expected)


def test_mean_intercontact_rejects_zero():
    with pytest.raises(ValueError):
        mean_intercontact(0.0)


def test_generation_deterministic():
    a = generate_graph(GraphParams(n=60, n_communities=4, maxc=30, seed=9))
    b = generate_graph(GraphParams(n=60, n_communities=4, maxc=30, seed=9))
    assert a.edges == b.edges and a.membership == b.membership


def test_communities_connected(default_graph):
    default_graph.validate()


def test_round_trip(tmp_path, desk_graph):
    p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
    save_graph(desk_graph, p1)
    g = load_graph(p1)
    assert g.edges == desk_graph.edges and g.membership == desk_graph.membership
    save_graph(g, p2)
    assert p1.read_bytes() == p2.read_bytes()


def _write(tmp_path, text):
    p = tmp_path / "g.txt"
    p.write_text(text)
    return p


def test_self_loop_rejected(tmp_path):
    with pytest.raises(GraphValidationError, match="self-loop"):
        load_graph(_write(tmp_path, "nodes 2 communities 1\nm 0 0\nm 1 0\ne 0 1 1.0\ne 1 1 1.0\n"))


def test_missing_membership_rejected(tmp_path):
    with pytest.raises(GraphValidationError, match="membership"):
        load_graph(_write(tmp_path, "nodes 3 communities 1\nm 0 0\nm 1 0\ne 0 1 1.0\n"))


def test_bad_record_reports_line(tmp_path):
    with pytest.raises(GraphFormatError) as ei:
        load_graph(_write(tmp_path, "nodes 2 communities 1\nm 0 0\nm 1 zero\n"))
    assert ei.value.line == 3


def test_disconnected_community_rejected(tmp_path):
    text = "nodes 4 communities 1\nm 0 0\nm 1 0\nm 2 0\nm 3 0\ne 0 1 1.0\ne 2 3 1.0\n"
    with pytest.raises(GraphValidationError, match="disconnected"):
        load_graph(_write(tmp_path, text))


def test_param_validation():
    with pytest.raises(ValueError):
        GraphParams(mu_t=1.5)
    with pytest.raises(ValueError):
        GraphParams(weight_mode="bogus")
