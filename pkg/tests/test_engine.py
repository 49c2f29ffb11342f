import itertools
import re
import warnings

import numpy as np
import pytest
from scipy.stats import kstest

from oppsim import engine
from oppsim.engine import (FailureModel, TrialConfig, available_backends, next_meeting_time, pilot_horizon,
                           run_experiment, run_trial)
from oppsim.graph import ContactGraph
from oppsim.metrics import median_finish
from oppsim.seeding import all_centralities, select_mcu

needs_kernel = pytest.mark.skipif("cython" not in available_backends(), reason="compiled kernel not built")
BACKENDS = available_backends()


def test_meeting_interval_mean_unit_rate():
    r = np.random.default_rng(0)
    x = np.array([next_meeting_time(0.0, 1.0, r) for _ in range(100_000)])
    assert (x > 0).all()
    assert abs(x.mean() - 1.0) < 3 / np.sqrt(len(x))
    assert kstest(x, "expon").pvalue > 0.001


def test_meeting_interval_mean_slow_rate():
    r = np.random.default_rng(1)
    x = np.array([next_meeting_time(5.0, 0.001, r) - 5.0 for _ in range(100_000)])
    assert abs(x.mean() - 1000) / 1000 < 0.02
    assert kstest(x, "expon", args=(0, 1000)).pvalue > 0.001


def test_meeting_rate_must_be_positive():
    with pytest.raises(ValueError):
        next_meeting_time(0.0, 0.0, np.random.default_rng(0))


@pytest.mark.parametrize("backend", BACKENDS)
def test_two_node_minimal_system(backend):
    g = ContactGraph(2, [0, 0], {(0, 1): 2.0})
    log = []
    cfg = TrialConfig(g, "epidemic_random", "100", k=1, seed=3)
    m = run_trial(cfg, backend=backend)
    run_trial(cfg, event_log=log.append)
    first = float(re.match(r"t=(\S+) ev=meet", log[0]).group(1))
    assert m.transmissions_total == 1
    assert max(m.finish_times.values()) == pytest.approx(first)
    assert sorted(m.finish_times.values())[0] == 0.0


@pytest.mark.parametrize("backend", BACKENDS)
def test_complete_graph_conservation(backend):
    g = ContactGraph(4, [0] * 4, {(u, v): 1.0 for u, v in itertools.combinations(range(4), 2)})
    for s in range(20):
        m = run_trial(TrialConfig(g, "epidemic_lr", "100", k=2, seed=s), backend=backend)
        assert not m.truncated
        assert m.transmissions_total == 4 * 2 - 2


@pytest.mark.parametrize("backend", BACKENDS)
def test_same_seed_identical(desk_graph, backend):
    cfg = TrialConfig(desk_graph, "nc", "80", k=16, seed=11)
    assert run_trial(cfg, backend=backend).to_json() == run_trial(cfg, backend=backend).to_json()


@pytest.mark.parametrize("backend", BACKENDS)
def test_periodic_schedule(backend):
    g = ContactGraph(30, [0] * 30, {(i, i + 1): 1e-4 for i in range(29)})
    m = run_trial(TrialConfig(g, "epidemic_random", "100", k=5, seed=0, max_sim_time=10,
                              failure=FailureModel.periodic(1.0)), backend=backend)
    assert m.truncated
    assert [t for t, _ in m.failures] == [float(i) for i in range(1, 11)]
    assert len({v for _, v in m.failures}) == 10


def test_periodic_population_exhausted():
    g = ContactGraph(3, [0] * 3, {(0, 1): 1e-4, (1, 2): 1e-4})
    # 80% of the file is seeded, so nobody can finish without meeting
    m = run_trial(TrialConfig(g, "epidemic_random", "80", k=5, seed=0, max_sim_time=10,
                              failure=FailureModel.periodic(1.0)))
    assert [t for t, _ in m.failures] == [1.0, 2.0, 3.0]
    assert m.truncated and not m.finish_times


def _audit(log):
    dead = set()
    for line in log:
        if " ev=fail " in line:
            dead.add(int(line.split("node=")[1]))
        elif " ev=meet " in line:
            u = int(re.search(r" u=(\d+)", line).group(1))
            v = int(re.search(r" v=(\d+)", line).group(1))
            assert u not in dead and v not in dead, line
    return dead


def test_mcu_dies_after_half_its_seeded_packets(default_graph):
    scores = all_centralities(default_graph)
    mcus = {select_mcu(s) for s in scores.values()}
    log = []
    m = run_trial(TrialConfig(default_graph, "epidemic_random", "s2", k=80, seed=5, max_sim_time=300,
                              failure=FailureModel.mcu_partial(0.5)), scores=scores, event_log=log.append)
    spread = {v: set() for v in mcus}
    at_death = {}
    for line in log:
        if " ev=fail " in line:
            v = int(line.split("node=")[1])
            at_death[v] = len(spread[v])
        elif " ev=meet " in line:
            d = dict(kv.split("=") for kv in line.split()[2:])
            u, v = int(d["u"]), int(d["v"])
            if u in mcus and d["ab"] != "-":
                spread[u].add(int(d["ab"]))
            if v in mcus and d["ba"] != "-":
                spread[v].add(int(d["ba"]))
    assert set(at_death) == mcus
    assert set(at_death.values()) == {40}
    assert {v for _, v in m.failures} == mcus
    _audit(log)


def test_dead_nodes_never_meet(desk_graph):
    log = []
    run_trial(TrialConfig(desk_graph, "nc", "100", k=16, seed=2, failure=FailureModel.periodic(0.3)),
              event_log=log.append)
    assert _audit(log)


def test_failure_model_validation():
    with pytest.raises(ValueError):
        FailureModel.periodic(0)
    with pytest.raises(ValueError):
        FailureModel.mcu_partial(1.0)
    with pytest.raises(ValueError):
        FailureModel("meteor")
    assert FailureModel.mcu_partial(0.5).threshold(80) == 40
    assert FailureModel.mcu_partial(0.25).threshold(10) == 3


def test_apply_failure_requires_model():
    with pytest.raises(ValueError):
        engine.apply_failure(FailureModel(), [], 0.0, np.random.default_rng(0))


CELLS = list(itertools.product(
    ["flooding", "epidemic_random", "epidemic_lr", "nc", "erasure"],
    ["150", "100", "80", "random", "s2", "s1-degree"],
    [FailureModel(), FailureModel.periodic(2.0), FailureModel.mcu_partial(0.5)],
))


@needs_kernel
@pytest.mark.parametrize("strategy,seeding,failure", CELLS,
                         ids=[f"{a}-{b}-{c.kind}" for a, b, c in CELLS])
def test_backends_bit_identical(desk_graph, strategy, seeding, failure):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cfg = TrialConfig(desk_graph, strategy, seeding, k=16, seed=3, failure=failure, max_sim_time=3000)
        a = run_trial(cfg, backend="python")
        b = run_trial(cfg, backend="cython")
    assert a.to_json() == b.to_json()


def test_conservation_with_python_backend(desk_graph):
    for seeding, seeded in (("150", 120), ("100", 80), ("80", 65), ("random", 80)):
        m = run_trial(TrialConfig(desk_graph, "epidemic_random", seeding, k=16, seed=1), backend="python")
        assert m.seeded_total == seeded
        assert m.transmissions_total == 50 * 16 - seeded


def test_experiment_seeds_and_reproducibility(desk_graph):
    cfg = TrialConfig(desk_graph, "epidemic_lr", "90", k=16)
    a = run_experiment(cfg, 5, base_seed=40)
    b = run_experiment(cfg, 5, base_seed=40)
    assert a.seeds == [40, 41, 42, 43, 44]
    assert [t.to_json() for t in a.trials] == [t.to_json() for t in b.trials]
    assert median_finish(a.trials) == median_finish(b.trials)


def test_single_trial_experiment_is_the_trial(desk_graph):
    cfg = TrialConfig(desk_graph, "nc", "100", k=16, max_sim_time=1e4)
    res = run_experiment(cfg, 1, base_seed=7)
    single = run_trial(TrialConfig(desk_graph, "nc", "100", k=16, seed=7, max_sim_time=1e4))
    assert res.trials[0].to_json() == single.to_json()
    assert median_finish(res.trials)["median"] == single.network_finish


def test_parallel_matches_serial(desk_graph):
    cfg = TrialConfig(desk_graph, "erasure", "100", k=16)
    a = run_experiment(cfg, 4, base_seed=0, workers=2)
    b = run_experiment(cfg, 4, base_seed=0, workers=1)
    assert [t.to_json() for t in a.trials] == [t.to_json() for t in b.trials]


def test_pilot_sets_horizon(desk_graph):
    cfg = TrialConfig(desk_graph, "epidemic_random", "100", k=16, seed=0)
    h = pilot_horizon(cfg)
    assert h == pytest.approx(100 * run_trial(cfg).network_finish)
    assert run_experiment(cfg, 2).max_sim_time == h


def test_default_experiment_fifty_trials(desk_graph):
    res = run_experiment(TrialConfig(desk_graph, "nc", "150", k=16), 50, base_seed=0)
    assert len(res.trials) == 50 and not res.any_truncated
    assert median_finish(res.trials)["n"] == 50


def test_unknown_backend(desk_graph):
    with pytest.raises(ValueError):
        run_trial(TrialConfig(desk_graph, "nc", "100", k=16), backend="fortran")
