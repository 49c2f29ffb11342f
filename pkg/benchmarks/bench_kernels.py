"""Time the pure-Python and compiled trial loops on the same trials.

    python benchmarks/bench_kernels.py            # desk graph, all strategies
    python benchmarks/bench_kernels.py --full     # 200-node graph, k=80

Every trial is run on both backends and the metric records are compared, so
the timings are for identical work.
"""
import argparse
import time
import warnings

from oppsim.engine import TrialConfig, available_backends, run_trial
from oppsim.graph import GraphParams, generate_graph
from oppsim.seeding import all_centralities

STRATEGIES = ("flooding", "epidemic_random", "epidemic_lr", "nc", "erasure")


def bench(graph, strategy, seeding, k, trials, scores):
    out = {}
    records = {}
    for backend in ("python", "cython"):
        t0 = time.perf_counter()
        records[backend] = [run_trial(TrialConfig(graph, strategy, seeding, k=k, seed=s), backend, scores).to_json()
                            for s in range(trials)]
        out[backend] = (time.perf_counter() - t0) / trials
    return out, records["python"] == records["cython"]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--full", action="store_true", help="200-node, 14-community graph with k=80")
    ap.add_argument("--trials", type=int, default=3)
    ap.add_argument("--seeding", default="80")
    args = ap.parse_args(argv)
    if "cython" not in available_backends():
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation` first")
    warnings.simplefilter("ignore")
    if args.full:
        graph, k = generate_graph(GraphParams(n_communities=14)), 80
    else:
        graph, k = generate_graph(GraphParams(n=50, n_communities=5, maxc=20, seed=1)), 16
    scores = all_centralities(graph)
    print(f"graph: {graph.n} nodes, {graph.n_communities} communities, k={k}, seeding={args.seeding}, "
          f"{args.trials} trials per backend")
    print(f"{'strategy':>16} {'python s/trial':>15} {'cython s/trial':>15} {'speedup':>8} {'identical':>9}")
    for s in STRATEGIES:
        t, same = bench(graph, s, args.seeding, k, args.trials, scores)
        print(f"{s:>16} {t['python']:>15.4f} {t['cython']:>15.4f} {t['python'] / t['cython']:>7.1f}x {str(same):>9}")


if __name__ == "__main__":
    main()
