"""Trial records, latency curves, finish-time statistics and CSV export."""
from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np


@dataclass
class TrialMetrics:
    """Outcome of one trial.

    ``finish_times`` only lists nodes that reconstructed the file and were
    still alive at the end. ``per_node`` maps node id to a dict with keys
    ``sent``, ``received`` and ``noninnovative_received``.
    """

    n_nodes: int
    finish_times: dict = field(default_factory=dict)
    meetings_total: int = 0
    transmissions_total: int = 0
    innovative_total: int = 0
    noninnovative_total: int = 0
    per_node: dict = field(default_factory=dict)
    truncated: bool = False
    seeded_total: int = 0
    failures: list = field(default_factory=list)
    end_time: float = 0.0
    seed: Optional[int] = None

    @property
    def network_finish(self) -> float:
        """Time the last surviving node finished; inf for truncated trials."""
        if self.truncated or not self.finish_times:
            return math.inf
        return max(self.finish_times.values())

    def to_dict(self) -> dict:
        return {
            "n_nodes": self.n_nodes,
            "seed": self.seed,
            "truncated": self.truncated,
            "end_time": self.end_time,
            "meetings_total": self.meetings_total,
            "transmissions_total": self.transmissions_total,
            "innovative_total": self.innovative_total,
            "noninnovative_total": self.noninnovative_total,
            "seeded_total": self.seeded_total,
            "failures": [[float(t), int(v)] for t, v in self.failures],
            "finish_times": {str(v): float(t) for v, t in sorted(self.finish_times.items())},
            "per_node": {str(v): dict(d) for v, d in sorted(self.per_node.items())},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, d: dict) -> "TrialMetrics":
        return cls(
            n_nodes=d["n_nodes"],
            finish_times={int(v): t for v, t in d["finish_times"].items()},
            meetings_total=d["meetings_total"],
            transmissions_total=d["transmissions_total"],
            innovative_total=d["innovative_total"],
            noninnovative_total=d["noninnovative_total"],
            per_node={int(v): x for v, x in d["per_node"].items()},
            truncated=d["truncated"],
            seeded_total=d["seeded_total"],
            failures=[tuple(f) for f in d["failures"]],
            end_time=d["end_time"],
            seed=d.get("seed"),
        )


@dataclass
class LatencyCurve:
    times: np.ndarray
    percent: np.ndarray


def latency_curve(trials: Sequence[TrialMetrics], time_grid) -> LatencyCurve:
    grid = np.asarray(time_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("time grid is empty")
    if not trials:
        raise ValueError("need at least one trial")
    acc = np.zeros(grid.size)
    for tr in trials:
        ft = np.sort(np.fromiter(tr.finish_times.values(), dtype=float, count=len(tr.finish_times)))
        acc += np.searchsorted(ft, grid, side="right") / tr.n_nodes * 100.0
    return LatencyCurve(grid, acc / len(trials))


def median_finish(trials: Sequence[TrialMetrics]) -> dict:
    """Median and population standard deviation of per-trial network finish times."""
    done = [t.network_finish for t in trials if not t.truncated]
    if not done:
        raise ValueError("all trials are truncated")
    arr = np.asarray(done)
    return {"median": float(np.median(arr)), "std": float(arr.std()), "n": len(done),
            "truncated": len(trials) - len(done)}


def transmission_summary(trials: Sequence[TrialMetrics]) -> dict:
    keys = ("meetings_total", "transmissions_total", "innovative_total", "noninnovative_total")
    if not trials:
        return {k: float("nan") for k in keys}
    return {k: float(np.mean([getattr(t, k) for t in trials])) for k in keys}


# ---------------------------------------------------------------------------
# CSV

def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.6g}"
    return str(x)


def _atomic_write(path, header: Sequence[str], rows: Iterable[Sequence], comment: Optional[str] = None) -> None:
    path = Path(path)
    buf = io.StringIO()
    if comment:
        buf.write(f"# {comment}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(buf.getvalue())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_latency_csv(curve: LatencyCurve, path) -> None:
    _atomic_write(path, ["t", "percent_complete"], zip(curve.times, curve.percent))


def write_finish_csv(trials: Sequence[TrialMetrics], path) -> None:
    """One row per trial; the header comment notes the std convention used by the report."""
    rows = [(i, t.seed if t.seed is not None else "", t.network_finish, int(t.truncated), len(t.finish_times))
            for i, t in enumerate(trials)]
    _atomic_write(path, ["trial", "seed", "finish_time", "truncated", "finished_nodes"], rows,
                  comment="finish_time = max over nodes; summary std is population (divide by N)")


def write_transmissions_csv(trials: Sequence[TrialMetrics], path) -> None:
    rows = [(i, t.meetings_total, t.transmissions_total, t.innovative_total, t.noninnovative_total,
             t.seeded_total, int(t.truncated)) for i, t in enumerate(trials)]
    _atomic_write(path, ["trial", "meetings", "transmissions", "innovative", "noninnovative", "seeded",
                         "truncated"], rows)


def write_per_node_csv(trial: TrialMetrics, membership: Sequence[int], degrees: Sequence[int], path) -> None:
    order = sorted(range(trial.n_nodes), key=lambda v: (membership[v], degrees[v], v))
    rows = []
    for v in order:
        d = trial.per_node.get(v, {})
        rows.append((v, membership[v], d.get("sent", 0), d.get("received", 0), d.get("noninnovative_received", 0)))
    _atomic_write(path, ["node", "community", "sent", "received", "noninnovative"], rows)


def write_csv(obj, path, **kw) -> None:
    """Dispatch on the metric object: a LatencyCurve, a list of trials, or a single trial (per-node)."""
    if isinstance(obj, LatencyCurve):
        write_latency_csv(obj, path)
    elif isinstance(obj, TrialMetrics):
        write_per_node_csv(obj, kw["membership"], kw["degrees"], path)
    elif kw.get("kind") == "transmissions":
        write_transmissions_csv(obj, path)
    else:
        write_finish_csv(obj, path)


def read_csv(path) -> list:
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def write_user_finish_csv(trials: Sequence[TrialMetrics], membership: Sequence[int], degrees: Sequence[int],
                          path) -> None:
    """Median finish time per node over the trials it finished in; sorted by community, degree, id."""
    order = sorted(range(len(membership)), key=lambda v: (membership[v], degrees[v], v))
    rows = []
    for v in order:
        ts = [t.finish_times[v] for t in trials if v in t.finish_times]
        med = float(np.median(ts)) if ts else math.inf
        rows.append((v, membership[v], degrees[v], med, len(ts)))
    _atomic_write(path, ["node", "community", "degree", "median_finish", "trials_finished"], rows)
