"""Command-line runner: ``oppsim gen | run | report``.

Experiments are described by an INI file with ``[graph]``, ``[experiment]``
and an optional ``[failure]`` section. Each (strategy, seeding) cell writes
its CSVs into ``<out>/<strategy>__<seeding>/``; ``manifest.json`` in the
output directory records the full config, every trial seed and the status of
each cell.
"""
from __future__ import annotations

import argparse
import configparser
import dataclasses
import datetime as _dt
import json
import logging
import math
import os
import sys
import tempfile
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .engine import FailureModel, TrialConfig, default_backend, run_experiment
from .graph import GraphParams, generate_graph, load_graph, save_graph
from .metrics import (latency_curve, read_csv, write_finish_csv, write_latency_csv,
                      write_per_node_csv, write_transmissions_csv, write_user_finish_csv)
from .seeding import SCHEMES
from .strategies import Strategy

log = logging.getLogger("oppsim")

MANIFEST = "manifest.json"


class ConfigError(ValueError):
    pass


class ReportError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# config

_GRAPH_FIELDS = {f.name: f for f in dataclasses.fields(GraphParams)}


@dataclass
class ExperimentConfig:
    graph_params: Optional[GraphParams]
    graph_path: Optional[str]
    strategies: list
    seedings: list
    k: int
    packet_size: int
    n_trials: int
    base_seed: int
    out: str
    failure: FailureModel = field(default_factory=FailureModel)
    time_grid: str = "auto"
    max_sim_time: Optional[float] = None
    workers: int = 1

    def to_dict(self) -> dict:
        return {
            "graph": dataclasses.asdict(self.graph_params) if self.graph_params else {"path": self.graph_path},
            "strategies": list(self.strategies),
            "seedings": list(self.seedings),
            "k": self.k,
            "packet_size": self.packet_size,
            "n_trials": self.n_trials,
            "base_seed": self.base_seed,
            "out": self.out,
            "failure": self.failure.to_dict(),
            "time_grid": self.time_grid,
            "max_sim_time": self.max_sim_time,
        }


def _typed(section: str, key: str, raw: str, kind):
    try:
        if kind is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        return kind(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {kind.__name__}") from None


def _require(cp, section: str, key: str) -> str:
    if not cp.has_option(section, key) or not cp.get(section, key).strip():
        raise ConfigError(f"missing required field '{key}' in [{section}]")
    return cp.get(section, key).strip()


def _split(raw: str) -> list:
    return [x.strip() for x in raw.replace("\n", ",").split(",") if x.strip()]


def _graph_params(cp, base_dir: Path):
    if not cp.has_section("graph"):
        raise ConfigError("missing section [graph]")
    sec = cp["graph"]
    if sec.get("path", "").strip():
        return None, str((base_dir / sec["path"].strip()).resolve())
    kw = {}
    for key, raw in sec.items():
        if key not in _GRAPH_FIELDS:
            raise ConfigError(f"[graph] unknown field '{key}'")
        ftype = _GRAPH_FIELDS[key].type
        if "Optional" in str(ftype) and raw.strip().lower() in ("", "none"):
            kw[key] = None
            continue
        kind = int if "int" in str(ftype) else float if "float" in str(ftype) else bool if "bool" in str(ftype) else str
        kw[key] = _typed("graph", key, raw, kind)
    try:
        return GraphParams(**kw), None
    except ValueError as exc:
        raise ConfigError(f"[graph] {exc}") from None


def _failure(cp) -> FailureModel:
    if not cp.has_section("failure"):
        return FailureModel()
    sec = cp["failure"]
    kind = sec.get("kind", "none").strip()
    interval = sec.get("interval", "").strip()
    fraction = sec.get("fraction", "").strip()
    try:
        return FailureModel(kind,
                            interval=_typed("failure", "interval", interval, float) if interval else None,
                            fraction=_typed("failure", "fraction", fraction, float) if fraction else None)
    except ValueError as exc:
        raise ConfigError(f"[failure] {exc}") from None


def load_config(path, overrides: Optional[dict] = None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}".replace("\n", " ")) from None
    if not cp.has_section("experiment"):
        raise ConfigError("missing section [experiment]")
    overrides = overrides or {}
    gp, gpath = _graph_params(cp, path.parent)
    ex = "experiment"
    strategies = _split(_require(cp, ex, "strategies"))
    seedings = _split(_require(cp, ex, "seedings"))
    for s in strategies:
        try:
            Strategy(s)
        except ValueError:
            raise ConfigError(f"[experiment] unknown strategy '{s}'") from None
    for s in seedings:
        if s not in SCHEMES:
            raise ConfigError(f"[experiment] unknown seeding '{s}'; choose from {', '.join(SCHEMES)}")
    if not strategies or not seedings:
        raise ConfigError("[experiment] need at least one strategy and one seeding")
    k = _typed(ex, "k", _require(cp, ex, "k"), int)
    if k < 1:
        raise ConfigError("[experiment] k must be >= 1")
    packet_size = _typed(ex, "packet_size", cp.get(ex, "packet_size", fallback="64"), int)
    n_trials = overrides.get("trials") or _typed(ex, "n_trials", _require(cp, ex, "n_trials"), int)
    if n_trials < 1:
        raise ConfigError("[experiment] n_trials must be >= 1")
    base_seed = overrides.get("seed")
    if base_seed is None:
        base_seed = _typed(ex, "base_seed", cp.get(ex, "base_seed", fallback="0"), int)
    out = overrides.get("out") or cp.get(ex, "out", fallback="").strip()
    if not out:
        raise ConfigError("missing required field 'out' in [experiment] (or pass --out)")
    if not overrides.get("out"):
        out = str((path.parent / out).resolve())
    mst = cp.get(ex, "max_sim_time", fallback="").strip()
    cfg = ExperimentConfig(
        graph_params=gp, graph_path=gpath, strategies=strategies, seedings=seedings, k=k,
        packet_size=packet_size, n_trials=n_trials, base_seed=base_seed, out=out,
        failure=_failure(cp), time_grid=cp.get(ex, "time_grid", fallback="auto").strip(),
        max_sim_time=_typed(ex, "max_sim_time", mst, float) if mst else None,
        workers=_typed(ex, "workers", cp.get(ex, "workers", fallback="1"), int),
    )
    parse_grid(cfg.time_grid, [1.0])
    return cfg


def parse_grid(spec: str, ends: list) -> np.ndarray:
    """``auto`` (101 points up to the last finite end time) or ``start:stop:num``."""
    if spec == "auto":
        finite = [t for t in ends if math.isfinite(t)]
        return np.linspace(0.0, max(finite) if finite else 1.0, 101)
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError(f"[experiment] time_grid must be 'auto' or 'start:stop:num', got {spec!r}")
    try:
        lo, hi, num = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ConfigError(f"[experiment] time_grid: cannot parse {spec!r}") from None
    if num < 1 or hi < lo:
        raise ConfigError(f"[experiment] time_grid: need num >= 1 and stop >= start, got {spec!r}")
    return np.linspace(lo, hi, num)


# ---------------------------------------------------------------------------
# commands

def cell_name(strategy: str, seeding: str) -> str:
    return f"{strategy}__{seeding}"


def _write_json(path: Path, obj) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)


def _format_stats(g) -> str:
    st = g.mixing_stats()
    ratio = st["mean_w_intra"] / st["mean_w_inter"] if st["mean_w_inter"] > 0 else math.inf
    return (f"nodes={g.n} communities={g.n_communities} edges={st['edges']} "
            f"mu_t={st['mu_t']:.4f} mu_w={st['mu_w']:.4f} intra_inter_weight_ratio={ratio:.3g}")


def cmd_gen(args) -> int:
    kw = {}
    if args.config:
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
        if not cp.read(args.config):
            raise ConfigError(f"config file not found: {args.config}")
        gp, gpath = _graph_params(cp, Path(args.config).parent)
        if gp is None:
            raise ConfigError("[graph] uses 'path'; gen needs generator parameters")
        kw = dataclasses.asdict(gp)
    for name, attr in (("seed", "seed"), ("n_communities", "communities"), ("n", "nodes"),
                       ("mu_t", "mu_t"), ("mu_w", "mu_w")):
        val = getattr(args, attr)
        if val is not None:
            kw[name] = val
    try:
        params = GraphParams(**kw)
    except ValueError as exc:
        raise ConfigError(f"graph parameters: {exc}") from None
    g = generate_graph(params)
    save_graph(g, args.out)
    print(_format_stats(g))
    print(f"wrote {args.out}")
    return 0


def _run_cell(cfg: ExperimentConfig, graph, strategy: str, seeding: str, cell_dir: Path) -> dict:
    tc = TrialConfig(graph, strategy, seeding, k=cfg.k, failure=cfg.failure, seed=cfg.base_seed,
                     max_sim_time=cfg.max_sim_time)
    res = run_experiment(tc, cfg.n_trials, base_seed=cfg.base_seed, workers=cfg.workers)
    cell_dir.mkdir(parents=True, exist_ok=True)
    ends = [t.network_finish for t in res.trials]
    curve = latency_curve(res.trials, parse_grid(cfg.time_grid, ends))
    write_latency_csv(curve, cell_dir / "latency.csv")
    write_finish_csv(res.trials, cell_dir / "finish.csv")
    write_transmissions_csv(res.trials, cell_dir / "transmissions.csv")
    degrees = graph.degrees()
    write_per_node_csv(res.trials[0], graph.membership, degrees, cell_dir / "per_node.csv")
    write_user_finish_csv(res.trials, graph.membership, degrees, cell_dir / "user_finish.csv")
    return {"status": "ok", "seeds": res.seeds, "max_sim_time": res.max_sim_time,
            "truncated": res.truncated}


def cmd_run(args) -> int:
    cfg = load_config(args.config, {"seed": args.seed, "trials": args.trials, "out": args.out})
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {out} ({exc.strerror})") from None
    if cfg.graph_path:
        graph = load_graph(cfg.graph_path)
    else:
        graph = generate_graph(cfg.graph_params)
    save_graph(graph, out / "graph.txt")
    manifest = {
        "version": __version__,
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "backend": default_backend(),
        "config": cfg.to_dict(),
        "graph_stats": graph.mixing_stats(),
        "cells": {},
    }
    failed = 0
    for strategy in cfg.strategies:
        for seeding in cfg.seedings:
            name = cell_name(strategy, seeding)
            try:
                with warnings.catch_warnings(record=True) as caught:
                    warnings.simplefilter("always")
                    info = _run_cell(cfg, graph, strategy, seeding, out / name)
                info["warnings"] = sorted({str(w.message) for w in caught})
            except Exception as exc:  # one bad cell must not sink the rest
                failed += 1
                info = {"status": "error", "error": f"{type(exc).__name__}: {exc}",
                        "seeds": [cfg.base_seed + i for i in range(cfg.n_trials)]}
                print(f"cell {name} failed: {type(exc).__name__}: {exc}", file=sys.stderr)
            manifest["cells"][name] = {"strategy": strategy, "seeding": seeding, **info}
            flag = "*" if info.get("truncated") else ""
            print(f"{name}: {info['status']}{flag}")
    _write_json(out / MANIFEST, manifest)
    print(f"wrote {out / MANIFEST}")
    return 1 if failed else 0


def _cell_summary(cell_dir: Path) -> str:
    rows = read_csv(cell_dir / "finish.csv")
    finish = [float(r["finish_time"]) for r in rows if r["truncated"] == "0"]
    trunc = len(rows) - len(finish)
    if not finish:
        return "trunc*"
    arr = np.asarray(finish)
    txt = f"{np.median(arr):.2f}({arr.std():.2f})"
    return txt + "*" if trunc else txt


def build_report(out_dir) -> str:
    out = Path(out_dir)
    if not out.is_dir():
        raise ReportError(f"not a directory: {out}")
    mpath = out / MANIFEST
    if not mpath.is_file():
        raise ReportError(f"no {MANIFEST} in {out}; run 'oppsim run' first")
    manifest = json.loads(mpath.read_text())
    strategies = manifest["config"]["strategies"]
    seedings = manifest["config"]["seedings"]
    missing = [cell_name(st, sd) for sd in seedings for st in strategies
               if not (out / cell_name(st, sd) / "finish.csv").is_file()]
    if missing and len(missing) == len(strategies) * len(seedings):
        raise ReportError(f"no cell outputs in {out}: missing {', '.join(missing)}")
    table = [["seeding"] + strategies]
    for sd in seedings:
        row = [sd]
        for st in strategies:
            name = cell_name(st, sd)
            row.append("missing" if name in missing else _cell_summary(out / name))
        table.append(row)
    widths = [max(len(r[i]) for r in table) for i in range(len(table[0]))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in table]
    lines.insert(1, "  ".join("-" * w for w in widths))
    lines.append("median(std) of network finish time; * = some trials truncated (excluded)")
    if missing:
        lines.append(f"missing cells: {', '.join(missing)}")
    return "\n".join(lines)


def cmd_report(args) -> int:
    print(build_report(args.out_dir))
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="oppsim", description="Opportunistic content dissemination simulator")
    p.add_argument("--version", action="version", version=f"oppsim {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a community contact graph")
    g.add_argument("--config", help="INI file whose [graph] section gives the parameters")
    g.add_argument("--out", required=True, help="graph file to write")
    g.add_argument("--seed", type=int)
    g.add_argument("--communities", type=int, help="force this many communities")
    g.add_argument("--nodes", type=int)
    g.add_argument("--mu-t", dest="mu_t", type=float)
    g.add_argument("--mu-w", dest="mu_w", type=float)
    g.set_defaults(func=cmd_gen)

    r = sub.add_parser("run", help="run every strategy x seeding cell of a config")
    r.add_argument("config")
    r.add_argument("--seed", type=int, help="override base_seed")
    r.add_argument("--trials", type=int, help="override n_trials")
    r.add_argument("--out", help="override the output directory")
    r.set_defaults(func=cmd_run)

    rep = sub.add_parser("report", help="print the median(std) finish-time table of a run")
    rep.add_argument("out_dir")
    rep.set_defaults(func=cmd_report)
    return p


_ERROR_KINDS = ((ConfigError, "config"), (ReportError, "report"), (OSError, "io"), (ValueError, "value"),
                (RuntimeError, "runtime"))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except Exception as exc:
        kind = next((k for cls, k in _ERROR_KINDS if isinstance(exc, cls)), "internal")
        msg = str(exc).replace("\n", " ")
        print(f"error: {kind}: {msg}", file=sys.stderr)
        return 2 if kind == "config" else 1


if __name__ == "__main__":
    sys.exit(main())
