"""LT fountain codes: Robust Soliton degrees, encoder and peeling decoder."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .rlnc import FilePayload


class IntegrityError(ValueError):
    """Two derivations of the same source packet disagree."""


def c_band(k: int, delta: float) -> tuple[float, float]:
    """Admissible interval for the Robust Soliton constant ``c``."""
    if k < 2:
        raise ValueError("the c band needs k >= 2")
    base = math.sqrt(k) / math.log(k / delta)
    return base / (k - 1), base / 2


@dataclass(frozen=True)
class SolitonParams:
    k: int
    c: Optional[float] = None
    delta: float = 0.5

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.c is None:
            if self.k >= 2:
                lo, hi = c_band(self.k, self.delta)
                object.__setattr__(self, "c", (lo + hi) / 2)
            else:
                object.__setattr__(self, "c", 1.0)
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.k >= 2:
            lo, hi = c_band(self.k, self.delta)
            if not lo <= self.c <= hi:
                warnings.warn(
                    f"c={self.c:g} outside the admissible band [{lo:.4g}, {hi:.4g}] for k={self.k}",
                    stacklevel=3,
                )

    @property
    def R(self) -> float:
        return self.c * math.log(self.k / self.delta) * math.sqrt(self.k)

    @property
    def spike(self) -> int:
        return min(int(round(self.k / self.R)), self.k)


def ideal_soliton(k: int) -> np.ndarray:
    rho = np.empty(k)
    rho[0] = 1.0 / k
    i = np.arange(2, k + 1, dtype=float)
    rho[1:] = 1.0 / (i * (i - 1))
    return rho


def robust_soliton(params: SolitonParams, include_tau: bool = True) -> np.ndarray:
    """Degree probabilities ``mu[d-1]`` for d = 1..k.

    ``include_tau=False`` drops the spike/tail term, leaving the normalised
    ideal soliton.
    """
    k = params.k
    rho = ideal_soliton(k)
    if k == 1:
        return np.ones(1)
    R = params.R
    if k / R < 1:
        raise ValueError(f"k/R = {k / R:.4g} < 1: Robust Soliton undefined for these parameters")
    tau = np.zeros(k)
    if include_tau:
        s = params.spike
        d = np.arange(1, s, dtype=float)
        tau[: s - 1] = R / (d * k)
        tau[s - 1] = R * math.log(R / params.delta) / k
    mu = rho + tau
    return mu / mu.sum()


@dataclass(frozen=True)
class LtSymbol:
    neighbors: frozenset
    payload: Optional[np.ndarray] = field(default=None, compare=False)
    symbol_id: int = -1

    def __post_init__(self):
        if len(self.neighbors) == 0:
            raise ValueError("an LT symbol needs at least one neighbour")

    @property
    def degree(self) -> int:
        return len(self.neighbors)


def sample_degree(mu: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(mu)
    d = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")) + 1
    return min(d, len(mu))


def lt_encode(file: Optional[FilePayload], params: SolitonParams, rng: np.random.Generator,
              symbol_id: int = -1, mu: Optional[np.ndarray] = None) -> LtSymbol:
    """Draw one encoding symbol.

    ``file`` may be None to produce a payload-free symbol (neighbour set only);
    ``mu`` can be passed to avoid recomputing the degree distribution.
    """
    k = params.k
    if file is not None and file.k != k:
        raise ValueError(f"file has {file.k} packets, params expect {k}")
    if mu is None:
        mu = robust_soliton(params)
    d = sample_degree(mu, rng)
    nbrs = rng.choice(k, size=d, replace=False)
    payload = None
    if file is not None:
        payload = np.bitwise_xor.reduce(file.packets[nbrs], axis=0)
    return LtSymbol(frozenset(int(x) for x in nbrs), payload, symbol_id)


class LtDecoder:
    """Incremental peeling decoder.

    Symbols may be added one at a time; each addition runs the ripple to its
    fixpoint. Payloads are XOR-ed only when every symbol carries one.
    """

    def __init__(self, k: int):
        self.k = k
        self.recovered: dict[int, Optional[np.ndarray]] = {}
        self._unknown: dict[int, set] = {}
        self._value: dict[int, Optional[np.ndarray]] = {}
        self._by_packet: dict[int, set] = {}
        self._symbols: dict[int, LtSymbol] = {}
        self._next_key = 0

    @property
    def recovered_count(self) -> int:
        return len(self.recovered)

    @property
    def complete(self) -> bool:
        return len(self.recovered) == self.k

    def add(self, sym: LtSymbol) -> int:
        """Ingest a symbol; return how many packets became newly recovered."""
        if any(not 0 <= x < self.k for x in sym.neighbors):
            raise ValueError(f"symbol neighbours out of range for k={self.k}")
        before = len(self.recovered)
        key = self._next_key
        self._next_key += 1
        self._symbols[key] = sym
        value = None if sym.payload is None else sym.payload.copy()
        unknown = set()
        for p in sym.neighbors:
            if p in self.recovered:
                if value is not None and self.recovered[p] is not None:
                    value ^= self.recovered[p]
            else:
                unknown.add(p)
        self._value[key] = value
        self._unknown[key] = unknown
        for p in unknown:
            self._by_packet.setdefault(p, set()).add(key)
        if len(unknown) == 1:
            self._peel([key])
        return len(self.recovered) - before

    def is_redundant(self, sym: LtSymbol) -> bool:
        """True when every neighbour of ``sym`` is already recovered."""
        return all(p in self.recovered for p in sym.neighbors)

    def _peel(self, ripple: list) -> None:
        while ripple:
            key = ripple.pop()
            unknown = self._unknown[key]
            if len(unknown) != 1:
                continue
            p = unknown.pop()
            value = self._value[key]
            self.recovered[p] = value
            for other in self._by_packet.pop(p, ()):
                if other == key:
                    continue
                u = self._unknown[other]
                u.discard(p)
                v = self._value[other]
                if v is not None and value is not None:
                    v ^= value
                if len(u) == 1:
                    ripple.append(other)

    def check_consistency(self) -> None:
        """Raise IntegrityError if a fully resolved symbol disagrees with recovered packets."""
        for key, sym in self._symbols.items():
            if sym.payload is None or self._unknown[key]:
                continue
            acc = np.zeros_like(sym.payload)
            for p in sym.neighbors:
                val = self.recovered.get(p)
                if val is None:
                    break
                acc ^= val
            else:
                if not np.array_equal(acc, sym.payload):
                    raise IntegrityError(f"symbol {sym.symbol_id} contradicts recovered packets {sorted(sym.neighbors)}")

    def decoded(self) -> Optional[FilePayload]:
        if not self.complete:
            return None
        if any(v is None for v in self.recovered.values()):
            return None
        return FilePayload(np.stack([self.recovered[i] for i in range(self.k)]))


@dataclass
class PeelResult:
    decoded: Optional[FilePayload]
    recovered_count: int


def lt_peel_decode(symbols: Iterable[LtSymbol], k: int) -> PeelResult:
    dec = LtDecoder(k)
    for s in symbols:
        dec.add(s)
    dec.check_consistency()
    return PeelResult(dec.decoded(), dec.recovered_count)


def overhead_symbols(k: int, delta: float) -> int:
    """Symbol budget ``k + ceil(ln^2(k/delta) * sqrt(k))`` with the big-O constant set to 1."""
    return k + math.ceil(math.log(k / delta) ** 2 * math.sqrt(k))
