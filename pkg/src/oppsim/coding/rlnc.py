"""Random linear network coding over GF(256)."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .._rng import uniform_index
from . import gf256
from .gf256 import INV, MUL


@dataclass
class FilePayload:
    """A file split into ``k`` equally sized byte blocks (rows of ``packets``)."""

    packets: np.ndarray

    def __post_init__(self):
        self.packets = np.asarray(self.packets, dtype=np.uint8)
        if self.packets.ndim != 2 or self.packets.shape[0] < 1:
            raise ValueError("file must hold at least one packet as a 2-D byte array")

    @property
    def k(self) -> int:
        return self.packets.shape[0]

    @property
    def packet_size(self) -> int:
        return self.packets.shape[1]

    @classmethod
    def random(cls, k: int, packet_size: int, rng: np.random.Generator) -> "FilePayload":
        return cls(rng.integers(0, 256, size=(k, packet_size), dtype=np.uint8))

    @classmethod
    def from_bytes(cls, data: bytes, k: int) -> "FilePayload":
        size = -(-len(data) // k)
        buf = np.zeros(k * size, dtype=np.uint8)
        buf[: len(data)] = np.frombuffer(data, dtype=np.uint8)
        return cls(buf.reshape(k, size))

    def __eq__(self, other):
        if not isinstance(other, FilePayload):
            return NotImplemented
        return np.array_equal(self.packets, other.packets)


@dataclass
class RlncPacket:
    coeffs: np.ndarray
    payload: Optional[np.ndarray] = None

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.uint8)
        if self.payload is not None:
            self.payload = np.asarray(self.payload, dtype=np.uint8)


def rlnc_encode(file: FilePayload, coeffs) -> RlncPacket:
    coeffs = np.asarray(coeffs, dtype=np.uint8)
    if coeffs.shape != (file.k,):
        raise ValueError(f"expected {file.k} coefficients, got shape {coeffs.shape}")
    return RlncPacket(coeffs, gf256.combine(coeffs, file.packets))


def draw_coefficients(rng: np.random.Generator, m: int) -> np.ndarray:
    """``m`` uniform GF(256) elements, redrawn as a block while all are zero."""
    while True:
        c = np.array([uniform_index(rng, 256) for _ in range(m)], dtype=np.uint8)
        if c.any():
            return c


def rlnc_recombine(buffer: Sequence[RlncPacket], rng: np.random.Generator) -> RlncPacket:
    """Random GF(256) combination of the packets in ``buffer``.

    One coefficient is drawn per buffered packet; the whole draw is repeated
    whenever the resulting coefficient vector is all zero.
    """
    if len(buffer) == 0:
        raise ValueError("cannot recombine an empty buffer")
    rows = np.stack([p.coeffs for p in buffer])
    with_payload = all(p.payload is not None for p in buffer)
    payloads = np.stack([p.payload for p in buffer]) if with_payload else None
    r, coeffs = draw_combination(rows, rng)
    payload = gf256.combine(r, payloads) if with_payload else None
    return RlncPacket(coeffs, payload)


def draw_combination(rows: np.ndarray, rng: np.random.Generator):
    """Draw mixing weights for ``rows`` until the combination is nonzero.

    Returns ``(weights, combined_row)``.
    """
    m = rows.shape[0]
    while True:
        r = np.array([uniform_index(rng, 256) for _ in range(m)], dtype=np.uint8)
        v = gf256.combine(r, rows)
        if v.any():
            return r, v


class RlncDecoder:
    """Incremental decoder keeping received rows in reduced row-echelon form.

    Payloads are optional: with ``packet_size=None`` only the coefficient
    space is tracked, which is all the simulator needs to decide
    innovativeness and completion.
    """

    def __init__(self, k: int, packet_size: Optional[int] = None):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.k = k
        self.packet_size = packet_size
        self.rows = np.zeros((0, k), dtype=np.uint8)
        self.payloads = None if packet_size is None else np.zeros((0, packet_size), dtype=np.uint8)
        self.pivots: list[int] = []

    @property
    def rank(self) -> int:
        return len(self.pivots)

    @property
    def complete(self) -> bool:
        return self.rank == self.k

    def reduce(self, coeffs: np.ndarray, payload=None):
        """Eliminate the pivot columns of ``coeffs`` (and ``payload``) against the basis."""
        v = np.array(coeffs, dtype=np.uint8, copy=True)
        p = None if payload is None else np.array(payload, dtype=np.uint8, copy=True)
        for i, col in enumerate(self.pivots):
            c = v[col]
            if c:
                v ^= MUL[c][self.rows[i]]
                if p is not None:
                    p ^= MUL[c][self.payloads[i]]
        return v, p

    def is_innovative(self, coeffs) -> bool:
        v, _ = self.reduce(coeffs)
        return bool(v.any())

    def ingest(self, packet: RlncPacket) -> bool:
        if packet.coeffs.shape != (self.k,):
            raise ValueError(f"coefficient vector has length {packet.coeffs.shape[0]}, expected {self.k}")
        track = self.payloads is not None
        if track and packet.payload is None:
            raise ValueError("decoder tracks payloads but packet has none")
        v, p = self.reduce(packet.coeffs, packet.payload if track else None)
        nz = np.flatnonzero(v)
        if nz.size == 0:
            return False
        col = int(nz[0])
        f = INV[v[col]]
        v = MUL[f][v]
        if track:
            p = MUL[f][p]
        for i in range(len(self.pivots)):
            c = self.rows[i, col]
            if c:
                self.rows[i] ^= MUL[c][v]
                if track:
                    self.payloads[i] ^= MUL[c][p]
        pos = int(np.searchsorted(self.pivots, col))
        self.pivots.insert(pos, col)
        self.rows = np.insert(self.rows, pos, v, axis=0)
        if track:
            self.payloads = np.insert(self.payloads, pos, p, axis=0)
        return True

    def decoded(self) -> Optional[FilePayload]:
        if not self.complete or self.payloads is None:
            return None
        # Full rank RREF is the identity, so the payload rows are the packets.
        return FilePayload(self.payloads.copy())

    def packets(self) -> list[RlncPacket]:
        """The basis rows as packets, in pivot order."""
        if self.payloads is None:
            return [RlncPacket(r.copy()) for r in self.rows]
        return [RlncPacket(r.copy(), p.copy()) for r, p in zip(self.rows, self.payloads)]


def rlnc_ingest(dec: RlncDecoder, p: RlncPacket) -> bool:
    """Feed ``p`` to ``dec``; True iff the decoder's rank increased."""
    return dec.ingest(p)
