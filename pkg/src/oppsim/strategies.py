"""Per-meeting packet selection for flooding, epidemic, network coding and LT erasure coding.

Each function decides what one side sends to the other in a single meeting
and never mutates the receiver; the engine applies both directions after
both selections are made. All random choices go through ``uniform_index``
over candidates in ascending id order, which the compiled kernel mirrors.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from ._rng import uniform_index
from .coding.lt import LtDecoder
from .coding.rlnc import RlncDecoder, RlncPacket, draw_combination


class Strategy(str, Enum):
    FLOODING = "flooding"
    EPIDEMIC_RANDOM = "epidemic_random"
    EPIDEMIC_LR = "epidemic_lr"
    NC = "nc"
    ERASURE = "erasure"

    @property
    def code(self) -> int:
        return list(Strategy).index(self)

    @property
    def plain(self) -> bool:
        return self in (Strategy.FLOODING, Strategy.EPIDEMIC_RANDOM, Strategy.EPIDEMIC_LR)

    @property
    def local_rarest(self) -> bool:
        return self in (Strategy.EPIDEMIC_LR, Strategy.ERASURE)


@dataclass
class NodeState:
    """Mutable per-node state for one trial.

    ``buffer`` holds packet ids (plain strategies) or symbol ids (erasure).
    For network coding the decoder's basis is the buffer.
    """

    id: int
    k: int
    buffer: set = field(default_factory=set)
    decoder: Optional[object] = None
    forwarded_log: dict = field(default_factory=dict)
    neighbor_summaries: dict = field(default_factory=dict)
    rarity: Counter = field(default_factory=Counter)
    alive: bool = True
    finish_time: Optional[float] = None

    @classmethod
    def empty(cls, node_id: int, k: int, strategy: Strategy) -> "NodeState":
        st = cls(node_id, k)
        if strategy is Strategy.NC:
            st.decoder = RlncDecoder(k)
        elif strategy is Strategy.ERASURE:
            st.decoder = LtDecoder(k)
        return st

    @property
    def complete(self) -> bool:
        if self.decoder is not None:
            return self.decoder.complete
        return len(self.buffer) == self.k

    @property
    def holds_anything(self) -> bool:
        if isinstance(self.decoder, RlncDecoder):
            return self.decoder.rank > 0
        return bool(self.buffer)

    def observe(self, peer: int, ids) -> None:
        """Replace the stored summary of ``peer`` and update rarity counts."""
        new = frozenset(ids)
        old = self.neighbor_summaries.get(peer, frozenset())
        for x in old - new:
            self.rarity[x] -= 1
            if not self.rarity[x]:
                del self.rarity[x]
        for x in new - old:
            self.rarity[x] += 1
        self.neighbor_summaries[peer] = new


def _pick(candidates: list, rng) -> Optional[int]:
    if not candidates:
        return None
    return candidates[uniform_index(rng, len(candidates))]


def flooding_select(a: NodeState, b: NodeState, rng) -> Optional[int]:
    """Random packet from ``a`` not yet forwarded to ``b``; logs the send."""
    sent = a.forwarded_log.setdefault(b.id, set())
    p = _pick(sorted(a.buffer - sent), rng)
    if p is not None:
        sent.add(p)
    return p


def epidemic_select_random(a: NodeState, b: NodeState, rng) -> Optional[int]:
    return _pick(sorted(a.buffer - b.buffer), rng)


def epidemic_select_local_rarest(a: NodeState, b: NodeState, rarity_view, rng) -> Optional[int]:
    """Missing packet that ``a`` holds with the fewest copies around ``b``.

    ``rarity_view`` maps packet id to its count; absent ids count as zero.
    """
    missing = sorted(a.buffer - b.buffer)
    if not missing:
        return None
    counts = [rarity_view.get(x, 0) for x in missing]
    low = min(counts)
    return _pick([x for x, c in zip(missing, counts) if c == low], rng)


def nc_exchange(a: NodeState, b: NodeState, rng) -> Optional[RlncPacket]:
    """A random combination of ``a``'s basis, or None if ``a`` holds nothing."""
    dec = a.decoder
    if dec.rank == 0:
        return None
    _, coeffs = draw_combination(dec.rows, rng)
    return RlncPacket(coeffs)


def erasure_select(a: NodeState, b: NodeState, rarity_view, rng) -> Optional[int]:
    """Local-rarest choice over symbol ids; symbols are forwarded unchanged."""
    return epidemic_select_local_rarest(a, b, rarity_view, rng)


def select(strategy: Strategy, a: NodeState, b: NodeState, rng):
    """Dispatch one direction of a meeting. Receivers that are complete get nothing."""
    if b.complete or not a.holds_anything:
        return None
    if strategy is Strategy.FLOODING:
        return flooding_select(a, b, rng)
    if strategy is Strategy.EPIDEMIC_RANDOM:
        return epidemic_select_random(a, b, rng)
    if strategy is Strategy.EPIDEMIC_LR:
        return epidemic_select_local_rarest(a, b, b.rarity, rng)
    if strategy is Strategy.NC:
        return nc_exchange(a, b, rng)
    return erasure_select(a, b, b.rarity, rng)


def deliver(strategy: Strategy, sender: NodeState, receiver: NodeState, item, symbols=None) -> bool:
    """Apply a transmission to ``receiver``; return True when it was innovative.

    ``symbols`` maps symbol id to LtSymbol for the erasure strategy.
    """
    if strategy is Strategy.NC:
        return receiver.decoder.ingest(item)
    if strategy is Strategy.ERASURE:
        sym = symbols[item]
        useful = not receiver.decoder.is_redundant(sym)
        receiver.buffer.add(item)
        receiver.decoder.add(sym)
        return useful
    if strategy is Strategy.FLOODING:
        receiver.forwarded_log.setdefault(sender.id, set()).add(item)
    new = item not in receiver.buffer
    receiver.buffer.add(item)
    return new


def summary_ids(state: NodeState) -> frozenset:
    return frozenset(state.buffer)


__all__ = [
    "Strategy",
    "NodeState",
    "flooding_select",
    "epidemic_select_random",
    "epidemic_select_local_rarest",
    "nc_exchange",
    "erasure_select",
    "select",
    "deliver",
    "summary_ids",
]
