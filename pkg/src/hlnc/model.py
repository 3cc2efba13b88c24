"""Broadcast instance model: wants matrices, erasure channels, receiver decoders, block metrics.

Slot convention: coded slots are numbered from 1 starting with the first coded
transmission, erased slots included. The uncoded round that produced the wants
matrix contributes no delay. Packets a receiver already has carry slot 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import gf256
from .gf256 import KnowledgeMatrix


class IncompleteBlockError(RuntimeError):
    """Metrics were requested before every wanted packet was decoded."""


@dataclass(frozen=True, eq=False)
class Sfm:
    """State feedback matrix: ``wants[n, k]`` is True when receiver n still wants packet k."""

    wants: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.wants, dtype=bool)
        if a.ndim != 2:
            raise ValueError("wants matrix must be 2-D (receivers x packets)")
        a.setflags(write=False)
        object.__setattr__(self, "wants", a)

    @classmethod
    def from_rows(cls, rows, k: int) -> Sfm:
        a = np.zeros((len(rows), k), dtype=bool)
        for n, row in enumerate(rows):
            a[n, list(row)] = True
        return cls(a)

    @property
    def n_receivers(self) -> int:
        return self.wants.shape[0]

    @property
    def n_packets(self) -> int:
        return self.wants.shape[1]

    @property
    def w(self) -> np.ndarray:
        return self.wants.sum(axis=1)

    @property
    def total(self) -> int:
        return int(self.wants.sum())

    def rows(self) -> list[frozenset[int]]:
        return [frozenset(np.flatnonzero(r).tolist()) for r in self.wants]

    def __eq__(self, other):
        return isinstance(other, Sfm) and np.array_equal(self.wants, other.wants)

    def __repr__(self):
        return f"Sfm(N={self.n_receivers}, K={self.n_packets}, sum={self.total})"


@dataclass(frozen=True, eq=False)
class ChannelModel:
    """Independent Bernoulli erasures with per-receiver probabilities in [0, 1)."""

    erasure_probs: np.ndarray
    rng_seed: int = 0

    def __post_init__(self):
        p = np.atleast_1d(np.asarray(self.erasure_probs, dtype=float))
        if p.ndim != 1 or np.any(p < 0) or np.any(p >= 1):
            raise ValueError("erasure probabilities must lie in [0, 1)")
        p.setflags(write=False)
        object.__setattr__(self, "erasure_probs", p)

    @classmethod
    def uniform(cls, n: int, pe: float, rng_seed: int = 0) -> ChannelModel:
        return cls(np.full(n, float(pe)), rng_seed)

    @property
    def n_receivers(self) -> int:
        return self.erasure_probs.size

    def erasures(self, rng: np.random.Generator) -> np.ndarray:
        """One slot's erasure indicators, one per receiver."""
        return rng.random(self.erasure_probs.size) < self.erasure_probs

    def rng(self) -> np.random.Generator:
        return np.random.default_rng(self.rng_seed)


def generate_sfm(k: int, n: int, channel: ChannelModel,
                 rng: np.random.Generator | None = None) -> Sfm:
    """Wants matrix left behind by one uncoded round of all k packets."""
    if k < 1 or n < 1:
        raise ValueError("need K >= 1 and N >= 1")
    if channel.n_receivers != n:
        raise ValueError("channel has a different receiver count")
    if rng is None:
        rng = channel.rng()
    return Sfm(rng.random((n, k)) < channel.erasure_probs[:, None])


# --------------------------------------------------------------------------
# receiver state

class DecoderBank:
    """Decoding state of all receivers of one block, stored as stacked arrays.

    ``memoryless`` banks model IDNC receivers: they never store coded packets and
    only keep the set of decoded packets.
    """

    def __init__(self, sfm: Sfm, memoryless: bool = False):
        n, k = sfm.wants.shape
        self.wants = sfm.wants
        self.memoryless = memoryless
        self.rows = np.zeros((n, k, k), dtype=np.uint8)
        self.pivots = ~sfm.wants
        idx = np.arange(k)
        self.rows[:, idx, idx] = self.pivots
        self.decoded = self.pivots.copy()
        self.decode_slot = np.zeros((n, k), dtype=np.int32)
        self.last_slot = 0
        self._newly = np.zeros((n, k), dtype=bool)

    @property
    def n_receivers(self) -> int:
        return self.wants.shape[0]

    @property
    def n_packets(self) -> int:
        return self.wants.shape[1]

    def copy(self) -> DecoderBank:
        other = object.__new__(DecoderBank)
        other.wants = self.wants
        other.memoryless = self.memoryless
        other.rows = self.rows.copy()
        other.pivots = self.pivots.copy()
        other.decoded = self.decoded.copy()
        other.decode_slot = self.decode_slot.copy()
        other.last_slot = self.last_slot
        other._newly = np.zeros_like(self._newly)
        return other

    def undecoded(self) -> np.ndarray:
        """Generalised Wants sets: packets not yet decoded (received-but-undecodable included)."""
        return ~self.decoded

    def unfinished(self) -> np.ndarray:
        return ~self.decoded.all(axis=1)

    def all_finished(self) -> bool:
        return bool(self.decoded.all())

    def receiver(self, n: int) -> ReceiverDecoder:
        return ReceiverDecoder(self, n)

    def __iter__(self):
        return (self.receiver(n) for n in range(self.n_receivers))

    def _check_slot(self, slot: int):
        if slot < 1 or slot <= self.last_slot:
            raise ValueError(f"slot {slot} does not advance past {self.last_slot}")
        self.last_slot = slot

    def deliver(self, v: np.ndarray, received: np.ndarray, slot: int) -> np.ndarray:
        """Hand ``v`` to every receiver flagged in ``received``; returns newly decoded mask (N, K)."""
        self._check_slot(slot)
        received = np.asarray(received, dtype=bool)
        if self.memoryless:
            return self._deliver_memoryless(v, received, slot)
        gf256.deliver_bank(self.rows, self.pivots, self.decoded, self.decode_slot,
                           received, v, slot, self._newly)
        return self._newly.copy()

    def _deliver_memoryless(self, v, received, slot):
        support = np.asarray(v) != 0
        unknown = support[None, :] & ~self.decoded
        decodes = received & (unknown.sum(axis=1) == 1)
        newly = unknown & decodes[:, None]
        self.decoded |= newly
        self.decode_slot[newly] = slot
        idx = np.nonzero(newly)
        self.rows[idx[0], idx[1], idx[1]] = 1
        self.pivots |= newly
        return newly

    def residuals(self, v: np.ndarray, active: np.ndarray | None = None) -> np.ndarray:
        if active is None:
            active = self.unfinished()
        out = np.empty(self.decoded.shape, dtype=np.uint8)
        gf256.reduce_bank(self.rows, self.pivots, active, v, out)
        return out

    def innovative_to_all(self, v: np.ndarray, active: np.ndarray | None = None) -> bool:
        if active is None:
            active = self.unfinished()
        return bool(gf256.all_innovative(self.rows, self.pivots, active, v))

    def would_decode(self, v: np.ndarray, active: np.ndarray | None = None) -> np.ndarray:
        """Per receiver: would receiving ``v`` now decode at least one new packet."""
        if active is None:
            active = self.unfinished()
        if self.memoryless:
            unknown = (np.asarray(v) != 0)[None, :] & ~self.decoded
            return active & (unknown.sum(axis=1) == 1)
        out = np.zeros(self.n_receivers, dtype=bool)
        gf256.would_decode_bank(self.rows, self.pivots, self.decoded, active, v, out)
        return out


class ReceiverDecoder:
    """View of one receiver inside a :class:`DecoderBank`."""

    __slots__ = ("bank", "index")

    def __init__(self, bank: DecoderBank, index: int):
        self.bank = bank
        self.index = index

    @classmethod
    def standalone(cls, k: int, wants) -> ReceiverDecoder:
        return cls(DecoderBank(Sfm.from_rows([wants], k)), 0)

    @property
    def km(self) -> KnowledgeMatrix:
        b, n = self.bank, self.index
        return KnowledgeMatrix(rows=b.rows[n], pivots=b.pivots[n])

    @property
    def has(self) -> set[int]:
        return set(np.flatnonzero(~self.bank.wants[self.index]).tolist())

    @property
    def wanted(self) -> set[int]:
        return set(np.flatnonzero(self.bank.wants[self.index]).tolist())

    @property
    def wants_set(self) -> set[int]:
        return set(np.flatnonzero(~self.bank.decoded[self.index]).tolist())

    @property
    def decode_slot(self) -> dict[int, int]:
        n = self.index
        return {int(k): int(self.bank.decode_slot[n, k])
                for k in np.flatnonzero(self.bank.wants[n] & self.bank.decoded[n])}

    @property
    def finished(self) -> bool:
        return bool(self.bank.decoded[self.index].all())


def deliver(decoder: ReceiverDecoder, v, slot: int, erased: bool) -> set[int]:
    """Deliver one coded packet to a single receiver; returns the packets it newly decodes.

    Slots are checked against the receiver's bank, so they must strictly increase
    even across erased slots.
    """
    bank = decoder.bank
    v = gf256.as_vector(v, bank.n_packets)
    received = np.zeros(bank.n_receivers, dtype=bool)
    received[decoder.index] = not erased
    newly = bank.deliver(v, received, slot)
    return set(np.flatnonzero(newly[decoder.index]).tolist())


# --------------------------------------------------------------------------
# metrics

@dataclass
class PacketAudit:
    """Contract checks on emitted packets, evaluated against true receiver state."""

    packets: int = 0
    not_innovative: int = 0
    no_instant_decoding: int = 0
    shadow_not_subgraph: int = 0
    cover_not_minimal_on_truth: int = 0

    @property
    def violations(self) -> int:
        return self.not_innovative + self.no_instant_decoding

    def merge(self, other: PacketAudit) -> None:
        if not other.packets:
            return
        for f in ("packets", "not_innovative", "no_instant_decoding",
                  "shadow_not_subgraph", "cover_not_minimal_on_truth"):
            setattr(self, f, getattr(self, f) + getattr(other, f))


@dataclass
class SlotRecord:
    slot: int
    coding_set: tuple[int, ...]
    erased: tuple[bool, ...]
    newly_decoded: dict[int, tuple[int, ...]]

    def to_dict(self) -> dict:
        return {"slot": self.slot, "coding_set": list(self.coding_set),
                "erased": [int(e) for e in self.erased],
                "newly_decoded": {str(n): list(ks) for n, ks in self.newly_decoded.items()}}


def write_log(records: list[SlotRecord], path) -> None:
    """Transmission log as JSON lines, one object per slot."""
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict()) + "\n")


def read_log(path) -> list[SlotRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            d = json.loads(line)
            out.append(SlotRecord(d["slot"], tuple(d["coding_set"]),
                                  tuple(bool(e) for e in d["erased"]),
                                  {int(n): tuple(ks) for n, ks in d["newly_decoded"].items()}))
    return out


@dataclass
class BlockMetrics:
    """Outcome of one simulated block. ``decode_slot`` is 0 outside the wants matrix."""

    wants: np.ndarray
    decode_slot: np.ndarray
    decoded: np.ndarray
    slots_used: int
    feedback_rounds: int = 0
    audit: PacketAudit = field(default_factory=PacketAudit)
    log: list[SlotRecord] | None = None

    @classmethod
    def from_bank(cls, bank: DecoderBank, slots_used: int, **kw) -> BlockMetrics:
        return cls(bank.wants, bank.decode_slot.copy(), bank.decoded.copy(), slots_used, **kw)

    @property
    def complete(self) -> bool:
        return bool((self.decoded | ~self.wants).all())

    @property
    def w(self) -> np.ndarray:
        return self.wants.sum(axis=1)

    def _require_complete(self):
        if not self.complete:
            missing = int((self.wants & ~self.decoded).sum())
            raise IncompleteBlockError(f"{missing} wanted packets are still undecoded")

    def completion_slots(self) -> np.ndarray:
        """U_n per receiver (0 for receivers that want nothing)."""
        self._require_complete()
        return np.where(self.wants, self.decode_slot, 0).max(axis=1)

    def apdd(self) -> tuple[Fraction, list[Fraction | None]]:
        self._require_complete()
        total = int(self.wants.sum())
        if total == 0:
            raise ValueError("APDD is undefined when no receiver wants anything")
        u = np.where(self.wants, self.decode_slot, 0)
        per = [Fraction(int(s), int(w)) if w else None
               for s, w in zip(u.sum(axis=1), self.w)]
        return Fraction(int(u.sum()), total), per

    def apdd_float(self) -> float:
        self._require_complete()
        return float(self.decode_slot.sum()) / float(self.wants.sum())

    def bct(self) -> int:
        return int(self.completion_slots().max(initial=0))


def apdd(metrics: BlockMetrics) -> tuple[Fraction, list[Fraction | None]]:
    return metrics.apdd()


def bct(metrics: BlockMetrics) -> int:
    return metrics.bct()
