"""Coding schemes and the block driver.

Every scheme decides the next coding vector from a :class:`SenderView`, the
sender's copy of receiver state. How that copy is kept up to date is the
scheme's feedback discipline:

``fully-online``  receivers report after every slot.
``semi-online``   the sender assumes every packet arrives, and polls only when that
                  assumption predicts some receiver would finish.
``offline``       one semi-online round with no poll at its end, then RLNC.
``none``          no protocol feedback (RLNC).

A feedback report carries, per receiver, which slots of the round it received;
the sender rebuilds exact state by replaying those packets on the state it had
at the start of the round.

Random coefficients are re-drawn until the packet is innovative to every
unfinished receiver of the view. Schemes without feedback (RLNC and the RLNC
tail of offline HLNC) are checked against receiver state directly; that check
stands in for the large-field assumption and does not inform coding-set choice.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from numba import njit

from .gf256 import all_innovative, deliver_bank
from .hypergraph import Hypergraph, InstanceTooLarge, cover_mask, is_minimal_cover
from .model import BlockMetrics, ChannelModel, DecoderBank, PacketAudit, Sfm, SlotRecord

SCHEME_NAMES = ("rlnc", "hlnc-full", "hlnc-semi", "hlnc-offline", "gidnc", "perfect")
MAX_COEFF_ATTEMPTS = 64


class ContractViolation(RuntimeError):
    pass


@dataclass(frozen=True)
class FeedbackReport:
    """Which slots of the last round each receiver got: ``received[n, j]`` for ``slots[j]``."""

    slots: tuple[int, ...]
    received: np.ndarray

    def received_slots(self, n: int) -> set[int]:
        return {s for s, ok in zip(self.slots, self.received[n]) if ok}


class SenderView:
    """Sender-side shadow of receiver state.

    Exact right after feedback; between polls it may run ahead of the receivers
    through :meth:`speculate`.
    """

    def __init__(self, bank: DecoderBank):
        self.bank = bank
        self.authoritative = True
        self._snapshot: DecoderBank | None = None
        self._sent: list[tuple[int, np.ndarray]] = []

    def record(self, slot: int, v: np.ndarray) -> None:
        self._sent.append((slot, v))

    def speculate(self, v: np.ndarray, slot: int) -> np.ndarray:
        """Assume every unfinished receiver got ``v``; returns the newly decoded mask."""
        if self._snapshot is None:
            self._snapshot = self.bank.copy()
        self.authoritative = False
        return self.bank.deliver(v, self.bank.unfinished(), slot)

    def apply_feedback(self, report: FeedbackReport) -> None:
        if self._snapshot is not None:
            self.bank = self._snapshot
            self._snapshot = None
        sent = dict(self._sent)
        for j, slot in enumerate(report.slots):
            self.bank.deliver(sent[slot], report.received[:, j], slot)
        self._sent = []
        self.authoritative = True


def _as_mask(coding_set, k: int) -> np.ndarray:
    arr = np.asarray(coding_set)
    if arr.dtype == bool and arr.shape == (k,):
        return arr
    mask = np.zeros(k, dtype=bool)
    mask[list(coding_set)] = True
    return mask


def verified_innovative_vector(coding_set, view: SenderView, rng: np.random.Generator,
                               active: np.ndarray | None = None) -> np.ndarray:
    """Random non-zero coefficients on ``coding_set``, re-drawn until innovative to all of ``active``.

    ``active`` defaults to the view's unfinished receivers.
    """
    bank = view.bank
    k = bank.n_packets
    mask = _as_mask(coding_set, k)
    if active is None:
        active = bank.unfinished()
    if not (~bank.decoded[active] & mask).any(axis=1).all():
        raise ContractViolation("coding set holds nothing new for some unfinished receiver")
    size = int(mask.sum())
    v = np.zeros(k, dtype=np.uint8)
    for _ in range(MAX_COEFF_ATTEMPTS):
        v[mask] = 1 + (rng.random(size) * 255).astype(np.uint8)
        if bank.innovative_to_all(v, active):
            return v
    raise ContractViolation(f"no innovative coefficients after {MAX_COEFF_ATTEMPTS} draws")


# --------------------------------------------------------------------------
# coding decisions

def rlnc_next(view: SenderView, rng: np.random.Generator) -> np.ndarray:
    bank = view.bank
    live = bank.unfinished()
    if not live.any():
        raise ContractViolation("every receiver is finished")
    support = (~bank.decoded[live]).any(axis=0)
    return verified_innovative_vector(support, view, rng, live)


@njit(cache=True)
def _seed_engine(seed):
    np.random.seed(seed)


@njit(cache=True)
def _rlnc_engine(rows, pivots, decoded, decode_slot, probs, slot, limit, tries, vecs, erased):
    """Compiled RLNC slot loop on a bank, drawing from numba's generator.

    Runs until every receiver is finished (status 0), no innovative vector is
    found in ``tries`` draws (1), or ``limit`` slots were sent (2). When ``vecs``
    has rows, slot ``j`` of this call is recorded in ``vecs[j]`` and ``erased[j]``.
    Returns the last slot used and the status.
    """
    n, k = decoded.shape
    live = np.empty(n, dtype=np.bool_)
    support = np.empty(k, dtype=np.bool_)
    received = np.empty(n, dtype=np.bool_)
    newly = np.empty((n, k), dtype=np.bool_)
    v = np.zeros(k, dtype=np.uint8)
    record = vecs.shape[0] > 0
    sent = 0
    while True:
        any_live = False
        for c in range(k):
            support[c] = False
        for i in range(n):
            live[i] = False
            for c in range(k):
                if not decoded[i, c]:
                    live[i] = True
                    support[c] = True
            any_live = any_live or live[i]
        if not any_live:
            return slot, 0
        if sent >= limit:
            return slot, 2
        ok = False
        for _ in range(tries):
            for c in range(k):
                v[c] = 1 + int(np.random.random() * 255) if support[c] else 0
            if all_innovative(rows, pivots, live, v):
                ok = True
                break
        if not ok:
            return slot, 1
        slot += 1
        for i in range(n):
            e = np.random.random() < probs[i]
            received[i] = live[i] and not e
            if record:
                erased[sent, i] = e
        if record:
            vecs[sent] = v
        deliver_bank(rows, pivots, decoded, decode_slot, received, v, slot, newly)
        sent += 1


def hlnc_next(view: SenderView, rng: np.random.Generator) -> np.ndarray:
    v, _, _ = _hlnc_step(view, rng)
    return v


def _hlnc_step(view, rng):
    bank = view.bank
    live = bank.unfinished()
    if not live.any():
        raise ContractViolation("every receiver is finished")
    cover = cover_mask(~bank.decoded[live])
    return verified_innovative_vector(cover, view, rng, live), cover, live


@njit(cache=True)
def _gidnc_clique(want, have, packets):
    n, k = want.shape
    colcount = np.zeros(k, dtype=np.int64)
    for i in range(n):
        for c in range(k):
            if want[i, c]:
                colcount[c] += 1
    # overlap[j, i] = |Wants_j ∩ Has_i|
    overlap = np.zeros((n, n), dtype=np.int64)
    for j in range(n):
        for i in range(n):
            s = 0
            for c in range(k):
                if want[j, c] and have[i, c]:
                    s += 1
            overlap[j, i] = s
    degree = np.zeros((n, k), dtype=np.int64)
    for i in range(n):
        for c in range(k):
            if want[i, c]:
                d = colcount[c] - 1
                for j in range(n):
                    if have[j, c]:
                        d += overlap[j, i]
                degree[i, c] = d
    cand = want.copy()
    for c in range(k):
        packets[c] = False
    while True:
        bi = -1
        bc = -1
        best = -1
        for i in range(n):
            for c in range(k):
                if cand[i, c] and degree[i, c] > best:
                    best = degree[i, c]
                    bi = i
                    bc = c
        if bi < 0:
            break
        packets[bc] = True
        cand[bi, bc] = False
        for i in range(n):
            for c in range(k):
                if cand[i, c] and c != bc and not (have[bi, c] and have[i, bc]):
                    cand[i, c] = False


def gidnc_next(view: SenderView, rng: np.random.Generator | None = None) -> np.ndarray:
    """XOR of the packets in a greedily grown maximum-degree clique of the IDNC graph.

    Vertices are (receiver, wanted packet) pairs; two vertices are adjacent when
    they name the same packet, or when each receiver already holds the other's
    packet. Ties go to the lowest receiver index, then the lowest packet index.
    """
    bank = view.bank
    live = bank.unfinished()
    if not live.any():
        raise ContractViolation("every receiver is finished")
    want = ~bank.decoded & live[:, None]
    packets = np.empty(bank.n_packets, dtype=bool)
    _gidnc_clique(want, bank.decoded, packets)
    return packets.astype(np.uint8)


def idnc_memoryless_deliver(decoder, coding_set, slot: int, erased: bool) -> set[int]:
    """Memoryless IDNC reception of the XOR of ``coding_set`` at one receiver.

    The receiver decodes iff exactly one packet of the set is unknown to it;
    anything else is discarded without being stored.
    """
    bank = decoder.bank
    if not bank.memoryless:
        raise ValueError("receiver is not memoryless")
    v = _as_mask(coding_set, bank.n_packets).astype(np.uint8)
    received = np.zeros(bank.n_receivers, dtype=bool)
    received[decoder.index] = not erased
    newly = bank.deliver(v, received, slot)
    return set(np.flatnonzero(newly[decoder.index]).tolist())


# --------------------------------------------------------------------------
# schemes

class Scheme:
    name = "scheme"
    discipline = "none"
    memoryless = False

    def next_packet(self, view: SenderView, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def on_feedback(self, view: SenderView, report: FeedbackReport) -> None:
        view.apply_feedback(report)

    def __repr__(self):
        return f"{type(self).__name__}({self.name!r})"


class Rlnc(Scheme):
    name = "rlnc"
    discipline = "none"

    def next_packet(self, view, rng):
        return rlnc_next(view, rng)


class Hlnc(Scheme):
    """HLNC; the last chosen cover is kept for auditing."""

    MODES = {"full": "fully-online", "semi": "semi-online", "offline": "offline"}

    def __init__(self, mode: str = "full"):
        if mode not in self.MODES:
            raise ValueError(f"unknown HLNC mode {mode!r}")
        self.name = f"hlnc-{mode}"
        self.discipline = self.MODES[mode]
        self.last_cover: np.ndarray | None = None
        self.last_live: np.ndarray | None = None

    def next_packet(self, view, rng):
        v, self.last_cover, self.last_live = _hlnc_step(view, rng)
        return v


class Gidnc(Scheme):
    name = "gidnc"
    discipline = "fully-online"
    memoryless = True

    def next_packet(self, view, rng):
        return gidnc_next(view, rng)


class PerfectOracle(Scheme):
    """Counterfactual lower-bound technique; no coding vectors are produced."""

    name = "perfect"
    discipline = "oracle"


def make_scheme(name: str) -> Scheme:
    if name == "rlnc":
        return Rlnc()
    if name.startswith("hlnc-") and name in SCHEME_NAMES:
        return Hlnc(name[len("hlnc-"):])
    if name == "gidnc":
        return Gidnc()
    if name == "perfect":
        return PerfectOracle()
    raise ValueError(f"unknown scheme {name!r}; choose from {', '.join(SCHEME_NAMES)}")


# --------------------------------------------------------------------------
# block driver

class _Block:
    """Mutable state of one block run: true receivers, slot counter, audit, log."""

    def __init__(self, sfm, channel, rng, memoryless, log, audit):
        self.true = DecoderBank(sfm, memoryless=memoryless)
        self.channel = channel
        self.rng = rng
        self.slot = 0
        self.audit = PacketAudit() if audit else None
        self.log = [] if log else None

    def check(self, v, view=None, scheme=None):
        a = self.audit
        if a is None:
            return
        true = self.true
        live = true.unfinished()
        a.packets += 1
        if not true.innovative_to_all(v, live):
            a.not_innovative += 1
        if not true.would_decode(v, live).any():
            a.no_instant_decoding += 1
        if view is not None and not view.authoritative:
            shadow = Hypergraph.from_states(view.bank)
            truth = Hypergraph.from_states(true)
            if not shadow.is_subgraph_of(truth):
                a.shadow_not_subgraph += 1
            elif not is_minimal_cover(truth.incidence, scheme.last_cover):
                a.cover_not_minimal_on_truth += 1

    def transmit(self, v):
        self.slot += 1
        erased = self.channel.erasures(self.rng)
        received = ~erased & self.true.unfinished()
        newly = self.true.deliver(v, received, self.slot)
        if self.log is not None:
            self.log.append(SlotRecord(
                self.slot, tuple(np.flatnonzero(v).tolist()), tuple(erased.tolist()),
                {int(n): tuple(np.flatnonzero(newly[n]).tolist())
                 for n in np.flatnonzero(newly.any(axis=1))}))
        return received

    @property
    def done(self):
        return self.true.all_finished()


def _semi_online_round(blk: _Block, scheme: Hlnc, view: SenderView):
    """Send packets on speculative state until some receiver would finish.

    Returns the round's feedback report (which the caller may discard).
    """
    slots, got = [], []
    while True:
        v = scheme.next_packet(view, blk.rng)
        blk.check(v, view, scheme)
        got.append(blk.transmit(v))
        slots.append(blk.slot)
        view.record(blk.slot, v)
        before = view.bank.unfinished()
        view.speculate(v, blk.slot)
        if (before & ~view.bank.unfinished()).any() or blk.done:
            break
    return FeedbackReport(tuple(slots), np.column_stack(got))


def run_block(scheme: Scheme, sfm: Sfm, channel: ChannelModel,
              rng: np.random.Generator | None = None, *, log: bool = False,
              audit: bool = True, max_slots: int = 100_000) -> BlockMetrics:
    """Simulate one block until every receiver has decoded everything it wants.

    The driver is omniscient: it stops on true completion whatever the scheme's
    feedback discipline. HLNC packets are audited against true receiver state.
    """
    if isinstance(scheme, PerfectOracle):
        return perfect_oracle_block(sfm, channel, rng)
    if channel.n_receivers != sfm.n_receivers:
        raise ValueError("channel and SFM disagree on the receiver count")
    if rng is None:
        rng = channel.rng()
    hlnc = isinstance(scheme, Hlnc)
    blk = _Block(sfm, channel, rng, scheme.memoryless, log, audit and hlnc)
    rounds = 0
    d = scheme.discipline

    if d == "none":
        _rlnc_tail(blk, max_slots)
    elif d == "fully-online":
        view = SenderView(blk.true.copy())
        while not blk.done:
            v = scheme.next_packet(view, rng)
            if hlnc:
                blk.check(v)
            received = blk.transmit(v)
            view.record(blk.slot, v)
            scheme.on_feedback(view, FeedbackReport((blk.slot,), received[:, None]))
            rounds += 1
            _guard(blk, max_slots)
    elif d == "semi-online":
        view = SenderView(blk.true.copy())
        while not blk.done:
            report = _semi_online_round(blk, scheme, view)
            scheme.on_feedback(view, report)
            rounds += 1
            _guard(blk, max_slots)
    elif d == "offline":
        view = SenderView(blk.true.copy())
        if not blk.done:
            _semi_online_round(blk, scheme, view)
        _rlnc_tail(blk, max_slots)
    else:
        raise ValueError(f"unknown feedback discipline {d!r}")

    return BlockMetrics.from_bank(blk.true, blk.slot, feedback_rounds=rounds,
                                  audit=blk.audit or PacketAudit(), log=blk.log)


def _rlnc_tail(blk: _Block, max_slots: int) -> None:
    """RLNC from the true state until every receiver finishes (compiled loop)."""
    bank = blk.true
    if bank.all_finished():
        return
    _seed_engine(int(blk.rng.integers(0, 2**32)))
    n, k = bank.n_receivers, bank.n_packets
    cap = 4 * k if blk.log is not None else 0
    while True:
        vecs = np.zeros((cap, k), dtype=np.uint8)
        erased = np.zeros((cap, n), dtype=bool)
        limit = cap if cap else max_slots - blk.slot + 1
        start = blk.slot
        slot, status = _rlnc_engine(bank.rows, bank.pivots, bank.decoded, bank.decode_slot,
                                    blk.channel.erasure_probs, blk.slot, limit,
                                    MAX_COEFF_ATTEMPTS, vecs, erased)
        blk.slot = bank.last_slot = int(slot)
        if blk.log is not None:
            for j, s in enumerate(range(start + 1, blk.slot + 1)):
                blk.log.append(_slot_record(bank, s, vecs[j], erased[j]))
        if status == 0:
            return
        if status == 1:
            raise ContractViolation(f"no innovative coefficients after {MAX_COEFF_ATTEMPTS} draws")
        _guard(blk, max_slots)


def _slot_record(bank, slot, v, erased):
    newly = bank.wants & (bank.decode_slot == slot)
    return SlotRecord(slot, tuple(np.flatnonzero(v).tolist()), tuple(erased.tolist()),
                      {int(n): tuple(np.flatnonzero(newly[n]).tolist())
                       for n in np.flatnonzero(newly.any(axis=1))})


def _guard(blk, max_slots):
    if blk.slot > max_slots:
        raise ContractViolation(f"block not finished after {max_slots} slots")


@njit(cache=True)
def _perfect_engine(wants, probs, decode_slot):
    n, k = wants.shape
    last = 0
    for i in range(n):
        slot = 0
        for c in range(k):
            if wants[i, c]:
                slot += 1
                while np.random.random() < probs[i]:
                    slot += 1
                decode_slot[i, c] = slot
        last = max(last, slot)
    return last


def perfect_oracle_block(sfm: Sfm, channel: ChannelModel,
                         rng: np.random.Generator | None = None) -> BlockMetrics:
    """Bookkeeping for the perfect technique: each unfinished receiver whose
    channel is on decodes one more wanted packet per slot, in packet-index order.

    Receivers do not interact, so each one's successful slots are drawn in turn
    (compiled, seeded from ``rng``).
    """
    if rng is None:
        rng = channel.rng()
    wants = sfm.wants
    decode_slot = np.zeros(wants.shape, dtype=np.int32)
    _seed_engine(int(rng.integers(0, 2**32)))
    last = _perfect_engine(wants, channel.erasure_probs, decode_slot)
    return BlockMetrics(wants, decode_slot, np.ones_like(wants), int(last))


# --------------------------------------------------------------------------
# instances separating IDNC from throughput-optimal coding

def build_a1(k: int) -> Sfm:
    """Every pair of packets wanted by its own receiver."""
    if k < 2:
        raise ValueError("need K >= 2")
    pairs = [(i, j) for i in range(k) for j in range(i + 1, k)]
    return Sfm.from_rows(pairs, k)


def build_a2(k: int, m: int) -> Sfm:
    """``m`` single-packet receivers per packet, then one receiver per pair."""
    if k < 2:
        raise ValueError("need K >= 2")
    singles = [(i,) for i in range(k) for _ in range(m)]
    return Sfm.from_rows(singles + build_a1(k).rows(), k)


def bruteforce_idnc_min_bct(sfm: Sfm, max_packets: int = 5, max_receivers: int = 12) -> int:
    """Fewest erasure-free XOR transmissions that finish every memoryless receiver.

    Breadth-first search over remaining-wants states; each slot may XOR any
    non-empty subset of the packets still wanted by someone.
    """
    k, n = sfm.n_packets, sfm.n_receivers
    if k > max_packets or n > max_receivers:
        raise InstanceTooLarge(f"K={k}, N={n} exceed the brute-force limits")
    start = tuple(sorted(int(sum(1 << c for c in row)) for row in sfm.rows() if row))
    if not start:
        return 0
    seen = {start}
    frontier = deque([(start, 0)])
    while frontier:
        state, depth = frontier.popleft()
        union = 0
        for r in state:
            union |= r
        m = union
        while m:
            nxt = []
            for r in state:
                hit = r & m
                if hit and hit & (hit - 1) == 0:
                    r &= ~hit
                if r:
                    nxt.append(r)
            nxt = tuple(sorted(nxt))
            if not nxt:
                return depth + 1
            if nxt not in seen:
                seen.add(nxt)
                frontier.append((nxt, depth + 1))
            m = (m - 1) & union
    raise AssertionError("unreachable: single-packet transmissions always make progress")


def idnc_a1_bct_claim(k: int) -> int:
    return math.ceil(math.log2(k)) + 1
