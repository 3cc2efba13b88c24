from fractions import Fraction

import numpy as np
import pytest

from hlnc.hypergraph import (Hypergraph, InstanceTooLarge, cover_mask, is_minimal_cover,
                             minimal_vertex_cover)
from hlnc.model import ChannelModel, DecoderBank, ReceiverDecoder, Sfm, apdd, bct, generate_sfm
from hlnc.schemes import (MAX_COEFF_ATTEMPTS, ContractViolation, FeedbackReport, SenderView,
                          _rlnc_engine, _seed_engine, build_a1, build_a2, bruteforce_idnc_min_bct,
                          gidnc_next, hlnc_next, idnc_a1_bct_claim, idnc_memoryless_deliver,
                          make_scheme, perfect_oracle_block, rlnc_next, run_block,
                          verified_innovative_vector)
from test_gf256 import naive_rank

WALK = Sfm.from_rows([(0, 3), (1, 4), (2, 5), (0, 1, 2)], 6)
TWO_RECEIVERS = Sfm.from_rows([(1, 2), (0, 2)], 3)


def clean(n):
    return ChannelModel.uniform(n, 0.0)


def pair_instance(pairs=98):
    return Sfm.from_rows([(0,), (1,)] + [(0, 1)] * pairs, 2)


def coding_sets(res):
    return [r.coding_set for r in res.log]


def test_hlnc_walkthrough_full():
    res = run_block(make_scheme("hlnc-full"), WALK, clean(4), np.random.default_rng(0), log=True)
    assert coding_sets(res) == [(0, 1, 2), (0, 3, 4, 5), (1,)]
    d, per = apdd(res)
    assert d == Fraction(17, 9)
    assert per == [Fraction(3, 2)] * 3 + [Fraction(8, 3)]
    assert bct(res) == 3
    assert res.feedback_rounds == 3


@pytest.mark.parametrize("mode", ["hlnc-semi", "hlnc-offline"])
def test_hlnc_walkthrough_other_modes(mode):
    res = run_block(make_scheme(mode), WALK, clean(4), np.random.default_rng(0), log=True)
    assert apdd(res)[0] == Fraction(17, 9)
    assert coding_sets(res)[:2] == [(0, 1, 2), (0, 3, 4, 5)]
    assert res.audit.violations == 0


def test_semi_online_walkthrough_polls_less():
    res = run_block(make_scheme("hlnc-semi"), WALK, clean(4), np.random.default_rng(0))
    # round 1 ends after slot 2 (r1..r3 finish speculatively), round 2 is slot 3
    assert res.feedback_rounds == 2


def test_rlnc_example1_and_block_decoding():
    res = run_block(make_scheme("rlnc"), TWO_RECEIVERS, clean(2), np.random.default_rng(1))
    assert apdd(res)[0] == 2
    single = Sfm.from_rows([(0, 1, 2)], 3)
    res = run_block(make_scheme("rlnc"), single, clean(1), np.random.default_rng(2))
    assert res.decode_slot[0].tolist() == [3, 3, 3]


def test_gidnc_example1():
    res = run_block(make_scheme("gidnc"), TWO_RECEIVERS, clean(2), log=True)
    assert coding_sets(res) == [(0, 1), (2,)]
    assert apdd(res)[0] == Fraction(3, 2)


def test_pair_instance():
    sfm = pair_instance()
    for name in ("hlnc-full", "rlnc"):
        res = run_block(make_scheme(name), sfm, clean(100), np.random.default_rng(3), log=True)
        assert apdd(res)[0] == Fraction(394, 198)
        assert bct(res) == 2
    res = run_block(make_scheme("hlnc-full"), sfm, clean(100), log=True)
    assert coding_sets(res) == [(0, 1), (0,)]


def test_single_packet_receiver():
    res = run_block(make_scheme("hlnc-full"), Sfm.from_rows([(2,)], 3), clean(1))
    assert apdd(res)[0] == 1 and bct(res) == 1


def test_perfect_oracle_erasure_free():
    res = perfect_oracle_block(Sfm.from_rows([(0, 1, 2)], 3), clean(1))
    assert res.decode_slot[0].tolist() == [1, 2, 3]
    assert apdd(res)[0] == 2


def test_verified_vector_support_and_contract():
    rng = np.random.default_rng(4)
    view = SenderView(DecoderBank(WALK))
    v = verified_innovative_vector({1}, view, rng, np.array([False, True, False, True]))
    assert np.flatnonzero(v).tolist() == [1]
    v = verified_innovative_vector({0, 1, 2}, view, rng)
    assert np.flatnonzero(v).tolist() == [0, 1, 2]
    assert view.bank.would_decode(v).tolist() == [True, True, True, False]
    with pytest.raises(ContractViolation):
        verified_innovative_vector({1}, view, rng)     # r1 wants nothing from {p2}
    fresh = SenderView(DecoderBank(Sfm(np.ones((3, 5), bool))))
    assert np.count_nonzero(rlnc_next(fresh, rng)) == 5


def test_gidnc_simple_and_xor_only():
    view = SenderView(DecoderBank(Sfm.from_rows([(0,), (0,)], 3), memoryless=True))
    assert gidnc_next(view).tolist() == [1, 0, 0]
    rng = np.random.default_rng(6)
    ch = ChannelModel.uniform(8, 0.3)
    for _ in range(20):
        sfm = generate_sfm(10, 8, ch, rng)
        if sfm.total == 0:
            continue
        res = run_block(make_scheme("gidnc"), sfm, ch, rng, log=True)
        assert res.complete


def test_memoryless_delivery():
    r = ReceiverDecoder(DecoderBank(Sfm.from_rows([(1, 2)], 3), memoryless=True), 0)
    assert idnc_memoryless_deliver(r, {1, 2}, 1, erased=False) == set()
    assert r.wants_set == {1, 2} and r.km.rank == 1
    r = ReceiverDecoder(DecoderBank(Sfm.from_rows([(1,)], 3), memoryless=True), 0)
    assert idnc_memoryless_deliver(r, {1, 2}, 1, erased=False) == {1}
    r = ReceiverDecoder(DecoderBank(Sfm.from_rows([(0, 1, 2)], 4), memoryless=True), 0)
    assert idnc_memoryless_deliver(r, {0, 1, 2}, 1, erased=False) == set()
    with pytest.raises(ValueError):
        idnc_memoryless_deliver(ReceiverDecoder.standalone(3, [0]), {0}, 1, False)


def test_build_instances():
    assert build_a1(3).rows() == [{0, 1}, {0, 2}, {1, 2}]
    assert build_a1(4).n_receivers == 6
    a2 = build_a2(2, 1)
    assert a2.n_receivers == 3 and a2.rows() == [{0}, {1}, {0, 1}]
    assert build_a2(4, 2).n_receivers == 2 * 4 + 6
    with pytest.raises(ValueError):
        build_a1(1)


def test_bruteforce_idnc():
    assert bruteforce_idnc_min_bct(build_a1(4)) == 3 == idnc_a1_bct_claim(4)
    assert bruteforce_idnc_min_bct(build_a1(2)) == 2
    assert bruteforce_idnc_min_bct(build_a1(3)) == 3 == idnc_a1_bct_claim(3)
    assert bruteforce_idnc_min_bct(Sfm.from_rows([(0,)], 1)) == 1
    with pytest.raises(InstanceTooLarge):
        bruteforce_idnc_min_bct(build_a1(6))


def test_gidnc_on_a1_respects_lower_bound():
    res = run_block(make_scheme("gidnc"), build_a1(4), clean(6))
    assert bct(res) >= bruteforce_idnc_min_bct(build_a1(4))
    for name in ("rlnc", "hlnc-full"):
        assert bct(run_block(make_scheme(name), build_a1(4), clean(6))) == 2


def test_feedback_replay_restores_true_state():
    rng = np.random.default_rng(8)
    sfm = generate_sfm(8, 6, ChannelModel.uniform(6, 0.4), rng)
    true = DecoderBank(sfm)
    view = SenderView(true.copy())
    slots, got = [], []
    for slot in (1, 2, 3):
        if view.bank.all_finished():
            break
        v = hlnc_next(view, rng)
        received = (rng.random(6) > 0.4) & true.unfinished()
        true.deliver(v, received, slot)
        view.record(slot, v)
        view.speculate(v, slot)
        slots.append(slot)
        got.append(received)
    assert not view.authoritative
    view.apply_feedback(FeedbackReport(tuple(slots), np.column_stack(got)))
    assert view.authoritative
    for f in ("rows", "pivots", "decoded", "decode_slot"):
        assert np.array_equal(getattr(view.bank, f), getattr(true, f))


def test_speculative_cover_need_not_be_minimal_on_truth():
    """Shadow edges shrink faster than true ones, so a vertex can lose its private edge.

    r0 wants {0,3}, r1 {1,2}, r2 {0,1}. Slot 1 carries a combination of p0, p1 and
    only r2 receives it. The sender assumes r0 decoded p0, so r0's shadow edge is
    {3} and the next cover {0,2,3} keeps 3 for it; on the true state r0's edge
    {0,3} is already hit by 0.
    """
    rng = np.random.default_rng(0)
    sfm = Sfm.from_rows([(0, 3), (1, 2), (0, 1)], 4)
    true = DecoderBank(sfm)
    view = SenderView(true.copy())
    v = hlnc_next(view, rng)
    assert np.flatnonzero(v).tolist() == [0, 1]
    true.deliver(v, np.array([False, False, True]), 1)
    view.speculate(v, 1)
    shadow, truth = Hypergraph.from_states(view.bank), Hypergraph.from_states(true)
    assert shadow.is_subgraph_of(truth)
    cover = cover_mask(shadow.incidence)
    assert np.flatnonzero(cover).tolist() == [0, 2, 3]
    assert is_minimal_cover(shadow.incidence, cover)
    assert not is_minimal_cover(truth.incidence, cover)
    # coverage and an instantly decodable receiver survive
    v2 = hlnc_next(view, rng)
    live = true.unfinished()
    assert true.innovative_to_all(v2, live)
    assert true.would_decode(v2, live).any()


@pytest.mark.parametrize("name", ["rlnc", "hlnc-full", "hlnc-semi", "hlnc-offline"])
def test_completion_slot_is_wth_reception(name):
    """Throughput optimality: U_n is the slot of receiver n's w_n-th reception."""
    rng = np.random.default_rng(9)
    ch = ChannelModel.uniform(7, 0.3)
    for _ in range(25):
        sfm = generate_sfm(9, 7, ch, rng)
        if sfm.total == 0:
            continue
        res = run_block(make_scheme(name), sfm, ch, rng, log=True)
        assert res.audit.violations == 0
        u = res.completion_slots()
        w = sfm.w
        for n in range(sfm.n_receivers):
            if w[n] == 0:
                continue
            got = [r.slot for r in res.log if not r.erased[n]]
            assert got[w[n] - 1] == u[n]


def test_hlnc_random_blocks_contract_and_cover_rules():
    rng = np.random.default_rng(10)
    ch = ChannelModel.uniform(12, 0.25)
    for name in ("hlnc-full", "hlnc-semi", "hlnc-offline"):
        packets = 0
        for _ in range(30):
            sfm = generate_sfm(10, 12, ch, rng)
            if sfm.total == 0:
                continue
            res = run_block(make_scheme(name), sfm, ch, rng)
            assert res.audit.not_innovative == 0
            assert res.audit.no_instant_decoding == 0
            assert res.audit.shadow_not_subgraph == 0
            packets += res.audit.packets
        assert packets > 0


def test_fully_online_uses_cover_of_true_state():
    rng = np.random.default_rng(12)
    sfm = generate_sfm(10, 8, ChannelModel.uniform(8, 0.3), rng)
    view = SenderView(DecoderBank(sfm))
    v = hlnc_next(view, rng)
    h = Hypergraph.from_states(view.bank)
    assert set(np.flatnonzero(v).tolist()) == minimal_vertex_cover(h).vertices


def test_unknown_scheme():
    with pytest.raises(ValueError):
        make_scheme("hlnc-turbo")



def test_compiled_rlnc_engine_against_naive_elimination():
    """Replay the engine's own coefficient vectors through textbook elimination."""
    rng = np.random.default_rng(13)
    ch = ChannelModel.uniform(5, 0.35)
    k, blocks = 6, 0
    while blocks < 8:
        sfm = generate_sfm(k, 5, ch, rng)
        if sfm.total == 0:
            continue
        blocks += 1
        bank = DecoderBank(sfm)
        vecs = np.zeros((60, k), dtype=np.uint8)
        erased = np.zeros((60, 5), dtype=bool)
        _seed_engine(blocks)
        last, status = _rlnc_engine(bank.rows, bank.pivots, bank.decoded, bank.decode_slot,
                                    ch.erasure_probs, 0, 60, MAX_COEFF_ATTEMPTS, vecs, erased)
        assert status == 0
        units = np.eye(k, dtype=np.uint8)
        for n in range(5):
            known = [units[c] for c in range(k) if not sfm.wants[n, c]]
            slots = np.zeros(k, dtype=np.int64)
            for j in range(last):
                rank = naive_rank(known, k)
                if rank == k:
                    break
                assert naive_rank(known + [vecs[j]], k) == rank + 1     # innovative
                if erased[j, n]:
                    continue
                known.append(vecs[j])
                for c in np.flatnonzero(sfm.wants[n] & (slots == 0)):
                    if naive_rank(known + [units[c]], k) == rank + 1:
                        slots[c] = j + 1
            assert naive_rank(known, k) == k
            assert np.array_equal(slots, bank.decode_slot[n])
