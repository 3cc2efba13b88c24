import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hlnc import gf256
from hlnc.gf256 import KnowledgeMatrix, decoded_indices, eliminate, gf_inv, gf_mul, is_innovative


def slow_mul(a, b):
    """Shift-and-add multiply with explicit reduction by x^8+x^4+x^3+x^2+1."""
    p = 0
    for i in range(8):
        if b >> i & 1:
            p ^= a << i
    for bit in range(14, 7, -1):
        if p >> bit & 1:
            p ^= 0x11D << (bit - 8)
    return p


def slow_inv(a):
    return next(x for x in range(1, 256) if slow_mul(a, x) == 1)


def naive_rank(vectors, k):
    """Gaussian elimination on a plain list of lists using the slow field ops."""
    m = [list(map(int, v)) for v in vectors]
    rank = 0
    for col in range(k):
        piv = next((i for i in range(rank, len(m)) if m[i][col]), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        inv = slow_inv(m[rank][col])
        m[rank] = [slow_mul(inv, x) for x in m[rank]]
        for i in range(len(m)):
            if i != rank and m[i][col]:
                f = m[i][col]
                m[i] = [x ^ slow_mul(f, y) for x, y in zip(m[i], m[rank])]
        rank += 1
    return rank


def test_mul_table_matches_shift_and_add():
    a = np.arange(256)
    expected = np.array([[slow_mul(x, y) for y in range(256)] for x in range(256)])
    assert np.array_equal(gf256.MUL[a[:, None], a[None, :]], expected)


def test_known_products():
    assert gf_mul(0x02, 0x80) == 0x1D
    assert all(gf_mul(a, 1) == a for a in range(256))
    assert all(gf_mul(a, 0) == 0 for a in range(256))


def test_inverses():
    for a in range(1, 256):
        assert gf_mul(a, gf_inv(a)) == 1
    with pytest.raises(ZeroDivisionError):
        gf_inv(0)


def test_distributive_random_triples():
    rng = np.random.default_rng(1)
    a, b, c = rng.integers(0, 256, size=(3, 20_000))
    lhs = gf256.MUL[a, b ^ c]
    rhs = gf256.MUL[a, b] ^ gf256.MUL[a, c]
    assert np.array_equal(lhs, rhs)


def test_associative_and_commutative():
    rng = np.random.default_rng(2)
    a, b, c = rng.integers(0, 256, size=(3, 10_000))
    M = gf256.MUL
    assert np.array_equal(M[a, b], M[b, a])
    assert np.array_equal(M[M[a, b], c], M[a, M[b, c]])


def test_eliminate_examples():
    k = 4
    km, flag = eliminate(KnowledgeMatrix(k), [0, 0, 0, 1])
    assert flag and km.rank == 1

    km = KnowledgeMatrix.from_units(k, [0, 1])
    km2, flag = eliminate(km, [1, 1, 0, 0])
    assert not flag and km2.rank == 2
    assert np.array_equal(km2.rows, km.rows)

    km = KnowledgeMatrix(k)
    km.eliminate([1, 1, 0, 0])
    assert decoded_indices(km) == set()
    km.eliminate([0, 1, 0, 0])
    assert km.rank == 2
    assert decoded_indices(km) == {0, 1}


def test_eliminate_is_functional():
    km = KnowledgeMatrix(3)
    out, flag = eliminate(km, [1, 0, 0])
    assert flag and km.rank == 0 and out.rank == 1


def test_length_mismatch_rejected():
    with pytest.raises(ValueError):
        KnowledgeMatrix(3).eliminate([1, 0])
    with pytest.raises(ValueError):
        gf256.as_vector([1, 300])


def test_scheme_two_replay_decodes_all():
    # receiver holding p1 gets p1+p2+p3 and p1+2p2+3p3
    km = KnowledgeMatrix.from_units(3, [0])
    km.eliminate([1, 1, 1])
    assert decoded_indices(km) == {0}
    km.eliminate([1, 2, 3])
    assert decoded_indices(km) == {0, 1, 2}


def test_is_innovative_examples():
    km = KnowledgeMatrix.from_units(4, [0, 2])
    assert not is_innovative([0, 0, 0, 0], km)
    assert is_innovative([0, 1, 0, 0], km)
    km.eliminate([0, 3, 0, 7])
    row = km.basis()[1]
    assert not is_innovative(gf256.scale(row, 2), km)


def test_rref_invariant():
    rng = np.random.default_rng(3)
    km = KnowledgeMatrix(6)
    for _ in range(10):
        v = rng.integers(0, 256, 6) * (rng.random(6) < 0.5)
        km.eliminate(v)
        for c in np.flatnonzero(km.pivots):
            assert km.rows[c, c] == 1
            assert km.rows[c, :c].sum() == 0
            others = [r for r in np.flatnonzero(km.pivots) if r != c]
            assert not km.rows[others, c].any()


vec = st.lists(st.integers(0, 255), min_size=5, max_size=5)


@settings(max_examples=60, deadline=None)
@given(st.lists(vec, min_size=1, max_size=8))
def test_rank_matches_naive_oracle(vectors):
    km = KnowledgeMatrix(5)
    last_rank, last_dec = 0, set()
    for v in vectors:
        km.eliminate(v)
        assert km.rank >= last_rank
        dec = decoded_indices(km)
        assert last_dec <= dec
        last_rank, last_dec = km.rank, dec
    assert km.rank == naive_rank(vectors, 5)


@settings(max_examples=60, deadline=None)
@given(st.lists(vec, min_size=1, max_size=6), vec)
def test_innovative_agrees_with_rank(vectors, v):
    km = KnowledgeMatrix(5)
    for u in vectors:
        km.eliminate(u)
    assert is_innovative(v, km) == (naive_rank(vectors + [v], 5) > naive_rank(vectors, 5))
