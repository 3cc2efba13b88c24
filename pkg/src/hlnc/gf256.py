"""Arithmetic over GF(2^8) and the elimination primitives shared by every coding scheme.

Elements are plain integers in ``[0, 256)``; vectors are ``uint8`` numpy arrays.
The reduction polynomial is fixed at ``x^8 + x^4 + x^3 + x^2 + 1`` (0x11D).

A :class:`KnowledgeMatrix` stores a receiver's knowledge space in reduced
row-echelon form. Rows are indexed by their pivot column, so ``rows[c]`` is the
row whose leading 1 sits in column ``c`` (or all zeros when ``c`` is not a pivot).
With that layout reducing a vector never needs a search for pivots, and a packet
``k`` is decoded exactly when ``rows[k]`` is the unit vector ``e_k``.

The ``*_bank`` kernels apply the same routines to a stack of ``N`` such matrices
(one per receiver) in a single compiled call.
"""

from __future__ import annotations

import numpy as np
from numba import njit

POLY = 0x11D
ORDER = 256


def _carryless_mul(a: int, b: int, poly: int = POLY) -> int:
    result = 0
    while b:
        if b & 1:
            result ^= a
        b >>= 1
        a <<= 1
        if a & 0x100:
            a ^= poly
    return result


def _build_tables():
    exp = np.zeros(512, dtype=np.uint8)
    log = np.zeros(ORDER, dtype=np.int32)
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        x = _carryless_mul(x, 2)
    exp[255:510] = exp[:255]
    a = np.arange(ORDER)
    la = log[a][:, None] + log[a][None, :]
    mul = exp[la].astype(np.uint8)
    mul[0, :] = 0
    mul[:, 0] = 0
    inv = np.zeros(ORDER, dtype=np.uint8)
    inv[1:] = exp[(255 - log[1:]) % 255]
    return exp, log, mul, inv


EXP, LOG, MUL, INV = _build_tables()


def gf_add(a: int, b: int) -> int:
    return a ^ b


def gf_mul(a: int, b: int) -> int:
    return int(MUL[a, b])


def gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no multiplicative inverse in GF(256)")
    return int(INV[a])


def gf_div(a: int, b: int) -> int:
    return gf_mul(a, gf_inv(b))


def scale(v: np.ndarray, a: int) -> np.ndarray:
    """Multiply every entry of ``v`` by the scalar ``a``."""
    return MUL[a][np.asarray(v, dtype=np.uint8)]


def as_vector(coeffs, k: int | None = None) -> np.ndarray:
    v = np.asarray(coeffs, dtype=np.int64)
    if v.ndim != 1 or (v.size and (v.min() < 0 or v.max() >= ORDER)):
        raise ValueError("coding vector must be a 1-D sequence of field elements in [0, 256)")
    if k is not None and v.size != k:
        raise ValueError(f"coding vector has length {v.size}, block size is {k}")
    return v.astype(np.uint8)


def unit_vector(k: int, index: int, coeff: int = 1) -> np.ndarray:
    v = np.zeros(k, dtype=np.uint8)
    v[index] = coeff
    return v


# --------------------------------------------------------------------------
# compiled kernels

@njit(cache=True)
def _reduce(rows, pivots, v, out):
    k = v.shape[0]
    for j in range(k):
        out[j] = v[j]
    for c in range(k):
        if pivots[c]:
            a = out[c]
            if a != 0:
                for j in range(k):
                    out[j] ^= MUL[a, rows[c, j]]


@njit(cache=True)
def _is_zero(r):
    for j in range(r.shape[0]):
        if r[j] != 0:
            return False
    return True


@njit(cache=True)
def _insert(rows, pivots, r):
    # r must already be reduced against rows and non-zero; it is normalised in place.
    k = r.shape[0]
    p = 0
    while r[p] == 0:
        p += 1
    a = INV[r[p]]
    for j in range(k):
        r[j] = MUL[a, r[j]]
    for c in range(k):
        if pivots[c]:
            b = rows[c, p]
            if b != 0:
                for j in range(k):
                    rows[c, j] ^= MUL[b, r[j]]
    for j in range(k):
        rows[p, j] = r[j]
    pivots[p] = True
    return p


@njit(cache=True)
def _is_unit_row(rows, pivots, c):
    if not pivots[c]:
        return False
    for j in range(rows.shape[1]):
        if j != c and rows[c, j] != 0:
            return False
    return True


@njit(cache=True)
def reduce_bank(rows, pivots, active, v, out):
    """Residual of ``v`` against every active receiver; inactive rows of ``out`` are zeroed."""
    n, k = pivots.shape
    for i in range(n):
        if active[i]:
            _reduce(rows[i], pivots[i], v, out[i])
        else:
            for j in range(k):
                out[i, j] = 0


@njit(cache=True)
def all_innovative(rows, pivots, active, v):
    """True iff ``v`` lies outside the span of every active receiver."""
    n, k = pivots.shape
    r = np.empty(k, dtype=np.uint8)
    for i in range(n):
        if active[i]:
            _reduce(rows[i], pivots[i], v, r)
            if _is_zero(r):
                return False
    return True


@njit(cache=True)
def deliver_bank(rows, pivots, decoded, decode_slot, received, v, slot, newly):
    """Eliminate ``v`` at every receiver with ``received[i]``; stamp new decodings with ``slot``.

    ``newly[i, c]`` is set for every packet that becomes decoded; returns how many.
    """
    n, k = pivots.shape
    r = np.empty(k, dtype=np.uint8)
    count = 0
    for i in range(n):
        for c in range(k):
            newly[i, c] = False
        if not received[i]:
            continue
        _reduce(rows[i], pivots[i], v, r)
        if _is_zero(r):
            continue
        _insert(rows[i], pivots[i], r)
        for c in range(k):
            if not decoded[i, c] and _is_unit_row(rows[i], pivots[i], c):
                decoded[i, c] = True
                decode_slot[i, c] = slot
                newly[i, c] = True
                count += 1
    return count


@njit(cache=True)
def would_decode_bank(rows, pivots, decoded, active, v, out):
    """For each active receiver: does receiving ``v`` decode at least one new packet?

    Works on a scratch copy; the bank is not modified.
    """
    n, k = pivots.shape
    r = np.empty(k, dtype=np.uint8)
    scratch = np.empty((k, k), dtype=np.uint8)
    spiv = np.empty(k, dtype=np.bool_)
    for i in range(n):
        out[i] = False
        if not active[i]:
            continue
        _reduce(rows[i], pivots[i], v, r)
        if _is_zero(r):
            continue
        for c in range(k):
            spiv[c] = pivots[i, c]
            for j in range(k):
                scratch[c, j] = rows[i, c, j]
        _insert(scratch, spiv, r)
        for c in range(k):
            if not decoded[i, c] and _is_unit_row(scratch, spiv, c):
                out[i] = True
                break


# --------------------------------------------------------------------------

class KnowledgeMatrix:
    """A receiver's knowledge space over GF(256), kept in reduced row-echelon form.

    ``rows`` and ``pivots`` may be views into a larger bank; mutating methods
    write through to it.
    """

    __slots__ = ("rows", "pivots")

    def __init__(self, k: int | None = None, rows: np.ndarray | None = None,
                 pivots: np.ndarray | None = None):
        if rows is None:
            if k is None:
                raise ValueError("need either k or rows")
            rows = np.zeros((k, k), dtype=np.uint8)
            pivots = np.zeros(k, dtype=bool)
        elif pivots is None:
            pivots = rows.any(axis=1)
        self.rows = rows
        self.pivots = pivots

    @classmethod
    def from_units(cls, k: int, indices) -> KnowledgeMatrix:
        km = cls(k)
        for i in indices:
            km.rows[i, i] = 1
            km.pivots[i] = True
        return km

    @property
    def k(self) -> int:
        return self.rows.shape[1]

    @property
    def rank(self) -> int:
        return int(self.pivots.sum())

    def copy(self) -> KnowledgeMatrix:
        return KnowledgeMatrix(rows=self.rows.copy(), pivots=self.pivots.copy())

    def basis(self) -> list[np.ndarray]:
        """The non-zero rows, ordered by pivot column."""
        return [self.rows[c].copy() for c in np.flatnonzero(self.pivots)]

    def residual(self, v) -> np.ndarray:
        v = as_vector(v, self.k)
        out = np.empty(self.k, dtype=np.uint8)
        _reduce(self.rows, self.pivots, v, out)
        return out

    def is_innovative(self, v) -> bool:
        return bool(self.residual(v).any())

    def eliminate(self, v) -> bool:
        """Insert ``v`` if it is outside the span; returns whether it was innovative."""
        r = self.residual(v)
        if not r.any():
            return False
        _insert(self.rows, self.pivots, r)
        return True

    def decoded_indices(self) -> set[int]:
        return {c for c in range(self.k) if _is_unit_row(self.rows, self.pivots, c)}

    def __repr__(self) -> str:
        return f"KnowledgeMatrix(k={self.k}, rank={self.rank})"


def eliminate(km: KnowledgeMatrix, v) -> tuple[KnowledgeMatrix, bool]:
    """Functional form: returns an updated copy and the innovative flag."""
    out = km.copy()
    flag = out.eliminate(v)
    return out, flag


def decoded_indices(km: KnowledgeMatrix) -> set[int]:
    return km.decoded_indices()


def is_innovative(v, km: KnowledgeMatrix) -> bool:
    return km.is_innovative(v)
