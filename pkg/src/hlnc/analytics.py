"""Closed-form delay expressions and Monte-Carlo estimators for their expectation terms.

All single-value formulas accept ints, floats or :class:`fractions.Fraction`
and keep exact arithmetic when given exact inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np


@dataclass(frozen=True)
class SystemParams:
    k: int
    n: int
    pe: float
    pes: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.k < 1 or self.n < 1:
            raise ValueError("need K >= 1 and N >= 1")
        for p in (self.pe, *self.pes):
            if not 0 <= p < 1:
                raise ValueError("erasure probabilities must lie in [0, 1)")


def _exact(pe):
    # integer probabilities (0) stay exact instead of turning the result into a float
    return Fraction(pe) if isinstance(pe, int) else pe


def _check(w, pe):
    if w < 1:
        raise ValueError("receiver must want at least one packet")
    if not 0 <= pe < 1:
        raise ValueError("erasure probability must lie in [0, 1)")


def lower_bound_receiver(w, pe):
    """Expected APDD of one receiver under the perfect technique: (w+1) / (2(1-pe))."""
    _check(w, pe)
    return (w + 1) / (2 * (1 - _exact(pe)))


def rlnc_receiver(w, pe):
    """Expected APDD of one receiver under RLNC (block decoding): w / (1-pe)."""
    _check(w, pe)
    return w / (1 - _exact(pe))


def _weighted(ws, pes, term):
    ws = list(ws)
    if np.ndim(pes) == 0:
        pes = [pes] * len(ws)
    pes = [_exact(p) for p in pes]
    if len(pes) != len(ws):
        raise ValueError("w and pe have different lengths")
    total = sum(ws)
    if total == 0:
        raise ValueError("no receiver wants anything")
    num = sum(term(w, p) for w, p in zip(ws, pes) if w)
    return num / total


def lower_bound_sfm(ws, pes):
    """Perfect-technique APDD of a given wants matrix, from its row weights."""
    return _weighted(ws, pes, lambda w, p: (w * w + w) / (2 * (1 - p)))


def rlnc_sfm(ws, pes):
    return _weighted(ws, pes, lambda w, p: w * w / (1 - p))


def lower_bound_approx(k, pe):
    """Large-N closed form of the system-level lower bound."""
    return (k * pe - pe + 2) / (2 - 2 * pe)


def rlnc_approx(k, pe):
    """Large-N closed form of the system-level RLNC APDD."""
    return (k * pe - pe + 1) / (1 - pe)


def inner_expectation_approx(k, pe):
    return k * pe - pe + 1


def inner_expectation_mc(k: int, n: int, pe: float, samples: int,
                         rng: np.random.Generator, chunk: int = 20_000,
                         return_sd: bool = False):
    """Monte-Carlo E[sum w^2 / sum w] with w_n ~ Binomial(K, pe) i.i.d.

    Draws with sum w = 0 are redrawn (the ratio is undefined there). With
    ``return_sd`` the sample standard deviation of the ratio is returned too.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    if pe == 0:
        raise ValueError("pe = 0 leaves every receiver with nothing to want")
    acc = acc2 = 0.0
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        w = rng.binomial(k, pe, size=(m, n))
        s = w.sum(axis=1)
        while (bad := s == 0).any():
            w[bad] = rng.binomial(k, pe, size=(int(bad.sum()), n))
            s = w.sum(axis=1)
        ratio = (w * w).sum(axis=1) / s
        acc += float(ratio.sum())
        acc2 += float((ratio * ratio).sum())
        done += m
    mean = acc / samples
    if not return_sd:
        return mean
    var = (acc2 - samples * mean * mean) / max(samples - 1, 1)
    return mean, math.sqrt(max(var, 0.0))


@dataclass(frozen=True)
class SystemBounds:
    inner_mc: float
    lower_mc: float
    lower_approx: float
    rlnc_mc: float
    rlnc_approx: float
    degenerate: bool = False


def system_bounds(p: SystemParams, samples: int, rng: np.random.Generator) -> SystemBounds:
    """System-level lower bound and RLNC APDD, Monte-Carlo and large-N closed form.

    ``pe = 0`` is degenerate (no receiver wants anything): the Monte-Carlo fields
    are NaN and ``degenerate`` is set.
    """
    lo, rl = lower_bound_approx(p.k, p.pe), rlnc_approx(p.k, p.pe)
    if p.pe == 0:
        nan = float("nan")
        return SystemBounds(nan, nan, lo, nan, rl, degenerate=True)
    inner = inner_expectation_mc(p.k, p.n, p.pe, samples, rng)
    return SystemBounds(inner, (1 + inner) / (2 * (1 - p.pe)), lo,
                        inner / (1 - p.pe), rl)


def heterogeneous_bracket(k, pes) -> tuple[float, float]:
    """Bracket the lower bound for unequal erasure rates with the smallest and largest one."""
    return lower_bound_approx(k, min(pes)), lower_bound_approx(k, max(pes))


# --------------------------------------------------------------------------
# exhaustive checks of the single-receiver argument

def pattern_average(w: int, u_total: int) -> Fraction:
    """Mean APDD over all reception patterns of a receiver finishing at slot ``u_total``.

    The last successful reception is at ``u_total``; the other ``w-1`` sit at any
    distinct earlier slots with equal probability.
    """
    if not 1 <= w <= u_total:
        raise ValueError("need 1 <= w <= u_total")
    total = Fraction(0)
    count = 0
    for pattern in combinations(range(1, u_total), w - 1):
        total += Fraction(sum(pattern) + u_total, w)
        count += 1
    return total / count


def expected_perfect_delay_series(w: int, pe: Fraction | float, terms: int = 2000):
    """Sum over the completion slot U ~ NegBin of the exhaustive pattern average.

    Uses the closed-form pattern mean U/2 + U/(2w) (checked separately by
    :func:`pattern_average`) so the series is cheap to run far into the tail.
    """
    _check(w, pe)
    q = 1 - pe
    total = 0
    for u in range(w, w + terms):
        prob = math.comb(u - 1, w - 1) * q ** w * pe ** (u - w)
        total += prob * (Fraction(u, 2) + Fraction(u, 2 * w) if isinstance(pe, Fraction)
                         else u / 2 + u / (2 * w))
    return total
