"""Hypergraph model of receiver knowledge, minimal vertex covers, and small exhaustive oracles.

Vertices are packet indices, one hyperedge per unfinished receiver holding the
packets it has not decoded yet. A coded packet built on a minimal vertex cover
reaches every receiver (coverage) and is instantly decodable by at least one of
them (some hyperedge meets the cover exactly once).

Text format used for fixtures and the ``oracle`` CLI: one hyperedge per line,
whitespace-separated 0-based vertex indices; blank lines and ``#`` comments are
ignored.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

import numpy as np
from numba import njit

from .model import DecoderBank, Sfm

MAX_BRUTEFORCE_VERTICES = 20


class InstanceTooLarge(ValueError):
    pass


class NotSupported(ValueError):
    """The requested equivalence is only established for uniform instances."""


@dataclass(frozen=True, eq=False)
class Hypergraph:
    incidence: np.ndarray            # (edges, packets) bool
    labels: tuple[int, ...] = ()     # receiver index behind each hyperedge

    def __post_init__(self):
        inc = np.asarray(self.incidence, dtype=bool)
        if inc.ndim != 2:
            raise ValueError("incidence must be 2-D")
        if inc.shape[0] and not inc.any(axis=1).all():
            raise ValueError("hyperedges must be non-empty")
        object.__setattr__(self, "incidence", inc)
        if not self.labels:
            object.__setattr__(self, "labels", tuple(range(inc.shape[0])))

    @classmethod
    def from_edges(cls, edges, n_vertices: int | None = None) -> Hypergraph:
        edges = [sorted(set(e)) for e in edges]
        if n_vertices is None:
            n_vertices = 1 + max((max(e) for e in edges if e), default=-1)
        inc = np.zeros((len(edges), n_vertices), dtype=bool)
        for i, e in enumerate(edges):
            inc[i, e] = True
        return cls(inc)

    @classmethod
    def from_states(cls, decoders) -> Hypergraph:
        """One hyperedge per unfinished receiver over its undecoded packets.

        Accepts a :class:`DecoderBank` or an iterable of receiver views.
        """
        if isinstance(decoders, DecoderBank):
            live = decoders.unfinished()
            return cls(~decoders.decoded[live], tuple(np.flatnonzero(live).tolist()))
        decoders = list(decoders)
        if not decoders:
            return cls(np.zeros((0, 0), dtype=bool))
        undecoded = np.array([~d.bank.decoded[d.index] for d in decoders])
        live = undecoded.any(axis=1)
        return cls(undecoded[live], tuple(d.index for d, a in zip(decoders, live) if a))

    @classmethod
    def from_sfm(cls, sfm: Sfm) -> Hypergraph:
        live = sfm.wants.any(axis=1)
        return cls(sfm.wants[live], tuple(np.flatnonzero(live).tolist()))

    @classmethod
    def parse(cls, text: str, n_vertices: int | None = None) -> Hypergraph:
        edges = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                edges.append([int(tok) for tok in line.split()])
        return cls.from_edges(edges, n_vertices)

    def format(self) -> str:
        return "".join(" ".join(map(str, sorted(e))) + "\n" for e in self.edges)

    @property
    def n_edges(self) -> int:
        return self.incidence.shape[0]

    @property
    def n_vertices(self) -> int:
        return self.incidence.shape[1]

    @property
    def edges(self) -> list[frozenset[int]]:
        return [frozenset(np.flatnonzero(r).tolist()) for r in self.incidence]

    @property
    def vertices(self) -> set[int]:
        """Vertices incident to at least one hyperedge."""
        return set(np.flatnonzero(self.incidence.any(axis=0)).tolist())

    @property
    def empty(self) -> bool:
        return self.n_edges == 0

    def weights(self) -> np.ndarray:
        return self.incidence.sum(axis=0)

    def is_subgraph_of(self, other: Hypergraph) -> bool:
        """Same receivers, and each hyperedge contained in the matching one of ``other``."""
        if self.labels != other.labels or self.n_vertices != other.n_vertices:
            return False
        return bool(not (self.incidence & ~other.incidence).any())

    def __repr__(self):
        return f"Hypergraph({[sorted(e) for e in self.edges]})"


@dataclass(frozen=True)
class VertexCover:
    vertices: frozenset[int]
    order: tuple[int, ...] = ()      # greedy selection order before pruning

    def mask(self, n_vertices: int) -> np.ndarray:
        m = np.zeros(n_vertices, dtype=bool)
        m[list(self.vertices)] = True
        return m

    def hits(self, h: Hypergraph) -> np.ndarray:
        """|e ∩ cover| for every hyperedge."""
        return h.incidence[:, sorted(self.vertices)].sum(axis=1)

    def covers(self, h: Hypergraph) -> bool:
        return bool((self.hits(h) >= 1).all())

    def is_minimal(self, h: Hypergraph) -> bool:
        return is_minimal_cover(h.incidence, self.mask(h.n_vertices))

    def single_incidence(self, h: Hypergraph) -> list[int]:
        """Hyperedges (by position) meeting the cover exactly once."""
        return np.flatnonzero(self.hits(h) == 1).tolist()


def is_minimal_cover(incidence: np.ndarray, mask: np.ndarray) -> bool:
    """Covers every hyperedge, and each cover vertex is the sole hit of some hyperedge."""
    sub = incidence[:, mask]
    hits = sub.sum(axis=1)
    if not (hits >= 1).all():
        return False
    return bool(sub[hits == 1].any(axis=0).all())


@njit(cache=True)
def _greedy_minimal_cover(inc, in_cover, order):
    m, k = inc.shape
    alive = np.ones(m, dtype=np.bool_)
    remaining = m
    n_chosen = 0
    for v in range(k):
        in_cover[v] = False
    while remaining > 0:
        best = -1
        best_w = 0
        for v in range(k):
            w = 0
            for e in range(m):
                if alive[e] and inc[e, v]:
                    w += 1
            if w > best_w:
                best_w = w
                best = v
        order[n_chosen] = best
        n_chosen += 1
        in_cover[best] = True
        for e in range(m):
            if alive[e] and inc[e, best]:
                alive[e] = False
                remaining -= 1
    hits = np.zeros(m, dtype=np.int64)
    for e in range(m):
        for v in range(k):
            if in_cover[v] and inc[e, v]:
                hits[e] += 1
    for i in range(n_chosen - 1, -1, -1):
        v = order[i]
        needed = False
        for e in range(m):
            if inc[e, v] and hits[e] == 1:
                needed = True
                break
        if not needed:
            in_cover[v] = False
            for e in range(m):
                if inc[e, v]:
                    hits[e] -= 1
    return n_chosen


def cover_mask(incidence: np.ndarray) -> np.ndarray:
    """Boolean mask of the pruned greedy cover of a non-empty incidence matrix."""
    k = incidence.shape[1]
    mask = np.empty(k, dtype=bool)
    order = np.empty(k, dtype=np.int64)
    _greedy_minimal_cover(incidence, mask, order)
    return mask


def minimal_vertex_cover(h: Hypergraph) -> VertexCover:
    """Popularity-greedy cover followed by a prune pass that makes it minimal.

    Weights are recounted on the shrinking hypergraph after every pick; ties go to
    the lowest packet index. Pruning walks the picks in reverse and drops any
    vertex whose removal keeps every hyperedge covered.
    """
    if h.empty:
        raise ValueError("cannot cover an empty hypergraph")
    k = h.n_vertices
    mask = np.empty(k, dtype=bool)
    order = np.empty(k, dtype=np.int64)
    n = _greedy_minimal_cover(h.incidence, mask, order)
    return VertexCover(frozenset(np.flatnonzero(mask).tolist()), tuple(order[:n].tolist()))


# --------------------------------------------------------------------------
# exhaustive oracles

@dataclass(frozen=True)
class StrongColoring:
    classes: tuple[frozenset[int], ...]

    def is_valid(self, h: Hypergraph) -> bool:
        return all(len(c & e) <= 1 for c in self.classes for e in h.edges)


def strong_coloring_bruteforce(h: Hypergraph, r: int) -> StrongColoring | None:
    """Exhaustive search for a partition into ``r`` classes meeting each hyperedge at most once.

    Only vertices incident to some hyperedge are coloured. Colours are assigned in
    canonical order (a vertex may open at most one new colour) so that colour
    permutations are never revisited.
    """
    verts = sorted(h.vertices)
    if len(verts) > MAX_BRUTEFORCE_VERTICES:
        raise InstanceTooLarge(f"{len(verts)} vertices exceed the brute-force limit")
    if r < 1:
        return None
    neighbours = {v: set() for v in verts}
    for e in h.edges:
        for a in e:
            neighbours[a] |= e - {a}
    # most-constrained first keeps the search tree small
    verts.sort(key=lambda v: (-len(neighbours[v]), v))
    colour: dict[int, int] = {}

    def place(i: int, used: int) -> bool:
        if i == len(verts):
            return True
        v = verts[i]
        taken = {colour[u] for u in neighbours[v] if u in colour}
        for c in range(min(used + 1, r)):
            if c in taken:
                continue
            colour[v] = c
            if place(i + 1, max(used, c + 1)):
                return True
            del colour[v]
        return False

    if not place(0, 0):
        return None
    classes = [set() for _ in range(r)]
    for v, c in colour.items():
        classes[c].add(v)
    return StrongColoring(tuple(frozenset(c) for c in classes))


def perfect_solution_exists(sfm: Sfm) -> tuple[bool, list[frozenset[int]] | None]:
    """Decide whether an erasure-free perfect solution exists for a uniform wants matrix.

    Uses the colouring equivalence: with every receiver wanting ``r`` packets, a
    perfect solution exists iff the wants hypergraph has a size-``r`` strong
    colouring, and the colour classes are the coding sets.
    """
    h = Hypergraph.from_sfm(sfm)
    if h.empty:
        return True, []
    sizes = set(h.incidence.sum(axis=1).tolist())
    if len(sizes) != 1:
        raise NotSupported("receivers want different numbers of packets")
    (r,) = sizes
    col = strong_coloring_bruteforce(h, r)
    if col is None:
        return False, None
    return True, sorted((c for c in col.classes if c), key=min)


def _exact_transversals(edges: list[int], universe: list[int]):
    """Yield bitmasks M ⊆ universe with popcount(M & e) == 1 for every edge bitmask e."""
    incident = {v: [i for i, e in enumerate(edges) if e >> v & 1] for v in universe}
    hits = [0] * len(edges)

    def rec(j: int, mask: int):
        if j == len(universe):
            if all(x == 1 for x in hits):
                yield mask
            return
        v = universe[j]
        # edges whose last candidate vertex is v must take it now
        forced = any(hits[i] == 0 and not any(edges[i] >> u & 1 for u in universe[j + 1:])
                     for i in incident[v])
        if all(hits[i] == 0 for i in incident[v]):
            for i in incident[v]:
                hits[i] += 1
            yield from rec(j + 1, mask | 1 << v)
            for i in incident[v]:
                hits[i] -= 1
        if not forced:
            yield from rec(j + 1, mask)

    yield from rec(0, 0)


def perfect_sequence_search(sfm: Sfm, limit: int = 16) -> list[frozenset[int]] | None:
    """Search ordered coded-packet sequences for an erasure-free perfect solution.

    Each transmission must let every unfinished receiver decode exactly one new
    wanted packet. Since every reception then decodes exactly one packet, no
    receiver ever holds an undecodable equation, so this happens iff the coding
    set meets each remaining Wants set in exactly one packet. Works on arbitrary
    (non-uniform) instances; returns the coding sets in order, or None.
    """
    wants = [int(sum(1 << k for k in row)) for row in sfm.rows()]
    if len(set().union(*sfm.rows())) > limit:
        raise InstanceTooLarge("too many packets for exhaustive sequence search")
    dead: set[tuple[int, ...]] = set()

    def rec(state: tuple[int, ...]) -> list[int] | None:
        live = [w for w in state if w]
        if not live:
            return []
        if state in dead:
            return None
        union = 0
        for w in live:
            union |= w
        universe = [k for k in range(union.bit_length()) if union >> k & 1]
        for m in _exact_transversals(live, universe):
            rest = rec(tuple(w & ~m for w in state))
            if rest is not None:
                return [m] + rest
        dead.add(state)
        return None

    seq = rec(tuple(wants))
    if seq is None:
        return None
    return [frozenset(k for k in range(m.bit_length()) if m >> k & 1) for m in seq]


def perfect_first_slot_sets(sfm: Sfm) -> list[frozenset[int]]:
    """All coding sets that give every receiver one new decoding in the first slot."""
    rows = [r for r in sfm.rows() if r]
    universe = sorted(set().union(*rows)) if rows else []
    out = []
    for size in range(1, len(universe) + 1):
        for m in combinations(universe, size):
            s = set(m)
            if all(len(s & r) == 1 for r in rows):
                out.append(frozenset(m))
    return out
