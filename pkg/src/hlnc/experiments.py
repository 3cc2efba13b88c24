"""Simulation campaigns, aggregation, result emission and the command-line front-end.

Every block draws from two keyed Philox streams. The *instance* stream
(seed, N, block) generates the wants matrix, so all schemes of a campaign see
the same instances. The *scheme* stream (seed, scheme, N, block) drives erasures
and coefficients. Results therefore do not depend on how blocks are split across
workers.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import analytics
from .hypergraph import (Hypergraph, InstanceTooLarge, NotSupported, perfect_solution_exists,
                         strong_coloring_bruteforce)
from .model import ChannelModel, PacketAudit, Sfm, generate_sfm
from .schemes import (SCHEME_NAMES, ContractViolation, bruteforce_idnc_min_bct, make_scheme,
                      run_block)

ANALYTIC_NAMES = ("lower-bound", "lower-bound-approx", "rlnc-formula", "rlnc-formula-approx")
ALL_NAMES = SCHEME_NAMES + ANALYTIC_NAMES
COLUMNS = ("scheme", "K", "N", "P_e", "mean_apdd", "apdd_ci95", "mean_bct",
           "mean_feedback_rounds", "blocks")
SWEEP = (5, 10, 20, 50, 100)

PRESETS = {
    "fig2": dict(schemes=("perfect", "rlnc") + ANALYTIC_NAMES, receivers=(20, 50, 100)),
    "fig4": dict(schemes=("lower-bound", "lower-bound-approx", "rlnc-formula-approx",
                          "hlnc-full", "hlnc-semi", "hlnc-offline", "gidnc", "rlnc"),
                 receivers=SWEEP),
    "fig5": dict(schemes=("hlnc-full", "hlnc-semi"), receivers=SWEEP),
}


# --------------------------------------------------------------------------
# keyed random streams

def _tag(name: str) -> int:
    return zlib.crc32(name.encode())


class BlockStreams:
    """Philox generator re-keyed per block by resetting its counter (cheaper than a new Generator)."""

    def __init__(self, *words: int):
        key = np.random.SeedSequence(list(words)).generate_state(2, np.uint64)
        self._bitgen = np.random.Philox(key=key)
        self.gen = np.random.Generator(self._bitgen)
        self._counter = np.zeros(4, dtype=np.uint64)
        self._state = {
            "bit_generator": "Philox", "state": {"counter": self._counter, "key": key},
            "buffer": np.zeros(4, dtype=np.uint64), "buffer_pos": 4,
            "has_uint32": 0, "uinteger": 0}

    def block(self, b: int) -> np.random.Generator:
        self._counter[3] = b
        self._bitgen.state = self._state
        return self.gen


def instance_streams(seed: int, n: int) -> BlockStreams:
    return BlockStreams(seed, 0, n)


def scheme_streams(seed: int, scheme: str, n: int) -> BlockStreams:
    return BlockStreams(seed, 1, _tag(scheme), n)


# --------------------------------------------------------------------------
# configuration and results

@dataclass
class Campaign:
    schemes: tuple[str, ...]
    k: int = 15
    receivers: tuple[int, ...] = (20,)
    erasure: float | tuple[float, ...] = 0.2
    blocks: int = 10_000
    seed: int = 0
    out: str | None = None
    fmt: str = "csv"
    workers: int = 1
    analytic_samples: int = 100_000
    audit: bool = True
    # fixed wants matrix instead of a fresh uncoded round per block
    sfm: Sfm | None = field(default=None, repr=False)

    def __post_init__(self):
        self.schemes = tuple(self.schemes)
        self.receivers = tuple(int(n) for n in self.receivers)
        if not self.schemes:
            raise ValueError("campaign has no schemes")
        bad = [s for s in self.schemes if s not in ALL_NAMES]
        if bad:
            raise ValueError(f"unknown scheme(s) {bad}; choose from {', '.join(ALL_NAMES)}")
        if self.blocks < 1:
            raise ValueError("blocks must be >= 1")
        if self.fmt not in ("csv", "structured"):
            raise ValueError("format must be csv or structured")
        if self.sfm is not None:
            self.k = self.sfm.n_packets
            self.receivers = (self.sfm.n_receivers,)
            if any(s in ANALYTIC_NAMES for s in self.schemes):
                raise ValueError("analytic rows need a random instance, not a fixed SFM")
        if not self.receivers or min(self.receivers) < 1 or self.k < 1:
            raise ValueError("need K >= 1 and N >= 1")
        if not np.isscalar(self.erasure):
            self.erasure = tuple(float(p) for p in self.erasure)
            if any(len(self.erasure) != n for n in self.receivers):
                raise ValueError("per-receiver erasure list must match every N of the sweep")
        for p in np.atleast_1d(self.erasure):
            if not 0 <= p < 1:
                raise ValueError("erasure probabilities must lie in [0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def channel(self, n: int) -> ChannelModel:
        if np.isscalar(self.erasure):
            return ChannelModel.uniform(n, self.erasure)
        return ChannelModel(np.array(self.erasure))

    def config(self) -> dict:
        d = asdict(self)
        d.pop("sfm")
        if self.sfm is not None:
            d["sfm"] = [sorted(r) for r in self.sfm.rows()]
        return d


@dataclass(frozen=True)
class ResultRow:
    scheme: str
    K: int
    N: int
    P_e: float | str
    mean_apdd: float
    apdd_ci95: float
    mean_bct: float | None
    mean_feedback_rounds: float | None
    blocks: int

    def values(self) -> tuple:
        return tuple(getattr(self, c) for c in COLUMNS)


@dataclass
class CampaignResult:
    campaign: Campaign
    rows: list[ResultRow]
    samples: dict[tuple[str, int], int]
    audit: dict[tuple[str, int], PacketAudit]
    bct_ci: dict[tuple[str, int], float] = field(default_factory=dict)
    # wall-clock seconds per cell; informational, never emitted
    elapsed: dict[tuple[str, int], float] = field(default_factory=dict)

    def row(self, scheme: str, n: int) -> ResultRow:
        for r in self.rows:
            if r.scheme == scheme and r.N == n:
                return r
        raise KeyError((scheme, n))

    def total_audit(self, prefix: str = "hlnc") -> PacketAudit:
        tot = PacketAudit()
        for (s, _), a in self.audit.items():
            if s.startswith(prefix):
                tot.merge(a)
        return tot


# --------------------------------------------------------------------------
# execution

@dataclass
class _Chunk:
    apdd: np.ndarray
    bct: np.ndarray
    rounds: np.ndarray
    audit: PacketAudit


def _run_chunk(c: Campaign, scheme_name: str, n: int, start: int, stop: int) -> _Chunk:
    channel = c.channel(n)
    inst = instance_streams(c.seed, n)
    streams = scheme_streams(c.seed, scheme_name, n)
    scheme = make_scheme(scheme_name)
    m = stop - start
    apdd = np.full(m, np.nan)
    bct = np.zeros(m)
    rounds = np.zeros(m)
    audit = PacketAudit()
    fixed = c.sfm is not None and c.sfm.total > 0
    for j, b in enumerate(range(start, stop)):
        sfm = c.sfm if c.sfm is not None else generate_sfm(c.k, n, channel, inst.block(b))
        if not fixed and not sfm.wants.any():
            continue
        res = run_block(scheme, sfm, channel, streams.block(b), audit=c.audit)
        apdd[j] = res.apdd_float()
        bct[j] = res.slots_used
        rounds[j] = res.feedback_rounds
        audit.merge(res.audit)
    return _Chunk(apdd, bct, rounds, audit)


def _chunk_bounds(blocks: int, pieces: int) -> list[tuple[int, int]]:
    edges = np.linspace(0, blocks, pieces + 1).astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def _pe_label(c: Campaign):
    return c.erasure if np.isscalar(c.erasure) else ";".join(map(repr, c.erasure))


def _analytic_row(c: Campaign, name: str, n: int) -> ResultRow:
    pe = float(c.erasure) if np.isscalar(c.erasure) else None
    if pe is None:
        raise ValueError("analytic rows need a common erasure probability")
    if name.endswith("-approx"):
        f = analytics.lower_bound_approx if name.startswith("lower") else analytics.rlnc_approx
        mean, ci = f(c.k, pe), 0.0
    else:
        rng = scheme_streams(c.seed, name, n).block(0)
        inner, sd = analytics.inner_expectation_mc(c.k, n, pe, c.analytic_samples, rng,
                                                   return_sd=True)
        half = 1.96 * sd / math.sqrt(c.analytic_samples)
        if name == "lower-bound":
            mean, ci = (1 + inner) / (2 * (1 - pe)), half / (2 * (1 - pe))
        else:
            mean, ci = inner / (1 - pe), half / (1 - pe)
    return ResultRow(name, c.k, n, _pe_label(c), float(mean), float(ci), None, None,
                     c.analytic_samples)


def run_campaign(c: Campaign) -> CampaignResult:
    """Run every (scheme, N) cell of the campaign and aggregate per-block statistics."""
    rows, samples, audits, bct_ci, elapsed = [], {}, {}, {}, {}
    pool = ProcessPoolExecutor(c.workers) if c.workers > 1 else None
    try:
        for n in c.receivers:
            for name in c.schemes:
                t0 = time.perf_counter()
                if name in ANALYTIC_NAMES:
                    rows.append(_analytic_row(c, name, n))
                    samples[name, n] = c.analytic_samples
                    elapsed[name, n] = time.perf_counter() - t0
                    continue
                bounds = _chunk_bounds(c.blocks, 4 * c.workers if pool else 1)
                if pool:
                    futs = [pool.submit(_run_chunk, c, name, n, a, b) for a, b in bounds]
                    chunks = [f.result() for f in futs]
                else:
                    chunks = [_run_chunk(c, name, n, a, b) for a, b in bounds]
                apdd = np.concatenate([ch.apdd for ch in chunks])
                bct = np.concatenate([ch.bct for ch in chunks])
                rounds = np.concatenate([ch.rounds for ch in chunks])
                audit = PacketAudit()
                for ch in chunks:
                    audit.merge(ch.audit)
                valid = apdd[~np.isnan(apdd)]
                m = valid.size
                mean = float(valid.mean()) if m else math.nan
                ci = float(1.96 * valid.std(ddof=1) / math.sqrt(m)) if m > 1 else math.nan
                rows.append(ResultRow(name, c.k, n, _pe_label(c), mean, ci,
                                      float(bct.mean()), float(rounds.mean()), c.blocks))
                samples[name, n] = m
                audits[name, n] = audit
                bct_ci[name, n] = float(1.96 * bct.std(ddof=1) / math.sqrt(bct.size)) \
                    if bct.size > 1 else math.nan
                elapsed[name, n] = time.perf_counter() - t0
    finally:
        if pool:
            pool.shutdown()
    return CampaignResult(c, rows, samples, audits, bct_ci, elapsed)


# --------------------------------------------------------------------------
# emission

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        w.writerow([_cell(v) for v in r.values()])
    return buf.getvalue()


def _parse_num(s: str, kind):
    if s == "":
        return None
    return kind(s)


def parse_csv(text: str) -> list[ResultRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if tuple(header) != COLUMNS:
        raise ValueError(f"unexpected header {header}")
    rows = []
    for rec in reader:
        s, k, n, pe, mean, ci, b, fr, blocks = rec
        pe_v = pe if ";" in pe else float(pe)
        rows.append(ResultRow(s, int(k), int(n), pe_v, float(mean), float(ci),
                              _parse_num(b, float), _parse_num(fr, float), int(blocks)))
    return rows


def to_structured(result: CampaignResult) -> dict:
    return {
        "campaign": result.campaign.config(),
        "columns": list(COLUMNS),
        "rows": [dict(zip(COLUMNS, r.values())) for r in result.rows],
        "samples": [{"scheme": s, "N": n, "count": m} for (s, n), m in result.samples.items()],
        "audit": [{"scheme": s, "N": n, **asdict(a)} for (s, n), a in result.audit.items()],
        "bct_ci95": [{"scheme": s, "N": n, "half_width": h} for (s, n), h in result.bct_ci.items()],
    }


def emit(result: CampaignResult, path=None, fmt: str = "csv") -> str:
    """Serialise the result as CSV or structured JSON; writes to ``path`` when given."""
    if not result.rows:
        raise ValueError("nothing to emit")
    if fmt == "csv":
        text = to_csv(result.rows)
    elif fmt == "structured":
        text = json.dumps(to_structured(result), indent=1) + "\n"
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def preset(name: str, **overrides) -> Campaign:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    kw = dict(k=15, erasure=0.2, blocks=10_000, **PRESETS[name])
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return Campaign(**kw)


# --------------------------------------------------------------------------
# command line

def _int_list(s: str) -> tuple[int, ...]:
    return tuple(int(t) for t in s.split(","))


def _float_list(s: str) -> tuple[float, ...]:
    return tuple(float(t) for t in s.split(","))


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hlnc", description="Broadcast network coding experiments")
    sub = ap.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a simulation campaign")
    sim.add_argument("--preset", choices=sorted(PRESETS))
    sim.add_argument("--scheme", nargs="+", dest="schemes", metavar="NAME")
    sim.add_argument("--packets", type=int, dest="k")
    sim.add_argument("--receivers", type=_int_list)
    sim.add_argument("--erasure", type=_float_list,
                     help="one probability, or one per receiver (comma separated)")
    sim.add_argument("--blocks", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--workers", type=int)
    sim.add_argument("--out")
    sim.add_argument("--format", choices=("csv", "structured"), default="csv", dest="fmt")

    an = sub.add_parser("analytic", help="evaluate a closed-form delay expression")
    an.add_argument("--formula", required=True,
                    choices=("eq4", "eq5", "eq6", "eq7", "eq8", "eq9", "eq10", "eq11"))
    an.add_argument("--w", type=_int_list, help="wanted-packet count(s)")
    an.add_argument("--pe", type=_float_list, help="erasure probability (or one per receiver)")
    an.add_argument("--packets", type=int, help="block size K")
    an.add_argument("--receivers", type=int, help="receiver count N (Monte-Carlo forms)")
    an.add_argument("--samples", type=int, default=100_000)
    an.add_argument("--seed", type=int, default=0)

    orc = sub.add_parser("oracle", help="run an exhaustive oracle on a small instance")
    orc.add_argument("--check", required=True,
                     choices=("strong-coloring", "perfect-solution", "idnc-bct"))
    orc.add_argument("--input", required=True,
                     help="one receiver (hyperedge) per line: 0-based packet indices")
    orc.add_argument("--colors", type=int, help="colour count for strong-coloring")
    orc.add_argument("--packets", type=int, help="block size K (default: largest index + 1)")
    return ap


def _simulate(a) -> int:
    over = dict(schemes=a.schemes, k=a.k, receivers=a.receivers, blocks=a.blocks,
                seed=a.seed, workers=a.workers, out=a.out, fmt=a.fmt)
    if a.erasure is not None:
        over["erasure"] = a.erasure[0] if len(a.erasure) == 1 else a.erasure
    if a.preset:
        c = preset(a.preset, **over)
    else:
        if not a.schemes:
            raise ValueError("give --scheme or --preset")
        c = Campaign(**{k: v for k, v in over.items() if v is not None})
    if c.out is not None:
        parent = Path(c.out).resolve().parent
        if not parent.is_dir():
            raise OSError(f"output directory {parent} does not exist")
    text = emit(run_campaign(c), c.out, c.fmt)
    if c.out is None:
        sys.stdout.write(text)
    return 0


def _analytic(a) -> int:
    f = a.formula
    need = {"eq4": "w pe", "eq8": "w pe", "eq5": "w pe", "eq9": "w pe",
            "eq6": "packets pe receivers", "eq10": "packets pe receivers",
            "eq7": "packets pe", "eq11": "packets pe"}[f]
    missing = [x for x in need.split() if getattr(a, x) is None]
    if missing:
        raise ValueError(f"{f} needs --{' --'.join(missing)}")
    if f in ("eq4", "eq8"):
        fn = analytics.lower_bound_receiver if f == "eq4" else analytics.rlnc_receiver
        value = fn(a.w[0], a.pe[0])
    elif f in ("eq5", "eq9"):
        fn = analytics.lower_bound_sfm if f == "eq5" else analytics.rlnc_sfm
        value = fn(a.w, a.pe[0] if len(a.pe) == 1 else a.pe)
    elif f in ("eq7", "eq11"):
        fn = analytics.lower_bound_approx if f == "eq7" else analytics.rlnc_approx
        value = fn(a.packets, a.pe[0])
    else:
        b = analytics.system_bounds(analytics.SystemParams(a.packets, a.receivers, a.pe[0]),
                                    a.samples, np.random.default_rng(a.seed))
        value = b.lower_mc if f == "eq6" else b.rlnc_mc
    print(repr(float(value)))
    return 0


def _oracle(a) -> int:
    text = Path(a.input).read_text()
    h = Hypergraph.parse(text, a.packets)
    if a.check == "strong-coloring":
        r = a.colors if a.colors is not None else int(h.incidence.sum(axis=1).max(initial=0))
        col = strong_coloring_bruteforce(h, r)
        out = {"colors": r, "exists": col is not None,
               "classes": None if col is None else [sorted(s) for s in col.classes]}
    else:
        sfm = Sfm(h.incidence)
        if a.check == "perfect-solution":
            ok, sets = perfect_solution_exists(sfm)
            out = {"exists": ok, "coding_sets": None if sets is None else [sorted(s) for s in sets]}
        else:
            out = {"min_bct": bruteforce_idnc_min_bct(sfm)}
    print(json.dumps(out))
    return 0


def main(argv=None) -> int:
    ap = _parser()
    a = ap.parse_args(argv)
    try:
        return {"simulate": _simulate, "analytic": _analytic, "oracle": _oracle}[a.command](a)
    except (ContractViolation, InstanceTooLarge, NotSupported) as e:
        print(f"refused: {e}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
