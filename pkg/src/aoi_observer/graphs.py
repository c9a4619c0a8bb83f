"""Time-varying directed communication graphs.

A GraphSequence is a sparse map from time-step to directed edge set together
with the declared interval sequence I = {t_0=0, t_1, ...} over which joint
strong connectivity is promised. Edge (i, j) means node i transmits to node
j at that step; neighbor sets are therefore in-neighbor sets. Node ids are
1-based throughout.

Besides the connectivity conditions (monotone interval growth, linear-rate
cap on interval length, per-interval strong connectivity of the union graph)
this module hosts the robustness notions used by the resilient protocol:
r-reachability, strong r-robustness w.r.t. a source set, and its joint
(windowed) form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, GenerationFailed, SubsetBlowup

Edge = tuple[int, int]

SUBSET_GUARD = 22  # refuse exhaustive robustness checks past 2^22 subsets
ROBUST_RETRIES = 64


@dataclass(frozen=True)
class GraphSequence:
    """Edge schedule plus the declared interval structure."""

    N: int
    schedule: dict[int, frozenset[Edge]]
    intervals: list[int]
    f_spec: str
    horizon: int

    def __post_init__(self):
        if self.intervals[0] != 0:
            raise DimensionMismatch("interval sequence must start at t_0 = 0")
        if any(b <= a for a, b in zip(self.intervals, self.intervals[1:])):
            raise DimensionMismatch("interval sequence must be strictly increasing")
        for k, edges in self.schedule.items():
            for (i, j) in edges:
                if i == j:
                    raise DimensionMismatch(f"self-loop ({i},{i}) at step {k}")
                if not (1 <= i <= self.N and 1 <= j <= self.N):
                    raise DimensionMismatch(f"edge ({i},{j}) outside 1..{self.N}")

    def edges_at(self, k: int) -> frozenset[Edge]:
        return self.schedule.get(k, frozenset())

    def in_neighbors(self, i: int, k: int) -> set[int]:
        """Nodes that transmit to i at step k."""
        return {a for (a, b) in self.edges_at(k) if b == i}

    def interval_start(self, k: int) -> int:
        """m(k): latest declared interval start at or before k."""
        idx = int(np.searchsorted(self.intervals, k, side="right")) - 1
        if idx < 0:
            raise DimensionMismatch(f"step {k} precedes t_0")
        return self.intervals[idx]

    def interval_end(self, k: int) -> int:
        """M(k): earliest declared interval start strictly after k."""
        idx = int(np.searchsorted(self.intervals, k, side="right"))
        if idx >= len(self.intervals):
            raise DimensionMismatch(
                f"interval sequence exhausted at step {k}; extend the horizon"
            )
        return self.intervals[idx]

    def interval_length(self, k: int) -> int:
        """g(k) = M(k) - m(k), the length of the interval containing k."""
        return self.interval_end(k) - self.interval_start(k)


def union_graph(seq: GraphSequence, k1: int, k2: int) -> frozenset[Edge]:
    """Union of edge sets over the inclusive step range [k1, k2]."""
    if not (0 <= k1 <= k2 <= seq.horizon):
        raise DimensionMismatch(f"window [{k1},{k2}] outside [0,{seq.horizon}]")
    out: set[Edge] = set()
    for k in range(k1, k2 + 1):
        out |= seq.edges_at(k)
    return frozenset(out)


def is_strongly_connected(edges: frozenset[Edge] | set[Edge], N: int) -> bool:
    """True iff every node reaches every other along directed edges."""
    if N <= 1:
        return True
    fwd: dict[int, list[int]] = {i: [] for i in range(1, N + 1)}
    rev: dict[int, list[int]] = {i: [] for i in range(1, N + 1)}
    for (i, j) in edges:
        fwd[i].append(j)
        rev[j].append(i)

    def covers(adj: dict[int, list[int]]) -> bool:
        seen = {1}
        stack = [1]
        while stack:
            for nxt in adj[stack.pop()]:
                if nxt not in seen:
                    seen.add(nxt)
                    stack.append(nxt)
        return len(seen) == N

    return covers(fwd) and covers(rev)


@dataclass(frozen=True)
class ConditionsReport:
    """Outcome of checking the three communication-model conditions."""

    c1_monotone: bool
    c2_ok: bool
    delta_hat: float
    c3_ok: bool
    first_failing_interval: int | None

    @property
    def all_ok(self) -> bool:
        return self.c1_monotone and self.c2_ok and self.c3_ok


def check_conditions(seq: GraphSequence) -> ConditionsReport:
    """Verify interval monotonicity, the growth-rate cap, and per-interval
    strong connectivity of the union graphs.

    delta_hat is a finite-horizon surrogate for the asymptotic growth rate:
    the max of 2(N-1) g(k) / k over the tail half of the horizon.
    """
    ts = seq.intervals
    lengths = [b - a for a, b in zip(ts, ts[1:])]
    c1 = all(l2 >= l1 for l1, l2 in zip(lengths, lengths[1:]))

    delta_hat = 0.0
    lo = max(1, seq.horizon // 2)
    for k in range(lo, seq.horizon + 1):
        delta_hat = max(delta_hat, 2 * (seq.N - 1) * seq.interval_length(k) / k)
    c2 = delta_hat < 1.0

    c3 = True
    failing = None
    for q in range(len(ts) - 1):
        if ts[q + 1] - 1 > seq.horizon:
            break
        if not is_strongly_connected(union_graph(seq, ts[q], ts[q + 1] - 1), seq.N):
            c3 = False
            failing = q
            break
    return ConditionsReport(c1, c2, delta_hat, c3, failing)


def is_r_reachable(edges: frozenset[Edge] | set[Edge], C: set[int], r: int) -> bool:
    """True iff some node in C has at least r in-neighbors outside C."""
    if not C:
        raise DimensionMismatch("C must be non-empty")
    indeg: dict[int, set[int]] = {i: set() for i in C}
    for (a, b) in edges:
        if b in C and a not in C:
            indeg[b].add(a)
    return any(len(v) >= r for v in indeg.values())


def is_strongly_r_robust_wrt(
    edges: frozenset[Edge] | set[Edge], N: int, S: set[int], r: int
) -> bool:
    """Exhaustively check that every non-empty subset of V minus S is
    r-reachable. Vacuously true when S covers all nodes."""
    rest = sorted(set(range(1, N + 1)) - set(S))
    if len(rest) > SUBSET_GUARD:
        raise SubsetBlowup(f"|V \\ S| = {len(rest)} exceeds guard {SUBSET_GUARD}")
    in_nbrs: dict[int, set[int]] = {i: set() for i in rest}
    for (a, b) in edges:
        if b in in_nbrs:
            in_nbrs[b].add(a)
    for size in range(1, len(rest) + 1):
        for C in combinations(rest, size):
            Cset = set(C)
            if not any(len(in_nbrs[i] - Cset) >= r for i in C):
                return False
    return True


@dataclass(frozen=True)
class RobustnessReport:
    ok: bool
    failing_window: int | None = None

    def __bool__(self) -> bool:
        return self.ok


def is_jointly_strongly_r_robust(
    seq: GraphSequence, S: set[int], r: int, T: int
) -> RobustnessReport:
    """Check strong r-robustness w.r.t. S of every complete window union
    [kT, (k+1)T) inside the horizon."""
    if T < 1:
        raise DimensionMismatch("window length T must be positive")
    if seq.horizon < T:
        raise DimensionMismatch("horizon shorter than one window")
    k = 0
    while (k + 1) * T - 1 <= seq.horizon:
        edges = union_graph(seq, k * T, (k + 1) * T - 1)
        if not is_strongly_r_robust_wrt(edges, seq.N, S, r):
            return RobustnessReport(False, k)
        k += 1
    return RobustnessReport(True, None)


# ---------------------------------------------------------------------------
# interval builders
# ---------------------------------------------------------------------------

def _intervals_constant(T: int, horizon: int) -> list[int]:
    ts = list(range(0, horizon + 2 * T + 1, T))
    return ts


def _intervals_sqrt(horizon: int) -> list[int]:
    ts = [0]
    while ts[-1] <= horizon:
        ts.append(ts[-1] + int(np.floor(np.sqrt(ts[-1] + 1))))
    return ts


def _intervals_linear(delta: float, N: int, horizon: int) -> list[int]:
    # Interval lengths ~ delta * t / (2(N-1)) keep 2(N-1) g(k)/k near delta.
    c = delta / (2 * (N - 1)) if N > 1 else delta
    ts = [0]
    while ts[-1] <= horizon:
        ts.append(ts[-1] + max(1, int(np.ceil(c * ts[-1]))))
    return ts


# ---------------------------------------------------------------------------
# sequence generators
# ---------------------------------------------------------------------------

def _ring_edges(N: int, offset: int = 0) -> list[Edge]:
    """Directed cycle 1 -> 2 -> ... -> N -> 1, rotated by offset."""
    nodes = [(i + offset) % N + 1 for i in range(N)]
    return [(nodes[i], nodes[(i + 1) % N]) for i in range(N)]


def _spread_edges(
    edges: list[Edge], lo: int, hi: int, rng: np.random.Generator
) -> dict[int, set[Edge]]:
    """Place each edge at a uniformly drawn step of [lo, hi]."""
    placed: dict[int, set[Edge]] = {}
    for e in edges:
        k = int(rng.integers(lo, hi + 1))
        placed.setdefault(k, set()).add(e)
    return placed


def generate_sequence(
    kind: str,
    N: int,
    seed: int,
    horizon: int,
    *,
    T: int = 1,
    delta: float = 0.5,
    r: int = 1,
    sources: set[int] | None = None,
    pattern: str = "sc-ring",
) -> GraphSequence:
    """Build a schedule of the requested kind, deterministic under seed.

    Kinds:
      periodic-sc    constant interval length T; each interval's union is
                     strongly connected (T=1 degenerates to strong
                     connectivity at every single step)
      growing-sqrt   interval lengths floor(sqrt(t_q + 1)); pattern
                     'sc-ring' places a rotated ring per interval, pattern
                     'source-to-sink' places the single edge 1 -> 2 at each
                     t_q (a two-node relay chain; deliberately not strongly
                     connected, so only the growth conditions hold)
      linear-growth  interval lengths growing linearly at rate delta
      robust         windows [kT, (k+1)T) whose unions are strongly
                     r-robust w.r.t. sources; edges of a complete digraph
                     are spread uniformly over each window and re-drawn
                     until the window checker passes
    """
    rng = np.random.default_rng(seed)
    schedule: dict[int, set[Edge]] = {}

    if kind == "periodic-sc":
        intervals = _intervals_constant(T, horizon)
        fspec = f"constant T={T}"
        for q in range(len(intervals) - 1):
            lo, hi = intervals[q], intervals[q + 1] - 1
            if T == 1:
                schedule.setdefault(lo, set()).update(_ring_edges(N, offset=q % N))
            else:
                for k, es in _spread_edges(_ring_edges(N, offset=q % N), lo, hi, rng).items():
                    schedule.setdefault(k, set()).update(es)
    elif kind in ("growing-sqrt", "linear-growth"):
        if kind == "growing-sqrt":
            intervals = _intervals_sqrt(horizon)
            fspec = "floor-sqrt"
        else:
            if not (0.0 < delta < 1.0):
                raise DimensionMismatch("linear-growth needs delta in (0,1)")
            intervals = _intervals_linear(delta, N, horizon)
            fspec = f"linear-rate delta={delta}"
        if pattern == "source-to-sink":
            if N != 2:
                raise DimensionMismatch("source-to-sink pattern is the 2-node relay")
            for t in intervals:
                if t <= horizon:
                    schedule.setdefault(t, set()).add((1, 2))
        else:
            for q in range(len(intervals) - 1):
                lo, hi = intervals[q], min(intervals[q + 1] - 1, horizon)
                for k, es in _spread_edges(_ring_edges(N, offset=q % N), lo, hi, rng).items():
                    schedule.setdefault(k, set()).update(es)
    elif kind == "robust":
        if sources is None:
            raise DimensionMismatch("robust generation needs a source set")
        intervals = _intervals_constant(T, horizon)
        fspec = f"constant T={T} (robust r={r})"
        complete = [(i, j) for i in range(1, N + 1) for j in range(1, N + 1) if i != j]
        k = 0
        while k * T <= horizon:
            lo, hi = k * T, min((k + 1) * T - 1, horizon)
            for attempt in range(ROBUST_RETRIES):
                placed = _spread_edges(complete, lo, hi, rng)
                union: set[Edge] = set()
                for es in placed.values():
                    union |= es
                if is_strongly_r_robust_wrt(union, N, sources, r):
                    for kk, es in placed.items():
                        schedule.setdefault(kk, set()).update(es)
                    break
            else:
                raise GenerationFailed(
                    f"window {k}: no r-robust placement in {ROBUST_RETRIES} tries"
                )
            k += 1
    else:
        raise DimensionMismatch(f"unknown sequence kind {kind!r}")

    seq = GraphSequence(
        N=N,
        schedule={k: frozenset(v) for k, v in sorted(schedule.items())},
        intervals=intervals,
        f_spec=fspec,
        horizon=horizon,
    )
    return seq


# ---------------------------------------------------------------------------
# schedule files
# ---------------------------------------------------------------------------

def sequence_to_dict(seq: GraphSequence) -> dict:
    return {
        "N": seq.N,
        "intervals": list(seq.intervals),
        "f_spec": seq.f_spec,
        "horizon": seq.horizon,
        "edges": {str(k): sorted(list(e) for e in seq.edges_at(k)) for k in sorted(seq.schedule)},
    }


def sequence_from_dict(doc: dict) -> GraphSequence:
    try:
        schedule = {
            int(k): frozenset((int(i), int(j)) for i, j in edges)
            for k, edges in doc["edges"].items()
        }
        return GraphSequence(
            N=int(doc["N"]),
            schedule=schedule,
            intervals=[int(t) for t in doc["intervals"]],
            f_spec=str(doc.get("f_spec", "explicit")),
            horizon=int(doc["horizon"]),
        )
    except KeyError as exc:
        raise DimensionMismatch(f"schedule document missing key {exc}") from exc


def load_sequence(path: str | Path) -> GraphSequence:
    with open(path) as fh:
        return sequence_from_dict(json.load(fh))


def save_sequence(seq: GraphSequence, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(sequence_to_dict(seq), fh, indent=2)
