"""Deterministic scenario execution, trace recording, and verification.

run() advances the plant, delivers broadcasts along the scheduled edges,
applies the selected protocol synchronously, and records everything the
post-hoc verifiers need: per-node estimates, per-sub-state errors, freshness
indices, adoption events, roster snapshots, and forged-message drops.

The verifiers re-walk completed traces: exponential-rate fits, finite-time
deadlines, and the per-step invariants that the protocols' guarantees rest
on (index growth caps, trigger deadlines, delayed-error identities, roster
bookkeeping, and trimmed-update hull containment).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import HorizonTooShort, ScenarioError
from .gains import ObserverGainSet, design_gain_set
from .graphs import GraphSequence, check_conditions, is_jointly_strongly_r_robust
from .lti import Decomposition, LtiSystem, decompose
from .protocol import initial_states, make_broadcast, network_step
from .resilient import (
    ResilientBroadcast,
    ResilientNodeState,
    Slot,
    apply_adversary,
    resilient_nonsource_step,
    source_luenberger,
)
from .scenario import GainConfig, ScalarSystem, Scenario

FINITE_TIME_TOL = 1e-8
HULL_SLACK = 1e-9
IDENTITY_TOL = 1e-8
ENVELOPE_SLACK = 1e-6
MAX_VIOLATIONS = 200


@dataclass
class SimTrace:
    """Complete per-step record of one scenario run."""

    name: str
    protocol: str
    seed: int
    horizon: int
    N: int
    n: int
    sources: list[int]
    x: np.ndarray
    xhat: np.ndarray
    err: np.ndarray
    graph: GraphSequence
    disturbance: float
    block_dims: list[int] | None = None
    z: np.ndarray | None = None
    zhat: np.ndarray | None = None
    taus: np.ndarray | None = None
    adopted: np.ndarray | None = None
    decomposition: Decomposition | None = None
    gains: ObserverGainSet | None = None
    f: int | None = None
    a: float | None = None
    c: tuple[float, ...] | None = None
    regular: list[int] | None = None
    slots: list[list[tuple[Slot, ...]]] | None = None
    gate_drops: np.ndarray | None = None
    source_gains: dict[int, float] | None = None
    weight_violations: list[str] = field(default_factory=list)

    def max_error(self, k: int, nodes: list[int] | None = None) -> float:
        idx = [i - 1 for i in (nodes or range(1, self.N + 1))]
        return float(np.max(np.linalg.norm(self.err[k, idx, :], axis=1)))


# ---------------------------------------------------------------------------
# gain resolution
# ---------------------------------------------------------------------------

def _aoi_gains(scenario: Scenario, dec: Decomposition) -> ObserverGainSet:
    if scenario.precomputed_gains is not None:
        return scenario.precomputed_gains
    cfg = scenario.gains
    if cfg.mode in ("rate", "nilpotent"):
        return design_gain_set(
            dec,
            mode=cfg.mode,
            rho=cfg.rho,
            delta=cfg.delta,
            seed=scenario.seed,
            gamma=cfg.gamma,
            delta_bar=cfg.delta_bar,
        )
    # explicit scalar gains: only meaningful when every sub-state is scalar
    L = {}
    for j in range(1, dec.N + 1):
        if dec.block_dims[j - 1] == 0:
            continue
        if dec.block_dims[j - 1] != 1:
            raise ScenarioError("explicit gains need scalar sub-states")
        if j not in cfg.explicit_l:
            raise ScenarioError(f"missing explicit gain for source {j}")
        L[j] = np.array([[cfg.explicit_l[j]]])
    return ObserverGainSet(
        mode="explicit", L=L, chain=None, norm_constants={}, rho_per_block={}
    )


def _scalar_source_gains(scenario: Scenario) -> dict[int, float]:
    sys: ScalarSystem = scenario.system
    cfg: GainConfig = scenario.gains
    out = {}
    for i in sys.sources():
        ci = sys.c[i - 1]
        if cfg.mode == "explicit":
            if i not in cfg.explicit_l:
                raise ScenarioError(f"missing explicit gain for source {i}")
            out[i] = cfg.explicit_l[i]
        elif cfg.mode == "nilpotent":
            out[i] = sys.a / ci
        else:
            out[i] = (sys.a - cfg.rho) / ci
    return out


# ---------------------------------------------------------------------------
# runners
# ---------------------------------------------------------------------------

def run(scenario: Scenario) -> SimTrace:
    """Execute a validated scenario; deterministic under (scenario, seed)."""
    if scenario.protocol == "aoi":
        return _run_aoi(scenario)
    if scenario.protocol == "resilient":
        return _run_resilient(scenario)
    return _run_naive(scenario)


def _spawned_rngs(seed: int, count: int) -> list[np.random.Generator]:
    ss = np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(count)]


def _run_aoi(scenario: Scenario) -> SimTrace:
    sys: LtiSystem = scenario.system
    dec = scenario.decomposition or decompose(sys)
    gains = _aoi_gains(scenario, dec)
    H, n, N = scenario.horizon, sys.n, sys.N
    rng_init, = _spawned_rngs(scenario.seed, 1)

    if scenario.x0 is not None:
        x0 = np.asarray(scenario.x0, dtype=float).reshape(n)
    else:
        x0 = rng_init.standard_normal(n)
    states = initial_states(dec, rng_init, init=scenario.init, scale=scenario.init_scale)

    x = np.zeros((H + 1, n))
    z = np.zeros((H + 1, n))
    zhat = np.zeros((H + 1, N, n))
    xhat = np.zeros((H + 1, N, n))
    taus = np.full((H + 1, N, N), np.nan)
    adopted = np.zeros((H + 1, N, N), dtype=int)
    x[0] = x0
    z[0] = dec.T_inv @ x0

    def record(k, sts):
        for s in sts:
            flat = np.concatenate(s.z) if s.z else np.zeros(0)
            zhat[k, s.node - 1] = flat
            xhat[k, s.node - 1] = dec.T @ flat
            for j in range(N):
                t = s.taus[j]
                taus[k, s.node - 1, j] = np.nan if t is None else float(t)

    record(0, states)
    ones = np.ones(n)
    for k in range(H):
        ys = [sys.measure(i, x[k]) for i in range(1, N + 1)]
        bcasts = [make_broadcast(s) for s in states]
        inboxes = [
            [bcasts[l - 1] for l in sorted(scenario.graph.in_neighbors(i, k))]
            for i in range(1, N + 1)
        ]
        states, adoptions = network_step(states, inboxes, ys, dec, gains)
        x[k + 1] = sys.A @ x[k] + scenario.disturbance * ones
        z[k + 1] = dec.T_inv @ x[k + 1]
        record(k + 1, states)
        for ev in adoptions:
            adopted[k + 1, ev.node - 1, ev.substate - 1] = ev.source

    err = xhat - x[:, None, :]
    return SimTrace(
        name=scenario.name,
        protocol="aoi",
        seed=scenario.seed,
        horizon=H,
        N=N,
        n=n,
        sources=dec.source_nodes(),
        x=x,
        xhat=xhat,
        err=err,
        graph=scenario.graph,
        disturbance=scenario.disturbance,
        block_dims=list(dec.block_dims),
        z=z,
        zhat=zhat,
        taus=taus,
        adopted=adopted,
        decomposition=dec,
        gains=gains,
    )


def _run_resilient(scenario: Scenario) -> SimTrace:
    sys: ScalarSystem = scenario.system
    a, c = sys.a, sys.c
    S = sys.sources()
    H, N = scenario.horizon, sys.N
    lgains = _scalar_source_gains(scenario)
    rng_init, rng_adv = _spawned_rngs(scenario.seed, 2)

    x0 = float(scenario.x0) if scenario.x0 is not None else float(rng_init.standard_normal())
    if scenario.init == "zeros":
        xhat0 = np.zeros(N)
    else:
        xhat0 = scenario.init_scale * rng_init.standard_normal(N)

    states = [
        ResilientNodeState(i, 0 if i in S else None, float(xhat0[i - 1]), [])
        for i in range(1, N + 1)
    ]
    adv_by_node = {s.node: s for s in scenario.adversaries}
    history: dict[int, list[ResilientBroadcast]] = {i: [] for i in adv_by_node}

    x = np.zeros((H + 1, 1))
    xhat = np.zeros((H + 1, N, 1))
    taus = np.full((H + 1, N), np.nan)
    gate_drops = np.zeros((H + 1, N), dtype=int)
    slots: list[list[tuple[Slot, ...]]] = []

    def record(k, sts):
        snap = []
        for s in sts:
            xhat[k, s.node - 1, 0] = s.x_hat
            taus[k, s.node - 1] = np.nan if s.tau is None else float(s.tau)
            snap.append(tuple(s.slots))
        slots.append(snap)

    x[0, 0] = x0
    record(0, states)
    for k in range(H):
        honest = {i: ResilientBroadcast(i, st.tau, st.x_hat) for i, st in
                  zip(range(1, N + 1), states)}
        outgoing: dict[int, ResilientBroadcast | None] = dict(honest)
        for node, strat in adv_by_node.items():
            history[node].append(honest[node])
            outgoing[node] = apply_adversary(
                strat, honest[node], float(x[k, 0]), k, history[node], rng_adv
            )
        nxt = []
        for i in range(1, N + 1):
            st = states[i - 1]
            if i in S:
                y = c[i - 1] * x[k, 0]
                nxt.append(
                    ResilientNodeState(
                        i, 0, source_luenberger(st.x_hat, y, a, c[i - 1], lgains[i]), []
                    )
                )
            else:
                inbox = [
                    outgoing[l]
                    for l in sorted(scenario.graph.in_neighbors(i, k))
                    if outgoing[l] is not None
                ]
                new_state, drops = resilient_nonsource_step(st, inbox, k, a, scenario.f)
                gate_drops[k + 1, i - 1] = drops
                nxt.append(new_state)
        states = nxt
        x[k + 1, 0] = a * x[k, 0] + scenario.disturbance
        record(k + 1, states)

    err = xhat - x[:, None, :]
    regular = [i for i in range(1, N + 1) if i not in adv_by_node]
    return SimTrace(
        name=scenario.name,
        protocol="resilient",
        seed=scenario.seed,
        horizon=H,
        N=N,
        n=1,
        sources=S,
        x=x,
        xhat=xhat,
        err=err,
        graph=scenario.graph,
        disturbance=scenario.disturbance,
        taus=taus,
        f=scenario.f,
        a=a,
        c=c,
        regular=regular,
        slots=slots,
        gate_drops=gate_drops,
        source_gains=lgains,
    )


def _bfs_parents(edges, root: int, N: int) -> dict[int, int]:
    """Parent map of a BFS tree rooted at `root`; deterministic order."""
    adj: dict[int, list[int]] = {i: [] for i in range(1, N + 1)}
    for (i, j) in edges:
        adj[i].append(j)
    parents: dict[int, int] = {}
    frontier = [root]
    seen = {root}
    while frontier:
        nxt = []
        for u in sorted(frontier):
            for v in sorted(adj[u]):
                if v not in seen:
                    seen.add(v)
                    parents[v] = u
                    nxt.append(v)
        frontier = nxt
    return parents


def _run_naive(scenario: Scenario) -> SimTrace:
    sys: ScalarSystem = scenario.system
    a = sys.a
    S = sys.sources()
    root = min(S)
    H, N = scenario.horizon, sys.N
    rng_init, = _spawned_rngs(scenario.seed, 1)

    x0 = float(scenario.x0) if scenario.x0 is not None else float(rng_init.standard_normal())
    if scenario.init == "zeros":
        xhat0 = np.zeros(N)
    else:
        xhat0 = scenario.init_scale * rng_init.standard_normal(N)

    x = np.zeros((H + 1, 1))
    xhat = np.zeros((H + 1, N, 1))
    x[0, 0] = x0
    for i in range(1, N + 1):
        xhat[0, i - 1, 0] = x0 if i in S else xhat0[i - 1]

    violations: list[str] = []
    for k in range(H):
        parents = (
            _bfs_parents(scenario.graph.edges_at(k), root, N)
            if scenario.weights == "tree-rooted"
            else None
        )
        for i in range(1, N + 1):
            if i in S:
                continue
            nbrs = sorted(scenario.graph.in_neighbors(i, k))
            if parents is None:
                group = nbrs + [i]
                w = {j: 1.0 / len(group) for j in group}
            else:
                p = parents.get(i)
                w = {p: 1.0} if p is not None and p in nbrs else {i: 1.0}
            if abs(sum(w.values()) - 1.0) > 1e-12:
                violations.append(f"k={k} node={i}: weights sum to {sum(w.values())}")
            xhat[k + 1, i - 1, 0] = a * sum(wj * xhat[k, j - 1, 0] for j, wj in w.items())
        x[k + 1, 0] = a * x[k, 0] + scenario.disturbance
        for s in S:
            xhat[k + 1, s - 1, 0] = x[k + 1, 0]

    err = xhat - x[:, None, :]
    return SimTrace(
        name=scenario.name,
        protocol="naive-consensus",
        seed=scenario.seed,
        horizon=H,
        N=N,
        n=1,
        sources=S,
        x=x,
        xhat=xhat,
        err=err,
        graph=scenario.graph,
        disturbance=scenario.disturbance,
        a=a,
        c=sys.c,
        weight_violations=violations,
    )


# ---------------------------------------------------------------------------
# verifiers
# ---------------------------------------------------------------------------

def theorem_burn_in(seq: GraphSequence, delta_bar: float, levels: int | None = None) -> int:
    """Step from which the rate theorem's tail bound is in force.

    k_1 = max(t_{N-1}, first step after which 2(N-1)g(k) <= delta_bar*k for
    good), then k_j = k_{j-1}/(1-delta_bar) once per sub-state level.
    """
    N = seq.N
    levels = N if levels is None else levels
    gtil = np.array(
        [2 * (N - 1) * seq.interval_length(k) for k in range(seq.horizon + 1)]
    )
    bad = np.nonzero(gtil > delta_bar * np.arange(seq.horizon + 1))[0]
    kbar = int(bad[-1]) + 1 if bad.size else 0
    if bad.size and bad[-1] == seq.horizon:
        raise HorizonTooShort("interval growth has not fallen under delta_bar*k")
    k = float(max(seq.intervals[N - 1], kbar))
    for _ in range(levels - 1):
        k = k / (1.0 - delta_bar)
    return int(math.ceil(k))


@dataclass(frozen=True)
class RateReport:
    passed: bool
    vacuous: bool
    target_slope: float
    slope: float | None
    envelope_ok: bool
    per_node_slopes: dict[int, float] | None
    note: str


def _fit_slope(ks: np.ndarray, vals: np.ndarray) -> float:
    return float(np.polyfit(ks, np.log(vals), 1)[0])


def verify_rate(
    trace: SimTrace,
    rho: float,
    burn_in: int,
    *,
    slack: float = 0.02,
    nodes: list[int] | None = None,
    per_node: bool = False,
    envelope_margin: float = 1.0,
) -> RateReport:
    """Fit the tail log-error slope and check the decay envelope.

    Passes when the fitted slope is at most ln(rho) + slack and the ratio
    max_i ||e_i[k]|| / rho^k does not grow along the tail (its maximum over
    the last 40% cannot exceed the maximum over the first 60% times
    envelope_margin; pass the analysis' proven prefactor bound as the margin
    for trajectories that decay at exactly rho with a bounded oscillation).
    Exact-zero (below 1e-8) tails pass vacuously: finite-time convergence
    beats any rate.
    """
    if burn_in >= trace.horizon - 10:
        raise HorizonTooShort(f"burn-in {burn_in} leaves no tail to fit")
    target = math.log(rho)
    sel = nodes or list(range(1, trace.N + 1))
    ks = np.arange(burn_in, trace.horizon + 1)
    curves = {
        i: np.linalg.norm(trace.err[burn_in:, i - 1, :], axis=1) for i in sel
    }
    vmax = np.max(np.stack(list(curves.values())), axis=0)
    if np.max(vmax) <= FINITE_TIME_TOL:
        return RateReport(True, True, target, None, True, None, "finite-time, rate vacuous")

    log_rho = np.log(rho)
    log_u = np.log(np.maximum(vmax, 1e-300)) - ks * log_rho
    split = burn_in + int(0.6 * (trace.horizon - burn_in))
    head = log_u[ks <= split]
    tail = log_u[ks > split]
    envelope_ok = float(np.max(tail)) <= (
        float(np.max(head)) + math.log(envelope_margin) + math.log1p(ENVELOPE_SLACK)
    )

    per: dict[int, float] | None = None
    if per_node:
        per = {}
        ok = True
        for i, v in curves.items():
            mask = v > 0
            if mask.sum() < 10:
                continue
            per[i] = _fit_slope(ks[mask], v[mask])
            ok = ok and per[i] <= target + slack
        slope = max(per.values()) if per else None
        passed = ok and envelope_ok
    else:
        mask = vmax > 0
        slope = _fit_slope(ks[mask], vmax[mask])
        passed = slope <= target + slack and envelope_ok
    return RateReport(passed, False, target, slope, envelope_ok, per, "")


def verify_finite_time(trace: SimTrace, deadline: int, *, nodes: list[int] | None = None) -> bool:
    """True iff every (selected) node's error stays under 1e-8 from `deadline` on."""
    if deadline > trace.horizon:
        raise HorizonTooShort(f"deadline {deadline} beyond horizon {trace.horizon}")
    return all(
        trace.max_error(k, nodes) <= FINITE_TIME_TOL
        for k in range(deadline, trace.horizon + 1)
    )


# ---------------------------------------------------------------------------
# online invariants
# ---------------------------------------------------------------------------

def assert_online_invariants(trace: SimTrace, scenario: Scenario) -> list[str]:
    """Re-walk a trace checking every per-step protocol invariant.

    Returns human-readable violation strings; an empty list is a pass. The
    connectivity-dependent assertions (trigger deadline, delay bound) are
    gated on the schedule actually satisfying the corresponding conditions.
    """
    if trace.protocol == "aoi":
        return _aoi_invariants(trace)
    if trace.protocol == "resilient":
        return _resilient_invariants(trace, scenario)
    return list(trace.weight_violations)


def _aoi_invariants(trace: SimTrace) -> list[str]:
    out: list[str] = []
    dec = trace.decomposition
    N, H = trace.N, trace.horizon
    graph = trace.graph
    nonempty = [j for j in range(1, N + 1) if dec.block_dims[j - 1] > 0]
    report = check_conditions(graph)
    gate_deadlines = report.c1_monotone and report.c3_ok
    tN1 = graph.intervals[N - 1]

    jstar = nonempty[0]
    blk = dec.block_slice(jstar)
    ez = trace.zhat - trace.z[:, None, :]
    A11 = dec.a_block(jstar, jstar)
    finite = ~np.isnan(trace.taus)
    max_tau = int(np.nanmax(trace.taus[:, :, jstar - 1])) if finite[:, :, jstar - 1].any() else 0
    powers = [np.eye(A11.shape[0])]
    for _ in range(max_tau):
        powers.append(A11 @ powers[-1])

    def add(msg: str) -> bool:
        out.append(msg)
        return len(out) >= MAX_VIOLATIONS

    for k in range(H + 1):
        gk = graph.interval_length(k)
        for j in nonempty:
            for i in range(1, N + 1):
                t = trace.taus[k, i - 1, j - 1]
                if i == j:
                    if t != 0.0:
                        if add(f"k={k} source {j}: index {t} != 0"):
                            return out
                    continue
                if not np.isnan(t):
                    if t < 1.0 and add(f"k={k} node {i} substate {j}: triggered index {t} < 1"):
                        return out
                    if t > k and add(f"k={k} node {i} substate {j}: index {t} exceeds elapsed time"):
                        return out
                if k >= 1 and finite[k - 1, i - 1, j - 1]:
                    if np.isnan(t):
                        if add(f"k={k} node {i} substate {j}: index returned to untriggered"):
                            return out
                    elif t > trace.taus[k - 1, i - 1, j - 1] + 1.0:
                        if add(f"k={k} node {i} substate {j}: index grew by more than 1"):
                            return out
                if gate_deadlines and k >= tN1:
                    if np.isnan(t):
                        if add(f"k={k} node {i} substate {j}: untriggered past t_(N-1)={tN1}"):
                            return out
                    elif t > 2 * (N - 1) * gk:
                        if add(
                            f"k={k} node {i} substate {j}: index {t} over delay bound "
                            f"{2 * (N - 1) * gk}"
                        ):
                            return out
        # source-preference: hearing the source directly forces adopting it
        if k < H:
            for j in nonempty:
                for (snd, rcv) in graph.edges_at(k):
                    if snd == j and rcv != j:
                        if trace.adopted[k + 1, rcv - 1, j - 1] != j:
                            if add(
                                f"k={k} node {rcv}: heard source {j} but adopted "
                                f"{trace.adopted[k + 1, rcv - 1, j - 1]}"
                            ):
                                return out
        # delayed-error identity for the first (uncoupled) sub-state
        if trace.disturbance == 0.0:
            for i in range(1, N + 1):
                if i == jstar:
                    continue
                t = trace.taus[k, i - 1, jstar - 1]
                if np.isnan(t):
                    continue
                m = int(t)
                if m < 1 or k - m < 0:
                    continue
                rhs = powers[m] @ ez[k - m, jstar - 1, blk]
                diff = float(np.linalg.norm(ez[k, i - 1, blk] - rhs))
                if diff > IDENTITY_TOL * max(1.0, float(np.linalg.norm(rhs))):
                    if add(
                        f"k={k} node {i}: delayed-error identity off by {diff:.3e} "
                        f"(delay {m})"
                    ):
                        return out
    return out


def _resilient_invariants(trace: SimTrace, scenario: Scenario) -> list[str]:
    out: list[str] = []
    N, H, f, a = trace.N, trace.horizon, trace.f, trace.a
    S = set(trace.sources)
    regular = set(trace.regular)
    src_regular = sorted(S & regular)
    width = 2 * f + 1

    robust_gate = False
    T = scenario.robust_T
    if T is not None:
        robust_gate = bool(is_jointly_strongly_r_robust(trace.graph, S, 3 * f + 1, T))
    trigger_by = (N - len(S)) * T if T is not None else None

    def add(msg: str) -> bool:
        out.append(msg)
        return len(out) >= MAX_VIOLATIONS

    for k in range(H + 1):
        for i in sorted(regular):
            t = trace.taus[k, i - 1]
            if i in S:
                if t != 0.0 and add(f"k={k} source {i}: index {t} != 0"):
                    return out
                continue
            slots = trace.slots[k][i - 1]
            members = [s.member for s in slots]
            if len(set(members)) != len(members):
                if add(f"k={k} node {i}: duplicate roster members {members}"):
                    return out
            if len(slots) > width and add(f"k={k} node {i}: roster over {width}"):
                return out
            if (not np.isnan(t)) != (len(slots) == width):
                if add(f"k={k} node {i}: index/roster fill mismatch"):
                    return out
            for p, s in enumerate(slots):
                if s.recorded + (k - s.phi) != s.d:
                    if add(
                        f"k={k} node {i} slot {p}: bookkeeping {s.recorded}+"
                        f"({k}-{s.phi}) != {s.d}"
                    ):
                        return out
            if k >= 1 and not np.isnan(trace.taus[k - 1, i - 1]):
                prev = trace.taus[k - 1, i - 1]
                if np.isnan(t):
                    if add(f"k={k} node {i}: index returned to untriggered"):
                        return out
                elif t > prev + 1.0:
                    if add(f"k={k} node {i}: index grew by more than 1"):
                        return out
                prev_slots = trace.slots[k - 1][i - 1]
                for p in range(min(len(prev_slots), len(slots))):
                    if slots[p].d > prev_slots[p].d + 1:
                        if add(f"k={k} node {i} slot {p}: aged by more than 1"):
                            return out
            if robust_gate and k >= trigger_by:
                if np.isnan(t):
                    if add(f"k={k} node {i}: untriggered past {trigger_by}"):
                        return out
                elif t > 2 * trigger_by:
                    if add(f"k={k} node {i}: index {t} over bound {2 * trigger_by}"):
                        return out
            if not np.isnan(t):
                m = int(t)
                if m > k:
                    if add(f"k={k} node {i}: index {m} exceeds elapsed time"):
                        return out
                    continue
                if m >= 1 and src_regular:
                    cands = [
                        a**r * trace.xhat[k - r, s - 1, 0]
                        for r in range(1, m + 1)
                        for s in src_regular
                    ]
                    lo, hi = min(cands), max(cands)
                    slack = HULL_SLACK * max(1.0, abs(lo), abs(hi))
                    v = trace.xhat[k, i - 1, 0]
                    if not (lo - slack <= v <= hi + slack):
                        if add(
                            f"k={k} node {i}: estimate {v!r} outside hull "
                            f"[{lo!r}, {hi!r}]"
                        ):
                            return out
    return out


# ---------------------------------------------------------------------------
# trace export
# ---------------------------------------------------------------------------

def trace_csv_bytes(trace: SimTrace) -> bytes:
    """Deterministic CSV rendering: (k, node, substate, e_norm, tau, adopted_from)."""
    lines = ["k,node,substate,e_norm,tau,adopted_from"]
    if trace.protocol == "aoi":
        nonempty = [j for j in range(1, trace.N + 1) if trace.block_dims[j - 1] > 0]
        ez = trace.zhat - trace.z[:, None, :]
        for k in range(trace.horizon + 1):
            for i in range(1, trace.N + 1):
                for j in nonempty:
                    sl = trace.decomposition.block_slice(j)
                    e = float(np.linalg.norm(ez[k, i - 1, sl]))
                    t = trace.taus[k, i - 1, j - 1]
                    tau = "" if np.isnan(t) else str(int(t))
                    src = trace.adopted[k, i - 1, j - 1]
                    lines.append(
                        f"{k},{i},{j},{e!r},{tau},{src if src else ''}"
                    )
    else:
        for k in range(trace.horizon + 1):
            for i in range(1, trace.N + 1):
                e = float(abs(trace.err[k, i - 1, 0]))
                if trace.taus is not None:
                    t = trace.taus[k, i - 1]
                    tau = "" if np.isnan(t) else str(int(t))
                else:
                    tau = ""
                lines.append(f"{k},{i},1,{e!r},{tau},")
    return ("\n".join(lines) + "\n").encode()


def write_trace_csv(trace: SimTrace, path: str | Path) -> None:
    Path(path).write_bytes(trace_csv_bytes(trace))


def summarize(trace: SimTrace, violations: list[str]) -> dict:
    """JSON-ready run summary: convergence step, final error, violations."""
    converged_by = None
    for k in range(trace.horizon, -1, -1):
        if trace.max_error(k) > FINITE_TIME_TOL:
            converged_by = k + 1 if k < trace.horizon else None
            break
        converged_by = k
    drops = int(trace.gate_drops.sum()) if trace.gate_drops is not None else 0
    return {
        "name": trace.name,
        "protocol": trace.protocol,
        "seed": trace.seed,
        "horizon": trace.horizon,
        "final_max_error": trace.max_error(trace.horizon),
        "converged_by": converged_by,
        "forged_drops": drops,
        "violations": violations,
    }
