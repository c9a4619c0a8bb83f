"""Resilient scalar estimation with freshness-index filtering.

Regular non-source nodes maintain a bounded roster of 2f+1 distinct
informants. Each roster slot stores the informant's estimate when last
heard (v), a local aging copy of its reported freshness index (d), and the
time-stamp of that report (phi). Estimates are compared after forwarding
each stored value through the dynamics to the current step, and the f
highest and f lowest candidates are discarded before updating.

Adversarial nodes may send arbitrary (index, value) pairs or stay silent;
reported indices that are not plain non-negative integers at most the
current step are dropped at the gate (and counted, for observability).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ScenarioError


@dataclass(frozen=True)
class Slot:
    """Roster entry for one informant.

    recorded is the reported freshness index at the last append; d equals
    recorded plus the steps elapsed since, which the audit re-checks.
    """

    member: int
    v: float
    d: int
    phi: int
    recorded: int


@dataclass
class ResilientNodeState:
    node: int
    tau: int | None
    x_hat: float
    slots: list[Slot]

    def copy(self) -> "ResilientNodeState":
        return ResilientNodeState(self.node, self.tau, self.x_hat, list(self.slots))

    @property
    def members(self) -> list[int]:
        return [s.member for s in self.slots]


@dataclass(frozen=True)
class ResilientBroadcast:
    sender: int
    tau: object  # int, None, or adversarial garbage
    x_hat: float


def trim_select(values: list[float], f: int) -> float:
    """Drop the f highest and f lowest of exactly 2f+1 values; return the survivor."""
    if len(values) != 2 * f + 1:
        raise ValueError(f"expected {2 * f + 1} values, got {len(values)}")
    return sorted(values)[f]


def source_luenberger(x_hat: float, y: float, a: float, c: float, l: float) -> float:
    """x_hat <- a x_hat + l (y - c x_hat); the source's index stays 0."""
    return a * x_hat + l * (y - c * x_hat)


def _gate(inbox: list[ResilientBroadcast], k: int) -> tuple[list[ResilientBroadcast], int]:
    """Keep entries whose reported index is a plain integer in [0, k].

    None-tagged entries are normal untriggered traffic, not counted as drops;
    anything else that fails the sanity bound is forged and counted.
    """
    ok: list[ResilientBroadcast] = []
    drops = 0
    for b in inbox:
        if b.tau is None:
            continue
        if isinstance(b.tau, (int, np.integer)) and not isinstance(b.tau, bool):
            if 0 <= int(b.tau) <= k:
                ok.append(ResilientBroadcast(b.sender, int(b.tau), float(b.x_hat)))
                continue
        drops += 1
    return ok, drops


def resilient_nonsource_step(
    state: ResilientNodeState,
    inbox: list[ResilientBroadcast],
    k: int,
    a: float,
    f: int,
) -> tuple[ResilientNodeState, int]:
    """One synchronous step of the non-source rules.

    Returns (next state, forged-message drop count). Roster slots are stable:
    a retained informant keeps its position, and replacements fill vacated
    positions in rank order. Ties on freshness break toward lower node ids.
    """
    width = 2 * f + 1
    gated, drops = _gate(inbox, k)
    by_sender = {b.sender: b for b in gated}
    slots = list(state.slots)
    members = {s.member for s in slots}
    fresh_outsiders = [b for b in gated if b.sender not in members]

    if state.tau is None:
        need = width - len(slots)
        if len(fresh_outsiders) < need:
            for b in fresh_outsiders:
                slots.append(Slot(b.sender, b.x_hat, b.tau, k, b.tau))
            slots = [replace(s, d=s.d + 1) for s in slots]
            return ResilientNodeState(state.node, None, a * state.x_hat, slots), drops
        # transition: fill the roster with the freshest newcomers
        ranked = sorted(fresh_outsiders, key=lambda b: (b.tau, b.sender))
        for b in ranked[:need]:
            slots.append(Slot(b.sender, b.x_hat, b.tau, k, b.tau))
    else:
        # refresh informants re-heard with strictly fresher reports
        for idx, s in enumerate(slots):
            b = by_sender.get(s.member)
            if b is not None and b.tau < s.d:
                slots[idx] = Slot(s.member, b.x_hat, b.tau, k, b.tau)
        # merge: keep the 2f+1 lowest-index nodes among roster and newcomers
        cand = [(s.d, s.member) for s in slots]
        cand += [(b.tau, b.sender) for b in fresh_outsiders]
        keep = {m for _, m in sorted(cand)[:width]}
        incoming = sorted(
            (b for b in fresh_outsiders if b.sender in keep),
            key=lambda b: (b.tau, b.sender),
        )
        it = iter(incoming)
        for idx, s in enumerate(slots):
            if s.member not in keep:
                b = next(it)
                slots[idx] = Slot(b.sender, b.x_hat, b.tau, k, b.tau)

    slots = [replace(s, d=s.d + 1) for s in slots]
    tau_next = max(s.d for s in slots)  # = 1 + max pre-aging index
    xbars = [float(a) ** (k - s.phi) * s.v for s in slots]
    x_next = a * trim_select(xbars, f)
    return ResilientNodeState(state.node, tau_next, x_next, slots), drops


# ---------------------------------------------------------------------------
# adversary library
# ---------------------------------------------------------------------------

STRATEGIES = ("silent", "zero-index-lie", "random-value", "colluding-bias", "replay")


@dataclass(frozen=True)
class AdversaryStrategy:
    """Behavior applied to one compromised node's outgoing broadcasts."""

    node: int
    behavior: str
    params: dict

    def __post_init__(self):
        if self.behavior not in STRATEGIES:
            raise ScenarioError(f"unknown adversary behavior {self.behavior!r}")


def validate_adversaries(strategies: list[AdversaryStrategy], f: int, N: int) -> None:
    nodes = [s.node for s in strategies]
    if len(set(nodes)) != len(nodes):
        raise ScenarioError("duplicate adversarial node assignment")
    if any(not (1 <= i <= N) for i in nodes):
        raise ScenarioError("adversarial node id out of range")
    if len(nodes) > f:
        raise ScenarioError(f"{len(nodes)} adversaries exceed the declared f={f}")


def apply_adversary(
    strategy: AdversaryStrategy,
    honest: ResilientBroadcast,
    x_true: float,
    k: int,
    history: list[ResilientBroadcast],
    rng: np.random.Generator,
) -> ResilientBroadcast | None:
    """Outgoing broadcast override for one compromised node at step k.

    `honest` is what the node would have sent; `history` holds its honest
    broadcasts from earlier steps (for replay). Returns None for silence.
    """
    b = strategy.behavior
    p = strategy.params
    if b == "silent":
        return None
    if b == "zero-index-lie":
        return ResilientBroadcast(strategy.node, 0, float(p.get("value", 1e6)))
    if b == "random-value":
        # Occasionally forges indices beyond the sanity bound to exercise the gate.
        tau = int(rng.integers(0, k + 3))
        value = float(rng.standard_normal() * p.get("scale", 1e3))
        return ResilientBroadcast(strategy.node, tau, value)
    if b == "colluding-bias":
        return ResilientBroadcast(strategy.node, 0, x_true + float(p.get("bias", 1e3)))
    if b == "replay":
        lag = int(p.get("lag", 5))
        past = history[max(0, len(history) - 1 - lag)]
        return ResilientBroadcast(strategy.node, past.tau, past.x_hat)
    raise ScenarioError(f"unknown adversary behavior {b!r}")
