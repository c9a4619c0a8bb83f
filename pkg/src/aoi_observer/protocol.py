"""Freshness-indexed distributed observer updates.

Every node maintains, per sub-state, an estimate block and a freshness index
that counts how many steps the block lags the sub-state's source node. The
untriggered marker is None (never a sentinel integer): a None index means the
node has not yet heard, directly or indirectly, from that source.

A network step is synchronous: broadcasts carry state as of the start of the
step, and all nodes then update simultaneously. Untriggered nodes broadcast
(None, open-loop estimate); receivers skip None-tagged entries when forming
their candidate sets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gains import ObserverGainSet
from .lti import Decomposition


@dataclass
class NodeState:
    """Per-node protocol state: one (index, estimate) pair per sub-state."""

    node: int
    taus: list[int | None]
    z: list[np.ndarray]

    def copy(self) -> "NodeState":
        return NodeState(self.node, list(self.taus), [b.copy() for b in self.z])


@dataclass(frozen=True)
class Broadcast:
    """Faithful snapshot of a sender's state at the start of a step."""

    sender: int
    taus: tuple[int | None, ...]
    z: tuple[np.ndarray, ...]


@dataclass(frozen=True)
class Adoption:
    """Record that `node` adopted `source`'s block `substate` this step."""

    node: int
    substate: int
    source: int


def make_broadcast(state: NodeState) -> Broadcast:
    return Broadcast(
        sender=state.node,
        taus=tuple(state.taus),
        z=tuple(b.copy() for b in state.z),
    )


def initial_states(
    dec: Decomposition,
    rng: np.random.Generator,
    *,
    init: str = "seeded-normal",
    scale: float = 1.0,
    explicit: dict[int, np.ndarray] | None = None,
) -> list[NodeState]:
    """Initial estimates per node; sources start with index 0 for their block."""
    states = []
    for i in range(1, dec.N + 1):
        taus: list[int | None] = []
        z = []
        for j in range(1, dec.N + 1):
            nj = dec.block_dims[j - 1]
            taus.append(0 if (i == j and nj > 0) else None)
            if explicit is not None and i in explicit:
                zeta = np.asarray(explicit[i], dtype=float).reshape(-1)
                z.append(zeta[dec.block_slice(j)].copy())
            elif init == "zeros":
                z.append(np.zeros(nj))
            else:
                z.append(scale * rng.standard_normal(nj))
        states.append(NodeState(node=i, taus=taus, z=z))
    return states


def source_update(
    state: NodeState,
    j: int,
    y_j: np.ndarray,
    gains: ObserverGainSet,
    dec: Decomposition,
) -> np.ndarray:
    """Closed-loop update of the source's own sub-state block.

    z_j^(j) <- F_jj z_j^(j) + sum_{q<j} G_jq z_j^(q) + L_j y_j, with the
    freshness index pinned at 0.
    """
    if j not in gains.L:
        raise KeyError(f"no gain designed for sub-state {j}")
    F = gains.closed_loop(dec, j)
    nxt = F @ state.z[j - 1]
    for q in range(1, j):
        if dec.block_dims[q - 1] > 0:
            nxt = nxt + gains.coupling(dec, j, q) @ state.z[q - 1]
    nxt = nxt + gains.L[j] @ np.atleast_1d(np.asarray(y_j, dtype=float))
    return nxt


def _propagate(state: NodeState, j: int, dec: Decomposition, z_j: np.ndarray) -> np.ndarray:
    """A_jj z_j + sum_{q<j} A_jq z_i^(q): one open-loop/adoption step."""
    nxt = dec.a_block(j, j) @ z_j
    for q in range(1, j):
        if dec.block_dims[q - 1] > 0:
            nxt = nxt + dec.a_block(j, q) @ state.z[q - 1]
    return nxt


def nonsource_update(
    state: NodeState,
    j: int,
    inbox: list[Broadcast],
    dec: Decomposition,
) -> tuple[int | None, np.ndarray, int | None]:
    """One step of the non-source rules for sub-state j.

    Returns (next index, next estimate block, adopted-from or None). The four
    branches: untriggered nodes adopt the freshest informed neighbor or stay
    untriggered and run open loop; triggered nodes adopt only strictly fresher
    neighbors, otherwise age their index by one and run open loop. Ties among
    equally fresh neighbors break toward the lowest node id.
    """
    tau_i = state.taus[j - 1]
    informed = [b for b in inbox if b.taus[j - 1] is not None]
    if tau_i is None:
        candidates = informed
    else:
        candidates = [b for b in informed if b.taus[j - 1] < tau_i]
    if candidates:
        u = min(candidates, key=lambda b: (b.taus[j - 1], b.sender))
        return u.taus[j - 1] + 1, _propagate(state, j, dec, u.z[j - 1]), u.sender
    if tau_i is None:
        return None, _propagate(state, j, dec, state.z[j - 1]), None
    return tau_i + 1, _propagate(state, j, dec, state.z[j - 1]), None


def full_estimate(state: NodeState, dec: Decomposition) -> np.ndarray:
    """Map the concatenated block estimates back to original coordinates."""
    if dec.n == 0:
        return np.zeros(0)
    return dec.T @ np.concatenate([state.z[j] for j in range(dec.N)])


def network_step(
    states: list[NodeState],
    inboxes: list[list[Broadcast]],
    ys: list[np.ndarray],
    dec: Decomposition,
    gains: ObserverGainSet,
) -> tuple[list[NodeState], list[Adoption]]:
    """Advance every node one synchronous step.

    states/inboxes/ys are indexed by node - 1; inboxes hold the broadcasts
    delivered along this step's edges. Pure: returns fresh state objects.
    """
    nxt = [s.copy() for s in states]
    adoptions: list[Adoption] = []
    for i, state in enumerate(states, start=1):
        for j in range(1, dec.N + 1):
            if dec.block_dims[j - 1] == 0:
                continue
            if i == j:
                nxt[i - 1].z[j - 1] = source_update(state, j, ys[i - 1], gains, dec)
                nxt[i - 1].taus[j - 1] = 0
            else:
                tau, zb, adopted = nonsource_update(state, j, inboxes[i - 1], dec)
                nxt[i - 1].taus[j - 1] = tau
                nxt[i - 1].z[j - 1] = zb
                if adopted is not None:
                    adoptions.append(Adoption(node=i, substate=j, source=adopted))
    return nxt, adoptions
