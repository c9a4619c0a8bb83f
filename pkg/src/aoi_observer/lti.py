"""Discrete-time LTI plant model and the multi-sensor observability decomposition.

The plant is x[k+1] = A x[k] with per-node measurements y_i[k] = C_i x[k].
`decompose` produces an orthogonal change of coordinates under which the
system matrix is block lower-triangular, each diagonal block is observable
from exactly one node's measurements, and that node acts as the source for
the corresponding sub-state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionMismatch, NotJointlyObservable, NumericalRankAmbiguity

# Rank decisions: singular values below REL_RANK_TOL * sigma_max * max(dims)
# count as zero, and the gap sigma_r / sigma_{r+1} must exceed RANK_GAP_MIN.
REL_RANK_TOL = 1e-9
RANK_GAP_MIN = 1e3
RECON_TOL = 1e-8


def observability_matrix(A: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Stack C, CA, ..., CA^(n-1) into a single (m*n) x n matrix."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise DimensionMismatch(f"A must be square, got {A.shape}")
    if C.shape[1] != n:
        raise DimensionMismatch(f"C has {C.shape[1]} columns, expected {n}")
    blocks = []
    Ck = C
    for _ in range(n):
        blocks.append(Ck)
        Ck = Ck @ A
    return np.vstack(blocks)


def numerical_rank(M: np.ndarray, *, check_gap: bool = False) -> int:
    """Numerical rank via singular values.

    With check_gap=True, raises NumericalRankAmbiguity when the singular-value
    ratio across the rank boundary is below RANK_GAP_MIN, so rank decisions
    that would otherwise be silent coin flips fail loudly.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    if s[0] == 0.0:
        return 0
    tol = REL_RANK_TOL * s[0] * max(M.shape)
    r = int(np.sum(s > tol))
    if check_gap and 0 < r < len(s) and s[r] > 0.0:
        if s[r - 1] / s[r] < RANK_GAP_MIN:
            raise NumericalRankAmbiguity(
                f"singular values {s[r - 1]:.3e} / {s[r]:.3e} at the rank "
                f"boundary are separated by less than {RANK_GAP_MIN:g}"
            )
    return r


def is_observable(A: np.ndarray, C: np.ndarray) -> bool:
    """True iff the numerical rank of the observability matrix equals n."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if n == 0:
        return True
    return numerical_rank(observability_matrix(A, C)) == n


@dataclass(frozen=True)
class LtiSystem:
    """Plant matrix A plus one observation matrix per node.

    The stacked pair (A, [C_1; ...; C_N]) must be observable; this is checked
    at construction and is the standing assumption for everything downstream.
    """

    A: np.ndarray
    C: list[np.ndarray]
    labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        object.__setattr__(self, "A", A)
        if A.shape[0] != A.shape[1]:
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        n = A.shape[0]
        Cs = []
        for i, Ci in enumerate(self.C):
            Ci = np.atleast_2d(np.asarray(Ci, dtype=float))
            if Ci.shape[1] != n:
                raise DimensionMismatch(
                    f"C_{i + 1} has {Ci.shape[1]} columns, expected {n}"
                )
            Cs.append(Ci)
        object.__setattr__(self, "C", Cs)
        if not Cs:
            raise DimensionMismatch("at least one observation matrix required")
        if not self.labels:
            object.__setattr__(self, "labels", [str(i + 1) for i in range(len(Cs))])
        if not is_observable(A, self.stacked_C()):
            raise NotJointlyObservable(
                "stacked (A, C) pair is not observable; no decomposition exists"
            )

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def N(self) -> int:
        return len(self.C)

    def stacked_C(self) -> np.ndarray:
        return np.vstack(self.C)

    def measure(self, i: int, x: np.ndarray) -> np.ndarray:
        """y_i = C_i x for 1-based node id i."""
        return self.C[i - 1] @ x


@dataclass(frozen=True)
class Decomposition:
    """Orthogonal transform exposing per-node observable sub-states.

    A_bar = T_inv A T is block lower-triangular with block sizes block_dims,
    C_bar[i] = C_i T has zeros right of its i-th diagonal block, and every
    non-empty diagonal pair (A_jj, C_jj) is observable. Zero blocks are exact:
    they are overwritten after the similarity transform, not merely small.
    """

    T: np.ndarray
    T_inv: np.ndarray
    block_dims: list[int]
    A_bar: np.ndarray
    C_bar: list[np.ndarray]

    @property
    def n(self) -> int:
        return self.T.shape[0]

    @property
    def N(self) -> int:
        return len(self.block_dims)

    def block_slice(self, j: int) -> slice:
        """Index range of sub-state j (1-based) inside a transformed vector."""
        start = sum(self.block_dims[: j - 1])
        return slice(start, start + self.block_dims[j - 1])

    def a_block(self, j: int, q: int) -> np.ndarray:
        """Block (j, q) of A_bar, 1-based."""
        return self.A_bar[self.block_slice(j), self.block_slice(q)]

    def c_block(self, i: int, q: int) -> np.ndarray:
        """Column-block q of node i's transformed observation matrix."""
        return self.C_bar[i - 1][:, self.block_slice(q)]

    def diag_pair(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        """(A_jj, C_jj) for sub-state j."""
        return self.a_block(j, j), self.c_block(j, j)

    def source_nodes(self) -> list[int]:
        """Nodes owning a non-empty sub-state, i.e. sources."""
        return [j + 1 for j, nj in enumerate(self.block_dims) if nj > 0]


@dataclass(frozen=True)
class SubStateVector:
    """Transformed state split into per-sub-state blocks."""

    blocks: list[np.ndarray]

    def concat(self) -> np.ndarray:
        if not self.blocks:
            return np.zeros(0)
        return np.concatenate(self.blocks)


def decompose(sys: LtiSystem) -> Decomposition:
    """Iterated observability decomposition across the node ordering.

    Stage j builds an orthonormal basis of the subspace (within what is left
    unobserved by nodes 1..j-1) that node j's measurements observe; the
    leftover span is A-invariant, so the restriction carries to stage j+1.
    Raises NotJointlyObservable if any direction survives all N stages and
    NumericalRankAmbiguity when a stage's rank decision is not clean.
    """
    n = sys.n
    W = np.eye(n)  # orthonormal basis of the still-unobserved subspace
    columns: list[np.ndarray] = []
    block_dims: list[int] = []
    for j in range(sys.N):
        rem = W.shape[1]
        if rem == 0:
            block_dims.append(0)
            continue
        A_res = W.T @ sys.A @ W
        C_res = sys.C[j] @ W
        obs = observability_matrix(A_res, C_res)
        r = numerical_rank(obs, check_gap=True)
        block_dims.append(r)
        if r == 0:
            continue
        # Right singular vectors: first r span the observable directions,
        # the rest span the kernel of the observability matrix.
        _, _, Vt = np.linalg.svd(obs)
        columns.append(W @ Vt[:r].T)
        W = W @ Vt[r:].T
    if W.shape[1] != 0:
        raise NotJointlyObservable(
            f"{W.shape[1]} state direction(s) not observed by any node"
        )
    T = np.hstack(columns) if columns else np.zeros((n, 0))
    T_inv = T.T  # columns are orthonormal by construction
    A_bar = T_inv @ sys.A @ T
    C_bar = [Ci @ T for Ci in sys.C]

    # Enforce exact zeros in the structurally-zero blocks.
    offsets = np.cumsum([0] + block_dims)
    for j in range(sys.N):
        A_bar[offsets[j] : offsets[j + 1], offsets[j + 1] :] = 0.0
        C_bar[j][:, offsets[j + 1] :] = 0.0
    return Decomposition(T=T, T_inv=T_inv, block_dims=block_dims, A_bar=A_bar, C_bar=C_bar)


def to_substate(dec: Decomposition, x: np.ndarray) -> SubStateVector:
    """Map a state vector into per-sub-state blocks (z = T_inv x)."""
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != dec.n:
        raise DimensionMismatch(f"vector length {x.shape[0]}, expected {dec.n}")
    z = dec.T_inv @ x
    return SubStateVector(blocks=[z[dec.block_slice(j + 1)] for j in range(dec.N)])


def from_substate(dec: Decomposition, z: SubStateVector) -> np.ndarray:
    """Inverse of to_substate (x = T z)."""
    flat = z.concat()
    if flat.shape[0] != dec.n:
        raise DimensionMismatch(f"blocks concatenate to {flat.shape[0]}, expected {dec.n}")
    return dec.T @ flat


def system_to_dict(sys: LtiSystem) -> dict:
    return {
        "A": sys.A.tolist(),
        "C": [Ci.tolist() for Ci in sys.C],
        "labels": list(sys.labels),
    }


def system_from_dict(doc: dict) -> LtiSystem:
    if "A" not in doc or "C" not in doc:
        raise DimensionMismatch("system document requires 'A' and 'C' keys")
    return LtiSystem(
        A=np.asarray(doc["A"], dtype=float),
        C=[np.asarray(Ci, dtype=float) for Ci in doc["C"]],
        labels=list(doc.get("labels", [])),
    )


def load_system(path: str | Path) -> LtiSystem:
    """Read a system definition file (JSON: keys A, C, optional labels)."""
    with open(path) as fh:
        return system_from_dict(json.load(fh))


def save_system(sys: LtiSystem, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(system_to_dict(sys), fh, indent=2)
