"""Observer gain design for the per-sub-state estimators.

Two modes are supported. Rate mode places distinct real eigenvalues with a
prescribed spectral radius per sub-state, where the per-sub-state radii form
an interleaved chain ensuring that delayed information still decays at the
requested network-wide rate. Nilpotent mode places every eigenvalue at zero,
which yields exact convergence after finitely many steps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    HorizonInconclusive,
    HorizonTooShort,
    InfeasibleChain,
    PlacementFailed,
)
from .graphs import GraphSequence
from .lti import Decomposition, is_observable, observability_matrix

POWER_SCAN_HORIZON = 500
PLACEMENT_RETRIES = 16
PLACEMENT_TOL = 1e-8
GAMMA_MARGIN = 1e-3
CHAIN_SHRINK = 0.999  # keeps the per-stage rate inequality strict


def spectral_radius(M: np.ndarray) -> float:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(M))))


@dataclass(frozen=True)
class RateChain:
    """Interleaved decay rates rho_1 < lambda_1 < ... < rho_N < lambda_N = rho.

    Each stage satisfies gamma**delta_bar * rho_j**(1 - delta_bar) <= lambda_j,
    which is what absorbs the delay growth allowed by the interval cap.
    """

    rho: float
    delta: float
    delta_bar: float
    gamma: float
    rho_js: tuple[float, ...]
    lambda_js: tuple[float, ...]

    def __post_init__(self):
        if not (0.0 < self.rho < 1.0):
            raise ValueError("rho must lie in (0,1)")
        if not (self.delta < self.delta_bar < 1.0):
            raise ValueError("delta_bar must lie in (delta, 1)")
        seq = []
        for r, l in zip(self.rho_js, self.lambda_js):
            seq.extend((r, l))
        if any(b <= a for a, b in zip(seq, seq[1:])):
            raise ValueError("rate chain is not strictly interleaved")
        if self.lambda_js[-1] != self.rho:
            raise ValueError("chain must terminate at lambda_N = rho")
        for r, l in zip(self.rho_js, self.lambda_js):
            if self.gamma**self.delta_bar * r ** (1.0 - self.delta_bar) > l:
                raise ValueError("stage inequality violated")


def build_rate_chain(
    dec: Decomposition,
    rho: float,
    delta: float,
    *,
    gamma: float | None = None,
    delta_bar: float | None = None,
) -> RateChain:
    """Construct the rate chain top-down from lambda_N = rho.

    gamma defaults to the largest (margin-padded) spectral radius among the
    diagonal blocks, floored at 1; delta_bar defaults to (1+delta)/2 for
    growing intervals and 0.1 for bounded ones. Both can be pinned explicitly.
    """
    if not (0.0 < rho < 1.0):
        raise ValueError("rho must lie in (0,1)")
    if not (0.0 <= delta < 1.0):
        raise ValueError("delta must lie in [0,1)")
    if delta_bar is None:
        delta_bar = (1.0 + delta) / 2.0 if delta > 0.0 else 0.1
    if gamma is None:
        radii = [
            spectral_radius(dec.a_block(j, j))
            for j in range(1, dec.N + 1)
            if dec.block_dims[j - 1] > 0
        ]
        gamma = max(1.0, (1.0 + GAMMA_MARGIN) * max(radii, default=0.0))
    N = dec.N
    rho_js = [0.0] * N
    lambda_js = [0.0] * N
    lam = rho
    for j in range(N, 0, -1):
        lambda_js[j - 1] = lam
        rj = CHAIN_SHRINK * (lam / gamma**delta_bar) ** (1.0 / (1.0 - delta_bar))
        if rj <= 0.0 or not np.isfinite(rj):
            raise InfeasibleChain(f"rho_{j} underflowed ({rj!r})")
        rho_js[j - 1] = rj
        lam = rj * (1.0 - 1.0 / (4.0 * N))
    return RateChain(
        rho=rho,
        delta=delta,
        delta_bar=delta_bar,
        gamma=gamma,
        rho_js=tuple(rho_js),
        lambda_js=tuple(lambda_js),
    )


# ---------------------------------------------------------------------------
# pole placement
# ---------------------------------------------------------------------------

def _ackermann_observer(A: np.ndarray, c: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Single-output observer gain placing the spectrum of A - l c at targets."""
    n = A.shape[0]
    obs = observability_matrix(A, c)
    coeffs = np.poly(targets)  # monic characteristic polynomial
    phi = np.zeros_like(A)
    for coef in coeffs:
        phi = phi @ A + coef * np.eye(n)
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    l = phi @ np.linalg.solve(obs, rhs)
    return l.reshape(n, 1)


def _check_placement(A: np.ndarray, L: np.ndarray, C: np.ndarray, targets: np.ndarray) -> bool:
    eig = np.linalg.eigvals(A - L @ C)
    return (
        np.max(np.abs(np.sort_complex(eig) - np.sort_complex(targets.astype(complex))))
        <= PLACEMENT_TOL * max(1.0, float(np.max(np.abs(targets))))
    )


def _place(A: np.ndarray, C: np.ndarray, targets: np.ndarray, seed: int) -> np.ndarray:
    """Place via reduction to a single synthetic output row.

    A seeded random combination of the output rows is generically observable;
    retry with fresh draws until the verified residual is small enough.
    """
    n = A.shape[0]
    r = C.shape[0]
    if n == 0:
        return np.zeros((0, r))
    rng = np.random.default_rng(seed)
    for attempt in range(PLACEMENT_RETRIES):
        if r == 1 and attempt == 0:
            v = np.ones(1)
        else:
            v = rng.standard_normal(r)
        c_eff = v @ C
        if not is_observable(A, c_eff.reshape(1, n)):
            continue
        l = _ackermann_observer(A, c_eff.reshape(1, n), targets)
        L = l @ v.reshape(1, r)
        if _check_placement(A, L, C, targets):
            return L
    raise PlacementFailed(
        f"no gain reached targets {targets} within {PLACEMENT_RETRIES} attempts"
    )


def design_rate_gain(
    pair: tuple[np.ndarray, np.ndarray], rho_j: float, *, seed: int = 0
) -> np.ndarray:
    """Gain with distinct real closed-loop eigenvalues of spectral radius rho_j.

    Targets are equally spaced over [rho_j / n_j, rho_j]. Requesting rho_j = 0
    degenerates to the nilpotent design.
    """
    A, C = (np.atleast_2d(np.asarray(m, dtype=float)) for m in pair)
    if rho_j < 0.0:
        raise ValueError("rho_j must be non-negative")
    n = A.shape[0]
    if n < 1:
        raise ValueError("empty sub-state has no gain")
    if rho_j == 0.0:
        return design_nilpotent_gain((A, C), seed=seed)
    targets = rho_j * np.arange(1, n + 1) / n
    return _place(A, C, targets, seed)


def design_nilpotent_gain(
    pair: tuple[np.ndarray, np.ndarray], *, seed: int = 0
) -> np.ndarray:
    """Gain placing every closed-loop eigenvalue at zero (deadbeat observer)."""
    A, C = (np.atleast_2d(np.asarray(m, dtype=float)) for m in pair)
    n = A.shape[0]
    rng = np.random.default_rng(seed)
    for attempt in range(PLACEMENT_RETRIES):
        if C.shape[0] == 1 and attempt == 0:
            v = np.ones(1)
        else:
            v = rng.standard_normal(C.shape[0])
        c_eff = (v @ C).reshape(1, n)
        if not is_observable(A, c_eff):
            continue
        l = _ackermann_observer(A, c_eff, np.zeros(n))
        L = l @ v.reshape(1, C.shape[0])
        F = A - L @ C
        if np.max(np.abs(np.linalg.matrix_power(F, n))) <= PLACEMENT_TOL * max(
            1.0, float(np.max(np.abs(A)))
        ):
            return L
    raise PlacementFailed("nilpotent placement failed")


# ---------------------------------------------------------------------------
# norm-constant estimation
# ---------------------------------------------------------------------------

def _power_ratio_max(M: np.ndarray, rate: float, horizon: int) -> float:
    """max_k ||M^k|| / rate^k scanned via the normalized power sequence.

    Raises HorizonInconclusive when the ratio is still climbing geometrically
    over the scan's second half, which signals rate below the true growth of
    M's powers (up to float-level creep, which is tolerated).
    """
    n = M.shape[0]
    if n == 0:
        return 1.0
    P = np.eye(n)
    Mn = M / rate
    ratios = [1.0]
    for _ in range(horizon):
        P = P @ Mn
        ratios.append(float(np.linalg.norm(P, 2)))
    half, last = ratios[horizon // 2], ratios[-1]
    if last > 0.0 and half > 0.0:
        growth = (last / half) ** (2.0 / horizon)
        if growth > 1.0 + 1e-9:
            raise HorizonInconclusive(
                f"power ratio still growing at k={horizon} "
                f"(per-step factor {growth:.3e})"
            )
    return float(np.max(ratios))


def estimate_norm_constants(M: np.ndarray, gamma: float) -> float:
    """Smallest scanned beta with ||M^k|| <= beta * gamma^k over the horizon.

    gamma must be at least max(1, spectral radius of M); the trailing ratio
    must have stopped increasing by the scan horizon or the estimate is
    rejected as inconclusive.
    """
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if gamma < max(1.0, spectral_radius(M)) * (1.0 - 1e-12):
        raise ValueError(
            f"gamma={gamma} below max(1, spectral radius {spectral_radius(M):.6g})"
        )
    return _power_ratio_max(M, gamma, POWER_SCAN_HORIZON)


@dataclass(frozen=True)
class ObserverGainSet:
    """Per-sub-state gains plus the certificates used by the rate analysis.

    L maps source node id -> gain matrix (only non-empty sub-states appear).
    norm_constants maps node id -> (alpha_j, beta_j, gamma_j) certifying
    ||(A_jj - L_j C_jj)^k|| <= alpha_j rho_j^k and ||A_jj^k|| <= beta_j gamma_j^k.
    """

    mode: str  # "rate" | "nilpotent"
    L: dict[int, np.ndarray]
    chain: RateChain | None
    norm_constants: dict[int, tuple[float, float, float]]
    rho_per_block: dict[int, float]

    def closed_loop(self, dec: Decomposition, j: int) -> np.ndarray:
        """F_jj = A_jj - L_j C_jj."""
        A_jj, C_jj = dec.diag_pair(j)
        return A_jj - self.L[j] @ C_jj

    def coupling(self, dec: Decomposition, j: int, q: int) -> np.ndarray:
        """G_jq = A_jq - L_j C_jq."""
        return dec.a_block(j, q) - self.L[j] @ dec.c_block(j, q)


def design_gain_set(
    dec: Decomposition,
    *,
    mode: str,
    rho: float | None = None,
    delta: float = 0.0,
    seed: int = 0,
    gamma: float | None = None,
    delta_bar: float | None = None,
) -> ObserverGainSet:
    """Design gains for every non-empty sub-state of a decomposition."""
    if mode not in ("rate", "nilpotent"):
        raise ValueError(f"unknown gain mode {mode!r}")
    chain = None
    if mode == "rate":
        if rho is None:
            raise ValueError("rate mode needs rho")
        chain = build_rate_chain(dec, rho, delta, gamma=gamma, delta_bar=delta_bar)
    L: dict[int, np.ndarray] = {}
    consts: dict[int, tuple[float, float, float]] = {}
    rho_pb: dict[int, float] = {}
    for j in range(1, dec.N + 1):
        nj = dec.block_dims[j - 1]
        if nj == 0:
            continue
        pair = dec.diag_pair(j)
        if mode == "rate":
            rj = chain.rho_js[j - 1]
            Lj = design_rate_gain(pair, rj, seed=seed + j)
            _validate_rate_spectrum(pair[0] - Lj @ pair[1], rj)
            alpha = _power_ratio_max(pair[0] - Lj @ pair[1], rj, POWER_SCAN_HORIZON)
        else:
            rj = 0.0
            Lj = design_nilpotent_gain(pair, seed=seed + j)
            F = pair[0] - Lj @ pair[1]
            alpha = 1.0
            P = np.eye(nj)
            for _ in range(nj):
                alpha = max(alpha, float(np.linalg.norm(P, 2)))
                P = P @ F
        gamma_j = max(1.0, (1.0 + GAMMA_MARGIN) * spectral_radius(pair[0]))
        beta_j = estimate_norm_constants(pair[0], gamma_j)
        L[j] = Lj
        consts[j] = (alpha, beta_j, gamma_j)
        rho_pb[j] = rj
    return ObserverGainSet(
        mode=mode, L=L, chain=chain, norm_constants=consts, rho_per_block=rho_pb
    )


def _validate_rate_spectrum(F: np.ndarray, rho_j: float) -> None:
    eig = np.linalg.eigvals(F)
    if np.max(np.abs(eig.imag)) > 1e-8 * max(1.0, rho_j):
        raise PlacementFailed("closed-loop spectrum is not real")
    ev = np.sort(eig.real)
    if abs(np.max(np.abs(ev)) - rho_j) > 1e-6 * max(1.0, rho_j):
        raise PlacementFailed("closed-loop spectral radius misses rho_j")
    if len(ev) > 1 and np.min(np.diff(ev)) < 1e-6 * rho_j:
        raise PlacementFailed("closed-loop eigenvalues not separated")


# ---------------------------------------------------------------------------
# finite-time deadline
# ---------------------------------------------------------------------------

def finite_time_deadline(dec: Decomposition, seq: GraphSequence, horizon: int) -> int:
    """Step count after which nilpotent gains guarantee exact convergence.

    Runs the per-sub-state deadline recursion against the actual interval
    lengths of the schedule: block j's errors vanish once every k past the
    deadline satisfies k - 2(N-1)g(k) >= previous deadline + n_j.
    """
    if horizon > seq.horizon:
        raise HorizonTooShort("requested horizon exceeds the schedule")
    N = seq.N
    gtil = np.array(
        [2 * (N - 1) * seq.interval_length(k) for k in range(horizon + 1)], dtype=int
    )
    headroom = np.arange(horizon + 1) - gtil  # k - gtilde(k)
    t_trigger = seq.intervals[N - 1] if N - 1 < len(seq.intervals) else None
    if t_trigger is None or t_trigger > horizon:
        raise HorizonTooShort("schedule does not reach t_{N-1}")
    prev = 0
    first = True
    for j in range(1, dec.N + 1):
        nj = dec.block_dims[j - 1]
        if nj == 0:
            continue
        thresh = prev + nj
        violators = np.nonzero(headroom < thresh)[0]
        cand = int(violators[-1]) + 1 if violators.size else 1
        if first:
            cand = max(cand, t_trigger, 1)
            first = False
        if cand > horizon or (violators.size and violators[-1] == horizon):
            raise HorizonTooShort(
                f"deadline for sub-state {j} not attained by step {horizon}"
            )
        prev = cand
    return prev


# ---------------------------------------------------------------------------
# gain files
# ---------------------------------------------------------------------------

def gain_set_to_dict(gains: ObserverGainSet, dec: Decomposition) -> dict:
    doc: dict = {"mode": gains.mode, "blocks": []}
    if gains.chain is not None:
        doc["chain"] = {
            "rho": gains.chain.rho,
            "delta": gains.chain.delta,
            "delta_bar": gains.chain.delta_bar,
            "gamma": gains.chain.gamma,
            "rho_js": list(gains.chain.rho_js),
            "lambda_js": list(gains.chain.lambda_js),
        }
    for j in sorted(gains.L):
        alpha, beta, gamma_j = gains.norm_constants[j]
        doc["blocks"].append(
            {
                "node": j,
                "dim": dec.block_dims[j - 1],
                "L": gains.L[j].tolist(),
                "rho_j": gains.rho_per_block[j],
                "alpha": alpha,
                "beta": beta,
                "gamma_j": gamma_j,
            }
        )
    return doc


def gain_set_from_dict(doc: dict) -> ObserverGainSet:
    chain = None
    if "chain" in doc:
        c = doc["chain"]
        chain = RateChain(
            rho=c["rho"],
            delta=c["delta"],
            delta_bar=c["delta_bar"],
            gamma=c["gamma"],
            rho_js=tuple(c["rho_js"]),
            lambda_js=tuple(c["lambda_js"]),
        )
    L = {}
    consts = {}
    rho_pb = {}
    for blk in doc["blocks"]:
        j = int(blk["node"])
        L[j] = np.asarray(blk["L"], dtype=float)
        consts[j] = (blk["alpha"], blk["beta"], blk["gamma_j"])
        rho_pb[j] = float(blk["rho_j"])
    return ObserverGainSet(
        mode=doc["mode"], L=L, chain=chain, norm_constants=consts, rho_per_block=rho_pb
    )


def save_gain_set(gains: ObserverGainSet, dec: Decomposition, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(gain_set_to_dict(gains, dec), fh, indent=2)


def load_gain_set(path: str | Path) -> ObserverGainSet:
    with open(path) as fh:
        return gain_set_from_dict(json.load(fh))
