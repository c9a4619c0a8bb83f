"""Scenario documents: what to simulate, validated up front.

A scenario bundles a plant (matrix form, or scalar form for the resilient
and consensus protocols), a graph schedule, a gain recipe, optional
adversaries and disturbance, and the run controls (seed, horizon, initial
estimates). All validation happens at load/construction; the simulator
assumes a valid scenario and never re-checks mid-run.

JSON layout (schema version 1):

    {
      "$schema_version": 1,
      "name": "...",
      "seed": 12345,
      "horizon": 400,
      "protocol": "aoi" | "resilient" | "naive-consensus",
      "system": {"A": [[...]], "C": [[[...]]]} | {"a": 1.2, "c": [1,0,...]},
      "graph": {"kind": "periodic-sc", "T": 3} | {"file": "sched.json"}
               | {"schedule": {...inline schedule doc...}},
      "gains": {"mode": "rate", "rho": 0.7, "delta": 0.0}
               | {"mode": "nilpotent"} | {"l": {"1": 2.0}},
      "weights": "uniform" | "tree-rooted",
      "adversaries": [{"node": 5, "strategy": "silent", "params": {}}],
      "f": 1,
      "disturbance": 0.0,
      "x0": [..] | 1.0,
      "init": "seeded-normal" | "zeros",
      "init_scale": 1.0
    }
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ScenarioError
from .gains import ObserverGainSet
from .graphs import GraphSequence, generate_sequence, load_sequence, sequence_from_dict
from .lti import Decomposition, LtiSystem, system_from_dict
from .resilient import AdversaryStrategy, validate_adversaries

SCHEMA_VERSION = 1

PROTOCOLS = ("aoi", "resilient", "naive-consensus")


@dataclass(frozen=True)
class ScalarSystem:
    """Scalar plant x[k+1] = a x[k] with per-node measurement slopes c_i."""

    a: float
    c: tuple[float, ...]

    def __post_init__(self):
        if not any(ci != 0.0 for ci in self.c):
            raise ScenarioError("scalar system needs at least one measuring node")

    @property
    def N(self) -> int:
        return len(self.c)

    @property
    def n(self) -> int:
        return 1

    def sources(self) -> list[int]:
        return [i + 1 for i, ci in enumerate(self.c) if ci != 0.0]


@dataclass(frozen=True)
class GainConfig:
    """Gain recipe: a design request or explicit scalar gains."""

    mode: str = "rate"  # "rate" | "nilpotent" | "explicit"
    rho: float | None = None
    delta: float = 0.0
    gamma: float | None = None
    delta_bar: float | None = None
    explicit_l: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode not in ("rate", "nilpotent", "explicit"):
            raise ScenarioError(f"unknown gain mode {self.mode!r}")
        if self.mode == "rate" and self.rho is None:
            raise ScenarioError("rate gains need rho")


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    horizon: int
    protocol: str
    system: LtiSystem | ScalarSystem
    graph: GraphSequence
    gains: GainConfig = GainConfig(mode="nilpotent")
    precomputed_gains: ObserverGainSet | None = None
    decomposition: Decomposition | None = None
    weights: str = "uniform"
    adversaries: tuple[AdversaryStrategy, ...] = ()
    f: int = 0
    disturbance: float = 0.0
    x0: np.ndarray | float | None = None
    init: str = "seeded-normal"
    init_scale: float = 1.0
    robust_T: int | None = None  # window length behind the robustness promise

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ScenarioError(f"unknown protocol {self.protocol!r}")
        if self.horizon < 1:
            raise ScenarioError("horizon must be positive")
        if self.graph.horizon < self.horizon:
            raise ScenarioError(
                f"graph schedule covers {self.graph.horizon} steps, "
                f"scenario needs {self.horizon}"
            )
        if self.graph.N != self.system.N:
            raise ScenarioError("graph and system disagree on node count")
        if self.adversaries and self.protocol != "resilient":
            raise ScenarioError("adversaries require the resilient protocol")
        if self.protocol == "resilient":
            if not isinstance(self.system, ScalarSystem):
                raise ScenarioError("resilient protocol runs on scalar systems")
            validate_adversaries(list(self.adversaries), self.f, self.system.N)
        if self.protocol == "naive-consensus":
            if not isinstance(self.system, ScalarSystem):
                raise ScenarioError("naive consensus runs on scalar systems")
            if self.weights not in ("uniform", "tree-rooted"):
                raise ScenarioError(f"unknown weight scheme {self.weights!r}")
        if self.protocol == "aoi":
            if not isinstance(self.system, LtiSystem):
                raise ScenarioError("the freshness-index observer needs a matrix system")
            tN1 = self.graph.intervals[self.graph.N - 1]
            if self.horizon < tN1:
                raise ScenarioError(
                    f"horizon {self.horizon} ends before t_(N-1) = {tN1}"
                )
        if self.init not in ("seeded-normal", "zeros"):
            raise ScenarioError(f"unknown init spec {self.init!r}")


def _parse_system(doc: dict) -> LtiSystem | ScalarSystem:
    if "a" in doc:
        return ScalarSystem(a=float(doc["a"]), c=tuple(float(v) for v in doc["c"]))
    return system_from_dict(doc)


def _parse_graph(doc: dict, base_dir: Path | None, N: int, horizon: int) -> tuple[GraphSequence, int | None]:
    if "file" in doc:
        path = Path(doc["file"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return load_sequence(path), doc.get("T")
    if "schedule" in doc:
        return sequence_from_dict(doc["schedule"]), doc.get("T")
    kind = doc.get("kind")
    if kind is None:
        raise ScenarioError("graph section needs 'kind', 'file', or 'schedule'")
    seq = generate_sequence(
        kind,
        N,
        int(doc.get("seed", 0)),
        int(doc.get("horizon", horizon)),
        T=int(doc.get("T", 1)),
        delta=float(doc.get("delta", 0.5)),
        r=int(doc.get("r", 1)),
        sources=set(doc["sources"]) if "sources" in doc else None,
        pattern=doc.get("pattern", "sc-ring"),
    )
    return seq, doc.get("T") if kind == "robust" else None


def _parse_gains(doc: dict | None) -> GainConfig:
    if doc is None:
        return GainConfig(mode="nilpotent")
    if "l" in doc:
        return GainConfig(
            mode="explicit",
            explicit_l={int(k): float(v) for k, v in doc["l"].items()},
        )
    return GainConfig(
        mode=doc.get("mode", "rate"),
        rho=doc.get("rho"),
        delta=float(doc.get("delta", 0.0)),
        gamma=doc.get("gamma"),
        delta_bar=doc.get("delta_bar"),
    )


def scenario_from_dict(doc: dict, *, base_dir: Path | None = None, seed_override: int | None = None) -> Scenario:
    version = doc.get("$schema_version")
    if int(version) != SCHEMA_VERSION:
        raise ScenarioError(f"unsupported schema version {version!r}")
    try:
        system = _parse_system(doc["system"])
        horizon = int(doc["horizon"])
        graph, robust_T = _parse_graph(doc["graph"], base_dir, system.N, horizon)
        adversaries = tuple(
            AdversaryStrategy(
                node=int(a["node"]),
                behavior=str(a["strategy"]),
                params=dict(a.get("params", {})),
            )
            for a in doc.get("adversaries", [])
        )
        x0 = doc.get("x0")
        if isinstance(x0, list):
            x0 = np.asarray(x0, dtype=float)
        elif x0 is not None:
            x0 = float(x0)
        return Scenario(
            name=str(doc.get("name", "scenario")),
            seed=int(seed_override if seed_override is not None else doc.get("seed", 0)),
            horizon=horizon,
            protocol=str(doc["protocol"]),
            system=system,
            graph=graph,
            gains=_parse_gains(doc.get("gains")),
            weights=str(doc.get("weights", "uniform")),
            adversaries=adversaries,
            f=int(doc.get("f", 0)),
            disturbance=float(doc.get("disturbance", 0.0)),
            x0=x0,
            init=str(doc.get("init", "seeded-normal")),
            init_scale=float(doc.get("init_scale", 1.0)),
            robust_T=robust_T if robust_T is None else int(robust_T),
        )
    except KeyError as exc:
        raise ScenarioError(f"scenario document missing key {exc}") from exc


def load_scenario(path: str | Path, *, seed_override: int | None = None) -> Scenario:
    path = Path(path)
    with open(path) as fh:
        doc = json.load(fh)
    return scenario_from_dict(doc, base_dir=path.parent, seed_override=seed_override)
