"""Distributed state estimation over time-varying graphs, driven by
freshness indices, with a Byzantine-resilient scalar variant."""

from .errors import (
    AoiObserverError,
    DimensionMismatch,
    GenerationFailed,
    HorizonInconclusive,
    HorizonTooShort,
    InfeasibleChain,
    NotJointlyObservable,
    NumericalRankAmbiguity,
    PlacementFailed,
    ScenarioError,
    SubsetBlowup,
)
from .gains import (
    ObserverGainSet,
    RateChain,
    build_rate_chain,
    design_gain_set,
    design_nilpotent_gain,
    design_rate_gain,
    estimate_norm_constants,
    finite_time_deadline,
    spectral_radius,
)
from .graphs import (
    GraphSequence,
    check_conditions,
    generate_sequence,
    is_jointly_strongly_r_robust,
    is_r_reachable,
    is_strongly_connected,
    is_strongly_r_robust_wrt,
    load_sequence,
    save_sequence,
    union_graph,
)
from .lti import (
    Decomposition,
    LtiSystem,
    SubStateVector,
    decompose,
    from_substate,
    is_observable,
    load_system,
    observability_matrix,
    save_system,
    to_substate,
)
from .protocol import Broadcast, NodeState, full_estimate, nonsource_update, source_update
from .resilient import (
    AdversaryStrategy,
    ResilientBroadcast,
    ResilientNodeState,
    apply_adversary,
    resilient_nonsource_step,
    source_luenberger,
    trim_select,
)
from .scenario import GainConfig, ScalarSystem, Scenario, load_scenario, scenario_from_dict
from .simulator import (
    SimTrace,
    assert_online_invariants,
    run,
    summarize,
    theorem_burn_in,
    trace_csv_bytes,
    verify_finite_time,
    verify_rate,
    write_trace_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
