"""Closed-loop multi-agent traffic simulation harness.

Rolls out 8 s futures at 10 Hz by replanning every 2 s with a pluggable
multimodal motion predictor, applying heading post-processing and a
collision-mitigation mode selection, and evaluates rollouts with
displacement, collision and kinematic metrics.
"""

__version__ = "0.1.0"

from .scenario import (
    Agent,
    AgentFrame,
    AgentKind,
    MapPolyline,
    PolylineKind,
    Scenario,
    ScenarioFormatError,
    ScenarioValidationError,
    TrajectorySample,
    load_scenario,
    save_scenario,
    trailing_history,
)
from .heading import (
    HeadingParams,
    headings_from_xy,
    is_stopped,
    normalize_angle,
    stabilize_rate,
    wrapped_delta,
)
from .collision import (
    CollisionGraph,
    DistanceMatrix,
    ModeSet,
    ModeSetError,
    Selection,
    SelectionSearchStats,
    brute_force_selection,
    build_collision_graph,
    build_distance_matrix,
    count_colliding_pairs,
    degrees,
    find_selection,
    min_pairwise_distance,
    random_collision_graph,
    subgraph_density,
    top1_selection,
)
from .predictor import (
    ConstantVelocityPredictor,
    ContractViolation,
    NoisyConstantVelocityPredictor,
    PredictionRequest,
    PredictionResponse,
    Predictor,
    PredictorError,
    ReplayPredictor,
    build_request,
    validate_response,
)
from .bridge import (
    BridgeConnectionError,
    BridgeError,
    BridgePredictor,
    BridgeProtocolError,
    BridgeTimeout,
    StdioTransport,
    TcpTransport,
)
from .engine import (
    ConfigError,
    Rollout,
    RolloutConfig,
    SimState,
    StepError,
    StepRecord,
    initial_state,
    load_rollouts,
    run_ensemble,
    run_rollout,
    run_step,
    top_k_joint_combinations,
    write_rollouts,
)
from .metrics import (
    EvaluationReport,
    KinematicFeatures,
    collision_pairs,
    evaluate,
    kinematic_features,
    min_ade,
)

__all__ = [name for name in dir() if not name.startswith("_")]
