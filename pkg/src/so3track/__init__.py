"""Hybrid attitude tracking on SO(3).

A single potential on SO(3) x R with a hybrid scalar warp angle, three hybrid
tracking laws built on its gradients (basic, torque-smoothed, velocity-free),
a generic flow/jump solver, and Lyapunov instrumentation that certifies the
decrease properties numerically.
"""

from .errors import ConfigError, ContractError, SolverError
from .so3 import (
    angle_axis,
    antisym_part,
    axial,
    exp_so3,
    is_rotation,
    log_so3,
    orthonormalize,
    project_to_so3,
    random_rotation,
    random_rotations,
    rot_distance,
    skew,
    trace_complement,
    vee,
)
from .potential import (
    CertificationConstants,
    CriticalPoint,
    PotentialParams,
    SpectralData,
    certification_constants,
    design_params,
    gap,
    grad_rotation,
    grad_rotation_rate,
    grad_warp,
    gradients,
    undesired_critical_points,
    value,
    warp_gap,
    warp_rotation,
    warped,
)
from .rigid_body import (
    BodyState,
    ErrorState,
    Inertia,
    RefState,
    Reference,
    apply_noise,
    body_flow,
    coupling_matrix,
    coupling_times,
    error_flow,
    feedforward,
    make_reference,
    ref_flow,
    tracking_error,
)
from .hybrid import HybridArc, HybridSystem, JumpEvent, SolverConfig, detect_crossing, rk4_step, solve
from .controllers import (
    BasicLoop,
    BasicLoopState,
    Gains,
    Measurement,
    NoiseModel,
    NonHybridLoop,
    SmoothLoop,
    SmoothLoopState,
    VelocityFreeLoop,
    VelocityFreeLoopState,
    aux_flow,
    filter_gain_bound,
    filtered_gap,
    filtered_value,
    in_flow_set,
    in_flow_set_smooth,
    in_jump_set,
    in_jump_set_smooth,
    make_loop,
    torque_basic,
    torque_non_hybrid,
    torque_smooth,
    torque_velocity_free,
    warp_rate,
    warp_reset,
    zeta_flow,
)
from .monitors import (
    CertificationReport,
    certify_arc,
    cross_eps_bound,
    exponential_fit,
    lyapunov_basic,
    lyapunov_cross,
    lyapunov_smooth,
    lyapunov_velocity_free,
)
from .scenarios import (
    MemberResult,
    ScenarioConfig,
    ScenarioResult,
    bundled_scenarios,
    build_member,
    load_scenario,
    parse_config_text,
    run_scenario,
    scenario_from_mapping,
    simulate_member,
    validate_scenario,
)

__version__ = "0.1.0"
