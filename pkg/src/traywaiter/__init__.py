"""Slosh-free, slip-free reference trajectories for tray-carried transport.

Smoothing filters shape the commanded motion and expose its derivatives
structurally; tilt compensation keeps the gravity-plus-inertia vector normal
to the tray; a planar stick-slip and pendulum-slosh simulator validates the
result.
"""

from .compensation import (
    FreeFallError,
    MountingTransform,
    TiltPose,
    baseline_friction_tilt,
    compose_flange_pose,
    pendulum_length_from_frequency,
    planar_tilt,
    rotation_matrix,
    tilt_angles,
    tilt_pose,
)
from .dynamics import (
    ContactLostError,
    IntegrationError,
    PlantParams,
    SimState,
    SimTrace,
    TrayMotion,
    analytic_tilt_channel,
    desk_params,
    estimate_prv,
    fd_tilt_channel,
    friction_margin,
    linear_slosh_params,
    simulate_coupled,
    simulate_linear_slosh,
    simulate_pendulum,
    simulate_solid_sliding,
)
from .planner import (
    FeasibilityReport,
    PlanResult,
    Scenario,
    feasibility_report,
    friction_limited_duration,
    min_time,
    plan,
    rollout_profile,
    rollout_trajectory,
    triangular_min_acc,
)
from .smoothers import (
    CascadeSpec,
    CascadeState,
    DampedHarmonic,
    Harmonic,
    Rectangular,
    SmootherState,
    Trapezoidal,
    freq_response,
    kernel_duration,
    make_damped_harmonic_params,
    make_harmonic_T,
    make_trapezoidal_params,
    transfer_function,
)

__version__ = "0.1.0"
