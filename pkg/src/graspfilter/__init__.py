"""Complementary orientation filter for grasped rigid bodies.

Fuses virtual-spring force residuals from two end-effectors with an optional
vision rotation measurement into an estimate that evolves on the rotation
group, plus a scenario harness and CLI to exercise it.
"""

from .filtering import (
    CorrectionBreakdown,
    FilterGains,
    FilterState,
    correction,
    correction_terms,
    filter_step,
    sigma,
    unstable_set_distance,
)
from .scenarios import (
    ComparisonReport,
    ConfigError,
    MalformedConfigError,
    MonteCarloResult,
    PRESET_NAMES,
    RunSummary,
    ScenarioConfig,
    TrajectoryRecord,
    VisionConfig,
    compare_to_reference,
    config_digest,
    config_from_dict,
    config_to_dict,
    monte_carlo,
    preset,
    run,
    seed_sweep,
    validate_config,
)
from .sensing import (
    ForceNoiseModel,
    HapticChannel,
    VisionMeasurement,
    apply_force_noise,
    edge_grasp_force_correction,
    estimated_force,
    haptic_mismatch,
    vision_world_rotation,
)
from .so3 import (
    GimbalLockError,
    from_axis_angle,
    from_euler_zyx,
    hat,
    is_rotation,
    orthonormality_defect,
    pa_projection,
    project_to_so3,
    random_rotation,
    rodrigues_step,
    rot_x,
    rot_y,
    rot_z,
    rotation_angle,
    rotation_error,
    to_axis_angle,
    to_euler_zyx,
    trace_error,
    vex,
)
from .superquadric import (
    RadialSingularityError,
    Superquadric,
    SuperquadricFitError,
    fit_superquadric,
    implicit_value,
    inside_outside,
    load_point_cloud,
    radial_displacement,
    sample_surface,
    save_point_cloud,
)

__version__ = "0.1.0"
