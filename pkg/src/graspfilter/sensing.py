"""Measurement models: virtual-spring contact forces, vision, force noise.

The grasped object is modelled as a superquadric rigidly held by two
end-effectors.  Each force sensor reports a constant squeeze force; the
virtual spring compares it against the force expected from the current
orientation estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .so3 import is_rotation
from .superquadric import Superquadric, radial_displacement


@dataclass
class HapticChannel:
    """One gripper arm: spring constant, world position, measured force.

    ``sensor_rotation``, when set, maps the measured force from the sensor
    frame into the object frame before the residual is formed.  It is needed
    for grasps where the sensor frame is not aligned with the object, e.g.
    pinching an edge instead of a face.
    """

    k_c: float
    ee_position_world: np.ndarray
    f_measured: np.ndarray
    sensor_rotation: np.ndarray | None = None

    def __post_init__(self):
        if not self.k_c > 0.0:
            raise ValueError("contact spring constant k_c must be positive")
        self.ee_position_world = np.asarray(self.ee_position_world, dtype=float)
        self.f_measured = np.asarray(self.f_measured, dtype=float)
        if self.sensor_rotation is not None:
            self.sensor_rotation = np.asarray(self.sensor_rotation, dtype=float)
            if not is_rotation(self.sensor_rotation):
                raise ValueError("sensor_rotation must be a rotation matrix")


@dataclass
class VisionMeasurement:
    """Camera pose in the world and object pose in the camera."""

    r_cam_world: np.ndarray
    r_peg_cam: np.ndarray

    def __post_init__(self):
        self.r_cam_world = np.asarray(self.r_cam_world, dtype=float)
        self.r_peg_cam = np.asarray(self.r_peg_cam, dtype=float)
        for name in ("r_cam_world", "r_peg_cam"):
            if not is_rotation(getattr(self, name)):
                raise ValueError(f"{name} must be a rotation matrix")


@dataclass
class ForceNoiseModel:
    """Zero-order-hold Gaussian noise on a measured force.

    A fresh draw is held for ``sample_time`` seconds.  ``seed`` is a stream
    salt: the simulation harness mixes it with the scenario seed before the
    model is used, so distinct arms get independent streams.
    """

    variance: float
    sample_time: float
    seed: int
    mean: float = 0.0

    def __post_init__(self):
        if self.variance < 0.0:
            raise ValueError("variance must be non-negative")
        if not self.sample_time > 0.0:
            raise ValueError("sample_time must be positive")


@lru_cache(maxsize=8192)
def _noise_draw(seed: int, component: int, index: int) -> float:
    """Standard normal draw, a pure function of (seed, component, index)."""
    rng = np.random.default_rng([seed, component, index])
    return float(rng.standard_normal())


def apply_force_noise(f: np.ndarray, model: ForceNoiseModel | None, t: float) -> np.ndarray:
    """Add held Gaussian noise to a force sample at time ``t``.

    Each vector component uses an independent sub-stream derived from
    ``(seed, component)``; the value depends only on the hold interval index
    ``floor(t / sample_time)``, never on call order.  A ``None`` model or a
    zero-mean zero-variance model returns the input unchanged.
    """
    f = np.asarray(f, dtype=float)
    if model is None or (model.variance == 0.0 and model.mean == 0.0):
        return f
    k = int(np.floor(t / model.sample_time + 1e-9))
    std = float(np.sqrt(model.variance))
    return f + np.array(
        [model.mean + std * _noise_draw(model.seed, c, k) for c in range(3)]
    )


def _cross3(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.array([
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ])


def estimated_force(
    sq: Superquadric, r_hat: np.ndarray, ee_position_world: np.ndarray, k_c: float
) -> np.ndarray:
    """Virtual-spring force at an end-effector under the orientation estimate.

    The world position is carried into the object frame by ``r_hat^T`` and the
    spring stretches along the radial displacement from the superquadric
    surface: ``k_c * radial_displacement(sq, r_hat^T @ p)``.  The result
    depends on the estimate only through that object-frame point.
    """
    p_obj = np.asarray(r_hat, dtype=float).T @ np.asarray(ee_position_world, dtype=float)
    return k_c * radial_displacement(sq, p_obj)


def haptic_mismatch(f_e: np.ndarray, f: np.ndarray) -> np.ndarray:
    """Residual ``f_e x f`` between expected and measured force.

    Zero exactly when the two are collinear, which makes the residual
    invariant to the (unknown) grasp squeeze magnitude.
    """
    return _cross3(np.asarray(f_e, dtype=float), np.asarray(f, dtype=float))


def vision_world_rotation(v: VisionMeasurement) -> np.ndarray:
    """Object orientation in the world: ``r_cam_world @ r_peg_cam``."""
    return v.r_cam_world @ v.r_peg_cam


def edge_grasp_force_correction(f_ee: np.ndarray, r_peg_from_ee: np.ndarray) -> np.ndarray:
    """Rotate a sensor-frame force into the object frame: ``r_peg_from_ee @ f_ee``.

    ``r_peg_from_ee`` is typically estimated from the vision pipeline.  Without
    it, an edge-centered grasp can yield a zero residual at a wrong
    orientation and the filter would stall.
    """
    return np.asarray(r_peg_from_ee, dtype=float) @ np.asarray(f_ee, dtype=float)
