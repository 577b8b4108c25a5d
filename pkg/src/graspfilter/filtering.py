"""Complementary orientation filter on SO(3).

The estimate integrates a body-frame correction rate built from two haptic
residuals and, when a vision measurement is available, the anti-symmetric part
of the rotation error against it:

    omega = beta1 * f_h1 + beta2 * f_h2 + k_p * sigma

Negative betas drive each expected force toward its measured direction; the
vision gain k_p pulls the estimate toward the vision rotation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .sensing import HapticChannel, VisionMeasurement, estimated_force, haptic_mismatch, vision_world_rotation
from .so3 import pa_projection, rodrigues_step, rotation_error, vex
from .superquadric import Superquadric

logger = logging.getLogger(__name__)

#: Warn when the rotation error comes this close (in trace distance) to the
#: set of half-turn errors, where the vision pull vanishes.
UNSTABLE_WARN_TOL = 1e-3

_ZERO3 = np.zeros(3)


@dataclass(frozen=True)
class FilterGains:
    """Correction weights.  ``k_p`` must be non-negative.

    ``k_p = 0`` runs the filter on haptic residuals alone; at least one weight
    must be nonzero or the estimate could never move.
    """

    beta1: float = -1.0
    beta2: float = -1.0
    k_p: float = 0.0

    def __post_init__(self):
        if self.k_p < 0.0:
            raise ValueError("vision gain k_p must be non-negative")
        if self.beta1 == 0.0 and self.beta2 == 0.0 and self.k_p == 0.0:
            raise ValueError("at least one of beta1, beta2, k_p must be nonzero")


@dataclass
class FilterState:
    """Current estimate, simulation time and fixed step size."""

    r_hat: np.ndarray
    t: float
    dt: float

    def __post_init__(self):
        self.r_hat = np.asarray(self.r_hat, dtype=float)
        if not self.dt > 0.0:
            raise ValueError("step size dt must be positive")


@dataclass
class CorrectionBreakdown:
    """Per-step correction terms, kept for logging and diagnostics."""

    f_h1: np.ndarray
    f_h2: np.ndarray
    sigma: np.ndarray
    omega: np.ndarray


def sigma(r_hat: np.ndarray, r_vision_world: np.ndarray) -> np.ndarray:
    """Vision correction vector: ``vex(Pa(r_hat^T @ r_vision_world))``.

    Its norm equals ``sin`` of the geodesic error angle, so it vanishes both
    at agreement and at half-turn errors.
    """
    return vex(pa_projection(rotation_error(r_hat, r_vision_world)))


def correction(
    f_h1: np.ndarray, f_h2: np.ndarray, sigma_vec: np.ndarray, gains: FilterGains
) -> np.ndarray:
    """Weighted sum of the correction terms."""
    return (
        gains.beta1 * np.asarray(f_h1, dtype=float)
        + gains.beta2 * np.asarray(f_h2, dtype=float)
        + gains.k_p * np.asarray(sigma_vec, dtype=float)
    )


def correction_terms(
    r_hat: np.ndarray,
    sq: Superquadric,
    channels: Sequence[HapticChannel],
    vision: VisionMeasurement | None,
    gains: FilterGains,
) -> CorrectionBreakdown:
    """Evaluate all correction terms at the given estimate.

    Raises:
        ValueError: ``k_p > 0`` with no vision measurement is a configuration
            error, not a silent zero, and unlike the haptic-only case the
            absence of the term would change which orientations are
            equilibria.
    """
    if gains.k_p > 0.0 and vision is None:
        raise ValueError("k_p > 0 requires a vision measurement")
    if len(channels) != 2:
        raise ValueError(f"expected exactly two haptic channels, got {len(channels)}")
    mismatches = []
    for ch in channels:
        f = ch.f_measured
        if ch.sensor_rotation is not None:
            f = ch.sensor_rotation @ f
        f_e = estimated_force(sq, r_hat, ch.ee_position_world, ch.k_c)
        mismatches.append(haptic_mismatch(f_e, f))
    sig = sigma(r_hat, vision_world_rotation(vision)) if vision is not None else _ZERO3
    omega = correction(mismatches[0], mismatches[1], sig, gains)
    return CorrectionBreakdown(mismatches[0], mismatches[1], sig, omega)


def filter_step(
    state: FilterState,
    sq: Superquadric,
    channels: Sequence[HapticChannel],
    vision: VisionMeasurement | None,
    gains: FilterGains,
) -> tuple[FilterState, CorrectionBreakdown]:
    """Advance the estimate by one fixed step.

    Returns the new state together with the correction terms that produced
    it.  A zero correction reproduces the input rotation exactly.
    """
    br = correction_terms(state.r_hat, sq, channels, vision, gains)
    r_next = rodrigues_step(state.r_hat, br.omega, state.dt)
    return FilterState(r_next, state.t + state.dt, state.dt), br


def unstable_set_distance(r_err: np.ndarray) -> float:
    """Trace distance ``trace(r_err) + 1`` from the set of half-turn errors.

    Zero on the set itself, 4 at zero error.  Logs a warning below
    ``UNSTABLE_WARN_TOL`` since the filter can linger near a half-turn error.
    """
    r_err = np.asarray(r_err, dtype=float)
    d = float(r_err[0, 0] + r_err[1, 1] + r_err[2, 2]) + 1.0
    if d < UNSTABLE_WARN_TOL:
        logger.warning("rotation error within %.1e of the unstable set", d)
    return d
