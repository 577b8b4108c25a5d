"""Rotation algebra on SO(3).

Rotation matrices are plain (3, 3) numpy arrays, vectors are shape (3,).
All functions are pure: inputs are never mutated and no module state exists.
Random sampling takes an explicit ``numpy.random.Generator`` so callers own
reproducibility.
"""

from __future__ import annotations

import numpy as np

_EYE3 = np.eye(3)

#: Entries of a rotation with pitch magnitude above ``asin(1 - GIMBAL_TOL)``
#: make the ZYX Euler decomposition ill conditioned and raise GimbalLockError.
GIMBAL_TOL = 1e-9


class GimbalLockError(ValueError):
    """ZYX Euler angles are not defined for pitch at +/- 90 degrees."""


def hat(w: np.ndarray) -> np.ndarray:
    """Map a 3-vector to the anti-symmetric matrix ``w x``.

    The layout is the standard cross-product operator::

        hat((w1, w2, w3)) = [[  0, -w3,  w2],
                             [ w3,   0, -w1],
                             [-w2,  w1,   0]]

    so that ``hat(w) @ v == cross(w, v)``.
    """
    w = np.asarray(w, dtype=float)
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def vex(m: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Inverse of :func:`hat` for (nearly) anti-symmetric matrices.

    Raises:
        ValueError: if the symmetric part of ``m`` has an entry larger than
            ``tol``; silently discarding it would hide upstream errors.
    """
    m = np.asarray(m, dtype=float)
    sym = 0.5 * (m + m.T)
    worst = float(np.abs(sym).max())
    if worst > tol:
        raise ValueError(
            f"vex expects an anti-symmetric matrix, symmetric part reaches {worst:.3e}"
        )
    a = 0.5 * (m - m.T)
    return np.array([a[2, 1], a[0, 2], a[1, 0]])


def pa_projection(m: np.ndarray) -> np.ndarray:
    """Anti-symmetric projection ``(m - m^T) / 2``."""
    m = np.asarray(m, dtype=float)
    return 0.5 * (m - m.T)


def rodrigues_step(r: np.ndarray, omega: np.ndarray, dt: float) -> np.ndarray:
    """Advance ``r`` by one step of the body-frame rate ``omega`` over ``dt``.

    Computes ``r @ (I + a*dt*W + g*(dt*W)^2)`` with ``W = hat(omega)``,
    ``a = sinc(dt*|omega|)`` and ``g = sinc(dt*|omega|/2)^2 / 2`` (unnormalized
    sinc, ``sinc(0) = 1``).  With the Euclidean norm of ``omega`` this equals
    the closed-form exponential ``r @ expm(dt*W)``, so the output is a rotation
    matrix up to floating-point rounding and no renormalization is needed.
    ``|omega| = 0`` returns a copy of ``r``.
    """
    r = np.asarray(r, dtype=float)
    omega = np.asarray(omega, dtype=float)
    x = dt * float(np.sqrt(omega[0] ** 2 + omega[1] ** 2 + omega[2] ** 2))
    if x == 0.0:
        return r.copy()
    alpha = np.sin(x) / x
    half = np.sin(0.5 * x) / (0.5 * x)
    gamma = 0.5 * half * half
    a = hat(omega * dt)
    return r @ (_EYE3 + alpha * a + gamma * (a @ a))


def rotation_error(r_hat: np.ndarray, r_meas: np.ndarray) -> np.ndarray:
    """Relative rotation ``r_hat^T @ r_meas`` between estimate and measurement."""
    return np.asarray(r_hat, dtype=float).T @ np.asarray(r_meas, dtype=float)


def trace_error(r_true: np.ndarray, r_hat: np.ndarray) -> float:
    """Scalar error ``trace(I - r_true^T @ r_hat)``, in [0, 4].

    0 iff the rotations are equal; 4 at a half-turn apart.
    """
    r_true = np.asarray(r_true, dtype=float)
    r_hat = np.asarray(r_hat, dtype=float)
    # trace(A^T B) is the elementwise product sum, cheaper than the matmul
    val = 3.0 - float(np.sum(r_true * r_hat))
    return min(max(val, 0.0), 4.0)


def rotation_angle(r: np.ndarray) -> float:
    """Geodesic angle of a rotation, in [0, pi]."""
    r = np.asarray(r, dtype=float)
    sx = 0.5 * (r[2, 1] - r[1, 2])
    sy = 0.5 * (r[0, 2] - r[2, 0])
    sz = 0.5 * (r[1, 0] - r[0, 1])
    s = float(np.sqrt(sx * sx + sy * sy + sz * sz))
    c = 0.5 * (float(r[0, 0] + r[1, 1] + r[2, 2]) - 1.0)
    return float(np.arctan2(s, c))


def from_euler_zyx(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Rotation from ZYX Euler angles: ``rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)``."""
    return rot_z(yaw) @ rot_y(pitch) @ rot_x(roll)


def to_euler_zyx(r: np.ndarray) -> tuple[float, float, float]:
    """Decompose a rotation into ZYX Euler angles ``(yaw, pitch, roll)``.

    Raises:
        GimbalLockError: when pitch is within numerical reach of +/- 90
            degrees (``|r[2,0]| > 1 - GIMBAL_TOL``); yaw and roll are not
            separable there, callers may fall back to :func:`to_axis_angle`.
    """
    r = np.asarray(r, dtype=float)
    r31 = float(r[2, 0])
    if abs(r31) > 1.0 - GIMBAL_TOL:
        raise GimbalLockError(f"pitch at gimbal lock, |r31| = {abs(r31):.12f}")
    yaw = float(np.arctan2(r[1, 0], r[0, 0]))
    pitch = float(-np.arcsin(r31))
    roll = float(np.arctan2(r[2, 1], r[2, 2]))
    return yaw, pitch, roll


def to_axis_angle(r: np.ndarray) -> tuple[np.ndarray, float]:
    """Decompose a rotation into a unit axis and an angle in [0, pi].

    The identity returns ``((1, 0, 0), 0)`` by convention.  At a half turn the
    axis sign is ambiguous; the axis whose first nonzero component is positive
    is returned.
    """
    r = np.asarray(r, dtype=float)
    sx = 0.5 * (r[2, 1] - r[1, 2])
    sy = 0.5 * (r[0, 2] - r[2, 0])
    sz = 0.5 * (r[1, 0] - r[0, 1])
    s = float(np.sqrt(sx * sx + sy * sy + sz * sz))
    c = 0.5 * (float(r[0, 0] + r[1, 1] + r[2, 2]) - 1.0)
    angle = float(np.arctan2(s, c))
    if s > 1e-8:
        return np.array([sx, sy, sz]) / s, angle
    if c > 0.0:
        # angle ~ 0, direction information lost
        return np.array([1.0, 0.0, 0.0]), angle
    # near a half turn: (r + I)/2 approaches the outer product axis*axis^T
    b = 0.5 * (r + _EYE3)
    i = int(np.argmax(np.diag(b)))
    axis = b[:, i] / np.sqrt(b[i, i])
    axis = axis / np.linalg.norm(axis)
    for comp in axis:
        if comp != 0.0:
            if comp < 0.0:
                axis = -axis
            break
    return axis, angle


def from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotation about a (non-zero) axis by ``angle`` radians."""
    axis = np.asarray(axis, dtype=float)
    n = float(np.linalg.norm(axis))
    if n == 0.0:
        raise ValueError("axis must be non-zero")
    return rodrigues_step(_EYE3, axis * (angle / n), 1.0)


def rot_x(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _haar_angle(u: float) -> float:
    """Invert the rotation-angle CDF ``(t - sin t) / pi`` by bisection.

    64 halvings of [0, pi] take the bracket below 1 ulp, so the result is
    deterministic and accurate to floating-point resolution.
    """
    lo, hi = 0.0, np.pi
    target = u * np.pi
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        if mid - np.sin(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Draw a rotation from the uniform (Haar) distribution on SO(3).

    The axis comes from a normalized Gaussian triple and the angle from the
    density proportional to ``1 - cos(angle)`` on [0, pi].
    """
    v = rng.standard_normal(3)
    n = float(np.linalg.norm(v))
    while n < 1e-12:
        v = rng.standard_normal(3)
        n = float(np.linalg.norm(v))
    angle = _haar_angle(float(rng.random()))
    return from_axis_angle(v / n, angle)


def orthonormality_defect(r: np.ndarray) -> float:
    """Frobenius norm of ``r^T r - I``."""
    r = np.asarray(r, dtype=float)
    return float(np.linalg.norm(r.T @ r - _EYE3))


def is_rotation(r: np.ndarray, tol: float = 1e-9) -> bool:
    """True when ``r`` is 3x3, orthonormal within ``tol`` and right handed."""
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3) or not np.all(np.isfinite(r)):
        return False
    return orthonormality_defect(r) <= tol and float(np.linalg.det(r)) > 0.0


def project_to_so3(r: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix by polar decomposition (Frobenius sense)."""
    u, _, vt = np.linalg.svd(np.asarray(r, dtype=float))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt
