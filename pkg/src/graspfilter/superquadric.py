"""Superquadric surfaces: implicit geometry, radial distance, sampling, fitting.

A superquadric is described by three semi-axes ``(ax, ay, az)`` and two shape
exponents ``(eps1, eps2)``.  ``eps1 = eps2 = 1`` gives an ellipsoid, values
toward 0 give box-like shapes, values toward 2 give pinched ones.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

#: Exponent range accepted for fitting.  Values outside are clamped before the
#: solve; the analytic operations accept the full (0, 2] range.
FIT_EPS_MIN = 0.1
FIT_EPS_MAX = 2.0

_FIT_AXIS_BOUNDS = (1e-3, 1e2)


class RadialSingularityError(ValueError):
    """Radial displacement is undefined for points at the origin."""


class SuperquadricFitError(RuntimeError):
    """Fit did not converge.  ``best`` carries the best parameters seen, if any."""

    def __init__(self, message: str, best: "Superquadric | None" = None):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class Superquadric:
    """Shape parameters of one superquadric.

    ax, ay, az: semi-axis lengths, strictly positive.
    eps1: north-south shape exponent, in (0, 2].
    eps2: east-west shape exponent, in (0, 2].
    """

    ax: float
    ay: float
    az: float
    eps1: float
    eps2: float

    def __post_init__(self):
        for name in ("ax", "ay", "az"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"semi-axis {name} must be positive")
        for name in ("eps1", "eps2"):
            val = getattr(self, name)
            if not (0.0 < val <= 2.0):
                raise ValueError(f"exponent {name} must lie in (0, 2], got {val}")


def implicit_value(sq: Superquadric, p: np.ndarray) -> float:
    """Implicit surface function: negative inside, zero on the surface, positive outside.

    Component magnitudes are taken before the fractional powers so the value
    is defined in all octants.
    """
    p = np.asarray(p, dtype=float)
    x = abs(p[0]) / sq.ax
    y = abs(p[1]) / sq.ay
    z = abs(p[2]) / sq.az
    return float(
        (x ** (2.0 / sq.eps2) + y ** (2.0 / sq.eps2)) ** (sq.eps2 / sq.eps1)
        + z ** (2.0 / sq.eps1)
        - 1.0
    )


def inside_outside(sq: Superquadric, p: np.ndarray) -> float:
    """Inside-outside value ``implicit_value + 1``: below 1 inside, 1 on the surface."""
    return implicit_value(sq, p) + 1.0


def radial_displacement(sq: Superquadric, p: np.ndarray) -> np.ndarray:
    """Displacement from the surface to ``p`` along the ray from the origin.

    Returns ``p * (1 - F**(-eps1/2))`` with ``F`` the inside-outside value.
    Because ``F`` scales as ``t**(2/eps1)`` along the ray ``t*p``, the result
    is exactly the vector from the ray-surface intersection to ``p``: outward
    for points outside the surface, inward for points inside, and its norm is
    the exact radial distance.

    Raises:
        RadialSingularityError: for ``|p| <= 1e-9``; the ray is undefined.
    """
    p = np.asarray(p, dtype=float)
    if float(np.linalg.norm(p)) <= 1e-9:
        raise RadialSingularityError("point too close to the origin for a radial ray")
    f = inside_outside(sq, p)
    return p * (1.0 - f ** (-sq.eps1 / 2.0))


def _signed_pow(v: np.ndarray, e: float) -> np.ndarray:
    return np.sign(v) * np.abs(v) ** e


def sample_surface(sq: Superquadric, n: int, rng: np.random.Generator) -> np.ndarray:
    """Sample ``n`` surface points via the angle parametrization.

    Latitude is drawn uniformly from [-pi/2, pi/2] and longitude from
    [-pi, pi]; signed powers of the angle cosines/sines map them onto the
    surface.  Every returned point satisfies ``|implicit_value| < 1e-9``.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    eta = rng.uniform(-0.5 * np.pi, 0.5 * np.pi, n)
    omega = rng.uniform(-np.pi, np.pi, n)
    ce = _signed_pow(np.cos(eta), sq.eps1)
    se = _signed_pow(np.sin(eta), sq.eps1)
    cw = _signed_pow(np.cos(omega), sq.eps2)
    sw = _signed_pow(np.sin(omega), sq.eps2)
    return np.column_stack((sq.ax * ce * cw, sq.ay * ce * sw, sq.az * se))


def _inside_outside_batch(params: np.ndarray, pts: np.ndarray) -> np.ndarray:
    ax, ay, az, e1, e2 = params
    x = np.abs(pts[:, 0]) / ax
    y = np.abs(pts[:, 1]) / ay
    z = np.abs(pts[:, 2]) / az
    return (x ** (2.0 / e2) + y ** (2.0 / e2)) ** (e2 / e1) + z ** (2.0 / e1)


def fit_superquadric(
    points: np.ndarray,
    initial: Superquadric | None = None,
    max_nfev: int = 2000,
) -> Superquadric:
    """Recover shape parameters from a point cloud by local least squares.

    Minimizes the sum of squared ``(F**eps1 - 1) * sqrt(ax*ay*az)`` residuals
    with a bounded trust-region solver using finite-difference gradients.  The
    initial guess defaults to the per-axis extents of the cloud with unit
    exponents and is clamped into the fitting bounds.

    Raises:
        ValueError: fewer than 20 points, or wrong shape.
        SuperquadricFitError: degenerate cloud (rank below 3) or solver
            failure; ``best`` holds the best parameters reached, if any.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("point cloud must have shape (n, 3)")
    if pts.shape[0] < 20:
        raise ValueError(f"need at least 20 points, got {pts.shape[0]}")
    sv = np.linalg.svd(pts - pts.mean(axis=0), compute_uv=False)
    if sv[2] <= 1e-9 * max(sv[0], 1e-30):
        raise SuperquadricFitError(
            "degenerate point cloud: points are collinear, coplanar or identical"
        )

    if initial is None:
        half = np.abs(pts).max(axis=0)
        initial = Superquadric(
            max(half[0], 1e-3), max(half[1], 1e-3), max(half[2], 1e-3), 1.0, 1.0
        )
    lo = np.array([_FIT_AXIS_BOUNDS[0]] * 3 + [FIT_EPS_MIN] * 2)
    hi = np.array([_FIT_AXIS_BOUNDS[1]] * 3 + [FIT_EPS_MAX] * 2)
    x0 = np.clip(
        np.array([initial.ax, initial.ay, initial.az, initial.eps1, initial.eps2]),
        lo,
        hi,
    )

    def residuals(x: np.ndarray) -> np.ndarray:
        f = _inside_outside_batch(x, pts)
        return (f ** x[3] - 1.0) * np.sqrt(x[0] * x[1] * x[2])

    result = least_squares(
        residuals, x0, bounds=(lo, hi), method="trf", max_nfev=max_nfev
    )
    best = Superquadric(*(float(v) for v in result.x))
    if not result.success:
        raise SuperquadricFitError(
            f"fit did not converge within {max_nfev} evaluations: {result.message}",
            best=best,
        )
    return best


def load_point_cloud(path) -> np.ndarray:
    """Read a cloud of whitespace-separated xyz triples, one point per line."""
    pts = np.atleast_2d(np.loadtxt(path, dtype=float))
    if pts.shape[1] != 3:
        raise ValueError(f"expected 3 columns in {path}, got {pts.shape[1]}")
    return pts


def save_point_cloud(path, points: np.ndarray) -> None:
    """Write points as whitespace-separated xyz triples, one per line."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError("point cloud must have shape (n, 3)")
    np.savetxt(path, pts, fmt="%.17g")
