"""
Least-squares fits of spatially dispersed readings.

A plane val = b0 + b1 x + b2 y through the samples of one waypoint gives
the basic slope estimate. Samples pooled over a few waypoints support a
local polynomial model of the log reading, whose gradient and curvature
drive a trust-region step.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

logger = logging.getLogger(__name__)

# Normal matrices above this condition number are treated as collinear
CONDITION_LIMIT = 1e8
# Slopes below this magnitude count as zero
ZERO_SLOPE = 1e-9
# Design matrices of the log model above this condition number are degenerate
MODEL_CONDITION_LIMIT = 1e6
# Fewest positive samples for each degree of the log model
MODEL_MIN_SAMPLES = {3: 15, 2: 9}


@dataclass(frozen=True)
class Sample:
    x: float
    y: float
    val: float


@dataclass(frozen=True)
class PlaneFit:
    """
    Fitted plane val = b0 + b1 x + b2 y.

    Attributes:
        rank_deficient: Fewer than three samples or collinear positions;
            the slopes must not be used for navigation
    """

    b0: float
    b1: float
    b2: float
    rank_deficient: bool = False

    @property
    def slope(self) -> np.ndarray:
        return np.array([self.b1, self.b2])

    def predict(self, x: Union[float, np.ndarray], y: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        return self.b0 + self.b1 * x + self.b2 * y


@dataclass(frozen=True)
class LocalModel:
    """
    Polynomial model of the log reading around `center`.

    Only the Taylor terms at the center are kept: the gradient and the
    Hessian of log(val). Since the log is monotone its gradient points the
    same way as the gradient of the readings.

    Attributes:
        center: Expansion point (m)
        gradient: d log(val) / d(x, y) at the center
        hessian: Second derivatives of log(val) at the center
        gradient_covariance: Sampling covariance of the gradient, NaN when
            the fit leaves no residual degrees of freedom
        degree: Polynomial degree that was fitted
        samples: Number of positive samples used
        rank_deficient: Too few samples or degenerate positions
    """

    center: np.ndarray
    gradient: np.ndarray
    hessian: np.ndarray
    gradient_covariance: np.ndarray
    degree: int
    samples: int
    rank_deficient: bool = False

    @property
    def slope(self) -> np.ndarray:
        return self.gradient

    def slope_error(self, direction: np.ndarray) -> float:
        """Standard error of the slope along a unit direction."""
        direction = np.asarray(direction, dtype=float)
        variance = float(direction @ self.gradient_covariance @ direction)
        return math.sqrt(variance) if variance >= 0 else math.nan

    @classmethod
    def degenerate(cls, center: Sequence[float], degree: int, samples: int) -> "LocalModel":
        nan = np.full((2, 2), math.nan)
        return cls(np.asarray(center, dtype=float), np.zeros(2), np.zeros((2, 2)), nan,
                   degree, samples, rank_deficient=True)


def _as_array(samples: Union[Sequence[Sample], np.ndarray]) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        data = np.asarray(samples, dtype=float)
    else:
        data = np.array([[s.x, s.y, s.val] for s in samples], dtype=float)
    return data.reshape(-1, 3)


def fit_plane(samples: Union[Sequence[Sample], np.ndarray]) -> PlaneFit:
    """
    Least-squares plane through the samples.

    Solves the normal equations A^T A b = A^T y with an SVD-based solver.
    Positions are centered first, so the condition check measures how
    collinear the drones are rather than how far they are from the origin.

    Args:
        samples: Sample records or an (n, 3) array of x, y, val

    Returns:
        The fitted plane

    Raises:
        ValueError: If no samples are given
    """
    data = _as_array(samples)
    if len(data) == 0:
        raise ValueError("Cannot fit a plane to zero samples")

    center = data[:, :2].mean(axis=0)
    xs = data[:, 0] - center[0]
    ys = data[:, 1] - center[1]
    A = np.column_stack([np.ones(len(data)), xs, ys])
    normal = A.T @ A
    rhs = A.T @ data[:, 2]

    coeffs, _, rank, _ = np.linalg.lstsq(normal, rhs, rcond=None)
    rank_deficient = len(data) < 3 or rank < 3 or np.linalg.cond(normal) > CONDITION_LIMIT

    b0c, b1, b2 = (float(c) for c in coeffs)
    b0 = b0c - b1 * center[0] - b2 * center[1]
    return PlaneFit(b0=float(b0), b1=b1, b2=b2, rank_deficient=bool(rank_deficient))


def _monomials(degree: int) -> List[Tuple[int, int]]:
    """Exponents (i, j) of x^i y^j ordered by total degree: 1, x, y, x^2, xy, y^2, ..."""
    return [(total - j, j) for total in range(degree + 1) for j in range(total + 1)]


def fit_local_model(samples: Union[Sequence[Sample], np.ndarray], center: Sequence[float],
                    degree: Optional[int] = None) -> LocalModel:
    """
    Least-squares polynomial fit of log(val) around `center`.

    Non-positive readings carry no log and are dropped. Offsets from the
    center are scaled to unit RMS before the monomials are built, and the
    design matrix is solved by SVD directly so its condition number can be
    checked. Without an explicit degree the highest one the sample count
    supports is used, falling back to quadratic when the cubic design is
    degenerate.

    Args:
        samples: Sample records or an (n, 3) array of x, y, val
        center: Expansion point of the returned Taylor terms
        degree: 2 or 3, or None to choose from the sample count

    Returns:
        The local model; `rank_deficient` is set when no fit was possible
    """
    data = _as_array(samples)
    data = data[data[:, 2] > 0]
    center = np.asarray(center, dtype=float)
    if degree is None:
        degrees = [d for d in (3, 2) if len(data) >= MODEL_MIN_SAMPLES[d]]
    else:
        if degree not in MODEL_MIN_SAMPLES:
            raise ValueError(f"Model degree must be 2 or 3, got {degree}")
        degrees = [degree]

    for d in degrees:
        model = _fit_degree(data, center, d)
        if not model.rank_deficient:
            return model
    return LocalModel.degenerate(center, degrees[-1] if degrees else 2, len(data))


def _fit_degree(data: np.ndarray, center: np.ndarray, degree: int) -> LocalModel:
    terms = _monomials(degree)
    if len(data) < len(terms):
        return LocalModel.degenerate(center, degree, len(data))

    offsets = data[:, :2] - center
    scale = float(np.sqrt(np.mean(np.sum(offsets ** 2, axis=1))))
    if scale <= ZERO_SLOPE:
        return LocalModel.degenerate(center, degree, len(data))
    u = offsets / scale
    A = np.column_stack([u[:, 0] ** i * u[:, 1] ** j for i, j in terms])
    logs = np.log(data[:, 2])

    U, S, Vt = np.linalg.svd(A, full_matrices=False)
    if S[-1] <= 0 or S[0] > MODEL_CONDITION_LIMIT * S[-1]:
        return LocalModel.degenerate(center, degree, len(data))
    coeffs = Vt.T @ ((U.T @ logs) / S)

    dof = len(data) - len(terms)
    if dof > 0:
        variance = float(np.sum((A @ coeffs - logs) ** 2)) / dof
        unscaled = (Vt.T / S ** 2) @ Vt
        covariance = variance * unscaled[1:3, 1:3] / scale ** 2
    else:
        covariance = np.full((2, 2), math.nan)

    gradient = coeffs[1:3] / scale
    hessian = np.array([[2.0 * coeffs[3], coeffs[4]], [coeffs[4], 2.0 * coeffs[5]]]) / scale ** 2
    return LocalModel(center, gradient, hessian, covariance, degree, len(data))


def trust_region_step(gradient: Sequence[float], hessian: np.ndarray, radius: float) -> np.ndarray:
    """
    Maximizer of g.s + s.H.s / 2 over |s| <= radius.

    The unconstrained Newton step is returned when the model is concave and
    its maximum lies inside the radius. Otherwise the step sits on the
    boundary at s = (mu I - H)^-1 g, with mu found by root bracketing on
    |s(mu)| = radius. With a vanishing gradient along the most convex
    direction the step is completed along that direction.
    """
    if radius <= 0:
        raise ValueError(f"Trust radius must be positive, got {radius}")
    g = np.asarray(gradient, dtype=float)
    curvature = -np.asarray(hessian, dtype=float)
    eigenvalues, eigenvectors = np.linalg.eigh(0.5 * (curvature + curvature.T))
    gamma = eigenvectors.T @ g
    lowest = float(eigenvalues[0])

    if lowest > 0:
        newton = eigenvectors @ (gamma / eigenvalues)
        if np.linalg.norm(newton) <= radius:
            return newton

    def excess(mu: float) -> float:
        return float(np.linalg.norm(gamma / (eigenvalues + mu))) - radius

    spread = float(np.abs(eigenvalues).max()) + float(np.linalg.norm(g)) / radius
    floor = max(0.0, -lowest)
    lo = floor + 1e-12 * max(spread, ZERO_SLOPE) if lowest <= 0 else 0.0
    if excess(lo) <= 0:
        # Only reachable when the gradient has no component along the lowest eigenvector
        step = eigenvectors @ (gamma / (eigenvalues + lo))
        extra = math.sqrt(max(radius ** 2 - float(step @ step), 0.0))
        along = eigenvectors[:, 0]
        return step + (extra if g @ along >= 0 else -extra) * along

    hi = floor + spread
    mu = brentq(excess, lo, hi, xtol=1e-14 * max(spread, ZERO_SLOPE), rtol=1e-12)
    step = eigenvectors @ (gamma / (eigenvalues + mu))
    return step * (radius / float(np.linalg.norm(step)))


def ridge_axis(hessian: np.ndarray) -> np.ndarray:
    """Unit eigenvector of the least concave curvature, the direction a ridge runs along."""
    _, eigenvectors = np.linalg.eigh(0.5 * (np.asarray(hessian, dtype=float) + np.asarray(hessian).T))
    return eigenvectors[:, -1]


def ascent_direction(fit: Union[PlaneFit, LocalModel]) -> Optional[np.ndarray]:
    """Unit vector along the fitted slope, or None when it is unusable."""
    if fit.rank_deficient:
        return None
    slope = np.asarray(fit.slope, dtype=float)
    magnitude = float(np.linalg.norm(slope))
    if magnitude <= ZERO_SLOPE:
        return None
    return slope / magnitude


def pairwise_direction(a: Sample, b: Sample) -> Optional[np.ndarray]:
    """Unit vector from the lower to the higher of two samples."""
    delta = np.array([b.x - a.x, b.y - a.y])
    distance = float(np.linalg.norm(delta))
    difference = b.val - a.val
    if distance <= ZERO_SLOPE or abs(difference) <= ZERO_SLOPE:
        return None
    return np.sign(difference) * delta / distance
