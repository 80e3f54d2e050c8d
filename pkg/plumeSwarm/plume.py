"""
Gaussian plume slice

Analytic ground-level concentration of a continuous point source, the
perturbed variant with a sinusoidal modulation along the wind axis, and
normalized sensor readings in [0, 1]. The wind blows along +x and the
plume keeps that orientation; only its location changes between trials.
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterator, Tuple, Union

import numpy as np

from .errors import ConfigError

logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]


@dataclass(frozen=True)
class PlumeParams:
    """
    Source and atmosphere parameters.

    Attributes:
        stack_height: H (m)
        wind_speed: u (m/s)
        emission_rate: Q (kg/s)
        diffusion_rate: K (kg/s)
        perturbed: Apply the sinusoidal modulation
    """

    stack_height: float = 10.0
    wind_speed: float = 50.0
    emission_rate: float = 2.0
    diffusion_rate: float = 1.0
    perturbed: bool = False

    def __post_init__(self):
        for name in ("stack_height", "wind_speed", "emission_rate", "diffusion_rate"):
            value = getattr(self, name)
            if not value > 0:
                raise ConfigError(f"Plume {name} must be positive, got {value}")


@dataclass(frozen=True)
class PlumePose:
    """Placement of the plume in the world frame."""

    peak: Tuple[float, float]
    source: Tuple[float, float]
    orientation: float = 0.0


def unperturbed(x: ArrayLike, y: ArrayLike, params: PlumeParams) -> ArrayLike:
    """
    Concentration of the plume slice in the plume-local frame.

    Q / (2 pi K x) * exp(-u (y^2 + H^2) / (4 K x)) downwind, exactly 0 for
    x <= 0.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    downwind = x > 0
    safe_x = np.where(downwind, x, 1.0)
    H, u, Q, K = params.stack_height, params.wind_speed, params.emission_rate, params.diffusion_rate
    value = Q / (2.0 * np.pi * K * safe_x) * np.exp(-u * (y ** 2 + H ** 2) / (4.0 * K * safe_x))
    result = np.where(downwind, value, 0.0)
    return float(result) if result.ndim == 0 else result


def perturbation_factor(x: ArrayLike) -> ArrayLike:
    factor = 0.8 + 0.2 * np.sin(4.0 * np.asarray(x, dtype=float))
    return float(factor) if np.ndim(factor) == 0 else factor


def perturbed(x: ArrayLike, y: ArrayLike, params: PlumeParams) -> ArrayLike:
    return perturbation_factor(x) * unperturbed(x, y, params)


def peak_location(params: PlumeParams) -> Tuple[float, float]:
    """Centerline maximum of the unperturbed slice: x* = u H^2 / (4 K)."""
    x_star = params.wind_speed * params.stack_height ** 2 / (4.0 * params.diffusion_rate)
    return (x_star, 0.0)


def make_pose(rng: np.random.Generator, takeoff: Tuple[float, float] = (0.0, 0.0),
              radius: float = 100.0, params: PlumeParams = PlumeParams()) -> PlumePose:
    """
    Draw the plume placement for a trial.

    The peak is placed uniformly over the disk of `radius` around the
    takeoff point; the stack sits x* upwind of it.
    """
    if radius < 0:
        raise ConfigError(f"Source radius must be non-negative, got {radius}")
    distance = radius * math.sqrt(rng.random())
    bearing = rng.uniform(0.0, 2.0 * math.pi)
    peak = (takeoff[0] + distance * math.cos(bearing), takeoff[1] + distance * math.sin(bearing))
    x_star, _ = peak_location(params)
    return PlumePose(peak=peak, source=(peak[0] - x_star, peak[1]))


class PlumeField:
    """
    Normalized concentration field placed in the world.

    Readings are the raw concentration divided by its analytic peak value
    and clamped to [0, 1], so the unperturbed peak reads exactly 1.0.
    """

    def __init__(self, params: PlumeParams, pose: PlumePose):
        self.params = params
        self.pose = pose
        x_star, y_star = peak_location(params)
        self.normalization = unperturbed(x_star, y_star, params)
        self._peak = np.array(pose.peak, dtype=float)
        self._peak_local = (x_star, y_star)

    @property
    def peak(self) -> np.ndarray:
        return self._peak.copy()

    def to_local(self, position: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """World (..., 2+) positions to plume-local x, y arrays."""
        position = np.asarray(position, dtype=float)
        x = (position[..., 0] - self._peak[0]) + self._peak_local[0]
        y = (position[..., 1] - self._peak[1]) + self._peak_local[1]
        return x, y

    def raw(self, position: np.ndarray) -> ArrayLike:
        x, y = self.to_local(position)
        if self.params.perturbed:
            return perturbed(x, y, self.params)
        return unperturbed(x, y, self.params)

    def reading(self, position: np.ndarray) -> ArrayLike:
        """Sensor value in [0, 1] at one or many world positions."""
        value = np.clip(np.asarray(self.raw(position)) / self.normalization, 0.0, 1.0)
        return float(value) if value.ndim == 0 else value

    def gradient(self, position: np.ndarray) -> np.ndarray:
        """Analytic gradient of the normalized unperturbed field."""
        x, y = self.to_local(position)
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        p = self.params
        c = unperturbed(x, y, p) / self.normalization
        a = p.wind_speed / (4.0 * p.diffusion_rate)
        safe_x = np.where(x > 0, x, 1.0)
        dx = c * (-1.0 / safe_x + a * (y ** 2 + p.stack_height ** 2) / safe_x ** 2)
        dy = c * (-2.0 * a * y / safe_x)
        return np.stack([np.where(x > 0, dx, 0.0), np.where(x > 0, dy, 0.0)], axis=-1)

    def raster(self, x_range: Tuple[float, float], y_range: Tuple[float, float],
               resolution: float) -> Iterator[Tuple[float, float, float]]:
        """
        Sample the field on a grid of world coordinates.

        Yields:
            (x, y, reading) rows, x varying fastest
        """
        if resolution <= 0:
            raise ConfigError(f"Raster resolution must be positive, got {resolution}")
        xs = np.arange(x_range[0], x_range[1] + resolution / 2.0, resolution)
        ys = np.arange(y_range[0], y_range[1] + resolution / 2.0, resolution)
        for y in ys:
            points = np.column_stack([xs, np.full_like(xs, y)])
            for x, value in zip(xs, self.reading(points)):
                yield float(x), float(y), float(value)
