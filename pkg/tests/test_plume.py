import sys
import os
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

# Add the parent directory to sys.path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from plumeSwarm.errors import ConfigError
from plumeSwarm.plume import (PlumeField, PlumeParams, PlumePose, make_pose, peak_location,
                              perturbation_factor, perturbed, unperturbed)

PARAMS = PlumeParams()


def _field(peak=(0.0, 0.0), params=PARAMS):
    x_star, _ = peak_location(params)
    return PlumeField(params, PlumePose(peak=peak, source=(peak[0] - x_star, peak[1])))


def test_params_validation():
    """Every physical constant must be positive."""
    with pytest.raises(ConfigError):
        PlumeParams(wind_speed=0.0)
    with pytest.raises(ConfigError):
        PlumeParams(stack_height=-1.0)


def test_unperturbed_examples():
    """Ground-level slice values at a few points."""
    assert unperturbed(-5.0, 0.0, PARAMS) == 0.0
    assert unperturbed(0.0, 0.0, PARAMS) == 0.0
    assert unperturbed(1250.0, 0.0, PARAMS) == pytest.approx(1.0 / (1250.0 * math.pi * math.e), abs=1e-12)
    assert unperturbed(1250.0, 10.0, PARAMS) < unperturbed(1250.0, 0.0, PARAMS)


def test_peak_location():
    """The centerline maximum sits u H^2 / 4K downwind."""
    assert peak_location(PARAMS) == (1250.0, 0.0)
    assert peak_location(PlumeParams(stack_height=20.0))[0] == pytest.approx(4 * 1250.0)


def test_peak_location_matches_grid_search():
    """A fine grid search along the centerline finds the same maximum."""
    xs = np.arange(1240.0, 1260.0, 0.01)
    values = unperturbed(xs, np.zeros_like(xs), PARAMS)
    assert xs[np.argmax(values)] == pytest.approx(1250.0, abs=0.01)


def test_centerline_is_unimodal():
    """Readings rise towards the peak and fall beyond it."""
    up = np.linspace(10.0, 1250.0, 5000)
    down = np.linspace(1250.0, 20000.0, 5000)
    assert np.all(np.diff(unperturbed(up, np.zeros_like(up), PARAMS)) > 0)
    assert np.all(np.diff(unperturbed(down, np.zeros_like(down), PARAMS)) < 0)


def test_perturbation_factor_examples():
    """The sinusoidal modulation spans [0.6, 1]."""
    assert perturbation_factor(math.pi / 8) == pytest.approx(1.0)
    assert perturbation_factor(3 * math.pi / 8) == pytest.approx(0.6)
    xs = np.linspace(-100.0, 100.0, 10001)
    factors = perturbation_factor(xs)
    assert factors.min() >= 0.6 - 1e-12
    assert factors.max() <= 1.0 + 1e-12


def test_perturbed_is_exact_product():
    """The perturbed slice is the factor times the smooth slice, bit for bit."""
    rng = np.random.default_rng(3)
    xs = rng.uniform(-10.0, 3000.0, 1000)
    ys = rng.uniform(-50.0, 50.0, 1000)
    assert np.array_equal(perturbed(xs, ys, PARAMS), perturbation_factor(xs) * unperturbed(xs, ys, PARAMS))


def test_reading_examples():
    """Normalized readings at the peak, upwind and under perturbation."""
    field = _field(peak=(12.0, -7.0))
    assert field.reading((12.0, -7.0)) == pytest.approx(1.0)
    assert field.reading((12.0 - 2000.0, -7.0)) == 0.0
    assert isinstance(field.reading((0.0, 0.0)), float)

    bumpy = _field(peak=(12.0, -7.0), params=PlumeParams(perturbed=True))
    rng = np.random.default_rng(5)
    points = rng.uniform(-200.0, 200.0, size=(500, 2))
    assert np.all(bumpy.reading(points) <= field.reading(points) + 1e-15)


@settings(max_examples=200, deadline=None)
@given(x=st.floats(-5000.0, 5000.0), y=st.floats(-5000.0, 5000.0), bumpy=st.booleans())
def test_readings_stay_in_unit_interval(x, y, bumpy):
    """Readings are clamped to [0, 1] and deterministic."""
    field = _field(peak=(3.0, 4.0), params=PlumeParams(perturbed=bumpy))
    value = field.reading((x, y))
    assert 0.0 <= value <= 1.0
    assert field.reading((x, y)) == value


def test_gradient_matches_finite_differences():
    """The analytic gradient agrees with central differences."""
    field = _field()
    h = 1e-4
    for point in [(-30.0, 2.0), (25.0, -4.0), (-200.0, 10.0)]:
        p = np.array(point)
        numeric = [
            (field.reading(p + [h, 0.0]) - field.reading(p - [h, 0.0])) / (2 * h),
            (field.reading(p + [0.0, h]) - field.reading(p - [0.0, h])) / (2 * h),
        ]
        assert field.gradient(p) == pytest.approx(numeric, rel=1e-5, abs=1e-12)


def test_make_pose_examples():
    """Peaks are uniform over the disk and the stack sits x* upwind."""
    rng = np.random.default_rng(11)
    distances = []
    for _ in range(100000):
        pose = make_pose(rng)
        distances.append(math.hypot(*pose.peak))
    assert max(distances) <= 100.0
    assert np.mean(distances) == pytest.approx(200.0 / 3.0, abs=1.0)

    pose = make_pose(np.random.default_rng(0), takeoff=(5.0, 6.0), radius=0.0)
    assert pose.peak == (5.0, 6.0)
    assert pose.source == (5.0 - 1250.0, 6.0)
    assert pose.orientation == 0.0

    assert make_pose(np.random.default_rng(9)) == make_pose(np.random.default_rng(9))
    with pytest.raises(ConfigError):
        make_pose(np.random.default_rng(0), radius=-1.0)


def test_raster():
    """The raster walks x fastest over the inclusive ranges."""
    field = _field()
    rows = list(field.raster((-1.0, 1.0), (0.0, 1.0), 1.0))
    assert [(x, y) for x, y, _ in rows] == [(-1.0, 0.0), (0.0, 0.0), (1.0, 0.0),
                                            (-1.0, 1.0), (0.0, 1.0), (1.0, 1.0)]
    assert rows[1][2] == pytest.approx(1.0)
    with pytest.raises(ConfigError):
        list(field.raster((0.0, 1.0), (0.0, 1.0), 0.0))
