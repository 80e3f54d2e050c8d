import sys
import os
import io
import csv

import numpy as np
import pytest

# Add the parent directory to sys.path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from plumeSwarm.errors import ConfigError
from plumeSwarm.plume import PlumeField, PlumeParams, PlumePose
from plumeSwarm.sim import (TRACE_HEADER, DroneState, FailureDraws, FailureModel, TickTrace, TrialConfig, WorldState,
                            advance, build_world, check_termination, dispatch, inject_failures,
                            launch_positions, run_trial, step, write_waypoints)
from plumeSwarm.tree import TreeParams

FAR_AWAY = PlumePose(peak=(5000.0, 5000.0), source=(3750.0, 5000.0))


def _bare_world(n=1, failure=FailureModel(), budget=1000, speed=3.0, dt=0.06228, seed=0):
    """A world without controller, drones at the origin."""
    config = TrialConfig(n=n, failure=failure, tick_budget=budget, speed=speed, dt=dt)
    plume = PlumeField(PlumeParams(), FAR_AWAY)
    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]
    return WorldState(config, plume, np.zeros((n, 3)), rngs)


def test_config_validation():
    """Bad trial settings raise configuration errors."""
    with pytest.raises(ConfigError):
        TrialConfig(n=0)
    with pytest.raises(ConfigError):
        TrialConfig(algorithm="random-walk")
    with pytest.raises(ConfigError):
        TrialConfig(plume_variant="turbulent")
    with pytest.raises(ConfigError):
        TrialConfig(speed=0.0)
    with pytest.raises(ConfigError):
        FailureModel(p_generic=1.5)


def test_config_derived_values():
    """Derived settings follow the algorithm and plume variant."""
    config = TrialConfig(algorithm="locus-no-heal", plume_variant="perturbed")
    assert config.plume_params.perturbed
    assert not config.locus_params.heal
    assert TrialConfig(algorithm="locus").locus_params.heal
    assert config.step_length == pytest.approx(0.18684)
    assert 1_000_000 * config.dt / 3600 == pytest.approx(17.3, abs=0.01)


def test_failure_probability():
    """Generic and in-plume terms add up and are clamped."""
    model = FailureModel(p_generic=0.01, p_inplume=0.1)
    assert model.probability(0.0) == pytest.approx(0.01)
    assert model.probability(0.5) == pytest.approx(0.06)
    assert FailureModel(p_generic=1.0, p_inplume=1.0).probability(1.0) == 1.0
    assert not FailureModel().possible
    assert FailureModel(p_inplume=0.1).possible


def test_step_moves_along_straight_line():
    """A drone covers speed * dt per tick and lands exactly on its target."""
    world = _bare_world(speed=0.2, dt=1.0)
    world.set_path(0, [np.array([10.0, 0.0, 0.0])])
    step(world)
    assert world.positions[0] == pytest.approx([0.2, 0.0, 0.0])
    assert world.tick == 1

    world = _bare_world(speed=0.2, dt=1.0)
    world.set_path(0, [np.array([0.1, 0.0, 0.0])])
    step(world)
    assert np.array_equal(world.positions[0], [0.1, 0.0, 0.0])
    assert not world.moving[0]


def test_failed_drone_stops():
    """A failed drone keeps its position and ignores new paths."""
    world = _bare_world(speed=1.0, dt=1.0)
    world.set_path(0, [np.array([10.0, 0.0, 0.0])])
    step(world)
    world._fail(0)
    for _ in range(3):
        step(world)
    assert world.positions[0] == pytest.approx([1.0, 0.0, 0.0])
    world.set_path(0, [np.array([0.0, 5.0, 0.0])])
    assert not world.moving[0]
    assert world.distance_flown() == pytest.approx(1.0)


def test_advance_stops_at_leg_end():
    """Coasting ends at the first arrival."""
    world = _bare_world(n=2, speed=1.0, dt=1.0)
    world.set_path(0, [np.array([3.0, 0.0, 0.0])])
    world.set_path(1, [np.array([0.0, 5.0, 0.0])])
    arrived, failed = advance(world)
    assert (arrived, failed, world.tick) == ([0], [], 3)
    assert world.positions[1] == pytest.approx([0.0, 3.0, 0.0])


def test_multi_leg_paths():
    """Intermediate legs end without an arrival event."""
    world = _bare_world(speed=1.0, dt=1.0)
    world.set_path(0, [np.array([0.0, 0.0, -2.0]), np.array([3.0, 0.0, -2.0])])
    arrived, _ = advance(world)
    assert arrived == [] and world.tick == 2
    arrived, _ = advance(world)
    assert arrived == [0] and world.tick == 5
    assert world.distance_flown() == pytest.approx(5.0)


def test_no_failures_without_probability():
    """Zero probabilities never fail a drone."""
    world = _bare_world(n=5, budget=10000)
    arrived, failed = advance(world)
    assert failed == []
    assert world.tick == 10000
    assert world.alive.all()


def test_in_plume_term_needs_signal():
    """Far from the plume the in-plume model never fires."""
    world = _bare_world(n=5, failure=FailureModel(p_inplume=1.0), budget=5000)
    for _ in range(200):
        assert inject_failures(world) == set()


def test_generic_failures_match_binomial():
    """Failures over a long window agree with the binomial mean."""
    p, n, ticks, runs = 1e-4, 20, 10000, 10
    total = 0
    for seed in range(runs):
        world = _bare_world(n=n, failure=FailureModel(p_generic=p), budget=ticks, seed=seed)
        for _ in range(ticks):
            total += len(inject_failures(world))
    # a drone fails at most once: Binomial(runs * n, 1 - (1 - p) ** ticks)
    q = 1 - (1 - p) ** ticks
    expected = runs * n * q
    sigma = np.sqrt(runs * n * q * (1 - q))
    assert abs(total - expected) <= 3 * sigma


def test_certain_failure_ends_trial_at_first_tick():
    """With p_generic = 1 every drone fails on tick 1."""
    for algorithm in ("locus", "mobs"):
        config = TrialConfig(algorithm=algorithm, n=4, failure=FailureModel(p_generic=1.0))
        result = run_trial(config, seed=3)
        assert result.reason == "all-failed"
        assert result.ticks == 1
        assert not result.success
        assert result.survivors == 0


def test_step_and_advance_agree():
    """Tick-by-tick stepping and event coasting produce the same trial."""
    config = TrialConfig(algorithm="locus", n=7, tick_budget=3000,
                         failure=FailureModel(p_generic=2e-4), record_waypoints=True)
    coasted = run_trial(config, seed=21)
    stepped = run_trial(config, seed=21, trace=TickTrace(io.StringIO()))
    assert coasted == stepped

    mobs = TrialConfig(algorithm="mobs", n=5, tick_budget=3000, failure=FailureModel(p_generic=2e-4))
    assert run_trial(mobs, seed=4) == run_trial(mobs, seed=4, trace=TickTrace(io.StringIO()))


def test_run_trial_is_deterministic():
    """Equal configuration and seed give equal results."""
    config = TrialConfig(algorithm="mobs", n=5, tick_budget=20000, failure=FailureModel(p_generic=1e-4))
    assert run_trial(config, seed=8) == run_trial(config, seed=8)


def test_single_drone_never_fails_without_failure_model():
    """A lone LoCUS drone ends on success or budget."""
    result = run_trial(TrialConfig(algorithm="locus", n=1, tick_budget=20000), seed=2)
    assert result.reason in ("success", "budget")
    assert result.survivors == 1


def test_check_termination_order():
    """Success beats losing the swarm, which beats the budget."""
    world = _bare_world(n=2, budget=10)
    assert check_termination(world) is None
    world.tick = 10
    assert check_termination(world) == "budget"
    world._fail(0)
    world._fail(1)
    assert check_termination(world) == "all-failed"
    world.succeeded = True
    assert check_termination(world) == "success"


def test_live_count_never_increases():
    """Failures are permanent."""
    config = TrialConfig(algorithm="locus", n=10, tick_budget=5000, failure=FailureModel(p_generic=5e-4))
    world = build_world(config, seed=6)
    world.controller.start(world)
    live = world.alive.sum()
    while check_termination(world) is None:
        arrived, failed = advance(world)
        dispatch(world, arrived, failed)
        assert world.alive.sum() <= live
        live = world.alive.sum()


def test_per_tick_displacement_is_bounded():
    """Drones never jump further than one step per tick."""
    config = TrialConfig(algorithm="locus", n=7, tick_budget=600, failure=FailureModel(p_generic=1e-3))
    world = build_world(config, seed=13)
    world.controller.start(world)
    previous = world.positions.copy()
    for _ in range(600):
        step(world)
        moved = np.linalg.norm(world.positions - previous, axis=1)
        assert moved.max() <= config.step_length + 1e-9
        previous = world.positions.copy()


def test_contact_precedes_success():
    """Plume contact is recorded no later than the max flux."""
    pose = PlumePose(peak=(0.0, 0.0), source=(-1250.0, 0.0))
    result = run_trial(TrialConfig(algorithm="locus", n=7, tick_budget=5000), seed=1, pose=pose)
    assert result.success
    assert result.contact_tick <= result.maxflux_tick


def test_failure_draws_window_and_consume():
    """Peeked uniforms are the ones consumed later."""
    draws = FailureDraws([np.random.default_rng(0)])
    ahead = draws.window([0], 0, 3000)[0]
    draws.consume([0], 1500)
    assert np.array_equal(draws.window([0], 0, 1500)[0], ahead[1500:])


def test_launch_positions():
    """Drones start on the ground at their slot offsets."""
    positions = launch_positions(7, TreeParams())
    assert positions.shape == (7, 3)
    assert np.all(positions[:, 2] == 0.0)
    assert np.hypot(positions[1:, 0], positions[1:, 1]) == pytest.approx(np.full(6, 3.0))


def test_trace_and_waypoint_csv():
    """The trace has one row per drone per tick and the waypoint log a header."""
    stream = io.StringIO()
    config = TrialConfig(algorithm="locus", n=3, tick_budget=40, record_waypoints=True)
    result = run_trial(config, seed=0, trace=TickTrace(stream), pose=FAR_AWAY)
    rows = list(csv.reader(io.StringIO(stream.getvalue())))
    assert rows[0] == TRACE_HEADER
    assert len(rows) == 1 + 3 * (result.ticks + 1)

    out = io.StringIO()
    write_waypoints(out, result.waypoints)
    assert out.getvalue().splitlines()[0].startswith("tick,mode,root_x")


def test_drone_snapshot():
    """A drone snapshot reports the final point of its remaining path."""
    world = _bare_world(n=2, speed=1.0, dt=1.0)
    world.set_path(0, [np.array([2.0, 0.0, 0.0]), np.array([2.0, 4.0, 0.0])])
    step(world)

    assert world.drone(0) == DroneState(0, (1.0, 0.0, 0.0), True, True, (2.0, 4.0, 0.0))
    assert world.drone(1) == DroneState(1, (0.0, 0.0, 0.0), True, False, None)
