"""
Discrete-time swarm world

Point-mass drones fly straight legs at constant speed, sample the plume at
their waypoints and fail at random every tick. A controller (LoCUS or
MoBS) is told whenever drones arrive or fail and hands out new paths.

Between those events nothing but kinematics and failure draws happens, so
the kernel coasts over whole windows at once: positions along a leg are
closed-form, and failures are found by scanning each drone's buffered
uniform stream over the window. Stepping one tick at a time gives the same
world.
"""

import csv
import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Deque, List, Optional, Sequence, Set, Tuple, Union

import numpy as np

from .errors import ConfigError
from .locus import LocusController, LocusParams, check_success
from .mobs import MobsController, MobsParams
from .plume import PlumeField, PlumeParams, PlumePose, make_pose
from .tree import TreeParams, slot_layout

logger = logging.getLogger(__name__)

ALGORITHMS = ("locus", "locus-no-heal", "mobs")
PLUME_VARIANTS = ("smooth", "perturbed")
REASONS = ("success", "all-failed", "budget")

TAKEOFF = (0.0, 0.0)
# Uniforms generated per refill of a drone's failure stream
DRAW_BLOCK = 1024
# Ticks examined per pass when scanning a window for failures
SCAN_CHUNK = 4096

TRACE_HEADER = ["tick", "drone", "x", "y", "z", "alive", "reading", "mode"]
WAYPOINT_HEADER = ["tick", "mode", "root_x", "root_y", "live", "heal_events", "max_reading", "max_hops"]


@dataclass(frozen=True)
class FailureModel:
    """
    Per-tick failure probability p_generic + p_inplume * reading.

    Attributes:
        p_generic: Constant crash probability per drone per tick
        p_inplume: Coefficient of the reading-proportional term
    """

    p_generic: float = 0.0
    p_inplume: float = 0.0

    def __post_init__(self):
        for name in ("p_generic", "p_inplume"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")

    @property
    def possible(self) -> bool:
        return self.p_generic > 0 or self.p_inplume > 0

    def probability(self, readings: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        return np.clip(self.p_generic + self.p_inplume * np.asarray(readings, dtype=float), 0.0, 1.0)


@dataclass(frozen=True)
class TrialConfig:
    """Everything a single trial depends on besides its seed."""

    algorithm: str = "locus"
    n: int = 5
    plume_variant: str = "smooth"
    failure: FailureModel = FailureModel()
    tree: TreeParams = TreeParams()
    plume: PlumeParams = PlumeParams()
    locus: LocusParams = LocusParams()
    mobs: MobsParams = MobsParams()
    source_radius: float = 100.0
    speed: float = 3.0
    dt: float = 0.06228
    tick_budget: int = 1_000_000
    altitude: float = 10.0
    arrival_tolerance: float = 0.2
    success_radius: float = 1.0
    record_waypoints: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"Unknown algorithm '{self.algorithm}', expected one of {', '.join(ALGORITHMS)}")
        if self.plume_variant not in PLUME_VARIANTS:
            raise ConfigError(f"Unknown plume variant '{self.plume_variant}', expected one of {', '.join(PLUME_VARIANTS)}")
        if self.n < 1:
            raise ConfigError(f"A swarm needs at least one drone, got {self.n}")
        for name in ("speed", "dt", "tick_budget", "success_radius"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.source_radius < 0 or self.arrival_tolerance < 0:
            raise ConfigError("source_radius and arrival_tolerance must be non-negative")

    @property
    def step_length(self) -> float:
        return self.speed * self.dt

    @property
    def plume_params(self) -> PlumeParams:
        return replace(self.plume, perturbed=self.plume_variant == "perturbed")

    @property
    def locus_params(self) -> LocusParams:
        return replace(self.locus, heal=self.algorithm != "locus-no-heal")

    @property
    def detection_threshold(self) -> float:
        if self.algorithm == "mobs":
            return self.mobs.detection_threshold
        return self.locus.detection_threshold


@dataclass(frozen=True)
class DroneState:
    id: int
    position: Tuple[float, float, float]
    alive: bool
    moving: bool
    target: Optional[Tuple[float, float, float]] = None


@dataclass(frozen=True)
class TrialResult:
    """
    Outcome of one trial.

    Attributes:
        success: A drone sampled within the success radius of the peak
        contact_tick: First tick with a reading at or above the detection threshold
        maxflux_tick: Tick of the successful sample
        survivors: Live drones at the end
        distance_m: Total distance flown by all drones
        heal_events: Heir flights plus rebalance moves
        reason: One of success, all-failed, budget
        ticks: Tick at which the trial stopped
        waypoints: Per-waypoint records, when recorded
    """

    success: bool
    contact_tick: Optional[int]
    maxflux_tick: Optional[int]
    survivors: int
    distance_m: float
    heal_events: int
    reason: str
    ticks: int
    waypoints: Tuple[tuple, ...] = field(default=(), repr=False)


class FailureDraws:
    """Buffered uniform stream per drone with peek-ahead and consume."""

    def __init__(self, rngs: Sequence[np.random.Generator]):
        self.rngs = list(rngs)
        self.buffers: List[np.ndarray] = [np.empty(0) for _ in self.rngs]
        self.cursors = np.zeros(len(self.rngs), dtype=np.int64)

    def window(self, ids: Sequence[int], start: int, count: int) -> np.ndarray:
        """Uniforms start..start+count ahead of each drone's cursor, shape (len(ids), count)."""
        rows = np.empty((len(ids), count))
        for row, i in enumerate(ids):
            lo = int(self.cursors[i]) + start
            while len(self.buffers[i]) < lo + count:
                self.buffers[i] = np.concatenate([self.buffers[i], self.rngs[i].random(DRAW_BLOCK)])
            rows[row] = self.buffers[i][lo:lo + count]
        return rows

    def consume(self, ids: Sequence[int], count: int) -> None:
        for i in ids:
            self.cursors[i] += count
            if self.cursors[i] >= DRAW_BLOCK:
                used = int(self.cursors[i]) // DRAW_BLOCK * DRAW_BLOCK
                self.buffers[i] = self.buffers[i][used:]
                self.cursors[i] -= used


def launch_positions(n: int, params: TreeParams, takeoff: Tuple[float, float] = TAKEOFF) -> np.ndarray:
    """Ground positions of the launch grid: takeoff plus slot offsets at z = 0."""
    tree = slot_layout(n, params)
    return np.array([[takeoff[0] + s.x, takeoff[1] + s.y, 0.0] for s in tree.slots])


class WorldState:
    """
    Kinematic and sensing state of a trial.

    Each drone flies the legs of its path one after another. A leg is
    described by its start, end, length and tick count; the position after
    j ticks is start + (end - start) * min(1, step * j / length) and lands
    exactly on the end at the last tick.
    """

    def __init__(self, config: TrialConfig, plume: PlumeField, positions: np.ndarray,
                 fault_rngs: Sequence[np.random.Generator], controller=None):
        self.config = config
        self.plume = plume
        self.controller = controller
        self.n = len(positions)
        self.tick = 0
        self.step_length = config.step_length
        self.failure = config.failure
        self.detection_threshold = config.detection_threshold

        self.positions = np.array(positions, dtype=float)
        self.alive = np.ones(self.n, dtype=bool)
        self.leg_start = self.positions.copy()
        self.leg_end = self.positions.copy()
        self.leg_len = np.zeros(self.n)
        self.leg_ticks = np.zeros(self.n, dtype=np.int64)
        self.leg_elapsed = np.zeros(self.n, dtype=np.int64)
        self.paths: List[Deque[np.ndarray]] = [deque() for _ in range(self.n)]
        self.flown = np.zeros(self.n)
        self.draws = FailureDraws(fault_rngs)

        self.contact_tick: Optional[int] = None
        self.maxflux_tick: Optional[int] = None
        self.succeeded = False

    @property
    def moving(self) -> np.ndarray:
        return self.alive & (self.leg_elapsed < self.leg_ticks)

    @property
    def live_ids(self) -> np.ndarray:
        return np.flatnonzero(self.alive)

    def drone(self, i: int) -> DroneState:
        target = None
        if self.moving[i]:
            final = self.paths[i][-1] if self.paths[i] else self.leg_end[i]
            target = tuple(float(v) for v in final)
        return DroneState(i, tuple(float(v) for v in self.positions[i]), bool(self.alive[i]),
                          bool(self.moving[i]), target)

    # ------------------------------------------------------------------
    # Paths

    def set_path(self, i: int, points: Sequence[np.ndarray]) -> None:
        """Replace the remaining path of drone i, starting from where it is now."""
        if not self.alive[i]:
            return
        self._settle(i)
        self.paths[i] = deque(np.asarray(p, dtype=float) for p in points)
        self._next_leg(i)

    def _settle(self, i: int) -> None:
        if self.leg_elapsed[i] < self.leg_ticks[i]:
            self.flown[i] += min(self.step_length * self.leg_elapsed[i], self.leg_len[i])
        self.leg_start[i] = self.positions[i]
        self.leg_end[i] = self.positions[i]
        self.leg_len[i] = 0.0
        self.leg_ticks[i] = 0
        self.leg_elapsed[i] = 0

    def _next_leg(self, i: int) -> bool:
        if not self.paths[i]:
            return False
        end = self.paths[i].popleft()
        length = float(np.linalg.norm(end - self.positions[i]))
        self.leg_start[i] = self.positions[i]
        self.leg_end[i] = end
        self.leg_len[i] = length
        self.leg_ticks[i] = max(1, math.ceil(length / self.step_length))
        self.leg_elapsed[i] = 0
        return True

    def leg_positions(self, ids: np.ndarray, elapsed: np.ndarray) -> np.ndarray:
        """Positions of drones `ids` after `elapsed` ticks of their current leg."""
        ids = np.asarray(ids)
        elapsed = np.asarray(elapsed)
        shape = (len(ids),) + (1,) * (elapsed.ndim - 1)
        ticks = self.leg_ticks[ids].reshape(shape)
        length = self.leg_len[ids].reshape(shape)
        safe = np.where(length > 0, length, 1.0)
        done = elapsed >= ticks
        frac = np.where(done, 1.0, np.minimum(1.0, self.step_length * elapsed / safe))
        start = self.leg_start[ids].reshape(shape + (3,))
        end = self.leg_end[ids].reshape(shape + (3,))
        return np.where(done[..., None], end, start + (end - start) * frac[..., None])

    def _move(self, ticks: int) -> List[int]:
        """Advance every live drone by `ticks`; returns the drones that reached the end of their path."""
        moving = np.flatnonzero(self.moving)
        if len(moving) == 0:
            return []
        self.leg_elapsed[moving] += ticks
        self.positions[moving] = self.leg_positions(moving, self.leg_elapsed[moving])
        arrived = []
        for i in moving:
            if self.leg_elapsed[i] < self.leg_ticks[i]:
                continue
            self.flown[i] += self.leg_len[i]
            self.positions[i] = self.leg_end[i]
            self.leg_len[i] = 0.0
            self.leg_ticks[i] = 0
            self.leg_elapsed[i] = 0
            if not self._next_leg(i):
                arrived.append(int(i))
        return arrived

    def _fail(self, i: int) -> None:
        self._settle(i)
        self.alive[i] = False
        self.paths[i].clear()

    # ------------------------------------------------------------------
    # Sensing

    def sample(self, ids: Sequence[int]) -> np.ndarray:
        """
        Read the plume at the current positions of `ids`.

        Records the first plume contact and whether any sampling drone is
        within the success radius of the peak.
        """
        ids = [int(i) for i in ids]
        if not ids:
            return np.empty(0)
        points = self.positions[ids]
        readings = np.atleast_1d(self.plume.reading(points[:, :2]))
        if self.contact_tick is None and (readings >= self.detection_threshold).any():
            self.contact_tick = self.tick
            logger.debug(f"First plume contact at tick {self.tick}")
        if not self.succeeded and check_success(points, self.plume.peak, self.config.success_radius):
            self.succeeded = True
            self.maxflux_tick = self.tick
        return readings

    def distance_flown(self) -> float:
        partial = 0.0
        for i in np.flatnonzero(self.moving):
            partial += min(self.step_length * self.leg_elapsed[i], self.leg_len[i])
        return float(self.flown.sum() + partial)

    def result(self, reason: str) -> TrialResult:
        return TrialResult(
            success=self.succeeded,
            contact_tick=self.contact_tick,
            maxflux_tick=self.maxflux_tick,
            survivors=int(self.alive.sum()),
            distance_m=self.distance_flown(),
            heal_events=int(getattr(self.controller, "heal_events", 0)),
            reason=reason,
            ticks=self.tick,
            waypoints=tuple(getattr(self.controller, "waypoints", ())),
        )


def scan_failures(world: WorldState, horizon: int) -> Tuple[int, List[int]]:
    """
    Look ahead up to `horizon` ticks for the first failure.

    Returns:
        (ticks, failing): ticks until the first failure (or `horizon`) and
        the drones failing on that tick
    """
    model = world.failure
    ids = world.live_ids
    if not model.possible or len(ids) == 0:
        return horizon, []

    offset = 0
    while offset < horizon:
        count = min(SCAN_CHUNK, horizon - offset)
        uniforms = world.draws.window(ids, offset, count)
        if model.p_inplume > 0:
            elapsed = world.leg_elapsed[ids][:, None] + np.arange(offset + 1, offset + count + 1)[None, :]
            points = world.leg_positions(ids, elapsed)
            probability = model.probability(world.plume.reading(points[..., :2]))
        else:
            probability = model.probability(0.0)
        hits = uniforms < probability
        columns = hits.any(axis=0)
        if columns.any():
            first = int(columns.argmax())
            return offset + first + 1, [int(i) for i in ids[hits[:, first]]]
        offset += count
    return horizon, []


def inject_failures(world: WorldState) -> Set[int]:
    """Draw this tick's failures at the current positions and mark them."""
    model = world.failure
    ids = world.live_ids
    if not model.possible or len(ids) == 0:
        return set()
    uniforms = world.draws.window(ids, 0, 1)[:, 0]
    if model.p_inplume > 0:
        readings = np.atleast_1d(world.plume.reading(world.positions[ids][:, :2]))
    else:
        readings = 0.0
    failing = ids[uniforms < model.probability(readings)]
    world.draws.consume(ids, 1)
    for i in failing:
        world._fail(int(i))
    return {int(i) for i in failing}


def advance(world: WorldState, max_ticks: Optional[int] = None) -> Tuple[List[int], List[int]]:
    """
    Coast to the next leg end, failure or budget, whichever comes first.

    Returns:
        (arrived, failed) drone ids
    """
    horizon = world.config.tick_budget - world.tick
    if max_ticks is not None:
        horizon = min(horizon, max_ticks)
    if horizon <= 0:
        return [], []
    moving = world.moving
    if moving.any():
        horizon = min(horizon, int((world.leg_ticks - world.leg_elapsed)[moving].min()))

    live = world.live_ids
    ticks, failing = scan_failures(world, horizon)
    arrived = world._move(ticks)
    if world.failure.possible:
        world.draws.consume(live, ticks)
    world.tick += ticks
    for i in failing:
        world._fail(i)
    return [i for i in arrived if world.alive[i]], failing


def dispatch(world: WorldState, arrived: Sequence[int], failed: Sequence[int]) -> None:
    if world.controller is None or not world.alive.any():
        return
    if arrived or failed:
        world.controller.on_event(world, list(arrived), list(failed))


def step(world: WorldState) -> WorldState:
    """Advance exactly one tick: move, draw failures, let the controller react."""
    if world.tick >= world.config.tick_budget:
        return world
    arrived = world._move(1)
    world.tick += 1
    failed = inject_failures(world)
    dispatch(world, [i for i in arrived if world.alive[i]], sorted(failed))
    return world


def check_termination(world: WorldState) -> Optional[str]:
    if world.succeeded:
        return "success"
    if not world.alive.any():
        return "all-failed"
    if world.tick >= world.config.tick_budget:
        return "budget"
    return None


def build_world(config: TrialConfig, seed: int, pose: Optional[PlumePose] = None) -> WorldState:
    """
    Construct plume, launch grid, controller and random streams for a trial.

    The seed spawns one environment stream (plume placement and LoCUS
    pose randomization) and one stream per drone, which splits into a
    failure stream and a control stream. Drone k's streams therefore do
    not depend on the swarm size.
    """
    children = np.random.SeedSequence(seed).spawn(config.n + 1)
    env_rng = np.random.default_rng(children[0])
    drone_streams = [child.spawn(2) for child in children[1:]]
    fault_rngs = [np.random.default_rng(pair[0]) for pair in drone_streams]
    control_rngs = [np.random.default_rng(pair[1]) for pair in drone_streams]

    plume_params = config.plume_params
    if pose is None:
        pose = make_pose(env_rng, TAKEOFF, config.source_radius, plume_params)
    plume = PlumeField(plume_params, pose)

    if config.algorithm == "mobs":
        controller = MobsController(config.n, control_rngs, config.mobs, config.altitude, TAKEOFF)
    else:
        controller = LocusController(
            config.n, env_rng, config.tree, config.locus_params, config.altitude, TAKEOFF,
            config.arrival_tolerance, config.record_waypoints,
        )
    return WorldState(config, plume, launch_positions(config.n, config.tree), fault_rngs, controller)


def run_trial(config: TrialConfig, seed: int, trace: Optional["TickTrace"] = None,
              progress: Optional[Callable[[int], None]] = None,
              pose: Optional[PlumePose] = None) -> TrialResult:
    """
    Run one trial to termination.

    Args:
        config: Trial configuration
        seed: Trial seed; equal (config, seed) give equal results
        trace: Per-tick trace sink; forces tick-by-tick stepping
        progress: Called with the current tick after every event
        pose: Fixed plume placement instead of a random one

    Returns:
        The trial outcome
    """
    world = build_world(config, seed, pose)
    world.controller.start(world)
    if trace is not None:
        trace.write(world)

    while True:
        if trace is not None:
            step(world)
            trace.write(world)
        else:
            arrived, failed = advance(world)
            dispatch(world, arrived, failed)
        reason = check_termination(world)
        if reason is not None:
            break
        if progress is not None:
            progress(world.tick)

    result = world.result(reason)
    logger.debug(
        f"Trial {config.algorithm} n={config.n} seed={seed}: {reason} at tick {world.tick}, "
        f"{result.survivors} survivors"
    )
    return result


class TickTrace:
    """Per-tick CSV rows of every drone."""

    def __init__(self, stream):
        self.writer = csv.writer(stream, lineterminator="\n")
        self.writer.writerow(TRACE_HEADER)

    def write(self, world: WorldState) -> None:
        readings = np.atleast_1d(world.plume.reading(world.positions[:, :2]))
        for i in range(world.n):
            x, y, z = world.positions[i]
            self.writer.writerow([
                world.tick, i, f"{x:.6f}", f"{y:.6f}", f"{z:.6f}", int(world.alive[i]),
                f"{readings[i]:.6g}", world.controller.mode_of(i),
            ])


def write_waypoints(stream, records: Sequence[tuple]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(WAYPOINT_HEADER)
    for record in records:
        writer.writerow(record)
