"""
Balanced Range-Limited Tree

Every drone in a LoCUS swarm owns a slot on a set of concentric rings around
the root. Ring k has radius k * r_max and holds as many slots as fit with a
chord spacing of at least r_min. Parent links join each slot to the nearest
slot of the previous ring, and the tree uses a generalized m-ary inorder
traversal to designate, for every internal node, the leaf (its heir) that
replaces it when it fails.
"""

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

import numpy as np
from scipy.spatial.distance import pdist

from .errors import CapacityError, ConfigError, SwarmLostError

logger = logging.getLogger(__name__)

# Slack for ring capacities that land exactly on an integer (k=1, spread=1 gives 6)
RING_EPSILON = 1e-9

Point3 = Tuple[float, float, float]


@dataclass(frozen=True)
class TreeParams:
    """Safety radius and ring spacing of a swarm tree (meters)."""

    r_min: float = 3.0
    r_max: float = 3.0

    def __post_init__(self):
        if not self.r_min > 0:
            raise ConfigError(f"r_min must be positive, got {self.r_min}")
        if self.r_max < self.r_min:
            raise ConfigError(f"r_max ({self.r_max}) must be at least r_min ({self.r_min})")

    @property
    def spread(self) -> float:
        return self.r_max / self.r_min


@dataclass(frozen=True)
class Slot:
    """A fixed position of the formation, relative to the root."""

    id: int
    level: int
    index_in_ring: int
    x: float
    y: float

    @property
    def offset(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class RecoveryStep:
    """
    One failed slot of a recovery plan.

    Attributes:
        failed: Slot whose drone failed
        heir: Slot whose drone replaces it, or None for a plain removal
        height: Height of the failed slot when it was processed
        drone: Drone flying from heir to failed, None for a removal
        hops: Tree hops between the failed slot and its heir
        path: Formation-frame flight path, z relative to swarm altitude
    """

    failed: int
    heir: Optional[int]
    height: int
    drone: Optional[int] = None
    hops: int = 0
    path: Tuple[Point3, ...] = ()


@dataclass(frozen=True)
class RebalanceMove:
    """A leaf drone relocated from a deep branch to a shallow one."""

    drone: int
    source: int
    target: int
    path: Tuple[Point3, ...] = ()


@dataclass
class RecoveryPlan:
    steps: List[RecoveryStep] = field(default_factory=list)
    moves: List[RebalanceMove] = field(default_factory=list)

    @property
    def actions(self) -> List[object]:
        """Steps followed by rebalance moves, in execution order."""
        return list(self.steps) + list(self.moves)

    @property
    def flight_count(self) -> int:
        return sum(1 for step in self.steps if step.heir is not None) + len(self.moves)

    def __bool__(self) -> bool:
        return bool(self.steps or self.moves)


def ring_capacity(level: int, params: TreeParams) -> int:
    """
    Number of slots on ring `level`.

    The ring has radius level * r_max, and consecutive slots are separated
    by a chord of at least r_min, which gives floor(pi / asin(1 / (2 k rho))).

    Args:
        level: Ring index, 0 for the root
        params: Tree geometry

    Returns:
        Slot count of the ring
    """
    if level < 0:
        raise ValueError(f"Ring level must be non-negative, got {level}")
    if level == 0:
        return 1
    half_chord = 1.0 / (2.0 * level * params.spread)
    return int(math.floor(math.pi / math.asin(half_chord) + RING_EPSILON))


def level_count(n: int, params: TreeParams) -> int:
    """Number of rings, root included, that a layout of n slots occupies."""
    if n < 1:
        raise ValueError(f"A swarm needs at least one drone, got {n}")
    levels = 0
    total = 1
    while total < n:
        levels += 1
        total += ring_capacity(levels, params)
    return levels + 1


def under_swarm_path(start: Iterable[float], end: Iterable[float], drop: float) -> Tuple[Point3, ...]:
    """
    Flight path that passes beneath the formation.

    The drone descends by `drop` under the swarm altitude, traverses to the
    destination and climbs back. Heights are relative to the swarm altitude.
    """
    sx, sy = (float(v) for v in start)
    ex, ey = (float(v) for v in end)
    return ((sx, sy, -drop), (ex, ey, -drop), (ex, ey, 0.0))


def slot_layout(n: int, params: TreeParams) -> "SwarmTree":
    """
    Lay out n vacant slots level by level in id order.

    Slot j of ring k sits at angle (j + 1/2) * 2 pi / ring_capacity(k).
    """
    if n < 1:
        raise ValueError(f"A swarm needs at least one drone, got {n}")
    slots = [Slot(id=1, level=0, index_in_ring=0, x=0.0, y=0.0)]
    level = 0
    while len(slots) < n:
        level += 1
        capacity = ring_capacity(level, params)
        for index in range(min(capacity, n - len(slots))):
            slots.append(_ring_slot(len(slots) + 1, level, index, params))
    return SwarmTree(params, slots)


def assign_parents(tree: "SwarmTree") -> "SwarmTree":
    tree.assign_parents()
    return tree


def build_swarm(n: int, params: TreeParams) -> "SwarmTree":
    """Layout, links and drones 0..n-1 inserted in slot order."""
    tree = assign_parents(slot_layout(n, params))
    for drone in range(n):
        tree.insert(drone)
    return tree


def _ring_slot(slot_id: int, level: int, index: int, params: TreeParams) -> Slot:
    capacity = ring_capacity(level, params)
    angle = (index + 0.5) * 2.0 * math.pi / capacity
    radius = level * params.r_max
    return Slot(slot_id, level, index, radius * math.cos(angle), radius * math.sin(angle))


class SwarmTree:
    """
    Live topology of the swarm.

    The tree owns the slot layout, the mapping of slots to drones, and the
    parent links of occupied slots. Operations mutate in place; `copy()`
    gives an independent value for planning.
    """

    def __init__(self, params: TreeParams, slots: List[Slot]):
        self.params = params
        self.slots: List[Slot] = list(slots)
        self.occupancy: Dict[int, int] = {}
        self.parent: Dict[int, int] = {}
        self.layout_parent: Dict[int, Optional[int]] = {}
        self.root: int = 1
        self._drone_slot: Dict[int, int] = {}

    def __len__(self) -> int:
        return len(self.occupancy)

    def __contains__(self, slot_id: int) -> bool:
        return slot_id in self.occupancy

    def copy(self) -> "SwarmTree":
        return copy.deepcopy(self)

    # ------------------------------------------------------------------
    # Layout and links

    def slot(self, slot_id: int) -> Slot:
        return self.slots[slot_id - 1]

    @property
    def capacity(self) -> int:
        return len(self.slots)

    @property
    def occupied(self) -> List[int]:
        return sorted(self.occupancy)

    @property
    def vacant(self) -> List[int]:
        return [s.id for s in self.slots if s.id not in self.occupancy]

    def drone_at(self, slot_id: int) -> Optional[int]:
        return self.occupancy.get(slot_id)

    def slot_of(self, drone: int) -> Optional[int]:
        return self._drone_slot.get(drone)

    def assign_parents(self) -> "SwarmTree":
        """
        Link every slot to the nearest slot of the previous ring.

        Ties go to the lowest slot id. Occupied slots take their layout
        parent as live parent.
        """
        by_level: Dict[int, List[Slot]] = {}
        for s in self.slots:
            by_level.setdefault(s.level, []).append(s)

        self.layout_parent = {1: None}
        for s in self.slots[1:]:
            candidates = by_level[s.level - 1]
            best = min(candidates, key=lambda c: (math.hypot(c.x - s.x, c.y - s.y), c.id))
            self.layout_parent[s.id] = best.id

        self.parent = {
            slot_id: self.layout_parent[slot_id]
            for slot_id in self.occupancy
            if slot_id != self.root and self.layout_parent.get(slot_id) is not None
        }
        return self

    def _add_slot(self) -> Slot:
        last = self.slots[-1]
        level = last.level
        used = sum(1 for s in self.slots if s.level == level)
        if level == 0 or used >= ring_capacity(level, self.params):
            raise CapacityError(f"Swarm tree is full ({self.capacity} slots)")
        new = _ring_slot(len(self.slots) + 1, level, used, self.params)
        self.slots.append(new)
        candidates = [s for s in self.slots if s.level == level - 1]
        best = min(candidates, key=lambda c: (math.hypot(c.x - new.x, c.y - new.y), c.id))
        self.layout_parent[new.id] = best.id
        return new

    # ------------------------------------------------------------------
    # Structure queries

    def children(self, slot_id: int) -> List[int]:
        """Occupied children, ordered counter-clockwise around the parent."""
        kids = [c for c, p in self.parent.items() if p == slot_id and c in self.occupancy]
        return sorted(kids, key=lambda c: (self._angle_key(slot_id, c), c))

    def _angle_key(self, parent_id: int, child_id: int) -> float:
        p = self.slot(parent_id)
        c = self.slot(child_id)
        reference = 0.0
        grand = self.layout_parent.get(parent_id)
        if grand is not None:
            g = self.slot(grand)
            reference = math.atan2(g.y - p.y, g.x - p.x)
        angle = math.atan2(c.y - p.y, c.x - p.x) - reference
        return angle % (2.0 * math.pi)

    def is_leaf(self, slot_id: int) -> bool:
        return not self.children(slot_id)

    def heights(self) -> Dict[int, int]:
        """Subtree height of every occupied slot, 0 for leaves."""
        kids: Dict[int, List[int]] = {s: [] for s in self.occupancy}
        for child, parent in self.parent.items():
            if child in self.occupancy and parent in kids:
                kids[parent].append(child)

        result: Dict[int, int] = {}

        def height(node: int) -> int:
            if node not in result:
                result[node] = 1 + max((height(c) for c in kids[node]), default=-1)
            return result[node]

        for node in self.occupancy:
            height(node)
        return result

    def depth(self, slot_id: int) -> int:
        """Tree hops from the root."""
        hops = 0
        node = slot_id
        while node != self.root:
            node = self.parent[node]
            hops += 1
        return hops

    def is_connected(self) -> bool:
        """True when every occupied slot reaches the root through occupied parents."""
        if not self.occupancy:
            return True
        if self.root not in self.occupancy:
            return False
        for node in self.occupancy:
            seen = set()
            while node != self.root:
                if node in seen or node not in self.parent:
                    return False
                seen.add(node)
                node = self.parent[node]
                if node not in self.occupancy:
                    return False
        return True

    def branch(self, slot_id: int) -> Optional[int]:
        """Root child whose subtree contains the slot, None for the root."""
        node = slot_id
        while True:
            up = self.parent.get(node) if node in self.occupancy else self.layout_parent.get(node)
            if up is None:
                return None
            if up == self.root:
                return node
            node = up

    def branch_heights(self) -> Dict[int, int]:
        """
        Height of each root branch.

        A vacant slot whose layout parent is the root counts as an empty
        branch of height -1.
        """
        heights = self.heights()
        branches = {c: heights[c] for c in self.children(self.root)}
        for s in self.slots:
            if s.id not in self.occupancy and self.layout_parent.get(s.id) == self.root:
                branches[s.id] = -1
        return branches

    def height_spread(self) -> int:
        branches = self.branch_heights()
        if not branches:
            return 0
        return max(branches.values()) - min(branches.values())

    # ------------------------------------------------------------------
    # Inorder and heirs

    def inorder(self, start: Optional[int] = None,
                keep: Optional[Callable[[int], bool]] = None) -> List[int]:
        """
        Generalized inorder of the subtree at `start` (the root by default).

        For a node with m children: the first floor(m/2) child subtrees,
        then the node, then the remaining subtrees.
        """
        start = self.root if start is None else start
        if start not in self.occupancy:
            return []
        order: List[int] = []

        def visit(node: int) -> None:
            kids = [c for c in self.children(node) if keep is None or keep(c)]
            half = len(kids) // 2
            for child in kids[:half]:
                visit(child)
            order.append(node)
            for child in kids[half:]:
                visit(child)

        visit(start)
        return order

    def heir_of(self, slot_id: int, dead: FrozenSet[int] = frozenset()) -> Optional[int]:
        """
        Leaf that replaces `slot_id` when it fails.

        The heir is the first leaf after the node in the inorder of its own
        subtree, or the last leaf before it when nothing follows. Subtrees
        made only of `dead` slots are ignored, so the returned leaf is live.

        Args:
            slot_id: Occupied slot
            dead: Slots that are failed but still occupied

        Returns:
            Heir slot, or None when the node is a leaf
        """
        if slot_id not in self.occupancy:
            raise ValueError(f"Slot {slot_id} is not occupied")
        keep = self._live_filter(dead)
        if not keep(slot_id):
            return None
        kids = [c for c in self.children(slot_id) if keep(c)]
        if not kids:
            return None

        order = self.inorder(slot_id, keep)
        position = order.index(slot_id)

        def effective_leaf(node: int) -> bool:
            return not any(keep(c) for c in self.children(node))

        for node in order[position + 1:]:
            if effective_leaf(node):
                return node
        for node in reversed(order[:position]):
            if effective_leaf(node):
                return node
        return None

    def _live_filter(self, dead: FrozenSet[int]) -> Callable[[int], bool]:
        if not dead:
            return lambda node: True
        memo: Dict[int, bool] = {}

        def keep(node: int) -> bool:
            if node not in memo:
                memo[node] = node not in dead or any(keep(c) for c in self.children(node))
            return memo[node]

        return keep

    @property
    def heirs(self) -> Dict[int, int]:
        """Heir of every occupied internal slot."""
        result = {}
        for node in self.occupied:
            heir = self.heir_of(node)
            if heir is not None:
                result[node] = heir
        return result

    # ------------------------------------------------------------------
    # Mutation

    def insert(self, drone: int) -> int:
        """
        Place a drone in the lowest-id vacant slot.

        Returns:
            Slot id taken by the drone

        Raises:
            CapacityError: If the last ring is full
        """
        if drone in self._drone_slot:
            raise ValueError(f"Drone {drone} is already in slot {self._drone_slot[drone]}")
        vacant = self.vacant
        slot_id = vacant[0] if vacant else self._add_slot().id
        self._occupy(slot_id, drone)
        return slot_id

    def _occupy(self, slot_id: int, drone: int) -> None:
        self.occupancy[slot_id] = drone
        self._drone_slot[drone] = slot_id
        if slot_id != self.root and self.layout_parent.get(slot_id) is not None:
            self.parent[slot_id] = self.layout_parent[slot_id]

    def _vacate(self, slot_id: int) -> Optional[int]:
        drone = self.occupancy.pop(slot_id, None)
        if drone is not None:
            self._drone_slot.pop(drone, None)
        self.parent.pop(slot_id, None)
        return drone

    def remove_leaf(self, slot_id: int) -> int:
        if slot_id not in self.occupancy:
            raise ValueError(f"Slot {slot_id} is not occupied")
        if not self.is_leaf(slot_id):
            raise ValueError(f"Slot {slot_id} is not a leaf")
        return self._vacate(slot_id)

    def detach(self, slot_id: int) -> Optional[int]:
        """
        Remove a slot without replacement, rewiring its children to the
        grandparent. When the root goes, its lowest-id child takes over.
        """
        if slot_id not in self.occupancy:
            raise ValueError(f"Slot {slot_id} is not occupied")
        kids = self.children(slot_id)
        if slot_id == self.root:
            drone = self._vacate(slot_id)
            if kids:
                new_root = min(kids)
                self.root = new_root
                self.parent.pop(new_root, None)
                for child in kids:
                    if child != new_root:
                        self.parent[child] = new_root
            return drone
        grand = self.parent[slot_id]
        drone = self._vacate(slot_id)
        for child in kids:
            self.parent[child] = grand
        return drone

    def _relocate(self, source: int, target: int) -> int:
        drone = self._vacate(source)
        self._occupy(target, drone)
        return drone

    def apply_step(self, step: RecoveryStep) -> None:
        self._vacate(step.failed)
        if step.heir is not None:
            self._relocate(step.heir, step.failed)

    def apply_move(self, move: RebalanceMove) -> None:
        self._relocate(move.source, move.target)

    def apply_plan(self, plan: RecoveryPlan) -> None:
        for step in plan.steps:
            self.apply_step(step)
        for move in plan.moves:
            self.apply_move(move)

    # ------------------------------------------------------------------
    # Recovery

    def plan_recovery(self, failed: Iterable[int]) -> RecoveryPlan:
        """
        Outer-Level First recovery plan for a set of simultaneous failures.

        Failures are processed by non-increasing height, ties by lower slot
        id. Each heir is chosen on the tree as it stands after the earlier
        entries, ignoring failures that are still pending, and the plan
        ends with the rebalance moves. The tree itself is not modified.

        Raises:
            SwarmLostError: If every drone failed
        """
        pending: Set[int] = set(failed)
        unknown = pending - set(self.occupancy)
        if unknown:
            raise ValueError(f"Failed slots {sorted(unknown)} are not occupied")
        if pending and pending >= set(self.occupancy):
            raise SwarmLostError("All drones in the swarm have failed")

        work = self.copy()
        plan = RecoveryPlan()
        while pending:
            heights = work.heights()
            node = min(pending, key=lambda s: (-heights[s], s))
            pending.discard(node)
            heir = work.heir_of(node, dead=frozenset(pending | {node}))
            if heir is None:
                work._vacate(node)
                plan.steps.append(RecoveryStep(failed=node, heir=None, height=heights[node]))
                continue
            step = RecoveryStep(
                failed=node,
                heir=heir,
                height=heights[node],
                drone=work.occupancy[heir],
                hops=work.depth(heir) - work.depth(node),
                path=under_swarm_path(work.slot(heir).offset, work.slot(node).offset, self.params.r_min),
            )
            work.apply_step(step)
            plan.steps.append(step)
            logger.debug(f"Slot {node} (height {step.height}) replaced by heir {heir}")

        plan.moves = work.rebalance()
        return plan

    def rebalance(self) -> List[RebalanceMove]:
        """
        Move leaves from the deepest branches into the shallowest ones
        until the branch heights differ by at most one.

        Each move takes the highest-id leaf of a deepest branch to the
        lowest-id vacant slot, hanging off an occupied parent, of a
        shallowest branch.
        """
        moves: List[RebalanceMove] = []
        while True:
            branches = self.branch_heights()
            if len(branches) < 2:
                break
            deepest = max(branches.values())
            shallowest = min(branches.values())
            if deepest - shallowest <= 1:
                break

            deep = {b for b, h in branches.items() if h == deepest}
            shallow = {b for b, h in branches.items() if h == shallowest}
            donor = max(s for s in self.occupancy if self.branch(s) in deep and self.is_leaf(s))
            target = min(
                s.id for s in self.slots
                if s.id not in self.occupancy
                and (self.layout_parent.get(s.id) in self.occupancy)
                and (s.id in shallow or self.branch(s.id) in shallow)
            )
            move = RebalanceMove(
                drone=self.occupancy[donor],
                source=donor,
                target=target,
                path=under_swarm_path(self.slot(donor).offset, self.slot(target).offset, self.params.r_min),
            )
            self.apply_move(move)
            moves.append(move)
        return moves

    # ------------------------------------------------------------------
    # Reporting

    def complete_rings(self) -> int:
        """Deepest ring k such that rings 1..k are entirely occupied."""
        depth = 0
        level = 1
        while True:
            ring = [s.id for s in self.slots if s.level == level]
            if not ring or len(ring) < ring_capacity(level, self.params):
                return depth
            if not all(s in self.occupancy for s in ring):
                return depth
            depth = level
            level += 1

    def link_report(self) -> Dict[str, float]:
        """Minimum slot spacing and longest layout link of the layout."""
        offsets = np.array([[s.x, s.y] for s in self.slots])
        spacing = float(pdist(offsets).min()) if len(self.slots) > 1 else float("inf")
        longest = 0.0
        for child, parent in self.layout_parent.items():
            if parent is None:
                continue
            c, p = self.slot(child), self.slot(parent)
            longest = max(longest, math.hypot(c.x - p.x, c.y - p.y))
        return {
            "slots": float(len(self.slots)),
            "levels": float(self.slots[-1].level + 1),
            "min_spacing": spacing,
            "max_link": longest,
            "max_link_ratio": longest / self.params.r_max,
        }

    def layout_rows(self) -> List[Tuple[int, int, float, float, Optional[int], Optional[int]]]:
        """(slot id, level, x, y, parent id, heir id) for every slot."""
        heirs = self.heirs
        rows = []
        for s in self.slots:
            parent = self.parent.get(s.id) if s.id in self.occupancy else self.layout_parent.get(s.id)
            rows.append((s.id, s.level, s.x, s.y, parent, heirs.get(s.id)))
        return rows
