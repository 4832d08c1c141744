"""Episodic environments: a binary decision tree and a lava-grid navigator.

Both environments are goal-oriented (per-step reward is 0 or 1, emitted at
most once per episode, on reaching a goal state) and charge nonnegative step
costs. Transitions are deterministic; the only randomness in a rollout comes
from the policy.

State identifiers are opaque integers. Tabular policies consume them
directly (``state_count`` rows); feature-based policies consume the vector
returned by ``encode_features`` (``state_dim`` entries).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .core import Task

# Orientation indices and unit moves, grid coordinates are (x, y) with y
# increasing downwards (row order of the text map format).
ORIENTATIONS = "NESW"
_DELTAS = {0: (0, -1), 1: (1, 0), 2: (0, 1), 3: (-1, 0)}

MOVE, TURN_LEFT, TURN_RIGHT = 0, 1, 2


class GenerationError(RuntimeError):
    """Raised when task generation cannot produce a valid task."""


class Environment:
    """Behavioral contract shared by all environments.

    Attributes:
        action_count: size of the discrete action space.
        alpha_max: maximum achievable (undiscounted) trajectory cost; the
            practical upper budget bound.
        horizon_cap: hard episode length limit.
        state_count: number of tabular states, or None for feature envs.
        state_dim: feature-vector length, or None for tabular envs.

    ``reset(task)`` begins an episode and returns the initial state id;
    ``step(action)`` returns ``(state, reward, cost, done)``. Stepping a
    finished episode is an error.
    """

    action_count: int
    alpha_max: float
    horizon_cap: int
    state_count: int | None = None
    state_dim: int | None = None

    def reset(self, task: Task) -> int:
        raise NotImplementedError

    def step(self, action: int) -> tuple[int, float, float, bool]:
        raise NotImplementedError

    def encode_features(self, state: int) -> np.ndarray:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Binary tree
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BinaryTreeLayout:
    """A depth-H binary tree whose leaves carry strictly increasing costs.

    ``leaf_costs[0]`` must be 0 so that the leftmost leaf (and only it) is
    reachable under a zero deployment budget.
    """

    depth: int
    leaf_costs: tuple[float, ...]

    def __post_init__(self) -> None:
        if not 1 <= self.depth <= 20:
            raise ValueError(f"depth must be in [1, 20], got {self.depth}")
        n = 2**self.depth
        if len(self.leaf_costs) != n:
            raise ValueError(f"expected {n} leaf costs, got {len(self.leaf_costs)}")
        if self.leaf_costs[0] != 0.0:
            raise ValueError("leftmost leaf cost must be 0")
        for a, b in zip(self.leaf_costs, self.leaf_costs[1:]):
            if not a < b:
                raise ValueError("leaf costs must be strictly increasing")

    @classmethod
    def default(cls, depth: int) -> "BinaryTreeLayout":
        """Leaf i costs i; integer costs keep the budget search exact."""
        return cls(depth, tuple(float(i) for i in range(2**depth)))


class BinaryTreeEnv(Environment):
    """Walk from the root to a leaf, one Left/Right choice per level.

    States are node indices in breadth-first order (root = 0, node i at
    level h has index 2^h - 1 + i). Every leaf is a goal: the terminal step
    into leaf i yields reward 1 and charges the whole path cost
    ``leaf_costs[i]``; internal steps are free.
    """

    def __init__(self, layout: BinaryTreeLayout):
        self.layout = layout
        self.depth = layout.depth
        self.action_count = 2
        self.horizon_cap = layout.depth
        self.alpha_max = float(layout.leaf_costs[-1])
        self.state_count = 2 ** (layout.depth + 1) - 1
        self.state_dim = None
        self._level = 0
        self._index = 0
        self._done = True

    def reset(self, task: Task) -> int:
        self._level = 0
        self._index = 0
        self._done = False
        return 0

    def step(self, action: int) -> tuple[int, float, float, bool]:
        if self._done:
            raise RuntimeError("step() called on a finished episode")
        if action not in (0, 1):
            raise ValueError(f"invalid action {action}")
        self._index = 2 * self._index + action
        self._level += 1
        state = (1 << self._level) - 1 + self._index
        if self._level == self.depth:
            self._done = True
            return state, 1.0, float(self.layout.leaf_costs[self._index]), True
        return state, 0.0, 0.0, False


def binary_tree_env(depth: int) -> BinaryTreeEnv:
    """Default-cost tree of the given depth (leaf i costs i)."""
    return BinaryTreeEnv(BinaryTreeLayout.default(depth))


def binary_tree_task(depth: int, target_budget: float = 0.0) -> Task:
    return Task(id=0, target_budget=target_budget, payload=depth)


# ---------------------------------------------------------------------------
# Lava grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridTaskSpec:
    """Start pose and goal cell for one grid task."""

    start: tuple[int, int]
    orientation: int
    goal: tuple[int, int]


@dataclass(frozen=True)
class GridLayout:
    """Rectangular grid with lava cells, an agent start pose and a goal.

    A lava-free path from start to goal must exist, otherwise a zero
    deployment budget would be unsatisfiable.
    """

    width: int
    height: int
    lava_cells: frozenset[tuple[int, int]]
    agent_start: tuple[int, int]
    agent_orientation: int
    goal: tuple[int, int]

    def __post_init__(self) -> None:
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must be at least 1x1")
        for cell in [self.agent_start, self.goal, *self.lava_cells]:
            if not self._in_bounds(cell):
                raise ValueError(f"cell {cell} out of bounds")
        if self.agent_orientation not in (0, 1, 2, 3):
            raise ValueError("orientation must be in {0, 1, 2, 3}")
        if self.agent_start in self.lava_cells:
            raise ValueError("agent start must not be a lava cell")
        if self.goal in self.lava_cells:
            raise ValueError("goal must not be a lava cell")
        if self.agent_start == self.goal:
            raise ValueError("agent start and goal must differ")
        if lava_free_distance(self, self.agent_start, self.goal) is None:
            raise ValueError("no lava-free path from start to goal")

    def _in_bounds(self, cell: tuple[int, int]) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    # -- plain-text map format ------------------------------------------
    #
    # One header line `orient=<NESW>` then one row per line, one character
    # per cell: '.' free, '#' lava, 'A' agent start, 'G' goal.

    def to_text(self) -> str:
        rows = []
        for y in range(self.height):
            row = []
            for x in range(self.width):
                if (x, y) == self.agent_start:
                    row.append("A")
                elif (x, y) == self.goal:
                    row.append("G")
                elif (x, y) in self.lava_cells:
                    row.append("#")
                else:
                    row.append(".")
            rows.append("".join(row))
        header = f"orient={ORIENTATIONS[self.agent_orientation]}"
        return "\n".join([header, *rows]) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "GridLayout":
        lines = text.splitlines()
        if not lines or not lines[0].startswith("orient="):
            raise ValueError("missing 'orient=' header line")
        orient_char = lines[0][len("orient=") :]
        if orient_char not in ORIENTATIONS:
            raise ValueError(f"bad orientation {orient_char!r}")
        rows = lines[1:]
        if not rows:
            raise ValueError("map has no rows")
        width = len(rows[0])
        lava = set()
        start = goal = None
        for y, row in enumerate(rows):
            if len(row) != width:
                raise ValueError("ragged map rows")
            for x, ch in enumerate(row):
                if ch == "#":
                    lava.add((x, y))
                elif ch == "A":
                    start = (x, y)
                elif ch == "G":
                    goal = (x, y)
                elif ch != ".":
                    raise ValueError(f"bad map character {ch!r}")
        if start is None or goal is None:
            raise ValueError("map must contain exactly one 'A' and one 'G'")
        return cls(
            width=width,
            height=len(rows),
            lava_cells=frozenset(lava),
            agent_start=start,
            agent_orientation=ORIENTATIONS.index(orient_char),
            goal=goal,
        )


def lava_free_distance(
    layout: GridLayout, start: tuple[int, int], goal: tuple[int, int]
) -> int | None:
    """BFS move count from start to goal avoiding lava, or None if cut off."""
    if start == goal:
        return 0
    seen = {start}
    queue = deque([(start, 0)])
    while queue:
        (x, y), d = queue.popleft()
        for dx, dy in _DELTAS.values():
            nxt = (x + dx, y + dy)
            if nxt == goal:
                return d + 1
            if (
                0 <= nxt[0] < layout.width
                and 0 <= nxt[1] < layout.height
                and nxt not in layout.lava_cells
                and nxt not in seen
            ):
                seen.add(nxt)
                queue.append((nxt, d + 1))
    return None


DEFAULT_PUDDLE_MAP = """orient=E
#############
#A..........#
#.....#.....#
#....###....#
#...#####...#
#..#######..#
#..#######..#
#..#######.G#
#############
"""


def default_puddle_layout() -> GridLayout:
    """13x9 grid: a lava border ring plus a graded central puddle.

    The puddle thins row by row toward the top (crossing it costs 7, 5, 3
    or 1 depending on the row) and the only free crossing is the corridor
    cell above its apex. The ring makes hugging the grid edge costly, so a
    random policy almost never stumbles onto a lava-free route, while the
    graded thickness gives budget curricula a chain of slightly-cheaper
    crossings to ride. Start and goal sit in opposite corners, which makes
    every crossing row roughly length-equivalent.
    """
    return GridLayout.from_text(DEFAULT_PUDDLE_MAP)


class PuddleGridEnv(Environment):
    """Oriented grid navigation with lava costs.

    Actions: 0 = move one cell in the facing direction (no-op when the move
    would leave the grid), 1 = turn left, 2 = turn right. Every action takes
    one time step. A step whose resulting cell is lava charges cost 1.
    Reaching the goal ends the episode with reward 1; exhausting the horizon
    ends it with reward 0.

    State ids pack (cell, orientation, goal cell); ``encode_features`` maps
    them to the 8-vector (x/W, y/H, orientation one-hot, gx/W, gy/H).
    """

    def __init__(self, layout: GridLayout, horizon: int = 200):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.layout = layout
        self.horizon = horizon
        self.action_count = 3
        self.horizon_cap = horizon
        # Worst case: every step ends on lava.
        self.alpha_max = float(horizon)
        self.state_count = None
        self.state_dim = 8
        self._cells = layout.width * layout.height
        self._x = 0
        self._y = 0
        self._orient = 0
        self._goal = layout.goal
        self._steps = 0
        self._done = True

    def reset(self, task: Task) -> int:
        spec = task.payload
        if spec is None:
            start = self.layout.agent_start
            orient = self.layout.agent_orientation
            goal = self.layout.goal
        else:
            start, orient, goal = spec.start, spec.orientation, spec.goal
        self._x, self._y = start
        self._orient = orient
        self._goal = goal
        self._steps = 0
        self._done = False
        return self._state_id()

    def _state_id(self) -> int:
        w = self.layout.width
        goal_idx = self._goal[1] * w + self._goal[0]
        cell_idx = self._y * w + self._x
        return (goal_idx * 4 + self._orient) * self._cells + cell_idx

    def encode_features(self, state: int) -> np.ndarray:
        w, h = self.layout.width, self.layout.height
        cell_idx = state % self._cells
        rest = state // self._cells
        orient = rest % 4
        goal_idx = rest // 4
        feats = np.zeros(8)
        feats[0] = (cell_idx % w) / w
        feats[1] = (cell_idx // w) / h
        feats[2 + orient] = 1.0
        feats[6] = (goal_idx % w) / w
        feats[7] = (goal_idx // w) / h
        return feats

    def step(self, action: int) -> tuple[int, float, float, bool]:
        if self._done:
            raise RuntimeError("step() called on a finished episode")
        if action == MOVE:
            dx, dy = _DELTAS[self._orient]
            nx, ny = self._x + dx, self._y + dy
            if 0 <= nx < self.layout.width and 0 <= ny < self.layout.height:
                self._x, self._y = nx, ny
        elif action == TURN_LEFT:
            self._orient = (self._orient - 1) % 4
        elif action == TURN_RIGHT:
            self._orient = (self._orient + 1) % 4
        else:
            raise ValueError(f"invalid action {action}")
        self._steps += 1
        cost = 1.0 if (self._x, self._y) in self.layout.lava_cells else 0.0
        if (self._x, self._y) == self._goal:
            self._done = True
            return self._state_id(), 1.0, cost, True
        if self._steps >= self.horizon:
            self._done = True
            return self._state_id(), 0.0, cost, True
        return self._state_id(), 0.0, cost, False


def puddle_grid_env(layout: GridLayout, horizon: int = 200) -> PuddleGridEnv:
    return PuddleGridEnv(layout, horizon)


def single_grid_task() -> Task:
    """The fixed task of a single-task grid (payload None: use the layout pose)."""
    return Task(id=0, target_budget=0.0, payload=None)


def generate_multi_tasks(
    layout_base: GridLayout, n: int, rng_seed: int
) -> list[Task]:
    """Sample ``n`` distinct tasks with start and goal on opposite sides of
    the lava barrier, all with a zero deployment budget.

    Sides are defined by the barrier's column span: one cell pool has
    x < min lava x, the other has x > max lava x. Orientation of the start
    pose is sampled uniformly. Every task is checked for a lava-free path.
    Deterministic for a fixed seed.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    # The barrier is the interior lava (a border ring does not separate
    # anything); its column span defines the two side pools.
    interior_xs = [
        x
        for x, y in layout_base.lava_cells
        if 1 <= x <= layout_base.width - 2 and 1 <= y <= layout_base.height - 2
    ]
    if not interior_xs:
        raise GenerationError("layout has no lava barrier to separate sides")
    lo_x, hi_x = min(interior_xs), max(interior_xs)
    left = [
        (x, y)
        for x in range(0, lo_x)
        for y in range(layout_base.height)
        if (x, y) not in layout_base.lava_cells
    ]
    right = [
        (x, y)
        for x in range(hi_x + 1, layout_base.width)
        for y in range(layout_base.height)
        if (x, y) not in layout_base.lava_cells
    ]
    if not left or not right:
        raise GenerationError("no free cells on both sides of the barrier")

    rng = np.random.default_rng(rng_seed)
    tasks: list[Task] = []
    seen: set[tuple] = set()
    attempts = 0
    max_attempts = 10_000 * n
    while len(tasks) < n:
        attempts += 1
        if attempts > max_attempts:
            raise GenerationError(f"could not generate {n} distinct tasks")
        swap = bool(rng.integers(2))
        start_pool, goal_pool = (right, left) if swap else (left, right)
        start = start_pool[int(rng.integers(len(start_pool)))]
        goal = goal_pool[int(rng.integers(len(goal_pool)))]
        orient = int(rng.integers(4))
        key = (start, goal, orient)
        if key in seen:
            continue
        if lava_free_distance(layout_base, start, goal) is None:
            continue
        seen.add(key)
        tasks.append(
            Task(
                id=len(tasks),
                target_budget=0.0,
                payload=GridTaskSpec(start=start, orientation=orient, goal=goal),
            )
        )
    return tasks
