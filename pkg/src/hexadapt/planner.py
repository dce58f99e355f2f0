"""Maze environment and the UCT planner over repertoire skills.

The maze is an ASCII grid of 0.5-unit cells; the robot is a disc.
``apply_motion`` sweeps the disc along the commanded straight-line
translation and truncates at the first wall contact (minus a small
safety margin), interpolating yaw linearly.  Wall cells are merged
into row runs and tested against the segment as rounded rectangles
(the Minkowski sum of rectangle and disc), fully vectorized.

``mcts_plan`` searches sequences of skills.  Transitions are
deterministic: each skill's repertoire displacement, corrected by the
transition-GP posterior means, composed into the world frame and then
wall-truncated.  The return of a simulated path is the normalized
progress toward the goal plus a terminal bonus, minus a penalty per
collision.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .geom import Pose2, se2_compose, wrap_angle


class MazeParseError(ValueError):
    pass


@dataclass
class Maze:
    wall_mask: np.ndarray          # bool (rows, cols), row 0 at the top
    cell_size: float
    start_pose: Pose2
    goal_xy: tuple[float, float]
    goal_radius: float
    robot_radius: float
    nav_euclid_weight: float = 0.25
    # merged wall rectangles (x_lo, x_hi, y_lo, y_hi), world coordinates
    rects: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.rects is None:
            self.rects = _merge_wall_rects(self.wall_mask, self.cell_size)
        xlo, xhi = self.rects[:, 0], self.rects[:, 1]
        ylo, yhi = self.rects[:, 2], self.rects[:, 3]
        self._corner_x = np.concatenate([xlo, xlo, xhi, xhi])
        self._corner_y = np.concatenate([ylo, yhi, ylo, yhi])
        self._field = None

    @property
    def rows(self) -> int:
        return self.wall_mask.shape[0]

    @property
    def cols(self) -> int:
        return self.wall_mask.shape[1]

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        # world y grows upward; text row 0 is the top row
        x = (col + 0.5) * self.cell_size
        y = (self.rows - row - 0.5) * self.cell_size
        return x, y

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        col = min(max(int(x / self.cell_size), 0), self.cols - 1)
        row = min(max(self.rows - 1 - int(y / self.cell_size), 0), self.rows - 1)
        return row, col

    def goal_distance(self, pose: Pose2) -> float:
        return math.hypot(pose.x - self.goal_xy[0], pose.y - self.goal_xy[1])

    def at_goal(self, pose: Pose2) -> bool:
        return self.goal_distance(pose) <= self.goal_radius

    def _distance_field(self) -> np.ndarray:
        """Breadth-first flood fill from the goal over free cells."""
        if self._field is None:
            field = np.full(self.wall_mask.shape, np.inf)
            start = self.cell_of(*self.goal_xy)
            field[start] = 0.0
            queue = deque([start])
            while queue:
                r, c = queue.popleft()
                for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    nr, nc = r + dr, c + dc
                    if 0 <= nr < self.rows and 0 <= nc < self.cols and \
                            not self.wall_mask[nr, nc] and np.isinf(field[nr, nc]):
                        field[nr, nc] = field[r, c] + 1.0
                        queue.append((nr, nc))
            self._field = field
        return self._field

    def nav_distance(self, pose: Pose2) -> float:
        """Planning potential: geodesic corridor distance to the goal.

        The straight-line distance would create local minima behind
        walls; the flood-fill field follows the corridors, with a small
        Euclidean term for a sub-cell gradient.
        """
        cells = float(self._distance_field()[self.cell_of(pose.x, pose.y)])
        if math.isinf(cells):
            cells = float(self.rows * self.cols)
        return cells * self.cell_size + self.nav_euclid_weight * self.goal_distance(pose)


def _merge_wall_rects(mask: np.ndarray, cell: float) -> np.ndarray:
    rows, cols = mask.shape
    rects = []
    for r in range(rows):
        c = 0
        while c < cols:
            if mask[r, c]:
                c0 = c
                while c < cols and mask[r, c]:
                    c += 1
                y_hi = (rows - r) * cell
                rects.append((c0 * cell, c * cell, y_hi - cell, y_hi))
            else:
                c += 1
    return np.array(rects, dtype=np.float64).reshape(-1, 4)


def load_maze(text: str, cfg: Config | None = None) -> Maze:
    """Parse an ASCII maze: '#' wall, '.' free, 'S' start, 'G' goal."""
    cfg = cfg or Config()
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise MazeParseError("empty maze")
    width = len(lines[0])
    start = goal = None
    for r, line in enumerate(lines):
        if len(line) != width:
            raise MazeParseError(f"line {r + 1}: ragged row (len {len(line)} != {width})")
        for c, ch in enumerate(line):
            if ch == "S":
                if start is not None:
                    raise MazeParseError(f"line {r + 1}, col {c + 1}: duplicate start")
                start = (r, c)
            elif ch == "G":
                if goal is not None:
                    raise MazeParseError(f"line {r + 1}, col {c + 1}: duplicate goal")
                goal = (r, c)
            elif ch not in "#.":
                raise MazeParseError(f"line {r + 1}, col {c + 1}: bad char {ch!r}")
    if start is None:
        raise MazeParseError("no start cell 'S'")
    if goal is None:
        raise MazeParseError("no goal cell 'G'")
    mask = np.array([[ch == "#" for ch in line] for line in lines], dtype=bool)
    border = np.concatenate([mask[0], mask[-1], mask[:, 0], mask[:, -1]])
    if not border.all():
        raise MazeParseError("maze border must be fully walled")
    maze = Maze(mask, cfg.cell_size, Pose2(), (0.0, 0.0),
                cfg.goal_radius, cfg.robot_radius, cfg.nav_euclid_weight)
    sx, sy = maze.cell_center(*start)
    maze.start_pose = Pose2(sx, sy, 0.0)
    maze.goal_xy = maze.cell_center(*goal)
    return maze


def load_maze_file(path, cfg: Config | None = None) -> Maze:
    with open(path, "r", encoding="utf-8") as fh:
        return load_maze(fh.read(), cfg)


def maze_solvable(maze: Maze) -> bool:
    """Breadth-first search over free cells from start to goal."""
    rows, cols = maze.wall_mask.shape
    sx, sy = maze.start_pose.x, maze.start_pose.y
    start = (rows - 1 - int(sy / maze.cell_size), int(sx / maze.cell_size))
    gx, gy = maze.goal_xy
    goal = (rows - 1 - int(gy / maze.cell_size), int(gx / maze.cell_size))
    seen = {start}
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        if (r, c) == goal:
            return True
        for dr, dc in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < rows and 0 <= nc < cols and not maze.wall_mask[nr, nc] \
                    and (nr, nc) not in seen:
                seen.add((nr, nc))
                queue.append((nr, nc))
    return False


def _first_hit(maze: Maze, p0x, p0y, dx, dy) -> float:
    """Earliest t in [0,1] where the disc touches a wall, or inf."""
    r = maze.robot_radius
    xlo, xhi = maze.rects[:, 0], maze.rects[:, 1]
    ylo, yhi = maze.rects[:, 2], maze.rects[:, 3]
    best = np.inf

    # slab bands: rectangle expanded by r along one axis only
    for ax_lo, ax_hi, bx_lo, bx_hi, p_a, p_b, d_a, d_b in (
            (xlo - r, xhi + r, ylo, yhi, p0x, p0y, dx, dy),
            (ylo - r, yhi + r, xlo, xhi, p0y, p0x, dy, dx)):
        with np.errstate(divide="ignore", invalid="ignore"):
            if d_a != 0.0:
                t1 = (ax_lo - p_a) / d_a
                t2 = (ax_hi - p_a) / d_a
                ta_lo, ta_hi = np.minimum(t1, t2), np.maximum(t1, t2)
            else:
                inside = (p_a >= ax_lo) & (p_a <= ax_hi)
                ta_lo = np.where(inside, -np.inf, np.inf)
                ta_hi = np.where(inside, np.inf, -np.inf)
            if d_b != 0.0:
                t1 = (bx_lo - p_b) / d_b
                t2 = (bx_hi - p_b) / d_b
                tb_lo, tb_hi = np.minimum(t1, t2), np.maximum(t1, t2)
            else:
                inside = (p_b >= bx_lo) & (p_b <= bx_hi)
                tb_lo = np.where(inside, -np.inf, np.inf)
                tb_hi = np.where(inside, np.inf, -np.inf)
        enter = np.maximum(ta_lo, tb_lo)
        exit_ = np.minimum(ta_hi, tb_hi)
        hit = (enter <= exit_) & (exit_ >= 0.0) & (enter <= 1.0)
        if hit.any():
            best = min(best, float(np.maximum(enter[hit], 0.0).min()))

    # corner discs
    cx, cy = maze._corner_x, maze._corner_y
    a = dx * dx + dy * dy
    if a > 0.0:
        ex, ey = p0x - cx, p0y - cy
        b = 2.0 * (dx * ex + dy * ey)
        c0 = ex * ex + ey * ey - r * r
        disc = b * b - 4.0 * a * c0
        ok = disc >= 0.0
        if ok.any():
            sq = np.sqrt(disc[ok])
            t = (-b[ok] - sq) / (2.0 * a)
            t = t[(t >= 0.0) & (t <= 1.0)]
            if t.size:
                best = min(best, float(t.min()))
    return best


def apply_motion(maze: Maze, pose: Pose2, disp: Pose2,
                 margin: float = 1e-3) -> tuple[Pose2, bool]:
    """Traverse a body-frame displacement, truncating at the first wall."""
    c, s = math.cos(pose.yaw), math.sin(pose.yaw)
    dx = c * disp.x - s * disp.y
    dy = s * disp.x + c * disp.y
    if dx == 0.0 and dy == 0.0:
        if disp.yaw == 0.0:
            return pose, False
        return Pose2(pose.x, pose.y, pose.yaw + disp.yaw), False
    t_hit = _first_hit(maze, pose.x, pose.y, dx, dy)
    if t_hit > 1.0:
        return Pose2(pose.x + dx, pose.y + dy, pose.yaw + disp.yaw), False
    t = max(t_hit - margin, 0.0)
    return Pose2(pose.x + t * dx, pose.y + t * dy,
                 pose.yaw + t * disp.yaw), True


# --------------------------------------------------------------------------
# planning

@dataclass
class Skill:
    """One planner action: a repertoire skill's endpoint displacement."""

    x: float
    y: float
    yaw: float
    ref: object = None


@dataclass
class MCTSParams:
    iterations: int = 500
    horizon: int = 6
    uct_c: float = 1.414
    discount: float = 1.0
    collision_penalty: float = 0.5
    goal_bonus: float = 10.0
    rollout_greedy_k: int = 5

    @classmethod
    def from_config(cls, cfg: Config) -> "MCTSParams":
        return cls(cfg.mcts_iterations, cfg.mcts_horizon, cfg.uct_c,
                   cfg.mcts_discount, cfg.collision_penalty, cfg.goal_bonus,
                   cfg.rollout_greedy_k)


class _Node:
    __slots__ = ("pose", "depth", "collisions", "terminal",
                 "visits", "child_n", "child_w", "children", "untried")

    def __init__(self, pose, depth, collisions, terminal, n_actions, rng):
        self.pose = pose
        self.depth = depth
        self.collisions = collisions
        self.terminal = terminal
        self.visits = 0
        self.child_n = np.zeros(n_actions)
        self.child_w = np.zeros(n_actions)
        self.children: dict[int, _Node] = {}
        self.untried = list(rng.permutation(n_actions)) if not terminal else []


def sample_skill_set(skills: list[Skill], rng, cfg: Config) -> list[Skill]:
    """Subsample the action set for one planning decision.

    Directional coverage first (nearest skill to each of k evenly spaced
    targets on a circle), topped up with uniform-random skills.
    """
    total = min(cfg.action_set_size, len(skills))
    if len(skills) <= total:
        return list(skills)
    xy = np.array([[sk.x, sk.y] for sk in skills])
    angles = 2.0 * np.pi * np.arange(cfg.action_directional) / cfg.action_directional
    targets = cfg.action_circle_radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    d2 = ((xy[None, :, :] - targets[:, None, :]) ** 2).sum(axis=2)
    picked: list[int] = []
    seen = set()
    for i in np.argmin(d2, axis=1):
        if int(i) not in seen:
            seen.add(int(i))
            picked.append(int(i))
    remaining = [i for i in range(len(skills)) if i not in seen]
    n_extra = min(total - len(picked), len(remaining))
    if n_extra > 0:
        extra = rng.choice(len(remaining), size=n_extra, replace=False)
        picked.extend(remaining[int(i)] for i in extra)
    return [skills[i] for i in picked]


def corrected_displacements(skills: list[Skill], tgp) -> np.ndarray:
    """Body-frame (x, y, yaw) per skill after transition-GP correction."""
    raw = np.array([[sk.x, sk.y, sk.yaw] for sk in skills])
    if tgp is not None:
        raw = raw + tgp.correct_many(raw[:, :2])
    return raw


def mcts_plan(maze: Maze, pose: Pose2, skills: list[Skill], tgp,
              params: MCTSParams, rng) -> Skill:
    """UCT search; returns the root action with the most visits."""
    if not skills:
        raise ValueError("empty action set")
    disp = corrected_displacements(skills, tgp)
    disps = [Pose2(*row) for row in disp]
    n_actions = len(skills)
    d0 = max(maze.nav_distance(pose), maze.goal_radius)

    def step(node_pose, a):
        new_pose, collided = apply_motion(maze, node_pose, disps[a])
        return new_pose, collided, maze.at_goal(new_pose)

    root = _Node(pose, 0, 0, False, n_actions, rng)
    for _ in range(params.iterations):
        node = root
        path = []
        # select / expand
        while True:
            if node.terminal or node.depth >= params.horizon:
                leaf = node
                break
            if node.untried:
                a = node.untried.pop()
                new_pose, collided, at_goal = step(node.pose, a)
                child = _Node(new_pose, node.depth + 1,
                              node.collisions + int(collided),
                              at_goal, n_actions, rng)
                node.children[a] = child
                path.append((node, a))
                leaf = child
                break
            q = node.child_w / node.child_n
            # min-max normalize Q so uct_c keeps its [0, 1] calibration
            # regardless of the return scale at this node
            q_lo, q_hi = q.min(), q.max()
            if q_hi > q_lo:
                q = (q - q_lo) / (q_hi - q_lo)
            u = q + params.uct_c * np.sqrt(math.log(node.visits) / node.child_n)
            a = int(np.argmax(u))
            path.append((node, a))
            node = node.children[a]

        # rollout: tournament-greedy on the nav field
        cur_pose = leaf.pose
        depth = leaf.depth
        collisions = leaf.collisions
        reached = leaf.terminal
        while not reached and depth < params.horizon:
            if params.rollout_greedy_k > 0:
                cand = rng.integers(n_actions, size=params.rollout_greedy_k)
                a = min((int(i) for i in cand),
                        key=lambda i: maze.nav_distance(
                            se2_compose(cur_pose, disps[i])))
            else:
                a = int(rng.integers(n_actions))
            cur_pose, collided, reached = step(cur_pose, a)
            collisions += int(collided)
            depth += 1

        d_end = maze.nav_distance(cur_pose)
        ret = (d0 - d_end) / d0 - params.collision_penalty * collisions
        if reached:
            ret += params.goal_bonus

        # backpropagate
        leaf.visits += 1
        for parent, a in path:
            parent.visits += 1
            parent.child_n[a] += 1.0
            parent.child_w[a] += ret

    best = max(range(n_actions),
               key=lambda a: (root.child_n[a], root.child_w[a], -a))
    return skills[best]
