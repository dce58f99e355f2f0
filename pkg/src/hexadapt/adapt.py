"""Online adaptation episodes: plan, execute, score, update, repeat.

Every variant runs the same loop — MCTS picks the next skill from its
repertoire, the skill is realized on the damaged robot, the robot
observes its actual displacement (after any wall truncation), scores
how faithfully the skill was reproduced, and updates its Gaussian
processes — without ever resetting the robot.  Variants differ only
in the repertoire they plan over and in how a skill is realized:

* ``hte``          hierarchical stack; a UCB bandit over the feasible
                   secondary contact patterns picks how to execute.
* ``perfect_hte``  hierarchical stack; the pattern is chosen once from
                   known damage (most legs used, none of them damaged).
* ``rte2d``        flat 2-D repertoire, one way per skill.
* ``rte8d``        flat 8-D repertoire; planning works on (x, y) cells
                   and the UCB bandit picks among the cell's occupied
                   pattern slots.
* ``aprol_lite``   several flat 2-D repertoires trained under damage
                   priors; the one with the best recent reproduction
                   scores is active each step.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .archive import GridArchive
from .config import Config
from .geom import Pose2, se2_compose, se2_relative, wrap_angle
from .gp import GPModel, TransitionModel, epsilon_score, ucb_select
from .hexasim import DamageSpec, SimModel, damage_name, gait_step
from .hierarchy import HBRStack
from .planner import (MCTSParams, Maze, Skill, apply_motion,
                      corrected_displacements, maze_solvable, mcts_plan,
                      sample_skill_set)

log = logging.getLogger(__name__)

VARIANTS = ("hte", "perfect_hte", "rte2d", "rte8d", "aprol_lite")


class EpisodeConfigError(ValueError):
    pass


@dataclass
class VariantConfig:
    kind: str
    cfg: Config
    stack: HBRStack | None = None
    flat: GridArchive | None = None
    priors: list[tuple[DamageSpec, GridArchive]] | None = None
    max_actions: int | None = None

    def __post_init__(self):
        if self.kind not in VARIANTS:
            raise EpisodeConfigError(f"unknown variant {self.kind!r}")
        if self.kind in ("hte", "perfect_hte") and self.stack is None:
            raise EpisodeConfigError(f"{self.kind} needs a trained stack")
        if self.kind in ("rte2d", "rte8d") and self.flat is None:
            raise EpisodeConfigError(f"{self.kind} needs a flat repertoire")
        if self.kind == "aprol_lite" and not self.priors:
            raise EpisodeConfigError("aprol_lite needs prior repertoires")


@dataclass
class StepRecord:
    step: int
    skill_bd: tuple[float, float, float]     # desired x, y, yaw
    pattern: str                             # '' when the variant has none
    predicted: tuple[float, float, float]    # GP-corrected planner estimate
    executed: tuple[float, float, float]     # observed body-frame displacement
    epsilon: float
    pose: tuple[float, float, float]
    collided: bool
    fallback: bool
    goal_dist: float


@dataclass
class EpisodeLog:
    variant: str
    damage: str
    seed: int
    steps: list[StepRecord] = field(default_factory=list)
    success: bool = False

    @property
    def actions_used(self) -> int:
        return len(self.steps)


def perfect_pattern(dmg: DamageSpec, middle) -> np.ndarray | None:
    """Feasible pattern using the most legs while avoiding damaged ones.

    Ties prefer the pattern backed by the most middle-layer elites,
    then the lowest bit string; returns None (with a warning) when no
    stored pattern avoids the damage.
    """
    counts = middle.pattern_counts()
    best_key = None
    best_rank = None
    for key in sorted(counts):
        bits = np.frombuffer(key, dtype=np.uint8)
        if any(bits[l - 1] for l in dmg.blocked_legs):
            continue
        rank = (int(bits.sum()), counts[key])
        if best_rank is None or rank > best_rank:
            best_rank = rank
            best_key = key
    if best_key is None:
        log.warning("no stored pattern avoids damage %s; falling back to "
                    "unconstrained execution", damage_name(dmg))
        return None
    return np.frombuffer(best_key, dtype=np.uint8).copy()


def aprol_select(histories: list[list[float]], rng) -> int:
    """Active repertoire: best mean of the last <=5 scores, untried = 1.0."""
    scores = np.array([1.0 if not h else float(np.mean(h[-5:]))
                       for h in histories])
    best = scores.max()
    ties = np.flatnonzero(scores == best)
    return int(ties[rng.integers(len(ties))])


def _pattern_str(pattern) -> str:
    return "" if pattern is None else "".join(str(int(b)) for b in pattern)


def _skill_of(elite) -> Skill:
    return Skill(float(elite.bd_primary[0]), float(elite.bd_primary[1]),
                 float(elite.yaw), ref=elite)


def _desired_vec(skill: Skill) -> np.ndarray:
    return np.array([skill.x, skill.y, skill.yaw / math.pi])


class _FlatExecutor:
    """3-second flat-controller execution with per-damage memoization."""

    def __init__(self, model: SimModel):
        self.model = model
        self._cache: dict = {}

    def run(self, elite, dmg: DamageSpec) -> Pose2:
        key = (elite.order, dmg.key)
        disp = self._cache.get(key)
        if disp is None:
            d = gait_step(elite.genotype.reshape(6, 6), dmg, self.model).displacement
            disp = se2_compose(se2_compose(d, d), d)
            self._cache[key] = disp
        return disp


def _norm_xy(x: float, y: float, cfg: Config) -> tuple[float, float]:
    b = cfg.top_bound
    return (x + b) / (2.0 * b), (y + b) / (2.0 * b)


def _pattern_input(skill: Skill, pattern, cfg: Config) -> np.ndarray:
    nx, ny = _norm_xy(skill.x, skill.y, cfg)
    return np.concatenate(([nx, ny], np.asarray(pattern, dtype=np.float64)))


def _cells_of(flat: GridArchive) -> list[list]:
    """Occupied (x, y) cells of an 8-D archive; slots sorted best-first."""
    groups: dict[tuple, list] = {}
    for e in flat.elites:
        key = flat.cell_index(e.bd_primary)
        groups.setdefault(key, []).append(e)
    cells = []
    for key in sorted(groups):
        slots = sorted(groups[key], key=lambda e: (-e.fitness, e.order))
        cells.append(slots)
    return cells


def run_episode(v: VariantConfig, maze: Maze, dmg: DamageSpec,
                seed: int) -> EpisodeLog:
    """One adaptation episode; deterministic given (variant, maze, dmg, seed)."""
    if not maze_solvable(maze):
        raise EpisodeConfigError("maze has no free path from start to goal")
    cfg = v.cfg
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    params = MCTSParams.from_config(cfg)
    max_actions = v.max_actions if v.max_actions is not None else cfg.max_actions
    gp_kw = dict(lengthscale=cfg.gp_lengthscale, signal_var=cfg.gp_signal_var,
                 noise_var=cfg.gp_noise_var)

    # per-kind planning state
    if v.kind in ("hte", "perfect_hte"):
        skills_all = [_skill_of(e) for e in v.stack.top.elites]
        tgp = TransitionModel(**gp_kw)
        patterns = v.stack.feasible_patterns()
        eps_gp = GPModel(2 + 6, cfg.eps_gp_lengthscale, cfg.gp_signal_var,
                         cfg.gp_noise_var) if v.kind == "hte" else None
        fixed_pattern = perfect_pattern(dmg, v.stack.middle) \
            if v.kind == "perfect_hte" else None
    elif v.kind in ("rte2d", "rte8d"):
        executor = _FlatExecutor(SimModel(cfg))
        tgp = TransitionModel(**gp_kw)
        if v.kind == "rte2d":
            skills_all = [_skill_of(e) for e in v.flat.elites]
            eps_gp = None
        else:
            cells = _cells_of(v.flat)
            skills_all = []
            for slots in cells:
                rep = slots[0]
                skills_all.append(Skill(float(rep.bd_primary[0]),
                                        float(rep.bd_primary[1]),
                                        float(rep.yaw), ref=slots))
            eps_gp = GPModel(2 + 6, cfg.eps_gp_lengthscale,
                             cfg.gp_signal_var, cfg.gp_noise_var)
    else:  # aprol_lite
        executor = _FlatExecutor(SimModel(cfg))
        prior_skills = [[_skill_of(e) for e in rep.elites]
                        for _, rep in v.priors]
        tgps = [TransitionModel(**gp_kw) for _ in v.priors]
        histories: list[list[float]] = [[] for _ in v.priors]

    episode = EpisodeLog(v.kind, damage_name(dmg), seed)
    pose = maze.start_pose

    for step_i in range(max_actions):
        # --- plan ---
        if v.kind == "aprol_lite":
            active = aprol_select(histories, rng)
            skills_all = prior_skills[active]
            tgp = tgps[active]
        action_set = sample_skill_set(skills_all, rng, cfg)
        skill = mcts_plan(maze, pose, action_set, tgp, params, rng)
        predicted = corrected_displacements([skill], tgp)[0]

        # --- realize ---
        pattern = None
        fallback = False
        if v.kind == "hte":
            idx = ucb_select(eps_gp, [_pattern_input(skill, p, cfg)
                                      for p in patterns],
                             cfg.ucb_beta, rng)
            pattern = patterns[idx]
            t = v.stack.exec_top(skill.ref, pattern, dmg)
            sim_disp, fallback = t.displacement, t.fallback
        elif v.kind == "perfect_hte":
            pattern = fixed_pattern
            t = v.stack.exec_top(skill.ref, pattern, dmg)
            sim_disp, fallback = t.displacement, t.fallback
        elif v.kind == "rte2d":
            sim_disp = executor.run(skill.ref, dmg)
        elif v.kind == "rte8d":
            slots = skill.ref
            idx = ucb_select(eps_gp, [_pattern_input(_skill_of(s),
                                                     s.bd_secondary, cfg)
                                      for s in slots],
                             cfg.ucb_beta, rng)
            chosen = slots[idx]
            pattern = chosen.bd_secondary
            skill = _skill_of(chosen)
            sim_disp = executor.run(chosen, dmg)
        else:  # aprol_lite
            sim_disp = executor.run(skill.ref, dmg)

        # --- execute against the maze, observe without resets ---
        new_pose, collided = apply_motion(maze, pose, sim_disp)
        observed = se2_relative(pose, new_pose)
        des = _desired_vec(skill)
        obs = np.array([observed.x, observed.y, observed.yaw / math.pi])
        eps = epsilon_score(obs, des, cfg.eps_k, cfg.eps_c, cfg.eps_denom_floor)

        # --- learn ---
        skill_xy = np.array([skill.x, skill.y])
        residual = (observed.x - skill.x, observed.y - skill.y,
                    wrap_angle(observed.yaw - skill.yaw))
        tgp.update(skill_xy, residual)
        if v.kind == "hte":
            eps_gp.update(_pattern_input(skill, pattern, cfg), eps)
        elif v.kind == "rte8d":
            eps_gp.update(_pattern_input(skill, pattern, cfg), eps)
        elif v.kind == "aprol_lite":
            histories[active].append(eps)

        pose = new_pose
        episode.steps.append(StepRecord(
            step=step_i,
            skill_bd=(skill.x, skill.y, skill.yaw),
            pattern=_pattern_str(pattern),
            predicted=tuple(float(x) for x in predicted),
            executed=(observed.x, observed.y, observed.yaw),
            epsilon=eps,
            pose=(pose.x, pose.y, pose.yaw),
            collided=collided,
            fallback=fallback,
            goal_dist=maze.goal_distance(pose),
        ))
        if maze.at_goal(pose):
            episode.success = True
            break

    return episode


# --------------------------------------------------------------------------
# CSV serialization (one row per action plus a one-row summary)

_F = "{:.17g}".format

STEP_HEADER = ("step,skill_x,skill_y,skill_yaw,pattern,pred_dx,pred_dy,"
               "pred_dyaw,exec_dx,exec_dy,exec_dyaw,epsilon,pose_x,pose_y,"
               "pose_yaw,collided,fallback,goal_dist")

SUMMARY_HEADER = "variant,damage,seed,actions_used,success,final_goal_dist"


def episode_csv_lines(log_: EpisodeLog) -> list[str]:
    lines = [STEP_HEADER]
    for s in log_.steps:
        lines.append(",".join([
            str(s.step),
            _F(s.skill_bd[0]), _F(s.skill_bd[1]), _F(s.skill_bd[2]),
            s.pattern,
            _F(s.predicted[0]), _F(s.predicted[1]), _F(s.predicted[2]),
            _F(s.executed[0]), _F(s.executed[1]), _F(s.executed[2]),
            _F(s.epsilon),
            _F(s.pose[0]), _F(s.pose[1]), _F(s.pose[2]),
            str(int(s.collided)), str(int(s.fallback)),
            _F(s.goal_dist),
        ]))
    return lines


def episode_summary_line(log_: EpisodeLog) -> str:
    final = log_.steps[-1].goal_dist if log_.steps else float("nan")
    return ",".join([log_.variant, log_.damage, str(log_.seed),
                     str(log_.actions_used), str(int(log_.success)), _F(final)])
