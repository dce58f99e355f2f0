"""Three-layer repertoire stack and skill execution.

A top-layer genotype is 3 middle-layer primary-descriptor requests; a
middle-layer genotype is 6 bottom-layer descriptor requests (one per
leg).  Execution resolves each request to the stored elite with the
nearest primary descriptor.  When a secondary bit pattern is given,
the middle lookup is restricted to elites carrying exactly that
pattern within a radius; if none qualifies it falls back to the
unconstrained lookup and flags the substitution.

Lower layers are frozen once the stack exists, so leg resolutions and
undamaged/damaged step outcomes are memoized per middle-archive row.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .archive import DistArchive, Elite, GridArchive
from .config import Config
from .geom import Pose2, se2_compose, wrap_angle
from .hexasim import DamageSpec, NO_DAMAGE, SimModel, StepOutcome, gait_step


def normalize_middle_bd(d: Pose2, cfg: Config) -> np.ndarray:
    """Map a 1-second displacement into the unit cube."""
    b = cfg.mid_disp_bound
    x = min(max((d.x + b) / (2.0 * b), 0.0), 1.0)
    y = min(max((d.y + b) / (2.0 * b), 0.0), 1.0)
    w = (d.yaw / np.pi + 1.0) / 2.0
    return np.array([x, y, w])


def resolve_legs(bottom: DistArchive, genotype: np.ndarray) -> np.ndarray:
    """Resolve a middle genotype (6 descriptor requests) to leg parameters."""
    legs = np.empty((6, 6))
    for i, req in enumerate(np.asarray(genotype).reshape(6, 3)):
        legs[i] = bottom.nearest_primary(req).genotype
    return legs


@dataclass
class MiddleExec:
    outcome: StepOutcome
    elite: Elite
    fallback: bool


@dataclass
class TopExec:
    displacement: Pose2
    steps: list[MiddleExec]
    fallback: bool


@dataclass
class HBRStack:
    bottom: DistArchive
    middle: DistArchive
    top: GridArchive
    cfg: Config
    model: SimModel
    counters: dict = field(default_factory=lambda: {"middle_lookups": 0,
                                                    "bottom_lookups": 0})
    _legs: dict = field(default_factory=dict, repr=False)
    _outcomes: dict = field(default_factory=dict, repr=False)

    def _row_of(self, elite: Elite) -> int:
        # middle rows are append-only while the stack is in use; the
        # order counter is unique per stored elite
        return elite.order

    def _resolved_legs(self, elite: Elite) -> np.ndarray:
        self.counters["bottom_lookups"] += 6
        key = self._row_of(elite)
        legs = self._legs.get(key)
        if legs is None:
            legs = resolve_legs(self.bottom, elite.genotype)
            self._legs[key] = legs
        return legs

    def _step_outcome(self, elite: Elite, dmg: DamageSpec) -> StepOutcome:
        key = (self._row_of(elite), dmg.key)
        out = self._outcomes.get(key)
        if out is None:
            out = gait_step(self._resolved_legs(elite), dmg, self.model)
            self._outcomes[key] = out
        else:
            self.counters["bottom_lookups"] += 6
        return out

    def exec_middle(self, q, pattern=None, dmg: DamageSpec = NO_DAMAGE) -> MiddleExec:
        """Execute the middle-layer skill nearest to primary request q."""
        self.counters["middle_lookups"] += 1
        fallback = False
        elite = None
        if pattern is not None:
            elite = self.middle.nearest_with_pattern(
                q, pattern, self.cfg.fallback_radius)
            if elite is None:
                fallback = True
        if elite is None:
            elite = self.middle.nearest_primary(q)
        return MiddleExec(self._step_outcome(elite, dmg), elite, fallback)

    def exec_top(self, skill, pattern=None, dmg: DamageSpec = NO_DAMAGE) -> TopExec:
        """Execute a top-layer skill: 3 chained middle-layer seconds.

        The same pattern constrains all three steps, matching how
        secondary behaviours are selected once per action.
        """
        genotype = skill.genotype if isinstance(skill, Elite) else np.asarray(skill)
        steps = []
        total = Pose2()
        for req in genotype.reshape(3, 3):
            step = self.exec_middle(req, pattern, dmg)
            steps.append(step)
            total = se2_compose(total, step.outcome.displacement)
        return TopExec(total, steps, any(s.fallback for s in steps))

    def feasible_patterns(self) -> list[np.ndarray]:
        return self.middle.patterns()


@dataclass
class ModulateRow:
    skill_index: int
    skill_bd: np.ndarray
    pattern: np.ndarray
    matched: bool
    err_xy: float


def modulate_scan(stack: HBRStack, dmg: DamageSpec = NO_DAMAGE) -> list[ModulateRow]:
    """Re-execute every top skill under every feasible secondary pattern.

    A row is ``matched`` when all three steps resolved without fallback,
    i.e. the requested contact pattern was actually exhibited;
    ``err_xy`` is the distance between the achieved endpoint and the
    skill's stored one.
    """
    rows = []
    patterns = stack.feasible_patterns()
    for idx, skill in enumerate(stack.top.elites):
        for pattern in patterns:
            t = stack.exec_top(skill, pattern, dmg)
            err = float(np.hypot(t.displacement.x - skill.bd_primary[0],
                                 t.displacement.y - skill.bd_primary[1]))
            rows.append(ModulateRow(idx, skill.bd_primary, pattern,
                                    not t.fallback, err))
    return rows


def feasible_pattern_counts(rows: list[ModulateRow], max_err: float):
    """Per-skill count of patterns reproduced within max_err."""
    counts: dict[int, int] = {}
    norms: dict[int, float] = {}
    for r in rows:
        norms[r.skill_index] = float(np.hypot(r.skill_bd[0], r.skill_bd[1]))
        counts.setdefault(r.skill_index, 0)
        if r.matched and r.err_xy <= max_err:
            counts[r.skill_index] += 1
    return counts, norms
