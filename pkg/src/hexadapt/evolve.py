"""MAP-Elites loop, polynomial mutation, and repertoire training.

``train_hierarchy`` builds the three-layer stack bottom-up; each layer
is frozen before the next starts.  ``train_flat`` builds the baseline
repertoires (36-parameter whole-body controllers, 2-D or 8-D
descriptor).  Everything is deterministic given the seed.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import hierarchy
from .archive import DistArchive, Elite, GridArchive
from .config import Config
from .geom import Pose2, circular_fitness, se2_compose
from .hexasim import DamageSpec, NO_DAMAGE, SimModel, gait_step, leg_descriptor

log = logging.getLogger(__name__)


class EvaluationFailed(Exception):
    """Raised by an evaluator to discard a candidate (still costs budget)."""


@dataclass
class EvoParams:
    genome_length: int
    budget: int
    seed: int
    population: int = 200
    mutation_rate: float = 0.14
    eta: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.mutation_rate <= 1.0:
            raise ValueError("mutation_rate must be in (0, 1]")
        if self.eta <= 0:
            raise ValueError("eta must be positive")
        if self.budget < self.population:
            raise ValueError("budget must cover the seeding population")


def polynomial_mutation(g: np.ndarray, rate: float, eta: float, rng) -> np.ndarray:
    """Bounded polynomial mutation on [0, 1], per-gene probability `rate`."""
    out = np.array(g, dtype=np.float64, copy=True)
    mask = rng.random(out.shape[0]) < rate
    k = int(mask.sum())
    if k == 0:
        return out
    x = out[mask]
    u = rng.random(k)
    exp = 1.0 / (eta + 1.0)
    lower = u < 0.5
    dq = np.empty(k)
    val = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - x) ** (eta + 1.0)
    dq_low = val ** exp - 1.0
    val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * x ** (eta + 1.0)
    dq_high = 1.0 - val ** exp
    dq = np.where(lower, dq_low, dq_high)
    out[mask] = np.clip(x + dq, 0.0, 1.0)
    return out


def map_elites_run(archive, evaluator, params: EvoParams, rng=None,
                   history: list | None = None):
    """Standard MAP-Elites: uniform parent selection, mutation only.

    The evaluator maps a genotype to (fitness, bd_primary, bd_secondary)
    or (fitness, bd_primary, bd_secondary, yaw).  Exactly ``budget``
    evaluations are spent; failed evaluations are discarded but counted.
    """
    if rng is None:
        rng = np.random.default_rng(params.seed)
    evals = 0

    def offer(genotype):
        nonlocal evals
        evals += 1
        try:
            result = evaluator(genotype)
        except EvaluationFailed:
            return
        fitness, bd_primary, bd_secondary = result[:3]
        yaw = result[3] if len(result) > 3 else 0.0
        archive.insert(Elite(
            genotype=genotype,
            fitness=float(fitness),
            bd_primary=np.asarray(bd_primary, dtype=np.float64),
            bd_secondary=np.asarray(bd_secondary, dtype=np.uint8),
            yaw=float(yaw),
        ))
        if history is not None and evals % 1000 == 0:
            fits = archive.fitness_vector()
            history.append((evals, len(archive), float(fits.max())))

    for _ in range(min(params.population, params.budget)):
        offer(rng.random(params.genome_length))
    while evals < params.budget:
        if len(archive) == 0:
            offer(rng.random(params.genome_length))
            continue
        parent = archive.random_elite(rng)
        offer(polynomial_mutation(parent.genotype, params.mutation_rate,
                                  params.eta, rng))
    return archive


# --------------------------------------------------------------------------
# layer evaluators

def _bottom_evaluator(model: SimModel):
    def evaluate(g):
        bd, fitness = leg_descriptor(g, model)
        return fitness, bd, np.zeros(0, dtype=np.uint8)
    return evaluate


def _middle_evaluator(bottom: DistArchive, model: SimModel, cfg: Config):
    def evaluate(g):
        legs = hierarchy.resolve_legs(bottom, g)
        out = gait_step(legs, NO_DAMAGE, model)
        d = out.displacement
        bd = hierarchy.normalize_middle_bd(d, cfg)
        return circular_fitness(d), bd, out.contact_bits, d.yaw
    return evaluate


def _top_evaluator(stack: "hierarchy.HBRStack"):
    def evaluate(g):
        total = Pose2()
        for req in g.reshape(3, 3):
            step = stack.exec_middle(req)
            total = se2_compose(total, step.outcome.displacement)
        bd = np.array([total.x, total.y])
        return circular_fitness(total), bd, np.zeros(0, dtype=np.uint8), total.yaw
    return evaluate


def _flat_evaluator(variant: str, dmg: DamageSpec, model: SimModel):
    def evaluate(g):
        out = gait_step(g.reshape(6, 6), dmg, model)
        d = out.displacement
        total = se2_compose(se2_compose(d, d), d)
        bd = np.array([total.x, total.y])
        secondary = out.contact_bits if variant == "bd8" else np.zeros(0, dtype=np.uint8)
        return circular_fitness(total), bd, secondary, total.yaw
    return evaluate


# --------------------------------------------------------------------------
# training orchestration

def layer_seeds(seed: int, n: int = 3) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def train_bottom(cfg: Config, seed: int, model: SimModel,
                 budget: int | None = None, history=None) -> DistArchive:
    bottom = DistArchive(cfg.bottom_l, primary_dims=3)
    map_elites_run(bottom, _bottom_evaluator(model),
                   EvoParams(6, budget or cfg.budget_bottom, seed,
                             cfg.population, cfg.mutation_rate_bottom, cfg.eta),
                   history=history)
    if len(bottom) == 0:
        raise RuntimeError("bottom layer trained to an empty archive")
    log.info("bottom layer: %d elites", len(bottom))
    return bottom


def train_middle(cfg: Config, seed: int, bottom: DistArchive, model: SimModel,
                 budget: int | None = None, history=None) -> DistArchive:
    middle = DistArchive(cfg.mid_l, primary_dims=3, secondary_dims=6)
    map_elites_run(middle, _middle_evaluator(bottom, model, cfg),
                   EvoParams(18, budget or cfg.budget_middle, seed,
                             cfg.population, cfg.mutation_rate_middle, cfg.eta),
                   history=history)
    if len(middle) == 0:
        raise RuntimeError("middle layer trained to an empty archive")
    log.info("middle layer: %d elites, %d patterns",
             len(middle), len(middle.patterns()))
    return middle


def train_top(cfg: Config, seed: int, bottom: DistArchive,
              middle: DistArchive, model: SimModel,
              budget: int | None = None, history=None) -> "hierarchy.HBRStack":
    b = cfg.top_bound
    top = GridArchive(cfg.top_grid_dims, ((-b, b), (-b, b)))
    stack = hierarchy.HBRStack(bottom=bottom, middle=middle, top=top,
                               cfg=cfg, model=model)
    map_elites_run(top, _top_evaluator(stack),
                   EvoParams(9, budget or cfg.budget_top, seed,
                             cfg.population, cfg.mutation_rate_top, cfg.eta),
                   history=history)
    if len(top) == 0:
        raise RuntimeError("top layer trained to an empty archive")
    log.info("top layer: %d elites", len(top))
    return stack


def train_hierarchy(cfg: Config, seed: int, model: SimModel | None = None,
                    budgets: tuple[int, int, int] | None = None,
                    history: dict | None = None) -> "hierarchy.HBRStack":
    """Train bottom, middle and top layers sequentially from one seed."""
    model = model or SimModel(cfg)
    b_bot, b_mid, b_top = budgets or (cfg.budget_bottom, cfg.budget_middle,
                                      cfg.budget_top)
    s_bot, s_mid, s_top = layer_seeds(seed)
    hist = (lambda name: None) if history is None else \
        (lambda name: history.setdefault(name, []))
    bottom = train_bottom(cfg, s_bot, model, b_bot, hist("bottom"))
    middle = train_middle(cfg, s_mid, bottom, model, b_mid, hist("middle"))
    return train_top(cfg, s_top, bottom, middle, model, b_top, hist("top"))


def train_flat(variant: str, cfg: Config, seed: int,
               dmg: DamageSpec = NO_DAMAGE, model: SimModel | None = None,
               budget: int | None = None, history: list | None = None) -> GridArchive:
    """Train a flat baseline repertoire (variant 'bd2' or 'bd8')."""
    if variant not in ("bd2", "bd8"):
        raise ValueError(f"variant must be bd2 or bd8, got {variant!r}")
    model = model or SimModel(cfg)
    b = cfg.top_bound
    archive = GridArchive(
        cfg.top_grid_dims, ((-b, b), (-b, b)),
        secondary_dims=6 if variant == "bd8" else 0,
        secondary_slots=variant == "bd8",
    )
    map_elites_run(archive, _flat_evaluator(variant, dmg, model),
                   EvoParams(36, budget or cfg.budget_flat, seed,
                             cfg.population, cfg.mutation_rate_flat, cfg.eta),
                   history=history)
    return archive
