"""Run configuration: every model and algorithm constant in one place.

Values can be overridden from a plain-text ``key = value`` file ('#'
starts a comment) and again from CLI flags.  The simulator-relevant
subset is hashed into a fingerprint that repertoire files carry, so
archives trained under one gait model are never silently reused under
another.
"""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, field

Anchors = tuple[tuple[float, float], ...]

DEFAULT_ANCHORS: Anchors = (
    (0.5, 0.3),
    (0.0, 0.35),
    (-0.5, 0.3),
    (0.5, -0.3),
    (0.0, -0.35),
    (-0.5, -0.3),
)


@dataclass
class Config:
    # --- gait model ---
    sim_steps: int = 100
    sim_dt: float = 0.01
    stride_scale: float = 0.15
    smooth_window: int = 5
    contact_duty_threshold: float = 0.3
    anchors: Anchors = DEFAULT_ANCHORS

    # --- archives ---
    top_grid_dims: tuple[int, int] = (100, 100)
    top_bound: float = 1.8           # top-layer grid spans [-b, b]^2
    mid_l: float = 0.05
    bottom_l: float = 0.01
    mid_disp_bound: float = 0.6      # per-second x/y normalization range

    # --- evolution ---
    population: int = 200
    eta: float = 10.0
    mutation_rate_bottom: float = 0.17
    mutation_rate_middle: float = 0.11
    mutation_rate_top: float = 0.14
    mutation_rate_flat: float = 0.14
    budget_bottom: int = 20_000
    budget_middle: int = 60_000
    budget_top: int = 100_000
    budget_flat: int = 180_000
    budget_aprol_prior: int = 60_000

    # --- hierarchy execution ---
    fallback_radius: float = 0.15
    per_step_patterns: bool = False
    modulate_tolerance: float = 0.15     # endpoint error counted as reproduced

    # --- GP / score ---
    gp_lengthscale: float = 0.3
    gp_signal_var: float = 1.0
    gp_noise_var: float = 1e-2
    # the score GP sees (skill xy, 6 pattern bits); a one-bit flip is a
    # unit step, so it needs a longer scale to generalize across patterns
    eps_gp_lengthscale: float = 1.0
    ucb_beta: float = 2.0
    eps_k: float = 4.0
    eps_c: float = 0.5
    eps_denom_floor: float = 0.1

    # --- maze / planner ---
    cell_size: float = 0.5
    goal_radius: float = 0.3
    robot_radius: float = 0.25
    mcts_iterations: int = 500
    mcts_horizon: int = 6
    uct_c: float = 1.414
    mcts_discount: float = 1.0
    nav_euclid_weight: float = 0.25      # sub-cell gradient in the BFS field
    action_set_size: int = 40            # 24 directional + 16 random
    action_directional: int = 24
    action_circle_radius: float = 0.9
    rollout_greedy_k: int = 5            # rollout tournament size (0 = uniform)
    collision_penalty: float = 0.1       # in units of the normalized return
    goal_bonus: float = 10.0

    # --- adaptation / bench ---
    max_actions: int = 80
    bench_rep_seeds: int = 2
    bench_reps: int = 20

    def fingerprint(self) -> str:
        """Hash of the constants that define what a stored elite means."""
        keys = (
            "sim_steps", "sim_dt", "stride_scale", "smooth_window",
            "contact_duty_threshold", "anchors", "top_grid_dims",
            "top_bound", "mid_l", "bottom_l", "mid_disp_bound",
        )
        blob = ";".join(f"{k}={getattr(self, k)!r}" for k in keys)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def paper_scale(self) -> "Config":
        """Budgets from the published QD setup (generations x population)."""
        return dataclasses.replace(
            self,
            budget_bottom=5_001 * 200,
            budget_middle=30_000 * 200,
            budget_top=20_000 * 200,
            budget_flat=4_000_000,
            budget_aprol_prior=4_000_000,
        )


class ConfigError(ValueError):
    pass


def _parse_anchors(text: str) -> Anchors:
    pairs = []
    for chunk in text.split(";"):
        xy = chunk.split(",")
        if len(xy) != 2:
            raise ConfigError(f"anchors entry {chunk!r} is not 'x,y'")
        pairs.append((float(xy[0]), float(xy[1])))
    if len(pairs) != 6:
        raise ConfigError(f"anchors needs 6 pairs, got {len(pairs)}")
    return tuple(pairs)


def _coerce(name: str, kind, text: str):
    text = text.strip()
    if kind is bool or kind == "bool":
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: cannot parse {text!r} as bool")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    if name == "anchors":
        return _parse_anchors(text)
    if name == "top_grid_dims":
        parts = [int(p) for p in text.split(",")]
        if len(parts) != 2:
            raise ConfigError("top_grid_dims needs two integers")
        return tuple(parts)
    raise ConfigError(f"unknown config key {name!r}")


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(Config)}
_SIMPLE = {"int": int, "float": float, "bool": bool}


def apply_overrides(cfg: Config, pairs: dict[str, str]) -> Config:
    updates = {}
    for name, text in pairs.items():
        if name not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {name!r}")
        tname = _FIELD_TYPES[name]
        kind = _SIMPLE.get(tname, tname)
        updates[name] = _coerce(name, kind, text)
    return dataclasses.replace(cfg, **updates)


def load_config(path: str, base: Config | None = None) -> Config:
    """Read ``key = value`` lines; later keys win, '#' starts a comment."""
    pairs: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            pairs[key.strip()] = value.strip()
    return apply_overrides(base or Config(), pairs)
