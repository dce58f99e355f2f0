"""Benchmark harness: episode grids, aggregates, and figure analogs.

Episodes are pure functions of (variant, damage, repertoire seed,
episode seed), so they can run on a process pool; results are sorted
into a canonical order before anything is written, which keeps every
artifact byte-identical across reruns and worker counts.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import svgplot
from .adapt import (EpisodeLog, VariantConfig, episode_csv_lines,
                    episode_summary_line, run_episode)
from .config import Config
from .hexasim import BENCHMARK_DAMAGES, DamageSpec, damage_name
from .planner import Maze
from .stats import percentile_nearest_rank

_F = "{:.17g}".format


@dataclass
class EpisodeSpec:
    variant: str
    damage: DamageSpec
    rep_seed_idx: int
    episode_idx: int
    seed: int


def episode_seed(master_seed: int, variant: str, damage: DamageSpec,
                 rep_seed_idx: int, episode_idx: int) -> int:
    """Stable per-episode seed, independent of execution order."""
    tag = (hash_stable(variant), len(damage.blocked_legs),
           sum(damage.blocked_legs), rep_seed_idx, episode_idx)
    ss = np.random.SeedSequence(master_seed, spawn_key=tag)
    return int(ss.generate_state(1)[0])


def hash_stable(s: str) -> int:
    h = 0
    for ch in s:
        h = (h * 131 + ord(ch)) % (2 ** 31)
    return h


# set by _pool_init in workers (fork start method shares it for jobs=1)
_POOL_VARIANTS: dict = {}
_POOL_MAZE: Maze | None = None


def _pool_init(variants, maze):
    global _POOL_VARIANTS, _POOL_MAZE
    _POOL_VARIANTS = variants
    _POOL_MAZE = maze


def _run_one(spec: EpisodeSpec) -> EpisodeLog:
    v = _POOL_VARIANTS[(spec.variant, spec.rep_seed_idx)]
    return run_episode(v, _POOL_MAZE, spec.damage, spec.seed)


def run_suite(variants: dict[tuple[str, int], VariantConfig], maze: Maze,
              specs: list[EpisodeSpec], jobs: int = 1) -> list[EpisodeLog]:
    """Run all episodes; results come back in spec order."""
    if jobs <= 1:
        _pool_init(variants, maze)
        return [_run_one(s) for s in specs]
    with ProcessPoolExecutor(max_workers=jobs, initializer=_pool_init,
                             initargs=(variants, maze)) as pool:
        return list(pool.map(_run_one, specs, chunksize=4))


def build_specs(master_seed: int, variant_names: list[str],
                damages: list[DamageSpec], rep_seeds: int,
                reps: int) -> list[EpisodeSpec]:
    specs = []
    for name in variant_names:
        for dmg in damages:
            for r in range(rep_seeds):
                for e in range(reps):
                    specs.append(EpisodeSpec(
                        name, dmg, r, e,
                        episode_seed(master_seed, name, dmg, r, e)))
    return specs


@dataclass
class BenchResult:
    specs: list[EpisodeSpec]
    logs: list[EpisodeLog]

    def rows(self):
        for spec, log_ in zip(self.specs, self.logs):
            yield spec, log_

    def actions(self, variant: str, damage: DamageSpec | None = None) -> list[int]:
        return [l.actions_used for s, l in self.rows()
                if s.variant == variant
                and (damage is None or s.damage.key == damage.key)]

    def failure_fraction(self, variant: str) -> float:
        outcomes = [l.success for s, l in self.rows() if s.variant == variant]
        return 1.0 - sum(outcomes) / len(outcomes) if outcomes else 0.0

    def replication_medians(self, variant: str) -> list[float]:
        """Median actions across the damage tasks, one value per
        (repertoire seed, episode index) replication."""
        groups: dict[tuple[int, int], list[int]] = {}
        for s, l in self.rows():
            if s.variant != variant:
                continue
            groups.setdefault((s.rep_seed_idx, s.episode_idx), []).append(l.actions_used)
        return [percentile_nearest_rank(v, 50) for _, v in sorted(groups.items())]


def write_episode_files(result: BenchResult, outdir: str):
    os.makedirs(outdir, exist_ok=True)
    from .adapt import STEP_HEADER, SUMMARY_HEADER

    summary_lines = [
        "variant,damage,rep_seed_idx,episode_idx,seed,actions_used,success"]
    for spec, log_ in result.rows():
        summary_lines.append(",".join([
            spec.variant, damage_name(spec.damage), str(spec.rep_seed_idx),
            str(spec.episode_idx), str(spec.seed),
            str(log_.actions_used), str(int(log_.success))]))
        name = (f"episode_{spec.variant}_{damage_name(spec.damage)}"
                f"_r{spec.rep_seed_idx}_e{spec.episode_idx}.csv")
        with open(os.path.join(outdir, name), "w", encoding="utf-8",
                  newline="\n") as fh:
            fh.write("\n".join(episode_csv_lines(log_)) + "\n")
    with open(os.path.join(outdir, "episodes.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("\n".join(summary_lines) + "\n")


def write_aggregates(result: BenchResult, outdir: str):
    os.makedirs(outdir, exist_ok=True)
    variants = sorted({s.variant for s in result.specs})
    damages = []
    for s in result.specs:
        if s.damage.key not in [d.key for d in damages]:
            damages.append(s.damage)

    lines = ["variant,damage,n,median_actions,p25,p75,failure_fraction"]
    for name in variants:
        for dmg in [*damages, None]:
            acts = result.actions(name, dmg)
            if not acts:
                continue
            succ = [l.success for s, l in result.rows()
                    if s.variant == name
                    and (dmg is None or s.damage.key == dmg.key)]
            lines.append(",".join([
                name,
                damage_name(dmg) if dmg is not None else "all",
                str(len(acts)),
                _F(percentile_nearest_rank(acts, 50)),
                _F(percentile_nearest_rank(acts, 25)),
                _F(percentile_nearest_rank(acts, 75)),
                _F(1.0 - sum(succ) / len(succ)),
            ]))
    with open(os.path.join(outdir, "aggregate.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

    medians = [result.replication_medians(v) for v in variants]
    svg = svgplot.box_plot_svg(variants, medians,
                               title="median actions per replication",
                               ylabel="actions")
    with open(os.path.join(outdir, "actions_box.svg"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(svg)

    fails = [result.failure_fraction(v) for v in variants]
    svg = svgplot.bar_plot_svg(variants, fails,
                               title="episodes failing the action cap",
                               ylabel="failure fraction")
    with open(os.path.join(outdir, "failures_bar.svg"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(svg)
