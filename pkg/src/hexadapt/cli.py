"""Command-line surface.

Commands: train, inspect, modulate, adapt, bench, plot.  Exit codes:
0 success, 1 usage error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import importlib.resources
import logging
import os
import sys

from . import bench as bench_mod
from . import svgplot
from .adapt import (SUMMARY_HEADER, VariantConfig, episode_csv_lines,
                    episode_summary_line, run_episode)
from .archive import GridArchive, project_effective
from .config import Config, ConfigError, apply_overrides, load_config
from .evolve import layer_seeds, train_bottom, train_middle, train_top, train_flat
from .hexasim import BENCHMARK_DAMAGES, DAMAGE_NAMES, SimModel, damage_name
from .hierarchy import HBRStack, feasible_pattern_counts, modulate_scan
from .planner import load_maze_file
from .repio import load_repertoire, save_repertoire
from .stats import percentile_nearest_rank, spearman_rho

log = logging.getLogger(__name__)

ALGO_KINDS = {
    "hte": "hte",
    "perfect": "perfect_hte",
    "rte2d": "rte2d",
    "rte8d": "rte8d",
    "aprol": "aprol_lite",
}

APROL_PRIOR_NAMES = ("none", "leg1", "leg2", "leg3", "leg4", "leg5", "leg6")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def default_maze_path() -> str:
    return str(importlib.resources.files("hexadapt") / "mazes" / "benchmark.maze")


def _load_cfg(args) -> Config:
    cfg = Config()
    if getattr(args, "config", None):
        cfg = load_config(args.config, cfg)
    overrides = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, _, v = item.partition("=")
        overrides[k.strip()] = v.strip()
    if overrides:
        cfg = apply_overrides(cfg, overrides)
    if getattr(args, "paper_scale", False):
        cfg = cfg.paper_scale()
    if getattr(args, "max_actions", None) is not None:
        cfg = apply_overrides(cfg, {"max_actions": str(args.max_actions)})
    return cfg


def _add_common(p):
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one configuration key (repeatable)")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default=None, help="output directory")


def _build_parser() -> _Parser:
    parser = _Parser(prog="hexadapt",
                     description="hierarchical repertoire training and "
                                 "damage adaptation on a toy hexapod")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train repertoires")
    _add_common(p)
    p.add_argument("--algo", choices=sorted(ALGO_KINDS), default="hte")
    p.add_argument("--budget", default=None,
                   help="evaluation budget: one integer, or bottom,middle,top")
    p.add_argument("--layers", default=None,
                   help="comma subset of bottom,middle,top to (re)train; "
                        "missing layers are loaded from --out")
    p.add_argument("--paper-scale", action="store_true",
                   help="use the published generation counts (slow)")

    p = sub.add_parser("inspect", help="projection stats for a repertoire")
    _add_common(p)
    p.add_argument("--rep", required=True, help="repertoire file")

    p = sub.add_parser("modulate", help="secondary-pattern modulation scan")
    _add_common(p)
    p.add_argument("--repdir", default="repertoires")

    p = sub.add_parser("adapt", help="run one adaptation episode")
    _add_common(p)
    p.add_argument("--algo", choices=sorted(ALGO_KINDS), required=True)
    p.add_argument("--damage", choices=sorted(DAMAGE_NAMES), default="none")
    p.add_argument("--repdir", default="repertoires")
    p.add_argument("--maze", default=None, help="maze file (default: built-in)")
    p.add_argument("--max-actions", type=int, default=None)

    p = sub.add_parser("bench", help="full episode suite with statistics")
    _add_common(p)
    p.add_argument("--algos", default="hte,perfect,rte2d,rte8d,aprol")
    p.add_argument("--damages", default=",".join(
        damage_name(d) for d in BENCHMARK_DAMAGES))
    p.add_argument("--reps", type=int, default=None,
                   help="episode seeds per damage (default from config)")
    p.add_argument("--rep-seeds", type=int, default=None,
                   help="repertoire seed directories s0..sN-1 under --repdir")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--repdir", default="repertoires")
    p.add_argument("--maze", default=None)
    p.add_argument("--max-actions", type=int, default=None)

    p = sub.add_parser("plot", help="regenerate SVGs from bench CSV output")
    p.add_argument("--bench-dir", required=True)
    return parser


# --------------------------------------------------------------------------
# repertoire file layout

def rep_path(outdir: str, name: str) -> str:
    return os.path.join(outdir, f"{name}.rep")


def load_stack(repdir: str, cfg: Config) -> HBRStack:
    bottom = load_repertoire(rep_path(repdir, "hte_bottom"), cfg)
    middle = load_repertoire(rep_path(repdir, "hte_middle"), cfg)
    top = load_repertoire(rep_path(repdir, "hte_top"), cfg)
    return HBRStack(bottom=bottom, middle=middle, top=top,
                    cfg=cfg, model=SimModel(cfg))


def _build_variant(kind: str, repdir: str, cfg: Config) -> VariantConfig:
    if kind in ("hte", "perfect_hte"):
        return VariantConfig(kind, cfg, stack=load_stack(repdir, cfg))
    if kind == "rte2d":
        return VariantConfig(kind, cfg,
                             flat=load_repertoire(rep_path(repdir, "rte2d"), cfg))
    if kind == "rte8d":
        return VariantConfig(kind, cfg,
                             flat=load_repertoire(rep_path(repdir, "rte8d"), cfg))
    priors = [(DAMAGE_NAMES[name],
               load_repertoire(rep_path(repdir, f"aprol_{name}"), cfg))
              for name in APROL_PRIOR_NAMES]
    return VariantConfig(kind, cfg, priors=priors)


# --------------------------------------------------------------------------
# commands

def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    outdir = args.out or "repertoires"
    os.makedirs(outdir, exist_ok=True)
    model = SimModel(cfg)
    algo = args.algo

    if algo in ("hte", "perfect"):
        budgets = [cfg.budget_bottom, cfg.budget_middle, cfg.budget_top]
        if args.budget:
            parts = [int(x) for x in str(args.budget).split(",")]
            if len(parts) == 1:
                # one integer: split by the desk-scale ratios
                total = parts[0]
                budgets = [total * b // sum(budgets) for b in budgets]
                budgets[2] = total - budgets[0] - budgets[1]
            elif len(parts) == 3:
                budgets = parts
            else:
                raise UsageError("--budget takes 1 or 3 integers for hte")
        layers = (args.layers or "bottom,middle,top").split(",")
        for name in layers:
            if name not in ("bottom", "middle", "top"):
                raise UsageError(f"unknown layer {name!r}")
        seeds = layer_seeds(args.seed)
        if "bottom" in layers:
            bottom = train_bottom(cfg, seeds[0], model, budgets[0])
            save_repertoire(rep_path(outdir, "hte_bottom"), bottom, cfg)
        else:
            bottom = load_repertoire(rep_path(outdir, "hte_bottom"), cfg)
        if "middle" in layers:
            middle = train_middle(cfg, seeds[1], bottom, model, budgets[1])
            save_repertoire(rep_path(outdir, "hte_middle"), middle, cfg)
        else:
            middle = load_repertoire(rep_path(outdir, "hte_middle"), cfg)
        if "top" in layers:
            stack = train_top(cfg, seeds[2], bottom, middle, model, budgets[2])
            save_repertoire(rep_path(outdir, "hte_top"), stack.top, cfg)
        print(f"trained {algo} repertoires into {outdir}")
        return 0

    budget = int(args.budget) if args.budget else None
    if algo in ("rte2d", "rte8d"):
        variant = "bd2" if algo == "rte2d" else "bd8"
        archive = train_flat(variant, cfg, args.seed, model=model,
                             budget=budget or cfg.budget_flat)
        save_repertoire(rep_path(outdir, algo), archive, cfg)
        print(f"trained {algo} ({len(archive)} elites) into {outdir}")
        return 0

    # aprol: one 2-D repertoire per damage prior
    seeds = layer_seeds(args.seed, len(APROL_PRIOR_NAMES))
    for name, seed in zip(APROL_PRIOR_NAMES, seeds):
        archive = train_flat("bd2", cfg, seed, dmg=DAMAGE_NAMES[name],
                             model=model,
                             budget=budget or cfg.budget_aprol_prior)
        save_repertoire(rep_path(outdir, f"aprol_{name}"), archive, cfg)
        print(f"trained aprol prior {name} ({len(archive)} elites)")
    return 0


def cmd_inspect(args) -> int:
    cfg = _load_cfg(args)
    archive = load_repertoire(args.rep, cfg)
    if isinstance(archive, GridArchive):
        dims, bounds = archive.dims[:2], archive.bounds[:2]
    else:
        dims, bounds = cfg.top_grid_dims, ((0.0, 1.0), (0.0, 1.0))
    eff, mean_fit = project_effective(archive, dims, bounds)
    print(f"{args.rep}: {len(archive)} elites, effective size {eff}, "
          f"mean projected fitness {mean_fit:.6f}")
    outdir = args.out or "analysis"
    os.makedirs(outdir, exist_ok=True)

    best: dict[tuple[int, int], float] = {}
    for e in archive.elites:
        (lo0, hi0), (lo1, hi1) = bounds
        i = min(max(int((e.bd_primary[0] - lo0) / (hi0 - lo0) * dims[0]), 0), dims[0] - 1)
        j = min(max(int((e.bd_primary[1] - lo1) / (hi1 - lo1) * dims[1]), 0), dims[1] - 1)
        if (i, j) not in best or e.fitness > best[(i, j)]:
            best[(i, j)] = e.fitness
    lines = ["cell_x,cell_y,fitness"]
    for (i, j), fit in sorted(best.items()):
        lines.append(f"{i},{j},{fit:.17g}")
    stem = os.path.splitext(os.path.basename(args.rep))[0]
    with open(os.path.join(outdir, f"{stem}_projection.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    svg = svgplot.grid_heat_svg(best, dims, bounds,
                                title=f"{stem}: projected repertoire")
    with open(os.path.join(outdir, f"{stem}_projection.svg"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
    print(f"wrote projection CSV/SVG into {outdir}")
    return 0


def cmd_modulate(args) -> int:
    cfg = _load_cfg(args)
    stack = load_stack(args.repdir, cfg)
    rows = modulate_scan(stack)
    outdir = args.out or "analysis"
    os.makedirs(outdir, exist_ok=True)
    lines = ["skill_index,skill_x,skill_y,pattern,matched,err_xy"]
    for r in rows:
        lines.append(",".join([
            str(r.skill_index), f"{r.skill_bd[0]:.17g}", f"{r.skill_bd[1]:.17g}",
            "".join(str(int(b)) for b in r.pattern),
            str(int(r.matched)), f"{r.err_xy:.17g}"]))
    with open(os.path.join(outdir, "modulate.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")

    counts, norms = feasible_pattern_counts(rows, cfg.modulate_tolerance)
    skills = sorted(counts)
    points = []
    for idx in skills:
        errs = sorted(r.err_xy for r in rows if r.skill_index == idx and r.matched)
        med = errs[len(errs) // 2] if errs else float("nan")
        e = stack.top.elites[idx]
        points.append((float(e.bd_primary[0]), float(e.bd_primary[1]),
                       counts[idx], med))
    svg = svgplot.modulate_svg(points, title="skill modulation: size = "
                                             "feasible patterns, green = low error")
    with open(os.path.join(outdir, "modulate.svg"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write(svg)

    rho = spearman_rho([norms[i] for i in skills], [counts[i] for i in skills])
    print(f"{len(skills)} skills, {len(stack.feasible_patterns())} feasible "
          f"patterns, spearman(|bd|, feasible count) = {rho:.3f}")
    print(f"wrote modulate.csv and modulate.svg into {outdir}")
    return 0


def cmd_adapt(args) -> int:
    cfg = _load_cfg(args)
    kind = ALGO_KINDS[args.algo]
    variant = _build_variant(kind, args.repdir, cfg)
    maze = load_maze_file(args.maze or default_maze_path(), cfg)
    dmg = DAMAGE_NAMES[args.damage]
    episode = run_episode(variant, maze, dmg, args.seed)
    outdir = args.out or "episodes"
    os.makedirs(outdir, exist_ok=True)
    stem = f"episode_{args.algo}_{args.damage}_seed{args.seed}"
    with open(os.path.join(outdir, f"{stem}.csv"), "w", encoding="utf-8",
              newline="\n") as fh:
        fh.write("\n".join(episode_csv_lines(episode)) + "\n")
    with open(os.path.join(outdir, f"{stem}_summary.csv"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(SUMMARY_HEADER + "\n" + episode_summary_line(episode) + "\n")
    status = "reached the goal" if episode.success else "failed"
    print(f"{args.algo} with damage {args.damage}: {status} after "
          f"{episode.actions_used} actions")
    return 0


def cmd_bench(args) -> int:
    cfg = _load_cfg(args)
    algos = [a.strip() for a in args.algos.split(",") if a.strip()]
    for a in algos:
        if a not in ALGO_KINDS:
            raise UsageError(f"unknown algo {a!r}")
    damages = []
    for name in args.damages.split(","):
        name = name.strip()
        if name not in DAMAGE_NAMES:
            raise UsageError(f"unknown damage {name!r}")
        damages.append(DAMAGE_NAMES[name])
    reps = args.reps or cfg.bench_reps
    rep_seeds = args.rep_seeds or cfg.bench_rep_seeds
    maze = load_maze_file(args.maze or default_maze_path(), cfg)

    # all repertoires must load before any episode runs
    variants: dict[tuple[str, int], VariantConfig] = {}
    for algo in algos:
        kind = ALGO_KINDS[algo]
        for r in range(rep_seeds):
            subdir = os.path.join(args.repdir, f"s{r}")
            variants[(kind, r)] = _build_variant(kind, subdir, cfg)

    specs = bench_mod.build_specs(args.seed, [ALGO_KINDS[a] for a in algos],
                                  damages, rep_seeds, reps)
    logs = bench_mod.run_suite(variants, maze, specs, jobs=args.jobs)
    result = bench_mod.BenchResult(specs, logs)
    outdir = args.out or "bench"
    bench_mod.write_episode_files(result, outdir)
    bench_mod.write_aggregates(result, outdir)
    for algo in algos:
        kind = ALGO_KINDS[algo]
        acts = result.actions(kind)
        print(f"{algo}: median {percentile_nearest_rank(acts, 50)} actions, "
              f"failures {result.failure_fraction(kind):.1%}")
    print(f"wrote bench artifacts into {outdir}")
    return 0


def cmd_plot(args) -> int:
    path = os.path.join(args.bench_dir, "episodes.csv")
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    header = lines[0].split(",")
    idx = {name: i for i, name in enumerate(header)}
    per_variant: dict[str, dict[tuple[int, int], list[int]]] = {}
    failures: dict[str, list[bool]] = {}
    for line in lines[1:]:
        parts = line.split(",")
        v = parts[idx["variant"]]
        key = (int(parts[idx["rep_seed_idx"]]), int(parts[idx["episode_idx"]]))
        per_variant.setdefault(v, {}).setdefault(key, []).append(
            int(parts[idx["actions_used"]]))
        failures.setdefault(v, []).append(parts[idx["success"]] == "0")
    variants = sorted(per_variant)
    medians = [[percentile_nearest_rank(v, 50)
                for _, v in sorted(per_variant[name].items())]
               for name in variants]
    svg = svgplot.box_plot_svg(variants, medians,
                               title="median actions per replication",
                               ylabel="actions")
    with open(os.path.join(args.bench_dir, "actions_box.svg"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
    fail_fracs = [sum(failures[v]) / len(failures[v]) for v in variants]
    svg = svgplot.bar_plot_svg(variants, fail_fracs,
                               title="episodes failing the action cap",
                               ylabel="failure fraction")
    with open(os.path.join(args.bench_dir, "failures_bar.svg"), "w",
              encoding="utf-8", newline="\n") as fh:
        fh.write(svg)
    print(f"regenerated SVGs in {args.bench_dir}")
    return 0


_COMMANDS = {
    "train": cmd_train,
    "inspect": cmd_inspect,
    "modulate": cmd_modulate,
    "adapt": cmd_adapt,
    "bench": cmd_bench,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("HEXADAPT_LOGLEVEL", "WARNING"))
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ConfigError, OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
