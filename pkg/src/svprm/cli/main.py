"""Command-line interface.

Subcommands mirror the pipeline phases: gen (environment artifacts), fit
(model fitting), infer (particle refinement), build (roadmap construction),
plan (a single query), eval (quality metrics), bench (the full trial sweep),
render (scene SVG), and run (one experiment end to end).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

log = logging.getLogger("svprm")


def _load_config(args):
    from .config import ConfigError, ExperimentConfig

    if not getattr(args, "config", None):
        raise ConfigError("--config is required for this command")
    cfg = ExperimentConfig.from_file(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    return cfg


def _out_dir(args) -> Path:
    out = Path(getattr(args, "out", None) or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _bundle(cfg):
    from .bench import build_environment

    return build_environment(cfg)


def cmd_gen(args) -> int:
    from ..models import save_labeled_points, save_model, save_occupancy_grid

    cfg = _load_config(args)
    out = _out_dir(args)
    bundle = _bundle(cfg)
    resolved = cfg.resolved()
    task = {
        "config": resolved,
        "kind": bundle.kind,
        "space": {
            "lower": bundle.space.lower.tolist(),
            "upper": bundle.space.upper.tolist(),
        },
        "start": None if bundle.start is None else bundle.start.tolist(),
        "goal": None if bundle.goal is None else bundle.goal.tolist(),
        "home": None if bundle.home is None else bundle.home.tolist(),
    }
    (out / "task.json").write_text(json.dumps(task, indent=2) + "\n")
    save_model(bundle.model, out / "model.json")
    if bundle.grid is not None:
        save_occupancy_grid(out / "grid.csv", bundle.grid, bundle.extent)
    if bundle.obstacles is not None:
        bundle.obstacles.save(out / "obstacles.json")
    if bundle.kind == "rooms":
        from .envs import gen_rooms_points

        env = cfg.environment
        pts, labels, _ = gen_rooms_points(
            n_points=int(env["n_points"]), seed=int(env["points_seed"])
        )
        save_labeled_points(out / "points.csv", pts, labels)
    log.info("environment artifacts written to %s", out)
    return 0


def cmd_fit(args) -> int:
    from ..models import save_model

    cfg = _load_config(args)
    out = _out_dir(args)
    bundle = _bundle(cfg)
    save_model(bundle.model, out / "model.json")
    log.info("fitted model written to %s", out / "model.json")
    return 0


def _suite_for(cfg, bundle):
    from .bench import make_suite

    return make_suite(cfg, bundle)


def _maybe_load_model(args, bundle):
    if getattr(args, "model", None):
        from ..models import load_model

        bundle.model = load_model(args.model)
    return bundle


def cmd_infer(args) -> int:
    from ..metrics import initial_samples, _trial_rng
    from ..svgd import ParticleSet, run_inference, write_trace_csv

    cfg = _load_config(args)
    out = _out_dir(args)
    bundle = _maybe_load_model(args, _bundle(cfg))
    suite = _suite_for(cfg, bundle)
    sampler = args.sampler or cfg.samplers[0]
    n = args.n or cfg.n_vertices[0]
    seed = cfg.seeds[0] if args.trial_seed is None else args.trial_seed
    rng = _trial_rng(cfg.seed, n, seed, 0)
    init = initial_samples(
        sampler, bundle.model, bundle.space, cfg.beta, n, rng, mixture=suite.mixture
    )
    trace = []
    final = init
    if sampler.startswith("sv-"):
        ps, trace = run_inference(
            ParticleSet(points=init, rng_seed=seed),
            bundle.model,
            bundle.prior,
            suite.kernel,
            suite.svgd_cfg,
        )
        final = ps.points
    resolved = cfg.resolved()
    payload = {
        "config": resolved,
        "sampler": sampler,
        "n": n,
        "seed": seed,
        "points": final.tolist(),
    }
    (out / "particles.json").write_text(json.dumps(payload) + "\n")
    write_trace_csv(out / "trace.csv", trace, config=resolved)
    log.info("particles written to %s", out / "particles.json")
    return 0


def cmd_build(args) -> int:
    from ..roadmap import build_roadmap

    cfg = _load_config(args)
    out = _out_dir(args)
    bundle = _maybe_load_model(args, _bundle(cfg))
    suite = _suite_for(cfg, bundle)
    particles = json.loads(Path(args.particles).read_text())
    points = np.asarray(particles["points"], dtype=float)
    rmap = build_roadmap(
        points, bundle.model, cfg.beta, cfg.rho, suite.edge_resolution, lazy=not args.eager
    )
    rmap.save(out / "roadmap.json", config=cfg.resolved())
    log.info("roadmap written to %s", out / "roadmap.json")
    return 0


def cmd_plan(args) -> int:
    from ..planner import PlanQuery, plan_eager, plan_lazy
    from ..roadmap import Roadmap
    from .bench import _resolve_query

    cfg = _load_config(args)
    out = _out_dir(args)
    bundle = _maybe_load_model(args, _bundle(cfg))
    rmap = Roadmap.load(args.roadmap)
    query = _resolve_query(cfg, bundle)
    if query is None:
        raise ValueError("config has no query to plan")
    planner = plan_eager if args.eager else plan_lazy
    result = planner(rmap, bundle.model, PlanQuery(query[0], query[1]))
    result.save(out / "result.json", config=cfg.resolved())
    rmap.save(out / "roadmap.json", config=cfg.resolved())
    log.info("plan status=%s cost=%s", result.status, result.cost)
    return 0


def cmd_eval(args) -> int:
    from ..metrics import coverage, mmd_squared, reference_feasible_sample
    from ..roadmap import Roadmap

    cfg = _load_config(args)
    out = _out_dir(args)
    bundle = _maybe_load_model(args, _bundle(cfg))
    rmap = Roadmap.load(args.roadmap)
    report: dict = {"config": cfg.resolved()}
    ref_model = bundle.reference_model or bundle.model
    ref_beta = cfg.metrics["reference_beta"]
    ref_beta = cfg.beta if ref_beta is None else ref_beta
    if cfg.metrics["mmd"] and rmap.n_vertices:
        ref = reference_feasible_sample(
            ref_model,
            bundle.space,
            ref_beta,
            int(cfg.metrics["reference_samples"]),
            np.random.default_rng(np.random.SeedSequence((cfg.seed, 101))),
        )
        report["mmd"] = mmd_squared(rmap.vertices, ref)
    if cfg.metrics["coverage"]:
        rep = coverage(
            rmap,
            bundle.model,
            bundle.space,
            cfg.beta,
            int(cfg.metrics["probes"]),
            np.random.default_rng(np.random.SeedSequence((cfg.seed, 7))),
        )
        report["coverage"] = rep.coverage
        report["probes"] = rep.probes
    (out / "metrics.json").write_text(json.dumps(report, indent=2) + "\n")
    log.info("metrics written to %s", out / "metrics.json")
    return 0


def cmd_render(args) -> int:
    from ..planner import PlanResult
    from ..roadmap import Roadmap
    from . import render

    cfg = _load_config(args)
    out = _out_dir(args)
    bundle = _bundle(cfg)
    rmap = Roadmap.load(args.roadmap) if args.roadmap else None
    result = None
    if args.result:
        data = json.loads(Path(args.result).read_text())
        result = PlanResult(
            status=data["status"],
            path=None if data["path"] is None else np.asarray(data["path"], dtype=float),
            cost=data["cost"],
            edges_evaluated=data["edges_evaluated"],
        )
    render.render_scene(out / "scene.svg", bundle, roadmap=rmap, result=result, config=cfg.resolved())
    log.info("scene written to %s", out / "scene.svg")
    return 0


def cmd_bench(args) -> int:
    from .bench import run_bench

    cfg = _load_config(args)
    out = _out_dir(args)
    run_bench(cfg, out, jobs=args.jobs, verbose=args.verbose)
    log.info("benchmark artifacts written to %s", out)
    return 0


def cmd_run(args) -> int:
    from .bench import run_pipeline

    cfg = _load_config(args)
    out = _out_dir(args)
    run_pipeline(cfg, out, sampler=args.sampler, n=args.n, seed=args.trial_seed)
    log.info("experiment artifacts written to %s", out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svprm",
        description="Particle-optimized probabilistic roadmap benchmark harness",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, **extra_flags):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=False, help="experiment config (YAML)")
        p.add_argument("--seed", type=int, default=None, help="override the master seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--verbose", action="store_true")
        for flag, kwargs in extra_flags.items():
            p.add_argument(flag, **kwargs)
        p.set_defaults(func=fn)
        return p

    add("gen", cmd_gen, "generate environment artifacts")
    add("fit", cmd_fit, "fit and save the feasibility model")
    add(
        "infer",
        cmd_infer,
        "sample and refine roadmap vertices",
        **{
            "--sampler": {"default": None, "help": "sampler name (default: first configured)"},
            "--n": {"type": int, "default": None, "help": "vertex count"},
            "--trial-seed": {"type": int, "default": None, "help": "trial seed"},
            "--model": {"default": None, "help": "load a saved model instead of refitting"},
        },
    )
    add(
        "build",
        cmd_build,
        "construct a roadmap from saved particles",
        **{
            "--particles": {"required": True, "help": "particles.json from infer"},
            "--model": {"default": None},
            "--eager": {"action": "store_true", "help": "evaluate all edges now"},
        },
    )
    add(
        "plan",
        cmd_plan,
        "plan the configured query on a saved roadmap",
        **{
            "--roadmap": {"required": True},
            "--model": {"default": None},
            "--eager": {"action": "store_true", "help": "use the eager planner"},
        },
    )
    add(
        "eval",
        cmd_eval,
        "distribution and coverage metrics for a saved roadmap",
        **{"--roadmap": {"required": True}, "--model": {"default": None}},
    )
    add(
        "render",
        cmd_render,
        "render a scene SVG",
        **{"--roadmap": {"default": None}, "--result": {"default": None}},
    )
    add("bench", cmd_bench, "run the full trial sweep")
    add(
        "run",
        cmd_run,
        "run one experiment end to end",
        **{
            "--sampler": {"default": None},
            "--n": {"type": int, "default": None},
            "--trial-seed": {"type": int, "default": None},
        },
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"svprm {args.command}: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"svprm {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
