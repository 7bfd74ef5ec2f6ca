"""Experiment orchestration: environment assembly, trial sweeps, artifact writing."""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..geometry import ConfigSpace, KinematicChain, ObstacleSet
from ..metrics import (
    MixtureSpec,
    TrialResult,
    TrialSuite,
    aggregate_results,
    run_single_trial,
    run_trial_suite,
    write_report_csv,
    _reference_sample_for,
)
from ..models import (
    BayesianHilbertMap,
    BoxBarrierPrior,
    bhm_fit,
    fit_rbf_field,
    grid_cell_centers,
    load_labeled_points,
    load_occupancy_grid,
)
from ..roadmap import Roadmap
from ..svgd import KernelConfig, SvgdConfig, write_trace_csv
from .config import ConfigError, ExperimentConfig
from .envs import CheckerboardEnv, CubbyTask, gen_checkerboard, gen_cubby_arm_task, gen_rooms_points
from . import render

__all__ = [
    "EnvironmentBundle",
    "build_environment",
    "make_suite",
    "run_bench",
    "run_pipeline",
]


@dataclass
class EnvironmentBundle:
    """Everything downstream phases need from one environment."""

    kind: str
    model: object
    space: ConfigSpace
    prior: BoxBarrierPrior
    start: np.ndarray | None
    goal: np.ndarray | None
    home: np.ndarray | None = None
    reference_model: object | None = None
    cell_size: float | None = None
    obstacles: ObstacleSet | None = None
    grid: np.ndarray | None = None
    extent: np.ndarray | None = None
    chain: KinematicChain | None = None


def _fit_bhm_from_points(points, labels, env: dict, extent) -> BayesianHilbertMap:
    g = int(env["centers_grid"])
    centers = grid_cell_centers((g, g), extent)
    xmin, ymin, xmax, ymax = (float(v) for v in extent)
    spacing = 0.5 * ((xmax - xmin) / g + (ymax - ymin) / g)
    lengthscale = env["lengthscale"] or 1.5 * spacing
    return bhm_fit(
        points,
        labels,
        centers,
        lengthscale,
        prior_variance=float(env["prior_variance"]),
        iters=int(env["fit_iters"]),
    )


def _clip_points(points, labels, clip):
    if clip is None:
        return points, labels
    clip = np.asarray(clip, dtype=float)
    keep = (
        (points[:, 0] >= clip[0])
        & (points[:, 1] >= clip[1])
        & (points[:, 0] <= clip[2])
        & (points[:, 1] <= clip[3])
    )
    return points[keep], labels[keep]


def build_environment(cfg: ExperimentConfig) -> EnvironmentBundle:
    """Instantiate the model, space, prior, and task data named by the config."""
    env = cfg.environment
    kind = env["kind"]
    barrier = cfg.barrier

    def prior_for(space: ConfigSpace) -> BoxBarrierPrior:
        return BoxBarrierPrior.from_fraction(
            space, stiffness=float(barrier["stiffness"]), fraction=float(barrier["margin_fraction"])
        )

    if kind == "checkerboard":
        board: CheckerboardEnv = gen_checkerboard(
            rows=int(env["rows"]),
            cols=int(env["cols"]),
            gap_fraction=float(env["gap_fraction"]),
            seed=cfg.seed,
            grid_resolution=int(env["grid_resolution"]),
            feature_grid=int(env["feature_grid"]),
        )
        return EnvironmentBundle(
            kind=kind,
            model=board.field,
            space=board.space,
            prior=prior_for(board.space),
            start=board.start,
            goal=board.goal,
            reference_model=board.field,
            cell_size=board.cell,
            obstacles=board.obstacles,
            grid=board.grid,
            extent=board.extent,
        )

    if kind in ("rooms", "labeled_points"):
        if kind == "rooms":
            points, labels, world = gen_rooms_points(
                n_points=int(env["n_points"]), seed=int(env["points_seed"])
            )
            extent = world.extent
            obstacles = world.obstacles
        else:
            points, labels = load_labeled_points(cfg.resolve_path(env["path"]))
            extent = np.asarray(env["extent"], dtype=float)
            obstacles = None
        part_points, part_labels = _clip_points(points, labels, env["clip"])
        model = _fit_bhm_from_points(part_points, part_labels, env, extent)
        reference_model = model
        if env["clip"] is not None and (cfg.metrics["mmd"] or cfg.metrics["coverage"]):
            reference_model = _fit_bhm_from_points(points, labels, env, extent)
        space = ConfigSpace(extent[:2], extent[2:])
        g = int(env["centers_grid"])
        cell = float(np.mean([(extent[2] - extent[0]) / g, (extent[3] - extent[1]) / g]))
        return EnvironmentBundle(
            kind=kind,
            model=model,
            space=space,
            prior=prior_for(space),
            start=None,
            goal=None,
            reference_model=reference_model,
            cell_size=cell,
            obstacles=obstacles,
            extent=extent,
        )

    if kind == "grid":
        grid, extent = load_occupancy_grid(cfg.resolve_path(env["path"]))
        g = int(env["feature_grid"])
        h, w = grid.shape
        feat_shape = (
            max(2, int(round(g * h / max(h, w)))),
            max(2, int(round(g * w / max(h, w)))),
        )
        model = fit_rbf_field(grid, extent, feature_shape=feat_shape)
        space = ConfigSpace(extent[:2], extent[2:])
        cell = float((extent[2] - extent[0]) / grid.shape[1])
        return EnvironmentBundle(
            kind=kind,
            model=model,
            space=space,
            prior=prior_for(space),
            start=None,
            goal=None,
            reference_model=model,
            cell_size=cell,
            grid=grid,
            extent=extent,
        )

    if kind == "cubby_arm":
        task: CubbyTask = gen_cubby_arm_task(
            compartments=int(env["compartments"]),
            link_lengths=env["links"],
            spheres_per_link=int(env["spheres_per_link"]),
            sphere_radius=float(env["sphere_radius"]),
            epsilon_sdf=float(env["epsilon"]),
            alpha=float(env["alpha"]),
            face=float(env["face"]),
            depth=float(env["depth"]),
            compartment_height=float(env["compartment_height"]),
            wall_thickness=float(env["wall_thickness"]),
            search_samples=int(env["search_samples"]),
        )
        return EnvironmentBundle(
            kind=kind,
            model=task.model,
            space=task.space,
            prior=prior_for(task.space),
            start=task.start,
            goal=task.goal,
            home=task.home,
            reference_model=task.model,
            obstacles=task.obstacles,
            extent=task.extent,
            chain=task.chain,
        )

    raise ConfigError(f"unhandled environment kind {kind!r}")


def _resolve_query(cfg: ExperimentConfig, bundle: EnvironmentBundle):
    if cfg.query is None:
        return None
    if isinstance(cfg.query, dict):
        return (
            np.asarray(cfg.query["start"], dtype=float),
            np.asarray(cfg.query["goal"], dtype=float),
        )
    # "task"
    if bundle.start is None or bundle.goal is None:
        raise ConfigError(
            "environment provides no task query; set query: {start, goal} or query: null"
        )
    return bundle.start, bundle.goal


def _resolve_mixture(cfg: ExperimentConfig, bundle: EnvironmentBundle) -> MixtureSpec | None:
    needs = any(s.endswith("gauss-mix") or "gauss-mix" in s for s in cfg.samplers)
    spec = cfg.mixture
    if spec is None:
        if not needs:
            return None
        spec = {"std": 0.3, "means": "task"}
    if spec["means"] == "task":
        means = [m for m in (bundle.start, bundle.goal, bundle.home) if m is not None]
        if not means:
            raise ConfigError("mixture.means: 'task' but the environment has no task points")
        means = np.asarray(means, dtype=float)
    else:
        means = np.asarray(spec["means"], dtype=float)
    return MixtureSpec(means=means, stds=np.full(means.shape[0], float(spec["std"])))


def make_suite(cfg: ExperimentConfig, bundle: EnvironmentBundle) -> TrialSuite:
    resolution = cfg.edge_resolution
    if resolution is None:
        cell = bundle.cell_size if bundle.cell_size is not None else cfg.rho
        resolution = min(cell, cfg.rho) / 8.0
    return TrialSuite(
        model=bundle.model,
        space=bundle.space,
        samplers=list(cfg.samplers),
        n_list=list(cfg.n_vertices),
        seeds=list(cfg.seeds),
        beta=cfg.beta,
        rho=cfg.rho,
        edge_resolution=resolution,
        svgd_cfg=SvgdConfig(
            step_size=float(cfg.svgd["step_size"]),
            max_iters=int(cfg.svgd["max_iters"]),
            grad_tol=float(cfg.svgd["grad_tol"]),
            metric_mode=str(cfg.svgd["metric_mode"]),
            adagrad_decay=float(cfg.svgd["adagrad_decay"]),
        ),
        kernel=KernelConfig(bandwidth=cfg.svgd["bandwidth"]),
        prior=bundle.prior,
        query=_resolve_query(cfg, bundle),
        reference_model=bundle.reference_model,
        reference_beta=cfg.metrics["reference_beta"],
        reference_samples=int(cfg.metrics["reference_samples"]),
        compute_mmd=bool(cfg.metrics["mmd"]),
        coverage_probes=int(cfg.metrics["probes"]) if cfg.metrics["coverage"] else 0,
        mixture=_resolve_mixture(cfg, bundle),
        master_seed=cfg.seed,
    )


def _write_report_json(
    path: Path, cfg: ExperimentConfig, rows: list[TrialResult], elapsed: float
) -> None:
    payload = {
        "config": cfg.resolved(),
        "rows": [
            {
                "sampler": r.sampler,
                "n": r.n,
                "seed": r.seed,
                "status": r.status,
                "success": r.success,
                "path_cost": r.path_cost,
                "edges_evaluated": r.edges_evaluated,
                "n_vertices": r.n_vertices,
                "n_edges": r.n_edges,
                "mmd_init": r.mmd_init,
                "mmd_final": r.mmd_final,
                "coverage": r.coverage,
            }
            for r in rows
        ],
        "aggregates": aggregate_results(rows),
        "timing": {
            "elapsed_seconds": elapsed,
            "trial_wall_times": [r.wall_time for r in rows],
        },
    }
    path.write_text(json.dumps(payload, indent=2) + "\n")


def _write_trial_artifacts(
    out: Path, cfg: ExperimentConfig, bundle: EnvironmentBundle, capture: dict
) -> None:
    resolved = cfg.resolved()
    rmap: Roadmap = capture["roadmap"]
    rmap.save(out / "roadmap.json", config=resolved)
    write_trace_csv(out / "trace.csv", capture["trace"], config=resolved)
    result = capture.get("result")
    if result is not None:
        result.save(out / "result.json", config=resolved)
    render.render_scene(
        out / "scene.svg",
        bundle,
        roadmap=rmap,
        result=result,
        config=resolved,
    )


def run_bench(
    cfg: ExperimentConfig, out, jobs: int = 1, verbose: bool = False
) -> dict[str, Path]:
    """Full sweep: report.csv/json, summary curves, one representative trial's artifacts."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    bundle = build_environment(cfg)
    suite = make_suite(cfg, bundle)
    rows = run_trial_suite(suite, jobs=jobs)
    elapsed = time.perf_counter() - t0

    resolved = cfg.resolved()
    paths = {"report_csv": out / "report.csv", "report_json": out / "report.json"}
    write_report_csv(paths["report_csv"], rows, config=resolved)
    _write_report_json(paths["report_json"], cfg, rows, elapsed)

    # representative artifacts from the first configured trial
    capture: dict = {}
    ref = _reference_sample_for(suite)
    run_single_trial(
        suite, cfg.samplers[0], cfg.n_vertices[0], cfg.seeds[0], ref, capture=capture
    )
    _write_trial_artifacts(out, cfg, bundle, capture)
    paths.update(
        roadmap=out / "roadmap.json", scene=out / "scene.svg", trace=out / "trace.csv"
    )

    aggregates = aggregate_results(rows)
    paths["curves_success"] = out / "curves_success.svg"
    render.render_curves(paths["curves_success"], aggregates, "success_rate", config=resolved)
    if any(a["mean_cost_solved"] is not None for a in aggregates):
        paths["curves_cost"] = out / "curves_cost.svg"
        render.render_curves(paths["curves_cost"], aggregates, "mean_cost_solved", config=resolved)
    if verbose:
        for agg in aggregates:
            print(
                f"{agg['sampler']:>18s} N={agg['n']:<4d} "
                f"success {agg['successes']}/{agg['trials']}"
            )
    return paths


def run_pipeline(
    cfg: ExperimentConfig,
    out,
    sampler: str | None = None,
    n: int | None = None,
    seed: int | None = None,
) -> dict[str, Path]:
    """One end-to-end experiment: fit, infer, construct, plan, evaluate, render."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    bundle = build_environment(cfg)
    suite = make_suite(cfg, bundle)
    sampler = sampler or cfg.samplers[0]
    n = n or cfg.n_vertices[0]
    seed = cfg.seeds[0] if seed is None else seed

    capture: dict = {}
    ref = _reference_sample_for(suite)
    row = run_single_trial(suite, sampler, n, seed, ref, capture=capture)
    elapsed = time.perf_counter() - t0

    resolved = cfg.resolved()
    paths = {"report_csv": out / "report.csv", "report_json": out / "report.json"}
    write_report_csv(paths["report_csv"], [row], config=resolved)
    _write_report_json(paths["report_json"], cfg, [row], elapsed)
    _write_trial_artifacts(out, cfg, bundle, capture)
    paths.update(
        roadmap=out / "roadmap.json", scene=out / "scene.svg", trace=out / "trace.csv"
    )
    return paths
