"""Experiment configuration: YAML loading, validation, and default resolution.

One experiment per file. Every artifact the harness writes embeds the fully
resolved configuration (defaults included) so reports are self-describing.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from pathlib import Path

import yaml

__all__ = ["ConfigError", "ExperimentConfig", "SAMPLER_NAMES"]

_BASES = ("uniform", "halton", "gauss-mix")
SAMPLER_NAMES = tuple(
    prefix + base + suffix
    for prefix in ("", "sv-")
    for base in _BASES
    for suffix in ("", "+rej")
)

ENV_KINDS = ("checkerboard", "rooms", "labeled_points", "grid", "cubby_arm")

_ENV_DEFAULTS: dict[str, dict] = {
    "checkerboard": {
        "rows": 4,
        "cols": 4,
        "gap_fraction": 0.16,
        "grid_resolution": 72,
        "feature_grid": 32,
    },
    "rooms": {
        "n_points": 4000,
        "points_seed": 0,
        "clip": None,
        "centers_grid": 26,
        "lengthscale": None,
        "prior_variance": 25.0,
        "fit_iters": 200,
    },
    "labeled_points": {
        "path": None,
        "clip": None,
        "extent": [0.0, 0.0, 1.0, 1.0],
        "centers_grid": 26,
        "lengthscale": None,
        "prior_variance": 25.0,
        "fit_iters": 200,
    },
    "grid": {
        "path": None,
        "feature_grid": 32,
    },
    "cubby_arm": {
        "compartments": 2,
        "links": [1.2, 1.0, 0.8],
        "spheres_per_link": 4,
        "sphere_radius": 0.05,
        "epsilon": 0.25,
        "alpha": 10.0,
        "face": 1.6,
        "depth": 0.8,
        "compartment_height": 1.0,
        "wall_thickness": 0.1,
        "search_samples": 40000,
    },
}

_SVGD_DEFAULTS = {
    "step_size": 0.1,
    "max_iters": 1000,
    "grad_tol": 1e-3,
    "metric_mode": "grad_outer",
    "adagrad_decay": 0.9,
    "bandwidth": None,
}

_BARRIER_DEFAULTS = {"stiffness": 50.0, "margin_fraction": 0.02}

_METRICS_DEFAULTS = {
    "mmd": False,
    "coverage": False,
    "reference_samples": 1000,
    "probes": 1000,
    "reference_beta": None,
}


class ConfigError(ValueError):
    """Raised for malformed or inconsistent experiment configurations."""


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigError(message)


def _merged(defaults: dict, given: dict, context: str) -> dict:
    unknown = set(given) - set(defaults)
    _require(not unknown, f"{context}: unknown keys {sorted(unknown)}")
    out = copy.deepcopy(defaults)
    out.update(given)
    return out


@dataclass
class ExperimentConfig:
    name: str
    seed: int
    environment: dict
    samplers: list[str]
    n_vertices: list[int]
    seeds: list[int]
    beta: float
    rho: float
    edge_resolution: float | None
    svgd: dict
    barrier: dict
    query: dict | str | None
    mixture: dict | None
    metrics: dict
    base_dir: Path = field(default_factory=Path)

    @classmethod
    def from_dict(cls, data: dict, base_dir: Path | None = None) -> "ExperimentConfig":
        _require(isinstance(data, dict), "config must be a mapping")
        known = {
            "name",
            "seed",
            "environment",
            "samplers",
            "n_vertices",
            "seeds",
            "beta",
            "rho",
            "edge_resolution",
            "svgd",
            "barrier",
            "query",
            "mixture",
            "metrics",
        }
        unknown = set(data) - known
        _require(not unknown, f"unknown top-level keys {sorted(unknown)}")

        env = data.get("environment")
        _require(isinstance(env, dict), "environment section is required")
        kind = env.get("kind")
        _require(kind in ENV_KINDS, f"environment.kind must be one of {ENV_KINDS}")
        env = {"kind": kind, **_merged(_ENV_DEFAULTS[kind], {k: v for k, v in env.items() if k != "kind"}, "environment")}
        if kind in ("labeled_points", "grid"):
            _require(env.get("path"), f"environment.path is required for kind {kind!r}")

        samplers = data.get("samplers", ["uniform"])
        _require(
            isinstance(samplers, list) and samplers, "samplers must be a nonempty list"
        )
        for s in samplers:
            _require(s in SAMPLER_NAMES, f"unknown sampler {s!r}; valid: {SAMPLER_NAMES}")

        n_vertices = data.get("n_vertices", [100])
        if isinstance(n_vertices, int):
            n_vertices = [n_vertices]
        _require(
            isinstance(n_vertices, list)
            and n_vertices
            and all(isinstance(n, int) and n > 0 for n in n_vertices),
            "n_vertices must be positive integers",
        )

        seeds = data.get("seeds", 1)
        if isinstance(seeds, int):
            _require(seeds >= 1, "seeds count must be >= 1")
            seeds = list(range(seeds))
        _require(
            isinstance(seeds, list) and all(isinstance(s, int) and s >= 0 for s in seeds),
            "seeds must be a count or a list of non-negative integers",
        )

        beta = float(data.get("beta", 0.5))
        _require(0.0 <= beta <= 1.0, "beta must lie in [0, 1]")
        rho = float(data.get("rho", 0.3))
        _require(rho > 0, "rho must be positive")
        edge_resolution = data.get("edge_resolution")
        if edge_resolution is not None:
            edge_resolution = float(edge_resolution)
            _require(edge_resolution > 0, "edge_resolution must be positive")

        svgd = _merged(_SVGD_DEFAULTS, data.get("svgd", {}) or {}, "svgd")
        _require(
            svgd["metric_mode"] in ("identity", "avg_hessian", "grad_outer"),
            "svgd.metric_mode must be identity, avg_hessian, or grad_outer",
        )
        barrier = _merged(_BARRIER_DEFAULTS, data.get("barrier", {}) or {}, "barrier")
        metrics = _merged(_METRICS_DEFAULTS, data.get("metrics", {}) or {}, "metrics")

        query = data.get("query", "task")
        if isinstance(query, dict):
            unknown = set(query) - {"start", "goal"}
            _require(not unknown, f"query: unknown keys {sorted(unknown)}")
            _require(
                "start" in query and "goal" in query,
                "query needs both start and goal",
            )
        else:
            _require(
                query in (None, "task"),
                "query must be a start/goal mapping, 'task', or null",
            )

        mixture = data.get("mixture")
        if mixture is not None:
            mixture = _merged({"std": 0.3, "means": "task"}, mixture, "mixture")

        seed = int(data.get("seed", 0))
        _require(seed >= 0, "seed must be non-negative")

        return cls(
            name=str(data.get("name", "experiment")),
            seed=seed,
            environment=env,
            samplers=list(samplers),
            n_vertices=list(n_vertices),
            seeds=list(seeds),
            beta=beta,
            rho=rho,
            edge_resolution=edge_resolution,
            svgd=svgd,
            barrier=barrier,
            query=query,
            mixture=mixture,
            metrics=metrics,
            base_dir=base_dir or Path("."),
        )

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        data = yaml.safe_load(path.read_text())
        return cls.from_dict(data or {}, base_dir=path.parent)

    def resolve_path(self, value: str) -> Path:
        """Paths inside a config are taken relative to the config file."""
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def resolved(self) -> dict:
        """The full configuration with every default filled in."""
        return {
            "name": self.name,
            "seed": self.seed,
            "environment": copy.deepcopy(self.environment),
            "samplers": list(self.samplers),
            "n_vertices": list(self.n_vertices),
            "seeds": list(self.seeds),
            "beta": self.beta,
            "rho": self.rho,
            "edge_resolution": self.edge_resolution,
            "svgd": copy.deepcopy(self.svgd),
            "barrier": copy.deepcopy(self.barrier),
            "query": copy.deepcopy(self.query),
            "mixture": copy.deepcopy(self.mixture),
            "metrics": copy.deepcopy(self.metrics),
        }
