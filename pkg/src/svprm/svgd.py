"""Kernelized particle transport toward a feasibility posterior.

The update for particle i averages, over all particles j, the posterior
gradient at j weighted by an anisotropic RBF kernel plus the kernel's own
gradient (the repulsive term):

    phi(x_i) = (1/N) sum_j [ k(x_j, x_i) grad log p(x_j | free)
                             + grad_{x_j} k(x_j, x_i) ]

with k(x_j, x_i) = exp(-(x_j - x_i)^T M (x_j - x_i) / (2 h)) for a shared
positive-definite metric M and bandwidth h.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .models import (
    posterior_curvature_many,
    posterior_grad_many,
)

__all__ = [
    "SvgdError",
    "ParticleSet",
    "KernelConfig",
    "SvgdConfig",
    "TraceRow",
    "kernel_eval",
    "pairwise_sq_metric",
    "median_bandwidth",
    "estimate_metric",
    "svgd_phi",
    "svgd_step",
    "run_inference",
    "write_trace_csv",
]

METRIC_MODES = ("identity", "avg_hessian", "grad_outer")


class SvgdError(RuntimeError):
    """Raised when a particle update cannot be computed."""


@dataclass
class ParticleSet:
    """Particle positions plus per-particle optimizer scratch."""

    points: np.ndarray
    iteration: int = 0
    rng_seed: int = 0
    grad_accum: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1:
            raise SvgdError("particle set needs at least one point")
        if not np.all(np.isfinite(pts)):
            raise SvgdError("particle positions must be finite")
        self.points = pts
        if self.grad_accum is not None:
            self.grad_accum = np.asarray(self.grad_accum, dtype=float).reshape(pts.shape)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def copy(self) -> "ParticleSet":
        return ParticleSet(
            points=self.points.copy(),
            iteration=self.iteration,
            rng_seed=self.rng_seed,
            grad_accum=None if self.grad_accum is None else self.grad_accum.copy(),
        )


@dataclass
class KernelConfig:
    """Anisotropic RBF kernel parameters; None fields are resolved per step."""

    metric: np.ndarray | None = None  # None means identity
    bandwidth: float | None = None  # None means median heuristic

    def __post_init__(self):
        if self.metric is not None:
            m = np.asarray(self.metric, dtype=float)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise SvgdError("kernel metric must be square")
            if not np.allclose(m, m.T, atol=1e-10):
                raise SvgdError("kernel metric must be symmetric")
            self.metric = m
        if self.bandwidth is not None and self.bandwidth <= 0:
            raise SvgdError("bandwidth must be positive")


@dataclass
class SvgdConfig:
    step_size: float = 0.1
    max_iters: int = 1000
    grad_tol: float = 1e-3
    metric_mode: str = "identity"
    adagrad_decay: float = 0.9  # 1.0 disables per-coordinate scaling
    adagrad_eps: float = 1e-6

    def __post_init__(self):
        if self.step_size <= 0:
            raise SvgdError("step_size must be positive")
        if self.max_iters < 1:
            raise SvgdError("max_iters must be >= 1")
        if self.metric_mode not in METRIC_MODES:
            raise SvgdError(f"metric_mode must be one of {METRIC_MODES}")
        if not (0.0 < self.adagrad_decay <= 1.0):
            raise SvgdError("adagrad_decay must lie in (0, 1]")


def pairwise_sq_metric(X: np.ndarray, metric: np.ndarray | None = None) -> np.ndarray:
    """Squared pairwise distances (x_i - x_j)^T M (x_i - x_j)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = X if metric is None else X @ metric
    s = np.einsum("nd,nd->n", X, Y)
    sq = s[:, None] + s[None, :] - 2.0 * (X @ Y.T)
    return np.maximum(sq, 0.0)


def _median_from_sq(sq: np.ndarray) -> float:
    n = sq.shape[0]
    if n < 2:
        return 1.0
    off = sq[np.triu_indices(n, k=1)]
    med = float(np.median(off))
    h = med / np.log(n + 1.0)
    return max(h, 1e-12)


def median_bandwidth(X: np.ndarray, metric: np.ndarray | None = None) -> float:
    """Median heuristic: median squared pairwise metric distance over log(N+1)."""
    return _median_from_sq(pairwise_sq_metric(X, metric))


def kernel_eval(cfg: KernelConfig, xi, xj) -> tuple[float, np.ndarray]:
    """Kernel value k(x_i, x_j) and its gradient with respect to x_j."""
    xi = np.asarray(xi, dtype=float).reshape(-1)
    xj = np.asarray(xj, dtype=float).reshape(-1)
    metric = np.eye(xi.size) if cfg.metric is None else cfg.metric
    if cfg.bandwidth is None:
        raise SvgdError("kernel_eval needs a concrete bandwidth")
    diff = xj - xi
    sq = float(diff @ metric @ diff)
    value = float(np.exp(-sq / (2.0 * cfg.bandwidth)))
    grad = (metric @ (xi - xj)) * (value / cfg.bandwidth)
    return value, grad


def estimate_metric(mode: str, particles, model, prior=None) -> np.ndarray:
    """Shared kernel metric from the current particles.

    identity: the identity matrix.
    avg_hessian: mean posterior curvature over particles.
    grad_outer: mean outer product of likelihood gradients.
    Eigenvalues are floored to keep the result positive definite.
    """
    X = np.atleast_2d(getattr(particles, "points", particles))
    d = X.shape[1]
    if mode == "identity":
        return np.eye(d)
    if mode == "avg_hessian":
        M = posterior_curvature_many(model, prior, X).mean(axis=0)
    elif mode == "grad_outer":
        G = model.grad_log_likelihood_many(X)
        M = (G.T @ G) / X.shape[0]
    else:
        raise SvgdError(f"unknown metric mode {mode!r}")
    M = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(M)
    floor = 1e-6 * max(float(np.trace(M)), 0.0) / d + 1e-12
    w = np.maximum(w, floor)
    M = (V * w) @ V.T
    return 0.5 * (M + M.T)


def _phi(X: np.ndarray, grads: np.ndarray, metric: np.ndarray | None, bandwidth: float | None):
    n = X.shape[0]
    sq = pairwise_sq_metric(X, metric)
    h = bandwidth if bandwidth is not None else _median_from_sq(sq)
    K = np.exp(-sq / (2.0 * h))
    drive = K @ grads
    ksum = K.sum(axis=1)
    rep = ksum[:, None] * X - K @ X
    if metric is not None:
        rep = rep @ metric
    rep /= h
    return (drive + rep) / n, h


def svgd_phi(particles: ParticleSet, model, prior, kernel_cfg: KernelConfig):
    """Raw update directions for every particle plus the bandwidth used."""
    X = particles.points
    G = posterior_grad_many(model, prior, X)
    bad = ~np.all(np.isfinite(G), axis=1)
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise SvgdError(f"non-finite posterior gradient at particle {idx}")
    return _phi(X, G, kernel_cfg.metric, kernel_cfg.bandwidth)


def _step(particles: ParticleSet, model, prior, kernel_cfg: KernelConfig, cfg: SvgdConfig):
    phi, h = svgd_phi(particles, model, prior, kernel_cfg)
    if cfg.adagrad_decay < 1.0:
        accum = (
            np.zeros_like(phi)
            if particles.grad_accum is None
            else particles.grad_accum
        )
        accum = cfg.adagrad_decay * accum + (1.0 - cfg.adagrad_decay) * phi * phi
        adjusted = phi / (cfg.adagrad_eps + np.sqrt(accum))
    else:
        accum = particles.grad_accum
        adjusted = phi
    new_points = particles.points + cfg.step_size * adjusted
    if prior is not None:
        new_points = prior.space.clamp(new_points)
    updated = ParticleSet(
        points=new_points,
        iteration=particles.iteration + 1,
        rng_seed=particles.rng_seed,
        grad_accum=accum,
    )
    return updated, phi, h


def svgd_step(
    particles: ParticleSet, model, prior, kernel_cfg: KernelConfig, svgd_cfg: SvgdConfig
) -> ParticleSet:
    """One synchronized particle update (all directions from pre-step positions)."""
    return _step(particles, model, prior, kernel_cfg, svgd_cfg)[0]


@dataclass
class TraceRow:
    iteration: int
    mean_phi_norm: float
    bandwidth: float
    min_pairwise: float
    mean_pairwise: float


def _pairwise_stats(X: np.ndarray) -> tuple[float, float]:
    n = X.shape[0]
    if n < 2:
        return 0.0, 0.0
    sq = pairwise_sq_metric(X, None)
    off = np.sqrt(sq[np.triu_indices(n, k=1)])
    return float(off.min()), float(off.mean())


def run_inference(
    particles: ParticleSet, model, prior, kernel_cfg: KernelConfig, svgd_cfg: SvgdConfig
) -> tuple[ParticleSet, list[TraceRow]]:
    """Iterate particle updates until the mean update norm drops below grad_tol.

    The kernel metric is re-estimated each iteration from the pre-step particle
    positions unless kernel_cfg pins an explicit metric.
    """
    ps = particles.copy()
    trace: list[TraceRow] = []
    for _ in range(svgd_cfg.max_iters):
        if kernel_cfg.metric is not None or svgd_cfg.metric_mode == "identity":
            metric = kernel_cfg.metric
        else:
            metric = estimate_metric(svgd_cfg.metric_mode, ps, model, prior)
        step_cfg = KernelConfig(metric=metric, bandwidth=kernel_cfg.bandwidth)
        ps, phi, h = _step(ps, model, prior, step_cfg, svgd_cfg)
        mean_norm = float(np.linalg.norm(phi, axis=1).mean())
        mn, mean_pd = _pairwise_stats(ps.points)
        trace.append(TraceRow(ps.iteration, mean_norm, h, mn, mean_pd))
        if mean_norm < svgd_cfg.grad_tol:
            break
    return ps, trace


def write_trace_csv(path, trace: list[TraceRow], config: dict | None = None) -> None:
    """Export an inference trace; optional resolved config goes in a comment line."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        if config is not None:
            fh.write("# config: " + json.dumps(config, sort_keys=True) + "\n")
        writer = csv.writer(fh)
        writer.writerow(
            ["iteration", "mean_phi_norm", "bandwidth", "min_pairwise", "mean_pairwise"]
        )
        for row in trace:
            writer.writerow(
                [
                    row.iteration,
                    repr(row.mean_phi_norm),
                    repr(row.bandwidth),
                    repr(row.min_pairwise),
                    repr(row.mean_pairwise),
                ]
            )
