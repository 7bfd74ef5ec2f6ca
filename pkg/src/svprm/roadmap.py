"""Chance-constrained roadmap construction over particle vertices.

Vertices must satisfy p(free | x) >= beta; candidate edges connect vertex
pairs closer than the radius rho, and edge feasibility is resolved by testing
equally spaced points along the segment against the same constraint.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

__all__ = [
    "RoadmapError",
    "UNEVALUATED",
    "FEASIBLE",
    "INFEASIBLE",
    "Edge",
    "Roadmap",
    "cull_vertices",
    "connect_radius",
    "check_edge",
    "build_roadmap",
    "evaluate_all_edges",
]

UNEVALUATED = "unevaluated"
FEASIBLE = "feasible"
INFEASIBLE = "infeasible"
_STATUSES = (UNEVALUATED, FEASIBLE, INFEASIBLE)


class RoadmapError(ValueError):
    """Raised for invalid roadmap construction arguments."""


@dataclass
class Edge:
    i: int
    j: int
    length: float
    status: str = UNEVALUATED

    def __post_init__(self):
        if self.status not in _STATUSES:
            raise RoadmapError(f"unknown edge status {self.status!r}")


@dataclass
class Roadmap:
    """Graph of surviving vertices plus radius edges with lazy feasibility."""

    vertices: np.ndarray
    edges: list[Edge]
    beta: float
    rho: float
    edge_resolution: float

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float)
        if self.vertices.ndim == 1:
            self.vertices = self.vertices.reshape(0, 2) if self.vertices.size == 0 else self.vertices[:, None]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def count_status(self, status: str) -> int:
        return sum(1 for e in self.edges if e.status == status)

    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per-vertex list of (neighbor, edge index) pairs."""
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n_vertices)]
        for idx, e in enumerate(self.edges):
            adj[e.i].append((e.j, idx))
            adj[e.j].append((e.i, idx))
        return adj

    def copy(self) -> "Roadmap":
        return Roadmap(
            vertices=self.vertices.copy(),
            edges=[Edge(e.i, e.j, e.length, e.status) for e in self.edges],
            beta=self.beta,
            rho=self.rho,
            edge_resolution=self.edge_resolution,
        )

    def to_json(self, config: dict | None = None) -> dict:
        data = {
            "beta": self.beta,
            "rho": self.rho,
            "edge_resolution": self.edge_resolution,
            "vertices": self.vertices.tolist(),
            "edges": [[e.i, e.j, e.length, e.status] for e in self.edges],
        }
        if config is not None:
            data["config"] = config
        return data

    @classmethod
    def from_json(cls, data: dict) -> "Roadmap":
        edges = [Edge(int(i), int(j), float(ln), str(st)) for i, j, ln, st in data["edges"]]
        return cls(
            vertices=np.asarray(data["vertices"], dtype=float),
            edges=edges,
            beta=float(data["beta"]),
            rho=float(data["rho"]),
            edge_resolution=float(data["edge_resolution"]),
        )

    def save(self, path, config: dict | None = None) -> None:
        Path(path).write_text(json.dumps(self.to_json(config)) + "\n")

    @classmethod
    def load(cls, path) -> "Roadmap":
        return cls.from_json(json.loads(Path(path).read_text()))


def cull_vertices(particles, model, beta: float) -> np.ndarray:
    """Keep particles whose feasibility likelihood meets the threshold, in order."""
    if not (0.0 <= beta <= 1.0):
        raise RoadmapError("beta must lie in [0, 1]")
    points = np.atleast_2d(getattr(particles, "points", particles))
    if points.shape[0] == 0:
        return points.copy()
    keep = model.likelihood_many(points) >= beta
    return points[keep]


def connect_radius(vertices: np.ndarray, rho: float) -> list[Edge]:
    """All unordered vertex pairs with Euclidean distance strictly below rho."""
    if rho <= 0:
        raise RoadmapError("rho must be positive")
    vertices = np.atleast_2d(np.asarray(vertices, dtype=float))
    n = vertices.shape[0]
    if n < 2:
        return []
    tree = cKDTree(vertices)
    pairs = tree.query_pairs(rho, output_type="ndarray")
    if pairs.size == 0:
        return []
    pairs = np.sort(pairs, axis=1)
    order = np.lexsort((pairs[:, 1], pairs[:, 0]))
    pairs = pairs[order]
    lengths = np.linalg.norm(vertices[pairs[:, 0]] - vertices[pairs[:, 1]], axis=1)
    keep = lengths < rho
    return [
        Edge(int(i), int(j), float(ln))
        for (i, j), ln in zip(pairs[keep], lengths[keep])
    ]


def check_edge(model, a, b, beta: float, resolution: float):
    """Test equally spaced points from a to b against the chance constraint.

    Returns (True, None) when every query point satisfies p >= beta, otherwise
    (False, first violating point walking from a toward b).
    """
    if resolution <= 0:
        raise RoadmapError("edge resolution must be positive")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    length = float(np.linalg.norm(b - a))
    n_pts = int(np.ceil(length / resolution)) + 1 if length > 0 else 1
    ts = np.linspace(0.0, 1.0, n_pts)
    points = a[None, :] + ts[:, None] * (b - a)[None, :]
    probs = model.likelihood_many(points)
    violating = probs < beta
    if np.any(violating):
        return False, points[int(np.argmax(violating))]
    return True, None


def build_roadmap(
    particles,
    model,
    beta: float,
    rho: float,
    resolution: float | None = None,
    lazy: bool = True,
) -> Roadmap:
    """Cull particles by the chance constraint and connect survivors within rho.

    With lazy=True edge feasibility is left unevaluated for the planner to
    resolve; otherwise every edge is checked now.
    """
    resolution = rho / 8.0 if resolution is None else resolution
    vertices = cull_vertices(particles, model, beta)
    edges = connect_radius(vertices, rho) if vertices.shape[0] else []
    rmap = Roadmap(
        vertices=vertices,
        edges=edges,
        beta=beta,
        rho=rho,
        edge_resolution=resolution,
    )
    if not lazy:
        evaluate_all_edges(rmap, model)
    return rmap


def evaluate_all_edges(rmap: Roadmap, model) -> int:
    """Resolve every unevaluated edge now; returns how many were evaluated."""
    count = 0
    for e in rmap.edges:
        if e.status != UNEVALUATED:
            continue
        ok, _ = check_edge(
            model, rmap.vertices[e.i], rmap.vertices[e.j], rmap.beta, rmap.edge_resolution
        )
        e.status = FEASIBLE if ok else INFEASIBLE
        count += 1
    return count
