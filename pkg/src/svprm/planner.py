"""Shortest-path planning over roadmaps with deferred edge evaluation.

plan_lazy repeatedly searches the graph treating unevaluated edges as
feasible, then walks the candidate path from the start evaluating edges in
order; the first infeasible edge triggers a replan. plan_eager evaluates every
edge up front and searches once, which makes it the testing oracle.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .roadmap import FEASIBLE, INFEASIBLE, UNEVALUATED, Edge, Roadmap, check_edge

__all__ = [
    "PlanError",
    "QueryRejected",
    "SOLVED",
    "INFEASIBLE_QUERY",
    "BUDGET_EXHAUSTED",
    "PlanQuery",
    "PlanResult",
    "plan_lazy",
    "plan_eager",
]

SOLVED = "solved"
INFEASIBLE_QUERY = "infeasible"
BUDGET_EXHAUSTED = "budget_exhausted"


class PlanError(ValueError):
    """Raised for invalid planning arguments."""


class QueryRejected(PlanError):
    """Raised when the start or goal violates the chance constraint."""


@dataclass
class PlanQuery:
    start: np.ndarray
    goal: np.ndarray
    beta: float | None = None  # defaults to the roadmap's beta
    max_edge_evals: int | None = None

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=float).reshape(-1)
        self.goal = np.asarray(self.goal, dtype=float).reshape(-1)
        if self.start.shape != self.goal.shape:
            raise PlanError("start and goal must share a dimension")


@dataclass
class PlanResult:
    status: str
    path: np.ndarray | None
    cost: float | None
    edges_evaluated: int

    @property
    def solved(self) -> bool:
        return self.status == SOLVED

    def to_json(self, config: dict | None = None) -> dict:
        data = {
            "status": self.status,
            "cost": self.cost,
            "edges_evaluated": self.edges_evaluated,
            "path": None if self.path is None else self.path.tolist(),
        }
        if config is not None:
            data["config"] = config
        return data

    def save(self, path, config: dict | None = None) -> None:
        Path(path).write_text(json.dumps(self.to_json(config)) + "\n")


class _Episode:
    """Roadmap plus virtual start/goal nodes and per-episode edge bookkeeping.

    Roadmap edges are shared by reference, so statuses resolved here persist
    for later queries; start/goal connector edges stay local.
    """

    def __init__(self, rmap: Roadmap, model, query: PlanQuery):
        self.rmap = rmap
        self.model = model
        self.beta = rmap.beta if query.beta is None else query.beta
        if not (0.0 <= self.beta <= 1.0):
            raise PlanError("beta must lie in [0, 1]")
        for name, point in (("start", query.start), ("goal", query.goal)):
            if model.likelihood(point) < self.beta:
                raise QueryRejected(
                    f"{name} configuration violates the chance constraint at beta={self.beta}"
                )
        n = rmap.n_vertices
        self.nodes = (
            np.vstack([rmap.vertices, query.start, query.goal])
            if n
            else np.vstack([query.start, query.goal])
        )
        self.src = n
        self.dst = n + 1
        self.edges: list[Edge] = list(rmap.edges)
        if n:
            tree = cKDTree(rmap.vertices)
            for node, label in ((self.src, query.start), (self.dst, query.goal)):
                idxs = sorted(tree.query_ball_point(label, rmap.rho))
                for v in idxs:
                    length = float(np.linalg.norm(rmap.vertices[v] - label))
                    if length < rmap.rho:
                        self.edges.append(Edge(node, int(v), length))
        direct = float(np.linalg.norm(query.goal - query.start))
        if direct < rmap.rho:
            self.edges.append(Edge(self.src, self.dst, direct))
        self.adj: list[list[tuple[int, int]]] = [[] for _ in range(self.nodes.shape[0])]
        for idx, e in enumerate(self.edges):
            self.adj[e.i].append((e.j, idx))
            self.adj[e.j].append((e.i, idx))
        self.evaluated = 0

    def evaluate(self, edge: Edge) -> bool:
        ok, _ = check_edge(
            self.model,
            self.nodes[edge.i],
            self.nodes[edge.j],
            self.beta,
            self.rmap.edge_resolution,
        )
        edge.status = FEASIBLE if ok else INFEASIBLE
        self.evaluated += 1
        return ok

    def shortest_path(self, require_feasible: bool, heuristic: bool = False):
        """Deterministic Dijkstra / A* over currently usable edges.

        Ties break on (cost, node index) at the heap and by the smaller parent
        index when relaxations produce equal costs.
        """
        goal = self.nodes[self.dst]
        n = self.nodes.shape[0]
        dist = np.full(n, np.inf)
        parent_node = np.full(n, -1, dtype=int)
        parent_edge = np.full(n, -1, dtype=int)
        done = np.zeros(n, dtype=bool)
        dist[self.src] = 0.0

        def h(v: int) -> float:
            return float(np.linalg.norm(self.nodes[v] - goal)) if heuristic else 0.0

        heap: list[tuple[float, int]] = [(h(self.src), self.src)]
        while heap:
            f, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            if u == self.dst:
                break
            du = dist[u]
            for v, eidx in self.adj[u]:
                e = self.edges[eidx]
                if e.status == INFEASIBLE:
                    continue
                if require_feasible and e.status != FEASIBLE:
                    continue
                nd = du + e.length
                if nd < dist[v]:
                    dist[v] = nd
                    parent_node[v] = u
                    parent_edge[v] = eidx
                    heapq.heappush(heap, (nd + h(v), v))
                elif nd == dist[v] and not done[v] and u < parent_node[v]:
                    parent_node[v] = u
                    parent_edge[v] = eidx
        if not np.isfinite(dist[self.dst]):
            return None
        node_path = [self.dst]
        edge_path: list[int] = []
        while node_path[-1] != self.src:
            v = node_path[-1]
            edge_path.append(int(parent_edge[v]))
            node_path.append(int(parent_node[v]))
        node_path.reverse()
        edge_path.reverse()
        return float(dist[self.dst]), node_path, edge_path


def plan_lazy(rmap: Roadmap, model, query: PlanQuery, heuristic: bool = False) -> PlanResult:
    """Lazy shortest path: evaluate edges only along candidate optimal paths."""
    ep = _Episode(rmap, model, query)
    budget = query.max_edge_evals
    while True:
        found = ep.shortest_path(require_feasible=False, heuristic=heuristic)
        if found is None:
            return PlanResult(INFEASIBLE_QUERY, None, None, ep.evaluated)
        cost, node_path, edge_path = found
        replanned = False
        for eidx in edge_path:
            edge = ep.edges[eidx]
            if edge.status != UNEVALUATED:
                continue
            if budget is not None and ep.evaluated >= budget:
                return PlanResult(BUDGET_EXHAUSTED, None, None, ep.evaluated)
            if not ep.evaluate(edge):
                replanned = True
                break
        if not replanned:
            return PlanResult(SOLVED, ep.nodes[node_path], cost, ep.evaluated)


def plan_eager(rmap: Roadmap, model, query: PlanQuery, heuristic: bool = False) -> PlanResult:
    """Evaluate every edge, then search once; the oracle for plan_lazy."""
    ep = _Episode(rmap, model, query)
    for edge in ep.edges:
        if edge.status == UNEVALUATED:
            ep.evaluate(edge)
    found = ep.shortest_path(require_feasible=True, heuristic=heuristic)
    if found is None:
        return PlanResult(INFEASIBLE_QUERY, None, None, ep.evaluated)
    cost, node_path, _ = found
    return PlanResult(SOLVED, ep.nodes[node_path], cost, ep.evaluated)
