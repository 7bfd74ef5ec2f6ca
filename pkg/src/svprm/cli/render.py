"""SVG scene and summary-curve rendering.

Scenes are written by hand (no plotting dependency) so styles stay stable:
gray obstacles, black vertices, thin blue feasible edges, dashed red
infeasible edges, light gray unevaluated edges, a thick blue solution path,
and green/red start/goal markers.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..geometry import forward_joints
from ..roadmap import FEASIBLE, INFEASIBLE, Roadmap

__all__ = ["render_scene", "render_curves", "render_scene_2d", "render_arm_scene"]

STYLE = {
    "obstacle": 'fill="#9ca3af" stroke="none"',
    "vertex": 'fill="#111111" stroke="none"',
    "edge_feasible": 'stroke="#2b6cb0" stroke-width="1.2" fill="none"',
    "edge_infeasible": 'stroke="#e53e3e" stroke-width="1.0" stroke-dasharray="4,3" fill="none"',
    "edge_unevaluated": 'stroke="#d1d5db" stroke-width="0.8" fill="none"',
    "path": 'stroke="#1a56db" stroke-width="3.5" fill="none" stroke-linecap="round"',
    "start": 'fill="#15803d" stroke="white" stroke-width="1"',
    "goal": 'fill="#b91c1c" stroke="white" stroke-width="1"',
    "arm_start": 'stroke="#15803d" stroke-width="5" fill="none" stroke-linecap="round"',
    "arm_goal": 'stroke="#b91c1c" stroke-width="5" fill="none" stroke-linecap="round"',
    "arm_path": 'stroke="#60a5fa" stroke-width="2" fill="none" stroke-linecap="round"',
}


class _Svg:
    def __init__(self, extent, width: float = 640.0, pad: float = 12.0):
        xmin, ymin, xmax, ymax = (float(v) for v in extent)
        self.xmin, self.ymin = xmin, ymin
        self.scale = (width - 2 * pad) / (xmax - xmin)
        self.pad = pad
        self.width = width
        self.height = (ymax - ymin) * self.scale + 2 * pad
        self.ymax = ymax
        self.parts: list[str] = []

    def x(self, wx: float) -> float:
        return self.pad + (wx - self.xmin) * self.scale

    def y(self, wy: float) -> float:
        return self.pad + (self.ymax - wy) * self.scale

    def rect(self, mn, mx, style: str) -> None:
        x, y = self.x(mn[0]), self.y(mx[1])
        w = (mx[0] - mn[0]) * self.scale
        h = (mx[1] - mn[1]) * self.scale
        self.parts.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" {style}/>'
        )

    def circle(self, c, r_world: float, style: str, r_px: float | None = None) -> None:
        r = r_world * self.scale if r_px is None else r_px
        self.parts.append(
            f'<circle cx="{self.x(c[0]):.2f}" cy="{self.y(c[1]):.2f}" r="{r:.2f}" {style}/>'
        )

    def line(self, a, b, style: str) -> None:
        self.parts.append(
            f'<line x1="{self.x(a[0]):.2f}" y1="{self.y(a[1]):.2f}" '
            f'x2="{self.x(b[0]):.2f}" y2="{self.y(b[1]):.2f}" {style}/>'
        )

    def polyline(self, pts, style: str) -> None:
        coords = " ".join(f"{self.x(p[0]):.2f},{self.y(p[1]):.2f}" for p in pts)
        self.parts.append(f'<polyline points="{coords}" {style}/>')

    def tostring(self, config: dict | None = None) -> str:
        desc = ""
        if config is not None:
            blob = json.dumps(config, sort_keys=True).replace("&", "&amp;").replace("<", "&lt;")
            desc = f"<desc>config: {blob}</desc>"
        body = "\n".join(self.parts)
        return (
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width:.0f}" '
            f'height="{self.height:.0f}" viewBox="0 0 {self.width:.2f} {self.height:.2f}">'
            f"{desc}\n"
            f'<rect x="0" y="0" width="{self.width:.2f}" height="{self.height:.2f}" fill="white"/>\n'
            f"{body}\n</svg>\n"
        )


def _draw_obstacles(svg: _Svg, obstacles) -> None:
    for mn, mx in zip(obstacles.box_min, obstacles.box_max):
        svg.rect(mn, mx, STYLE["obstacle"])
    for c, r in zip(obstacles.circle_centers, obstacles.circle_radii):
        svg.circle(c, r, STYLE["obstacle"])


def _draw_grid(svg: _Svg, grid: np.ndarray, extent) -> None:
    h, w = grid.shape
    xmin, ymin, xmax, ymax = (float(v) for v in extent)
    dx, dy = (xmax - xmin) / w, (ymax - ymin) / h
    for r, c in zip(*np.nonzero(grid)):
        mn = (xmin + c * dx, ymax - (r + 1) * dy)
        mx = (xmin + (c + 1) * dx, ymax - r * dy)
        svg.rect(mn, mx, STYLE["obstacle"])


def _draw_roadmap(svg: _Svg, rmap: Roadmap) -> None:
    styles = {
        FEASIBLE: STYLE["edge_feasible"],
        INFEASIBLE: STYLE["edge_infeasible"],
    }
    for e in rmap.edges:
        style = styles.get(e.status, STYLE["edge_unevaluated"])
        svg.line(rmap.vertices[e.i], rmap.vertices[e.j], style)
    for v in rmap.vertices:
        svg.circle(v, 0.0, STYLE["vertex"], r_px=2.2)


def render_scene_2d(
    path,
    extent,
    obstacles=None,
    grid=None,
    roadmap: Roadmap | None = None,
    result=None,
    start=None,
    goal=None,
    config: dict | None = None,
) -> None:
    svg = _Svg(extent)
    if obstacles is not None and obstacles.n_primitives:
        _draw_obstacles(svg, obstacles)
    elif grid is not None:
        _draw_grid(svg, grid, extent)
    if roadmap is not None:
        _draw_roadmap(svg, roadmap)
    if result is not None and result.path is not None:
        svg.polyline(result.path, STYLE["path"])
    if start is not None:
        svg.circle(start, 0.0, STYLE["start"], r_px=6.0)
    if goal is not None:
        svg.circle(goal, 0.0, STYLE["goal"], r_px=6.0)
    Path(path).write_text(svg.tostring(config))


def render_arm_scene(
    path,
    extent,
    chain,
    obstacles,
    start=None,
    goal=None,
    result=None,
    config: dict | None = None,
) -> None:
    """Workspace view of the reaching task: cabinet, arm poses, path sweep."""
    svg = _Svg(extent)
    if obstacles is not None and obstacles.n_primitives:
        _draw_obstacles(svg, obstacles)
    if result is not None and result.path is not None:
        for q in result.path:
            svg.polyline(forward_joints(chain, q), STYLE["arm_path"])
    if start is not None:
        svg.polyline(forward_joints(chain, start), STYLE["arm_start"])
    if goal is not None:
        svg.polyline(forward_joints(chain, goal), STYLE["arm_goal"])
    svg.circle(chain.base, 0.0, STYLE["vertex"], r_px=5.0)
    Path(path).write_text(svg.tostring(config))


def render_scene(path, bundle, roadmap=None, result=None, config=None) -> None:
    """Scene dispatch: workspace view for arm tasks, map view otherwise."""
    if bundle.kind == "cubby_arm":
        render_arm_scene(
            path,
            bundle.extent,
            bundle.chain,
            bundle.obstacles,
            start=bundle.start,
            goal=bundle.goal,
            result=result,
            config=config,
        )
    else:
        extent = bundle.extent
        if extent is None:
            extent = np.concatenate([bundle.space.lower, bundle.space.upper])
        render_scene_2d(
            path,
            extent,
            obstacles=bundle.obstacles,
            grid=bundle.grid,
            roadmap=roadmap,
            result=result,
            start=bundle.start,
            goal=bundle.goal,
            config=config,
        )


def render_curves(path, aggregates: list[dict], value: str, config: dict | None = None) -> None:
    """Per-sampler curves of a summary value against vertex count."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    samplers: list[str] = []
    for agg in aggregates:
        if agg["sampler"] not in samplers:
            samplers.append(agg["sampler"])
    for sampler in samplers:
        pts = [(a["n"], a[value]) for a in aggregates if a["sampler"] == sampler]
        pts = [(n, v) for n, v in pts if v is not None]
        if not pts:
            continue
        ns, vals = zip(*sorted(pts))
        ax.plot(ns, vals, marker="o", label=sampler)
    ax.set_xlabel("vertices")
    ax.set_ylabel(value.replace("_", " "))
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    metadata = {"Date": None}
    if config is not None:
        metadata["Description"] = json.dumps(config, sort_keys=True)
    fig.savefig(path, format="svg", metadata=metadata)
    plt.close(fig)
