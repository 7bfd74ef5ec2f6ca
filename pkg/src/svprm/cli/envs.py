"""Benchmark environment synthesis.

Three families: a checkerboard of blocks with narrow corner passages fitted to
a sigmoid-of-RBF field, a walled "rooms" world emitting labeled occupancy
points for map fitting, and a planar k-link reaching task threading a
two-compartment cubby.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..geometry import (
    ConfigSpace,
    KinematicChain,
    ObstacleSet,
    forward_joints_batch,
    sample_halton,
    signed_distance_many,
)
from ..metrics import MixtureSpec
from ..models import RbfOccupancyField, TsdfArmModel, fit_rbf_field

__all__ = [
    "EnvGenError",
    "CheckerboardEnv",
    "CubbyTask",
    "RoomsWorld",
    "gen_checkerboard",
    "gen_rooms_points",
    "gen_cubby_arm_task",
    "gaussian_mixture_sampler",
    "rasterize_obstacles",
    "rooms_world",
]


class EnvGenError(ValueError):
    """Raised when an environment cannot be generated as requested."""


def rasterize_obstacles(obstacles: ObstacleSet, extent, shape) -> np.ndarray:
    """Binary (H, W) grid over extent; a cell is occupied when its center is inside."""
    h, w = shape
    xmin, ymin, xmax, ymax = (float(v) for v in extent)
    xs = xmin + (np.arange(w) + 0.5) * (xmax - xmin) / w
    ys = ymax - (np.arange(h) + 0.5) * (ymax - ymin) / h
    gx, gy = np.meshgrid(xs, ys)
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    occupied = signed_distance_many(obstacles, pts) < 0.0
    return occupied.reshape(h, w)


# ---------------------------------------------------------------------------
# Checkerboard navigation environment
# ---------------------------------------------------------------------------


@dataclass
class CheckerboardEnv:
    grid: np.ndarray
    extent: np.ndarray
    obstacles: ObstacleSet
    field: RbfOccupancyField
    space: ConfigSpace
    cell: float
    start: np.ndarray
    goal: np.ndarray


def gen_checkerboard(
    rows: int,
    cols: int,
    gap_fraction: float,
    seed: int = 0,
    grid_resolution: int = 72,
    feature_grid: int = 32,
    reg: float = 1e-3,
    lengthscale_factor: float = 1.5,
) -> CheckerboardEnv:
    """Alternating blocks separated by gaps of width gap_fraction * cell.

    Blocks sit on odd-parity cells and shrink by half a gap on each side, so
    diagonally adjacent free cells connect only through narrow corner
    passages. The generated binary grid is fitted to a sigmoid-of-RBF field.
    Generation is fully deterministic; seed is accepted for config uniformity.
    """
    del seed
    if rows < 2 or cols < 2:
        raise EnvGenError("checkerboard needs rows, cols >= 2")
    if not (0.0 < gap_fraction < 0.5):
        raise EnvGenError("gap_fraction must lie in (0, 0.5)")
    cell = 1.0 / max(rows, cols)
    width, height = cols * cell, rows * cell
    half_gap = 0.5 * gap_fraction * cell
    boxes = []
    for r in range(rows):
        for c in range(cols):
            if (r + c) % 2 == 1:
                boxes.append(
                    (
                        (c * cell + half_gap, r * cell + half_gap),
                        ((c + 1) * cell - half_gap, (r + 1) * cell - half_gap),
                    )
                )
    obstacles = ObstacleSet.from_shapes(boxes=boxes)
    extent = np.array([0.0, 0.0, width, height])
    shape = (
        max(2, int(round(grid_resolution * height / max(width, height)))),
        max(2, int(round(grid_resolution * width / max(width, height)))),
    )
    grid = rasterize_obstacles(obstacles, extent, shape)
    feat_shape = (
        max(2, int(round(feature_grid * height / max(width, height)))),
        max(2, int(round(feature_grid * width / max(width, height)))),
    )
    field = fit_rbf_field(
        grid,
        extent,
        feature_shape=feat_shape,
        reg=reg,
        lengthscale_factor=lengthscale_factor,
    )
    start = np.array([0.5 * cell, 0.5 * cell])
    goal_col = cols - 1 if (rows + cols) % 2 == 0 else cols - 2
    goal = np.array([(goal_col + 0.5) * cell, (rows - 0.5) * cell])
    return CheckerboardEnv(
        grid=grid,
        extent=extent,
        obstacles=obstacles,
        field=field,
        space=ConfigSpace([0.0, 0.0], [width, height]),
        cell=cell,
        start=start,
        goal=goal,
    )


# ---------------------------------------------------------------------------
# Rooms world for labeled occupancy points
# ---------------------------------------------------------------------------


@dataclass
class RoomsWorld:
    obstacles: ObstacleSet
    extent: np.ndarray


def rooms_world() -> RoomsWorld:
    """Unit-square world: boundary walls, a central block, and a stub wall.

    Free space is the loop corridor around the block; the stub on the left
    leaves one narrow doorway, so left-side routes must thread it.
    """
    t = 0.04
    boxes = [
        ((0.0, 0.0), (1.0, t)),
        ((0.0, 1.0 - t), (1.0, 1.0)),
        ((0.0, 0.0), (t, 1.0)),
        ((1.0 - t, 0.0), (1.0, 1.0)),
        ((0.35, 0.35), (0.65, 0.65)),
        ((t, 0.48), (0.28, 0.52)),
    ]
    return RoomsWorld(
        obstacles=ObstacleSet.from_shapes(boxes=boxes),
        extent=np.array([0.0, 0.0, 1.0, 1.0]),
    )


def gen_rooms_points(
    n_points: int = 4000, seed: int = 0, world: RoomsWorld | None = None
) -> tuple[np.ndarray, np.ndarray, RoomsWorld]:
    """Uniformly scattered points labeled free (1) or occupied (0) by the true world."""
    if n_points < 1:
        raise EnvGenError("n_points must be >= 1")
    world = world or rooms_world()
    rng = np.random.default_rng(seed)
    xmin, ymin, xmax, ymax = world.extent
    pts = rng.uniform((xmin, ymin), (xmax, ymax), size=(n_points, 2))
    labels = (signed_distance_many(world.obstacles, pts) > 0.0).astype(int)
    return pts, labels, world


# ---------------------------------------------------------------------------
# Planar cubby reaching task
# ---------------------------------------------------------------------------


@dataclass
class CubbyTask:
    model: TsdfArmModel
    chain: KinematicChain
    obstacles: ObstacleSet
    space: ConfigSpace
    start: np.ndarray
    goal: np.ndarray
    home: np.ndarray
    extent: np.ndarray


def _cubby_obstacles(
    compartments: int,
    face: float,
    depth: float,
    compartment_height: float,
    wall_thickness: float,
) -> ObstacleSet:
    t = wall_thickness
    total = compartments * compartment_height + (compartments + 1) * t
    y0 = -0.5 * total
    boxes = []
    for i in range(compartments + 1):
        y = y0 + i * (compartment_height + t)
        boxes.append(((face, y), (face + depth + t, y + t)))
    boxes.append(((face + depth, y0), (face + depth + t, y0 + total)))
    return ObstacleSet.from_shapes(boxes=boxes)


def gen_cubby_arm_task(
    compartments: int = 2,
    link_lengths=(1.2, 1.0, 0.8),
    spheres_per_link: int = 4,
    sphere_radius: float = 0.05,
    epsilon_sdf: float = 0.25,
    alpha: float = 10.0,
    face: float = 1.6,
    depth: float = 0.8,
    compartment_height: float = 1.0,
    wall_thickness: float = 0.1,
    seed: int = 0,
    search_samples: int = 40000,
) -> CubbyTask:
    """Reaching task: start in the top compartment, goal in the bottom one.

    Start, goal, and a retracted home configuration are located by a
    deterministic low-discrepancy scan over joint space, requiring zero hinge
    cost and a tool point inside the target compartment. Generation fails if
    the task turns out trivial (the straight joint-space line is feasible).
    """
    if compartments < 2:
        raise EnvGenError("need at least two compartments")
    chain = KinematicChain(
        link_lengths=link_lengths,
        spheres_per_link=spheres_per_link,
        sphere_radius=sphere_radius,
    )
    obstacles = _cubby_obstacles(
        compartments, face, depth, compartment_height, wall_thickness
    )
    model = TsdfArmModel(
        chain=chain, obstacles=obstacles, epsilon_sdf=epsilon_sdf, alpha=alpha
    )
    space = ConfigSpace.joint_space(chain.n_joints)

    candidates = sample_halton(space, search_samples, skip=seed * search_samples)
    feasible = model.log_likelihood_many(candidates) >= -1e-12
    tips = forward_joints_batch(chain, candidates)[:, -1, :]

    t = wall_thickness
    total = compartments * compartment_height + (compartments + 1) * t
    y0 = -0.5 * total
    clearance = epsilon_sdf + sphere_radius

    def compartment_box(i: int) -> tuple[np.ndarray, np.ndarray]:
        lo_y = y0 + i * (compartment_height + t) + t + clearance
        hi_y = y0 + (i + 1) * (compartment_height + t) - clearance
        return (
            np.array([face + 0.2, lo_y + 0.05]),
            np.array([face + depth - 0.1, hi_y - 0.05]),
        )

    def first_in_box(lo: np.ndarray, hi: np.ndarray) -> np.ndarray | None:
        inside = np.all(tips >= lo, axis=1) & np.all(tips <= hi, axis=1)
        idx = np.flatnonzero(feasible & inside)
        return candidates[idx[0]] if idx.size else None

    start = first_in_box(*compartment_box(compartments - 1))
    goal = first_in_box(*compartment_box(0))
    if start is None or goal is None:
        raise EnvGenError("no collision-free reaching configuration found; adjust geometry")

    retracted = feasible & (tips[:, 0] <= 0.4 * face) & (np.abs(tips[:, 1]) <= 0.6 * face)
    idx = np.flatnonzero(retracted)
    if idx.size == 0:
        raise EnvGenError("no retracted home configuration found")
    home = candidates[idx[0]]

    ts = np.linspace(0.0, 1.0, 200)
    line = start[None, :] + ts[:, None] * (goal - start)[None, :]
    if np.all(model.log_likelihood_many(line) >= -1e-12):
        raise EnvGenError("straight joint-space interpolation is feasible; task is trivial")

    reach = chain.reach
    extent = np.array(
        [
            min(-0.2 * reach, -0.5),
            -max(reach, 0.5 * total + 0.3),
            max(face + depth + t + 0.3, reach * 1.05),
            max(reach, 0.5 * total + 0.3),
        ]
    )
    return CubbyTask(
        model=model,
        chain=chain,
        obstacles=obstacles,
        space=space,
        start=start,
        goal=goal,
        home=home,
        extent=extent,
    )


def gaussian_mixture_sampler(components, n: int, seed, space: ConfigSpace | None = None):
    """Equal-weight draws from isotropic Gaussian components, clamped to the box.

    components is an iterable of (mean, std) pairs.
    """
    components = list(components)
    if not components:
        raise EnvGenError("need at least one mixture component")
    spec = MixtureSpec(
        means=np.asarray([m for m, _ in components], dtype=float),
        stds=np.asarray([s for _, s in components], dtype=float),
    )
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return spec.sample(n, rng, space)
