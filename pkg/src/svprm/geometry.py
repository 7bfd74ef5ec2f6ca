"""Configuration-space boxes, samplers, a planar kinematic chain, and workspace obstacles."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "GeometryError",
    "ConfigSpace",
    "KinematicChain",
    "ObstacleSet",
    "sample_uniform",
    "sample_halton",
    "forward_joints",
    "forward_joints_batch",
    "forward_spheres",
    "forward_spheres_batch",
    "sphere_jacobians",
    "sphere_jacobians_batch",
    "signed_distance",
    "signed_distance_many",
    "signed_distance_grad",
    "signed_distance_grad_many",
]


class GeometryError(ValueError):
    """Raised for invalid geometric constructions or queries."""


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class ConfigSpace:
    """Axis-aligned box of valid configurations.

    Bounds are in meters for point navigation and radians for joint spaces.
    """

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.ndim != 1 or lower.shape != upper.shape:
            raise GeometryError("bounds must be 1-d vectors of equal length")
        if lower.size < 1:
            raise GeometryError("configuration space requires dim >= 1")
        if not np.all(lower < upper):
            raise GeometryError("each axis requires lower < upper")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def extent(self) -> np.ndarray:
        return self.upper - self.lower

    def contains(self, x, atol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - atol) and np.all(x <= self.upper + atol))

    def clamp(self, points: np.ndarray) -> np.ndarray:
        return np.clip(points, self.lower, self.upper)

    @classmethod
    def unit(cls, dim: int) -> "ConfigSpace":
        return cls(np.zeros(dim), np.ones(dim))

    @classmethod
    def joint_space(cls, n_joints: int) -> "ConfigSpace":
        return cls(-np.pi * np.ones(n_joints), np.pi * np.ones(n_joints))


def sample_uniform(space: ConfigSpace, n: int, seed) -> np.ndarray:
    """Draw n independent uniform points inside the box; deterministic for a fixed seed."""
    if n < 0:
        raise GeometryError("sample count must be non-negative")
    rng = _rng(seed)
    return rng.uniform(space.lower, space.upper, size=(n, space.dim))


def _first_primes(count: int) -> list[int]:
    primes: list[int] = []
    candidate = 2
    while len(primes) < count:
        if all(candidate % p for p in primes if p * p <= candidate):
            primes.append(candidate)
        candidate += 1
    return primes


def _radical_inverse(index: int, base: int) -> float:
    inv = 0.0
    denom = 1.0
    while index > 0:
        index, digit = divmod(index, base)
        denom /= base
        inv += digit * denom
    return inv


def sample_halton(space: ConfigSpace, n: int, skip: int = 0) -> np.ndarray:
    """Points skip+1 .. skip+n of the unscrambled Halton sequence, scaled into the box.

    Dimension i uses the i-th prime as its radical-inverse base.
    """
    if n < 0:
        raise GeometryError("sample count must be non-negative")
    if skip < 0:
        raise GeometryError("skip must be non-negative")
    bases = _first_primes(space.dim)
    unit = np.empty((n, space.dim), dtype=float)
    for row in range(n):
        index = skip + 1 + row
        for axis, base in enumerate(bases):
            unit[row, axis] = _radical_inverse(index, base)
    return space.lower + unit * space.extent


# ---------------------------------------------------------------------------
# Planar kinematic chain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KinematicChain:
    """Planar serial chain with collision spheres spread evenly along each link."""

    link_lengths: np.ndarray
    base: np.ndarray = (0.0, 0.0)
    spheres_per_link: int = 1
    sphere_radius: float = 0.05

    def __post_init__(self):
        lengths = np.atleast_1d(np.asarray(self.link_lengths, dtype=float))
        base = np.asarray(self.base, dtype=float).reshape(2)
        if lengths.size < 1 or np.any(lengths <= 0):
            raise GeometryError("link lengths must be positive")
        if self.spheres_per_link < 1:
            raise GeometryError("spheres_per_link must be >= 1")
        if self.sphere_radius <= 0:
            raise GeometryError("sphere_radius must be positive")
        object.__setattr__(self, "link_lengths", lengths)
        object.__setattr__(self, "base", base)

    @property
    def n_joints(self) -> int:
        return self.link_lengths.size

    @property
    def n_spheres(self) -> int:
        return self.n_joints * self.spheres_per_link

    @property
    def reach(self) -> float:
        return float(self.link_lengths.sum())

    def sphere_fractions(self) -> np.ndarray:
        """Arc-length fractions of sphere centers along one link (midpoint spacing)."""
        s = self.spheres_per_link
        return (np.arange(s) + 0.5) / s


def _check_joint_vector(chain: KinematicChain, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.n_joints,):
        raise GeometryError(
            f"expected {chain.n_joints} joint angles, got shape {q.shape}"
        )
    return q


def forward_joints_batch(chain: KinematicChain, Q: np.ndarray) -> np.ndarray:
    """Joint positions (base included) for a batch of configurations: (N, k+1, 2)."""
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    if Q.shape[1] != chain.n_joints:
        raise GeometryError(
            f"expected {chain.n_joints} joint angles, got shape {Q.shape}"
        )
    angles = np.cumsum(Q, axis=1)
    steps = chain.link_lengths[None, :, None] * np.stack(
        [np.cos(angles), np.sin(angles)], axis=2
    )
    joints = np.empty((Q.shape[0], chain.n_joints + 1, 2), dtype=float)
    joints[:, 0] = chain.base
    joints[:, 1:] = chain.base + np.cumsum(steps, axis=1)
    return joints


def forward_joints(chain: KinematicChain, q) -> np.ndarray:
    """Positions of the base and every joint/tip for one configuration: (k+1, 2)."""
    q = _check_joint_vector(chain, q)
    return forward_joints_batch(chain, q[None, :])[0]


def forward_spheres_batch(chain: KinematicChain, Q: np.ndarray) -> np.ndarray:
    """Body-sphere centers for a batch of configurations: (N, K, 2)."""
    joints = forward_joints_batch(chain, Q)
    starts = joints[:, :-1, :]
    deltas = joints[:, 1:, :] - starts
    fr = chain.sphere_fractions()
    centers = starts[:, :, None, :] + fr[None, None, :, None] * deltas[:, :, None, :]
    return centers.reshape(joints.shape[0], chain.n_spheres, 2)


def forward_spheres(chain: KinematicChain, q) -> tuple[np.ndarray, np.ndarray]:
    """Body-sphere centers and radii for one configuration: ((K, 2), (K,))."""
    q = _check_joint_vector(chain, q)
    centers = forward_spheres_batch(chain, q[None, :])[0]
    radii = np.full(chain.n_spheres, chain.sphere_radius)
    return centers, radii


def sphere_jacobians_batch(chain: KinematicChain, Q: np.ndarray) -> np.ndarray:
    """d(center)/d(q) for every sphere in a batch: (N, K, 2, k).

    A revolute joint m moves a point p distal to it along rot90(p - joint_m).
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    joints = forward_joints_batch(chain, Q)
    centers = forward_spheres_batch(chain, Q)
    k = chain.n_joints
    rel = centers[:, :, None, :] - joints[:, None, :k, :]  # (N, K, k, 2)
    rot = np.stack([-rel[..., 1], rel[..., 0]], axis=-1)  # (N, K, k, 2)
    link_of_sphere = np.repeat(np.arange(k), chain.spheres_per_link)  # (K,)
    active = np.arange(k)[None, :] <= link_of_sphere[:, None]  # (K, k)
    rot *= active[None, :, :, None]
    return rot.transpose(0, 1, 3, 2)


def sphere_jacobians(chain: KinematicChain, q) -> np.ndarray:
    """d(center)/d(q) for every sphere of one configuration: (K, 2, k)."""
    q = _check_joint_vector(chain, q)
    return sphere_jacobians_batch(chain, q[None, :])[0]


# ---------------------------------------------------------------------------
# Workspace obstacles and signed distances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ObstacleSet:
    """Circles and axis-aligned boxes; both admit exact signed distances."""

    circle_centers: np.ndarray
    circle_radii: np.ndarray
    box_min: np.ndarray
    box_max: np.ndarray

    def __post_init__(self):
        cc = np.asarray(self.circle_centers, dtype=float).reshape(-1, 2)
        cr = np.asarray(self.circle_radii, dtype=float).reshape(-1)
        bn = np.asarray(self.box_min, dtype=float).reshape(-1, 2)
        bx = np.asarray(self.box_max, dtype=float).reshape(-1, 2)
        if cc.shape[0] != cr.shape[0]:
            raise GeometryError("circle centers and radii must pair up")
        if np.any(cr <= 0):
            raise GeometryError("circle radii must be positive")
        if bn.shape != bx.shape:
            raise GeometryError("box corners must pair up")
        if bn.size and not np.all(bn < bx):
            raise GeometryError("box min corner must be strictly below max corner")
        object.__setattr__(self, "circle_centers", cc)
        object.__setattr__(self, "circle_radii", cr)
        object.__setattr__(self, "box_min", bn)
        object.__setattr__(self, "box_max", bx)

    @property
    def n_primitives(self) -> int:
        return self.circle_radii.size + self.box_min.shape[0]

    @classmethod
    def from_shapes(cls, circles=(), boxes=()) -> "ObstacleSet":
        """Build from iterables of (center, radius) and (min_corner, max_corner)."""
        circles = list(circles)
        boxes = list(boxes)
        cc = [c for c, _ in circles]
        cr = [r for _, r in circles]
        bn = [mn for mn, _ in boxes]
        bx = [mx for _, mx in boxes]
        return cls(
            np.asarray(cc, dtype=float).reshape(-1, 2),
            np.asarray(cr, dtype=float).reshape(-1),
            np.asarray(bn, dtype=float).reshape(-1, 2),
            np.asarray(bx, dtype=float).reshape(-1, 2),
        )

    def to_json(self) -> dict:
        return {
            "circles": [
                {"c": [float(c[0]), float(c[1])], "r": float(r)}
                for c, r in zip(self.circle_centers, self.circle_radii)
            ],
            "boxes": [
                {"min": [float(a[0]), float(a[1])], "max": [float(b[0]), float(b[1])]}
                for a, b in zip(self.box_min, self.box_max)
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "ObstacleSet":
        circles = [(item["c"], item["r"]) for item in data.get("circles", [])]
        boxes = [(item["min"], item["max"]) for item in data.get("boxes", [])]
        return cls.from_shapes(circles, boxes)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "ObstacleSet":
        return cls.from_json(json.loads(Path(path).read_text()))


def _box_distance_grad(obs: ObstacleSet, pts: np.ndarray, want_grad: bool):
    center = 0.5 * (obs.box_min + obs.box_max)
    half = 0.5 * (obs.box_max - obs.box_min)
    t = pts[:, None, :] - center[None, :, :]  # (n, B, 2)
    q = np.abs(t) - half[None, :, :]
    qp = np.maximum(q, 0.0)
    outside = np.sqrt(np.sum(qp * qp, axis=-1))
    inside = np.minimum(np.maximum(q[..., 0], q[..., 1]), 0.0)
    dist = outside + inside
    if not want_grad:
        return dist, None
    sgn = np.where(t >= 0.0, 1.0, -1.0)
    safe = np.where(outside > 0.0, outside, 1.0)
    grad_out = qp * sgn / safe[..., None]
    # interior: move along the axis of least penetration
    axis = np.argmax(q, axis=-1)
    grad_in = np.zeros_like(grad_out)
    rows, cols = np.indices(axis.shape)
    grad_in[rows, cols, axis] = sgn[rows, cols, axis]
    grad = np.where((outside > 0.0)[..., None], grad_out, grad_in)
    return dist, grad


def _circle_distance_grad(obs: ObstacleSet, pts: np.ndarray, want_grad: bool):
    diff = pts[:, None, :] - obs.circle_centers[None, :, :]  # (n, C, 2)
    norms = np.sqrt(np.sum(diff * diff, axis=-1))
    dist = norms - obs.circle_radii[None, :]
    if not want_grad:
        return dist, None
    safe = np.where(norms > 0.0, norms, 1.0)
    grad = diff / safe[..., None]
    grad[norms == 0.0] = np.array([1.0, 0.0])
    return dist, grad


def _signed_distance_impl(obs: ObstacleSet, points, want_grad: bool):
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if obs.n_primitives == 0:
        raise GeometryError("signed distance of an empty obstacle set is undefined")
    dists = []
    grads = []
    if obs.circle_radii.size:
        d, g = _circle_distance_grad(obs, pts, want_grad)
        dists.append(d)
        grads.append(g)
    if obs.box_min.shape[0]:
        d, g = _box_distance_grad(obs, pts, want_grad)
        dists.append(d)
        grads.append(g)
    all_d = np.concatenate(dists, axis=1)
    best = np.argmin(all_d, axis=1)
    rows = np.arange(pts.shape[0])
    d_min = all_d[rows, best]
    if not want_grad:
        return d_min, None
    all_g = np.concatenate(grads, axis=1)
    return d_min, all_g[rows, best]


def signed_distance_many(obs: ObstacleSet, points) -> np.ndarray:
    """Minimum signed distance to any primitive surface for a batch of points."""
    return _signed_distance_impl(obs, points, want_grad=False)[0]


def signed_distance(obs: ObstacleSet, p) -> float:
    """Signed distance to the nearest obstacle surface; negative inside."""
    return float(signed_distance_many(obs, np.asarray(p, dtype=float)[None, :])[0])


def signed_distance_grad_many(obs: ObstacleSet, points) -> tuple[np.ndarray, np.ndarray]:
    """Signed distances and their spatial gradients for a batch of points."""
    d, g = _signed_distance_impl(obs, points, want_grad=True)
    return d, g


def signed_distance_grad(obs: ObstacleSet, p) -> tuple[float, np.ndarray]:
    d, g = signed_distance_grad_many(obs, np.asarray(p, dtype=float)[None, :])
    return float(d[0]), g[0]
