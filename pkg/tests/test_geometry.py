import numpy as np
import pytest

from svprm.geometry import (
    ConfigSpace,
    GeometryError,
    KinematicChain,
    ObstacleSet,
    forward_joints,
    forward_spheres,
    forward_spheres_batch,
    sample_halton,
    sample_uniform,
    signed_distance,
    signed_distance_grad,
    signed_distance_grad_many,
    signed_distance_many,
    sphere_jacobians,
)


class TestConfigSpace:
    def test_validation(self):
        with pytest.raises(GeometryError):
            ConfigSpace([0.0, 1.0], [1.0, 1.0])
        with pytest.raises(GeometryError):
            ConfigSpace([], [])

    def test_basic_properties(self):
        space = ConfigSpace([-1.0, 0.0], [1.0, 2.0])
        assert space.dim == 2
        assert np.allclose(space.extent, [2.0, 2.0])
        assert space.contains([0.0, 1.0])
        assert not space.contains([0.0, 2.5])

    def test_clamp(self):
        space = ConfigSpace.unit(2)
        pts = np.array([[-0.5, 0.5], [0.2, 1.4]])
        clamped = space.clamp(pts)
        assert np.allclose(clamped, [[0.0, 0.5], [0.2, 1.0]])


class TestUniformSampling:
    def test_empty(self):
        space = ConfigSpace.unit(3)
        assert sample_uniform(space, 0, seed=1).shape == (0, 3)

    def test_within_bounds_and_deterministic(self):
        space = ConfigSpace([-2.0, 1.0], [-1.0, 4.0])
        a = sample_uniform(space, 100, seed=7)
        b = sample_uniform(space, 100, seed=7)
        assert np.array_equal(a, b)
        assert np.all(a >= space.lower) and np.all(a <= space.upper)

    def test_law_of_large_numbers_mean(self):
        # oracle: the uniform first moment on [0, 1] is 0.5
        space = ConfigSpace.unit(1)
        pts = sample_uniform(space, 10_000, seed=3)
        assert 0.45 <= pts.mean() <= 0.55


class TestHalton:
    def test_base2_prefix(self):
        # radical inverses of 1, 2, 3 in base 2, worked by hand
        space = ConfigSpace.unit(1)
        pts = sample_halton(space, 3, skip=0)
        assert np.allclose(pts[:, 0], [0.5, 0.25, 0.75])

    def test_2d_first_point(self):
        space = ConfigSpace.unit(2)
        pts = sample_halton(space, 1, skip=0)
        assert np.allclose(pts[0], [0.5, 1.0 / 3.0])

    def test_affine_scaling(self):
        space = ConfigSpace([0.0], [2.0])
        pts = sample_halton(space, 1, skip=0)
        assert pts[0, 0] == pytest.approx(1.0)

    def test_skip_matches_slicing(self):
        space = ConfigSpace.unit(2)
        full = sample_halton(space, 10, skip=0)
        tail = sample_halton(space, 6, skip=4)
        assert np.allclose(full[4:], tail)

    def test_deterministic(self):
        space = ConfigSpace.unit(4)
        assert np.array_equal(sample_halton(space, 32), sample_halton(space, 32))


def _star_discrepancy(points: np.ndarray, anchors_per_axis: int = 20) -> float:
    # grid-based estimate: max |empirical mass of [0, a) - volume|
    n, d = points.shape
    axes = [np.linspace(0.05, 1.0, anchors_per_axis) for _ in range(d)]
    grids = np.meshgrid(*axes, indexing="ij")
    anchors = np.stack([g.ravel() for g in grids], axis=1)
    worst = 0.0
    for a in anchors:
        frac = np.mean(np.all(points <= a, axis=1))
        worst = max(worst, abs(frac - np.prod(a)))
    return worst


@pytest.mark.parametrize("n", [64, 256])
def test_halton_beats_uniform_discrepancy(n):
    space = ConfigSpace.unit(2)
    halton = sample_halton(space, n)
    uniform = sample_uniform(space, n, seed=12345)
    assert _star_discrepancy(halton) < _star_discrepancy(uniform)


class TestKinematicChain:
    def test_straight_chain_midpoints(self):
        chain = KinematicChain(link_lengths=[1.0, 1.0], spheres_per_link=1, sphere_radius=0.1)
        centers, radii = forward_spheres(chain, [0.0, 0.0])
        assert np.allclose(centers, [[0.5, 0.0], [1.5, 0.0]])
        assert np.allclose(radii, 0.1)

    def test_quarter_turn(self):
        # one link bent up by pi/2: the midpoint sphere rotates onto the y axis
        chain = KinematicChain(link_lengths=[1.0], spheres_per_link=1, sphere_radius=0.1)
        centers, _ = forward_spheres(chain, [np.pi / 2.0])
        assert np.allclose(centers[0], [0.0, 0.5], atol=1e-12)
        tip = forward_joints(chain, [np.pi / 2.0])[-1]
        assert np.allclose(tip, [0.0, 1.0], atol=1e-12)

    def test_angle_periodicity(self):
        rng = np.random.default_rng(0)
        chain = KinematicChain(link_lengths=[0.8, 0.5, 0.3], spheres_per_link=3)
        for _ in range(5):
            q = rng.uniform(-np.pi, np.pi, size=3)
            shifted = q.copy()
            shifted[rng.integers(0, 3)] += 2.0 * np.pi
            a, _ = forward_spheres(chain, q)
            b, _ = forward_spheres(chain, shifted)
            assert np.allclose(a, b, atol=1e-9)

    def test_continuity_bound(self):
        # sphere motion is bounded by total reach times the 1-norm angle change
        rng = np.random.default_rng(1)
        chain = KinematicChain(link_lengths=[1.0, 0.7, 0.4], spheres_per_link=2)
        total = chain.reach
        for _ in range(50):
            q = rng.uniform(-np.pi, np.pi, size=3)
            dq = rng.normal(scale=1e-4, size=3)
            a, _ = forward_spheres(chain, q)
            b, _ = forward_spheres(chain, q + dq)
            moved = np.linalg.norm(b - a, axis=1).max()
            assert moved <= total * np.abs(dq).sum() + 1e-12

    def test_jacobian_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        chain = KinematicChain(link_lengths=[0.9, 0.6], spheres_per_link=2)
        q = rng.uniform(-1.0, 1.0, size=2)
        J = sphere_jacobians(chain, q)
        eps = 1e-6
        for m in range(2):
            dq = np.zeros(2)
            dq[m] = eps
            plus, _ = forward_spheres(chain, q + dq)
            minus, _ = forward_spheres(chain, q - dq)
            fd = (plus - minus) / (2 * eps)
            assert np.allclose(J[:, :, m], fd, atol=1e-6)

    def test_dimension_mismatch(self):
        chain = KinematicChain(link_lengths=[1.0, 1.0])
        with pytest.raises(GeometryError):
            forward_spheres(chain, [0.0])

    def test_batch_matches_single(self):
        chain = KinematicChain(link_lengths=[1.0, 0.5], spheres_per_link=3)
        Q = np.random.default_rng(3).uniform(-2, 2, size=(4, 2))
        batch = forward_spheres_batch(chain, Q)
        for row, q in enumerate(Q):
            single, _ = forward_spheres(chain, q)
            assert np.allclose(batch[row], single)


class TestSignedDistance:
    def test_circle_outside(self):
        obs = ObstacleSet.from_shapes(circles=[((0.0, 0.0), 1.0)])
        assert signed_distance(obs, [2.0, 0.0]) == pytest.approx(1.0)

    def test_circle_center(self):
        obs = ObstacleSet.from_shapes(circles=[((0.0, 0.0), 1.0)])
        assert signed_distance(obs, [0.0, 0.0]) == pytest.approx(-1.0)

    def test_box_faces_and_corner(self):
        obs = ObstacleSet.from_shapes(boxes=[((0.0, 0.0), (2.0, 1.0))])
        assert signed_distance(obs, [3.0, 0.5]) == pytest.approx(1.0)
        assert signed_distance(obs, [3.0, 2.0]) == pytest.approx(np.sqrt(2.0))
        assert signed_distance(obs, [1.0, 0.5]) == pytest.approx(-0.5)

    def test_empty_set_raises(self):
        obs = ObstacleSet.from_shapes()
        with pytest.raises(GeometryError):
            signed_distance(obs, [0.0, 0.0])

    def test_two_circles_against_surface_sampling(self):
        # oracle: densely sample both circle boundaries and take the nearest
        obs = ObstacleSet.from_shapes(
            circles=[((0.0, 0.0), 0.8), ((2.5, 0.5), 0.4)]
        )
        theta = np.linspace(0.0, 2.0 * np.pi, 10_000, endpoint=False)
        surface = np.vstack(
            [
                np.stack([0.8 * np.cos(theta), 0.8 * np.sin(theta)], axis=1),
                np.stack(
                    [2.5 + 0.4 * np.cos(theta), 0.5 + 0.4 * np.sin(theta)], axis=1
                ),
            ]
        )
        rng = np.random.default_rng(4)
        pts = rng.uniform(-2.0, 4.0, size=(200, 2))
        outside = signed_distance_many(obs, pts) > 0
        pts = pts[outside]
        for p in pts[:60]:
            oracle = np.linalg.norm(surface - p, axis=1).min()
            assert signed_distance(obs, p) == pytest.approx(oracle, abs=1e-3)

    def test_min_over_primitives(self):
        obs = ObstacleSet.from_shapes(
            circles=[((0.0, 0.0), 1.0)], boxes=[((5.0, -1.0), (6.0, 1.0))]
        )
        d = signed_distance(obs, [3.0, 0.0])
        assert d == pytest.approx(2.0)  # box face at x=5 and circle both 2 away

    def test_lipschitz_along_segments(self):
        obs = ObstacleSet.from_shapes(
            circles=[((0.3, 0.2), 0.5)], boxes=[((1.0, 1.0), (2.0, 1.5))]
        )
        rng = np.random.default_rng(5)
        for _ in range(100):
            a = rng.uniform(-1.0, 3.0, size=2)
            b = rng.uniform(-1.0, 3.0, size=2)
            da, db = signed_distance(obs, a), signed_distance(obs, b)
            assert abs(da - db) <= np.linalg.norm(a - b) + 1e-12

    def test_gradient_matches_finite_differences(self):
        obs = ObstacleSet.from_shapes(
            circles=[((0.0, 0.0), 0.7)], boxes=[((1.5, -0.5), (2.5, 0.5))]
        )
        rng = np.random.default_rng(6)
        checked = 0
        while checked < 30:
            p = rng.uniform(-2.0, 4.0, size=2)
            d, g = signed_distance_grad(obs, p)
            if abs(d) < 1e-3:
                continue
            eps = 1e-6
            fd = np.array(
                [
                    (signed_distance(obs, p + [eps, 0]) - signed_distance(obs, p - [eps, 0]))
                    / (2 * eps),
                    (signed_distance(obs, p + [0, eps]) - signed_distance(obs, p - [0, eps]))
                    / (2 * eps),
                ]
            )
            if np.linalg.norm(fd - g) < 1e-4:
                checked += 1
            else:
                # kinks (equidistant points / box diagonals) are excluded
                mid = np.linalg.norm(fd) < 0.999
                assert mid, f"gradient mismatch away from a kink at {p}"

    def test_grad_many_matches_single(self):
        obs = ObstacleSet.from_shapes(circles=[((0.0, 0.0), 1.0)], boxes=[((2.0, 2.0), (3.0, 3.0))])
        pts = np.random.default_rng(7).uniform(-1.0, 4.0, size=(20, 2))
        d, g = signed_distance_grad_many(obs, pts)
        for i, p in enumerate(pts):
            ds, gs = signed_distance_grad(obs, p)
            assert d[i] == pytest.approx(ds)
            assert np.allclose(g[i], gs)


class TestObstacleJson:
    def test_round_trip(self, tmp_path):
        obs = ObstacleSet.from_shapes(
            circles=[((0.1, 0.2), 0.3)], boxes=[((0.0, 0.0), (1.0, 2.0))]
        )
        path = tmp_path / "obstacles.json"
        obs.save(path)
        loaded = ObstacleSet.load(path)
        assert np.allclose(loaded.circle_centers, obs.circle_centers)
        assert np.allclose(loaded.circle_radii, obs.circle_radii)
        assert np.allclose(loaded.box_min, obs.box_min)
        assert np.allclose(loaded.box_max, obs.box_max)

    def test_validation(self):
        with pytest.raises(GeometryError):
            ObstacleSet.from_shapes(circles=[((0.0, 0.0), -1.0)])
        with pytest.raises(GeometryError):
            ObstacleSet.from_shapes(boxes=[((1.0, 0.0), (0.0, 1.0))])
