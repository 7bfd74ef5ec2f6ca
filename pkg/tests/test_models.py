import numpy as np
import pytest
from scipy.special import expit

from svprm.geometry import ConfigSpace, KinematicChain, ObstacleSet
from svprm.models import (
    BayesianHilbertMap,
    BoxBarrierPrior,
    GaussianMixtureModel,
    GaussianModel,
    ModelError,
    RbfOccupancyField,
    TsdfArmModel,
    arm_log_likelihood,
    bhm_fit,
    bhm_predict,
    fit_rbf_field,
    load_labeled_points,
    load_model,
    load_occupancy_grid,
    log_posterior,
    posterior_grad,
    save_labeled_points,
    save_model,
    save_occupancy_grid,
    tsdf_cost,
)


def fd_grad(f, x, eps=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        dx = np.zeros_like(x)
        dx[i] = eps
        g[i] = (f(x + dx) - f(x - dx)) / (2.0 * eps)
    return g


def assert_grad_close(analytic, numeric, rtol=1e-4, atol=1e-6):
    assert np.allclose(analytic, numeric, rtol=rtol, atol=atol), (
        f"analytic {analytic} vs finite differences {numeric}"
    )


@pytest.fixture(scope="module")
def rbf_field():
    rng = np.random.default_rng(10)
    centers = np.stack(
        np.meshgrid(np.linspace(0, 1, 5), np.linspace(0, 1, 5)), axis=-1
    ).reshape(-1, 2)
    weights = rng.normal(scale=2.0, size=centers.shape[0])
    return RbfOccupancyField(centers=centers, weights=weights, lengthscale=0.3, bias=0.2)


@pytest.fixture(scope="module")
def small_bhm():
    centers = np.stack(
        np.meshgrid(np.linspace(-1, 1, 3), np.linspace(-1, 1, 3)), axis=-1
    ).reshape(-1, 2)
    rng = np.random.default_rng(11)
    mean = rng.normal(scale=1.5, size=9)
    cov = rng.uniform(0.1, 2.0, size=9)
    return BayesianHilbertMap(centers=centers, mean=mean, covariance_diag=cov, lengthscale=0.6)


@pytest.fixture(scope="module")
def arm_model():
    chain = KinematicChain(link_lengths=[0.8, 0.6, 0.4], spheres_per_link=3, sphere_radius=0.04)
    obstacles = ObstacleSet.from_shapes(
        circles=[((1.0, 0.8), 0.3)], boxes=[((-0.5, -1.4), (1.5, -1.0))]
    )
    return TsdfArmModel(chain=chain, obstacles=obstacles, epsilon_sdf=0.25, alpha=10.0)


class TestRbfOccupancyField:
    def test_probability_in_unit_interval(self, rbf_field):
        pts = np.random.default_rng(0).uniform(0, 1, size=(50, 2))
        p = rbf_field.probability_many(pts)
        assert np.all((p > 0) & (p < 1))
        assert np.allclose(rbf_field.likelihood_many(pts), p)

    def test_gradient_matches_fd(self, rbf_field):
        rng = np.random.default_rng(1)
        for _ in range(20):
            x = rng.uniform(0, 1, size=2)
            g = rbf_field.grad_log_likelihood(x)
            fd = fd_grad(rbf_field.log_likelihood, x)
            assert_grad_close(g, fd)

    def test_curvature_matches_fd_of_gradient(self, rbf_field):
        rng = np.random.default_rng(2)
        x = rng.uniform(0.2, 0.8, size=2)
        H = rbf_field.curvature(x)
        eps = 1e-6
        for i in range(2):
            dx = np.zeros(2)
            dx[i] = eps
            fd_row = (
                rbf_field.grad_log_likelihood(x + dx)
                - rbf_field.grad_log_likelihood(x - dx)
            ) / (2 * eps)
            assert np.allclose(-H[i], fd_row, rtol=1e-4, atol=1e-5)

    def test_center_permutation_invariance(self, rbf_field):
        rng = np.random.default_rng(3)
        perm = rng.permutation(rbf_field.centers.shape[0])
        shuffled = RbfOccupancyField(
            centers=rbf_field.centers[perm],
            weights=rbf_field.weights[perm],
            lengthscale=rbf_field.lengthscale,
            bias=rbf_field.bias,
        )
        pts = rng.uniform(0, 1, size=(20, 2))
        assert np.allclose(
            rbf_field.probability_many(pts), shuffled.probability_many(pts)
        )

    def test_fit_separates_halves(self):
        grid = np.zeros((16, 16), dtype=bool)
        grid[:, :8] = True  # left half occupied
        field = fit_rbf_field(grid, (0.0, 0.0, 1.0, 1.0))
        assert field.probability_many(np.array([[0.75, 0.5]]))[0] > 0.5
        assert field.probability_many(np.array([[0.25, 0.5]]))[0] < 0.5

    def test_json_round_trip(self, rbf_field, tmp_path):
        path = tmp_path / "field.json"
        save_model(rbf_field, path)
        loaded = load_model(path)
        pts = np.random.default_rng(4).uniform(0, 1, size=(10, 2))
        assert np.allclose(
            loaded.log_likelihood_many(pts), rbf_field.log_likelihood_many(pts)
        )


class TestBayesianHilbertMap:
    def test_sigmoid_at_zero_activation(self):
        bhm = BayesianHilbertMap(
            centers=[[0.0, 0.0]], mean=[0.0], covariance_diag=[1.0], lengthscale=0.5
        )
        assert bhm_predict(bhm, [0.0, 0.0]) == pytest.approx(0.5)

    def test_far_from_centers_is_maximally_uncertain(self, small_bhm):
        assert bhm_predict(small_bhm, [50.0, 50.0]) == pytest.approx(0.5, abs=1e-9)

    def test_moderation_shrinks_toward_half(self):
        # oracle: monte-carlo average of the sigmoid over the weight posterior
        bhm = BayesianHilbertMap(
            centers=[[0.0, 0.0]], mean=[2.0], covariance_diag=[25.0], lengthscale=1.0
        )
        moderated = bhm_predict(bhm, [0.0, 0.0])
        plain = expit(2.0)
        assert moderated < plain
        rng = np.random.default_rng(5)
        draws = rng.normal(2.0, 5.0, size=100_000)
        mc = expit(draws).mean()
        assert moderated == pytest.approx(mc, abs=0.02)

    def test_gradient_matches_fd(self, small_bhm):
        rng = np.random.default_rng(6)
        for _ in range(20):
            x = rng.uniform(-1, 1, size=2)
            g = small_bhm.grad_log_likelihood(x)
            fd = fd_grad(small_bhm.log_likelihood, x)
            assert_grad_close(g, fd)

    def test_fit_against_gradient_descent_logistic_regression(self):
        # free cluster in one corner, occupied in the other; shared feature grid
        rng = np.random.default_rng(7)
        free = rng.normal((-0.5, -0.5), 0.15, size=(60, 2))
        occ = rng.normal((0.5, 0.5), 0.15, size=(60, 2))
        X = np.vstack([free, occ])
        z = np.concatenate([np.ones(60), np.zeros(60)])
        centers = np.stack(
            np.meshgrid(np.linspace(-1, 1, 3), np.linspace(-1, 1, 3)), axis=-1
        ).reshape(-1, 2)
        ell = 0.5
        bhm = bhm_fit(X, z, centers, ell, prior_variance=50.0, iters=300)

        # oracle: plain logistic regression on the same features by gradient ascent
        phi = np.exp(
            -np.sum((X[:, None, :] - centers[None, :, :]) ** 2, axis=-1) / (2 * ell**2)
        )
        w = np.zeros(centers.shape[0])
        for _ in range(8000):
            p = expit(phi @ w)
            w += 0.05 * (phi.T @ (z - p) / X.shape[0] - w / (50.0 * X.shape[0]))

        def oracle_prob(pt):
            f = np.exp(-np.sum((pt - centers) ** 2, axis=-1) / (2 * ell**2))
            return expit(f @ w)

        for probe in ([-0.5, -0.5], [0.5, 0.5]):
            assert bhm_predict(bhm, probe) == pytest.approx(
                oracle_prob(np.asarray(probe)), abs=0.05
            )
        assert bhm_predict(bhm, [-0.5, -0.5]) > 0.9
        assert bhm_predict(bhm, [0.5, 0.5]) < 0.1

    def test_single_label_dataset_rejected(self):
        X = np.random.default_rng(8).uniform(size=(10, 2))
        with pytest.raises(ModelError):
            bhm_fit(X, np.ones(10), [[0.5, 0.5]], 0.3)

    def test_prior_dominated_limit(self):
        rng = np.random.default_rng(9)
        X = rng.uniform(-1, 1, size=(40, 2))
        z = (X[:, 0] > 0).astype(float)
        bhm = bhm_fit(X, z, [[0.0, 0.0]], 0.5, prior_variance=1e-10, iters=50)
        assert np.allclose(bhm.mean, 0.0, atol=1e-6)
        assert bhm_predict(bhm, [0.3, 0.1]) == pytest.approx(0.5, abs=1e-6)

    def test_center_permutation_invariance(self, small_bhm):
        rng = np.random.default_rng(12)
        perm = rng.permutation(9)
        shuffled = BayesianHilbertMap(
            centers=small_bhm.centers[perm],
            mean=small_bhm.mean[perm],
            covariance_diag=small_bhm.covariance_diag[perm],
            lengthscale=small_bhm.lengthscale,
        )
        pts = rng.uniform(-1, 1, size=(20, 2))
        assert np.allclose(
            small_bhm.probability_many(pts), shuffled.probability_many(pts)
        )

    def test_json_round_trip(self, small_bhm, tmp_path):
        path = tmp_path / "bhm.json"
        save_model(small_bhm, path)
        loaded = load_model(path)
        pts = np.random.default_rng(13).uniform(-1, 1, size=(10, 2))
        assert np.allclose(
            loaded.probability_many(pts), small_bhm.probability_many(pts)
        )


class TestTsdfArmModel:
    def test_hinge_value_inside_truncation(self):
        # one midpoint sphere at (0.5, 0) with clearance 0.10 under epsilon 0.25
        chain = KinematicChain(link_lengths=[1.0], spheres_per_link=1, sphere_radius=0.05)
        obstacles = ObstacleSet.from_shapes(circles=[((0.5, -1.0), 0.85)])
        model = TsdfArmModel(chain=chain, obstacles=obstacles, epsilon_sdf=0.25, alpha=10.0)
        h, _ = tsdf_cost(model, [0.0])
        assert h[0] == pytest.approx(0.15)

    def test_hinge_zero_beyond_truncation(self):
        chain = KinematicChain(link_lengths=[1.0], spheres_per_link=1, sphere_radius=0.05)
        obstacles = ObstacleSet.from_shapes(circles=[((0.5, -1.0), 0.65)])
        model = TsdfArmModel(chain=chain, obstacles=obstacles, epsilon_sdf=0.25, alpha=10.0)
        h, J = tsdf_cost(model, [0.0])
        assert h[0] == 0.0
        assert np.allclose(J, 0.0)

    def test_log_likelihood_value(self):
        # single sphere with clearance 0.05 gives cost 0.2 and -alpha * 0.04 = -0.4
        chain = KinematicChain(link_lengths=[1.0], spheres_per_link=1, sphere_radius=0.05)
        obstacles = ObstacleSet.from_shapes(circles=[((0.5, -1.0), 0.9)])
        model = TsdfArmModel(chain=chain, obstacles=obstacles, epsilon_sdf=0.25, alpha=10.0)
        assert arm_log_likelihood(model, [0.0]) == pytest.approx(-0.4)

    def test_collision_free_configuration_scores_zero(self, arm_model):
        q = np.array([np.pi / 2.0, 0.0, 0.0])  # arm pointing straight up, far from obstacles
        assert arm_log_likelihood(arm_model, q) == pytest.approx(0.0)

    def test_gradient_matches_fd_away_from_kinks(self, arm_model):
        from svprm.geometry import forward_spheres, signed_distance_many

        rng = np.random.default_rng(14)
        checked = 0
        attempts = 0
        while checked < 20:
            attempts += 1
            assert attempts < 5000, "could not find enough kink-free samples"
            q = rng.uniform(-np.pi, np.pi, size=3)
            centers, radii = forward_spheres(arm_model.chain, q)
            clearance = signed_distance_many(arm_model.obstacles, centers) - radii
            if np.any(np.abs(clearance - arm_model.epsilon_sdf) < 1e-3):
                continue  # a sphere sits at the hinge kink
            if not np.any(clearance < arm_model.epsilon_sdf):
                continue  # gradient identically zero; nothing to compare
            g = arm_model.grad_log_likelihood(q)
            fd = fd_grad(arm_model.log_likelihood, q)
            assert_grad_close(g, fd, rtol=1e-4, atol=1e-5)
            checked += 1

    def test_monotone_in_clearance(self):
        # pushing the obstacle closer (smaller clearance) never raises the likelihood
        chain = KinematicChain(link_lengths=[1.0], spheres_per_link=1, sphere_radius=0.05)
        values = []
        for radius in (0.7, 0.8, 0.85, 0.9):
            obstacles = ObstacleSet.from_shapes(circles=[((0.5, -1.0), radius)])
            model = TsdfArmModel(chain=chain, obstacles=obstacles)
            values.append(arm_log_likelihood(model, [0.0]))
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_json_round_trip(self, arm_model, tmp_path):
        path = tmp_path / "arm.json"
        save_model(arm_model, path)
        loaded = load_model(path)
        Q = np.random.default_rng(15).uniform(-np.pi, np.pi, size=(10, 3))
        assert np.allclose(
            loaded.log_likelihood_many(Q), arm_model.log_likelihood_many(Q)
        )


class TestBoxBarrierPrior:
    def test_flat_interior(self):
        space = ConfigSpace.unit(2)
        prior = BoxBarrierPrior(space=space, stiffness=50.0, margin=0.05)
        assert prior.log_density([0.5, 0.5]) == 0.0
        assert np.allclose(prior.grad_log_density([0.5, 0.5]), 0.0)

    def test_inward_push_near_upper_face(self):
        space = ConfigSpace.unit(2)
        prior = BoxBarrierPrior(space=space, margin=0.1)
        g = prior.grad_log_density([0.5, 0.98])
        assert g[1] < 0.0
        assert g[0] == 0.0

    def test_gradient_magnitude_grows_toward_boundary(self):
        space = ConfigSpace.unit(1)
        prior = BoxBarrierPrior(space=space, margin=0.1)
        norms = [
            np.abs(prior.grad_log_density([x]))[0] for x in (0.95, 0.97, 0.99, 0.999)
        ]
        assert all(a < b for a, b in zip(norms, norms[1:]))

    def test_gradient_matches_fd(self):
        space = ConfigSpace([-2.0, 0.0], [3.0, 1.0])
        prior = BoxBarrierPrior(space=space)
        rng = np.random.default_rng(16)
        for _ in range(20):
            x = rng.uniform(space.lower, space.upper)
            g = prior.grad_log_density(x)
            fd = fd_grad(prior.log_density, x)
            assert_grad_close(g, fd, atol=1e-5)

    def test_default_margin_fraction(self):
        space = ConfigSpace([0.0, 0.0], [10.0, 1.0])
        prior = BoxBarrierPrior(space=space)
        assert np.allclose(prior.margin, [0.2, 0.02])


class TestAnalyticTargets:
    def test_gaussian_gradient_and_curvature(self):
        model = GaussianModel(mean=[1.0, -1.0], cov=np.diag([2.0, 0.5]))
        rng = np.random.default_rng(17)
        for _ in range(10):
            x = rng.normal(size=2)
            fd = fd_grad(model.log_likelihood, x)
            assert_grad_close(model.grad_log_likelihood(x), fd)
        assert np.allclose(model.curvature([0.0, 0.0]), np.diag([0.5, 2.0]))

    def test_mixture_gradient(self):
        model = GaussianMixtureModel(means=[[-2.0], [2.0]], stds=[1.0, 1.0])
        rng = np.random.default_rng(18)
        for _ in range(10):
            x = rng.uniform(-4, 4, size=1)
            fd = fd_grad(model.log_likelihood, x)
            assert_grad_close(model.grad_log_likelihood(x), fd)

    def test_mixture_bounded_by_one(self):
        model = GaussianMixtureModel(means=[[0.0], [0.1]], stds=[0.5, 0.5])
        x = np.linspace(-2, 2, 101)[:, None]
        assert np.all(model.log_likelihood_many(x) <= 0.0 + 1e-12)


class TestPosteriorComposition:
    def test_interior_equals_likelihood_gradient(self, rbf_field):
        space = ConfigSpace.unit(2)
        prior = BoxBarrierPrior(space=space, margin=0.02)
        x = np.array([0.5, 0.5])
        assert np.allclose(
            posterior_grad(rbf_field, prior, x), rbf_field.grad_log_likelihood(x)
        )

    def test_barrier_contribution_near_face(self, rbf_field):
        space = ConfigSpace.unit(2)
        prior = BoxBarrierPrior(space=space, margin=0.1)
        x = np.array([0.5, 0.995])
        with_prior = posterior_grad(rbf_field, prior, x)
        without = rbf_field.grad_log_likelihood(x)
        assert with_prior[1] < without[1]

    def test_sum_matches_fd(self, rbf_field):
        space = ConfigSpace.unit(2)
        prior = BoxBarrierPrior(space=space, margin=0.15)
        rng = np.random.default_rng(19)
        for _ in range(10):
            x = rng.uniform(0.01, 0.99, size=2)
            g = posterior_grad(rbf_field, prior, x)
            fd = fd_grad(lambda p: log_posterior(rbf_field, prior, p), x)
            assert_grad_close(g, fd, atol=1e-5)


class TestFileFormats:
    def test_occupancy_csv_round_trip(self, tmp_path):
        grid = np.zeros((4, 6), dtype=bool)
        grid[1, 2] = True
        path = tmp_path / "grid.csv"
        save_occupancy_grid(path, grid, (0.0, 0.0, 3.0, 2.0))
        loaded, extent = load_occupancy_grid(path)
        assert np.array_equal(loaded, grid)
        assert np.allclose(extent, [0.0, 0.0, 3.0, 2.0])

    def test_pgm_p2_and_p5(self, tmp_path):
        # dark pixels are occupied
        p2 = b"P2\n# comment\n3 2\n255\n0 255 255\n255 0 255\n"
        path2 = tmp_path / "map.pgm"
        path2.write_bytes(p2)
        path2.with_suffix(".json").write_text('{"extent": [0, 0, 3, 2]}')
        grid2, _ = load_occupancy_grid(path2)
        assert np.array_equal(grid2, [[True, False, False], [False, True, False]])

        p5 = b"P5\n3 2\n255\n" + bytes([0, 255, 255, 255, 0, 255])
        path5 = tmp_path / "map5.pgm"
        path5.write_bytes(p5)
        path5.with_suffix(".json").write_text('{"extent": [0, 0, 3, 2]}')
        grid5, _ = load_occupancy_grid(path5)
        assert np.array_equal(grid5, grid2)

    def test_missing_sidecar_raises(self, tmp_path):
        path = tmp_path / "grid.csv"
        np.savetxt(path, np.zeros((2, 2)), fmt="%d", delimiter=",")
        with pytest.raises(ModelError, match="sidecar"):
            load_occupancy_grid(path)

    def test_missing_grid_names_path(self, tmp_path):
        with pytest.raises(FileNotFoundError, match="nope.csv"):
            load_occupancy_grid(tmp_path / "nope.csv")

    def test_labeled_points_round_trip(self, tmp_path):
        pts = np.array([[0.1, 0.2], [0.3, 0.4]])
        labels = np.array([1, 0])
        path = tmp_path / "points.csv"
        save_labeled_points(path, pts, labels)
        X, z = load_labeled_points(path)
        assert np.allclose(X, pts)
        assert np.array_equal(z, labels)
