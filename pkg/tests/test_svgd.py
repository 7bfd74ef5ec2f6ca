import numpy as np
import pytest

from svprm.geometry import ConfigSpace, sample_uniform
from svprm.models import (
    BoxBarrierPrior,
    FeasibilityModel,
    GaussianMixtureModel,
    GaussianModel,
)
from svprm.svgd import (
    KernelConfig,
    ParticleSet,
    SvgdConfig,
    SvgdError,
    TraceRow,
    estimate_metric,
    kernel_eval,
    median_bandwidth,
    pairwise_sq_metric,
    run_inference,
    svgd_phi,
    svgd_step,
    write_trace_csv,
)

E_QUARTER = np.exp(-0.25)


class FlatModel(FeasibilityModel):
    """Zero log-density everywhere; isolates the repulsive term."""

    def __init__(self, dim):
        self.dim = dim

    def log_likelihood(self, x):
        return 0.0

    def grad_log_likelihood(self, x):
        return np.zeros(self.dim)

    def log_likelihood_many(self, X):
        return np.zeros(np.atleast_2d(X).shape[0])

    def grad_log_likelihood_many(self, X):
        return np.zeros_like(np.atleast_2d(X))


class NanModel(FlatModel):
    def grad_log_likelihood_many(self, X):
        g = np.zeros_like(np.atleast_2d(X))
        g[1] = np.nan
        return g


class TestKernel:
    def test_self_pair_has_zero_gradient(self):
        cfg = KernelConfig(metric=np.eye(2), bandwidth=1.3)
        value, grad = kernel_eval(cfg, [0.4, 0.2], [0.4, 0.2])
        assert value == pytest.approx(1.0)
        assert np.allclose(grad, 0.0)

    def test_hand_value_1d(self):
        cfg = KernelConfig(metric=np.eye(1), bandwidth=2.0)
        value, grad = kernel_eval(cfg, [1.0], [0.0])
        assert value == pytest.approx(E_QUARTER)
        assert grad[0] == pytest.approx(0.5 * E_QUARTER)

    def test_joint_metric_bandwidth_scaling(self):
        cfg1 = KernelConfig(metric=np.eye(2), bandwidth=0.7)
        cfg2 = KernelConfig(metric=3.0 * np.eye(2), bandwidth=2.1)
        v1, g1 = kernel_eval(cfg1, [0.3, -0.4], [1.0, 0.2])
        v2, g2 = kernel_eval(cfg2, [0.3, -0.4], [1.0, 0.2])
        assert v1 == pytest.approx(v2)
        assert np.allclose(g1, g2)

    def test_pairwise_matches_kernel_eval(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(6, 3))
        M = np.diag([1.0, 2.0, 0.5])
        sq = pairwise_sq_metric(X, M)
        for i in range(6):
            for j in range(6):
                diff = X[i] - X[j]
                assert sq[i, j] == pytest.approx(diff @ M @ diff, abs=1e-10)


class TestMetricEstimation:
    def test_identity(self):
        X = np.random.default_rng(1).normal(size=(10, 3))
        M = estimate_metric("identity", X, FlatModel(3))
        assert np.allclose(M, np.eye(3))

    def test_avg_hessian_recovers_gaussian_precision(self):
        cov = np.diag([4.0, 0.25])
        model = GaussianModel(mean=[0.0, 0.0], cov=cov)
        X = np.random.default_rng(2).normal(size=(40, 2)) * [2.0, 0.5]
        M = estimate_metric("avg_hessian", X, model)
        assert np.allclose(M, np.linalg.inv(cov), rtol=0.1)

    def test_grad_outer_zero_gradients_floor(self):
        X = np.random.default_rng(3).normal(size=(5, 2))
        M = estimate_metric("grad_outer", X, FlatModel(2))
        w = np.linalg.eigvalsh(M)
        assert np.all(w > 0)
        assert np.allclose(M, 1e-12 * np.eye(2))

    def test_grad_outer_matches_definition(self):
        model = GaussianModel(mean=[0.5, -0.5], cov=np.eye(2))
        X = np.random.default_rng(4).normal(size=(20, 2))
        G = model.grad_log_likelihood_many(X)
        expected = G.T @ G / 20
        M = estimate_metric("grad_outer", X, model)
        assert np.allclose(M, expected, atol=1e-8)


class TestPhi:
    def test_single_particle_reduces_to_gradient(self):
        model = GaussianModel(mean=[0.3, -0.7], cov=np.diag([1.0, 2.0]))
        ps = ParticleSet(points=np.array([[1.0, 1.0]]))
        phi, _ = svgd_phi(ps, model, None, KernelConfig())
        grad = model.grad_log_likelihood([1.0, 1.0])
        assert np.allclose(phi[0], grad, rtol=1e-15, atol=0.0)

    def test_two_particle_pure_repulsion_hand_value(self):
        # flat density, d=1, M=1, h=2, particles at 0 and 1
        ps = ParticleSet(points=np.array([[0.0], [1.0]]))
        cfg = KernelConfig(metric=np.eye(1), bandwidth=2.0)
        phi, _ = svgd_phi(ps, FlatModel(1), None, cfg)
        assert phi[1, 0] == pytest.approx(E_QUARTER / 4.0)
        assert phi[0, 0] == pytest.approx(-E_QUARTER / 4.0)

    def test_non_finite_gradient_names_particle(self):
        ps = ParticleSet(points=np.zeros((3, 2)))
        with pytest.raises(SvgdError, match="particle 1"):
            svgd_phi(ps, NanModel(2), None, KernelConfig(bandwidth=1.0))


class TestStep:
    def test_repulsion_increases_min_distance(self):
        rng = np.random.default_rng(5)
        cfg = SvgdConfig(step_size=1e-3, adagrad_decay=1.0, max_iters=1)
        for _ in range(50):
            X = rng.uniform(size=(8, 2))
            ps = ParticleSet(points=X)
            before = np.sqrt(pairwise_sq_metric(X)[np.triu_indices(8, 1)]).min()
            stepped = svgd_step(ps, FlatModel(2), None, KernelConfig(), cfg)
            after = np.sqrt(
                pairwise_sq_metric(stepped.points)[np.triu_indices(8, 1)]
            ).min()
            assert after > before

    def test_coincident_particles_stay_coincident(self):
        X = np.full((4, 2), 0.25)
        ps = ParticleSet(points=X)
        stepped = svgd_step(
            ps, FlatModel(2), None, KernelConfig(), SvgdConfig(adagrad_decay=1.0)
        )
        assert np.allclose(stepped.points, X)

    def test_clamped_to_prior_box(self):
        space = ConfigSpace.unit(2)
        prior = BoxBarrierPrior(space=space, margin=0.05)
        model = GaussianModel(mean=[2.0, 2.0], cov=0.5)  # pulls outward
        ps = ParticleSet(points=np.array([[0.95, 0.95], [0.9, 0.99]]))
        cfg = SvgdConfig(step_size=0.5, adagrad_decay=1.0)
        stepped = svgd_step(ps, model, prior, KernelConfig(), cfg)
        assert np.all(stepped.points <= 1.0)
        assert np.all(stepped.points >= 0.0)

    def test_iteration_counter_and_accum(self):
        ps = ParticleSet(points=np.array([[0.0], [1.0]]))
        stepped = svgd_step(
            ps, FlatModel(1), None, KernelConfig(), SvgdConfig(adagrad_decay=0.9)
        )
        assert stepped.iteration == 1
        assert stepped.grad_accum is not None


class TestRunInference:
    def test_infinite_tolerance_stops_after_one_iteration(self):
        ps = ParticleSet(points=np.array([[0.0], [1.0]]))
        cfg = SvgdConfig(grad_tol=np.inf, max_iters=100)
        out, trace = run_inference(ps, FlatModel(1), None, KernelConfig(), cfg)
        assert len(trace) == 1
        assert out.iteration == 1

    def test_max_iters_one(self):
        ps = ParticleSet(points=np.array([[0.0], [1.0]]))
        cfg = SvgdConfig(grad_tol=0.0, max_iters=1)
        _, trace = run_inference(ps, FlatModel(1), None, KernelConfig(), cfg)
        assert len(trace) == 1

    def test_max_iters_zero_rejected(self):
        with pytest.raises(SvgdError):
            SvgdConfig(max_iters=0)

    def test_1d_standard_normal_moments(self):
        # oracle: target moments of N(0, 1)
        model = GaussianModel(mean=[0.0], cov=np.array([[1.0]]))
        space = ConfigSpace([-4.0], [4.0])
        init = sample_uniform(space, 50, seed=42)
        ps = ParticleSet(points=init, rng_seed=42)
        cfg = SvgdConfig(step_size=0.05, max_iters=500, grad_tol=0.0, adagrad_decay=0.9)
        out, _ = run_inference(ps, model, None, KernelConfig(), cfg)
        assert abs(out.points.mean()) <= 0.1
        assert abs(out.points.std() - 1.0) <= 0.1

    def test_bimodal_mixture_occupies_both_modes(self):
        # the mixture density is explicit; count particles near each mode
        model = GaussianMixtureModel(means=[[-2.0], [2.0]], stds=[1.0, 1.0])
        space = ConfigSpace([-6.0], [6.0])
        init = sample_uniform(space, 40, seed=7)
        ps = ParticleSet(points=init)
        cfg = SvgdConfig(step_size=0.05, max_iters=1000, grad_tol=0.0, adagrad_decay=0.9)
        out, _ = run_inference(ps, model, None, KernelConfig(), cfg)
        near_lo = np.sum(np.abs(out.points[:, 0] + 2.0) < 1.0)
        near_hi = np.sum(np.abs(out.points[:, 0] - 2.0) < 1.0)
        assert near_lo >= 10
        assert near_hi >= 10

    def test_deterministic_trajectories(self):
        model = GaussianModel(mean=[0.0, 0.0], cov=np.eye(2))
        init = sample_uniform(ConfigSpace.unit(2), 20, seed=3)
        cfg = SvgdConfig(step_size=0.05, max_iters=50, grad_tol=0.0)
        out1, tr1 = run_inference(ParticleSet(points=init), model, None, KernelConfig(), cfg)
        out2, tr2 = run_inference(ParticleSet(points=init), model, None, KernelConfig(), cfg)
        assert np.array_equal(out1.points, out2.points)
        assert [r.mean_phi_norm for r in tr1] == [r.mean_phi_norm for r in tr2]

    def test_metric_reestimated_each_iteration(self):
        # with grad_outer the metric depends on particle positions, so two
        # iterations from different states must use different kernels
        model = GaussianModel(mean=[0.0, 0.0], cov=np.diag([1.0, 4.0]))
        init = sample_uniform(ConfigSpace([-2, -2], [2, 2]), 15, seed=9)
        cfg = SvgdConfig(
            step_size=0.1, max_iters=30, grad_tol=0.0, metric_mode="grad_outer"
        )
        out, trace = run_inference(ParticleSet(points=init), model, None, KernelConfig(), cfg)
        assert len(trace) == 30
        bandwidths = {r.bandwidth for r in trace}
        assert len(bandwidths) > 1  # median heuristic tracks the moving particles


class TestTraceCsv:
    def test_write(self, tmp_path):
        rows = [TraceRow(1, 0.5, 1.0, 0.1, 0.2), TraceRow(2, 0.25, 1.1, 0.15, 0.3)]
        path = tmp_path / "trace.csv"
        write_trace_csv(path, rows, config={"alpha": 1})
        text = path.read_text()
        assert text.startswith("# config: ")
        assert "iteration,mean_phi_norm,bandwidth,min_pairwise,mean_pairwise" in text
        assert text.count("\n") == 4


def test_median_bandwidth_single_particle():
    assert median_bandwidth(np.array([[0.0, 0.0]])) == 1.0
