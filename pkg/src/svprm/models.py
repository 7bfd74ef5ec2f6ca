"""Differentiable feasibility likelihoods, box barrier priors, and model fitting/IO.

All models expose log p(free | x), its gradient, and (where cheap) a curvature
matrix -hess log p(free | x), each with batched variants used by the particle
updates and the roadmap construction.
"""

from __future__ import annotations

import abc
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .geometry import (
    ConfigSpace,
    KinematicChain,
    ObstacleSet,
    forward_spheres_batch,
    signed_distance_grad_many,
    sphere_jacobians_batch,
)

__all__ = [
    "ModelError",
    "FeasibilityModel",
    "RbfOccupancyField",
    "BayesianHilbertMap",
    "TsdfArmModel",
    "BoxBarrierPrior",
    "GaussianModel",
    "GaussianMixtureModel",
    "fit_rbf_field",
    "grid_cell_centers",
    "bhm_fit",
    "bhm_predict",
    "tsdf_cost",
    "arm_log_likelihood",
    "log_posterior",
    "posterior_grad",
    "log_posterior_many",
    "posterior_grad_many",
    "posterior_curvature_many",
    "save_model",
    "load_model",
    "load_occupancy_grid",
    "save_occupancy_grid",
    "load_labeled_points",
    "save_labeled_points",
]


class ModelError(ValueError):
    """Raised for invalid model construction, fitting, or queries."""


def _log_sigmoid(a: np.ndarray) -> np.ndarray:
    return -np.logaddexp(0.0, -a)


class FeasibilityModel(abc.ABC):
    """Probability that a configuration is collision-free, with gradient access.

    likelihood(x) = exp(log_likelihood(x)) lies in (0, 1]; implementations may
    be unnormalized as long as that bound holds.
    """

    dim: int

    @abc.abstractmethod
    def log_likelihood(self, x) -> float:
        ...

    @abc.abstractmethod
    def grad_log_likelihood(self, x) -> np.ndarray:
        ...

    def curvature(self, x):
        """-hess log_likelihood at x, or None when unavailable."""
        return None

    def likelihood(self, x) -> float:
        return float(np.exp(self.log_likelihood(x)))

    # Batched defaults; concrete models override these with vectorized paths.

    def log_likelihood_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([self.log_likelihood(x) for x in X])

    def grad_log_likelihood_many(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.stack([self.grad_log_likelihood(x) for x in X])

    def likelihood_many(self, X) -> np.ndarray:
        return np.exp(self.log_likelihood_many(X))

    def curvature_many(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        mats = [self.curvature(x) for x in X]
        if any(m is None for m in mats):
            return None
        return np.stack(mats)


def _as_points(X, dim: int) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != dim:
        raise ModelError(f"expected points of dimension {dim}, got shape {X.shape}")
    return X


# ---------------------------------------------------------------------------
# Sigmoid-of-RBF occupancy field (point likelihood fitted to a binary grid)
# ---------------------------------------------------------------------------


@dataclass
class RbfOccupancyField(FeasibilityModel):
    """p(free | x) = sigmoid(w . phi(x) + b) over a grid of Gaussian features."""

    centers: np.ndarray
    weights: np.ndarray
    lengthscale: float
    bias: float = 0.0

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if self.centers.shape[0] != self.weights.size:
            raise ModelError("one weight per feature center is required")
        if self.lengthscale <= 0:
            raise ModelError("lengthscale must be positive")
        self.lengthscale = float(self.lengthscale)
        self.bias = float(self.bias)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def _features(self, X: np.ndarray) -> np.ndarray:
        sq = np.sum((X[:, None, :] - self.centers[None, :, :]) ** 2, axis=-1)
        return np.exp(-sq / (2.0 * self.lengthscale**2))

    def activation_many(self, X) -> np.ndarray:
        X = _as_points(X, self.dim)
        return self._features(X) @ self.weights + self.bias

    def probability_many(self, X) -> np.ndarray:
        return expit(self.activation_many(X))

    def log_likelihood_many(self, X) -> np.ndarray:
        return _log_sigmoid(self.activation_many(X))

    def likelihood_many(self, X) -> np.ndarray:
        return self.probability_many(X)

    def _activation_grads(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        phi = self._features(X)
        wphi = phi * self.weights[None, :]
        a = phi @ self.weights + self.bias
        grad_a = (wphi @ self.centers - wphi.sum(axis=1, keepdims=True) * X) / (
            self.lengthscale**2
        )
        return a, grad_a, wphi

    def grad_log_likelihood_many(self, X) -> np.ndarray:
        X = _as_points(X, self.dim)
        a, grad_a, _ = self._activation_grads(X)
        return expit(-a)[:, None] * grad_a

    def curvature_many(self, X):
        X = _as_points(X, self.dim)
        a, grad_a, wphi = self._activation_grads(X)
        p = expit(a)
        s = p * (1.0 - p)
        outer = np.einsum("ni,nj->nij", grad_a, grad_a)
        delta = self.centers[None, :, :] - X[:, None, :]
        hess_a = np.einsum("nf,nfi,nfj->nij", wphi, delta, delta) / self.lengthscale**4
        hess_a -= (
            wphi.sum(axis=1)[:, None, None]
            * np.eye(self.dim)[None, :, :]
            / self.lengthscale**2
        )
        return s[:, None, None] * outer - expit(-a)[:, None, None] * hess_a

    def log_likelihood(self, x) -> float:
        return float(self.log_likelihood_many(np.asarray(x, dtype=float)[None, :])[0])

    def grad_log_likelihood(self, x) -> np.ndarray:
        return self.grad_log_likelihood_many(np.asarray(x, dtype=float)[None, :])[0]

    def curvature(self, x):
        return self.curvature_many(np.asarray(x, dtype=float)[None, :])[0]

    def to_json(self) -> dict:
        return {
            "kind": "rbf_field",
            "centers": self.centers.tolist(),
            "weights": self.weights.tolist(),
            "lengthscale": self.lengthscale,
            "bias": self.bias,
        }

    @classmethod
    def from_json(cls, data: dict) -> "RbfOccupancyField":
        return cls(
            centers=np.asarray(data["centers"], dtype=float),
            weights=np.asarray(data["weights"], dtype=float),
            lengthscale=float(data["lengthscale"]),
            bias=float(data.get("bias", 0.0)),
        )


def grid_cell_centers(shape: tuple[int, int], extent) -> np.ndarray:
    """Centers of an (H, W) grid over extent (xmin, ymin, xmax, ymax), row 0 on top."""
    h, w = shape
    xmin, ymin, xmax, ymax = (float(v) for v in extent)
    dx = (xmax - xmin) / w
    dy = (ymax - ymin) / h
    xs = xmin + (np.arange(w) + 0.5) * dx
    ys = ymax - (np.arange(h) + 0.5) * dy
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


def fit_rbf_field(
    grid: np.ndarray,
    extent,
    feature_shape: tuple[int, int] | None = None,
    reg: float = 1e-3,
    lengthscale_factor: float = 1.5,
    max_iters: int = 50,
    tol: float = 1e-8,
) -> RbfOccupancyField:
    """Fit a sigmoid-of-RBF free-space field to a binary occupancy grid.

    grid is (H, W) with truthy entries meaning occupied. The fit is a ridge
    logistic regression (Newton iterations) on the grid cell centers; feature
    centers sit on a possibly coarser grid, with lengthscale tied to the
    feature spacing.
    """
    grid = np.asarray(grid).astype(bool)
    if grid.ndim != 2:
        raise ModelError("occupancy grid must be 2-d")
    if feature_shape is None:
        feature_shape = grid.shape
    data_x = grid_cell_centers(grid.shape, extent)
    free = (~grid).ravel().astype(float)
    centers = grid_cell_centers(feature_shape, extent)
    xmin, ymin, xmax, ymax = (float(v) for v in extent)
    spacing = 0.5 * ((xmax - xmin) / feature_shape[1] + (ymax - ymin) / feature_shape[0])
    lengthscale = lengthscale_factor * spacing

    sq = np.sum((data_x[:, None, :] - centers[None, :, :]) ** 2, axis=-1)
    phi = np.exp(-sq / (2.0 * lengthscale**2))
    phi = np.concatenate([phi, np.ones((phi.shape[0], 1))], axis=1)
    n_feat = centers.shape[0]
    ridge = np.full(n_feat + 1, reg)
    ridge[-1] = 1e-9  # effectively free intercept

    w = np.zeros(n_feat + 1)
    for _ in range(max_iters):
        a = phi @ w
        p = expit(a)
        r = p * (1.0 - p) + 1e-9
        hess = (phi * r[:, None]).T @ phi
        hess[np.diag_indices_from(hess)] += ridge
        grad = phi.T @ (free - p) - ridge * w
        step = np.linalg.solve(hess, grad)
        w = w + step
        if np.max(np.abs(step)) < tol:
            break
    return RbfOccupancyField(
        centers=centers, weights=w[:-1], lengthscale=lengthscale, bias=float(w[-1])
    )


# ---------------------------------------------------------------------------
# Bayesian Hilbert map (diagonal-Gaussian weight posterior over RBF features)
# ---------------------------------------------------------------------------


@dataclass
class BayesianHilbertMap(FeasibilityModel):
    """Bayesian logistic free-space map with a diagonal weight posterior.

    Predictions use the standard probit moderation
    sigmoid(m / sqrt(1 + (pi/8) v)) so that far from all features the map
    reports maximal uncertainty, p = 0.5.
    """

    centers: np.ndarray
    mean: np.ndarray
    covariance_diag: np.ndarray
    lengthscale: float

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.mean = np.asarray(self.mean, dtype=float).reshape(-1)
        self.covariance_diag = np.asarray(self.covariance_diag, dtype=float).reshape(-1)
        if not (self.centers.shape[0] == self.mean.size == self.covariance_diag.size):
            raise ModelError("centers, mean, and covariance_diag must align")
        if np.any(self.covariance_diag <= 0):
            raise ModelError("covariance_diag must be positive")
        if self.lengthscale <= 0:
            raise ModelError("lengthscale must be positive")
        self.lengthscale = float(self.lengthscale)

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    def _features(self, X: np.ndarray) -> np.ndarray:
        sq = np.sum((X[:, None, :] - self.centers[None, :, :]) ** 2, axis=-1)
        return np.exp(-sq / (2.0 * self.lengthscale**2))

    def _moderated(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        phi = self._features(X)
        m = phi @ self.mean
        v = (phi * phi) @ self.covariance_diag
        u = 1.0 + (np.pi / 8.0) * v
        return phi, m / np.sqrt(u), u

    def probability_many(self, X) -> np.ndarray:
        X = _as_points(X, self.dim)
        return expit(self._moderated(X)[1])

    def predict(self, x) -> float:
        return float(self.probability_many(np.asarray(x, dtype=float)[None, :])[0])

    def log_likelihood_many(self, X) -> np.ndarray:
        X = _as_points(X, self.dim)
        return _log_sigmoid(self._moderated(X)[1])

    def likelihood_many(self, X) -> np.ndarray:
        return self.probability_many(X)

    def _moderated_grads(self, X: np.ndarray):
        phi = self._features(X)
        m = phi @ self.mean
        v = (phi * phi) @ self.covariance_diag
        u = 1.0 + (np.pi / 8.0) * v
        g = m / np.sqrt(u)
        ell2 = self.lengthscale**2
        mu_phi = phi * self.mean[None, :]
        grad_m = (mu_phi @ self.centers - mu_phi.sum(axis=1, keepdims=True) * X) / ell2
        s_phi2 = (phi * phi) * self.covariance_diag[None, :]
        grad_v = 2.0 * (s_phi2 @ self.centers - s_phi2.sum(axis=1, keepdims=True) * X) / ell2
        grad_g = grad_m / np.sqrt(u)[:, None] - (np.pi / 16.0) * (
            m / u**1.5
        )[:, None] * grad_v
        return g, grad_g

    def grad_log_likelihood_many(self, X) -> np.ndarray:
        X = _as_points(X, self.dim)
        g, grad_g = self._moderated_grads(X)
        return expit(-g)[:, None] * grad_g

    def curvature_many(self, X):
        # Gauss-Newton surrogate: sigmoid'(g) grad_g grad_g^T
        X = _as_points(X, self.dim)
        g, grad_g = self._moderated_grads(X)
        s = expit(g) * expit(-g)
        return s[:, None, None] * np.einsum("ni,nj->nij", grad_g, grad_g)

    def log_likelihood(self, x) -> float:
        return float(self.log_likelihood_many(np.asarray(x, dtype=float)[None, :])[0])

    def grad_log_likelihood(self, x) -> np.ndarray:
        return self.grad_log_likelihood_many(np.asarray(x, dtype=float)[None, :])[0]

    def curvature(self, x):
        return self.curvature_many(np.asarray(x, dtype=float)[None, :])[0]

    def to_json(self) -> dict:
        return {
            "kind": "bhm",
            "centers": self.centers.tolist(),
            "mean": self.mean.tolist(),
            "covariance_diag": self.covariance_diag.tolist(),
            "lengthscale": self.lengthscale,
        }

    @classmethod
    def from_json(cls, data: dict) -> "BayesianHilbertMap":
        return cls(
            centers=np.asarray(data["centers"], dtype=float),
            mean=np.asarray(data["mean"], dtype=float),
            covariance_diag=np.asarray(data["covariance_diag"], dtype=float),
            lengthscale=float(data["lengthscale"]),
        )


def bhm_fit(
    points: np.ndarray,
    labels: np.ndarray,
    centers: np.ndarray,
    lengthscale: float,
    prior_variance: float = 100.0,
    iters: int = 100,
    tol: float = 1e-6,
) -> BayesianHilbertMap:
    """Fit a diagonal-Gaussian weight posterior by the local quadratic bound.

    labels are 1 for free and 0 for occupied; larger w . phi means more free.
    Iterates the variational-bound updates for Bayesian logistic regression
    until the parameter change drops below tol or iters is reached.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    z = np.asarray(labels, dtype=float).reshape(-1)
    if X.shape[0] != z.size:
        raise ModelError("points and labels must align")
    if not (np.any(z == 1.0) and np.any(z == 0.0)):
        raise ModelError("degenerate dataset: need at least one free and one occupied label")
    if iters < 1:
        raise ModelError("iters must be >= 1")
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    if prior_variance <= 0:
        raise ModelError("prior_variance must be positive")

    sq = np.sum((X[:, None, :] - centers[None, :, :]) ** 2, axis=-1)
    phi = np.exp(-sq / (2.0 * float(lengthscale) ** 2))
    phi2 = phi * phi
    zc = z - 0.5
    s0_inv = 1.0 / prior_variance

    mean = np.zeros(centers.shape[0])
    cov = np.full(centers.shape[0], prior_variance)
    xi = np.ones(X.shape[0])
    for _ in range(iters):
        lam = np.where(xi < 1e-8, 0.125, np.tanh(xi / 2.0) / np.maximum(4.0 * xi, 1e-300))
        prec = s0_inv + 2.0 * (lam @ phi2)
        cov_new = 1.0 / prec
        mean_new = cov_new * (phi.T @ zc)
        xi = np.sqrt(phi2 @ cov_new + (phi @ mean_new) ** 2)
        delta = max(
            np.max(np.abs(mean_new - mean)), np.max(np.abs(cov_new - cov))
        )
        mean, cov = mean_new, cov_new
        if delta < tol:
            break
    return BayesianHilbertMap(
        centers=centers, mean=mean, covariance_diag=cov, lengthscale=float(lengthscale)
    )


def bhm_predict(bhm: BayesianHilbertMap, x) -> float:
    """Moderated free-space probability at a point."""
    return bhm.predict(x)


# ---------------------------------------------------------------------------
# Truncated-SDF arm likelihood
# ---------------------------------------------------------------------------


@dataclass
class TsdfArmModel(FeasibilityModel):
    """Arm feasibility from hinge-truncated clearance of the body spheres.

    Each sphere contributes cost max(0, epsilon - clearance); the likelihood is
    exp(-alpha * ||cost||^2), so collision-free configurations with ample
    clearance score exactly 1.
    """

    chain: KinematicChain
    obstacles: ObstacleSet
    epsilon_sdf: float = 0.25
    alpha: float = 10.0

    def __post_init__(self):
        if self.epsilon_sdf <= 0:
            raise ModelError("epsilon_sdf must be positive")
        if self.alpha <= 0:
            raise ModelError("alpha must be positive")
        if self.obstacles.n_primitives == 0:
            raise ModelError("arm model requires a nonempty obstacle set")

    @property
    def dim(self) -> int:
        return self.chain.n_joints

    def cost_many(self, Q) -> tuple[np.ndarray, np.ndarray]:
        """Hinge costs and their joint-space jacobians: ((N, K), (N, K, k))."""
        Q = _as_points(Q, self.dim)
        centers = forward_spheres_batch(self.chain, Q)  # (N, K, 2)
        flat = centers.reshape(-1, 2)
        d, gsd = signed_distance_grad_many(self.obstacles, flat)
        n, K = centers.shape[0], centers.shape[1]
        d = d.reshape(n, K) - self.chain.sphere_radius
        gsd = gsd.reshape(n, K, 2)
        h = np.maximum(0.0, self.epsilon_sdf - d)
        active = d < self.epsilon_sdf  # one-sided zero derivative at the kink
        jac_centers = sphere_jacobians_batch(self.chain, Q)  # (N, K, 2, k)
        J = -np.einsum("nkd,nkdj->nkj", gsd, jac_centers)
        J *= active[:, :, None]
        return h, J

    def tsdf_cost(self, q) -> tuple[np.ndarray, np.ndarray]:
        """Cost vector and jacobian for one configuration: ((K,), (K, k))."""
        h, J = self.cost_many(np.asarray(q, dtype=float)[None, :])
        return h[0], J[0]

    def log_likelihood_many(self, X) -> np.ndarray:
        h, _ = self.cost_many(X)
        return -self.alpha * np.sum(h * h, axis=1)

    def grad_log_likelihood_many(self, X) -> np.ndarray:
        h, J = self.cost_many(X)
        return -2.0 * self.alpha * np.einsum("nkj,nk->nj", J, h)

    def curvature_many(self, X):
        # Gauss-Newton surrogate 2 alpha J^T J
        _, J = self.cost_many(X)
        return 2.0 * self.alpha * np.einsum("nki,nkj->nij", J, J)

    def log_likelihood(self, x) -> float:
        return float(self.log_likelihood_many(np.asarray(x, dtype=float)[None, :])[0])

    def grad_log_likelihood(self, x) -> np.ndarray:
        return self.grad_log_likelihood_many(np.asarray(x, dtype=float)[None, :])[0]

    def curvature(self, x):
        return self.curvature_many(np.asarray(x, dtype=float)[None, :])[0]

    def to_json(self) -> dict:
        return {
            "kind": "tsdf_arm",
            "link_lengths": self.chain.link_lengths.tolist(),
            "base": self.chain.base.tolist(),
            "spheres_per_link": self.chain.spheres_per_link,
            "sphere_radius": self.chain.sphere_radius,
            "obstacles": self.obstacles.to_json(),
            "epsilon_sdf": self.epsilon_sdf,
            "alpha": self.alpha,
        }

    @classmethod
    def from_json(cls, data: dict) -> "TsdfArmModel":
        chain = KinematicChain(
            link_lengths=np.asarray(data["link_lengths"], dtype=float),
            base=np.asarray(data["base"], dtype=float),
            spheres_per_link=int(data["spheres_per_link"]),
            sphere_radius=float(data["sphere_radius"]),
        )
        return cls(
            chain=chain,
            obstacles=ObstacleSet.from_json(data["obstacles"]),
            epsilon_sdf=float(data["epsilon_sdf"]),
            alpha=float(data["alpha"]),
        )


def tsdf_cost(model: TsdfArmModel, q) -> tuple[np.ndarray, np.ndarray]:
    """Hinge cost vector and its jacobian for one joint configuration."""
    return model.tsdf_cost(q)


def arm_log_likelihood(model: TsdfArmModel, q) -> float:
    """Unnormalized log-likelihood -alpha ||h(q)||^2."""
    return model.log_likelihood(q)


# ---------------------------------------------------------------------------
# Box barrier prior
# ---------------------------------------------------------------------------


@dataclass
class BoxBarrierPrior:
    """Log-prior that is exactly flat in the box interior and pushes inward near faces.

    log p(x) = -stiffness * sum_i [relu((l_i + m_i - x_i)/m_i)^2
                                   + relu((x_i - u_i + m_i)/m_i)^2]
    which is continuously differentiable and zero beyond margin m of each face.
    """

    space: ConfigSpace
    stiffness: float = 50.0
    margin: np.ndarray | float | None = None

    def __post_init__(self):
        if self.stiffness <= 0:
            raise ModelError("stiffness must be positive")
        if self.margin is None:
            margin = 0.02 * self.space.extent
        else:
            margin = np.broadcast_to(
                np.asarray(self.margin, dtype=float), (self.space.dim,)
            ).copy()
        if np.any(margin <= 0):
            raise ModelError("margin must be positive")
        self.margin = margin

    @property
    def dim(self) -> int:
        return self.space.dim

    @classmethod
    def from_fraction(
        cls, space: ConfigSpace, stiffness: float = 50.0, fraction: float = 0.02
    ) -> "BoxBarrierPrior":
        return cls(space=space, stiffness=stiffness, margin=fraction * space.extent)

    def _hinges(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        t_lo = (self.space.lower + self.margin - X) / self.margin
        t_hi = (X - self.space.upper + self.margin) / self.margin
        return np.maximum(t_lo, 0.0), np.maximum(t_hi, 0.0)

    def log_density_many(self, X) -> np.ndarray:
        X = _as_points(X, self.dim)
        lo, hi = self._hinges(X)
        return -self.stiffness * np.sum(lo * lo + hi * hi, axis=1)

    def grad_log_density_many(self, X) -> np.ndarray:
        X = _as_points(X, self.dim)
        lo, hi = self._hinges(X)
        return (2.0 * self.stiffness / self.margin) * (lo - hi)

    def curvature_many(self, X) -> np.ndarray:
        X = _as_points(X, self.dim)
        lo, hi = self._hinges(X)
        diag = (2.0 * self.stiffness / self.margin**2) * (
            (lo > 0).astype(float) + (hi > 0).astype(float)
        )
        out = np.zeros((X.shape[0], self.dim, self.dim))
        idx = np.arange(self.dim)
        out[:, idx, idx] = diag
        return out

    def log_density(self, x) -> float:
        return float(self.log_density_many(np.asarray(x, dtype=float)[None, :])[0])

    def grad_log_density(self, x) -> np.ndarray:
        return self.grad_log_density_many(np.asarray(x, dtype=float)[None, :])[0]

    def curvature(self, x) -> np.ndarray:
        return self.curvature_many(np.asarray(x, dtype=float)[None, :])[0]


# ---------------------------------------------------------------------------
# Analytic targets, useful for calibration and diagnostics
# ---------------------------------------------------------------------------


@dataclass
class GaussianModel(FeasibilityModel):
    """Unnormalized Gaussian log-density with exact gradient and curvature."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        self.mean = np.atleast_1d(np.asarray(self.mean, dtype=float))
        cov = np.asarray(self.cov, dtype=float)
        if cov.ndim == 0:
            cov = cov * np.eye(self.mean.size)
        elif cov.ndim == 1:
            cov = np.diag(cov)
        self.cov = cov
        self.precision = np.linalg.inv(cov)

    @property
    def dim(self) -> int:
        return self.mean.size

    def log_likelihood_many(self, X) -> np.ndarray:
        X = _as_points(X, self.dim)
        delta = X - self.mean
        return -0.5 * np.einsum("ni,ij,nj->n", delta, self.precision, delta)

    def grad_log_likelihood_many(self, X) -> np.ndarray:
        X = _as_points(X, self.dim)
        return -(X - self.mean) @ self.precision

    def curvature_many(self, X) -> np.ndarray:
        X = _as_points(X, self.dim)
        return np.broadcast_to(self.precision, (X.shape[0], self.dim, self.dim)).copy()

    def log_likelihood(self, x) -> float:
        return float(self.log_likelihood_many(np.asarray(x, dtype=float)[None, :])[0])

    def grad_log_likelihood(self, x) -> np.ndarray:
        return self.grad_log_likelihood_many(np.asarray(x, dtype=float)[None, :])[0]

    def curvature(self, x) -> np.ndarray:
        return self.precision.copy()


@dataclass
class GaussianMixtureModel(FeasibilityModel):
    """Equal-weight isotropic Gaussian mixture; values stay in (0, 1]."""

    means: np.ndarray
    stds: np.ndarray

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.stds = np.broadcast_to(
            np.asarray(self.stds, dtype=float), (self.means.shape[0],)
        ).copy()
        if np.any(self.stds <= 0):
            raise ModelError("component stds must be positive")

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def _component_logs(self, X: np.ndarray) -> np.ndarray:
        sq = np.sum((X[:, None, :] - self.means[None, :, :]) ** 2, axis=-1)
        return -sq / (2.0 * self.stds[None, :] ** 2)

    def log_likelihood_many(self, X) -> np.ndarray:
        X = _as_points(X, self.dim)
        logs = self._component_logs(X)
        m = logs.max(axis=1)
        return m + np.log(np.mean(np.exp(logs - m[:, None]), axis=1))

    def grad_log_likelihood_many(self, X) -> np.ndarray:
        X = _as_points(X, self.dim)
        logs = self._component_logs(X)
        m = logs.max(axis=1, keepdims=True)
        resp = np.exp(logs - m)
        resp /= resp.sum(axis=1, keepdims=True)
        pulls = (self.means[None, :, :] - X[:, None, :]) / (self.stds[None, :, None] ** 2)
        return np.einsum("nc,ncj->nj", resp, pulls)

    def log_likelihood(self, x) -> float:
        return float(self.log_likelihood_many(np.asarray(x, dtype=float)[None, :])[0])

    def grad_log_likelihood(self, x) -> np.ndarray:
        return self.grad_log_likelihood_many(np.asarray(x, dtype=float)[None, :])[0]


# ---------------------------------------------------------------------------
# Posterior composition (likelihood plus barrier prior)
# ---------------------------------------------------------------------------


def log_posterior(model: FeasibilityModel, prior: BoxBarrierPrior | None, x) -> float:
    lp = model.log_likelihood(x)
    if prior is not None:
        lp += prior.log_density(x)
    return lp


def posterior_grad(model: FeasibilityModel, prior: BoxBarrierPrior | None, x) -> np.ndarray:
    g = model.grad_log_likelihood(x)
    if prior is not None:
        g = g + prior.grad_log_density(x)
    return g


def log_posterior_many(model, prior, X) -> np.ndarray:
    lp = model.log_likelihood_many(X)
    if prior is not None:
        lp = lp + prior.log_density_many(X)
    return lp


def posterior_grad_many(model, prior, X) -> np.ndarray:
    g = model.grad_log_likelihood_many(X)
    if prior is not None:
        g = g + prior.grad_log_density_many(X)
    return g


def posterior_curvature_many(model, prior, X) -> np.ndarray:
    h = model.curvature_many(X)
    if h is None:
        raise ModelError(
            "model provides no curvature; use metric_mode='grad_outer' or 'identity'"
        )
    if prior is not None:
        h = h + prior.curvature_many(X)
    return h


# ---------------------------------------------------------------------------
# Serialization and file formats
# ---------------------------------------------------------------------------

_MODEL_KINDS = {
    "rbf_field": RbfOccupancyField,
    "bhm": BayesianHilbertMap,
    "tsdf_arm": TsdfArmModel,
}


def save_model(model, path) -> None:
    """Write a fitted model to JSON."""
    data = model.to_json()
    Path(path).write_text(json.dumps(data) + "\n")


def load_model(path):
    """Load a model saved by save_model, dispatching on its kind tag."""
    data = json.loads(Path(path).read_text())
    kind = data.get("kind")
    if kind not in _MODEL_KINDS:
        raise ModelError(f"unknown model kind {kind!r} in {path}")
    return _MODEL_KINDS[kind].from_json(data)


def _parse_pgm(raw: bytes):
    # P2 (ascii) and P5 (binary) with comment support
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        tokens.append(raw[start:pos])
    magic = tokens[0].decode()
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == "P2":
        values = np.array(raw[pos:].split(), dtype=int)
    elif magic == "P5":
        pos += 1  # single whitespace after maxval
        if maxval < 256:
            values = np.frombuffer(raw[pos : pos + width * height], dtype=np.uint8).astype(int)
        else:
            values = np.frombuffer(
                raw[pos : pos + 2 * width * height], dtype=">u2"
            ).astype(int)
    else:
        raise ModelError(f"unsupported PGM magic {magic!r}")
    if values.size < width * height:
        raise ModelError("truncated PGM data")
    return values[: width * height].reshape(height, width), maxval


def load_occupancy_grid(path) -> tuple[np.ndarray, np.ndarray]:
    """Load a binary occupancy grid plus its world extent.

    Supported: PGM (P2/P5; dark pixels are occupied) and CSV of 0/1 values
    (1 is occupied). World extent [xmin, ymin, xmax, ymax] comes from a JSON
    sidecar with the same stem, e.g. grid.csv -> grid.json. Row 0 is the top
    of the map (largest y).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"occupancy grid not found: {path}")
    if path.suffix.lower() == ".pgm":
        values, maxval = _parse_pgm(path.read_bytes())
        grid = values < 0.5 * maxval
    else:
        values = np.loadtxt(path, delimiter=",", ndmin=2)
        grid = values >= 0.5
    sidecar = path.with_suffix(".json")
    if not sidecar.exists():
        raise ModelError(f"missing extent sidecar: {sidecar}")
    meta = json.loads(sidecar.read_text())
    extent = np.asarray(meta["extent"], dtype=float)
    if extent.shape != (4,):
        raise ModelError("sidecar extent must be [xmin, ymin, xmax, ymax]")
    return grid, extent


def save_occupancy_grid(path, grid: np.ndarray, extent) -> None:
    """Write a grid as CSV of 0/1 (1 occupied) plus its extent sidecar."""
    path = Path(path)
    np.savetxt(path, np.asarray(grid).astype(int), fmt="%d", delimiter=",")
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps({"extent": [float(v) for v in extent]}) + "\n")


def load_labeled_points(path) -> tuple[np.ndarray, np.ndarray]:
    """Load rows of x,y,label with label in {0, 1} (1 means free)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"labeled point file not found: {path}")
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape[1] != 3:
        raise ModelError("labeled point rows must be x,y,label")
    return data[:, :2], data[:, 2].astype(int)


def save_labeled_points(path, points: np.ndarray, labels: np.ndarray) -> None:
    rows = np.column_stack([points, labels])
    np.savetxt(path, rows, fmt=["%.9g", "%.9g", "%d"], delimiter=",")
