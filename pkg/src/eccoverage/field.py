"""Gaussian random-field regression with an append-only Cholesky factor.

The measurement archive only ever grows, so the factor of ``K + noise_var*I``
is extended block by block instead of being recomputed.  A model can also
track a fixed set of query nodes (the evaluation grid); for those nodes the
posterior mean and variance are updated in O(m * nodes) per append, which is
what keeps long simulations cheap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ConfigError, MeasurementCapExceeded, NumericalBreakdown, OutOfDomain
from .geometry import ConvexPolygon, Grid, as_points, contains_points, grid_nodes

DEFAULT_MAX_MEASUREMENTS = 4000


@dataclass(frozen=True)
class RadialKernel:
    """Gaussian kernel ``amplitude * exp(-|a - b|^2 / lengthscale_sq)``."""

    lengthscale_sq: float = 0.02
    amplitude: float = 1.0
    variant: str = "gaussian"

    def __post_init__(self):
        if self.variant != "gaussian":
            raise ConfigError(f"unsupported kernel variant {self.variant!r}")
        if not self.lengthscale_sq > 0:
            raise ConfigError("kernel lengthscale_sq must be positive")
        if not self.amplitude > 0:
            raise ConfigError("kernel amplitude must be positive")

    @property
    def prior_variance(self) -> float:
        """K(x, x), the same for every x."""
        return float(self.radial(0.0))

    def radial(self, dist_sq):
        return self.amplitude * np.exp(-np.asarray(dist_sq) / self.lengthscale_sq)

    def __call__(self, a, b) -> np.ndarray:
        a = as_points(a)
        b = as_points(b)
        d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
        return self.radial(d2)


class GaussianFieldModel:
    """Posterior of a zero-mean Gaussian field given noisy point measurements.

    ``grid`` (a :class:`Grid` or an (n, 2) node array) is tracked
    incrementally; ``domain`` if given is used to reject out-of-domain
    measurement locations.

    ``add_measurements`` mutates the model in place.  Copying the factor on
    every append would cost O(m^2) memory traffic per iteration for no gain,
    since the simulation loop is the only writer.
    """

    def __init__(
        self,
        kernel: RadialKernel,
        noise_var: float,
        grid=None,
        domain: ConvexPolygon | None = None,
        max_measurements: int = DEFAULT_MAX_MEASUREMENTS,
    ):
        if not noise_var > 0:
            raise ConfigError(f"noise variance must be strictly positive, got {noise_var}")
        self.kernel = kernel
        self.noise_var = float(noise_var)
        self.domain = domain
        self.max_measurements = int(max_measurements)
        self.lam = kernel.prior_variance

        if isinstance(grid, Grid):
            self.grid = grid
            nodes = grid.nodes
        else:
            self.grid = None
            nodes = None if grid is None else as_points(grid)
        self.grid_points = nodes

        self._m = 0
        self._cap = 0
        self._X = np.empty((0, 2))
        self._y = np.empty(0)
        self._L = np.empty((0, 0))
        self._z = np.empty(0)
        g = 0 if nodes is None else len(nodes)
        self._W = np.empty((0, g))
        if nodes is not None:
            # variance explained by the data; kept apart from lam so that tiny
            # reductions far from every measurement are not rounded away
            self._grid_red = np.zeros(g)
            self._grid_mean = np.zeros(g)
        self._coeffs = None

    # -- archive ---------------------------------------------------------

    def __len__(self):
        return self._m

    @property
    def n_measurements(self) -> int:
        return self._m

    @property
    def locations(self) -> np.ndarray:
        return self._X[: self._m]

    @property
    def values(self) -> np.ndarray:
        return self._y[: self._m]

    @property
    def chol(self) -> np.ndarray:
        """Lower-triangular L with L @ L.T = K + noise_var * I."""
        return self._L

    @property
    def coeffs(self) -> np.ndarray:
        """Weights c with posterior mean = sum_j c_j K(x_j, .)."""
        if self._coeffs is None:
            if self._m == 0:
                self._coeffs = np.empty(0)
            else:
                self._coeffs = solve_triangular(self.chol.T, self._z[: self._m], lower=False, check_finite=False)
        return self._coeffs

    def _reserve(self, needed: int):
        if needed <= self._cap:
            return
        cap = max(needed, min(self.max_measurements, max(64, 2 * self._cap)))
        m = self._m
        X = np.zeros((cap, 2))
        X[:m] = self._X[:m]
        y = np.zeros(cap)
        y[:m] = self._y[:m]
        z = np.zeros(cap)
        z[:m] = self._z[:m]
        W = np.zeros((cap, self._W.shape[1]))
        W[:m] = self._W[:m]
        self._X, self._y, self._z, self._W = X, y, z, W
        self._cap = cap

    def add_measurements(self, locations, values) -> "GaussianFieldModel":
        """Append measurements and extend the factor; returns ``self``."""
        Xn = as_points(locations)
        yn = np.asarray(values, dtype=float).reshape(-1)
        if len(Xn) != len(yn):
            raise ValueError("locations and values differ in length")
        n = len(Xn)
        if n == 0:
            return self
        if self.domain is not None:
            inside = contains_points(self.domain, Xn)
            if not inside.all():
                raise OutOfDomain(f"measurement location {Xn[~inside][0]} outside the domain")
        m = self._m
        if m + n > self.max_measurements:
            raise MeasurementCapExceeded(
                f"archive would hold {m + n} measurements, cap is {self.max_measurements}"
            )
        self._reserve(m + n)

        K22 = self.kernel(Xn, Xn) + self.noise_var * np.eye(n)
        if m:
            B = solve_triangular(self.chol, self.kernel(self._X[:m], Xn), lower=True, check_finite=False)
            S = K22 - B.T @ B
        else:
            B = np.empty((0, n))
            S = K22
        try:
            L22 = np.linalg.cholesky(S)
        except np.linalg.LinAlgError as exc:
            raise NumericalBreakdown(
                f"non-positive pivot while appending {n} measurements to {m}"
            ) from exc
        if not np.all(np.diag(L22) > 0):
            raise NumericalBreakdown("non-positive pivot in appended block")

        # The factor is kept exactly sized and C-contiguous: LAPACK would copy
        # a strided view on every solve, which costs more than this one copy.
        L = np.zeros((m + n, m + n))
        L[:m, :m] = self._L
        L[m:, :m] = B.T
        L[m:, m:] = L22
        self._L = L
        self._X[m : m + n] = Xn
        self._y[m : m + n] = yn
        zn = solve_triangular(L22, yn - B.T @ self._z[:m], lower=True, check_finite=False)
        self._z[m : m + n] = zn

        if self.grid_points is not None:
            Kg = self.kernel(Xn, self.grid_points) - B.T @ self._W[:m]
            Wn = solve_triangular(L22, Kg, lower=True, check_finite=False)
            self._W[m : m + n] = Wn
            self._grid_red += (Wn**2).sum(axis=0)
            self._grid_mean += Wn.T @ zn

        self._m = m + n
        self._coeffs = None
        return self

    # -- queries ---------------------------------------------------------

    def _solve_lower(self, k):
        return solve_triangular(self.chol, k, lower=True, check_finite=False)

    def posterior_mean(self, x):
        """Posterior mean at one point (float) or at each row of an (n, 2) array."""
        single = np.ndim(x) == 1
        pts = as_points(x)
        if self._m == 0:
            out = np.zeros(len(pts))
        else:
            out = self.kernel(pts, self.locations) @ self.coeffs
        return float(out[0]) if single else out

    def variance_reduction(self, pts) -> np.ndarray:
        """Prior minus posterior variance at each row of ``pts``, without cancellation."""
        pts = as_points(pts)
        if self._m == 0:
            return np.zeros(len(pts))
        v = self._solve_lower(self.kernel(self.locations, pts))
        return (v**2).sum(axis=0)

    def posterior_variance(self, x):
        single = np.ndim(x) == 1
        out = np.clip(self.lam - self.variance_reduction(x), 0.0, self.lam)
        return float(out[0]) if single else out

    def variance_gradient(self, x) -> np.ndarray:
        """Analytic gradient of the posterior variance; shape (2,) or (n, 2)."""
        single = np.ndim(x) == 1
        pts = as_points(x)
        if self._m == 0:
            out = np.zeros_like(pts)
        else:
            X = self.locations
            k = self.kernel(X, pts)  # (m, n)
            alpha = solve_triangular(self.chol.T, self._solve_lower(k), lower=False, check_finite=False)
            w = k * alpha  # k_j(x) * [(K + s I)^-1 k_x]_j
            # d k_j / dx = -2 (x - x_j) / l2 * k_j, and grad V = -2 (dk)^T alpha
            diff = pts[None, :, :] - X[:, None, :]
            out = (4.0 / self.kernel.lengthscale_sq) * (w[:, :, None] * diff).sum(axis=0)
        return out[0] if single else out

    @property
    def grid_mean(self) -> np.ndarray:
        if self.grid_points is None:
            raise AttributeError("model does not track a grid")
        return self._grid_mean.copy()

    @property
    def grid_variance(self) -> np.ndarray:
        if self.grid_points is None:
            raise AttributeError("model does not track a grid")
        return np.clip(self.lam - self._grid_red, 0.0, self.lam)

    @property
    def grid_variance_reduction(self) -> np.ndarray:
        if self.grid_points is None:
            raise AttributeError("model does not track a grid")
        return self._grid_red.copy()


# -- module-level operations ------------------------------------------------


def add_measurements(model: GaussianFieldModel, locations, values) -> GaussianFieldModel:
    return model.add_measurements(locations, values)


def posterior_mean(model: GaussianFieldModel, x):
    return model.posterior_mean(x)


def posterior_variance(model: GaussianFieldModel, x):
    return model.posterior_variance(x)


def variance_gradient(model: GaussianFieldModel, x):
    return model.variance_gradient(x)


def max_variance_on_grid(model: GaussianFieldModel, domain: ConvexPolygon, step: float):
    """Largest posterior variance over grid nodes and the first node attaining it.

    The search runs on the variance reduction, which keeps its precision
    where the variance itself rounds to the prior.  Nodes are in
    lexicographic (x, y) order, so exact ties go to the lowest node.
    """
    grid = model.grid
    if grid is None or grid.domain is not domain or grid.step != step:
        grid = grid_nodes(domain, step)
        red = model.variance_reduction(grid.nodes)
    else:
        red = model._grid_red
    i = int(np.argmin(red))
    value = min(max(model.lam - float(red[i]), 0.0), model.lam)
    return value, grid.nodes[i].copy()


def tikhonov_objective(model: GaussianFieldModel, coeffs, gamma: float | None = None) -> float:
    """Regularized empirical risk of ``f = sum_j coeffs_j K(x_j, .)``.

    J(f) = mean squared residual on the archive + gamma * |f|_H^2, with
    gamma = noise_var / t when not given.
    """
    t = model.n_measurements
    if gamma is None:
        gamma = model.noise_var / t
    X, y = model.locations, model.values
    K = model.kernel(X, X)
    Kc = K @ coeffs
    resid = y - Kc
    return float(resid @ resid / t + gamma * (coeffs @ Kc))


def tikhonov_gap(model: GaussianFieldModel, probe_count: int, rng_seed, epsilon: float = 1e-3) -> float:
    """Worst J(mean) - J(mean + epsilon * delta) over random unit-RKHS-norm directions.

    The posterior mean minimizes J, so the result is <= 0 up to round-off.
    Directions live in the span of the kernel sections at the data points.
    """
    if model.n_measurements < 1:
        raise ValueError("need at least one measurement")
    if probe_count < 1:
        raise ValueError("probe_count must be positive")
    rng = np.random.default_rng(rng_seed)
    X = model.locations
    K = model.kernel(X, X)
    c = model.coeffs
    base = tikhonov_objective(model, c)
    worst = -np.inf
    for _ in range(probe_count):
        d = rng.standard_normal(len(c))
        d /= np.sqrt(d @ K @ d)
        worst = max(worst, base - tikhonov_objective(model, c + epsilon * d))
    return float(worst)


def regularized_estimator(kernel: RadialKernel, locations, values, gamma: float, grid=None):
    """Minimizer of mean squared residual + gamma * |f|_H^2 over the RKHS.

    Its coefficients solve (K + t*gamma*I) c = y, i.e. a field model with
    noise variance t*gamma.
    """
    X = as_points(locations)
    t = len(X)
    model = GaussianFieldModel(kernel, t * gamma, grid=grid, max_measurements=max(t, 1))
    return model.add_measurements(X, values)
