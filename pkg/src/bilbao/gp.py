"""Exact Gaussian-process regression over the joint decision space.

Models are fit on z-scored observations with a constant mean and an ARD
kernel (Matern-5/2 by default).  The posterior follows the usual closed
forms

    mean(x)    = m + k(x, X) [K + noise I]^-1 (y - m)
    cov(x, x') = k(x, x') - k(x, X) [K + noise I]^-1 k(X, x')

evaluated through a cached Cholesky factor of the Gram matrix.  Besides
prediction, the module provides the one-step fantasy coefficients used by
the knowledge-gradient acquisition and hyperparameter fitting by
multi-start L-BFGS-B on the log marginal likelihood.

All public predictions are de-standardized back to raw units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular as _scipy_solve_triangular
from scipy.linalg.lapack import dpotrs
from scipy.optimize import minimize


def solve_triangular(a, b, lower=False):
    # all inputs are internally generated and finite; skip scipy's validation
    return _scipy_solve_triangular(a, b, lower=lower, check_finite=False)

from .errors import ConfigurationError, DataError, DegenerateCandidateError, NumericalError
from .rng import jittered_cholesky

MATERN52 = "matern52"
SQUARED_EXPONENTIAL = "squared_exponential"
KERNEL_FAMILIES = (MATERN52, SQUARED_EXPONENTIAL)

NOISE_FLOOR = 1e-6
LENGTHSCALE_BOUNDS = (1e-3, 10.0)
OUTPUT_SCALE_BOUNDS = (1e-3, 1e3)
NOISE_BOUNDS = (NOISE_FLOOR, 1e-1)
MEAN_BOUNDS = (-5.0, 5.0)

_SQRT5 = math.sqrt(5.0)


@dataclass(frozen=True)
class Dataset:
    """Observed joint points and raw objective values.

    points : (n, d) array with every coordinate in the unit box
    values : (n,) array of raw observations
    """

    points: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        points = np.atleast_2d(np.asarray(self.points, dtype=float))
        values = np.asarray(self.values, dtype=float).ravel()
        if points.shape[0] != values.shape[0]:
            raise DataError(
                f"points ({points.shape[0]}) and values ({values.shape[0]}) differ in length"
            )
        if points.ndim != 2 or points.shape[1] < 1:
            raise DataError("points must be an (n, d) array with d >= 1")
        if points.size and (points.min() < -1e-9 or points.max() > 1 + 1e-9):
            raise DataError("coordinates must lie in the unit box")
        object.__setattr__(self, "points", np.clip(points, 0.0, 1.0))
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def append(self, point: np.ndarray, value: float) -> "Dataset":
        point = np.asarray(point, dtype=float).reshape(1, -1)
        return Dataset(
            np.vstack([self.points, point]),
            np.append(self.values, float(value)),
        )


@dataclass(frozen=True)
class KernelConfig:
    """Stationary kernel with ARD lengthscales plus a constant mean.

    ``output_scale`` is the prior variance (not a standard deviation); the
    constant mean and output scale live in whatever units the model's
    values were given in (standardized units for fitted models).
    """

    family: str = MATERN52
    lengthscales: np.ndarray = None
    output_scale: float = 1.0
    constant_mean: float = 0.0

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise ConfigurationError(f"unknown kernel family {self.family!r}")
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if np.any(ls <= 0):
            raise ConfigurationError("lengthscales must be strictly positive")
        if self.output_scale <= 0:
            raise ConfigurationError("output_scale must be strictly positive")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "output_scale", float(self.output_scale))
        object.__setattr__(self, "constant_mean", float(self.constant_mean))


def _scaled_sqdist(A: np.ndarray, B: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    a = A / lengthscales
    b = B / lengthscales
    sq = np.sum(a * a, axis=1)[:, None] + np.sum(b * b, axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.maximum(sq, 0.0)


def kernel_matrix(config: KernelConfig, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Cross-covariance matrix k(A, B) of shape (len(A), len(B))."""
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    sq = _scaled_sqdist(A, B, config.lengthscales)
    if config.family == SQUARED_EXPONENTIAL:
        return config.output_scale * np.exp(-0.5 * sq)
    r = np.sqrt(sq)
    return config.output_scale * (1.0 + _SQRT5 * r + (5.0 / 3.0) * sq) * np.exp(-_SQRT5 * r)


def _standardize(values: np.ndarray) -> tuple[np.ndarray, float, float]:
    shift = float(np.mean(values))
    scale = float(np.std(values))
    if scale < 1e-12:
        scale = 1.0
    return (values - shift) / scale, shift, scale


class GPModel:
    """Fitted GP surrogate: immutable after construction.

    Use :func:`fit` to learn hyperparameters from data, or build directly
    with fixed hyperparameters (no standardization applied in that case).
    """

    def __init__(
        self,
        dataset: Dataset,
        kernel: KernelConfig,
        noise: float,
        shift: float = 0.0,
        scale: float = 1.0,
    ):
        if kernel.lengthscales.shape[0] != dataset.d:
            raise DataError(
                f"kernel has {kernel.lengthscales.shape[0]} lengthscales for d={dataset.d}"
            )
        if scale <= 0:
            raise ConfigurationError("standardization scale must be positive")
        self.dataset = dataset
        self.kernel = kernel
        self.noise = max(float(noise), NOISE_FLOOR)
        self.shift = float(shift)
        self.scale = float(scale)
        self._X = dataset.points
        self._y_std = (dataset.values - self.shift) / self.scale
        K = kernel_matrix(kernel, self._X, self._X)
        K[np.diag_indices_from(K)] += self.noise
        self._L, self.jitter = jittered_cholesky(K)
        resid = self._y_std - kernel.constant_mean
        self._alpha = solve_triangular(
            self._L.T, solve_triangular(self._L, resid, lower=True), lower=False
        )

    # -- prediction -------------------------------------------------------

    @property
    def d(self) -> int:
        return self.dataset.d

    @property
    def prior_mean(self) -> float:
        """Prior constant mean in raw units."""
        return self.shift + self.scale * self.kernel.constant_mean

    @property
    def prior_variance(self) -> float:
        """Prior variance in raw units."""
        return self.scale**2 * self.kernel.output_scale

    def _check_dim(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.d:
            raise DataError(f"query dimension {X.shape[1]} does not match d={self.d}")
        return X

    def _cross_solve(self, X: np.ndarray) -> np.ndarray:
        """L^-1 k(X_train, X), shape (n, len(X))."""
        Kx = kernel_matrix(self.kernel, self._X, X)
        return solve_triangular(self._L, Kx, lower=True)

    def posterior(self, x: np.ndarray) -> tuple[float, float]:
        """Posterior mean and variance at one point, in raw units."""
        means, variances = self.posterior_batch(np.atleast_2d(x))
        return float(means[0]), float(variances[0])

    def posterior_batch(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        X = self._check_dim(X)
        Kx = kernel_matrix(self.kernel, self._X, X)
        V = solve_triangular(self._L, Kx, lower=True)
        mean_std = self.kernel.constant_mean + Kx.T @ self._alpha
        var_std = np.maximum(self.kernel.output_scale - np.sum(V * V, axis=0), 0.0)
        return self.shift + self.scale * mean_std, self.scale**2 * var_std

    def posterior_cov(self, x: np.ndarray, x2: np.ndarray) -> float:
        """Posterior covariance between two points, in raw units."""
        X = self._check_dim(np.vstack([np.atleast_2d(x), np.atleast_2d(x2)]))
        V = self._cross_solve(X)
        k12 = kernel_matrix(self.kernel, X[:1], X[1:])[0, 0]
        return self.scale**2 * float(k12 - V[:, 0] @ V[:, 1])

    def posterior_joint(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean vector and full covariance matrix, raw units."""
        X = self._check_dim(X)
        Kx = kernel_matrix(self.kernel, self._X, X)
        V = solve_triangular(self._L, Kx, lower=True)
        mean_std = self.kernel.constant_mean + Kx.T @ self._alpha
        cov_std = kernel_matrix(self.kernel, X, X) - V.T @ V
        return self.shift + self.scale * mean_std, self.scale**2 * cov_std

    def posterior_mean_grad(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and its input gradient at each row of X, raw units."""
        X = self._check_dim(X)
        cfg = self.kernel
        sq = _scaled_sqdist(X, self._X, cfg.lengthscales)
        if cfg.family == SQUARED_EXPONENTIAL:
            k = cfg.output_scale * np.exp(-0.5 * sq)
            coef = -k
        else:
            r = np.sqrt(sq)
            expo = np.exp(-_SQRT5 * r)
            k = cfg.output_scale * (1.0 + _SQRT5 * r + (5.0 / 3.0) * sq) * expo
            coef = -(5.0 / 3.0) * cfg.output_scale * (1.0 + _SQRT5 * r) * expo
        mean_std = cfg.constant_mean + k @ self._alpha
        # grad_pj = sum_i coef_pi * alpha_i * (X_pj - Xtrain_ij) / ls_j^2
        w = coef * self._alpha[None, :]
        grads = (w.sum(axis=1)[:, None] * X - w @ self._X) / (cfg.lengthscales**2)[None, :]
        return self.shift + self.scale * mean_std, self.scale * grads

    # -- one-step updates --------------------------------------------------

    def fantasy_coefficients(
        self, X_disc: np.ndarray, x_cand: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Current means and additive fantasy coefficients at ``X_disc``.

        After observing the candidate, the posterior mean at each
        discretization point becomes ``mu + sigma_tilde * Z`` with Z a
        standard normal.  Both outputs are in raw units.
        """
        X_disc = self._check_dim(X_disc)
        x_cand = np.asarray(x_cand, dtype=float).reshape(1, -1)
        stack = np.vstack([X_disc, x_cand])
        Kx = kernel_matrix(self.kernel, self._X, stack)
        V = solve_triangular(self._L, Kx, lower=True)
        mean_std = self.kernel.constant_mean + Kx.T[:-1] @ self._alpha
        cov_to_cand = kernel_matrix(self.kernel, X_disc, x_cand)[:, 0] - V[:, :-1].T @ V[:, -1]
        var_cand = max(self.kernel.output_scale - V[:, -1] @ V[:, -1], 0.0)
        denom_sq = var_cand + self.noise
        if denom_sq <= 0.0:
            raise DegenerateCandidateError(
                "candidate has zero predictive variance and zero noise"
            )
        sigma_tilde = cov_to_cand / math.sqrt(denom_sq)
        return self.shift + self.scale * mean_std, self.scale * sigma_tilde

    def fantasy_coefficients_many(
        self, X_disc: np.ndarray, X_cand: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized :meth:`fantasy_coefficients` over a candidate batch.

        Returns the shared means (m,) and an (m, c) matrix whose column j
        holds the fantasy coefficients induced by candidate j.
        """
        X_disc = self._check_dim(X_disc)
        X_cand = self._check_dim(X_cand)
        Kx_disc = kernel_matrix(self.kernel, self._X, X_disc)
        V_disc = solve_triangular(self._L, Kx_disc, lower=True)
        V_cand = self._cross_solve(X_cand)
        mean_std = self.kernel.constant_mean + Kx_disc.T @ self._alpha
        cross = kernel_matrix(self.kernel, X_disc, X_cand) - V_disc.T @ V_cand
        var_cand = np.maximum(
            self.kernel.output_scale - np.sum(V_cand * V_cand, axis=0), 0.0
        )
        denom_sq = var_cand + self.noise
        if np.any(denom_sq <= 0.0):
            raise DegenerateCandidateError(
                "candidate has zero predictive variance and zero noise"
            )
        sigma_tilde = cross / np.sqrt(denom_sq)[None, :]
        return self.shift + self.scale * mean_std, self.scale * sigma_tilde

    def condition_on(self, point: np.ndarray, value: float) -> "GPModel":
        """One-step update: same hyperparameters and standardization, one more row."""
        return GPModel(
            self.dataset.append(point, value),
            self.kernel,
            self.noise,
            shift=self.shift,
            scale=self.scale,
        )

    def with_dataset(self, dataset: Dataset) -> "GPModel":
        """Same hyperparameters and standardization on a replacement dataset."""
        return GPModel(dataset, self.kernel, self.noise, shift=self.shift, scale=self.scale)


# -- marginal likelihood and fitting ---------------------------------------


def _unpack_theta(theta: np.ndarray, d: int) -> tuple[np.ndarray, float, float, float]:
    lengthscales = np.exp(theta[:d])
    output_scale = math.exp(theta[d])
    noise = math.exp(theta[d + 1])
    mean = theta[d + 2]
    return lengthscales, output_scale, noise, mean


def _pairwise_sq_diffs(X: np.ndarray) -> np.ndarray:
    """Per-dimension squared differences, shape (n, n, d); fixed per dataset."""
    diff = X[:, None, :] - X[None, :, :]
    return diff * diff


def _lml_and_grad_pre(
    theta: np.ndarray, D2: np.ndarray, y: np.ndarray, family: str
) -> tuple[float, np.ndarray]:
    n, _, d = D2.shape
    lengthscales, output_scale, noise, mean = _unpack_theta(theta, d)
    sq = D2 @ (1.0 / lengthscales**2)
    if family == SQUARED_EXPONENTIAL:
        K = output_scale * np.exp(-0.5 * sq)
        base = K  # d k / d log(ls_j) = k * scaled_diff_j^2
    else:
        r = np.sqrt(sq)
        expo = np.exp(-_SQRT5 * r)
        K = output_scale * (1.0 + _SQRT5 * r + (5.0 / 3.0) * sq) * expo
        base = (5.0 / 3.0) * output_scale * (1.0 + _SQRT5 * r) * expo
    K_eps = K.copy()
    K_eps[np.diag_indices_from(K_eps)] += noise
    L, _ = jittered_cholesky(K_eps)
    resid = y - mean
    # one LAPACK call covers alpha and K^-1
    rhs = np.zeros((n, n + 1), order="F")
    rhs[:, 0] = resid
    rhs[np.arange(n), np.arange(1, n + 1)] = 1.0
    solved, info = dpotrs(L, rhs, lower=1)
    if info != 0:
        raise NumericalError(f"dpotrs failed with info={info}")
    alpha = solved[:, 0]
    Kinv = solved[:, 1:]
    lml = (
        -0.5 * resid @ alpha
        - np.sum(np.log(np.diag(L)))
        - 0.5 * n * math.log(2.0 * math.pi)
    )
    W = np.outer(alpha, alpha) - Kinv

    grad = np.empty(d + 3)
    WB = W * base
    grad[:d] = 0.5 * np.einsum("ij,ijk->k", WB, D2) / lengthscales**2
    grad[d] = 0.5 * np.sum(W * K)  # d K / d log(output_scale) = K
    grad[d + 1] = 0.5 * noise * np.trace(W)
    grad[d + 2] = float(np.sum(alpha))
    return float(lml), grad


def lml_and_grad(
    theta: np.ndarray, X: np.ndarray, y: np.ndarray, family: str
) -> tuple[float, np.ndarray]:
    """Log marginal likelihood and gradient in the fitter's parameterization.

    ``theta`` is ``(log lengthscales, log output_scale, log noise, mean)``;
    ``y`` is already standardized.
    """
    return _lml_and_grad_pre(theta, _pairwise_sq_diffs(np.atleast_2d(X)), y, family)


def _default_start(d: int) -> np.ndarray:
    return np.concatenate(
        [np.full(d, math.log(0.3)), [math.log(1.0), math.log(1e-4), 0.0]]
    )


def fit(
    dataset: Dataset,
    family: str = MATERN52,
    seed: int = 0,
    n_starts: int = 8,
    standardize: bool = True,
) -> GPModel:
    """Fit hyperparameters by multi-start L-BFGS-B on the log marginal likelihood.

    Deterministic given ``seed``: start points come from a private Philox
    generator and ties break toward the earlier start.
    """
    if dataset.n == 0:
        raise ConfigurationError("cannot fit a GP to an empty dataset")
    if not np.all(np.isfinite(dataset.values)):
        raise DataError("dataset values must be finite")
    if family not in KERNEL_FAMILIES:
        raise ConfigurationError(f"unknown kernel family {family!r}")

    if standardize:
        y, shift, scale = _standardize(dataset.values)
    else:
        y, shift, scale = dataset.values.copy(), 0.0, 1.0
    X = dataset.points
    d = dataset.d

    lo = np.concatenate(
        [
            np.full(d, math.log(LENGTHSCALE_BOUNDS[0])),
            [math.log(OUTPUT_SCALE_BOUNDS[0]), math.log(NOISE_BOUNDS[0]), MEAN_BOUNDS[0]],
        ]
    )
    hi = np.concatenate(
        [
            np.full(d, math.log(LENGTHSCALE_BOUNDS[1])),
            [math.log(OUTPUT_SCALE_BOUNDS[1]), math.log(NOISE_BOUNDS[1]), MEAN_BOUNDS[1]],
        ]
    )
    bounds = list(zip(lo, hi))

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    starts = [np.clip(_default_start(d), lo, hi)]
    for _ in range(max(n_starts - 1, 0)):
        starts.append(lo + (hi - lo) * rng.random(d + 3))

    D2 = _pairwise_sq_diffs(X)

    def objective(theta):
        value, grad = _lml_and_grad_pre(theta, D2, y, family)
        return -value, -grad

    best_theta, best_lml = None, -np.inf
    for start in starts:
        result = minimize(
            objective,
            start,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": 60},
        )
        if -result.fun > best_lml:
            best_lml = -result.fun
            best_theta = result.x

    lengthscales, output_scale, noise, mean = _unpack_theta(best_theta, d)
    kernel = KernelConfig(family, lengthscales, output_scale, mean)
    return GPModel(dataset, kernel, noise, shift=shift, scale=scale)


def log_marginal_likelihood(gp: GPModel) -> float:
    """Log marginal likelihood of a model's standardized data under its kernel."""
    theta = np.concatenate(
        [
            np.log(gp.kernel.lengthscales),
            [math.log(gp.kernel.output_scale), math.log(gp.noise), gp.kernel.constant_mean],
        ]
    )
    value, _ = lml_and_grad(theta, gp._X, gp._y_std, gp.kernel.family)
    return value
