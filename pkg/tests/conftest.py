"""Shared fixtures and independent oracles for the test suite.

The dense GP oracle below intentionally avoids the package's linear
algebra: explicit kernel loops and ``np.linalg.solve`` on the full Gram
matrix, so it can certify the production Cholesky path.
"""

from __future__ import annotations

import math

import numpy as np
import pytest

from bilbao.gp import Dataset, GPModel, KernelConfig


def dense_kernel(family: str, lengthscales, output_scale: float, a, b) -> float:
    r2 = 0.0
    for i in range(len(a)):
        r2 += ((a[i] - b[i]) / lengthscales[i]) ** 2
    if family == "squared_exponential":
        return output_scale * math.exp(-0.5 * r2)
    r = math.sqrt(r2)
    return output_scale * (1.0 + math.sqrt(5) * r + 5.0 * r2 / 3.0) * math.exp(-math.sqrt(5) * r)


class DensePosteriorOracle:
    """Direct evaluation of the GP posterior closed forms via np.linalg.solve."""

    def __init__(self, gp: GPModel):
        cfg = gp.kernel
        X = gp.dataset.points
        n = X.shape[0]
        self.cfg = cfg
        self.X = X
        self.shift = gp.shift
        self.scale = gp.scale
        K = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                K[i, j] = dense_kernel(
                    cfg.family, cfg.lengthscales, cfg.output_scale, X[i], X[j]
                )
        self.K_eps = K + gp.noise * np.eye(n)
        y_std = (gp.dataset.values - gp.shift) / gp.scale
        self.w = np.linalg.solve(self.K_eps, y_std - cfg.constant_mean)

    def _kvec(self, x) -> np.ndarray:
        cfg = self.cfg
        return np.array(
            [
                dense_kernel(cfg.family, cfg.lengthscales, cfg.output_scale, x, xi)
                for xi in self.X
            ]
        )

    def mean(self, x) -> float:
        mu_std = self.cfg.constant_mean + self._kvec(x) @ self.w
        return self.shift + self.scale * mu_std

    def cov(self, x, x2) -> float:
        kx = self._kvec(x)
        kx2 = self._kvec(x2)
        prior = dense_kernel(
            self.cfg.family, self.cfg.lengthscales, self.cfg.output_scale, x, x2
        )
        return self.scale**2 * (prior - kx @ np.linalg.solve(self.K_eps, kx2))

    def var(self, x) -> float:
        return self.cov(x, x)


def random_fixed_gp(
    rng: np.random.Generator,
    n: int,
    d: int,
    family: str = "matern52",
    noise: float = 1e-4,
) -> GPModel:
    """A GPModel with hand-fixed hyperparameters (no fitting, no jitter)."""
    points = rng.random((n, d))
    values = rng.normal(size=n)
    kernel = KernelConfig(
        family=family,
        lengthscales=rng.uniform(0.2, 1.5, size=d),
        output_scale=rng.uniform(0.5, 2.0),
        constant_mean=rng.normal(scale=0.3),
    )
    gp = GPModel(Dataset(points, values), kernel, noise)
    assert gp.jitter == 0.0, "oracle comparisons require a jitter-free factorization"
    return gp


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
