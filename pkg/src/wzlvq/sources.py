"""Jointly Gaussian source pairs and the Brownian sensor field."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GaussianPairSpec:
    sigma_x: float
    sigma_y: float
    rho: float
    n: int = 1

    def __post_init__(self):
        if not (self.sigma_x > 0 and self.sigma_y > 0):
            raise ValueError("standard deviations must be positive")
        if not abs(self.rho) < 1:
            raise ValueError(f"|rho| must be < 1 for a positive definite covariance, got {self.rho!r}")
        if self.n < 1:
            raise ValueError("dimension must be positive")

    @property
    def covariance(self) -> np.ndarray:
        c = self.rho * self.sigma_x * self.sigma_y
        return np.array([[self.sigma_x**2, c], [c, self.sigma_y**2]])

    @property
    def conditional_var(self) -> float:
        """Per-component variance of X given Y."""
        return self.sigma_x**2 * (1.0 - self.rho**2)


def sample_pair(spec: GaussianPairSpec, rng: np.random.Generator, size: int | None = None):
    """Draw (x, y) with iid components; y = rho (sy/sx) x + sy sqrt(1-rho^2) w.

    Returns arrays of shape ``(n,)`` or ``(size, n)``.
    """
    shape = (spec.n,) if size is None else (size, spec.n)
    x = spec.sigma_x * rng.standard_normal(shape)
    w = rng.standard_normal(shape)
    y = spec.rho * (spec.sigma_y / spec.sigma_x) * x + spec.sigma_y * math.sqrt(1.0 - spec.rho**2) * w
    return x, y


@dataclass(frozen=True, eq=False)
class BrownianField:
    """Samples X_{m/n}(k): row k is one time slot, column m-1 is node m."""

    n: int
    sigma: float
    samples: np.ndarray
    seed: int | None = None

    @property
    def slots(self) -> int:
        return self.samples.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return np.arange(1, self.n + 1) / self.n

    def node(self, m: int) -> np.ndarray:
        """All slots of node m (1-based); node 0 is the pinned origin X_0 = 0."""
        if m == 0:
            return np.zeros(self.slots)
        return self.samples[:, m - 1]


def gen_brownian_field(n: int, sigma: float, slots: int, seed: int) -> BrownianField:
    """Cumulative sums of iid N(0, sigma^2/n) increments, independent across slots."""
    if n < 1 or slots < 1:
        raise ValueError("n and slots must be positive")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    rng = np.random.default_rng(seed)
    inc = (sigma / math.sqrt(n)) * rng.standard_normal((slots, n))
    x = np.cumsum(inc, axis=1)
    x.setflags(write=False)
    return BrownianField(n, float(sigma), x, seed)


def save_field(field: BrownianField, path) -> None:
    """Write a field to ``.npz`` (exact) or ``.csv`` (one row per slot)."""
    path = str(path)
    if path.endswith(".npz"):
        np.savez(path, n=field.n, sigma=field.sigma, samples=field.samples,
                 seed=-1 if field.seed is None else field.seed)
    elif path.endswith(".csv"):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["slot"] + [f"x_{m}" for m in range(1, field.n + 1)])
            for k, row in enumerate(field.samples):
                w.writerow([k] + [repr(float(v)) for v in row])
    else:
        raise ValueError("field dumps must end in .npz or .csv")


def load_field(path, sigma: float | None = None) -> BrownianField:
    path = str(path)
    if path.endswith(".npz"):
        with np.load(path) as z:
            seed = int(z["seed"])
            return BrownianField(int(z["n"]), float(z["sigma"]), z["samples"].copy(),
                                 None if seed < 0 else seed)
    if path.endswith(".csv"):
        if sigma is None:
            raise ValueError("a CSV dump does not record sigma; pass it explicitly")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)[:, 1:]
        return BrownianField(data.shape[1], float(sigma), data)
    raise ValueError("field dumps must end in .npz or .csv")
