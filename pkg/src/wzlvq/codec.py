"""Wyner-Ziv lattice quantizer (Lambda, kappa, s) and its matched fine-codebook variant.

The encoder sends only the coset of the fine quantization of x modulo the
coarse lattice s*kappa(Lambda); the decoder picks the member of that coset
closest to the side information y.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import ndtr, ndtri

from . import kernels
from .lattice import Lattice
from .sublattice import CosetTable, SimilarityMap, enumerate_cosets, lattice_points_within


@dataclass(frozen=True, eq=False)
class WzLvq:
    lattice: Lattice
    kappa: SimilarityMap
    s: float
    cosets: CosetTable

    def __post_init__(self):
        if not (self.s > 0 and math.isfinite(self.s)):
            raise ValueError(f"scale s must be positive and finite, got {self.s!r}")
        if self.cosets.lattice is not self.lattice or self.cosets.kappa is not self.kappa:
            raise ValueError("coset table was built for a different (lattice, kappa)")

    @property
    def dim(self) -> int:
        return self.lattice.dim

    @property
    def N(self) -> int:
        return self.cosets.size

    @cached_property
    def fine(self) -> Lattice:
        return self.lattice.scale(self.s)

    @cached_property
    def coarse(self) -> Lattice:
        return self.cosets.coarse.scale(self.s)

    @cached_property
    def rep_points(self) -> np.ndarray:
        """Embedded coset representatives in s*Lambda, row k for coset k."""
        return self.fine.embed(self.cosets.representatives)

    def __repr__(self) -> str:
        return f"WzLvq({self.lattice.name}, N={self.N}, s={self.s:.6g})"


def make_wzlvq(lattice: Lattice, kappa: SimilarityMap, s: float, *, max_index: int = 10**6) -> WzLvq:
    return WzLvq(lattice, kappa, float(s), enumerate_cosets(lattice, kappa, max_index=max_index))


def _as_batch(q, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    x = np.atleast_2d(x)
    if x.shape[-1] != q.dim:
        raise ValueError(f"expected vectors of dimension {q.dim}, got {x.shape[-1]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("input has non-finite components")
    return x, single


def encode(q: WzLvq, x) -> np.ndarray:
    """Coset index of Q_{s Lambda}(x); equals the two-step form by shift equivariance."""
    x, single = _as_batch(q, x)
    idx = q.cosets.index_of(q.fine.nearest_coords(x))
    return idx[0] if single else idx


def encode_two_step(q: WzLvq, x) -> np.ndarray:
    """Q_{s Lambda}(x - Q_{s kappa Lambda}(x)), reported as a coset index."""
    x, single = _as_batch(q, x)
    folded = x - q.coarse.nearest(x)
    idx = q.cosets.index_of(q.fine.nearest_coords(folded))
    return idx[0] if single else idx


def _check_index(q, idx):
    idx = np.asarray(idx)
    if idx.dtype.kind not in "iu":
        raise ValueError("coset index must be an integer")
    if np.any(idx < 0) or np.any(idx >= q.N):
        raise ValueError(f"coset index outside 0..{q.N - 1}")
    return idx.astype(np.int64)


def decode_coords(q: WzLvq, idx, y) -> np.ndarray:
    """Lambda-coordinates of the member of coset ``idx`` nearest to y."""
    y, single = _as_batch(q, y)
    idx = np.broadcast_to(_check_index(q, idx), (y.shape[0],))
    reps = q.cosets.representatives[idx]
    shift = q.coarse.nearest_coords(y - q.fine.embed(reps))
    out = reps + shift @ q.cosets.int_matrix.T
    return out[0] if single else out


def decode(q: WzLvq, idx, y) -> np.ndarray:
    return q.fine.embed(decode_coords(q, idx, y))


def scale_schedule(rho: float, sigma_x: float) -> float:
    """s = t ln(1/t) with t = sigma_x sqrt(1 - rho^2).

    s -> 0 while s/t -> infinity as rho -> 1.  Only defined for t < 1.
    """
    if not abs(rho) < 1:
        raise ValueError(f"|rho| must be < 1, got {rho!r}")
    if not sigma_x > 0:
        raise ValueError("sigma_x must be positive")
    t = sigma_x * math.sqrt(1.0 - rho * rho)
    if t >= 1.0:
        raise ValueError(f"sigma_x*sqrt(1-rho^2) = {t:.4g} >= 1: outside the high-correlation regime")
    return t * math.log(1.0 / t)


def rho_for_gap(gap: float) -> float:
    """The rho with sqrt(1 - rho^2) = gap."""
    if not 0 < gap < 1:
        raise ValueError("gap must lie in (0, 1)")
    return math.sqrt(1.0 - gap * gap)


# -- matched fine codebook ---------------------------------------------------


@dataclass(frozen=True, eq=False)
class MatchedFineCodebook:
    """N reconstruction points inside the zero cell of s*kappa(Lambda).

    ``shifts`` are the coarse-lattice translates searched by the encoder; they
    cover every translate that can be nearest to a point of the cell.
    """

    q: WzLvq
    points: np.ndarray
    history: tuple = ()

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, ndmin=2)
        if pts.shape != (self.q.N, self.q.dim):
            raise ValueError(f"codebook must have shape {(self.q.N, self.q.dim)}, got {pts.shape}")
        if np.any(self.q.coarse.nearest_coords(pts) != 0):
            raise ValueError("codebook points must lie in the zero coarse cell")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def N(self) -> int:
        return self.points.shape[0]

    @cached_property
    def shift_coords(self) -> np.ndarray:
        # two cell points are at most 2*rc apart, so a useful translate v has
        # |v| <= 2*|x - p| <= 4*rc; rc <= half the sum of basis norms
        coarse = self.q.coarse
        rc = 0.5 * np.linalg.norm(coarse.basis, axis=0).sum()
        coords = lattice_points_within(coarse, (4.0 * rc) ** 2)
        return coords[np.lexsort(coords.T[::-1])]

    @cached_property
    def shifts(self) -> np.ndarray:
        return self.q.coarse.embed(self.shift_coords)

    @cached_property
    def expanded(self) -> np.ndarray:
        """Rows ordered by (codebook index, shift) so ties go to the smaller index."""
        e = self.points[:, None, :] + self.shifts[None, :, :]
        return np.ascontiguousarray(e.reshape(-1, self.q.dim))


def codebook_from_cosets(q: WzLvq) -> MatchedFineCodebook:
    """The untrained codebook: the lattice coset representatives themselves."""
    return MatchedFineCodebook(q, q.rep_points)


def select_matched(q: WzLvq, cb: MatchedFineCodebook, x):
    """Nearest codebook translate p_j + v to each row of x.

    Returns (j, coarse coordinates of v); x must already be a 2-D batch.
    """
    base = q.coarse.nearest_coords(x)
    folded = x - q.coarse.embed(base)
    k = kernels.nearest_codebook(np.ascontiguousarray(folded), cb.expanded)
    m = cb.shift_coords.shape[0]
    return k // m, base + cb.shift_coords[k % m]


def encode_matched(q: WzLvq, cb: MatchedFineCodebook, x) -> np.ndarray:
    x, single = _as_batch(q, x)
    idx, _ = select_matched(q, cb, x)
    return idx[0] if single else idx


def decode_matched_coords(q: WzLvq, cb: MatchedFineCodebook, idx, y) -> np.ndarray:
    """Coarse-lattice coordinates of the translate of p_idx nearest to y."""
    y, single = _as_batch(q, y)
    idx = np.broadcast_to(_check_index(q, idx), (y.shape[0],))
    out = q.coarse.nearest_coords(y - cb.points[idx])
    return out[0] if single else out


def decode_matched(q: WzLvq, cb: MatchedFineCodebook, idx, y) -> np.ndarray:
    """p_idx + Q_{s kappa Lambda}(y - p_idx): the codebook translate nearest to y."""
    shift = decode_matched_coords(q, cb, idx, y)
    return cb.points[np.asarray(idx)] + q.coarse.embed(shift)


def _lloyd_step(points, samples):
    """One nearest-point / centroid update; returns (new points, distortion of ``points``)."""
    lab = kernels.nearest_codebook(np.ascontiguousarray(samples), np.ascontiguousarray(points))
    diff = samples - points[lab]
    dist = math.fsum(np.einsum("ij,ij->i", diff, diff)) / samples.size
    counts = np.bincount(lab, minlength=points.shape[0])
    sums = np.zeros_like(points)
    np.add.at(sums, lab, samples)
    new = points.copy()
    live = counts > 0
    new[live] = sums[live] / counts[live, None]
    for j in np.flatnonzero(~live):
        resid = samples - new[lab]
        far = int(np.argmax(np.einsum("ij,ij->i", resid, resid)))
        new[j] = samples[far]
        lab[far] = j
    return new, dist


class _SortedLloyd:
    """Scalar Lloyd steps from prefix sums of the sorted samples: O(N log T) per step."""

    def __init__(self, samples):
        self.samples = samples
        xs = np.sort(samples[:, 0])
        self.xs = xs
        self.c1 = np.concatenate([[0.0], np.cumsum(xs)])
        self.c2 = np.concatenate([[0.0], np.cumsum(xs * xs)])

    def step(self, points):
        order = np.argsort(points[:, 0], kind="stable")
        y = points[order, 0]
        # a sample equal to a midpoint goes to the lower cell, as in the generic path
        cut = np.searchsorted(self.xs, 0.5 * (y[1:] + y[:-1]), side="right")
        edges = np.concatenate([[0], cut, [self.xs.size]])
        n = np.diff(edges)
        if np.any(n == 0):
            return _lloyd_step(points, self.samples)
        s1 = self.c1[edges[1:]] - self.c1[edges[:-1]]
        s2 = self.c2[edges[1:]] - self.c2[edges[:-1]]
        dist = math.fsum(s2 - 2 * y * s1 + n * y * y) / self.xs.size
        new = np.empty_like(points)
        new[order, 0] = s1 / n
        return new, dist


def _initial_points(q, samples, sd):
    """Coset representatives pulled into the sample cloud.

    In one dimension the ranks of the representatives are mapped through the
    quantiles of N(0, 3 sd^2), the high-rate optimal point density f^(1/3);
    starting from a uniform grid, scalar Lloyd needs O(N^2) steps to move
    points from the tails to the centre.  Elsewhere (and when the cell is too
    narrow for that map) the representatives are shrunk by a common factor.
    """
    reps = q.rep_points
    span = np.max(np.abs(reps))
    if q.dim == 1:
        half_cell = 0.5 * abs(q.coarse.basis[0, 0])
        rank = np.argsort(np.argsort(reps[:, 0], kind="stable"), kind="stable")
        pts = math.sqrt(3.0) * sd * ndtri((rank + 0.5) / q.N)
        if np.max(np.abs(pts)) < half_cell:
            return pts[:, None]
    return reps * min(1.0, np.max(np.abs(samples)) / span)


def train_matched_fine(q: WzLvq, rho: float, sigma_x: float, trials: int, iters: int,
                       seed: int) -> MatchedFineCodebook:
    """Lloyd iterations on samples of f(X | Y=0) folded into the zero coarse cell.

    X | Y=0 has iid N(0, sigma_x^2 (1 - rho^2)) components.  The start is the
    coset representatives shrunk toward the sample spread.  An empty cell is
    re-seeded at the sample farthest from its current centroid.  ``history``
    holds the per-component training distortion before each update and after
    the last one.
    """
    if trials < 1 or iters < 0:
        raise ValueError("trials must be positive and iters non-negative")
    if not abs(rho) < 1:
        raise ValueError(f"|rho| must be < 1, got {rho!r}")
    sd = sigma_x * math.sqrt(1.0 - rho * rho)
    rng = np.random.default_rng(seed)
    samples = sd * rng.standard_normal((trials, q.dim))
    samples = samples - q.coarse.nearest(samples)
    if q.N == 1:
        return MatchedFineCodebook(q, np.zeros((1, q.dim)), (math.fsum(samples.ravel() ** 2) / samples.size,))

    points = _initial_points(q, samples, sd)
    step = _SortedLloyd(samples).step if q.dim == 1 else (lambda p: _lloyd_step(p, samples))
    history = []
    for _ in range(iters):
        points, dist = step(points)
        history.append(dist)
    history.append(step(points)[1])
    return MatchedFineCodebook(q, points, tuple(history))


# -- classical scalar quantizer ---------------------------------------------


@dataclass(frozen=True)
class ScalarQuantizer:
    levels: np.ndarray
    thresholds: np.ndarray
    mse: float

    def encode(self, x) -> np.ndarray:
        return np.searchsorted(self.thresholds, np.asarray(x, dtype=np.float64), side="left")

    def decode(self, idx) -> np.ndarray:
        return self.levels[np.asarray(idx)]


def _gauss_cell_moments(a, b):
    """Mass, first and second moments of N(0,1) on [a, b] (infinite ends allowed)."""
    def pdf_terms(t):
        fin = np.isfinite(t)
        f = np.zeros_like(t)
        f[fin] = np.exp(-0.5 * t[fin] ** 2) / math.sqrt(2 * math.pi)
        tf = np.zeros_like(t)
        tf[fin] = t[fin] * f[fin]
        return f, tf

    # upper-tail differences keep precision for cells far in the positive tail
    mass = np.where(a > 0, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))
    fa, ta = pdf_terms(a)
    fb, tb = pdf_terms(b)
    return mass, fa - fb, mass + ta - tb


def lloyd_max_gaussian(k: int, sigma: float, *, tol: float = 1e-10, max_iter: int = 2000) -> ScalarQuantizer:
    """Fixed-rate k-level MSE-optimal quantizer for N(0, sigma^2), from exact cell moments.

    Starts from the companded point density proportional to f^(1/3), which
    for a Gaussian is N(0, 3 sigma^2).
    """
    if k < 1:
        raise ValueError("need at least one level")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    levels, thresholds, mse = _unit_lloyd_max(int(k), float(tol), int(max_iter))
    return ScalarQuantizer(sigma * levels, sigma * thresholds, sigma * sigma * mse)


@functools.lru_cache(maxsize=32)
def _unit_lloyd_max(k, tol, max_iter):
    if k == 1:
        return np.zeros(1), np.zeros(0), 1.0
    y = math.sqrt(3.0) * ndtri((np.arange(k) + 0.5) / k)
    for _ in range(max_iter):
        t = 0.5 * (y[1:] + y[:-1])
        a = np.concatenate([[-np.inf], t])
        b = np.concatenate([t, [np.inf]])
        mass, m1, _ = _gauss_cell_moments(a, b)
        new = m1 / mass
        done = np.max(np.abs(new - y)) < tol
        y = new
        if done:
            break
    t = 0.5 * (y[1:] + y[:-1])
    a = np.concatenate([[-np.inf], t])
    b = np.concatenate([t, [np.inf]])
    mass, m1, m2 = _gauss_cell_moments(a, b)
    mse = math.fsum(m2 - 2 * y * m1 + y * y * mass)
    for arr in (y, t):
        arr.setflags(write=False)
    return y, t, mse
