"""Lattices, scaling, nearest-point quantization and Voronoi-cell constants."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np

from . import kernels

A2_BASIS = np.array([[1.0, 0.5], [0.0, math.sqrt(3.0) / 2.0]])


class LatticePoint(NamedTuple):
    coords: np.ndarray
    embedding: np.ndarray


@dataclass(frozen=True, eq=False)
class Lattice:
    """Integer span of the columns of ``basis``.

    Points are carried as integer coordinate arrays; ``embed`` maps them to
    R^n.  Batched methods take ``(m, n)`` arrays, single vectors ``(n,)``.
    """

    basis: np.ndarray
    name: str = "custom"
    det_normalized: bool = False

    def __post_init__(self):
        basis = np.array(self.basis, dtype=np.float64, ndmin=2)
        if basis.shape[0] != basis.shape[1]:
            raise ValueError(f"basis must be square, got shape {basis.shape}")
        if not np.all(np.isfinite(basis)):
            raise ValueError("basis has non-finite entries")
        det = abs(np.linalg.det(basis))
        scale = np.prod(np.linalg.norm(basis, axis=0))
        if det <= 1e-12 * scale:
            raise ValueError("basis vectors are linearly dependent")
        if self.det_normalized and abs(det - 1.0) > 1e-12:
            raise ValueError(f"det_normalized lattice has |det| = {det!r}")
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @cached_property
    def volume(self) -> float:
        return float(abs(np.linalg.det(self.basis)))

    @cached_property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.basis)

    @cached_property
    def is_diagonal(self) -> bool:
        return bool(np.all(self.basis == np.diag(np.diag(self.basis))))

    @cached_property
    def search_radius(self) -> int:
        # |c* - round(V^-1 x)|_inf <= ||V^-1||_2 * (1/2) sum ||v_i|| + 1/2
        inv_norm = np.linalg.norm(self.inverse, 2)
        half_diag = 0.5 * np.linalg.norm(self.basis, axis=0).sum()
        return int(math.ceil(inv_norm * half_diag + 0.5 - 1e-12))

    @cached_property
    def _offsets(self) -> np.ndarray:
        r = self.search_radius
        grid = itertools.product(range(-r, r + 1), repeat=self.dim)
        return np.ascontiguousarray(np.array(list(grid), dtype=np.int64))

    @cached_property
    def _tie_tol(self) -> float:
        return 1e-10 * float(np.mean(np.sum(self.basis**2, axis=0)))

    def embed(self, coords) -> np.ndarray:
        coords = np.asarray(coords)
        return coords @ self.basis.T

    def nearest_coords(self, x) -> np.ndarray:
        """Integer coordinates of Q(x); ties go to the lexicographically smallest."""
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        if pts.shape[-1] != self.dim:
            raise ValueError(f"expected vectors of dimension {self.dim}, got {pts.shape[-1]}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("input has non-finite components")
        if self.is_diagonal:
            t = pts / np.diag(self.basis)
            out = np.ceil(t - 0.5).astype(np.int64)
        else:
            out = kernels.nearest_box(
                np.ascontiguousarray(pts), np.ascontiguousarray(self.basis),
                np.ascontiguousarray(self.inverse), self._offsets, self._tie_tol)
        return out[0] if single else out

    def nearest(self, x) -> np.ndarray:
        return self.embed(self.nearest_coords(x))

    def residual(self, x) -> np.ndarray:
        """x - Q(x): fold x into the Voronoi cell of the origin."""
        x = np.asarray(x, dtype=np.float64)
        return x - self.nearest(x)

    def scale(self, s: float) -> "Lattice":
        if not s > 0:
            raise ValueError(f"scale must be positive, got {s!r}")
        return Lattice(self.basis * s, name=f"{s:g}*{self.name}")

    def __repr__(self) -> str:
        return f"Lattice({self.name!r}, dim={self.dim}, volume={self.volume:.6g})"


def make_lattice(spec, n: int | None = None, *, normalize: bool = False) -> Lattice:
    """Build ``Z^n`` (``"Z"``, ``"Z2"``, ``"Zn"`` with ``n``), ``"A2"``, or a lattice from a basis.

    ``normalize`` rescales the basis to unit determinant.
    """
    if isinstance(spec, str):
        key = spec.upper()
        if key == "A2":
            basis, name = A2_BASIS, "A2"
        elif key.startswith("Z"):
            tail = key[1:]
            if tail in ("", "N"):
                dim = 1 if n is None else n
            else:
                dim = int(tail)
            if dim < 1:
                raise ValueError("dimension must be positive")
            basis, name = np.eye(dim), f"Z{dim}"
        else:
            raise ValueError(f"unknown lattice {spec!r}")
    else:
        basis, name = np.array(spec, dtype=np.float64, ndmin=2), "custom"
    if normalize:
        det = abs(np.linalg.det(basis))
        if det <= 0:
            raise ValueError("basis is singular")
        basis = basis / det ** (1.0 / basis.shape[0])
        return Lattice(basis, name=name, det_normalized=True)
    return Lattice(basis, name=name)


def nearest_point(lattice: Lattice, x) -> LatticePoint:
    coords = lattice.nearest_coords(np.asarray(x, dtype=np.float64).reshape(-1))
    return LatticePoint(coords, lattice.embed(coords))


def scale(lattice: Lattice, s: float) -> Lattice:
    return lattice.scale(s)


def voronoi_volume(lattice: Lattice) -> float:
    return lattice.volume


def sample_voronoi(lattice: Lattice, size: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples from the Voronoi cell of the origin.

    Uniform points of the fundamental parallelepiped, folded by x -> x - Q(x),
    are uniform on the cell since both regions tile space under the lattice.
    """
    u = rng.random((size, lattice.dim))
    return lattice.residual(lattice.embed(u))


def second_moment_mc(lattice: Lattice, trials: int, seed: int, *, batch: int = 1 << 17) -> dict:
    """Monte Carlo normalized second moment G of the Voronoi cell, with its standard error."""
    if trials < 10_000:
        raise ValueError("second_moment_mc needs at least 1e4 trials")
    n = lattice.dim
    norm = lattice.volume ** (2.0 / n)
    seeds = np.random.SeedSequence(seed).spawn(-(-trials // batch))
    total = total_sq = 0.0
    done = 0
    for ss in seeds:
        m = min(batch, trials - done)
        e = sample_voronoi(lattice, m, np.random.default_rng(ss))
        g = np.einsum("ij,ij->i", e, e) / n / norm
        total += math.fsum(g)
        total_sq += math.fsum(g * g)
        done += m
    mean = total / trials
    var = max(total_sq / trials - mean * mean, 0.0)
    return {"G": mean, "stderr": math.sqrt(var / trials)}
