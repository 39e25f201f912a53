"""Similar sublattices, coset tables and shell counts.

A similarity map kappa satisfies kappa^T kappa = c I and kappa(L) in L; the
coarse lattice kappa(L) has index N = c^(n/2) in L.  Two constructive
families are provided: Eisenstein ideals on A2 and integer scalings on Z^n.
Any other matrix can be wrapped with :func:`similarity` and is validated
against a lattice when a coset table is built.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .lattice import Lattice


class ResourceLimitError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SimilarityMap:
    matrix: np.ndarray
    norm_c: float
    index_N: int
    unitary_part: np.ndarray

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def compose(self, other: "SimilarityMap") -> "SimilarityMap":
        """The map x -> self(other(x))."""
        return similarity(self.matrix @ other.matrix)

    def __call__(self, x) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.matrix.T


def similarity(matrix) -> SimilarityMap:
    matrix = np.array(matrix, dtype=np.float64, ndmin=2)
    n = matrix.shape[0]
    gram = matrix.T @ matrix
    c = float(np.trace(gram) / n)
    if c <= 0 or np.max(np.abs(gram - c * np.eye(n))) > 1e-9 * max(1.0, c):
        raise ValueError("matrix is not a similarity (k^T k != c I)")
    index = c ** (n / 2.0)
    if abs(index - round(index)) > 1e-6 * max(1.0, index):
        raise ValueError(f"index c^(n/2) = {index!r} is not an integer")
    u = matrix / math.sqrt(c)
    for a in (matrix, u):
        a.setflags(write=False)
    return SimilarityMap(matrix, c, int(round(index)), u)


def eisenstein_similarity(a: int, b: int) -> SimilarityMap:
    """Multiplication by a + b*omega (omega = exp(2 pi i / 3)) as a 2x2 real map.

    Its image of A2 is the ideal generated by a + b*omega, of index a^2 - ab + b^2.
    """
    if a == 0 and b == 0:
        raise ValueError("(a, b) = (0, 0) does not define a sublattice")
    re = a - b / 2.0
    im = b * math.sqrt(3.0) / 2.0
    kappa = similarity([[re, -im], [im, re]])
    assert kappa.index_N == a * a - a * b + b * b
    return kappa


def scaling_similarity(lattice_or_dim, k: int) -> SimilarityMap:
    if k < 1 or int(k) != k:
        raise ValueError(f"scaling factor must be a positive integer, got {k!r}")
    n = lattice_or_dim.dim if isinstance(lattice_or_dim, Lattice) else int(lattice_or_dim)
    return similarity(k * np.eye(n))


def integer_matrix(lattice: Lattice, kappa: SimilarityMap) -> np.ndarray:
    """kappa in the lattice's coordinates; raises unless kappa(L) is contained in L."""
    if kappa.dim != lattice.dim:
        raise ValueError("dimension mismatch between lattice and similarity map")
    m = lattice.inverse @ kappa.matrix @ lattice.basis
    rounded = np.rint(m)
    if np.max(np.abs(m - rounded)) > 1e-9 * max(1.0, np.max(np.abs(m))):
        raise ValueError("kappa(L) is not contained in L")
    return rounded.astype(np.int64)


def sublattice(lattice: Lattice, int_matrix, name: str | None = None) -> Lattice:
    """The sublattice generated by the columns of ``basis @ int_matrix``."""
    int_matrix = np.asarray(int_matrix, dtype=np.int64)
    return Lattice(lattice.basis @ int_matrix, name=name or f"sub({lattice.name})")


def coarse_lattice(lattice: Lattice, kappa: SimilarityMap) -> Lattice:
    return sublattice(lattice, integer_matrix(lattice, kappa), name=f"kappa({lattice.name})")


def rectangular_sublattice(lattice: Lattice, index: int) -> Lattice:
    """Sublattice spanned by index*v1, v2, ..., vn (the non-ideal comparison case)."""
    m = np.eye(lattice.dim, dtype=np.int64)
    m[0, 0] = index
    return sublattice(lattice, m, name=f"rect{index}({lattice.name})")


@dataclass(frozen=True, eq=False)
class CosetTable:
    """Representatives of L / kappa(L) taken from the Voronoi cell of 0 in kappa(L).

    Index 0 is always the zero coset.  Coset membership is decided exactly
    in integer arithmetic: c ~ c' iff adj(M) (c - c') = 0 mod |det M|.
    """

    lattice: Lattice
    kappa: SimilarityMap
    int_matrix: np.ndarray
    representatives: np.ndarray

    @property
    def size(self) -> int:
        return self.representatives.shape[0]

    @cached_property
    def coarse(self) -> Lattice:
        return sublattice(self.lattice, self.int_matrix, name=f"kappa({self.lattice.name})")

    @cached_property
    def _adj(self) -> tuple[np.ndarray, int]:
        m = self.int_matrix
        det = int(round(np.linalg.det(m)))
        adj = np.rint(det * np.linalg.inv(m)).astype(np.int64)
        return adj, abs(det)

    def _residues(self, coords) -> np.ndarray:
        adj, mod = self._adj
        c = np.mod(np.asarray(coords, dtype=np.int64), mod)
        return np.mod(c @ adj.T, mod)

    @cached_property
    def _lookup(self):
        res = self._residues(self.representatives)
        mod = self._adj[1]
        n = self.lattice.dim
        if mod ** n < 2**62:
            radix = mod ** np.arange(n, dtype=np.int64)
            keys = res @ radix
            order = np.argsort(keys)
            return ("int", radix, keys[order], order)
        return ("dict", {tuple(r): i for i, r in enumerate(res.tolist())})

    def index_of(self, coords) -> np.ndarray:
        """Coset index of lattice points given by integer coordinates."""
        coords = np.asarray(coords, dtype=np.int64)
        single = coords.ndim == 1
        res = self._residues(np.atleast_2d(coords))
        table = self._lookup
        if table[0] == "int":
            _, radix, keys, order = table
            q = res @ radix
            pos = np.searchsorted(keys, q)
            pos = np.minimum(pos, keys.size - 1)
            if not np.all(keys[pos] == q):
                raise AssertionError("coset residue missing from table")
            out = order[pos]
        else:
            lookup = table[1]
            out = np.array([lookup[tuple(r)] for r in res.tolist()], dtype=np.int64)
        return out[0] if single else out

    def reduce(self, coords) -> np.ndarray:
        """c - Q_kappa(L)(c) in lattice coordinates."""
        coords = np.asarray(coords, dtype=np.int64)
        q = self.coarse.nearest_coords(self.lattice.embed(coords))
        return coords - q @ self.int_matrix.T

    def add(self, i: int, j: int) -> int:
        return int(self.index_of(self.representatives[i] + self.representatives[j]))


def enumerate_cosets(lattice: Lattice, kappa: SimilarityMap, *, max_index: int = 10**6) -> CosetTable:
    """Breadth-first closure over +-basis steps, reducing into the zero coarse cell."""
    m = integer_matrix(lattice, kappa)
    n_cosets = abs(int(round(np.linalg.det(m))))
    if n_cosets != kappa.index_N:
        raise ValueError(f"|det| of kappa in lattice coordinates is {n_cosets}, expected {kappa.index_N}")
    if n_cosets > max_index:
        raise ResourceLimitError(f"index {n_cosets} exceeds limit {max_index}")
    n = lattice.dim
    table = CosetTable(lattice, kappa, m, np.zeros((1, n), dtype=np.int64))
    steps = np.vstack([np.eye(n, dtype=np.int64), -np.eye(n, dtype=np.int64)])
    reps = [np.zeros(n, dtype=np.int64)]
    residue_seen = {tuple(table._residues(reps[0][None])[0].tolist())}
    frontier = np.zeros((1, n), dtype=np.int64)
    while len(reps) < n_cosets and frontier.size:
        cand = (frontier[:, None, :] + steps[None, :, :]).reshape(-1, n)
        cand = table.reduce(cand)
        residues = table._residues(cand)
        nxt = []
        for c, r in zip(cand.tolist(), residues.tolist()):
            r = tuple(r)
            if r in residue_seen:
                continue
            residue_seen.add(r)
            reps.append(np.array(c, dtype=np.int64))
            nxt.append(c)
        frontier = np.array(nxt, dtype=np.int64).reshape(-1, n)
    if len(reps) != n_cosets:
        raise AssertionError(f"found {len(reps)} cosets, expected {n_cosets}")
    reps = np.array(reps, dtype=np.int64)
    reps.setflags(write=False)
    return CosetTable(lattice, kappa, m, reps)


def coset_index(table: CosetTable, coords) -> np.ndarray:
    return table.index_of(coords)


def lattice_points_within(lattice: Lattice, r2_max: float) -> np.ndarray:
    """Integer coordinates of all points with squared norm <= r2_max (origin included)."""
    bound = int(math.floor(np.linalg.norm(lattice.inverse, 2) * math.sqrt(r2_max) + 1e-9))
    n = lattice.dim
    rng = np.arange(-bound, bound + 1, dtype=np.int64)
    coords = np.array(list(itertools.product(rng, repeat=n)), dtype=np.int64) if n > 1 else rng[:, None]
    pts = lattice.embed(coords)
    norms = np.einsum("ij,ij->i", pts, pts)
    keep = norms <= r2_max * (1 + 1e-12) + 1e-12
    return coords[keep]


def shells(lattice: Lattice, r2_max: float, *, rtol: float = 1e-9) -> list[tuple[float, int]]:
    """(squared norm, count) for every nonzero shell with norm <= r2_max."""
    coords = lattice_points_within(lattice, r2_max)
    pts = lattice.embed(coords)
    norms = np.sort(np.einsum("ij,ij->i", pts, pts))
    norms = norms[norms > 1e-12 * max(1.0, r2_max)]
    out: list[tuple[float, int]] = []
    for v in norms:
        if out and abs(v - out[-1][0]) <= rtol * max(1.0, v):
            out[-1] = (out[-1][0], out[-1][1] + 1)
        else:
            out.append((float(v), 1))
    return out


def theta_counts(lattice: Lattice, m_max: int) -> np.ndarray:
    """N_m = #{lambda : ||lambda||^2 = m} for m = 0..m_max; norms must be integral."""
    if m_max > 10**4:
        raise ValueError("m_max above 1e4")
    counts = np.zeros(m_max + 1, dtype=np.int64)
    counts[0] = 1
    for norm, count in shells(lattice, m_max):
        m = round(norm)
        if abs(norm - m) > 1e-6:
            raise ValueError(f"lattice has non-integral norm {norm!r}")
        counts[m] += count
    return counts


def shortest_norm(lattice: Lattice) -> float:
    r2 = float(np.min(np.sum(lattice.basis**2, axis=0)))
    return shells(lattice, r2)[0][0]


def minimal_norm(lattice: Lattice, kappa: SimilarityMap | None = None) -> float:
    """Minimal squared norm of kappa(L), or of ``lattice`` itself when kappa is None."""
    target = lattice if kappa is None else coarse_lattice(lattice, kappa)
    return shortest_norm(target)
