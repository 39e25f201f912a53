"""Wyner-Ziv lattice vector quantizers and a sensor-network chain-coding simulator."""

from .kernels import BACKEND
from .lattice import Lattice, LatticePoint, make_lattice, nearest_point, second_moment_mc
from .sublattice import (
    CosetTable,
    SimilarityMap,
    eisenstein_similarity,
    enumerate_cosets,
    minimal_norm,
    scaling_similarity,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "CosetTable", "Lattice", "LatticePoint", "SimilarityMap", "eisenstein_similarity",
    "enumerate_cosets", "make_lattice", "minimal_norm", "nearest_point", "scaling_similarity",
    "second_moment_mc",
]
