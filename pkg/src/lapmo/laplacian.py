"""3D+t motion graph, its sparse Laplacian and differential coordinates.

Node ``(t, j)`` has index ``t * J + j``. Spatial edges follow skeleton bones
inside each frame; temporal edges link the same joint in consecutive frames.
All edge weights are 1.
"""
from __future__ import annotations

import enum
import functools
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_array

from .motion import MotionSequence, Skeleton

__all__ = [
    "LaplacianVariant",
    "Graph3Dt",
    "SparseLaplacian",
    "build_graph",
    "build_laplacian",
    "diff_coords",
    "motion_laplacian",
]


class LaplacianVariant(str, enum.Enum):
    COMBINATORIAL = "comb"
    RANDOM_WALK = "rw"

    @classmethod
    def parse(cls, value) -> "LaplacianVariant":
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        for v in cls:
            if key in (v.value, v.name.lower()):
                return v
        raise ValueError(f"unknown Laplacian variant {value!r} (use 'comb' or 'rw')")


@dataclass(frozen=True, eq=False)
class Graph3Dt:
    """Edge lists are ``(E, 2)`` int arrays of node indices.

    Spatial edges are ``(child, parent)`` pairs ordered by ``(t, j)``;
    temporal edges are ``(t, t + 1)`` pairs ordered by ``(j, t)``.
    """

    T: int
    J: int
    spatial_edges: np.ndarray
    temporal_edges: np.ndarray

    @property
    def N(self) -> int:
        return self.T * self.J

    @property
    def edges(self) -> np.ndarray:
        return np.concatenate([self.spatial_edges, self.temporal_edges], axis=0)

    def idx(self, t: int, j: int) -> int:
        return t * self.J + j

    def degrees(self) -> np.ndarray:
        e = self.edges
        return np.bincount(e.ravel(), minlength=self.N)


def build_graph(skeleton: Skeleton, T: int) -> Graph3Dt:
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    J = skeleton.joint_count
    bones = skeleton.bones
    spatial = [(t * J + j, t * J + p) for t in range(T) for j, p in bones]
    temporal = [(t * J + j, (t + 1) * J + j) for j in range(J) for t in range(T - 1)]
    return Graph3Dt(
        T=T,
        J=J,
        spatial_edges=np.array(spatial, dtype=np.int64).reshape(-1, 2),
        temporal_edges=np.array(temporal, dtype=np.int64).reshape(-1, 2),
    )


@dataclass(frozen=True, eq=False)
class SparseLaplacian:
    """N x N Laplacian in compressed-row form (columns sorted within a row)."""

    N: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray
    variant: LaplacianVariant

    @property
    def nnz(self) -> int:
        return len(self.values)

    @functools.cached_property
    def _csr(self) -> csr_array:
        return csr_array((self.values, self.col_indices, self.row_offsets), shape=(self.N, self.N))

    @functools.cached_property
    def _csr_T(self) -> csr_array:
        return self._csr.T.tocsr()

    def to_scipy(self) -> csr_array:
        return self._csr.copy()

    def toarray(self) -> np.ndarray:
        return self._csr.toarray()

    def __matmul__(self, P: np.ndarray) -> np.ndarray:
        return self._csr @ P

    def rmatmul_T(self, U: np.ndarray) -> np.ndarray:
        """Compute ``L.T @ U``."""
        return self._csr_T @ U


def build_laplacian(graph: Graph3Dt, variant=LaplacianVariant.COMBINATORIAL) -> SparseLaplacian:
    """Uniform-weight Laplacian of ``graph``.

    ``COMBINATORIAL`` is ``D - A``; ``RANDOM_WALK`` is ``I - D^-1 A``.
    An isolated node gets an all-zero row under both variants.
    """
    variant = LaplacianVariant.parse(variant)
    N = graph.N
    e = graph.edges
    deg = graph.degrees().astype(np.float64)

    rows = np.concatenate([e[:, 0], e[:, 1], np.arange(N)])
    cols = np.concatenate([e[:, 1], e[:, 0], np.arange(N)])
    if variant is LaplacianVariant.COMBINATORIAL:
        off = -np.ones(2 * len(e))
        diag = deg
    else:
        inv = np.divide(1.0, deg, out=np.zeros_like(deg), where=deg > 0)
        off = -np.concatenate([inv[e[:, 0]], inv[e[:, 1]]])
        diag = (deg > 0).astype(np.float64)
    vals = np.concatenate([off, diag])

    order = np.lexsort((cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    row_offsets = np.zeros(N + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=N), out=row_offsets[1:])
    return SparseLaplacian(
        N=N,
        row_offsets=row_offsets,
        col_indices=cols.astype(np.int64),
        values=vals,
        variant=variant,
    )


@functools.lru_cache(maxsize=64)
def _cached_laplacian(skeleton: Skeleton, T: int, variant: LaplacianVariant) -> SparseLaplacian:
    return build_laplacian(build_graph(skeleton, T), variant)


def motion_laplacian(skeleton: Skeleton, T: int, variant=LaplacianVariant.COMBINATORIAL) -> SparseLaplacian:
    """Laplacian of the 3D+t graph for ``T`` frames of ``skeleton`` (memoised)."""
    return _cached_laplacian(skeleton, int(T), LaplacianVariant.parse(variant))


def diff_coords(L: SparseLaplacian, seq: MotionSequence | np.ndarray) -> np.ndarray:
    """Differential coordinates ``L @ P`` as an ``(N, 3)`` array.

    ``seq`` may be a :class:`MotionSequence` or a raw ``(T, J, 3)`` array.
    """
    P = seq.positions if isinstance(seq, MotionSequence) else np.asarray(seq, dtype=np.float64)
    if P.ndim != 3 or P.shape[0] * P.shape[1] != L.N:
        raise ValueError(f"dimension mismatch: Laplacian has N={L.N}, positions have shape {P.shape}")
    return L @ P.reshape(L.N, P.shape[2])
