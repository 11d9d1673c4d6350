"""Gaussian weight matrix, weighted graph Laplacian and boundary column blocks."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import InvalidBoundary, InvalidParameter
from .geometry import (
    CHUNK,
    Metric,
    NeighborGraph,
    PointCloud,
    build_knn_graph,
    graph_distance_matrix,
    pairwise_distances,
    select_bandwidth,
)

# above this many points the default support is truncated at TRUNCATION_WIDTHS * sqrt(t)
DENSE_LIMIT = 2000
TRUNCATION_WIDTHS = 4.0


def gaussian_weight(dist, t):
    return np.exp(-np.square(dist) / (4.0 * t))


def default_truncation(n: int, t: float) -> float:
    return math.inf if n <= DENSE_LIMIT else TRUNCATION_WIDTHS * math.sqrt(t)


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    W: sp.csr_matrix
    t: float
    metric: Metric
    truncation_radius: float

    @property
    def n(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True, eq=False)
class GraphLaplacian:
    L: sp.csr_matrix
    t: float
    degree: np.ndarray

    @property
    def n(self) -> int:
        return self.L.shape[0]


def assemble_kernel(cloud: PointCloud, metric: Metric, t: float, truncation_radius: float | None = None,
                    graph: NeighborGraph | None = None) -> KernelMatrix:
    """Sparse symmetric matrix of ``exp(-d**2 / 4t)`` over pairs within the radius.

    ``truncation_radius=None`` picks dense for small clouds and ``4 sqrt(t)``
    otherwise. For the graph metric, ``graph`` may be passed to reuse an
    already built kNN graph. The diagonal is always 1.
    """
    if not t > 0:
        raise InvalidParameter(f"bandwidth t must be positive, got {t}")
    n = cloud.n
    radius = default_truncation(n, t) if truncation_radius is None else float(truncation_radius)
    if not radius > 0:
        raise InvalidParameter("truncation radius must be positive")
    if metric.is_graph and graph is None:
        graph = build_knn_graph(cloud, metric.base, metric.k)

    rows, cols, vals = [], [], []
    for lo in range(0, n, CHUNK):
        hi = min(lo + CHUNK, n)
        if metric.is_graph:
            D = graph_distance_matrix(graph, np.arange(lo, hi), radius)
        else:
            D = pairwise_distances(cloud.rows(slice(lo, hi)), cloud.points, metric)
            if not math.isinf(radius):
                D[D > radius] = np.inf
        # upper triangle only; mirrored below so w_ij == w_ji bit for bit
        r, c = np.nonzero(np.isfinite(D))
        c_keep = c > r + lo
        r, c = r[c_keep], c[c_keep]
        w = gaussian_weight(D[r, c], t)
        pos = w > 0
        rows.append(r[pos] + lo)
        cols.append(c[pos])
        vals.append(w[pos])
    r, c, w = np.concatenate(rows), np.concatenate(cols), np.concatenate(vals)
    diag = np.arange(n)
    W = sp.csr_matrix(
        (np.concatenate([w, w, np.ones(n)]), (np.concatenate([r, c, diag]), np.concatenate([c, r, diag]))),
        shape=(n, n),
    )
    W.sort_indices()
    return KernelMatrix(W, float(t), metric, radius)


def assemble_laplacian(kernel: KernelMatrix) -> GraphLaplacian:
    """``L = (D - W) / t``; the diagonal is the off-diagonal row sum so rows sum to zero."""
    W = kernel.W
    off = W - sp.diags(W.diagonal())
    off.eliminate_zeros()
    offsum = np.asarray(off.sum(axis=1)).ravel()
    L = (sp.diags(offsum) - off) / kernel.t
    L = sp.csr_matrix(L)
    L.sort_indices()
    degree = np.asarray(W.sum(axis=1)).ravel()
    return GraphLaplacian(L, kernel.t, degree)


def check_index_set(indices, n: int) -> np.ndarray:
    idx = np.asarray(indices)
    if idx.ndim != 1 or idx.size == 0:
        raise InvalidBoundary("index set must be a nonempty 1-D list")
    if not np.issubdtype(idx.dtype, np.integer):
        if not np.all(np.equal(np.mod(idx, 1), 0)):
            raise InvalidBoundary("indices must be integers")
        idx = idx.astype(np.int64)
    if idx.min() < 0 or idx.max() >= n:
        raise InvalidBoundary(f"index out of range [0, {n})")
    if np.unique(idx).size != idx.size:
        raise InvalidBoundary("duplicate index in set")
    return idx.astype(np.int64)


def boundary_columns(kernel: KernelMatrix, B) -> sp.csr_matrix:
    """``W(X, B)``: the columns of ``W`` at the boundary indices, in ``B`` order."""
    B = check_index_set(B, kernel.n)
    return sp.csr_matrix(kernel.W[:, B])


def write_coo(matrix, path) -> None:
    """Write ``row col value`` triplets, one per line, values at 17 significant digits."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as f:
        for i, j, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            f.write(f"{i} {j} {v:.17g}\n")


@dataclass(frozen=True, eq=False)
class KernelContext:
    """Everything derived from a cloud once: kNN graph, bandwidth, ``W`` and ``L``."""

    cloud: PointCloud
    metric: Metric
    k: int
    graph: NeighborGraph | None
    kernel: KernelMatrix
    laplacian: GraphLaplacian

    @property
    def t(self) -> float:
        return self.kernel.t


def prepare_kernel(cloud: PointCloud, metric: Metric, k: int = 10, t: float | None = None,
                   truncation_radius: float | None = None) -> KernelContext:
    """Build the shared operators; ``t=None`` selects ``t = h**2`` from the k-graph.

    Under the graph metric the kNN graph uses the metric's own ``k``.
    """
    graph = None
    if metric.is_graph:
        graph = build_knn_graph(cloud, metric.base, metric.k)
        k = metric.k
    elif t is None:
        graph = build_knn_graph(cloud, metric, k)
    if t is None:
        t = select_bandwidth(graph)
    kernel = assemble_kernel(cloud, metric, t, truncation_radius, graph=graph if metric.is_graph else None)
    return KernelContext(cloud, metric, k, graph, kernel, assemble_laplacian(kernel))
