"""Point clouds, metrics, k-nearest-neighbour graphs and graph distances.

All kNN searches are exact brute force over row chunks. Ties between equal
distances always go to the lower point index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra
from scipy.spatial.distance import cdist

from .errors import DegenerateBandwidth, DegenerateInput, InvalidParameter

# rows per block in brute-force distance sweeps; bounds memory at CHUNK * n floats
CHUNK = 1024


@dataclass(frozen=True, eq=False)
class PointCloud:
    """``n`` points in ``d`` dimensions, one per row.

    ``points`` is a float ndarray, or a CSR matrix for sparse document
    vectors. Row order is the point indexing used everywhere downstream.
    """

    points: np.ndarray | sp.csr_matrix

    def __post_init__(self):
        pts = self.points
        if sp.issparse(pts):
            pts = sp.csr_matrix(pts, dtype=np.float64)
            pts.sort_indices()
            values = pts.data
        else:
            pts = np.asarray(pts, dtype=np.float64)
            if pts.ndim == 1:
                pts = pts[:, None]
            values = pts
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise InvalidParameter(f"point cloud needs shape (n>=1, d>=1), got {pts.shape}")
        if not np.all(np.isfinite(values)):
            raise DegenerateInput("point cloud contains non-finite coordinates")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.points)

    def rows(self, idx) -> np.ndarray | sp.csr_matrix:
        return self.points[idx]

    def take(self, idx) -> "PointCloud":
        return PointCloud(self.points[np.asarray(idx)])


@dataclass(frozen=True)
class Metric:
    """Distance on a point cloud.

    ``kind`` is ``"euclidean"``, ``"cosine"`` (``1 - cos`` of the angle) or
    ``"graph"``: shortest-path length over the symmetrised kNN graph built
    with ``base`` and ``k`` neighbours.
    """

    kind: str = "euclidean"
    base: "Metric | None" = None
    k: int | None = None

    def __post_init__(self):
        if self.kind not in ("euclidean", "cosine", "graph"):
            raise InvalidParameter(f"unknown metric kind {self.kind!r}")
        if self.kind == "graph":
            if self.base is None or self.base.kind == "graph":
                raise InvalidParameter("graph metric needs a euclidean or cosine base")
            if self.k is None or self.k < 1:
                raise InvalidParameter("graph metric needs k >= 1")
        elif self.base is not None or self.k is not None:
            raise InvalidParameter(f"{self.kind} metric takes no base or k")

    @classmethod
    def euclidean(cls) -> "Metric":
        return cls("euclidean")

    @classmethod
    def cosine(cls) -> "Metric":
        return cls("cosine")

    @classmethod
    def graph(cls, base: "Metric | str" = "euclidean", k: int = 10) -> "Metric":
        if isinstance(base, str):
            base = cls(base)
        return cls("graph", base, int(k))

    @property
    def is_graph(self) -> bool:
        return self.kind == "graph"

    def __str__(self):
        if self.is_graph:
            return f"graph:{self.base}:{self.k}"
        return self.kind


def parse_metric(text: str, k: int = 10) -> Metric:
    """Parse ``euclidean``, ``cosine``, ``graph``, ``graph:cosine`` or ``graph:cosine:12``."""
    parts = text.strip().lower().split(":")
    if parts[0] != "graph":
        if len(parts) != 1:
            raise InvalidParameter(f"bad metric {text!r}")
        return Metric(parts[0])
    base = parts[1] if len(parts) > 1 else "euclidean"
    if len(parts) > 2:
        k = int(parts[2])
    if len(parts) > 3:
        raise InvalidParameter(f"bad metric {text!r}")
    return Metric.graph(base, k)


def _row_norms(X) -> np.ndarray:
    if sp.issparse(X):
        return np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    return np.linalg.norm(X, axis=1)


def pairwise_distances(A, B, metric: Metric) -> np.ndarray:
    """Dense ``len(A) x len(B)`` block of point-metric distances."""
    if metric.is_graph:
        raise InvalidParameter("pairwise_distances takes a point metric; use graph_distance_matrix")
    A = A.toarray() if sp.issparse(A) and not sp.issparse(B) else A
    B = B.toarray() if sp.issparse(B) and not sp.issparse(A) else B
    A = np.atleast_2d(A) if not sp.issparse(A) else A
    B = np.atleast_2d(B) if not sp.issparse(B) else B
    if metric.kind == "cosine":
        na, nb = _row_norms(A), _row_norms(B)
        if np.any(na == 0) or np.any(nb == 0):
            bad = np.flatnonzero(na == 0) if np.any(na == 0) else np.flatnonzero(nb == 0)
            raise DegenerateInput(f"cosine distance undefined for zero vector (row {int(bad[0])})")
        if sp.issparse(A):
            dots = np.asarray((A @ B.T).todense())
            D = 1.0 - dots / np.outer(na, nb)
        else:
            D = cdist(A, B, "cosine")
        return np.clip(D, 0.0, 2.0)
    if sp.issparse(A):
        sq = _row_norms(A)[:, None] ** 2 + _row_norms(B)[None, :] ** 2
        sq -= 2.0 * np.asarray((A @ B.T).todense())
        return np.sqrt(np.maximum(sq, 0.0))
    return cdist(A, B, "euclidean")


@dataclass(frozen=True, eq=False)
class NeighborGraph:
    """Symmetrised kNN graph.

    ``knn_indices``/``knn_distances`` keep the directed k-neighbour lists
    (row ``i`` sorted by distance, then index); ``adjacency`` is the
    undirected union as a CSR matrix of base-metric edge lengths. Zero-length
    edges between duplicate points are stored explicitly.
    """

    knn_indices: np.ndarray
    knn_distances: np.ndarray
    adjacency: sp.csr_matrix
    k: int
    symmetrized: bool = True

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def neighbors(self, i: int) -> list[tuple[int, float]]:
        a = self.adjacency
        lo, hi = a.indptr[i], a.indptr[i + 1]
        return [(int(j), float(v)) for j, v in zip(a.indices[lo:hi], a.data[lo:hi])]


def build_knn_graph(cloud: PointCloud, metric: Metric, k: int) -> NeighborGraph:
    if metric.is_graph:
        raise InvalidParameter("kNN graph is built on a point metric, not a graph metric")
    n = cloud.n
    if not 1 <= k < n:
        raise InvalidParameter(f"need 1 <= k < n, got k={k}, n={n}")
    X = cloud.points
    idx = np.empty((n, k), dtype=np.int64)
    dist = np.empty((n, k))
    for lo in range(0, n, CHUNK):
        hi = min(lo + CHUNK, n)
        D = pairwise_distances(X[lo:hi], X, metric)
        D[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        order = np.argsort(D, axis=1, kind="stable")[:, :k]
        idx[lo:hi] = order
        dist[lo:hi] = np.take_along_axis(D, order, axis=1)

    # union of directed edges; both directions carry the same metric value
    rows = np.repeat(np.arange(n), k)
    cols = idx.ravel()
    vals = dist.ravel()
    a, b = np.minimum(rows, cols), np.maximum(rows, cols)
    _, first = np.unique(a * n + b, return_index=True)
    a, b, vals = a[first], b[first], vals[first]
    adj = sp.csr_matrix(
        (np.concatenate([vals, vals]), (np.concatenate([a, b]), np.concatenate([b, a]))),
        shape=(n, n),
    )
    adj.sort_indices()
    return NeighborGraph(idx, dist, adj, k)


def graph_distance_matrix(graph: NeighborGraph, sources, radius_cap: float = math.inf) -> np.ndarray:
    """Shortest-path distances from each source over the symmetrised graph.

    Returns a ``len(sources) x n`` array; pairs farther than ``radius_cap``
    (or unreachable) hold ``inf``.
    """
    if not graph.symmetrized:
        raise InvalidParameter("graph distances need a symmetrised graph")
    if not radius_cap > 0:
        raise InvalidParameter("radius_cap must be positive")
    assert graph.adjacency.nnz == 0 or graph.adjacency.data.min() >= 0, "negative edge length"
    sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    if sources.size == 0:
        return np.empty((0, graph.n))
    limit = np.inf if math.isinf(radius_cap) else radius_cap
    D = dijkstra(graph.adjacency, directed=True, indices=sources, limit=limit)
    D = np.atleast_2d(D)
    if not math.isinf(radius_cap):
        D[D > radius_cap] = np.inf
    return D


def select_bandwidth(graph: NeighborGraph) -> float:
    """``t = h**2`` with ``h`` the mean over points of the mean kNN distance."""
    if graph.knn_distances.size == 0:
        raise DegenerateBandwidth("empty neighbour graph")
    h = float(np.mean(np.mean(graph.knn_distances, axis=1)))
    if h == 0.0:
        raise DegenerateBandwidth("all neighbour distances are zero")
    return h * h


class Proximity(NamedTuple):
    """Distance from every point to a target set and the nearest target.

    ``nearest`` holds positions into the target list (-1 when out of reach).
    """

    distance: np.ndarray
    nearest: np.ndarray


def nearest_in_set(cloud: PointCloud, metric: Metric, targets, graph: NeighborGraph | None = None,
                   radius: float = math.inf) -> Proximity:
    """Nearest target for each point, ties to the lowest point index.

    Under the graph metric only targets within ``radius`` are searched;
    farther points get ``inf``.
    """
    targets = np.asarray(targets, dtype=np.int64)
    n = cloud.n
    # scan targets in increasing point index so argmin's first hit is the lowest index
    order = np.argsort(targets, kind="stable")
    ranked = targets[order]
    best = np.full(n, np.inf)
    pos = np.full(n, -1, dtype=np.int64)
    if metric.is_graph:
        if graph is None:
            graph = build_knn_graph(cloud, metric.base, metric.k)
        for lo in range(0, len(ranked), CHUNK):
            D = graph_distance_matrix(graph, ranked[lo:lo + CHUNK], radius)
            j = np.argmin(D, axis=0)
            d = D[j, np.arange(n)]
            better = d < best
            best[better] = d[better]
            pos[better] = lo + j[better]
    else:
        T = cloud.rows(ranked)
        for lo in range(0, n, CHUNK):
            hi = min(lo + CHUNK, n)
            D = pairwise_distances(cloud.rows(slice(lo, hi)), T, metric)
            j = np.argmin(D, axis=1)
            best[lo:hi] = D[np.arange(hi - lo), j]
            pos[lo:hi] = j
    nearest = np.where(pos >= 0, order[np.maximum(pos, 0)], -1)
    return Proximity(best, nearest)
