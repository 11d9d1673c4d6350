"""Harmonic extension of boundary data over a point cloud.

Four discretisations share one calling convention and return a
:class:`HarmonicField`:

``glm``
    discrete harmonic on every unconstrained row, ``u = g`` on ``B``.
``pim``
    point integral method: the Robin-coupled full system
    ``(L + mu P) u = mu W(X, B) g`` where ``P`` carries the columns of
    ``W(X, B)`` at the boundary positions. Boundary values are unknowns.
``vcm``
    volume constraint: ``u`` is pinned to the nearest boundary value on a
    layer of width ``t**(1/2 - delta)`` around ``B`` and discrete harmonic
    elsewhere.
``fem1d``
    piecewise-linear finite element weights on a sorted 1-D sample.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import (
    IllPosedExtension,
    InvalidBoundary,
    InvalidInput,
    InvalidParameter,
    OutOfSupport,
)
from .geometry import Metric, PointCloud, Proximity, nearest_in_set, pairwise_distances
from .kernel import GraphLaplacian, KernelContext, KernelMatrix, check_index_set, gaussian_weight
from .solver import SolveOptions, SolveReport, solve_or_escalate

METHODS = ("glm", "pim", "vcm", "fem1d")


@dataclass(frozen=True, eq=False)
class BoundaryCondition:
    """Boundary indices ``B`` and values ``g`` (one column per right-hand side).

    A 1-D ``values`` array is stored as a single column and extensions of it
    come back 1-D.
    """

    indices: np.ndarray
    values: np.ndarray
    vector: bool = field(default=False, init=False)

    def __post_init__(self):
        idx = np.asarray(self.indices)
        vals = np.asarray(self.values, dtype=np.float64)
        vector = vals.ndim == 1
        if vector:
            vals = vals[:, None]
        if idx.ndim != 1 or idx.size == 0:
            raise InvalidBoundary("boundary needs at least one index")
        if vals.ndim != 2 or vals.shape[0] != idx.size or vals.shape[1] < 1:
            raise InvalidBoundary(f"boundary values shape {vals.shape} does not match {idx.size} indices")
        if not np.all(np.isfinite(vals)):
            raise InvalidBoundary("boundary values must be finite")
        if np.unique(idx).size != idx.size:
            raise InvalidBoundary("duplicate boundary index")
        object.__setattr__(self, "indices", idx.astype(np.int64))
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "vector", vector)

    @property
    def m(self) -> int:
        return self.indices.size

    @property
    def columns(self) -> int:
        return self.values.shape[1]

    def validated(self, n: int) -> np.ndarray:
        return check_index_set(self.indices, n)


@dataclass(frozen=True)
class PimParams:
    """Robin coupling. ``mu=None`` means ``1e4 * n / m``.

    ``beta`` and ``volume_ratio`` (``|dM| / |M|``) are carried for reports
    only; the solve uses ``mu`` alone.
    """

    mu: float | None = None
    beta: float | None = None
    volume_ratio: float | None = None

    def __post_init__(self):
        if self.mu is not None and not self.mu > 0:
            raise InvalidParameter("mu must be positive")

    def resolve(self, n: int, m: int) -> float:
        return float(self.mu) if self.mu is not None else 1e4 * n / m


def robin_mu(beta: float, n: int, m: int, volume_ratio: float) -> float:
    """Coupling that turns the Robin condition ``u + beta du/dn = g`` into the PIM system."""
    return 2.0 / beta * n * volume_ratio / m


@dataclass(frozen=True)
class VcmParams:
    """Layer exponent ``delta`` in (0, 1/2); ``distance_mode=None`` reuses the kernel metric."""

    delta: float = 0.1
    distance_mode: Metric | None = None

    def __post_init__(self):
        if not 0 < self.delta < 0.5:
            raise InvalidParameter("delta must lie in (0, 1/2)")

    def layer_radius(self, t: float) -> float:
        return t ** (0.5 - self.delta)


@dataclass(frozen=True, eq=False)
class HarmonicField:
    u: np.ndarray
    method: str
    report: SolveReport
    effective_boundary: np.ndarray
    mu: float | None = None


def _ensure_posed(adjacency, constrained: np.ndarray) -> None:
    ncomp, labels = connected_components(adjacency, directed=False)
    if ncomp == 1:
        return
    seen = np.zeros(ncomp, dtype=bool)
    seen[labels[constrained]] = True
    if not seen.all():
        free = np.flatnonzero(~seen[labels])
        raise IllPosedExtension(
            f"{ncomp - seen.sum()} component(s) carry no boundary point (e.g. point {int(free[0])})"
        )


def _pinned_solve(L: sp.csr_matrix, pinned: np.ndarray, values: np.ndarray, opts):
    """Solve ``L(X\\P, X) u = 0`` with ``u = values`` on ``P`` via the reduced system."""
    n = L.shape[0]
    free = np.setdiff1d(np.arange(n), pinned)
    if free.size == 0:
        raise InvalidBoundary("every point is constrained; nothing to extend")
    _ensure_posed(L, pinned)
    Lf = L[free]
    A = sp.csr_matrix(Lf[:, free])
    rhs = -(Lf[:, pinned] @ values)
    x, report = solve_or_escalate(A, rhs, opts)
    u = np.empty((n, values.shape[1]))
    u[pinned] = values
    u[free] = x.reshape(free.size, -1)
    return u, report


def _shape(u: np.ndarray, bc: BoundaryCondition) -> np.ndarray:
    return u[:, 0] if bc.vector else u


def extend_glm(lap: GraphLaplacian, bc: BoundaryCondition, opts: SolveOptions | None = None) -> HarmonicField:
    B = bc.validated(lap.n)
    u, report = _pinned_solve(lap.L, B, bc.values, opts)
    return HarmonicField(_shape(u, bc), "glm", report, np.sort(B))


def pim_system(lap: GraphLaplacian, kernel: KernelMatrix, B: np.ndarray, mu: float) -> sp.csr_matrix:
    """``L + mu P`` with ``P[:, B] = W(X, B)`` and zero elsewhere."""
    n = lap.n
    WB = kernel.W[:, B]
    select = sp.csr_matrix((np.ones(B.size), (np.arange(B.size), B)), shape=(B.size, n))
    A = sp.csr_matrix(lap.L + mu * (WB @ select))
    A.sort_indices()
    return A


def extend_pim(lap: GraphLaplacian, kernel: KernelMatrix, bc: BoundaryCondition,
               params: PimParams | None = None, opts: SolveOptions | None = None) -> HarmonicField:
    params = params or PimParams()
    n = lap.n
    B = bc.validated(n)
    mu = params.resolve(n, B.size)
    _ensure_posed(lap.L, B)
    A = pim_system(lap, kernel, B, mu)
    rhs = mu * (kernel.W[:, B] @ bc.values)
    x, report = solve_or_escalate(A, rhs, opts)
    u = x.reshape(n, -1)
    return HarmonicField(_shape(u, bc), "pim", report, np.empty(0, dtype=np.int64), mu)


def boundary_proximity(ctx: KernelContext, B, params: VcmParams | None = None) -> Proximity:
    """Distance to, and nearest member of, ``B`` for every point.

    Graph-metric searches stop at the VCM layer radius; farther points
    report ``inf``.
    """
    params = params or VcmParams()
    metric = params.distance_mode or ctx.metric
    graph = ctx.graph if metric == ctx.metric else None
    radius = params.layer_radius(ctx.t) if metric.is_graph else math.inf
    return nearest_in_set(ctx.cloud, metric, B, graph=graph, radius=radius)


def extend_vcm(lap: GraphLaplacian, proximity: Proximity, bc: BoundaryCondition,
               params: VcmParams | None = None, opts: SolveOptions | None = None) -> HarmonicField:
    """Pin the layer ``dist(x, B) < t**(1/2 - delta)`` to the nearest boundary value, then solve."""
    params = params or VcmParams()
    n = lap.n
    B = bc.validated(n)
    radius = params.layer_radius(lap.t)
    dist = np.asarray(proximity.distance)
    nearest = np.asarray(proximity.nearest)
    if dist.shape != (n,) or nearest.shape != (n,):
        raise InvalidParameter("proximity arrays must have one entry per point")
    layer = np.flatnonzero(dist < radius)
    pinned = np.union1d(layer, B)
    if pinned.size == n:
        raise InvalidBoundary(f"layer radius {radius:.4g} swallows every point; increase delta or decrease t")
    values = np.empty((n, bc.columns))
    values[layer] = bc.values[nearest[layer]]
    values[B] = bc.values
    u, report = _pinned_solve(lap.L, pinned, values[pinned], opts)
    return HarmonicField(_shape(u, bc), "vcm", report, pinned)


def fem1d_stiffness(xs: np.ndarray) -> sp.csr_matrix:
    """Hat-function stiffness matrix on strictly increasing 1-D nodes: ``1/h`` couplings."""
    gaps = np.diff(xs)
    w = 1.0 / gaps
    deg = np.zeros(xs.size)
    deg[:-1] += w
    deg[1:] += w
    K = sp.diags([-w, deg, -w], [-1, 0, 1], format="csr")
    K.sort_indices()
    return K


def extend_fem1d(cloud: PointCloud, bc: BoundaryCondition, opts: SolveOptions | None = None) -> HarmonicField:
    if cloud.d != 1 or cloud.is_sparse:
        raise InvalidParameter("fem1d needs a dense 1-D point cloud")
    x = cloud.points[:, 0]
    n = cloud.n
    B = bc.validated(n)
    order = np.argsort(x, kind="stable")
    xs = x[order]
    gaps = np.diff(xs)
    if np.any(gaps == 0):
        dup = order[1:][gaps == 0][0]
        raise InvalidInput(f"duplicate coordinate {x[dup]!r} at point {int(dup)}")
    if x.argmin() not in B or x.argmax() not in B:
        raise IllPosedExtension("fem1d needs both extreme points in the boundary set")
    rank = np.empty(n, dtype=np.int64)
    rank[order] = np.arange(n)
    # solve in sorted order (banded, well-conditioned pivoting), then map back
    us, report = _pinned_solve(fem1d_stiffness(xs), rank[B], bc.values, opts)
    u = us[rank]
    return HarmonicField(_shape(u, bc), "fem1d", report, np.sort(B))


def extend(method: str, ctx: KernelContext, bc: BoundaryCondition, *, pim: PimParams | None = None,
           vcm: VcmParams | None = None, opts: SolveOptions | None = None) -> HarmonicField:
    """Run one extension method on a prepared kernel context."""
    if method == "glm":
        return extend_glm(ctx.laplacian, bc, opts)
    if method == "pim":
        return extend_pim(ctx.laplacian, ctx.kernel, bc, pim, opts)
    if method == "vcm":
        vcm = vcm or VcmParams()
        prox = boundary_proximity(ctx, bc.validated(ctx.cloud.n), vcm)
        return extend_vcm(ctx.laplacian, prox, bc, vcm, opts)
    if method == "fem1d":
        return extend_fem1d(ctx.cloud, bc, opts)
    raise InvalidParameter(f"unknown method {method!r}; choose from {METHODS}")


def _query_weights(cloud: PointCloud, kernel: KernelMatrix, queries) -> tuple[np.ndarray, bool]:
    if kernel.metric.is_graph:
        raise InvalidParameter("out-of-sample interpolation needs a point metric, not a graph metric")
    q = np.asarray(queries, dtype=np.float64)
    single = q.ndim == 1 and cloud.d > 1 or q.ndim == 0
    q = q.reshape(-1, cloud.d) if q.ndim <= 1 else q
    D = pairwise_distances(q, cloud.points, kernel.metric)
    if not math.isinf(kernel.truncation_radius):
        D[D > kernel.truncation_radius] = np.inf
    Wq = gaussian_weight(D, kernel.t)
    total = Wq.sum(axis=1)
    if np.any(total == 0):
        bad = int(np.flatnonzero(total == 0)[0])
        raise OutOfSupport(f"query {bad} has zero kernel mass against every sample point")
    return Wq, single


def _finish(values: np.ndarray, single: bool, vector: bool):
    if vector:
        values = values[:, 0]
    return values[0] if single else values


def interpolate_pim(field: HarmonicField, cloud: PointCloud, kernel: KernelMatrix, bc: BoundaryCondition,
                    queries, mu: float | None = None):
    """Kernel-weighted average of ``u`` plus the Robin boundary correction.

    ``queries`` is one point or a ``(q, d)`` array; at a sample point with
    the same kernel the value reproduces ``u`` there.
    """
    mu = field.mu if mu is None else mu
    if mu is None:
        raise InvalidParameter("mu is required to interpolate a PIM field")
    B = bc.validated(cloud.n)
    Wq, single = _query_weights(cloud, kernel, queries)
    u = field.u.reshape(cloud.n, -1)
    num = Wq @ u + kernel.t * mu * (Wq[:, B] @ (bc.values - u[B]))
    return _finish(num / Wq.sum(axis=1)[:, None], single, field.u.ndim == 1)


def interpolate_vcm(field: HarmonicField, cloud: PointCloud, kernel: KernelMatrix, queries):
    """Kernel-weighted average of ``u``. Meaningful away from the boundary layer."""
    Wq, single = _query_weights(cloud, kernel, queries)
    u = field.u.reshape(cloud.n, -1)
    return _finish(Wq @ u / Wq.sum(axis=1)[:, None], single, field.u.ndim == 1)
