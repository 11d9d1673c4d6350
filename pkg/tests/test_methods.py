import math

import numpy as np
import pytest
import scipy.linalg as la
from hypothesis import given, settings
from hypothesis import strategies as st

from harmext import IllPosedExtension, InvalidBoundary, InvalidInput, InvalidParameter, OutOfSupport
from harmext.datasets import hat_function, sample_interval_demo
from harmext.geometry import Metric, PointCloud
from harmext.kernel import prepare_kernel
from harmext.methods import (
    METHODS,
    BoundaryCondition,
    PimParams,
    VcmParams,
    boundary_proximity,
    extend,
    extend_fem1d,
    extend_glm,
    extend_pim,
    extend_vcm,
    interpolate_pim,
    interpolate_vcm,
    robin_mu,
)
from harmext.solver import SolveOptions
from harmext.studies import DEMO_T, demo1d, residual_ladder, strictly_decreasing

E = Metric.euclidean()
DENSE = SolveOptions("dense-direct")


def instance(seed, d=None, n=None, extra=4):
    """Random cloud whose boundary set always contains the extremes of the first coordinate."""
    rng = np.random.default_rng(seed)
    d = d or int(rng.integers(1, 3))
    n = n or int(rng.integers(30, 150))
    X = rng.random((n, d))
    order = np.argsort(X[:, 0])
    B = np.unique(np.concatenate([[order[0], order[-1]], rng.choice(n, extra, replace=False)]))
    return PointCloud(X), B, rng


def methods_for(cloud):
    return METHODS if cloud.d == 1 else ("glm", "pim", "vcm")


def dense_laplacian(X, t):
    D2 = np.sum((X[:, None, :] - X[None, :, :]) ** 2, axis=2)
    W = np.exp(-D2 / (4 * t))
    return W, (np.diag(W.sum(axis=1)) - W) / t


# ---- parameters

def test_boundary_condition_validation():
    with pytest.raises(InvalidBoundary):
        BoundaryCondition([], [])
    with pytest.raises(InvalidBoundary):
        BoundaryCondition([1, 1], [0.0, 1.0])
    with pytest.raises(InvalidBoundary):
        BoundaryCondition([1, 2], [0.0])
    with pytest.raises(InvalidBoundary):
        BoundaryCondition([1], [np.inf])
    bc = BoundaryCondition([4, 2], np.ones((2, 3)))
    assert bc.m == 2 and bc.columns == 3 and not bc.vector


def test_default_mu():
    assert PimParams().resolve(201, 3) == pytest.approx(1e4 * 201 / 3)
    with pytest.raises(InvalidParameter):
        PimParams(mu=0.0)


def test_robin_mu_with_stated_beta():
    # beta = 1e-4 |dM|/|M| fed through mu = (2/beta) n |dM| / (m |M|)
    ratio = 0.37
    assert robin_mu(1e-4 * ratio, 200, 4, ratio) == pytest.approx(2e4 * 200 / 4)


def test_layer_radius_monotone_in_delta():
    # t < 1: a larger delta means a smaller exponent and so a wider layer
    deltas = (0.05, 0.1, 0.2, 0.3, 0.45)
    assert strictly_decreasing([VcmParams(d).layer_radius(0.01) for d in deltas][::-1])
    assert strictly_decreasing([VcmParams(d).layer_radius(4.0) for d in deltas])
    assert VcmParams().layer_radius(0.01) == pytest.approx(0.01 ** 0.4)
    for bad in (0.0, 0.5, -0.1):
        with pytest.raises(InvalidParameter):
            VcmParams(bad)


# ---- exactness properties

@pytest.mark.parametrize("seed", range(10))
def test_constant_boundary_reproduced(seed):
    cloud, B, rng = instance(seed)
    c = float(rng.standard_normal())
    ctx = prepare_kernel(cloud, E, 8)
    for m in methods_for(cloud):
        u = extend(m, ctx, BoundaryCondition(B, np.full(B.size, c))).u
        assert np.max(np.abs(u - c)) <= 1e-10, m


@pytest.mark.parametrize("seed", range(50))
def test_maximum_principle_exact(seed):
    cloud, B, rng = instance(seed)
    g = rng.standard_normal(B.size)
    ctx = prepare_kernel(cloud, E, 8)
    for m in ("glm", "vcm", "fem1d") if cloud.d == 1 else ("glm", "vcm"):
        u = extend(m, ctx, BoundaryCondition(B, g)).u
        assert g.min() <= u.min() and u.max() <= g.max(), m


@pytest.mark.parametrize("seed", range(10))
def test_linearity(seed):
    cloud, B, rng = instance(seed)
    g1, g2 = rng.standard_normal((2, B.size))
    a, b = rng.standard_normal(2)
    ctx = prepare_kernel(cloud, E, 8)
    for m in methods_for(cloud):
        u1 = extend(m, ctx, BoundaryCondition(B, g1)).u
        u2 = extend(m, ctx, BoundaryCondition(B, g2)).u
        u = extend(m, ctx, BoundaryCondition(B, a * g1 + b * g2)).u
        assert np.max(np.abs(u - (a * u1 + b * u2))) <= 1e-9, m


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.randoms())
def test_permutation_equivariance(seed, rnd):
    cloud, B, rng = instance(seed)
    g = rng.standard_normal(B.size)
    perm = list(range(cloud.n))
    rnd.shuffle(perm)
    perm = np.array(perm)
    inv = np.argsort(perm)
    # fixed t: the bandwidth itself is permutation invariant only up to summation order
    ctx = prepare_kernel(cloud, E, 8, t=0.003)
    ctxp = prepare_kernel(PointCloud(cloud.points[perm]), E, 8, t=0.003)
    thin = VcmParams(0.05)
    for m in methods_for(cloud):
        u = extend(m, ctx, BoundaryCondition(B, g), vcm=thin, opts=DENSE).u
        up = extend(m, ctxp, BoundaryCondition(inv[B], g), vcm=thin, opts=DENSE).u
        assert np.allclose(up, u[perm], rtol=0, atol=1e-9), m


def test_multi_column_matches_column_by_column():
    cloud, B, rng = instance(3, d=2)
    G = rng.standard_normal((B.size, 3))
    ctx = prepare_kernel(cloud, E, 8)
    for m in ("glm", "pim", "vcm"):
        U = extend(m, ctx, BoundaryCondition(B, G)).u
        assert U.shape == (cloud.n, 3)
        for j in range(3):
            assert np.allclose(U[:, j], extend(m, ctx, BoundaryCondition(B, G[:, j])).u, rtol=0, atol=1e-12)


# ---- dense oracles

@pytest.mark.parametrize("seed", range(5))
def test_glm_matches_full_dense_system(seed):
    cloud, B, rng = instance(seed, d=2, n=45)
    g = rng.standard_normal(B.size)
    t = 0.02
    _, L = dense_laplacian(cloud.points, t)
    A = L.copy()
    A[B] = 0.0
    A[B, B] = 1.0
    rhs = np.zeros(cloud.n)
    rhs[B] = g
    oracle = la.solve(A, rhs)
    ctx = prepare_kernel(cloud, E, t=t)
    for solver in ("conjugate-gradient", "dense-direct"):
        u = extend_glm(ctx.laplacian, BoundaryCondition(B, g), SolveOptions(solver)).u
        assert np.linalg.norm(u - oracle) <= 1e-8 * np.linalg.norm(oracle)


@pytest.mark.parametrize("seed", range(5))
def test_pim_matches_dense_system(seed):
    cloud, B, rng = instance(seed, d=2, n=45)
    g = rng.standard_normal(B.size)
    t = 0.02
    W, L = dense_laplacian(cloud.points, t)
    mu = 1e4 * cloud.n / B.size
    P = np.zeros_like(W)
    P[:, B] = W[:, B]
    oracle = la.solve(L + mu * P, mu * W[:, B] @ g)
    ctx = prepare_kernel(cloud, E, t=t)
    # the default path factors directly at this size; the Krylov path is held
    # to the looser iterative-vs-direct tolerance (mu ~ 1e4 n/m makes it stiff)
    for solver, tol in (("auto", 1e-8), ("stabilized-biconjugate", 1e-7)):
        f = extend_pim(ctx.laplacian, ctx.kernel, BoundaryCondition(B, g), PimParams(), SolveOptions(solver))
        assert f.mu == mu and f.effective_boundary.size == 0
        assert np.linalg.norm(f.u - oracle) <= tol * np.linalg.norm(oracle)


def test_pim_robin_neumann_identity():
    cloud, B, rng = instance(11, d=2, n=80)
    g = rng.standard_normal(B.size)
    beta, ratio = 1e-3, 0.5
    mu = robin_mu(beta, cloud.n, B.size, ratio)
    ctx = prepare_kernel(cloud, E, 8)
    u = extend_pim(ctx.laplacian, ctx.kernel, BoundaryCondition(B, g), PimParams(mu, beta, ratio), DENSE).u
    h = (g - u[B]) / beta
    WB = ctx.kernel.W[:, B]
    residual = ctx.laplacian.L @ u - 2 * cloud.n * ratio / B.size * (WB @ h)
    assert np.linalg.norm(residual) <= 1e-10 * mu * np.linalg.norm(WB @ g)


# ---- VCM

def test_vcm_pins_layer_to_nearest_boundary_value():
    cloud, B, rng = instance(4, d=2, n=120)
    g = rng.standard_normal(B.size)
    ctx = prepare_kernel(cloud, E, 8)
    params = VcmParams(0.1)
    prox = boundary_proximity(ctx, B, params)
    f = extend_vcm(ctx.laplacian, prox, BoundaryCondition(B, g), params)
    layer = np.flatnonzero(prox.distance < params.layer_radius(ctx.t))
    assert set(f.effective_boundary) == set(layer) | set(B)
    X = cloud.points
    for i in f.effective_boundary:
        d = np.linalg.norm(X[B] - X[i], axis=1)
        j = np.flatnonzero(d == d.min())
        nearest = j[np.argmin(B[j])]
        assert f.u[i] == g[nearest]
    free = np.setdiff1d(np.arange(cloud.n), f.effective_boundary)
    r = ctx.laplacian.L[free] @ f.u
    assert np.linalg.norm(r) <= 1e-9 * np.linalg.norm(ctx.laplacian.L[free][:, f.effective_boundary] @ f.u[f.effective_boundary])


def test_vcm_everything_in_layer_is_an_error():
    cloud, B, _ = instance(2, d=1, n=40)
    ctx = prepare_kernel(cloud, E, 8, t=0.5)
    with pytest.raises(InvalidBoundary):
        extend("vcm", ctx, BoundaryCondition(B, np.zeros(B.size)), vcm=VcmParams(0.1))


# ---- GLM / ill-posedness

def test_glm_interior_rows_harmonic():
    cloud, B, rng = instance(6, d=2, n=150)
    g = rng.standard_normal(B.size)
    ctx = prepare_kernel(cloud, E, 8)
    f = extend_glm(ctx.laplacian, BoundaryCondition(B, g))
    assert np.array_equal(f.u[B], g) and np.array_equal(f.effective_boundary, B)
    free = np.setdiff1d(np.arange(cloud.n), B)
    assert np.linalg.norm(ctx.laplacian.L[free] @ f.u) <= 1e-9 * np.linalg.norm(ctx.laplacian.L[free][:, B] @ g)


def test_component_without_boundary_is_ill_posed():
    cloud = PointCloud(np.array([0.0, 0.1, 0.2, 10.0, 10.1, 10.2]))
    ctx = prepare_kernel(cloud, E, 2, t=0.01, truncation_radius=1.0)
    for m in ("glm", "pim", "vcm"):
        with pytest.raises(IllPosedExtension):
            extend(m, ctx, BoundaryCondition([0], [1.0]))


def test_all_points_on_boundary_is_rejected():
    cloud = PointCloud(np.array([0.0, 1.0, 2.0]))
    ctx = prepare_kernel(cloud, E, 1, t=0.5)
    with pytest.raises(InvalidBoundary):
        extend_glm(ctx.laplacian, BoundaryCondition([0, 1, 2], [0.0, 1.0, 0.0]))


def test_unknown_method():
    cloud = PointCloud(np.array([0.0, 1.0, 2.0]))
    with pytest.raises(InvalidParameter):
        extend("fdm", prepare_kernel(cloud, E, 1, t=0.5), BoundaryCondition([0], [1.0]))


# ---- FEM1D

def test_fem1d_hat_function_exact():
    cloud, bc = sample_interval_demo(3)
    u = extend_fem1d(cloud, bc).u
    assert np.max(np.abs(u - hat_function(cloud.points[:, 0]))) <= 1e-12


def test_fem1d_two_point_ramp_and_constant():
    rng = np.random.default_rng(1)
    x = np.concatenate([[-1.0], rng.uniform(-1, 3, 60), [3.0]])
    cloud = PointCloud(x)
    u = extend_fem1d(cloud, BoundaryCondition([0, 61], [2.0, -6.0])).u
    assert np.max(np.abs(u - (2.0 - 2.0 * (x + 1)))) <= 1e-12
    u = extend_fem1d(cloud, BoundaryCondition([61, 0], [0.7, 0.7])).u
    assert np.max(np.abs(u - 0.7)) <= 1e-12


def test_fem1d_preconditions():
    with pytest.raises(InvalidInput):
        extend_fem1d(PointCloud(np.array([0.0, 0.5, 0.5, 1.0])), BoundaryCondition([0, 3], [0.0, 1.0]))
    with pytest.raises(IllPosedExtension):
        extend_fem1d(PointCloud(np.array([0.0, 0.5, 1.0])), BoundaryCondition([0, 1], [0.0, 1.0]))
    with pytest.raises(InvalidParameter):
        extend_fem1d(PointCloud(np.zeros((3, 2)) + np.arange(3)[:, None]), BoundaryCondition([0, 2], [0.0, 1.0]))


# ---- interpolants

def test_interpolants_of_constant_are_constant():
    cloud, B, _ = instance(8, d=2, n=100)
    ctx = prepare_kernel(cloud, E, 8)
    bc = BoundaryCondition(B, np.full(B.size, 1.25))
    q = np.random.default_rng(0).random((30, 2))
    fp = extend("pim", ctx, bc)
    fv = extend("vcm", ctx, bc)
    assert np.allclose(interpolate_pim(fp, cloud, ctx.kernel, bc, q), 1.25, rtol=0, atol=1e-10)
    assert np.allclose(interpolate_vcm(fv, cloud, ctx.kernel, q), 1.25, rtol=0, atol=1e-12)


def test_pim_interpolant_reproduces_nodal_values():
    cloud, bc = sample_interval_demo(0)
    ctx = prepare_kernel(cloud, E, t=DEMO_T)
    f = extend("pim", ctx, bc)
    vals = interpolate_pim(f, cloud, ctx.kernel, bc, cloud.points)
    assert np.allclose(vals, f.u, rtol=0, atol=1e-9)
    assert interpolate_pim(f, cloud, ctx.kernel, bc, cloud.points[5]) == pytest.approx(f.u[5], abs=1e-9)


def test_interpolant_concentrates_at_small_t():
    cloud, B, rng = instance(9, d=2, n=60)
    g = rng.standard_normal(B.size)
    ctx = prepare_kernel(cloud, E, 8, t=1e-4)
    f = extend("vcm", ctx, BoundaryCondition(B, g), vcm=VcmParams(0.05))
    free = np.setdiff1d(np.arange(cloud.n), f.effective_boundary)
    D = np.linalg.norm(cloud.points[:, None] - cloud.points[None], axis=2) + np.eye(cloud.n) * 9
    i = int(free[np.argmax(D[free].min(axis=1))])
    assert D[i].min() > 0.1
    assert interpolate_vcm(f, cloud, ctx.kernel, cloud.points[i]) == pytest.approx(f.u[i], abs=1e-9)


def test_interpolant_far_query_out_of_support():
    cloud, B, _ = instance(10, d=2, n=50)
    ctx = prepare_kernel(cloud, E, 8, t=1e-4)
    f = extend("vcm", ctx, BoundaryCondition(B, np.zeros(B.size)))
    with pytest.raises(OutOfSupport):
        interpolate_vcm(f, cloud, ctx.kernel, np.array([100.0, 100.0]))


def test_graph_metric_interpolation_rejected():
    cloud, B, _ = instance(10, d=2, n=50)
    ctx = prepare_kernel(cloud, Metric.graph("euclidean", 6), t=0.02)
    f = extend("vcm", ctx, BoundaryCondition(B, np.zeros(B.size)))
    with pytest.raises(InvalidParameter):
        interpolate_vcm(f, cloud, ctx.kernel, cloud.points[:2])


# ---- the interval demo

@pytest.fixture(scope="module")
def demo():
    return demo1d()


def test_demo_sizes(demo):
    assert demo.x.size == 201 and demo.mu == pytest.approx(1e4 * 201 / 3)


def test_demo_glm_misses_the_peak(demo):
    assert demo.errors()["glm"]["linf"] > 0.3


def test_demo_pim_beats_glm(demo):
    e = demo.errors()
    assert e["pim"]["rms"] < e["glm"]["rms"]


def test_demo_vcm_within_tolerance(demo):
    assert demo.errors()["vcm"]["rms"] <= 0.1


def test_demo_fem1d_exact(demo):
    assert demo.errors()["fem1d"]["linf"] <= 1e-12


def test_demo_vcm_interpolant_away_from_boundary():
    cloud, bc = sample_interval_demo(0)
    ctx = prepare_kernel(cloud, E, t=DEMO_T)
    f = extend("vcm", ctx, bc)
    lr = VcmParams().layer_radius(ctx.t)
    grid = np.linspace(0, 2, 4001)
    grid = grid[np.min(np.abs(grid[:, None] - np.array([0.0, 1.0, 2.0])), axis=1) >= lr]
    err = interpolate_vcm(f, cloud, ctx.kernel, grid[:, None]) - hat_function(grid)
    assert math.sqrt(np.mean(err ** 2)) <= 0.1


def test_integral_residual_decreases_under_refinement():
    assert strictly_decreasing(residual_ladder())
