"""Linear solves for the extension systems.

Two Jacobi-preconditioned Krylov paths (conjugate gradient for symmetric
matrices, BiCGSTAB otherwise) and a dense LU path used for small systems and
as the reference the iterative paths are checked against.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .errors import InvalidParameter, SolverError

METHODS = ("auto", "conjugate-gradient", "stabilized-biconjugate", "dense-direct")
# `auto` factors densely up to this size
DIRECT_LIMIT = 500
# non-converged iterative solves fall back to LU up to this size
ESCALATE_LIMIT = 6000
_TINY = np.finfo(float).tiny


@dataclass(frozen=True)
class SolveOptions:
    method: str = "auto"
    tolerance: float = 1e-10
    max_iterations: int | None = None  # None -> 10 * n

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidParameter(f"unknown solver {self.method!r}; choose from {METHODS}")
        if not self.tolerance > 0:
            raise InvalidParameter("tolerance must be positive")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise InvalidParameter("max_iterations must be >= 1")

    def iterations_for(self, n: int) -> int:
        return self.max_iterations if self.max_iterations is not None else 10 * n


@dataclass(frozen=True)
class SolveReport:
    method: str
    iterations: int
    final_relative_residual: float
    converged: bool

    @staticmethod
    def merge(reports: list["SolveReport"]) -> "SolveReport":
        """Combine per-column reports: worst residual, total iterations."""
        return SolveReport(
            method=reports[0].method,
            iterations=sum(r.iterations for r in reports),
            final_relative_residual=max(r.final_relative_residual for r in reports),
            converged=all(r.converged for r in reports),
        )


def relative_residual(A, x, b) -> float:
    bnorm = np.linalg.norm(b)
    return float(np.linalg.norm(b - A @ x) / max(bnorm, _TINY))


def is_symmetric(A) -> bool:
    if sp.issparse(A):
        diff = (A - A.T).tocsr()
        diff.eliminate_zeros()
        return diff.nnz == 0
    A = np.asarray(A)
    return bool(np.array_equal(A, A.T))


def _jacobi(A) -> np.ndarray:
    d = np.asarray(A.diagonal(), dtype=float).copy()
    d[d == 0] = 1.0
    return 1.0 / d


def _pcg(A, b, tol, maxiter):
    n = b.shape[0]
    x = np.zeros(n)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return x, 0
    minv = _jacobi(A)
    r = b.copy()
    z = minv * r
    p = z.copy()
    rz = r @ z
    it = 0
    while it < maxiter:
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0:
            break
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        it += 1
        if np.linalg.norm(r) <= tol * bnorm:
            # recurrence residual drifts; confirm with the true one and restart if needed
            r = b - A @ x
            if np.linalg.norm(r) <= tol * bnorm:
                break
            z = minv * r
            p = z.copy()
            rz = r @ z
            continue
        z = minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, it


def _bicgstab(A, b, tol, maxiter):
    n = b.shape[0]
    x = np.zeros(n)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return x, 0
    minv = _jacobi(A)
    r = b.copy()
    it = 0
    while it < maxiter:
        # (re)start from the current true residual
        r_hat = r.copy()
        rho = alpha = omega = 1.0
        v = np.zeros(n)
        p = np.zeros(n)
        restart = False
        start = it
        while it < maxiter:
            rho_new = r_hat @ r
            if rho_new == 0 or omega == 0:
                restart = True
                break
            beta = (rho_new / rho) * (alpha / omega)
            rho = rho_new
            p = r + beta * (p - omega * v)
            y = minv * p
            v = A @ y
            denom = r_hat @ v
            if denom == 0:
                restart = True
                break
            alpha = rho / denom
            s = r - alpha * v
            it += 1
            if np.linalg.norm(s) <= tol * bnorm:
                x += alpha * y
                r = s
                break
            z = minv * s
            tv = A @ z
            tt = tv @ tv
            omega = (tv @ s) / tt if tt > 0 else 0.0
            x += alpha * y + omega * z
            r = s - omega * tv
            if np.linalg.norm(r) <= tol * bnorm:
                break
        r = b - A @ x
        if np.linalg.norm(r) <= tol * bnorm:
            break
        if it >= maxiter or (restart and it == start):
            break
    return x, it


def _as_columns(b):
    b = np.asarray(b, dtype=float)
    return (b[:, None], True) if b.ndim == 1 else (b, False)


def solve(A, b, opts: SolveOptions | None = None):
    """Solve ``A x = b``; ``b`` may hold several right-hand sides as columns.

    Returns ``(x, report)``. ``auto`` uses dense LU up to 500 unknowns,
    conjugate gradient when ``A`` is exactly symmetric and BiCGSTAB
    otherwise. A non-converged iterative solve is reported, not raised.
    """
    opts = opts or SolveOptions()
    n = A.shape[0]
    if A.shape != (n, n):
        raise InvalidParameter(f"matrix must be square, got {A.shape}")
    B, squeeze = _as_columns(b)
    if B.shape[0] != n:
        raise InvalidParameter(f"right-hand side has {B.shape[0]} rows, matrix has {n}")

    if not np.any(B):
        zero = SolveReport(opts.method, 0, 0.0, True)
        return (np.zeros(n) if squeeze else np.zeros_like(B)), zero

    method = opts.method
    if method == "auto":
        if n <= DIRECT_LIMIT:
            method = "dense-direct"
        elif is_symmetric(A):
            method = "conjugate-gradient"
        else:
            method = "stabilized-biconjugate"

    X = np.zeros_like(B)
    if method == "dense-direct":
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        try:
            with warnings.catch_warnings():
                # singularity is detected below and raised as SolverError
                warnings.simplefilter("ignore", la.LinAlgWarning)
                lu = la.lu_factor(dense, check_finite=True)
        except (ValueError, la.LinAlgError) as exc:
            raise SolverError(f"dense factorisation failed: {exc}") from exc
        if np.any(np.diag(lu[0]) == 0):
            raise SolverError("matrix is singular")
        X = la.lu_solve(lu, B)
        reports = [
            SolveReport(method, 1, res, res <= opts.tolerance)
            for res in (relative_residual(A, X[:, j], B[:, j]) for j in range(B.shape[1]))
        ]
    else:
        A = sp.csr_matrix(A)
        kernel = _pcg if method == "conjugate-gradient" else _bicgstab
        maxiter = opts.iterations_for(n)
        reports = []
        for j in range(B.shape[1]):
            X[:, j], its = kernel(A, B[:, j], opts.tolerance, maxiter)
            res = relative_residual(A, X[:, j], B[:, j])
            reports.append(SolveReport(method, its, res, res <= opts.tolerance))
    report = SolveReport.merge(reports)
    return (X[:, 0] if squeeze else X), report


def solve_or_escalate(A, b, opts: SolveOptions | None = None):
    """``solve`` that retries with dense LU when an iterative path stalls.

    Raises ``SolverError`` when neither path reaches the tolerance.
    """
    opts = opts or SolveOptions()
    x, report = solve(A, b, opts)
    if report.converged:
        return x, report
    n = A.shape[0]
    if report.method != "dense-direct" and n <= ESCALATE_LIMIT:
        x, report = solve(A, b, SolveOptions("dense-direct", opts.tolerance, opts.max_iterations))
        if report.converged:
            return x, report
    raise SolverError(
        f"{report.method} did not reach tolerance {opts.tolerance:g} "
        f"(relative residual {report.final_relative_residual:.3e} after {report.iterations} iterations)"
    )
