"""Graph-based semi-supervised classification.

One harmonic extension per class of the one-hot indicator on the labelled
points, then argmax. The local-and-global-consistency propagation of Zhou
et al. is provided as a baseline.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateInput, InvalidParameter
from .geometry import CHUNK, Metric, PointCloud, build_knn_graph, graph_distance_matrix, pairwise_distances
from .kernel import KernelContext, prepare_kernel
from .methods import BoundaryCondition, PimParams, VcmParams, extend
from .solver import SolveOptions, solve_or_escalate

SSL_METHODS = ("glm", "pim", "vcm", "fem1d", "zhou")
ZHOU_TOL = 1e-10
ZHOU_MAX_ITER = 10_000


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """A cloud with some points labelled by class codes ``0 .. n_classes-1``."""

    cloud: PointCloud
    indices: np.ndarray
    classes: np.ndarray
    n_classes: int

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64)
        cls = np.asarray(self.classes, dtype=np.int64)
        if idx.ndim != 1 or idx.shape != cls.shape:
            raise InvalidParameter("indices and classes must be matching 1-D arrays")
        if np.unique(idx).size != idx.size:
            raise InvalidParameter("a point is labelled twice")
        if idx.size and (idx.min() < 0 or idx.max() >= self.cloud.n):
            raise InvalidParameter("labelled index out of range")
        if cls.size and (cls.min() < 0 or cls.max() >= self.n_classes):
            raise InvalidParameter(f"class codes must lie in [0, {self.n_classes})")
        order = np.argsort(idx)
        object.__setattr__(self, "indices", idx[order])
        object.__setattr__(self, "classes", cls[order])

    @classmethod
    def from_mapping(cls, cloud: PointCloud, labels: dict[int, int], n_classes: int | None = None):
        idx = np.fromiter(labels.keys(), dtype=np.int64, count=len(labels))
        lab = np.fromiter(labels.values(), dtype=np.int64, count=len(labels))
        if n_classes is None:
            n_classes = int(lab.max()) + 1 if lab.size else 1
        return cls(cloud, idx, lab, n_classes)

    def indicators(self) -> np.ndarray:
        """``m x l`` one-hot boundary values, one column per class."""
        G = np.zeros((self.indices.size, self.n_classes))
        G[np.arange(self.indices.size), self.classes] = 1.0
        return G


@dataclass(frozen=True, eq=False)
class LabelAssignment:
    labels: np.ndarray
    scores: np.ndarray


def argmax_labels(scores: np.ndarray) -> np.ndarray:
    """Row-wise argmax; equal scores resolve to the lowest class."""
    return np.argmax(np.asarray(scores), axis=1)


def _assign(data: LabeledDataset, scores: np.ndarray) -> LabelAssignment:
    labels = argmax_labels(scores)
    labels[data.indices] = data.classes
    return LabelAssignment(labels, scores)


def _check_ssl(data: LabeledDataset):
    if data.indices.size == 0:
        raise InvalidParameter("need at least one labelled point")
    if data.indices.size >= data.cloud.n:
        raise InvalidParameter("need at least one unlabelled point")


def run_ssl(data: LabeledDataset, method: str = "pim", ctx: KernelContext | None = None, *,
            metric: Metric | None = None, k: int = 10, t: float | None = None,
            pim: PimParams | None = None, vcm: VcmParams | None = None,
            opts: SolveOptions | None = None) -> LabelAssignment:
    """Label every point by argmax over per-class harmonic extensions.

    ``ctx`` lets repeated calls share the kernel; otherwise one is built
    from ``metric``/``k``/``t`` (``t=None`` selects ``h**2``).
    """
    _check_ssl(data)
    if method == "zhou":
        return zhou_lgc(data, metric=metric or (ctx.metric if ctx else Metric.euclidean()))
    if method not in SSL_METHODS:
        raise InvalidParameter(f"unknown method {method!r}; choose from {SSL_METHODS}")
    if ctx is None:
        ctx = prepare_kernel(data.cloud, metric or Metric.euclidean(), k, t)
    bc = BoundaryCondition(data.indices, data.indicators())
    field = extend(method, ctx, bc, pim=pim, vcm=vcm, opts=opts)
    return _assign(data, field.u)


def zhou_distances(cloud: PointCloud, metric: Metric, graph=None) -> np.ndarray:
    n = cloud.n
    if not metric.is_graph:
        return np.vstack([pairwise_distances(cloud.rows(slice(lo, lo + CHUNK)), cloud.points, metric)
                          for lo in range(0, n, CHUNK)])
    if graph is None:
        graph = build_knn_graph(cloud, metric.base, metric.k)
    D = np.vstack([graph_distance_matrix(graph, np.arange(lo, min(lo + CHUNK, n))) for lo in range(0, n, CHUNK)])
    return np.minimum(D, D.T)


def zhou_operator(distances: np.ndarray, sigma: float = 0.3) -> np.ndarray:
    """Symmetrically normalised RBF affinity ``D^-1/2 A D^-1/2`` with zero diagonal."""
    if not sigma > 0:
        raise InvalidParameter("sigma must be positive")
    A = np.exp(-np.square(distances) / (2.0 * sigma * sigma))
    np.fill_diagonal(A, 0.0)
    deg = A.sum(axis=1)
    if np.any(deg == 0):
        raise DegenerateInput(
            f"point {int(np.flatnonzero(deg == 0)[0])} has zero affinity to all others at sigma={sigma}"
        )
    dinv = 1.0 / np.sqrt(deg)
    return A * np.outer(dinv, dinv)


def zhou_propagate(S: np.ndarray, Y: np.ndarray, alpha: float = 0.3, solver: str = "closed"):
    """``F = (1 - alpha) (I - alpha S)^-1 Y``, by direct solve or by fixed-point iteration.

    Returns ``(F, iterations)``; the closed form reports 0 iterations.
    """
    if not 0 < alpha < 1:
        raise InvalidParameter("alpha must lie in (0, 1)")
    if solver == "closed":
        M = sp.csr_matrix(np.eye(S.shape[0]) - alpha * S)
        F, _ = solve_or_escalate(M, (1 - alpha) * Y, SolveOptions(tolerance=1e-13))
        return F, 0
    if solver != "iterate":
        raise InvalidParameter(f"unknown zhou solver {solver!r}")
    F = (1 - alpha) * Y
    for it in range(1, ZHOU_MAX_ITER + 1):
        nxt = alpha * (S @ F) + (1 - alpha) * Y
        step = np.max(np.abs(nxt - F))
        F = nxt
        if step <= ZHOU_TOL:
            return F, it
    return F, ZHOU_MAX_ITER


def zhou_lgc(data: LabeledDataset, sigma: float = 0.3, alpha: float = 0.3, metric: Metric | None = None,
             solver: str = "closed", S: np.ndarray | None = None) -> LabelAssignment:
    _check_ssl(data)
    if S is None:
        S = zhou_operator(zhou_distances(data.cloud, metric or Metric.euclidean()), sigma)
    Y = np.zeros((data.cloud.n, data.n_classes))
    Y[data.indices, data.classes] = 1.0
    F, _ = zhou_propagate(S, Y, alpha, solver)
    return _assign(data, F)


def sample_labels(truth: np.ndarray, k_labels: int, rng: np.random.Generator) -> np.ndarray:
    """``k_labels`` distinct indices drawn uniformly from each class, classes in sorted order."""
    picks = []
    for c in np.unique(truth):
        members = np.flatnonzero(truth == c)
        if members.size < k_labels:
            raise InvalidParameter(f"class {c} has {members.size} members, fewer than k_labels={k_labels}")
        picks.append(rng.choice(members, size=k_labels, replace=False))
    return np.sort(np.concatenate(picks))


def trial_rng(seed: int, k_labels: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([seed, k_labels, trial])


@dataclass
class TrialResults:
    records: list[tuple[str, int, int, float]]

    def summary(self) -> list[tuple[str, int, float, float]]:
        """``(method, k_labels, mean, std)``; std is the sample std (0 for one trial)."""
        groups: dict[tuple[str, int], list[float]] = {}
        for method, k, _, err in self.records:
            groups.setdefault((method, k), []).append(err)
        out = []
        for (method, k), errs in groups.items():
            e = np.asarray(errs)
            out.append((method, k, float(e.mean()), float(e.std(ddof=1)) if e.size > 1 else 0.0))
        return out

    def mean(self, method: str, k_labels: int) -> float:
        return next(m for meth, k, m, _ in self.summary() if meth == method and k == k_labels)


def run_trials(cloud: PointCloud, truth, k_labels, n_trials: int, methods, seed: int = 0, *,
               metric: Metric | None = None, k: int = 10, t: float | None = None,
               pim: PimParams | None = None, vcm: VcmParams | None = None,
               opts: SolveOptions | None = None, sigma: float = 0.3, alpha: float = 0.3,
               ctx: KernelContext | None = None) -> TrialResults:
    """Repeated random-label experiments.

    For each labels-per-class count and trial, one labelled subset is drawn
    from a stream keyed on ``(seed, k_labels, trial)`` and handed to every
    method. The error rate is the misclassified fraction of unlabelled
    points (0 when none are left).
    """
    truth = np.asarray(truth)
    if truth.shape != (cloud.n,):
        raise InvalidParameter("ground truth needs one label per point")
    codes, coded = np.unique(truth, return_inverse=True)
    ks = [int(k_labels)] if np.isscalar(k_labels) else [int(v) for v in k_labels]
    methods = list(methods)
    for m in methods:
        if m not in SSL_METHODS:
            raise InvalidParameter(f"unknown method {m!r}")
    metric = metric or Metric.euclidean()
    if ctx is None and any(m != "zhou" for m in methods):
        ctx = prepare_kernel(cloud, metric, k, t)
    S = None
    if "zhou" in methods:
        S = zhou_operator(zhou_distances(cloud, metric, ctx.graph if ctx and metric.is_graph else None), sigma)

    records = []
    for kl in ks:
        for trial in range(n_trials):
            labelled = sample_labels(coded, kl, trial_rng(seed, kl, trial))
            data = LabeledDataset(cloud, labelled, coded[labelled], codes.size)
            unl = np.setdiff1d(np.arange(cloud.n), labelled)
            for m in methods:
                if unl.size == 0:
                    records.append((m, kl, trial, 0.0))
                    continue
                if m == "zhou":
                    res = zhou_lgc(data, sigma, alpha, S=S)
                else:
                    res = run_ssl(data, m, ctx, pim=pim, vcm=vcm, opts=opts)
                err = float(np.mean(res.labels[unl] != coded[unl]))
                records.append((m, kl, trial, err))
    return TrialResults(records)


def write_trials_csv(results: TrialResults, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["method", "k_labels", "trial", "error_rate"])
        for method, k, trial, err in results.records:
            w.writerow([method, k, trial, f"{err:.17g}"])


def write_summary_csv(results: TrialResults, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["method", "k_labels", "mean", "std"])
        for method, k, mean, std in results.summary():
            w.writerow([method, k, f"{mean:.17g}", f"{std:.17g}"])
