"""Synthetic samplers and file readers.

Samplers draw from ``numpy.random.default_rng`` seeded streams and have a
prefix property: with the same seed, a smaller sample is the head of a
larger one, so refinement ladders are nested.
"""
from __future__ import annotations

import gzip
import math
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateInput, InvalidParameter, ParseError
from .geometry import PointCloud
from .methods import BoundaryCondition

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def sample_interval(n_random: int, seed, a: float = 0.0, b: float = 2.0,
                    boundary=(0.0, 1.0, 2.0), values=(0.0, 1.0, 0.0)):
    """``n_random`` uniform points strictly inside ``(a, b)`` followed by the boundary points."""
    if not a < b:
        raise InvalidParameter("interval needs a < b")
    if n_random < 1:
        raise InvalidParameter("need at least one random point")
    rng = np.random.default_rng(seed)
    x = a + (b - a) * rng.random(n_random)
    # random() can return exactly 0.0; push such draws off the endpoint
    x[x <= a] = np.nextafter(a, b)
    pts = np.concatenate([x, np.asarray(boundary, dtype=float)])
    B = np.arange(n_random, n_random + len(boundary))
    return PointCloud(pts[:, None]), BoundaryCondition(B, np.asarray(values, dtype=float))


def sample_interval_demo(seed=0):
    """198 uniform points on (0, 2) plus boundary {0, 1, 2} carrying g = (0, 1, 0)."""
    return sample_interval(198, seed)


def hat_function(x):
    """Harmonic extension of the demo data: ``x`` on [0, 1], ``2 - x`` on [1, 2]."""
    x = np.asarray(x, dtype=float)
    return np.where(x <= 1.0, x, 2.0 - x)


def sample_disk(n_interior: int, m_boundary: int, seed, radius: float = 1.0):
    """Uniform points in the open disk, then uniform points on its circle.

    Returns ``(cloud, boundary_indices)``; the boundary points come last.
    """
    if n_interior < 1 or m_boundary < 1:
        raise InvalidParameter("disk sampler needs counts >= 1")
    inner_rng, edge_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    u = inner_rng.random((n_interior, 2))
    r = radius * np.sqrt(u[:, 0])
    th = 2.0 * np.pi * u[:, 1]
    phi = 2.0 * np.pi * edge_rng.random(m_boundary)
    pts = np.vstack([
        np.column_stack([r * np.cos(th), r * np.sin(th)]),
        np.column_stack([radius * np.cos(phi), radius * np.sin(phi)]),
    ])
    return PointCloud(pts), np.arange(n_interior, n_interior + m_boundary)


def sample_blobs(centers, spread: float, counts, seed):
    """Isotropic Gaussian blobs; returns ``(cloud, labels)`` with labels 0..len(centers)-1."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    counts = np.broadcast_to(np.asarray(counts, dtype=int), (centers.shape[0],))
    if np.any(counts < 1):
        raise InvalidParameter("blob counts must be >= 1")
    rng = np.random.default_rng(seed)
    pts = [c + spread * rng.standard_normal((k, centers.shape[1])) for c, k in zip(centers, counts)]
    labels = np.repeat(np.arange(centers.shape[0]), counts)
    return PointCloud(np.vstack(pts)), labels


def subset_by_count(labels, counts, seed) -> np.ndarray:
    """Sorted indices of a random subset holding ``counts[c]`` members of class ``c``.

    ``counts`` maps class to count, or is one count applied to every class.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if np.isscalar(counts):
        counts = {int(c): int(counts) for c in classes}
    rng = np.random.default_rng(seed)
    picks = []
    for c in sorted(counts):
        members = np.flatnonzero(labels == c)
        if counts[c] > members.size:
            raise InvalidParameter(f"class {c} has {members.size} members, asked for {counts[c]}")
        picks.append(rng.choice(members, size=counts[c], replace=False))
    return np.sort(np.concatenate(picks)) if picks else np.empty(0, dtype=np.int64)


def _open(path):
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_idx(path, magic: int, ndim: int) -> np.ndarray:
    with _open(path) as f:
        raw = f.read()
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise ParseError("truncated IDX header", path, 0)
    got = int.from_bytes(raw[:4], "big")
    if got != magic:
        raise ParseError(f"bad IDX magic 0x{got:08x}, expected 0x{magic:08x}", path, 0)
    dims = [int.from_bytes(raw[4 + 4 * i: 8 + 4 * i], "big") for i in range(ndim)]
    size = math.prod(dims)
    if len(raw) - header != size:
        raise ParseError(f"IDX payload is {len(raw) - header} bytes, header promises {size}", path, header)
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx_images(path, expect_shape=(28, 28)) -> PointCloud:
    """IDX3 image file (optionally gzipped) flattened to rows scaled to [0, 1]."""
    arr = _read_idx(path, IDX_IMAGES_MAGIC, 3)
    if expect_shape is not None and tuple(arr.shape[1:]) != tuple(expect_shape):
        raise ParseError(f"image dims {arr.shape[1:]} != {tuple(expect_shape)}", path, 8)
    return PointCloud(arr.reshape(arr.shape[0], -1).astype(np.float64) / 255.0)


def load_idx_labels(path) -> np.ndarray:
    return _read_idx(path, IDX_LABELS_MAGIC, 1).astype(np.int64)


def _numeric_rows(path):
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                vals = [float(v) for v in line.split(",")]
            except ValueError:
                raise ParseError(f"non-numeric field in {line!r}", path, lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError("non-finite value", path, lineno)
            yield lineno, vals


def load_points_csv(path) -> PointCloud:
    """One point per row, comma-separated decimals; ``#`` lines are comments."""
    rows, width = [], None
    for lineno, vals in _numeric_rows(path):
        if width is None:
            width = len(vals)
        elif len(vals) != width:
            raise ParseError(f"row has {len(vals)} columns, expected {width}", path, lineno)
        rows.append(vals)
    if not rows:
        raise ParseError("no points", path)
    return PointCloud(np.array(rows))


def _index(v, path, lineno):
    if v != int(v) or v < 0:
        raise ParseError(f"bad index {v!r}", path, lineno)
    return int(v)


def load_labels_csv(path) -> dict[int, int]:
    """Partial label map from ``index,label`` rows."""
    labels = {}
    for lineno, vals in _numeric_rows(path):
        if len(vals) != 2:
            raise ParseError("expected index,label", path, lineno)
        i = _index(vals[0], path, lineno)
        if i in labels:
            raise ParseError(f"index {i} labelled twice", path, lineno)
        labels[i] = _index(vals[1], path, lineno)
    return labels


def load_truth_csv(path) -> np.ndarray:
    """Full label vector: one integer label per line, in point order."""
    out = []
    for lineno, vals in _numeric_rows(path):
        if len(vals) != 1:
            raise ParseError("expected one label per line", path, lineno)
        out.append(_index(vals[0], path, lineno))
    return np.array(out, dtype=np.int64)


def load_boundary_csv(path) -> BoundaryCondition:
    """``index,value[,value...]`` rows: boundary point and its value(s)."""
    idx, vals, width = [], [], None
    for lineno, row in _numeric_rows(path):
        if len(row) < 2 or (width is not None and len(row) != width):
            raise ParseError("expected index,value[,value...] with a fixed column count", path, lineno)
        width = len(row)
        idx.append(_index(row[0], path, lineno))
        vals.append(row[1:])
    if not idx:
        raise ParseError("empty boundary file", path)
    values = np.array(vals)
    return BoundaryCondition(np.array(idx), values[:, 0] if values.shape[1] == 1 else values)


def load_sparse_coo(path, dense: bool = False) -> PointCloud:
    """Header ``n d nnz`` then ``row col value`` lines, 0-indexed; duplicates rejected."""
    with open(path) as f:
        lines = [(i, ln.split()) for i, ln in enumerate(f, 1) if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ParseError("empty COO file", path)
    lineno, head = lines[0]
    try:
        n, d, nnz = (int(v) for v in head)
    except ValueError:
        raise ParseError("header must be 'n d nnz'", path, lineno) from None
    body = lines[1:]
    if len(body) != nnz:
        raise ParseError(f"header promises {nnz} entries, found {len(body)}", path, lineno)
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    for k, (lineno, parts) in enumerate(body):
        try:
            r, c, v = int(parts[0]), int(parts[1]), float(parts[2])
        except (ValueError, IndexError):
            raise ParseError("expected 'row col value'", path, lineno) from None
        if len(parts) != 3 or not (0 <= r < n and 0 <= c < d) or not math.isfinite(v):
            raise ParseError(f"entry ({r}, {c}, {v}) out of range or non-finite", path, lineno)
        rows[k], cols[k], vals[k] = r, c, v
    key = rows * d + cols
    order = np.argsort(key, kind="stable")
    repeat = order[1:][key[order[1:]] == key[order[:-1]]]
    if repeat.size:
        dup = int(repeat.min())  # earliest line that repeats an entry
        raise ParseError(f"duplicate entry ({rows[dup]}, {cols[dup]})", path, body[dup][0])
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(n, d))
    return PointCloud(mat.toarray() if dense else mat)


def tfidf_normalize(counts) -> sp.csr_matrix:
    """Natural term frequency times ``ln(n / df)``, rows scaled to unit length.

    Words that occur in no document are dropped; words in every document
    get weight zero. Raises ``DegenerateInput`` naming the first document
    left with an all-zero row.
    """
    X = sp.csr_matrix(counts, dtype=np.float64)
    if X.nnz and X.data.min() < 0:
        raise InvalidParameter("term counts must be nonnegative")
    X.eliminate_zeros()
    n = X.shape[0]
    df = np.bincount(X.indices, minlength=X.shape[1])
    keep = np.flatnonzero(df > 0)
    X = X[:, keep]
    idf = np.log(n / df[keep])
    X = sp.csr_matrix(X @ sp.diags(idf))
    X.eliminate_zeros()
    norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
    if np.any(norms == 0):
        raise DegenerateInput(f"document {int(np.flatnonzero(norms == 0)[0])} has no informative words")
    X = sp.csr_matrix(sp.diags(1.0 / norms) @ X)
    X.sort_indices()
    return X
