"""K-means cluster codebook over sentence embeddings.

Lloyd's algorithm with k-means++ initialization, squared-Euclidean distance,
and deterministic empty-cluster repair.  Distance math runs in float64;
the stored centroids are float32 so an in-memory Codebook round-trips its
on-disk form ("SCBK") bit-exactly, and the stored inertia is recomputed
against those float32 centroids so it stays reproducible from the file.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, FormatError, ShapeError

MAGIC = b"SCBK"
VERSION = 1

# Points per chunk in the assignment step; keeps the (chunk, k, dim) distance
# tensor small while staying vectorized.
_CHUNK = 256


@dataclass(frozen=True, eq=False)
class Codebook:
    """k centroids learned over sentence embeddings; the token vocabulary."""

    k: int
    dim: int
    centroids: np.ndarray  # (k, dim) float32
    inertia: float
    seed: int
    iterations_run: int
    # In-memory extras from the fit (not persisted): per-iteration inertia
    # and the final training-set assignment.
    trace: tuple[float, ...] = ()
    labels: np.ndarray | None = field(default=None, compare=False)


def _as_matrix(vectors) -> np.ndarray:
    matrix = np.asarray(vectors)
    if matrix.dtype == object or matrix.ndim != 2:
        raise ShapeError("vectors must form a uniform 2-d array")
    return np.ascontiguousarray(matrix, dtype=np.float64)


def _assign_chunked(matrix: np.ndarray, centroids: np.ndarray):
    """Nearest-centroid labels and squared distances, ties to lowest index."""
    n = matrix.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dists = np.empty(n, dtype=np.float64)
    for lo in range(0, n, _CHUNK):
        chunk = matrix[lo : lo + _CHUNK]
        d2 = ((chunk[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        labels[lo : lo + _CHUNK] = np.argmin(d2, axis=1)
        dists[lo : lo + _CHUNK] = d2[np.arange(chunk.shape[0]), labels[lo : lo + _CHUNK]]
    return labels, dists


def _plusplus_init(matrix: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Classic k-means++ seeding: first center uniform, then D^2 sampling."""
    n = matrix.shape[0]
    centers = np.empty((k, matrix.shape[1]), dtype=np.float64)
    centers[0] = matrix[rng.integers(n)]
    d2 = ((matrix - centers[0]) ** 2).sum(axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # All remaining mass is on already-chosen points; cannot happen
            # when k <= the distinct-point count, which the caller enforced.
            raise ConfigError("k-means++ ran out of distinct points")
        centers[i] = matrix[rng.choice(n, p=d2 / total)]
        d2 = np.minimum(d2, ((matrix - centers[i]) ** 2).sum(axis=1))
    return centers


def kmeans_fit(
    vectors,
    k: int,
    max_iter: int = 100,
    tol: float = 1e-4,
    seed: int = 0,
) -> Codebook:
    """Fit the cluster codebook by Lloyd's algorithm.

    Stops when the largest centroid shift drops below tol or after max_iter
    iterations.  The per-iteration inertia (sum of squared distances to the
    nearest centroid, measured at the assignment step) is recorded in the
    returned trace and is non-increasing.  Empty clusters are repaired by
    moving the centroid onto the point currently farthest from its own
    centroid, each such point used at most once per iteration.

    Identical (vectors, k, max_iter, tol, seed) give a bit-identical result.
    """
    matrix = _as_matrix(vectors)
    n, dim = matrix.shape
    if n == 0:
        raise ShapeError("cannot fit a codebook on zero vectors")
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    n_distinct = n if k <= 1 else np.unique(matrix, axis=0).shape[0]
    if k > n_distinct:
        raise ConfigError(f"infeasible k={k}: only {n_distinct} distinct vectors")

    rng = np.random.default_rng(seed)
    centroids = _plusplus_init(matrix, k, rng)
    trace: list[float] = []
    labels = np.zeros(n, dtype=np.int64)
    iterations = 0

    for _ in range(max_iter):
        labels, dists = _assign_chunked(matrix, centroids)
        trace.append(float(dists.sum()))

        new_centroids = centroids.copy()
        counts = np.bincount(labels, minlength=k)
        for i in range(k):
            if counts[i] > 0:
                new_centroids[i] = matrix[labels == i].mean(axis=0)

        # Deterministic rescue: farthest point (by the distances measured at
        # the assignment step) seeds each empty cluster, lowest index first.
        consumed = dists.copy()
        for i in np.flatnonzero(counts == 0):
            far = int(np.argmax(consumed))
            new_centroids[i] = matrix[far]
            consumed[far] = -np.inf

        shift = float(np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max())
        centroids = new_centroids
        iterations += 1
        if shift < tol:
            break

    centroids32 = centroids.astype(np.float32)
    labels, dists = _assign_chunked(matrix, centroids32.astype(np.float64))
    return Codebook(
        k=k,
        dim=dim,
        centroids=centroids32,
        inertia=float(dists.sum()),
        seed=seed,
        iterations_run=iterations,
        trace=tuple(trace),
        labels=labels,
    )


def assign(codebook: Codebook, vector) -> int:
    """Cluster id of the nearest centroid, ties broken by lowest index."""
    v = np.asarray(vector, dtype=np.float64)
    if v.shape != (codebook.dim,):
        raise ShapeError(f"expected a vector of dim {codebook.dim}, got shape {v.shape}")
    d2 = ((codebook.centroids.astype(np.float64) - v) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def assign_batch(codebook: Codebook, vectors) -> np.ndarray:
    """Vectorized assign() over the rows of a matrix."""
    matrix = _as_matrix(vectors)
    if matrix.shape[1] != codebook.dim:
        raise ShapeError(
            f"expected vectors of dim {codebook.dim}, got {matrix.shape[1]}"
        )
    labels, _ = _assign_chunked(matrix, codebook.centroids.astype(np.float64))
    return labels


def inertia(codebook: Codebook, vectors) -> float:
    """Sum of squared distances from each vector to its nearest centroid."""
    matrix = _as_matrix(vectors)
    if matrix.shape[1] != codebook.dim:
        raise ShapeError(
            f"expected vectors of dim {codebook.dim}, got {matrix.shape[1]}"
        )
    _, dists = _assign_chunked(matrix, codebook.centroids.astype(np.float64))
    return float(dists.sum())


def write_codebook(codebook: Codebook, path) -> None:
    """Serialize to the "SCBK" binary layout (little-endian)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(
            struct.pack(
                "<IIIqId",
                VERSION,
                codebook.k,
                codebook.dim,
                codebook.seed,
                codebook.iterations_run,
                codebook.inertia,
            )
        )
        fh.write(np.ascontiguousarray(codebook.centroids, dtype="<f4").tobytes())


def read_codebook(path) -> Codebook:
    """Load a codebook written by write_codebook."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise FormatError(f"bad magic in {path}: {data[:4]!r}")
    header = struct.Struct("<IIIqId")
    if len(data) < 4 + header.size:
        raise FormatError(f"truncated codebook file {path}: short header")
    version, k, dim, seed, iterations, inertia_value = header.unpack_from(data, 4)
    if version != VERSION:
        raise FormatError(f"unsupported codebook version {version} in {path}")
    body = data[4 + header.size :]
    if len(body) != k * dim * 4:
        raise FormatError(
            f"truncated codebook file {path}: expected {k * dim * 4} centroid bytes, "
            f"got {len(body)}"
        )
    centroids = np.frombuffer(body, dtype="<f4").reshape(k, dim).copy()
    return Codebook(
        k=k,
        dim=dim,
        centroids=centroids,
        inertia=inertia_value,
        seed=seed,
        iterations_run=iterations,
    )
