"""K-means partitioning of feature space and clustering-quality metrics.

Lloyd iterations with k-means++ seeding minimize the summed squared
Euclidean distance of points to their assigned centroids. Empty clusters
are repaired by reseeding from the point farthest from its centroid.
Assignment and accumulation run over fixed-size point chunks reduced in
chunk order, so results are bit-identical for any worker count; nearest-
centroid ties break toward the lowest centroid index.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import DataFormatError, NumericError, ValidationError
from .parallel import run_chunked

MAX_ITER_DEFAULT = 300
TOL_DEFAULT = 1e-6


@dataclass
class ClusterModel:
    """Fitted k-means model: centroids, per-sample assignments, and the
    final objective value (inertia)."""

    centroids: np.ndarray    # (k, d) float64
    assignments: np.ndarray  # (n,) int64
    inertia: float
    k: int
    iterations_run: int
    seed: int

    def __post_init__(self):
        if self.centroids.ndim != 2 or self.centroids.shape[0] != self.k:
            raise ValidationError("centroid matrix shape disagrees with k")
        counts = np.bincount(self.assignments, minlength=self.k)
        if self.assignments.min(initial=0) < 0 or self.assignments.max(initial=0) >= self.k:
            raise ValidationError("assignments reference invalid centroid indices")
        if np.any(counts == 0):
            raise ValidationError(f"cluster {int(np.argmin(counts))} is empty")


def _validate_points(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValidationError("expected a non-empty (n, d) matrix")
    if not np.all(np.isfinite(X)):
        raise ValidationError("input matrix contains non-finite values")
    return X


def _assign(X: np.ndarray, C: np.ndarray, workers: int = 1):
    """Nearest centroid per point plus per-cluster partial sums.

    Returns (assignments, min_sq_dists, sums, counts); all reductions run
    in fixed chunk order.
    """
    n, d = X.shape
    k = C.shape[0]
    x2 = np.einsum("ij,ij->i", X, X)
    c2 = np.einsum("ij,ij->i", C, C)
    Ct = C.T.copy()

    def chunk(s: int, e: int):
        d2 = x2[s:e, None] + c2[None, :] - 2.0 * (X[s:e] @ Ct)
        a = np.argmin(d2, axis=1)
        md = np.maximum(d2[np.arange(e - s), a], 0.0)
        sums = np.zeros((k, d))
        np.add.at(sums, a, X[s:e])
        counts = np.bincount(a, minlength=k)
        return a, md, sums, counts

    parts = run_chunked(chunk, n, workers=workers)
    assign = np.concatenate([p[0] for p in parts])
    min_d2 = np.concatenate([p[1] for p in parts])
    sums = np.zeros((k, d))
    counts = np.zeros(k, dtype=np.int64)
    for p in parts:
        sums += p[2]
        counts += p[3]
    return assign, min_d2, sums, counts


def _kmeans_pp_init(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding via inverse-CDF sampling on squared distances."""
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    first = int(rng.integers(n))
    centers[0] = X[first]
    d2 = np.einsum("ij,ij->i", X - centers[0], X - centers[0])
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        centers[j] = X[idx]
        diff = X - centers[j]
        d2 = np.minimum(d2, np.einsum("ij,ij->i", diff, diff))
    return centers


def _repair_empty(X, C, assign, min_d2, counts) -> bool:
    """Reseed each empty cluster from the point farthest from its centroid.

    Mutates C/assign/min_d2/counts in place; returns True if any repair
    happened. Fails if there are fewer distinct points than clusters.
    """
    repaired = False
    empties = np.flatnonzero(counts == 0)
    for cluster in empties:
        idx = int(np.argmax(min_d2))
        if min_d2[idx] <= 0.0:
            raise NumericError(
                f"cannot repair empty cluster {int(cluster)}: "
                "fewer distinct points than clusters")
        counts[assign[idx]] -= 1
        C[cluster] = X[idx]
        assign[idx] = cluster
        counts[cluster] += 1
        min_d2[idx] = 0.0
        repaired = True
    return repaired


def kmeans_fit(X: np.ndarray, k: int, seed: int = 0,
               max_iter: int = MAX_ITER_DEFAULT, tol: float = TOL_DEFAULT,
               workers: int = 1, restarts: int = 1) -> ClusterModel:
    """Fit k-means with k-means++ seeding and Lloyd iterations.

    Stops when the relative inertia improvement drops below ``tol`` or
    after ``max_iter`` centroid updates. ``restarts`` > 1 runs that many
    independently seeded fits and keeps the lowest-inertia one.
    Deterministic for fixed (X, k, seed) and any ``workers``.
    """
    X = _validate_points(X)
    n = X.shape[0]
    if not (1 <= k <= n):
        raise ValidationError(f"need 1 <= k <= n, got k={k}, n={n}")
    if restarts < 1:
        raise ValidationError("restarts must be at least 1")
    best: ClusterModel | None = None
    for r in range(restarts):
        if r == 0:
            rng = np.random.default_rng(seed)
        else:
            rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))
        model = _kmeans_single(X, k, seed, rng, max_iter, tol, workers)
        if best is None or model.inertia < best.inertia:
            best = model
    assert best is not None
    return best


def _kmeans_single(X, k, seed, rng, max_iter, tol, workers) -> ClusterModel:
    C = _kmeans_pp_init(X, k, rng)
    prev_inertia = np.inf
    iterations = 0
    while True:
        assign, min_d2, sums, counts = _assign(X, C, workers=workers)
        if _repair_empty(X, C, assign, min_d2, counts):
            # Rebuild the accumulators against the repaired assignment.
            sums = np.zeros_like(sums)
            np.add.at(sums, assign, X)
        inertia = float(min_d2.sum())
        if not inertia <= prev_inertia * (1.0 + 1e-12):
            raise NumericError(
                f"inertia increased across Lloyd iterations ({prev_inertia} -> {inertia})")
        converged = prev_inertia - inertia <= tol * prev_inertia if np.isfinite(prev_inertia) \
            else inertia == 0.0
        if converged or iterations >= max_iter:
            return ClusterModel(C, assign.astype(np.int64), inertia, k, iterations, seed)
        prev_inertia = inertia
        C = sums / counts[:, None]
        iterations += 1


def recompute_inertia(X: np.ndarray, model: ClusterModel) -> float:
    diff = np.asarray(X, dtype=np.float64) - model.centroids[model.assignments]
    return float(np.einsum("ij,ij->", diff, diff))


# ── clustering-quality metrics ────────────────────────────────────

def _labels_to_dense(assignments: np.ndarray) -> tuple[np.ndarray, int]:
    labels = np.asarray(assignments, dtype=np.int64)
    uniq = np.unique(labels)
    dense = np.searchsorted(uniq, labels)
    return dense, len(uniq)


def silhouette(X: np.ndarray, assignments: np.ndarray) -> float:
    """Mean silhouette coefficient.

    Per sample: a = mean distance to its own cluster (self excluded),
    b = smallest mean distance to another cluster, score (b - a)/max(a, b).
    Singleton-cluster samples and all-zero-distance samples score 0.
    """
    X = _validate_points(X)
    labels, k = _labels_to_dense(assignments)
    n = X.shape[0]
    if labels.shape[0] != n:
        raise ValidationError("assignments length disagrees with X")
    if k < 2:
        raise NumericError("silhouette undefined for a single cluster")
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    onehot = np.zeros((n, k))
    onehot[np.arange(n), labels] = 1.0
    x2 = np.einsum("ij,ij->i", X, X)
    Xt = X.T.copy()

    def chunk(s: int, e: int) -> float:
        d2 = x2[s:e, None] + x2[None, :] - 2.0 * (X[s:e] @ Xt)
        dist = np.sqrt(np.maximum(d2, 0.0))
        cluster_sums = dist @ onehot                     # (rows, k)
        rows = np.arange(e - s)
        own = labels[s:e]
        own_count = counts[own]
        a = np.where(own_count > 1,
                     cluster_sums[rows, own] / np.maximum(own_count - 1.0, 1.0), 0.0)
        means = cluster_sums / counts[None, :]
        means[rows, own] = np.inf
        b = means.min(axis=1)
        denom = np.maximum(a, b)
        s_vals = np.where((own_count > 1) & (denom > 0.0), (b - a) / np.where(denom > 0, denom, 1.0), 0.0)
        return float(s_vals.sum())

    total = sum(run_chunked(chunk, n))
    return total / n


def _cluster_centroids(X: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    sums = np.zeros((k, X.shape[1]))
    np.add.at(sums, labels, X)
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    return sums / counts[:, None]


def davies_bouldin(X: np.ndarray, assignments: np.ndarray) -> float:
    """Davies-Bouldin index: mean over clusters of the worst
    (scatter_i + scatter_j) / centroid_distance_ij ratio; lower is better."""
    X = _validate_points(X)
    labels, k = _labels_to_dense(assignments)
    if k < 2:
        raise NumericError("Davies-Bouldin index undefined for a single cluster")
    mu = _cluster_centroids(X, labels, k)
    scatter = np.zeros(k)
    dists = np.sqrt(np.einsum("ij,ij->i", X - mu[labels], X - mu[labels]))
    np.add.at(scatter, labels, dists)
    scatter /= np.bincount(labels, minlength=k)
    sep2 = (np.einsum("ij,ij->i", mu, mu)[:, None]
            + np.einsum("ij,ij->i", mu, mu)[None, :] - 2.0 * (mu @ mu.T))
    sep = np.sqrt(np.maximum(sep2, 0.0))
    off = ~np.eye(k, dtype=bool)
    if np.any(sep[off] == 0.0):
        i, j = np.argwhere((sep == 0.0) & off)[0]
        raise NumericError(f"clusters {int(i)} and {int(j)} have coincident centroids")
    with np.errstate(divide="ignore"):
        ratio = (scatter[:, None] + scatter[None, :]) / sep
    ratio[~off] = -np.inf
    return float(np.mean(ratio.max(axis=1)))


def calinski_harabasz(X: np.ndarray, assignments: np.ndarray) -> float:
    """Calinski-Harabasz index: between- vs within-cluster variance ratio,
    [trace(B)/(k-1)] / [trace(W)/(n-k)]; higher is better."""
    X = _validate_points(X)
    labels, k = _labels_to_dense(assignments)
    n = X.shape[0]
    if k < 2 or k >= n:
        raise NumericError(f"Calinski-Harabasz index undefined for k={k}, n={n}")
    mu = _cluster_centroids(X, labels, k)
    counts = np.bincount(labels, minlength=k).astype(np.float64)
    grand = X.mean(axis=0)
    diff_w = X - mu[labels]
    trace_w = float(np.einsum("ij,ij->", diff_w, diff_w))
    diff_b = mu - grand
    trace_b = float(np.einsum("i,ij,ij->", counts, diff_b, diff_b))
    if trace_w == 0.0:
        raise NumericError("zero within-cluster variance")
    return (trace_b / (k - 1)) / (trace_w / (n - k))


# ── persistence ───────────────────────────────────────────────────
#
# <stem>.meta    structured text: k, d, seed, inertia, iterations, hashes
# <stem>.f32     raw little-endian float32 centroid matrix
# <stem>.assign  one assignment index per line

def save_cluster_model(model: ClusterModel, stem, features_hash: str = "") -> None:
    stem = str(stem)
    with open(stem + ".meta", "w", encoding="ascii") as f:
        f.write("vpce-clusters v1\n")
        f.write(f"k {model.k}\n")
        f.write(f"d {model.centroids.shape[1]}\n")
        f.write(f"n {model.assignments.shape[0]}\n")
        f.write(f"seed {model.seed}\n")
        f.write(f"inertia {model.inertia!r}\n")
        f.write(f"iterations {model.iterations_run}\n")
        f.write(f"features_hash {features_hash}\n")
    model.centroids.astype("<f4").tofile(stem + ".f32")
    with open(stem + ".assign", "w", encoding="ascii") as f:
        f.write("\n".join(str(int(a)) for a in model.assignments) + "\n")


def load_cluster_model(stem) -> tuple[ClusterModel, str]:
    """Load a persisted model; returns (model, features_hash).

    Centroids round-trip through float32, so the stored inertia is carried
    as-is rather than revalidated against the quantized centroids.
    """
    stem = str(stem)
    meta: dict[str, str] = {}
    with open(stem + ".meta", "r", encoding="ascii") as f:
        if f.readline().strip() != "vpce-clusters v1":
            raise DataFormatError(f"{stem}.meta: not a cluster model metadata file")
        for line in f:
            if line.strip():
                key, _, v = line.partition(" ")
                meta[key] = v.strip()
    try:
        k, d, n = int(meta["k"]), int(meta["d"]), int(meta["n"])
        seed = int(meta["seed"])
        inertia = float(meta["inertia"])
        iterations = int(meta["iterations"])
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"{stem}.meta: missing or malformed fields") from exc
    cent = np.fromfile(stem + ".f32", dtype="<f4")
    if cent.size != k * d:
        raise DataFormatError(f"{stem}.f32: expected {k * d} floats, found {cent.size}")
    if not os.path.isfile(stem + ".assign"):
        raise DataFormatError(f"{stem}.assign: assignment file missing")
    with open(stem + ".assign", "r", encoding="ascii") as f:
        assign = np.array([int(ln) for ln in f if ln.strip()], dtype=np.int64)
    if assign.size != n:
        raise DataFormatError(f"{stem}.assign: expected {n} indices, found {assign.size}")
    model = ClusterModel(cent.astype(np.float64).reshape(k, d), assign, inertia,
                         k, iterations, seed)
    return model, meta.get("features_hash", "")
