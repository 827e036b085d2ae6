"""Place-cell ensemble: receptive fields over visual feature space.

Each fitted cluster becomes one place cell whose receptive field is
centered on the centroid with width set by the maximum member-to-centroid
distance. A new feature vector f activates cell i as

    raw_i = exp(-|f - c_i|^2 / (2 * alpha_i^2))

followed by min-max normalization across the ensemble's raw activations.
Raw values are always strictly positive (the smooth falloff never reaches
zero), so every cell responds at least faintly to every input. When all
raw activations are equal (including single-cell ensembles) min-max
normalization is undefined; such patterns come back all-zero with the
``degenerate`` flag set.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .clustering import ClusterModel
from .errors import DataFormatError, ValidationError
from .features import FeatureMatrix, FeatureSource, FeatureVector
from .parallel import run_chunked

EPS_ALPHA_FLOOR = 1e-6


@dataclass(frozen=True)
class PlaceCell:
    """One receptive field: center, width, and membership provenance."""

    center: np.ndarray      # (d,) float64
    alpha: float
    member_count: int
    degenerate: bool = False  # alpha was floored (singleton / zero spread)

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ValidationError("place cell alpha must be positive")
        if not np.all(np.isfinite(self.center)):
            raise ValidationError("place cell center must be finite")


@dataclass(frozen=True)
class PlaceCellEnsemble:
    """Immutable collection of place cells sharing one feature space."""

    cells: tuple[PlaceCell, ...]
    feature_source: FeatureSource
    descriptor_config_hash: str
    arena_id: str = ""

    def __post_init__(self):
        if not self.cells:
            raise ValidationError("an ensemble needs at least one cell")
        dims = {c.center.shape[0] for c in self.cells}
        if len(dims) != 1:
            raise ValidationError("all place cell centers must share one dimension")
        object.__setattr__(self, "_centers",
                           np.stack([c.center for c in self.cells]))
        object.__setattr__(self, "_alphas",
                           np.array([c.alpha for c in self.cells]))

    @property
    def k(self) -> int:
        return len(self.cells)

    @property
    def dim(self) -> int:
        return self.cells[0].center.shape[0]

    @property
    def centers(self) -> np.ndarray:
        return self._centers  # type: ignore[attr-defined]

    @property
    def alphas(self) -> np.ndarray:
        return self._alphas  # type: ignore[attr-defined]


@dataclass(frozen=True)
class ActivationPattern:
    """Raw and min-max-normalized ensemble response to one observation."""

    raw: np.ndarray
    normalized: np.ndarray
    observation_ref: str = ""
    degenerate: bool = False


def build_ensemble(model: ClusterModel, X: np.ndarray,
                   feature_source: FeatureSource = FeatureSource.MULTIMODAL,
                   descriptor_config_hash: str = "",
                   arena_id: str = "") -> PlaceCellEnsemble:
    """One place cell per cluster with alpha = max member-to-centroid
    distance. Singleton / zero-spread clusters get the smallest positive
    alpha among the other cells (1e-6 if there is none) and are flagged."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != model.assignments.shape[0]:
        raise ValidationError("model assignments do not match the data matrix")
    if X.shape[1] != model.centroids.shape[1]:
        raise ValidationError("model centroid dimension does not match the data matrix")
    diff = X - model.centroids[model.assignments]
    dists = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    alphas = np.zeros(model.k)
    np.maximum.at(alphas, model.assignments, dists)
    counts = np.bincount(model.assignments, minlength=model.k)

    positive = alphas[alphas > 0.0]
    eps_alpha = float(positive.min()) if positive.size else EPS_ALPHA_FLOOR
    cells = []
    for i in range(model.k):
        degenerate = alphas[i] <= 0.0
        cells.append(PlaceCell(model.centroids[i].copy(),
                               eps_alpha if degenerate else float(alphas[i]),
                               int(counts[i]), degenerate))
    return PlaceCellEnsemble(tuple(cells), feature_source,
                             descriptor_config_hash, arena_id)


def _activate_values(ensemble: PlaceCellEnsemble, values: np.ndarray,
                     ref: str) -> ActivationPattern:
    diff = ensemble.centers - values[None, :]
    d2 = np.einsum("ij,ij->i", diff, diff)
    raw = np.exp(-d2 / (2.0 * ensemble.alphas ** 2))
    lo, hi = float(raw.min()), float(raw.max())
    if hi - lo <= 0.0:
        return ActivationPattern(raw, np.zeros_like(raw), ref, degenerate=True)
    return ActivationPattern(raw, (raw - lo) / (hi - lo), ref)


def activate(ensemble: PlaceCellEnsemble, f: FeatureVector) -> ActivationPattern:
    """Ensemble response to one feature vector.

    Rejects dimension mismatches, and descriptor-config mismatches whenever
    both sides carry a config hash.
    """
    if f.dim != ensemble.dim:
        raise ValidationError(
            f"feature dim {f.dim} does not match ensemble dim {ensemble.dim}")
    if f.config_hash and ensemble.descriptor_config_hash \
            and f.config_hash != ensemble.descriptor_config_hash:
        raise ValidationError(
            "features were produced under a different descriptor config "
            f"({f.config_hash} vs {ensemble.descriptor_config_hash})")
    return _activate_values(ensemble, f.values, f.observation_ref)


def activate_batch(ensemble: PlaceCellEnsemble, fs: list[FeatureVector],
                   workers: int = 1) -> list[ActivationPattern]:
    """Elementwise activation, order preserved, worker-count independent.

    The first failing element aborts the batch with its index.
    """
    out: list[ActivationPattern | None] = [None] * len(fs)

    def chunk(s: int, e: int) -> None:
        for i in range(s, e):
            try:
                out[i] = activate(ensemble, fs[i])
            except ValidationError as exc:
                raise ValidationError(f"batch element {i}: {exc}") from exc

    run_chunked(chunk, len(fs), workers=workers, chunk=256)
    return out  # type: ignore[return-value]


def activate_matrix(ensemble: PlaceCellEnsemble, fm: FeatureMatrix,
                    workers: int = 1) -> list[ActivationPattern]:
    """Activate every row of a feature matrix (hash-checked once)."""
    if fm.values.shape[1] != ensemble.dim:
        raise ValidationError(
            f"feature dim {fm.values.shape[1]} does not match ensemble dim {ensemble.dim}")
    if fm.config_hash and ensemble.descriptor_config_hash \
            and fm.config_hash != ensemble.descriptor_config_hash:
        raise ValidationError("features were produced under a different descriptor config")
    out: list[ActivationPattern | None] = [None] * len(fm.keys)

    def chunk(s: int, e: int) -> None:
        for i in range(s, e):
            out[i] = _activate_values(ensemble, fm.values[i], fm.keys[i])

    run_chunked(chunk, len(fm.keys), workers=workers, chunk=256)
    return out  # type: ignore[return-value]


# ── persistence ───────────────────────────────────────────────────
#
# <stem>.meta  structured text: k, d, source, hashes, per-cell alpha rows
# <stem>.f32   raw little-endian float32 center matrix

def save_ensemble(ensemble: PlaceCellEnsemble, stem) -> None:
    stem = str(stem)
    with open(stem + ".meta", "w", encoding="ascii") as f:
        f.write("vpce-ensemble v1\n")
        f.write(f"k {ensemble.k}\n")
        f.write(f"d {ensemble.dim}\n")
        f.write(f"source {ensemble.feature_source.value}\n")
        f.write(f"config_hash {ensemble.descriptor_config_hash}\n")
        f.write(f"arena_id {ensemble.arena_id}\n")
        for i, cell in enumerate(ensemble.cells):
            f.write(f"cell {i} {cell.alpha!r} {cell.member_count} "
                    f"{int(cell.degenerate)}\n")
    ensemble.centers.astype("<f4").tofile(stem + ".f32")


def load_ensemble(stem) -> PlaceCellEnsemble:
    stem = str(stem)
    header: dict[str, str] = {}
    cell_rows: list[tuple[float, int, bool]] = []
    with open(stem + ".meta", "r", encoding="ascii") as f:
        if f.readline().strip() != "vpce-ensemble v1":
            raise DataFormatError(f"{stem}.meta: not an ensemble metadata file")
        for line in f:
            if not line.strip():
                continue
            key, _, rest = line.partition(" ")
            if key == "cell":
                try:
                    _, alpha, count, degen = rest.split()
                    cell_rows.append((float(alpha), int(count), bool(int(degen))))
                except ValueError as exc:
                    raise DataFormatError(f"{stem}.meta: malformed cell row") from exc
            else:
                header[key] = rest.strip()
    try:
        k, d = int(header["k"]), int(header["d"])
        source = FeatureSource(header["source"])
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"{stem}.meta: missing or malformed fields") from exc
    if len(cell_rows) != k:
        raise DataFormatError(f"{stem}.meta: expected {k} cell rows, found {len(cell_rows)}")
    if not os.path.isfile(stem + ".f32"):
        raise DataFormatError(f"{stem}.f32: center matrix missing")
    centers = np.fromfile(stem + ".f32", dtype="<f4")
    if centers.size != k * d:
        raise DataFormatError(f"{stem}.f32: expected {k * d} floats, found {centers.size}")
    centers = centers.astype(np.float64).reshape(k, d)
    cells = tuple(PlaceCell(centers[i], cell_rows[i][0], cell_rows[i][1], cell_rows[i][2])
                  for i in range(k))
    return PlaceCellEnsemble(cells, source, header.get("config_hash", ""),
                             header.get("arena_id", ""))


def save_activations_csv(patterns: list[ActivationPattern], path,
                         ensemble_hash: str = "") -> None:
    """Normalized activations as CSV: ``observation,cell_0..cell_{k-1}``."""
    if not patterns:
        raise ValidationError("no activation patterns to write")
    k = patterns[0].normalized.shape[0]
    with open(path, "w", encoding="ascii") as f:
        if ensemble_hash:
            f.write(f"# config_hash {ensemble_hash}\n")
        f.write("observation," + ",".join(f"cell_{i}" for i in range(k)) + "\n")
        for p in patterns:
            f.write(p.observation_ref + ","
                    + ",".join(repr(float(v)) for v in p.normalized) + "\n")
