"""Visual feature extraction.

Observations become fixed-length vectors one of two ways:

* the multimodal descriptor: HOG + per-channel color histogram + gridded
  intensity histogram, concatenated with each of the three blocks
  L2-normalized so no descriptor dominates Euclidean geometry downstream;
* precomputed embeddings loaded from an interchange file (for externally
  computed CNN features; no neural runtime ships with this package).

All descriptors are pure functions of (image, config).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DataFormatError, ValidationError
from .hashing import stable_hash


class FeatureSource(str, Enum):
    MULTIMODAL = "multimodal"
    EXTERNAL = "external"


@dataclass(frozen=True)
class DescriptorConfig:
    """Parameters of the three handcrafted descriptors.

    HOG: square cells of ``hog_cell_size`` px, blocks of
    ``hog_block_size`` x ``hog_block_size`` cells (stride one cell),
    ``hog_orientation_bins`` bins over [0, pi) unsigned or [0, 2*pi)
    signed. Color: ``color_bins`` equal-width bins per RGB channel.
    Spatial: ``spatial_rows`` x ``spatial_cols`` grid of
    ``spatial_intensity_bins``-bin grayscale histograms.
    """

    hog_cell_size: int = 8
    hog_block_size: int = 2
    hog_orientation_bins: int = 9
    hog_signed: bool = False
    color_bins: int = 16
    spatial_rows: int = 4
    spatial_cols: int = 4
    spatial_intensity_bins: int = 8

    def __post_init__(self):
        for name in ("hog_cell_size", "hog_block_size", "hog_orientation_bins",
                     "color_bins", "spatial_rows", "spatial_cols",
                     "spatial_intensity_bins"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name} must be at least 1")

    @property
    def hash(self) -> str:
        return stable_hash("multimodal", self)


@dataclass(frozen=True)
class FeatureVector:
    """Fixed-length real vector describing one observation.

    ``config_hash`` carries the descriptor provenance so ensembles can
    refuse vectors extracted under a different configuration.
    """

    values: np.ndarray
    source: FeatureSource
    observation_ref: str = ""
    config_hash: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValidationError("feature values must be a 1-D vector")
        if not np.all(np.isfinite(v)):
            raise ValidationError(f"non-finite feature values for '{self.observation_ref}'")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def _check_image(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValidationError("expected an (H, W, 3) RGB image")
    return img.astype(np.float64)


def grayscale(image: np.ndarray) -> np.ndarray:
    """Luma conversion 0.299 R + 0.587 G + 0.114 B, float64 in [0, 255]."""
    img = _check_image(image)
    return 0.299 * img[:, :, 0] + 0.587 * img[:, :, 1] + 0.114 * img[:, :, 2]


def hog(image: np.ndarray, cfg: DescriptorConfig) -> np.ndarray:
    """Histogram of oriented gradients.

    Central-difference gradients (one-sided at borders), per-pixel
    magnitude and orientation, orientation histograms per cell with linear
    interpolation between the two nearest bin centers (circular), then
    every block normalized as v / sqrt(|v|^2 + eps^2) with eps = 1e-6 and
    concatenated in row-major block order. Pixels beyond the last full
    cell are ignored.
    """
    gray = grayscale(image)
    h, w = gray.shape
    cs, bs, nb = cfg.hog_cell_size, cfg.hog_block_size, cfg.hog_orientation_bins
    ncy, ncx = h // cs, w // cs
    if ncy < bs or ncx < bs:
        raise ValidationError(
            f"image {w}x{h} too small for {bs}x{bs} blocks of {cs}px cells")
    gy, gx = np.gradient(gray)
    mag = np.hypot(gx, gy)
    span = 2.0 * math.pi if cfg.hog_signed else math.pi
    ang = np.arctan2(gy, gx) % span

    # Linear (circular) vote split between the two nearest bin centers.
    pos = ang / (span / nb) - 0.5
    lo = np.floor(pos)
    frac = pos - lo
    bin_lo = lo.astype(np.int64) % nb
    bin_hi = (bin_lo + 1) % nb

    ys, xs = np.mgrid[0:h, 0:w]
    cy, cx = ys // cs, xs // cs
    keep = (cy < ncy) & (cx < ncx)
    cell_idx = (cy * ncx + cx) * nb
    size = ncy * ncx * nb
    hist = (np.bincount((cell_idx + bin_lo)[keep], weights=(mag * (1.0 - frac))[keep],
                        minlength=size)
            + np.bincount((cell_idx + bin_hi)[keep], weights=(mag * frac)[keep],
                          minlength=size))
    hist = hist.reshape(ncy, ncx, nb)

    blocks = np.lib.stride_tricks.sliding_window_view(hist, (bs, bs, nb))
    blocks = blocks.reshape(ncy - bs + 1, ncx - bs + 1, bs * bs * nb)
    norms = np.sqrt(np.sum(blocks * blocks, axis=-1) + 1e-12)  # eps^2, eps = 1e-6
    return (blocks / norms[:, :, None]).ravel()


def hog_dim(cfg: DescriptorConfig, width: int, height: int) -> int:
    ncy, ncx = height // cfg.hog_cell_size, width // cfg.hog_cell_size
    bs = cfg.hog_block_size
    return ((ncy - bs + 1) * (ncx - bs + 1) * bs * bs * cfg.hog_orientation_bins)


def color_histogram(image: np.ndarray, cfg: DescriptorConfig) -> np.ndarray:
    """Per-channel histogram over [0, 255], channels concatenated R, G, B,
    each channel L1-normalized to sum 1 (whole vector sums to 3)."""
    img = _check_image(image)
    bins = cfg.color_bins
    n_px = img.shape[0] * img.shape[1]
    out = np.empty(3 * bins, dtype=np.float64)
    for ch in range(3):
        idx = (img[:, :, ch].astype(np.int64) * bins) // 256
        counts = np.bincount(idx.ravel(), minlength=bins).astype(np.float64)
        out[ch * bins:(ch + 1) * bins] = counts / n_px
    return out


def spatial_histogram(image: np.ndarray, cfg: DescriptorConfig) -> np.ndarray:
    """Grayscale intensity histograms over a rows x cols grid.

    Cell boundaries at floor(i * H / rows) (cells unequal by at most 1 px);
    each cell's histogram is L1-normalized; cells concatenate in row-major
    order.
    """
    gray = grayscale(image)
    h, w = gray.shape
    rows, cols, bins = cfg.spatial_rows, cfg.spatial_cols, cfg.spatial_intensity_bins
    if rows > h or cols > w:
        raise ValidationError(f"spatial grid {rows}x{cols} larger than image {w}x{h}")
    rb = [h * i // rows for i in range(rows + 1)]
    cb = [w * i // cols for i in range(cols + 1)]
    out = np.empty(rows * cols * bins, dtype=np.float64)
    for r in range(rows):
        for c in range(cols):
            cell = gray[rb[r]:rb[r + 1], cb[c]:cb[c + 1]]
            idx = (cell * bins / 256.0).astype(np.int64)
            counts = np.bincount(idx.ravel(), minlength=bins).astype(np.float64)
            out[(r * cols + c) * bins:(r * cols + c + 1) * bins] = counts / cell.size
    return out


def _l2_block(v: np.ndarray) -> np.ndarray:
    n = float(np.sqrt(np.sum(v * v)))
    return v if n == 0.0 else v / n


def extract_multimodal(image: np.ndarray, cfg: DescriptorConfig,
                       observation_ref: str = "") -> FeatureVector:
    """[HOG | color histogram | spatial histogram], each block L2-normalized
    (all-zero blocks left as zero)."""
    parts = [_l2_block(hog(image, cfg)),
             _l2_block(color_histogram(image, cfg)),
             _l2_block(spatial_histogram(image, cfg))]
    return FeatureVector(np.concatenate(parts), FeatureSource.MULTIMODAL,
                         observation_ref=observation_ref, config_hash=cfg.hash)


def multimodal_dim(cfg: DescriptorConfig, width: int, height: int) -> int:
    """Analytic output dimension for a given config and image size."""
    return (hog_dim(cfg, width, height) + 3 * cfg.color_bins
            + cfg.spatial_rows * cfg.spatial_cols * cfg.spatial_intensity_bins)


# ── external embedding interchange ────────────────────────────────
#
# Header line:  vpce-embeddings v1 dim=<D>
# Then one record per line:  <manifest_key> <D space-separated floats>

def external_hash(dim: int) -> str:
    return stable_hash("external", dim)


def load_external_embeddings(path, manifest_keys=None) -> list[FeatureVector]:
    """Load externally computed feature vectors.

    If ``manifest_keys`` is given, every row's key must appear in it.
    Rejects dimension mismatches and non-finite values, naming the row.
    """
    vectors: list[FeatureVector] = []
    valid = set(manifest_keys) if manifest_keys is not None else None
    with open(path, "r", encoding="ascii") as f:
        header = f.readline().strip().split()
        if len(header) != 3 or header[0] != "vpce-embeddings" or header[1] != "v1" \
                or not header[2].startswith("dim="):
            raise DataFormatError(f"{path}: bad embeddings header")
        try:
            dim = int(header[2][4:])
        except ValueError as exc:
            raise DataFormatError(f"{path}: bad embeddings header") from exc
        if dim < 1:
            raise DataFormatError(f"{path}: embedding dim must be positive")
        hsh = external_hash(dim)
        for line_no, line in enumerate(f, 2):
            line = line.strip()
            if not line:
                continue
            tokens = line.split()
            key = tokens[0]
            if len(tokens) - 1 != dim:
                raise DataFormatError(
                    f"{path}:{line_no}: row '{key}' has {len(tokens) - 1} values, expected {dim}")
            if valid is not None and key not in valid:
                raise ValidationError(
                    f"{path}:{line_no}: row '{key}' references no observation in the manifest")
            values = np.array([float(t) for t in tokens[1:]], dtype=np.float64)
            if not np.all(np.isfinite(values)):
                raise DataFormatError(f"{path}:{line_no}: row '{key}' has non-finite values")
            vectors.append(FeatureVector(values, FeatureSource.EXTERNAL,
                                         observation_ref=key, config_hash=hsh))
    return vectors


def save_external_embeddings(vectors: list[FeatureVector], path) -> None:
    if not vectors:
        raise ValidationError("cannot write an empty embeddings file")
    dim = vectors[0].dim
    with open(path, "w", encoding="ascii") as f:
        f.write(f"vpce-embeddings v1 dim={dim}\n")
        for v in vectors:
            if v.dim != dim:
                raise ValidationError(
                    f"row '{v.observation_ref}' has dim {v.dim}, expected {dim}")
            f.write(v.observation_ref + " " + " ".join(repr(x) for x in v.values) + "\n")


# ── feature matrix persistence ────────────────────────────────────
#
# <stem>.meta   structured text: n, dim, source, config hash, arena id
# <stem>.f32    raw little-endian float32 matrix, row-major, manifest order
# <stem>.keys   one manifest key per line, row order

@dataclass
class FeatureMatrix:
    """A stack of feature vectors in manifest order."""

    values: np.ndarray  # (n, d) float64
    keys: list[str]
    source: FeatureSource
    config_hash: str
    arena_id: str = ""

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != len(self.keys):
            raise ValidationError("feature matrix shape disagrees with key list")

    @classmethod
    def from_vectors(cls, vectors: list[FeatureVector], arena_id: str = "") -> "FeatureMatrix":
        if not vectors:
            raise ValidationError("no feature vectors to stack")
        dims = {v.dim for v in vectors}
        if len(dims) != 1:
            raise ValidationError(f"inconsistent feature dimensions: {sorted(dims)}")
        hashes = {v.config_hash for v in vectors}
        if len(hashes) != 1:
            raise ValidationError("feature vectors mix descriptor configurations")
        return cls(np.stack([v.values for v in vectors]),
                   [v.observation_ref for v in vectors],
                   vectors[0].source, vectors[0].config_hash, arena_id)

    def vector(self, key: str) -> FeatureVector:
        try:
            i = self.keys.index(key)
        except ValueError:
            raise ValidationError(f"unknown feature key '{key}'") from None
        return FeatureVector(self.values[i], self.source, observation_ref=key,
                             config_hash=self.config_hash)


def save_feature_matrix(fm: FeatureMatrix, stem, extra: dict | None = None) -> None:
    stem = str(stem)
    with open(stem + ".meta", "w", encoding="ascii") as f:
        f.write("vpce-features v1\n")
        f.write(f"n {fm.values.shape[0]}\n")
        f.write(f"dim {fm.values.shape[1]}\n")
        f.write(f"source {fm.source.value}\n")
        f.write(f"config_hash {fm.config_hash}\n")
        f.write(f"arena_id {fm.arena_id}\n")
        for k in sorted(extra or {}):
            f.write(f"{k} {extra[k]}\n")
    fm.values.astype("<f4").tofile(stem + ".f32")
    with open(stem + ".keys", "w", encoding="ascii") as f:
        f.write("\n".join(fm.keys) + "\n")


def read_meta_field(meta_path, key: str) -> str:
    """Fetch one key from a structured-text .meta file ('' if absent)."""
    with open(meta_path, "r", encoding="ascii") as f:
        for line in f:
            k, _, v = line.partition(" ")
            if k == key:
                return v.strip()
    return ""


def load_feature_matrix(stem) -> FeatureMatrix:
    stem = str(stem)
    meta: dict[str, str] = {}
    with open(stem + ".meta", "r", encoding="ascii") as f:
        if f.readline().strip() != "vpce-features v1":
            raise DataFormatError(f"{stem}.meta: not a feature matrix metadata file")
        for line in f:
            if line.strip():
                k, _, v = line.partition(" ")
                meta[k] = v.strip()
    try:
        n, dim = int(meta["n"]), int(meta["dim"])
        source = FeatureSource(meta["source"])
    except (KeyError, ValueError) as exc:
        raise DataFormatError(f"{stem}.meta: missing or malformed fields") from exc
    raw = np.fromfile(stem + ".f32", dtype="<f4")
    if raw.size != n * dim:
        raise DataFormatError(f"{stem}.f32: expected {n * dim} floats, found {raw.size}")
    with open(stem + ".keys", "r", encoding="ascii") as f:
        keys = [ln.strip() for ln in f if ln.strip()]
    if len(keys) != n:
        raise DataFormatError(f"{stem}.keys: expected {n} keys, found {len(keys)}")
    return FeatureMatrix(raw.astype(np.float64).reshape(n, dim), keys, source,
                         meta.get("config_hash", ""), meta.get("arena_id", ""))


def extract_dataset(images: list[np.ndarray], keys: list[str],
                    cfg: DescriptorConfig, arena_id: str = "",
                    workers: int = 1) -> FeatureMatrix:
    """Multimodal features for a whole dataset, rows in ``keys`` order."""
    from .parallel import map_indexed
    if len(images) != len(keys):
        raise ValidationError("images and keys must align")

    def one(i: int) -> np.ndarray:
        return extract_multimodal(images[i], cfg, observation_ref=keys[i]).values

    rows = map_indexed(one, images, workers=workers)
    fm = FeatureMatrix(np.stack(rows), list(keys), FeatureSource.MULTIMODAL,
                       cfg.hash, arena_id)
    return fm
