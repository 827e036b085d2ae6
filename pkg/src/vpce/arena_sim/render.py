"""Column raycaster producing the point-of-view images the pipeline consumes.

One ray per image column, cast through a planar camera model. The nearest
wall/landmark hit paints a vertical slab centered on the horizon with
pixel height ``image_height / perpendicular_distance`` (classic
grid-shooter projection, so flat walls render flat). Surface colors decay
with distance as ``exp(-shading * distance)``; columns that hit nothing
within ``max_view_distance`` show only the floor/ceiling split.

Everything is fixed-order numpy arithmetic over per-column arrays:
repeated calls with identical inputs produce bit-identical buffers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import DataFormatError, ValidationError
from .arena import ArenaSpec, Pose, pose_is_valid
from .geometry import rays_circle_hits, rays_segment_hits, rectangle_corners


@dataclass(frozen=True)
class RenderConfig:
    """Camera intrinsics for the synthetic POV camera.

    ``max_view_distance=None`` means the arena diagonal (nothing inside the
    arena is ever culled). ``shading`` is the exponential attenuation rate
    per meter applied to surface colors.
    """

    image_width: int = 128
    image_height: int = 96
    horizontal_fov: float = 1.3
    max_view_distance: float | None = None
    shading: float = 0.15

    def __post_init__(self):
        if self.image_width < 16 or self.image_height < 16:
            raise ValidationError("image dimensions must be at least 16 px")
        if not (0.0 < self.horizontal_fov < math.pi):
            raise ValidationError("horizontal_fov must be in (0, pi)")
        if self.shading < 0:
            raise ValidationError("shading must be non-negative")


def _ray_directions(theta: float, width: int, fov: float) -> np.ndarray:
    """Unnormalized ray directions through each column's pixel center.

    Directions are ``forward + s * plane`` with s spanning [-1, 1] across
    the image; the forward component is unit length, so the intersection
    parameter t equals perpendicular (fisheye-corrected) depth.
    """
    fx, fy = math.cos(theta), math.sin(theta)
    half = math.tan(fov / 2.0)
    px, py = -fy * half, fx * half
    s = (2.0 * (np.arange(width, dtype=np.float64) + 0.5) / width - 1.0)
    dirs = np.empty((width, 2), dtype=np.float64)
    dirs[:, 0] = fx + s * px
    dirs[:, 1] = fy + s * py
    return dirs


def render_pov(arena: ArenaSpec, pose: Pose, cfg: RenderConfig) -> np.ndarray:
    """Render the POV image at ``pose`` as an (H, W, 3) uint8 array.

    Pure function; rejects poses inside an obstacle footprint.
    """
    if not pose_is_valid(arena, pose):
        raise ValidationError(
            f"pose ({pose.x}, {pose.y}) lies inside an obstacle or outside bounds")
    W, H = cfg.image_width, cfg.image_height
    max_dist = cfg.max_view_distance if cfg.max_view_distance is not None else arena.diagonal
    dirs = _ray_directions(pose.theta, W, cfg.horizontal_fov)

    # Surface hit candidates: one t-row per wall edge / landmark, in fixed
    # declaration order so argmin tie-breaks are deterministic.
    t_rows: list[np.ndarray] = []
    colors: list[tuple[int, int, int]] = []
    for wall in arena.walls:
        if wall.thickness > 0.0:
            corners = rectangle_corners(wall.x1, wall.y1, wall.x2, wall.y2,
                                        wall.thickness / 2.0)
            edges = [(corners[i], corners[(i + 1) % 4]) for i in range(4)]
        else:
            edges = [((wall.x1, wall.y1), (wall.x2, wall.y2))]
        for (a, b) in edges:
            t_rows.append(rays_segment_hits(pose.x, pose.y, dirs, a[0], a[1], b[0], b[1]))
            colors.append(arena.wall_color)
    for lm in arena.landmarks:
        t_rows.append(rays_circle_hits(pose.x, pose.y, dirs, lm.cx, lm.cy, lm.radius))
        colors.append(lm.color)

    horizon = H // 2
    img = np.empty((H, W, 3), dtype=np.uint8)
    img[:horizon, :, :] = np.array(arena.ceiling_color, dtype=np.uint8)
    img[horizon:, :, :] = np.array(arena.floor_color, dtype=np.uint8)
    if not t_rows:
        return img

    t_all = np.stack(t_rows, axis=0)                    # (n_surfaces, W)
    ray_len = np.sqrt(dirs[:, 0] ** 2 + dirs[:, 1] ** 2)
    euclid = t_all * ray_len[None, :]
    t_all = np.where(euclid <= max_dist, t_all, np.inf)
    nearest = np.argmin(t_all, axis=0)                  # lowest index wins ties
    t_hit = t_all[nearest, np.arange(W)]
    color_table = np.array(colors, dtype=np.float64)    # (n_surfaces, 3)

    # Slab extent and shaded color per column, then one masked paint.
    slab = np.minimum(np.floor(H / t_hit), float(H)).astype(np.int64)  # H/inf -> 0
    y0 = (H - slab) // 2
    shade = np.exp(-cfg.shading * (t_hit * ray_len))
    shade = np.where(np.isfinite(shade), shade, 0.0)
    rgb = np.floor(color_table[nearest] * shade[:, None] + 0.5).astype(np.uint8)
    rows = np.arange(H, dtype=np.int64)[:, None]
    mask = (rows >= y0[None, :]) & (rows < (y0 + slab)[None, :])
    img = np.where(mask[:, :, None], rgb[None, :, :], img)
    return img


# ── PPM (P6) codec: dependency-free, bit-exact image interchange ──

def write_ppm(image: np.ndarray, path) -> None:
    """Write an (H, W, 3) uint8 image as binary PPM (P6, maxval 255)."""
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValidationError("PPM writer expects an (H, W, 3) uint8 array")
    h, w = image.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(image.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary PPM (P6) file into an (H, W, 3) uint8 array."""
    with open(path, "rb") as f:
        data = f.read()
    if not data.startswith(b"P6"):
        raise DataFormatError(f"{path}: not a binary PPM (P6) file")
    # Header: magic, width, height, maxval as whitespace-separated tokens,
    # optionally interleaved with '#' comments, then a single whitespace.
    pos, tokens = 2, []
    while len(tokens) < 3:
        while pos < len(data) and data[pos] in b" \t\r\n":
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos] not in b" \t\r\n":
            pos += 1
        tokens.append(data[start:pos])
    pos += 1  # the single whitespace after maxval
    try:
        w, h, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise DataFormatError(f"{path}: malformed PPM header") from exc
    if maxval != 255:
        raise DataFormatError(f"{path}: unsupported PPM maxval {maxval}")
    n = w * h * 3
    raw = data[pos:pos + n]
    if len(raw) != n:
        raise DataFormatError(f"{path}: truncated PPM pixel data")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3).copy()
