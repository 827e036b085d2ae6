"""Arena world model: rectangular bounds, thick wall segments, colored
cylindrical landmarks, and a human-readable arena file format.

Arena file schema (line oriented, ``#`` comments, lengths in meters,
colors as 0-255 RGB):

    vpce-arena v1
    name <string>
    size <width> <height>
    floor <r> <g> <b>
    ceiling <r> <g> <b>
    wallcolor <r> <g> <b>
    wall <x1> <y1> <x2> <y2> <thickness>
    landmark <cx> <cy> <radius> <r> <g> <b>
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from ..errors import DataFormatError, ValidationError
from .geometry import point_segment_distance, segment_segment_distance

RGB = tuple[int, int, int]

# Eight visually distinct saturated colors for the reference arenas.
LANDMARK_COLORS: list[RGB] = [
    (230, 30, 30),    # red
    (30, 200, 40),    # green
    (40, 60, 230),    # blue
    (235, 220, 40),   # yellow
    (220, 40, 220),   # magenta
    (40, 215, 215),   # cyan
    (240, 140, 30),   # orange
    (130, 40, 200),   # purple
]

DEFAULT_FLOOR: RGB = (95, 90, 85)
DEFAULT_CEILING: RGB = (170, 175, 180)
DEFAULT_WALL_COLOR: RGB = (150, 150, 150)


@dataclass(frozen=True)
class Wall:
    """Thick line segment obstacle; endpoints in meters."""

    x1: float
    y1: float
    x2: float
    y2: float
    thickness: float = 0.05


@dataclass(frozen=True)
class Landmark:
    """Colored cylinder; center and radius in meters."""

    cx: float
    cy: float
    radius: float
    color: RGB


@dataclass(frozen=True)
class Pose:
    """Planar pose: position in meters, heading in [0, 2*pi) radians."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        if not (0.0 <= self.theta < 2.0 * math.pi):
            object.__setattr__(self, "theta", self.theta % (2.0 * math.pi))


@dataclass(frozen=True)
class ArenaSpec:
    """Geometric world model for the simulator.

    ``name`` identifies the arena in dataset/ensemble provenance records;
    ``wall_color`` is shared by all wall segments (the reference arenas
    distinguish places through landmarks, not wall texture).
    """

    width: float
    height: float
    walls: tuple[Wall, ...] = ()
    landmarks: tuple[Landmark, ...] = ()
    floor_color: RGB = DEFAULT_FLOOR
    ceiling_color: RGB = DEFAULT_CEILING
    wall_color: RGB = DEFAULT_WALL_COLOR
    name: str = "arena"

    def __post_init__(self):
        validate_arena(self)

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)


def validate_arena(arena: ArenaSpec) -> None:
    """Raise ValidationError on any violated arena invariant."""
    if arena.width <= 0 or arena.height <= 0:
        raise ValidationError("arena dimensions must be positive")
    w, h = arena.width, arena.height
    for i, wall in enumerate(arena.walls):
        for x, y in ((wall.x1, wall.y1), (wall.x2, wall.y2)):
            if not (0.0 <= x <= w and 0.0 <= y <= h):
                raise ValidationError(f"wall {i} endpoint ({x}, {y}) outside arena bounds")
        if wall.thickness < 0:
            raise ValidationError(f"wall {i} has negative thickness")
    for i, lm in enumerate(arena.landmarks):
        if lm.radius <= 0:
            raise ValidationError(f"landmark {i} radius must be positive")
        if not (0.0 <= lm.cx <= w and 0.0 <= lm.cy <= h):
            raise ValidationError(f"landmark {i} center outside arena bounds")
    for i, a in enumerate(arena.landmarks):
        for j in range(i + 1, len(arena.landmarks)):
            b = arena.landmarks[j]
            if math.hypot(a.cx - b.cx, a.cy - b.cy) <= a.radius + b.radius:
                raise ValidationError(f"landmarks {i} and {j} overlap")
    for i, wall in enumerate(arena.walls):
        for j, lm in enumerate(arena.landmarks):
            d = point_segment_distance(lm.cx, lm.cy, wall.x1, wall.y1, wall.x2, wall.y2)
            if d <= lm.radius + wall.thickness / 2.0:
                raise ValidationError(f"wall {i} overlaps landmark {j}")


def pose_is_valid(arena: ArenaSpec, pose: Pose, clearance: float = 0.0) -> bool:
    """True if (x, y) lies in bounds and outside every obstacle footprint.

    ``clearance`` > 0 additionally requires that much free space around the
    position (robot body radius).
    """
    if not (clearance <= pose.x <= arena.width - clearance
            and clearance <= pose.y <= arena.height - clearance):
        return False
    for wall in arena.walls:
        d = point_segment_distance(pose.x, pose.y, wall.x1, wall.y1, wall.x2, wall.y2)
        if d <= wall.thickness / 2.0 + clearance:
            return False
    for lm in arena.landmarks:
        if math.hypot(pose.x - lm.cx, pose.y - lm.cy) <= lm.radius + clearance:
            return False
    return True


def add_wall(arena: ArenaSpec, wall: Wall) -> ArenaSpec:
    """New arena with ``wall`` appended; rejects walls that hit a landmark."""
    for j, lm in enumerate(arena.landmarks):
        d = point_segment_distance(lm.cx, lm.cy, wall.x1, wall.y1, wall.x2, wall.y2)
        if d <= lm.radius + wall.thickness / 2.0:
            raise ValidationError(f"added wall overlaps landmark {j}")
    return replace(arena, walls=arena.walls + (wall,))


def remove_wall(arena: ArenaSpec, index: int) -> ArenaSpec:
    """New arena with wall ``index`` removed."""
    if not (0 <= index < len(arena.walls)):
        raise ValidationError(
            f"wall index {index} out of range (arena has {len(arena.walls)} walls)")
    walls = arena.walls[:index] + arena.walls[index + 1:]
    return replace(arena, walls=walls)


def walls_near_segment(arena: ArenaSpec, a, b, radius: float) -> list[int]:
    """Indices of walls whose thick body comes within ``radius`` of segment AB."""
    out = []
    for i, wall in enumerate(arena.walls):
        d = segment_segment_distance(a, b, (wall.x1, wall.y1), (wall.x2, wall.y2))
        if d <= wall.thickness / 2.0 + radius:
            out.append(i)
    return out


# ── reference arenas ──────────────────────────────────────────────

def open_arena(width: float = 6.0, height: float = 6.0,
               landmark_radius: float = 0.15, ring_radius: float = 2.6,
               name: str = "open") -> ArenaSpec:
    """Open arena: 8 uniquely colored cylinders on a perimeter ring."""
    cx, cy = width / 2.0, height / 2.0
    landmarks = []
    for i in range(8):
        ang = i * math.pi / 4.0
        landmarks.append(Landmark(cx + ring_radius * math.cos(ang),
                                  cy + ring_radius * math.sin(ang),
                                  landmark_radius, LANDMARK_COLORS[i]))
    return ArenaSpec(width, height, landmarks=tuple(landmarks), name=name)


def walled_arena(name: str = "walled") -> ArenaSpec:
    """Open arena plus two interior wall segments."""
    base = open_arena(name=name)
    walls = (
        Wall(1.0, 3.0, 3.0, 3.0, 0.06),
        Wall(3.9, 1.0, 3.9, 2.6, 0.06),
    )
    return replace(base, walls=walls)


# ── arena file I/O ────────────────────────────────────────────────

def _fmt_color(c: RGB) -> str:
    return f"{c[0]} {c[1]} {c[2]}"


def dump_arena(arena: ArenaSpec) -> str:
    lines = [
        "vpce-arena v1",
        f"name {arena.name}",
        f"size {arena.width!r} {arena.height!r}",
        f"floor {_fmt_color(arena.floor_color)}",
        f"ceiling {_fmt_color(arena.ceiling_color)}",
        f"wallcolor {_fmt_color(arena.wall_color)}",
    ]
    for w in arena.walls:
        lines.append(f"wall {w.x1!r} {w.y1!r} {w.x2!r} {w.y2!r} {w.thickness!r}")
    for lm in arena.landmarks:
        lines.append(f"landmark {lm.cx!r} {lm.cy!r} {lm.radius!r} {_fmt_color(lm.color)}")
    return "\n".join(lines) + "\n"


def save_arena(arena: ArenaSpec, path) -> None:
    with open(path, "w", encoding="ascii") as f:
        f.write(dump_arena(arena))


def parse_arena(text: str) -> ArenaSpec:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines or lines[0] != "vpce-arena v1":
        raise DataFormatError("arena file must start with 'vpce-arena v1'")
    name = "arena"
    size = None
    floor, ceiling, wallcolor = DEFAULT_FLOOR, DEFAULT_CEILING, DEFAULT_WALL_COLOR
    walls: list[Wall] = []
    landmarks: list[Landmark] = []

    def color(tokens, where):
        if len(tokens) != 3:
            raise DataFormatError(f"{where}: expected 3 color components")
        c = tuple(int(t) for t in tokens)
        if any(not (0 <= v <= 255) for v in c):
            raise DataFormatError(f"{where}: color components must be in [0, 255]")
        return c

    for ln in lines[1:]:
        tok = ln.split()
        kind, rest = tok[0], tok[1:]
        try:
            if kind == "name":
                name = " ".join(rest)
            elif kind == "size":
                size = (float(rest[0]), float(rest[1]))
            elif kind == "floor":
                floor = color(rest, "floor")
            elif kind == "ceiling":
                ceiling = color(rest, "ceiling")
            elif kind == "wallcolor":
                wallcolor = color(rest, "wallcolor")
            elif kind == "wall":
                walls.append(Wall(*(float(v) for v in rest[:5])))
            elif kind == "landmark":
                landmarks.append(Landmark(float(rest[0]), float(rest[1]),
                                          float(rest[2]), color(rest[3:6], "landmark")))
            else:
                raise DataFormatError(f"unknown arena directive '{kind}'")
        except (ValueError, IndexError) as exc:
            raise DataFormatError(f"malformed arena line: '{ln}'") from exc
    if size is None:
        raise DataFormatError("arena file missing 'size' line")
    return ArenaSpec(size[0], size[1], walls=tuple(walls), landmarks=tuple(landmarks),
                     floor_color=floor, ceiling_color=ceiling, wall_color=wallcolor,
                     name=name)


def load_arena(path) -> ArenaSpec:
    with open(path, "r", encoding="ascii") as f:
        return parse_arena(f.read())
