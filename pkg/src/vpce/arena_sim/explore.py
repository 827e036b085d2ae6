"""Random-exploration data acquisition.

The robot walks the arena by repeatedly sampling one of 8 compass headings
(multiples of pi/4, 0 along +x) from a uniform distribution with extra
probability mass on the previous action, translating a fixed step length
when the move is collision-free, and capturing one POV image per heading
at each visited position. Infeasible draws consume the iteration without
capturing. The whole trajectory is a pure function of the RNG seed.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import (DataFormatError, EnvironmentInfeasibleError,
                      ValidationError)
from ..parallel import map_indexed
from .arena import ArenaSpec, Pose, pose_is_valid
from .geometry import point_segment_distance, segment_segment_distance
from .render import RenderConfig, read_ppm, render_pov, write_ppm

ACTION_SET: tuple[float, ...] = tuple(i * math.pi / 4.0 for i in range(8))


@dataclass(frozen=True)
class ExplorationConfig:
    """Parameters of the random-walk policy.

    ``bias_weight`` is the probability mass added to the previous action
    before renormalizing the uniform distribution over the 8 headings.
    ``clearance_radius`` is the robot body radius used for collision checks.
    """

    step_length: float = 0.3
    n_steps: int = 1000
    bias_weight: float = 0.2
    rng_seed: int = 0
    clearance_radius: float = 0.15
    action_set: tuple[float, ...] = ACTION_SET

    def __post_init__(self):
        if self.step_length <= 0:
            raise ValidationError("step_length must be positive")
        if self.n_steps < 1:
            raise ValidationError("n_steps must be at least 1")
        if not (0.0 <= self.bias_weight < 1.0):
            raise ValidationError("bias_weight must be in [0, 1)")
        if len(self.action_set) != 8:
            raise ValidationError("action_set must contain exactly 8 headings")
        expected = tuple(i * math.pi / 4.0 for i in range(8))
        if any(abs(a - e) > 1e-12 for a, e in zip(self.action_set, expected)):
            raise ValidationError("action_set headings must be the 8 multiples of pi/4")


@dataclass(frozen=True)
class Observation:
    """One captured POV image with its ground-truth pose."""

    pose: Pose
    step_index: int
    image: np.ndarray  # (H, W, 3) uint8
    arena_id: str


def is_feasible(arena: ArenaSpec, pose: Pose, heading: float,
                cfg: ExplorationConfig) -> bool:
    """True if translating ``step_length`` along ``heading`` keeps the robot's
    clearance disc free of walls, landmarks, and the arena boundary along the
    entire swept path (capsule test, not endpoint-only)."""
    r = cfg.clearance_radius
    x0, y0 = pose.x, pose.y
    x1 = x0 + cfg.step_length * math.cos(heading)
    y1 = y0 + cfg.step_length * math.sin(heading)
    if not (r <= min(x0, x1) and max(x0, x1) <= arena.width - r
            and r <= min(y0, y1) and max(y0, y1) <= arena.height - r):
        return False
    a, b = (x0, y0), (x1, y1)
    for wall in arena.walls:
        d = segment_segment_distance(a, b, (wall.x1, wall.y1), (wall.x2, wall.y2))
        if d <= wall.thickness / 2.0 + r:
            return False
    for lm in arena.landmarks:
        if point_segment_distance(lm.cx, lm.cy, x0, y0, x1, y1) <= lm.radius + r:
            return False
    return True


def sample_start_pose(arena: ArenaSpec, cfg: ExplorationConfig,
                      rng: np.random.Generator, max_tries: int = 10000) -> Pose:
    """Uniformly sample a pose with full body clearance; bounded retries."""
    for _ in range(max_tries):
        x = rng.uniform(0.0, arena.width)
        y = rng.uniform(0.0, arena.height)
        theta = rng.uniform(0.0, 2.0 * math.pi)
        pose = Pose(x, y, theta)
        if pose_is_valid(arena, pose, clearance=cfg.clearance_radius):
            return pose
    raise EnvironmentInfeasibleError(
        f"no valid start pose found in arena '{arena.name}' after {max_tries} tries")


def _sample_action(rng: np.random.Generator, prev: int, bias: float) -> int:
    """Index into the action set, biased toward ``prev``."""
    p = np.full(8, 0.125)
    p[prev] += bias
    p /= p.sum()
    r = rng.random()
    return int(np.searchsorted(np.cumsum(p), r, side="right").clip(0, 7))


def explore(arena: ArenaSpec, cfg: ExplorationConfig, rcfg: RenderConfig,
            workers: int = 1) -> list[Observation]:
    """Run the random-exploration policy and return observations in capture
    order (8 per feasible step, one per heading).

    The walk itself is sequential (RNG-ordered); rendering of the planned
    captures is a pure per-pose function and may run on ``workers`` threads
    without affecting the result.
    """
    rng = np.random.default_rng(cfg.rng_seed)
    pose = sample_start_pose(arena, cfg, rng)
    prev = int(rng.integers(0, 8))
    capture_plan: list[tuple[Pose, int]] = []
    x, y = pose.x, pose.y
    for i in range(cfg.n_steps):
        action = _sample_action(rng, prev, cfg.bias_weight)
        heading = cfg.action_set[action]
        if is_feasible(arena, Pose(x, y, heading), heading, cfg):
            x += cfg.step_length * math.cos(heading)
            y += cfg.step_length * math.sin(heading)
            for h in cfg.action_set:
                capture_plan.append((Pose(x, y, h), i))
            prev = action
        # Infeasible draws consume the iteration; resample next time.

    def render_one(idx: int) -> Observation:
        p, step = capture_plan[idx]
        return Observation(p, step, render_pov(arena, p, rcfg), arena.name)

    return map_indexed(render_one, capture_plan, workers=workers)


# ── dataset persistence ───────────────────────────────────────────
#
# A dataset directory holds one PPM per observation plus:
#   manifest.jsonl  one record per observation: key, file, x, y, theta,
#                   step_index, arena_id (capture order)
#   dataset.meta    provenance: arena id, counts, seed, config hash

@dataclass(frozen=True)
class ObservationMeta:
    """Manifest row: everything about an observation except its pixels."""

    key: str
    file: str
    x: float
    y: float
    theta: float
    step_index: int
    arena_id: str


@dataclass
class Dataset:
    """Loaded dataset directory: manifest rows plus lazy image access."""

    root: str
    records: list[ObservationMeta]
    arena_id: str
    config_hash: str = ""
    extra: dict = field(default_factory=dict)

    def image(self, key: str) -> np.ndarray:
        rec = next((r for r in self.records if r.key == key), None)
        if rec is None:
            raise ValidationError(f"unknown observation key '{key}'")
        return read_ppm(os.path.join(self.root, rec.file))


def save_dataset(observations: list[Observation], out_dir, config_hash: str = "",
                 extra_meta: dict | None = None) -> list[ObservationMeta]:
    """Write PPMs + manifest.jsonl + dataset.meta; returns the manifest rows."""
    os.makedirs(out_dir, exist_ok=True)
    records = []
    with open(os.path.join(out_dir, "manifest.jsonl"), "w", encoding="ascii") as mf:
        for i, obs in enumerate(observations):
            key = f"obs_{i:05d}"
            fname = key + ".ppm"
            write_ppm(obs.image, os.path.join(out_dir, fname))
            rec = {"key": key, "file": fname, "x": obs.pose.x, "y": obs.pose.y,
                   "theta": obs.pose.theta, "step_index": obs.step_index,
                   "arena_id": obs.arena_id}
            mf.write(json.dumps(rec, sort_keys=True) + "\n")
            records.append(ObservationMeta(key, fname, obs.pose.x, obs.pose.y,
                                           obs.pose.theta, obs.step_index,
                                           obs.arena_id))
    arena_id = observations[0].arena_id if observations else ""
    meta = {"format": "vpce-dataset v1", "arena_id": arena_id,
            "n_observations": len(observations), "config_hash": config_hash}
    meta.update(extra_meta or {})
    with open(os.path.join(out_dir, "dataset.meta"), "w", encoding="ascii") as f:
        for k in sorted(meta):
            f.write(f"{k} {meta[k]}\n")
    return records


def load_manifest(path) -> list[ObservationMeta]:
    records = []
    with open(path, "r", encoding="ascii") as f:
        for line_no, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                records.append(ObservationMeta(d["key"], d["file"], float(d["x"]),
                                               float(d["y"]), float(d["theta"]),
                                               int(d["step_index"]), d["arena_id"]))
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataFormatError(f"{path}:{line_no}: malformed manifest row") from exc
    return records


def load_dataset(root) -> Dataset:
    manifest = os.path.join(root, "manifest.jsonl")
    if not os.path.isfile(manifest):
        raise ValidationError(f"{root}: not a dataset directory (no manifest.jsonl)")
    records = load_manifest(manifest)
    meta: dict = {}
    meta_path = os.path.join(root, "dataset.meta")
    if os.path.isfile(meta_path):
        with open(meta_path, "r", encoding="ascii") as f:
            for line in f:
                if line.strip():
                    k, _, v = line.partition(" ")
                    meta[k] = v.strip()
    arena_id = meta.get("arena_id", records[0].arena_id if records else "")
    return Dataset(str(root), records, arena_id,
                   config_hash=meta.get("config_hash", ""), extra=meta)
