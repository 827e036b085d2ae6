"""Deterministic 2D arena simulator: world model, column raycaster, and the
random-exploration data acquisition policy."""

from .arena import (ArenaSpec, Landmark, Pose, Wall, add_wall, dump_arena,
                    load_arena, open_arena, parse_arena, pose_is_valid,
                    remove_wall, save_arena, validate_arena, walled_arena)
from .explore import (ACTION_SET, Dataset, ExplorationConfig, Observation,
                      ObservationMeta, explore, is_feasible, load_dataset,
                      load_manifest, sample_start_pose, save_dataset)
from .render import RenderConfig, read_ppm, render_pov, write_ppm

__all__ = [
    "ACTION_SET", "ArenaSpec", "Dataset", "ExplorationConfig", "Landmark",
    "Observation", "ObservationMeta", "Pose", "RenderConfig", "Wall",
    "add_wall", "dump_arena", "explore", "is_feasible", "load_arena",
    "load_dataset", "load_manifest", "open_arena", "parse_arena",
    "pose_is_valid", "read_ppm", "remove_wall", "render_pov",
    "sample_start_pose", "save_arena", "save_dataset", "validate_arena",
    "walled_arena", "write_ppm",
]
