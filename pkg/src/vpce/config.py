"""Run configuration: one INI-style file with per-stage sections, every
value overridable from the command line.

Sections and keys mirror the stage dataclasses::

    [run]          arena, out, seed, split_fraction, workers, k,
                   feature_source, use_raw, welch
    [exploration]  step_length, n_steps, bias_weight, clearance_radius
    [render]       image_width, image_height, horizontal_fov,
                   max_view_distance, shading
    [descriptor]   hog_cell_size, hog_block_size, hog_orientation_bins,
                   hog_signed, color_bins, spatial_rows, spatial_cols,
                   spatial_intensity_bins
    [clustering]   max_iter, tol, restarts
    [grouping]     close_radius, far_radius, same_orientation_tol,
                   different_orientation_min, group_size, n_references

One run seed drives every stage; stages offset it deterministically so
different stages never share an RNG stream.
"""

from __future__ import annotations

import configparser
import dataclasses
import os
from dataclasses import dataclass

from .analysis import GroupingSpec
from .arena_sim.explore import ExplorationConfig
from .arena_sim.render import RenderConfig
from .errors import ValidationError
from .features import DescriptorConfig

STAGE_SEED_OFFSETS = {
    "simulate": 0,
    "split": 1,
    "cluster": 2,
    "grouping": 3,
    "wall": 4,
    "remap": 5,
}

# --arena accepts these names in place of a file path.
BUILTIN_ARENAS = ("open", "walled")


def stage_seed(seed: int, stage: str) -> int:
    return seed + STAGE_SEED_OFFSETS[stage]


@dataclass(frozen=True)
class ClusteringParams:
    max_iter: int = 300
    tol: float = 1e-6
    restarts: int = 1

    def __post_init__(self):
        if self.max_iter < 1 or self.restarts < 1:
            raise ValidationError("max_iter and restarts must be positive")
        if self.tol < 0:
            raise ValidationError("tol must be non-negative")


@dataclass(frozen=True)
class RunConfig:
    out_dir: str
    arena_path: str | None = None
    seed: int = 0
    split_fraction: float = 0.8
    workers: int = 1
    k: int = 100
    feature_source: str = "multimodal"
    use_raw: bool = False
    welch: bool = False
    exploration: ExplorationConfig = ExplorationConfig()
    render: RenderConfig = RenderConfig()
    descriptor: DescriptorConfig = DescriptorConfig()
    clustering: ClusteringParams = ClusteringParams()
    grouping: GroupingSpec = GroupingSpec()

    def __post_init__(self):
        if not (0.0 < self.split_fraction < 1.0):
            raise ValidationError("split_fraction must be in (0, 1)")
        if self.workers < 1:
            raise ValidationError("workers must be at least 1")
        if self.feature_source not in ("multimodal", "external"):
            raise ValidationError("feature_source must be 'multimodal' or 'external'")
        if self.arena_path is not None and self.arena_path not in BUILTIN_ARENAS \
                and not os.path.exists(self.arena_path):
            raise ValidationError(f"arena file not found: {self.arena_path}")


_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _coerce(raw: str, target_type, key: str):
    if target_type is bool:
        low = raw.strip().lower()
        if low in _BOOL_TRUE:
            return True
        if low in _BOOL_FALSE:
            return False
        raise ValidationError(f"config key '{key}': expected a boolean, got '{raw}'")
    try:
        if target_type is int:
            return int(raw)
        if target_type is float:
            return float(raw)
    except ValueError as exc:
        raise ValidationError(f"config key '{key}': cannot parse '{raw}'") from exc
    return raw


def _build_section(cls, section: dict[str, str], skip=(), **fixed):
    kwargs = dict(fixed)
    for f in dataclasses.fields(cls):
        if f.name in skip or f.name in kwargs or f.name not in section:
            continue
        # Field annotations arrive as strings (future-annotations modules).
        ann = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")
        if ann.startswith("int"):
            target = int
        elif ann.startswith("float"):
            target = float
        elif ann.startswith("bool"):
            target = bool
        else:
            target = str
        kwargs[f.name] = _coerce(section[f.name], target, f.name)
    return cls(**kwargs)


def load_run_config(config_path: str | None = None,
                    overrides: dict | None = None) -> RunConfig:
    """Build a RunConfig from an optional INI file plus override values.

    ``overrides`` maps (section, key) to already-typed values (CLI flags);
    they take precedence over the file, which takes precedence over the
    dataclass defaults.
    """
    sections: dict[str, dict[str, str]] = {}
    if config_path is not None:
        if not os.path.isfile(config_path):
            raise ValidationError(f"config file not found: {config_path}")
        parser = configparser.ConfigParser()
        try:
            parser.read(config_path)
        except configparser.Error as exc:
            raise ValidationError(f"malformed config file {config_path}: {exc}") from exc
        sections = {name: dict(parser[name]) for name in parser.sections()}
    overrides = overrides or {}

    def section_with_overrides(name: str) -> dict[str, str]:
        merged = dict(sections.get(name, {}))
        for (sec, key), value in overrides.items():
            if sec == name and value is not None:
                merged[key] = value if isinstance(value, str) else repr(value)
        return merged

    run = section_with_overrides("run")
    exploration = _build_section(
        ExplorationConfig, section_with_overrides("exploration"),
        skip=("rng_seed", "action_set"))
    render = _build_section(RenderConfig, section_with_overrides("render"))
    descriptor = _build_section(DescriptorConfig, section_with_overrides("descriptor"))
    clustering = _build_section(ClusteringParams, section_with_overrides("clustering"))
    grouping = _build_section(GroupingSpec, section_with_overrides("grouping"))

    def run_value(key: str, target_type, default):
        if key in run:
            return _coerce(run[key], target_type, key)
        return default

    out_dir = run_value("out", str, None)
    if out_dir is None:
        raise ValidationError("an output directory is required (--out or [run] out)")
    seed = run_value("seed", int, 0)
    exploration = dataclasses.replace(exploration,
                                      rng_seed=stage_seed(seed, "simulate"))
    return RunConfig(
        out_dir=out_dir,
        arena_path=run_value("arena", str, None),
        seed=seed,
        split_fraction=run_value("split_fraction", float, 0.8),
        workers=run_value("workers", int, 1),
        k=run_value("k", int, 100),
        feature_source=run_value("feature_source", str, "multimodal"),
        use_raw=run_value("use_raw", bool, False),
        welch=run_value("welch", bool, False),
        exploration=exploration,
        render=render,
        descriptor=descriptor,
        clustering=clustering,
        grouping=grouping,
    )
