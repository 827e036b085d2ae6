"""Command-line pipeline driver.

Subcommands wire the stages end to end::

    vpce simulate      arena -> dataset directory (PPMs + manifest)
    vpce extract       dataset -> feature matrix + 80/20 shuffle-split
    vpce cluster       train features -> k-means model
    vpce build         model + features -> place-cell ensemble
    vpce activate      ensemble + features -> activation CSV
    vpce eval-clusters metric grid over a list of k values
    vpce eval-grouping proximity/orientation similarity experiment
    vpce eval-wall     same-side vs cross-side wall experiment
    vpce eval-remap    wall add/remove remapping experiment
    vpce report        aggregate the reports directory

Every artifact embeds the configuration digest of its inputs; stages
refuse inputs whose digests disagree. Exit codes: 0 success, 2 validation
error, 3 runtime/numeric error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import analysis
from .arena_sim import arena as arena_mod
from .arena_sim import explore as explore_mod
from .arena_sim.render import read_ppm
from .clustering import (calinski_harabasz, davies_bouldin, kmeans_fit,
                         load_cluster_model, save_cluster_model, silhouette)
from .config import BUILTIN_ARENAS, RunConfig, load_run_config, stage_seed
from .ensemble import (activate_matrix, build_ensemble, load_ensemble,
                       save_activations_csv, save_ensemble)
from .errors import ValidationError, VpceError
from .features import (FeatureMatrix, extract_dataset,
                       load_external_embeddings, load_feature_matrix,
                       read_meta_field, save_feature_matrix)
from .hashing import stable_hash

EXIT_IO = 4


# ── shared plumbing ───────────────────────────────────────────────

def _resolve_arena(path_or_name: str | None):
    if path_or_name is None:
        raise ValidationError("an arena is required (--arena or [run] arena)")
    if path_or_name == "open":
        return arena_mod.open_arena()
    if path_or_name == "walled":
        return arena_mod.walled_arena()
    return arena_mod.load_arena(path_or_name)


def _paths(cfg: RunConfig) -> dict[str, str]:
    out = cfg.out_dir
    return {
        "out": out,
        "arena_copy": os.path.join(out, "arena.txt"),
        "dataset": os.path.join(out, "dataset"),
        "features": os.path.join(out, "features"),
        "split": os.path.join(out, "split.json"),
        "model": os.path.join(out, f"model_k{cfg.k}"),
        "ensemble": os.path.join(out, f"ensemble_k{cfg.k}"),
        "activations": os.path.join(out, f"activations_k{cfg.k}.csv"),
        "reports": os.path.join(out, "reports"),
    }


def _features_hash(fm: FeatureMatrix) -> str:
    return stable_hash("features", fm.source.value, fm.config_hash, fm.arena_id,
                       fm.values.shape[0], fm.values.shape[1])


def _load_features(cfg: RunConfig) -> FeatureMatrix:
    p = _paths(cfg)
    if not os.path.isfile(p["features"] + ".meta"):
        raise ValidationError("no extracted features in the output directory "
                              "(run 'vpce extract' first)")
    return load_feature_matrix(p["features"])


def _load_split(cfg: RunConfig) -> dict:
    p = _paths(cfg)
    if not os.path.isfile(p["split"]):
        raise ValidationError("no split.json in the output directory "
                              "(run 'vpce extract' first)")
    with open(p["split"], "r", encoding="ascii") as f:
        return json.load(f)


def _train_matrix(cfg: RunConfig):
    fm = _load_features(cfg)
    split = _load_split(cfg)
    idx = {k: i for i, k in enumerate(fm.keys)}
    missing = [k for k in split["train"] if k not in idx]
    if missing:
        raise ValidationError(f"split references unknown feature key '{missing[0]}'")
    rows = [idx[k] for k in split["train"]]
    return fm, np.ascontiguousarray(fm.values[rows]), split


# ── stage commands ────────────────────────────────────────────────

def cmd_simulate(cfg: RunConfig) -> int:
    arena = _resolve_arena(cfg.arena_path)
    p = _paths(cfg)
    os.makedirs(p["out"], exist_ok=True)
    arena_mod.save_arena(arena, p["arena_copy"])
    dataset_hash = stable_hash("dataset", arena, cfg.exploration, cfg.render)
    observations = explore_mod.explore(arena, cfg.exploration, cfg.render,
                                       workers=cfg.workers)
    if not observations:
        raise ValidationError("exploration captured no observations "
                              "(every sampled action was infeasible)")
    explore_mod.save_dataset(observations, p["dataset"], config_hash=dataset_hash,
                             extra_meta={"seed": cfg.exploration.rng_seed})
    feasible = len(observations) // 8
    print(f"simulate: {len(observations)} observations "
          f"({feasible}/{cfg.exploration.n_steps} feasible steps) -> {p['dataset']}")
    return 0


def cmd_extract(cfg: RunConfig, embeddings: str | None = None) -> int:
    p = _paths(cfg)
    ds = explore_mod.load_dataset(p["dataset"])
    keys = [r.key for r in ds.records]
    if cfg.feature_source == "external" or embeddings:
        if not embeddings:
            raise ValidationError("external feature source needs --embeddings FILE")
        vectors = load_external_embeddings(embeddings, manifest_keys=keys)
        loaded = {v.observation_ref for v in vectors}
        missing = [k for k in keys if k not in loaded]
        if missing:
            raise ValidationError(
                f"embeddings file lacks a row for observation '{missing[0]}'")
        by_key = {v.observation_ref: v for v in vectors}
        fm = FeatureMatrix.from_vectors([by_key[k] for k in keys], ds.arena_id)
    else:
        images = [read_ppm(os.path.join(p["dataset"], r.file)) for r in ds.records]
        fm = extract_dataset(images, keys, cfg.descriptor, arena_id=ds.arena_id,
                             workers=cfg.workers)
    save_feature_matrix(fm, p["features"], extra={"dataset_hash": ds.config_hash})

    # Alg-style shuffle-and-split: floor(n * fraction) rows train, rest eval.
    rng = np.random.default_rng(stage_seed(cfg.seed, "split"))
    perm = rng.permutation(len(keys))
    n_train = int(math.floor(len(keys) * cfg.split_fraction))
    split = {
        "dataset_hash": ds.config_hash,
        "features_hash": _features_hash(fm),
        "seed": stage_seed(cfg.seed, "split"),
        "train": [keys[i] for i in perm[:n_train]],
        "eval": [keys[i] for i in perm[n_train:]],
    }
    with open(p["split"], "w", encoding="ascii") as f:
        f.write(json.dumps(split, sort_keys=True) + "\n")
    print(f"extract: {fm.values.shape[0]} x {fm.values.shape[1]} "
          f"({fm.source.value}), split {n_train}/{len(keys) - n_train} "
          f"-> {p['features']}.*")
    return 0


def cmd_cluster(cfg: RunConfig) -> int:
    p = _paths(cfg)
    fm, X_train, _ = _train_matrix(cfg)
    ds_meta = os.path.join(p["dataset"], "dataset.meta")
    if os.path.isfile(ds_meta):
        ds_hash = read_meta_field(ds_meta, "config_hash")
        recorded = read_meta_field(p["features"] + ".meta", "dataset_hash")
        if ds_hash and recorded and ds_hash != recorded:
            raise ValidationError(
                "features were extracted from a different dataset "
                f"({recorded} vs {ds_hash})")
    model = kmeans_fit(X_train, cfg.k, seed=stage_seed(cfg.seed, "cluster"),
                       max_iter=cfg.clustering.max_iter, tol=cfg.clustering.tol,
                       workers=cfg.workers, restarts=cfg.clustering.restarts)
    save_cluster_model(model, p["model"], features_hash=_features_hash(fm))
    print(f"cluster: k={cfg.k} inertia={model.inertia:.6g} "
          f"iterations={model.iterations_run} -> {p['model']}.*")
    return 0


def cmd_build(cfg: RunConfig) -> int:
    p = _paths(cfg)
    fm, X_train, _ = _train_matrix(cfg)
    if not os.path.isfile(p["model"] + ".meta"):
        raise ValidationError(f"no cluster model for k={cfg.k} "
                              "(run 'vpce cluster' first)")
    model, features_hash = load_cluster_model(p["model"])
    if features_hash and features_hash != _features_hash(fm):
        raise ValidationError("features were produced under a different descriptor "
                              f"config ({features_hash} vs {_features_hash(fm)})")
    ens = build_ensemble(model, X_train, feature_source=fm.source,
                         descriptor_config_hash=fm.config_hash,
                         arena_id=fm.arena_id)
    save_ensemble(ens, p["ensemble"])
    degenerate = sum(c.degenerate for c in ens.cells)
    print(f"build: {ens.k} place cells (dim {ens.dim}, {degenerate} degenerate) "
          f"-> {p['ensemble']}.*")
    return 0


def cmd_activate(cfg: RunConfig) -> int:
    p = _paths(cfg)
    fm = _load_features(cfg)
    if not os.path.isfile(p["ensemble"] + ".meta"):
        raise ValidationError(f"no ensemble for k={cfg.k} (run 'vpce build' first)")
    ens = load_ensemble(p["ensemble"])
    patterns = activate_matrix(ens, fm, workers=cfg.workers)
    save_activations_csv(patterns, p["activations"],
                         ensemble_hash=stable_hash("activations",
                                                   ens.descriptor_config_hash, ens.k))
    degenerate = sum(pt.degenerate for pt in patterns)
    print(f"activate: {len(patterns)} patterns ({degenerate} degenerate) "
          f"-> {p['activations']}")
    return 0


def cmd_eval_clusters(cfg: RunConfig, k_list: list[int]) -> int:
    p = _paths(cfg)
    fm, X_train, _ = _train_matrix(cfg)
    os.makedirs(p["reports"], exist_ok=True)
    out_path = os.path.join(p["reports"], "clusters.csv")
    rows = ["k,silhouette,davies_bouldin,calinski_harabasz"]
    print("eval-clusters: k  silhouette  DBI  CHI")
    for k in k_list:
        model = kmeans_fit(X_train, k, seed=stage_seed(cfg.seed, "cluster"),
                           max_iter=cfg.clustering.max_iter, tol=cfg.clustering.tol,
                           workers=cfg.workers, restarts=cfg.clustering.restarts)
        sil = silhouette(X_train, model.assignments)
        dbi = davies_bouldin(X_train, model.assignments)
        chi = calinski_harabasz(X_train, model.assignments)
        rows.append(f"{k},{sil!r},{dbi!r},{chi!r}")
        print(f"  {k}  {sil:.4f}  {dbi:.4f}  {chi:.2f}")
    with open(out_path, "w", encoding="ascii") as f:
        f.write(f"# config_hash {_features_hash(fm)}\n")
        f.write("\n".join(rows) + "\n")
    print(f"eval-clusters -> {out_path}")
    return 0


def _load_records(cfg: RunConfig):
    p = _paths(cfg)
    return explore_mod.load_manifest(os.path.join(p["dataset"], "manifest.jsonl"))


def _write_summary(path, lines: list[str]) -> None:
    with open(path, "w", encoding="ascii") as f:
        f.write("\n".join(lines) + "\n")


def cmd_eval_grouping(cfg: RunConfig, matrices: bool = False) -> int:
    p = _paths(cfg)
    fm = _load_features(cfg)
    ens = load_ensemble(p["ensemble"])
    records = _load_records(cfg)
    report = analysis.grouping_experiment(ens, fm, records, cfg.grouping,
                                          seed=stage_seed(cfg.seed, "grouping"),
                                          use_raw=cfg.use_raw)
    os.makedirs(p["reports"], exist_ok=True)
    csv_path = os.path.join(p["reports"], f"grouping_k{cfg.k}.csv")
    analysis.write_report_csv(report, csv_path, config_hash=_features_hash(fm))
    lines = [f"grouping experiment (k={cfg.k}, "
             f"{'raw' if cfg.use_raw else 'normalized'} activations)"]
    for g in report.groups:
        lines.append(f"  {g.label}: cosine={g.mean_cosine} pearson={g.mean_pearson} "
                     f"euclidean={g.mean_euclidean} pairs={g.n_pairs}")
    _write_summary(os.path.join(p["reports"], f"grouping_k{cfg.k}.txt"), lines)
    print("\n".join(lines))
    if matrices:
        _dump_grouping_matrices(cfg, ens, fm, records)
    print(f"eval-grouping -> {csv_path}")
    return 0


def _dump_grouping_matrices(cfg: RunConfig, ens, fm, records) -> None:
    """Pairwise matrices for the first sampled reference (one per group/metric)."""
    p = _paths(cfg)
    samples = analysis.sample_groupings(
        [r for r in records if r.key in set(fm.keys)], cfg.grouping,
        seed=stage_seed(cfg.seed, "grouping"))
    first = samples[0]
    keys = {first.reference}
    for ks in first.members.values():
        keys.update(ks)
    vectors = analysis._pattern_vectors(ens, fm, keys, cfg.use_raw)
    blocks = []
    for label in analysis.GROUP_LABELS:
        group_vecs = [vectors[first.reference]] + [vectors[k] for k in first.members[label]]
        for metric in ("cosine", "pearson", "euclidean"):
            blocks.append((f"{label} {metric}",
                           analysis.pairwise_matrix(group_vecs, metric)))
    analysis.write_matrices_csv(os.path.join(p["reports"], f"grouping_k{cfg.k}_matrices.csv"),
                                blocks, config_hash=_features_hash(fm))


def cmd_eval_wall(cfg: RunConfig, wall_index: int, matrices: bool = False) -> int:
    p = _paths(cfg)
    arena = _resolve_arena(cfg.arena_path
                           if cfg.arena_path is not None else p["arena_copy"])
    ens = load_ensemble(p["ensemble"])
    report, tests = analysis.wall_experiment(
        ens, arena, cfg.render, cfg.descriptor, seed=stage_seed(cfg.seed, "wall"),
        wall_index=wall_index, clearance=cfg.exploration.clearance_radius,
        use_raw=cfg.use_raw, welch=cfg.welch)
    os.makedirs(p["reports"], exist_ok=True)
    csv_path = os.path.join(p["reports"], f"wall_k{cfg.k}.csv")
    analysis.write_report_csv(report, csv_path,
                              config_hash=ens.descriptor_config_hash)
    lines = []
    for g in report.groups:
        lines.append(f"  {g.label}: cosine={g.mean_cosine} "
                     f"euclidean={g.mean_euclidean} pairs={g.n_pairs}")
    lines += analysis.ttest_summary(f"wall experiment (k={cfg.k}, wall {wall_index})",
                                    tests)
    _write_summary(os.path.join(p["reports"], f"wall_k{cfg.k}.txt"), lines)
    print("\n".join(lines))
    if matrices:
        _dump_side_matrices(cfg, ens, arena, wall_index,
                            os.path.join(p["reports"], f"wall_k{cfg.k}_matrices.csv"))
    print(f"eval-wall -> {csv_path}")
    return 0


def _dump_side_matrices(cfg: RunConfig, ens, arena, wall_index, out_path) -> None:
    wall = arena.walls[wall_index]
    positions = analysis.sample_flanking_positions(
        arena, wall, 3, stage_seed(cfg.seed, "wall"),
        clearance=cfg.exploration.clearance_radius)
    probes = analysis._probe_patterns(ens, arena, positions, cfg.render,
                                      cfg.descriptor, cfg.use_raw)
    blocks = []
    for h_idx, heading in enumerate(explore_mod.ACTION_SET):
        vecs = [vecs_i[h_idx] for _, vecs_i in probes]
        for metric in ("cosine", "pearson", "euclidean"):
            blocks.append((f"heading={heading:.4f} {metric}",
                           analysis.pairwise_matrix(vecs, metric)))
    analysis.write_matrices_csv(out_path, blocks,
                                config_hash=ens.descriptor_config_hash)


def cmd_eval_remap(cfg: RunConfig, mode: str, arena_before: str,
                   arena_after: str) -> int:
    p = _paths(cfg)
    before = _resolve_arena(arena_before)
    after = _resolve_arena(arena_after)
    ens = load_ensemble(p["ensemble"])
    (rep_before, rep_after), (tests_before, tests_after) = analysis.remap_experiment(
        ens, before, after, mode, cfg.render, cfg.descriptor,
        seed=stage_seed(cfg.seed, "remap"),
        clearance=cfg.exploration.clearance_radius,
        use_raw=cfg.use_raw, welch=cfg.welch)
    os.makedirs(p["reports"], exist_ok=True)
    stem = os.path.join(p["reports"], f"remap_{mode}_k{cfg.k}")
    analysis.write_report_csv(rep_before, stem + "_before.csv",
                              config_hash=ens.descriptor_config_hash)
    analysis.write_report_csv(rep_after, stem + "_after.csv",
                              config_hash=ens.descriptor_config_hash)
    lines = analysis.ttest_summary(f"remap {mode} (k={cfg.k}) before change",
                                   tests_before)
    lines += analysis.ttest_summary(f"remap {mode} (k={cfg.k}) after change",
                                    tests_after)
    _write_summary(stem + ".txt", lines)
    print("\n".join(lines))
    print(f"eval-remap -> {stem}_before.csv / _after.csv")
    return 0


def cmd_report(cfg: RunConfig) -> int:
    p = _paths(cfg)
    reports = p["reports"]
    if not os.path.isdir(reports):
        raise ValidationError("no reports directory (run an eval command first)")
    lines = [f"run report for {p['out']}"]
    for name in sorted(os.listdir(reports)):
        path = os.path.join(reports, name)
        if name.endswith(".txt"):
            lines.append(f"--- {name} ---")
            with open(path, "r", encoding="ascii") as f:
                lines.extend(ln.rstrip("\n") for ln in f)
        elif name.endswith(".csv"):
            lines.append(f"[csv] {name}")
    out_path = os.path.join(p["out"], "report.txt")
    _write_summary(out_path, lines)
    print("\n".join(lines))
    return 0


# ── argument parsing ──────────────────────────────────────────────

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vpce",
        description="Visual place cell encoding pipeline (simulate, extract, "
                    "cluster, build, activate, evaluate)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="INI config file with per-stage sections")
        sp.add_argument("--out", help="output directory shared by all stages")
        sp.add_argument("--seed", type=int, help="run seed (stages derive offsets)")
        sp.add_argument("--k", type=int, help="place cell / cluster count")
        sp.add_argument("--workers", type=int, help="worker threads (results are "
                                                    "worker-count independent)")
        sp.add_argument("--feature-source", choices=["multimodal", "external"])
        sp.add_argument("--use-raw-activations", action="store_true", default=None,
                        help="compare raw instead of normalized activations")
        sp.add_argument("--welch", action="store_true", default=None,
                        help="Welch t-test instead of pooled-variance Student")
        return sp

    sp = common(sub.add_parser("simulate", help="render an exploration dataset"))
    sp.add_argument("--arena", help=f"arena file or one of {BUILTIN_ARENAS}")
    sp.add_argument("--steps", type=int, help="exploration iterations")

    sp = common(sub.add_parser("extract", help="extract features + 80/20 split"))
    sp.add_argument("--embeddings", help="external embedding interchange file")

    common(sub.add_parser("cluster", help="fit k-means on the training split"))
    common(sub.add_parser("build", help="build the place-cell ensemble"))
    common(sub.add_parser("activate", help="activation patterns for all features"))

    sp = common(sub.add_parser("eval-clusters", help="silhouette/DBI/CHI grid"))
    sp.add_argument("--k-list", default="10,20,100,500",
                    help="comma-separated cluster counts")

    sp = common(sub.add_parser("eval-grouping", help="proximity grouping experiment"))
    sp.add_argument("--matrices", action="store_true",
                    help="dump pairwise matrices for the first reference")

    sp = common(sub.add_parser("eval-wall", help="wall differentiation experiment"))
    sp.add_argument("--arena", help="walled arena file (defaults to the run arena)")
    sp.add_argument("--wall-index", type=int, default=0)
    sp.add_argument("--matrices", action="store_true",
                    help="dump per-heading pairwise matrices")

    sp = common(sub.add_parser("eval-remap", help="wall add/remove remapping"))
    sp.add_argument("--mode", choices=["add", "remove"], required=True)
    sp.add_argument("--arena-before", required=True)
    sp.add_argument("--arena-after", required=True)

    common(sub.add_parser("report", help="aggregate the reports directory"))
    return parser


def _config_from_args(args) -> RunConfig:
    overrides = {
        ("run", "out"): args.out,
        ("run", "seed"): args.seed,
        ("run", "k"): args.k,
        ("run", "workers"): args.workers,
        ("run", "feature_source"): args.feature_source,
        ("run", "use_raw"): args.use_raw_activations,
        ("run", "welch"): args.welch,
        ("run", "arena"): getattr(args, "arena", None),
        ("exploration", "n_steps"): getattr(args, "steps", None),
    }
    return load_run_config(args.config, overrides)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "extract":
            return cmd_extract(cfg, embeddings=args.embeddings)
        if args.command == "cluster":
            return cmd_cluster(cfg)
        if args.command == "build":
            return cmd_build(cfg)
        if args.command == "activate":
            return cmd_activate(cfg)
        if args.command == "eval-clusters":
            try:
                k_list = [int(t) for t in args.k_list.split(",") if t.strip()]
            except ValueError:
                raise ValidationError(f"bad --k-list '{args.k_list}'") from None
            return cmd_eval_clusters(cfg, k_list)
        if args.command == "eval-grouping":
            return cmd_eval_grouping(cfg, matrices=args.matrices)
        if args.command == "eval-wall":
            return cmd_eval_wall(cfg, args.wall_index, matrices=args.matrices)
        if args.command == "eval-remap":
            return cmd_eval_remap(cfg, args.mode, args.arena_before, args.arena_after)
        if args.command == "report":
            return cmd_report(cfg)
        raise ValidationError(f"unknown command {args.command}")
    except VpceError as exc:
        print(f"vpce {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"vpce {args.command}: i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
