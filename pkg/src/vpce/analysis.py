"""Evaluation harness: activation-pattern similarity metrics, the
independent two-sample t-test, and the spatial-coding experiments
(proximity grouping, wall differentiation, wall add/remove remapping).

Experiments are seed-deterministic: sampling uses an explicit generator
and aggregation order is fixed.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc

from .arena_sim.arena import ArenaSpec, Pose, Wall, pose_is_valid
from .arena_sim.explore import ACTION_SET, ObservationMeta
from .arena_sim.render import RenderConfig, render_pov
from .ensemble import PlaceCellEnsemble, activate
from .errors import NumericError, ValidationError
from .features import DescriptorConfig, FeatureMatrix, FeatureSource, extract_multimodal

GROUP_LABELS = ("Close-Same", "Close-Different", "Distant-Same", "Distant-Different")
SIDE_LABELS = ("Same-Side", "Cross-Side")


# ── similarity metrics ────────────────────────────────────────────

def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ValidationError(f"vector dims differ: {a.shape[0]} vs {b.shape[0]}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValidationError("similarity inputs must be finite")
    return a, b


def cosine_similarity(a, b) -> float:
    """a.b / (|a||b|); rejects zero vectors."""
    a, b = _pair(a, b)
    na, nb = float(np.sqrt(a @ a)), float(np.sqrt(b @ b))
    if na == 0.0 or nb == 0.0:
        raise NumericError("cosine similarity undefined for a zero vector")
    return float(a @ b) / (na * nb)


def pearson(a, b) -> float:
    """Centered cosine (linear correlation); rejects constant vectors."""
    a, b = _pair(a, b)
    if a.shape[0] < 2:
        raise ValidationError("Pearson correlation needs at least 2 components")
    ac, bc = a - a.mean(), b - b.mean()
    na, nb = float(np.sqrt(ac @ ac)), float(np.sqrt(bc @ bc))
    if na == 0.0 or nb == 0.0:
        raise NumericError("Pearson correlation undefined for a constant vector")
    return float(ac @ bc) / (na * nb)


def euclidean(a, b) -> float:
    """Straight-line distance between two vectors."""
    a, b = _pair(a, b)
    d = a - b
    return float(np.sqrt(d @ d))


# ── independent two-sample t-test ─────────────────────────────────

@dataclass(frozen=True)
class TTestResult:
    t_statistic: float
    p_value: float
    dof: float
    group_sizes: tuple[int, int]
    two_sided: bool = True
    welch: bool = False


def students_t(sample_a, sample_b, welch: bool = False) -> TTestResult:
    """Two-sided independent two-sample t-test.

    Pooled-variance Student's test by default; ``welch=True`` drops the
    equal-variance assumption (Welch-Satterthwaite degrees of freedom).
    The p-value comes from the regularized incomplete beta function:
    p = I_x(dof/2, 1/2) at x = dof / (dof + t^2).

    Identical-variance degenerate cases: zero variance with equal means
    gives t = 0, p = 1; zero variance with unequal means is an error.
    """
    a = np.asarray(sample_a, dtype=np.float64).ravel()
    b = np.asarray(sample_b, dtype=np.float64).ravel()
    na, nb = a.shape[0], b.shape[0]
    if na < 2 or nb < 2:
        raise ValidationError("each sample needs at least 2 values")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ValidationError("t-test samples must be finite")
    ma, mb = float(a.mean()), float(b.mean())
    va, vb = float(a.var(ddof=1)), float(b.var(ddof=1))
    if welch:
        sea, seb = va / na, vb / nb
        se2 = sea + seb
        dof = (se2 ** 2 / (sea ** 2 / (na - 1) + seb ** 2 / (nb - 1))
               if se2 > 0.0 else float(na + nb - 2))
    else:
        sp2 = ((na - 1) * va + (nb - 1) * vb) / (na + nb - 2)
        se2 = sp2 * (1.0 / na + 1.0 / nb)
        dof = float(na + nb - 2)
    if se2 <= 0.0:
        if ma == mb:
            return TTestResult(0.0, 1.0, dof, (na, nb), welch=welch)
        raise NumericError("zero pooled variance with unequal means")
    t = (ma - mb) / math.sqrt(se2)
    p = float(betainc(dof / 2.0, 0.5, dof / (dof + t * t)))
    return TTestResult(t, min(max(p, 0.0), 1.0), dof, (na, nb), welch=welch)


# ── similarity reports ────────────────────────────────────────────

@dataclass
class GroupStats:
    """Per-group similarity populations with their means.

    Cosine/Pearson entries can be absent (None) when a pattern is
    degenerate (zero vector) or constant; means skip absent entries and
    are None when nothing remains.
    """

    label: str
    cosine: list = field(default_factory=list)     # float | None per pair
    pearson: list = field(default_factory=list)
    euclidean: list = field(default_factory=list)  # always float

    @staticmethod
    def _mean(values) -> float | None:
        present = [v for v in values if v is not None]
        return float(np.mean(present)) if present else None

    @property
    def n_pairs(self) -> int:
        return len(self.euclidean)

    @property
    def mean_cosine(self) -> float | None:
        return self._mean(self.cosine)

    @property
    def mean_pearson(self) -> float | None:
        return self._mean(self.pearson)

    @property
    def mean_euclidean(self) -> float | None:
        return self._mean(self.euclidean)


@dataclass
class SimilarityReport:
    """Grouped similarity populations for one experiment run."""

    groups: list[GroupStats]
    label_kind: str = "grouping"  # "grouping" | "wall"

    def group(self, label: str) -> GroupStats:
        for g in self.groups:
            if g.label == label:
                return g
        raise ValidationError(f"no group labelled '{label}' in this report")

    def csv_rows(self) -> list[str]:
        def fmt(v):
            return "" if v is None else repr(v)
        rows = ["group,n_pairs,mean_cosine,mean_pearson,mean_euclidean"]
        for g in self.groups:
            rows.append(f"{g.label},{g.n_pairs},{fmt(g.mean_cosine)},"
                        f"{fmt(g.mean_pearson)},{fmt(g.mean_euclidean)}")
        return rows


def _record_pair(stats: GroupStats, u: np.ndarray, v: np.ndarray) -> None:
    """Append one pair's metrics; degenerate metric values become absent."""
    try:
        stats.cosine.append(cosine_similarity(u, v))
    except NumericError:
        stats.cosine.append(None)
    try:
        stats.pearson.append(pearson(u, v))
    except (NumericError, ValidationError):
        stats.pearson.append(None)
    stats.euclidean.append(euclidean(u, v))


# ── proximity grouping experiment ─────────────────────────────────

@dataclass(frozen=True)
class GroupingSpec:
    """Geometry of the four proximity/orientation groups.

    Same orientation means an identical discrete heading (tolerance covers
    float representation only); different means at least
    ``different_orientation_min`` apart (circular).
    """

    close_radius: float = 0.5
    far_radius: float = 2.0
    same_orientation_tol: float = 1e-9
    different_orientation_min: float = math.pi / 2.0
    group_size: int = 5
    n_references: int = 200

    def __post_init__(self):
        if not (0.0 < self.close_radius < self.far_radius):
            raise ValidationError("need 0 < close_radius < far_radius")
        if self.same_orientation_tol < 0 or self.different_orientation_min < 0:
            raise ValidationError("orientation tolerances must be non-negative")
        if self.group_size < 1 or self.n_references < 1:
            raise ValidationError("group_size and n_references must be positive")


@dataclass(frozen=True)
class GroupSample:
    reference: str
    members: dict  # label -> list of keys


def _circular_diff(a: np.ndarray, b: float) -> np.ndarray:
    d = np.abs(a - b) % (2.0 * math.pi)
    return np.minimum(d, 2.0 * math.pi - d)


def sample_groupings(records: list[ObservationMeta], spec: GroupingSpec,
                     seed: int = 0) -> list[GroupSample]:
    """Choose reference observations and their four member groups.

    References are drawn without replacement from a seeded permutation;
    references that cannot fill all four groups are skipped (this bounds
    the retries by the dataset size). Raises naming the most frequently
    deficient group when the dataset cannot supply ``n_references``.
    """
    n = len(records)
    if n == 0:
        raise ValidationError("empty dataset")
    xy = np.array([[r.x, r.y] for r in records])
    th = np.array([r.theta for r in records])
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    samples: list[GroupSample] = []
    deficient: Counter = Counter()
    for ref in order:
        if len(samples) == spec.n_references:
            break
        d = np.sqrt(np.einsum("ij,ij->i", xy - xy[ref], xy - xy[ref]))
        dth = _circular_diff(th, float(th[ref]))
        not_self = np.arange(n) != ref
        close = (d <= spec.close_radius) & not_self
        far = (d >= spec.far_radius) & not_self
        same = dth <= spec.same_orientation_tol
        different = dth >= spec.different_orientation_min
        masks = {
            "Close-Same": close & same,
            "Close-Different": close & different,
            "Distant-Same": far & same,
            "Distant-Different": far & different,
        }
        short = next((lbl for lbl in GROUP_LABELS
                      if int(masks[lbl].sum()) < spec.group_size), None)
        if short is not None:
            deficient[short] += 1
            continue
        members = {}
        for lbl in GROUP_LABELS:
            cand = np.flatnonzero(masks[lbl])
            pick = cand[rng.permutation(cand.size)[:spec.group_size]]
            members[lbl] = [records[i].key for i in pick]
        samples.append(GroupSample(records[ref].key, members))
    if len(samples) < spec.n_references:
        worst = deficient.most_common(1)[0][0] if deficient else GROUP_LABELS[0]
        raise ValidationError(
            f"dataset too sparse: only {len(samples)}/{spec.n_references} references "
            f"could fill all groups (most often missing: {worst})")
    return samples


def _pattern_vectors(ensemble: PlaceCellEnsemble, fm: FeatureMatrix,
                     keys: set[str], use_raw: bool) -> dict[str, np.ndarray]:
    out = {}
    for key in sorted(keys):
        p = activate(ensemble, fm.vector(key))
        out[key] = p.raw if use_raw else p.normalized
    return out


def grouping_experiment(ensemble: PlaceCellEnsemble, fm: FeatureMatrix,
                        records: list[ObservationMeta], spec: GroupingSpec,
                        seed: int = 0, use_raw: bool = False) -> SimilarityReport:
    """Average reference-to-member activation similarity for the four
    proximity/orientation groups (normalized patterns unless ``use_raw``)."""
    have = set(fm.keys)
    usable = [r for r in records if r.key in have]
    if not usable:
        raise ValidationError("no manifest records have feature rows")
    samples = sample_groupings(usable, spec, seed)
    needed = {s.reference for s in samples}
    for s in samples:
        for keys in s.members.values():
            needed.update(keys)
    vectors = _pattern_vectors(ensemble, fm, needed, use_raw)
    stats = {lbl: GroupStats(lbl) for lbl in GROUP_LABELS}
    for s in samples:
        ref_vec = vectors[s.reference]
        for lbl in GROUP_LABELS:
            for key in s.members[lbl]:
                _record_pair(stats[lbl], ref_vec, vectors[key])
    return SimilarityReport([stats[lbl] for lbl in GROUP_LABELS], "grouping")


# ── wall differentiation / remapping experiments ──────────────────

def _wall_frame(wall: Wall) -> tuple[np.ndarray, np.ndarray, float]:
    p1 = np.array([wall.x1, wall.y1])
    e = np.array([wall.x2 - wall.x1, wall.y2 - wall.y1])
    length = float(np.sqrt(e @ e))
    if length == 0.0:
        raise ValidationError("cannot flank a zero-length wall")
    return p1, e / length, length


def sample_flanking_positions(arena: ArenaSpec, wall: Wall, n_per_side: int,
                              seed: int, clearance: float = 0.15,
                              min_offset: float = 0.25, max_offset: float = 0.8,
                              max_tries: int = 500) -> list[tuple[float, float, int]]:
    """Sample (x, y, side) probe positions flanking ``wall`` inside ``arena``.

    side is +1/-1 along the wall normal. Positions keep ``clearance`` of
    free space and sit ``min_offset``..``max_offset`` beyond the wall face,
    with their perpendicular foot in the middle 80% of the segment.
    """
    p1, u, length = _wall_frame(wall)
    normal = np.array([-u[1], u[0]])
    rng = np.random.default_rng(seed)
    out: list[tuple[float, float, int]] = []
    for side in (1, -1):
        found = 0
        for _ in range(max_tries):
            if found == n_per_side:
                break
            t = rng.uniform(0.1, 0.9) * length
            off = rng.uniform(min_offset, max_offset) + wall.thickness / 2.0
            pos = p1 + t * u + side * off * normal
            pose = Pose(float(pos[0]), float(pos[1]), 0.0)
            if pose_is_valid(arena, pose, clearance=clearance):
                out.append((pose.x, pose.y, side))
                found += 1
        if found < n_per_side:
            raise ValidationError(
                f"wall has no {n_per_side} valid flanking positions on side {side:+d}")
    return out


def _probe_patterns(ensemble: PlaceCellEnsemble, arena: ArenaSpec,
                    positions: list[tuple[float, float, int]],
                    rcfg: RenderConfig, dcfg: DescriptorConfig,
                    use_raw: bool) -> list[tuple[int, list[np.ndarray]]]:
    """Render 8 headings per probe position and return activation vectors:
    one (side, [vector per heading]) entry per position."""
    if ensemble.feature_source != FeatureSource.MULTIMODAL:
        raise ValidationError(
            "probe experiments need a multimodal-feature ensemble "
            "(external embeddings cannot be recomputed for new probe images)")
    out = []
    for (x, y, side) in positions:
        vecs = []
        for h in ACTION_SET:
            img = render_pov(arena, Pose(x, y, h), rcfg)
            fv = extract_multimodal(img, dcfg, observation_ref=f"probe_{x:.3f}_{y:.3f}_{h:.3f}")
            p = activate(ensemble, fv)
            vecs.append(p.raw if use_raw else p.normalized)
        out.append((side, vecs))
    return out


def _side_report(probes: list[tuple[int, list[np.ndarray]]]) -> SimilarityReport:
    """Same-side vs cross-side pairwise similarities at matched headings."""
    same = GroupStats(SIDE_LABELS[0])
    cross = GroupStats(SIDE_LABELS[1])
    n = len(probes)
    for h_idx in range(len(ACTION_SET)):
        for i in range(n):
            for j in range(i + 1, n):
                side_i, vecs_i = probes[i]
                side_j, vecs_j = probes[j]
                stats = same if side_i == side_j else cross
                _record_pair(stats, vecs_i[h_idx], vecs_j[h_idx])
    return SimilarityReport([same, cross], "wall")


def _side_tests(report: SimilarityReport, welch: bool) -> dict[str, TTestResult]:
    same, cross = report.group(SIDE_LABELS[0]), report.group(SIDE_LABELS[1])
    tests = {}
    for metric in ("cosine", "euclidean"):
        a = [v for v in getattr(same, metric) if v is not None]
        b = [v for v in getattr(cross, metric) if v is not None]
        tests[metric] = students_t(a, b, welch=welch)
    return tests


def wall_experiment(ensemble: PlaceCellEnsemble, arena: ArenaSpec,
                    rcfg: RenderConfig, dcfg: DescriptorConfig, seed: int = 0,
                    wall_index: int = 0, n_per_side: int = 3,
                    clearance: float = 0.15, use_raw: bool = False,
                    welch: bool = False) -> tuple[SimilarityReport, dict[str, TTestResult]]:
    """Same-side vs cross-side activation similarity around one wall.

    Probes sit 3 per side (by default) at matched headings; Student's t
    compares the same-side and cross-side cosine and Euclidean populations.
    """
    if not arena.walls:
        raise ValidationError(f"arena '{arena.name}' has no walls to flank")
    if not (0 <= wall_index < len(arena.walls)):
        raise ValidationError(f"wall index {wall_index} out of range "
                              f"({len(arena.walls)} walls)")
    if ensemble.arena_id and ensemble.arena_id != arena.name:
        raise ValidationError(
            f"ensemble was built for arena '{ensemble.arena_id}', not '{arena.name}'")
    wall = arena.walls[wall_index]
    positions = sample_flanking_positions(arena, wall, n_per_side, seed,
                                          clearance=clearance)
    probes = _probe_patterns(ensemble, arena, positions, rcfg, dcfg, use_raw)
    report = _side_report(probes)
    return report, _side_tests(report, welch)


def _changed_wall(before: ArenaSpec, after: ArenaSpec, mode: str) -> Wall:
    cb, ca = Counter(before.walls), Counter(after.walls)
    added = list((ca - cb).elements())
    removed = list((cb - ca).elements())
    if mode == "add":
        if len(added) != 1 or removed:
            raise ValidationError(
                "add-mode arenas must differ by exactly one added wall")
        return added[0]
    if mode == "remove":
        if len(removed) != 1 or added:
            raise ValidationError(
                "remove-mode arenas must differ by exactly one removed wall")
        return removed[0]
    raise ValidationError(f"unknown remap mode '{mode}' (expected add|remove)")


def remap_experiment(ensemble: PlaceCellEnsemble, arena_before: ArenaSpec,
                     arena_after: ArenaSpec, mode: str, rcfg: RenderConfig,
                     dcfg: DescriptorConfig, seed: int = 0, n_per_side: int = 3,
                     clearance: float = 0.15, use_raw: bool = False,
                     welch: bool = False
                     ) -> tuple[tuple[SimilarityReport, SimilarityReport],
                                tuple[dict[str, TTestResult], dict[str, TTestResult]]]:
    """Activation similarity around a wall change, without ensemble rebuild.

    The same probe positions (sampled so they are valid in whichever arena
    contains the changed wall, hence in both) are rendered before and
    after the change; each phase gets a same-side/cross-side report and
    t-tests. The ensemble must come from ``arena_before``'s regime.
    """
    wall = _changed_wall(arena_before, arena_after, mode)
    if ensemble.arena_id and ensemble.arena_id != arena_before.name:
        raise ValidationError(
            f"ensemble was built for arena '{ensemble.arena_id}', "
            f"not the pre-change arena '{arena_before.name}'")
    walled = arena_after if mode == "add" else arena_before
    positions = sample_flanking_positions(walled, wall, n_per_side, seed,
                                          clearance=clearance)
    rep_before = _side_report(_probe_patterns(ensemble, arena_before, positions,
                                              rcfg, dcfg, use_raw))
    rep_after = _side_report(_probe_patterns(ensemble, arena_after, positions,
                                             rcfg, dcfg, use_raw))
    return ((rep_before, rep_after),
            (_side_tests(rep_before, welch), _side_tests(rep_after, welch)))


# ── report emission ───────────────────────────────────────────────

def write_report_csv(report: SimilarityReport, path, config_hash: str = "") -> None:
    with open(path, "w", encoding="ascii") as f:
        if config_hash:
            f.write(f"# config_hash {config_hash}\n")
        f.write("\n".join(report.csv_rows()) + "\n")


def ttest_summary(label: str, tests: dict[str, TTestResult]) -> list[str]:
    lines = [label]
    for metric in sorted(tests):
        r = tests[metric]
        kind = "welch" if r.welch else "student"
        lines.append(f"  {metric}: t={r.t_statistic:.4f} dof={r.dof:.1f} "
                     f"p={r.p_value:.6g} n={r.group_sizes[0]}/{r.group_sizes[1]} ({kind})")
    return lines


def write_matrices_csv(path, blocks: list[tuple[str, np.ndarray]],
                       config_hash: str = "") -> None:
    """Dump labelled pairwise matrices (one comment header per block)."""
    with open(path, "w", encoding="ascii") as f:
        if config_hash:
            f.write(f"# config_hash {config_hash}\n")
        for label, mat in blocks:
            f.write(f"# matrix {label}\n")
            for row in np.asarray(mat):
                f.write(",".join(repr(float(v)) for v in row) + "\n")


def pairwise_matrix(vectors: list[np.ndarray], metric: str) -> np.ndarray:
    """Full pairwise similarity matrix (absent entries become NaN)."""
    fns = {"cosine": cosine_similarity, "pearson": pearson, "euclidean": euclidean}
    fn = fns[metric]
    n = len(vectors)
    out = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            try:
                out[i, j] = fn(vectors[i], vectors[j])
            except (NumericError, ValidationError):
                out[i, j] = np.nan
    return out
