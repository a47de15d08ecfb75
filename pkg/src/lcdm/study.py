"""Whole-study analysis: descriptive-measure comparisons, pooled-distance
comparisons, HOV, left-right asymmetry, cdf comparisons with stochastic
ordering, and outlier screening, assembled into one deterministic report.

Reporting conventions follow the source tables this pipeline mirrors: each
pairwise cell carries the smaller one-sided p-value with its direction tag
("less" means the first group tends to be smaller), Holm-adjusted across the
group pairs of its family; the two-sided p and its Holm adjustment ride
along, since familywise significance statements at level alpha belong to the
two-sided family.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np
from scipy.special import stdtr

from lcdm.morpho import (
    HEMISPHERES,
    SubjectRecord,
    descriptives,
    filter_distances,
    flag_outliers,
    group_sort_key,
    infer_stochastic_order,
    pool,
    volume_mm3,
)
from lcdm.npstats import (
    Alternative,
    TestResult,
    anova_f,
    brown_forsythe,
    holm_adjust,
    kruskal_wallis,
    ks_two_sample,
    lilliefors,
    paired_t,
    spearman,
    t_test,
    welch_anova,
    wilcoxon_rank_sum,
    wilcoxon_signed_rank,
)

__all__ = [
    "MEASURES",
    "StudyConfig",
    "StudyReport",
    "run_study",
    "read_distance_table",
    "load_study",
    "write_report",
]

MEASURES = ("volume", "median", "mode", "range", "variance")

VARIANT_ALL = "all_subjects"
VARIANT_REMOVED = "outliers_removed"


@dataclass(frozen=True)
class StudyConfig:
    """Knobs of the analysis pipeline; every default is echoed in the report."""

    alpha: float = 0.05
    voxel_mm: tuple[float, float, float] = (0.5, 0.5, 0.5)
    filter_lo: float = -0.5
    filter_hi: float = 5.5
    bandwidth: float | str = "silverman"
    outlier_threshold: float | None = None
    kde_grid_points: int = 256
    lilliefors_replicates: int = 2000
    seed: int = 0
    variants: tuple[str, ...] = (VARIANT_ALL, VARIANT_REMOVED)
    dependent_pair: tuple[str, str] | None = ("MDD", "HR")

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie strictly between 0 and 1")
        if not self.filter_lo < self.filter_hi:
            raise ValueError("filter bounds must satisfy lo < hi")
        bad = [v for v in self.variants if v not in (VARIANT_ALL, VARIANT_REMOVED)]
        if bad or not self.variants:
            raise ValueError(f"variants must be drawn from {(VARIANT_ALL, VARIANT_REMOVED)}")


@dataclass
class StudyReport:
    data: dict

    def to_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, indent=2) + "\n"


def _float(x) -> float:
    return float(x)


def _summary(values: np.ndarray) -> dict:
    return {
        "n": int(values.size),
        "mean": _float(values.mean()),
        "median": _float(np.median(values)),
        "sd": _float(values.std(ddof=1)) if values.size > 1 else 0.0,
    }


def _direction_cell(p_less: float, p_greater: float) -> dict:
    if p_less <= p_greater:
        direction, p = "less", p_less
    else:
        direction, p = "greater", p_greater
    return {
        "direction": direction,
        "p": _float(p),
        "p_two": _float(min(1.0, 2.0 * min(p_less, p_greater))),
    }


def _one_sided_pair(test, x, y) -> tuple[float, float]:
    return test(x, y, Alternative.LESS).p_value, test(x, y, Alternative.GREATER).p_value


def _one_sided_diffs(test, diffs) -> tuple[float, float]:
    return test(diffs, Alternative.LESS).p_value, test(diffs, Alternative.GREATER).p_value


def _holm_family(cells: list[dict]) -> list[dict]:
    """Attach Holm-adjusted values of both the directional and two-sided p's."""
    if not cells:
        return cells
    for key, out in (("p", "p_holm"), ("p_two", "p_two_holm")):
        adjusted = holm_adjust([c[key] for c in cells])
        for cell, adj in zip(cells, adjusted):
            cell[out] = _float(adj)
    return cells


def _bf_pair_pvalues(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """One-sided two-group B-F p-values via the pooled t on |value - median|.

    The squared pooled t equals the two-group B-F F statistic, so the
    two-sided p derived from this pair coincides with brown_forsythe's.
    """
    dx = np.abs(x - np.median(x))
    dy = np.abs(y - np.median(y))
    nx, ny = dx.size, dy.size
    sp2 = ((nx - 1) * dx.var(ddof=1) + (ny - 1) * dy.var(ddof=1)) / (nx + ny - 2)
    if sp2 <= 0.0:
        raise ValueError("zero pooled within-group variance of deviations")
    t = (dx.mean() - dy.mean()) / np.sqrt(sp2 * (1.0 / nx + 1.0 / ny))
    df = nx + ny - 2
    tail = float(stdtr(df, -abs(t)))
    return (tail, 1.0 - tail) if t <= 0 else (1.0 - tail, tail)


def _groups_of(subjects) -> list[str]:
    return sorted({s.group for s in subjects}, key=group_sort_key)


def _subject_measures(subjects, voxel_mm) -> dict[str, dict[str, dict[str, float]]]:
    """subject_id -> hemisphere -> measure -> value (hemispheres with n >= 2)."""
    out: dict[str, dict[str, dict[str, float]]] = {}
    for s in subjects:
        per_hemi = {}
        for hemi in HEMISPHERES:
            values = s.hemisphere(hemi)
            if values.size < 2:
                continue
            d = descriptives(values)
            per_hemi[hemi] = {
                "volume": volume_mm3(values, voxel_mm),
                "median": d.median_mm,
                "mode": d.mode_mm,
                "range": d.range_mm,
                "variance": d.variance_mm2,
            }
        out[s.subject_id] = per_hemi
    return out


def _twin_links(subjects, pair: tuple[str, str]) -> list[tuple[SubjectRecord, SubjectRecord]]:
    """Complete (first-group, second-group) twin pairs, ordered by pair id."""
    by_pair: dict[str, dict[str, SubjectRecord]] = {}
    for s in subjects:
        if s.twin_pair_id is not None and s.group in pair:
            by_pair.setdefault(s.twin_pair_id, {})[s.group] = s
    links = []
    for pair_id in sorted(by_pair):
        members = by_pair[pair_id]
        if pair[0] in members and pair[1] in members:
            links.append((members[pair[0]], members[pair[1]]))
    return links


def run_study(subjects, config: StudyConfig = StudyConfig()) -> StudyReport:
    """Run the full battery over filtered subject records.

    Deterministic: identical subjects and config (including seed) give a
    byte-identical JSON report.
    """
    subjects = sorted(subjects, key=lambda s: (group_sort_key(s.group), s.subject_id))
    if not subjects:
        raise ValueError("no subjects")
    seen: dict[str, str] = {}
    for s in subjects:
        if s.subject_id in seen:
            raise ValueError(f"duplicate subject id {s.subject_id!r}")
        seen[s.subject_id] = s.group
    groups = _groups_of(subjects)
    if len(groups) < 2:
        raise ValueError(f"need at least 2 groups, got {groups}")
    warnings: list[str] = []

    dependent = config.dependent_pair if config.dependent_pair else None
    if dependent is not None and not set(dependent).issubset(groups):
        dependent = None
    links = _twin_links(subjects, dependent) if dependent else []
    if dependent is not None and not links:
        raise ValueError(
            f"groups {dependent} are configured as twin-linked but no complete "
            "twin_pair_id links exist; paired tests impossible"
        )

    report: dict = {
        "header": {
            "alpha": config.alpha,
            "voxel_mm": list(config.voxel_mm),
            "filter_bounds_mm": [config.filter_lo, config.filter_hi],
            "bandwidth": config.bandwidth,
            "outlier_threshold": config.outlier_threshold,
            "kde_grid_points": config.kde_grid_points,
            "lilliefors_replicates": config.lilliefors_replicates,
            "seed": config.seed,
            "variants": list(config.variants),
            "dependent_pair": list(dependent) if dependent else None,
            "groups": groups,
            "n_subjects": len(subjects),
        },
        "warnings": warnings,
    }

    measures_by_subject = _subject_measures(subjects, config.voxel_mm)
    by_group = {g: [s for s in subjects if s.group == g] for g in groups}

    report["subjects"] = [
        {
            "subject_id": s.subject_id,
            "group": s.group,
            "twin_pair_id": s.twin_pair_id,
            "hemispheres": {
                hemi: {
                    "n": int(s.hemisphere(hemi).size),
                    **{m: _float(v) for m, v in measures_by_subject[s.subject_id].get(hemi, {}).items()},
                }
                for hemi in HEMISPHERES
            },
        }
        for s in subjects
    ]

    report["measures"] = {
        m: _measure_tables(m, subjects, by_group, groups, measures_by_subject, dependent, links, config, warnings)
        for m in MEASURES
    }

    # outlier screening per group and hemisphere
    outliers: dict = {}
    flagged: dict[tuple[str, str], frozenset[str]] = {}
    for hemi in HEMISPHERES:
        outliers[hemi] = {}
        for g in groups:
            eligible = {
                s.subject_id: s.hemisphere(hemi)
                for s in by_group[g]
                if s.hemisphere(hemi).size >= 2
            }
            if len(eligible) < 3:
                warnings.append(f"outlier screening skipped for {g}/{hemi}: fewer than 3 subjects")
                flagged[(g, hemi)] = frozenset()
                outliers[hemi][g] = {"scores": {}, "threshold": None, "flagged": []}
                continue
            rep = flag_outliers(eligible, threshold=config.outlier_threshold, grid_points=config.kde_grid_points)
            flagged[(g, hemi)] = rep.flagged
            outliers[hemi][g] = {
                "scores": {k: _float(v) for k, v in sorted(rep.scores.items())},
                "threshold": _float(rep.threshold),
                "flagged": sorted(rep.flagged),
            }
    report["outliers"] = outliers

    lilliefors_counter = [0]
    report["pooled"] = {
        variant: _pooled_tables(
            variant, subjects, groups, flagged, config, warnings, lilliefors_counter
        )
        for variant in config.variants
    }
    return StudyReport(data=report)


def _measure_tables(measure, subjects, by_group, groups, values_by_subject, dependent, links, config, warnings):
    def group_values(group: str, hemi: str) -> np.ndarray:
        vals = [
            values_by_subject[s.subject_id][hemi][measure]
            for s in by_group[group]
            if hemi in values_by_subject[s.subject_id]
        ]
        return np.asarray(vals, dtype=float)

    tables: dict = {"summary": {}, "pairwise": {}, "hov": {}, "cdf": {}}
    for hemi in HEMISPHERES:
        tables["summary"][hemi] = {
            g: _summary(group_values(g, hemi)) for g in groups if group_values(g, hemi).size
        }

        cells_w: list[dict] = []
        cells_t: list[dict] = []
        for g1, g2 in combinations(groups, 2):
            x, y = group_values(g1, hemi), group_values(g2, hemi)
            base = {"first": g1, "second": g2}
            if dependent is not None and {g1, g2} == set(dependent):
                diffs = np.asarray(
                    [
                        values_by_subject[a.subject_id][hemi][measure]
                        - values_by_subject[b.subject_id][hemi][measure]
                        for a, b in links
                        if hemi in values_by_subject[a.subject_id]
                        and hemi in values_by_subject[b.subject_id]
                    ]
                )
                if (g1, g2) != dependent:
                    diffs = -diffs
                if diffs.size < 2:
                    warnings.append(f"{measure}/{hemi}: not enough twin pairs for {g1},{g2}")
                    continue
                try:
                    pl, pg = _one_sided_diffs(wilcoxon_signed_rank, diffs)
                    cells_w.append({**base, "method": "wilcoxon-signed-rank", "n_pairs": int(diffs.size), **_direction_cell(pl, pg)})
                except ValueError as exc:
                    warnings.append(f"{measure}/{hemi} signed-rank {g1},{g2}: {exc}")
                try:
                    pl, pg = _one_sided_diffs(paired_t, diffs)
                    cells_t.append({**base, "method": "paired-t", "n_pairs": int(diffs.size), **_direction_cell(pl, pg)})
                except ValueError as exc:
                    warnings.append(f"{measure}/{hemi} paired-t {g1},{g2}: {exc}")
            else:
                if x.size < 2 or y.size < 2:
                    continue
                pl, pg = _one_sided_pair(wilcoxon_rank_sum, x, y)
                cells_w.append({**base, "method": "wilcoxon-rank-sum", "n_first": int(x.size), "n_second": int(y.size), **_direction_cell(pl, pg)})
                try:
                    pl, pg = _one_sided_pair(t_test, x, y)
                    cells_t.append({**base, "method": "welch-t", "n_first": int(x.size), "n_second": int(y.size), **_direction_cell(pl, pg)})
                except ValueError as exc:
                    warnings.append(f"{measure}/{hemi} welch-t {g1},{g2}: {exc}")
        tables["pairwise"][hemi] = {
            "rank": _holm_family(cells_w),
            "t": _holm_family(cells_t),
        }

        hov_cells = []
        for g1, g2 in combinations(groups, 2):
            if dependent is not None and {g1, g2} == set(dependent):
                continue  # dependent samples: HOV comparison not meaningful
            x, y = group_values(g1, hemi), group_values(g2, hemi)
            if x.size < 2 or y.size < 2:
                continue
            try:
                hov_cells.append(
                    {"first": g1, "second": g2, "p": _float(brown_forsythe([x, y]).p_value)}
                )
            except ValueError as exc:
                warnings.append(f"{measure}/{hemi} hov {g1},{g2}: {exc}")
        tables["hov"][hemi] = hov_cells

        cdf_cells = []
        for g1, g2 in combinations(groups, 2):
            if dependent is not None and {g1, g2} == set(dependent):
                continue
            x, y = group_values(g1, hemi), group_values(g2, hemi)
            if x.size == 0 or y.size == 0:
                continue
            pl = ks_two_sample(x, y, Alternative.LESS).p_value
            pg = ks_two_sample(x, y, Alternative.GREATER).p_value
            cell = {"first": g1, "second": g2, **_direction_cell(pl, pg)}
            cell["p_two"] = _float(ks_two_sample(x, y, Alternative.TWO_SIDED).p_value)
            cdf_cells.append(cell)
        tables["cdf"][hemi] = _holm_family(cdf_cells)

    # left-right asymmetry of the measure: paired per subject
    def asym_cells(method_name, runner):
        def diffs_of(records):
            pairs = [
                (values_by_subject[s.subject_id]["L"][measure], values_by_subject[s.subject_id]["R"][measure])
                for s in records
                if "L" in values_by_subject[s.subject_id] and "R" in values_by_subject[s.subject_id]
            ]
            return np.asarray([l - r for l, r in pairs])

        out: dict = {}
        overall = diffs_of(subjects)
        if overall.size >= 2:
            try:
                pl, pg = _one_sided_diffs(runner, overall)
                out["overall"] = {"method": method_name, "n_pairs": int(overall.size), **_direction_cell(pl, pg)}
            except ValueError as exc:
                warnings.append(f"{measure} asymmetry overall ({method_name}): {exc}")
        cells = []
        for g in groups:
            d = diffs_of(by_group[g])
            if d.size < 2:
                continue
            try:
                pl, pg = _one_sided_diffs(runner, d)
                cells.append({"group": g, "method": method_name, "n_pairs": int(d.size), **_direction_cell(pl, pg)})
            except ValueError as exc:
                warnings.append(f"{measure} asymmetry {g} ({method_name}): {exc}")
        out["groups"] = _holm_family(cells)
        return out

    tables["asymmetry"] = {
        "rank": asym_cells("wilcoxon-signed-rank", wilcoxon_signed_rank),
        "t": asym_cells("paired-t", paired_t),
    }

    # Spearman correlation between left and right values
    def corr_of(pairs):
        arr = np.asarray(pairs, dtype=float)
        if len(arr) < 3:
            return None
        try:
            rho, result = spearman(arr[:, 0], arr[:, 1])
        except ValueError:
            return None
        return {"rho": _float(rho), "p": _float(result.p_value), "n": len(arr)}

    correlation: dict = {}
    lr_pairs = [
        (values_by_subject[s.subject_id]["L"][measure], values_by_subject[s.subject_id]["R"][measure])
        for s in subjects
        if "L" in values_by_subject[s.subject_id] and "R" in values_by_subject[s.subject_id]
    ]
    correlation["overall"] = corr_of(lr_pairs)
    for g in groups:
        lr = [
            (values_by_subject[s.subject_id]["L"][measure], values_by_subject[s.subject_id]["R"][measure])
            for s in by_group[g]
            if "L" in values_by_subject[s.subject_id] and "R" in values_by_subject[s.subject_id]
        ]
        correlation[g] = corr_of(lr)
    if dependent is not None and links:
        for hemi, tag in (("L", "left"), ("R", "right")):
            pairs = [
                (values_by_subject[a.subject_id][hemi][measure], values_by_subject[b.subject_id][hemi][measure])
                for a, b in links
                if hemi in values_by_subject[a.subject_id] and hemi in values_by_subject[b.subject_id]
            ]
            correlation[f"dependent_{tag}"] = corr_of(pairs)
    tables["correlation"] = correlation
    return tables


def _pooled_tables(variant, subjects, groups, flagged, config, warnings, lilliefors_counter):
    def exclusions(group: str, hemi: str) -> frozenset[str]:
        if variant == VARIANT_REMOVED:
            return flagged[(group, hemi)]
        return frozenset()

    pools: dict[str, dict[str, np.ndarray]] = {}
    contributing: dict[str, dict[str, tuple[str, ...]]] = {}
    for hemi in HEMISPHERES:
        pools[hemi] = {}
        contributing[hemi] = {}
        for g in groups:
            pooled = pool(subjects, g, hemi, exclude=exclusions(g, hemi))
            pools[hemi][g] = pooled.values
            contributing[hemi][g] = pooled.subject_ids

    out: dict = {"summary": {}, "omnibus": {}, "pairwise": {}, "hov": {}, "cdf": {}}
    out["contributing_subjects"] = {
        hemi: {g: list(contributing[hemi][g]) for g in groups} for hemi in HEMISPHERES
    }

    for hemi in HEMISPHERES:
        samples = {g: pools[hemi][g] for g in groups}
        nonempty = {g: v for g, v in samples.items() if v.size > 0}
        if len(nonempty) < 2:
            warnings.append(f"pooled/{variant}/{hemi}: fewer than 2 nonempty groups")
            continue
        out["summary"][hemi] = {g: _summary(v) for g, v in nonempty.items()}

        omnibus: dict = {}
        group_list = [nonempty[g] for g in groups if g in nonempty]
        try:
            omnibus["kruskal_wallis"] = _float(kruskal_wallis(group_list).p_value)
        except ValueError as exc:
            warnings.append(f"pooled/{variant}/{hemi} kruskal-wallis: {exc}")
        for name, test in (("anova_f", anova_f), ("welch_anova", welch_anova), ("brown_forsythe", brown_forsythe)):
            try:
                omnibus[name] = _float(test(group_list).p_value)
            except ValueError as exc:
                warnings.append(f"pooled/{variant}/{hemi} {name}: {exc}")
        if config.lilliefors_replicates > 0:
            normality = {}
            for g in groups:
                if g not in nonempty or nonempty[g].size < 4:
                    continue
                seed = int(
                    np.random.SeedSequence([config.seed, 7_000_000 + lilliefors_counter[0]]).generate_state(1)[0]
                )
                lilliefors_counter[0] += 1
                normality[g] = _float(
                    lilliefors(nonempty[g], replicates=config.lilliefors_replicates, seed=seed).p_value
                )
            omnibus["lilliefors"] = normality
        out["omnibus"][hemi] = omnibus

        cells_w, cells_t, cells_bf, cells_ks = [], [], [], []
        for g1, g2 in combinations([g for g in groups if g in nonempty], 2):
            x, y = nonempty[g1], nonempty[g2]
            base = {"first": g1, "second": g2, "n_first": int(x.size), "n_second": int(y.size)}
            pl, pg = _one_sided_pair(lambda a, b, alt: wilcoxon_rank_sum(a, b, alt, mode="asymptotic"), x, y)
            cells_w.append({**base, "method": "wilcoxon-rank-sum", **_direction_cell(pl, pg)})
            try:
                pl, pg = _one_sided_pair(t_test, x, y)
                cells_t.append({**base, "method": "welch-t", **_direction_cell(pl, pg)})
            except ValueError as exc:
                warnings.append(f"pooled/{variant}/{hemi} t {g1},{g2}: {exc}")
            try:
                pl, pg = _bf_pair_pvalues(x, y)
                cells_bf.append({**base, "method": "brown-forsythe", **_direction_cell(pl, pg)})
            except ValueError as exc:
                warnings.append(f"pooled/{variant}/{hemi} bf {g1},{g2}: {exc}")

            p_two = ks_two_sample(x, y, Alternative.TWO_SIDED).p_value
            p_less = ks_two_sample(x, y, Alternative.LESS).p_value
            p_greater = ks_two_sample(x, y, Alternative.GREATER).p_value
            cells_ks.append(
                {
                    **base,
                    "method": "ks",
                    "p_two": _float(p_two),
                    "p_less": _float(p_less),
                    "p_greater": _float(p_greater),
                }
            )

        out["pairwise"][hemi] = {"rank": _holm_family(cells_w), "t": _holm_family(cells_t)}
        out["hov"][hemi] = _holm_family(cells_bf)

        # K-S: Holm within each alternative across pairs, then the ordering
        # verdict from the adjusted one-sided values
        for key in ("p_two", "p_less", "p_greater"):
            adjusted = holm_adjust([c[key] for c in cells_ks])
            for cell, adj in zip(cells_ks, adjusted):
                cell[f"{key}_holm"] = _float(adj)
        for cell in cells_ks:
            less = TestResult("ks", 0.0, cell["p_less_holm"], Alternative.LESS)
            greater = TestResult("ks", 0.0, cell["p_greater_holm"], Alternative.GREATER)
            cell["order"] = infer_stochastic_order(less, greater, config.alpha).value
        out["cdf"][hemi] = cells_ks

    # left-right asymmetry of pooled distances: unpaired two-sample tests
    def pooled_asym(method_name, runner):
        result: dict = {}
        left_all = np.concatenate([pools["L"][g] for g in groups])
        right_all = np.concatenate([pools["R"][g] for g in groups])
        if left_all.size and right_all.size:
            try:
                pl, pg = runner(left_all, right_all)
                result["overall"] = {
                    "method": method_name,
                    "n_left": int(left_all.size),
                    "n_right": int(right_all.size),
                    **_direction_cell(pl, pg),
                }
            except ValueError as exc:
                warnings.append(f"pooled/{variant} asymmetry overall ({method_name}): {exc}")
        cells = []
        for g in groups:
            lx, rx = pools["L"][g], pools["R"][g]
            if lx.size == 0 or rx.size == 0:
                continue
            try:
                pl, pg = runner(lx, rx)
                cells.append(
                    {
                        "group": g,
                        "method": method_name,
                        "n_left": int(lx.size),
                        "n_right": int(rx.size),
                        **_direction_cell(pl, pg),
                    }
                )
            except ValueError as exc:
                warnings.append(f"pooled/{variant} asymmetry {g} ({method_name}): {exc}")
        result["groups"] = _holm_family(cells)
        return result

    out["asymmetry"] = {
        "rank": pooled_asym(
            "wilcoxon-rank-sum",
            lambda a, b: _one_sided_pair(lambda x, y, alt: wilcoxon_rank_sum(x, y, alt, mode="asymptotic"), a, b),
        ),
        "t": pooled_asym("welch-t", lambda a, b: _one_sided_pair(t_test, a, b)),
    }
    return out


# ---------------------------------------------------------------------------
# distance-table I/O and report emission


def read_distance_table(path: str | Path, group_map: dict[str, str] | None = None):
    """Parse the long-format distance CSV into per-subject raw samples.

    Expected header: subject_id,group,hemisphere,distance_mm with an optional
    twin_pair_id column; one row per distance. Returns
    ``(samples, groups, twins)`` where samples maps
    (subject_id, hemisphere) -> list of raw distances.
    """
    samples: dict[tuple[str, str], list[float]] = {}
    subject_group: dict[str, str] = {}
    twins: dict[str, str | None] = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"subject_id", "group", "hemisphere", "distance_mm"}
        if reader.fieldnames is None or not required.issubset(set(reader.fieldnames)):
            raise ValueError(f"{path}: expected columns {sorted(required)}, got {reader.fieldnames}")
        has_twin = "twin_pair_id" in reader.fieldnames
        for lineno, row in enumerate(reader, start=2):
            sid = row["subject_id"].strip()
            group = row["group"].strip()
            if group_map is not None:
                if group not in group_map:
                    raise ValueError(f"{path}:{lineno}: group {group!r} not covered by the group map")
                group = group_map[group]
            hemi = row["hemisphere"].strip()
            if hemi not in HEMISPHERES:
                raise ValueError(f"{path}:{lineno}: hemisphere must be L or R, got {hemi!r}")
            if sid in subject_group and subject_group[sid] != group:
                raise ValueError(
                    f"{path}:{lineno}: subject {sid!r} appears in groups "
                    f"{subject_group[sid]!r} and {group!r}"
                )
            subject_group[sid] = group
            if has_twin:
                twin = row["twin_pair_id"].strip() or None
                if sid in twins and twins[sid] is not None and twin is not None and twins[sid] != twin:
                    raise ValueError(f"{path}:{lineno}: subject {sid!r} has conflicting twin_pair_id")
                if twin is not None:
                    twins[sid] = twin
                else:
                    twins.setdefault(sid, None)
            else:
                twins.setdefault(sid, None)
            try:
                value = float(row["distance_mm"])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: bad distance {row['distance_mm']!r}") from None
            samples.setdefault((sid, hemi), []).append(value)
    return samples, subject_group, twins


def load_study(
    path: str | Path,
    config: StudyConfig = StudyConfig(),
    group_map: dict[str, str] | None = None,
) -> tuple[list[SubjectRecord], dict]:
    """Read a distance table and build filtered subject records.

    Returns the records plus a filtering summary (counts trimmed per subject
    and hemisphere).
    """
    samples, subject_group, twins = read_distance_table(path, group_map)
    records = []
    trim_summary: dict[str, dict[str, dict[str, int | float]]] = {}
    for sid in sorted(subject_group):
        hemis = {}
        for hemi in HEMISPHERES:
            raw = samples.get((sid, hemi), [])
            kept, rep = filter_distances(raw, config.filter_lo, config.filter_hi)
            hemis[hemi] = kept
            trim_summary.setdefault(sid, {})[hemi] = {
                "kept": rep.kept,
                "trimmed_below": rep.trimmed_below,
                "trimmed_above": rep.trimmed_above,
            }
        records.append(
            SubjectRecord(
                subject_id=sid,
                group=subject_group[sid],
                left=hemis["L"],
                right=hemis["R"],
                twin_pair_id=twins.get(sid),
            )
        )
    return records, trim_summary


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join("" if v is None else str(v) for v in row) + "\n")


def write_report(report: StudyReport, out_dir: str | Path) -> list[Path]:
    """Write report.json plus the per-table CSV projections of it."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    json_path = out_dir / "report.json"
    json_path.write_text(report.to_json(), encoding="utf-8")
    written.append(json_path)

    data = report.data
    groups_rows, pair_rows, asym_rows, corr_rows, cdf_measure_rows = [], [], [], [], []
    for measure, tables in data["measures"].items():
        for hemi, per_group in tables["summary"].items():
            for g, s in per_group.items():
                groups_rows.append([measure, hemi, g, s["n"], s["mean"], s["sd"]])
        for hemi, families in tables["pairwise"].items():
            for family in ("rank", "t"):
                for c in families[family]:
                    pair_rows.append(
                        [measure, hemi, c["first"], c["second"], c["method"], c["direction"],
                         c["p"], c.get("p_holm"), c["p_two"], c.get("p_two_holm")]
                    )
        for hemi, cells in tables["hov"].items():
            for c in cells:
                pair_rows.append([measure, hemi, c["first"], c["second"], "brown-forsythe", "", c["p"], "", "", ""])
        for family in ("rank", "t"):
            block = tables["asymmetry"][family]
            if "overall" in block:
                c = block["overall"]
                asym_rows.append([measure, "overall", c["method"], c["direction"], c["p"], "", c["p_two"]])
            for c in block["groups"]:
                asym_rows.append([measure, c["group"], c["method"], c["direction"], c["p"], c.get("p_holm"), c["p_two"]])
        for label, cell in tables["correlation"].items():
            if cell is not None:
                corr_rows.append([measure, label, cell["rho"], cell["p"], cell["n"]])
        for hemi, cells in tables["cdf"].items():
            for c in cells:
                cdf_measure_rows.append(
                    [measure, hemi, c["first"], c["second"], c["direction"], c["p"], c.get("p_holm"), c["p_two"]]
                )

    files = [
        ("table1_measure_summary.csv", ["measure", "hemisphere", "group", "n", "mean", "sd"], groups_rows),
        (
            "table2_measure_pairwise.csv",
            ["measure", "hemisphere", "first", "second", "method", "direction", "p", "p_holm", "p_two", "p_two_holm"],
            pair_rows,
        ),
        (
            "table3_measure_asymmetry.csv",
            ["measure", "scope", "method", "direction", "p", "p_holm", "p_two"],
            asym_rows,
        ),
        ("table4_measure_correlation.csv", ["measure", "scope", "rho", "p", "n"], corr_rows),
        (
            "table4b_measure_cdf.csv",
            ["measure", "hemisphere", "first", "second", "direction", "p", "p_holm", "p_two"],
            cdf_measure_rows,
        ),
    ]

    pooled_summary_rows, pooled_pair_rows, pooled_hov_rows, pooled_asym_rows, pooled_cdf_rows = [], [], [], [], []
    for variant, tables in data["pooled"].items():
        for hemi, per_group in tables["summary"].items():
            for g, s in per_group.items():
                pooled_summary_rows.append([variant, hemi, g, s["n"], s["mean"], s["median"], s["sd"]])
        for hemi, families in tables["pairwise"].items():
            for family in ("rank", "t"):
                for c in families[family]:
                    pooled_pair_rows.append(
                        [variant, hemi, c["first"], c["second"], c["method"], c["direction"],
                         c["p"], c.get("p_holm"), c["p_two"], c.get("p_two_holm")]
                    )
        for hemi, cells in tables["hov"].items():
            for c in cells:
                pooled_hov_rows.append(
                    [variant, hemi, c["first"], c["second"], c["direction"], c["p"], c.get("p_holm"), c["p_two"], c.get("p_two_holm")]
                )
        for family in ("rank", "t"):
            block = tables["asymmetry"][family]
            if "overall" in block:
                c = block["overall"]
                pooled_asym_rows.append([variant, "overall", c["method"], c["direction"], c["p"], "", c["p_two"]])
            for c in block["groups"]:
                pooled_asym_rows.append([variant, c["group"], c["method"], c["direction"], c["p"], c.get("p_holm"), c["p_two"]])
        for hemi, cells in tables["cdf"].items():
            for c in cells:
                pooled_cdf_rows.append(
                    [variant, hemi, c["first"], c["second"], c["p_two"], c["p_two_holm"],
                     c["p_less"], c["p_less_holm"], c["p_greater"], c["p_greater_holm"], c["order"]]
                )

    files += [
        ("table5_pooled_summary.csv", ["variant", "hemisphere", "group", "n", "mean", "median", "sd"], pooled_summary_rows),
        (
            "table6_pooled_pairwise.csv",
            ["variant", "hemisphere", "first", "second", "method", "direction", "p", "p_holm", "p_two", "p_two_holm"],
            pooled_pair_rows,
        ),
        (
            "table7_pooled_hov.csv",
            ["variant", "hemisphere", "first", "second", "direction", "p", "p_holm", "p_two", "p_two_holm"],
            pooled_hov_rows,
        ),
        (
            "table7b_pooled_asymmetry.csv",
            ["variant", "scope", "method", "direction", "p", "p_holm", "p_two"],
            pooled_asym_rows,
        ),
        (
            "table8_pooled_cdf.csv",
            ["variant", "hemisphere", "first", "second", "p_two", "p_two_holm", "p_less", "p_less_holm", "p_greater", "p_greater_holm", "order"],
            pooled_cdf_rows,
        ),
    ]

    for name, header, rows in files:
        path = out_dir / name
        _write_csv(path, header, rows)
        written.append(path)
    return written
