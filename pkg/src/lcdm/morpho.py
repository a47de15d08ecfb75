"""Study data model and the primitives of the pooled-distance pipeline:
distance filtering, volumes, descriptive measures, pooling, kernel density
estimation, outlier screening, empirical cdfs, and stochastic-order
inference from paired one-sided K-S results.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

from lcdm.npstats import Alternative, TestResult

__all__ = [
    "GROUP_ORDER",
    "SubjectRecord",
    "FilterReport",
    "filter_distances",
    "volume_mm3",
    "Descriptives",
    "descriptives",
    "PooledSample",
    "pool",
    "Density",
    "silverman_bandwidth",
    "kde",
    "OutlierReport",
    "flag_outliers",
    "empirical_cdf",
    "OrderVerdict",
    "infer_stochastic_order",
]

GROUP_ORDER = ("MDD", "HR", "Ctrl")
HEMISPHERES = ("L", "R")

MODE_DECIMALS = 1  # distances are rounded to 0.1 mm before taking the mode


@dataclass(frozen=True)
class SubjectRecord:
    """One subject's filtered distance samples, by hemisphere."""

    subject_id: str
    group: str
    left: np.ndarray
    right: np.ndarray
    twin_pair_id: str | None = None

    def __post_init__(self) -> None:
        for name in ("left", "right"):
            arr = np.asarray(getattr(self, name), dtype=float).ravel()
            if arr.size and not np.isfinite(arr).all():
                raise ValueError(f"{self.subject_id}: non-finite distances in {name}")
            object.__setattr__(self, name, arr)

    def hemisphere(self, which: str) -> np.ndarray:
        if which == "L":
            return self.left
        if which == "R":
            return self.right
        raise ValueError(f"hemisphere must be 'L' or 'R', got {which!r}")


def group_sort_key(group: str):
    try:
        return (0, GROUP_ORDER.index(group))
    except ValueError:
        return (1, group)


@dataclass(frozen=True)
class FilterReport:
    kept: int
    trimmed_below: int
    trimmed_above: int

    @property
    def total(self) -> int:
        return self.kept + self.trimmed_below + self.trimmed_above

    @property
    def fraction_below(self) -> float:
        return self.trimmed_below / self.total if self.total else 0.0

    @property
    def fraction_above(self) -> float:
        return self.trimmed_above / self.total if self.total else 0.0


def filter_distances(raw, lo: float, hi: float) -> tuple[np.ndarray, FilterReport]:
    """Keep distances d with lo <= d <= hi, preserving order.

    Returns the kept values and a report of how many fell below/above.
    """
    if not lo < hi:
        raise ValueError(f"need lo < hi, got [{lo}, {hi}]")
    arr = np.asarray(raw, dtype=float).ravel()
    below = int((arr < lo).sum())
    above = int((arr > hi).sum())
    kept = arr[(arr >= lo) & (arr <= hi)]
    return kept, FilterReport(kept=kept.size, trimmed_below=below, trimmed_above=above)


def volume_mm3(sample, voxel_mm=(0.5, 0.5, 0.5)) -> float:
    """Tissue volume implied by a (filtered) distance sample: count x voxel volume."""
    n = np.asarray(sample, dtype=float).ravel().size
    vx, vy, vz = voxel_mm
    return n * vx * vy * vz


@dataclass(frozen=True)
class Descriptives:
    median_mm: float
    mode_mm: float
    range_mm: float
    variance_mm2: float


def descriptives(sample) -> Descriptives:
    """Median, 0.1 mm-rounded mode (ties go to the smallest bin), range, and
    unbiased variance of a distance sample."""
    arr = np.asarray(sample, dtype=float).ravel()
    if arr.size < 2:
        raise ValueError(f"descriptives need at least 2 values, got {arr.size}")
    rounded = np.round(arr, MODE_DECIMALS)
    values, counts = np.unique(rounded, return_counts=True)
    mode = float(values[counts == counts.max()].min())
    return Descriptives(
        median_mm=float(np.median(arr)),
        mode_mm=mode,
        range_mm=float(arr.max() - arr.min()),
        variance_mm2=float(arr.var(ddof=1)),
    )


@dataclass(frozen=True)
class PooledSample:
    group: str
    hemisphere: str
    values: np.ndarray
    subject_ids: tuple[str, ...]


def pool(
    subjects,
    group: str,
    hemisphere: str,
    exclude: frozenset[str] | set[str] = frozenset(),
) -> PooledSample:
    """Concatenate a group's distances for one hemisphere, in subject-id order."""
    members = sorted(
        (s for s in subjects if s.group == group and s.subject_id not in exclude),
        key=lambda s: s.subject_id,
    )
    if not members:
        raise ValueError(f"no subjects left in group {group!r} after exclusion")
    parts = [s.hemisphere(hemisphere) for s in members]
    return PooledSample(
        group=group,
        hemisphere=hemisphere,
        values=np.concatenate(parts) if parts else np.empty(0),
        subject_ids=tuple(s.subject_id for s in members),
    )


@dataclass(frozen=True)
class Density:
    grid: np.ndarray
    values: np.ndarray
    bandwidth: float


def silverman_bandwidth(sample) -> float:
    """0.9 * min(sd, IQR/1.34) * n^(-1/5); falls back to sd when IQR is 0."""
    arr = np.asarray(sample, dtype=float).ravel()
    sd = float(arr.std(ddof=1))
    q75, q25 = np.percentile(arr, [75, 25])
    iqr = float(q75 - q25)
    scale = min(sd, iqr / 1.34) if iqr > 0 else sd
    h = 0.9 * scale * arr.size ** (-0.2)
    if h <= 0.0:
        raise ValueError("degenerate (zero-spread) sample: bandwidth is 0")
    return h


def kde(sample, bandwidth="silverman", grid=None, grid_points: int = 512) -> Density:
    """Gaussian kernel density estimate.

    `bandwidth` is a positive width in mm or "silverman". `grid` is an array
    of evaluation points, a (lo, hi, n) spec, or None for an automatic grid
    spanning the data range widened by 4 bandwidths.
    """
    arr = np.asarray(sample, dtype=float).ravel()
    if arr.size < 2:
        raise ValueError(f"kde needs at least 2 values, got {arr.size}")
    if isinstance(bandwidth, str):
        if bandwidth != "silverman":
            raise ValueError(f"unknown bandwidth rule {bandwidth!r}")
        h = silverman_bandwidth(arr)
    else:
        h = float(bandwidth)
        if h <= 0.0:
            raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    if grid is None:
        g = np.linspace(arr.min() - 4 * h, arr.max() + 4 * h, grid_points)
    elif isinstance(grid, tuple) and len(grid) == 3:
        g = np.linspace(grid[0], grid[1], int(grid[2]))
    else:
        g = np.asarray(grid, dtype=float).ravel()
    norm = 1.0 / (arr.size * h * math.sqrt(2.0 * math.pi))
    values = np.empty(g.size)
    chunk = max(1, 2**22 // max(arr.size, 1))
    for start in range(0, g.size, chunk):
        block = g[start : start + chunk, None]
        values[start : start + chunk] = norm * np.exp(
            -0.5 * ((block - arr[None, :]) / h) ** 2
        ).sum(axis=1)
    return Density(grid=g, values=values, bandwidth=h)


@dataclass(frozen=True)
class OutlierReport:
    scores: dict[str, float]
    threshold: float
    flagged: frozenset[str]


def flag_outliers(
    samples: Mapping[str, np.ndarray],
    threshold: float | None = None,
    grid_points: int = 256,
) -> OutlierReport:
    """Score each subject by how far its density sits from the rest of its group.

    score(s) = L1 distance, on one common grid, between s's KDE and the KDE
    of the pooled leave-s-out sample. The default threshold is 1.5 x the
    median score; scores are always reported, whatever the threshold.
    """
    ids = sorted(samples)
    if len(ids) < 3:
        raise ValueError(f"outlier screening needs at least 3 subjects, got {len(ids)}")
    arrays = {s: np.asarray(samples[s], dtype=float).ravel() for s in ids}
    bandwidths = {s: silverman_bandwidth(arrays[s]) for s in ids}
    h_max = max(bandwidths.values())
    lo = min(a.min() for a in arrays.values()) - 4 * h_max
    hi = max(a.max() for a in arrays.values()) + 4 * h_max
    grid = np.linspace(lo, hi, grid_points)
    scores: dict[str, float] = {}
    for s in ids:
        own = kde(arrays[s], grid=grid)
        rest = np.concatenate([arrays[t] for t in ids if t != s])
        loo = kde(rest, grid=grid)
        scores[s] = float(np.trapezoid(np.abs(own.values - loo.values), grid))
    if threshold is None:
        threshold = 1.5 * float(np.median(list(scores.values())))
    flagged = frozenset(s for s in ids if scores[s] > threshold)
    return OutlierReport(scores=scores, threshold=float(threshold), flagged=flagged)


def empirical_cdf(sample, grid) -> np.ndarray:
    """Right-continuous step cdf of the sample evaluated at grid points."""
    arr = np.sort(np.asarray(sample, dtype=float).ravel())
    if arr.size == 0:
        raise ValueError("empirical cdf of an empty sample")
    g = np.asarray(grid, dtype=float).ravel()
    return np.searchsorted(arr, g, side="right") / arr.size


class OrderVerdict(Enum):
    FIRST_STOCHASTICALLY_SMALLER = "first-stochastically-smaller"
    SECOND_STOCHASTICALLY_SMALLER = "second-stochastically-smaller"
    DIFFERENT_NO_ORDERING = "different-no-ordering"
    NO_DIFFERENCE = "no-difference"


def infer_stochastic_order(
    ks_less: TestResult, ks_greater: TestResult, alpha: float
) -> OrderVerdict:
    """Stochastic-ordering verdict from the two one-sided K-S results.

    Significance of only the greater alternative (first cdf above) means the
    first sample is stochastically smaller; only less, the mirror image;
    both, distributions differ without an ordering; neither, no evidence of
    difference.
    """
    if ks_less.alternative is not Alternative.LESS or ks_greater.alternative is not Alternative.GREATER:
        raise ValueError("pass the K-S results for the less and greater alternatives, in that order")
    sig_less = ks_less.p_value <= alpha
    sig_greater = ks_greater.p_value <= alpha
    if sig_less and sig_greater:
        return OrderVerdict.DIFFERENT_NO_ORDERING
    if sig_greater:
        return OrderVerdict.FIRST_STOCHASTICALLY_SMALLER
    if sig_less:
        return OrderVerdict.SECOND_STOCHASTICALLY_SMALLER
    return OrderVerdict.NO_DIFFERENCE
