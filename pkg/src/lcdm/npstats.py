"""Two- and multi-sample test battery used throughout the pooled-distance analyses.

All tests are pure functions returning a :class:`TestResult`. Rank-based tests
share one midrank routine; small tie-free inputs automatically switch to exact
null distributions (full enumeration of rank splits / sign assignments,
computed by integer dynamic programming). Asymptotic modes deliberately omit
the continuity correction so that the one-sided p-values of the rank-sum test
are exactly complementary: ``p(less) + p(greater) == 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import chdtrc, fdtrc, kolmogorov, ndtr, stdtr

__all__ = [
    "Alternative",
    "TestResult",
    "RankedSample",
    "midrank",
    "wilcoxon_rank_sum",
    "wilcoxon_signed_rank",
    "kruskal_wallis",
    "anova_f",
    "welch_anova",
    "t_test",
    "paired_t",
    "brown_forsythe",
    "ks_two_sample",
    "lilliefors",
    "spearman",
    "holm_adjust",
]

EXACT_LIMIT = 20


class Alternative(Enum):
    """Direction of the alternative hypothesis.

    ``LESS``/``GREATER`` follow the convention of the location tests: the
    first sample tends to be smaller/larger than the second. For
    :func:`ks_two_sample` they refer to the relation between the empirical
    cdfs instead; see that function's docstring.
    """

    TWO_SIDED = "two-sided"
    LESS = "less"
    GREATER = "greater"


def _as_alternative(alt: Alternative | str) -> Alternative:
    return alt if isinstance(alt, Alternative) else Alternative(alt)


@dataclass(frozen=True)
class TestResult:
    """Outcome of a single hypothesis test."""

    __test__ = False  # keep pytest from collecting this as a test class

    method: str
    statistic: float
    p_value: float
    alternative: Alternative
    df: float | tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if not math.isfinite(self.statistic):
            raise ValueError(f"{self.method}: non-finite statistic")
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"{self.method}: p-value {self.p_value} outside [0, 1]")


@dataclass(frozen=True)
class RankedSample:
    """Values with their midranks and the sizes of the tie groups."""

    values: np.ndarray
    midranks: np.ndarray
    tie_sizes: np.ndarray

    @property
    def has_ties(self) -> bool:
        return bool((self.tie_sizes > 1).any())

    @property
    def tie_term(self) -> float:
        """Sum of t^3 - t over tie groups, the usual variance-correction term."""
        t = self.tie_sizes.astype(float)
        return float((t**3 - t).sum())


def _as_sample(x, name: str, min_size: int = 1) -> np.ndarray:
    a = np.asarray(x, dtype=float).ravel()
    if a.size < min_size:
        raise ValueError(f"{name}: need at least {min_size} values, got {a.size}")
    if not np.isfinite(a).all():
        raise ValueError(f"{name}: non-finite values")
    return a


def midrank(values) -> RankedSample:
    """Rank a sample, assigning tied values the mean of the ranks they span."""
    v = _as_sample(values, "values")
    n = v.size
    order = np.argsort(v, kind="mergesort")
    inv = np.empty(n, dtype=np.intp)
    inv[order] = np.arange(n)
    sv = v[order]
    boundary = np.empty(n, dtype=bool)
    boundary[0] = True
    boundary[1:] = sv[1:] != sv[:-1]
    group = np.cumsum(boundary) - 1
    starts = np.flatnonzero(boundary)
    ends = np.append(starts[1:], n)
    # mean of ranks start+1 .. end within each tie group
    group_rank = 0.5 * (starts + ends + 1)
    ranks = group_rank[group][inv]
    return RankedSample(values=v, midranks=ranks, tie_sizes=ends - starts)


def _rank_sum_distribution(ranks2: np.ndarray, m: int) -> dict[int, int]:
    """Counts of size-m subset sums of integer ranks (midranks scaled by 2)."""
    table: list[dict[int, int]] = [{} for _ in range(m + 1)]
    table[0][0] = 1
    for r in ranks2:
        r = int(r)
        for c in range(min(m, len(ranks2)) - 1, -1, -1):
            if not table[c]:
                continue
            target = table[c + 1]
            for s, cnt in table[c].items():
                target[s + r] = target.get(s + r, 0) + cnt
    return table[m]


def _signed_rank_distribution(ranks2: np.ndarray) -> dict[int, int]:
    """Counts of subset sums of integer ranks over all 2^n sign assignments."""
    dist: dict[int, int] = {0: 1}
    for r in ranks2:
        r = int(r)
        new: dict[int, int] = {}
        for s, cnt in dist.items():
            new[s] = new.get(s, 0) + cnt
            new[s + r] = new.get(s + r, 0) + cnt
        dist = new
    return dist


def _exact_pvalues(dist: dict[int, int], w2: int) -> tuple[float, float, float]:
    total = sum(dist.values())
    count_le = sum(c for s, c in dist.items() if s <= w2)
    count_ge = sum(c for s, c in dist.items() if s >= w2)
    p_less = count_le / total
    p_greater = count_ge / total
    p_two = min(1.0, 2.0 * min(p_less, p_greater))
    return p_less, p_greater, p_two


def _pick(alt: Alternative, p_less: float, p_greater: float, p_two: float) -> float:
    if alt is Alternative.LESS:
        return p_less
    if alt is Alternative.GREATER:
        return p_greater
    return p_two


def _normal_pvalues(z: float) -> tuple[float, float, float]:
    p_less = float(ndtr(z))
    p_greater = float(ndtr(-z))
    return p_less, p_greater, min(1.0, 2.0 * float(ndtr(-abs(z))))


def _t_pvalues(df: float, t: float) -> tuple[float, float, float]:
    # smaller tail computed directly, larger as its complement: keeps the
    # one-sided pair summing to 1 exactly without losing small-tail precision
    tail = float(stdtr(df, -abs(t)))
    if t <= 0:
        p_less, p_greater = tail, 1.0 - tail
    else:
        p_less, p_greater = 1.0 - tail, tail
    return p_less, p_greater, min(1.0, 2.0 * tail)


def wilcoxon_rank_sum(
    x,
    y,
    alternative: Alternative | str = Alternative.TWO_SIDED,
    mode: str = "auto",
) -> TestResult:
    """Wilcoxon rank-sum (Mann-Whitney) test for two independent samples.

    The statistic is the rank sum of `x` within the pooled midranks.

    Parameters
    ----------
    alternative : "less" means x tends to be smaller than y.
    mode : "exact", "asymptotic", or "auto". Exact mode computes the full
        permutation distribution of the rank sum over all C(m+n, m) splits
        (ties allowed; midranks are enumerated). Auto picks exact when
        m + n <= 20 and there are no ties. The asymptotic mode is the
        tie-corrected normal approximation *without* continuity correction,
        so the one-sided p-values add to 1 exactly.
    """
    alt = _as_alternative(alternative)
    xa = _as_sample(x, "x")
    ya = _as_sample(y, "y")
    m, n = xa.size, ya.size
    ranked = midrank(np.concatenate([xa, ya]))
    w = float(ranked.midranks[:m].sum())
    if mode not in ("auto", "exact", "asymptotic"):
        raise ValueError(f"unknown mode {mode!r}")
    exact = mode == "exact" or (mode == "auto" and m + n <= EXACT_LIMIT and not ranked.has_ties)
    if exact and m + n > EXACT_LIMIT:
        raise ValueError(f"exact mode limited to m + n <= {EXACT_LIMIT}")
    if exact:
        ranks2 = np.rint(2.0 * ranked.midranks).astype(np.int64)
        dist = _rank_sum_distribution(ranks2, m)
        p_less, p_greater, p_two = _exact_pvalues(dist, int(round(2.0 * w)))
        method = "wilcoxon-rank-sum-exact"
    else:
        N = m + n
        mu = m * (N + 1) / 2.0
        var = m * n / 12.0 * ((N + 1) - ranked.tie_term / (N * (N - 1)))
        z = (w - mu) / math.sqrt(var) if var > 0 else 0.0
        p_less, p_greater, p_two = _normal_pvalues(z)
        method = "wilcoxon-rank-sum"
    return TestResult(method, w, _pick(alt, p_less, p_greater, p_two), alt)


def wilcoxon_signed_rank(
    diffs,
    alternative: Alternative | str = Alternative.TWO_SIDED,
    mode: str = "auto",
) -> TestResult:
    """Wilcoxon signed-rank test on paired differences.

    Zero differences are dropped before ranking. The statistic is W+, the sum
    of the midranks of |d| over positive differences. Exact mode enumerates
    all 2^n sign assignments; auto uses it when n <= 20 and the magnitudes
    are tie-free. ``alternative="greater"`` means the differences tend to be
    positive.
    """
    alt = _as_alternative(alternative)
    d = _as_sample(diffs, "diffs")
    d = d[d != 0.0]
    if d.size == 0:
        raise ValueError("signed rank: all differences are zero")
    n = d.size
    ranked = midrank(np.abs(d))
    w_plus = float(ranked.midranks[d > 0].sum())
    if mode not in ("auto", "exact", "asymptotic"):
        raise ValueError(f"unknown mode {mode!r}")
    exact = mode == "exact" or (mode == "auto" and n <= EXACT_LIMIT and not ranked.has_ties)
    if exact and n > EXACT_LIMIT:
        raise ValueError(f"exact mode limited to n <= {EXACT_LIMIT}")
    if exact:
        ranks2 = np.rint(2.0 * ranked.midranks).astype(np.int64)
        dist = _signed_rank_distribution(ranks2)
        p_less, p_greater, p_two = _exact_pvalues(dist, int(round(2.0 * w_plus)))
        method = "wilcoxon-signed-rank-exact"
    else:
        mu = n * (n + 1) / 4.0
        var = n * (n + 1) * (2 * n + 1) / 24.0 - ranked.tie_term / 48.0
        z = (w_plus - mu) / math.sqrt(var) if var > 0 else 0.0
        p_less, p_greater, p_two = _normal_pvalues(z)
        method = "wilcoxon-signed-rank"
    return TestResult(method, w_plus, _pick(alt, p_less, p_greater, p_two), alt)


def _as_groups(groups, min_groups: int = 2, min_size: int = 1) -> list[np.ndarray]:
    gs = [_as_sample(g, f"group {i}", min_size) for i, g in enumerate(groups)]
    if len(gs) < min_groups:
        raise ValueError(f"need at least {min_groups} groups, got {len(gs)}")
    return gs


def kruskal_wallis(groups) -> TestResult:
    """Kruskal-Wallis H test with tie correction; p from chi-square on k-1 df.

    When every pooled value is tied the correction divisor vanishes; the test
    is then reported as H = 0, p = 1.
    """
    gs = _as_groups(groups)
    sizes = np.array([g.size for g in gs])
    N = int(sizes.sum())
    if N < 3:
        raise ValueError("kruskal-wallis: need at least 3 values in total")
    ranked = midrank(np.concatenate(gs))
    h = 0.0
    pos = 0
    for sz in sizes:
        r = ranked.midranks[pos : pos + sz].sum()
        h += r * r / sz
        pos += sz
    h = 12.0 / (N * (N + 1)) * h - 3.0 * (N + 1)
    correction = 1.0 - ranked.tie_term / (N**3 - N)
    if correction <= 0.0:
        return TestResult("kruskal-wallis", 0.0, 1.0, Alternative.TWO_SIDED, df=float(len(gs) - 1))
    h /= correction
    h = max(h, 0.0)  # guard tiny negative round-off
    df = float(len(gs) - 1)
    return TestResult("kruskal-wallis", h, float(chdtrc(df, h)), Alternative.TWO_SIDED, df=df)


def anova_f(groups) -> TestResult:
    """Classic one-way ANOVA F test (equal-variance form)."""
    gs = _as_groups(groups, min_size=2)
    k = len(gs)
    sizes = np.array([g.size for g in gs], dtype=float)
    N = sizes.sum()
    means = np.array([g.mean() for g in gs])
    grand = float(np.concatenate(gs).mean())
    ssb = float((sizes * (means - grand) ** 2).sum())
    ssw = float(sum((g.size - 1) * g.var(ddof=1) for g in gs))
    if ssw <= 0.0:
        raise ValueError("anova: zero pooled within-group variance")
    df1, df2 = float(k - 1), float(N - k)
    f = (ssb / df1) / (ssw / df2)
    return TestResult("anova-f", f, float(fdtrc(df1, df2, f)), Alternative.TWO_SIDED, df=(df1, df2))


def welch_anova(groups) -> TestResult:
    """One-way ANOVA without the homogeneity-of-variance assumption (Welch).

    Uses the Welch statistic with the Welch-Satterthwaite denominator df.
    """
    gs = _as_groups(groups, min_size=2)
    k = len(gs)
    variances = np.array([g.var(ddof=1) for g in gs])
    if (variances <= 0.0).any():
        raise ValueError("welch anova: zero variance in a group")
    sizes = np.array([g.size for g in gs], dtype=float)
    means = np.array([g.mean() for g in gs])
    w = sizes / variances
    wsum = w.sum()
    mw = float((w * means).sum() / wsum)
    a = float((w * (means - mw) ** 2).sum()) / (k - 1)
    tmp = float((((1.0 - w / wsum) ** 2) / (sizes - 1)).sum())
    b = 1.0 + 2.0 * (k - 2) / (k**2 - 1.0) * tmp
    f = a / b
    df1 = float(k - 1)
    df2 = (k**2 - 1.0) / (3.0 * tmp)
    return TestResult("welch-anova", f, float(fdtrc(df1, df2, f)), Alternative.TWO_SIDED, df=(df1, df2))


def t_test(x, y, alternative: Alternative | str = Alternative.TWO_SIDED) -> TestResult:
    """Welch's unequal-variance t test for two independent samples."""
    alt = _as_alternative(alternative)
    xa = _as_sample(x, "x", 2)
    ya = _as_sample(y, "y", 2)
    vx, vy = xa.var(ddof=1), ya.var(ddof=1)
    if vx <= 0.0 and vy <= 0.0:
        raise ValueError("t test: both variances are zero")
    sx2, sy2 = vx / xa.size, vy / ya.size
    se2 = sx2 + sy2
    t = float((xa.mean() - ya.mean()) / math.sqrt(se2))
    df = se2**2 / (sx2**2 / (xa.size - 1) + sy2**2 / (ya.size - 1))
    p_less, p_greater, p_two = _t_pvalues(df, t)
    return TestResult("welch-t", t, _pick(alt, p_less, p_greater, p_two), alt, df=float(df))


def paired_t(diffs, alternative: Alternative | str = Alternative.TWO_SIDED) -> TestResult:
    """One-sample t test on paired differences, df = n - 1.

    ``alternative="greater"`` means the differences tend to be positive.
    """
    alt = _as_alternative(alternative)
    d = _as_sample(diffs, "diffs", 2)
    v = d.var(ddof=1)
    if v <= 0.0:
        raise ValueError("paired t: zero-variance differences")
    n = d.size
    t = float(d.mean() / math.sqrt(v / n))
    df = float(n - 1)
    p_less, p_greater, p_two = _t_pvalues(df, t)
    return TestResult("paired-t", t, _pick(alt, p_less, p_greater, p_two), alt, df=df)


def brown_forsythe(groups) -> TestResult:
    """Brown-Forsythe HOV test: one-way ANOVA on |x - median(group)| per group."""
    gs = _as_groups(groups, min_size=2)
    deviations = [np.abs(g - np.median(g)) for g in gs]
    inner = anova_f(deviations)
    return TestResult("brown-forsythe", inner.statistic, inner.p_value, inner.alternative, df=inner.df)


def ks_two_sample(x, y, alternative: Alternative | str = Alternative.TWO_SIDED) -> TestResult:
    """Two-sample Kolmogorov-Smirnov test on the empirical cdfs.

    The one-sided alternatives are cdf-relational: ``greater`` uses
    D+ = sup(Fx - Fy) and, when significant, is evidence that x is
    stochastically *smaller* than y (its cdf lies above); ``less`` is the
    mirror image. One-sided p-values use exp(-2 D^2 mn/(m+n)); the two-sided
    p uses the asymptotic Kolmogorov series at D = max(D+, D-).
    """
    alt = _as_alternative(alternative)
    xa = np.sort(_as_sample(x, "x"))
    ya = np.sort(_as_sample(y, "y"))
    m, n = xa.size, ya.size
    grid = np.concatenate([xa, ya])
    fx = np.searchsorted(xa, grid, side="right") / m
    fy = np.searchsorted(ya, grid, side="right") / n
    d_plus = float(np.max(fx - fy))
    d_minus = float(np.max(fy - fx))
    c = m * n / (m + n)
    if alt is Alternative.GREATER:
        d = max(d_plus, 0.0)
        p = min(1.0, math.exp(-2.0 * c * d * d))
    elif alt is Alternative.LESS:
        d = max(d_minus, 0.0)
        p = min(1.0, math.exp(-2.0 * c * d * d))
    else:
        d = max(d_plus, d_minus)
        p = min(1.0, float(kolmogorov(math.sqrt(c) * d)))
    return TestResult("ks", d, p, alt)


def lilliefors(x, replicates: int = 2000, seed: int = 0) -> TestResult:
    """Lilliefors normality test; p-value by seeded Monte Carlo.

    The statistic is the KS distance between the empirical cdf and the normal
    distribution fitted by sample mean and sd. Its null distribution does not
    depend on the fitted parameters, so the p-value is estimated from
    `replicates` standard-normal samples of the same size, with the usual
    (1 + exceedances)/(replicates + 1) estimator. Deterministic for a fixed
    seed.
    """
    xa = _as_sample(x, "x", 4)
    n = xa.size
    if xa.std(ddof=1) <= 0.0:
        raise ValueError("lilliefors: zero variance")
    if replicates < 1:
        raise ValueError("lilliefors: need at least 1 replicate")
    d_obs = _lilliefors_stat(np.sort(xa))
    rng = np.random.default_rng(seed)
    exceed = 0
    chunk = max(1, min(replicates, 2**22 // max(n, 1)))
    remaining = replicates
    while remaining > 0:
        k = min(chunk, remaining)
        z = rng.standard_normal((k, n))
        z.sort(axis=1)
        mean = z.mean(axis=1, keepdims=True)
        sd = z.std(axis=1, ddof=1, keepdims=True)
        f = ndtr((z - mean) / sd)
        hi = np.arange(1, n + 1) / n
        lo = np.arange(0, n) / n
        d = np.maximum((hi - f).max(axis=1), (f - lo).max(axis=1))
        exceed += int((d >= d_obs).sum())
        remaining -= k
    p = (1 + exceed) / (replicates + 1)
    return TestResult("lilliefors", d_obs, p, Alternative.TWO_SIDED)


def _lilliefors_stat(xs: np.ndarray) -> float:
    n = xs.size
    f = ndtr((xs - xs.mean()) / xs.std(ddof=1))
    hi = np.arange(1, n + 1) / n
    lo = np.arange(0, n) / n
    return float(max((hi - f).max(), (f - lo).max()))


def spearman(x, y) -> tuple[float, TestResult]:
    """Spearman rank correlation and the t-approximation test for rho != 0.

    Returns ``(rho, result)``; the result's statistic is rho itself (the
    internal t transform diverges at rho = +-1, which is reported as p = 0).
    """
    xa = _as_sample(x, "x", 3)
    ya = _as_sample(y, "y", 3)
    if xa.size != ya.size:
        raise ValueError("spearman: samples must have equal length")
    rx = midrank(xa).midranks
    ry = midrank(ya).midranks
    sx, sy = rx.std(), ry.std()
    if sx == 0.0 or sy == 0.0:
        raise ValueError("spearman: constant input")
    n = xa.size
    if np.array_equal(rx, ry):
        rho = 1.0  # identical rankings: exact, no float round-off
    elif np.array_equal(rx + ry, np.full(n, n + 1.0)):
        rho = -1.0
    else:
        rho = float(((rx - rx.mean()) * (ry - ry.mean())).mean() / (sx * sy))
        rho = min(1.0, max(-1.0, rho))
    df = float(n - 2)
    if abs(rho) == 1.0:
        return rho, TestResult("spearman", rho, 0.0, Alternative.TWO_SIDED, df=df)
    t = rho * math.sqrt(df / (1.0 - rho * rho))
    p = min(1.0, 2.0 * float(stdtr(df, -abs(t))))
    return rho, TestResult("spearman", rho, p, Alternative.TWO_SIDED, df=df)


def holm_adjust(p_values) -> list[float]:
    """Holm step-down adjustment; returns adjusted p-values in input order."""
    ps = np.asarray(list(p_values), dtype=float)
    if ps.size == 0:
        return []
    if ((ps < 0.0) | (ps > 1.0)).any() or not np.isfinite(ps).all():
        raise ValueError("holm: p-values must lie in [0, 1]")
    k = ps.size
    order = np.argsort(ps, kind="mergesort")
    adjusted = ps[order] * (k - np.arange(k))
    adjusted = np.minimum(np.maximum.accumulate(adjusted), 1.0)
    out = np.empty(k)
    out[order] = adjusted
    return out.tolist()
