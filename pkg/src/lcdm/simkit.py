"""Synthetic distance samples and Monte Carlo size/power estimation.

The generator draws bin indices i.i.d. from a 12-bin frequency profile (a
reference distance histogram with 0.5 mm bins), adds a uniform within-bin
offset, and halves the result, giving values on [0, 6). Alternatives perturb
the profile (`eta`, which redistributes frequencies into a 13th bin) and/or
stretch the within-bin uniforms (`r`), recovering the null exactly at
``r = 1, eta = 0``.

Replicates are seeded independently (``SeedSequence([base_seed, index])``),
so estimates do not depend on execution order and any subset of replicates
can be reproduced in isolation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import stdtr

from lcdm.npstats import (
    Alternative,
    brown_forsythe,
    kruskal_wallis,
    anova_f,
    welch_anova,
    wilcoxon_rank_sum,
    t_test,
    ks_two_sample,
)

__all__ = [
    "NULL_BIN_FREQUENCIES",
    "BinFrequencies",
    "AltParams",
    "SimConfig",
    "EstimateTable",
    "alt_frequencies",
    "generate_sample",
    "replicate_rng",
    "replicate_rejections",
    "run_size_study",
    "run_power_study",
    "load_config",
    "SEED_RULE",
    "TWO_SAMPLE_TESTS",
    "THREE_SAMPLE_TESTS",
]

# Reference profile: distance counts per 0.5 mm bin for one subject's
# left-hemisphere gray matter, used as the generator's base histogram.
NULL_BIN_FREQUENCIES = (2059, 1898, 1764, 1670, 1492, 1268, 814, 417, 142, 81, 61, 16)

SEED_RULE = "replicate rng = numpy.random.default_rng(numpy.random.SeedSequence([seed, replicate_index]))"

TWO_SAMPLE_TESTS = ("bf", "w", "t", "ks")
THREE_SAMPLE_TESTS = ("bf", "kw", "f1", "f2")
_AGREEMENT_PAIRS = {
    2: (("w", "t"), ("w", "ks"), ("t", "ks")),
    3: (("kw", "f1"), ("kw", "f2"), ("f1", "f2")),
}


@dataclass(frozen=True)
class BinFrequencies:
    """A 12-bin reference frequency profile; the recorded total normalizes it."""

    counts: tuple[int, ...] = NULL_BIN_FREQUENCIES

    def __post_init__(self) -> None:
        if len(self.counts) != 12:
            raise ValueError(f"profile needs 12 bins, got {len(self.counts)}")
        if any(int(c) != c or c < 0 for c in self.counts):
            raise ValueError("profile counts must be nonnegative integers")
        if sum(self.counts) <= 0:
            raise ValueError("profile must contain at least one count")
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    @property
    def total(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class AltParams:
    """Alternative-generator knobs; ``r = 1, eta = 0`` is the null generator."""

    r: float = 1.0
    eta: int = 0

    def __post_init__(self) -> None:
        if not self.r >= 1.0:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if int(self.eta) != self.eta or self.eta < 0:
            raise ValueError(f"eta must be a nonnegative integer, got {self.eta}")
        object.__setattr__(self, "eta", int(self.eta))

    @property
    def is_null(self) -> bool:
        return self.r == 1.0 and self.eta == 0


def alt_frequencies(frequencies: BinFrequencies, eta: int) -> tuple[int, ...]:
    """Perturbed 13-bin frequencies for a given eta.

    The first 12 entries are |count_i - eta| sorted in descending order; the
    13th is the remainder against the profile total, so the perturbed profile
    keeps the same total mass. eta = 0 returns the profile with a 13th bin
    of 0.
    """
    if int(eta) != eta or eta < 0:
        raise ValueError(f"eta must be a nonnegative integer, got {eta}")
    eta = int(eta)
    if eta == 0:
        return frequencies.counts + (0,)
    perturbed = sorted((abs(c - eta) for c in frequencies.counts), reverse=True)
    last = frequencies.total - sum(perturbed)
    if last < 0:
        raise ValueError(f"eta = {eta} overflows the profile: 13th bin would be {last}")
    return tuple(perturbed) + (last,)


def _pmf(frequencies: BinFrequencies, params: AltParams) -> np.ndarray:
    if params.eta == 0:
        counts: tuple[int, ...] = frequencies.counts
    else:
        # The overflow bin participates in the descending ordering of the
        # perturbed profile, so its mass sits at its rank-ordered position
        # rather than at the top of the value range.
        counts = tuple(sorted(alt_frequencies(frequencies, params.eta), reverse=True))
    arr = np.asarray(counts, dtype=float)
    return arr / arr.sum()


def generate_sample(
    frequencies: BinFrequencies,
    params: AltParams,
    n: int,
    rng: np.random.Generator | int,
) -> np.ndarray:
    """Draw n synthetic distances: ``(bin + U(0, r)) / 2`` with i.i.d. bins.

    Bin indices are drawn by inverse cdf on the (possibly eta-perturbed,
    renormalized) profile pmf, so all values lie in [0, (B + r)/2) where B is
    the largest bin index (11 for the null profile, 12 when perturbed).
    """
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    cdf = np.cumsum(_pmf(frequencies, params))
    cdf[-1] = 1.0
    bins = np.searchsorted(cdf, rng.random(n), side="right")
    return (bins + params.r * rng.random(n)) / 2.0


def replicate_rng(seed: int, index: int) -> np.random.Generator:
    """Independent generator for one replicate; a pure function of (seed, index)."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


@dataclass(frozen=True)
class SimConfig:
    """One simulation setting: sample sizes, per-sample generator params, run knobs."""

    sizes: tuple[int, ...]
    params: tuple[AltParams, ...] = ()
    n_mc: int = 10000
    alpha: float = 0.05
    seed: int = 0
    tests: tuple[str, ...] = ()
    directions: tuple[Alternative, ...] = (Alternative.TWO_SIDED,)
    frequencies: BinFrequencies = field(default_factory=BinFrequencies)

    def __post_init__(self) -> None:
        sizes = tuple(int(n) for n in self.sizes)
        if len(sizes) not in (2, 3) or any(n < 1 for n in sizes):
            raise ValueError("sizes must be 2 or 3 positive sample sizes")
        object.__setattr__(self, "sizes", sizes)
        params = tuple(self.params) if self.params else tuple(AltParams() for _ in sizes)
        if len(params) != len(sizes):
            raise ValueError("params must match sizes in length")
        object.__setattr__(self, "params", params)
        if self.n_mc < 1:
            raise ValueError("n_mc must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie strictly between 0 and 1")
        if int(self.seed) != self.seed or self.seed < 0:
            raise ValueError("seed must be a nonnegative integer")
        object.__setattr__(self, "seed", int(self.seed))
        valid = TWO_SAMPLE_TESTS if len(sizes) == 2 else THREE_SAMPLE_TESTS
        tests = tuple(self.tests) if self.tests else valid
        unknown = [t for t in tests if t not in valid]
        if unknown:
            raise ValueError(
                f"unknown tests {unknown} for {len(sizes)} samples; valid: {list(valid)}"
            )
        object.__setattr__(self, "tests", tests)
        directions = tuple(
            d if isinstance(d, Alternative) else Alternative(d) for d in self.directions
        )
        if len(sizes) == 3 and directions != (Alternative.TWO_SIDED,):
            raise ValueError("direction blocks apply to two-sample studies only")
        if not directions:
            raise ValueError("at least one direction required")
        object.__setattr__(self, "directions", directions)

    @property
    def is_null(self) -> bool:
        return all(p.is_null for p in self.params)


# K-S direction blocks are cdf-relational: "x tends to be smaller than y"
# (the harness's LESS block) means F_x lies above F_y, which is the GREATER
# alternative of ks_two_sample.
_KS_ALT = {
    Alternative.TWO_SIDED: Alternative.TWO_SIDED,
    Alternative.LESS: Alternative.GREATER,
    Alternative.GREATER: Alternative.LESS,
}


def _bf_directional(x: np.ndarray, y: np.ndarray, direction: Alternative) -> float:
    """One-sided two-sample B-F: pooled t on absolute deviations from medians.

    The classic B-F F statistic equals the square of this t for two groups;
    the left-sided block tests whether x's spread falls below y's.
    """
    dx = np.abs(x - np.median(x))
    dy = np.abs(y - np.median(y))
    nx, ny = dx.size, dy.size
    sp2 = ((nx - 1) * dx.var(ddof=1) + (ny - 1) * dy.var(ddof=1)) / (nx + ny - 2)
    t = (dx.mean() - dy.mean()) / np.sqrt(sp2 * (1.0 / nx + 1.0 / ny))
    df = nx + ny - 2
    return float(stdtr(df, t)) if direction is Alternative.LESS else float(stdtr(df, -t))


def _p_value(test: str, samples: list[np.ndarray], direction: Alternative) -> float:
    if test == "bf":
        if len(samples) == 2 and direction is not Alternative.TWO_SIDED:
            return _bf_directional(samples[0], samples[1], direction)
        return brown_forsythe(samples).p_value
    if test == "kw":
        return kruskal_wallis(samples).p_value
    if test == "f1":
        return anova_f(samples).p_value
    if test == "f2":
        return welch_anova(samples).p_value
    if test == "w":
        return wilcoxon_rank_sum(samples[0], samples[1], direction, mode="asymptotic").p_value
    if test == "t":
        return t_test(samples[0], samples[1], direction).p_value
    if test == "ks":
        return ks_two_sample(samples[0], samples[1], _KS_ALT[direction]).p_value
    raise ValueError(f"unknown test {test!r}")


def replicate_rejections(config: SimConfig, index: int) -> dict[tuple[str, Alternative], bool]:
    """Rejection flags of one replicate, keyed by (test, direction).

    Pure function of the config and replicate index; the study loops reduce
    these flags by integer counting, so execution order cannot matter.
    """
    rng = replicate_rng(config.seed, index)
    samples = [
        generate_sample(config.frequencies, p, n, rng)
        for n, p in zip(config.sizes, config.params)
    ]
    flags: dict[tuple[str, Alternative], bool] = {}
    for direction in config.directions:
        for test in config.tests:
            flags[(test, direction)] = _p_value(test, samples, direction) <= config.alpha
    return flags


@dataclass
class EstimateTable:
    """Per-test rejection proportions and pairwise agreement proportions."""

    kind: str  # "size" or "power"
    config: SimConfig
    rejection_counts: dict[tuple[str, Alternative], int]
    agreement_counts: dict[tuple[str, str, Alternative], int]

    def rate(self, test: str, direction: Alternative | str = Alternative.TWO_SIDED) -> float:
        direction = direction if isinstance(direction, Alternative) else Alternative(direction)
        return self.rejection_counts[(test, direction)] / self.config.n_mc

    def agreement(
        self, a: str, b: str, direction: Alternative | str = Alternative.TWO_SIDED
    ) -> float:
        direction = direction if isinstance(direction, Alternative) else Alternative(direction)
        key = (a, b, direction) if (a, b, direction) in self.agreement_counts else (b, a, direction)
        return self.agreement_counts[key] / self.config.n_mc

    def standard_error(self, proportion: float) -> float:
        return float(np.sqrt(proportion * (1.0 - proportion) / self.config.n_mc))

    def rows(self) -> list[dict]:
        """One row per direction block, mirroring the published table layout."""
        prefix = "alpha" if self.kind == "size" else "beta"
        out = []
        for direction in self.config.directions:
            row: dict[str, object] = {"direction": direction.value}
            for i, n in enumerate(self.config.sizes):
                row[f"n_{'xyz'[i]}"] = n
            for i, p in enumerate(self.config.params):
                row[f"r_{'xyz'[i]}"] = p.r
                row[f"eta_{'xyz'[i]}"] = p.eta
            for test in self.config.tests:
                rate = self.rate(test, direction)
                row[f"{prefix}_{test}"] = rate
                row[f"se_{test}"] = self.standard_error(rate)
            for a, b in _AGREEMENT_PAIRS[len(self.config.sizes)]:
                if a in self.config.tests and b in self.config.tests:
                    rate = self.agreement(a, b, direction)
                    row[f"agree_{a}_{b}"] = rate
                    row[f"se_{a}_{b}"] = self.standard_error(rate)
            out.append(row)
        return out


def _run(config: SimConfig, kind: str) -> EstimateTable:
    rejections = {(t, d): 0 for d in config.directions for t in config.tests}
    pairs = [
        (a, b)
        for a, b in _AGREEMENT_PAIRS[len(config.sizes)]
        if a in config.tests and b in config.tests
    ]
    agreements = {(a, b, d): 0 for d in config.directions for a, b in pairs}
    for index in range(config.n_mc):
        flags = replicate_rejections(config, index)
        for key, rejected in flags.items():
            if rejected:
                rejections[key] += 1
        for a, b in pairs:
            for d in config.directions:
                if flags[(a, d)] and flags[(b, d)]:
                    agreements[(a, b, d)] += 1
    return EstimateTable(kind, config, rejections, agreements)


def run_size_study(config: SimConfig) -> EstimateTable:
    """Empirical significance levels under the null generator."""
    if not config.is_null:
        raise ValueError("size study requires every sample's params to be null (r=1, eta=0)")
    return _run(config, "size")


def run_power_study(config: SimConfig) -> EstimateTable:
    """Empirical rejection rates under the configured alternative.

    A fully null config degenerates to a size study and simply reports
    rejection rates near alpha.
    """
    return _run(config, "power")


def load_config(path: str | Path) -> list[SimConfig]:
    """Read SimConfigs from a JSON file.

    The file holds either a single object or, under ``"rows"``, a list of
    size tuples sharing the other settings. Keys: ``sizes``, ``r``, ``eta``
    (scalars or per-sample lists), ``alpha``, ``n_mc``, ``seed``, ``tests``,
    ``directions``, ``frequencies``.
    """
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: top-level JSON must be an object")
    size_rows = raw.get("rows")
    if size_rows is None:
        if "sizes" not in raw:
            raise ValueError(f"{path}: missing 'sizes' (or 'rows')")
        size_rows = [raw["sizes"]]
    configs = []
    for sizes in size_rows:
        arity = len(sizes)
        r = raw.get("r", 1.0)
        eta = raw.get("eta", 0)
        rs = list(r) if isinstance(r, (list, tuple)) else [r] * arity
        etas = list(eta) if isinstance(eta, (list, tuple)) else [eta] * arity
        if len(rs) != arity or len(etas) != arity:
            raise ValueError(f"{path}: r/eta lists must match the number of samples")
        params = tuple(AltParams(r=rv, eta=ev) for rv, ev in zip(rs, etas))
        frequencies = (
            BinFrequencies(tuple(raw["frequencies"]))
            if "frequencies" in raw
            else BinFrequencies()
        )
        configs.append(
            SimConfig(
                sizes=tuple(sizes),
                params=params,
                n_mc=raw.get("n_mc", 10000),
                alpha=raw.get("alpha", 0.05),
                seed=raw.get("seed", 0),
                tests=tuple(raw.get("tests", ())),
                directions=tuple(raw.get("directions", ("two-sided",))),
                frequencies=frequencies,
            )
        )
    return configs
