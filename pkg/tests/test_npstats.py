import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import ndtri

from lcdm.npstats import (
    Alternative,
    TestResult,
    anova_f,
    brown_forsythe,
    holm_adjust,
    kruskal_wallis,
    ks_two_sample,
    lilliefors,
    midrank,
    paired_t,
    spearman,
    t_test,
    welch_anova,
    wilcoxon_rank_sum,
    wilcoxon_signed_rank,
)

from oracles import holm_by_definition

finite_floats = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)
samples = st.lists(finite_floats, min_size=1, max_size=30)


class TestMidrank:
    def test_plain_ranks(self):
        assert list(midrank([3, 1, 2]).midranks) == [3, 1, 2]

    def test_tie_convention(self):
        assert list(midrank([1, 1, 2]).midranks) == [1.5, 1.5, 3]

    @given(samples)
    def test_rank_sum_identity(self, values):
        n = len(values)
        assert midrank(values).midranks.sum() == pytest.approx(n * (n + 1) / 2)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            midrank([1.0, float("nan")])


class TestRankSum:
    def test_extreme_split_exact(self):
        r = wilcoxon_rank_sum([1, 2, 3], [4, 5, 6], "less", mode="exact")
        assert r.p_value == 0.05

    def test_central_statistic_exact(self):
        r = wilcoxon_rank_sum([1, 4], [2, 3], "two-sided", mode="exact")
        assert r.p_value == 1.0

    def test_asymptotic_complementarity_exact(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            x = rng.normal(size=rng.integers(2, 40))
            y = rng.normal(size=rng.integers(2, 40))
            pl = wilcoxon_rank_sum(x, y, "less", mode="asymptotic").p_value
            pg = wilcoxon_rank_sum(x, y, "greater", mode="asymptotic").p_value
            assert pl + pg == 1.0

    def test_empty_sample_rejected(self):
        with pytest.raises(ValueError):
            wilcoxon_rank_sum([], [1.0])

    def test_auto_switches_to_exact_when_small_and_tie_free(self):
        r = wilcoxon_rank_sum([1, 2, 3], [4, 5, 6], "less")
        assert r.method.endswith("exact")
        r = wilcoxon_rank_sum([1, 1, 3], [4, 5, 6], "less")
        assert not r.method.endswith("exact")

    @given(samples, samples, st.randoms(use_true_random=False))
    @settings(max_examples=50)
    def test_permutation_invariance(self, x, y, rnd):
        xs = list(x)
        rnd.shuffle(xs)
        a = wilcoxon_rank_sum(x, y, "less", mode="asymptotic")
        b = wilcoxon_rank_sum(xs, y, "less", mode="asymptotic")
        assert a.p_value == b.p_value
        assert a.statistic == b.statistic


class TestSignedRank:
    def test_all_positive_exact(self):
        r = wilcoxon_signed_rank([1, 2, 3], "greater", mode="exact")
        assert r.p_value == 1 / 8

    def test_symmetric_pair_exact(self):
        r = wilcoxon_signed_rank([1, -1], "two-sided", mode="exact")
        assert r.p_value == 1.0

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError, match="zero"):
            wilcoxon_signed_rank([0.0, 0.0, 0.0])

    def test_zeros_dropped(self):
        a = wilcoxon_signed_rank([0.0, 1, 2, 3], "greater", mode="exact")
        b = wilcoxon_signed_rank([1, 2, 3], "greater", mode="exact")
        assert a.p_value == b.p_value


class TestKruskalWallis:
    def test_three_group_statistic(self):
        r = kruskal_wallis([[1, 2], [3, 4], [5, 6]])
        assert r.statistic == pytest.approx(4.5714, abs=1e-4)
        assert r.df == 2.0

    def test_identical_groups(self):
        r = kruskal_wallis([[1, 2, 3], [1, 2, 3]])
        assert r.statistic == 0.0
        assert r.p_value == 1.0

    def test_all_values_tied(self):
        r = kruskal_wallis([[5, 5], [5, 5, 5]])
        assert r.statistic == 0.0
        assert r.p_value == 1.0

    def test_two_groups_equals_squared_ranksum_z(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            x = rng.normal(size=rng.integers(5, 30))
            y = rng.normal(size=rng.integers(5, 30))
            h = kruskal_wallis([x, y]).statistic
            z = ndtri(wilcoxon_rank_sum(x, y, "less", mode="asymptotic").p_value)
            assert h == pytest.approx(z**2, abs=1e-9)

    def test_requires_two_groups(self):
        with pytest.raises(ValueError):
            kruskal_wallis([[1, 2, 3]])


class TestAnova:
    def test_identical_groups(self):
        r = anova_f([[1, 2, 3], [1, 2, 3]])
        assert r.statistic == 0.0
        assert r.p_value == 1.0

    def test_hand_computed(self):
        r = anova_f([[1, 2, 3], [2, 3, 4], [3, 4, 5]])
        assert r.statistic == pytest.approx(3.0)
        assert r.df == (2.0, 6.0)

    def test_single_value_group_rejected(self):
        with pytest.raises(ValueError):
            anova_f([[1, 2, 3], [4]])

    def test_zero_within_variance_rejected(self):
        with pytest.raises(ValueError):
            anova_f([[1, 1, 1], [2, 2]])


class TestWelchAnova:
    def test_identical_groups(self):
        r = welch_anova([[1, 2, 3], [1, 2, 3]])
        assert r.statistic == 0.0
        assert r.p_value == 1.0

    def test_two_groups_is_squared_welch_t(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            x = rng.normal(size=rng.integers(3, 25))
            y = rng.normal(scale=3.0, size=rng.integers(3, 25))
            w = welch_anova([x, y])
            t = t_test(x, y)
            assert w.statistic == pytest.approx(t.statistic**2, abs=1e-9)
            assert w.p_value == pytest.approx(t.p_value, abs=1e-9)
            assert w.df[1] == pytest.approx(t.df, abs=1e-9)

    def test_three_group_value(self):
        # direct evaluation of the Welch statistic (cross-checked against
        # statsmodels anova_oneway use_var="unequal"): F*=4.1061, df2=2.7944
        r = welch_anova([[1, 2, 3], [10, 20, 30], [-5, 0, 5]])
        assert r.statistic == pytest.approx(4.106113033448674, abs=1e-9)
        assert r.p_value == pytest.approx(0.14728333580995792, abs=1e-9)

    def test_zero_variance_group_rejected(self):
        with pytest.raises(ValueError):
            welch_anova([[1, 1, 1], [1, 2, 3]])


class TestWelchT:
    def test_identical_samples(self):
        r = t_test([1, 2, 3], [1, 2, 3])
        assert r.statistic == 0.0
        assert r.p_value == 1.0

    def test_hand_computed(self):
        r = t_test([1, 2, 3], [2, 3, 4])
        assert r.statistic == pytest.approx(-1.2247448713915892, abs=1e-12)
        assert r.df == pytest.approx(4.0, abs=1e-12)

    def test_one_sided_complementarity(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            x = rng.normal(size=10)
            y = rng.normal(size=12)
            pl = t_test(x, y, "less").p_value
            pg = t_test(x, y, "greater").p_value
            assert pl + pg == 1.0

    def test_both_variances_zero_rejected(self):
        with pytest.raises(ValueError):
            t_test([1, 1], [2, 2])


class TestPairedT:
    def test_zero_mean(self):
        r = paired_t([-1, 0, 1])
        assert r.statistic == 0.0
        assert r.p_value == 1.0

    def test_hand_computed(self):
        r = paired_t([1, 2, 3])
        assert r.statistic == pytest.approx(2 * math.sqrt(3), abs=1e-12)
        assert r.df == 2.0

    def test_zero_variance_rejected(self):
        with pytest.raises(ValueError):
            paired_t([5, 5])


class TestBrownForsythe:
    def test_identical_samples(self):
        assert brown_forsythe([[1, 2, 3], [1, 2, 3]]).statistic == 0.0

    def test_definitional_identity_bit_exact(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            groups = [rng.normal(size=rng.integers(3, 20)) for _ in range(rng.integers(2, 5))]
            devs = [np.abs(g - np.median(g)) for g in groups]
            bf = brown_forsythe(groups)
            f = anova_f(devs)
            assert bf.statistic == f.statistic
            assert bf.p_value == f.p_value

    def test_worked_example(self):
        bf = brown_forsythe([[1, 2, 3, 4, 5], [1, 3, 5, 7, 9]])
        f = anova_f([[2, 1, 0, 1, 2], [4, 2, 0, 2, 4]])
        assert bf.statistic == f.statistic
        assert bf.p_value == f.p_value


class TestKolmogorovSmirnov:
    def test_identical_samples(self):
        r = ks_two_sample([1, 2, 3], [1, 2, 3])
        assert r.statistic == 0.0
        assert r.p_value == 1.0

    def test_disjoint_supports(self):
        assert ks_two_sample([1, 2, 3], [4, 5, 6]).statistic == 1.0

    def test_one_sided_formula(self):
        r = ks_two_sample([1, 3], [2, 4], "greater")
        assert r.statistic == 0.5
        assert r.p_value == pytest.approx(math.exp(-0.5), abs=1e-12)
        assert ks_two_sample([1, 3], [2, 4], "less").p_value == 1.0

    def test_two_sided_d_is_max_of_one_sided(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            x = rng.normal(size=rng.integers(2, 40))
            y = rng.normal(loc=0.3, size=rng.integers(2, 40))
            d2 = ks_two_sample(x, y).statistic
            dg = ks_two_sample(x, y, "greater").statistic
            dl = ks_two_sample(x, y, "less").statistic
            assert d2 == max(dg, dl)

    def test_two_sided_p_bounded_by_one_sided_sum(self):
        rng = np.random.default_rng(13)
        for _ in range(30):
            x = rng.normal(size=rng.integers(5, 60))
            y = rng.normal(loc=rng.normal(), size=rng.integers(5, 60))
            p2 = ks_two_sample(x, y).p_value
            pl = ks_two_sample(x, y, "less").p_value
            pg = ks_two_sample(x, y, "greater").p_value
            assert p2 <= pl + pg + 1e-15


class TestLilliefors:
    def test_near_normal_quantiles_small_statistic(self):
        q = ndtri((np.arange(1, 21) - 0.5) / 20)
        r = lilliefors(q, replicates=500, seed=1)
        assert r.statistic < 0.05

    def test_uniform_sample_rejected(self):
        u = np.random.default_rng(7).random(1000)
        r = lilliefors(u, replicates=2000, seed=1)
        assert r.p_value < 0.01

    def test_deterministic_under_seed(self):
        x = np.random.default_rng(3).normal(size=50)
        a = lilliefors(x, replicates=300, seed=42)
        b = lilliefors(x, replicates=300, seed=42)
        assert a.p_value == b.p_value

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            lilliefors([2.0, 2.0, 2.0, 2.0])
        with pytest.raises(ValueError):
            lilliefors([1.0, 2.0, 3.0])


class TestSpearman:
    def test_perfectly_increasing(self):
        rho, result = spearman([1, 2, 3, 4], [10, 20, 30, 40])
        assert rho == 1.0
        assert result.p_value == 0.0

    def test_perfectly_decreasing(self):
        rho, result = spearman([1, 2, 3, 4], [8, 6, 4, 2])
        assert rho == -1.0
        assert result.p_value == 0.0

    def test_hand_computed(self):
        rho, _ = spearman([1, 2, 3], [3, 1, 2])
        assert rho == pytest.approx(-0.5, abs=1e-12)

    def test_rejects_mismatch_and_constants(self):
        with pytest.raises(ValueError):
            spearman([1, 2, 3], [1, 2])
        with pytest.raises(ValueError):
            spearman([1, 1, 1], [1, 2, 3])


class TestHolm:
    def test_worked_example(self):
        assert holm_adjust([0.01, 0.04, 0.03]) == pytest.approx([0.03, 0.06, 0.06])

    def test_single_p_unchanged(self):
        assert holm_adjust([0.2]) == [0.2]

    @given(st.lists(st.floats(min_value=0, max_value=1), min_size=1, max_size=12))
    def test_dominated_by_bonferroni(self, ps):
        holm = holm_adjust(ps)
        k = len(ps)
        for h, p in zip(holm, ps):
            assert h <= min(1.0, p * k) + 1e-15
            assert h >= p - 1e-15

    @given(st.lists(st.floats(min_value=0, max_value=1), min_size=1, max_size=12))
    def test_matches_definition(self, ps):
        assert holm_adjust(ps) == pytest.approx(holm_by_definition(ps), abs=1e-15)

    def test_rejects_out_of_range(self):
        with pytest.raises(ValueError):
            holm_adjust([0.5, 1.5])


@pytest.mark.parametrize(
    "run",
    [
        lambda x, y: wilcoxon_rank_sum(x, y, "less", mode="asymptotic"),
        lambda x, y: wilcoxon_rank_sum(x, y, "greater", mode="exact"),
        lambda x, y: t_test(x, y, "two-sided"),
        lambda x, y: ks_two_sample(x, y, "less"),
        lambda x, y: kruskal_wallis([x, y]),
        lambda x, y: brown_forsythe([x, y]),
    ],
)
def test_p_values_always_in_unit_interval(run):
    rng = np.random.default_rng(17)
    for _ in range(25):
        x = rng.normal(scale=rng.uniform(0.5, 4), size=rng.integers(2, 9))
        y = rng.normal(loc=rng.normal(), size=rng.integers(2, 9))
        result = run(x, y)
        assert isinstance(result, TestResult)
        assert 0.0 <= result.p_value <= 1.0
        assert math.isfinite(result.statistic)


def test_alternatives_accept_strings_and_enums():
    x, y = [1, 2, 3], [2, 3, 4]
    assert t_test(x, y, "less").p_value == t_test(x, y, Alternative.LESS).p_value
