import itertools
import math
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from fsocdma import ber_analysis as ba
from fsocdma.orthocodes import build, embed
from fsocdma.phylink import SystemParams
from fsocdma.sensing import FusionResult, occupancy_model
from oracles import conditional_pe_from_chips, enum_average_pe


class TestQFunction:
    def test_zero(self):
        assert ba.q_function(0.0) == 0.5

    def test_value_at_196(self):
        assert ba.q_function(1.96) == pytest.approx(float(norm.sf(1.96)), rel=1e-12)
        assert ba.q_function(1.96) == pytest.approx(0.024998, abs=1e-6)

    def test_far_left_tail(self):
        assert ba.q_function(-40.0) == pytest.approx(1.0, abs=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(x=st.floats(-30, 30))
    def test_symmetry(self, x):
        assert ba.q_function(x) + ba.q_function(-x) == pytest.approx(1.0, abs=1e-12)


def all_free_signatures(order, k):
    family = build(order)
    busy = np.zeros(order, dtype=bool)
    return tuple(embed(family.entries[i], busy) for i in range(k))


class TestVarianceTerms:
    def test_unit_chip_specialization(self):
        n, k, lam = 16, 4, [2, 7, 9]
        sigs = all_free_signatures(n, k)
        eb, sn2, ss2 = 1.5, 0.3, 0.7
        v = ba.variance_terms(sigs[0], sigs, lam, eb, sn2, ss2)
        assert v.var_s == pytest.approx(eb**2 / n, rel=1e-12)
        assert v.var_mai == pytest.approx((k - 1) * eb**2 / (2 * n), rel=1e-12)
        assert v.var_gi == pytest.approx(eb * len(lam) * ss2 / (2 * n), rel=1e-12)
        assert v.var_n == pytest.approx(eb * sn2 / 2, rel=1e-12)

    def test_single_user_no_interference(self):
        sigs = all_free_signatures(8, 1)
        v = ba.variance_terms(sigs[0], sigs, [], 1.0, 0.1, 0.5)
        assert v.var_mai == 0.0
        assert v.var_gi == 0.0

    def test_multilevel_example(self):
        sigs = all_free_signatures(3, 1)  # first row squared: 1,4,4 -> energy 9
        v = ba.variance_terms(sigs[0], sigs, [], 1.0, 0.0, 0.0)
        assert v.var_s == pytest.approx(33.0 / 81.0, rel=1e-14)

    def test_direct_summation_oracle(self):
        n, k = 12, 3
        sigs = all_free_signatures(n, k)
        chips = np.stack([s.chips for s in sigs]).astype(float)
        lam = [0, 4, 11]
        eb, sn2, ss2 = 2.0, 0.4, 0.9
        v = ba.variance_terms(sigs[0], sigs, lam, eb, sn2, ss2)
        pe = ba.conditional_pe(v, eb)
        assert pe == pytest.approx(conditional_pe_from_chips(chips, lam, eb, sn2, ss2), rel=1e-12)

    def test_zero_energy_rejected(self):
        sig = embed([], np.ones(4, dtype=bool))
        with pytest.raises(ba.DegenerateSlotError):
            ba.variance_terms(sig, (sig,), [], 1.0, 0.1, 0.1)

    def test_deactivated_misdetection_contributes_nothing(self):
        # a misdetected subcarrier whose chip was zeroed adds no variance
        family = build(4)
        busy = np.array([False, True, False, False, False, True])
        sigs = tuple(embed(family.entries[i], busy) for i in range(2))
        v_with = ba.variance_terms(sigs[0], sigs, [1], 1.0, 0.1, 0.9)
        v_without = ba.variance_terms(sigs[0], sigs, [], 1.0, 0.1, 0.9)
        assert v_with.var_gi == v_without.var_gi == 0.0


class TestConditionalPe:
    def test_unit_variance_total(self):
        v = ba.VarianceBreakdown(var_s=1.0, var_mai=0.0, var_gi=0.0, var_n=0.0)
        assert ba.conditional_pe(v, 1.0) == pytest.approx(float(norm.sf(1.0)), rel=1e-12)
        assert ba.conditional_pe(v, 1.0) == pytest.approx(0.158655, abs=1e-6)

    def test_composed_example(self):
        # 32 unit chips all free, single user, noise PSD 0.1
        sigs = all_free_signatures(32, 1)
        v = ba.variance_terms(sigs[0], sigs, [], 1.0, 0.1, 0.0)
        pe = ba.conditional_pe(v, 1.0)
        want = float(norm.sf(1.0 / math.sqrt(1.0 / 32.0 + 0.05)))
        assert pe == pytest.approx(want, rel=1e-12)
        assert pe == pytest.approx(2.26e-4, rel=5e-3)

    def test_noise_dominated_limit(self):
        v = ba.VarianceBreakdown(var_s=0.0, var_mai=0.0, var_gi=0.0, var_n=1e12)
        assert ba.conditional_pe(v, 1.0) == pytest.approx(0.5, abs=1e-6)

    def test_degenerate_noiseless(self):
        v = ba.VarianceBreakdown(0.0, 0.0, 0.0, 0.0)
        assert ba.conditional_pe(v, 1.0) == 0.0


class TestPeOfCounts:
    def test_binary_no_busy_no_misdetected(self):
        got = ba.pe_of_counts(32, 0, 0, 1, 1.0, 0.1, 0.1)
        want = float(norm.sf(1.0 / math.sqrt(1.0 / 32.0 + 0.05)))
        assert got == pytest.approx(want, rel=1e-12)

    def test_all_busy_is_erasure(self):
        assert ba.pe_of_counts(32, 32, 0, 4, 1.0, 0.1, 0.1) == 0.5

    def test_too_many_users_is_erasure(self):
        # 3 free subcarriers cannot carry 4 users
        assert ba.pe_of_counts(8, 5, 0, 4, 1.0, 0.1, 0.1) == 0.5

    def test_fallback_placement_average(self):
        # n_free = 11 falls back to a 10-row family; one free subcarrier is
        # deactivated, so a misdetection lands on an active chip 10/11 of
        # the time.  Direct placement enumeration is the oracle.
        n, k = 11, 2
        family = build(10)
        vals = []
        for pos in range(11):
            chips = np.zeros((k, n))
            chips[:, :10] = family.entries[:k]
            vals.append(conditional_pe_from_chips(chips, [pos], 1.0, 0.1, 0.4))
        want = float(np.mean(vals))
        got = ba.pe_of_counts(n, 0, 1, k, 1.0, 0.1, 0.4)
        assert got == pytest.approx(want, rel=1e-12)

    def test_order_three_family_exact_vs_sampled(self):
        # 3 free subcarriers carry the (1,2,2)-magnitude family; which chip a
        # misdetection hits matters, and sampling must agree with the exact
        # placement average
        exact = ba.pe_of_counts(4, 1, 1, 1, 1.0, 0.02, 2.0, placement_mode="exact")
        sampled = ba.pe_of_counts(
            4, 1, 1, 1, 1.0, 0.02, 2.0, placement_mode="sample", sample_count=20_000, seed=2
        )
        sq = np.array([1.0, 4.0, 4.0])
        qs = ba.q_function(1.0 / np.sqrt(33.0 / 81.0 + 0.01 + 0.5 * (sq / 9.0) * 2.0))
        se = float(np.std(qs)) / math.sqrt(20_000)
        assert abs(exact - sampled) <= 3 * se

    def test_multilevel_exact_vs_sampled(self):
        # order-5 family has non-constant chip magnitudes
        n, m, l, k = 8, 3, 2, 2
        exact = ba.pe_of_counts(n, m, l, k, 1.0, 0.05, 1.5, placement_mode="exact")
        sampled = ba.pe_of_counts(
            n, m, l, k, 1.0, 0.05, 1.5, placement_mode="sample", sample_count=4000, seed=5
        )
        # stderr bound from the exact per-subset spread
        family = build(5)
        sq = family.entries[0].astype(float) ** 2
        spread = []
        for subset in itertools.combinations(range(5), 2):
            spread.append(sq[list(subset)].sum())
        spread = np.array(spread)
        sigma = float(np.std(spread)) * 0.01  # conservative scale for Q variation
        assert abs(exact - sampled) <= max(3 * sigma / math.sqrt(4000), 2e-4)

    def test_subset_distribution_matches_enumeration(self):
        dists = ba._subset_sum_distributions(5)
        sq = [int(v) ** 2 for v in build(5).entries[0]]
        for j in range(6):
            sums, probs = dists[j]
            counted = {}
            for subset in itertools.combinations(range(5), j):
                s = sum(sq[i] for i in subset)
                counted[s] = counted.get(s, 0) + 1
            total = comb(5, j)
            assert sorted(counted) == [int(s) for s in sums]
            for s, p in zip(sums, probs):
                assert p == pytest.approx(counted[int(s)] / total, rel=1e-14)


def make_params(n, k, sn2=0.1, ss2=0.1):
    return SystemParams(
        n_subcarriers=n, n_users=k, pr_h1=0.2, noise_psd=sn2, interference_power=ss2
    )


MODEL = occupancy_model(0.2, FusionResult(qfa=0.05, qd=0.95, k_users=2))


class TestAveragePe:
    def test_trinomial_weights_sum_to_one(self):
        n, p0, pm = 32, 0.23, 0.01
        pf = 1.0 - p0 - pm
        total = sum(
            comb(n, m) * comb(n - m, l) * p0**m * pm**l * pf ** (n - m - l)
            for m in range(n + 1)
            for l in range(n - m + 1)
        )
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_trinomial_weights_sum_exactly_in_rational_arithmetic(self):
        from fractions import Fraction

        n = 32
        p0, pm = Fraction(23, 100), Fraction(1, 100)
        pf = 1 - p0 - pm
        total = sum(
            comb(n, m) * comb(n - m, l) * p0**m * pm**l * pf ** (n - m - l)
            for m in range(n + 1)
            for l in range(n - m + 1)
        )
        assert total == 1

    def test_degenerate_reduces_to_single_cell(self):
        model = occupancy_model(0.0, FusionResult(qfa=0.0, qd=1.0, k_users=1))
        params = make_params(16, 1)
        got = ba.average_pe(params, model)
        want = ba.pe_of_counts(16, 0, 0, 1, 1.0, 0.1, 0.1)
        assert got == pytest.approx(want, rel=1e-14)

    def test_invalid_mass_rejected(self):
        from fsocdma.sensing import OccupancyModel

        bad = OccupancyModel(pr_h1=0.5, p_zero=0.8, p_mis=0.3)
        with pytest.raises(ValueError):
            ba.average_pe(make_params(8, 2), bad)

    @pytest.mark.parametrize("n", [4, 6])
    @pytest.mark.parametrize("k", [1, 2])
    @pytest.mark.parametrize("policy", ["rechoose", "fixed"])
    def test_matches_exhaustive_enumeration(self, n, k, policy):
        params = make_params(n, k)
        got = ba.average_pe(params, MODEL, policy)
        want = enum_average_pe(n, k, MODEL.p_zero, MODEL.p_mis, 1.0, 0.1, 0.1, policy)
        assert got == pytest.approx(want, abs=1e-12)
        builtin = ba.average_pe_enumerated(params, MODEL, policy)
        assert builtin == pytest.approx(want, abs=1e-12)

    def test_monotone_in_users(self):
        vals = [ba.average_pe(make_params(32, k), MODEL) for k in (1, 2, 4, 8)]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_monotone_in_interference(self):
        vals = [
            ba.average_pe(make_params(32, 4, ss2=s), MODEL) for s in (0.0, 0.5, 2.0)
        ]
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_monotone_in_misdetection(self):
        vals = []
        for qd in (0.99, 0.95, 0.80):
            model = occupancy_model(0.2, FusionResult(qfa=0.05, qd=qd, k_users=2))
            vals.append(ba.average_pe(make_params(32, 4, ss2=1.0), model))
        assert all(b > a for a, b in zip(vals, vals[1:]))

    def test_analytic_error_floor_contrast(self):
        # interference-limited K=8 flattens out; K=1 keeps improving
        from fsocdma.montecarlo import RunConfig, analytic_point
        from fsocdma.sensing import DetectorConfig

        det = DetectorConfig(320, 0.0, 2.3 + 10 * math.log10(320))
        k8 = RunConfig(params=make_params(32, 8), detector=det, snr_grid_db=(20.0, 30.0))
        r8 = analytic_point(k8, 30.0).ber_analytic / analytic_point(k8, 20.0).ber_analytic
        assert r8 > 0.5
        k1 = RunConfig(params=make_params(32, 1), detector=det, snr_grid_db=(10.0, 20.0))
        r1 = analytic_point(k1, 20.0).ber_analytic / analytic_point(k1, 10.0).ber_analytic
        assert r1 < 0.1


class TestBerPoint:
    def test_ci_requires_simulation(self):
        with pytest.raises(ValueError):
            ba.BerPoint(snr_db=0.0, ber_analytic=0.1, ber_simulated=0.1)

    def test_plain_analytic_point(self):
        p = ba.BerPoint(snr_db=5.0, ber_analytic=0.01)
        assert p.ber_simulated is None and p.trials == 0
