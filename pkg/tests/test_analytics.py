"""Closed-form laws: frozen example values, identities, and limit constants."""

import math
from fractions import Fraction

import pytest

from lamperti import (
    DriftSpec,
    Environment,
    PotentialKernel,
    SetKind,
    event_probabilities,
    exit_down,
    exit_up,
    expected_count,
    joint_site_law,
    joint_upcross_law,
    lambda_const,
    limit_ratio_report,
    membership_prob,
    pair_ratio,
    parse_kind,
    site_law,
    upcross_law,
    weak_joint,
    weak_prob,
)
from lamperti.analytics import (
    membership_prob_vector,
    site_law_via_pair,
    sum_joint_upcross_over_m,
    sum_site_law_over_local_time,
)


@pytest.fixture(scope="module")
def kernel():
    return PotentialKernel.build(Environment(DriftSpec.harmonic()), 12000)


class TestSetKind:
    def test_labels_round_trip(self):
        for label in ("cw", "cab:2:1", "cstar:3", "cab:2+3:1", "cab:3:1+2"):
            assert parse_kind(label).label == label

    def test_validation(self):
        with pytest.raises(ValueError):
            SetKind.pair(1, 2)  # local time below upcrossings
        with pytest.raises(ValueError):
            SetKind.upcross_in(2, (1, 3))  # b=3 exceeds a=2
        with pytest.raises(ValueError):
            SetKind.local_time_in((1, 5), 2)  # local time 1 below a=2
        with pytest.raises(ValueError):
            SetKind("cab", local=(2, 3), up=(1, 2))  # both slots sets


class TestExitProbabilities:
    def test_boundary_cases(self, kernel):
        assert exit_down(kernel, 5, 5, 10) == 1.0
        assert exit_down(kernel, 10, 5, 10) == 0.0
        assert exit_up(kernel, 5, 5, 10) == 0.0

    def test_interior_example(self, kernel):
        assert exit_up(kernel, 6, 5, 10) == pytest.approx(1 / 3, rel=1e-12)
        assert exit_down(kernel, 6, 5, 10) == pytest.approx(2 / 3, rel=1e-12)

    def test_rejects_disorder(self, kernel):
        with pytest.raises(ValueError):
            exit_down(kernel, 2, 5, 10)


class TestEventProbabilities:
    def test_complementary_splits_exact(self, kernel):
        env = kernel.env
        for x, y in ((0, 5), (4, 9), (17, 40)):
            ev = event_probabilities(kernel, x, y)
            assert ev.forward_loop + ev.escape == pytest.approx(env.p_at(x), abs=0)
            assert ev.backward_loop_avoiding + ev.backward_move == pytest.approx(
                env.q_at(y), rel=1e-15
            )

    def test_examples(self, kernel):
        assert event_probabilities(kernel, 5, 6).escape == pytest.approx(0.1, rel=1e-12)
        assert event_probabilities(kernel, 4, 9).forward_move == pytest.approx(9 / 40, rel=1e-12)

    def test_rejects_bad_order(self, kernel):
        with pytest.raises(ValueError):
            event_probabilities(kernel, 9, 4)


class TestSingleSiteLaws:
    def test_site_law_examples(self, kernel):
        assert site_law(kernel, 9, 1, 1) == pytest.approx(1 / 18, rel=1e-12)
        assert site_law(kernel, 9, 2, 1) == pytest.approx(2 / 81, rel=1e-12)
        # independent rational oracle: C(a-1,b-1) p^b q^(a-b) (1-1/D)^(b-1) / D
        p, q, d = Fraction(5, 9), Fraction(4, 9), Fraction(10)
        want = Fraction(math.comb(2, 1)) * p**2 * q * (1 - 1 / d) / d
        assert site_law(kernel, 9, 3, 2) == pytest.approx(float(want), rel=1e-12)

    def test_site_law_rejects(self, kernel):
        with pytest.raises(ValueError):
            site_law(kernel, 9, 1, 2)

    def test_upcross_examples(self, kernel):
        assert upcross_law(kernel, 9, 1) == pytest.approx(0.1, rel=1e-13)
        assert upcross_law(kernel, 9, 2) == pytest.approx(0.09, rel=1e-13)

    def test_upcross_normalization(self, kernel):
        """Geometric tail identity: sum_{b<=B} = 1 - (1 - 1/D)^B, exactly."""
        for x in (1, 9, 100):
            d = kernel.d_of(x)
            for cap in (1, 5, 40):
                total = sum(upcross_law(kernel, x, b) for b in range(1, cap + 1))
                assert total == pytest.approx(1.0 - (1.0 - 1.0 / d) ** cap, rel=1e-12)

    def test_weak_prob_examples(self, kernel):
        assert weak_prob(kernel, 9) == pytest.approx(0.2, rel=1e-13)
        assert weak_prob(kernel, 1) == pytest.approx(0.8, rel=1e-13)
        for x in range(2, 60):
            assert weak_prob(kernel, x) == pytest.approx(2 / (x + 1), rel=1e-13)

    def test_weak_prob_scaled_limit(self, kernel):
        # D(x) * P(x in Cw) equals 2 identically for this family once x >= 2
        for x in (2, 10, 1000, 10000):
            assert kernel.d_of(x) * weak_prob(kernel, x) == pytest.approx(2.0, rel=1e-12)

    def test_pair_route_matches_single_site(self, kernel):
        for x in (1, 2, 9, 50, 500):
            for a, b in ((1, 1), (2, 1), (2, 2), (5, 3), (7, 1)):
                assert site_law_via_pair(kernel, x, a, b) == pytest.approx(
                    site_law(kernel, x, a, b), rel=1e-12
                )

    def test_site_sum_recovers_upcross(self, kernel):
        for x, b in ((5, 1), (9, 2), (20, 3)):
            total, bound = sum_site_law_over_local_time(kernel, x, b)
            assert bound < 1e-10
            assert abs(total - upcross_law(kernel, x, b)) <= bound + 1e-13

    def test_probabilities_in_unit_interval(self, kernel):
        values = [
            site_law(kernel, x, a, b)
            for x in (1, 7, 300)
            for a in range(1, 8)
            for b in range(1, a + 1)
        ]
        values += [upcross_law(kernel, x, b) for x in (0, 1, 500) for b in (1, 2, 9)]
        values += [weak_prob(kernel, x) for x in (1, 2, 1000)]
        assert all(0.0 <= v <= 1.0 for v in values)


class TestJointLaws:
    def test_weak_joint_example(self, kernel):
        assert weak_joint(kernel, 5, 10) == pytest.approx(2 / 21, rel=1e-12)

    def test_weak_joint_below_marginal(self, kernel):
        for x, y in ((1, 2), (5, 10), (9, 40), (100, 400)):
            assert weak_joint(kernel, x, y) <= weak_prob(kernel, x)

    def test_weak_pair_ratio_tends_to_one(self, kernel):
        ratios = [
            pair_ratio(kernel, SetKind.weak_cutpoints(), x, 2 * x) for x in (10, 100, 1000)
        ]
        assert abs(ratios[-1] - 1.0) < abs(ratios[0] - 1.0)
        assert abs(ratios[-1] - 1.0) < 0.01

    def test_joint_site_trivial_reduction(self, kernel):
        got = joint_site_law(kernel, 4, 9, 1, 1, 1, 1)
        want = (kernel.env.p_at(4) / kernel.d_between(4, 9)) * (
            kernel.env.p_at(9) / kernel.d_of(9)
        )
        assert got == pytest.approx(want, rel=1e-13)

    def test_joint_site_remark_identity(self, kernel):
        """Summing the two-site law over both upcrossing slots with equal local
        times must reproduce the single-i-sum display for P(xi(x)=a, xi(y)=a)."""
        env = kernel.env
        for x, y, a in ((5, 9, 2), (5, 9, 3), (8, 20, 4)):
            px, py, qy = env.p_at(x), env.p_at(y), env.q_at(y)
            dxy, dxy1, dy = (
                kernel.d_between(x, y),
                kernel.d_between(x, y - 1),
                kernel.d_of(y),
            )
            closed = sum(
                math.comb(a - 1, i - 1) ** 2
                * (px / dxy) ** i
                * (1 - px / dxy) ** (a - i)
                * (qy * (1 - dxy1 / dxy)) ** (i - 1)
                * (qy * dxy1 / dxy + py * (1 - 1 / dy)) ** (a - i)
                * py
                / dy
                for i in range(1, a + 1)
            )
            double = sum(
                joint_site_law(kernel, x, y, a, b, a, m)
                for b in range(1, a + 1)
                for m in range(1, a + 1)
            )
            assert double == pytest.approx(closed, rel=1e-12)

    def test_joint_site_dominated_by_marginals(self, kernel):
        for x, y in ((3, 7), (5, 25)):
            for a, b, c, d in ((1, 1, 1, 1), (2, 1, 3, 2), (4, 2, 2, 1)):
                v = joint_site_law(kernel, x, y, a, b, c, d)
                assert 0.0 <= v <= min(site_law(kernel, x, a, b), site_law(kernel, y, c, d))

    def test_joint_upcross_marginal_sum(self, kernel):
        for x, b in ((5, 1), (10, 2), (20, 3)):
            y = x + 15
            total, bound = sum_joint_upcross_over_m(kernel, x, y, b)
            assert bound < 1e-10
            assert abs(total - upcross_law(kernel, x, b)) <= bound + 1e-13

    def test_joint_upcross_decorrelates(self, kernel):
        x, y = 1000, 2000
        got = joint_upcross_law(kernel, x, y, 1, 1)
        approx = (
            upcross_law(kernel, x, 1)
            * upcross_law(kernel, y, 1)
            * kernel.d_of(x)
            / kernel.d_between(x, y)
        )
        assert got == pytest.approx(approx, rel=0.01)

    def test_joint_rejects(self, kernel):
        with pytest.raises(ValueError):
            joint_upcross_law(kernel, 9, 4, 1, 1)
        with pytest.raises(ValueError):
            joint_site_law(kernel, 4, 9, 1, 2, 1, 1)


class TestConstantsAndCounts:
    def test_lambda_values(self):
        assert lambda_const(SetKind.weak_cutpoints()) == 2.0
        assert lambda_const(SetKind.pair(2, 1)) == 0.25
        assert lambda_const(SetKind.exact_upcross(3)) == 1.0

    def test_lambda_additive(self):
        whole = lambda_const(SetKind.upcross_in(3, (1, 2)))
        parts = lambda_const(SetKind.pair(3, 1)) + lambda_const(SetKind.pair(3, 2))
        assert whole == parts

    def test_expected_weak_count_exact(self, kernel):
        """E|Cw cap [1,n]| = 4/5 + sum_{x=2}^n 2/(x+1); the x=1 term is 4/5, not 1."""
        n = 10**4
        direct = math.fsum(
            1.0 / (kernel.env.p_at(x) * kernel.d_of(x - 1)) for x in range(1, n + 1)
        )
        got = expected_count(kernel, n, SetKind.weak_cutpoints())
        assert got == pytest.approx(direct, rel=1e-12)
        harmonic_tail = 2.0 * (math.fsum(1.0 / i for i in range(1, n + 2)) - 1.0)
        assert got == pytest.approx(harmonic_tail - 0.2, rel=1e-9)

    def test_expected_count_additivity(self, kernel):
        n = 300
        whole = expected_count(kernel, n, SetKind.upcross_in(3, (1, 2, 3)))
        parts = sum(expected_count(kernel, n, SetKind.pair(3, b)) for b in (1, 2, 3))
        assert whole == pytest.approx(parts, rel=1e-13)

    def test_membership_vector_matches_scalar(self, kernel):
        for kind in (
            SetKind.weak_cutpoints(),
            SetKind.pair(3, 2),
            SetKind.exact_upcross(2),
            SetKind.upcross_in(3, (1, 3)),
        ):
            vec = membership_prob_vector(kernel, kind, 40)
            for x in (1, 2, 17, 40):
                assert vec[x - 1] == pytest.approx(membership_prob(kernel, x, kind), rel=1e-14)

    def test_strong_cutpoints_are_escapes(self, kernel):
        for x in (1, 9, 57):
            escape = kernel.env.p_at(x) / kernel.d_of(x)
            assert site_law(kernel, x, 1, 1) == pytest.approx(escape, rel=1e-14)
            assert membership_prob(kernel, x, SetKind.pair(1, 1)) == pytest.approx(
                escape, rel=1e-14
            )


class TestLimitRatioReport:
    def test_exact_upcross_rows(self, kernel):
        rows = limit_ratio_report(kernel, SetKind.exact_upcross(1), [5, 50, 500])
        for row in rows:
            assert row["d_times_prob"] == pytest.approx(1.0, rel=1e-12)

    def test_weak_rows_near_two(self, kernel):
        rows = limit_ratio_report(kernel, SetKind.weak_cutpoints(), [100, 1000], [1000, 2000])
        point = [r for r in rows if "y" not in r]
        pairs = [r for r in rows if "y" in r]
        assert all(abs(r["d_times_prob"] - 2.0) <= 0.01 * 2.0 for r in point)
        assert all(0.9 <= r["pair_ratio"] <= 1.1 for r in pairs)
        assert not any(r["flag"] for r in pairs)
