"""Verification oracles: tridiagonal exits, exact enumeration, cross-check harness."""

import numpy as np
import pytest

from lamperti import (
    CrossCheckConfig,
    DriftSpec,
    Environment,
    PotentialKernel,
    VerificationReport,
    cross_check_suite,
    exit_up,
    tridiag_exit,
)
from lamperti.oracle import (
    FIRST_STEP_UP,
    HitBefore,
    enumerate_paths,
    two_sample_chisquare,
)


@pytest.fixture(scope="module")
def env():
    return Environment(DriftSpec.harmonic())


@pytest.fixture(scope="module")
def kernel(env):
    return PotentialKernel.build(env, 6000)


class TestTridiag:
    def test_boundaries(self, env):
        h = tridiag_exit(env, 5, 10)
        assert h[0] == 0.0 and h[-1] == 1.0

    def test_example(self, env):
        h = tridiag_exit(env, 5, 10)
        assert h[1] == pytest.approx(1 / 3, abs=1e-12)

    @pytest.mark.parametrize("m,n", [(0, 50), (5, 10), (100, 5000)])
    def test_matches_kernel_formula(self, env, kernel, m, n):
        h = tridiag_exit(env, m, n)
        formula = np.array([exit_up(kernel, k, m, n) for k in range(m, n + 1)])
        assert np.max(np.abs(h - formula)) <= 1e-10

    def test_adjacent_interval(self, env):
        np.testing.assert_array_equal(tridiag_exit(env, 4, 5), [0.0, 1.0])

    def test_guards(self, env):
        with pytest.raises(ValueError):
            tridiag_exit(env, 5, 5)


class TestEnumeration:
    def test_first_step_is_up(self, env):
        assert enumerate_paths(env, 10, FIRST_STEP_UP).value == 1.0

    def test_hit_probability_exact_rational(self, env, kernel):
        res = enumerate_paths(env, 30, HitBefore(start=1, lower=0, upper=3))
        assert res.exact_arithmetic
        want = exit_up(kernel, 1, 0, 3)  # = 9/13
        assert abs(res.value - want) <= res.remaining
        assert res.remaining < 1e-9

    def test_mass_conservation(self, env):
        res = enumerate_paths(env, 8, HitBefore(start=2, lower=0, upper=5))
        assert res.value + res.complement + res.remaining == pytest.approx(1.0, abs=0)

    def test_float_fallback_for_other_families(self):
        env = Environment(DriftSpec.loglog(1.0))
        res = enumerate_paths(env, 20, HitBefore(start=1, lower=0, upper=3))
        assert not res.exact_arithmetic
        kernel = PotentialKernel.build(env, 10)
        assert abs(res.value - exit_up(kernel, 1, 0, 3)) <= res.remaining + 1e-12

    def test_rejects_undecidable(self, env):
        with pytest.raises(ValueError):
            enumerate_paths(env, 5, HitBefore(start=10, lower=0, upper=30))
        with pytest.raises(ValueError):
            enumerate_paths(env, 40, FIRST_STEP_UP)


class TestChiSquare:
    def test_same_distribution_high_p(self):
        rng = np.random.default_rng(0)
        a = [(int(v),) for v in rng.poisson(4, 4000)]
        b = [(int(v),) for v in rng.poisson(4, 4000)]
        _, _, p = two_sample_chisquare(a, b)
        assert p > 0.01

    def test_different_distributions_low_p(self):
        rng = np.random.default_rng(0)
        a = [(int(v),) for v in rng.poisson(4, 4000)]
        b = [(int(v),) for v in rng.poisson(6, 4000)]
        _, _, p = two_sample_chisquare(a, b)
        assert p < 1e-6


class TestSuite:
    def test_default_suite_passes(self):
        report = cross_check_suite(CrossCheckConfig())
        assert report.overall, [c.name for c in report.failed()]
        assert len(report.checks) > 100
        # every statistical comparison carries its observed sigma (boolean
        # identity checks and the chi-square verdict have tolerance 0)
        for c in report.checks:
            if c.provenance.startswith("monte-carlo") and c.tolerance > 0:
                assert c.sigma is not None and c.sigma > 0

    def test_failure_injection_flags_dependents(self):
        """A 1e-3 fault in the upcrossing law flips exactly the exact checks
        that consume it (statistical checks are 4-sigma wide and stay green)."""
        report = cross_check_suite(
            CrossCheckConfig(perturb={"upcross-law": 1e-3}),
            parts=("exit", "pgf", "combinatorics", "identities"),
        )
        failed = {c.name for c in report.failed()}
        assert failed == {
            "identities/site-sum-vs-upcross[x=5,b=1]",
            "identities/site-sum-vs-upcross[x=9,b=2]",
            "identities/site-sum-vs-upcross[x=20,b=3]",
            "identities/joint-upcross-marginal[x=5,y=20,b=1]",
            "identities/joint-upcross-marginal[x=10,y=25,b=2]",
            "identities/joint-upcross-marginal[x=20,y=35,b=3]",
        }

    def test_exit_fault_isolated(self):
        report = cross_check_suite(
            CrossCheckConfig(perturb={"exit-formula": 1e-3}),
            parts=("exit", "pgf", "combinatorics", "identities"),
        )
        failed = {c.name for c in report.failed()}
        assert failed == {
            "exit/tridiag-vs-formula[0,50]",
            "exit/tridiag-vs-formula[5,10]",
            "exit/tridiag-vs-formula[100,5000]",
        }

    def test_loglog_spot_checks(self):
        config = CrossCheckConfig(family="loglog:1", kernel_tolerance=1e-8)
        report = cross_check_suite(config, parts=("exit", "pgf", "identities"))
        assert report.overall, [c.name for c in report.failed()]

    def test_report_round_trip(self):
        report = cross_check_suite(CrossCheckConfig(), parts=("combinatorics",))
        clone = VerificationReport.from_json(report.to_json())
        assert clone.overall == report.overall
        assert clone.checks == report.checks
