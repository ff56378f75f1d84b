"""Branching-representation sampler: exact parameters, pgfs, and distributional checks."""

import math

import numpy as np
import pytest

from lamperti import (
    DriftSpec,
    Environment,
    PotentialKernel,
    SetKind,
    SiteOccupancy,
    expected_count,
    geom_param,
    run_ensemble,
    run_replica,
    step,
    upcross_law,
    weak_prob,
)
from lamperti.branching import (
    immigration_pgf,
    initial_occupancy,
    offspring_pgf,
    pgf_iterate,
    prob_no_inherited_loops,
    replica_seeds,
    upcross_pgf_closed,
    upcross_pgf_iterated,
)


@pytest.fixture(scope="module")
def kernel():
    return PotentialKernel.build(Environment(DriftSpec.harmonic()), 2000)


class TestGeometricParam:
    def test_examples(self, kernel):
        assert geom_param(kernel, 9).loop_prob == pytest.approx(0.5, rel=1e-13)
        assert geom_param(kernel, 0).loop_prob == pytest.approx(0.4, rel=1e-13)

    def test_matches_forward_loop_probability(self, kernel):
        from lamperti import event_probabilities

        for x in (0, 3, 50):
            ev = event_probabilities(kernel, x, x + 7)
            assert geom_param(kernel, x).loop_prob == pytest.approx(ev.forward_loop, abs=0)

    def test_in_unit_interval(self, kernel):
        for x in range(0, 500, 17):
            assert 0.0 < geom_param(kernel, x).loop_prob < 1.0


class TestPgfs:
    def test_normalized_at_one(self, kernel):
        for x in (1, 2, 9, 100):
            assert offspring_pgf(kernel, x, 1.0) == pytest.approx(1.0, rel=1e-12)
            assert immigration_pgf(kernel, x, 1.0) == pytest.approx(1.0, rel=1e-12)

    def test_offspring_equals_immigration_equals_geometric(self, kernel):
        """Both child counts are geometric with the forward-loop parameter."""
        for x in (1, 5, 40):
            b = geom_param(kernel, x).loop_prob
            for s in (0.0, 0.4, 0.9):
                want = (1.0 - b) / (1.0 - s * b)
                assert offspring_pgf(kernel, x, s) == pytest.approx(want, rel=1e-12)
                assert immigration_pgf(kernel, x, s) == pytest.approx(want, rel=1e-12)

    def test_iterated_matches_closed(self, kernel):
        report = pgf_iterate(kernel, x_max=200)
        assert report.ok
        assert report.max_marginal_dev <= 1e-10
        assert report.max_weak_dev <= 1e-10

    def test_support_starts_at_one(self, kernel):
        for x in (0, 3, 77):
            assert upcross_pgf_iterated(kernel, x, 0.0) == 0.0
            assert upcross_pgf_closed(kernel, x, 0.0) == 0.0

    def test_weak_prob_via_pgf(self, kernel):
        assert prob_no_inherited_loops(kernel, 9) == pytest.approx(0.2, rel=1e-12)
        for x in (1, 2, 30):
            assert prob_no_inherited_loops(kernel, x) == pytest.approx(
                weak_prob(kernel, x), rel=1e-12
            )


class TestStep:
    def test_site_occupancy_invariant(self):
        with pytest.raises(ValueError):
            SiteOccupancy(x=3, up=2, loops_from_loops=2, loops_from_escape=1)
        with pytest.raises(ValueError):
            SiteOccupancy(x=3, up=1, loops_from_loops=-1, loops_from_escape=1)
        occ = SiteOccupancy(x=3, up=4, loops_from_loops=1, loops_from_escape=2)
        assert occ.local_time_given(prev_up=2) == 5

    def test_singleton_parent_spawns_nothing(self, kernel):
        rng = np.random.default_rng(0)
        prev = SiteOccupancy(x=8, up=1, loops_from_loops=0, loops_from_escape=0)
        for _ in range(200):
            occ = step(kernel, prev, 9, rng)
            assert occ.loops_from_loops == 0

    def test_no_inherited_loops_rate(self, kernel):
        """P(Y = 0 | k parents) = (1 - B)^k."""
        rng = np.random.default_rng(1)
        k = 4
        b = geom_param(kernel, 9).loop_prob
        prev = SiteOccupancy(x=8, up=k + 1, loops_from_loops=k, loops_from_escape=0)
        reps = 20000
        hits = sum(step(kernel, prev, 9, rng).loops_from_loops == 0 for _ in range(reps))
        want = (1.0 - b) ** k
        sigma = math.sqrt(want * (1 - want) / reps)
        assert abs(hits / reps - want) <= 4.0 * sigma

    def test_rejects_site_mismatch(self, kernel):
        prev = SiteOccupancy(x=3, up=1, loops_from_loops=0, loops_from_escape=0)
        with pytest.raises(ValueError):
            step(kernel, prev, 9, np.random.default_rng(0))

    def test_initial_occupancy_law(self, kernel):
        rng = np.random.default_rng(7)
        reps = 30000
        ones = sum(initial_occupancy(kernel, rng).up == 1 for _ in range(reps))
        want = upcross_law(kernel, 0, 1)
        sigma = math.sqrt(want * (1 - want) / reps)
        assert abs(ones / reps - want) <= 4.0 * sigma


class TestRunReplica:
    def test_deterministic(self, kernel):
        kinds = [SetKind.weak_cutpoints(), SetKind.pair(2, 1)]
        a = run_replica(kernel, 200, kinds, seed=123)
        b = run_replica(kernel, 200, kinds, seed=123)
        assert a.counts == b.counts

    def test_pair_counts_below_upcross_counts(self, kernel):
        kinds = [SetKind.pair(2, 1), SetKind.exact_upcross(1)]
        for seed in range(5):
            cs = run_replica(kernel, 300, kinds, seed=seed)
            assert cs.counts[kinds[0]] <= cs.counts[kinds[1]]

    def test_set_kind_additivity_per_path(self, kernel):
        """counts(C(a,B)) = sum_b counts(C(a,b)) on the same replica."""
        whole = SetKind.upcross_in(3, (1, 2))
        parts = [SetKind.pair(3, 1), SetKind.pair(3, 2)]
        for seed in range(4):
            cs = run_replica(kernel, 400, [whole] + parts, seed=seed)
            assert cs.counts[whole] == cs.counts[parts[0]] + cs.counts[parts[1]]

    def test_local_time_set_kind(self, kernel):
        """counts(C(A,a)) = sum_v counts(C(v,a)) on the same replica."""
        whole = SetKind.local_time_in((2, 3), 2)
        parts = [SetKind.pair(2, 2), SetKind.pair(3, 2)]
        for seed in range(4):
            cs = run_replica(kernel, 400, [whole] + parts, seed=seed)
            assert cs.counts[whole] == cs.counts[parts[0]] + cs.counts[parts[1]]

    def test_scaled_normalization(self, kernel):
        kind = SetKind.weak_cutpoints()
        cs = run_replica(kernel, 100, [kind], seed=5)
        assert cs.scaled[kind] == pytest.approx(cs.counts[kind] / (2.0 * math.log(100)))


class TestEnsemble:
    def test_deterministic_across_workers(self, kernel):
        kinds = [SetKind.weak_cutpoints(), SetKind.exact_upcross(1)]
        a = run_ensemble(kernel, kinds, 400, seed=9, checkpoints=[50, 200])
        b = run_ensemble(kernel, kinds, 400, seed=9, checkpoints=[50, 200], workers=2)
        assert np.array_equal(a.counts, b.counts)

    def test_replica_seeds_contract(self):
        s1 = replica_seeds(42, 10)
        s2 = replica_seeds(42, 10)
        assert np.array_equal(s1, s2)
        assert len(set(s1.tolist())) == 10
        assert not np.array_equal(s1, replica_seeds(43, 10))

    def test_prefix_counts_monotone(self, kernel):
        kind = SetKind.exact_upcross(1)
        run = run_ensemble(kernel, [kind], 300, seed=3, checkpoints=[100, 400])
        assert np.all(run.counts_for(400, kind) >= run.counts_for(100, kind))

    def test_marginal_law_at_site(self, kernel):
        """Membership frequency at x = 9 from prefix differences vs exact laws."""
        kinds = [
            SetKind.weak_cutpoints(),
            SetKind.pair(2, 1),
            SetKind.exact_upcross(1),
            SetKind.exact_upcross(2),
        ]
        reps = 200_000
        run = run_ensemble(kernel, kinds, reps, seed=17, checkpoints=[8, 9])
        targets = {
            kinds[0]: weak_prob(kernel, 9),
            kinds[1]: 2 / 81,
            kinds[2]: upcross_law(kernel, 9, 1),
            kinds[3]: upcross_law(kernel, 9, 2),
        }
        for kind, want in targets.items():
            rate = (run.counts_for(9, kind) - run.counts_for(8, kind)).mean()
            sigma = math.sqrt(want * (1 - want) / reps)
            assert abs(rate - want) <= 4.0 * sigma, kind.label

    def test_mean_count_vs_expectation(self, kernel):
        kind = SetKind.exact_upcross(1)
        reps = 30_000
        run = run_ensemble(kernel, [kind], reps, seed=29, checkpoints=[500])
        counts = run.counts_for(500, kind)
        want = expected_count(kernel, 500, kind)  # = sum_x 1/D(x) = H_501 - 1
        hsum = math.fsum(1.0 / (x + 1) for x in range(1, 501))
        assert want == pytest.approx(hsum, rel=1e-12)
        sigma = counts.std(ddof=1) / math.sqrt(reps)
        assert abs(counts.mean() - want) <= 4.0 * sigma

    def test_matches_scalar_reference_law(self, kernel):
        """Vectorized ensemble and scalar reference agree in distribution (means)."""
        kind = SetKind.weak_cutpoints()
        reps = 4000
        run = run_ensemble(kernel, [kind], reps, seed=31, checkpoints=[60])
        scalar = np.array(
            [run_replica(kernel, 60, [kind], seed=1000 + r).counts[kind] for r in range(1500)]
        )
        vec = run.counts_for(60, kind)
        sigma = math.sqrt(vec.var(ddof=1) / reps + scalar.var(ddof=1) / scalar.size)
        assert abs(vec.mean() - scalar.mean()) <= 4.0 * sigma

    def test_validation(self, kernel):
        with pytest.raises(ValueError):
            run_ensemble(kernel, [SetKind.weak_cutpoints()], 10, seed=1)
        with pytest.raises(ValueError):
            run_ensemble(kernel, [SetKind.weak_cutpoints()], 0, seed=1, n=10)
        with pytest.raises(ValueError):
            run_ensemble(kernel, [SetKind.weak_cutpoints()], 10, seed=1, n=10**7)
