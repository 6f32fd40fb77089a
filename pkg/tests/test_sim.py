import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from femtoho.admission import CacThresholds
from femtoho.mobility import KMH, FemtocellGeometry, MobilityParams, residence_times, sample_entries
from femtoho.queuing import GuardChannelParams, blocking_report
from femtoho.sim import (
    AggregateStats,
    Outcome,
    ScenarioConfig,
    classify_outcome,
    classify_outcomes,
    compare_des,
    run_blocking_des,
    run_unnecessary_handover_experiment,
    sweep_threshold_time,
    trial_outcomes,
)

# Unnecessary fraction under the default scenario, by 2-D quadrature over
# (angle, velocity) with the call-life integral done in closed form.
# 4001 x 40001 grid; frozen because it takes ~15 s to recompute.
ORACLE_FRACTION = {0.0: 0.4033470320932607, 10.0: 0.34396794119431234, 20.0: 0.268126680549884}


def quadrature_fraction(t, r=10.0, mean_v=KMH, mean_call=90.0, v_max=10 * KMH, nt=801, nv=8001):
    theta = (np.arange(nt) + 0.5) / nt * math.pi - math.pi / 2
    # midpoints in probability space of the velocity law truncated at v_max
    mass = 1 - math.exp(-v_max / mean_v)
    v = -mean_v * np.log1p(-(np.arange(nv) + 0.5) / nv * mass)
    res = 2 * r * np.cos(theta)[:, None] / v[None, :]
    accepted = res >= t
    p_term = 1 - np.exp(-np.minimum(res, 10.0) / mean_call)
    p_ret = np.where(res < 40.0, np.exp(-res / mean_call), 0.0)
    return float(((p_term + p_ret) * accepted).sum() / accepted.sum())


@pytest.mark.parametrize("t", sorted(ORACLE_FRACTION))
def test_coarse_quadrature_agrees_with_frozen_oracle(t):
    assert quadrature_fraction(t) == pytest.approx(ORACLE_FRACTION[t], abs=1e-5)


class TestClassify:
    @pytest.mark.parametrize(
        "res,call,expected",
        [
            (30, 5, Outcome.UNNECESSARY_TERMINATION),
            (30, 12, Outcome.NECESSARY),
            (30, 60, Outcome.UNNECESSARY_RETURN),
            (50, 60, Outcome.NECESSARY),
            (50, 45, Outcome.NECESSARY),
            (8, 5, Outcome.UNNECESSARY_TERMINATION),
            (5, 8, Outcome.UNNECESSARY_RETURN),
            (20, 20, Outcome.UNNECESSARY_RETURN),
            (40, 100, Outcome.NECESSARY),
        ],
    )
    def test_examples(self, res, call, expected):
        assert classify_outcome(res, call) is expected

    def test_negative_input(self):
        with pytest.raises(ValueError):
            classify_outcome(-1, 3)

    @given(
        st.lists(st.tuples(st.floats(0, 200), st.floats(0, 500)), min_size=1, max_size=50),
        st.floats(1, 100),
        st.floats(1, 50),
    )
    def test_vectorised_matches_scalar(self, pairs, rw, tw):
        res = np.array([p[0] for p in pairs])
        call = np.array([p[1] for p in pairs])
        codes = classify_outcomes(res, call, rw, tw)
        outcomes = list(Outcome)
        assert [outcomes[c] for c in codes] == [classify_outcome(r, c, rw, tw) for r, c in pairs]


class TestAggregateStats:
    def test_inconsistent_counts(self):
        with pytest.raises(ValueError):
            AggregateStats(10, 5, 1, 1, 1, 0)
        with pytest.raises(ValueError):
            AggregateStats(3, 5, 5, 0, 0, 0)

    def test_no_handovers(self):
        s = AggregateStats(10, 0, 0, 0, 0, 0)
        assert s.unnecessary_fraction is None and s.ci95_halfwidth is None
        assert s.rejected == 10

    def test_ci(self):
        s = AggregateStats(1000, 400, 300, 80, 20, 50)
        assert s.unnecessary_fraction == 0.25
        assert s.ci95_halfwidth == pytest.approx(1.96 * math.sqrt(0.25 * 0.75 / 400), rel=1e-3)
        assert s.round_trip_handovers == 450

    def test_sum(self):
        a = AggregateStats(10, 4, 2, 1, 1, 1)
        assert a + AggregateStats.empty() == a
        assert (a + a).handovers == 8


SMALL = ScenarioConfig(num_faps=5, trials=200, seed=11)


class TestCacExperiment:
    def test_scalar_path_matches_vectorised(self):
        outcomes = trial_outcomes(SMALL.with_threshold_time(10.0))
        stats = run_unnecessary_handover_experiment(SMALL.with_threshold_time(10.0))
        counts = {o: sum(t.classification is o for t in outcomes) for o in Outcome}
        assert len(outcomes) == stats.entries == 1000
        assert counts[Outcome.NOT_PERFORMED] == stats.rejected
        assert counts[Outcome.NECESSARY] == stats.necessary
        assert counts[Outcome.UNNECESSARY_RETURN] == stats.unnecessary_return
        assert counts[Outcome.UNNECESSARY_TERMINATION] == stats.unnecessary_termination

    def test_deterministic(self):
        assert sweep_threshold_time(SMALL, [0, 10, 20]) == sweep_threshold_time(SMALL, [0, 10, 20])

    def test_seed_matters(self):
        a = run_unnecessary_handover_experiment(SMALL)
        b = run_unnecessary_handover_experiment(replace(SMALL, seed=12))
        assert a != b

    def test_single_t_equals_sweep_entry(self):
        rows = dict(sweep_threshold_time(SMALL, [0.0, 20.0]))
        assert run_unnecessary_handover_experiment(SMALL.with_threshold_time(20.0)) == rows[20.0]

    def test_negative_t(self):
        with pytest.raises(ValueError):
            sweep_threshold_time(SMALL, [-1.0])

    def test_zero_velocity_threshold_admits_nobody(self):
        cfg = replace(SMALL, thresholds=CacThresholds(velocity_threshold=1e-12))
        s = run_unnecessary_handover_experiment(cfg)
        assert s.handovers == 0 and s.unnecessary_fraction is None

    def test_fap_count_is_bookkeeping(self):
        # 1 FAP x 30000 entries and 150 FAPs x 200 entries estimate the same fraction
        one = run_unnecessary_handover_experiment(ScenarioConfig(num_faps=1, trials=30000, seed=3))
        many = run_unnecessary_handover_experiment(ScenarioConfig(num_faps=150, trials=200, seed=3))
        assert one.entries == many.entries == 30000
        tol = 3 * math.hypot(one.ci95_halfwidth, many.ci95_halfwidth) / 1.96
        assert abs(one.unnecessary_fraction - many.unnecessary_fraction) < tol

    @pytest.mark.parametrize("t", sorted(ORACLE_FRACTION))
    def test_monte_carlo_matches_oracle(self, t):
        s = run_unnecessary_handover_experiment(ScenarioConfig(seed=2).with_threshold_time(t))
        assert s.entries == 150_000
        assert abs(s.unnecessary_fraction - ORACLE_FRACTION[t]) < 4 * s.ci95_halfwidth / 1.96


@settings(max_examples=1000, deadline=None)
@given(
    st.integers(0, 2**32 - 1),
    st.lists(st.floats(0, 60), min_size=2, max_size=4),
    st.floats(0.5 * KMH, 30 * KMH),
)
def test_nesting_and_conservation(seed, t_values, v_max):
    cfg = ScenarioConfig(
        num_faps=2, trials=20, seed=seed, thresholds=CacThresholds(velocity_threshold=v_max)
    )
    rows = sweep_threshold_time(cfg, sorted(t_values))
    for _, s in rows:
        assert s.entries == 40
        assert s.handovers + s.rejected == s.entries
        assert s.necessary + s.unnecessary_return + s.unnecessary_termination == s.handovers
        assert 0 <= s.return_handovers <= s.handovers
    for (_, lo), (_, hi) in zip(rows, rows[1:]):
        assert hi.handovers <= lo.handovers
        assert hi.return_handovers <= lo.return_handovers
    accepted = [
        [o.decision.accepted for o in trial_outcomes(cfg.with_threshold_time(t))]
        for t in sorted(t_values)
    ]
    for lo, hi in zip(accepted, accepted[1:]):
        assert all(a or not b for a, b in zip(lo, hi))


def test_accepted_sets_are_nested():
    rng = np.random.default_rng(8)
    batch = sample_entries(MobilityParams(), rng, 5000)
    dwell = residence_times(FemtocellGeometry(), batch)
    slow = batch.velocity < 10 * KMH
    prev = None
    for t in (0, 5, 10, 20, 40):
        acc = (dwell >= t) & slow
        if prev is not None:
            assert not (acc & ~prev).any()
        prev = acc


HEAVY = GuardChannelParams(10, 8, 0.1, 0.075, 1 / 120)


class TestDes:
    def test_heavy_load_within_three_sigma(self):
        result = run_blocking_des(HEAVY, 1.2e6)
        assert result.new_arrivals + result.handover_arrivals >= 10**5
        assert all(row.passed for row in compare_des(HEAVY, result))

    def test_deterministic(self):
        a = run_blocking_des(HEAVY, 2e4, seed=4)
        assert a == run_blocking_des(HEAVY, 2e4, seed=4)

    def test_no_handover_traffic(self):
        params = GuardChannelParams(5, 3, 0.05, 0.0, 1 / 60)
        result = run_blocking_des(params, 5e4, seed=1)
        assert result.handover_arrivals == 0 and result.handover_blocking is None
        rows = {r.metric: r for r in compare_des(params, result)}
        assert rows["P_D"].passed and rows["P_D"].empirical is None

    def test_all_channels_shared(self):
        params = GuardChannelParams(6, 6, 0.05, 0.03, 1 / 60)
        result = run_blocking_des(params, 3e5, seed=5)
        assert result.new_call_blocking == pytest.approx(result.handover_blocking, abs=0.02)

    def test_k_zero_blocks_every_new_call(self):
        params = GuardChannelParams(4, 0, 0.05, 0.03, 1 / 60)
        result = run_blocking_des(params, 5e4, seed=5)
        assert result.blocked_new == result.new_arrivals
        assert all(r.passed for r in compare_des(params, result)[:1])

    @settings(max_examples=8, deadline=None)
    @given(
        st.integers(1, 8).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n))),
        st.floats(0.01, 0.2),
        st.floats(0.01, 0.2),
        st.integers(0, 10**6),
    )
    def test_random_small_systems(self, nk, lam_n, lam_h, seed):
        n, k = nk
        params = GuardChannelParams(n, k, lam_n, lam_h, 1 / 30)
        result = run_blocking_des(params, 2e5, seed=seed)
        rep = blocking_report(params)
        # generous 5 sigma plus an absolute floor: hypothesis explores many systems
        for emp, se, cf in (
            (result.new_call_blocking, result.se_new_call_blocking, rep.new_call_blocking),
            (result.handover_blocking, result.se_handover_blocking, rep.handover_blocking),
            (result.utilization, result.se_utilization, rep.utilization),
        ):
            assert abs(emp - cf) <= 5 * (se or 0) + 2e-3

    def test_bad_arguments(self):
        with pytest.raises(ValueError):
            run_blocking_des(HEAVY, 0)
        with pytest.raises(ValueError):
            run_blocking_des(HEAVY, 10, batches=1)
