import numpy as np
import pytest
import scipy.stats

from gatedhawkes.core import (EventRecord, EventStream, HawkesParams,
                              ModelSpec, Taxonomy, TransitionKernel, Variant,
                              validate_stream)
from gatedhawkes.simulate import (DeadStateError, ImpactTable, MidPricePath,
                                  derive_seed, replay_midprice, simulate)


def _unit_poisson(nu=2.0):
    tax = Taxonomy.from_codes(["A"], ["1"])
    tk = TransitionKernel(phi=np.ones((1, 1, 1)),
                          gate=np.ones((1, 1), dtype=np.int64))
    hp = HawkesParams(nu=np.array([nu]), alpha=np.zeros((1, 1, 1)),
                      beta=np.ones((1, 1, 1)))
    return ModelSpec(taxonomy=tax, variant=Variant.POISSON, transition=tk,
                     hawkes=hp), ImpactTable(delta_m=np.zeros((1, 1)))


def _dead_model():
    tax = Taxonomy.from_codes(["A"], ["1"])
    tk = TransitionKernel(phi=np.zeros((1, 1, 1)),
                          gate=np.zeros((1, 1), dtype=np.int64))
    hp = HawkesParams(nu=np.array([1.0]), alpha=np.zeros((1, 1, 1)),
                      beta=np.ones((1, 1, 1)))
    return ModelSpec(taxonomy=tax, variant=Variant.EXSD_HAWKES, transition=tk,
                     hawkes=hp), ImpactTable(delta_m=np.zeros((1, 1)))


class TestThinning:
    def test_dead_state_raises(self):
        model, impact = _dead_model()
        with pytest.raises(DeadStateError, match="absorbing dead state"):
            simulate(model, impact, horizon=10.0, seed=0)

    def test_dead_state_stop_mode(self):
        model, impact = _dead_model()
        res = simulate(model, impact, horizon=10.0, seed=0,
                       on_dead_state="stop")
        assert len(res.stream) == 0
        assert res.stream.horizon == 10.0

    def test_reproducible(self, small_model):
        impact = ImpactTable(delta_m=np.ones((3, 2)))
        a = simulate(small_model, impact, horizon=500.0, seed=77)
        b = simulate(small_model, impact, horizon=500.0, seed=77)
        assert a.stream == b.stream
        assert a.path == b.path
        assert a.thinning_stats == b.thinning_stats
        c = simulate(small_model, impact, horizon=500.0, seed=78)
        assert not (a.stream == c.stream)

    def test_stats_consistent(self, small_model):
        impact = ImpactTable(delta_m=np.zeros((3, 2)))
        res = simulate(small_model, impact, horizon=300.0, seed=5)
        assert res.thinning_stats.accepted == len(res.stream)
        assert (res.thinning_stats.accepted + res.thinning_stats.rejected
                == res.thinning_stats.proposals)

    def test_stream_valid_and_admissible(self, small_model):
        impact = ImpactTable(delta_m=np.zeros((3, 2)))
        res = simulate(small_model, impact, horizon=2000.0, seed=6)
        s = res.stream
        assert validate_stream(s, small_model.taxonomy) == []
        gate = small_model.transition.gate
        assert np.all(gate[s.events, s.states_before] == 1)

    def test_poisson_mean_count(self):
        """Mean event count over seeds within 3 standard errors of nu * T."""
        model, impact = _unit_poisson(nu=2.0)
        horizon = 1000.0
        counts = [len(simulate(model, impact, horizon=horizon, seed=s).stream)
                  for s in range(100)]
        mean = np.mean(counts)
        target = 2.0 * horizon
        se = np.sqrt(target / len(counts))
        assert abs(mean - target) < 3 * se

    def test_poisson_interarrivals_ks(self):
        """Inter-arrival times against Exp(nu) at the 1% level, fixed seed."""
        model, impact = _unit_poisson(nu=2.0)
        res = simulate(model, impact, horizon=55_000.0, seed=2024)
        gaps = np.diff(np.concatenate(([0.0], res.stream.times)))
        assert len(gaps) > 100_000
        stat, p = scipy.stats.kstest(gaps, "expon", args=(0, 1 / 2.0))
        assert p > 0.01

    def test_truncation_budget(self, small_model):
        impact = ImpactTable(delta_m=np.zeros((3, 2)))
        res = simulate(small_model, impact, horizon=2000.0, seed=8,
                       max_events=50)
        assert res.truncated
        assert len(res.stream) == 50

    def test_burn_in_discards_warmup(self, small_model):
        impact = ImpactTable(delta_m=np.zeros((3, 2)))
        res = simulate(small_model, impact, horizon=200.0, seed=12,
                       burn_in=100.0)
        s = res.stream
        assert s.horizon == 200.0
        assert np.all(s.times > 0)
        assert np.all(s.times <= 200.0)
        assert validate_stream(s, small_model.taxonomy) == []
        assert res.thinning_stats.accepted == len(s)


class TestAdmissibilityAtScale:
    @pytest.mark.slow
    def test_million_event_run_never_breaks_gates(self):
        from gatedhawkes.scenarios import make_scenario
        model, impact = make_scenario("subcritical")
        res = simulate(model, impact, horizon=800_000.0, seed=99)
        s = res.stream
        assert len(s) >= 1_000_000
        gate = model.transition.gate
        assert np.all(gate[s.events, s.states_before] == 1)


class TestSeedDerivation:
    def test_fixed_values(self):
        # pinned: the derivation is part of the reproducibility contract
        assert derive_seed(0, 0) == derive_seed(0, 0)
        assert derive_seed(0, 1) != derive_seed(0, 0)
        assert derive_seed(1, 0) != derive_seed(0, 0)
        vals = {derive_seed(123, i) for i in range(1000)}
        assert len(vals) == 1000

    def test_matches_reference_mix(self):
        # splitmix64 finalizer of (master ^ index)
        def ref(master, index):
            z = (master ^ index) & 0xFFFFFFFFFFFFFFFF
            z = (z + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
            z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
            z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
            return z ^ (z >> 31)

        for m, i in ((0, 0), (42, 7), (2**40, 199)):
            assert derive_seed(m, i) == ref(m, i)


class TestMidPrice:
    def test_empty_stream(self):
        s = EventStream.from_records([], initial_state=0, horizon=5.0)
        impact = ImpactTable(delta_m=np.zeros((1, 1)))
        path = replay_midprice(s, impact, initial_price=100.0)
        assert len(path) == 0
        assert path.initial_price == 100.0
        assert path.price_at(3.0) == 100.0

    def test_half_tick_shift(self):
        tax = Taxonomy.from_codes(["A"], ["1"])
        s = EventStream.from_records([EventRecord(1.0, 0, 0, 0)],
                                     initial_state=0, horizon=2.0)
        impact = ImpactTable(delta_m=np.array([[0.5]]))
        path = replay_midprice(s, impact, initial_price=100.0)
        assert path.prices[0] == pytest.approx(100.5)

    def test_alternating_telescopes(self):
        recs = [EventRecord(float(i + 1), i % 2, 0, 0) for i in range(10)]
        s = EventStream.from_records(recs, initial_state=0, horizon=11.0)
        impact = ImpactTable(delta_m=np.array([[0.5], [-0.5]]))
        path = replay_midprice(s, impact, initial_price=50.0)
        assert path.prices[-1] == pytest.approx(50.0)

    def test_uses_pre_state(self):
        # one event from state 0 to 1: the shift must use state 0
        recs = [EventRecord(1.0, 0, 0, 1)]
        s = EventStream.from_records(recs, initial_state=0, horizon=2.0)
        impact = ImpactTable(delta_m=np.array([[0.5, 9.0]]))
        path = replay_midprice(s, impact)
        assert path.prices[0] == pytest.approx(0.5)

    def test_previous_tick_lookup(self):
        path = MidPricePath(times=np.array([1.0, 2.0]),
                            prices=np.array([101.0, 99.0]),
                            initial_price=100.0)
        np.testing.assert_allclose(path.price_at(np.array([0.5, 1.0, 1.5, 2.5])),
                                   [100.0, 101.0, 101.0, 99.0])


class TestTimeChangeSelfCheck:
    def test_residual_means_near_one(self, small_model):
        """Residuals of a simulation under its own model average to 1."""
        from gatedhawkes.diagnostics import event_residuals
        impact = ImpactTable(delta_m=np.zeros((3, 2)))
        res = simulate(small_model, impact, horizon=20_000.0, seed=15)
        for series in event_residuals(res.stream, small_model).values():
            n = len(series)
            assert n > 1000
            assert abs(series.values.mean() - 1.0) < 3.0 / np.sqrt(n)
