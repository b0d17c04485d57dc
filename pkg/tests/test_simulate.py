import math

import numpy as np
import pytest

from unisde import rng
from unisde._kernels import available_backends
from unisde.boundary import ExponentialBoundary, PowerBoundary
from unisde.processes import (
    ConicMartingale,
    ErgodicUniform,
    MeanRevertingUniform,
    MeanRevertingUnitUniform,
    NormalCdfUniform,
)
from unisde.simulate import (
    Conditional,
    ConfigError,
    FullPaths,
    Marginals,
    NonFiniteStateError,
    PointMass,
    SimConfig,
    TerminalOnly,
    TimeGrid,
    UniformOnSupport,
    euler_simulate,
    exact_uniform_reference,
    parse_initial,
    parse_store,
    rescale_to_unit_support,
    time_change_simulate,
)

LIN = PowerBoundary(k=1, alpha=1)
SQRT = PowerBoundary(k=1, alpha=0.5)


def small_conic(n_paths=5000, seed=7, store=Marginals((1.0,)), t_end=1.0):
    return SimConfig(process=ConicMartingale(LIN),
                     grid=TimeGrid(0.0, t_end, 0.01),
                     n_paths=n_paths, seed=seed,
                     initial=PointMass(0.0), store=store)


class TestTimeGrid:
    def test_exact_division(self):
        times = TimeGrid(0.0, 5.0, 0.01).times()
        assert times.size == 501
        assert times[0] == 0.0 and times[-1] == 5.0
        assert np.all(np.diff(times) > 0)

    def test_short_last_step(self):
        times = TimeGrid(0.0, 1.0, 0.3).times()
        assert times[-1] == 1.0
        assert times.size == 5
        assert np.diff(times)[-1] == pytest.approx(0.1)

    def test_single_step(self):
        times = TimeGrid(2.0, 2.5, 1.0).times()
        assert list(times) == [2.0, 2.5]

    def test_validation(self):
        with pytest.raises(ConfigError):
            TimeGrid(-1.0, 1.0, 0.1)
        with pytest.raises(ConfigError):
            TimeGrid(1.0, 1.0, 0.1)
        with pytest.raises(ConfigError):
            TimeGrid(0.0, 1.0, 0.0)


class TestParsers:
    def test_initial_round_trip(self):
        for token, expected in [("uniform", UniformOnSupport()),
                                ("point:0.5", PointMass(0.5)),
                                ("cond:s=2,z=-0.95", Conditional(2.0, -0.95))]:
            parsed = parse_initial(token)
            assert parsed == expected
            assert parse_initial(parsed.spec_token()) == expected

    def test_store_round_trip(self):
        for token, expected in [("full", FullPaths()),
                                ("terminal", TerminalOnly()),
                                ("marginals:1,5", Marginals((1.0, 5.0)))]:
            parsed = parse_store(token)
            assert parsed == expected
            assert parse_store(parsed.spec_token()) == expected

    @pytest.mark.parametrize("bad", ["point:x", "cond:s=1", "nothing", "marginals:"])
    def test_rejects_malformed(self, bad):
        with pytest.raises(ConfigError):
            parse_initial(bad) if not bad.startswith("marginals") else parse_store(bad)


class TestValidation:
    def test_point_start_at_origin_requires_strong_regime(self):
        cfg = SimConfig(process=ConicMartingale(SQRT),
                        grid=TimeGrid(0.0, 1.0, 0.01), n_paths=10, seed=1,
                        initial=PointMass(0.0), store=TerminalOnly())
        with pytest.raises(ConfigError, match="uniform"):
            euler_simulate(cfg)

    def test_weak_regime_rejects_point_mass_even_late(self):
        cfg = SimConfig(process=ConicMartingale(SQRT),
                        grid=TimeGrid(0.5, 1.0, 0.01), n_paths=10, seed=1,
                        initial=PointMass(0.1), store=TerminalOnly())
        with pytest.raises(ConfigError, match="cond"):
            euler_simulate(cfg)

    def test_weak_regime_uniform_start_ok(self):
        cfg = SimConfig(process=ConicMartingale(SQRT),
                        grid=TimeGrid(0.01, 1.0, 0.01), n_paths=100, seed=1,
                        initial=UniformOnSupport(), store=TerminalOnly())
        euler_simulate(cfg)

    def test_exponential_cone_needs_positive_start(self):
        b = ExponentialBoundary(1.0, 0.5)
        cfg = SimConfig(process=ConicMartingale(b),
                        grid=TimeGrid(0.0, 1.0, 0.01), n_paths=10, seed=1,
                        initial=PointMass(0.0), store=TerminalOnly())
        with pytest.raises(ConfigError):
            euler_simulate(cfg)

    def test_invalid_boundary_refused(self):
        b = PowerBoundary(1, 0.3)
        cfg = SimConfig(process=ConicMartingale(b),
                        grid=TimeGrid(0.1, 1.0, 0.01), n_paths=10, seed=1,
                        initial=UniformOnSupport(), store=TerminalOnly())
        with pytest.raises(ConfigError, match="solvability"):
            euler_simulate(cfg)

    def test_rescaled_processes_need_positive_t0(self):
        for proc in (MeanRevertingUniform(LIN), MeanRevertingUnitUniform(LIN),
                     NormalCdfUniform()):
            cfg = SimConfig(process=proc, grid=TimeGrid(0.0, 1.0, 0.01),
                            n_paths=10, seed=1, initial=UniformOnSupport(),
                            store=TerminalOnly())
            with pytest.raises(ConfigError, match="t0"):
                euler_simulate(cfg)

    def test_conditional_start_must_match_grid_origin(self):
        cfg = SimConfig(process=MeanRevertingUniform(LIN),
                        grid=TimeGrid(1.0, 2.0, 0.01), n_paths=10, seed=1,
                        initial=Conditional(1.5, 0.0), store=TerminalOnly())
        with pytest.raises(ConfigError, match="grid origin"):
            euler_simulate(cfg)

    def test_conditional_state_must_be_in_support(self):
        cfg = SimConfig(process=MeanRevertingUniform(LIN),
                        grid=TimeGrid(1.0, 2.0, 0.01), n_paths=10, seed=1,
                        initial=Conditional(1.0, 1.5), store=TerminalOnly())
        with pytest.raises(ConfigError, match="support"):
            euler_simulate(cfg)

    def test_path_and_seed_bounds(self):
        with pytest.raises(ConfigError):
            euler_simulate(small_conic(n_paths=0))
        cfg = small_conic()
        bad_seed = SimConfig(cfg.process, cfg.grid, 10, 2 ** 64, cfg.initial,
                             cfg.store)
        with pytest.raises(ConfigError):
            euler_simulate(bad_seed)

    def test_marginal_time_outside_grid(self):
        with pytest.raises(ConfigError, match="marginal"):
            euler_simulate(small_conic(store=Marginals((7.0,))))

    def test_memory_guard(self):
        cfg = SimConfig(process=ConicMartingale(LIN),
                        grid=TimeGrid(0.0, 5000.0, 0.01), n_paths=3_000_000,
                        seed=1, initial=PointMass(0.0), store=FullPaths())
        with pytest.raises(ConfigError, match="too large"):
            euler_simulate(cfg)


class TestDeterminism:
    def test_repeat_runs_bit_identical(self):
        a = euler_simulate(small_conic())
        b = euler_simulate(small_conic())
        assert a.rng_fingerprint == b.rng_fingerprint
        assert np.array_equal(a.values, b.values)

    def test_worker_count_does_not_change_values(self):
        # blocks are smaller than n_paths here, so threads really interleave
        cfg = small_conic(n_paths=20000)
        one = euler_simulate(cfg, threads=1)
        many = euler_simulate(cfg, threads=8)
        assert np.array_equal(one.values, many.values)
        assert one.rng_fingerprint == many.rng_fingerprint
        assert one.clamp_fraction == many.clamp_fraction

    @pytest.mark.skipif("compiled" not in available_backends(),
                        reason="compiled kernels not built")
    def test_backends_bit_identical(self):
        for proc, t0, initial in [
            (ConicMartingale(LIN), 0.0, PointMass(0.0)),
            (MeanRevertingUniform(LIN), 0.5, UniformOnSupport()),
            (MeanRevertingUnitUniform(LIN), 0.5, UniformOnSupport()),
            (ErgodicUniform(1.3), 0.0, UniformOnSupport()),
        ]:
            cfg = SimConfig(process=proc, grid=TimeGrid(t0, 2.0, 0.01),
                            n_paths=4000, seed=3, initial=initial,
                            store=FullPaths())
            py = euler_simulate(cfg, backend="python")
            cy = euler_simulate(cfg, backend="compiled")
            assert np.array_equal(py.values, cy.values)
            assert py.clamp_fraction == cy.clamp_fraction

    def test_path_values_independent_of_path_count(self):
        big = euler_simulate(small_conic(n_paths=300))
        small = euler_simulate(small_conic(n_paths=120))
        assert np.array_equal(big.values[:120], small.values)

    def test_single_step_formula(self):
        kappa, dt, seed = 1.7, 1e-4, 99
        cfg = SimConfig(process=ErgodicUniform(kappa),
                        grid=TimeGrid(0.0, dt, dt), n_paths=3, seed=seed,
                        initial=PointMass(0.0), store=TerminalOnly())
        out = euler_simulate(cfg)
        z0 = rng.normals(seed, np.arange(3, dtype=np.uint64), 0, 1)[:, 0]
        expected = np.sqrt(kappa * 1.0) * (z0 * math.sqrt(dt))
        assert np.array_equal(out.values[:, 0], expected)


class TestPathSets:
    def test_full_paths_shape_and_confinement(self):
        cfg = small_conic(n_paths=2000, store=FullPaths())
        ps = euler_simulate(cfg)
        assert ps.values.shape == (2000, 101)
        for j, t in enumerate(ps.times):
            lo, hi = ps.process.support(t)
            col = ps.values[:, j]
            assert np.all(col >= lo) and np.all(col <= hi)

    def test_clamp_fraction_diagnostic_below_5_percent(self):
        ps = euler_simulate(small_conic(n_paths=20000))
        assert 0.0 < ps.clamp_fraction < 0.05

    def test_terminal_only(self):
        ps = euler_simulate(small_conic(store=TerminalOnly()))
        assert ps.values.shape == (5000, 1)
        assert ps.times[0] == 1.0

    def test_marginal_lookup(self):
        ps = euler_simulate(small_conic(store=Marginals((0.5, 1.0))))
        assert ps.marginal(0.5).shape == (5000,)
        with pytest.raises(KeyError):
            ps.marginal(0.123)

    def test_martingale_mean_within_three_se(self):
        ps = euler_simulate(small_conic(n_paths=50000, t_end=2.0,
                                        store=Marginals((1.0, 2.0))))
        for t in (1.0, 2.0):
            col = ps.marginal(t)
            se = col.std(ddof=1) / math.sqrt(col.size)
            assert abs(col.mean()) <= 3.0 * se

    def test_conditional_mean_decays_with_support_ratio(self):
        s, z = 1.0, 0.8
        cfg = SimConfig(process=MeanRevertingUniform(LIN),
                        grid=TimeGrid(s, 4.0, 0.005), n_paths=50000, seed=11,
                        initial=Conditional(s, z), store=Marginals((2.0, 4.0)))
        ps = euler_simulate(cfg)
        for t in (2.0, 4.0):
            col = ps.marginal(t)
            se = col.std(ddof=1) / math.sqrt(col.size)
            assert col.mean() == pytest.approx(z * s / t, abs=3 * se)

    def test_non_finite_error_reports_location(self):
        err = NonFiniteStateError(17, 3, 0.04)
        assert err.path_index == 17 and err.step_index == 3
        assert "17" in str(err) and "3" in str(err)


class TestRescale:
    def test_values_divided_by_boundary(self):
        ps = euler_simulate(small_conic(n_paths=4000,
                                        store=Marginals((0.5, 1.0))))
        rs = rescale_to_unit_support(ps)
        assert isinstance(rs.process, MeanRevertingUniform)
        for t in (0.5, 1.0):
            assert np.array_equal(rs.marginal(t), ps.marginal(t) / t)
            assert np.all(np.abs(rs.marginal(t)) <= 1.0)

    def test_boundary_maps_to_unit_edge(self):
        ps = euler_simulate(small_conic(n_paths=4000, store=Marginals((1.0,))))
        rs = rescale_to_unit_support(ps)
        hit = np.abs(ps.marginal(1.0)) == 1.0
        assert np.all(np.abs(rs.marginal(1.0)[hit]) == 1.0)

    def test_requires_conic_source_and_positive_times(self):
        zcfg = SimConfig(process=MeanRevertingUniform(LIN),
                         grid=TimeGrid(1.0, 2.0, 0.1), n_paths=10, seed=1,
                         initial=UniformOnSupport(), store=TerminalOnly())
        with pytest.raises(ConfigError):
            rescale_to_unit_support(euler_simulate(zcfg))
        xcfg = small_conic(n_paths=10, store=FullPaths())
        with pytest.raises(ConfigError, match="> 0"):
            rescale_to_unit_support(euler_simulate(xcfg))


class TestTimeChange:
    def test_requires_rescaled_process(self):
        with pytest.raises(ConfigError):
            time_change_simulate(small_conic())

    def test_requires_clock_origin(self):
        cfg = SimConfig(process=MeanRevertingUniform(LIN),
                        grid=TimeGrid(0.5, 2.0, 0.01), n_paths=10, seed=1,
                        initial=UniformOnSupport(), store=TerminalOnly())
        with pytest.raises(ConfigError, match="t0 >="):
            time_change_simulate(cfg)

    def test_conditional_mean_matches_closed_form(self):
        s, z = 1.0, 0.8
        cfg = SimConfig(process=MeanRevertingUniform(LIN),
                        grid=TimeGrid(s, 4.0, 0.005), n_paths=50000, seed=13,
                        initial=Conditional(s, z), store=Marginals((4.0,)))
        ps = time_change_simulate(cfg)
        col = ps.marginal(4.0)
        se = col.std(ddof=1) / math.sqrt(col.size)
        assert col.mean() == pytest.approx(z * s / 4.0, abs=3 * se)

    def test_deterministic(self):
        cfg = SimConfig(process=MeanRevertingUniform(LIN),
                        grid=TimeGrid(1.0, 3.0, 0.01), n_paths=1000, seed=5,
                        initial=UniformOnSupport(), store=TerminalOnly())
        a = time_change_simulate(cfg)
        b = time_change_simulate(cfg)
        assert np.array_equal(a.values, b.values)
        assert a.scheme == "time-change"


class TestReferenceSampler:
    def test_deterministic_and_bounded(self):
        a = exact_uniform_reference(1000, seed=4)
        b = exact_uniform_reference(1000, seed=4)
        assert np.array_equal(a, b)
        assert np.all(a > -1.0) and np.all(a < 1.0)
        assert not np.array_equal(a, exact_uniform_reference(1000, seed=5))

    def test_first_and_second_moments(self):
        n = 1_000_000
        s = exact_uniform_reference(n, seed=12)
        assert abs(s.mean()) <= 3.0 / math.sqrt(3.0 * n)
        se2 = math.sqrt((1.0 / 5.0 - 1.0 / 9.0) / n)
        assert abs(np.mean(s ** 2) - 1.0 / 3.0) <= 3.0 * se2

    def test_rejects_nonpositive_n(self):
        with pytest.raises(ValueError):
            exact_uniform_reference(0, seed=1)
