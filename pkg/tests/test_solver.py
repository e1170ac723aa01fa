import numpy as np
import pytest

from chemocert import (
    Grid,
    ModelParams,
    SolverConfig,
    State,
    simulate,
    stable_dt,
    step,
)
from chemocert.solver import SchemeViolationError, _clamp_nonneg

from conftest import bumpy_state


PARAMS = ModelParams(theta=2.0, eps=0.25, dim_N=2)


class TestStableDt:
    def test_no_drift_no_reaction(self):
        g = Grid(cells=(8, 8), lengths=(1.0, 1.0))
        state = State(u=g.constant_field(0.0), v=g.constant_field(0.0),
                      w=g.constant_field(1.0))
        cfg = SolverConfig(cfl_safety=0.5, max_dt=0.25)
        # transport limit inactive, reaction Lipschitz bound is 1
        assert stable_dt(state, PARAMS, cfg) == pytest.approx(0.5 * 0.25)

    def test_reaction_limited(self):
        g = Grid(cells=(8,), lengths=(1.0,))
        state = State(u=g.constant_field(0.5), v=g.constant_field(0.5),
                      w=g.constant_field(0.0))
        cfg = SolverConfig(cfl_safety=0.5, max_dt=10.0)
        # L = 1 + 2*0.5 + 0.5 + 1 = 3.5
        assert stable_dt(state, PARAMS, cfg) == pytest.approx(0.5 / 3.5)

    def test_transport_scaling(self):
        g = Grid(cells=(64,), lengths=(1.0,))
        x = g.centers(0)
        cfg = SolverConfig(cfl_safety=1.0, max_dt=10.0)
        zero = g.constant_field(0.0)
        dt1 = stable_dt(State(u=zero, v=zero, w=g.field(0.5 * x)), PARAMS, cfg)
        dt2 = stable_dt(State(u=zero, v=zero, w=g.field(1.0 * x)), PARAMS, cfg)
        assert dt2 == pytest.approx(dt1 / 2.0)
        assert dt2 == pytest.approx(g.min_spacing / (2.0 * 1.0 * 1.0))


class TestStep:
    def test_zero_state_fixed_point(self):
        g = Grid(cells=(8, 8), lengths=(1.0, 1.0))
        zero = State(u=g.constant_field(0.0), v=g.constant_field(0.0),
                     w=g.constant_field(0.0))
        out = step(zero, PARAMS, SolverConfig(), 0.001)
        for f in (out.u, out.v, out.w):
            assert np.all(f.values == 0.0)

    def test_rejects_nonpositive_dt(self):
        g = Grid(cells=(4,), lengths=(1.0,))
        zero = State(u=g.constant_field(0.0), v=g.constant_field(0.0),
                     w=g.constant_field(0.0))
        with pytest.raises(ValueError):
            step(zero, PARAMS, SolverConfig(), 0.0)

    def test_mass_identity_per_step(self):
        g = Grid(cells=(48,), lengths=(1.0,))
        state = bumpy_state(g)
        cfg = SolverConfig(max_dt=0.005)
        traj = simulate(state, PARAMS, cfg, T=0.5, output_times=[0.5])
        gap_u = traj.series["mass_u"][-1] - (traj.series["mass_u"][0]
                                             + traj.cumulative["cum_reaction_u"][-1])
        gap_v = traj.series["mass_v"][-1] - (traj.series["mass_v"][0]
                                             + traj.cumulative["cum_reaction_v"][-1])
        gap_w = traj.series["mass_w"][-1] - (traj.series["mass_w"][0]
                                             + traj.cumulative["cum_source_w"][-1])
        for gap in (gap_u, gap_v, gap_w):
            assert abs(gap) < 1e-10

    def test_clamp_floor(self):
        assert np.all(_clamp_nonneg("u", np.array([-5e-14, 1.0]), 0.0) >= 0.0)
        with pytest.raises(SchemeViolationError, match="u"):
            _clamp_nonneg("u", np.array([-1e-12, 1.0]), 0.0)

    def test_single_step_mass_identities(self):
        # one step: each field's mass change equals dt times the integrated
        # reaction/source at the stage values actually applied
        from chemocert.solver import _advance

        g = Grid(cells=(32,), lengths=(1.0,))
        state = bumpy_state(g)
        u0, v0, w0 = state.u.values, state.v.values, state.w.values
        dt = 1e-3
        u1, v1, w1, stats = _advance(g, u0, v0, w0, PARAMS, SolverConfig(), dt, 0.0)
        vol = g.cell_volume
        assert (u1.sum() - u0.sum()) * vol == pytest.approx(
            dt * stats["reaction_u"], abs=1e-12)
        assert (v1.sum() - v0.sum()) * vol == pytest.approx(
            dt * stats["reaction_v"], abs=1e-12)
        assert (w1.sum() - w0.sum()) * vol == pytest.approx(
            dt * stats["source_w"], abs=1e-12)


class TestConstantDataOracle:
    """Constant (1/2, 1/2) data freezes the species; w solves w' = -w + g."""

    def run(self, eps, T=1.0, max_dt=1e-3):
        g = Grid(cells=(8, 8), lengths=(1.0, 1.0))
        init = State(u=g.constant_field(0.5), v=g.constant_field(0.5),
                     w=g.constant_field(0.1))
        params = ModelParams(theta=2.0, eps=eps, dim_N=2)
        cfg = SolverConfig(cfl_safety=0.5, max_dt=max_dt)
        return simulate(init, params, cfg, T,
                        output_times=np.linspace(0.1, T, 10))

    def test_species_frozen(self):
        traj = self.run(eps=0.0)
        for _, s in traj.snapshots:
            assert np.abs(s.u.values - 0.5).max() < 1e-12
            assert np.abs(s.v.values - 0.5).max() < 1e-12

    def test_w_follows_scalar_ode(self):
        traj = self.run(eps=0.0)
        worst = 0.0
        for t, s in traj.snapshots:
            exact = 0.1 * np.exp(-t) + (1.0 - np.exp(-t))
            worst = max(worst, np.abs(s.w.values - exact).max())
        # forward-Euler reaction: global error about |w0-1| * e^-1 * dt / 2
        assert worst < 1e-3
        assert worst == pytest.approx(0.9 * np.exp(-1.0) * 5e-4 / 2, rel=0.2)

    def test_saturated_source_level(self):
        eps = 0.5
        traj = self.run(eps=eps, T=4.0)
        target = 1.0 / (1.0 + eps)  # steady level of w' = -w + s/(1+eps*s)
        final = traj.snapshots[-1][1].w.values
        assert np.abs(final - (target + (0.1 - target) * np.exp(-4.0))).max() < 1e-3


class TestLogisticOracle:
    def test_single_cell_logistic(self):
        # pure ODE mode: u' = u(1-u), closed form u0 e^t/(1-u0+u0 e^t)
        g = Grid(cells=(1,), lengths=(1.0,))
        for u0 in (0.2, 1.0, 1.7):
            init = State(u=g.constant_field(u0), v=g.constant_field(0.0),
                         w=g.constant_field(0.0))
            params = ModelParams(theta=2.0, eps=0.0, dim_N=1)
            cfg = SolverConfig(cfl_safety=0.5, max_dt=1e-3)
            traj = simulate(init, params, cfg, T=3.0,
                            output_times=np.linspace(0.5, 3.0, 6))
            worst = 0.0
            for t, s in traj.snapshots:
                exact = u0 * np.exp(t) / (1.0 - u0 + u0 * np.exp(t))
                worst = max(worst, abs(float(s.u.values[0]) - exact))
            assert worst < 2e-3, f"u0={u0}: error {worst}"


class TestSimulate:
    def test_t_zero_single_snapshot(self):
        g = Grid(cells=(8,), lengths=(1.0,))
        init = bumpy_state(g)
        traj = simulate(init, PARAMS, SolverConfig(), T=0.0)
        assert len(traj.snapshots) == 1
        assert all(v == 0.0 for v in traj.accumulators.values())

    def test_zero_data_stays_zero(self):
        g = Grid(cells=(8, 8), lengths=(1.0, 1.0))
        zero = State(u=g.constant_field(0.0), v=g.constant_field(0.0),
                     w=g.constant_field(0.0))
        traj = simulate(zero, PARAMS, SolverConfig(max_dt=0.05), T=5.0,
                        output_times=[2.5, 5.0])
        assert traj.sup_series("mass_u") == 0.0
        assert traj.sup_series("mass_w") == 0.0
        assert all(v == 0.0 for v in traj.accumulators.values())

    def test_output_times_hit_exactly(self):
        g = Grid(cells=(16,), lengths=(1.0,))
        traj = simulate(bumpy_state(g), PARAMS, SolverConfig(max_dt=0.0013),
                        T=0.5, output_times=[0.1, 0.25, 0.3333, 0.5])
        assert [t for t, _ in traj.snapshots] == [0.0, 0.1, 0.25, 0.3333, 0.5]

    def test_positivity_and_monotone_time(self):
        g = Grid(cells=(24, 24), lengths=(1.0, 1.0))
        traj = simulate(bumpy_state(g), PARAMS, SolverConfig(max_dt=0.004),
                        T=0.5, output_times=[0.5])
        assert np.all(np.diff(traj.times) > 0)
        for name in ("min_u", "min_v", "min_w"):
            assert traj.series[name].min() >= 0.0

    def test_determinism(self):
        g = Grid(cells=(16, 16), lengths=(1.0, 1.0))
        cfg = SolverConfig(max_dt=0.004)
        t1 = simulate(bumpy_state(g), PARAMS, cfg, T=0.3, output_times=[0.3])
        t2 = simulate(bumpy_state(g), PARAMS, cfg, T=0.3, output_times=[0.3])
        assert np.array_equal(t1.snapshots[-1][1].u.values,
                              t2.snapshots[-1][1].u.values)
        assert np.array_equal(t1.times, t2.times)

    def test_cg_matches_spectral(self):
        g = Grid(cells=(16,), lengths=(1.0,))
        cfg_s = SolverConfig(max_dt=0.004)
        cfg_c = SolverConfig(max_dt=0.004, linear_solver="cg",
                             linear_solver_tol=1e-13)
        ts = simulate(bumpy_state(g), PARAMS, cfg_s, T=0.2, output_times=[0.2])
        tc = simulate(bumpy_state(g), PARAMS, cfg_c, T=0.2, output_times=[0.2])
        gap = np.abs(ts.snapshots[-1][1].u.values
                     - tc.snapshots[-1][1].u.values).max()
        assert gap < 1e-8

    def test_comparison_bound_constant_u(self):
        # spatially constant u with v = 0: mass change is dt * int(u - u^theta)
        g = Grid(cells=(8,), lengths=(1.0,))
        init = State(u=g.constant_field(1.5), v=g.constant_field(0.0),
                     w=g.constant_field(0.0))
        params = ModelParams(theta=2.0, eps=0.0, dim_N=1)
        traj = simulate(init, params, SolverConfig(max_dt=1e-3), T=0.1,
                        output_times=[0.1])
        masses = traj.series["mass_u"]
        series_u = traj.series["max_u"]  # constant in space, so max == value
        for n in range(len(traj.dts)):
            u_n = series_u[n]
            bound = traj.dts[n] * (u_n - u_n ** 2) * g.measure
            assert masses[n + 1] - masses[n] <= bound + 1e-12

    def test_refinement_decreases_l1_gap(self):
        params = ModelParams(theta=2.0, eps=0.25, dim_N=1)
        diffs = []
        trajs = []
        for n, mdt in ((64, 0.016), (128, 0.004), (256, 0.001)):
            g = Grid(cells=(n,), lengths=(1.0,))
            trajs.append(simulate(bumpy_state(g), params, SolverConfig(max_dt=mdt),
                                  T=0.5, output_times=np.linspace(0.1, 0.5, 5)))
        from chemocert import restrict_values
        for a, b in zip(trajs[:-1], trajs[1:]):
            ts = a.snapshot_times()
            gap = [np.abs(sa.u.values - restrict_values(b.grid, a.grid, sb.u.values)).sum()
                   * a.grid.cell_volume
                   for (_, sa), (_, sb) in zip(a.snapshots, b.snapshots)]
            diffs.append(float(np.trapezoid(gap, ts)))
        assert diffs[1] < diffs[0]
        assert np.log2(diffs[0] / diffs[1]) >= 0.9
