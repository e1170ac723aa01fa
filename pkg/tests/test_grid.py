import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chemocert import (
    Field,
    Grid,
    GridError,
    LinearSolverError,
    NonFiniteFieldError,
    face_gradient_values,
    gradient_values,
    integrate,
    integrate_values,
    laplacian_values,
    lp_norm,
    lp_norm_values,
    restrict_values,
    solve_diffusion,
)


class TestGridConstruction:
    def test_spacing_and_measure(self):
        g = Grid(cells=(8, 4), lengths=(2.0, 1.0))
        assert g.spacing == (0.25, 0.25)
        assert g.measure == 2.0
        assert g.cell_volume == pytest.approx(0.0625)

    def test_rejects_bad_axes(self):
        with pytest.raises(GridError):
            Grid(cells=(0,), lengths=(1.0,))
        with pytest.raises(GridError):
            Grid(cells=(4, 4), lengths=(-1.0, 1.0))
        with pytest.raises(GridError):
            Grid(cells=(4, 4, 4), lengths=(1.0, 1.0, 1.0))

    def test_field_shape_and_finiteness(self):
        g = Grid(cells=(4,), lengths=(1.0,))
        with pytest.raises(ValueError):
            Field(g, np.zeros(5))
        with pytest.raises(NonFiniteFieldError, match=r"cell \(2,\)"):
            Field(g, np.array([0.0, 1.0, np.nan, 2.0]))


class TestIntegrate:
    def test_constant_times_measure(self):
        g = Grid(cells=(10, 10), lengths=(2.0, 1.0))
        assert integrate(g.constant_field(3.0)) == pytest.approx(6.0)

    def test_zero_field(self):
        g = Grid(cells=(7,), lengths=(1.0,))
        assert integrate(g.constant_field(0.0)) == 0.0

    def test_linear_function_exact(self, grid_1d):
        # midpoint rule is exact for linears: closed form gives 1/2
        f = grid_1d.field(grid_1d.centers(0))
        assert integrate(f) == pytest.approx(0.5, abs=1e-14)

    def test_non_finite_rejected_with_index(self, grid_1d):
        vals = np.zeros(grid_1d.shape)
        vals[13] = np.inf
        with pytest.raises(NonFiniteFieldError, match=r"\(13,\)"):
            integrate_values(grid_1d, vals)

    @given(a=st.floats(-10, 10), b=st.floats(-10, 10))
    @settings(max_examples=30, deadline=None)
    def test_linearity(self, a, b):
        g = Grid(cells=(12,), lengths=(1.5,))
        rng = np.random.default_rng(42)
        f = rng.random(g.shape)
        h = rng.random(g.shape)
        lhs = integrate_values(g, a * f + b * h)
        rhs = a * integrate_values(g, f) + b * integrate_values(g, h)
        assert lhs == pytest.approx(rhs, abs=1e-12)


class TestLpNorm:
    def test_constant(self):
        g = Grid(cells=(5, 5), lengths=(1.0, 1.0))
        assert lp_norm(g.constant_field(2.0), 3.0) == pytest.approx(2.0)

    def test_zero(self):
        g = Grid(cells=(5,), lengths=(1.0,))
        for p in (1.0, 2.0, 3.7):
            assert lp_norm(g.constant_field(0.0), p) == 0.0

    def test_half_indicator(self):
        # direct summation oracle: 32 of 64 unit-mass cells set to one
        g = Grid(cells=(64,), lengths=(1.0,))
        vals = np.zeros(64)
        vals[:32] = 1.0
        expected = (np.sum(vals ** 2) * g.cell_volume) ** 0.5
        assert lp_norm_values(g, vals, 2.0) == pytest.approx(expected)
        assert expected == pytest.approx(np.sqrt(0.5))

    def test_fractional_p_and_l1(self, grid_1d):
        rng = np.random.default_rng(0)
        vals = rng.standard_normal(grid_1d.shape)
        assert lp_norm_values(grid_1d, vals, 1.0) == pytest.approx(
            integrate_values(grid_1d, np.abs(vals)))
        assert lp_norm_values(grid_1d, vals, 2.5) > 0

    def test_p_below_one_rejected(self, grid_1d):
        with pytest.raises(ValueError, match="p"):
            lp_norm(grid_1d.constant_field(1.0), 0.5)

    @given(scale=st.floats(1.0, 10.0))
    @settings(max_examples=20, deadline=None)
    def test_monotone_in_magnitude(self, scale):
        g = Grid(cells=(16,), lengths=(1.0,))
        rng = np.random.default_rng(3)
        vals = rng.random(g.shape)
        assert lp_norm_values(g, scale * vals, 2.0) >= lp_norm_values(g, vals, 2.0)


class TestGradient:
    def test_constant_is_exactly_zero(self):
        g = Grid(cells=(12, 9), lengths=(1.0, 2.0))
        for comp in gradient_values(g, np.full(g.shape, 4.2)):
            assert np.all(comp == 0.0)

    def test_linear_profile(self, grid_1d):
        comp, = gradient_values(grid_1d, grid_1d.centers(0))
        assert np.allclose(comp[1:-1], 1.0)
        assert comp[0] == pytest.approx(0.5)  # mirrored ghost at the wall

    def test_symmetric_bump_antisymmetric_gradient(self, grid_1d):
        x = grid_1d.centers(0)
        bump = np.exp(-((x - 0.5) ** 2) / 0.01)
        comp, = gradient_values(grid_1d, bump)
        assert np.allclose(comp, -comp[::-1], atol=1e-13)

    def test_single_cell_axis_zero(self):
        g = Grid(cells=(1,), lengths=(1.0,))
        comp, = gradient_values(g, np.array([3.0]))
        assert comp[0] == 0.0

    def test_face_gradient_no_flux_boundaries(self, grid_2d):
        rng = np.random.default_rng(5)
        vals = rng.random(grid_2d.shape)
        gx, gy = face_gradient_values(grid_2d, vals)
        assert np.all(gx[0, :] == 0.0) and np.all(gx[-1, :] == 0.0)
        assert np.all(gy[:, 0] == 0.0) and np.all(gy[:, -1] == 0.0)


class TestLaplacian:
    def test_constant_zero(self, grid_2d):
        assert np.all(laplacian_values(grid_2d, np.full(grid_2d.shape, 1.7)) == 0.0)

    def test_quadratic_interior(self, grid_1d):
        x = grid_1d.centers(0)
        lap = laplacian_values(grid_1d, x ** 2)
        assert np.allclose(lap[1:-1], 2.0, atol=1e-10)

    def test_zero_total_mass_random(self, grid_2d):
        rng = np.random.default_rng(11)
        vals = rng.random(grid_2d.shape)
        total = integrate_values(grid_2d, laplacian_values(grid_2d, vals))
        scale = lp_norm_values(grid_2d, vals, 2.0)
        assert abs(total) <= 1e-12 * max(1.0, scale)


class TestDiffusionSolve:
    def test_spectral_solves_stencil(self, grid_2d):
        rng = np.random.default_rng(1)
        b = rng.random(grid_2d.shape)
        x = solve_diffusion(grid_2d, b, 0.02)
        res = x - 0.02 * laplacian_values(grid_2d, x) - b
        assert np.abs(res).max() < 1e-12

    def test_cg_matches_spectral(self, grid_2d):
        rng = np.random.default_rng(2)
        b = rng.random(grid_2d.shape)
        xs = solve_diffusion(grid_2d, b, 0.05)
        xc = solve_diffusion(grid_2d, b, 0.05, method="cg", tol=1e-13)
        assert np.abs(xs - xc).max() < 1e-10

    def test_mass_conserved(self, grid_2d):
        rng = np.random.default_rng(3)
        b = rng.random(grid_2d.shape)
        x = solve_diffusion(grid_2d, b, 0.1)
        assert x.sum() == pytest.approx(b.sum(), abs=1e-11)

    def test_tau_zero_identity(self, grid_1d):
        b = np.arange(64, dtype=float)
        assert np.array_equal(solve_diffusion(grid_1d, b, 0.0), b)

    def test_cg_nonconvergence_reports_iterations(self, grid_2d):
        rng = np.random.default_rng(4)
        b = rng.random(grid_2d.shape)
        with pytest.raises(LinearSolverError, match="2 iterations"):
            solve_diffusion(grid_2d, b, 5.0, method="cg", tol=1e-14, max_iter=2)

    def test_unknown_method(self, grid_1d):
        with pytest.raises(ValueError, match="unknown"):
            solve_diffusion(grid_1d, np.zeros(64), 0.1, method="lu")


class TestRestriction:
    def test_block_average_2d(self):
        fine = Grid(cells=(4, 4), lengths=(1.0, 1.0))
        coarse = Grid(cells=(2, 2), lengths=(1.0, 1.0))
        vals = np.arange(16, dtype=float).reshape(4, 4)
        out = restrict_values(fine, coarse, vals)
        assert out[0, 0] == pytest.approx(vals[:2, :2].mean())
        assert out[1, 1] == pytest.approx(vals[2:, 2:].mean())

    def test_domain_mismatch_rejected(self):
        fine = Grid(cells=(4,), lengths=(2.0,))
        coarse = Grid(cells=(2,), lengths=(1.0,))
        with pytest.raises(GridError):
            restrict_values(fine, coarse, np.zeros(4))
