"""Grid, operator, and convolution-engine checks against analytic oracles."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hartreelab.fields import (RadialGrid, BoxGrid, Field, field_from_func,
                               l2_norm_sq, gradient_norm_sq, save_snapshot,
                               load_snapshot, riesz_multiplier_constant,
                               riesz_convolve, riesz_convolve_radial,
                               riesz_convolve_box, radial_kernel_matrix,
                               riesz_gaussian_oracle)
from hartreelab._radial_kernel import closed_form_W, quad_W


# -- shared grids (kernel matrices are cached on the grid objects) --

@pytest.fixture(scope="module")
def rg3():
    return RadialGrid(3, 30.0, 1024)


@pytest.fixture(scope="module")
def rg5():
    return RadialGrid(5, 30.0, 1024)


@pytest.fixture(scope="module")
def bg3():
    return BoxGrid(3, 8.0, 96)


def gaussian(grid, width=1.0):
    return field_from_func(grid, lambda r: np.exp(-np.pi * r ** 2 / width ** 2))


# ---------------------------------------------------------------------------
# multiplier constant and frozen values

def test_multiplier_constant_frozen_values():
    assert riesz_multiplier_constant(3, 2.0) == pytest.approx(1.0 / np.pi, rel=1e-14)
    assert riesz_multiplier_constant(3, 1.0) == pytest.approx(np.pi, rel=1e-14)
    with pytest.raises(ValueError):
        riesz_multiplier_constant(3, 3.0)


def test_gaussian_oracle_value_at_origin():
    # int |y|^{-2} e^{-pi |y|^2} dy = 4 pi int_0^inf e^{-pi s^2} ds = 2 pi
    val = riesz_gaussian_oracle(3, 1.0, [0.0], 1.0)[0]
    assert val == pytest.approx(2.0 * np.pi, rel=1e-10)


def test_gaussian_oracle_erf_closed_form():
    # Newtonian potential of the unit-mass Gaussian: (|x|^{-1} * g)(r)
    # = erf(sqrt(pi) r)/r in three dimensions
    from scipy.special import erf
    r = np.array([0.25, 0.5, 2.0, 6.0])
    exact = erf(np.sqrt(np.pi) * r) / r
    assert np.allclose(riesz_gaussian_oracle(3, 2.0, r, 1.0), exact,
                       rtol=1e-10, atol=0)


# ---------------------------------------------------------------------------
# angular kernel: closed form vs independent quadrature (odd N)

@pytest.mark.parametrize("N,gam,ell", [(3, 1.0, 0), (3, 2.0, 0), (3, 1.5, 1),
                                       (5, 2.0, 0), (5, 2.0, 2)])
def test_closed_form_matches_angular_quadrature(N, gam, ell):
    rng = np.random.default_rng(7)
    r = rng.uniform(0.2, 8.0, size=40)
    s = rng.uniform(0.2, 8.0, size=40)
    cf = closed_form_W(r, s, N, gam, ell=ell)
    qw = quad_W(r, s, N, gam, ell=ell, levels=20, nodes=16)
    assert np.max(np.abs(cf - qw) / np.abs(qw)) < 1e-8


# ---------------------------------------------------------------------------
# radial convolution engine

@pytest.mark.parametrize("N,gam", [(3, 1.0), (3, 2.0), (5, 2.0), (5, 1.0)])
def test_radial_engine_vs_oracle(N, gam, rg3, rg5):
    grid = rg3 if N == 3 else rg5
    f = gaussian(grid)
    out = riesz_convolve(f, gam).values
    ex = riesz_gaussian_oracle(N, gam, grid.r, 1.0)
    assert np.max(np.abs(out - ex)) / np.max(np.abs(ex)) < 1e-5


def test_radial_engine_even_dimension():
    grid = RadialGrid(2, 20.0, 256)
    f = gaussian(grid)
    out = riesz_convolve(f, 1.0).values
    ex = riesz_gaussian_oracle(2, 1.0, grid.r, 1.0)
    assert np.max(np.abs(out - ex)) / np.max(np.abs(ex)) < 1e-4


def test_radial_engine_resolution_refinement():
    errs = []
    for m in (256, 512):
        grid = RadialGrid(3, 20.0, m)
        out = riesz_convolve(gaussian(grid), 1.0).values
        ex = riesz_gaussian_oracle(3, 1.0, grid.r, 1.0)
        errs.append(np.max(np.abs(out - ex)) / np.max(np.abs(ex)))
    assert errs[1] < errs[0]
    assert errs[1] < 1e-5


def test_radial_convolution_linearity(rg3):
    rng = np.random.default_rng(3)
    f = rng.standard_normal(rg3.m) * np.exp(-rg3.r)
    g = rng.standard_normal(rg3.m) * np.exp(-rg3.r)
    a, b = 1.7, -0.4
    lhs = riesz_convolve(Field(rg3, a * f + b * g), 1.0).values
    rhs = (a * riesz_convolve(Field(rg3, f), 1.0).values
           + b * riesz_convolve(Field(rg3, g), 1.0).values)
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-12 * np.max(np.abs(lhs)))


def test_radial_potential_positivity(rg3, rg5):
    rng = np.random.default_rng(11)
    for grid in (rg3, rg5):
        f = np.abs(rng.standard_normal(grid.m)) * np.exp(-0.5 * grid.r)
        pot = riesz_convolve(Field(grid, f), 1.0).values
        assert pot.min() > 0


# ---------------------------------------------------------------------------
# Cartesian convolution engine

def test_box_engine_vs_oracle_multiplier_route(bg3):
    # physical-kernel route (engine) vs multiplier route (oracle) on e^{-pi|x|^2}
    f = gaussian(bg3)
    out = riesz_convolve(f, 1.0).values
    c = bg3.n // 2
    line = out[:, c, c]
    ex = riesz_gaussian_oracle(3, 1.0, np.abs(bg3.x1), 1.0)
    assert np.max(np.abs(line - ex)) / np.max(np.abs(ex)) < 1e-6


def test_box_engine_2d_and_1d():
    for N, gam, n in [(2, 1.0, 128), (1, 0.5, 256)]:
        grid = BoxGrid(N, 8.0, n)
        out = riesz_convolve(gaussian(grid), gam).values
        c = n // 2
        line = out[(slice(None),) + (c,) * (N - 1)]
        ex = riesz_gaussian_oracle(N, gam, np.abs(grid.x1), 1.0)
        assert np.max(np.abs(line - ex)) / np.max(np.abs(ex)) < 1e-6


def test_box_output_radially_symmetric(bg3):
    out = riesz_convolve(gaussian(bg3), 1.0).values
    for axes in [(1, 0, 2), (2, 1, 0)]:
        assert np.allclose(out, out.transpose(axes), rtol=0,
                           atol=1e-9 * np.max(np.abs(out)))


def test_radial_vs_cartesian_agreement(bg3):
    # same physical problem through both engines, compared on the box axis
    from scipy.interpolate import CubicSpline
    rad = RadialGrid(3, 15.0, 1024)
    vrad = riesz_convolve(gaussian(rad), 1.0).values
    spl = CubicSpline(rad.r, vrad)
    out = riesz_convolve(gaussian(bg3), 1.0).values
    c = bg3.n // 2
    radii = np.abs(bg3.x1)
    sel = radii > 0.1
    diff = np.abs(out[:, c, c][sel] - spl(radii[sel]))
    assert diff.max() / np.max(np.abs(vrad)) < 1e-5


def test_box_potential_positivity():
    grid = BoxGrid(2, 8.0, 96)
    rng = np.random.default_rng(5)
    f = np.abs(rng.standard_normal(grid.shape)) * np.exp(-grid.rr())
    pot = riesz_convolve(Field(grid, f), 1.0).values
    assert pot.min() > 0


# ---------------------------------------------------------------------------
# grids and operators

def test_radial_integrate_gaussian(rg3, rg5):
    # int e^{-pi r^2} = 1 in every dimension
    for grid in (rg3, rg5):
        assert grid.integrate(gaussian(grid).values) == pytest.approx(1.0, abs=1e-12)


def test_box_integrate_and_parseval(bg3):
    f = gaussian(bg3)
    assert l2_norm_sq(f) == pytest.approx(2.0 ** (-3 / 2.0), rel=1e-10)
    # Parseval: spectral gradient energy vs analytic int |grad g|^2 = 3/2 * ...
    # for g = e^{-pi r^2}: int |grad g|^2 = 3 pi / (2 sqrt(2) * 2) * 2 = ...
    direct = sum(bg3.integrate(np.abs(d) ** 2) for d in bg3.gradient(f.values))
    assert gradient_norm_sq(f) == pytest.approx(float(direct.real), rel=1e-12)


def test_gradient_sq_gaussian_analytic(rg3):
    # int |grad e^{-pi r^2}|^2 dx = 4 pi^2 int r^2 e^{-2 pi r^2} dx = 3 pi/(2 sqrt 2)
    ref = 3.0 * np.pi / (2.0 * np.sqrt(2.0))
    assert gradient_norm_sq(gaussian(rg3)) == pytest.approx(ref, rel=1e-7)


def test_radial_laplacian_weighted_symmetry(rg3, rg5):
    for grid, m in ((rg3, 1024), (rg5, 1024)):
        sub = RadialGrid(grid.N, grid.r_max, 256)   # dense matrix, small m
        M = sub.lap_dense(order=4)
        WM = sub.weights[:, None] * M
        assert np.max(np.abs(WM - WM.T)) / np.max(np.abs(WM)) < 1e-10


def test_radial_laplacian_accuracy(rg3):
    u = gaussian(rg3).values
    lu = rg3.lap_apply(u, order=4)
    r = rg3.r
    exact = (4 * np.pi ** 2 * r ** 2 - 6 * np.pi) * np.exp(-np.pi * r ** 2)
    assert np.max(np.abs(lu - exact)) < 1e-3


def test_lap_dense_matches_lap_apply():
    grid = RadialGrid(5, 20.0, 200)
    u = np.exp(-grid.r ** 2 / 3.0) * (1 + grid.r)
    assert np.allclose(grid.lap_dense(order=4) @ u, grid.lap_apply(u, order=4),
                       rtol=0, atol=1e-9)


def test_shifted_solver_inverts_operator(rg3):
    alpha, beta = 1.3, 0.7 + 0.2j
    u = gaussian(rg3).values.astype(complex)
    solve = rg3.shifted_solver(alpha, beta)
    rhs = alpha * u - beta * rg3.lap_apply(u, order=4)
    assert np.max(np.abs(solve(rhs) - u)) < 1e-11


def test_radial_derivative_accuracy(rg3):
    u = gaussian(rg3).values
    du = rg3.derivative(u)
    exact = -2 * np.pi * rg3.r * np.exp(-np.pi * rg3.r ** 2)
    # error concentrates at the origin where the ghost value is extrapolated
    assert np.max(np.abs(du - exact)) < 1e-5
    assert np.max(np.abs(du - exact)[8:]) < 1e-6


def test_box_shift_is_spectral(bg3):
    f = gaussian(bg3, width=1.4)
    delta = (0.3, -0.2, 0.15)
    shifted = bg3.shift(f.values, delta).real
    x, y, z = bg3.coords()
    rr2 = (x + delta[0]) ** 2 + (y + delta[1]) ** 2 + (z + delta[2]) ** 2
    assert np.max(np.abs(shifted - np.exp(-np.pi * rr2 / 1.4 ** 2))) < 1e-9


# ---------------------------------------------------------------------------
# snapshot round trip

def test_snapshot_roundtrip_radial(tmp_path, rg3):
    f = Field(rg3, gaussian(rg3).values * (1 + 0.5j))
    save_snapshot(f, tmp_path / "state.bin", tag="unit")
    g, meta = load_snapshot(tmp_path / "state.bin")
    assert np.array_equal(g.values, f.values)
    assert meta["kind"] == "radial" and meta["m"] == rg3.m
    assert meta["tag"] == "unit" and meta["N"] == 3


def test_snapshot_roundtrip_box(tmp_path):
    grid = BoxGrid(2, 6.0, 32)
    rng = np.random.default_rng(1)
    f = Field(grid, rng.standard_normal(grid.shape)
              + 1j * rng.standard_normal(grid.shape))
    save_snapshot(f, tmp_path / "state.bin")
    g, meta = load_snapshot(tmp_path / "state.bin")
    assert np.array_equal(g.values, f.values)
    assert g.grid.L == grid.L and g.grid.n == grid.n


# ---------------------------------------------------------------------------
# property checks

@settings(deadline=None, max_examples=20)
@given(amp=st.floats(0.1, 3.0), width=st.floats(0.5, 3.0),
       gam=st.floats(0.3, 2.5))
def test_convolution_of_positive_data_is_positive(amp, width, gam):
    grid = RadialGrid(3, 20.0, 256)
    f = Field(grid, amp * np.exp(-np.pi * grid.r ** 2 / width ** 2))
    assert riesz_convolve(f, gam).values.min() > 0


@settings(deadline=None, max_examples=15)
@given(width=st.floats(0.7, 2.5), gam=st.floats(0.5, 2.5))
def test_radial_engine_tracks_oracle_for_other_widths(width, gam):
    grid = RadialGrid(3, 25.0, 512)
    f = Field(grid, np.exp(-np.pi * grid.r ** 2 / width ** 2))
    out = riesz_convolve(f, gam).values
    ex = riesz_gaussian_oracle(3, gam, grid.r, width)
    assert np.max(np.abs(out - ex)) / np.max(np.abs(ex)) < 3e-4
