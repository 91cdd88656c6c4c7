"""Nonlinear remainder, scalar expansion functions, approximation ladder,
and two-sided seed checks."""

import numpy as np
import pytest

from hartreelab.params import make_params
from hartreelab.fields import RadialGrid, radial_kernel_matrix
from hartreelab import ground_state as gsm
from hartreelab import linearized as lin
from hartreelab import special as sp


@pytest.fixture(scope="module")
def p331():
    return make_params(3, 3, 1)


@pytest.fixture(scope="module")
def p522():
    return make_params(5, 2, 2)


@pytest.fixture(scope="module")
def sys331(p331):
    gs = gsm.solve_ground_state(p331, RadialGrid(3, 15.0, 1024))
    ops = lin.assemble(gs, p331)
    return gs, ops, lin.solve_e0(ops)


@pytest.fixture(scope="module")
def sys522(p522):
    gs = gsm.solve_ground_state(p522, RadialGrid(5, 20.0, 1024))
    ops = lin.assemble(gs, p522)
    return gs, ops, lin.solve_e0(ops)


@pytest.fixture(scope="module")
def ladder331(sys331):
    _, ops, sd = sys331
    return sp.build_approx(1.0, 3, sd, ops)


@pytest.fixture(scope="module")
def ladder522(sys522):
    _, ops, sd = sys522
    return sp.build_approx(1.0, 3, sd, ops)


def _bump(grid, complex_part=True):
    r = grid.r
    out = np.exp(-((r - 2.0) / 1.5) ** 2).astype(complex)
    if complex_part:
        out *= (1.0 + 0.5j)
    return out


# ---------------------------------------------------------------------------
# scalar expansion functions

def test_JK_vanish_at_origin():
    for p in (2.0, 2.5, 3.0):
        assert sp.J_func(0.0, p) == 0.0
        assert sp.K_func(0.0, p) == 0.0


def test_JK_p2_closed_forms():
    rng = np.random.default_rng(0)
    z = rng.standard_normal(200) + 1j * rng.standard_normal(200)
    assert np.allclose(sp.J_func(z, 2.0), np.abs(z) ** 2, atol=1e-14)
    assert np.max(np.abs(sp.K_func(z, 2.0))) < 1e-14


def test_JK_lipschitz_sampled():
    # sampled Lipschitz constants over the unit disk stay bounded
    rng = np.random.default_rng(1)
    n = 10 ** 4
    z1 = (rng.uniform(-1, 1, n) + 1j * rng.uniform(-1, 1, n)) / np.sqrt(2)
    z2 = (rng.uniform(-1, 1, n) + 1j * rng.uniform(-1, 1, n)) / np.sqrt(2)
    p = 3.0
    dz = np.abs(z1 - z2)
    keep = dz > 1e-12
    z1, z2, dz = z1[keep], z2[keep], dz[keep]
    wJ = (np.abs(z1) + np.abs(z2)
          + np.abs(z1) ** (p - 1) + np.abs(z2) ** (p - 1)) * dz
    cJ = np.max(np.abs(sp.J_func(z1, p) - sp.J_func(z2, p)) / wJ)
    wK = (1.0 + np.abs(z1) + np.abs(z2)) * dz
    cK = np.max(np.abs(sp.K_func(z1, p) - sp.K_func(z2, p)) / wK)
    assert cJ < 10.0
    assert cK < 10.0


# ---------------------------------------------------------------------------
# nonlinear remainder and linear term

def test_R_vanishes_at_zero(sys331, sys522):
    for _, ops, _ in (sys331, sys522):
        z = np.zeros(ops.grid.m, dtype=complex)
        scale = np.abs(ops.pot).max()
        assert np.abs(sp.R_nonlinear(z, ops)).max() < 1e-13 * scale


def test_R_superlinear(sys331):
    _, ops, _ = sys331
    f = _bump(ops.grid)
    n = {e: sp._cnorm(ops.grid, sp.R_nonlinear(e * f, ops)) / e
         for e in (1e-2, 1e-3)}
    # quadratic leading order: the ratio drops by the amplitude factor
    assert n[1e-3] < 0.15 * n[1e-2]


def test_R_exact_expansion_p2(sys522):
    gs, ops, _ = sys522
    grid = ops.grid
    Q = gs.field.values
    CW = radial_kernel_matrix(grid, ops.params.gammaf, ell=0)
    h = 0.3 * _bump(grid)
    # at p = 2 the remainder is exactly quadratic plus cubic
    exact = (2.0 * (CW @ (Q * h.real)) * h
             + (CW @ np.abs(h) ** 2) * (Q + h))
    got = sp.R_nonlinear(h, ops)
    rel = sp._cnorm(grid, got - exact) / sp._cnorm(grid, exact)
    assert rel < 1e-12


def test_V_linear_consistent_with_operators(sys331):
    _, ops, _ = sys331
    grid = ops.grid
    base = -grid.lap_dense(order=4) + np.eye(grid.m)
    f = _bump(grid)
    scale = sp._cnorm(grid, ops.Lp @ f.real)
    # real input reproduces the first operator
    d = base @ f.real - sp.V_linear(f.real, ops).real - ops.Lp @ f.real
    assert sp._cnorm(grid, d) < 1e-10 * scale
    # purely imaginary input reproduces the second
    d = base @ f.imag - sp.V_linear(1j * f.imag, ops).imag - ops.Lm @ f.imag
    assert sp._cnorm(grid, d) < 1e-10 * scale


def test_V_linear_real_linearity(sys331):
    _, ops, _ = sys331
    grid = ops.grid
    rng = np.random.default_rng(2)
    h1 = _bump(grid)
    h2 = np.exp(-((grid.r - 4.0) / 2.0) ** 2) * (0.3 - 1.2j)
    a, b = rng.standard_normal(2)
    lhs = sp.V_linear(a * h1 + b * h2, ops)
    rhs = a * sp.V_linear(h1, ops) + b * sp.V_linear(h2, ops)
    assert sp._cnorm(grid, lhs - rhs) < 1e-12 * sp._cnorm(grid, rhs)


# ---------------------------------------------------------------------------
# quadratic coefficient

def test_quadratic_coefficient_zero(sys331):
    _, ops, _ = sys331
    z = np.zeros(ops.grid.m, dtype=complex)
    assert np.abs(sp.quadratic_coefficient(z, ops)).max() == 0.0


def test_quadratic_coefficient_p2_fd_matches_exact(sys522):
    gs, ops, sd = sys522
    grid = ops.grid
    Z = 0.5 * (sd.Y1.values + 1j * sd.Y2.values)
    exact = sp.quadratic_coefficient(Z, ops)        # closed-form path
    # independent finite-difference route
    def half_sum(e):
        return (sp.R_nonlinear(e * Z, ops)
                + sp.R_nonlinear(-e * Z, ops)) / (2.0 * e * e)
    eps = 1e-3
    fd = -1j * (4.0 * half_sum(eps / 2.0) - half_sum(eps)) / 3.0
    rel = sp._cnorm(grid, fd - exact) / sp._cnorm(grid, exact)
    assert rel < 1e-8


def test_quadratic_coefficient_homogeneity(sys331, sys522):
    for _, ops, sd in (sys331, sys522):
        Z = 0.5 * (sd.Y1.values + 1j * sd.Y2.values)
        f1 = sp.quadratic_coefficient(Z, ops)
        f2 = sp.quadratic_coefficient(2.0 * Z, ops)
        rel = sp._cnorm(ops.grid, f2 - 4.0 * f1) / sp._cnorm(ops.grid, f2)
        assert rel < 1e-6


def test_quadratic_coefficient_step_size_error(sys331):
    _, ops, sd = sys331
    Z = sd.Y1.values + 1j * sd.Y2.values
    with pytest.raises(RuntimeError, match="step size"):
        sp.quadratic_coefficient(Z, ops, eps=10.0)


def test_quadratic_coefficient_two_routes(sys331, ladder331):
    # finite differences vs the exponential coefficient of -iR along the
    # order-1 ansatz: two independent extractions of the same field
    _, ops, sd = sys331
    ap1 = sp.ApproxSolution(order=1, A=1.0, e0=sd.e0,
                            Z=ladder331.Z[:1], grid=ops.grid,
                            decay_ratios=ladder331.decay_ratios[:1])
    fd = sp.quadratic_coefficient(ap1.Z[0], ops)
    ts = sp.extract_coefficients(ap1, ops, j_max=4)[2]
    rel = sp._cnorm(ops.grid, fd - ts) / sp._cnorm(ops.grid, ts)
    assert rel < 1e-4


def test_quadratic_coefficient_two_routes_p2(sys522, ladder522):
    _, ops, sd = sys522
    ap1 = sp.ApproxSolution(order=1, A=1.0, e0=sd.e0,
                            Z=ladder522.Z[:1], grid=ops.grid,
                            decay_ratios=ladder522.decay_ratios[:1])
    exact = sp.quadratic_coefficient(ap1.Z[0], ops)
    ts = sp.extract_coefficients(ap1, ops, j_max=4)[2]
    rel = sp._cnorm(ops.grid, exact - ts) / sp._cnorm(ops.grid, ts)
    assert rel < 1e-8


# ---------------------------------------------------------------------------
# ladder construction

def test_build_approx_rejects_bad_order(sys331):
    _, ops, sd = sys331
    with pytest.raises(ValueError, match="order"):
        sp.build_approx(1.0, 4, sd, ops)


def test_build_approx_zero_amplitude(sys331):
    _, ops, sd = sys331
    ap = sp.build_approx(0.0, 3, sd, ops)
    for Z in ap.Z:
        assert np.abs(Z).max() == 0.0


def test_first_rung_is_scaled_eigenmode(ladder331, sys331):
    _, _, sd = sys331
    Z1 = ladder331.Z[0]
    assert np.allclose(Z1.real, sd.Y1.values, atol=1e-14)
    assert np.allclose(Z1.imag, sd.Y2.values, atol=1e-14)


def test_ladder_tails_vanish(ladder331, ladder522):
    for ap in (ladder331, ladder522):
        for Z in ap.Z:
            assert np.abs(Z[-1]) < 1e-10 * np.abs(Z).max()


def test_eval_dtV_matches_time_derivative(ladder331):
    t, dt = 0.2, 1e-6
    fd = (sp.eval_V(ladder331, t + dt) - sp.eval_V(ladder331, t - dt)) \
        / (2.0 * dt)
    an = sp.eval_dtV(ladder331, t)
    assert np.abs(fd - an).max() < 1e-6 * np.abs(an).max()


def test_residual_rates_331(sys331, ladder331):
    _, ops, sd = sys331
    rep = sp.ladder_report(ladder331, ops)
    r1, r2, r3 = rep["rates"]
    assert abs(r1 - 2.0 * sd.e0) < 0.05 * 2.0 * sd.e0
    assert abs(r2 - 3.0 * sd.e0) < 0.10 * 3.0 * sd.e0
    assert r1 < r2 < r3
    assert rep["residuals"][0] > rep["residuals"][1] > rep["residuals"][2]


def test_residual_rates_522(sys522, ladder522):
    _, ops, sd = sys522
    rep = sp.ladder_report(ladder522, ops)
    r1, r2, _ = rep["rates"]
    assert abs(r1 - 2.0 * sd.e0) < 0.05 * 2.0 * sd.e0
    assert abs(r2 - 3.0 * sd.e0) < 0.10 * 3.0 * sd.e0


# ---------------------------------------------------------------------------
# seeds

def test_seed_gradient_split(sys331, sys522, ladder331, ladder522):
    for (gs, ops, sd), plus in ((sys331, ladder331), (sys522, ladder522)):
        minus = sp.build_approx(-1.0, 2, sd, ops)
        t0 = 2.0 / sd.e0
        _, rp = sp.seed_Qpm(1, t0, 2, plus, ops)
        _, rm = sp.seed_Qpm(-1, t0, 2, minus, ops)
        assert rp["grad_norm_ratio"] > 1.0
        assert rm["grad_norm_ratio"] < 1.0


def test_seed_mass_correction_order(sys331, ladder331):
    # the order-1 seed mass differs from the soliton mass at exactly the
    # squared-correction order e^{-2 e0 t0} (the linear term pairs Q with
    # the kernel of the second operator and cancels)
    gs, ops, sd = sys331
    t0a, t0b = 1.5 / sd.e0, 2.5 / sd.e0
    da = abs(sp.seed_Qpm(1, t0a, 1, ladder331, ops)[1]["mass"] - gs.mass)
    db = abs(sp.seed_Qpm(1, t0b, 1, ladder331, ops)[1]["mass"] - gs.mass)
    rate = np.log(da / db) / (t0b - t0a)
    assert rate == pytest.approx(2.0 * sd.e0, rel=0.02)


def test_seed_preconditions(sys331, ladder331):
    _, ops, _ = sys331
    with pytest.raises(ValueError, match="sign"):
        sp.seed_Qpm(2, 1.0, 1, ladder331, ops)
    with pytest.raises(ValueError, match="A ="):
        sp.seed_Qpm(-1, 1.0, 1, ladder331, ops)
    with pytest.raises(ValueError, match="order"):
        sp.seed_Qpm(1, 1.0, 5, ladder331, ops)
