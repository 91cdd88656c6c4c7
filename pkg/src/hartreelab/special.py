"""Approximation ladder for the two-sided threshold solutions.

Writing a solution near the soliton as u = e^{it}(Q + h), the remainder h
solves dh/dt + (generator) h = i R(h) with R superlinear.  The ladder
ansatz V_k(t) = sum_{j<=k} e^{-j e0 t} Z_j starts from Z_1 = A (Y1 + i Y2)
and gains one order of decay per rung: the e^{-(k+1) e0 t} coefficient
F_{k+1} of -i R(V_k) is extracted by multi-time exponential least squares
and inverted through the resolvent, Z_{k+1} = -(generator - (k+1) e0)^{-1}
F_{k+1}.  Seeding the flow with Q + V_k(t0) at large t0 gives initial data
just above (A = +1) or just below (A = -1) the soliton gradient norm.

Complex radial profiles are plain complex arrays on the grid nodes; the
pair convention is h = h1 + i h2 <-> (h1, h2).
"""

from dataclasses import dataclass

import numpy as np

from .fields import Field, radial_kernel_matrix, gradient_norm_sq, l2_norm_sq
from . import linearized as lin


# ---------------------------------------------------------------------------
# scalar expansion functions

def J_func(z, p):
    """|1+z|^p minus its linearization at z = 0 (real-valued)."""
    z = np.asarray(z, dtype=complex)
    return np.abs(1.0 + z) ** p - (1.0 + p * z.real)


def K_func(z, p):
    """|1+z|^{p-2}(1+z) minus its linearization at z = 0."""
    z = np.asarray(z, dtype=complex)
    w = 1.0 + z
    return np.abs(w) ** (p - 2.0) * w - (1.0 + 0.5 * p * z
                                         + 0.5 * (p - 2.0) * np.conj(z))


# ---------------------------------------------------------------------------
# nonlinear remainder and the linear potential term

def _conv(ops):
    # cached on the grid, so repeated lookups are cheap
    return radial_kernel_matrix(ops.grid, ops.params.gammaf, ell=0)


def R_nonlinear(h, ops):
    """Full Hartree nonlinearity at Q + h minus its constant and
    linear-in-(h, conj h) parts; superlinear in h by construction."""
    p = ops.params.pf
    Q = ops.Q.values
    CW = _conv(ops)
    u = Q + np.asarray(h, dtype=complex)
    au = np.abs(u)
    full = (CW @ au ** p) * au ** (p - 2.0) * u
    local = ops.pot * (Q ** (p - 1.0)
                       + 0.5 * (p - 2.0) * Q ** (p - 2.0) * np.conj(h)
                       + 0.5 * p * Q ** (p - 2.0) * h)
    cross = (CW @ (p * Q ** (p - 1.0) * np.real(h))) * Q ** (p - 1.0)
    return full - local - cross


def V_linear(h, ops):
    """The linear part split off by R_nonlinear: for real h this is
    (-Lap+1)h - L+ h, for purely imaginary h it is (-Lap+1)h - L- h."""
    p = ops.params.pf
    Q = ops.Q.values
    CW = _conv(ops)
    h = np.asarray(h, dtype=complex)
    return (p * (CW @ (Q ** (p - 1.0) * np.real(h))) * Q ** (p - 1.0)
            + ops.pot * ((0.5 * p - 1.0) * np.conj(h) + 0.5 * p * h)
            * Q ** (p - 2.0))


# ---------------------------------------------------------------------------
# quadratic coefficient by Richardson-extrapolated second differences

def _cnorm(grid, v):
    return float(np.sqrt(np.sum(grid.weights * np.abs(v) ** 2)))


def quadratic_coefficient(Z, ops, eps=1e-3, rtol=1e-6):
    """Coefficient of the square of a small amplitude in -i R(a Z).

    Central second differences kill the odd orders, two Richardson levels
    kill the quartic, and the two levels are compared to certify the step
    size.  The -i rotation matches the ladder convention (coefficients of
    -i R are what the resolvent inverts).  At p = 2 the remainder is a
    polynomial and the quadratic part is taken exactly instead.
    """
    Z = np.asarray(Z, dtype=complex)
    if np.abs(Z).max() == 0.0:
        return np.zeros_like(Z)
    p = ops.params.pf
    if p == 2.0:
        Q = ops.Q.values
        CW = _conv(ops)
        exact = (2.0 * (CW @ (Q * Z.real)) * Z
                 + (CW @ np.abs(Z) ** 2) * Q)
        return -1j * exact

    def half_sum(e):
        return (R_nonlinear(e * Z, ops) + R_nonlinear(-e * Z, ops)) \
            / (2.0 * e * e)

    d1, d2, d3 = half_sum(eps), half_sum(eps / 2.0), half_sum(eps / 4.0)
    f_coarse = (4.0 * d2 - d1) / 3.0
    f_fine = (4.0 * d3 - d2) / 3.0
    scale = max(_cnorm(ops.grid, f_fine), 1e-300)
    if _cnorm(ops.grid, f_fine - f_coarse) > rtol * scale:
        raise RuntimeError("quadratic coefficient extrapolation did not "
                           f"settle at step size {eps}; shrink it")
    return -1j * f_fine


# ---------------------------------------------------------------------------
# the ladder

@dataclass(frozen=True)
class ApproxSolution:
    order: int
    A: float
    e0: float
    Z: tuple                  # complex arrays; Z[j-1] multiplies e^{-j e0 t}
    grid: object
    decay_ratios: tuple       # max |Z_j| / Q on the resolved part of the mesh


def eval_V(approx, t):
    """V_k(t) = sum_j e^{-j e0 t} Z_j as a complex array."""
    return sum(np.exp(-j * approx.e0 * t) * Zj
               for j, Zj in enumerate(approx.Z, start=1))


def eval_dtV(approx, t):
    return sum(-j * approx.e0 * np.exp(-j * approx.e0 * t) * Zj
               for j, Zj in enumerate(approx.Z, start=1))


def _decay_ratio(Q, Z):
    mask = Q > 1e-10 * Q.max()
    return float(np.max(np.abs(Z[mask]) / Q[mask]))


def _entry_time(ratios, e0, target=0.1):
    """Smallest T (on a coarse ladder) with sum_j ratio_j e^{-j e0 T}
    below target, so the profile-relative amplitude is inside the
    expansion regime."""
    T = 0.0
    step = 0.1 / e0
    while sum(rat * np.exp(-(j + 1) * e0 * T)
              for j, rat in enumerate(ratios)) > target:
        T += step
        if T > 200.0 / e0:
            raise RuntimeError("expansion regime unreachable: the ladder "
                               "coefficients are too large relative to Q")
    return T


def extract_coefficients(approx, ops, j_max, n_times=8, spacing=0.4):
    """Exponential-basis least squares for the coefficients of -i R(V_k).

    Samples -i R at n_times times past the expansion-regime entry and fits
    sum_{j=2}^{j_max} e^{-j e0 t} F_j; returns {j: F_j}.  The sample times
    are spread by spacing / e0 so the scaled basis stays well conditioned.
    """
    e0 = approx.e0
    T = _entry_time(approx.decay_ratios, e0)
    times = T + (spacing / e0) * np.arange(n_times)
    G = np.stack([-1j * R_nonlinear(eval_V(approx, t), ops) for t in times])
    js = np.arange(2, j_max + 1)
    # columns e^{-j e0 t} = e^{-j e0 T} s^j with s <= 1; fit in the scaled
    # variable and undo the T-dependent factor per column afterwards
    s = np.exp(-e0 * (times - T))
    M = s[:, None] ** js[None, :]
    coef, *_ = np.linalg.lstsq(M, G, rcond=None)
    return {int(j): coef[i] * np.exp(j * e0 * T) for i, j in enumerate(js)}


def build_approx(A, k_max, sd, ops):
    """Ladder of order k_max in {1, 2, 3} starting from Z_1 = A (Y1+iY2)."""
    if k_max not in (1, 2, 3):
        raise ValueError("ladder order must be 1, 2 or 3")
    e0 = sd.e0
    Q = ops.Q.values
    Z1 = A * (sd.Y1.values + 1j * sd.Y2.values)
    Zs = [Z1]
    ratios = [_decay_ratio(Q, Z1)]
    approx = ApproxSolution(order=1, A=float(A), e0=e0, Z=(Z1,),
                            grid=ops.grid, decay_ratios=tuple(ratios))
    for k in range(1, k_max):
        if A == 0.0:
            Zs.append(np.zeros_like(Z1))
        else:
            # basis columns past the target order absorb the remainder,
            # which otherwise leaks ~1e-3 of itself into the target
            F = extract_coefficients(approx, ops, j_max=k + 3)[k + 1]
            g1, g2 = lin.resolvent_solve(ops, (k + 1) * e0,
                                         (F.real, F.imag), sd=sd)
            Zs.append(-(g1 + 1j * g2))
        ratios.append(_decay_ratio(Q, Zs[-1]))
        approx = ApproxSolution(order=k + 1, A=float(A), e0=e0,
                                Z=tuple(Zs), grid=ops.grid,
                                decay_ratios=tuple(ratios))
    return approx


# ---------------------------------------------------------------------------
# residual ladder diagnostics

def residual_norm(approx, ops, t):
    """|| dV/dt + (generator) V - i R(V) || at time t."""
    V = eval_V(approx, t)
    g1, g2 = lin.apply_generator(ops, V.real, V.imag)
    eps = eval_dtV(approx, t) + (g1 + 1j * g2) - 1j * R_nonlinear(V, ops)
    return _cnorm(ops.grid, eps)


def ladder_report(approx, ops, n_times=8, span=2.5):
    """Fitted decay rate of the residual for each truncation order.

    Returns {"orders", "rates", "expected_rates", "residuals"} where the
    expected rate at order k is (k+1) e0 and residuals are the norms at
    the start of the fit window.
    """
    e0 = approx.e0
    orders, rates, expected, res0 = [], [], [], []
    for k in range(1, approx.order + 1):
        sub = ApproxSolution(order=k, A=approx.A, e0=e0, Z=approx.Z[:k],
                             grid=approx.grid,
                             decay_ratios=approx.decay_ratios[:k])
        T = _entry_time(sub.decay_ratios, e0)
        times = T + np.linspace(0.0, span / e0, n_times)
        norms = np.array([residual_norm(sub, ops, t) for t in times])
        slope = np.polyfit(times, np.log(norms), 1)[0]
        orders.append(k)
        rates.append(float(-slope))
        expected.append((k + 1) * e0)
        res0.append(float(norms[0]))
    return {"orders": orders, "rates": rates, "expected_rates": expected,
            "residuals": res0}


# ---------------------------------------------------------------------------
# initial-data seeds

def seed_Qpm(sign, t0, k, approx, ops):
    """Initial field Q + V_k(t0) for the branch picked by sign.

    sign = +1 starts just above the soliton gradient norm, sign = -1 just
    below.  Returns (field, report) with the gradient-norm ratio and mass
    in the report.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    if float(sign) != approx.A:
        raise ValueError("ladder was built with A = %g, not %g"
                         % (approx.A, sign))
    if not 1 <= k <= approx.order:
        raise ValueError("k exceeds the built ladder order")
    sub = ApproxSolution(order=k, A=approx.A, e0=approx.e0, Z=approx.Z[:k],
                         grid=approx.grid,
                         decay_ratios=approx.decay_ratios[:k])
    u0 = ops.Q.values.astype(complex) + eval_V(sub, t0)
    field = Field(ops.grid, u0)
    gQ = gradient_norm_sq(ops.Q)
    report = {
        "sign": int(sign),
        "t0": float(t0),
        "order": int(k),
        "grad_norm_ratio": float(np.sqrt(gradient_norm_sq(field) / gQ)),
        "mass": l2_norm_sq(field),
        "mass_soliton": l2_norm_sq(ops.Q),
    }
    return field, report
