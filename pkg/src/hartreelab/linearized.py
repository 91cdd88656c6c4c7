"""Linearization around the ground state: the operators L+ and L-, the
matrix form of the full linearized generator, its (e0, Y1, Y2) eigendata,
the quadratic/bilinear forms, coercivity sampling, and resolvent solves.

All matrices are dense on the radial mesh; the discrete inner product is
<f, g> = sum_i w_i f_i g_i.  The raw kernel-matrix rows are the accurate
ones (entrywise symmetrization amplifies the near-origin quadrature defect
by 1/w), so the operators are stored raw and the quadratic/bilinear forms
are symmetrized by polarization instead.
"""

from dataclasses import dataclass, field as dc_field

import numpy as np
import scipy.linalg as sla

from .fields import Field, radial_kernel_matrix


# ---------------------------------------------------------------------------
# assembly

@dataclass(frozen=True)
class LinearizedOperators:
    grid: object
    params: object
    Q: Field                # ground state on the operator grid
    Lp: np.ndarray          # L+ dense
    Lm: np.ndarray          # L- dense
    pot: np.ndarray         # K * Q^p on the nodes

    @property
    def weights(self):
        return self.grid.weights


def assemble(gs, params, grid=None, ell=0):
    """Dense L+ and L- for the radial sector ell (ell = 0 by default).

    L+ h = (-Lap+1)h - p (K*(Q^{p-1}h)) Q^{p-1} - (p-1)(K*Q^p)Q^{p-2} h
    L- h = (-Lap+1)h - (K*Q^p)Q^{p-2} h
    (the local terms do not change between sectors; the Laplacian and the
    nonlocal kernel do).
    """
    Q = gs if isinstance(gs, Field) else gs.field
    if grid is None:
        grid = Q.grid
    if grid.key() != Q.grid.key():
        raise ValueError("operator grid must match the ground-state grid")
    p, g = params.pf, params.gammaf
    w = grid.weights
    Qv = Q.values

    lap = grid.lap_dense(order=4, ell=ell)
    base = -lap + np.eye(grid.m)

    CW0 = radial_kernel_matrix(grid, g, ell=0)
    pot = CW0 @ Qv ** p

    loc = np.diag(pot * Qv ** (p - 2.0))
    Lm = base - loc

    CW = CW0 if ell == 0 else radial_kernel_matrix(grid, g, ell=ell)
    Dq = Qv ** (p - 1.0)
    nonlocal_term = p * Dq[:, None] * CW * Dq[None, :]
    Lp = base - nonlocal_term - (p - 1.0) * loc

    return LinearizedOperators(grid=grid, params=params, Q=Q,
                               Lp=Lp, Lm=Lm, pot=pot)


def apply_generator(ops, h1, h2):
    """The full linearized generator as a pair map: (h1, h2) ->
    (-L- h2, L+ h1), i.e. d/dt (h1, h2) = -(generator) in the flow."""
    return (-(ops.Lm @ h2), ops.Lp @ h1)


# ---------------------------------------------------------------------------
# forms

def _inner(ops, f, g):
    return float(np.sum(ops.weights * f * g))


def phi(ops, h):
    """Linearized energy 1/2 <L+ h1, h1> + 1/2 <L- h2, h2>."""
    h1, h2 = h
    return 0.5 * _inner(ops, ops.Lp @ h1, h1) + 0.5 * _inner(ops, ops.Lm @ h2, h2)


def bilinear_B(ops, g, h):
    """Polarization of phi: B(g,h) = 1/2 <L+ g1, h1> + 1/2 <L- g2, h2>,
    evaluated in the explicitly symmetrized form so B(g,h) = B(h,g) exactly
    and B(h,h) = phi(h)."""
    g1, g2 = g
    h1, h2 = h
    return 0.25 * (_inner(ops, ops.Lp @ g1, h1) + _inner(ops, g1, ops.Lp @ h1)
                   + _inner(ops, ops.Lm @ g2, h2) + _inner(ops, g2, ops.Lm @ h2))


# ---------------------------------------------------------------------------
# eigendata

@dataclass(frozen=True)
class SpectralData:
    e0: float
    Y1: Field
    Y2: Field
    residuals: tuple          # (|L+Y1 - e0 Y2|/|Y2|, |L-Y2 + e0 Y1|/|Y1|)
    B_value: float            # signed B(Y+, Y-) after |B| = 1 normalization
    negative_count: int       # negative eigenvalues of L-L+ beyond tolerance
    spectrum_bottom: tuple = dc_field(repr=False, default=())


def solve_e0(ops, census_tol=1e-4):
    """Most-negative eigenvalue -e0^2 of L-L+ in the radial sector.

    Y1 is the eigenvector, Y2 = L+Y1/e0; the pair is rescaled so that
    |B(Y+, Y-)| = |e0 <Y1, Y2>| = 1 and the sign of Y1 is fixed by
    int grad Q . grad Y1 > 0.
    """
    grid, w = ops.grid, ops.weights
    C = ops.Lm @ ops.Lp
    vals, vecs = np.linalg.eig(C)
    order = np.argsort(vals.real)
    bottom = vals[order[:6]]
    mu = vals[order[0]]
    if mu.real >= -census_tol:
        raise RuntimeError("no negative eigenvalue of L-L+ found; spectrum "
                           f"bottom: {np.round(bottom, 6)}")
    neg = int(np.sum(vals.real < -census_tol))

    # the dense eigensolve loses ~eps*|L-||L+| of eigenvector accuracy;
    # inverse iteration with matvec-chain Rayleigh updates recovers it
    mu = float(mu.real)
    y = vecs[:, order[0]].real.copy()
    y /= np.sqrt(np.sum(w * y ** 2))
    for _ in range(3):
        y = sla.lu_solve(sla.lu_factor(C - mu * np.eye(grid.m)), y)
        y /= np.sqrt(np.sum(w * y ** 2))
        Cy = ops.Lm @ (ops.Lp @ y)
        mu = float(np.sum(w * y * Cy) / np.sum(w * y * y))
    e0 = float(np.sqrt(-mu))
    Y1 = y
    dQ = grid.derivative(ops.Q.values)
    if np.sum(w * dQ * grid.derivative(Y1)) < 0:
        Y1 = -Y1
    Y2 = (ops.Lp @ Y1) / e0

    b = e0 * float(np.sum(w * Y1 * Y2))
    s = 1.0 / np.sqrt(abs(b))
    Y1, Y2 = s * Y1, s * Y2
    b = e0 * float(np.sum(w * Y1 * Y2))

    r1 = np.sqrt(np.sum(w * (ops.Lp @ Y1 - e0 * Y2) ** 2)
                 / np.sum(w * Y2 ** 2))
    r2 = np.sqrt(np.sum(w * (ops.Lm @ Y2 + e0 * Y1) ** 2)
                 / np.sum(w * Y1 ** 2))
    return SpectralData(e0=e0, Y1=Field(grid, Y1), Y2=Field(grid, Y2),
                        residuals=(float(r1), float(r2)), B_value=b,
                        negative_count=neg,
                        spectrum_bottom=tuple(np.round(bottom.real, 10)))


def eigenmode_pairs(sd):
    """(Y+, Y-) as real pairs: Y+ = (Y1, Y2), Y- = (Y1, -Y2)."""
    y1, y2 = sd.Y1.values, sd.Y2.values
    return (y1, y2), (y1, -y2)


def project_eigenmodes(ops, sd, h):
    """alpha_+ = B(h, Y-), alpha_- = B(h, Y+)."""
    yp, ym = eigenmode_pairs(sd)
    return bilinear_B(ops, h, ym), bilinear_B(ops, h, yp)


# ---------------------------------------------------------------------------
# kernel structure

def kernel_check(ops, census_tol=1e-4):
    """Residuals of the exact kernel directions and a near-zero census.

    L- annihilates Q (the phase mode); in the ell = 1 sector L+ annihilates
    dQ/dr (the translation modes).  The translation mode is certified by
    inverse iteration: psi is the near-null vector of the ell = 1 operator,
    its residual |L+ psi| is the discrete kernel eigenvalue, and the
    alignment with the finite-difference dQ/dr ties it to translations
    (the direct |L+ dQ| number is reported too, but it is limited by the
    accuracy of the nodal derivative near the origin, not by the operator).
    The census counts eigenvalues with |lambda| < census_tol per sector.
    """
    grid, w = ops.grid, ops.weights
    Q = ops.Q.values

    def rel_norm(res, ref):
        return float(np.sqrt(np.sum(w * res ** 2) / np.sum(w * ref ** 2)))

    r_phase = rel_norm(ops.Lm @ Q, Q)

    ops1 = assemble(ops.Q, ops.params, ops.grid, ell=1)
    dQ = grid.derivative(Q)
    dQ = dQ / np.sqrt(np.sum(w * dQ ** 2))
    lu = sla.lu_factor(ops1.Lp)
    psi = dQ.copy()
    for _ in range(3):
        psi = sla.lu_solve(lu, psi)
        psi /= np.sqrt(np.sum(w * psi ** 2))
    r_trans = float(np.sqrt(np.sum(w * (ops1.Lp @ psi) ** 2)))
    align = abs(float(np.sum(w * psi * dQ)))

    ev_Lm = np.linalg.eigvals(ops.Lm)
    ev_Lp = np.linalg.eigvals(ops.Lp)
    ev_Lp1 = np.linalg.eigvals(ops1.Lp)
    census = {
        "Lm_zero_modes": int(np.sum(np.abs(ev_Lm) < census_tol)),
        "Lp_zero_modes": int(np.sum(np.abs(ev_Lp) < census_tol)),
        "Lp_ell1_zero_modes": int(np.sum(np.abs(ev_Lp1) < census_tol)),
        "Lm_negative_modes": int(np.sum(ev_Lm.real < -census_tol)),
        "Lp_negative_modes": int(np.sum(ev_Lp.real < -census_tol)),
    }
    return {"phase_mode_residual": r_phase,
            "translation_mode_residual": r_trans,
            "translation_mode_alignment": align,
            "fd_translation_residual": rel_norm(ops1.Lp @ dQ, dQ),
            "census": census}


# ---------------------------------------------------------------------------
# non-negativity and coercivity sampling

def _h1_norm_sq(grid, h):
    w = grid.weights
    out = 0.0
    for comp in h:
        d = grid.derivative(comp)
        out += np.sum(w * (comp ** 2 + d ** 2))
    return float(out)


def _project_out(grid, v, direction):
    w = grid.weights
    return v - direction * (np.sum(w * direction * v)
                            / np.sum(w * direction * direction))


def _random_smooth(grid, rng):
    """Random superposition of off-center bumps, H^1-ish smooth."""
    r = grid.r
    out = np.zeros_like(r)
    for _ in range(4):
        c = rng.uniform(0.0, 6.0)
        wdt = rng.uniform(0.5, 2.5)
        out += rng.standard_normal() * np.exp(-((r - c) / wdt) ** 2)
    return out


def nonneg_and_coercivity_test(ops, sd, samples=120, seed=0):
    """Sampled lower bounds of phi(h)/|h|_{H1}^2 under three orthogonality
    recipes:

    lemma: h1 perp (K*Q^p)Q^{p-1}                     -> phi >= 0
    Gperp: lemma + h2 perp Q                          -> phi >= c > 0
    Gperp_prime: h2 perp Q, h1 perp Y2, h2 perp Y1    -> phi >= c > 0
    """
    if samples < 100:
        raise ValueError("need at least 100 samples for the statistics")
    grid = ops.grid
    rng = np.random.default_rng(seed)
    Q = ops.Q.values
    zdir = ops.pot * Q ** (ops.params.pf - 1.0)
    y1, y2 = sd.Y1.values, sd.Y2.values

    mins = {"lemma": np.inf, "Gperp": np.inf, "Gperp_prime": np.inf}
    for _ in range(samples):
        h1 = _random_smooth(grid, rng)
        h2 = _random_smooth(grid, rng)

        a1 = _project_out(grid, h1, zdir)
        ratios = {
            "lemma": ((a1, h2)),
            "Gperp": ((a1, _project_out(grid, h2, Q))),
            "Gperp_prime": ((_project_out(grid, h1, y2),
                             _project_out(grid, _project_out(grid, h2, Q), y1))),
        }
        for key, h in ratios.items():
            val = phi(ops, h) / _h1_norm_sq(grid, h)
            mins[key] = min(mins[key], val)

    # witnesses: phi vanishes along the eigenmodes (phi(Y+) = 2 a+ a- with
    # a-(Y+) = B(Y+,Y+) = 0) and goes negative along the pure-Y1 direction
    yp, _ = eigenmode_pairs(sd)
    return {"min_ratio": mins, "phi_eigenmode": phi(ops, yp),
            "phi_unprojected_negative": phi(ops, (y1, np.zeros_like(y1)))}


# ---------------------------------------------------------------------------
# resolvent

def resolvent_solve(ops, lam, f, sd=None, margin=1e-3, tol=1e-8):
    """Solve (generator - lam) g = f for a real pair f = (f1, f2).

    The generator maps (g1, g2) -> (-L- g2, L+ g1); its discrete real
    spectrum is {-e0, 0, e0}, so lam close to any of those is refused.
    """
    if sd is None:
        sd = solve_e0(ops)
    gap = min(abs(lam), abs(lam - sd.e0), abs(lam + sd.e0))
    if gap < margin:
        raise RuntimeError(f"lam = {lam} is within {margin} of the point "
                           f"spectrum {{0, +-{sd.e0:.6f}}}")
    m = ops.grid.m
    A = np.zeros((2 * m, 2 * m))
    A[:m, :m] = -lam * np.eye(m)
    A[:m, m:] = -ops.Lm
    A[m:, :m] = ops.Lp
    A[m:, m:] = -lam * np.eye(m)
    rhs = np.concatenate([f[0], f[1]])
    g = np.linalg.solve(A, rhs)
    res = np.linalg.norm(A @ g - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if res > tol:
        raise RuntimeError(f"resolvent solve residual {res:.3e} exceeds {tol}")
    return g[:m], g[m:]
