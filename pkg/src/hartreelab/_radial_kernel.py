"""Angular kernel machinery for the radial Riesz convolution.

For a radial function f on R^N the convolution with |x|^{-lam} (lam = N-gamma)
reduces to a 1D integral

    (K*f)(r) = int_0^inf f(s) s^{N-1} W(r,s) ds,
    W(r,s)   = |S^{N-2}| int_0^pi (r^2+s^2-2rs cos t)^{-lam/2} sin^{N-2}(t) dt.

For odd N the angular integral is elementary: substituting u = a - b cos t
(a = r^2+s^2, b = 2rs) turns sin^{N-2} into a polynomial in u and W into a
finite sum of power/log terms evaluated at u0=(r-s)^2 and u1=(r+s)^2.  The
u0 terms carry |r-s|^eta kinks across the diagonal; quadrature of those is
handled by local lattice-defect corrections in the matrix assembly.

For even N the integral is computed by graded Gauss-Legendre panels in t
(this path is also the independent oracle for the closed form).
"""

import numpy as np
from numpy.polynomial import legendre
from scipy.special import gamma as _gamma


def sphere_area(N):
    """|S^{N-1}|, surface measure of the unit sphere in R^N."""
    return 2.0 * np.pi ** (N / 2.0) / _gamma(N / 2.0)


def _gl(n):
    x, w = legendre.leggauss(n)
    return x, w


def _poly_mul(p, q):
    """Multiply polynomials-in-u with (possibly array) coefficients,
    ascending order."""
    out = [0.0] * (len(p) + len(q) - 1)
    for i, pi in enumerate(p):
        for j, qj in enumerate(q):
            out[i + j] = out[i + j] + pi * qj
    return out


def _u_poly(u0, u1, a, d, ell):
    """Coefficients (ascending in u) of [(u-u0)(u1-u)]^d * (a-u)^ell."""
    coeffs = [np.ones_like(np.asarray(a, dtype=float))]
    if d > 0:
        factor = [-(u0 * u1), u0 + u1, -np.ones_like(np.asarray(a, dtype=float))]
        for _ in range(d):
            coeffs = _poly_mul(coeffs, factor)
    for _ in range(ell):
        coeffs = _poly_mul(coeffs, [a, -np.ones_like(np.asarray(a, dtype=float))])
    return coeffs


_LOG_TOL = 1e-12


def closed_form_W(r, s, N, gamma_, ell=0, diag_smooth=False):
    """Angular kernel W_ell(r,s) for odd N via elementary antiderivatives.

    diag_smooth: at entries with r == s, return only the part that is smooth
    across the diagonal (u0-terms with non-positive exponent and the log
    terms are dropped; positive-exponent u0 terms vanish there anyway).
    """
    if N % 2 == 0:
        raise ValueError("closed form requires odd N")
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    lam = N - gamma_
    if N == 1:
        # no angular average; mirror term from the two hemispheres
        u0 = np.abs(r - s)
        if diag_smooth:
            kinkval = np.where(u0 == 0.0, 0.0,
                               np.where(u0 == 0.0, 1.0, u0) ** (-lam))
            return (r + s) ** (-lam) + kinkval
        return (r + s) ** (-lam) + u0 ** (-lam)

    d = (N - 3) // 2
    a = r * r + s * s
    b = 2.0 * r * s
    u0 = (r - s) ** 2
    u1 = (r + s) ** 2
    A = sphere_area(N - 1)
    coeffs = _u_poly(u0, u1, a, d, ell)
    pref = A / b ** (2 * d + 1 + ell)

    total = np.zeros(np.broadcast(r, s).shape, dtype=float)
    ondiag = u0 == 0.0
    u0safe = np.where(ondiag, 1.0, u0)
    for k, ck in enumerate(coeffs):
        nu = k + 1.0 - lam / 2.0
        if abs(nu) < 1e-9:
            hi = np.log(u1)
            lo = np.log(u0safe)
            if diag_smooth:
                lo = np.where(ondiag, 0.0, lo)
            total = total + ck * (hi - lo)
        else:
            hi = u1 ** nu / nu
            if nu > 0:
                lo = u0 ** nu / nu
            else:
                lo = np.where(ondiag, 0.0, u0safe ** nu / nu)
                if not diag_smooth:
                    lo = np.where(ondiag, np.inf, lo)
            total = total + ck * (hi - lo)
    W = pref * total

    if diag_smooth and np.any(ondiag):
        # on the diagonal the numeric coefficients cannot separate the
        # smooth limits of u0-power terms (e.g. a coefficient factor u0
        # cancelling u0^{-1}); rebuild those entries from the symbolic
        # (u0, u1) expansion keeping every finite limit and dropping only
        # genuine kinks
        u1d = np.broadcast_to(u1, W.shape)[ondiag]
        prefd = np.broadcast_to(pref, W.shape)[ondiag]
        tot = np.zeros_like(u1d)
        for k, ck in enumerate(_u_poly_sym(d, ell)):
            nu = k + 1.0 - lam / 2.0
            for (i, j), c in ck.items():
                if c == 0.0:
                    continue
                if abs(nu) < 1e-9:
                    if i == 0:
                        tot += c * u1d ** j * np.log(u1d)
                    # i >= 1: c u0^i ln u0 -> 0; i == 0 lo part: log kink
                else:
                    if i == 0:
                        tot += c * u1d ** (j + nu) / nu
                    if abs(i + nu) < 1e-9:
                        tot -= c * u1d ** j / nu  # finite limit of the u0 part
                    # i + nu > 0 -> 0; i + nu < 0 -> kink, dropped
        W = W.copy()
        W[ondiag] = prefd * tot

    # small b/a: the antiderivative differences cancel badly; integrate
    # directly in t, the integrand is analytic there
    mask = b < 0.2 * a
    if np.any(mask):
        W = np.where(mask, _direct_t_quad(r, s, lam, d, ell, mask), W)
    return W


def _direct_t_quad(r, s, lam, d, ell, mask, nodes=24):
    """Fixed Gauss-Legendre in t on entries selected by mask (only valid
    when the singularity t=1 is well separated, b/a bounded away from 1)."""
    rr = np.broadcast_to(r, mask.shape)[mask]
    ss = np.broadcast_to(s, mask.shape)[mask]
    a = rr * rr + ss * ss
    b = 2.0 * rr * ss
    x, w = _gl(nodes)
    t = x[None, :]
    integ = (a[:, None] - b[:, None] * t) ** (-lam / 2.0)
    if ell:
        integ = integ * t ** ell
    if d:
        integ = integ * (1.0 - t * t) ** d
    vals = integ @ w
    N = int(2 * d + 3)
    A = sphere_area(N - 1) if N >= 2 else 1.0
    out = np.zeros(mask.shape, dtype=float)
    out[mask] = A * vals
    return out


def quad_W(r, s, N, gamma_, ell=0, levels=14, nodes=12):
    """Graded-panel quadrature for W_ell(r,s), any N >= 2.

    Panels in t = angle: geometric refinement toward t=0 where the
    integrand is singular on the diagonal.  Raises if the innermost
    panel still contributes above tolerance (non-convergent refinement).
    """
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    shape = np.broadcast(r, s).shape
    # stable near the diagonal: a - b cos t = (r-s)^2 + 4 r s sin^2(t/2)
    dif2 = ((r - s) ** 2) * np.ones(shape)
    prod = (r * s) * np.ones(shape)
    A = sphere_area(N - 1)
    x, w = _gl(nodes)

    # panel edges: [0, pi] split geometrically toward 0
    edges = [np.pi]
    t0 = np.pi / 4
    for k in range(levels):
        edges.append(t0 * 0.25 ** k)
    edges.append(0.0)
    edges = np.array(edges[::-1])  # ascending from 0 to pi

    total = np.zeros(shape)
    last = np.zeros(shape)
    for lo, hi in zip(edges[:-1], edges[1:]):
        tt = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        ww = 0.5 * (hi - lo) * w
        ct = np.cos(tt)
        st = np.sin(tt)
        sh = np.sin(0.5 * tt)
        base = dif2[..., None] + 4.0 * prod[..., None] * sh * sh
        integ = base ** (-(N - gamma_) / 2.0)
        integ = integ * st ** (N - 2)
        if ell:
            integ = integ * ct ** ell
        contrib = integ @ ww
        if lo == edges[0]:
            last = np.abs(contrib)
        total = total + contrib
    # innermost panel is the first one processed; recompute its weight share
    scale = np.maximum(np.abs(total), 1e-300)
    if np.any(last / scale > 1e-6):
        bad = float(np.max(last / scale))
        raise RuntimeError(
            f"angular quadrature did not converge near the diagonal "
            f"(innermost panel fraction {bad:.2e}); refine the grading")
    return A * total


def _poly_mul2(p, q):
    """Multiply polynomials-in-u whose coefficients are 2-variable
    polynomials in (u0, u1), stored as dicts {(i, j): c}."""
    out = [dict() for _ in range(len(p) + len(q) - 1)]
    for i, pi in enumerate(p):
        for j, qj in enumerate(q):
            dst = out[i + j]
            for (a1, b1), c1 in pi.items():
                for (a2, b2), c2 in qj.items():
                    key = (a1 + a2, b1 + b2)
                    dst[key] = dst.get(key, 0.0) + c1 * c2
    return out


def _u_poly_sym(d, ell):
    """Like _u_poly but symbolic in (u0, u1), with a = (u0+u1)/2."""
    coeffs = [{(0, 0): 1.0}]
    factor = [{(1, 1): -1.0}, {(1, 0): 1.0, (0, 1): 1.0}, {(0, 0): -1.0}]
    for _ in range(d):
        coeffs = _poly_mul2(coeffs, factor)
    afac = [{(1, 0): 0.5, (0, 1): 0.5}, {(0, 0): -1.0}]
    for _ in range(ell):
        coeffs = _poly_mul2(coeffs, afac)
    return coeffs


def kink_terms(r, s, N, gamma_, ell=0, eta_max=4.0):
    """Kink decomposition of W across the diagonal for odd N.

    Returns a list of (kind, expo, kappa): the kink function is
    |x|^expo (kind='pow') or x^expo log|x| (kind='log', expo even >= 0)
    in x = s - r, and kappa is its smooth coefficient array, such that
    W - sum kappa E is smooth across the diagonal.  Powers of u0 = x^2
    occurring in the antiderivative coefficients are absorbed into the
    exponent, so every retained kink has expo > -1 (integrable) and a
    coefficient that does not degenerate on the diagonal.  Kinks with
    expo >= eta_max and even-power non-log terms (smooth) are dropped.
    """
    if N % 2 == 0:
        raise ValueError("kink decomposition requires odd N")
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    lam = N - gamma_
    shape = np.broadcast(r, s).shape
    if N == 1:
        return [("pow", -lam, np.ones(shape))]
    d = (N - 3) // 2
    b = 2.0 * r * s
    u1 = (r + s) ** 2
    A = sphere_area(N - 1)
    pref = A / b ** (2 * d + 1 + ell)
    merged = {}

    def add(kind, expo, arr):
        key = (kind, round(float(expo), 9))
        if key in merged:
            merged[key] = merged[key] + arr
        else:
            merged[key] = arr * np.ones(shape)

    for k, ck in enumerate(_u_poly_sym(d, ell)):
        nu = k + 1.0 - lam / 2.0
        for (i, j), c in ck.items():
            if c == 0.0:
                continue
            base = c * u1 ** j
            if abs(nu) < 1e-9:
                # -pref*c*u0^i u1^j ln u0 -> -2 pref c u1^j x^{2i} ln|x|
                add("log", 2 * i, -2.0 * pref * base)
            else:
                eta = 2.0 * (nu + i)
                if eta >= eta_max:
                    continue
                if abs(eta - round(eta)) < 1e-9 and round(eta) % 2 == 0 and eta >= 0:
                    continue  # even power of x: smooth, no kink
                add("pow", eta, -pref * base / nu)
    return [(kind, expo, arr) for (kind, expo), arr in merged.items()]


# ---------------------------------------------------------------------------
# compactly supported window for the lattice-defect corrections

def _bump(t):
    """C^inf bump: 1 on |t|<=1, exp(1-1/(1-x^2)) ramp on 1<|t|<2, 0 beyond."""
    t = np.abs(np.asarray(t, dtype=float))
    out = np.zeros_like(t)
    out[t <= 1.0] = 1.0
    mid = (t > 1.0) & (t < 2.0)
    x = t[mid] - 1.0
    out[mid] = np.exp(1.0 - 1.0 / (1.0 - x * x))
    return out


_moment_cache = {}


def window_moment(eta, k, nodes=80):
    """M_k = int_R E_eta(x) x^k bump(x) dx for unit window width (support
    |x|<2); scales as w^(1+eta+k) for width w (log case gets an extra
    log(w) * power moment).  Odd k vanish by symmetry."""
    key = (eta, k)
    if key in _moment_cache:
        return _moment_cache[key]
    if k % 2 == 1:
        _moment_cache[key] = 0.0
        return 0.0
    x, w = _gl(nodes)

    def seg(lo, hi, f):
        t = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
        return np.sum(0.5 * (hi - lo) * w * f(t))

    if eta == "log":
        f = lambda t: np.log(t) * t ** k * _bump(t)
        # int_0^1 log(t) t^k dt is improper at 0; split geometrically
        val = seg(1.0, 2.0, f)
        lo = 1.0
        for _ in range(60):
            val += seg(lo / 2, lo, f)
            lo /= 2
    else:
        f = lambda t: t ** (eta + k) * _bump(t)
        val = seg(1.0, 2.0, f)
        if eta + k > -1:
            lo = 1.0
            for _ in range(60):
                val += seg(lo / 2, lo, f)
                lo /= 2
        else:
            raise ValueError("moment diverges")
    val *= 2.0  # even symmetry
    _moment_cache[key] = val
    return val


def scaled_window_moment(kind, expo, k, width):
    """M_k = int E(x) x^k bump(x/width) dx for E = |x|^expo ('pow') or
    x^expo log|x| ('log', expo even); plateau |x|<=w, support 2w."""
    if kind == "log":
        p = expo + k
        return width ** (p + 1) * (window_moment("log", p)
                                   + np.log(width) * window_moment(0.0, p))
    return width ** (1.0 + expo + k) * window_moment(expo, k)
