"""Parameter validation and exact Strichartz-pair arithmetic.

Everything in this module is exact rational arithmetic (fractions.Fraction);
floats only appear at the solver boundary via the ``*_f`` accessors.
"""

from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational


def _frac(x, name):
    """Coerce ints/Fractions/strings/floats to an exact Fraction."""
    if isinstance(x, bool):
        raise ValueError(f"{name} must be a number, got bool")
    if isinstance(x, Rational):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, float):
        # binary-exact conversion; callers wanting a nicer rational should
        # pass a string like "2.5" or a Fraction
        return Fraction(x)
    raise ValueError(f"{name} must be rational, got {type(x).__name__}")


def critical_exponent(N, p, gamma):
    """s_c = N/2 - (gamma+2)/(2(p-1)), exactly."""
    N = int(N)
    p = _frac(p, "p")
    gamma = _frac(gamma, "gamma")
    if N < 1:
        raise ValueError("N must be a positive integer")
    if p == 1:
        raise ValueError("p = 1 gives division by zero in s_c")
    if not (0 < gamma < N):
        raise ValueError(f"gamma must lie in (0, N), got {gamma}")
    return Fraction(N, 2) - (gamma + 2) / (2 * (p - 1))


@dataclass(frozen=True)
class Rejection:
    """Validation failure carrying the first violated condition."""
    reason: str

    def __bool__(self):
        return False


@dataclass(frozen=True)
class ModelParams:
    """Validated (N, p, gamma) triple with derived exponents.

    All rational fields are exact; use N, pf, gammaf, scf for float work.
    """
    N: int
    p: Fraction
    gamma: Fraction
    s_c: Fraction
    theta: Fraction
    radial_ok: bool

    # float accessors for the solver boundary
    @property
    def pf(self):
        return float(self.p)

    @property
    def gammaf(self):
        return float(self.gamma)

    @property
    def scf(self):
        return float(self.s_c)

    @property
    def thetaf(self):
        return float(self.theta)

    def label(self):
        return f"N={self.N},p={self.p},gamma={self.gamma}"


def validate(N, p, gamma):
    """Inter-range validation: 2 < Np-N-gamma < 2p, p >= 2, 0 < gamma < N.

    Returns ModelParams on acceptance, Rejection(reason) otherwise.
    """
    try:
        N = int(N)
        p = _frac(p, "p")
        gamma = _frac(gamma, "gamma")
    except (ValueError, ZeroDivisionError) as e:
        return Rejection(str(e))
    if N < 1:
        return Rejection(f"N = {N} < 1")
    if p < 2:
        return Rejection(f"p = {p} < 2")
    if not (0 < gamma):
        return Rejection(f"gamma = {gamma} <= 0")
    if not (gamma < N):
        return Rejection(f"gamma = {gamma} >= N = {N}")
    inter = N * p - N - gamma
    if not (inter > 2):
        return Rejection(f"Np-N-gamma = {inter} <= 2")
    if not (inter < 2 * p):
        return Rejection(f"Np-N-gamma = {inter} >= 2p = {2 * p}")
    s_c = critical_exponent(N, p, gamma)
    # inter-range is equivalent to s_c in (0,1); keep as a sanity assert
    assert 0 < s_c < 1, "inter-range must force s_c in (0,1)"
    th = (1 - s_c) / s_c
    radial_ok = (N * p <= 3 * N + gamma) and (N * p <= 2 * N - p + 6) and N >= 2
    return ModelParams(N=N, p=p, gamma=gamma, s_c=s_c, theta=th,
                       radial_ok=bool(radial_ok))


def make_params(N, p, gamma):
    """validate() that raises on rejection."""
    out = validate(N, p, gamma)
    if isinstance(out, Rejection):
        raise ValueError(f"invalid parameters ({N},{p},{gamma}): {out.reason}")
    return out


def theta(params):
    """(1 - s_c)/s_c, exact; requires s_c in (0,1)."""
    s_c = params.s_c if isinstance(params, ModelParams) else _frac(params, "s_c")
    if not (0 < s_c < 1):
        raise ValueError(f"theta requires s_c in (0,1), got {s_c}")
    return (1 - s_c) / s_c


@dataclass(frozen=True)
class StrichartzPair:
    """One named pair. For dual pairs (dual=True) q,r store the primed
    exponents; the admissibility relation is checked on the conjugates."""
    name: str
    q: Fraction
    r: Fraction
    s: Fraction          # the regularity the pair is admissible for
    dual: bool = False
    in_range: bool = True
    boundary: tuple = ()  # range conditions met only with equality

    def admissible_pair(self):
        """(q, r) entering the relation 2/q + N/r = N/2 - s."""
        if self.dual:
            return (_conj(self.q), _conj(self.r))
        return (self.q, self.r)

    def relation_residual(self, N):
        q, r = self.admissible_pair()
        return 2 / q + Fraction(N) / r - (Fraction(N, 2) - self.s)


def _conj(q):
    """Holder conjugate q' = q/(q-1)."""
    q = Fraction(q)
    if q == 1:
        raise ValueError("conjugate of 1 is infinite")
    return q / (q - 1)


def _range_flags(q, r, N, s, dual):
    """Uniform-constant range restrictions on an admissible pair (q, r).

    Lower/upper limits written with a one-sided superscript in the source
    ranges are treated as strict; pairs sitting exactly on such an endpoint
    are flagged as boundary rather than rejected.
    """
    ok = True
    boundary = []

    def lower(val, bound, strict, tag):
        nonlocal ok
        if val < bound:
            ok = False
        elif strict and val == bound:
            boundary.append(tag)

    def upper(val, bound, strict, tag):
        nonlocal ok
        if val > bound:
            ok = False
        elif strict and val == bound:
            boundary.append(tag)

    if not dual:
        if N >= 3:
            lower(q, 2 / (1 - s), True, "q=(2/(1-s))+")
            lower(r, Fraction(2 * N, 1) / (N - 2 * s), False, "")
            upper(r, Fraction(2 * N, N - 2), True, "r=(2N/(N-2))-")
        elif N == 2:
            lower(q, 2 / (1 - s), True, "q=(2/(1-s))+")
            lower(r, 2 / (1 - s), False, "")
            upper(r, _conj(2 / (1 - s)), True, "r=((2/(1-s))+)'")
        else:
            if s >= Fraction(1, 2):
                return False, ("s>=1/2 outside N=1 range table",)
            lower(q, 4 / (1 - 2 * s), False, "")
            lower(r, 2 / (1 - 2 * s), False, "")
    else:
        # restrictions on the primal pair whose dual norm is used
        if s > 0:
            upper(q, 1 / s, True, "q=(1/s)-")
        if N >= 3:
            lower(q, 2 / (1 + s), True, "q=(2/(1+s))+")
            lower(r, Fraction(2 * N, 1) / (N - 2 * s), True, "r=(2N/(N-2s))+")
            upper(r, Fraction(2 * N, N - 2), True, "r=(2N/(N-2))-")
        elif N == 2:
            lower(q, 2 / (1 + s), True, "q=(2/(1+s))+")
            lower(r, 2 / (1 - s), True, "r=(2/(1-s))+")
            upper(r, _conj(2 / (1 + s)), True, "r=((2/(1+s))+)'")
        else:
            lower(q, 2 / (1 + 2 * s), False, "")
            lower(r, 2 / (1 - s), True, "r=(2/(1-s))+")
    return ok, tuple(b for b in boundary if b)


def named_pairs(params):
    """The selected Strichartz pairs for fixed (N, p, gamma), exact.

    Returns a dict with the two L^2-admissible pairs, the L^2 dual pair,
    the Hdot^{s_c} pair, and the Hdot^{-s_c} dual pair.
    """
    if isinstance(params, Rejection):
        raise ValueError(f"cannot build pairs for rejected params: {params.reason}")
    N, p, g, sc = params.N, params.p, params.gamma, params.s_c
    zero = Fraction(0)

    q1 = 2 * p / (1 + sc * (p - 1))
    r1 = Fraction(2 * N) * p / (N + g)
    q2 = 2 * p / (1 - sc)
    r2 = Fraction(2 * N) * p / (N + g + 2 * sc * p)
    q1p = 2 * p / (2 * p - 1 - sc * (p - 1))
    r1p = Fraction(2 * N) * p / (2 * N * p - N - g)
    q3p = 2 * p / ((2 * p - 1) * (1 - sc))

    def build(name, q, r, s, dual):
        if dual:
            # range restrictions act on the primal pair, parametrized by |s|
            ok, bd = _range_flags(_conj(q), _conj(r), N, abs(s), True)
        else:
            ok, bd = _range_flags(q, r, N, s, False)
        return StrichartzPair(name=name, q=q, r=r, s=s, dual=dual,
                              in_range=ok, boundary=bd)

    pairs = {
        "q1r1": build("L2 pair (q1,r1)", q1, r1, zero, False),
        "q2r2": build("L2 pair (q2,r2)", q2, r2, zero, False),
        "L2_dual": build("L2 dual pair (q1',r1')", q1p, r1p, zero, True),
        "Hsc": build("Hsc pair (q2,r1)", q2, r1, sc, False),
        "Hsc_dual": build("H-sc dual pair (q3',r1')", q3p, r1p, -sc, True),
    }
    return pairs


def pairs_table(params):
    """Plain-data rendering of named_pairs for reports/CLI."""
    rows = []
    for key, pr in named_pairs(params).items():
        rows.append({
            "key": key,
            "name": pr.name,
            "q": str(pr.q),
            "r": str(pr.r),
            "s": str(pr.s),
            "dual": pr.dual,
            "relation_residual": str(pr.relation_residual(params.N)),
            "in_range": pr.in_range,
            "boundary": list(pr.boundary),
        })
    return rows
