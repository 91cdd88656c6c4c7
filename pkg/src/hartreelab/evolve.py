"""Time integration and trajectory classification.

Strang splitting: a half-step of the exact nonlinear phase rotation (the
nonlinear sub-flow preserves |u| pointwise, so it is exactly solvable), a
full linear dispersion step (Fourier multiplier on the box, Crank-Nicolson
with the compact radial Laplacian on the radial mesh), and a second half
rotation.  Runs record mass/energy/gradient/virial/modulation series,
watch for blow-up (gradient growth confirmed by spectral-resolution loss)
and scattering (sustained smallness of the interaction term), and the
record is distilled into a single verdict.
"""

import hashlib
import json
from dataclasses import dataclass, field as dc_field

import numpy as np

from .fields import Field, riesz_convolve, l2_norm_sq, gradient_norm_sq
from . import functionals as fn
from . import ground_state as gsm
from . import linearized as lin


CSV_COLUMNS = ["t", "M", "E", "grad", "delta", "y", "ydot", "alpha",
               "theta", "X", "alpha_p", "alpha_m", "tail"]


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class EvolveConfig:
    dt: float = 1e-3
    t_max: float = 10.0
    stride: int = 20                       # record every stride steps
    direction: int = 1                     # +1 forward, -1 backward
    blowup_gradient_factor: float = 1e3
    tail_fraction_threshold: float = 1e-4
    scatter_pot_ratio: float = 0.05
    scatter_dwell: float = 2.0             # time units below the ratio
    linear_only: bool = False              # drop the nonlinearity entirely

    def __post_init__(self):
        if self.dt <= 0 or self.t_max <= 0:
            raise ValueError("dt and t_max must be positive")
        if self.direction not in (1, -1):
            raise ValueError("direction must be +1 or -1")
        if (self.blowup_gradient_factor <= 0
                or self.tail_fraction_threshold <= 0
                or self.scatter_pot_ratio <= 0 or self.scatter_dwell <= 0):
            raise ValueError("detector thresholds must be positive")


class StepOverflow(OverflowError):
    """Non-finite values appeared during a step; carries the last good
    state so the caller can report a truncated trajectory."""

    def __init__(self, message, last_good):
        super().__init__(message)
        self.last_good = last_good


# ---------------------------------------------------------------------------
# the integrator

def _nonlinear_potential(u, params):
    fp = np.abs(u.values) ** params.pf
    pot = riesz_convolve(Field(u.grid, fp), params.gammaf).values
    return pot * np.abs(u.values) ** (params.pf - 2.0)


def _linear_propagator(grid, dt):
    """Closure advancing nodal values by e^{i dt Lap}."""
    if grid.kind == "box":
        mult = np.exp(-1j * dt * grid.ksq())

        def prop(v):
            return np.fft.ifftn(mult * np.fft.fftn(v))
        return prop

    solve = grid.shifted_solver(1.0, 0.5j * dt, order=4)

    def prop(v):
        # Crank-Nicolson: (I - i dt/2 Lap) u' = (I + i dt/2 Lap) u
        return solve(v + 0.5j * dt * grid.lap_apply(v, order=4))
    return prop


def step(u, dt, params, _prop=None, linear_only=False):
    """One Strang step of length dt (dt may be negative)."""
    prop = _prop if _prop is not None else _linear_propagator(u.grid, dt)
    v = u.values.astype(complex)
    if not np.all(np.isfinite(v)):
        raise StepOverflow("non-finite values entering step", last_good=u)
    if not linear_only:
        with np.errstate(invalid="ignore", over="ignore"):
            v = np.exp(0.5j * dt * _nonlinear_potential(u, params)) * v
    if not np.all(np.isfinite(v)):
        raise StepOverflow("non-finite values after phase step", last_good=u)
    v = prop(v)
    if not linear_only:
        w = Field(u.grid, v)
        v = np.exp(0.5j * dt * _nonlinear_potential(w, params)) * v
    if not np.all(np.isfinite(v.real)) or not np.all(np.isfinite(v.imag)):
        raise StepOverflow("non-finite values after step", last_good=u)
    return Field(u.grid, v)


def spectral_tail_fraction(u, band=1.0 / 3.0):
    """Fraction of spectral power in the top wavenumber band; a rising
    value means the solution has left the resolvable scale."""
    grid = u.grid
    if grid.kind == "box":
        power = np.abs(np.fft.fftn(u.values)) ** 2
        ksq = grid.ksq()
        cut = (1.0 - band) ** 2 * ksq.max()
        return float(np.sum(power[ksq > cut]) / np.sum(power))
    # uniform half-power profile: odd extension -> sine modes
    v = grid.to_v(np.asarray(u.values, dtype=complex))
    ext = np.concatenate([v, -v[::-1]])
    power = np.abs(np.fft.fft(ext)[:grid.m]) ** 2
    k0 = int((1.0 - band) * grid.m)
    return float(np.sum(power[k0:]) / np.sum(power))


# ---------------------------------------------------------------------------
# modulation

@dataclass(frozen=True)
class ModulationState:
    available: bool
    sigma: float = np.nan
    theta: float = np.nan              # sigma - t
    X: np.ndarray = dc_field(default_factory=lambda: np.zeros(0))
    alpha: float = np.nan
    h_norm: float = np.nan
    delta: float = np.nan
    residuals: dict = dc_field(default_factory=dict)
    h: object = None                   # complex nodal remainder values


def modulation_window(ref):
    """delta threshold below which the decomposition is fitted."""
    return 0.1 * gradient_norm_sq(fn._reference_field(ref))


def modulation_fit(u, t, ref, params, max_iter=50, tol=1e-14):
    """Fit u = e^{i sigma}[(1+alpha) Q + h](. - X) by Newton on the phase
    (and center, on the box) orthogonality conditions, then read alpha off
    the remaining orthogonality and return the residual h.

    ref is the ground state (or its transferred Field) on u's grid.  The
    fit is only attempted inside the modulation window delta < 0.1 |grad
    Q|^2; outside it the state comes back marked unavailable.
    """
    grid = u.grid
    Qf = fn._reference_field(ref)
    if grid.key() != Qf.grid.key():
        raise ValueError("field and reference ground state share no grid")
    Q = Qf.values.real
    gQ2 = gradient_norm_sq(Qf)
    delta = abs(gradient_norm_sq(u) - gQ2)
    if delta >= 0.1 * gQ2:
        return ModulationState(available=False, delta=delta)

    radial = grid.kind == "radial"
    Nx = 0 if radial else grid.N
    # start on the branch where <Q, v> is real and positive
    X = np.zeros(Nx)
    scale = max(float(l2_norm_sq(Qf)), 1.0)
    if not radial:
        dQ = [d.real for d in grid.gradient(Q.astype(complex))]
        # periodic centroid of |u|^2 seeds the center inside the Newton
        # basin (the orthogonality conditions go flat one soliton width out)
        dens = np.abs(u.values) ** 2
        for j, x in enumerate(grid.coords()):
            z = grid.integrate(dens * np.exp(2j * np.pi * x / grid.L))
            X[j] = grid.L / (2.0 * np.pi) * float(np.angle(z))
    sigma = float(np.angle(grid.integrate(
        Q * (u.values if radial else grid.shift(u.values, X)))))

    def recentered():
        vals = u.values if radial else grid.shift(u.values, X)
        return np.exp(-1j * sigma) * vals

    for _ in range(max_iter):
        v = recentered()
        g = [float(grid.integrate(Q * v.imag))]
        if not radial:
            g += [float(grid.integrate(d * v.real)) for d in dQ]
        g = np.array(g)
        if np.max(np.abs(g)) < tol * scale:
            break
        # d/dsigma v = -i v ; d/dX_j v = dv/dx_j
        J = np.zeros((1 + Nx, 1 + Nx))
        J[0, 0] = -float(grid.integrate(Q * v.real))
        if not radial:
            dv = grid.gradient(v)
            for j in range(Nx):
                J[0, 1 + j] = float(grid.integrate(Q * dv[j].imag))
                J[1 + j, 0] = float(grid.integrate(dQ[j] * v.imag))
                for l in range(Nx):
                    J[1 + j, 1 + l] = float(grid.integrate(dQ[j]
                                                           * dv[l].real))
        try:
            upd = np.linalg.solve(J, g)
        except np.linalg.LinAlgError:
            raise RuntimeError("modulation window: Newton system singular")
        sigma -= upd[0]
        X = X - upd[1:]
        if np.max(np.abs(upd)) < 1e-13:
            break       # stuck on the quadrature roundoff plateau
    else:
        raise RuntimeError("modulation window: Newton did not converge "
                           f"(delta = {delta:.3e})")

    v = recentered()
    if float(grid.integrate(Q * v.real)) < 0:
        sigma += np.pi
        v = recentered()
    p, gam = params.pf, params.gammaf
    W = riesz_convolve(Field(grid, Q ** p), gam).values * Q ** (p - 1.0)
    alpha = float(grid.integrate((v.real - Q) * W) / grid.integrate(Q * W))
    h = v - (1.0 + alpha) * Q
    dh = {"phase": abs(float(grid.integrate(Q * v.imag))) / scale,
          "amplitude": abs(float(grid.integrate(h.real * W)))
          / abs(float(grid.integrate(Q * W)))}
    if not radial:
        dh["center"] = max(abs(float(grid.integrate(d * v.real)))
                           for d in dQ) / scale
    hn = float(np.sqrt(l2_norm_sq(Field(grid, h))
                       + gradient_norm_sq(Field(grid, h))))
    return ModulationState(available=True, sigma=sigma, theta=sigma - t,
                           X=X, alpha=alpha, h_norm=hn, delta=delta,
                           residuals=dh, h=h)


# ---------------------------------------------------------------------------
# trajectory record

@dataclass
class TrajectoryRecord:
    columns: dict               # name -> np.ndarray, monotone "t"
    verdict: str                # BlowUp | Scatter | ConvergeToSoliton |
                                # Undetermined
    info: dict                  # detector payloads, drift, fits, flags
    meta: dict                  # params, grid, config, reference hashes

    def to_csv(self, path):
        cols = [self.columns[c] for c in CSV_COLUMNS]
        header = ",".join(CSV_COLUMNS)
        np.savetxt(path, np.column_stack(cols), delimiter=",",
                   header=header, comments="")

    def manifest(self):
        info = {k: v for k, v in self.info.items() if k != "final_state"}
        return {"meta": self.meta, "verdict": self.verdict,
                "info": _jsonable(info)}

    def save_manifest(self, path):
        with open(path, "w") as fh:
            json.dump(self.manifest(), fh, indent=2, sort_keys=True)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def certificate_hash(gs, params):
    blob = json.dumps(gsm.certificate(gs, params), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


# ---------------------------------------------------------------------------
# detectors

def detect_blowup(record, config):
    """Gradient growth past the configured factor, confirmed by the
    spectral tail: resolution loss is reported as such, never silently."""
    c = record.columns
    grad0 = c["grad"][0]
    big = c["grad"] > config.blowup_gradient_factor * grad0
    lost = c["tail"] > config.tail_fraction_threshold
    fired = bool(np.any(big & lost))
    trusted = c["t"][~lost]
    return {"fired": fired,
            "gradient_exceeded": bool(np.any(big)),
            "resolution_lost": bool(np.any(lost)),
            "last_trusted_t": float(trusted[-1]) if trusted.size else 0.0}


def detect_scattering(record, config):
    """Interaction-to-kinetic ratio below threshold for the dwell time.

    Samples taken after spectral-resolution loss are not trusted: an
    unresolved collapse sheds its core into grid noise whose interaction
    term is small, which would otherwise read as dispersion."""
    c = record.columns
    t, ratio = c["t"], c["pot_ratio"]
    lost = c["tail"] > config.tail_fraction_threshold
    if np.any(lost):
        cut = int(np.argmax(lost))
        t, ratio = t[:cut], ratio[:cut]
    below = ratio < config.scatter_pot_ratio
    fired, t_start = False, None
    start = None
    for i in range(len(t)):
        if below[i]:
            if start is None:
                start = t[i]
            if t[i] - start >= config.scatter_dwell:
                fired, t_start = True, float(start)
                break
        else:
            start = None
    return {"fired": fired, "since_t": t_start}


# ---------------------------------------------------------------------------
# the driver

def run(u0, config, gs, params, ops=None, sd=None, ref_field=None):
    """Integrate u0 with the Strang stepper, recording the monitored
    series every stride, until t_max or a detector fires.

    gs is the radial ground-state solution used for reference values;
    ref_field optionally supplies Q transferred to u0's grid (defaults to
    gs.field when the grids match) for modulation fitting.  Passing the
    linearized operators and spectral data adds the eigenmode projections
    alpha+- of the modulation remainder.
    """
    grid = u0.grid
    if ref_field is None and grid.key() == gs.field.grid.key():
        ref_field = gs.field
    dt = config.direction * config.dt
    prop = _linear_propagator(grid, dt)

    rows = {name: [] for name in CSV_COLUMNS + ["pot_ratio", "G", "h_norm"]}
    mq_th = gs.mass ** (params.thetaf / 2.0)
    gq = np.sqrt(gs.grad_sq)

    def record_row(t, u):
        M = l2_norm_sq(u)
        kin = gradient_norm_sq(u)
        inter = fn.interaction_integral(u, params)
        E = 0.5 * kin - inter / (2.0 * params.pf)
        ms = ModulationState(available=False)
        if ref_field is not None:
            ms = modulation_fit(u, t, ref_field, params)
        ap = am = np.nan
        if ms.available and ops is not None and sd is not None \
                and grid.kind == "radial":
            ap, am = lin.project_eigenmodes(ops, sd,
                                            (ms.h.real, ms.h.imag))
        vals = {
            "t": t, "M": M, "E": E, "grad": np.sqrt(kin),
            "delta": abs(kin - gs.grad_sq),
            "y": fn.virial(u), "ydot": fn.virial_dot(u),
            "alpha": ms.alpha, "theta": ms.theta,
            "X": float(np.linalg.norm(ms.X)) if ms.available else np.nan,
            "alpha_p": ap, "alpha_m": am,
            "tail": spectral_tail_fraction(u),
            "pot_ratio": inter / max(kin, 1e-300),
            # renormalized gradient against the soliton value
            "G": (M ** (params.thetaf / 2.0) * np.sqrt(kin)) / (mq_th * gq),
            "h_norm": ms.h_norm,
        }
        for name, v in vals.items():
            rows[name].append(float(v))

    u, t = u0, 0.0
    overflow = None
    record_row(t, u)
    n_steps = int(round(config.t_max / config.dt))
    partial = _partial_record(rows, config)
    for n in range(1, n_steps + 1):
        try:
            u = step(u, dt, params, _prop=prop,
                     linear_only=config.linear_only)
        except StepOverflow as exc:
            overflow = {"at_t": n * config.dt, "message": str(exc)}
            u = exc.last_good
            break
        t = n * config.dt
        if n % config.stride == 0 or n == n_steps:
            record_row(t, u)
            partial = _partial_record(rows, config)
            if detect_blowup(partial, config)["fired"]:
                break
            if detect_scattering(partial, config)["fired"]:
                break

    record = _partial_record(rows, config)
    bu = detect_blowup(record, config)
    sc = detect_scattering(record, config)
    if overflow is not None and not bu["fired"]:
        # the state left the grid faster than the stride could see
        bu["fired"] = bu["resolution_lost"] = True
    if bu["fired"] and sc["fired"]:
        verdict = "Undetermined"
    elif bu["fired"]:
        verdict = "BlowUp"
    elif sc["fired"]:
        verdict = "Scatter"
    else:
        verdict = "Undetermined"

    c = record.columns
    T = max(c["t"][-1] - c["t"][0], 1e-300)
    drift = {
        "mass": float(np.max(np.abs(c["M"] - c["M"][0])) / abs(c["M"][0]) / T),
        "energy": float(np.max(np.abs(c["E"] - c["E"][0]))
                        / max(abs(c["E"][0]), 1e-300) / T),
    }
    record.verdict = verdict
    record.info = {
        "blowup": bu, "scatter": sc, "overflow": overflow,
        "drift_per_unit_time": drift,
        "drift_flagged": bool(max(drift.values()) > 1e-8
                              and overflow is None and not bu["fired"]),
        "final_state": u,
    }
    record.meta = {
        "params": {"N": params.N, "p": str(params.p),
                   "gamma": str(params.gamma)},
        "grid": list(grid.key()),
        "config": {k: getattr(config, k) for k in
                   ("dt", "t_max", "stride", "direction",
                    "blowup_gradient_factor", "tail_fraction_threshold",
                    "scatter_pot_ratio", "scatter_dwell", "linear_only")},
        "gs_certificate_sha256": certificate_hash(gs, params),
    }
    return record


def _partial_record(rows, config):
    cols = {k: np.array(v) for k, v in rows.items()}
    return TrajectoryRecord(columns=cols, verdict="Undetermined",
                            info={}, meta={})


# ---------------------------------------------------------------------------
# classification

def delta_decay_fit(record, window=0.5):
    """Slope of log delta over the trailing fraction of the run."""
    c = record.columns
    t, d = c["t"], c["delta"]
    keep = (t >= t[-1] * (1.0 - window)) & (d > 0)
    if np.sum(keep) < 3:
        return {"rate": np.nan, "points": int(np.sum(keep))}
    slope = np.polyfit(t[keep], np.log(d[keep]), 1)[0]
    return {"rate": float(-slope), "points": int(np.sum(keep))}


def convergence_in_mean(record, n_windows=3):
    """Mean of delta over nested doubling windows [0, T/2^k]; a sequence
    decreasing in window length certifies convergence in mean."""
    c = record.columns
    t, d = c["t"], c["delta"]
    T = t[-1]
    out = []
    for k in range(n_windows - 1, -1, -1):
        keep = t <= T / 2 ** k
        out.append(float(np.trapezoid(d[keep], t[keep])
                         / max(t[keep][-1], 1e-300)))
    return out        # ordered short window ... full window


def classify(record, params, rate_tol=0.5):
    """Distill a completed record into one verdict.

    Detector verdicts stand; otherwise a decaying delta with a clean
    log-linear fit becomes ConvergeToSoliton(rate).  At threshold
    mass-energy the renormalized gradient must not cross 1; a crossing is
    reported as a numerical-consistency violation, not silently absorbed.
    """
    c = record.columns
    info = dict(record.info)
    G = c["G"]
    crossed = bool(np.any(G > 1.0) and np.any(G < 1.0))
    info["region_crossing_violation"] = crossed

    if record.verdict in ("BlowUp", "Scatter"):
        return record.verdict, info
    fit = delta_decay_fit(record)
    info["delta_fit"] = fit
    d = c["delta"]
    if (np.isfinite(fit["rate"]) and fit["rate"] > 0
            and d[-1] < 0.5 * max(d[0], 1e-300)):
        info["rate"] = fit["rate"]
        return "ConvergeToSoliton", info
    return "Undetermined", info
