"""Command-line front end: parameter tables, ground states, spectra,
approximation ladders, evolution runs, trajectory classification, and the
identity-certificate suite.

Every subcommand writes its outputs (JSON reports, CSV trajectories, field
snapshots) under one output directory and prints a summary; --json switches
the summary to machine-readable JSON on stdout.  Exit codes: 0 ok,
1 invalid configuration, 2 solver or quality failure.
"""

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import params as pm
from .fields import RadialGrid, Field, save_snapshot
from . import ground_state as gsm
from . import linearized as lin
from . import special as sp
from . import evolve as ev


OUTPUT_ENV = "HARTREELAB_OUT"
EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2


def _out_dir(args):
    root = args.out or os.environ.get(OUTPUT_ENV) or "."
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _emit(report, args, name):
    out = _out_dir(args) / f"{name}.json"
    with open(out, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
    if args.json:
        json.dump(report, sys.stdout, indent=2, sort_keys=True)
        print()
    else:
        _print_tree(report)
    return out


def _print_tree(obj, indent=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            if isinstance(v, (dict, list)):
                print(f"{indent}{k}:")
                _print_tree(v, indent + "  ")
            else:
                print(f"{indent}{k}: {v}")
    elif isinstance(obj, list):
        for v in obj:
            _print_tree(v, indent)
            if isinstance(v, dict):
                print()
    else:
        print(f"{indent}{obj}")


def _grid(args):
    if args.grid != "radial":
        raise ValueError("this subcommand runs on the radial grid")
    return RadialGrid(args.N, args.rmax, args.m)


def _solve_chain(args, need_spectrum=False):
    P = pm.make_params(args.N, args.p, args.gamma)
    gs = gsm.solve_ground_state(P, _grid(args))
    if not need_spectrum:
        return P, gs, None, None
    ops = lin.assemble(gs, P)
    sd = lin.solve_e0(ops)
    return P, gs, ops, sd


# ---------------------------------------------------------------------------
# subcommands

def cmd_pairs(args):
    P = pm.make_params(args.N, args.p, args.gamma)
    report = {"label": P.label(), "s_c": str(P.s_c),
              "theta": str(pm.theta(P)), "pairs": pm.pairs_table(P)}
    _emit(report, args, "pairs")
    return EXIT_OK


def cmd_groundstate(args):
    P, gs, _, _ = _solve_chain(args)
    cert = gsm.certificate(gs, P)
    cert["certificate_sha256"] = ev.certificate_hash(gs, P)
    save_snapshot(gs.field, _out_dir(args) / "Q.snap", tag="ground state")
    _emit(cert, args, "ground_state")
    return EXIT_OK


def cmd_spectrum(args):
    P, gs, ops, sd = _solve_chain(args, need_spectrum=True)
    kc = lin.kernel_check(ops)
    report = {
        "e0": sd.e0,
        "eigen_residuals": list(sd.residuals),
        "B_value": sd.B_value,
        "negative_count": sd.negative_count,
        "spectrum_bottom": sd.spectrum_bottom,
        "kernel_check": {k: v for k, v in kc.items() if k != "census"},
        "kernel_census": kc["census"],
        "gs_certificate_sha256": ev.certificate_hash(gs, P),
    }
    out = _out_dir(args)
    save_snapshot(sd.Y1, out / "Y1.snap", tag="eigenmode, first component")
    save_snapshot(sd.Y2, out / "Y2.snap", tag="eigenmode, second component")
    _emit(report, args, "spectrum")
    return EXIT_OK


def cmd_special(args):
    P, gs, ops, sd = _solve_chain(args, need_spectrum=True)
    approx = sp.build_approx(float(args.sign), args.order, sd, ops)
    t0 = args.t0 if args.t0 is not None else 4.0 / sd.e0
    seed, seed_report = sp.seed_Qpm(args.sign, t0, args.order, approx, ops)
    report = {
        "ladder": sp.ladder_report(approx, ops),
        "decay_ratios": list(approx.decay_ratios),
        "seed": seed_report,
        "gs_certificate_sha256": ev.certificate_hash(gs, P),
    }
    save_snapshot(seed, _out_dir(args) / "seed.snap",
                  tag=f"branch seed sign={args.sign} order={args.order}")
    _emit(report, args, "special")
    return EXIT_OK


def _evolve_config(args, direction):
    return ev.EvolveConfig(
        dt=args.dt, t_max=args.tmax, stride=args.stride,
        direction=direction,
        blowup_gradient_factor=args.blowup_factor)


def cmd_evolve(args):
    P, gs, ops, sd = _solve_chain(args, need_spectrum=args.seed != "soliton")
    direction = 1 if args.direction == "forward" else -1
    if args.seed == "soliton":
        u0 = Field(gs.field.grid, gs.field.values.astype(complex))
        seed_report = {"seed": "soliton"}
    else:
        sign = 1 if args.seed == "qplus" else -1
        approx = sp.build_approx(float(sign), args.order, sd, ops)
        t0 = args.t0 if args.t0 is not None else 4.0 / sd.e0
        u0, seed_report = sp.seed_Qpm(sign, t0, args.order, approx, ops)
        seed_report["seed"] = args.seed
    record = ev.run(u0, _evolve_config(args, direction), gs, P,
                    ops=ops, sd=sd)
    out = _out_dir(args)
    record.meta["seed"] = seed_report
    record.to_csv(out / "trajectory.csv")
    record.save_manifest(out / "manifest.json")
    report = {"verdict": record.verdict,
              "files": ["trajectory.csv", "manifest.json"],
              "detectors": ev._jsonable({k: record.info[k]
                                         for k in ("blowup", "scatter")}),
              "drift_per_unit_time": record.info["drift_per_unit_time"]}
    _emit(report, args, "evolve")
    return EXIT_OK


def cmd_classify(args):
    P, gs, _, _ = _solve_chain(args)
    data = np.genfromtxt(args.traj, delimiter=",", names=True)
    cols = {name: np.atleast_1d(data[name]) for name in data.dtype.names}
    missing = [c for c in ev.CSV_COLUMNS if c not in cols]
    if missing:
        raise ValueError(f"trajectory file lacks columns: {missing}")
    # reconstruct the derived series the verdict logic reads
    p = float(P.pf)
    kin = cols["grad"] ** 2
    inter = p * (kin - 2.0 * cols["E"])
    cols["pot_ratio"] = inter / np.maximum(kin, 1e-300)
    th = float(P.thetaf)
    cols["G"] = (cols["M"] ** (th / 2.0) * cols["grad"]) \
        / (gs.mass ** (th / 2.0) * np.sqrt(gs.grad_sq))
    record = ev.TrajectoryRecord(columns=cols, verdict="Undetermined",
                                 info={}, meta={})
    config = _evolve_config(args, 1)
    bu = ev.detect_blowup(record, config)
    sc = ev.detect_scattering(record, config)
    if bu["fired"] and not sc["fired"]:
        record.verdict = "BlowUp"
    elif sc["fired"] and not bu["fired"]:
        record.verdict = "Scatter"
    record.info = {"blowup": bu, "scatter": sc}
    verdict, info = ev.classify(record, P)
    report = {"verdict": verdict, "info": ev._jsonable(info),
              "gs_certificate_sha256": ev.certificate_hash(gs, P)}
    _emit(report, args, "classify")
    return EXIT_OK


def cmd_certify(args):
    P, gs, ops, sd = _solve_chain(args, need_spectrum=True)
    checks = {}

    def check(name, value, threshold, ok=None):
        ok = bool(value < threshold) if ok is None else bool(ok)
        checks[name] = {"value": ev._jsonable(value),
                        "threshold": threshold, "pass": ok}

    table = pm.pairs_table(P)
    check("pair_relations_exact",
          max(abs(float(pm.Fraction(row["relation_residual"])))
              for row in table), 0.0,
          ok=all(row["relation_residual"] == "0" for row in table))
    check("equation_residual", gs.residual, 1e-10)
    check("pohozhaev_residuals", max(gs.pohozhaev_res), 1e-6)
    check("eigen_residuals", max(sd.residuals), 1e-6)
    check("e0_positive", -sd.e0, 0.0)
    check("unique_negative_direction", abs(sd.negative_count - 1), 1)
    kc = lin.kernel_check(ops)
    check("phase_kernel_residual", kc["phase_mode_residual"], 1e-8)
    check("translation_kernel_residual",
          kc["translation_mode_residual"], 1e-6)
    cs = lin.nonneg_and_coercivity_test(ops, sd, samples=120,
                                        seed=args.rng_seed)
    check("coercivity_lemma_min", -cs["min_ratio"]["lemma"], 1e-8)
    check("coercivity_projected_min", -cs["min_ratio"]["Gperp"], 0.0)
    u0 = Field(gs.field.grid, gs.field.values.astype(complex))
    cfg = ev.EvolveConfig(dt=5e-4, t_max=0.5, stride=100)
    rec = ev.run(u0, cfg, gs, P)
    drift = rec.info["drift_per_unit_time"]
    check("mass_drift_per_unit_time", drift["mass"], 1e-10)
    check("energy_drift_per_unit_time", drift["energy"], 1e-8)

    ok = all(c["pass"] for c in checks.values())
    report = {"label": P.label(), "pass": ok, "checks": checks,
              "gs_certificate_sha256": ev.certificate_hash(gs, P)}
    _emit(report, args, "certificate")
    return EXIT_OK if ok else EXIT_SOLVER


# ---------------------------------------------------------------------------
# parser

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--N", type=int, required=True)
    common.add_argument("--p", required=True)
    common.add_argument("--gamma", required=True)
    common.add_argument("--grid", choices=("radial", "box"), default="radial")
    common.add_argument("--rmax", type=float, default=20.0)
    common.add_argument("--m", type=int, default=1024)
    common.add_argument("--L", type=float, default=16.0)
    common.add_argument("--n", type=int, default=48)
    common.add_argument("--out", default=None,
                        help=f"output directory (default ${OUTPUT_ENV} or .)")
    common.add_argument("--json", action="store_true",
                        help="machine-readable summary on stdout")

    parser = argparse.ArgumentParser(prog="hartreelab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("pairs", parents=[common],
                   help="exact parameter table and norm-pair relations")
    sub.add_parser("groundstate", parents=[common],
                   help="solve the ground state, write certificate+snapshot")
    sub.add_parser("spectrum", parents=[common],
                   help="linearized eigendata, kernel census, snapshots")

    sp_p = sub.add_parser("special", parents=[common],
                          help="build the branch approximation ladder")
    sp_p.add_argument("--sign", type=int, choices=(1, -1), default=-1)
    sp_p.add_argument("--order", type=int, default=3)
    sp_p.add_argument("--t0", type=float, default=None,
                      help="seed entry time (default 4/e0)")

    evp = sub.add_parser("evolve", parents=[common],
                         help="integrate a seed and record the trajectory")
    evp.add_argument("--seed", choices=("qminus", "qplus", "soliton"),
                     default="qminus")
    evp.add_argument("--direction", choices=("forward", "backward"),
                     default="forward")
    evp.add_argument("--order", type=int, default=3)
    evp.add_argument("--t0", type=float, default=None)
    evp.add_argument("--dt", type=float, default=1e-3)
    evp.add_argument("--tmax", type=float, default=10.0)
    evp.add_argument("--stride", type=int, default=20)
    evp.add_argument("--blowup-factor", type=float, default=10.0,
                     help="gradient growth factor confirming blow-up "
                          "(large factors need very fine meshes)")

    clp = sub.add_parser("classify", parents=[common],
                         help="verdict for a recorded trajectory CSV")
    clp.add_argument("--traj", required=True)
    clp.add_argument("--dt", type=float, default=1e-3)
    clp.add_argument("--tmax", type=float, default=10.0)
    clp.add_argument("--stride", type=int, default=20)
    clp.add_argument("--blowup-factor", type=float, default=10.0)

    cfp = sub.add_parser("certify", parents=[common],
                         help="run the identity suite, emit a certificate")
    cfp.add_argument("--rng-seed", type=int, default=0)
    return parser


_DISPATCH = {
    "pairs": cmd_pairs,
    "groundstate": cmd_groundstate,
    "spectrum": cmd_spectrum,
    "special": cmd_special,
    "evolve": cmd_evolve,
    "classify": cmd_classify,
    "certify": cmd_certify,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        return _DISPATCH[args.command](args)
    except ValueError as exc:
        json.dump({"error": str(exc), "kind": "validation"}, sys.stderr)
        print(file=sys.stderr)
        return EXIT_INVALID
    except (RuntimeError, OverflowError, np.linalg.LinAlgError) as exc:
        json.dump({"error": str(exc), "kind": "solver"}, sys.stderr)
        print(file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
