"""Command-line interface: ``quenchroll <stage> [options]``.

Every subcommand reads an optional flat config file (``--config``), lets
flags override it, writes CSV/JSON results to ``--out`` and exits with

    0  success
    2  a numerical stage failed (diagnostics are written and printed)
    3  invalid configuration or parameters outside the admissible domain
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__
from .config import load_config, make_config, merge
from .corrector import far_fixed_point, make_background
from .envelope import solve_envelope, shift_envelope
from .errors import EXIT_OK, ConfigError, QuenchrollError, StageError
from .pipeline import build, config_manifest, verify, write_bundle, write_json
from .reduced import reduced_fixed_point
from .rolls import hamiltonian_of_rolls, solve_rolls
from .selection import select_omega
from .simulator import invade, new_state, run
from .spectral import UniformGrid, save_field

log = logging.getLogger("quenchroll")


def _threads() -> int:
    raw = os.environ.get("QUENCHROLL_THREADS")
    if raw is None:
        return max(1, os.cpu_count() or 1)
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"QUENCHROLL_THREADS must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError("QUENCHROLL_THREADS must be positive")
    return n


def _params(args: argparse.Namespace) -> dict[str, Any]:
    file_params = load_config(args.config) if getattr(args, "config", None) else {}
    flags = {k: getattr(args, k, None) for k in
             ("delta", "Omega", "gamma", "tau", "periods", "n_points", "slow_box", "seed",
              "pin_omega", "method", "T", "dt", "noise", "snap_every", "init",
              "hstar_target", "select_tol", "envelope_shift")}
    return merge(file_params, flags)


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_rolls(args) -> int:
    p = _params(args)
    r = solve_rolls(p["delta"], p["Omega"], p["gamma"], args.modes, p.get("rolls_tol", 1e-12))
    out = _outdir(args)
    m, c = r.full_modes()
    np.savetxt(out / "rolls_modes.csv", np.column_stack([m, c.real, c.imag]), delimiter=",",
               header="m,re,im", comments="")
    x = np.linspace(0, 2 * math.pi, 257)
    np.savetxt(out / "rolls_profile.csv", np.column_stack([x / r.omega, x, r.evaluate(x)]),
               delimiter=",", header="z,x,u", comments="")
    H, dev = hamiltonian_of_rolls(r)
    summary = {"delta": r.delta, "Omega": r.Omega, "gamma": r.gamma, "omega": r.omega,
               "eps": r.eps, "residual": r.residual, "iterations": r.iterations,
               "hamiltonian": H, "hamiltonian_deviation": dev}
    write_json(out / "rolls.json", summary)
    print(json.dumps(summary))
    return EXIT_OK


def cmd_envelope(args) -> int:
    prof = solve_envelope(args.c, args.S, args.n, args.tol)
    if args.shift:
        prof = shift_envelope(prof, args.shift)
    out = _outdir(args)
    np.savetxt(out / "envelope.csv", np.column_stack([prof.X, prof.values]), delimiter=",",
               header="X,chi", comments="")
    summary = {"c": prof.c, "residual": prof.residual, "iterations": prof.iterations,
               "rate_left": prof.rate_left, "rate_right": prof.rate_right,
               "r2_left": prof.r2_left, "r2_right": prof.r2_right,
               "min_value": prof.min_value(), "shift": prof.shift}
    write_json(out / "envelope.json", summary)
    print(json.dumps(summary))
    return EXIT_OK


def _corrector_outputs(cfg, state, bg, out: Path, name: str) -> dict:
    steps: list = []
    far_fixed_point(state.v_near, cfg, bg, log_steps=steps)
    with open(out / f"{name}_far_log.jsonl", "w") as fh:
        for s in steps:
            fh.write(json.dumps(s) + "\n")
    save_field(state.v_near, out / "v_near.csv", bg.eps, cfg.tau)
    save_field(state.v_far, out / "v_far.csv", bg.eps, cfg.tau)
    save_field(state.g_minus, out / "g_minus.csv", bg.eps, cfg.tau)
    save_field(state.g_plus, out / "g_plus.csv", bg.eps, cfg.tau)
    return {"config": config_manifest(cfg), "diagnostics": state.diagnostics,
            "far_log": steps}


def cmd_corrector(args) -> int:
    cfg = make_config(_params(args))
    bg = make_background(cfg)
    state = reduced_fixed_point(cfg, bg)
    out = _outdir(args)
    report = _corrector_outputs(cfg, state, bg, out, "corrector")
    write_json(out / "corrector.json", report)
    print(json.dumps({k: report["diagnostics"][k] for k in
                      ("final_update_h2", "far_contraction", "neumann_ratio")}))
    return EXIT_OK


def cmd_reduced(args) -> int:
    cfg = make_config(_params(args))
    bg = make_background(cfg)
    state = reduced_fixed_point(cfg, bg, method=args.solver)
    out = _outdir(args)
    report = _corrector_outputs(cfg, state, bg, out, "reduced")
    write_json(out / "reduced.json", report)
    print(json.dumps({k: state.diagnostics[k] for k in
                      ("method", "final_update_h2", "reduced_residual_h2",
                       "leakage_before_truncation", "neumann_ratio")}))
    return EXIT_OK


def cmd_select(args) -> int:
    p = _params(args)
    cfg = make_config(p)
    res = select_omega(cfg.delta, cfg.gamma, cfg, tol=p["select_tol"])
    out = _outdir(args)
    summary = {"delta": res.delta, "gamma": res.gamma, "Omega_star": res.Omega_star,
               "omega_star": res.omega_star, "constraint_residual": res.constraint_residual,
               "H_left": res.H_left, "H_right": res.H_right, "U_at_0": res.U_at_0,
               "iterations": res.iterations, "history": res.history,
               "config": config_manifest(cfg)}
    write_json(out / "select.json", summary)
    print(json.dumps({k: summary[k] for k in ("delta", "gamma", "Omega_star", "omega_star")}))
    return EXIT_OK


def cmd_build(args) -> int:
    p = _params(args)
    pinned = p.get("pin_omega") is not None
    cfg = make_config(p)
    bundle = build(cfg, select=not pinned, select_tol=p["select_tol"],
                   hstar_target=p.get("hstar_target"))
    write_bundle(bundle, args.out)
    d = bundle.diagnostics
    print(json.dumps({k: d.get(k) for k in ("delta", "gamma", "Omega", "omega", "eps",
                                             "U_at_0", "constraint_residual")}))
    return EXIT_OK


def cmd_simulate(args) -> int:
    p = _params(args)
    out = _outdir(args)
    delta, T, dt = p["delta"], p["T"], p["dt"]
    snap = int(p["snap_every"])
    if p["init"] == "noise":
        cfg = make_config(p)
        state = invade(delta, T, dt, cfg.grid, seed=int(p["seed"]), noise=p["noise"],
                       snap_every=snap)
    elif p["init"] == "ansatz":
        cfg = make_config(p)
        bg = make_background(cfg)
        state = run(new_state(cfg.grid, bg.chi_u, delta, cfg.omega), T, dt, snap)
    else:
        raise ConfigError(f"unknown init {p['init']!r} (use 'ansatz' or 'noise')")
    grid: UniformGrid = state.grid
    np.savetxt(out / "final.csv", np.column_stack([grid.x, state.u]), delimiter=",",
               header="x,u", comments="")
    if state.history:
        times = np.array([t for t, _ in state.history])
        snaps = np.array([u for _, u in state.history])
        np.savez_compressed(out / "snapshots.npz", t=times, x=grid.x, u=snaps)
    summary = {"delta": delta, "T": state.t, "dt": dt, "init": p["init"],
               "seed": int(p["seed"]), "sup": float(np.max(np.abs(state.u))),
               "config": config_manifest(cfg)}
    write_json(out / "simulate.json", summary)
    print(json.dumps({k: summary[k] for k in ("T", "sup")}))
    return EXIT_OK


def cmd_verify(args) -> int:
    p = _params(args)
    cfg = make_config(p) if args.config or args.delta is not None else None
    report = verify(cfg, corrupt_transform=args.corrupt_transform, seed=int(p["seed"]),
                    include_corrector=not args.quick)
    out = _outdir(args)
    write_json(out / "verify.json", report)
    for r in report["checks"]:
        print(f"{'PASS' if r['passed'] else 'FAIL'}  {r['name']}  ({r['value']:.3g})")
    return EXIT_OK if report["passed"] else 2


def _sweep_point(params: dict) -> dict:
    try:
        cfg = make_config(params)
        res = select_omega(cfg.delta, cfg.gamma, cfg, tol=params["select_tol"])
        return {"delta": cfg.delta, "gamma": cfg.gamma, "Omega_star": res.Omega_star,
                "omega_star": res.omega_star, "status": "ok"}
    except QuenchrollError as exc:
        return {"delta": params["delta"], "gamma": params["gamma"], "status": "failed",
                "error": str(exc)}


def cmd_sweep(args) -> int:
    base = _params(args)
    points = [dict(base, delta=d, gamma=g) for d in args.deltas for g in args.gammas]
    for pt in points:
        make_config(pt)  # validate everything before starting workers
    workers = min(_threads(), len(points))
    if workers == 1:
        rows = [_sweep_point(pt) for pt in points]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_point, points))
    out = _outdir(args)
    with open(out / "sweep.csv", "w") as fh:
        fh.write("delta,gamma,Omega_star,omega_star,status\n")
        for r in rows:
            fh.write(f"{r['delta']},{r['gamma']},{r.get('Omega_star', '')},"
                     f"{r.get('omega_star', '')},{r['status']}\n")
    write_json(out / "sweep.json", {"rows": rows, "workers": workers})
    print(json.dumps({"points": len(rows), "failed": sum(r["status"] != "ok" for r in rows)}))
    return EXIT_OK if all(r["status"] == "ok" for r in rows) else 2


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="quenchroll", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, physics=True):
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--out", default="quenchroll-out", help="output directory")
        p.add_argument("--seed", type=int)
        if physics:
            p.add_argument("--delta", type=float)
            p.add_argument("--Omega", type=float)
            p.add_argument("--gamma", type=float)
            p.add_argument("--tau", type=float)
            p.add_argument("--periods", type=int, help="L / 2 pi")
            p.add_argument("--n-points", dest="n_points", type=int)
            p.add_argument("--slow-box", dest="slow_box", type=float)
            p.add_argument("--envelope-shift", dest="envelope_shift", type=float)
        return p

    p = common(sub.add_parser("rolls", help="periodic roll profile"))
    p.add_argument("--modes", type=int, default=16)
    p.set_defaults(func=cmd_rolls)

    p = common(sub.add_parser("envelope", help="front of the amplitude equation"), physics=False)
    p.add_argument("--c", type=float, default=3 * math.pi * math.sqrt(1.5))
    p.add_argument("--S", type=float, default=60.0)
    p.add_argument("--n", type=int, default=4096)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--shift", type=float, default=0.0)
    p.set_defaults(func=cmd_envelope)

    p = common(sub.add_parser("corrector", help="corrector at fixed Omega"))
    p.set_defaults(func=cmd_corrector)

    p = common(sub.add_parser("reduced", help="reduced near-band solve at fixed Omega"))
    p.add_argument("--solver", choices=("newton-krylov", "picard"), default=None)
    p.set_defaults(func=cmd_reduced)

    p = common(sub.add_parser("select", help="selected wavenumber"))
    p.add_argument("--select-tol", dest="select_tol", type=float)
    p.set_defaults(func=cmd_select)

    p = common(sub.add_parser("build", help="full solution U"))
    p.add_argument("--pin-omega", dest="pin_omega", type=float,
                   help="use this Omega instead of selecting it")
    p.add_argument("--select-tol", dest="select_tol", type=float)
    p.add_argument("--hstar-target", dest="hstar_target", type=float)
    p.set_defaults(func=cmd_build)

    p = common(sub.add_parser("simulate", help="time-dependent check"))
    p.add_argument("--T", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--init", choices=("ansatz", "noise"))
    p.add_argument("--noise", type=float)
    p.add_argument("--snap-every", dest="snap_every", type=int)
    p.set_defaults(func=cmd_simulate)

    p = common(sub.add_parser("verify", help="invariant checks of every stage"))
    p.add_argument("--corrupt-transform", action="store_true",
                   help="negative control: break the transform normalisation")
    p.add_argument("--quick", action="store_true", help="skip the corrector checks")
    p.set_defaults(func=cmd_verify)

    p = common(sub.add_parser("sweep", help="selected wavenumber over a (delta, gamma) grid"))
    p.add_argument("--deltas", type=_floats, required=True)
    p.add_argument("--gammas", type=_floats, default=[0.0])
    p.add_argument("--select-tol", dest="select_tol", type=float)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return exc.exit_code
    except StageError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        try:
            out = _outdir(args)
            write_json(out / "failure.json", {"stage": exc.stage, "message": str(exc),
                                              "diagnostics": exc.diagnostics})
        except OSError:
            pass
        return exc.exit_code
    except QuenchrollError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
