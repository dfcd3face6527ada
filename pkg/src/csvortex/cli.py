"""Command-line surface.

Subcommands: solve-vortex, evolve, reduce, compare, orbit, verify.
Exit codes: 0 success, 1 runtime failure, 2 verification failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .config import ExperimentConfig
from .energetics import bogomolny, energy
from .evolution import EvolutionState, evolve
from .grid import make_grid
from .moduli import integrate_reduced
from .snapshot import read_snapshot, write_sidecar, write_snapshot
from .vortex import solve_kw, reconstruct


def _read_zeros_file(path):
    pts = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            x, y = line.replace(",", " ").split()[:2]
            pts.append((float(x), float(y)))
    return np.asarray(pts)


def _cmd_solve_vortex(args):
    pts = _read_zeros_file(args.zeros)
    N = len(pts)
    L = float(np.sqrt(args.area)) if args.area else None
    if L is None:
        L = float(np.sqrt(args.area_factor * np.pi * max(N, 1)))
    grid = make_grid(L, L, args.grid, args.grid, N)
    kw = solve_kw(grid, pts, tol=args.tol)
    state = reconstruct(grid, kw, pts, mu=args.mu, sigma=args.sigma,
                        branch=args.branch)
    write_snapshot(args.out, state)
    res = bogomolny(state)
    write_sidecar(args.out + ".json", {
        "energy": energy(state, 1.0),
        "residual": res.norm,
        "iters": kw.newton_iters,
        "bradlow_margin": kw.bradlow_margin,
    })
    print(f"wrote {args.out}: V = {energy(state, 1.0):.8f}, "
          f"self-dual residual = {res.norm:.3e}")
    return 0


def _cmd_evolve(args):
    state = read_snapshot(args.infile)
    if args.mu is not None or args.sigma is not None:
        from .fields import FieldState

        state = FieldState(
            state.gauge, state.higgs,
            args.mu if args.mu is not None else state.mu,
            args.sigma if args.sigma is not None else state.sigma,
            state.tau,
        )
    ev = EvolutionState(state, mode=args.mode, scheme=args.scheme, dt=args.dt)

    sink = None
    if args.dump_every:
        def sink(e, k):
            write_snapshot(f"{args.diag}.step{k:08d}.snap", e.state)

    traj = evolve(ev, args.tau_end, diag_every=args.diag_every,
                  snapshot_every=args.dump_every, snapshot_sink=sink)
    traj.write_csv(args.diag)
    last = traj.records[-1]
    print(f"tau = {last.tau:.6g}: energy = {last.energy:.10g}, "
          f"constraint = {last.constraint_inf:.3e}"
          + (" [halted on blow-up]" if traj.halted else ""))
    return 1 if traj.halted else 0


def _cmd_reduce(args):
    pts = _read_zeros_file(args.zeros)
    N = len(pts)
    L = float(np.sqrt(args.area)) if args.area else float(
        np.sqrt(args.area_factor * np.pi * max(N, 1)))
    grid = make_grid(L, L, args.grid, args.grid, N)
    traj = integrate_reduced(grid, pts, args.sigma, args.tau_end, args.dt)
    traj.write_csv(args.out)
    s0, s1 = traj.samples[0], traj.samples[-1]
    print(f"reduced flow to tau = {s1.tau:.6g}: "
          f"u drift = {abs(s1.u - s0.u) / max(abs(s0.u), 1e-300):.3e}")
    return 0


def _cmd_compare(args):
    from .experiments import run_adiabatic_compare

    cfg = ExperimentConfig.from_file(args.config)
    rep = run_adiabatic_compare(
        cfg, progress=lambda mu, h1, z: print(
            f"  mu = {mu:g}: sup H1 = {h1:.4e}, sup zero dev = {z:.4e}"))
    rep.to_json(args.out)
    print("H1 monotone decreasing:", rep.h1_monotone)
    print("zero-deviation monotone decreasing:", rep.zero_monotone)
    return 0 if (rep.h1_monotone and rep.zero_monotone) else 2


def _cmd_orbit(args):
    from .experiments import run_orbit_experiment

    cfg = ExperimentConfig.from_file(args.config)
    rep = run_orbit_experiment(
        cfg, progress=lambda s, of, orr: print(
            f"  sigma = {s:+d}: omega_full = {of:+.4e}, omega_reduced = {orr:+.4e}"))
    rep.to_json(args.out)
    ok = rep.sign_flip_full and rep.sign_flip_reduced and rep.signs_consistent
    print("sign flip (full/reduced):", rep.sign_flip_full, rep.sign_flip_reduced)
    return 0 if ok else 2


def _cmd_verify(args):
    from .experiments import checks_passed, checks_table, run_identity_suite

    cfg = ExperimentConfig.from_file(args.config) if args.config else None
    checks = run_identity_suite(cfg)
    print(checks_table(checks))
    return 0 if checks_passed(checks) else 2


def build_parser():
    p = argparse.ArgumentParser(prog="csvortex",
                                description="Vortex dynamics laboratory for the "
                                            "gauged Schroedinger flow on a torus")
    sub = p.add_subparsers(dest="command", required=True)

    sv = sub.add_parser("solve-vortex", help="construct a self-dual vortex state")
    sv.add_argument("--zeros", required=True, help="text file, one 'x y' per line")
    sv.add_argument("--area", type=float, default=None)
    sv.add_argument("--area-factor", type=float, default=8.0,
                    help="area = factor*pi*N when --area is not given")
    sv.add_argument("--grid", type=int, default=64)
    sv.add_argument("--mu", type=float, default=1.0)
    sv.add_argument("--sigma", type=int, default=0, choices=(-1, 0, 1))
    sv.add_argument("--branch", default="gauss", choices=("gauss", "plaquette"))
    sv.add_argument("--tol", type=float, default=1e-10)
    sv.add_argument("--out", required=True)
    sv.set_defaults(func=_cmd_solve_vortex)

    evp = sub.add_parser("evolve", help="integrate the full flow from a snapshot")
    evp.add_argument("--in", dest="infile", required=True)
    evp.add_argument("--tau-end", type=float, required=True)
    evp.add_argument("--mu", type=float, default=None)
    evp.add_argument("--sigma", type=int, default=None, choices=(-1, 0, 1))
    evp.add_argument("--scheme", default="rk4", choices=("rk4", "imex"))
    evp.add_argument("--mode", default="temporal", choices=("temporal", "gauge1"))
    evp.add_argument("--dt", type=float, default=None)
    evp.add_argument("--diag", required=True, help="diagnostics CSV path")
    evp.add_argument("--diag-every", type=int, default=None)
    evp.add_argument("--dump-every", type=int, default=0,
                     help="write a snapshot every k steps")
    evp.set_defaults(func=_cmd_evolve)

    rd = sub.add_parser("reduce", help="integrate the reduced moduli flow")
    rd.add_argument("--zeros", required=True)
    rd.add_argument("--sigma", type=int, required=True, choices=(-1, 1))
    rd.add_argument("--tau-end", type=float, required=True)
    rd.add_argument("--dt", type=float, default=0.5)
    rd.add_argument("--area", type=float, default=None)
    rd.add_argument("--area-factor", type=float, default=8.0)
    rd.add_argument("--grid", type=int, default=48)
    rd.add_argument("--out", required=True)
    rd.set_defaults(func=_cmd_reduce)

    cp = sub.add_parser("compare", help="adiabatic-limit sweep over mu")
    cp.add_argument("--config", required=True)
    cp.add_argument("--out", default="compare_report.json")
    cp.set_defaults(func=_cmd_compare)

    ob = sub.add_parser("orbit", help="two-vortex orbit experiment")
    ob.add_argument("--config", required=True)
    ob.add_argument("--out", default="orbit_report.json")
    ob.set_defaults(func=_cmd_orbit)

    vf = sub.add_parser("verify", help="run the identity suite")
    vf.add_argument("--config", default=None)
    vf.set_defaults(func=_cmd_verify)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # runtime failure -> exit code 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
