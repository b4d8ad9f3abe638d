"""Command-line interface.

Exit codes: 0 success, 1 validation failure, 2 numerical failure,
3 I/O or parse error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import formats
from .analysis import boundary_actuation_experiment, lyapunov_report, verify_consensus
from .compartmental import assemble
from .crn import (
    balance,
    conserved_moieties,
    stoichiometric_matrix,
)
from .errors import NotConverged, NumericalError, ParseError, ValidationError
from .integrate import IntegratorConfig, detect_convergence, integrate, monitor_persistency
from .mesh import circumcentric_dual, hodge_star_0, hodge_star_1, is_well_centered

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("rdnet")


def _load_network(path):
    net, x_star = formats.parse_network(path)
    return net, balance(net, x_star)


def _initial_state(args, sys_):
    if args.x0:
        if args.x0.lstrip().startswith("["):
            data = json.loads(args.x0)
        else:
            data = formats._load_json(args.x0)
        X0 = np.asarray(data, dtype=float).reshape(-1)
        if X0.size == sys_.n_species:
            X0 = np.tile(X0, sys_.n_compartments)
        return X0
    rng = np.random.default_rng(args.seed)
    return rng.uniform(0.1, 10.0, sys_.layout.size)


def _config(args, **extra):
    return IntegratorConfig(
        method=args.method,
        rtol=args.rtol,
        atol=args.atol,
        t_end=args.t_end,
        **extra,
    )


def _emit(obj, out):
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def cmd_validate(args):
    net, bf = _load_network(args.network)
    print(f"network ok: {net.n_species} species, {net.n_complexes} complexes, "
          f"{net.n_reactions} reactions")
    print(f"x* = {bf.x_star.tolist()}")
    if args.mesh:
        K = formats.parse_mesh(args.mesh)
        circumcentric_dual(K)
        print(f"mesh ok: N = {K.n_vertices}, N_e = {K.n_edges}, well-centered")
    return EXIT_OK


def cmd_equilibrium(args):
    net, bf = _load_network(args.network)
    S = stoichiometric_matrix(net)
    W = conserved_moieties(S)
    _emit(
        {
            "x_star": bf.x_star.tolist(),
            "kappa": bf.kappa.tolist(),
            "stoichiometric_matrix": S.tolist(),
            "moieties": W.tolist(),
            "equilibria": "positive x with S^T ln x = S^T ln x_star "
                          f"({S.shape[1]} conditions, {W.shape[0]}-dimensional family)",
        },
        args.out,
    )
    return EXIT_OK


def cmd_mesh_info(args):
    K = formats.parse_mesh(args.mesh)
    wc = is_well_centered(K)
    info = {"dimension": K.dimension, "N": K.n_vertices, "N_e": K.n_edges,
            "N_b": K.n_boundary, "well_centered": wc}
    if not wc:
        print(json.dumps(info, indent=2, sort_keys=True))
    dual = circumcentric_dual(K)
    info["star0"] = hodge_star_0(K, dual).tolist()
    info["star1"] = hodge_star_1(K, dual).tolist()
    _emit(info, args.out)
    return EXIT_OK


def cmd_simulate(args):
    net, bf = _load_network(args.network)
    K = formats.parse_mesh(args.mesh)
    sys_ = assemble(net, bf, K)
    X0 = _initial_state(args, sys_)
    cfg = _config(args)
    if args.boundary_schedule:
        schedule = formats.parse_schedule(args.boundary_schedule)
        traj, _ = boundary_actuation_experiment(sys_, schedule, cfg, X0)
    else:
        traj = integrate(sys_, X0, cfg)
    meta = {"network_hash": formats.network_hash(net), "mesh_hash": formats.mesh_hash(K),
            "model": "open" if args.boundary_schedule else "closed"}
    fmt = args.format or ("csv" if str(args.out).endswith(".csv") else "json")
    formats.export_trajectory(traj, fmt, args.out, meta)
    p = monitor_persistency(traj)
    status = detect_convergence(traj)
    lyap = lyapunov_report(traj, sys_)
    print(f"steps: {len(traj) - 1}, t_end: {traj.times[-1]:.6g}, termination: {traj.termination}")
    print(f"status: {status.value}")
    print(f"G_d: {traj.energy[0]:.6g} -> {traj.energy[-1]:.6g} (max step increase {lyap.max_increase:.3e})")
    print(f"min concentration: {p.min_value:.6g} at t={p.time:.6g} "
          f"(compartment {p.compartment + 1}, species {p.species_name or p.species})")
    print(f"trajectory written to {args.out}")
    return EXIT_OK


def cmd_analyze(args):
    net, bf = _load_network(args.network)
    K = formats.parse_mesh(args.mesh)
    sys_ = assemble(net, bf, K)
    X0 = _initial_state(args, sys_)
    cfg = _config(args, stop_on_steady=True)
    try:
        rep = verify_consensus(sys_, X0, cfg, cfg.eps_consensus, cfg.eps_stationary)
    except NotConverged as exc:
        if exc.report is not None:
            _emit(exc.report.to_dict(), args.out)
        raise
    print(rep.status.value)
    print(f"final disagreement:   {rep.final_disagreement:.3e}")
    print(f"membership residual:  {rep.membership_residual:.3e}")
    print(f"prediction error:     {rep.prediction_error:.3e}")
    print(f"lyapunov violation:   {rep.lyapunov_violation:.3e}")
    print(f"conservation drift:   {np.max(rep.conservation_drift, initial=0.0):.3e}")
    if args.out:
        _emit(rep.to_dict(), args.out)
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="rdnet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("validate", help="parse inputs and check invariants")
    s.add_argument("network")
    s.add_argument("--mesh")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("equilibrium", help="thermodynamic equilibrium, kappa, moieties")
    s.add_argument("network")
    s.add_argument("--out")
    s.set_defaults(func=cmd_equilibrium)

    s = sub.add_parser("mesh-info", help="mesh sizes, well-centeredness, Hodge stars")
    s.add_argument("mesh")
    s.add_argument("--out")
    s.set_defaults(func=cmd_mesh_info)

    def sim_args(s, out_required):
        s.add_argument("network")
        s.add_argument("mesh")
        s.add_argument("--t-end", type=float, default=50.0)
        s.add_argument("--rtol", type=float, default=1e-8)
        s.add_argument("--atol", type=float, default=1e-10)
        s.add_argument("--method", default="rk45",
                       choices=["rk45", "semi-implicit", "explicit-embedded-RK45",
                                "semi-implicit-diffusion"])
        s.add_argument("--x0", help="JSON list (inline or file) with m*N, or m replicated, initial values")
        s.add_argument("--seed", type=int, default=0,
                       help="seed for a uniform [0.1, 10] initial state when --x0 is absent")
        s.add_argument("--out", required=out_required)

    s = sub.add_parser("simulate", help="integrate the closed or open model")
    sim_args(s, True)
    s.add_argument("--boundary-schedule", help="JSON flux schedule; runs the open model")
    s.add_argument("--format", choices=["csv", "json"])
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("analyze", help="verify spatial consensus of the closed model")
    sim_args(s, False)
    s.set_defaults(func=cmd_analyze)
    return p


def cli(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ParseError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_IO


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
