"""Command-line front end: ``nhk <simulate|verify|hj|report>``.

Exit status is 0 when every check passes, 1 when a check fails or a runtime
error is raised, and 2 for configuration errors.  Errors are printed to
stderr as a JSON object ``{"error": code, "message": text}``.
"""
import argparse
import csv
import json
import os
import sys

import numpy as np

from . import hamiltonization as hz
from . import second_stage as ss
from . import verification as vf
from .dynamics import (IntegratorConfig, canonical_json, integrate, integrate_ode, monitor,
                       write_manifest, write_trajectory_csv)
from .errors import ConfigError, InvalidConstants, InvalidParameters, NHKError
from .systemfile import load_system
from .systems import REGISTRY, build

CONFIG_ERRORS = (ConfigError, InvalidParameters, InvalidConstants)
CHECK_TOL = 1e-7


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _kv(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    try:
        return k.strip(), float(v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"value for {k} must be numeric") from None


def _floats(text):
    try:
        return [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def make_parser():
    common = _Parser(add_help=False)
    common.add_argument("--system", default=None, help="builtin name or path to a system JSON file")
    common.add_argument("--param", action="append", type=_kv, default=[], metavar="K=V")
    common.add_argument("--config", default=None, help="JSON file of option defaults")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--seed", type=int, default=0)

    p = _Parser(prog="nhk", description="Nonholonomic Chaplygin systems: simulation and checks.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    sim = sub.add_parser("simulate", parents=[common], help="integrate a trajectory")
    sim.add_argument("--t-end", type=float, default=5.0)
    sim.add_argument("--dt", type=float, default=1e-3)
    sim.add_argument("--scheme", choices=["RK4", "RK45"], default="RK4")
    sim.add_argument("--mode", choices=["full", "reduced", "hamiltonized"], default="full")
    sim.add_argument("--projection", action="store_true")
    sim.add_argument("--qbar0", type=_floats, default=None)
    sim.add_argument("--pbar0", type=_floats, default=None)

    for name, helptext in (("verify", "run every check suite"), ("report", "checks plus H-J, aggregated")):
        v = sub.add_parser(name, parents=[common], help=helptext)
        v.add_argument("--points", type=int, default=200)
        v.add_argument("--fiber-draws", type=int, default=20)

    h = sub.add_parser("hj", parents=[common], help="solve, transfer and verify a Hamilton-Jacobi solution")
    h.add_argument("--energy", type=float, default=None)
    h.add_argument("--gamma-phi0", type=float, default=None)
    h.add_argument("--gamma-psi0", type=float, default=None)
    h.add_argument("--mu-psi", type=float, default=None)
    h.add_argument("--sign", type=int, choices=[-1, 1], default=1)
    h.add_argument("--samples", type=int, default=200)
    return p


def _apply_config(parser, argv):
    """Re-parse with defaults taken from --config, so explicit flags still win."""
    args = parser.parse_args(argv)
    if args.command is None:
        raise ConfigError("a subcommand is required: simulate, verify, hj or report")
    if not args.config:
        return args
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    known = vars(args)
    defaults = {}
    for key, val in cfg.items():
        dest = key.replace("-", "_")
        if dest == "params":
            if not isinstance(val, dict):
                raise ConfigError("params must be an object")
            continue
        if dest not in known or dest in ("command", "config"):
            raise ConfigError(f"unknown config key {key!r}")
        defaults[dest] = val
    sub = parser._subparsers._group_actions[0].choices[args.command]
    sub.set_defaults(**defaults)
    args = parser.parse_args(argv)
    cli_params = dict(args.param)
    args.param = list({**{k: float(v) for k, v in cfg.get("params", {}).items()}, **cli_params}.items())
    return args


def _bundle(args):
    if not args.system:
        raise ConfigError("--system is required")
    params = dict(args.param)
    if args.system in REGISTRY:
        return build(args.system, params)
    if args.system.endswith(".json") or os.path.exists(args.system):
        if not os.path.exists(args.system):
            raise ConfigError(f"no such file {args.system!r}")
        doc = _read_json(args.system)
        doc.setdefault("params", {}).update(params)
        return load_system(doc)
    raise ConfigError(f"unknown system {args.system!r}; choose from {sorted(REGISTRY)} or give a JSON file")


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def _out_dir(args):
    out = args.out or os.path.join("runs", args.command)
    os.makedirs(out, exist_ok=True)
    return out


def _write(path, payload):
    with open(path, "w") as fh:
        fh.write(canonical_json(payload))


def _check(name, value, tol=CHECK_TOL):
    return vf.record(name, value, tol)


# ------------------------------------------------------------------ simulate

def _initial_reduced(bundle, args):
    qbar, pbar = bundle.initial_reduced or ([0.0] * bundle.reduced.reduced_dim,) * 2
    qbar = np.asarray(args.qbar0 if args.qbar0 is not None else qbar, dtype=float)
    pbar = np.asarray(args.pbar0 if args.pbar0 is not None else pbar, dtype=float)
    n = bundle.reduced.reduced_dim
    if qbar.shape != (n,) or pbar.shape != (n,):
        raise ConfigError(f"initial reduced state needs {n} coordinates and {n} momenta")
    return qbar, pbar


def _write_reduced_csv(path, times, Z, coords, energy):
    header = ["t"] + list(coords) + ["p_" + c for c in coords] + ["H"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for t, z, e in zip(times, Z, energy):
            w.writerow([repr(float(x)) for x in (t, *z, e)])


def cmd_simulate(args, bundle):
    try:
        cfg = IntegratorConfig(scheme=args.scheme, dt=args.dt, t_end=args.t_end, projection=args.projection)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    out = _out_dir(args)
    qbar, pbar = _initial_reduced(bundle, args)
    checks = []
    extra = {}
    if args.mode == "full":
        state = bundle.reduced.lift_state(qbar, pbar)
        traj = integrate(bundle.system, state, cfg)
        write_trajectory_csv(os.path.join(out, "trajectory.csv"), traj)
        diag = monitor(traj, bundle.system)
        checks += [_check("energy_drift", diag["energy_drift"]),
                   _check("constraint_residual", diag["constraint_residual"])]
        extra["diagnostics"] = diag
    else:
        rs, f = bundle.reduced, bundle.multiplier
        tilde = args.mode == "hamiltonized" and bundle.tilde is not None and bundle.tilde.f_mu is not None
        if args.mode == "hamiltonized" and not tilde and f is None:
            raise ConfigError(f"{bundle.name} has no reducing multiplier")
        if tilde:
            setup, t = bundle.second_stage, bundle.tilde
            pb = pbar.copy()
            pb[list(setup.k_idx)] = setup.mu
            qt, pt = ss.phi_mu(setup, qbar, pb)
            z0 = np.concatenate([qt, hz.psi_f(t.f_mu, qt, pt, "forward")])
            field, coords = hz.chaplygin_field_z(t, t.f_mu), t.reduced_coords
            n = t.reduced_dim
            H = lambda z: ss.second_chaplygin_hamiltonian(t, z[:n], z[n:])  # noqa: E731
        elif args.mode == "hamiltonized":
            n = rs.reduced_dim
            z0 = np.concatenate([qbar, hz.psi_f(f, qbar, pbar, "forward")])
            field, coords = hz.chaplygin_field_z(rs, f), rs.reduced_coords
            H = lambda z: hz.chaplygin_hamiltonian(rs, f, z[:n], z[n:])  # noqa: E731
        else:
            n = rs.reduced_dim
            z0 = np.concatenate([qbar, pbar])
            field, coords, H = rs.field_z, rs.reduced_coords, rs.hamiltonian_z
        times, Z = integrate_ode(field, z0, cfg)
        energy = np.array([float(H(z)) for z in Z])
        _write_reduced_csv(os.path.join(out, "trajectory.csv"), times, Z, coords, energy)
        drift = float(np.max(np.abs(energy - energy[0])))
        checks.append(_check("energy_drift", drift))
        if bundle.second_stage is not None and args.mode == "reduced":
            k = list(bundle.second_stage.k_idx)
            jk = Z[:, n:][:, k]
            checks.append(_check("momentum_drift", float(np.max(np.abs(jk - jk[0]))), 1e-8))
        extra["diagnostics"] = {"energy_drift": drift, "samples": len(times)}
    config = dict(cfg.to_dict(), mode=args.mode, seed=args.seed,
                  qbar0=qbar.tolist(), pbar0=pbar.tolist())
    write_manifest(os.path.join(out, "manifest.json"), bundle.name, bundle.params, config)
    report = {"command": "simulate", "system": bundle.name, "checks": checks, **extra}
    _write(os.path.join(out, "report.json"), report)
    return all(c["pass"] for c in checks), report


# ------------------------------------------------------------------ verify / report

def cmd_verify(args, bundle):
    if args.points < 1 or args.fiber_draws < 1:
        raise ConfigError("--points and --fiber-draws must be positive")
    out = _out_dir(args)
    checks = vf.run_all(bundle, seed=args.seed, points=args.points, fiber_draws=args.fiber_draws)
    report = {"command": args.command, "system": bundle.name, "params": bundle.params,
              "seed": args.seed, "checks": checks,
              "summary": {"total": len(checks), "passed": sum(c["pass"] for c in checks)}}
    if args.command == "report":
        report["hj"] = _hj_payload(bundle, args, {}, None, 1, min(args.points, 50))
        report["summary"]["all_pass"] = all(c["pass"] for c in checks) and report["hj"]["pass"]
    _write(os.path.join(out, "report.json"), report)
    write_manifest(os.path.join(out, "manifest.json"), bundle.name, bundle.params,
                   {"command": args.command, "seed": args.seed, "points": args.points,
                    "fiber_draws": args.fiber_draws})
    ok = all(c["pass"] for c in checks)
    if "hj" in report:
        ok = ok and report["hj"]["pass"]
    return ok, report


# ------------------------------------------------------------------ hj

def _hj_constants(bundle, args):
    c = {}
    for key in ("gamma_phi0", "gamma_psi0", "mu_psi"):
        val = getattr(args, key, None)
        if val is not None:
            c[key] = val
    if "mu_psi" in c and bundle.second_stage is not None:
        # the level is part of the second-stage setup, so rebuild it at the requested value
        setup = bundle.second_stage
        setup = ss.SecondStageSetup(setup.rsys, setup.k_idx, [c["mu_psi"]], setup.f_mu, setup.labels)
        bundle.second_stage, bundle.tilde = setup, ss.TildeSystem(setup)
    return c


def _hj_payload(bundle, args, constants, energy, sign, samples):
    if not bundle.hj_defaults:
        raise ConfigError(f"no separable solution is registered for {bundle.name!r}")
    rng = np.random.default_rng(args.seed)
    grid = {"points": samples, "seed": args.seed}
    checks, sol, gamma = vf.hj_suite(bundle, rng, samples, grid, energy, constants, sign)
    return {"energy": sol.energy, "constants": sol.constants, "admissible": sol.admissible,
            "checks": checks, "pass": all(c["pass"] for c in checks)}


def cmd_hj(args, bundle):
    if args.samples < 1:
        raise ConfigError("--samples must be positive")
    out = _out_dir(args)
    constants = _hj_constants(bundle, args)
    payload = _hj_payload(bundle, args, constants, args.energy, args.sign, args.samples)
    sol, gamma, _ = vf.hj_solution(bundle, args.energy, constants, args.sign)
    rng = np.random.default_rng(args.seed)
    Q = bundle.sample_q(rng, min(args.samples, 20))
    names = list(bundle.system.coord_names)
    with open(os.path.join(out, "gamma_samples.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names + ["gamma_" + c for c in names])
        for q in Q:
            try:
                g = gamma(q)
            except NHKError:
                g = np.full(len(names), np.nan)
            w.writerow([repr(float(x)) for x in (*q, *g)])
    report = {"command": "hj", "system": bundle.name, "params": bundle.params, "seed": args.seed, **payload}
    _write(os.path.join(out, "hj.json"), report)
    write_manifest(os.path.join(out, "manifest.json"), bundle.name, bundle.params,
                   {"command": "hj", "seed": args.seed, "samples": args.samples, "sign": args.sign,
                    "energy": sol.energy, "constants": sol.constants})
    return payload["pass"], report


COMMANDS = {"simulate": cmd_simulate, "verify": cmd_verify, "report": cmd_verify, "hj": cmd_hj}


def _fail(exc, status):
    sys.stderr.write(json.dumps(exc.to_dict(), sort_keys=True) + "\n")
    return status


def main(argv=None):
    parser = make_parser()
    try:
        args = _apply_config(parser, argv)
        bundle = _bundle(args)
        ok, report = COMMANDS[args.command](args, bundle)
    except CONFIG_ERRORS as exc:
        return _fail(exc, 2)
    except NHKError as exc:
        return _fail(exc, 1)
    except OSError as exc:
        return _fail(ConfigError(str(exc)), 2)
    failed = [c["check"] for c in report.get("checks", []) if not c["pass"]]
    summary = {"command": args.command, "system": bundle.name, "pass": bool(ok), "failed": failed}
    sys.stdout.write(json.dumps(summary, sort_keys=True) + "\n")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
