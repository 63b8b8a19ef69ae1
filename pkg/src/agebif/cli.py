"""Command-line front end.

Subcommands: ``locate``, ``branch``, ``semitrivial``, ``verify``,
``convergence`` and ``nu-estimate``. Exit codes: 0 success, 2 configuration
error, 3 solver failure, 4 property or recheck failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .bifurcation import (BifurcationPoint, find_eta0, find_eta1, find_eta2, find_eta3,
                          locate, recheck, tangent_at)
from .coexistence import continue_branch
from .config import DEFAULTS, RunConfig, build_model, parse_config
from .errors import AgebifError, ConfigError
from .export import export_branch, field_l2, write_csv, write_json
from .model import make_model
from .semitrivial import branch_sweep, estimate_N, estimate_nu
from .spectral import constant_potential_radius
from .verify import run_all

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PROPERTY = 0, 2, 3, 4
RECHECK_TOL = 1e-8

_FLAG_KEYS = {
    "case": "case", "eta": "eta", "L": "L", "n_x": "n_x", "a_m": "a_m", "n_a": "n_a",
    "alpha1": "alpha1", "alpha2": "alpha2", "beta1": "beta1", "beta2": "beta2",
    "eta_max": "eta_max", "norm_cap": "norm_cap", "seed": "seed",
    "output_dir": "output_dir", "trials": "trials",
}


def _defaults_help() -> str:
    g, m, p = DEFAULTS["grid"], DEFAULTS["model"], DEFAULTS["params"]
    return (f"defaults: L={g['L']:g}, n_x={g['n_x']}, a_m={g['a_m']:g}, n_a={g['n_a']}, "
            f"alpha1=alpha2=beta1=beta2=1, case={m['case']}, xi={p['xi']:g}, "
            f"eta_max={p['eta_max']:g}, norm_cap={p['norm_cap']:g}, constant birth "
            f"profiles, seed=0, output_dir={DEFAULTS['output_dir']}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--case", choices=["cooperative", "competing", "predator_prey"])
    common.add_argument("--xi", type=float, nargs="+", help="one or more xi values")
    common.add_argument("--eta", type=float)
    for name in ("L", "a_m", "alpha1", "alpha2", "beta1", "beta2", "eta_max", "norm_cap"):
        common.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float)
    common.add_argument("--n-x", dest="n_x", type=int)
    common.add_argument("--n-a", dest="n_a", type=int)
    common.add_argument("--seed", type=int)
    common.add_argument("--trials", type=int)
    common.add_argument("--output-dir", dest="output_dir",
                        help="output directory (env AGEBIF_OUTPUT_DIR wins)")

    parser = argparse.ArgumentParser(prog="agebif", description=__doc__.split("\n\n")[0],
                                     epilog=_defaults_help())
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("locate", parents=[common], help="bifurcation values as JSON",
                       epilog=_defaults_help())
    p.add_argument("--jobs", type=int, default=1, help="parallel workers over xi values")
    p.add_argument("--recheck", metavar="FILE",
                   help="re-validate the points in a previous locate output")

    p = sub.add_parser("branch", parents=[common], help="continue a coexistence branch",
                       epilog=_defaults_help())
    p.add_argument("--start", choices=["eta0", "eta1", "eta2", "eta3"],
                   help="bifurcation point to start from (default: by case and xi)")

    p = sub.add_parser("semitrivial", parents=[common], help="semi-trivial sweep CSV",
                       epilog=_defaults_help())
    p.add_argument("--which", choices=["b1", "b2"], default="b1")
    p.add_argument("--etas", type=float, nargs="+")

    sub.add_parser("verify", parents=[common], help="property suite report",
                   epilog=_defaults_help())

    p = sub.add_parser("convergence", parents=[common], help="grid refinement study",
                       epilog=_defaults_help())
    p.add_argument("--levels", type=int, default=3, help="number of grid doublings")

    p = sub.add_parser("nu-estimate", parents=[common], help="nu and N ladders (ESTIMATE)",
                       epilog=_defaults_help())
    p.add_argument("--count", type=int, default=24, help="ladder length")
    return parser


def _overrides(args) -> dict:
    out = {}
    for attr, key in _FLAG_KEYS.items():
        val = getattr(args, attr, None)
        if val is not None:
            out[key] = val
    if getattr(args, "xi", None):
        out["xi"] = args.xi if len(args.xi) > 1 else args.xi[0]
    if getattr(args, "etas", None):
        out["etas"] = args.etas
    return out


def _out(cfg: RunConfig) -> Path:
    d = Path(cfg.output_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _locate_one(args):
    cfg, xi = args
    model = build_model(cfg)
    return [p.as_dict() for p in locate(model, xi)]


def cmd_locate(cfg: RunConfig, args) -> int:
    if args.recheck:
        return _cmd_recheck(cfg, args.recheck)
    xis = cfg.xis
    jobs = max(1, int(args.jobs))
    if jobs > 1 and len(xis) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            found = list(pool.map(_locate_one, [(cfg, x) for x in xis]))
    else:
        found = [_locate_one((cfg, x)) for x in xis]
    points = [p for group in found for p in group]
    data = {"config_hash": cfg.config_hash, "case": cfg.model["case"],
            "profile_scales": cfg.profile_scales or _scales(cfg), "points": points}
    write_json(_out(cfg) / "bifurcation_points.json", data)
    for p in points:
        print(f"{p['kind']}: eta = {p['eta']:.12g} (xi = {p['xi']:g}, residual {p['residual']:.2e})")
    return EXIT_OK


def _scales(cfg):
    build_model(cfg)
    return cfg.profile_scales


def _cmd_recheck(cfg: RunConfig, path: str) -> int:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        rows = data["points"]
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read bifurcation points from {path}: {exc}") from exc
    model = build_model(cfg)
    bad = 0
    out = []
    for row in rows:
        pt = BifurcationPoint(row["kind"], float(row["eta"]), float(row["xi"]),
                              row["base"], float(row["residual"]), row.get("case", ""))
        res = recheck(model, pt)
        ok = res < RECHECK_TOL
        bad += not ok
        out.append({**row, "recheck_residual": res, "ok": ok})
        print(f"{pt.kind} eta={pt.eta:.12g}: recheck residual {res:.2e} "
              f"{'ok' if ok else 'FAILED'}")
    write_json(_out(cfg) / "recheck.json", {"config_hash": cfg.config_hash, "points": out})
    return EXIT_OK if bad == 0 else EXIT_PROPERTY


def default_start(case: str, xi: float) -> str:
    if case == "competing":
        return "eta2"
    if case == "cooperative":
        return "eta0" if xi < 1 else "eta1"
    return "eta0" if xi < 1 else "eta2"


def cmd_branch(cfg: RunConfig, args) -> int:
    model = build_model(cfg)
    xi = cfg.xis[0]
    kind = args.start or default_start(cfg.model["case"], xi)
    finder = {"eta0": find_eta0, "eta1": find_eta1, "eta2": find_eta2, "eta3": find_eta3}[kind]
    point = finder(model, xi)
    branch = continue_branch(model, tangent_at(model, point))
    export_branch(branch, _out(cfg), cfg.config_hash, model.sg, model.ag)
    ep = branch.endpoint
    extra = f" at eta_hat = {ep.eta_hat:.12g}" if ep.eta_hat is not None else ""
    print(f"branch from {kind} = {point.eta:.12g}: {len(branch.points)} points, "
          f"endpoint {ep.kind}{extra} ({ep.reason})")
    return EXIT_OK


def cmd_semitrivial(cfg: RunConfig, args) -> int:
    model = build_model(cfg)
    which = args.which
    alpha = model.alpha1 if which == "b1" else model.beta1
    sols = branch_sweep(model, cfg.params["etas"], which=which)
    rows = []
    for s in sols:
        r = model.radius(alpha * s.field, which).radius
        rows.append([s.eta, s.sup, field_l2(model.sg, model.ag, s.field),
                     float(np.max(s.trace)), s.residual, abs(s.eta * r - 1.0)])
    write_csv(_out(cfg) / f"semitrivial_{which}.csv",
              ["eta", "sup", "l2", "trace_sup", "residual", "sp_residual"], rows)
    print(f"{len(rows)} semi-trivial solutions written")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, args) -> int:
    model = build_model(cfg)
    reports = run_all(model, int(cfg.params["trials"]), cfg.seed)
    data = {"config_hash": cfg.config_hash, "seed": cfg.seed,
            "reports": [r.as_dict() for r in reports],
            "passed": all(r.passed for r in reports)}
    write_json(_out(cfg) / "verify_report.json", data)
    for r in reports:
        print(f"{r.name}: {r.trials} trials, {r.failures} failures, "
              f"worst violation {r.worst_violation:.3e}")
    return EXIT_OK if data["passed"] else EXIT_PROPERTY


def cmd_convergence(cfg: RunConfig, args) -> int:
    g, m = cfg.grid, cfg.model
    rows = []
    n_x, n_a = max(3, g["n_x"] // 2 ** (args.levels - 1)), max(2, g["n_a"] // 2 ** (args.levels - 1))
    for _ in range(args.levels):
        model = make_model(m["case"], g["L"], n_x, g["a_m"], n_a, m["alpha1"], m["alpha2"],
                           m["beta1"], m["beta2"])
        lam = model.eig.lambda1
        r0 = model.radius(0.0).radius
        c = 5.0
        exact = constant_potential_radius(model.b1, model.ag, (math.pi / g["L"]) ** 2, c)
        rc = model.radius(c).radius
        rows.append([n_x, n_a, model.sg.h, model.ag.da, lam,
                     abs(lam - (math.pi / g["L"]) ** 2), abs(r0 - 1.0), abs(rc - exact) / rc])
        n_x, n_a = 2 * n_x + 1, 2 * n_a
    write_csv(_out(cfg) / "convergence.csv",
              ["n_x", "n_a", "h", "da", "lambda1", "lambda1_error", "r_H0_error",
               "r_H5_rel_error"], rows)
    print(f"{len(rows)} refinement levels written")
    return EXIT_OK


def cmd_nu_estimate(cfg: RunConfig, args) -> int:
    model = build_model(cfg)
    nu = estimate_nu(model, cfg.params["eta_max"], args.count)
    big_n = estimate_N(model, cfg.params["eta_max"], args.count)
    rows = [[e, a, b, "ESTIMATE"] for e, a, b in zip(nu.etas, nu.values, big_n.values)]
    write_csv(_out(cfg) / "nu_estimate.csv", ["eta", "nu_ladder", "N_ladder", "flag"], rows)
    write_json(_out(cfg) / "nu_estimate_meta.json", {
        "config_hash": cfg.config_hash, "flag": "ESTIMATE",
        "nu": nu.value, "N": big_n.value, "cutoff_eta": nu.cutoff,
        "requested_eta_max": cfg.params["eta_max"], "truncated": nu.truncated,
    })
    print(f"nu ~ {nu.value:.6g}, N ~ {big_n.value:.6g} at cutoff eta = {nu.cutoff:.6g} (ESTIMATE)")
    return EXIT_OK


COMMANDS = {
    "locate": cmd_locate, "branch": cmd_branch, "semitrivial": cmd_semitrivial,
    "verify": cmd_verify, "convergence": cmd_convergence, "nu-estimate": cmd_nu_estimate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = parse_config(args.config, _overrides(args))
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AgebifError as exc:
        print(f"solver failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
