"""Command-line front end.

Every subcommand writes its artifacts into the output directory and records
them in ``manifest.json``.  Errors are reported as one JSON object on stderr
with exit status 1 (configuration), 2 (domain or infeasible target), 3
(budget exceeded) or 4 (a verification check failed).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from .domain import MacroState, ThermoParams
from .errors import BudgetError, ConfigError, GcdualError, InfeasibleError
from .io import ArtifactWriter, RunConfig, build_config, dumps, read_config_file, read_points_csv

EXIT_OK, EXIT_CONFIG, EXIT_DOMAIN, EXIT_BUDGET, EXIT_CHECK = 0, 1, 2, 3, 4

# config keys exposed as flags: (flag, dest, type, nargs)
_CONFIG_FLAGS = [
    ("--potential", "kind", str, None),
    ("--sigma", "sigma", float, None),
    ("--epsilon", "epsilon", float, None),
    ("--cutoff", "cutoff", float, None),
    ("--side", "side", float, None),
    ("--sides", "sides", float, 3),
    ("--l-min", "l_min", int, None),
    ("--l-max", "l_max", int, None),
    ("--R0", "R0", float, None),
    ("--rho-exp", "rho_exp", float, None),
    ("--grad-tol", "grad_tol", float, None),
    ("--tail-eps", "tail_eps", float, None),
    ("--iter-cap", "iter_cap", int, None),
    ("--n-cap", "n_cap", int, None),
    ("--samples", "samples", int, None),
    ("--trials", "trials", int, None),
    ("--batches", "batches", int, None),
    ("--beta-ref", "beta_ref", float, None),
    ("--seed", "seed", int, None),
    ("--n-max", "n_max", int, None),
    ("--feasible-tol", "feasible_tol", float, None),
    ("--resolution", "resolution", int, None),
    ("--out", "out", str, None),
]


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _axis(spec: str) -> np.ndarray:
    try:
        lo, hi, n = spec.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError:
        raise ConfigError(f"axis spec must be lo:hi:n, got {spec!r}") from None


def _workers() -> int:
    raw = os.environ.get("GCDUAL_WORKERS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ConfigError(f"GCDUAL_WORKERS must be an integer, got {raw!r}") from None


def _params(args) -> ThermoParams:
    return ThermoParams(args.mu, args.lam, args.beta).check()


def _targets(args) -> list:
    csv_path = getattr(args, "targets", None) or getattr(args, "points", None)
    if csv_path:
        return read_points_csv(csv_path)
    if args.rho is None or args.E is None:
        raise ConfigError("give --rho and --E (and optionally --u), or a CSV file")
    return [MacroState(args.rho, args.u, args.E)]


# ---------------------------------------------------------------------------
# subcommands


def cmd_eval_phi(args, cfg: RunConfig, out: ArtifactWriter) -> int:
    from .partition import log_partition

    est = log_partition(cfg.potential(), cfg.box(), _params(args), **cfg.model_opts())
    est.seed = cfg.seed
    out.json("eval-phi.json", est.to_dict())
    print(dumps({"phi": est.phi, "grad": est.grad, "n_max": est.n_max, "method": est.method}))
    return EXIT_OK


def cmd_moments(args, cfg: RunConfig, out: ArtifactWriter) -> int:
    from .partition import log_partition

    est = log_partition(cfg.potential(), cfg.box(), _params(args), **cfg.model_opts())
    rec = {"params": est.params.to_dict(), "box": cfg.box().to_dict(), "moments": est.macro().to_dict()}
    out.json("moments.json", rec)
    print(dumps(rec["moments"]))
    return EXIT_OK


def _solve_one(task):
    cfg_dict, target = task
    from .dual import solve_dual

    cfg = RunConfig(**{**cfg_dict, "sides": tuple(cfg_dict["sides"]) if cfg_dict["sides"] else None})
    try:
        sol = solve_dual(target, cfg.potential(), cfg.box(), tol=cfg.grad_tol, max_iter=cfg.iter_cap,
                         **cfg.model_opts())
        return sol.to_dict(), EXIT_OK
    except InfeasibleError as exc:
        return {"target": target.to_dict(), "error": "InfeasibleError", "message": str(exc)}, EXIT_DOMAIN
    except BudgetError as exc:
        return {"target": target.to_dict(), "error": "BudgetError", "message": str(exc)}, EXIT_BUDGET


def _map(fn, tasks):
    n = _workers()
    if n == 1 or len(tasks) == 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, tasks))  # ordered, so output is independent of scheduling


def cmd_solve_dual(args, cfg: RunConfig, out: ArtifactWriter) -> int:
    targets = _targets(args)
    results = _map(_solve_one, [(cfg.to_dict(), t) for t in targets])
    records = [r for r, _ in results]
    status = max(s for _, s in results)
    if len(targets) == 1:
        out.json("solve-dual.json", records[0])
        if status:
            rec = records[0]
            code = InfeasibleError if status == EXIT_DOMAIN else BudgetError
            raise code(rec["message"])
        print(dumps(records[0]))
        return EXIT_OK
    out.json("solve-dual.json", records)
    print(dumps({"solved": sum(s == 0 for _, s in results), "total": len(results)}))
    return status


def _classify(task):
    cfg_dict, point = task
    from .feasible import FeasibilityVerdict, membership, rough_bound_check

    cfg = RunConfig(**{**cfg_dict, "sides": tuple(cfg_dict["sides"]) if cfg_dict["sides"] else None})
    pot = cfg.potential()
    if not rough_bound_check(point, pot):
        # a necessary condition fails; g_rho >= 0 and H >= -L N on every generator give the witness
        if point.rho <= 0:
            witness, margin = np.array([1.0, 0.0, 0.0, 0.0, 0.0]), point.rho
        else:
            witness, margin = np.array([pot.stability_L, 0.0, 0.0, 0.0, 1.0]), point.E + pot.stability_L * point.rho
        return FeasibilityVerdict("exterior", float(margin), witness, cfg.n_max, {"rough_bound": False})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return membership(point, pot, cfg.box(), n_max=cfg.n_max, tol=cfg.feasible_tol,
                          resolution=cfg.resolution, seed=cfg.seed)


def cmd_feasible(args, cfg: RunConfig, out: ArtifactWriter) -> int:
    points = _targets(args)
    verdicts = _map(_classify, [(cfg.to_dict(), p) for p in points])
    rows = []
    for p, v in zip(points, verdicts):
        w = v.witness if v.witness is not None else [float("nan")] * 5
        rows.append([p.rho, *p.u, p.E, v.status, v.margin, *w])
    out.csv("feasible.csv", ["rho", "ux", "uy", "uz", "E", "status", "margin",
                             "w_rho", "w_ux", "w_uy", "w_uz", "w_E"], rows)
    records = [{"point": p.to_dict(), **v.to_dict()} for p, v in zip(points, verdicts)]
    out.json("feasible.json", records)
    for p, v in zip(points, verdicts):
        print(f"{p.rho:.6g},{p.u[0]:.6g},{p.u[1]:.6g},{p.u[2]:.6g},{p.E:.6g},{v.status},{v.margin:.6g}")
    return EXIT_OK if all(v.interior for v in verdicts) else EXIT_DOMAIN


def cmd_conjugate(args, cfg: RunConfig, out: ArtifactWriter) -> int:
    from .legendre import GridFunction, biconjugate, lft
    from .thermo_limit import pressure_grid

    if args.input:
        f = GridFunction.load(args.input)
    else:
        specs = [args.mu_axis, args.lx_axis, args.ly_axis, args.lz_axis, args.beta_axis]
        if any(s is None for s in specs):
            raise ConfigError("give --input or all five of --mu-axis --lx-axis --ly-axis --lz-axis --beta-axis")
        axes = [_axis(s) for s in specs]
        if axes[4][-1] >= 0:
            raise ConfigError("the beta axis must stay below 0")
        f = pressure_grid(cfg.potential(), axes, cfg.box(), **cfg.model_opts())
        for p in f.save(out.dir / "phi"):
            out.register(p)
    dual = [_axis(s) for s in args.dual_axis] if args.dual_axis else None
    if dual is not None and len(dual) != f.ndim:
        raise ConfigError(f"need {f.ndim} --dual-axis specs, got {len(dual)}")
    g = biconjugate(f, dual) if args.biconjugate else lft(f, dual)
    name = "biconjugate" if args.biconjugate else "conjugate"
    for p in g.save(out.dir / name):
        out.register(p)
    finite = np.isfinite(g.values)
    print(dumps({"output": name, "shape": list(g.values.shape), "finite": int(finite.sum()),
                 "tolerance": g.meta.get("tolerance", g.grid_tolerance())}))
    return EXIT_OK


def cmd_limit_sweep(args, cfg: RunConfig, out: ArtifactWriter) -> int:
    from .thermo_limit import box_sequence, parameter_convergence

    target = _targets(args)[0]
    seq = box_sequence(cfg.l_min, cfg.l_max, cfg.R0, cfg.rho_exp)
    rec = parameter_convergence(target, cfg.potential(), seq, tol=cfg.grad_tol, max_iter=cfg.iter_cap,
                                **cfg.model_opts())
    out.json("limit-sweep.json", {"sequence": seq.to_dict(), **rec.to_dict()})
    out.csv("limit-sweep.csv", ["l", "volume", "mu", "lx", "ly", "lz", "beta", "phi", "entropy", "cauchy_diff"],
            rec.rows())
    print(dumps({"levels": rec.levels, "cauchy_diffs": rec.cauchy_diffs, "failures": rec.failures}))
    if not rec.solved_levels():
        raise InfeasibleError("target is infeasible at every level")
    return EXIT_OK


def _region_samples(args, cfg: RunConfig):
    from .potentials import analyticity_bound

    if args.params:
        rows = np.loadtxt(args.params, delimiter=",", ndmin=2, comments="#")
        if rows.shape[1] != 5:
            raise ConfigError("parameter CSV must have columns mu,lx,ly,lz,beta")
        return rows
    rng = np.random.default_rng(cfg.seed)
    pot = cfg.potential()
    out = []
    while len(out) < args.n_samples:
        lam = rng.normal(0, 0.5, 3)
        beta = rng.uniform(-2.5, -0.5)
        bound = analyticity_bound(pot, lam, beta)
        hi = 0.5 if bound.degenerate else bound.mu_max - 0.5
        out.append(np.r_[rng.uniform(hi - 2.5, hi), lam, beta])
    return np.array(out)


def cmd_homeo_check(args, cfg: RunConfig, out: ArtifactWriter) -> int:
    from .thermo_limit import box_sequence, homeomorphism_check

    seq = box_sequence(cfg.l_min, cfg.l_max, cfg.R0, cfg.rho_exp)
    rep = homeomorphism_check(cfg.potential(), _region_samples(args, cfg), seq, **cfg.model_opts())
    out.json("homeo-check.json", rep.to_dict())
    print(dumps({"passed": rep.passed, "max_error": float(rep.errors.max()),
                 "min_tolerance": float(rep.tolerances.min()), "collisions": len(rep.collisions)}))
    return EXIT_OK if rep.passed else EXIT_CHECK


def cmd_selftest(args, cfg: RunConfig, out: ArtifactWriter) -> int:
    from .selftest import run_all

    results = run_all(quick=args.quick, seed=cfg.seed)
    for r in results:
        print(r.line())
    # wall-clock time is left out of the artifact so reruns are byte-identical
    out.json("selftest.json", [{k: v for k, v in r.to_dict().items() if k != "seconds"} for r in results])
    return EXIT_OK if all(r.passed for r in results) else EXIT_CHECK


COMMANDS = {
    "eval-phi": cmd_eval_phi,
    "moments": cmd_moments,
    "solve-dual": cmd_solve_dual,
    "feasible": cmd_feasible,
    "conjugate": cmd_conjugate,
    "limit-sweep": cmd_limit_sweep,
    "homeo-check": cmd_homeo_check,
    "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="key = value configuration file")
    for flag, dest, typ, nargs in _CONFIG_FLAGS:
        common.add_argument(flag, dest=dest, type=typ, nargs=nargs, default=None)

    parser = _Parser(prog="gcdual", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def params_args(p):
        p.add_argument("--mu", type=float, required=True)
        p.add_argument("--lambda", dest="lam", type=float, nargs=3, default=[0.0, 0.0, 0.0])
        p.add_argument("--beta", type=float, required=True)

    def target_args(p, csv_flag):
        p.add_argument("--rho", type=float)
        p.add_argument("--u", type=float, nargs=3, default=[0.0, 0.0, 0.0])
        p.add_argument("--E", type=float)
        p.add_argument(csv_flag, help="CSV file with columns rho,ux,uy,uz,E")

    p = sub.add_parser("eval-phi", parents=[common], help="Phi, gradient and error bars at one parameter point")
    params_args(p)
    p = sub.add_parser("moments", parents=[common], help="grand-canonical moments at one parameter point")
    params_args(p)
    p = sub.add_parser("solve-dual", parents=[common], help="dual parameters for target moments")
    target_args(p, "--targets")
    p = sub.add_parser("feasible", parents=[common], help="classify targets against the solvable set")
    target_args(p, "--points")
    p = sub.add_parser("conjugate", parents=[common], help="discrete Legendre transform of a grid function")
    p.add_argument("--input", help="grid function saved as JSON header plus CSV")
    for name in ("mu", "lx", "ly", "lz", "beta"):
        p.add_argument(f"--{name}-axis", help="lo:hi:n axis for tabulating Phi")
    p.add_argument("--dual-axis", action="append", help="lo:hi:n, once per dimension")
    p.add_argument("--biconjugate", action="store_true")
    p = sub.add_parser("limit-sweep", parents=[common], help="dual parameters along the box sequence")
    target_args(p, "--targets")
    p = sub.add_parser("homeo-check", parents=[common], help="round trip through the pressure and entropy gradients")
    p.add_argument("--params", help="CSV file with columns mu,lx,ly,lz,beta")
    p.add_argument("--n-samples", type=int, default=20)
    p = sub.add_parser("selftest", parents=[common], help="closed-form ideal-gas checks")
    p.add_argument("--quick", action="store_true", help="smaller samples")
    return parser


def _config_from_args(args) -> RunConfig:
    values = read_config_file(args.config) if args.config else {}
    flags = {dest: getattr(args, dest) for _, dest, _, _ in _CONFIG_FLAGS}
    if flags["sides"] is not None:
        flags["sides"] = tuple(flags["sides"])
    return build_config(values, flags)


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, (ConfigError, FileNotFoundError)):
        return EXIT_CONFIG
    if isinstance(exc, BudgetError):
        return EXIT_BUDGET
    return EXIT_DOMAIN


def main(argv=None) -> int:
    command, cfg, out = None, None, None
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        cfg = _config_from_args(args)
        out = ArtifactWriter(cfg.out)
        status = COMMANDS[command](args, cfg, out)
        out.manifest(command, cfg, status)
        return status
    except (GcdualError, FileNotFoundError) as exc:
        code = _exit_code(exc)
        err = {"command": command, "error": type(exc).__name__, "message": str(exc), "exit_code": code}
        last = getattr(exc, "last_params", None)
        if last is not None:
            err["last_params"] = last.to_dict()
        print(json.dumps(err, default=float), file=sys.stderr)
        if out is not None:
            out.manifest(command, cfg, code)
        return code


if __name__ == "__main__":
    sys.exit(main())
