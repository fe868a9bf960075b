"""Command line entry point: run, constants, identities, mc, solve.

Exit status: 0 all verdicts pass, 1 a check failed, 2 invalid config,
3 runtime fault.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from . import bounds as bnd
from . import calculus, drift, inequality, montecarlo
from .config import ConfigError, RunConfig, load_config
from .export import config_hash, dumps, field_dict, grid_csv
from .fields import ExactSolution, closed_form_solution, solve_heat
from .geometry import StaticHyperbolic
from .stencils import grid_for

OUT_ENV = "HARNACKLAB_OUT"
EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3


def _mode(mode):
    return tuple(mode) if isinstance(mode, list) else mode


def build_field(cfg: RunConfig, model, refine: int = 0):
    f = 2**refine
    grid = grid_for(model, int(cfg.grid["n_space"]) * f, int(cfg.grid["nt"]) * f)
    sol = cfg.solution
    if sol["type"] == "closed_form":
        return closed_form_solution(model, _mode(sol.get("mode", 0)),
                                    float(sol.get("amplitude", 0.0)), grid)
    if isinstance(model, StaticHyperbolic):
        raise ConfigError("solution.type: numeric solves need a closed grid (not StaticHyperbolic)")
    init = sol.get("initial", {"type": "constant", "value": 1.0})
    if init.get("type") == "constant":
        value = float(init.get("value", 1.0))
        initial = np.full(grid.shape, value)
    elif init.get("type") == "mode":
        exact = ExactSolution(model, _mode(init["mode"]), float(init["amplitude"]))
        initial = exact(0.0, *grid.mesh())
    else:
        raise ConfigError("solution.initial.type must be 'constant' or 'mode'")
    return solve_heat(model, initial, grid)


def _profile(field, chk):
    x0 = chk["x0"]
    if chk.get("cutoff", "distance") == "square":
        return bnd.square_cutoff(field, x0, float(chk["width"]))
    return bnd.cutoff_profile(field, x0, float(chk["rho"]))


def run_check(field, bounds, chk) -> list:
    name = chk["theorem"]
    t_lo = chk.get("t_lo")
    alpha = float(chk["alpha"]) if "alpha" in chk else None
    x0, rho = chk.get("x0"), chk.get("rho")
    if name == "hamilton_global":
        k = chk.get("k")
        return [inequality.hamilton_global(field, k=None if k is None else float(k),
                                           bounds=bounds, t_lo=t_lo)]
    if name == "hamilton_local":
        return [inequality.hamilton_local(field, x0, float(rho), bounds, t_lo)]
    if name == "hamilton_local_general":
        return [inequality.hamilton_local_general(field, _profile(field, chk), bounds, t_lo)]
    if name == "liyau_global":
        return [inequality.liyau_global(field, alpha, bounds, t_lo)]
    if name == "liyau_local":
        return [inequality.liyau_local(field, alpha, x0, float(rho), bounds, t_lo)]
    if name == "liyau_local_general":
        return [inequality.liyau_local_general(field, alpha, _profile(field, chk), bounds, t_lo)]
    if name == "liyau_lower_order_local":
        return [inequality.liyau_lower_order_local(field, x0, float(rho), bounds, t_lo=t_lo)]
    if name == "liyau_lower_order_general":
        return [inequality.liyau_lower_order_general(field, _profile(field, chk), bounds, t_lo=t_lo)]
    if name == "ricci_compact":
        k = float(chk.get("k", bounds.ric_sup))
        return [inequality.ricci_compact(field, k, t_lo=t_lo, t_hi=chk.get("t_hi"))]
    if name == "ricci_local_pair":
        k = float(chk.get("k", bounds.ric_sup))
        return list(inequality.ricci_local_pair(field, alpha, x0, float(rho), k, t_lo))
    raise ConfigError(f"unknown theorem {name!r}")


def functional_spec(model, bounds, d: dict) -> drift.FunctionalSpec:
    kind = d["kind"]
    if kind == "H_hamilton":
        return drift.FunctionalSpec(kind, model.T, k=float(d.get("k", bounds.k_sup)))
    if kind == "S_tilde_liyau":
        return drift.FunctionalSpec(kind, model.T, alpha=float(d["alpha"]), bounds=bounds)
    return drift.FunctionalSpec(kind, model.T, k=float(d.get("k", bounds.ric_sup)))


def _tolerances(field) -> dict:
    return {"C_tol": calculus.C_TOL[field.model.kind], "tau": calculus.tolerance(field),
            "tau_drift": calculus.drift_tolerance(field)}


def _provenance(cfg: RunConfig, command: str, field=None, refine=0, seed=None) -> dict:
    out = {"command": command, "config_hash": config_hash(cfg.to_dict()),
           "version": __version__, "refine": refine, "seed": seed}
    if field is not None:
        out["grid"] = field.grid.to_dict()
        out["tolerances"] = _tolerances(field)
    return out


def run_mc(cfg: RunConfig, model, bounds, field, seed=None) -> list:
    mc = cfg.mc
    seed = int(mc.get("seed", 0) if seed is None else seed)
    t_star = float(mc["t_star"])
    x = mc.get("x", [0.0])
    ens = montecarlo.simulate(model, t_star, x, int(mc["n_paths"]), float(mc["dr"]), seed,
                              mc.get("checkpoints"))
    results = []
    for test in mc.get("tests", [{"type": "weak_error"}]):
        if test["type"] == "weak_error":
            sol = cfg.solution
            if sol["type"] != "closed_form":
                raise ConfigError("mc weak_error needs a closed_form solution as reference")
            exact = ExactSolution(model, _mode(sol.get("mode", 0)),
                                  float(sol.get("amplitude", 0.0)))
            t0 = t_star - float(ens.checkpoints[-1])
            ref = float(exact(t_star, *np.atleast_1d(x)))
            rep = montecarlo.weak_error(ens, lambda *c: exact(t0, *c), ref,
                                        C=float(test.get("C", montecarlo.WEAK_C)))
        elif test["type"] == "supermartingale":
            spec = functional_spec(model, bounds, test)
            rep = montecarlo.supermartingale_test(spec, ens, field, bounds, test.get("t_lo"))
        else:
            raise ConfigError(f"mc test type {test['type']!r} unknown")
        results.append(rep)
    return [ens.to_dict()] + results


def execute(cfg: RunConfig, command: str, refine: int = 0, seed: int | None = None):
    """Returns (report dict, {filename: csv text}, passed)."""
    model = cfg.build_model()
    field = build_field(cfg, model, refine)
    bounds = bnd.extract_bounds(model)
    violations = bnd.verify_bounds(model, bounds)
    report = {"provenance": _provenance(cfg, command, field, refine, seed),
              "model": model.to_dict(), "bounds": bounds.to_dict(),
              "bound_violations": violations}
    csvs = {}
    passed = not violations

    if command == "solve":
        report["field"] = field_dict(field)
        csvs["field.csv"] = grid_csv(field.grid, {"u": field.values}, model.axis_names[: field.grid.ndim])
        return report, csvs, passed

    if command == "identities":
        report["identities"] = identities_report(cfg, model, refine)
        return report, csvs, passed and report["identities"]["pass"]

    if command in ("run",):
        checks = []
        for chk in cfg.checks:
            for rep in run_check(field, bounds, chk):
                checks.append(rep.to_dict())
                csvs[f"{rep.theorem}.csv"] = rep.to_csv(field.grid)
                passed &= rep.passed
        report["checks"] = checks
        drifts = []
        for d in cfg.drift:
            rep = drift.drift_report(functional_spec(model, bounds, d), field, bounds, d.get("t_lo"))
            drifts.append(rep.to_dict())
            passed &= rep.passed
        report["drift"] = drifts
    if command in ("run", "mc") and cfg.mc is not None:
        mc_out = run_mc(cfg, model, bounds, field, seed)
        report["mc"] = {"ensemble": mc_out[0], "tests": [r.to_dict() for r in mc_out[1:]]}
        for r in mc_out[1:]:
            passed &= r.passed
            csvs[f"{r.kind}.csv"] = r.to_csv()
    report["pass"] = bool(passed)
    return report, csvs, passed


def identities_report(cfg: RunConfig, model, refine: int = 0, levels: int = 3) -> dict:
    fields = [build_field(cfg, model, refine + lvl) for lvl in range(levels)]
    rows = []
    for fld in fields:
        r1, r2 = calculus.identity_residuals(fld)
        rows.append({"h": fld.grid.h_max, "dt": fld.grid.dt,
                     "u_log_u": calculus.residual_sup(fld, r1),
                     "q": calculus.residual_sup(fld, r2),
                     "q_two_ways": calculus.residual_sup(fld, calculus.q_two_ways(fld)),
                     "laplacian_variation": calculus.residual_sup(
                         fld, calculus.laplacian_variation_check(model, fld)),
                     "tolerance": calculus.tolerance(fld)})
    ratios = {key: [rows[i][key] / rows[i + 1][key] if rows[i + 1][key] > 0 else math.inf
                    for i in range(levels - 1)] for key in ("u_log_u", "q")}
    ok = all(3.5 <= r <= 4.5 for v in ratios.values() for r in v)
    ok &= all(row[k] <= row["tolerance"] for row in rows for k in ("u_log_u", "q"))
    return {"levels": rows, "ratios": ratios, "pass": bool(ok)}


def constants_table(cfg: RunConfig, refine: int = 0) -> dict:
    """Constant blocks of every configured check next to the numeric c_phi sups."""
    model = cfg.build_model()
    field = build_field(cfg, model, refine)
    bounds = bnd.extract_bounds(model)
    n = model.n
    k = bounds.ric_sup
    rows = []
    for chk in cfg.checks:
        row = {"theorem": chk["theorem"]}
        try:
            reps = run_check(field, bounds, chk)
        except ValueError as exc:
            row["not_applicable"] = str(exc)
            rows.append(row)
            continue
        for rep in reps:
            row[rep.theorem] = dict(rep.constants)
        if "x0" in chk and "rho" in chk and chk.get("cutoff", "distance") == "distance":
            prof = bnd.cutoff_profile(field, chk["x0"], float(chk["rho"]))
            for v in bnd.VARIANTS:
                c = bnd.c_phi(prof, n, v, bounds, float(chk.get("alpha", 2.0)))
                row[f"c_phi_{v}"] = {"numeric_sup": c["numeric_sup"],
                                     "analytic_bound": c["analytic_bound"]}
        rows.append(row)
    return {"n": n, "k": k, "T": model.T,
            "comparison_2kn_plus_n_over_T": 2 * k * n + n / model.T, "rows": rows}


def format_constants(table: dict) -> str:
    lines = [f"model n={table['n']} k={table['k']:.6g} T={table['T']:.6g}  "
             f"2kn + n/t at t=T: {table['comparison_2kn_plus_n_over_T']:.6g}"]
    for row in table["rows"]:
        lines.append(f"[{row['theorem']}]")
        for key, val in sorted(row.items()):
            if key == "theorem":
                continue
            if isinstance(val, dict):
                inner = "  ".join(f"{a}={b:.6g}" if isinstance(b, float) else f"{a}={b}"
                                  for a, b in sorted(val.items()))
                lines.append(f"  {key:<28} {inner}")
            else:
                lines.append(f"  {key:<28} {val}")
    return "\n".join(lines)


def _out_dir(args, cfg: RunConfig) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get(OUT_ENV):
        return Path(os.environ[OUT_ENV])
    return Path(cfg.output.get("directory", "."))


def _write(out: Path, report: dict, csvs: dict, fmt: str):
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(dumps(report))
    if fmt == "csv":
        for name, text in csvs.items():
            (out / name).write_text(text)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="harnacklab",
                                description="Gradient estimates for the heat equation on evolving manifolds")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("run", "solve, check inequalities and drifts, run MC"),
                           ("constants", "print theorem constants and cutoff sups"),
                           ("identities", "calculus residual refinement suite"),
                           ("mc", "Monte Carlo tests only"),
                           ("solve", "export the solution field")):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--config", required=True, help="JSON run configuration")
        sp.add_argument("--out", default=None, help="output directory")
        sp.add_argument("--refine", type=int, default=0, help="halve grid spacing N times")
        sp.add_argument("--seed", type=int, default=None, help="override the MC seed")
        sp.add_argument("--format", choices=("json", "csv"), default=None,
                        help="csv adds <theorem>.csv next to report.json (default: config output.formats)")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.refine < 0:
            raise ConfigError("--refine must be >= 0")
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        if args.command == "mc" and cfg.mc is None:
            raise ConfigError("mc: config has no 'mc' object")
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "constants":
            table = constants_table(cfg, args.refine)
            print(format_constants(table))
            _write(_out_dir(args, cfg), {"provenance": _provenance(cfg, "constants", refine=args.refine),
                                         "constants": table}, {}, "json")
            return EXIT_OK
        report, csvs, passed = execute(cfg, args.command, args.refine, args.seed)
        fmt = args.format or ("csv" if "csv" in cfg.output.get("formats", []) else "json")
        _write(_out_dir(args, cfg), report, csvs, fmt)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any fault maps to exit 3
        print(f"runtime fault: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(f"{args.command}: {'pass' if passed else 'FAIL'}")
    return EXIT_OK if passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
