"""Batch front-end: ``lavlab <command> ...`` or ``lavlab run --config cfg.json``.

Every output embeds the resolved configuration, the library version and a
``schema_version``.  Exit codes: 0 ok, 2 configuration error, 3 numerical
error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .balance import BalanceCondition, check_balance, closed_form_bound
from .coefficients import Power
from .errors import LavlabError, NumericalError
from .geometry import (DomainDecomposition, ScalarField, StarDomain, decompose, gradient,
                       holder_seminorm, load_field)
from .io import atomic_write_text, csv_text, dumps_json
from .modular import (TRACE_COLUMNS, l1_and_measure_distance, modular_convergence,
                      modular_convergence_all_lambda)
from .mollify import Kernel, default_deltas, global_smooth, global_smooth_gradient
from .nfunc import SCHEMA_VERSION, DoublePhase, conjugate, from_dict

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
COMMANDS = ("balance-check", "density-run", "energy-gap", "conjugate-table", "family-sweep")


class ConfigError(LavlabError):
    pass


# ---------------------------------------------------------------------------
# parsing helpers


def _floats(text) -> list:
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    try:
        return [float(v) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"expected a comma-separated list of numbers, got {text!r}") from exc


def _read_json(path, what: str) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} file not found: {path}")
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what} file {path} is not valid JSON: {exc}") from exc


def _need_file(path, what: str):
    if path is None or not Path(path).is_file():
        raise ConfigError(f"{what} file not found: {path}")
    return path


def _threads(cfg) -> int:
    n = cfg.get("threads")
    if n is None:
        n = os.environ.get("LAVLAB_THREADS", "1")
    try:
        n = int(n)
    except ValueError as exc:
        raise ConfigError("thread count must be an integer") from exc
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    return n


def _envelope(cfg, result) -> dict:
    out = {"schema_version": SCHEMA_VERSION, "lavlab_version": __version__,
           "config": _public(cfg), "result": result}
    if cfg.get("timestamp"):
        import datetime as _dt
        out["generated_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    return out


def _public(cfg) -> dict:
    return {k: v for k, v in sorted(cfg.items()) if k not in ("threads", "timestamp")}


def _csv_meta(cfg, extra=None) -> dict:
    meta = {"schema_version": SCHEMA_VERSION, "lavlab_version": __version__,
            "config": _public(cfg)}
    meta.update(extra or {})
    return meta


def _write(path, text):
    if path is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(path, text)


# ---------------------------------------------------------------------------
# commands


def cmd_balance_check(cfg) -> dict:
    spec = _read_json(cfg["nfunc"], "N-function")
    M = from_dict(spec)
    cond = BalanceCondition(cfg.get("variant", "iso"), float(cfg.get("gamma", 0.0)),
                            c_diamond=float(cfg.get("c_diamond", 1.0)))
    r_grid = _floats(cfg.get("r_grid"))
    rep = check_balance(M, cond, r_grid=r_grid, xi_budget=int(cfg.get("xi_budget", 24)))
    result = rep.to_dict()
    try:
        cf = closed_form_bound(M, cond)
        result["closed_form"] = {"admissible": cf.admissible, "margin": cf.margin,
                                 "bound_expr": cf.bound_expr, "constant": cf.constant}
    except LavlabError:
        result["closed_form"] = None
    _write(cfg.get("out"), dumps_json(_envelope(cfg, result)))
    if cfg.get("csv"):
        rows = [(r, C, E) for r, C, E in rep.table]
        atomic_write_text(cfg["csv"], csv_text(["r", "C", "excess"], rows,
                                               _csv_meta(cfg, {"verdict": rep.verdict})))
    if cfg.get("plot_data"):
        rows = [(r, q, v) for r, C, E in rep.table for q, v in (("C", C), ("excess", E))]
        atomic_write_text(cfg["plot_data"], csv_text(["r", "quantity", "value"], rows,
                                                     _csv_meta(cfg)))
    return result


def _load_domain(cfg, grid):
    if cfg.get("domain"):
        dom = StarDomain.from_dict(_read_json(cfg["domain"], "domain"))
    else:
        dom = (StarDomain.interval(grid.lower[0], grid.upper[0]) if grid.dim == 1
               else StarDomain.rectangle(grid.lower, grid.upper))
    if cfg.get("decomp"):
        dec = DomainDecomposition.from_dict(_read_json(cfg["decomp"], "decomposition"))
    else:
        dec = decompose(dom, check_grid=grid)
    return dom, dec


def cmd_density_run(cfg) -> dict:
    phi = load_field(_need_file(cfg.get("field"), "field"))
    if not isinstance(phi, ScalarField):
        raise ConfigError("density-run needs a scalar field")
    M = from_dict(_read_json(cfg["nfunc"], "N-function"))
    dom, dec = _load_domain(cfg, phi.grid)
    deltas = _floats(cfg.get("deltas")) or default_deltas(dec.R)
    kernel = Kernel(phi.grid.dim, cfg.get("kernel", "bump"))
    inside = dom.contains(phi.grid.points())
    target = gradient(phi)
    target = target.with_values(np.where(inside[..., None], target.values, 0.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        apps = {d: global_smooth_gradient(phi, dec, d, kernel) for d in deltas}
        smooth = {d: global_smooth(phi, dec, d, kernel) for d in deltas}
    lam = cfg.get("lambda", "auto")
    rows, verdicts = [], {}
    if lam == "all":
        for key, res in modular_convergence_all_lambda(M, target, apps).items():
            if res is not None:
                rows += res.trace.rows()
                verdicts[str(key)] = res.verdict
    else:
        res = modular_convergence(M, target, apps, lam if lam == "auto" else float(lam))
        rows += res.trace.rows()
        verdicts[str(res.trace.lam)] = res.verdict
    plain = phi.with_values(np.where(inside, phi.values, 0.0))
    for d in sorted(deltas, reverse=True):
        dist = l1_and_measure_distance(_as_vector(smooth[d]), _as_vector(plain), 1e-3)
        rows.append((d, dist.l1, "", "L1"))
    gamma = float(cfg.get("gamma", 0.0))
    meta = {"verdicts": verdicts, "gamma": gamma}
    if gamma > 0:
        meta["holder_seminorm"] = holder_seminorm(phi, gamma)
    text = csv_text(TRACE_COLUMNS, rows, _csv_meta(cfg, meta))
    _write(cfg.get("out"), text)
    if cfg.get("plot_data"):
        atomic_write_text(cfg["plot_data"], text)
    return {"verdicts": verdicts, "rows": len(rows)}


def _as_vector(f: ScalarField):
    from .geometry import VectorField

    return VectorField(f.grid, np.asarray(f.values)[..., None])


def cmd_energy_gap(cfg) -> dict:
    from .energy import BoundaryData, gap_probe, integrand_from_dict

    F = integrand_from_dict(_read_json(cfg["integrand"], "integrand"))
    u0 = load_field(_need_file(cfg.get("boundary"), "boundary"))
    if not isinstance(u0, ScalarField):
        raise ConfigError("boundary data must be a scalar field")
    gamma = float(cfg.get("gamma", 0.0))
    dom = StarDomain.from_dict(_read_json(cfg["domain"], "domain")) if cfg.get("domain") else None
    reg = cfg.get("regularity", "holder" if gamma > 0 else "W1LM")
    bc = BoundaryData(u0, reg, gamma if reg == "holder" else None, dom)
    dec = None
    if cfg.get("decomp"):
        dec = DomainDecomposition.from_dict(_read_json(cfg["decomp"], "decomposition"))
    rep = gap_probe(F, bc, gamma, dec, _floats(cfg.get("deltas")),
                    iters=int(cfg.get("iters", 500)), tol=float(cfg.get("tol", 1e-10)))
    result = rep.to_dict()
    _write(cfg.get("out"), dumps_json(_envelope(cfg, result)))
    if cfg.get("plot_data"):
        rows = rep.smooth_sequence_energies.rows()
        rows.append(("", rep.discrete_min_energy, "", "discrete_min"))
        atomic_write_text(cfg["plot_data"], csv_text(TRACE_COLUMNS, rows, _csv_meta(cfg)))
    return result


def cmd_conjugate_table(cfg) -> dict:
    M = from_dict(_read_json(cfg["nfunc"], "N-function"))
    x = np.asarray(_floats(cfg.get("x")) or [0.5] * M.dim, float)
    if x.size != M.dim:
        raise ConfigError(f"--x needs {M.dim} coordinates")
    etas = np.asarray(_floats(cfg.get("eta")) or list(np.linspace(-4, 4, 17)), float)
    radius = float(cfg.get("search_radius", 16.0))
    k = M.grad_dim
    if k == 1:
        E = etas[:, None]
    else:
        axis = int(cfg.get("axis", 0))
        E = np.zeros((etas.size, k))
        E[:, axis] = etas
    vals = conjugate(M, x, E, radius)
    exact = M.analytic_conjugate(x, E)
    rows = []
    for i, e in enumerate(E):
        ex = "" if exact is None else float(np.asarray(exact)[i])
        rows.append(tuple(float(v) for v in e) + (float(vals[i]), ex))
    header = [f"eta_{j}" for j in range(k)] + ["conjugate", "analytic"]
    text = csv_text(header, rows, _csv_meta(cfg))
    _write(cfg.get("out"), text)
    if cfg.get("plot_data"):
        tidy = [(float(e[0]) if k == 1 else float(np.linalg.norm(e)), "conjugate", float(v))
                for e, v in zip(E, vals)]
        atomic_write_text(cfg["plot_data"], csv_text(["eta", "quantity", "value"], tidy,
                                                     _csv_meta(cfg)))
    return {"rows": len(rows)}


def _sweep_cell(item):
    p, gap, alpha, gamma, r_grid, budget = item
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        M = DoublePhase(p, p + gap, Power(1.0, alpha), alpha=alpha, dim=1)
        cond = BalanceCondition("iso", gamma)
        rep = check_balance(M, cond, r_grid=r_grid, xi_budget=budget)
        cf = closed_form_bound(M, cond)
    return (gamma, alpha, gap, p, p + gap, bool(cf.admissible), cf.margin, rep.verdict,
            rep.divergence_slope, rep.C_diamond)


SWEEP_COLUMNS = ["gamma", "alpha", "q_minus_p", "p", "q", "predicate", "margin", "verdict",
                 "divergence_slope", "C_diamond"]


def cmd_family_sweep(cfg) -> dict:
    p = float(cfg.get("p", 2.0))
    gaps = _floats(cfg.get("gaps")) or [round(0.1 * k, 10) for k in range(1, 10)]
    alphas = _floats(cfg.get("alphas")) or [0.2, 0.5]
    gammas = _floats(cfg.get("gammas")) or [0.0, 0.5]
    r_grid = _floats(cfg.get("r_grid"))
    budget = int(cfg.get("xi_budget", 24))
    items = [(p, g, a, gm, r_grid, budget) for gm in gammas for a in alphas for g in gaps]
    n = _threads(cfg)
    if n == 1:
        rows = [_sweep_cell(it) for it in items]
    else:
        with ProcessPoolExecutor(max_workers=n) as pool:
            rows = list(pool.map(_sweep_cell, items))
    rows = [tuple(_round_gap(v) if i == 2 else v for i, v in enumerate(r)) for r in rows]
    agree = sum(1 for r in rows if (r[7] == "holds") == r[5] and r[7] != "inconclusive")
    meta = {"seed": int(cfg.get("seed", 0)), "cells": len(rows), "agreeing_cells": agree}
    text = csv_text(SWEEP_COLUMNS, rows, _csv_meta(cfg, meta))
    _write(cfg.get("out"), text)
    if cfg.get("plot_data"):
        tidy = [(r[0], r[1], r[2], q, r[i]) for r in rows
                for q, i in (("verdict", 7), ("divergence_slope", 8), ("C_diamond", 9))]
        atomic_write_text(cfg["plot_data"], csv_text(
            ["gamma", "alpha", "q_minus_p", "quantity", "value"], tidy, _csv_meta(cfg)))
    return {"cells": len(rows), "agreeing_cells": agree}


def _round_gap(v):
    return float(np.round(v, 12))


HANDLERS = {"balance-check": cmd_balance_check, "density-run": cmd_density_run,
            "energy-gap": cmd_energy_gap, "conjugate-table": cmd_conjugate_table,
            "family-sweep": cmd_family_sweep}
REQUIRED = {"balance-check": ("nfunc",), "density-run": ("field", "nfunc"),
            "energy-gap": ("integrand", "boundary"), "conjugate-table": ("nfunc",),
            "family-sweep": ()}


def run(config: dict) -> int:
    """Validate and execute one experiment; returns the exit status."""
    try:
        cfg = dict(config)
        cmd = cfg.get("command")
        if cmd not in HANDLERS:
            raise ConfigError(f"unknown command {cmd!r}; expected one of {', '.join(COMMANDS)}")
        for key in REQUIRED[cmd]:
            if cfg.get(key) is None:
                raise ConfigError(f"{cmd} needs --{key.replace('_', '-')}")
        cfg.setdefault("seed", 0)
        np.random.seed(int(cfg["seed"]))
        HANDLERS[cmd](cfg)
        return EXIT_OK
    except (NumericalError, ArithmeticError) as exc:
        print(f"lavlab: numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (LavlabError, ValueError, TypeError, KeyError) as exc:
        print(f"lavlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lavlab", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"lavlab {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", help="output path (stdout if omitted)")
        p.add_argument("--plot-data", dest="plot_data", help="tidy long-format CSV for plotting")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, help="worker processes (default: $LAVLAB_THREADS or 1)")
        p.add_argument("--timestamp", action="store_true",
                       help="record the generation time (breaks byte-identical reruns)")
        return p

    p = common(sub.add_parser("balance-check", help="numeric and closed-form balance check"))
    p.add_argument("--nfunc", required=True)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--variant", default="iso", choices=["iso", "ort", "gen", "gen_plus"])
    p.add_argument("--r-grid", dest="r_grid")
    p.add_argument("--xi-budget", dest="xi_budget", type=int, default=24)
    p.add_argument("--c-diamond", dest="c_diamond", type=float, default=1.0)
    p.add_argument("--csv", help="also write the per-radius table as CSV")

    p = common(sub.add_parser("density-run", help="modular convergence of smoothed gradients"))
    p.add_argument("--domain")
    p.add_argument("--decomp")
    p.add_argument("--field", required=True)
    p.add_argument("--nfunc", required=True)
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--deltas")
    p.add_argument("--lambda", dest="lambda", default="auto")
    p.add_argument("--kernel", default="bump", choices=["bump", "tent"])

    p = common(sub.add_parser("energy-gap", help="discrete minimum versus smooth recovery energies"))
    p.add_argument("--integrand", required=True)
    p.add_argument("--boundary", required=True)
    p.add_argument("--domain")
    p.add_argument("--decomp")
    p.add_argument("--gamma", type=float, default=0.0)
    p.add_argument("--regularity", choices=["W1LM", "holder", "lipschitz"])
    p.add_argument("--deltas")
    p.add_argument("--iters", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-10)

    p = common(sub.add_parser("conjugate-table", help="tabulate the conjugate at a point"))
    p.add_argument("--nfunc", required=True)
    p.add_argument("--x")
    p.add_argument("--eta", help="comma-separated eta values along --axis")
    p.add_argument("--axis", type=int, default=0)
    p.add_argument("--search-radius", dest="search_radius", type=float, default=16.0)

    p = common(sub.add_parser("family-sweep", help="double-phase balance verdict matrix"))
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--gaps", help="values of q - p")
    p.add_argument("--alphas")
    p.add_argument("--gammas")
    p.add_argument("--r-grid", dest="r_grid")
    p.add_argument("--xi-budget", dest="xi_budget", type=int, default=24)

    p = sub.add_parser("run", help="run an experiment described by a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--threads", type=int)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = {k: v for k, v in vars(args).items() if v is not None}
    if args.command == "run":
        try:
            loaded = _read_json(args.config, "config")
        except ConfigError as exc:
            print(f"lavlab: configuration error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if not isinstance(loaded, dict):
            print("lavlab: configuration error: config must be a JSON object", file=sys.stderr)
            return EXIT_CONFIG
        cfg = {k.replace("-", "_"): v for k, v in loaded.items()}
        if args.threads is not None:
            cfg["threads"] = args.threads
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
