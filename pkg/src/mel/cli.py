"""Command-line harness: named experiments, direct solves, and trace tools.

All artifacts are diff-able: CSV bodies carry fixed 17-significant-digit
floats and a header row; JSON reports are key-sorted.  Reruns with identical
arguments and seed produce byte-identical CSV bodies.  The environment
variable MEL_SEED overrides any configured seed.

Exit codes: 0 success, 1 error, 2 verdict failure in acceptance (--check) mode.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import absorption, radial, source, trace
from .absorption import Nonlinearity, RadialOperator, SolveOptions
from .capacity import CapacityProblem, dual_capacity_lower, point_capacity_problem, sobolev_capacity
from .errors import ConfigError, MelError
from .experiments import (EXPERIMENTS, SCHEMA, ExperimentConfig, list_experiments,
                          run_experiment)
from .grids import CartesianGrid, GridFunction, build_masked_grid, build_radial_grid
from .measures import MeasureData, make_boundary_dirac, make_dirac
from .operators import assemble, ball_green_closed_form, green_potential

FLOAT_FMT = "%.17g"


def _fmt(value) -> str:
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return FLOAT_FMT % float(value)
    return str(value)


def write_csv(path, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not rows:
        path.write_text("")
        return
    keys = list(rows[0].keys())
    lines = [",".join(keys)]
    for row in rows:
        lines.append(",".join(_fmt(row[k]) for k in keys))
    path.write_text("\n".join(lines) + "\n")


def write_json(path, payload) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")


def parse_scalar(text: str) -> float:
    """Parse '1/32', '8pi', '0.5', '2pi/3'-style numeric tokens."""
    t = text.strip().lower()
    factor = 1.0
    if "pi" in t:
        t = t.replace("pi", "")
        factor = np.pi
        if t in ("", "+", "-"):
            t += "1"
    if "/" in t:
        num, den = t.split("/", 1)
        return float(num or 1.0) * factor / float(den)
    return float(t) * factor


def parse_point_weight(text: str):
    """'x,y,...:w' -> (coords tuple, weight)."""
    try:
        loc, w = text.rsplit(":", 1)
        coords = tuple(parse_scalar(c) for c in loc.split(","))
        return coords, parse_scalar(w)
    except (ValueError, IndexError):
        raise ConfigError(f"expected 'x,y[,z]:weight', got {text!r}")


def parse_list(text: str):
    return [parse_scalar(tok) for tok in text.split(",") if tok.strip()]


def _seed(args) -> int:
    env = os.environ.get("MEL_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"MEL_SEED must be an integer, got {env!r}")
    return getattr(args, "seed", 0) or 0


def _out_dir(args) -> Path:
    out = Path(getattr(args, "out", None) or "mel-out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _nonlinearity(spec: str) -> Nonlinearity:
    kind, _, val = spec.partition(":")
    if kind == "power":
        return Nonlinearity.power(parse_scalar(val or "2"))
    if kind == "exp":
        return Nonlinearity.exp(parse_scalar(val or "1"))
    if kind == "exp-odd":
        return Nonlinearity.exp_odd(parse_scalar(val or "1"))
    raise ConfigError(f"unknown nonlinearity spec {spec!r} (power:q, exp:a, exp-odd:a)")


# ---------------------------------------------------------------------------
# subcommands


def cmd_list(args) -> int:
    for entry in list_experiments():
        print(f"{entry['id']:<20} [{entry['module']}] {entry['description']}")
    return 0


def _run_one(exp_id: str, params: dict, seed: int, out: Path):
    res = run_experiment(ExperimentConfig(experiment=exp_id, params=params, seed=seed))
    write_csv(out / f"{exp_id}.csv", res.rows)
    write_json(out / f"{exp_id}.json",
               {"experiment": exp_id, "seed": seed, "params": params,
                "metrics": res.metrics, "pass": res.passed})
    return res


def cmd_run(args) -> int:
    params = {}
    seed = _seed(args)
    exp_id = args.experiment
    if args.config:
        data = json.loads(Path(args.config).read_text())
        cfg = ExperimentConfig.from_dict(data)
        exp_id = exp_id or cfg.experiment
        params.update(cfg.params)
        if os.environ.get("MEL_SEED") is None and args.seed is None:
            seed = cfg.seed
    if not exp_id:
        raise ConfigError("no experiment id given (positional argument or --config)")
    if exp_id not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment id {exp_id!r}")
    for setting in args.set or []:
        if "=" not in setting:
            raise ConfigError(f"--set expects key=value, got {setting!r}")
        key, val = setting.split("=", 1)
        try:
            parsed = parse_list(val) if "," in val else parse_scalar(val)
        except ValueError:
            parsed = val
        params[key] = parsed
    out = _out_dir(args)
    res = _run_one(exp_id, params, seed, out)
    print(f"{exp_id}: {'PASS' if res.passed else 'FAIL'}  {json.dumps(res.metrics, default=str)}")
    if args.check and not res.passed:
        return 2
    return 0


def cmd_check_all(args) -> int:
    out = _out_dir(args)
    seed = _seed(args)
    jobs = max(1, args.jobs)
    results = {}
    with concurrent.futures.ThreadPoolExecutor(max_workers=jobs) as pool:
        futures = {pool.submit(_run_one, eid, {}, seed, out): eid for eid in EXPERIMENTS}
        for fut in concurrent.futures.as_completed(futures):
            eid = futures[fut]
            results[eid] = fut.result()
    failed = []
    for eid in EXPERIMENTS:
        res = results[eid]
        print(f"{eid:<20} {'PASS' if res.passed else 'FAIL'}")
        if not res.passed:
            failed.append(eid)
    write_json(out / "check-all.json",
               {"seed": seed, "results": {k: v.passed for k, v in results.items()}})
    if failed:
        print(f"{len(failed)} experiment(s) failed: {', '.join(failed)}")
        return 2
    return 0


def cmd_green(args) -> int:
    out = _out_dir(args)
    grid = build_masked_grid(args.n, "ball" if args.n == 3 else "disk", parse_scalar(args.h))
    op = assemble(grid)
    u = green_potential(op, make_dirac([0.0] * args.n, 1.0, domain=(grid.shape,)))
    rows = []
    rnorm = np.linalg.norm(grid.points, axis=1)
    idx = np.argsort(rnorm)[:: max(1, grid.interior_count // 5000)]
    max_rel = 0.0
    for i in idx:
        oracle = rel = float("nan")
        if args.n == 3 and rnorm[i] > 0.5 * grid.h:
            oracle = ball_green_closed_form(grid.points[i], np.zeros(3), 3)
            rel = abs(u.values[i] - oracle) / abs(oracle)
            if 0.2 <= rnorm[i] <= 0.8:
                max_rel = max(max_rel, rel)
        rows.append({"radius": rnorm[i], "u_grid": u.values[i],
                     "u_oracle": oracle, "rel_err": rel})
    write_csv(out / "green.csv", rows)
    write_json(out / "green.json", {"n": args.n, "h": parse_scalar(args.h),
                                    "max_rel_err_mid": max_rel})
    print(f"wrote {out / 'green.csv'} (max relative error on 0.2<=|x|<=0.8: {max_rel:.4g})")
    return 0


def _solution_rows(grid: CartesianGrid, u: GridFunction):
    rows = []
    for i in range(grid.interior_count):
        row = {f"x{k}": grid.points[i, k] for k in range(grid.dim)}
        row["value"] = u.values[i]
        rows.append(row)
    return rows


def cmd_solve_absorption(args) -> int:
    out = _out_dir(args)
    grid = build_masked_grid(args.dim, args.shape, parse_scalar(args.h))
    op = assemble(grid)
    nl = _nonlinearity(args.g)
    atoms = tuple(parse_point_weight(a) for a in args.atom or [])
    batoms = tuple(parse_point_weight(a) for a in args.boundary_atom or [])
    lam = MeasureData(domain=(grid.shape,), atoms=atoms) if atoms else None
    mu = MeasureData(domain=(grid.shape,), boundary_atoms=batoms) if batoms else None
    opts = SolveOptions(method=args.method, lin_tol=args.lin_tol)
    u, rep = absorption.solve_absorption(op, nl, lam, mu, opts)
    write_csv(out / "u.csv", _solution_rows(grid, u))
    write_json(out / "solve-absorption.json",
               {"verdict": rep.verdict, "iterations": rep.iterations,
                "residual": rep.residual, "sup": float(np.max(np.abs(u.values)))})
    print(f"{rep.verdict} in {rep.iterations} iterations; solution at {out / 'u.csv'}")
    return 0 if rep.converged else 2


def cmd_solve_source(args) -> int:
    out = _out_dir(args)
    atoms = tuple(parse_point_weight(a) for a in args.atom)
    dim = len(atoms[0][0])
    shape = "ball" if dim == 3 else "disk"
    grid = build_masked_grid(dim, shape, parse_scalar(args.h))
    op = assemble(grid)
    lam = MeasureData(domain=(shape,), atoms=atoms)
    q = parse_scalar(args.q)
    sigma_spec = args.sigma
    if sigma_spec.startswith("auto"):
        C0 = source.estimate_C0(op, lam, q)
        s0 = source.sigma_threshold(q, C0)
        factor = parse_scalar(sigma_spec.split(":", 1)[1]) if ":" in sigma_spec else 1.0
        sigma = factor * s0
    else:
        sigma = parse_scalar(sigma_spec)
    u, rep = source.solve_source(op, q, sigma, lam)
    write_csv(out / "u.csv", _solution_rows(grid, u))
    write_json(out / "solve-source.json",
               {"verdict": rep.verdict, "iterations": rep.iterations,
                "sigma": sigma, "q": q})
    print(f"{rep.verdict} at sigma={sigma:.6g}; solution at {out / 'u.csv'}")
    return 0 if rep.converged else 2


def cmd_sweep(args) -> int:
    out = _out_dir(args)
    grid = build_radial_grid(2, 1e-13, 1.0, 2600, law="logarithmic")
    rop = RadialOperator(grid)
    nl = Nonlinearity.exp(parse_scalar(args.a))
    c = parse_scalar(args.c)
    eps = parse_list(args.eps_list) if args.eps_list else list(np.geomspace(1e-2, 1e-10, 9))
    stages = absorption.relaxation_sweep(rop, nl, c, eps)
    rows = [{"eps": st["eps"], "mass": st["mass"], "flux": st["flux"],
             "l1": st["l1"], "verdict": st["verdict"]} for st in stages]
    write_csv(out / "sweep.csv", rows)
    limit = min(c, 4.0 * np.pi / parse_scalar(args.a))
    final = stages[-1]["mass"]
    write_json(out / "sweep.json", {"c": c, "limit_target": limit, "final_mass": final})
    print(f"final mass {final:.6g} (target {limit:.6g}); stages at {out / 'sweep.csv'}")
    return 0


def cmd_radial(args) -> int:
    if args.mode == "classify":
        prof = radial.shoot_radial("absorption", parse_scalar(args.q), args.n,
                                   parse_scalar(args.r1), parse_scalar(args.u1),
                                   parse_scalar(args.du1), parse_scalar(args.r_end))
        verdict = radial.classify_interior_singularity(prof, parse_scalar(args.q), args.n)
        print(f"verdict: {verdict.verdict}")
        print(f"amplitude: {verdict.amplitude}")
        if verdict.mass is not None:
            print(f"dirac mass: {verdict.mass}")
        return 0
    if args.mode == "cap":
        q = parse_scalar(args.q)
        cp = radial.cap_eigenproblem(q, args.n)
        if cp is None:
            print(f"no cap profile: q={q} is supercritical for n={args.n} "
                  f"(threshold {(args.n + 1) / (args.n - 1):.6g})")
            return 2
        print(f"amplitude at the pole: {cp.pole_value}")
        print(f"residual: {radial.cap_residual(cp):.3e}")
        return 0
    raise ConfigError(f"unknown radial mode {args.mode!r}")


def cmd_capacity(args) -> int:
    out = _out_dir(args)
    rows = []
    prev = None
    for h in parse_list(args.h_list):
        if args.set != "point":
            raise ConfigError(f"unknown compact set spec {args.set!r} (only 'point')")
        prob = point_capacity_problem(args.n, args.m, parse_scalar(args.p), h)
        est = sobolev_capacity(prob)
        ratio = est.value / prev if prev else float("nan")
        rows.append({"h": h, "capacity": est.value, "ratio": ratio,
                     "iterations": est.iterations, "residual": est.residual})
        prev = est.value
        print(f"h={h:.6g}: C = {est.value:.8g}  ratio={ratio:.4g}")
    if args.dual:
        # the dual bound factorizes the full lattice operator; keep it at the
        # coarsest level where the direct solve is cheap
        h0 = parse_list(args.h_list)[0]
        lower = dual_capacity_lower(point_capacity_problem(
            args.n, args.m, parse_scalar(args.p), h0))
        print(f"dual lower bound at h={h0:.6g}: {lower:.8g}")
    write_csv(out / "capacity.csv", rows)
    return 0


def _load_solution(path: str):
    body = Path(path).read_text().strip().splitlines()
    header = body[0].split(",")
    data = np.array([[float(tok) for tok in line.split(",")] for line in body[1:]])
    coord_cols = [i for i, name in enumerate(header) if name.startswith("x")]
    val_col = header.index("value")
    pts = data[:, coord_cols]
    vals = data[:, val_col]
    dim = pts.shape[1]
    axis = np.unique(pts[:, 0])
    h = float(np.min(np.diff(axis)))
    shape = "disk" if dim == 2 else "ball"
    grid = build_masked_grid(dim, shape, h)
    if grid.interior_count != pts.shape[0]:
        raise ConfigError(f"{path}: point set does not match a {shape} grid at h={h:.6g}")
    # map rows onto grid order through lattice codes
    codes = np.rint(pts / h).astype(np.int64)
    gcodes = np.rint(grid.points / h).astype(np.int64)
    order = {tuple(c): i for i, c in enumerate(codes)}
    values = np.empty(grid.interior_count)
    for j, gc in enumerate(gcodes):
        values[j] = vals[order[tuple(gc)]]
    return grid, GridFunction(grid, values)


def cmd_trace(args) -> int:
    grid, u = _load_solution(args.solution)
    t_list = parse_list(args.t_list)
    nl = _nonlinearity(args.g) if args.g else None
    rep = trace.trace_measure(u, grid, t_list, nl=nl)
    rows = []
    for j in range(rep.nodes.count):
        row = {f"b{k}": rep.nodes.points[j, k] for k in range(grid.dim)}
        row.update({"density": rep.density[j], "verdict": rep.verdicts[j]})
        rows.append(row)
    write_csv(args.out, rows)
    print(f"regular mass {rep.regular_mass():.6g}; "
          f"{len(rep.atoms)} atom(s) of total mass {rep.atom_mass():.6g}; "
          f"densities at {args.out}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mel",
                                description="numerical laboratory for semilinear "
                                            "elliptic equations with measure data")
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("list", help="list the experiment catalog")
    sp.set_defaults(fn=cmd_list)

    sp = sub.add_parser("run", help="run a named experiment")
    sp.add_argument("experiment", nargs="?", help="experiment id (see 'mel list')")
    sp.add_argument("--config", help="JSON config file (schema %s)" % SCHEMA)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", help="output directory (default mel-out)")
    sp.add_argument("--check", action="store_true", help="exit 2 on verdict failure")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE",
                    help="parameter override (repeatable)")
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("check-all", help="run every experiment in acceptance mode")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_check_all)

    sp = sub.add_parser("green", help="grid Green potential of a unit Dirac at the origin")
    sp.add_argument("--n", type=int, default=3)
    sp.add_argument("--h", default="1/32")
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_green)

    sp = sub.add_parser("solve-absorption", help="solve L u + g(u) = lambda, u = mu")
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument("--shape", default="disk", choices=["disk", "ball"])
    sp.add_argument("--h", default="1/32")
    sp.add_argument("--g", default="power:2", help="nonlinearity spec (power:q | exp:a | exp-odd:a)")
    sp.add_argument("--atom", action="append", metavar="X,Y[,Z]:W")
    sp.add_argument("--boundary-atom", action="append", metavar="X,Y[,Z]:W")
    sp.add_argument("--method", default="picard", choices=["picard", "newton"])
    sp.add_argument("--lin-tol", type=float, default=1e-10)
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_solve_absorption)

    sp = sub.add_parser("solve-source", help="solve L u = u^q + sigma lambda")
    sp.add_argument("--q", default="2")
    sp.add_argument("--sigma", default="auto:0.5",
                    help="numeric value, or auto[:factor] for factor * sigma0")
    sp.add_argument("--atom", action="append", required=True, metavar="X,Y[,Z]:W")
    sp.add_argument("--h", default="1/16")
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_solve_source)

    sp = sub.add_parser("sweep", help="2-D radial exponential relaxation sweep")
    sp.add_argument("--a", default="1")
    sp.add_argument("--c", default="8pi")
    sp.add_argument("--eps-list")
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_sweep)

    sp = sub.add_parser("radial", help="radial ODE tools")
    sp.add_argument("mode", choices=["classify", "cap"])
    sp.add_argument("--q", default="2")
    sp.add_argument("--n", type=int, default=3)
    sp.add_argument("--u1", default="1")
    sp.add_argument("--du1", default="-1")
    sp.add_argument("--r1", default="1")
    sp.add_argument("--r-end", default="1e-5")
    sp.set_defaults(fn=cmd_radial)

    sp = sub.add_parser("capacity", help="Sobolev capacity of a lattice point set")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--m", type=int, default=2)
    sp.add_argument("--p", default="2")
    sp.add_argument("--set", default="point")
    sp.add_argument("--h-list", required=True)
    sp.add_argument("--dual", action="store_true", help="also print the dual lower bound")
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_capacity)

    sp = sub.add_parser("trace", help="boundary trace of a stored solution")
    sp.add_argument("--solution", required=True, help="CSV produced by solve-absorption")
    sp.add_argument("--t-list", required=True)
    sp.add_argument("--g", help="nonlinearity used in the solve (for classification)")
    sp.add_argument("--out", default="trace.csv")
    sp.set_defaults(fn=cmd_trace)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except MelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
