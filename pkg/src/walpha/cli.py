"""Command-line interface: ``walpha {solve,certify,curves,distance,sweep,oracle}``.

Exit codes: 0 success, 1 malformed configuration or input, 2 marginals of
different mass, 3 non-convergence (outputs are still written, flagged).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import certify as cert
from . import curves as crv
from . import fixtures, geodist, oracles
from .errors import ConfigurationError, InfeasibleMarginalsError, NumericalError
from .grid import TorusGrid
from .io import Config, fmt, read_config, read_field, write_columns, write_field, write_json
from .solver import SolveConfig, solve_geodesic, sweep_alpha

log = logging.getLogger("walpha")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NOCONV = 0, 1, 2, 3

ALLOWED_KEYS = {
    # grid and marginals
    "d", "n", "nt", "marginals", "pair", "rho0_file", "rho1_file",
    # solver
    "alpha", "max_iter", "tol_gap", "tau", "relax", "rho_floor", "check_every", "tol_residual",
    # sweep
    "alphas",
    # curves
    "N", "M", "lambdas", "tol_marginal", "curve_max_iter", "sub_per_step", "compare_grid",
    # distance
    "weight", "weight_amp", "weight_freq", "radius", "time_span", "queries", "separations",
    "scaling_s", "scaling_t", "scaling_x", "scaling_y",
    # oracle
    "oracles",
    # common
    "seed", "threads", "out", "solution_dir",
}


def load_config(path) -> Config:
    return Config(read_config(path, ALLOWED_KEYS), str(path))


def grid_from(cfg: Config) -> TorusGrid:
    return TorusGrid(cfg.int("d", 1), cfg.int("n", 64), cfg.int("nt", 32))


def marginals_from(cfg: Config, grid: TorusGrid, seed: int):
    kind = cfg.str("marginals", "bump_pair")
    if kind == "bump_pair":
        pair = cfg.int("pair", 0)
        if not 0 <= pair < len(fixtures.BUMP_PAIRS):
            raise ConfigurationError(f"pair must be in 0..{len(fixtures.BUMP_PAIRS) - 1}")
        return fixtures.bump_pair(grid, pair)
    if kind == "equal":
        r = fixtures.bump(grid, 0.0)
        return r, r.copy()
    if kind == "random":
        return fixtures.random_density(grid, seed), fixtures.random_density(grid, seed + 1)
    if kind == "files":
        out = []
        for key in ("rho0_file", "rho1_file"):
            head, arr = read_field(cfg.str(key))
            if (head["dims"], head["n"]) != (grid.d, grid.n) or arr.shape[0] != 1:
                raise ConfigurationError(f"{key}: field does not match the configured grid")
            out.append(arr[0])
        return out[0], out[1]
    raise ConfigurationError(f"{cfg.path}:{cfg.line('marginals')}: unknown marginals {kind!r}")


def solve_config_from(cfg: Config, seed: int) -> SolveConfig:
    return SolveConfig(
        max_iter=cfg.int("max_iter", 5000),
        tol_gap=cfg.float("tol_gap", 1e-4),
        tau=cfg.float("tau", None),
        relax=cfg.float("relax", 1.0),
        rho_floor=cfg.float("rho_floor", 1e-6),
        seed=seed,
        check_every=cfg.int("check_every", 10),
        tol_residual=cfg.float("tol_residual", 1e-7),
    )


def _out_dir(args, cfg: Config | None) -> Path:
    out = args.out or (cfg.str("out", None) if cfg is not None else None) or "."
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _grid_meta(grid):
    return {"d": grid.d, "n": grid.n, "nt": grid.nt}


def cmd_solve(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.int("seed", 0)
    grid = grid_from(cfg)
    alpha = cfg.float("alpha", 0.8)
    rho0, rho1 = marginals_from(cfg, grid, seed)
    scfg = solve_config_from(cfg, seed)
    out = _out_dir(args, cfg)
    rho, w, phi, rep = solve_geodesic(rho0, rho1, alpha, grid, scfg)
    write_field(out / "rho0.csv", rho0, grid)
    write_field(out / "rho1.csv", rho1, grid)
    write_field(out / "rho.csv", rho, grid)
    write_field(out / "w.csv", w, grid)
    write_field(out / "phi.csv", phi, grid)
    th = (np.arange(grid.nt) + 0.5) * grid.dt
    write_columns(out / "energy_per_time.csv", ("t", "energy"), th, rep.energy_per_time)
    report = {"alpha": alpha, **_grid_meta(grid), "rho_floor": scfg.rho_floor, **rep.to_dict(),
              "failure": not rep.converged}
    write_json(out / "report.json", report)
    log.info("W2 = %s (gap %.3e, %d iterations)", fmt(rep.W2), rep.gap, rep.iterations)
    return EXIT_OK if rep.converged else EXIT_NOCONV


def load_solution(directory):
    directory = Path(directory)
    try:
        meta = json.loads((directory / "report.json").read_text())
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read {directory / 'report.json'}: {exc}") from None
    grid = TorusGrid(int(meta["d"]), int(meta["n"]), int(meta["nt"]))
    fields = {}
    for name in ("rho0", "rho1", "rho", "w", "phi"):
        head, arr = read_field(directory / f"{name}.csv")
        if (head["dims"], head["n"], head["N_t"]) != (grid.d, grid.n, grid.nt):
            raise ConfigurationError(f"{name}.csv does not match report.json grid")
        fields[name] = arr
    fields["rho0"], fields["rho1"] = fields["rho0"][0], fields["rho1"][0]
    fields["w"] = fields["w"].reshape(grid.flux_shape)
    return meta, grid, fields


def cmd_certify(args) -> int:
    cfg = load_config(args.config) if args.config else None
    sol = args.solution_dir or (cfg.str("solution_dir", None) if cfg else None)
    if sol is None:
        raise ConfigurationError("certify needs a solution directory")
    meta, grid, f = load_solution(sol)
    c = cert.certify(f["rho"], f["w"], f["phi"], f["rho0"], f["rho1"], float(meta["alpha"]), grid,
                     float(meta.get("rho_floor", 1e-6)))
    out = Path(args.out) if args.out else Path(sol)
    out.mkdir(parents=True, exist_ok=True)
    (out / "certificate.json").write_text(c.to_json() + "\n")
    return EXIT_OK


def cmd_curves(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.int("seed", 0)
    grid = grid_from(cfg)
    alpha = cfg.float("alpha", 0.8)
    rho0, rho1 = marginals_from(cfg, grid, seed)
    ccfg = crv.CurveConfig(
        N=cfg.int("N", 2000), M=cfg.int("M", 16), sub_per_step=cfg.int("sub_per_step", 2),
        lambdas=tuple(cfg.floats("lambdas", [1e2, 1e3, 1e4])), tol_marginal=cfg.float("tol_marginal", 2e-2),
        max_iter=cfg.int("curve_max_iter", 400), seed=seed,
    )
    out = _out_dir(args, cfg)
    code = EXIT_OK
    try:
        eta, K = crv.solve_curves(rho0, rho1, alpha, grid, ccfg)
        failure = False
    except NumericalError as exc:
        eta = exc.diagnostics["ensemble"]
        K = crv.K_eval(eta, grid, alpha, ccfg.sub_per_step)
        failure, code = True, EXIT_NOCONV
    (out / "curves.csv").write_text(eta.to_csv())
    summary = {"alpha": alpha, **_grid_meta(grid), "N": eta.N, "M": eta.M, "K": K, "failure": failure,
               "total_action": crv.total_action(eta, alpha)}
    if grid.d == 1:
        summary["marginal_w1"] = [crv.marginal_w1_1d(eta, rho0, 0, grid), crv.marginal_w1_1d(eta, rho1, 1, grid)]
    if cfg.bool("compare_grid", False):
        rho, w, _, rep = solve_geodesic(rho0, rho1, alpha, grid, solve_config_from(cfg, seed))
        summary.update({"W2": rep.W2, "K_over_W2": K / rep.W2 if rep.W2 > 0 else None,
                        "sigma_relation": crv.check_sigma_relation(eta, rho, w, alpha, grid, ccfg.sub_per_step)})
    write_json(out / "curves.json", summary)
    return code


def _weight_from(cfg: Config, grid: TorusGrid):
    kind = cfg.str("weight", "constant")
    if kind == "constant":
        return geodist.WeightField.constant(cfg.float("weight_amp", 1.0), grid)
    if kind == "sine":
        amp, k = cfg.float("weight_amp", 0.5), cfg.int("weight_freq", 1)
        if not 0 <= amp < 1:
            raise ConfigurationError("weight_amp must lie in [0, 1) for a positive weight")
        x = grid.centers()
        phase = x.sum(axis=0)
        return geodist.WeightField(lambda t: 1 + amp * np.sin(2 * np.pi * (k * phase + t)), grid)
    raise ConfigurationError(f"{cfg.path}:{cfg.line('weight')}: unknown weight {kind!r}")


def _parse_queries(cfg: Config, grid: TorusGrid):
    if not cfg.has("queries"):
        return []
    text, lineno = cfg.entries["queries"]
    out = []
    for item in text.split(";"):
        parts = item.split()
        try:
            if len(parts) != 4:
                raise ValueError
            s, t = float(parts[0]), float(parts[2])
            x = [int(v) for v in parts[1].split(":")]
            y = [int(v) for v in parts[3].split(":")]
        except ValueError:
            raise ConfigurationError(f"{cfg.path}:{lineno}: queries must be 's x t y; ...' "
                                     "with x, y as colon-separated cell indices") from None
        out.append((s, x, t, y))
    return out


def cmd_distance(args) -> int:
    cfg = load_config(args.config)
    grid = grid_from(cfg)
    alpha = cfg.float("alpha", 0.8)
    a = _weight_from(cfg, grid)
    radius = cfg.int("radius", 3)
    span = cfg.int("time_span", 0) or None  # 0: edges may span any number of layers
    out = _out_dir(args, cfg)
    rows = []
    for s, x, t, y in _parse_queries(cfg, grid):
        c = geodist.geodesic_cost(a, s, x, t, y, alpha, grid, radius, time_span=span)
        rows.append({"s": s, "x": x, "t": t, "y": y, "cost": c})
    write_json(out / "distance.json", {"alpha": alpha, "queries": rows})
    if cfg.has("scaling_s"):
        s, t = cfg.float("scaling_s"), cfg.float("scaling_t", 1.0)
        x = cfg.ints("scaling_x", [0] * grid.d)
        y = cfg.ints("scaling_y", [grid.n // 4] + [0] * (grid.d - 1))
        mis = geodist.check_scaling(a, x, y, s, t, alpha, grid, radius, time_span=span)
        write_json(out / "scaling.json", {"s": s, "t": t, "x": x, "y": y, "mismatch": mis})
    if cfg.has("separations"):
        rep = geodist.holder_report(a, alpha, cfg.ints("separations"), grid, radius=radius)
        write_columns(out / "holder.csv", ("separation", "cost"),
                      [k * grid.h for k in rep.separations], rep.costs)
        write_json(out / "holder.json", {"exponent": rep.exponent, "sigma_max": rep.sigma_max,
                                         "constants": rep.constants})
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.int("seed", 0)
    grid = grid_from(cfg)
    rho0, rho1 = marginals_from(cfg, grid, seed)
    alphas = cfg.floats("alphas", [0.0, 0.5, 1.0])
    rows = sweep_alpha(rho0, rho1, grid, alphas, solve_config_from(cfg, seed))
    out = _out_dir(args, cfg)
    write_columns(out / "sweep.csv", ("alpha", "W2"), [r["alpha"] for r in rows], [r["W2"] for r in rows])
    write_json(out / "sweep.json", {**_grid_meta(grid), "rows": rows})
    return EXIT_NOCONV if any(r["error"] or not r.get("converged", True) for r in rows) else EXIT_OK


def cmd_oracle(args) -> int:
    cfg = load_config(args.config)
    seed = args.seed if args.seed is not None else cfg.int("seed", 0)
    grid = grid_from(cfg)
    rho0, rho1 = marginals_from(cfg, grid, seed)
    which = [s.strip() for s in cfg.str("oracles", "hminus1,w2").split(",")]
    res = {**_grid_meta(grid)}
    for name in which:
        if name == "hminus1":
            res["hminus1"] = oracles.hminus1_distance(rho0, rho1, grid)
        elif name == "w2":
            res["w2"] = oracles.w2_periodic_1d(rho0, rho1, grid)
        elif name == "brute":
            alpha = cfg.float("alpha", 0.8)
            res["brute_force_tiny"] = oracles.brute_force_tiny(rho0, rho1, alpha, grid)
            res["alpha"] = alpha
        else:
            raise ConfigurationError(f"{cfg.path}:{cfg.line('oracles')}: unknown oracle {name!r}")
    write_json(_out_dir(args, cfg) / "oracle.json", res)
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "certify": cmd_certify,
    "curves": cmd_curves,
    "distance": cmd_distance,
    "sweep": cmd_sweep,
    "oracle": cmd_oracle,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="walpha", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=name != "certify")
        p.add_argument("--out")
        p.add_argument("--threads", type=int, default=0, help="0 = automatic")
        p.add_argument("--seed", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "certify":
            p.add_argument("solution_dir", nargs="?")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.threads and args.threads > 0:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        return COMMANDS[args.command](args)
    except InfeasibleMarginalsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOCONV


if __name__ == "__main__":
    sys.exit(main())
