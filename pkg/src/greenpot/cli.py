"""Command-line interface.

Subcommands: example1 (deterministic convergence table), example2
(correction rates and eps-cost curve), greens (kernel value grid dump),
mlmc (single estimator run), selftest (quick internal checks).

Configuration comes from an optional JSON file plus flag overrides; flags
win. All result files are written atomically (temp file + rename) and all
floating-point values are printed with 17 significant digits, so repeated
runs with the same seed and config are byte-identical regardless of the
thread count. Wall-clock timings are written to a separate timings file
that is excluded from that determinism contract.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile

import numpy as np

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3

_CONFIG_KEYS = {
    "experiment": str,
    "kernel": str,
    "seed": int,
    "threads": int,
    "out_dir": str,
    "n2_list": list,
    "levels": int,
    "pilot": int,
    "eps": list,
    "geometry": str,
    "source": list,
    "grid": int,
    "offset": float,
    "contour_points": int,
    "eps_split": float,
    "h0": float,
}

_DEFAULTS = {
    "experiment": None,
    "kernel": "analytical",
    "seed": 0,
    "threads": os.cpu_count() or 1,
    "out_dir": ".",
    "n2_list": [8, 16, 32, 64, 128, 256],
    "levels": 4,
    "pilot": 64,
    "eps": [0.008, 0.004, 0.002, 0.001],
    "geometry": "square",
    "source": [0.3, 0.4],
    "grid": 64,
    "offset": 0.01,
    "contour_points": 512,
    "eps_split": 0.5,
    "h0": 1.0 / 64.0,  # estimator base mesh
}

# the rate study defaults to the coarse level hierarchy and reports rates
# only; eps-cost curves are opt-in there because they sample heavily
_COMMAND_DEFAULTS = {
    "example2": {"h0": 1.0 / 8.0, "eps": []},
}


class ConfigError(ValueError):
    pass


def fmt(v):
    """17-significant-digit decimal rendering, for checkable determinism."""
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(format(float(obj), ".17g"))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    return obj


def atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_json(path, payload):
    atomic_write(path, json.dumps(_jsonable(payload), indent=1, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    lines = [",".join(header)] if header else []
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    atomic_write(path, "\n".join(lines) + "\n")


def load_config(path):
    try:
        with open(path) as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    for key, value in cfg.items():
        if key == "schema_version":
            continue
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        want = _CONFIG_KEYS[key]
        if want is int and isinstance(value, bool):
            raise ConfigError(f"config key {key!r} must be {want.__name__}")
        if want is float and isinstance(value, int):
            value = float(value)
        if not isinstance(value, want):
            raise ConfigError(f"config key {key!r} must be {want.__name__}")
    return cfg


def resolve_config(args):
    cfg = dict(_DEFAULTS)
    cfg.update(_COMMAND_DEFAULTS.get(args.command, {}))
    if args.config:
        cfg.update(load_config(args.config))
    for key in _CONFIG_KEYS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    cfg["experiment"] = args.command
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg["kernel"] not in ("analytical", "numerical", "schur"):
        raise ConfigError(f"unknown kernel {cfg['kernel']!r}")
    if cfg["seed"] < 0:
        raise ConfigError("seed must be nonnegative")
    if cfg["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    if any(e <= 0 for e in cfg["eps"]):
        raise ConfigError("eps values must be positive")
    if not 0 < cfg["eps_split"] < 1:
        raise ConfigError("eps_split must be in (0, 1)")
    if cfg["pilot"] < 2:
        raise ConfigError("pilot must be >= 2")
    if cfg["levels"] < 0 or cfg["levels"] > 12:
        raise ConfigError("levels out of range")
    if cfg["grid"] < 2:
        raise ConfigError("grid must be >= 2")
    if any(n < 4 for n in cfg["n2_list"]):
        raise ConfigError("n2 values must be >= 4")
    if cfg["offset"] <= 0:
        raise ConfigError("offset must be positive")
    if cfg["contour_points"] < 64:
        raise ConfigError("contour_points must be >= 64")
    if not 0 < cfg["h0"] < 1:
        raise ConfigError("h0 must be in (0, 1)")


def _out(cfg, name):
    return os.path.join(cfg["out_dir"], name)


def _embed(cfg):
    """Config as embedded in result files: execution-environment keys are
    dropped so outputs are byte-identical across thread counts and paths."""
    return {k: v for k, v in cfg.items() if k not in ("threads", "out_dir")}


def cmd_example1(cfg):
    from . import experiments as ex

    res = ex.run_example1(cfg["kernel"], tuple(cfg["n2_list"]))
    header = ["n1", "n2", "err_mu", "rate_mu", "err_u", "rate_u", "err_h1", "rate_h1"]
    rows = [
        [r.n1, r.n2, r.err_mu, rm, r.err_u, ru, r.err_h1, rh]
        for r, rm, ru, rh in zip(res.rows, res.rates_mu, res.rates_u, res.rates_h1)
    ]
    csv_path = _out(cfg, f"example1_{cfg['kernel']}.csv")
    write_csv(csv_path, header, rows)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": _embed(cfg),
        "fitted_order_mu": ex.fitted_order([r.err_mu for r in res.rows]),
        "fitted_order_u": ex.fitted_order([r.err_u for r in res.rows]),
        "fitted_order_h1": ex.fitted_order([r.err_h1 for r in res.rows]),
        "rows": [
            dict(n1=r.n1, n2=r.n2, err_mu=r.err_mu, err_u=r.err_u, err_h1=r.err_h1)
            for r in res.rows
        ],
    }
    write_json(_out(cfg, f"example1_{cfg['kernel']}.json"), summary)
    timings = [
        dict(n2=r.n2, seconds_assemble=r.seconds_assemble, seconds_solve=r.seconds_solve)
        for r in res.rows
    ]
    write_json(_out(cfg, f"example1_{cfg['kernel']}_timings.json"), timings)
    print(
        f"example1 kernel={cfg['kernel']} levels={len(res.rows)} "
        f"orders mu/u/h1 = {summary['fitted_order_mu']:.2f}/"
        f"{summary['fitted_order_u']:.2f}/{summary['fitted_order_h1']:.2f} -> {csv_path}"
    )
    return EXIT_OK


def cmd_example2(cfg):
    from . import experiments as ex

    from . import mlmc

    res = ex.run_example2(
        cfg["kernel"],
        eps_list=tuple(cfg["eps"]),
        levels=cfg["levels"],
        pilot=cfg["pilot"],
        seed=cfg["seed"],
        threads=cfg["threads"],
        hierarchy=mlmc.LevelHierarchy(h0=cfg["h0"]),
    )
    header = ["level", "h", "n1", "n2", "mean_abs_delta", "variance", "cost_model", "samples"]
    rows = [
        [s["level"], s["h"], s["n1"], s["n2"], s["mean_abs_delta"], s["variance"],
         s["cost_model"], s["samples"]]
        for s in res.level_stats
    ]
    write_csv(_out(cfg, f"example2_levels_{cfg['kernel']}.csv"), header, rows)
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": _embed(cfg),
        "alpha_hat": res.alpha_hat,
        "beta_hat": res.beta_hat,
        "rho_hat": res.rho_hat,
        "cost_slope": res.cost_slope,
        "eps_costs": [
            {k: v for k, v in e.items() if k != "total_cost_seconds"} for e in res.eps_costs
        ],
    }
    write_json(_out(cfg, f"example2_{cfg['kernel']}.json"), summary)
    write_json(
        _out(cfg, f"example2_{cfg['kernel']}_timings.json"),
        {
            "per_level_seconds": [s["cost_seconds"] for s in res.level_stats],
            "eps_run_seconds": [e["total_cost_seconds"] for e in res.eps_costs],
        },
    )
    slope = f" cost-slope={res.cost_slope:.2f}" if res.eps_costs else ""
    print(
        f"example2 kernel={cfg['kernel']} alpha={res.alpha_hat:.2f} "
        f"beta={res.beta_hat:.2f} rho={res.rho_hat:.2f}{slope}"
    )
    return EXIT_OK


def cmd_greens(cfg):
    from . import bie
    from .geometry import Circle, Polygon, unit_square
    from .kernels import (
        DiskKernel,
        NumericalGreenKernel,
        RectangleKernel,
        build_numerical_green,
        dirichlet,
    )

    source = np.asarray(cfg["source"], dtype=float)
    n = cfg["grid"]
    geometry = cfg["geometry"]
    if geometry == "square":
        xs = np.linspace(0.0, 1.0, n)
        if cfg["kernel"] == "numerical":
            handle = build_numerical_green(unit_square(), dirichlet(), 1.0 / 256, side="interior")
            kernel = NumericalGreenKernel(handle)
        else:
            kernel = RectangleKernel(1.0, 1.0)
        grid_x, grid_y = np.meshgrid(xs, xs)
    elif geometry == "disk":
        xs = np.linspace(-1.0, 1.0, n)
        kernel = DiskKernel(1.0)
        grid_x, grid_y = np.meshgrid(xs, xs)
    elif geometry == "lshape":
        corners = [(0, 0), (1, 0), (1, 0.5), (0.5, 0.5), (0.5, 1), (0, 1)]
        handle = build_numerical_green(Polygon(corners), dirichlet(), 1.0 / 256, side="interior")
        kernel = NumericalGreenKernel(handle)
        xs = np.linspace(0.0, 1.0, n)
        grid_x, grid_y = np.meshgrid(xs, xs)
    else:
        raise ConfigError(f"unknown geometry {geometry!r}")

    pts = np.column_stack([grid_x.ravel(), grid_y.ravel()])
    vals = np.full(len(pts), np.nan)
    if geometry == "disk":
        inside = np.hypot(pts[:, 0], pts[:, 1]) <= 1.0
    elif geometry == "lshape":
        inside = ~((pts[:, 0] > 0.5) & (pts[:, 1] > 0.5))
    else:
        inside = np.ones(len(pts), dtype=bool)
    inside &= ~np.all(np.isclose(pts, source, rtol=0, atol=1e-14), axis=1)
    vals[inside] = kernel.value_matrix(pts[inside], source[None, :])[:, 0]
    grid = vals.reshape(n, n)
    path = _out(cfg, f"greens_{geometry}_{cfg['kernel']}.csv")
    write_csv(path, None, grid.tolist())
    write_json(
        _out(cfg, f"greens_{geometry}_{cfg['kernel']}.json"),
        {"schema_version": SCHEMA_VERSION, "config": _embed(cfg)},
    )
    print(f"greens geometry={geometry} kernel={cfg['kernel']} grid={n}x{n} -> {path}")
    return EXIT_OK


def cmd_mlmc(cfg):
    from . import experiments as ex, mlmc

    problem = ex.AperturePotentialProblem(
        cfg["kernel"],
        functional=ex.FunctionalSpec(
            offset=cfg["offset"], contour_points=cfg["contour_points"]
        ),
    )
    mc_cfg = mlmc.MlmcConfig(
        seed=cfg["seed"],
        eps_split=cfg["eps_split"],
        pilot_samples=cfg["pilot"],
        threads=cfg["threads"],
    )
    eps = cfg["eps"][0] if isinstance(cfg["eps"], list) else float(cfg["eps"])
    result = mlmc.mlmc_estimate(problem, eps, mlmc.LevelHierarchy(h0=cfg["h0"]), mc_cfg)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config": _embed(cfg),
        "eps": eps,
        "estimate": result.estimate,
        "alpha_hat": result.alpha_hat,
        "beta_hat": result.beta_hat,
        "rho_hat": result.rho_hat,
        "bias_constant": result.bias_constant,
        "mse_budget": result.mse_budget,
        "total_cost_model": result.total_cost_model,
        "levels": [
            {k: v for k, v in lv.items() if k != "cost_seconds"} for lv in result.levels
        ],
        "plan": {
            "eps_i": result.plan.eps_i,
            "eps_ii": result.plan.eps_ii,
            "levels": result.plan.levels,
            "samples": [int(m) for m in result.plan.samples],
            "weights": list(result.plan.weights),
        },
    }
    path = _out(cfg, "mlmc_result.json")
    write_json(path, payload)
    write_json(
        _out(cfg, "mlmc_timings.json"),
        {"total_cost_seconds": result.total_cost_seconds,
         "per_level_seconds": [lv["cost_seconds"] for lv in result.levels]},
    )
    header = ["level", "h", "variance", "cost_model", "samples", "mean_abs_delta"]
    rows = [
        [lv["level"], lv["h"], lv["variance"], lv["cost_model"], lv["samples"],
         lv["mean_abs_delta"]]
        for lv in result.levels
    ]
    write_csv(_out(cfg, "mlmc_levels.csv"), header, rows)
    print(
        f"mlmc kernel={cfg['kernel']} eps={fmt(eps)} estimate={fmt(result.estimate)} "
        f"L={result.plan.levels} -> {path}"
    )
    return EXIT_OK


def cmd_selftest(cfg):
    import math

    from . import bie, mlmc
    from . import kernels as K
    from .geometry import Circle, stream_for

    checks = []

    def check(name, ok):
        checks.append(ok)
        print(f"selftest {name}: {'PASS' if ok else 'FAIL'}")

    check("fundamental ln1", K.fundamental_value((1.0, 0.0), (0.0, 0.0)) == 0.0)
    check(
        "disk center value",
        abs(K.disk_green(2.0, (0, 0), (0.5, 0.0)) - math.log(4.0) / (2 * math.pi)) < 1e-12,
    )
    m = mlmc.allocate_samples([1.0, 0.25], [1.0, 4.0], 0.1)
    check("allocation", list(m) == [200, 50])
    a = Circle((0.0, 0.0), 0.5)
    b = bie.DiscretizedBoundary(a, 32)
    sysd = bie.assemble_system(
        K.FundamentalKernel(), b, K.dirichlet(), lambda p, n: np.full(len(p), 1.0)
    )
    mu = bie.solve_density(sysd)
    res = np.max(np.abs(sysd.matrix @ mu.mu - sysd.rhs))
    check("dirichlet solve residual", res < 1e-10)
    s1 = stream_for(1, 2, 3).generator().uniform(size=4)
    s2 = stream_for(1, 2, 3).generator().uniform(size=4)
    check("stream determinism", np.array_equal(s1, s2))
    ok = all(checks)
    print(f"selftest: {'all passed' if ok else 'FAILURES PRESENT'}")
    return EXIT_OK if ok else 1


def build_parser():
    parser = argparse.ArgumentParser(
        prog="greenpot",
        description="Laplace solver with Green's potential kernels on random apertures",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON config file; flags override its values")
        p.add_argument("--kernel", choices=("analytical", "numerical", "schur"))
        p.add_argument("--seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--out-dir", dest="out_dir")

    p1 = sub.add_parser("example1", help="deterministic convergence table")
    common(p1)
    p1.add_argument("--levels", type=int, help="number of meshes, n2 = 8 * 2^k")
    p1.add_argument("--n2-list", dest="n2_list", type=lambda s: [int(x) for x in s.split(",")])

    p2 = sub.add_parser("example2", help="random-aperture rates and eps-cost study")
    common(p2)
    p2.add_argument("--levels", type=int)
    p2.add_argument("--pilot", type=int)
    p2.add_argument("--eps", type=lambda s: [float(x) for x in s.split(",")])
    p2.add_argument("--h0", type=float)

    pg = sub.add_parser("greens", help="dump a kernel value grid as CSV")
    common(pg)
    pg.add_argument("--geometry", choices=("square", "disk", "lshape"))
    pg.add_argument("--source", type=lambda s: [float(x) for x in s.split(",")])
    pg.add_argument("--grid", type=int)

    pm = sub.add_parser("mlmc", help="one multilevel estimator run")
    common(pm)
    pm.add_argument("--eps", type=lambda s: [float(x) for x in s.split(",")])
    pm.add_argument("--pilot", type=int)
    pm.add_argument("--offset", type=float)
    pm.add_argument("--contour-points", dest="contour_points", type=int)
    pm.add_argument("--eps-split", dest="eps_split", type=float)
    pm.add_argument("--h0", type=float)

    ps = sub.add_parser("selftest", help="run quick internal checks")
    common(ps)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "example1" and getattr(args, "levels", None):
        cfg["n2_list"] = [8 * 2**k for k in range(args.levels)]
    dispatch = {
        "example1": cmd_example1,
        "example2": cmd_example2,
        "greens": cmd_greens,
        "mlmc": cmd_mlmc,
        "selftest": cmd_selftest,
    }
    try:
        return dispatch[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
