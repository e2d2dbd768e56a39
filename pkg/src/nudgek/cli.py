"""Command-line front end.

Subcommands: ``analyze``, ``tir``, ``atir-sweep``, ``kopt``, ``simulate``,
``validate``. Exit codes: 1 bad configuration, 2 numerical failure,
3 validation failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import atir as atir_mod
from . import fcfs, nudge, sim
from .errors import ConfigError, GridMismatch, InvalidDistribution, NudgeError, UnstableSystem
from .phasetype import PhaseType, SystemConfig, normalize_system, parse_k, ph_make, ph_standard

EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 1, 2, 3

PRESETS = {
    "cfg-a": {"lambda": 0.75, "p": 0.5, "ratio": 2.0,
              "type1": {"dist": "expo"}, "type2": {"dist": "expo"}, "K": 2},
    "cfg-b": {"lambda": 0.75, "p": 0.5, "ratio": 1.5,
              "type1": {"dist": "expo"}, "type2": {"dist": "expo"}, "K": 1},
    "cfg-c": {"lambda": 0.7, "p": 0.7, "ratio": 1.2,
              "type1": {"dist": "expo"}, "type2": {"dist": "h2_shape", "scv": 2, "f": 0.9},
              "K": 1},
}


# -- configuration -------------------------------------------------------------


def _shape(spec: dict, where: str) -> tuple[PhaseType, bool]:
    """Distribution for one job type; the flag tells whether its mean is explicit."""
    if not isinstance(spec, dict) or "dist" not in spec:
        raise ConfigError(f"{where}: expected an object with a 'dist' field")
    params = {k: v for k, v in spec.items() if k != "dist"}
    kind = spec["dist"]
    try:
        if kind == "ph":
            unknown = set(params) - {"alpha", "S"}
            if unknown or "alpha" not in params or "S" not in params:
                raise ConfigError(f"{where}: 'ph' takes exactly 'alpha' and 'S'")
            return ph_make(params["alpha"], params["S"]), True
        return ph_standard(kind, **params), "mean" in params
    except TypeError as exc:
        raise ConfigError(f"{where}: bad parameters for {kind!r}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


@dataclass(frozen=True)
class Shapes:
    """The two job-size shapes of a config, before rescaling."""

    shape1: PhaseType
    shape2: PhaseType
    explicit: bool


def build_system(raw: dict, lam=None, p=None, ratio=None, k=None) -> SystemConfig:
    """``SystemConfig`` from the JSON schema, with optional overrides."""
    shapes = parse_shapes(raw)
    lam = raw.get("lambda") if lam is None else lam
    p = raw.get("p") if p is None else p
    k = raw.get("K", 1) if k is None else k
    if lam is None or p is None:
        raise ConfigError("config needs 'lambda' and 'p'")
    try:
        k = parse_k(k)
        lam, p = float(lam), float(p)
        if shapes.explicit:
            if ratio is not None or "ratio" in raw:
                raise ConfigError("'ratio' must be omitted when type means are explicit")
            return SystemConfig(lam, p, shapes.shape1, shapes.shape2, k)
        ratio = raw.get("ratio") if ratio is None else ratio
        if ratio is None:
            raise ConfigError("config needs 'ratio' unless type means are explicit")
        return normalize_system(lam, p, shapes.shape1, shapes.shape2, float(ratio), k)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def parse_shapes(raw: dict) -> Shapes:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    for key in ("type1", "type2"):
        if key not in raw:
            raise ConfigError(f"config is missing {key!r}")
    s1, e1 = _shape(raw["type1"], "type1")
    s2, e2 = _shape(raw["type2"], "type2")
    if e1 != e2:
        raise ConfigError("give explicit means for both types or for neither")
    return Shapes(s1, s2, e1)


def load_config(args) -> dict:
    if args.config and args.preset:
        raise ConfigError("use either --config or --preset")
    if args.preset:
        return json.loads(json.dumps(PRESETS[args.preset]))
    if not args.config:
        raise ConfigError("a --config file or --preset is required")
    try:
        with open(args.config, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {args.config}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.config}: invalid JSON ({exc})") from None


def parse_k_list(text: str) -> list:
    try:
        ks = [parse_k(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if not ks:
        raise ConfigError("empty K list")
    return ks


def parse_range(text: str, name: str) -> list[float]:
    """``A:B:STEP`` inclusive of ``B`` (up to rounding), or a single value."""
    parts = text.split(":")
    try:
        nums = [float(x) for x in parts]
    except ValueError:
        raise ConfigError(f"{name}: expected A:B:STEP, got {text!r}") from None
    if len(nums) == 1:
        return nums
    if len(nums) != 3:
        raise ConfigError(f"{name}: expected A:B:STEP, got {text!r}")
    a, b, step = nums
    if step <= 0 or b < a:
        raise ConfigError(f"{name}: empty range {text!r}")
    n = int(math.floor((b - a) / step + 1e-9)) + 1
    return [round(a + i * step, 12) for i in range(n)]


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def k_label(k) -> str:
    return "inf" if math.isinf(k) else str(int(k))


def write_csv(rows, header, out_path) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) if not isinstance(v, str) else v for v in row])
    text = buf.getvalue()
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def t_grid(args) -> np.ndarray:
    if args.t_points < 1 or args.t_max < args.t_min or args.t_min < 0:
        raise ConfigError("t grid must be non-empty, ascending and non-negative")
    return np.linspace(args.t_min, args.t_max, args.t_points)


def _pool_map(fn, items, workers):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


# -- subcommands -----------------------------------------------------------------


def cmd_analyze(args, out) -> int:
    cfg = build_system(load_config(args))
    ks = parse_k_list(args.k) if args.k else [cfg.k]
    sp = fcfs.spectral(cfg)
    fm = fcfs.means(cfg)
    ko = atir_mod.k_opt(cfg)
    lines = [
        ("lambda", cfg.lam), ("p", cfg.p), ("E[X1]", cfg.mean1), ("E[X2]", cfg.mean2),
        ("theta_Z", sp.theta), ("c_Z", sp.c_z), ("c_FCFS", sp.c_z * sp.lt),
        ("S~(-theta)", sp.lt), ("S~1(-theta)", sp.lt1), ("S~2(-theta)", sp.lt2),
        ("E[R_FCFS]", fm.E_R), ("K_opt", ko),
    ]
    for key, val in lines:
        out.write(f"{key}: {fmt(val)}\n")
    for k in ks:
        ck = cfg.with_k(k)
        tc = nudge.tail_constants(ck)
        out.write(f"[K={k_label(k)}]\n")
        for key, val in (
            ("E[R_Nudge]", nudge.mean_response(ck)), ("p_swap", nudge.p_swap(ck)),
            ("c_W1", tc.c_w1), ("c_W2", tc.c_w2), ("c_R1", tc.c_r1), ("c_R2", tc.c_r2),
            ("ATIR", atir_mod.atir(ck)),
        ):
            out.write(f"  {key}: {fmt(val)}\n")
    return 0


def _tir_rows(item):
    cfg, grid = item
    curve = nudge.tir_curve(cfg, grid)
    return [(k_label(cfg.k), t, a, b, r) for t, a, b, r in
            zip(grid, curve.fcfs_ccdf.values, curve.nudge_ccdf.values, curve.tir)]


def cmd_tir(args, out) -> int:
    cfg = build_system(load_config(args))
    ks = parse_k_list(args.k) if args.k else [cfg.k]
    grid = t_grid(args)
    blocks = _pool_map(_tir_rows, [(cfg.with_k(k), grid) for k in ks], args.workers)
    write_csv([r for b in blocks for r in b], ["k", "t", "ccdf_fcfs", "ccdf_nudge", "tir"], args.out)
    return 0


def _sweep_point(item):
    shapes, lam, ratio, p = item
    cfg = normalize_system(lam, p, shapes.shape1, shapes.shape2, ratio, k=1)
    ko = atir_mod.k_opt(cfg)
    return (lam, ratio, p, atir_mod.atir(cfg, 1), atir_mod.atir(cfg, ko), ko)


def cmd_atir_sweep(args, out) -> int:
    raw = load_config(args)
    shapes = parse_shapes(raw)
    if shapes.explicit:
        raise ConfigError("atir-sweep rescales types by ratio; omit explicit means")
    lams = parse_range(args.lambda_range, "--lambda-range") if args.lambda_range else [raw.get("lambda")]
    ratios = parse_range(args.ratio_range, "--ratio-range") if args.ratio_range else [raw.get("ratio")]
    ps = parse_range(args.p_range, "--p-range") if args.p_range else [raw.get("p")]
    if None in lams or None in ratios or None in ps:
        raise ConfigError("lambda, ratio and p need a config value or a range flag")
    for lam in lams:
        if not 0 < lam < 1:
            raise ConfigError(f"lambda {lam} outside (0, 1)")
    grid = [(shapes, lam, r, p) for lam in lams for r in ratios for p in ps]
    rows = _pool_map(_sweep_point, grid, args.workers)
    write_csv(rows, ["lambda", "ratio", "p", "atir_1", "atir_kopt", "k_opt"], args.out)
    return 0


def cmd_kopt(args, out) -> int:
    cfg = build_system(load_config(args))
    out.write(f"K_opt: {atir_mod.k_opt(cfg)}\n")
    out.write(f"K_opt_real: {fmt(atir_mod.k_opt_real(cfg))}\n")
    ke = atir_mod.k_opt_expo(cfg)
    out.write(f"K_opt_expo: {'n/a' if ke is None else ke}\n")
    if cfg.mean2 >= cfg.mean1:
        ht = atir_mod.heavy_traffic_k(cfg)
        out.write(f"K_approx: {ht.k_approx}\n")
        out.write(f"K_approx_workload: {ht.k_approx_workload}\n")
        out.write(f"K_kingman: {ht.k_kingman}\n")
    else:
        out.write("K_approx: n/a (E[X2] < E[X1])\n")
    return 0


def _run_sim(args):
    cfg = build_system(load_config(args), k=parse_k_list(args.k)[0] if args.k else None)
    grid = t_grid(args)
    stats = sim.simulate(cfg, args.arrivals, args.seed, grid, warmup=args.warmup,
                         n_batches=args.batches, replications=args.replications,
                         workers=args.workers)
    return cfg, grid, stats


def cmd_simulate(args, out) -> int:
    cfg, grid, st = _run_sim(args)
    rows = []
    for label in ("Z", "W1", "W2", "R1", "R2", "R"):
        est, hw = st.ccdf_estimates[label]
        rows.extend((label, t, e, h) for t, e, h in zip(grid, est, hw))
    scalars = [("mean_response", st.mean_response), ("mean_response_1", st.mean_response_by_type[1]),
               ("mean_response_2", st.mean_response_by_type[2]),
               ("swap_fraction_2", st.swap_fraction_type2)]
    rows.extend((name, "", e, h) for name, (e, h) in scalars)
    write_csv(rows, ["series", "t", "estimate", "half_width"], args.out)
    return 0


def cmd_validate(args, out) -> int:
    cfg, grid, st = _run_sim(args)
    curves = sim.analytic_reference(cfg, grid)
    scalars = {
        "p_swap": (nudge.p_swap(cfg), st.swap_fraction_type2),
        "mean_response": (nudge.mean_response(cfg), st.mean_response),
    }
    rep = sim.validate(cfg, curves, st, scalars)
    rows = []
    for c in rep.checks:
        rows.extend((c.label, t, a, e, h, z) for t, a, e, h, z in
                    zip(grid, c.analytic, c.estimate, c.half_width, c.z))
    for name, z in rep.scalars.items():
        a, (e, h) = scalars[name]
        rows.append((name, "", a, e, h, z))
    write_csv(rows, ["series", "t", "analytic", "estimate", "half_width", "z"], args.out)
    verdict = "PASS" if rep.passed else "FAIL"
    print(f"{verdict}: {rep.fraction_within:.1%} of points within 3 half-widths", file=sys.stderr)
    return 0 if rep.passed else EXIT_VALIDATION


# -- argument parsing --------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nudgek", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, k_default=None):
        p.add_argument("--config", help="JSON system description")
        p.add_argument("--preset", choices=sorted(PRESETS), help="built-in scenario")
        p.add_argument("--k", default=k_default, help="comma-separated K values, 'inf' allowed")
        p.add_argument("--out", help="write CSV here instead of stdout")
        p.add_argument("--workers", type=int, default=os.cpu_count() or 1)

    def grid(p, t_min, t_max, points):
        p.add_argument("--t-min", type=float, default=t_min)
        p.add_argument("--t-max", type=float, default=t_max)
        p.add_argument("--t-points", type=int, default=points)

    common(sub.add_parser("analyze", help="constants, means and ATIR for one system"))
    p = sub.add_parser("tir", help="tail improvement ratio curves")
    common(p, "1,2,3,inf")
    grid(p, 0.1, 40.0, 200)
    p = sub.add_parser("atir-sweep", help="ATIR(1), ATIR(K_opt) and K_opt over a grid")
    common(p)
    p.add_argument("--lambda-range")
    p.add_argument("--ratio-range")
    p.add_argument("--p-range")
    common(sub.add_parser("kopt", help="optimal K and its approximations"))
    for name in ("simulate", "validate"):
        p = sub.add_parser(name, help="simulate" if name == "simulate" else "simulation vs analysis")
        common(p)
        grid(p, 0.0, 20.0, 10)
        p.add_argument("--arrivals", type=int, default=1_000_000)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--warmup", type=float, default=0.1)
        p.add_argument("--batches", type=int, default=50)
        p.add_argument("--replications", type=int, default=1)
    return ap


COMMANDS = {
    "analyze": cmd_analyze, "tir": cmd_tir, "atir-sweep": cmd_atir_sweep,
    "kopt": cmd_kopt, "simulate": cmd_simulate, "validate": cmd_validate,
}


def run(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    try:
        return COMMANDS[args.command](args, sys.stdout)
    except (ConfigError, InvalidDistribution, UnstableSystem, GridMismatch) as exc:
        print(f"nudgek: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NudgeError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"nudgek: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"nudgek: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main() -> None:
    sys.exit(run())
