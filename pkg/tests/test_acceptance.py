"""Acceptance criteria, one test each; every test records a PASS/FAIL line
that is printed in the terminal summary."""
import math

import numpy as np
import pytest
from conftest import ACCEPTANCE_LINES, cfg_a, cfg_b, cfg_c, mm1, random_config
from oracles import integrate_ccdf

from nudgek import atir, fcfs, nudge, sim
from nudgek.phasetype import erlang, expo, h2_balanced, h2_shape, normalize_system, ph_ccdf

INF = math.inf
NAMED = {"A": cfg_a, "B": cfg_b, "C": cfg_c}


def record(num: int, ok: bool, detail: str) -> None:
    line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_01_dual_workload_forms():
    worst_forms, worst_sm = 0.0, 0.0
    for mk in NAMED.values():
        cfg = mk()
        a, b = fcfs.workload_forms(cfg, np.linspace(0, 60, 200))
        worst_forms = max(worst_forms, float(np.max(np.abs(a - b))))
        fp = fcfs.fcfs_parts(cfg)
        worst_sm = max(worst_sm, float(np.max(np.abs(fp.inv_T_1 - fp.inv_S_1 / (1 - cfg.lam)))))
    record(1, worst_forms < 1e-10 and worst_sm < 1e-12,
           f"max form gap {worst_forms:.2e} (<1e-10), Sherman-Morrison gap {worst_sm:.2e} (<1e-12)")


def test_02_mm1_reduction():
    cfg = mm1()
    g = np.linspace(0, 60, 200)
    theta = fcfs.spectral(cfg).theta
    ez = np.max(np.abs(fcfs.workload_ccdf(cfg, g).values - 0.75 * np.exp(-0.25 * g)))
    er = np.max(np.abs(fcfs.response_ccdf(cfg, g)[0].values - np.exp(-0.25 * g)))
    ok = abs(theta - 0.25) < 1e-10 and ez < 1e-10 and er < 1e-10
    record(2, ok, f"theta={theta:.12f}, Z err {ez:.1e}, R err {er:.1e}")


def test_03_stilde_identity():
    rng = np.random.default_rng(20241019)
    cfgs = [mk() for mk in NAMED.values()] + [random_config(rng) for _ in range(20)]
    worst = 0.0
    for cfg in cfgs:
        sp = fcfs.spectral(cfg)
        worst = max(worst, abs(sp.lt - (cfg.lam + sp.theta) / cfg.lam))
    record(3, worst < 1e-10, f"max |S~(-theta) - (lam+theta)/lam| = {worst:.2e} over {len(cfgs)} configs")


def test_04_cfg_a_stochastic_improvement():
    cfg = cfg_a()
    g = np.linspace(0.1, 40, 200)
    ko = atir.k_opt(cfg)
    mins = {k: float(np.min(nudge.tir_curve(cfg.with_k(k), g).tir)) for k in (1, 2, 3, INF)}
    ok = ko == 2 and all(v > 0 for v in mins.values())
    record(4, ok, f"K_opt={ko}, min TIR on [0.1,40]: " + ", ".join(f"K={k}: {v:.2e}" for k, v in mins.items()))


def test_05_cfg_b_atir_sign_change():
    cfg = cfg_b()
    vals = [atir.atir(cfg, k) for k in (1, 2, 3, 4)]
    ok = vals[0] > 0 and vals[1] > 0 and vals[2] < 0 and vals[3] < 0
    record(5, ok, "ATIR(1..4) = " + ", ".join(f"{v:.5f}" for v in vals))


def test_06_cfg_c_tail_gain_without_dominance():
    shape = h2_shape(1.2 * 100 / 106, 2.0, 0.9)
    means = 1.0 / -np.diag(shape.S)
    quoted = np.array([0.985, 0.015])
    alpha_err = float(np.linalg.norm(shape.alpha - quoted) / np.linalg.norm(quoted))
    shape_ok = (abs(means[0] / 1.034 - 1) < 5e-3 and abs(means[1] / 7.674 - 1) < 5e-3
                and alpha_err < 5e-3)
    cfg = cfg_c()
    t = np.linspace(0, 60, 600)
    dominance = bool(np.all(ph_ccdf(cfg.ph2, t) >= ph_ccdf(cfg.ph1, t) - 1e-15))
    g = np.linspace(0.01, 10, 400)
    parts = []
    ok = shape_ok and dominance
    for k in (1, 2, 3):
        a = atir.atir(cfg, k)
        low = float(np.min(nudge.tir_curve(cfg.with_k(k), g).tir))
        ok = ok and a > 0 and low < 0
        parts.append(f"K={k}: ATIR {a:.4f}, min TIR {low:.4f}")
    record(6, ok, f"means {means[0]:.4f}/{means[1]:.4f}, alpha {shape.alpha.round(5)} "
                  f"(vector rel err {alpha_err:.1e}), dominance {dominance}; " + "; ".join(parts))


def test_07_tail_constant_consistency():
    worst = 0.0
    for mk in NAMED.values():
        for k in (0, 1, 2, 5, INF):
            cfg = mk(k=k)
            worst = max(worst, abs(nudge.tail_constants(cfg).atir(cfg.p) - atir.atir(cfg)))
    record(7, worst < 1e-8, f"max |1 - mixed c_R / c_FCFS - ATIR| = {worst:.2e}")


def test_08_mean_consistency():
    worst = 0.0
    for k in (1, 2, INF):
        cfg = cfg_a(k=k)
        tc = nudge.tail_constants(cfg)
        r1 = integrate_ccdf(lambda t: nudge.r1_ccdf(cfg, [t]).values[0], tc.theta, tc.c_r1)
        r2 = integrate_ccdf(lambda t: nudge.r2_ccdf(cfg, [t]).values[0], tc.theta, tc.c_r2)
        mean = nudge.mean_response(cfg)
        worst = max(worst, abs(cfg.p * r1 + (1 - cfg.p) * r2 - mean) / mean)
    record(8, worst < 1e-6, f"max relative gap quadrature vs E[R_Nudge] = {worst:.2e}")


@pytest.mark.slow
def test_09_simulation_cross_validation():
    cfg = cfg_a(k=2)
    t_points = np.array([0.5, 1.0, 2.0, 3.0, 5.0, 7.5, 10.0, 15.0, 20.0, 30.0])
    stats = sim.simulate(cfg, 10_000_000, 42, t_points)
    scalars = {
        "p_swap": (nudge.p_swap(cfg), stats.swap_fraction_type2),
        "mean_response": (nudge.mean_response(cfg), stats.mean_response),
    }
    rep = sim.validate(cfg, sim.analytic_reference(cfg, t_points), stats, scalars)
    zs = ", ".join(f"{k} z={v:.2f}" for k, v in rep.scalars.items())
    record(9, rep.passed and len(rep.checks) == 5,
           f"{rep.fraction_within:.1%} of {5 * len(t_points) + 2} points within 3 half-widths; {zs}")


def test_10_infinite_k_limit():
    gap = abs(nudge.p_swap(cfg_a(k=200)) - nudge.p_swap(cfg_a(k=INF)))
    record(10, gap < 1e-8, f"|p_swap(200) - p_swap(inf)| = {gap:.2e}")


def _family_max(shape, lams, p=0.7, ratio=5.0):
    best, arg = -np.inf, None
    for lam in lams:
        cfg = normalize_system(lam, p, shape, shape, ratio)
        val = atir.atir(cfg, atir.k_opt(cfg))
        if val > best:
            best, arg = val, lam
    return best, arg


def test_11_family_atir_thresholds():
    lams = np.round(np.arange(0.5, 0.99 + 1e-9, 0.01), 10)
    fams = [("expo", expo(), 0.12), ("h2_balanced(SCV 5)", h2_balanced(1.0, 5.0), 0.2),
            ("Erlang-5", erlang(5), 0.08)]
    parts, ok = [], True
    for name, shape, threshold in fams:
        best, lam = _family_max(shape, lams)
        ok = ok and best > threshold
        parts.append(f"{name}: max {best:.4f} at lam={lam:.2f} (need >{threshold})")
    record(11, ok, "; ".join(parts))


def test_12_heavy_traffic():
    def expo_cfg(lam):
        return normalize_system(lam, 0.5, expo(), expo(), 2.0)

    k99 = atir.k_opt(expo_cfg(0.99))
    approx = atir.heavy_traffic_k(expo_cfg(0.99)).k_approx
    seq = [atir.k_opt(expo_cfg(lam)) for lam in np.round(np.arange(0.5, 0.951, 0.05), 10)]
    monotone = all(b >= a for a, b in zip(seq, seq[1:]))
    k90, k70 = atir.k_opt(expo_cfg(0.9)), atir.k_opt(expo_cfg(0.7))
    ok = abs(approx - k99) <= 1 and monotone and k99 > k90 > k70
    record(12, ok, f"K_approx={approx}, K_opt(0.99)={k99}, K_opt(0.9)={k90}, K_opt(0.7)={k70}, "
                   f"K_opt over lam 0.5..0.95: {seq}")


def test_13_reversed_means_and_kopt_dip():
    shape2 = h2_shape(1.0, 2.0, 0.9)
    lams = np.round(np.arange(0.05, 0.99 + 1e-9, 0.01), 10)
    below_one = []
    for ratio in np.round(np.arange(0.5, 0.99 + 1e-9, 0.05), 10):
        for lam in lams:
            cfg = normalize_system(lam, 0.7, expo(), shape2, ratio)
            if atir.atir(cfg, atir.k_opt(cfg)) > 0:
                below_one.append((ratio, lam))
    seq = [atir.k_opt(normalize_system(lam, 0.7, expo(), shape2, 1.2)) for lam in lams]
    first_drop = next((i for i in range(len(seq) - 1) if seq[i + 1] < seq[i]), None)
    rises_first = first_drop is not None and seq[first_drop] > seq[0]
    ok = bool(below_one) and rises_first
    if first_drop is None:
        shape = "never drops"
    else:
        shape = (f"rises {seq[0]} -> {seq[first_drop]}, drops to {seq[first_drop + 1]} "
                 f"at lam={lams[first_drop + 1]:.2f}, ends at {seq[-1]}")
    record(13, ok, f"{len(below_one)} grid points with ratio<1 and ATIR(K_opt)>0 "
                   f"(smallest ratio {min(r for r, _ in below_one) if below_one else '-'}); "
                   f"K_opt along ratio 1.2: {shape}")
