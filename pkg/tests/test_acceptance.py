"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s`.  Every tolerance is pinned
here; nothing is deferred to later calibration.
"""

import math
import time

import numpy as np
import pytest

from sandlab.gadgets import load_constants, solve_comb, verify_comb_estimates
from sandlab.graphs import (ball, build_comb_gadget, build_gasket,
                            build_lattice_window, validate_pipe_params)
from sandlab.green import (KernelWalker, finite_time_green, finite_volume_value,
                           killed_green, vK_exhaustive, voltage_payoff)
from sandlab.scenery import (LAW_CATALOG, LawSpec, MassConfig, resample_one,
                             sample, spike)
from sandlab.stopping import batch_exit_payoffs, value_iteration
from sandlab.toppling import ToppleEngine
from sandlab.experiments import (DivergenceRule, comb_one_step_means,
                                 conservation_check, heat_kernel_diag,
                                 local_time_moments, phase_sweep, sharpness_demo)

from _helpers import random_config, random_connected_graph, small_graph_catalog

CONSTS = load_constants()


def _report(num, desc, ok, detail=""):
    tag = "PASS" if ok else "FAIL"
    print(f"\ncriterion {num:02d} [{tag}] {desc}" + (f" ({detail})" if detail else ""))
    assert ok, f"criterion {num}: {desc}: {detail}"


def test_criterion_01_dp_equals_toppling():
    t0 = time.time()
    rng = np.random.default_rng(10)
    worst = 0.0
    for trial in range(200):
        n = int(rng.integers(3, 51))
        g = random_connected_graph(rng, n,
                                   boundary_frac=0.2 if trial % 3 == 0 else 0.0)
        cfg = random_config(rng, g)
        vt = value_iteration(g, cfg, 30)
        eng = ToppleEngine(g, cfg)
        for k in range(1, 31):
            eng.step()
            worst = max(worst, float(np.max(np.abs(eng.u - vt.v[k]))))
    elapsed = time.time() - t0
    _report(1, "DP = toppling on 200 random graphs, n <= 30",
            worst < 1e-10 and elapsed < 60.0,
            f"max dev {worst:.2e}, {elapsed:.1f}s")


def test_criterion_02_brute_force_oracle():
    from sandlab.stopping import brute_force_value
    rng = np.random.default_rng(20)
    worst = 0.0
    for name, g in small_graph_catalog():
        for _ in range(3):
            cfg = random_config(rng, g, 0.0, 2.5)
            vt = value_iteration(g, cfg, 4)
            for x in range(g.n):
                for h in range(5):
                    bf = brute_force_value(g, cfg, x, h)
                    worst = max(worst, abs(bf - vt.v[h][x]))
    _report(2, "brute-force oracle = value iteration on the small-graph catalog",
            worst < 1e-12, f"max dev {worst:.2e}")


def test_criterion_03_spike_identity(z_window_51):
    worst = 0.0
    gz2 = build_lattice_window(2, 51, False)
    for g in (z_window_51, gz2):
        ftg = finite_time_green(g, g.origin, 50, keep_snapshots=True)
        for m in (0.5, 2.0, 10.0):
            eng = ToppleEngine(g, spike(g, g.origin, m))
            for n in range(1, 51):
                eng.step()
                worst = max(worst, float(np.max(np.abs(eng.u - m * ftg.snapshots[n - 1]))))
    _report(3, "spike identity u_n = m g_n on Z and Z^2 windows, n <= 50",
            worst < 1e-12, f"max dev {worst:.2e}")


def test_criterion_04_killed_green():
    g = build_lattice_window(1, 5, False)
    coords = g.parts["coords"][:, 0]
    C = np.array([int(np.nonzero(coords == x)[0][0]) for x in (-1, 0, 1)])
    gv = killed_green(g, C, g.origin)
    exact = (gv.values[g.origin] == 1.0
             and np.all(gv.values[C].sum() == 2.0)
             and sorted(gv.values[C].tolist()) == [0.5, 0.5, 1.0])
    rng = np.random.default_rng(40)
    worst_res, worst_sym = 0.0, 0.0
    for _ in range(100):
        gr = random_connected_graph(rng, int(rng.integers(6, 40)))
        C = ball(gr, 0, int(rng.integers(1, 3)))
        if len(C) >= gr.n:
            continue
        gv = killed_green(gr, C, 0)
        worst_res = max(worst_res, gv.residual(gr))
        y, v = int(C[0]), int(C[-1])
        a = killed_green(gr, C, y).values[v]
        b = killed_green(gr, C, v).values[y]
        worst_sym = max(worst_sym, abs(a * gr.degree[v] * gr.degree[y]
                                       - b * gr.degree[y] * gr.degree[v]))
    _report(4, "killed Green: path example exact, residuals and symmetry on 100 domains",
            exact and worst_res < 1e-10 and worst_sym < 1e-10,
            f"residual {worst_res:.2e}, symmetry {worst_sym:.2e}")


def test_criterion_05_finite_volume_oracle():
    rng = np.random.default_rng(50)
    worst = 0.0
    done = 0
    while done < 100:
        g = random_connected_graph(rng, int(rng.integers(8, 30)))
        K = ball(g, 0, 2)
        if len(K) > 12:
            K = ball(g, 0, 1)
        if len(K) > 12 or len(K) >= g.n:
            continue
        cfg = random_config(rng, g)
        val, _, _ = finite_volume_value(g, cfg, K, 0)
        worst = max(worst, abs(val - vK_exhaustive(g, cfg, K, 0)))
        done += 1
    _report(5, "finite-volume value = exhaustive subset maximum on 100 instances",
            worst < 1e-10, f"max dev {worst:.2e}")


def test_criterion_06_voltage_identity_mc():
    rng = np.random.default_rng(60)
    worst_z = 0.0
    instances = []
    for _ in range(12):
        g = random_connected_graph(rng, int(rng.integers(8, 22)))
        instances.append((g, ball(g, 0, int(rng.integers(1, 3))), 0))
    gz = build_lattice_window(1, 8, False)
    g2 = build_lattice_window(2, 8, False)
    for r in (1, 2, 3, 4):
        instances.append((gz, ball(gz, gz.origin, r), gz.origin))
    for r in (1, 2, 3, 4):
        instances.append((g2, ball(g2, g2.origin, r), g2.origin))
    law = LawSpec("uniform", {"lo": 0.2, "hi": 2.2})
    for i, (g, C, o) in enumerate(instances):
        C = C[g.interior[C]] if g.boundary.any() else C
        if len(C) >= g.n:
            C = C[:-1]
        cfg = sample(law, g, 600 + i)
        exact = voltage_payoff(killed_green(g, C, o), cfg)
        S = batch_exit_payoffs(g, cfg, C, o, 100000, 61 + i)
        se = S.std(ddof=1) / math.sqrt(len(S))
        worst_z = max(worst_z, abs(S.mean() - exact) / se)
    _report(6, "voltage identity: MC exit payoff within 4 SE on 20 instances",
            worst_z <= 4.0, f"max |z| = {worst_z:.2f}")


def test_criterion_07_comb_estimates():
    t0 = time.time()
    params = validate_pipe_params(100, (2, 3), depth=3)
    assert abs(params.lam - 1.1604) < 1e-3
    ok = True
    detail = []
    for n in (1, 2, 3):
        comb = build_comb_gadget(params, n, tuple([0] * n), include_root_edge=True)
        ce = solve_comb(comb)
        rep = verify_comb_estimates(ce, params, C_comb=CONSTS["C_comb"], b=2.5)
        kirch = ce.kirchhoff_residual()
        growth = float(ce.spike_scale) >= params.lam ** n / 4.0
        ok = ok and rep.ok and kirch < 1e-10 and growth
        detail.append(f"n={n}: I_n L_n^2 = {float(ce.spike_scale):.3f}")
    elapsed = time.time() - t0
    _report(7, "comb estimates (a)-(e) at B=100, alpha=2/3, depths 1-3",
            ok and elapsed < 300.0, "; ".join(detail) + f"; {elapsed:.0f}s")


def test_criterion_08_comb_nonconservation():
    r = comb_one_step_means(2, 1.0, 100000, 200000)
    z_spine = abs(r["spine_mean"] - r["pred_spine"]) / r["spine_se"]
    z_tooth = abs(r["tooth_mean"] - r["pred_tooth"]) / r["tooth_se"]
    assert r["pred_spine"] == pytest.approx(1.1839, abs=1e-4)
    assert r["pred_tooth"] == pytest.approx(0.9080, abs=1e-4)
    _report(8, "comb one-step means match mu + a/2 and mu - a/4 within 4 SE",
            z_spine <= 4.0 and z_tooth <= 4.0,
            f"spine z {z_spine:.2f}, tooth z {z_tooth:.2f}")


def test_criterion_09_conservation():
    worst = 0.0
    for torus in (build_lattice_window(1, 5, True), build_lattice_window(2, 3, True)):
        for law in LAW_CATALOG:
            drift = conservation_check(torus, law, steps=1000, replicas=1, seed=90)
            worst = max(worst, drift)
    _report(9, "total-mass drift on tori < 1e-12 over 1000 steps, all catalog laws",
            worst < 1e-12, f"max relative drift {worst:.2e}")


def test_criterion_10_sensitivity_convexity():
    rng = np.random.default_rng(100)
    law = LawSpec("uniform", {"lo": 0.0, "hi": 2.4})
    violations = 0
    for _ in range(500):
        g = random_connected_graph(rng, int(rng.integers(5, 30)))
        cfg = sample(law, g, int(rng.integers(10 ** 6)))
        v = int(rng.integers(g.n))
        cfg2, old, new = resample_one(cfg, law, v, int(rng.integers(10 ** 6)))
        n = int(rng.integers(1, 12))
        u1 = value_iteration(g, cfg, n).v[n][0]
        u2 = value_iteration(g, cfg2, n).v[n][0]
        gn = finite_time_green(g, 0, n).g[v]
        if abs(u1 - u2) > gn * abs(old - new) + 1e-10:
            violations += 1
    for _ in range(500):
        g = random_connected_graph(rng, int(rng.integers(5, 22)))
        c1 = random_config(rng, g)
        c2 = random_config(rng, g)
        mid = MassConfig(g, 0.5 * (c1.sigma + c2.sigma), "mid", 0, 0.5)
        n = int(rng.integers(1, 10))
        vm = value_iteration(g, mid, n).v[n]
        v1 = value_iteration(g, c1, n).v[n]
        v2 = value_iteration(g, c2, n).v[n]
        if np.any(vm > 0.5 * (v1 + v2) + 1e-10):
            violations += 1
    _report(10, "sensitivity and convexity property suites (500 + 500 cases)",
            violations == 0, f"{violations} violations")


def test_criterion_11_heat_kernel_exponents():
    gz = build_lattice_window(1, 2001, False)
    ez = heat_kernel_diag(gz, gz.origin, 2000)["exponent"]
    g2 = build_lattice_window(2, 513, False)
    e2 = heat_kernel_diag(g2, g2.origin, 512)["exponent"]
    gg = build_gasket(6)
    eg = heat_kernel_diag(gg, gg.origin, 1200)["exponent"]
    gl = build_lattice_window(1, 513, False)
    el = local_time_moments(gl, gl.origin, 512, 2)["exponent"]
    ok = (abs(ez - 0.5) <= 0.05 and abs(e2 - 1.0) <= 0.1
          and abs(eg - math.log(3) / math.log(5)) <= 0.1
          and abs(el - 1.5) <= 0.1)
    _report(11, "heat-kernel exponents (Z, Z^2, gasket) and local-time p=2 on Z",
            ok, f"Z {ez:.3f}, Z2 {e2:.3f}, gasket {eg:.3f} "
                f"(target {math.log(3) / math.log(5):.3f}), local-time {el:.3f}")


def test_criterion_12_phase_direction():
    rule = DivergenceRule(ratio_threshold=10.0, initial_floor=0.05, slope_tol=0.0)
    radii = [1, 2, 4, 8, 16, 24]
    gaps = []
    for spec in ({"family": "lattice", "dim": 2, "radius": 25, "periodic": False},
                 {"family": "comb", "half_width": 25, "tooth_height": 25}):
        _, fr = phase_sweep(spec, "exponential", [0.6, 1.2], radii, 60, 2024,
                            horizon=25, rule=rule)
        gaps.append(fr[1.2] - fr[0.6])
    _report(12, "divergent-trend fraction gap >= 0.8 at mu 1.2 vs 0.6 (comb, Z^2)",
            all(gap >= 0.8 for gap in gaps),
            f"gaps {[round(g, 3) for g in gaps]}")


def test_criterion_13_short_clock(cubed_tree_d4, z_window_51):
    kw = KernelWalker(cubed_tree_d4, 0)
    worst_A = 0.0
    for _ in range(400):
        kw.step()
        worst_A = max(worst_A, kw.A)
    mass = float((kw.p * cubed_tree_d4.interior).sum())
    # remaining interior mass bounds all later clock increments: from any
    # vertex the expected residual inverse-degree time is < 50/8
    tail = mass * 50.0 / 8.0
    bound_ok = worst_A + tail <= 0.3862 + 1e-6
    A = finite_time_green(z_window_51, z_window_51.origin, 50).A
    z_exact = all(A[n] == n / 2.0 for n in range(51))
    _report(13, "cubed-tree clock bounded by 0.3862; Z clock A_n = n/2 exact",
            bound_ok and z_exact,
            f"max A_n {worst_A:.4f}, tail {tail:.1e}, Z exact {z_exact}")


def test_criterion_14_sharpness_demo(pipe_params, pipe_tree_d2, pipe_tree_d1):
    law = LawSpec("shifted-pareto", {"q": 2.0, "mu0": 0.5})
    lam_target = pipe_params.lam ** 2 / 4.0
    assert lam_target == pytest.approx(0.3366, abs=2e-4)
    planted = sharpness_demo(pipe_params, 2, law, seeds=list(range(8)),
                             plant=True, pipe_tree=pipe_tree_d2)
    planted_ok = planted["hit_fraction"] == 1.0

    # good-pipe frequency vs the analytic formula, at the honest spike
    # threshold on level 2 (both near zero) and at an informative threshold
    # on level 1
    honest = sharpness_demo(pipe_params, 2, law, seeds=list(range(60)),
                            pipe_tree=pipe_tree_d2)
    se2 = math.sqrt(max(honest["analytic_any_good"]
                        * (1 - honest["analytic_any_good"]), 1e-12) / 60) + 1.0 / 60
    freq2_ok = abs(honest["freq_any_good"] - honest["analytic_any_good"]) <= 4 * se2

    law1 = LawSpec("shifted-pareto", {"q": 3.0, "mu0": 0.5})
    lvl1 = sharpness_demo(pipe_params, 1, law1, seeds=list(range(300)), K=0.5,
                          pipe_tree=pipe_tree_d1)
    p = lvl1["analytic_any_good"]
    se1 = math.sqrt(p * (1 - p) / 300)
    freq1_ok = abs(lvl1["freq_any_good"] - p) <= 4 * se1
    _report(14, "planted level-2 pipe certifies nested-volume value >= 0.3366; "
                "good-pipe frequency matches the analytic formula",
            planted_ok and freq2_ok and freq1_ok,
            f"min planted payoff {min(r['best_payoff'] for r in planted['per_seed']):.1f}, "
            f"level-1 freq {lvl1['freq_any_good']:.3f} vs {p:.3f}")
