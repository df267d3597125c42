"""Sweeps, diagnostics, records, and the divergence classifier."""

import math

import numpy as np
import pytest

from sandlab.experiments import (ConfigError, DivergenceRule, ExperimentRecord,
                                 build_graph_from_config, comb_one_step_means,
                                 conservation_check, graph_id_of, heat_kernel_diag,
                                 local_time_moments, phase_sweep, sharpness_demo,
                                 subcritical_sup_moment)
from sandlab.graphs import build_lattice_window
from sandlab.scenery import LAW_CATALOG, LawSpec


def test_build_graph_from_config_families():
    g = build_graph_from_config({"family": "lattice", "dim": 1, "radius": 2,
                                 "periodic": False})
    assert g.kind == "lattice" and g.n == 7
    g2 = build_graph_from_config({"family": "gasket", "level": 1})
    assert g2.n == 6
    with pytest.raises(ConfigError):
        build_graph_from_config({"family": "nope"})
    with pytest.raises(ConfigError):
        build_graph_from_config({"family": "lattice", "dim": 1})


def test_divergence_classifier():
    rule = DivergenceRule(ratio_threshold=10.0, initial_floor=1e-9)
    assert rule.classify([0.0, 0.0, 0.0]) == "bounded"
    assert rule.classify([0.1, 0.5, 2.0]) == "divergent-trend"
    assert rule.classify([1.0, 1.0, 1.0]) == "bounded"      # no growth
    assert rule.classify([0.1, 2.0, 1.0]) == "bounded"      # not growing at the end
    # scaling the curve up by c >= 1 never flips divergent -> bounded
    rng = np.random.default_rng(0)
    for _ in range(200):
        v = np.sort(rng.uniform(0, 5, 5))
        if rule.classify(v) == "divergent-trend":
            for c in (1.0, 2.0, 17.0):
                assert rule.classify(c * v) == "divergent-trend"
    # raising only the final value never flips either
    v = [0.1, 0.5, 2.0]
    assert rule.classify([0.1, 0.5, 7.0]) == "divergent-trend"


def test_phase_sweep_records_reproducible():
    spec = {"family": "lattice", "dim": 2, "radius": 9, "periodic": False}
    recs1, fr1 = phase_sweep(spec, "exponential", [0.6, 1.2], [1, 4, 8], 6, 77,
                             horizon=10)
    recs2, fr2 = phase_sweep(spec, "exponential", [0.6, 1.2], [1, 4, 8], 6, 77,
                             horizon=10)
    assert fr1 == fr2
    assert [r.row() for r in recs1] == [r.row() for r in recs2]
    # ordered by (config point, replica), thresholds recorded in the rows
    stats = {r.stat for r in recs1}
    assert stats == {"v_B(o)", "u_n(o)", "divergent"}
    assert any("ratio>=" in r.param for r in recs1)


def test_phase_sweep_constant_subcritical_all_bounded():
    spec = {"family": "lattice", "dim": 1, "radius": 9, "periodic": False}
    recs, fr = phase_sweep(spec, "constant", [0.5], [1, 2, 4], 5, 3, horizon=5)
    assert fr[0.5] == 0.0
    assert all(r.value == 0.0 for r in recs if r.stat == "v_B(o)")


def test_heat_kernel_diag_z():
    g = build_lattice_window(1, 301, False)
    r = heat_kernel_diag(g, g.origin, 300)
    assert abs(r["exponent"] - 0.5) < 0.05
    assert r["bound_holds"]


def test_local_time_p1_exact():
    g = build_lattice_window(1, 40, False)
    r = local_time_moments(g, g.origin, 32, 1)
    assert r["values"] == [float(n) for n in range(1, 33)]


def test_local_time_p2_exact_small():
    # brute force on a tiny window: E sum_v L_n(v)^2 by full path enumeration
    g = build_lattice_window(1, 6, False)
    o = g.origin
    n = 5
    from itertools import product

    def enum_moment(n):
        total = 0.0
        for steps in product(*[range(2)] * n):
            v = o
            L = {}
            prob = 1.0
            for s in steps:
                L[v] = L.get(v, 0) + 1
                nbrs = g.neighbors(v)
                prob *= 1.0 / len(nbrs)
                v = int(nbrs[s])
            total += prob * sum(x ** 2 for x in L.values())
        return total

    from sandlab.experiments import _collision_counts
    vals = _collision_counts(g, o, n, [n])
    assert vals[0] == pytest.approx(enum_moment(n), abs=1e-12)


def test_comb_one_step_means_analytic():
    r = comb_one_step_means(2, 1.0, 40000, 11)
    assert r["pred_spine"] == pytest.approx(1.0 + math.exp(-1) / 2)
    assert r["pred_tooth"] == pytest.approx(1.0 - math.exp(-1) / 4)
    assert abs(r["spine_mean"] - r["pred_spine"]) <= 4 * r["spine_se"]
    assert abs(r["tooth_mean"] - r["pred_tooth"]) <= 4 * r["tooth_se"]


def test_comb_one_step_means_degenerate():
    # sigma = mu <= 1 constant: a = 0, both means = mu... via the analytic a
    mu = 0.8
    a = mu * math.exp(-1 / mu)
    assert a > 0  # exponential law always has positive excess probability
    # degenerate direction asserted through predictions at tiny replica count
    r = comb_one_step_means(2, 0.2, 2000, 1)
    assert r["pred_spine"] == pytest.approx(0.2 + r["a"] / 2)


def test_conservation_all_catalog_laws():
    torus = build_lattice_window(2, 3, True)
    for law in LAW_CATALOG:
        drift = conservation_check(torus, law, steps=120, replicas=1, seed=5)
        assert drift < 1e-12, law.law_id
    with pytest.raises(ConfigError):
        conservation_check(build_lattice_window(1, 3, False), LAW_CATALOG[0], 5, 1, 0)


def test_subcritical_sup_moment_shapes():
    g = build_lattice_window(1, 600, False)
    r = subcritical_sup_moment(g, LawSpec("uniform", {"lo": 0.0, "hi": 1.2}),
                               [64, 128, 256, 512], 4000, 2.0, 5)
    assert r["plateau"]
    r2 = subcritical_sup_moment(g, LawSpec("uniform", {"lo": 0.4, "hi": 2.0}),
                                [64, 128, 256, 512], 1500, 2.0, 5)
    assert not r2["plateau"]
    assert r2["moments"][-1] > r2["moments"][0]
    r3 = subcritical_sup_moment(g, LawSpec("uniform", {"lo": 0.0, "hi": 0.8}),
                                [32, 64], 500, 2.0, 5)
    assert r3["moments"] == [0.0, 0.0]  # xi <= 0: payoffs never positive


def test_sharpness_demo_light_tail_control(pipe_params, pipe_tree_d1):
    # light tail (large q) at the same threshold: good pipes essentially absent
    heavy = LawSpec("shifted-pareto", {"q": 2.0, "mu0": 0.5})
    light = LawSpec("shifted-pareto", {"q": 6.0, "mu0": 0.5})
    seeds = list(range(30))
    rh = sharpness_demo(pipe_params, 1, heavy, seeds, K=2.0, pipe_tree=pipe_tree_d1)
    rl = sharpness_demo(pipe_params, 1, light, seeds, K=2.0, pipe_tree=pipe_tree_d1)
    assert rh["freq_any_good"] > rl["freq_any_good"]
    assert rl["analytic_any_good"] < 0.05


def test_record_row_shape():
    rec = ExperimentRecord("x", "g", "l", 1.0, "R=2", 0, 7, "v", 3.5)
    row = rec.row()
    assert len(row) == 10 and row[0] == 1
    assert graph_id_of({"b": 1, "a": 2}) == "a=2,b=1"


def test_local_time_p3_monte_carlo():
    g = build_lattice_window(1, 257, False)
    r = local_time_moments(g, g.origin, 256, 3, seed=4, replicas=20000)
    assert abs(r["exponent"] - 2.0) <= 0.15


def test_phase_sweep_worker_pool_matches_serial():
    spec = {"family": "lattice", "dim": 1, "radius": 9, "periodic": False}
    r1, f1 = phase_sweep(spec, "exponential", [0.6, 1.2], [1, 2, 4], 4, 3,
                         horizon=6, workers=2)
    r2, f2 = phase_sweep(spec, "exponential", [0.6, 1.2], [1, 2, 4], 4, 3,
                         horizon=6, workers=1)
    assert f1 == f2
    assert [r.row() for r in r1] == [r.row() for r in r2]


def test_payoff_samples_csv(tmp_path):
    from sandlab.io import write_payoff_samples_csv
    import csv as _csv
    write_payoff_samples_csv(tmp_path / "p.csv", [0.5, 1.25], {"horizon": 10})
    with open(tmp_path / "p.csv") as fh:
        rows = list(_csv.reader(fh))
    assert rows[0] == ["replica", "payoff", "horizon"]
    assert len(rows) == 3
