"""Command-line driver.

Subcommands: build-graph, sample-scenery, topple, value, green, comb-verify,
sweep, diag.  Every subcommand takes --config (JSON) and --out (directory).
Exit codes: 0 success, 2 config error, 3 assertion failure in verification
subcommands.  SANDLAB_WORKERS sets the sweep worker count; --seed overrides
the config seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import experiments, gadgets, green, io, scenery, stopping, toppling
from .experiments import ConfigError, build_graph_from_config
from .graphs import validate_pipe_params
from .scenery import LawSpec


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if cfg.get("schema_version") != 1:
        raise ConfigError("config must declare schema_version: 1")
    return cfg


def _law_from(cfg) -> LawSpec:
    if "law" not in cfg:
        raise ConfigError("config needs a 'law' section")
    try:
        return LawSpec.from_json(cfg["law"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad law: {exc}") from exc


def _seed(cfg, args) -> int:
    if args.seed is not None:
        return args.seed
    return int(cfg.get("seed", 0))


def cmd_build_graph(cfg, out, args):
    graph = build_graph_from_config(cfg["graph"])
    graph.validate()
    graph.export(out / "graph.txt")
    print(f"built {graph.kind}: {graph.n} vertices, "
          f"{len(graph.indices) // 2} edges, origin {graph.origin}")
    return 0


def cmd_sample_scenery(cfg, out, args):
    graph = build_graph_from_config(cfg["graph"])
    law = _law_from(cfg)
    config = scenery.sample(law, graph, _seed(cfg, args))
    io.write_vertex_csv(out / "sigma.csv", graph, {"sigma": config.sigma})
    print(f"sampled {law.law_id} on {graph.n} vertices (seed {config.seed})")
    return 0


def cmd_topple(cfg, out, args):
    graph = build_graph_from_config(cfg["graph"])
    law = _law_from(cfg)
    config = scenery.sample(law, graph, _seed(cfg, args))
    topt = cfg.get("topple", {})
    horizon = int(topt.get("horizon", 100))
    tol = float(topt.get("tol", 1e-12))
    every = int(topt.get("snapshot_every", 0))
    eng = toppling.ToppleEngine(graph, config)
    for n in range(1, horizon + 1):
        if eng.max_excess < tol:
            break
        eng.step()
        if every and n % every == 0:
            io.write_vertex_csv(out / f"odometer_{n:05d}.csv", graph,
                                {"u": eng.u, "sigma": eng.sigma})
    state = eng.state()
    reason = "stabilized" if state.max_excess < tol else "horizon"
    io.write_vertex_csv(out / "odometer.csv", graph, {"u": state.u, "sigma": state.sigma})
    with open(out / "topple.json", "w") as fh:
        json.dump({"steps": state.n, "stop_reason": reason,
                   "max_excess": state.max_excess,
                   "emitted_to_boundary": state.emitted_to_boundary,
                   "u_origin": float(state.u[graph.origin])}, fh, indent=1)
    print(f"toppled {state.n} rounds ({reason}); u(o) = {state.u[graph.origin]:.6g}")
    return 0


def cmd_value(cfg, out, args):
    graph = build_graph_from_config(cfg["graph"])
    law = _law_from(cfg)
    config = scenery.sample(law, graph, _seed(cfg, args))
    horizon = int(cfg.get("value", {}).get("horizon", 30))
    table = stopping.value_iteration(graph, config, horizon)
    io.write_value_table_csv(out / "value.csv", graph, table)
    print(f"value iteration to horizon {horizon}; "
          f"v_n(o) = {table.v[horizon][graph.origin]:.6g}")
    return 0


def cmd_green(cfg, out, args):
    graph = build_graph_from_config(cfg["graph"])
    gcfg = cfg.get("green", {})
    mode = gcfg.get("mode", "killed")
    if mode == "killed":
        from .graphs import ball
        radius = int(gcfg.get("radius", 3))
        C = ball(graph, graph.origin, radius)
        C = C[graph.interior[C]]
        gv = green.killed_green(graph, C, graph.origin)
        io.write_vertex_csv(out / "green.csv", graph, {"g": gv.values})
        print(f"killed Green on |C| = {len(C)}: g(o,o) = {gv.values[graph.origin]:.6g}, "
              f"residual {gv.residual(graph):.2e}")
    elif mode == "finite-time":
        horizon = int(gcfg.get("horizon", 50))
        ftg = green.finite_time_green(graph, graph.origin, horizon)
        io.write_vertex_csv(out / "green.csv", graph, {"g": ftg.g})
        io.write_curve_csv(out / "clock.csv",
                           [(k, ftg.A[k], "A_n") for k in range(horizon + 1)] +
                           [(k, ftg.Sigma[k], "Sigma_n") for k in range(horizon + 1)])
        print(f"finite-time Green to n = {horizon}: A_n(o) = {ftg.A[-1]:.6g}")
    else:
        raise ConfigError(f"unknown green mode {mode!r}")
    return 0


def cmd_comb_verify(cfg, out, args):
    ccfg = cfg.get("comb_verify", {})
    B = int(ccfg.get("B", 100))
    alpha = ccfg.get("alpha", [2, 3])
    alpha = tuple(alpha) if isinstance(alpha, list) else alpha
    depths = ccfg.get("depths", [1, 2])
    params = validate_pipe_params(B, alpha, depth=max(depths))
    if not params.ok:
        raise ConfigError(f"inadmissible params: {params.inequality} ({params.detail})")
    consts = gadgets.load_constants() if (B == 100 and str(params.alpha) == "2/3") else None
    C_comb = (consts or gadgets.measure_C_comb(params, depths))["C_comb"]
    b = float(ccfg.get("b", 2.5))
    from .graphs import build_comb_gadget
    reports = {}
    ok = True
    for n in depths:
        comb = build_comb_gadget(params, n, tuple([0] * n),
                                 include_root_edge=bool(ccfg.get("include_root_edge", True)))
        ce = gadgets.solve_comb(comb)
        rep = gadgets.verify_comb_estimates(ce, params, C_comb=C_comb, b=b)
        reports[n] = rep.as_dict()
        reports[n]["kirchhoff_residual"] = ce.kirchhoff_residual()
        ok = ok and rep.ok and reports[n]["kirchhoff_residual"] < 1e-10
    with open(out / "comb_report.json", "w") as fh:
        json.dump({"B": B, "alpha": str(params.alpha), "C_comb": C_comb,
                   "reports": reports, "ok": ok}, fh, indent=1)
    print(f"comb verification {'PASSED' if ok else 'FAILED'} at depths {depths}")
    return 0 if ok else 3


def cmd_sweep(cfg, out, args):
    scfg = cfg.get("sweep")
    if not scfg:
        raise ConfigError("config needs a 'sweep' section")
    div = scfg.get("divergence", {})
    rule = experiments.DivergenceRule(
        ratio_threshold=float(div.get("ratio_threshold", 10.0)),
        initial_floor=float(div.get("initial_floor", 1e-9)),
        slope_tol=float(div.get("slope_tol", 0.0)))
    records, fractions = experiments.phase_sweep(
        cfg["graph"], scfg.get("law_family", "exponential"),
        scfg["mu_values"], scfg["radii"], int(scfg.get("replicas", 50)),
        _seed(cfg, args), horizon=int(scfg.get("horizon", 30)), rule=rule,
        workers=args.workers)
    io.write_records_csv(out / "records.csv", records)
    io.write_records_json(out / "records.json", records,
                          extra={"divergent_fraction": {str(k): v for k, v in fractions.items()},
                                 "classifier": {"ratio_threshold": rule.ratio_threshold,
                                                "initial_floor": rule.initial_floor,
                                                "slope_tol": rule.slope_tol}})
    curve_rows = [(rec.param.split("=", 1)[1], rec.value, f"mu={rec.mu}")
                  for rec in records if rec.stat == "v_B(o)"]
    io.write_curve_csv(out / "curves.csv", curve_rows)
    for mu, frac in fractions.items():
        print(f"mu = {mu}: divergent-trend fraction {frac:.3f}")
    return 0


def cmd_diag(cfg, out, args):
    dcfg = cfg.get("diag", {})
    kind = dcfg.get("kind", "heat-kernel")
    result = {}
    if kind == "heat-kernel":
        graph = build_graph_from_config(cfg["graph"])
        result = experiments.heat_kernel_diag(graph, graph.origin,
                                              int(dcfg.get("horizon", 500)))
        io.write_curve_csv(out / "heat_kernel.csv",
                           [(n, p, "p_n(o,o)") for n, p in zip(result["n"], result["p"])])
        print(f"heat-kernel exponent {result['exponent']:.4f}")
    elif kind == "local-time":
        graph = build_graph_from_config(cfg["graph"])
        result = experiments.local_time_moments(graph, graph.origin,
                                                int(dcfg.get("horizon", 256)),
                                                int(dcfg.get("p", 2)),
                                                seed=_seed(cfg, args))
        print(f"local-time p={dcfg.get('p', 2)} exponent {result['exponent']:.4f}")
    elif kind == "comb-means":
        result = experiments.comb_one_step_means(int(dcfg.get("half_width", 3)),
                                                 float(dcfg.get("mu", 1.0)),
                                                 int(dcfg.get("replicas", 100000)),
                                                 _seed(cfg, args))
        print(f"spine {result['spine_mean']:.4f} (pred {result['pred_spine']:.4f}), "
              f"tooth {result['tooth_mean']:.4f} (pred {result['pred_tooth']:.4f})")
    elif kind == "conservation":
        graph = build_graph_from_config(cfg["graph"])
        law = _law_from(cfg)
        drift = experiments.conservation_check(graph, law,
                                               int(dcfg.get("steps", 1000)),
                                               int(dcfg.get("replicas", 3)),
                                               _seed(cfg, args))
        result = {"max_relative_drift": drift}
        print(f"max relative drift {drift:.2e}")
        if drift >= 1e-12:
            with open(out / "diag.json", "w") as fh:
                json.dump(result, fh, indent=1)
            return 3
    elif kind == "sup-moment":
        graph = build_graph_from_config(cfg["graph"])
        law = _law_from(cfg)
        result = experiments.subcritical_sup_moment(
            graph, law, dcfg.get("horizons", [64, 128, 256, 512, 1024]),
            int(dcfg.get("replicas", 20000)), float(dcfg.get("q", 2.0)),
            _seed(cfg, args))
        print(f"sup-moment curve {result['moments']}; plateau = {result['plateau']}")
    elif kind == "sharpness":
        B = int(dcfg.get("B", 100))
        alpha = dcfg.get("alpha", [2, 3])
        level = int(dcfg.get("level", 1))
        params = validate_pipe_params(B, tuple(alpha) if isinstance(alpha, list) else alpha,
                                      depth=level)
        if not params.ok:
            raise ConfigError(f"inadmissible params: {params.inequality}")
        law = _law_from(cfg)
        seeds = [_seed(cfg, args) + i for i in range(int(dcfg.get("n_seeds", 20)))]
        result = experiments.sharpness_demo(params, level, law, seeds,
                                            K=dcfg.get("K"),
                                            plant=bool(dcfg.get("plant", False)))
        print(f"good-pipe frequency {result['freq_any_good']:.3f} "
              f"(analytic {result['analytic_any_good']:.3f}); "
              f"hit fraction {result['hit_fraction']:.3f}")
    else:
        raise ConfigError(f"unknown diag kind {kind!r}")
    with open(out / "diag.json", "w") as fh:
        json.dump(result, fh, indent=1, sort_keys=True, default=float)
    return 0


COMMANDS = {
    "build-graph": cmd_build_graph,
    "sample-scenery": cmd_sample_scenery,
    "topple": cmd_topple,
    "value": cmd_value,
    "green": cmd_green,
    "comb-verify": cmd_comb_verify,
    "sweep": cmd_sweep,
    "diag": cmd_diag,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="sandlab",
                                     description="divisible sandpile laboratory")
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="JSON config path")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--workers", type=int,
                        default=int(os.environ.get("SANDLAB_WORKERS", "1")))
    args = parser.parse_args(argv)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        cfg = _load_config(args.config)
        return COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
