"""Sweeps and diagnostics: phase direction, heat-kernel exponents, local-time
moments, comb one-step means, conservation, sup-moment plateaus, and the
sharpness demo on the pipe tree.

Everything is deterministic given the config: every random quantity traces to
a listed seed.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np

from . import gadgets, green, scenery, toppling
from .graphs import (Graph, build_comb_window, build_comb_gadget, build_cubed_tree,
                     build_gasket, build_lattice_window, build_pipe_tree,
                     build_recurrent_gadget_graph, validate_pipe_params)
from .scenery import LawSpec, MassConfig


class ConfigError(ValueError):
    """Invalid experiment configuration."""


SCHEMA_VERSION = 1

RECORD_FIELDS = ("schema_version", "experiment", "graph_id", "law_id", "mu",
                 "param", "replica", "seed", "stat", "value")


@dataclass
class ExperimentRecord:
    """One long-format output row; the CSV header is RECORD_FIELDS, fixed."""
    experiment: str
    graph_id: str
    law_id: str
    mu: float
    param: str
    replica: int
    seed: int
    stat: str
    value: float
    schema_version: int = SCHEMA_VERSION

    def row(self):
        return [self.schema_version, self.experiment, self.graph_id, self.law_id,
                self.mu, self.param, self.replica, self.seed, self.stat, self.value]


def build_graph_from_config(spec: dict) -> Graph:
    """Construct any graph family from its JSON description."""
    spec = dict(spec)
    family = spec.pop("family", None)
    try:
        if family == "lattice":
            return build_lattice_window(spec["dim"], spec["radius"],
                                        spec.get("periodic", False))
        if family == "torus":
            return build_lattice_window(spec["dim"], spec["radius"], True)
        if family == "comb":
            return build_comb_window(spec["half_width"], spec["tooth_height"])
        if family == "gasket":
            return build_gasket(spec["level"])
        if family == "cubed_tree":
            return build_cubed_tree(spec["depth"])
        if family == "pipe_tree":
            params = _params_from(spec)
            return build_pipe_tree(params)
        if family == "comb_gadget":
            params = _params_from(spec)
            return build_comb_gadget(params, spec["depth"], tuple(spec["word"]),
                                     include_root_edge=spec.get("include_root_edge", False))
        if family == "recurrent_gadget":
            params = _params_from(spec)
            sched = gadgets.demo_schedule(params, spec["depths"], spec["d_f"],
                                          spec["rho"], spec.get("c_loc", 1.0))
            return build_recurrent_gadget_graph(params, sched, len(spec["depths"]),
                                                spec["ray_length"])
    except KeyError as exc:
        raise ConfigError(f"graph config missing key {exc}") from exc
    raise ConfigError(f"unknown graph family {family!r}")


def _params_from(spec: dict):
    alpha = spec["alpha"]
    if isinstance(alpha, list):
        alpha = tuple(alpha)
    params = validate_pipe_params(spec["B"], alpha, depth=spec["depth"])
    if not params.ok:
        raise ConfigError(f"inadmissible pipe params: {params.inequality}: {params.detail}")
    return params


def graph_id_of(spec: dict) -> str:
    return ",".join(f"{k}={spec[k]}" for k in sorted(spec))


# ---------------------------------------------------------------------------
# divergence classification


@dataclass
class DivergenceRule:
    """Operational divergent-trend classifier for nested-volume curves.

    A curve is divergent-trend when final/initial ratio >= ratio_threshold
    (initial floored at initial_floor) and the last-window slope is positive.
    Explosion is undecidable at finite horizon; growth only certifies large
    odometers.  The rule is invariant under scaling the curve up by c >= 1.
    """
    ratio_threshold: float = 10.0
    initial_floor: float = 1e-9
    slope_tol: float = 0.0

    def classify(self, values) -> str:
        v = [float(x) for x in values]
        if len(v) < 2:
            return "bounded"
        initial = max(v[0], self.initial_floor)
        ratio_fires = v[-1] >= self.ratio_threshold * initial
        slope_fires = (v[-1] - v[-2]) > self.slope_tol
        return "divergent-trend" if (ratio_fires and slope_fires) else "bounded"


_WORKER_GRAPH = {}


def _sweep_graph(graph_spec_items) -> Graph:
    """Per-process graph cache for the worker pool."""
    if graph_spec_items not in _WORKER_GRAPH:
        _WORKER_GRAPH[graph_spec_items] = build_graph_from_config(dict(graph_spec_items))
    return _WORKER_GRAPH[graph_spec_items]


def _sweep_task(args):
    (graph_spec_items, law_family, mu, rep, seed, radii, horizon,
     ratio, floor, slope_tol) = args
    graph = _sweep_graph(graph_spec_items)
    rule = DivergenceRule(ratio, floor, slope_tol)
    law = _law_for_mu(law_family, mu)
    rep_seed = seed + 7919 * rep + int(mu * 1e6) % 104729
    config = scenery.sample(law, graph, rep_seed)
    curve = green.nested_volume_search(graph, config, graph.origin, radii)
    cls = rule.classify([val for _, val in curve])
    state, _ = toppling.run(graph, config, horizon)
    return mu, rep, rep_seed, law.law_id, curve, cls, float(state.u[graph.origin])


def phase_sweep(graph_spec: dict, law_family: str, mu_values, radii, replicas: int,
                seed: int, horizon: int = 30,
                rule: DivergenceRule = None, workers: int = None):
    """Nested-volume curves and toppling trajectories per (mu, replica).

    Returns (records, summary) where summary maps mu -> divergent-trend
    fraction.  Law parameters are derived from mu per family (exponential:
    mean = mu; uniform: [0, 2 mu]).  Replicas run on a worker pool when
    workers > 1 (SANDLAB_WORKERS); records are emitted ordered by
    (mu, replica) regardless.
    """
    rule = rule or DivergenceRule()
    gid = graph_id_of(graph_spec)
    radii = [int(r) for r in radii]
    items = tuple(sorted(graph_spec.items()))
    tasks = [(items, law_family, mu, rep, seed, tuple(radii), horizon,
              rule.ratio_threshold, rule.initial_floor, rule.slope_tol)
             for mu in mu_values for rep in range(replicas)]
    workers = workers or int(os.environ.get("SANDLAB_WORKERS", "1"))
    if workers > 1:
        import multiprocessing as mp
        with mp.get_context("spawn").Pool(workers) as pool:
            results = pool.map(_sweep_task, tasks)
    else:
        results = [_sweep_task(t) for t in tasks]
    results.sort(key=lambda r: (r[0], r[1]))  # ordered by (config point, replica)
    records = []
    for mu, rep, rep_seed, law_id, curve, cls, u_o in results:
        for R, val in curve:
            records.append(ExperimentRecord("phase_sweep", gid, law_id, mu,
                                            f"R={R}", rep, rep_seed, "v_B(o)", val))
        records.append(ExperimentRecord("phase_sweep", gid, law_id, mu,
                                        f"horizon={horizon}", rep, rep_seed,
                                        "u_n(o)", u_o))
        records.append(ExperimentRecord("phase_sweep", gid, law_id, mu,
                                        f"ratio>={rule.ratio_threshold}", rep, rep_seed,
                                        "divergent", 1.0 if cls == "divergent-trend" else 0.0))
    fractions = {}
    for mu in mu_values:
        flags = [r.value for r in records if r.stat == "divergent" and r.mu == mu]
        fractions[mu] = float(np.mean(flags))
    return records, fractions


def _law_for_mu(family: str, mu: float) -> LawSpec:
    if family == "exponential":
        return LawSpec("exponential", {"mean": mu})
    if family == "uniform":
        return LawSpec("uniform", {"lo": 0.0, "hi": 2.0 * mu})
    if family == "constant":
        return LawSpec("constant", {"value": mu})
    raise ConfigError(f"phase sweep does not know how to target mu for {family}")


# ---------------------------------------------------------------------------
# kernel diagnostics


def fit_loglog_slope(ns, ys) -> float:
    ns = np.asarray(ns, dtype=float)
    ys = np.asarray(ys, dtype=float)
    keep = ys > 0
    x, y = np.log(ns[keep]), np.log(ys[keep])
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def heat_kernel_diag(graph: Graph, origin: int, horizon: int) -> dict:
    """Exact return probabilities p_n(o,o) (even n), the fitted log-log decay
    exponent on the tail half, and the measured constant in p_n <= C n^{-1/2}."""
    ftg = green.finite_time_green(graph, origin, horizon)
    ret = ftg.return_prob
    even = np.arange(2, horizon + 1, 2)
    probs = ret[even]
    tail = even >= even[-1] // 2
    slope = fit_loglog_slope(even[tail], probs[tail])
    C = float(np.max(probs * np.sqrt(even)))
    return {"exponent": -slope, "C_half": C, "n": even.tolist(),
            "p": probs.tolist(),
            "bound_holds": bool(np.all(probs <= C * even ** -0.5 + 1e-15))}


def local_time_moments(graph: Graph, origin: int, horizon: int, p: int,
                       seed: int = 0, replicas: int = 20000) -> dict:
    """Fitted growth exponent of sum_v E[L_n(v)^p].

    p = 2 is exact: sum_v E[L_n^2] = n + 2 sum_{j<k} P(X_j = X_k), computed
    from the full killed kernel (dense diagonal evolution).  p = 3 is Monte
    Carlo.  p = 1 equals n identically.
    """
    if p == 1:
        return {"exponent": 1.0, "values": [float(n) for n in range(1, horizon + 1)]}
    grid = np.unique(np.geomspace(8, horizon, 12).astype(int))
    if p == 2:
        vals = _collision_counts(graph, origin, horizon, grid)
    elif p == 3:
        vals = _mc_moment3(graph, origin, horizon, grid, seed, replicas)
    else:
        raise ConfigError("local_time_moments supports p in {1, 2, 3}")
    tail = grid >= grid[-1] // 4
    slope = fit_loglog_slope(grid[tail], np.asarray(vals)[tail])
    return {"exponent": slope, "n": grid.tolist(), "values": list(map(float, vals))}


def _collision_counts(graph: Graph, origin: int, horizon: int, grid):
    """Exact M2(n) = n + 2 sum_{m>=1} (sum_{j<n-m} q_j) . r_m on the window."""
    n_v = graph.n
    A = graph.adjacency()
    deg = graph.degree.astype(np.float64)
    interior = graph.interior.astype(np.float64)
    # killed transition operator T: column-stochastic step of distributions
    q = np.zeros(n_v)
    q[origin] = 1.0
    Q = [q.copy()]
    P = np.eye(n_v)
    diags = []
    for _ in range(horizon):
        q = A @ (q * interior / deg)
        Q.append(q.copy())
        P = A @ (P * (interior / deg)[:, None])
        diags.append(P.diagonal().copy())
    Qcum = np.cumsum(np.stack(Q), axis=0)  # Qcum[t] = sum_{j<=t} q_j
    out = []
    for n in grid:
        total = float(n)
        for m in range(1, n):
            total += 2.0 * float(Qcum[n - m - 1] @ diags[m - 1])
        out.append(total)
    return out


def _mc_moment3(graph: Graph, origin: int, horizon: int, grid, seed, replicas):
    from .rng import walk_generator
    rng = walk_generator(seed, 1)
    indptr, indices = graph.indptr, graph.indices
    deg = graph.degree
    interior = graph.interior
    pos = np.full(replicas, origin, dtype=np.int64)
    L = np.zeros((replicas, graph.n), dtype=np.int32)
    walker = np.arange(replicas)
    grid_set = set(int(g) for g in grid)
    out = []
    for k in range(1, horizon + 1):
        L[walker, pos] += 1
        act = interior[pos]
        if act.any():
            pp = pos[act]
            u = rng.random(len(pp))
            pos[act] = indices[indptr[pp] + (u * deg[pp]).astype(np.int64)]
        if k in grid_set:
            out.append(float(np.mean((L.astype(np.float64) ** 3).sum(axis=1))))
    return out


# ---------------------------------------------------------------------------
# comb means, conservation, sup-moment


def comb_one_step_means(half_width: int, mu: float, replicas: int, seed: int,
                        tooth_height: int = 2) -> dict:
    """Monte Carlo one-step means at an interior spine and first-tooth vertex
    against the exponential-law predictions mu + a/2 and mu - a/4, a = mu e^{-1/mu}."""
    if half_width < 2 or tooth_height < 2:
        raise ConfigError("need half_width >= 2 and tooth_height >= 2 so that the "
                          "measured vertices have fully interior neighborhoods")
    graph = build_comb_window(half_width, tooth_height)
    coords = graph.parts["coords"]
    spine = int(np.nonzero((coords[:, 0] == 0) & (coords[:, 1] == 0))[0][0])
    tooth = int(np.nonzero((coords[:, 0] == 0) & (coords[:, 1] == 1))[0][0])
    A = graph.adjacency()
    deg = graph.degree.astype(np.float64)
    interior = graph.interior
    keys = graph.label_keys
    # replica-vectorized sampling: one uniform per (vertex, replica)
    from .rng import uniform_open01
    seeds = (np.uint64(seed) + np.arange(replicas, dtype=np.uint64))
    sig_spine = np.zeros(replicas)
    sig_tooth = np.zeros(replicas)
    chunk = 20000
    for lo in range(0, replicas, chunk):
        hi = min(lo + chunk, replicas)
        u = np.stack([uniform_open01(keys, int(s)) for s in seeds[lo:hi]], axis=1)
        sig = -mu * np.log(u)
        excess = np.maximum(sig - 1.0, 0.0)
        excess[~interior, :] = 0.0
        emit = excess / deg[:, None]
        inflow = A @ emit
        sig1 = np.where(interior[:, None], np.minimum(sig, 1.0), sig) + inflow
        sig_spine[lo:hi] = sig1[spine]
        sig_tooth[lo:hi] = sig1[tooth]
    a = mu * math.exp(-1.0 / mu)
    pred_spine = mu + a / 2.0
    pred_tooth = mu - a / 4.0
    return {
        "spine_mean": float(sig_spine.mean()),
        "spine_se": float(sig_spine.std(ddof=1) / math.sqrt(replicas)),
        "tooth_mean": float(sig_tooth.mean()),
        "tooth_se": float(sig_tooth.std(ddof=1) / math.sqrt(replicas)),
        "pred_spine": pred_spine,
        "pred_tooth": pred_tooth,
        "a": a,
        "replicas": replicas,
    }


def conservation_check(graph: Graph, law: LawSpec, steps: int, replicas: int,
                       seed: int) -> float:
    """Max relative total-mass drift over toppling runs on a closed graph."""
    if graph.boundary.any():
        raise ConfigError("conservation check needs a closed graph (no boundary)")
    worst = 0.0
    for rep in range(replicas):
        config = scenery.sample(law, graph, seed + rep)
        eng = toppling.ToppleEngine(graph, config)
        m0 = eng.total_mass()
        scale = max(1.0, abs(m0))
        for _ in range(steps):
            eng.step()
            worst = max(worst, abs(eng.total_mass() - m0) / scale)
    return worst


def subcritical_sup_moment(graph: Graph, law: LawSpec, horizons, replicas: int,
                           q: float, seed: int, plateau_ratio: float = 0.05,
                           sceneries: int = 20) -> dict:
    """Monte Carlo E[(max_{n<=N} S_n)^q] over a horizon grid (annealed over
    both scenery and walk), with a plateau flag: relative increase over the
    last two grid points below plateau_ratio."""
    from .rng import walk_generator
    horizons = sorted(int(h) for h in horizons)
    N = horizons[-1]
    deg = graph.degree
    interior = graph.interior
    indptr, indices = graph.indptr, graph.indices
    per = max(1, replicas // sceneries)
    sums = np.zeros(len(horizons))
    total = 0
    for sc in range(sceneries):
        config = scenery.sample(law, graph, seed + sc)
        zeta = np.where(interior, (config.sigma - 1.0) / deg, 0.0)
        rng = walk_generator(seed, 1000 + sc)
        pos = np.full(per, graph.origin, dtype=np.int64)
        S = np.zeros(per)
        M = np.zeros(per)
        idx = 0
        for k in range(1, N + 1):
            S += zeta[pos]
            np.maximum(M, S, out=M)
            act = interior[pos]
            p = pos[act]
            u = rng.random(len(p))
            pos[act] = indices[indptr[p] + (u * deg[p]).astype(np.int64)]
            if k == horizons[idx]:
                sums[idx] += float(np.sum(np.maximum(M, 0.0) ** q))
                idx += 1
        total += per
    curve = (sums / total).tolist()
    plateau = (len(curve) >= 2 and
               (curve[-1] - curve[-2]) <= plateau_ratio * max(curve[-1], 1e-300))
    return {"horizons": horizons, "moments": curve, "plateau": bool(plateau)}


# ---------------------------------------------------------------------------
# sharpness demo


def sharpness_demo(params, level: int, law: LawSpec, seeds, K: float = None,
                   C_comb: float = None, plant: bool = False,
                   pipe_tree: Graph = None) -> dict:
    """Good-pipe scan on the pipe tree plus comb voltage payoffs.

    For each seed: sample a shifted-pareto scenery, scan level-`level` pipes at
    threshold K (default: the spike constant 2 + 2b(C_comb+1)), and evaluate
    the comb payoff sum g*a for each good pipe.  With plant=True a good pipe
    is forced at word (0,...,0) to certify payoff >= lambda^level / 4.
    """
    if law.family != "shifted-pareto":
        raise ConfigError("sharpness demo needs a shifted-pareto law")
    q = law.params["q"]
    b = law.params["q"] / (law.params["q"] - 1.0) - law.params["mu0"] + 1.0
    if C_comb is None:
        C_comb = gadgets.load_constants()["C_comb"]
    if K is None:
        K = 2.0 + 2.0 * b * (C_comb + 1.0)
    if pipe_tree is None:
        pipe_tree = build_pipe_tree(params, depth=level)
    lam_target = params.lam ** level / 4.0
    comb_cache = {}
    per_seed = []
    for sd in seeds:
        config = scenery.sample(law, pipe_tree, sd)
        if plant:
            config = gadgets.plant_good_pipe(config, pipe_tree, params, level,
                                             (0,) * level, K, law)
        words = gadgets.good_pipe_scan(pipe_tree, config, params, level, K)
        best = None
        for word in words[:8]:
            if word not in comb_cache:
                comb = build_comb_gadget(params, level, word)
                comb_cache[word] = (comb, gadgets.solve_comb(comb))
            comb, ce = comb_cache[word]
            # align the pipe-tree scenery onto the comb through the label keys
            a_field = _restrict_scenery(config, pipe_tree, comb)
            payoff = float(ce.g @ a_field)
            best = payoff if best is None else max(best, payoff)
        per_seed.append({"seed": sd, "n_good": len(words),
                         "best_payoff": best,
                         "hit": bool(best is not None and best >= lam_target)})
    found = [r for r in per_seed if r["n_good"] > 0]
    analytic_pipe = gadgets.good_pipe_probability(params, level, K, q)
    n_pipes = params.B ** level
    analytic_any = 1.0 - (1.0 - analytic_pipe) ** n_pipes
    return {
        "K": K, "level": level, "lam_target": lam_target,
        "per_seed": per_seed,
        "freq_any_good": len(found) / len(per_seed),
        "analytic_any_good": analytic_any,
        "hit_fraction": float(np.mean([1.0 if r["hit"] else 0.0 for r in per_seed]))
        if per_seed else 0.0,
    }


def _restrict_scenery(config: MassConfig, big: Graph, small: Graph) -> np.ndarray:
    """xi of `config` (on `big`) restricted to the vertices of `small`, matched
    by label key; vertices absent from `big` (e.g. the ground pendant) get 0."""
    big_keys = big.label_keys
    order = np.argsort(big_keys)
    sk = small.label_keys
    pos = np.searchsorted(big_keys[order], sk)
    pos = np.clip(pos, 0, len(order) - 1)
    match = big_keys[order][pos] == sk
    a = np.zeros(small.n)
    a[match] = config.sigma[order[pos[match]]] - 1.0
    return a
