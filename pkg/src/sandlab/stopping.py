"""Optimal stopping for walk-in-scenery payoffs: value iteration, a brute-force
oracle, and walk simulation with the drift/fluctuation decomposition.

The value function obeys the Wald--Bellman recursion

    v_{k+1}(x) = (zeta(x) + (1/deg x) sum_{y~x} v_k(y))^+,   v = 0 at boundary,

and equals the parallel-toppling odometer u_k(x) exactly.  Walk payoffs
decompose as S_n = D_n + W_n with D the scenery-independent drift and W the
local-time-weighted fluctuation; absorbed steps contribute nothing to either.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphs import Graph, ball
from .green import theta
from .rng import walk_generator
from .scenery import MassConfig


class InstanceTooLarge(ValueError):
    """Brute-force oracle limits exceeded."""


@dataclass
class ValueTable:
    """v_k for 0 <= k <= horizon, rows indexed by k."""
    horizon: int
    v: np.ndarray  # shape (horizon+1, n)

    def at(self, k: int) -> np.ndarray:
        return self.v[k]


@dataclass
class WalkPayoff:
    """A walk path with payoff decomposition S = D + W and local times L."""
    path: np.ndarray
    S: np.ndarray
    D: np.ndarray
    W: np.ndarray
    L: np.ndarray
    stopped_at: int

    @property
    def value(self) -> float:
        return float(self.S[self.stopped_at])


def value_iteration(graph: Graph, config: MassConfig, horizon: int) -> ValueTable:
    """Full Bellman table; v_0 = 0, v = 0 at boundary throughout."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    A = graph.adjacency()
    deg = graph.degree.astype(np.float64)
    interior = graph.interior
    zeta = (config.sigma - 1.0) / deg
    V = np.zeros((horizon + 1, graph.n))
    for k in range(horizon):
        nxt = np.maximum(zeta + (A @ V[k]) / deg, 0.0)
        nxt[~interior] = 0.0
        V[k + 1] = nxt
    return ValueTable(horizon=horizon, v=V)


def brute_force_value(graph: Graph, config: MassConfig, x: int, horizon: int) -> float:
    """Exact supremum of E_x[S_tau] over history-measurable stopping rules.

    Enumerates the full path tree by backward induction (no Markov collapse),
    as an oracle independent of value_iteration.  Limits: |V| <= 8, horizon <= 4.
    """
    if graph.n > 8 or horizon > 4:
        raise InstanceTooLarge("brute force limited to |V| <= 8 and horizon <= 4")
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    zeta = (config.sigma - 1.0) / graph.degree
    interior = graph.interior

    def rec(v, left, acc):
        if left == 0 or not interior[v]:
            return acc
        cont = 0.0
        nbrs = graph.neighbors(v)
        for w in nbrs:
            cont += rec(int(w), left - 1, acc + zeta[v])
        cont /= len(nbrs)
        return max(acc, cont)

    return rec(int(x), horizon, 0.0)


def simulate_walk(graph: Graph, config: MassConfig, x: int, steps: int,
                  seed: int) -> WalkPayoff:
    """Uniform-neighbor walk from x; absorbing (frozen) at boundary marks.

    L counts every position including repeats at an absorbing vertex, so
    sum_v L_n(v) = n exactly; absorbed positions add nothing to S, D, or W.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if not math.isfinite(config.mu):
        raise ValueError("payoff decomposition needs a finite declared mean; truncate first")
    rng = walk_generator(seed)
    deg = graph.degree
    interior = graph.interior
    zeta = (config.sigma - 1.0) / deg
    path = np.zeros(steps + 1, dtype=np.int64)
    S = np.zeros(steps + 1)
    D = np.zeros(steps + 1)
    W = np.zeros(steps + 1)
    L = np.zeros(graph.n, dtype=np.int64)
    v = int(x)
    path[0] = v
    for k in range(steps):
        L[v] += 1
        if interior[v]:
            S[k + 1] = S[k] + zeta[v]
            D[k + 1] = D[k] + (config.mu - 1.0) / deg[v]
            W[k + 1] = W[k] + (config.sigma[v] - config.mu) / deg[v]
            v = int(graph.neighbors(v)[rng.integers(deg[v])])
        else:
            S[k + 1], D[k + 1], W[k + 1] = S[k], D[k], W[k]
        path[k + 1] = v
    return WalkPayoff(path=path, S=S, D=D, W=W, L=L, stopped_at=steps)


def batch_final_payoffs(graph: Graph, config: MassConfig, x: int, steps: int,
                        n_walkers: int, seed: int) -> np.ndarray:
    """S_steps for n_walkers independent walks (vectorized)."""
    rng = walk_generator(seed)
    deg = graph.degree
    zeta = np.where(graph.interior, (config.sigma - 1.0) / deg, 0.0)
    indptr, indices = graph.indptr, graph.indices
    pos = np.full(n_walkers, int(x), dtype=np.int64)
    S = np.zeros(n_walkers)
    interior = graph.interior
    for _ in range(steps):
        S += zeta[pos]
        act = interior[pos]
        if act.any():
            p = pos[act]
            u = rng.random(len(p))
            pick = indptr[p] + (u * deg[p]).astype(np.int64)
            pos[act] = indices[pick]
    return S


def batch_exit_payoffs(graph: Graph, config: MassConfig, C, o: int,
                       n_walkers: int, seed: int, max_steps: int = 10 ** 7) -> np.ndarray:
    """S_{tau_C} samples: walk from o until the first exit from C."""
    C = np.asarray(sorted(set(int(v) for v in C)), dtype=np.int64)
    in_C = np.zeros(graph.n, dtype=bool)
    in_C[C] = True
    rng = walk_generator(seed)
    deg = graph.degree
    zeta = (config.sigma - 1.0) / deg
    indptr, indices = graph.indptr, graph.indices
    pos = np.full(n_walkers, int(o), dtype=np.int64)
    S = np.zeros(n_walkers)
    alive = np.ones(n_walkers, dtype=bool)
    for _ in range(max_steps):
        alive &= in_C[pos]
        if not alive.any():
            break
        p = pos[alive]
        S[alive] += zeta[p]
        u = rng.random(len(p))
        pick = indptr[p] + (u * deg[p]).astype(np.int64)
        pos[alive] = indices[pick]
    else:
        raise RuntimeError("exit sampling exceeded max_steps")
    return S


def run_optimal_rule(graph: Graph, config: MassConfig, x: int, horizon: int,
                     seed: int, table: ValueTable = None) -> WalkPayoff:
    """Walk until v_{n-k}(X_k) = 0 (the optimal rule tau_n^*); payoff at stop."""
    table = table if table is not None else value_iteration(graph, config, horizon)
    wp = simulate_walk(graph, config, x, horizon, seed)
    stop = horizon
    for k in range(horizon + 1):
        if table.v[horizon - k][wp.path[k]] == 0.0:
            stop = k
            break
    return WalkPayoff(path=wp.path, S=wp.S, D=wp.D, W=wp.W, L=wp.L, stopped_at=stop)


def batch_optimal_payoffs(graph: Graph, config: MassConfig, x: int, horizon: int,
                          n_walkers: int, seed: int, table: ValueTable = None) -> np.ndarray:
    """Stopped payoffs under tau_n^* for many walks (vectorized)."""
    table = table if table is not None else value_iteration(graph, config, horizon)
    rng = walk_generator(seed)
    deg = graph.degree
    zeta = np.where(graph.interior, (config.sigma - 1.0) / deg, 0.0)
    indptr, indices = graph.indptr, graph.indices
    pos = np.full(n_walkers, int(x), dtype=np.int64)
    S = np.zeros(n_walkers)
    out = np.zeros(n_walkers)
    running = np.ones(n_walkers, dtype=bool)
    for k in range(horizon + 1):
        hit = running & (table.v[horizon - k][pos] == 0.0)
        out[hit] = S[hit]
        running &= ~hit
        if not running.any() or k == horizon:
            out[running] = S[running]  # v_0 = 0 forces tau <= horizon
            break
        p = pos[running]
        S[running] += zeta[p]
        u = rng.random(len(p))
        pick = indptr[p] + (u * deg[p]).astype(np.int64)
        pos[running] = indices[pick]
    return out


def trap_strategy(graph: Graph, config: MassConfig, x: int, eps: float,
                  L_target: float, max_steps: int, seed: int) -> WalkPayoff:
    """Walk until the current position y admits a trap ball C(y) with
    Theta_{C(y)}(y) >= L_target on which every xi <= -eps; stop there (or at
    max_steps).

    The trap set is the smallest metric ball around y whose inverse-degree
    exit time reaches L_target (computed exactly via the killed Green
    function, cached per vertex).
    """
    if eps <= 0:
        raise ValueError("eps must be > 0")
    rng = walk_generator(seed)
    deg = graph.degree
    interior = graph.interior
    zeta = np.where(interior, (config.sigma - 1.0) / deg, 0.0)
    xi = config.sigma - 1.0
    trap_cache = {}

    def trap_ball(y):
        if y in trap_cache:
            return trap_cache[y]
        R, C = 0, None
        for R in range(1, 64):
            C = ball(graph, y, R)
            if len(C) >= graph.n:  # cannot grow a proper trap here
                C = None
                break
            if theta(graph, C, y) >= L_target:
                break
        trap_cache[y] = C
        return C

    path = [int(x)]
    S = [0.0]
    D = [0.0]
    W = [0.0]
    L = np.zeros(graph.n, dtype=np.int64)
    v = int(x)
    stop = max_steps
    for k in range(max_steps + 1):
        # cheap scenery check first; exact Theta check only when it passes
        C0 = ball(graph, v, 1)
        if np.all(xi[C0] <= -eps):
            C = trap_ball(v)
            if C is not None and np.all(xi[C] <= -eps):
                stop = k
                break
        if k == max_steps:
            break
        L[v] += 1
        if interior[v]:
            S.append(S[-1] + zeta[v])
            drift = (config.mu - 1.0) / deg[v] if math.isfinite(config.mu) else 0.0
            D.append(D[-1] + drift)
            W.append(S[-1] - D[-1])
            v = int(graph.neighbors(v)[rng.integers(deg[v])])
        else:
            S.append(S[-1])
            D.append(D[-1])
            W.append(W[-1])
        path.append(v)
    return WalkPayoff(path=np.array(path, dtype=np.int64), S=np.array(S),
                      D=np.array(D), W=np.array(W), L=L, stopped_at=min(stop, len(S) - 1))
