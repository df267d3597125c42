"""Killed and finite-time Green functions, clocks, and finite-volume values.

The killed Green function g_C(o, .) is the unique vector with g = 0 off C,
harmonic on C minus the source, and -Delta g(o) = 1; electrically it is the
voltage when unit current is injected at o and the complement is grounded.
The finite-time kernel g_n(x, v) = E_x[L_n(v)]/deg(v) is computed by exact
kernel iteration, killed at the boundary marks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .graphs import Graph
from .scenery import MassConfig

DIRECT_SOLVER_LIMIT = 10_000


class GreenDomainError(ValueError):
    """Domain does not admit a killed Green function (no escape to the complement)."""


class ConvergenceError(RuntimeError):
    """Iterative solve failed to reach its residual target."""


@dataclass
class GreenVector:
    """Green values over the whole vertex set (zero off the domain).

    Exactly one of `domain` (killed) and `horizon` (finite-time) is set.
    """
    source: int
    values: np.ndarray
    domain: np.ndarray = None
    horizon: int = None

    def residual(self, graph: Graph) -> float:
        """Max |Delta g + delta_source| over the killed domain."""
        if self.domain is None:
            raise ValueError("residual is defined for killed Green vectors")
        lap = graph.adjacency() @ self.values - graph.degree * self.values
        lap[self.source] += 1.0
        return float(np.max(np.abs(lap[self.domain])))


def _check_domain(graph: Graph, C: np.ndarray, source: int):
    C = np.asarray(sorted(set(int(v) for v in C)), dtype=np.int64)
    if source not in set(C.tolist()):
        raise GreenDomainError("source must lie in C")
    if len(C) >= graph.n:
        raise GreenDomainError("C must be a proper subset (complement nonempty)")
    in_C = np.zeros(graph.n, dtype=bool)
    in_C[C] = True
    # connectivity of C
    seen = {int(source)}
    stack = [int(source)]
    while stack:
        v = stack.pop()
        for w in graph.neighbors(v):
            w = int(w)
            if in_C[w] and w not in seen:
                seen.add(w)
                stack.append(w)
    if len(seen) != len(C):
        raise GreenDomainError("C is not connected")
    # escape: some edge must leave C
    deg_in = np.array([int(in_C[graph.neighbors(v)].sum()) for v in C])
    if np.all(deg_in == graph.degree[C]):
        raise GreenDomainError("C touches no complement vertex; system is singular")
    return C, in_C


def _grounded_system(graph: Graph, C: np.ndarray):
    A = graph.adjacency()
    sub = A[C][:, C]
    D = sparse.diags(graph.degree[C].astype(np.float64))
    return (D - sub).tocsr()


def _is_tree_domain(graph: Graph, C: np.ndarray, in_C) -> bool:
    internal = sum(int(in_C[graph.neighbors(v)].sum()) for v in C)
    return internal == 2 * (len(C) - 1)


def killed_green(graph: Graph, C, source: int, method: str = "auto") -> GreenVector:
    """Solve the killed Green system on a finite connected C.

    method: "auto" picks direct elimination for |C| <= 1e4, conjugate gradient
    above, and exact series/parallel reduction on tree domains; "direct",
    "cg", "tree" force a route.
    """
    C, in_C = _check_domain(graph, C, source)
    k = int(np.searchsorted(C, source))
    if method == "auto":
        if _is_tree_domain(graph, C, in_C):
            method = "tree"
        elif len(C) <= DIRECT_SOLVER_LIMIT:
            method = "direct"
        else:
            method = "cg"
    values = np.zeros(graph.n)
    if method == "tree":
        values[C] = _tree_green(graph, C, in_C, source)
    elif method == "direct":
        if len(C) <= 64:
            # dense fast path for the tiny systems the subset oracle hammers
            idx = {int(v): i for i, v in enumerate(C)}
            L = np.zeros((len(C), len(C)))
            for i, v in enumerate(C):
                L[i, i] = graph.degree[v]
                for w in graph.neighbors(int(v)):
                    j = idx.get(int(w))
                    if j is not None:
                        L[i, j] = -1.0
            rhs = np.zeros(len(C))
            rhs[k] = 1.0
            values[C] = np.linalg.solve(L, rhs)
        else:
            L = _grounded_system(graph, C).tocsc()
            rhs = np.zeros(len(C))
            rhs[k] = 1.0
            values[C] = splinalg.spsolve(L, rhs)
    elif method == "cg":
        L = _grounded_system(graph, C)
        rhs = np.zeros(len(C))
        rhs[k] = 1.0
        M = sparse.diags(1.0 / graph.degree[C].astype(np.float64))
        x = np.zeros(len(C))
        for _ in range(200):
            x, info = splinalg.cg(L, rhs, x0=x, rtol=1e-14, atol=1e-14, M=M,
                                  maxiter=2000)
            if np.max(np.abs(L @ x - rhs)) < 1e-12:
                break
        else:
            raise ConvergenceError("cg did not reach residual 1e-12")
        values[C] = x
    else:
        raise ValueError(f"unknown method {method}")
    return GreenVector(source=int(source), values=values, domain=C)


def _tree_green(graph: Graph, C, in_C, source):
    """Exact series/parallel reduction of a tree domain with unit conductances.

    For each vertex the downward (away-from-source) resistance to ground is
    combined from its ground edges (count = edges leaving C) in parallel with
    1 + R_down(child) per child branch.
    """
    idx = {int(v): i for i, v in enumerate(C)}
    children = [[] for _ in C]
    parent = [-1] * len(C)
    order = []
    src = idx[int(source)]
    stack = [src]
    seen = {src}
    while stack:
        i = stack.pop()
        order.append(i)
        v = int(C[i])
        for w in graph.neighbors(v):
            w = int(w)
            if in_C[w]:
                j = idx[w]
                if j not in seen:
                    seen.add(j)
                    parent[j] = i
                    children[i].append(j)
                    stack.append(j)
    ground_edges = np.array([int(graph.degree[C[i]] - in_C[graph.neighbors(int(C[i]))].sum())
                             for i in range(len(C))], dtype=np.int64)
    # upward pass: conductance to ground through each subtree
    cond_down = np.zeros(len(C))
    for i in reversed(order):
        c = float(ground_edges[i])
        for j in children[i]:
            c += 1.0 / (1.0 + 1.0 / cond_down[j]) if cond_down[j] > 0 else 0.0
        cond_down[i] = c
    if cond_down[src] == 0:
        raise GreenDomainError("tree domain has no escape")
    g = np.zeros(len(C))
    g[src] = 1.0 / cond_down[src]
    for i in order:
        for j in children[i]:
            if cond_down[j] > 0:
                branch_current = g[i] / (1.0 + 1.0 / cond_down[j])
                g[j] = branch_current / cond_down[j]
            else:
                g[j] = g[i]  # dead branch carries no current, constant voltage
    return g


@dataclass
class FiniteTimeGreen:
    """Finite-time Green kernel from one source plus its derived clocks.

    A[k] is the inverse-degree clock A_k, Sigma[k] the fluctuation scale, and
    return_prob[k] = P_source(X_k = source) under the killed kernel.
    """
    source: int
    horizon: int
    g: np.ndarray
    A: np.ndarray
    Sigma: np.ndarray
    return_prob: np.ndarray
    snapshots: list = None


class KernelWalker:
    """Exact distribution iteration p_{k+1}(v) = sum_{w~v, w interior} p_k(w)/deg(w).

    Mass stepping into a boundary vertex is killed, matching the absorbing
    semantics of the toppling and value iterations.  g accumulates
    sum_k p_k(v)/deg(v); the clock A accumulates per step, which keeps it
    exact in dyadic arithmetic (A_n = n/2 on Z, bit for bit, for n <= 50).
    """

    def __init__(self, graph: Graph, source: int):
        self.graph = graph
        self.source = int(source)
        self._A = graph.adjacency()
        self._deg = graph.degree.astype(np.float64)
        self._interior = graph.interior.astype(np.float64)
        self.p = np.zeros(graph.n)
        self.p[source] = 1.0
        self.g = np.zeros(graph.n)
        self.k = 0
        self.A = 0.0
        self.Sigma = 0.0

    def step(self):
        contrib = self.p * self._interior / self._deg
        self.g += contrib
        self.A += float(contrib.sum())
        self.p = self._A @ contrib
        self.k += 1
        self.Sigma = float(self.g @ self.g)


def finite_time_green(graph: Graph, source: int, horizon: int,
                      keep_snapshots: bool = False) -> FiniteTimeGreen:
    """g_n(source, .), A_k, Sigma_k and return probabilities for k <= horizon.

    Exact (equal to the infinite-graph kernel) whenever the window radius is
    at least the horizon; beyond that it is the killed kernel.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    w = KernelWalker(graph, source)
    A = np.zeros(horizon + 1)
    Sig = np.zeros(horizon + 1)
    ret = np.zeros(horizon + 1)
    ret[0] = 1.0
    snaps = [] if keep_snapshots else None
    for k in range(1, horizon + 1):
        w.step()
        A[k] = w.A
        Sig[k] = w.Sigma
        ret[k] = w.p[source]
        if keep_snapshots:
            snaps.append(w.g.copy())
    return FiniteTimeGreen(source=int(source), horizon=horizon, g=w.g, A=A,
                           Sigma=Sig, return_prob=ret, snapshots=snaps)


def voltage_payoff(green: GreenVector, config: MassConfig) -> float:
    """sum_{v in C} g_C(o, v) (sigma(v) - 1): the expected exit payoff E_o[S_tau_C]."""
    if green.domain is None:
        raise ValueError("voltage_payoff needs a killed Green vector")
    C = green.domain
    return float(green.values[C] @ (config.sigma[C] - 1.0))


def finite_volume_value(graph: Graph, config: MassConfig, K, o: int,
                        tol: float = 1e-13, max_sweeps: int = 1_000_000):
    """Minimal fixed point of v = (zeta + P v)^+ on K (v = 0 off K).

    Monotone Jacobi iteration from 0; converges from below to the value
    v_K(o).  Returns (value at o, D_K(o) = connected component of o in the
    positivity set, info dict).
    """
    K = np.asarray(sorted(set(int(v) for v in K)), dtype=np.int64)
    if o not in set(K.tolist()):
        raise ValueError("o must lie in K")
    if len(K) >= graph.n:
        raise ValueError("K must be proper")
    A_KK = graph.adjacency()[K][:, K]
    deg = graph.degree[K].astype(np.float64)
    zeta = (config.sigma[K] - 1.0) / deg
    v = np.zeros(len(K))
    sweeps = 0
    while sweeps < max_sweeps:
        nxt = np.maximum(zeta + (A_KK @ v) / deg, 0.0)
        change = float(np.max(np.abs(nxt - v)))
        v = nxt
        sweeps += 1
        if change < tol:
            break
    else:
        raise ConvergenceError(
            f"finite_volume_value: residual {change:.3e} after {max_sweeps} sweeps")
    # connected component of o in the positivity set
    pos = v > 0.0
    k0 = int(np.searchsorted(K, o))
    comp = set()
    if pos[k0]:
        idx = {int(x): i for i, x in enumerate(K)}
        stack = [k0]
        comp.add(k0)
        while stack:
            i = stack.pop()
            for w in graph.neighbors(int(K[i])):
                j = idx.get(int(w))
                if j is not None and pos[j] and j not in comp:
                    comp.add(j)
                    stack.append(j)
    D = np.asarray(sorted(int(K[i]) for i in comp), dtype=np.int64)
    info = {"sweeps": sweeps, "last_change": change}
    return float(v[k0]), D, info


def nested_volume_search(graph: Graph, config: MassConfig, o: int, radii):
    """v_{B(o,R) cap interior}(o) for each R in an increasing list of radii."""
    from .graphs import ball

    out = []
    for R in radii:
        K = ball(graph, o, int(R))
        K = K[graph.interior[K]]
        val, _, _ = finite_volume_value(graph, config, K, o)
        out.append((int(R), val))
    return out


def theta(graph: Graph, C, y: int) -> float:
    """Inverse-degree exit time Theta_C(y) = sum_{v in C} g_C(y, v)."""
    gv = killed_green(graph, C, y)
    return float(gv.values[gv.domain].sum())


def short_clock_total(graph: Graph, o: int, horizon: int) -> np.ndarray:
    """The clock sequence A_n(o) for n = 0..horizon (killed at the boundary)."""
    return finite_time_green(graph, o, horizon).A


# ---------------------------------------------------------------------------
# exhaustive oracle for the finite-volume value


def connected_subsets(graph: Graph, K, o: int):
    """Yield every connected subset of K containing o exactly once (|K| <= 12).

    Recursive augmentation: a set may only be extended by candidates not
    previously declined, which generates each connected set once.
    """
    K = [int(v) for v in K]
    if len(K) > 12:
        raise ValueError("connected-subset enumeration is capped at |K| <= 12")
    if o not in K:
        raise ValueError("o must lie in K")
    pos = {v: i for i, v in enumerate(K)}
    nbr_masks = []
    for v in K:
        m = 0
        for w in graph.neighbors(v):
            if int(w) in pos:
                m |= 1 << pos[int(w)]
        nbr_masks.append(m)
    o_bit = 1 << pos[o]

    def mask_to_set(mask):
        return np.array([K[i] for i in range(len(K)) if mask >> i & 1], dtype=np.int64)

    def grow(current, frontier, forbidden):
        yield mask_to_set(current)
        cand = frontier & ~current & ~forbidden
        banned = forbidden
        while cand:
            low = cand & -cand
            cand ^= low
            i = low.bit_length() - 1
            yield from grow(current | low, frontier | nbr_masks[i], banned)
            banned |= low  # later sets must exclude this vertex

    yield from grow(o_bit, nbr_masks[pos[o]], 0)


def vK_exhaustive(graph: Graph, config: MassConfig, K, o: int) -> float:
    """max(0, sup over connected C subset of K with o in C of the voltage payoff).

    Brute-force oracle for finite_volume_value; independent of the monotone
    iteration.
    """
    best = 0.0
    for C in connected_subsets(graph, K, o):
        if len(C) >= graph.n:
            continue
        gv = killed_green(graph, C, o)
        best = max(best, voltage_payoff(gv, config))
    return best
