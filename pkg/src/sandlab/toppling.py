"""Parallel toppling: simultaneous excess redistribution with odometer tracking.

One round sends, from every unstable interior vertex v, the excess
(sigma_n(v) - 1)^+ in equal shares to its neighbors:

    u_{n+1}(v)     = u_n(v) + (sigma_n(v) - 1)^+ / deg(v)
    sigma_{n+1}(v) = min(sigma_n(v), 1) + sum_{w ~ v} (sigma_n(w) - 1)^+ / deg(w)

Boundary vertices are pure absorbers: they never topple, and mass arriving
there accumulates (tracked in `emitted_to_boundary`).  On a closed graph the
total mass is conserved exactly, since min(a,1) + (a-1)^+ = a.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphs import Graph
from .scenery import MassConfig


@dataclass
class ToppleState:
    """Odometer u_n and configuration sigma_n after n parallel rounds."""
    n: int
    u: np.ndarray
    sigma: np.ndarray
    emitted_to_boundary: float
    max_excess: float


class ToppleEngine:
    """In-place stepper; `state()` snapshots are copies."""

    def __init__(self, graph: Graph, config: MassConfig):
        if config.graph is not graph and config.graph.n != graph.n:
            raise ValueError("config does not match graph")
        self.graph = graph
        self.n = 0
        self.u = np.zeros(graph.n)
        self.sigma = config.sigma.astype(np.float64, copy=True)
        self.emitted = 0.0
        self._A = graph.adjacency()
        self._deg = graph.degree.astype(np.float64)
        self._interior = graph.interior

    @property
    def max_excess(self) -> float:
        exc = self.sigma - 1.0
        exc = exc[self._interior]
        return float(exc.max(initial=0.0)) if len(exc) else 0.0

    def step(self):
        excess = np.maximum(self.sigma - 1.0, 0.0)
        excess[~self._interior] = 0.0
        if not np.all(np.isfinite(excess)):
            bad = int(np.nonzero(~np.isfinite(excess))[0][0])
            raise FloatingPointError(
                f"non-finite excess at vertex {bad} (step {self.n}): sigma={self.sigma[bad]}")
        emit = excess / self._deg
        self.u += emit
        inflow = self._A @ emit
        np.minimum(self.sigma, 1.0, where=self._interior, out=self.sigma)
        self.sigma += inflow
        self.emitted += float(inflow[~self._interior].sum())
        self.n += 1

    def state(self) -> ToppleState:
        return ToppleState(self.n, self.u.copy(), self.sigma.copy(),
                           self.emitted, self.max_excess)

    def total_mass(self) -> float:
        return float(self.sigma.sum())


def step(state: ToppleState, graph: Graph) -> ToppleState:
    """One parallel round, functional form."""
    eng = ToppleEngine.__new__(ToppleEngine)
    eng.graph = graph
    eng.n = state.n
    eng.u = state.u.copy()
    eng.sigma = state.sigma.copy()
    eng.emitted = state.emitted_to_boundary
    eng._A = graph.adjacency()
    eng._deg = graph.degree.astype(np.float64)
    eng._interior = graph.interior
    eng.step()
    return eng.state()


def run(graph: Graph, config: MassConfig, horizon: int, tol: float = 1e-12):
    """Iterate until n = horizon or max interior excess < tol.

    Returns (final ToppleState, stop_reason) with stop_reason in
    {"stabilized", "horizon"}; the tolerance criterion is operational, not a
    claim about u_infinity.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    eng = ToppleEngine(graph, config)
    reason = "horizon"
    for _ in range(horizon):
        if eng.max_excess < tol:
            reason = "stabilized"
            break
        eng.step()
    else:
        if eng.max_excess < tol:
            reason = "stabilized"
    return eng.state(), reason


def recursion_check(graph: Graph, config: MassConfig, horizon: int) -> float:
    """Max pointwise gap between the toppling odometer and its fixed-point form
    u_{n+1}(x) = ((1/deg x) sum_{y~x} u_n(y) + zeta(x))^+ over all n <= horizon."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    eng = ToppleEngine(graph, config)
    A = graph.adjacency()
    deg = graph.degree.astype(np.float64)
    interior = graph.interior
    zeta = (config.sigma - 1.0) / deg
    v = np.zeros(graph.n)
    worst = 0.0
    for _ in range(horizon):
        eng.step()
        v = np.maximum((A @ v) / deg + zeta, 0.0)
        v[~interior] = 0.0
        worst = max(worst, float(np.max(np.abs(v - eng.u))))
    return worst
