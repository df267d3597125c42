"""Mass configurations sigma and the laws that generate them.

Every random draw is keyed by (seed, vertex label), so identical
(graph, law, seed) triples reproduce identical sceneries bit for bit, and a
scenery is unchanged when its window is enlarged.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .graphs import Graph
from .rng import STREAM_ETA, STREAM_RESAMPLE, uniform_open01

FAMILIES = ("constant", "spike", "bernoulli", "exponential", "uniform",
            "shifted-pareto", "coboundary-uniform", "custom-table")


class LawError(ValueError):
    """Invalid law parameters."""


@dataclass(frozen=True)
class LawSpec:
    """A scenery law: family name plus its parameters.

    shifted-pareto(q, mu0) draws Y with tail P(Y >= t) = t^-q on t >= 1 and
    sets sigma = Y - E[Y] + mu0, so E[sigma] = mu0 and sigma >= 1 - b with
    b = E[Y] - mu0 + 1.
    """
    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise LawError(f"unknown law family {self.family!r}")
        p = self.params
        if self.family == "constant" and "value" not in p:
            raise LawError("constant law needs 'value'")
        if self.family == "spike":
            if p.get("m", 0) <= 0:
                raise LawError("spike law needs m > 0")
        if self.family == "bernoulli":
            if not (0 <= p.get("p", -1) <= 1):
                raise LawError("bernoulli law needs p in [0,1]")
        if self.family == "exponential" and p.get("mean", 0) <= 0:
            raise LawError("exponential law needs mean > 0")
        if self.family == "uniform" and not p.get("lo", 1) <= p.get("hi", 0):
            raise LawError("uniform law needs lo <= hi")
        if self.family == "shifted-pareto":
            if p.get("q", 0) <= 1:
                raise LawError("shifted-pareto needs q > 1 for E[Y] to exist")
            if "mu0" not in p:
                raise LawError("shifted-pareto needs mu0")
        if self.family == "custom-table":
            vals, probs = p.get("values"), p.get("probs")
            if not vals or not probs or len(vals) != len(probs):
                raise LawError("custom-table needs matching values/probs")
            if abs(sum(probs) - 1.0) > 1e-12 or min(probs) < 0:
                raise LawError("custom-table probs must be a distribution")

    @property
    def law_id(self) -> str:
        inner = ",".join(f"{k}={self.params[k]}" for k in sorted(self.params))
        return f"{self.family}({inner})"

    def mean(self) -> float:
        p = self.params
        if self.family == "constant":
            return float(p["value"])
        if self.family == "bernoulli":
            return p["p"] * p.get("b", 1.0) + (1 - p["p"]) * p.get("a", 0.0)
        if self.family == "exponential":
            return float(p["mean"])
        if self.family == "uniform":
            return 0.5 * (p["lo"] + p["hi"])
        if self.family == "shifted-pareto":
            return float(p["mu0"])
        if self.family == "coboundary-uniform":
            return 1.0
        if self.family == "custom-table":
            return float(np.dot(p["values"], p["probs"]))
        raise LawError(f"{self.family} has no declared mean")

    def variance(self):
        p = self.params
        if self.family == "constant":
            return 0.0
        if self.family == "bernoulli":
            a, b = p.get("a", 0.0), p.get("b", 1.0)
            return p["p"] * (1 - p["p"]) * (b - a) ** 2
        if self.family == "exponential":
            return p["mean"] ** 2
        if self.family == "uniform":
            return (p["hi"] - p["lo"]) ** 2 / 12.0
        if self.family == "shifted-pareto":
            q = p["q"]
            if q <= 2:
                return math.inf
            return q / ((q - 1) ** 2 * (q - 2))
        if self.family == "custom-table":
            v = np.asarray(p["values"], dtype=float)
            pr = np.asarray(p["probs"], dtype=float)
            m = float(v @ pr)
            return float(((v - m) ** 2) @ pr)
        return None

    def lower_bound(self):
        """Largest c with sigma >= c almost surely, or None if unbounded below."""
        p = self.params
        if self.family == "constant":
            return float(p["value"])
        if self.family == "bernoulli":
            return min(p.get("a", 0.0), p.get("b", 1.0))
        if self.family == "exponential":
            return 0.0
        if self.family == "uniform":
            return float(p["lo"])
        if self.family == "shifted-pareto":
            # Y >= 1, so min sigma = 1 - E[Y] + mu0 (tighter than the declared
            # sigma >= 1 - b with b = E[Y] - mu0 + 1, which it implies)
            q, mu0 = p["q"], p["mu0"]
            return mu0 - 1.0 / (q - 1.0)
        if self.family == "custom-table":
            return float(min(p["values"]))
        if self.family == "coboundary-uniform":
            return None  # 1 - Delta(eta) with eta in [0,1]: bounded by degrees, not a law constant
        return None

    def to_json(self) -> dict:
        return {"family": self.family, **self.params}

    @classmethod
    def from_json(cls, obj: dict) -> "LawSpec":
        obj = dict(obj)
        family = obj.pop("family")
        return cls(family, obj)


@dataclass
class MassConfig:
    """A scenery: per-vertex sigma, plus the law/seed that produced it.

    xi = sigma - 1 and zeta = xi / deg are derived on demand, never stored.
    `extras` carries law-specific fields (raw Pareto Y values, the coboundary
    eta field, clamp records).
    """
    graph: Graph
    sigma: np.ndarray
    law_id: str
    seed: int
    mu: float
    extras: dict = field(default_factory=dict)

    @property
    def xi(self) -> np.ndarray:
        return self.sigma - 1.0

    @property
    def zeta(self) -> np.ndarray:
        return (self.sigma - 1.0) / self.graph.degree


def sample(law: LawSpec, graph: Graph, seed: int) -> MassConfig:
    """Draw an i.i.d. scenery; per-vertex values keyed by (seed, label)."""
    keys = graph.label_keys
    p = law.params
    extras = {}
    if law.family == "constant":
        sigma = np.full(graph.n, float(p["value"]))
    elif law.family == "spike":
        return spike(graph, p.get("at", graph.origin), p["m"])
    elif law.family == "bernoulli":
        u = uniform_open01(keys, seed)
        sigma = np.where(u <= p["p"], p.get("b", 1.0), p.get("a", 0.0))
    elif law.family == "exponential":
        u = uniform_open01(keys, seed)
        sigma = -p["mean"] * np.log(u)
    elif law.family == "uniform":
        u = uniform_open01(keys, seed)
        sigma = p["lo"] + (p["hi"] - p["lo"]) * u
    elif law.family == "shifted-pareto":
        u = uniform_open01(keys, seed)
        Y = u ** (-1.0 / p["q"])
        extras["Y"] = Y
        sigma = Y - p["q"] / (p["q"] - 1.0) + p["mu0"]
    elif law.family == "coboundary-uniform":
        return coboundary(graph, seed)
    elif law.family == "custom-table":
        u = uniform_open01(keys, seed)
        cdf = np.cumsum(p["probs"])
        cdf[-1] = 1.0
        idx = np.searchsorted(cdf, u, side="left")
        sigma = np.asarray(p["values"], dtype=float)[idx]
    else:
        raise LawError(f"cannot sample family {law.family}")
    return MassConfig(graph, sigma.astype(np.float64), law.law_id, seed, law.mean(),
                      extras=extras)


def spike(graph: Graph, o: int, m: float) -> MassConfig:
    """sigma = 1 + m at o, 1 elsewhere."""
    if m <= 0:
        raise LawError("spike mass m must be > 0")
    sigma = np.ones(graph.n)
    sigma[o] = 1.0 + m
    return MassConfig(graph, sigma, f"spike(m={m},at={o})", 0, math.nan,
                      extras={"spike_vertex": int(o), "spike_mass": float(m)})


def coboundary(graph: Graph, seed: int) -> MassConfig:
    """sigma = 1 - Delta(eta) at interior vertices with eta i.i.d. Uniform[0,1].

    Boundary vertices receive sigma = 1 (they never topple).  eta is stored so
    the odometer bound u_n <= eta can be checked.
    """
    eta = uniform_open01(graph.label_keys, seed, stream=STREAM_ETA)
    lap = graph.adjacency() @ eta - graph.degree * eta
    sigma = np.where(graph.interior, 1.0 - lap, 1.0)
    return MassConfig(graph, sigma, "coboundary-uniform()", seed, 1.0,
                      extras={"eta": eta})


def truncate(config: MassConfig, floor: float = -math.inf,
             cap: float = math.inf) -> MassConfig:
    """Pointwise clamp of sigma to [floor, cap]; the clamp is recorded."""
    if floor > cap:
        raise LawError("floor must be <= cap")
    sigma = np.clip(config.sigma, floor, cap)
    extras = dict(config.extras)
    extras["clamp"] = {"floor": floor, "cap": cap}
    return MassConfig(config.graph, sigma, f"clamp({config.law_id},{floor},{cap})",
                      config.seed, config.mu, extras=extras)


def resample_one(config: MassConfig, law: LawSpec, v: int, aux_seed: int):
    """Redraw the single vertex v from an auxiliary stream; others untouched.

    Returns (new_config, old_value, new_value) of sigma at v.
    """
    key = config.graph.label_keys[v:v + 1]
    u = uniform_open01(key, aux_seed, stream=STREAM_RESAMPLE)[0]
    p = law.params
    if law.family == "bernoulli":
        new = p.get("b", 1.0) if u <= p["p"] else p.get("a", 0.0)
    elif law.family == "exponential":
        new = -p["mean"] * math.log(u)
    elif law.family == "uniform":
        new = p["lo"] + (p["hi"] - p["lo"]) * u
    elif law.family == "shifted-pareto":
        Y = u ** (-1.0 / p["q"])
        new = Y - p["q"] / (p["q"] - 1.0) + p["mu0"]
    elif law.family == "custom-table":
        cdf = np.cumsum(p["probs"])
        cdf[-1] = 1.0
        new = p["values"][int(np.searchsorted(cdf, u, side="left"))]
    elif law.family == "constant":
        new = float(p["value"])
    else:
        raise LawError(f"cannot resample family {law.family}")
    sigma = config.sigma.copy()
    old = float(sigma[v])
    sigma[v] = new
    cfg = MassConfig(config.graph, sigma, config.law_id + f"+resample({v})",
                     config.seed, config.mu, extras=dict(config.extras))
    return cfg, old, float(new)


# A fixed catalog of laws used by the conservation and reproducibility suites.
LAW_CATALOG = (
    LawSpec("constant", {"value": 1.3}),
    LawSpec("bernoulli", {"p": 0.5, "a": 0.0, "b": 2.0}),
    LawSpec("exponential", {"mean": 1.0}),
    LawSpec("uniform", {"lo": 0.4, "hi": 1.4}),
    LawSpec("shifted-pareto", {"q": 2.0, "mu0": 0.5}),
    LawSpec("shifted-pareto", {"q": 3.5, "mu0": 0.9}),
    LawSpec("coboundary-uniform", {}),
    LawSpec("custom-table", {"values": [0.2, 1.1, 3.0], "probs": [0.5, 0.3, 0.2]}),
)
