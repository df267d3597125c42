"""Vertex positions from label strings, per graph family.

Lattice, torus, and comb labels are coordinate pairs "x,y" (or "x" on Z) and
are drawn as-is.  Gasket labels "x,y" are integer corner coordinates at scale
2^level and are mapped through the standard affine embedding of the gasket's
iterated function system.  Pipe-tree labels "3.17@5" get a radial tree layout
(decorative: depth shrinks toward the rim, loosely Poincare-disk flavored).
"""

from __future__ import annotations

import math

from .specs import PlotSpecError

ROOT3_2 = math.sqrt(3.0) / 2.0


def position(family: str, label: str):
    if family in ("lattice", "torus", "comb"):
        parts = label.split(",")
        x = float(parts[0])
        y = float(parts[1]) if len(parts) > 1 else 0.0
        return x, y
    if family == "gasket":
        x, y = (float(t) for t in label.split(","))
        return x + 0.5 * y, ROOT3_2 * y
    if family == "pipes":
        return _pipe_position(label)
    raise PlotSpecError(f"no layout rule for family {family!r}")


def _pipe_position(label: str):
    if label == "root":
        return 0.0, 0.0
    if label == "ground":
        return 0.0, -0.15
    word_s, pos_s = label.split("@")
    digits = [int(d) for d in word_s.split(".")]
    pos = int(pos_s)
    # angle: nested subdivision of the circle by the word digits
    lo, hi = 0.0, 2.0 * math.pi
    base = max(max(digits) + 1, 2)
    for d in digits:
        width = (hi - lo) / base
        lo, hi = lo + d * width, lo + (d + 1) * width
    theta = 0.5 * (lo + hi)
    # radius: generations approach the rim geometrically (decorative)
    gen = len(digits)
    frac = min(pos / (pos + 5.0), 1.0)
    r = 1.0 - 2.0 ** -(gen - 1 + frac)
    return r * math.cos(theta), r * math.sin(theta)


def comb_degree(label: str) -> int:
    """Interior degree on the infinite comb: 4 on the spine, 2 on teeth."""
    x, y = (int(t) for t in label.split(","))
    return 4 if y == 0 else 2
