"""Graph families: lattice windows, tori, combs, gaskets, and pipe trees.

Infinite graphs are represented as finite windows with an absorbing boundary
mark; boundary vertices never topple and kill the walk.  The lattice window
convention is fixed as interior = B(0,R), boundary = sphere of radius R+1, so
interior vertices carry their full degree.

Vertex labels are structured and deterministic so that sceneries are
reproducible from (seed, label), independent of construction order and stable
under window enlargement.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import sparse

from .rng import SCHEME_SALTS, combine_u64, string_key

DEFAULT_SIZE_CAP = 5_000_000
UNREACHABLE = -1


class GraphSizeError(ValueError):
    """Construction would exceed the configured vertex cap."""


class GraphBuildError(ValueError):
    """Invalid construction parameters."""


# ---------------------------------------------------------------------------
# core container


class Graph:
    """Immutable finite graph with CSR adjacency and structured labels.

    `parts` holds kind-specific integer arrays describing the labels; label
    strings are generated on demand.  Graphs are safe to share across workers
    once built.
    """

    def __init__(self, kind, scheme, indptr, indices, boundary, origin,
                 parts=None, meta=None, custom_labels=None):
        self.kind = kind
        self.scheme = scheme
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int32)
        self.boundary = np.asarray(boundary, dtype=bool)
        self.origin = int(origin)
        self.parts = parts or {}
        self.meta = meta or {}
        self._custom_labels = custom_labels
        self._degree = None
        self._adj = None
        self._keys = None

    # -- basic queries ------------------------------------------------------

    @property
    def n(self) -> int:
        return len(self.indptr) - 1

    @property
    def degree(self) -> np.ndarray:
        if self._degree is None:
            self._degree = np.diff(self.indptr).astype(np.int64)
        return self._degree

    @property
    def interior(self) -> np.ndarray:
        return ~self.boundary

    def neighbors(self, v: int) -> np.ndarray:
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def adjacency(self) -> sparse.csr_matrix:
        """0/1 adjacency as float CSR (cached)."""
        if self._adj is None:
            data = np.ones(len(self.indices), dtype=np.float64)
            self._adj = sparse.csr_matrix(
                (data, self.indices.astype(np.int64), self.indptr), shape=(self.n, self.n))
        return self._adj

    # -- labels ---------------------------------------------------------------

    @property
    def label_keys(self) -> np.ndarray:
        """uint64 per-vertex scenery keys derived from the structured labels."""
        if self._keys is None:
            salt = SCHEME_SALTS[self.scheme]
            if self.scheme == "coords":
                cols = [self.parts["coords"][:, j] for j in range(self.parts["coords"].shape[1])]
                self._keys = combine_u64(salt, np.int64(len(cols)), *cols)
            elif self.scheme == "tree":
                self._keys = combine_u64(salt, self.parts["depth"], self.parts["path"])
            elif self.scheme == "pipes":
                self._keys = combine_u64(salt, self.parts["gen"], self.parts["word"], self.parts["pos"])
            elif self.scheme == "ray":
                self._keys = combine_u64(salt, self.parts["gadget"], self.parts["gen"],
                                         self.parts["word"], self.parts["pos"])
            else:
                self._keys = np.array([string_key(self.label(v)) for v in range(self.n)],
                                      dtype=np.uint64)
        return self._keys

    def label(self, v: int) -> str:
        if self.scheme == "coords":
            return ",".join(str(c) for c in self.parts["coords"][v])
        if self.scheme == "tree":
            d = int(self.parts["depth"][v])
            if d == 0:
                return "root"
            path = int(self.parts["path"][v])
            digits = []
            for lvl in range(d - 1, -1, -1):
                b = (lvl + 2) ** 3
                digits.append(path % b)
                path //= b
            return ".".join(str(x) for x in reversed(digits))
        if self.scheme == "pipes":
            return _pipe_label(self.parts["gen"][v], self.parts["word"][v],
                               self.parts["pos"][v], self.meta["B"])
        if self.scheme == "ray":
            k = int(self.parts["gadget"][v])
            if k == 0:
                return f"r{int(self.parts['pos'][v])}"
            inner = _pipe_label(self.parts["gen"][v], self.parts["word"][v],
                                self.parts["pos"][v], self.meta["B"])
            return f"g{k}:{inner}"
        return self._custom_labels[v]

    def labels(self):
        return [self.label(v) for v in range(self.n)]

    # -- validation -----------------------------------------------------------

    def validate(self):
        """Check adjacency symmetry, degree consistency, and interior connectivity."""
        n = self.n
        if self.indptr[0] != 0 or self.indptr[-1] != len(self.indices):
            raise AssertionError("malformed indptr")
        rows = np.repeat(np.arange(n, dtype=np.int64), np.diff(self.indptr))
        cols = self.indices.astype(np.int64)
        if np.any(rows == cols):
            raise AssertionError("self-loop present")
        order = np.lexsort((cols, rows))
        pr = np.stack([rows[order], cols[order]], axis=1)
        if len(pr) > 1 and np.any(np.all(pr[1:] == pr[:-1], axis=1)):
            raise AssertionError("duplicate edge")
        # symmetry: multiset of (u,v) equals multiset of (v,u)
        fwd = np.lexsort((cols, rows))
        rev = np.lexsort((rows, cols))
        if not (np.array_equal(rows[fwd], cols[rev]) and np.array_equal(cols[fwd], rows[rev])):
            raise AssertionError("adjacency not symmetric")
        deg = np.diff(self.indptr)
        if not np.array_equal(deg, self.degree):
            raise AssertionError("degree mismatch")
        interior = self.interior
        if interior.any():
            if not interior[self.origin]:
                raise AssertionError("origin is boundary-marked")
            seen = np.zeros(n, dtype=bool)
            seen[self.origin] = True
            frontier = np.array([self.origin], dtype=np.int64)
            while len(frontier):
                nxt = _gather_neighbors(self, frontier)
                nxt = nxt[interior[nxt] & ~seen[nxt]]
                nxt = np.unique(nxt)
                seen[nxt] = True
                frontier = nxt
            if not np.all(seen[interior]):
                raise AssertionError("interior not connected from origin")
        return True

    # -- text round trip --------------------------------------------------------

    def to_text(self) -> str:
        lines = ["sandlab-graph v1",
                 f"kind {self.kind}",
                 f"scheme {self.scheme}",
                 f"n {self.n}",
                 f"origin {self.origin}",
                 "meta " + json.dumps(self.meta, sort_keys=True, separators=(",", ":"))]
        for v in range(self.n):
            nbrs = " ".join(str(w) for w in self.neighbors(v))
            lines.append(f"v {v} {self.label(v)} {self.degree[v]} "
                         f"{1 if self.boundary[v] else 0} {nbrs}".rstrip())
        return "\n".join(lines) + "\n"

    def export(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_text())

    @classmethod
    def from_text(cls, text: str) -> "Graph":
        lines = text.strip().split("\n")
        if lines[0] != "sandlab-graph v1":
            raise GraphBuildError("unknown graph format header")
        kind = lines[1].split(" ", 1)[1]
        scheme = lines[2].split(" ", 1)[1]
        n = int(lines[3].split()[1])
        origin = int(lines[4].split()[1])
        meta = json.loads(lines[5].split(" ", 1)[1])
        labels, boundary, adj = [], np.zeros(n, dtype=bool), []
        for ln in lines[6:]:
            tok = ln.split()
            v = int(tok[1])
            labels.append(tok[2])
            boundary[v] = tok[4] == "1"
            adj.append(np.array([int(x) for x in tok[5:]], dtype=np.int32))
        indptr = np.zeros(n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(a) for a in adj])
        indices = np.concatenate(adj) if n else np.zeros(0, dtype=np.int32)
        parts, custom = _parse_labels(scheme, labels, meta)
        return cls(kind, scheme, indptr, indices, boundary, origin,
                   parts=parts, meta=meta, custom_labels=custom)

    @classmethod
    def load(cls, path) -> "Graph":
        with open(path) as fh:
            return cls.from_text(fh.read())

    @classmethod
    def from_edges(cls, n, edges, origin=0, boundary=None, labels=None, kind="custom"):
        """Build a custom graph from an undirected edge list."""
        edges = [(int(u), int(v)) for u, v in edges]
        for u, v in edges:
            if u == v:
                raise GraphBuildError("self-loop in edge list")
        if len(set(tuple(sorted(e)) for e in edges)) != len(edges):
            raise GraphBuildError("duplicate edge in edge list")
        u = np.array([e[0] for e in edges], dtype=np.int64)
        v = np.array([e[1] for e in edges], dtype=np.int64)
        indptr, indices = _csr_from_edges(n, u, v)
        bnd = np.zeros(n, dtype=bool)
        if boundary is not None:
            bnd[list(boundary)] = True
        custom = labels if labels is not None else [f"v{i}" for i in range(n)]
        return cls(kind, "custom", indptr, indices, bnd, origin, custom_labels=list(custom))


def _pipe_label(gen, word, pos, B):
    gen, word, pos = int(gen), int(word), int(pos)
    if gen == 0:
        return "root"
    if gen < 0:
        return "ground"
    digits = []
    for _ in range(gen):
        digits.append(word % B)
        word //= B
    return ".".join(str(d) for d in reversed(digits)) + f"@{pos}"


def _parse_pipe_label(lab: str, B: int):
    if lab == "root":
        return 0, 0, 0
    if lab == "ground":
        return -1, 0, 0
    word_s, pos_s = lab.split("@")
    digits = [int(x) for x in word_s.split(".")]
    word = 0
    for d in digits:
        word = word * B + d
    return len(digits), word, int(pos_s)


def _parse_labels(scheme, labels, meta):
    n = len(labels)
    if scheme == "coords":
        coords = np.array([[int(c) for c in lab.split(",")] for lab in labels], dtype=np.int64)
        return {"coords": coords}, None
    if scheme == "tree":
        depth = np.zeros(n, dtype=np.int64)
        path = np.zeros(n, dtype=np.int64)
        for v, lab in enumerate(labels):
            if lab == "root":
                continue
            digits = [int(x) for x in lab.split(".")]
            depth[v] = len(digits)
            p = 0
            for lvl, d in enumerate(digits):
                p = p * ((lvl + 2) ** 3) + d
            path[v] = p
        return {"depth": depth, "path": path}, None
    if scheme == "pipes":
        gen = np.zeros(n, dtype=np.int64)
        word = np.zeros(n, dtype=np.int64)
        pos = np.zeros(n, dtype=np.int64)
        for v, lab in enumerate(labels):
            gen[v], word[v], pos[v] = _parse_pipe_label(lab, meta["B"])
        return {"gen": gen, "word": word, "pos": pos}, None
    if scheme == "ray":
        gadget = np.zeros(n, dtype=np.int64)
        gen = np.zeros(n, dtype=np.int64)
        word = np.zeros(n, dtype=np.int64)
        pos = np.zeros(n, dtype=np.int64)
        for v, lab in enumerate(labels):
            if lab.startswith("r") and ":" not in lab:
                pos[v] = int(lab[1:])
            else:
                head, inner = lab.split(":", 1)
                gadget[v] = int(head[1:])
                gen[v], word[v], pos[v] = _parse_pipe_label(inner, meta["B"])
        return {"gadget": gadget, "gen": gen, "word": word, "pos": pos}, None
    return {}, list(labels)


def _csr_from_edges(n, u, v):
    """Symmetric CSR from one-directional edge arrays, neighbor lists sorted."""
    rows = np.concatenate([u, v])
    cols = np.concatenate([v, u])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    counts = np.bincount(rows, minlength=n)
    indptr[1:] = np.cumsum(counts)
    return indptr, cols.astype(np.int32)


def _gather_neighbors(graph, frontier):
    """All neighbors of the frontier vertices (with multiplicity)."""
    starts = graph.indptr[frontier]
    counts = graph.indptr[frontier + 1] - starts
    total = int(counts.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    offs = np.repeat(starts - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts)
    return graph.indices[np.arange(total, dtype=np.int64) + offs].astype(np.int64)


# ---------------------------------------------------------------------------
# metric queries


def ball(graph: Graph, center: int, radius: int) -> np.ndarray:
    """Exact metric ball B(center, radius) as a sorted vertex array (BFS)."""
    if not (0 <= center < graph.n):
        raise IndexError("center out of range")
    dist = np.full(graph.n, -1, dtype=np.int64)
    dist[center] = 0
    frontier = np.array([center], dtype=np.int64)
    for d in range(1, radius + 1):
        nxt = _gather_neighbors(graph, frontier)
        nxt = np.unique(nxt[dist[nxt] < 0])
        if len(nxt) == 0:
            break
        dist[nxt] = d
        frontier = nxt
    return np.nonzero(dist >= 0)[0]


def graph_distance(graph: Graph, a: int, b: int) -> int:
    """BFS distance; UNREACHABLE (-1) for disconnected pairs."""
    if not (0 <= a < graph.n and 0 <= b < graph.n):
        raise IndexError("vertex out of range")
    if a == b:
        return 0
    seen = np.zeros(graph.n, dtype=bool)
    seen[a] = True
    frontier = np.array([a], dtype=np.int64)
    d = 0
    while len(frontier):
        d += 1
        nxt = _gather_neighbors(graph, frontier)
        nxt = np.unique(nxt[~seen[nxt]])
        if len(nxt) == 0:
            return UNREACHABLE
        if seen[b] or b in set(nxt.tolist()):
            return d
        seen[nxt] = True
        frontier = nxt
    return UNREACHABLE


# ---------------------------------------------------------------------------
# lattice windows and tori


def build_lattice_window(dim: int, radius: int, periodic: bool,
                         size_cap: int = DEFAULT_SIZE_CAP) -> Graph:
    """Finite window of Z^d, or the torus (Z/(2 radius+1))^d when periodic.

    Window rule: vertex set B(0, radius+1) in the l1 metric, boundary = sphere
    of radius radius+1, so every interior vertex has full degree 2*dim.
    """
    if dim < 1:
        raise GraphBuildError("dim must be >= 1")
    if radius < 1:
        raise GraphBuildError("radius must be >= 1 (radius=0 leaves no interior)")
    if periodic:
        side = 2 * radius + 1
        n = side ** dim
        if n > size_cap:
            raise GraphSizeError(f"torus has {n} vertices > cap {size_cap}")
        grids = np.meshgrid(*[np.arange(side)] * dim, indexing="ij")
        coords = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64) - radius
        strides = np.array([side ** (dim - 1 - a) for a in range(dim)], dtype=np.int64)
        idx = np.arange(n, dtype=np.int64)
        us, vs = [], []
        for a in range(dim):
            digit = (idx // strides[a]) % side
            nbr = idx + strides[a] * np.where(digit == side - 1, -(side - 1), 1)
            us.append(idx)
            vs.append(nbr)
        u = np.concatenate(us)
        v = np.concatenate(vs)
        # each undirected edge appears once; wrap edges may come out reversed
        uu = np.minimum(u, v)
        vv = np.maximum(u, v)
        pairs = np.unique(np.stack([uu, vv], axis=1), axis=0)
        indptr, indices = _csr_from_edges(n, pairs[:, 0], pairs[:, 1])
        boundary = np.zeros(n, dtype=bool)
        origin = int(np.nonzero(np.all(coords == 0, axis=1))[0][0])
        return Graph("torus", "coords", indptr, indices, boundary, origin,
                     parts={"coords": coords},
                     meta={"dim": dim, "radius": radius, "periodic": True, "side": side})

    R = radius + 1
    side = 2 * R + 1
    if side ** dim > 50_000_000:
        raise GraphSizeError("bounding box too large")
    grids = np.meshgrid(*[np.arange(-R, R + 1)] * dim, indexing="ij")
    box = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
    norm = np.abs(box).sum(axis=1)
    mask = norm <= R
    coords = box[mask]
    n = len(coords)
    if n > size_cap:
        raise GraphSizeError(f"window has {n} vertices > cap {size_cap}")
    lookup = np.full(side ** dim, -1, dtype=np.int64)
    strides = np.array([side ** (dim - 1 - a) for a in range(dim)], dtype=np.int64)
    flat = (coords + R) @ strides
    lookup[flat] = np.arange(n)
    us, vs = [], []
    for a in range(dim):
        nb = coords.copy()
        nb[:, a] += 1
        ok = nb[:, a] <= R
        tgt = np.full(n, -1, dtype=np.int64)
        tgt[ok] = lookup[(nb[ok] + R) @ strides]
        sel = tgt >= 0
        us.append(np.nonzero(sel)[0])
        vs.append(tgt[sel])
    indptr, indices = _csr_from_edges(n, np.concatenate(us), np.concatenate(vs))
    boundary = np.abs(coords).sum(axis=1) == R
    origin = int(np.nonzero(np.all(coords == 0, axis=1))[0][0])
    return Graph("lattice", "coords", indptr, indices, boundary, origin,
                 parts={"coords": coords},
                 meta={"dim": dim, "radius": radius, "periodic": False})


def build_comb_window(half_width: int, tooth_height: int,
                      size_cap: int = DEFAULT_SIZE_CAP) -> Graph:
    """Window of the comb lattice: spine along y=0, two-sided teeth.

    Vertex set {(x,y): |x| <= half_width+1, |y| <= tooth_height+1}; spine edges
    (x,0)~(x+-1,0), tooth edges (x,y)~(x,y+-1).  Extreme columns and tooth tips
    are the absorbing boundary, so interior spine vertices have degree 4 and
    interior tooth vertices degree 2 as on the infinite comb.
    """
    if half_width < 1 or tooth_height < 1:
        raise GraphBuildError("half_width and tooth_height must be >= 1")
    W, H = half_width + 1, tooth_height + 1
    xs = np.arange(-W, W + 1)
    ys = np.arange(-H, H + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    coords = np.stack([gx.ravel(), gy.ravel()], axis=1).astype(np.int64)
    n = len(coords)
    if n > size_cap:
        raise GraphSizeError(f"comb window has {n} vertices > cap {size_cap}")
    ny = len(ys)
    idx = np.arange(n).reshape(len(xs), ny)
    us, vs = [], []
    # vertical tooth edges
    us.append(idx[:, :-1].ravel())
    vs.append(idx[:, 1:].ravel())
    # horizontal spine edges at y == 0
    y0 = H  # index of y=0 within ys
    us.append(idx[:-1, y0])
    vs.append(idx[1:, y0])
    indptr, indices = _csr_from_edges(n, np.concatenate(us), np.concatenate(vs))
    boundary = (np.abs(coords[:, 0]) == W) | (np.abs(coords[:, 1]) == H)
    origin = int(np.nonzero((coords[:, 0] == 0) & (coords[:, 1] == 0))[0][0])
    return Graph("comb", "coords", indptr, indices, boundary, origin,
                 parts={"coords": coords},
                 meta={"half_width": half_width, "tooth_height": tooth_height})


def build_gasket(level: int) -> Graph:
    """Finite Sierpinski-gasket graph; the three outer corners are boundary.

    Vertex count (3^(level+1)+3)/2.  The origin is the midpoint of the bottom
    outer edge (a degree-4 vertex) so that kernel diagnostics start away from
    the absorbing corners; at level 0 the origin falls back to a corner.
    """
    if level < 0:
        raise GraphBuildError("level must be >= 0")
    coords = np.array([[0, 0], [1, 0], [0, 1]], dtype=np.int64)
    edges = np.array([[0, 1], [0, 2], [1, 2]], dtype=np.int64)
    for k in range(level):
        s = 1 << k
        shifted = [coords, coords + [s, 0], coords + [0, s]]
        allc = np.concatenate(shifted)
        alle = np.concatenate([edges + i * len(coords) for i in range(3)])
        uniq, inv = np.unique(allc, axis=0, return_inverse=True)
        e = inv[alle]
        e = np.unique(np.sort(e, axis=1), axis=0)
        coords, edges = uniq, e
    n = len(coords)
    indptr, indices = _csr_from_edges(n, edges[:, 0], edges[:, 1])
    s = 1 << level
    boundary = np.zeros(n, dtype=bool)
    for corner in ([0, 0], [s, 0], [0, s]):
        boundary[np.nonzero(np.all(coords == corner, axis=1))[0][0]] = True
    if level >= 1:
        origin = int(np.nonzero((coords[:, 0] == s // 2) & (coords[:, 1] == 0))[0][0])
    else:
        origin = 0
    return Graph("gasket", "coords", indptr, indices, boundary, origin,
                 parts={"coords": coords}, meta={"level": level})


def cubed_tree_size(depth: int) -> int:
    total, width = 1, 1
    for lvl in range(depth):
        width *= (lvl + 2) ** 3
        total += width
    return total


def build_cubed_tree(depth: int, size_cap: int = DEFAULT_SIZE_CAP) -> Graph:
    """Spherically symmetric tree with b_n = (n+2)^3 children at depth n.

    The deepest generation is the absorbing boundary.  Sizes explode: depth 4
    has ~1.7e6 vertices and depth 5 exceeds any sane cap.
    """
    if depth < 1:
        raise GraphBuildError("depth must be >= 1")
    if depth > 4:
        warnings.warn(f"cubed tree of depth {depth} is enormous", stacklevel=2)
    total = cubed_tree_size(depth)
    if total > size_cap:
        raise GraphSizeError(f"cubed tree depth {depth} has {total} vertices > cap {size_cap}")
    depth_part = [np.zeros(1, dtype=np.int64)]
    path_part = [np.zeros(1, dtype=np.int64)]
    parents = []
    level_ids = np.zeros(1, dtype=np.int64)
    offset = 1
    for lvl in range(depth):
        b = (lvl + 2) ** 3
        width = len(level_ids) * b
        child_rank = np.tile(np.arange(b, dtype=np.int64), len(level_ids))
        parent = np.repeat(level_ids, b)
        path = np.repeat(path_part[-1], b) * b + child_rank
        ids = np.arange(offset, offset + width, dtype=np.int64)
        parents.append(np.stack([parent, ids], axis=1))
        depth_part.append(np.full(width, lvl + 1, dtype=np.int64))
        path_part.append(path)
        level_ids = ids
        offset += width
    edges = np.concatenate(parents)
    indptr, indices = _csr_from_edges(total, edges[:, 0], edges[:, 1])
    depths = np.concatenate(depth_part)
    paths = np.concatenate(path_part)
    boundary = depths == depth
    return Graph("cubed_tree", "tree", indptr, indices, boundary, 0,
                 parts={"depth": depths, "path": paths}, meta={"depth": depth})


# ---------------------------------------------------------------------------
# pipe-tree parameters


def _integer_root(x: int, k: int) -> int:
    """floor(x**(1/k)) for nonnegative int x, exact."""
    if x < 0 or k < 1:
        raise ValueError("bad integer root")
    if x < 2 or k == 1:
        return x
    r = 1 << -(-x.bit_length() // k)
    while True:
        y = ((k - 1) * r + x // r ** (k - 1)) // k
        if y >= r:
            break
        r = y
    while r ** k > x:
        r -= 1
    while (r + 1) ** k <= x:
        r += 1
    return r


def _as_fraction(alpha) -> Fraction:
    if isinstance(alpha, Fraction):
        return alpha
    if isinstance(alpha, tuple):
        return Fraction(alpha[0], alpha[1])
    if isinstance(alpha, str):
        return Fraction(alpha)
    # floats are snapped to the nearest simple rational (2/3, 0.7, ...)
    return Fraction(alpha).limit_denominator(10 ** 6)


@dataclass(frozen=True)
class ParamRejection:
    """Inadmissible (B, alpha): names the first violated inequality."""
    inequality: str
    detail: str

    @property
    def ok(self):
        return False


@dataclass(frozen=True)
class PipeTreeParams:
    """Admissible pipe-tree parameters with exact pipe lengths L_j = floor(B^(alpha j))."""
    B: int
    alpha: Fraction
    depth: int
    pipe_lengths: tuple

    @property
    def ok(self):
        return True

    @property
    def lam(self) -> float:
        a, b = self.alpha.numerator, self.alpha.denominator
        return math.exp((2 * a - b) / b * math.log(self.B)) / 4.0

    def pipe_length(self, j: int) -> int:
        if 1 <= j <= self.depth:
            return self.pipe_lengths[j - 1]
        cache = self._length_cache()
        if j not in cache:
            a, b = self.alpha.numerator, self.alpha.denominator
            cache[j] = _integer_root(self.B ** (a * j), b)
        return cache[j]

    def _length_cache(self) -> dict:
        # schedule generation probes depths in the thousands; memoize
        cache = getattr(self, "_lengths", None)
        if cache is None:
            cache = {}
            object.__setattr__(self, "_lengths", cache)
        return cache

    def radius(self, m: int) -> int:
        """R_m = sum_{j<=m} L_j (graph distance from gadget root to depth-m leaves)."""
        return sum(self.pipe_length(j) for j in range(1, m + 1))

    def gadget_size(self, m: int) -> int:
        """N_m = sum_{j<=m} B^j L_j (non-root vertex count of H(m))."""
        return sum(self.B ** j * self.pipe_length(j) for j in range(1, m + 1))

    @property
    def C_R(self) -> float:
        a, b = self.alpha.numerator, self.alpha.denominator
        return 2.0 / (1.0 - self.B ** (-a / b))

    @property
    def delta(self) -> float:
        a, b = self.alpha.numerator, self.alpha.denominator
        return math.log(self.lam) / ((a / b) * math.log(self.B))


def validate_pipe_params(B: int, alpha, depth: int = 2):
    """Check the four admissibility inequalities; return params or a rejection.

    The inequalities are evaluated in exact integer arithmetic:
      B^alpha >= 4,  2 B^alpha <= B-1,  2 B^(1-2 alpha) < 1,  lambda = B^(2 alpha-1)/4 > 1.
    """
    alpha = _as_fraction(alpha)
    if B < 2:
        return ParamRejection("B-range", f"B={B} must be an integer >= 2")
    if not (Fraction(1, 2) < alpha < 1):
        return ParamRejection("alpha-range", f"alpha={alpha} must lie in (1/2, 1)")
    a, b = alpha.numerator, alpha.denominator
    if B ** a < 4 ** b:
        return ParamRejection("B^alpha >= 4", f"B^alpha = {float(B) ** (a / b):.4g} < 4")
    if 2 ** b * B ** a > (B - 1) ** b:
        return ParamRejection("2 B^alpha <= B-1",
                              f"2 B^alpha = {2 * float(B) ** (a / b):.4g} > {B - 1}")
    if 2 ** b >= B ** (2 * a - b):
        return ParamRejection("2 B^(1-2alpha) < 1",
                              f"2 B^(1-2alpha) = {2 * float(B) ** (1 - 2 * a / b):.4g} >= 1")
    if B ** (2 * a - b) <= 4 ** b:
        lam = float(B) ** (2 * a / b - 1) / 4
        return ParamRejection("lambda > 1", f"lambda = {lam:.4g} <= 1")
    lengths = tuple(_integer_root(B ** (a * j), b) for j in range(1, depth + 1))
    return PipeTreeParams(B=B, alpha=alpha, depth=depth, pipe_lengths=lengths)


def pipe_tree_size(params: PipeTreeParams, depth=None) -> int:
    depth = params.depth if depth is None else depth
    return 1 + sum(params.B ** j * params.pipe_length(j) for j in range(1, depth + 1))


def build_pipe_tree(params: PipeTreeParams, depth=None,
                    size_cap: int = DEFAULT_SIZE_CAP) -> Graph:
    """Rooted B-ary tree with generation-j edges replaced by pipes of length L_j.

    Max degree B+1; the far endpoints of the deepest pipes are absorbing.
    Labels are (generation word)@(position in pipe), positions 1..L_j.
    """
    if not isinstance(params, PipeTreeParams):
        raise GraphBuildError(f"invalid params: {params}")
    depth = params.depth if depth is None else depth
    B = params.B
    total = pipe_tree_size(params, depth)
    if total > size_cap:
        raise GraphSizeError(f"pipe tree has {total} vertices > cap {size_cap}")
    gen = [np.zeros(1, dtype=np.int16)]
    word = [np.zeros(1, dtype=np.int64)]
    pos = [np.zeros(1, dtype=np.int32)]
    us, vs = [], []
    offset = 1
    prev_end_ids = np.zeros(1, dtype=np.int64)  # root
    prev_words = np.zeros(1, dtype=np.int64)
    for j in range(1, depth + 1):
        L = params.pipe_length(j)
        n_pipes = len(prev_end_ids) * B
        child = np.tile(np.arange(B, dtype=np.int64), len(prev_end_ids))
        words_j = np.repeat(prev_words, B) * B + child
        parent_ids = np.repeat(prev_end_ids, B)
        base = offset + np.arange(n_pipes, dtype=np.int64) * L
        # pipe chain edges
        us.append(parent_ids)
        vs.append(base)  # parent endpoint -> position 1
        if L > 1:
            inner = base[:, None] + np.arange(L - 1, dtype=np.int64)[None, :]
            us.append(inner.ravel())
            vs.append(inner.ravel() + 1)
        gen.append(np.full(n_pipes * L, j, dtype=np.int16))
        word.append(np.repeat(words_j, L))
        pos.append(np.tile(np.arange(1, L + 1, dtype=np.int32), n_pipes))
        prev_end_ids = base + (L - 1)
        prev_words = words_j
        offset += n_pipes * L
    u = np.concatenate(us)
    v = np.concatenate(vs)
    indptr, indices = _csr_from_edges(total, u, v)
    gen = np.concatenate(gen).astype(np.int64)
    word = np.concatenate(word)
    pos = np.concatenate(pos).astype(np.int64)
    boundary = (gen == depth) & (pos == params.pipe_length(depth))
    return Graph("pipe_tree", "pipes", indptr, indices, boundary, 0,
                 parts={"gen": gen, "word": word, "pos": pos},
                 meta={"B": B, "alpha": str(params.alpha), "depth": depth,
                       "lengths": [params.pipe_length(j) for j in range(1, depth + 1)]})


def build_comb_gadget(params: PipeTreeParams, depth: int, word,
                      include_root_edge: bool = False,
                      size_cap: int = DEFAULT_SIZE_CAP) -> Graph:
    """Comb subnetwork D_{w,n}: the trunk to the terminal pipe plus all sibling
    pipes at each trunk branching vertex; far pipe endpoints are absorbing.

    Labels coincide with the pipe-tree labels of the same logical vertices, so
    a scenery sampled on the comb reproduces the pipe-tree scenery exactly.
    With `include_root_edge` a unit-resistance boundary pendant is attached at
    the root (the comb as embedded in a larger network).
    """
    if not isinstance(params, PipeTreeParams):
        raise GraphBuildError(f"invalid params: {params}")
    word = tuple(int(w) for w in word)
    if len(word) != depth or any(not (0 <= w < params.B) for w in word):
        raise GraphBuildError(f"word {word} invalid for depth {depth}, B={params.B}")
    B = params.B
    lengths = [params.pipe_length(j) for j in range(1, depth + 1)]
    total = 1 + B * sum(lengths) + (1 if include_root_edge else 0)
    if total > size_cap:
        raise GraphSizeError(f"comb has {total} vertices > cap {size_cap}")
    gen = [np.zeros(1, dtype=np.int64)]
    wrd = [np.zeros(1, dtype=np.int64)]
    pos = [np.zeros(1, dtype=np.int64)]
    us, vs = [], []
    bflags = [np.zeros(1, dtype=bool)]
    offset = 1
    trunk_prefix = 0
    parent_trunk_id = 0  # b_0 = root
    b_ids = [0]
    level_layout = []
    for j in range(1, depth + 1):
        L = lengths[j - 1]
        child = np.arange(B, dtype=np.int64)
        words_j = trunk_prefix * B + child
        base = offset + child * L
        us.append(np.full(B, parent_trunk_id, dtype=np.int64))
        vs.append(base)
        if L > 1:
            inner = base[:, None] + np.arange(L - 1, dtype=np.int64)[None, :]
            us.append(inner.ravel())
            vs.append(inner.ravel() + 1)
        gen.append(np.full(B * L, j, dtype=np.int64))
        wrd.append(np.repeat(words_j, L))
        pos.append(np.tile(np.arange(1, L + 1, dtype=np.int64), B))
        endpoint_is_boundary = np.ones(B, dtype=bool)
        if j < depth:
            endpoint_is_boundary[word[j - 1]] = False  # trunk continues at b_j
        bf = np.zeros(B * L, dtype=bool)
        bf[(child * L + (L - 1))[endpoint_is_boundary]] = True
        bflags.append(bf)
        level_layout.append({"offset": int(offset), "length": int(L)})
        if j < depth:
            parent_trunk_id = int(base[word[j - 1]] + L - 1)
            b_ids.append(parent_trunk_id)
        trunk_prefix = trunk_prefix * B + word[j - 1] if j < depth else trunk_prefix
        offset += B * L
    if include_root_edge:
        gen.append(np.array([-1], dtype=np.int64))
        wrd.append(np.zeros(1, dtype=np.int64))
        pos.append(np.zeros(1, dtype=np.int64))
        bflags.append(np.ones(1, dtype=bool))
        us.append(np.array([0], dtype=np.int64))
        vs.append(np.array([offset], dtype=np.int64))
        offset += 1
    u = np.concatenate(us)
    v = np.concatenate(vs)
    indptr, indices = _csr_from_edges(offset, u, v)
    parts = {"gen": np.concatenate(gen), "word": np.concatenate(wrd),
             "pos": np.concatenate(pos)}
    boundary = np.concatenate(bflags)
    meta = {"B": B, "alpha": str(params.alpha), "depth": depth, "word": list(word),
            "lengths": lengths, "include_root_edge": include_root_edge,
            "b_ids": [int(x) for x in b_ids],
            "levels": level_layout}
    return Graph("comb_gadget", "pipes", indptr, indices, boundary, 0,
                 parts=parts, meta=meta)


# ---------------------------------------------------------------------------
# recurrent gadget graph


@dataclass
class GadgetSchedule:
    """Gadget depths and attachment positions for the recurrent construction.

    Honest schedules (from gadgets.generate_schedule) satisfy the separation,
    volume, and divergence conditions exactly, with R_m and N_m as exact
    integers; such schedules are astronomically large.  Demo schedules satisfy
    the structural conditions (separation, volume, radial disjointness) at
    buildable sizes; `verify` reports each condition.
    """
    B: int
    alpha: Fraction
    d_f: float
    rho: float
    delta: float
    c_loc: float
    depths: list
    positions: list        # s_k
    radii: list            # R_{m_k}, exact ints
    sizes: list            # N_{m_k}, exact ints
    meta: dict = field(default_factory=dict)

    def verify(self) -> dict:
        """Per-condition report; s_0 = R_{m_0} = 0 conventions for k = 1."""
        rep = {"separation": True, "volume": True, "divergence": True,
               "disjoint": True, "monotone_depths": True, "details": []}
        prev_s, prev_R = 0, 0
        vol_acc = 0
        for k, (m, s, R, N) in enumerate(zip(self.depths, self.positions,
                                             self.radii, self.sizes), start=1):
            if k > 1 and m <= self.depths[k - 2]:
                rep["monotone_depths"] = False
            if not s > prev_s + prev_R:
                rep["separation"] = False
            if not vol_acc <= s ** self.d_f:
                rep["volume"] = False
            div_ok = self.c_loc * math.exp(self.delta * math.log(R)) >= (s + 1) ** (self.d_f + 1) * k
            if not div_ok:
                rep["divergence"] = False
            rep["details"].append({"k": k, "m": m, "s": s, "div_ok": div_ok})
            vol_acc += N
            prev_s, prev_R = s, R
        for k in range(len(self.positions) - 1):
            if not self.positions[k] + self.radii[k] < self.positions[k + 1]:
                rep["disjoint"] = False
        rep["ok"] = all(rep[key] for key in
                        ("separation", "volume", "divergence", "disjoint", "monotone_depths"))
        return rep


def build_recurrent_gadget_graph(params: PipeTreeParams, schedule: GadgetSchedule,
                                 K_gadgets: int, ray_length: int,
                                 size_cap: int = DEFAULT_SIZE_CAP) -> Graph:
    """Ray r_0..r_L with pipe-tree gadgets H(m_k) glued at r_{s_k}, k <= K.

    The ray end is marked absorbing (truncation recorded in meta); gadget
    leaves are genuine degree-1 vertices.  Max degree is B+2.  Requires the
    structural schedule conditions; the divergence condition is recorded but
    not required (fully valid schedules exceed any buildable size).
    """
    if K_gadgets < 1 or K_gadgets > len(schedule.depths):
        raise GraphBuildError("K_gadgets out of range for schedule")
    depths = schedule.depths[:K_gadgets]
    positions = schedule.positions[:K_gadgets]
    prev_s, prev_R = 0, 0
    for m, s in zip(depths, positions):
        R = params.radius(m)
        if not s > prev_s + prev_R:
            raise GraphBuildError("schedule violation: separation fails")
        prev_s, prev_R = s, R
    if ray_length < positions[-1] + params.radius(depths[-1]):
        raise GraphBuildError("ray_length must be >= s_K + R_{m_K}")
    total = ray_length + 1 + sum(params.gadget_size(m) for m in depths)
    if total > size_cap:
        raise GraphSizeError(f"gadget graph has {total} vertices > cap {size_cap}")

    gadget = [np.zeros(ray_length + 1, dtype=np.int64)]
    gen = [np.zeros(ray_length + 1, dtype=np.int64)]
    word = [np.zeros(ray_length + 1, dtype=np.int64)]
    pos = [np.arange(ray_length + 1, dtype=np.int64)]
    us = [np.arange(ray_length, dtype=np.int64)]
    vs = [np.arange(1, ray_length + 1, dtype=np.int64)]
    offset = ray_length + 1
    B = params.B
    for k, (m, s) in enumerate(zip(depths, positions), start=1):
        prev_end_ids = np.array([s], dtype=np.int64)  # gadget root is the ray vertex
        prev_words = np.zeros(1, dtype=np.int64)
        for j in range(1, m + 1):
            L = params.pipe_length(j)
            n_pipes = len(prev_end_ids) * B
            child = np.tile(np.arange(B, dtype=np.int64), len(prev_end_ids))
            words_j = np.repeat(prev_words, B) * B + child
            parent_ids = np.repeat(prev_end_ids, B)
            base = offset + np.arange(n_pipes, dtype=np.int64) * L
            us.append(parent_ids)
            vs.append(base)
            if L > 1:
                inner = base[:, None] + np.arange(L - 1, dtype=np.int64)[None, :]
                us.append(inner.ravel())
                vs.append(inner.ravel() + 1)
            gadget.append(np.full(n_pipes * L, k, dtype=np.int64))
            gen.append(np.full(n_pipes * L, j, dtype=np.int64))
            word.append(np.repeat(words_j, L))
            pos.append(np.tile(np.arange(1, L + 1, dtype=np.int64), n_pipes))
            prev_end_ids = base + (L - 1)
            prev_words = words_j
            offset += n_pipes * L
    indptr, indices = _csr_from_edges(offset, np.concatenate(us), np.concatenate(vs))
    boundary = np.zeros(offset, dtype=bool)
    boundary[ray_length] = True
    parts = {"gadget": np.concatenate(gadget), "gen": np.concatenate(gen),
             "word": np.concatenate(word), "pos": np.concatenate(pos)}
    meta = {"B": B, "alpha": str(params.alpha), "depths": list(depths),
            "positions": [int(s) for s in positions], "ray_length": ray_length,
            "schedule_report": schedule.verify()}
    return Graph("gadget_ray", "ray", indptr, indices, boundary, 0,
                 parts=parts, meta=meta)
