"""Graph constructors: counts, degrees, boundaries, metric queries, round trip."""

import numpy as np
import pytest

from sandlab.graphs import (GraphBuildError, GraphSizeError, ParamRejection,
                            UNREACHABLE, Graph, ball, build_comb_gadget,
                            build_comb_window, build_cubed_tree, build_gasket,
                            build_lattice_window, build_pipe_tree,
                            build_recurrent_gadget_graph, cubed_tree_size,
                            graph_distance, validate_pipe_params)
from sandlab.gadgets import demo_schedule

from _helpers import random_connected_graph


# -- lattice windows ---------------------------------------------------------

def test_z_window_interior_path():
    # rule: window = B(0, R+1), boundary = sphere of radius R+1
    g = build_lattice_window(1, 1, False)
    assert g.n == 5
    labels = sorted(g.label(v) for v in range(g.n) if g.boundary[v])
    assert labels == ["-2", "2"]
    assert all(g.degree[v] == 2 for v in range(g.n) if not g.boundary[v])
    g.validate()


def test_z2_window_counts():
    g = build_lattice_window(2, 1, False)
    # independent enumeration: lattice points with |x|_1 <= 2
    pts = [(x, y) for x in range(-2, 3) for y in range(-2, 3) if abs(x) + abs(y) <= 2]
    assert g.n == len(pts) == 13
    interior_deg = g.degree[g.interior]
    assert np.all(interior_deg == 4)
    g.validate()


def test_torus_small():
    g = build_lattice_window(1, 1, True)
    assert g.n == 3 and np.all(g.degree == 2) and not g.boundary.any()
    g.validate()
    g2 = build_lattice_window(2, 2, True)
    assert g2.n == 25 and np.all(g2.degree == 4)
    g2.validate()
    g3 = build_lattice_window(3, 1, True)
    assert g3.n == 27 and np.all(g3.degree == 6)
    g3.validate()


def test_lattice_rejects_no_interior():
    with pytest.raises(GraphBuildError):
        build_lattice_window(1, 0, False)
    with pytest.raises(GraphBuildError):
        build_lattice_window(0, 2, False)


def test_lattice_size_cap():
    with pytest.raises(GraphSizeError):
        build_lattice_window(2, 4000, False, size_cap=10000)


# -- comb --------------------------------------------------------------------

def test_comb_degrees_match_infinite_comb():
    g = build_comb_window(2, 2)
    coords = g.parts["coords"]
    spine = np.nonzero((coords[:, 0] == 0) & (coords[:, 1] == 0))[0][0]
    tooth = np.nonzero((coords[:, 0] == 0) & (coords[:, 1] == 1))[0][0]
    assert g.degree[spine] == 4  # spine vertices have degree 4
    assert g.degree[tooth] == 2  # tooth vertices degree 2
    g.validate()


def test_comb_vertex_set():
    g = build_comb_window(1, 1)
    # two-sided teeth: {(x,y): |x| <= 2, |y| <= 2}
    assert g.n == 25
    # boundary = extreme columns plus tooth tips: 2*5 + 2*5 - 4 shared corners
    assert g.boundary.sum() == 16


# -- gasket ------------------------------------------------------------------

@pytest.mark.parametrize("level,count", [(0, 3), (1, 6), (2, 15), (6, (3 ** 7 + 3) // 2)])
def test_gasket_counts(level, count):
    g = build_gasket(level)
    assert g.n == count == (3 ** (level + 1) + 3) // 2
    assert g.boundary.sum() == 3


def test_gasket_level1_degrees():
    g = build_gasket(1)
    corners = g.degree[g.boundary]
    mids = g.degree[~g.boundary]
    assert np.all(corners == 2) and np.all(mids == 4)
    g.validate()


# -- cubed tree --------------------------------------------------------------

def test_cubed_tree_counts_and_degrees():
    g = build_cubed_tree(1)
    assert g.n == 9 and g.degree[0] == 8
    g2 = build_cubed_tree(2)
    assert g2.n == 9 + 8 * 27 == 225
    # parent of a leaf has degree b_1 + 1 = 28
    leaf = g2.n - 1
    parent = int(g2.neighbors(leaf)[0])
    assert g2.degree[parent] == 28
    g2.validate()


def test_cubed_tree_guards():
    assert cubed_tree_size(4) == 1 + 8 + 8 * 27 + 8 * 27 * 64 + 8 * 27 * 64 * 125
    # depth > 4 warns, then the size cap rejects
    with pytest.raises(GraphSizeError):
        with pytest.warns(UserWarning):
            build_cubed_tree(5)


# -- pipe params -------------------------------------------------------------

def test_pipe_params_admissible():
    p = validate_pipe_params(100, (2, 3), depth=2)
    assert p.ok
    assert p.pipe_lengths == (21, 464)
    assert abs(p.lam - 1.1604) < 1e-3
    # sandwich (1/2) B^{alpha j} <= L_j <= B^{alpha j}
    for j in range(1, 9):
        L = p.pipe_length(j)
        x = 100.0 ** (2 * j / 3)
        assert 0.5 * x <= L <= x


def test_pipe_params_rejections():
    r = validate_pipe_params(16, (2, 3))
    assert isinstance(r, ParamRejection) and not r.ok
    assert r.inequality == "lambda > 1"
    r2 = validate_pipe_params(2, 0.75)
    assert r2.inequality == "B^alpha >= 4"
    r3 = validate_pipe_params(100, 0.4)
    assert not r3.ok  # alpha out of (1/2, 1)


def test_pipe_params_alpha_float_snaps_to_rational():
    p = validate_pipe_params(100, 2 / 3, depth=3)
    assert p.ok and str(p.alpha) == "2/3"
    assert p.pipe_length(3) == 10000  # exact integer root, no float fuzz


# -- pipe tree / comb gadget --------------------------------------------------

def test_pipe_tree_structure(pipe_params, pipe_tree_d1):
    g = pipe_tree_d1
    assert g.n == 1 + 100 * 21 == 2101
    assert g.degree[0] == 100
    inner = g.degree[(g.parts["pos"] >= 1) & (g.parts["pos"] < 21)]
    assert np.all(inner == 2)
    assert g.boundary.sum() == 100
    g.validate()


def test_pipe_tree_depth2_counts(pipe_params, pipe_tree_d2):
    g = pipe_tree_d2
    assert g.n == 1 + 100 * 21 + 100 ** 2 * 464
    assert g.degree.max() == 101  # branching vertices
    # distance from root to a depth-2 leaf is L_1 + L_2
    leaf = int(np.nonzero(g.boundary)[0][0])
    assert graph_distance(g, 0, leaf) == 21 + 464 == 485


def test_comb_gadget_structure(pipe_params):
    comb = build_comb_gadget(pipe_params, 1, (1,))
    assert comb.n == 1 + 100 * 21
    assert comb.boundary.sum() == 100  # all far endpoints absorb
    comb.validate()
    comb2 = build_comb_gadget(pipe_params, 2, (3, 17), include_root_edge=True)
    assert comb2.n == 1 + 100 * 21 + 100 * 464 + 1
    assert len(comb2.meta["b_ids"]) == 2  # b_0, b_1
    comb2.validate()


def test_comb_gadget_labels_match_pipe_tree(pipe_params, pipe_tree_d2):
    comb = build_comb_gadget(pipe_params, 2, (3, 17))
    keys_pt = set(pipe_tree_d2.label_keys.tolist())
    shared = sum(1 for k in comb.label_keys.tolist() if k in keys_pt)
    assert shared == comb.n  # every comb vertex exists in the pipe tree


def test_comb_gadget_bad_word(pipe_params):
    with pytest.raises(GraphBuildError):
        build_comb_gadget(pipe_params, 2, (3,))
    with pytest.raises(GraphBuildError):
        build_comb_gadget(pipe_params, 1, (100,))


# -- recurrent gadget graph ---------------------------------------------------

def test_recurrent_gadget_demo(pipe_params):
    sched = demo_schedule(pipe_params, [1, 2], d_f=2.5, rho=0.012, c_loc=3.1)
    rep = sched.verify()
    assert rep["separation"] and rep["volume"] and rep["disjoint"]
    ray_len = sched.positions[-1] + pipe_params.radius(2) + 5
    g = build_recurrent_gadget_graph(pipe_params, sched, 2, ray_len)
    assert g.degree.max() == 102  # B + 2
    g.validate()
    # gadget k lies inside B(o, s_k + R_{m_k})
    gadget1 = np.nonzero(g.parts["gadget"] == 1)[0]
    dists = [graph_distance(g, 0, int(v)) for v in gadget1[:5]]
    assert max(dists) <= sched.positions[0] + pipe_params.radius(1)


def test_recurrent_gadget_guards(pipe_params):
    sched = demo_schedule(pipe_params, [1, 1], d_f=2.5, rho=0.012, c_loc=3.1)
    with pytest.raises(GraphBuildError):
        build_recurrent_gadget_graph(pipe_params, sched, 2, 10)  # ray too short


# -- gadget geometry invariants ----------------------------------------------

def test_gadget_geometry_bounds(pipe_params):
    p = pipe_params
    C_R = p.C_R
    for m in range(1, 8):
        L, R, N = p.pipe_length(m), p.radius(m), p.gadget_size(m)
        assert L <= R <= C_R * L
        assert p.B ** m * L <= N <= 2 * p.B ** m * L


# -- metric queries ------------------------------------------------------------

def test_ball_and_distance():
    g = build_lattice_window(1, 5, False)
    o = g.origin
    B1 = ball(g, o, 1)
    labels = sorted(g.label(v) for v in B1)
    assert labels == ["-1", "0", "1"]
    g2 = build_lattice_window(2, 3, False)
    assert len(ball(g2, g2.origin, 1)) == 5

    # unreachable pair on a disconnected custom graph
    gd = Graph.from_edges(4, [(0, 1), (2, 3)])
    assert graph_distance(gd, 0, 3) == UNREACHABLE
    assert graph_distance(gd, 0, 1) == 1


# -- export / import -----------------------------------------------------------

@pytest.mark.parametrize("maker", [
    lambda: build_lattice_window(2, 2, False),
    lambda: build_lattice_window(1, 2, True),
    lambda: build_comb_window(2, 1),
    lambda: build_gasket(2),
    lambda: build_cubed_tree(1),
    lambda: build_pipe_tree(validate_pipe_params(100, (2, 3), depth=1)),
    lambda: build_comb_gadget(validate_pipe_params(100, (2, 3), depth=1), 1, (4,),
                              include_root_edge=True),
])
def test_text_round_trip(maker, tmp_path):
    g = maker()
    text = g.to_text()
    g2 = Graph.from_text(text)
    assert g2.to_text() == text  # bit-exact round trip
    assert np.array_equal(g.label_keys, g2.label_keys)
    g2.validate()


def test_every_constructor_validates(pipe_params):
    rng = np.random.default_rng(5)
    for trial in range(30):
        g = random_connected_graph(rng, int(rng.integers(3, 40)),
                                   boundary_frac=0.2 if trial % 2 else 0.0)
        g.validate()
