import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from sandlab.graphs import (build_cubed_tree, build_lattice_window, build_pipe_tree,
                            validate_pipe_params)


@pytest.fixture(scope="session")
def pipe_params():
    p = validate_pipe_params(100, (2, 3), depth=3)
    assert p.ok
    return p


@pytest.fixture(scope="session")
def pipe_tree_d1(pipe_params):
    return build_pipe_tree(pipe_params, depth=1)


@pytest.fixture(scope="session")
def pipe_tree_d2(pipe_params):
    return build_pipe_tree(pipe_params, depth=2)


@pytest.fixture(scope="session")
def cubed_tree_d4():
    return build_cubed_tree(4)


@pytest.fixture(scope="session")
def z_window_51():
    return build_lattice_window(1, 51, False)
