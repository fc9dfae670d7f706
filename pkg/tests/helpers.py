"""Parameters, paths and hypothesis strategies shared by the test modules."""

import os

import numpy as np
from hypothesis import strategies as st

from syncaimd.core import ResourceParams

TABLE1_A = dict(alpha=[0.01, 0.08, 0.61, 0.045], beta=[0.95, 0.9, 0.85, 0.75])
TABLE1_B = dict(alpha=[0.07, 0.08, 0.025, 0.02], beta=[0.65, 0.7, 0.8, 0.85])
CONFIGS = os.path.join(os.path.dirname(__file__), "..", "configs")


def config_path(name):
    return os.path.abspath(os.path.join(CONFIGS, name))


def table1_params():
    return ResourceParams.from_arrays(**TABLE1_A), ResourceParams.from_arrays(**TABLE1_B)


@st.composite
def resources(draw, n=None, max_n=5):
    n = draw(st.integers(1, max_n)) if n is None else n
    alpha = draw(st.lists(st.floats(0.01, 2.0), min_size=n, max_size=n))
    beta = draw(st.lists(st.floats(0.0, 0.99), min_size=n, max_size=n))
    cap = draw(st.floats(0.1, 10.0))
    return ResourceParams.from_arrays(alpha, beta, cap)


@st.composite
def simplex_points(draw, n):
    w = np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=n, max_size=n)))
    w = w + 1e-3
    return w / w.sum()


@st.composite
def patterns(draw, n):
    return np.array(draw(st.lists(st.booleans(), min_size=n, max_size=n)), dtype=bool)
