import os
import subprocess
import sys

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from syncaimd import _accel

DUMP = r"""
import sys
import numpy as np
from syncaimd import _accel
from syncaimd.engine import CoupledModel, run, run_single
from syncaimd.policy import PolicySpec, UtilitySpec
from tests.helpers import table1_params

pa, pb = table1_params()
policies = [PolicySpec(window=4),
            PolicySpec.constant([0.3, 0.5, 0.7, 0.4], [0.6, 0.2, 0.5, 0.9], window=3),
            PolicySpec(kind="utility_gradient", window=2,
                       utilities=(UtilitySpec("power", 1.0, 1.5, coupling=0.2),) * 4)]
out = {"backend": np.array(_accel.BACKEND)}
for i, pol in enumerate(policies):
    for g in (False, True):
        r = run(CoupledModel(pa, pb, pol, g), 60, seed=21 + i)
        for name in ("states_a", "states_b", "times_a", "times_b", "patterns_a", "patterns_b", "tau"):
            out[f"{i}{int(g)}_{name}"] = getattr(r, name)
    s = run_single(pb, pol, 500, seed=3, resource="b")
    out[f"{i}_single"] = s.states
np.savez(sys.argv[1], **out)
"""


def dump(path, disable):
    env = dict(os.environ)
    env.pop("NUMBA_DISABLE_JIT", None)
    env["SYNCAIMD_DISABLE_NUMBA"] = "1" if disable else "0"
    root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    env["PYTHONPATH"] = os.pathsep.join([root, env.get("PYTHONPATH", "")])
    proc = subprocess.run([sys.executable, "-c", DUMP, str(path)], env=env, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return np.load(path)


@pytest.mark.skipif(_accel.numba is None and _accel.NUMBA_REQUESTED, reason="numba not installed")
def test_numba_and_numpy_backends_agree(tmp_path):
    fast = dump(tmp_path / "fast.npz", disable=False)
    slow = dump(tmp_path / "slow.npz", disable=True)
    assert str(fast["backend"]) == "numba" and str(slow["backend"]) == "numpy"
    assert set(fast.files) == set(slow.files)
    for key in fast.files:
        if key == "backend":
            continue
        if "patterns" in key:
            assert_array_equal(fast[key], slow[key], err_msg=key)
        else:
            assert_allclose(fast[key], slow[key], rtol=0, atol=1e-12, err_msg=key)


@pytest.mark.parametrize("value,expected", [("", False), ("0", False), ("off", False), ("1", True), ("yes", True)])
def test_flag_parsing(monkeypatch, value, expected):
    monkeypatch.setenv("SYNCAIMD_TEST_FLAG", value)
    assert _accel._flag("SYNCAIMD_TEST_FLAG") is expected


def test_jit_passthrough_when_disabled(monkeypatch):
    monkeypatch.setattr(_accel, "USE_NUMBA", False)

    def f(x):
        return x + 1

    assert _accel.jit(f) is f
