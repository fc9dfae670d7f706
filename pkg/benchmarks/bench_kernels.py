"""Compare the numba kernels with the pure-numpy fallback.

Each backend runs in its own interpreter because the backend is fixed at
import time. Usage::

    python benchmarks/bench_kernels.py [--meta-events 200] [--repeat 3]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json, sys, time
import numpy as np
from syncaimd import _accel
from syncaimd.config import ExperimentConfig
from syncaimd.engine import run, run_single

cfg = ExperimentConfig.load(sys.argv[1])
L, repeat = int(sys.argv[2]), int(sys.argv[3])
policy = cfg.policy

def best(f):
    f()  # warm-up, includes compilation
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        f()
        times.append(time.perf_counter() - t)
    return min(times)

res = {
    "backend": _accel.BACKEND,
    "coupled": best(lambda: run(cfg.model, L, seed=1)),
    "single": best(lambda: run_single(cfg.params_a, policy, L * cfg.N, seed=1)),
    "events": L * cfg.N,
}
print(json.dumps(res))
"""


def measure(disable: bool, config: str, L: int, repeat: int) -> dict:
    env = dict(os.environ)
    env.pop("SYNCAIMD_DISABLE_NUMBA", None)
    env.pop("NUMBA_DISABLE_JIT", None)
    if disable:
        env["SYNCAIMD_DISABLE_NUMBA"] = "1"
    out = subprocess.run([sys.executable, "-c", WORKER, config, str(L), str(repeat)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None):
    here = os.path.dirname(os.path.abspath(__file__))
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=os.path.join(here, "..", "configs", "table1.toml"))
    ap.add_argument("--meta-events", type=int, default=200)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    rows = [measure(d, args.config, args.meta_events, args.repeat) for d in (False, True)]
    print(f"{'backend':<8} {'coupled [s]':>12} {'single [s]':>12} {'events/s':>12}")
    for r in rows:
        print(f"{r['backend']:<8} {r['coupled']:>12.4f} {r['single']:>12.4f} {2 * r['events'] / r['coupled']:>12.0f}")
    fast, slow = rows
    print(f"speed-up (coupled): {slow['coupled'] / fast['coupled']:.1f}x")


if __name__ == "__main__":
    main()
