"""CSV and SVG outputs.

CSV files have a header row and a fixed column order. Floats are written
with 17 significant digits, which reads back bit-exactly. Columns:

``trajectory.csv``
    ``resource, event, window, time, pattern, x_1 .. x_n``; one row per
    capacity event, ``time`` is when the event fired, ``pattern`` the drop
    bits (agent 1 first) and ``x_i`` the shares at the next capacity event.
``zeta.csv``
    ``l, time, tau, a_<j>_<i> .., b_<j>_<i> ..``; the lifted state after
    meta event ``l`` (``l = 0`` is the initial state), block ``j`` being the
    mean of the ``j`` most recent states.
``moments.csv``
    ``resource, event, agent, mean, var``; ensemble statistics by event index.
``replicas.csv``
    ``replica, seed, end_time, sync_ok, window_counts_ok, frozen_ok,
    final_a_<i> .., final_b_<i> .., time_average_a_<i> .., time_average_b_<i> ..``.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .engine import RESOURCES, CoupledRun
from .montecarlo import MomentSeries, ReplicaSummary


class OutputError(OSError):
    """A file could not be written or read; the message names the path."""


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}"
    return str(v)


def emit_csv(header: Sequence[str], rows: Iterable[Sequence], path) -> Path:
    """Write ``rows`` under ``header`` to ``path``; returns the path."""
    path = Path(path)
    width = len(header)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                if len(row) != width:
                    raise ValueError(f"row has {len(row)} fields, header has {width}")
                w.writerow([format_value(v) for v in row])
    except OSError as e:
        raise OutputError(f"{path}: cannot write ({e.strerror or e})") from e
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as e:
        raise OutputError(f"{path}: cannot read ({e.strerror or e})") from e
    if not rows:
        raise OutputError(f"{path}: empty file, expected a header row")
    return rows[0], rows[1:]


def read_float_table(path) -> tuple[list[str], np.ndarray]:
    """Read an all-numeric CSV into a float array."""
    header, rows = read_csv(path)
    return header, np.array([[float(v) for v in r] for r in rows], dtype=float).reshape(len(rows), len(header))


def _agents(prefix: str, n: int) -> list[str]:
    return [f"{prefix}_{i + 1}" for i in range(n)]


def write_trajectory(result: CoupledRun, path) -> Path:
    n = result.model.n
    header = ["resource", "event", "window", "time", "pattern", *_agents("x", n)]
    rows = ((c, k, l, t, bits, *x) for c, k, l, t, bits, x in result.trajectory_rows())
    return emit_csv(header, rows, path)


def write_zeta(result: CoupledRun, path) -> Path:
    n, N = result.model.n, result.N
    header = ["l", "time", "tau"] + [f"{c}_{j + 1}_{i + 1}" for c in RESOURCES for j in range(N) for i in range(n)]
    zs = result.zetas()
    times = result.meta_times()
    tau = np.concatenate([[0.0], result.tau])
    rows = ((l, times[l], tau[l], *zs[l].ravel()) for l in range(zs.shape[0]))
    return emit_csv(header, rows, path)


def write_moments(moments: MomentSeries, path) -> Path:
    header = ["resource", "event", "agent", "mean", "var"]

    def rows():
        for c in RESOURCES:
            m, v = moments.mean(c), moments.var(c)
            for k in range(m.shape[0]):
                for i in range(m.shape[1]):
                    yield (c, k, i + 1, m[k, i], v[k, i])

    return emit_csv(header, rows(), path)


def write_replicas(summaries: Sequence[ReplicaSummary], n: int, path) -> Path:
    header = ["replica", "seed", "end_time", "sync_ok", "window_counts_ok", "frozen_ok",
              *_agents("final_a", n), *_agents("final_b", n),
              *_agents("time_average_a", n), *_agents("time_average_b", n)]
    rows = ((s.replica, s.seed, s.end_time, s.sync_ok, s.window_counts_ok, s.frozen_ok,
             *s.final_a, *s.final_b, *s.time_average_a, *s.time_average_b) for s in summaries)
    return emit_csv(header, rows, path)


# -- plots ---------------------------------------------------------------


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "syncaimd"
    return plt


def _save(fig, path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(path, format="svg", metadata={"Date": None})
    except OSError as e:
        raise OutputError(f"{path}: cannot write ({e.strerror or e})") from e
    finally:
        import matplotlib.pyplot as plt

        plt.close(fig)
    return path


def utilization_path(result: CoupledRun, resource: str, windows: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Total utilization of a resource as a piecewise-linear curve.

    Each event drops the load to ``C - sum(alpha) T`` and it climbs back to
    ``C`` after ``T``. A resource that finishes its window before the other
    stays at ``C`` until the meta event; that plateau appears as a flat
    segment ending at the next window's first event.
    """
    params = result.model.params(resource)
    C, sa = params.capacity, float(params.alpha.sum())
    N = result.N
    K = result.L * N if windows is None else min(windows, result.L) * N
    times = result.get("times", resource)
    arrival = result.get("arrival", resource)
    T = result.get("inter_event_times", resource)
    ts, us = [], []
    for k in range(K):
        t0 = float(times[k])
        # end of the refill, with the simulator's own rounding
        t1 = float(times[k + 1]) if (k + 1) % N else float(arrival[k // N])
        ts += [t0, t0, t1]
        us += [C, C - sa * float(T[k]), C]
    ts.append(float(times[K]))
    us.append(C)
    return np.array(ts), np.array(us)


def plot_utilization(result: CoupledRun, path, windows: int | None = 20) -> Path:
    """Utilization sawtooth of both resources, meta events marked."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 3.5))
    for c, style in zip(RESOURCES, ("-", "--")):
        t, u = utilization_path(result, c, windows)
        ax.plot(t, u, style, marker="." if t.size == 1 else None, lw=1.0, label=f"resource {c}")
    L = result.L if windows is None else min(windows, result.L)
    for tm in result.meta_times()[: L + 1]:
        ax.axvline(tm, color="0.8", lw=0.6, zorder=0)
    ax.set_xlabel("time")
    ax.set_ylabel("total utilization")
    ax.legend(loc="lower right")
    fig.tight_layout()
    return _save(fig, path)


def plot_moments(moments: MomentSeries, path, resource: str = "a",
                 other: MomentSeries | None = None, labels: tuple[str, str] = ("regime 1", "regime 2")) -> Path:
    """Per-agent ensemble mean with a +/- variance band against event index."""
    if moments.mean(resource).shape[0] == 0:
        raise ValueError("empty moment series: nothing to plot")
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 4))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    series = [(moments, "-", labels[0])] + ([(other, "--", labels[1])] if other is not None else [])
    for ms, style, label in series:
        m, v = ms.mean(resource), ms.var(resource)
        k = np.arange(m.shape[0])
        for i in range(m.shape[1]):
            col = colors[i % len(colors)]
            ax.plot(k, m[:, i], style, color=col, lw=0.9,
                    label=f"agent {i + 1} ({label})" if other is not None else f"agent {i + 1}")
            ax.fill_between(k, m[:, i] - v[:, i], m[:, i] + v[:, i], color=col, alpha=0.15, lw=0)
    ax.set_xlabel("capacity event")
    ax.set_ylabel(f"share of resource {resource}")
    ax.legend(fontsize="small", ncol=2)
    fig.tight_layout()
    return _save(fig, path)
