"""Replicated runs and ensemble moments aligned by capacity-event index."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .config import ExperimentConfig
from .engine import RESOURCES, CoupledRun, run


def replica_seed(master: int, i: int) -> int:
    """Seed of replica ``i``: ``master XOR i``."""
    return int(master) ^ int(i)


@dataclass(frozen=True)
class Moments:
    """Running count, mean and sum of squared deviations (Chan et al. layout)."""

    count: int
    mean: np.ndarray
    m2: np.ndarray

    @classmethod
    def single(cls, x) -> "Moments":
        x = np.asarray(x, dtype=float)
        return cls(1, x.copy(), np.zeros_like(x))

    def merge(self, other: "Moments") -> "Moments":
        n = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / n)
        m2 = self.m2 + other.m2 + delta * delta * (self.count * other.count / n)
        return Moments(n, mean, m2)

    @property
    def variance(self) -> np.ndarray:
        """Population variance (divides by the replica count)."""
        return self.m2 / self.count


class PairwiseMerger:
    """Streaming pairwise merge with a fixed tree shape.

    Items are pushed in replica order; subtrees of equal size are combined
    as soon as both exist, like carries in a binary counter. The tree
    depends only on the number of items, so results are bit-identical
    whatever the scheduling of the workers that produced them.
    """

    def __init__(self):
        self._stack: list[tuple[int, Moments]] = []

    def push(self, m: Moments) -> None:
        size = 1
        while self._stack and self._stack[-1][0] == size:
            s, left = self._stack.pop()
            m = left.merge(m)
            size += s
        self._stack.append((size, m))

    def result(self) -> Moments:
        if not self._stack:
            raise ValueError("no items merged")
        _, acc = self._stack[-1]
        for _, left in reversed(self._stack[:-1]):
            acc = left.merge(acc)
        return acc


@dataclass(frozen=True)
class MomentSeries:
    """Per-agent ensemble mean and population variance at each event index.

    ``mean_a[k, i]`` is the mean over replicas of agent ``i``'s share of
    resource a after ``k`` capacity events of a (``k = 0..L*N``).
    """

    mean_a: np.ndarray
    var_a: np.ndarray
    mean_b: np.ndarray
    var_b: np.ndarray
    replicas: int

    def mean(self, resource: str) -> np.ndarray:
        return getattr(self, f"mean_{resource}")

    def var(self, resource: str) -> np.ndarray:
        return getattr(self, f"var_{resource}")

    @property
    def events(self) -> int:
        return self.mean_a.shape[0] - 1

    @property
    def n(self) -> int:
        return self.mean_a.shape[1]

    def long_run_mean(self, resource: str) -> np.ndarray:
        """Per-agent ensemble mean averaged over the second half of the event indices."""
        m = self.mean(resource)
        return m[m.shape[0] // 2:].mean(axis=0)

    def drift(self, resource: str, stat: str = "mean") -> float:
        """Last-quartile drift of a statistic series; see :func:`last_quartile_drift`."""
        series = self.mean(resource) if stat == "mean" else self.var(resource)
        return last_quartile_drift(series)


def last_quartile_drift(series) -> float:
    """Largest per-column change between the two halves of the last quarter.

    The last quarter of the rows is split in two; the drift is the maximum
    over columns of the absolute difference of their averages.
    """
    s = np.asarray(series, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    q = s[3 * s.shape[0] // 4:]
    if q.shape[0] < 2:
        raise ValueError("series too short for a last-quartile drift")
    h = q.shape[0] // 2
    return float(np.max(np.abs(q[h:].mean(axis=0) - q[:h].mean(axis=0))))


@dataclass(frozen=True)
class ReplicaSummary:
    replica: int
    seed: int
    final_a: np.ndarray
    final_b: np.ndarray
    time_average_a: np.ndarray
    time_average_b: np.ndarray
    end_time: float
    sync_ok: bool
    window_counts_ok: bool
    frozen_ok: bool


def check_synchronization(result: CoupledRun) -> tuple[bool, bool, bool]:
    """Bit-exact checks of the synchronized schedule of one run.

    Returns ``(sync_ok, window_counts_ok, frozen_ok)``: both clocks agree
    at every meta event; each window holds exactly N events per resource;
    each resource's state at the end of its N-th event is still its state
    at the meta event (nothing moved while it waited).
    """
    N, L = result.N, result.L
    sync_ok = bool(np.array_equal(result.times_a[::N], result.times_b[::N]))
    per_window = result.order.reshape(L, 2 * N) if L else np.zeros((0, 2 * N))
    window_counts_ok = bool(np.all((per_window == 1).sum(axis=1) == N)
                            and np.all((per_window == 0).sum(axis=1) == N))
    frozen_ok = True
    if not result.model.global_md:
        for c in RESOURCES:
            frozen_ok &= bool(np.array_equal(result.get("frozen", c), result.get("states", c)[N::N]))
    return sync_ok, window_counts_ok, frozen_ok


def run_replica(config: ExperimentConfig, i: int, master_seed: int | None = None):
    """Run replica ``i``; returns its per-resource trajectories and summary."""
    seed = replica_seed(config.seed if master_seed is None else master_seed, i)
    r = run(config.model, config.meta_events, seed=seed, ic_range=config.ic_range)
    sync_ok, counts_ok, frozen_ok = check_synchronization(r)
    summary = ReplicaSummary(
        replica=i, seed=seed,
        final_a=r.states_a[-1].copy(), final_b=r.states_b[-1].copy(),
        time_average_a=r.states_a.mean(axis=0), time_average_b=r.states_b.mean(axis=0),
        end_time=float(r.times_a[-1]),
        sync_ok=sync_ok, window_counts_ok=counts_ok, frozen_ok=frozen_ok,
    )
    return np.stack([r.states_a, r.states_b]), summary


@dataclass(frozen=True)
class MonteCarloResult:
    moments: MomentSeries
    summaries: tuple[ReplicaSummary, ...]

    @property
    def all_synchronized(self) -> bool:
        return all(s.sync_ok and s.window_counts_ok and s.frozen_ok for s in self.summaries)


def run_montecarlo(config: ExperimentConfig, seed: int | None = None, workers: int | None = None,
                   replicas: int | None = None) -> MonteCarloResult:
    """Run the configured ensemble and return event-aligned moments and summaries.

    Replicas run on a thread pool (the kernels release the GIL); results
    are consumed in replica order and merged pairwise, so the output does
    not depend on ``workers``.
    """
    master = config.seed if seed is None else seed
    R = config.replicas if replicas is None else replicas
    workers = config.workers if workers is None else workers
    if R < 1:
        raise ValueError(f"replicas: must be >= 1, got {R}")
    if workers < 1:
        raise ValueError(f"workers: must be >= 1, got {workers}")
    merger = PairwiseMerger()
    summaries = []

    def job(i):
        return run_replica(config, i, master)

    if workers == 1:
        results = map(job, range(R))
        pool = None
    else:
        pool = ThreadPoolExecutor(max_workers=workers)
        results = pool.map(job, range(R))
    try:
        for traj, summary in results:
            merger.push(Moments.single(traj))
            summaries.append(summary)
    finally:
        if pool is not None:
            pool.shutdown()
    m = merger.result()
    var = m.variance
    moments = MomentSeries(m.mean[0], var[0], m.mean[1], var[1], R)
    return MonteCarloResult(moments, tuple(summaries))


def batch_moments(trajectories) -> tuple[np.ndarray, np.ndarray]:
    """Two-pass mean and population variance over axis 0; a reference for tests."""
    x = np.asarray(trajectories, dtype=float)
    mean = x.sum(axis=0) / x.shape[0]
    var = ((x - mean) ** 2).sum(axis=0) / x.shape[0]
    return mean, var
