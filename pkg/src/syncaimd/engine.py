"""Event-time simulation of one resource and of two synchronized resources.

Two entry points share the same kernels:

* step functions (:func:`single_resource_step`, :func:`advance_coupled`) that
  mutate an explicit state object one capacity event at a time, and
* whole-run functions (:func:`run`, :func:`run_single`) that execute the
  loop inside one compiled kernel.

Both consume random numbers identically, so a stepped run and a whole run
with the same seed produce the same trajectory.

In the coupled model every resource performs exactly ``N`` capacity events
per window. A resource that has done so freezes at capacity until the other
one catches up; then a meta event fires, both clocks are set to the same
instant and a new window starts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .core import ResourceParams, as_share_vector, pattern_bits
from .lifted import LiftedState, zeta_series
from .policy import AverageWindow, LongTermAverage, PolicySpec

RESOURCES = ("a", "b")


@dataclass(frozen=True)
class CoupledModel:
    """Two resources shared by the same ``n`` agents, with a common drop policy.

    The window length ``N`` of the policy is also the number of capacity
    events per resource between meta events.
    """

    params_a: ResourceParams
    params_b: ResourceParams
    policy: PolicySpec
    global_md: bool = False

    def __post_init__(self):
        if self.params_a.n != self.params_b.n:
            raise ValueError(f"resource a has {self.params_a.n} agents but resource b has {self.params_b.n}")
        # fail early on malformed policies
        self.policy.kernel_args(self.n)

    @property
    def n(self) -> int:
        return self.params_a.n

    @property
    def N(self) -> int:
        return int(self.policy.window)

    def params(self, resource: str) -> ResourceParams:
        return self.params_a if resource == "a" else self.params_b


def initial_shares(raw, params: ResourceParams) -> tuple[np.ndarray, float]:
    """Grow raw demands until the first capacity event.

    Returns the normalized state and the time the growth took. Demands that
    already reach capacity are only normalized.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.shape != (params.n,) or np.any(raw < 0):
        raise ValueError("raw demands must be n nonnegative numbers")
    total = raw.sum()
    if total >= params.capacity:
        return raw / total, 0.0
    t0 = (params.capacity - total) / params.alpha.sum()
    x = (raw + params.alpha * t0) / params.capacity
    return x / x.sum(), float(t0)


def make_streams(seed, count: int = 4) -> list[np.random.Generator]:
    """Independent generators for initial conditions, resource a, resource b, global MD."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(count)]


def random_initial_state(model: CoupledModel, rng: np.random.Generator,
                         low: float = 0.0, high: float = 0.25):
    """Uniform raw demands in ``[low, high]`` per agent and resource, grown to capacity."""
    raw_a = rng.uniform(low, high, model.n)
    raw_b = rng.uniform(low, high, model.n)
    return initial_shares(raw_a, model.params_a)[0], initial_shares(raw_b, model.params_b)[0]


# --------------------------------------------------------------------------
# single resource
# --------------------------------------------------------------------------

@dataclass
class SingleResourceState:
    params: ResourceParams
    x: np.ndarray
    window: AverageWindow
    tracker: LongTermAverage
    k: int = 0
    time: float = 0.0

    @classmethod
    def start(cls, params: ResourceParams, x0, N: int = 1) -> "SingleResourceState":
        x0 = as_share_vector(x0, params.n, tol=1e-9).copy()
        w = AverageWindow(params.n, N)
        w.push(x0)
        t = LongTermAverage(params.n)
        t.update(x0)
        return cls(params, x0, w, t)


def single_resource_step(state: SingleResourceState, policy: PolicySpec,
                         rng: np.random.Generator, resource: str = "a") -> SingleResourceState:
    """Sample a pattern at the current averages, apply it, update the averages."""
    n = state.params.n
    kind, eps, xi, const_p, ukind, upar = policy.kernel_args(n)
    w = state.window
    if state.k > 0:
        w.push(state.x)
    p = np.empty(n)
    _kernels.eval_policy(kind, RESOURCES.index(resource), eps, xi, const_p, ukind, upar, w.avg, w.avg,
                         w.hist, int(w.cnt[2]), w.hist, int(w.cnt[2]), w.N, p)
    d = rng.random(n) < p
    out = np.empty(n)
    t = _kernels.aimd_apply(state.params.alpha, state.params.beta, d, state.x, out)
    state.x = out
    state.time += t * state.params.capacity
    state.k += 1
    state.tracker.update(out)
    return state


@dataclass
class SingleRun:
    params: ResourceParams
    states: np.ndarray
    patterns: np.ndarray
    probabilities: np.ndarray
    inter_event_times: np.ndarray

    @property
    def times(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.inter_event_times)))


def run_single(params: ResourceParams, policy: PolicySpec, K: int, seed=None, x0=None,
               rng: np.random.Generator | None = None, resource: str = "a") -> SingleRun:
    """``K`` capacity events of one resource; ``x0`` defaults to the uniform allocation.

    ``resource`` selects which row of a constant policy applies.
    """
    n = params.n
    rng = rng if rng is not None else np.random.default_rng(seed)
    x0 = np.full(n, 1.0 / n) if x0 is None else as_share_vector(x0, n, tol=1e-9)
    u = rng.random((K, n))
    kind, eps, xi, const_p, ukind, upar = policy.kernel_args(n)
    states, drops, probs, T = _kernels.run_single(params.alpha, params.beta, np.array(x0, dtype=float),
                                                  u, policy.window, kind, eps, xi, const_p, ukind, upar,
                                                  RESOURCES.index(resource))
    return SingleRun(params, states, drops, probs, T * params.capacity)


# --------------------------------------------------------------------------
# two synchronized resources
# --------------------------------------------------------------------------

@dataclass
class ResourceState:
    """One resource inside a coupled run.

    ``psi`` is the time of the resource's latest capacity event; ``elapsed``
    the time spent in the current window, i.e. its next event is due at
    window start + ``elapsed``.
    """

    params: ResourceParams
    x: np.ndarray
    window: AverageWindow
    rng: np.random.Generator
    event_count_in_window: int = 0
    psi: float = 0.0
    elapsed: float = 0.0
    k: int = 0
    history: list = field(default_factory=list)


@dataclass(frozen=True)
class CapacityEvent:
    resource: str
    k: int
    window: int
    time: float
    pattern: np.ndarray
    probabilities: np.ndarray
    inter_event_time: float
    x_after: np.ndarray


@dataclass(frozen=True)
class MetaEventRecord:
    """Summary of one window: ``N`` events per resource and the window duration."""

    l: int
    tau: float
    events_a: tuple
    events_b: tuple
    zeta: LiftedState
    time: float


@dataclass
class CoupledState:
    model: CoupledModel
    a: ResourceState
    b: ResourceState
    meta_index: int = 0
    window_start: float = 0.0
    global_rng: np.random.Generator | None = None

    @classmethod
    def start(cls, model: CoupledModel, x0_a, x0_b, rng_a, rng_b, rng_global=None) -> "CoupledState":
        res = []
        for p, x0, rng in ((model.params_a, x0_a, rng_a), (model.params_b, x0_b, rng_b)):
            x = as_share_vector(x0, model.n, tol=1e-9).copy()
            w = AverageWindow(model.n, model.N)
            w.push(x)
            res.append(ResourceState(p, x, w, rng))
        return cls(model, res[0], res[1], global_rng=rng_global)

    @classmethod
    def from_seed(cls, model: CoupledModel, seed, low: float = 0.0, high: float = 0.25) -> "CoupledState":
        rng_ic, rng_a, rng_b, rng_g = make_streams(seed)
        x0_a, x0_b = random_initial_state(model, rng_ic, low, high)
        return cls.start(model, x0_a, x0_b, rng_a, rng_b, rng_g)

    def resource(self, name: str) -> ResourceState:
        return self.a if name == "a" else self.b

    def frozen(self, name: str) -> bool:
        return self.resource(name).event_count_in_window >= self.model.N


def _next_resource(state: CoupledState) -> str:
    N = state.model.N
    a, b = state.a, state.b
    if b.event_count_in_window >= N:
        return "a"
    if a.event_count_in_window >= N:
        return "b"
    # ties go to resource a
    return "a" if a.elapsed <= b.elapsed else "b"


def _fire(state: CoupledState, name: str) -> CapacityEvent:
    model = state.model
    n = model.n
    kind, eps, xi, const_p, ukind, upar = model.policy.kernel_args(n)
    own = state.resource(name)
    other = state.b if name == "a" else state.a
    res = 0 if name == "a" else 1
    u = own.rng.random(n)
    p = np.empty(n)
    d = np.zeros(n, dtype=bool)
    tmp = np.empty(n)
    w, ow = own.window, other.window
    t = _kernels.fire_event(res, own.params.alpha, own.params.beta, own.x, w.buf, w.hist, w.cnt, w.avg,
                            ow.avg, ow.hist, ow.cnt, own.event_count_in_window, u, kind, eps, xi,
                            const_p, ukind, upar, p, d, tmp)
    T = t * own.params.capacity
    ev = CapacityEvent(name, own.k, state.meta_index, state.window_start + own.elapsed,
                       d.copy(), p.copy(), T, own.x.copy())
    own.psi = ev.time
    own.elapsed += T
    own.event_count_in_window += 1
    own.k += 1
    own.history.append(ev)
    return ev


def _meta(state: CoupledState) -> MetaEventRecord:
    model = state.model
    a, b = state.a, state.b
    tau = max(a.elapsed, b.elapsed)
    t_sync = state.window_start + tau
    if model.global_md:
        n = model.n
        kind, eps, xi, const_p, ukind, upar = model.policy.kernel_args(n)
        u = state.global_rng.random((2, n))
        growth = []
        for res, (own, other) in enumerate(((a, b), (b, a))):
            p = np.empty(n)
            _kernels.eval_policy(kind, res, eps, xi, const_p, ukind, upar, own.window.avg, other.window.avg,
                                 own.window.hist, int(own.window.cnt[2]), other.window.hist,
                                 int(other.window.cnt[2]), model.N, p)
            out = np.empty(n)
            growth.append(_kernels.aimd_apply(own.params.alpha, own.params.beta, u[res] < p, own.x, out)
                          * own.params.capacity)
            own.x = out
        t_sync = t_sync + max(growth)
    for r in (a, b):
        r.psi = t_sync
        r.elapsed = 0.0
        r.event_count_in_window = 0
        r.window.push(r.x)
    zeta = LiftedState(a.window.states()[::-1].cumsum(axis=0) / np.arange(1, a.window.count + 1)[:, None],
                       b.window.states()[::-1].cumsum(axis=0) / np.arange(1, b.window.count + 1)[:, None])
    rec = MetaEventRecord(state.meta_index, tau, tuple(a.history), tuple(b.history), zeta, t_sync)
    a.history, b.history = [], []
    state.window_start = t_sync
    state.meta_index += 1
    return rec


def advance_coupled(state: CoupledState, policy: PolicySpec | None = None):
    """Fire the next capacity event in real time.

    Returns ``(state, emitted)``; ``emitted`` holds the capacity event and,
    if it completed the window of both resources, the meta-event record.
    ``policy`` must be ``None`` or the model's own policy.
    """
    if policy is not None and policy != state.model.policy:
        raise ValueError("advance_coupled uses the model's policy")
    ev = _fire(state, _next_resource(state))
    emitted = [ev]
    if state.frozen("a") and state.frozen("b"):
        emitted.append(_meta(state))
    return state, emitted


@dataclass
class CoupledRun:
    """Arrays produced by :func:`run`.

    ``states_c[k]`` is the share vector at capacity event ``k`` of resource
    ``c`` (``k = 0..L*N``); ``times_c[k]`` its time. Pattern ``k`` maps
    state ``k`` to state ``k + 1``.
    """

    model: CoupledModel
    L: int
    states_a: np.ndarray
    states_b: np.ndarray
    patterns_a: np.ndarray
    patterns_b: np.ndarray
    probabilities_a: np.ndarray
    probabilities_b: np.ndarray
    averages_a: np.ndarray
    averages_b: np.ndarray
    inter_event_times_a: np.ndarray
    inter_event_times_b: np.ndarray
    times_a: np.ndarray
    times_b: np.ndarray
    order: np.ndarray
    tau: np.ndarray
    arrival_a: np.ndarray
    arrival_b: np.ndarray
    frozen_a: np.ndarray
    frozen_b: np.ndarray
    initial_growth_time: tuple = (0.0, 0.0)

    @property
    def N(self) -> int:
        return self.model.N

    def get(self, field_name: str, resource: str):
        return getattr(self, f"{field_name}_{resource}")

    def window_order(self, l: int) -> np.ndarray:
        """Real-time firing order of window ``l`` (0 = a, 1 = b)."""
        N = self.N
        return self.order[2 * N * l:2 * N * (l + 1)]

    def meta_times(self) -> np.ndarray:
        N = self.N
        return self.times_a[::N][: self.L + 1]

    def zetas(self) -> np.ndarray:
        """Lifted snapshots for ``l = 0..L``; shape ``(L + 1, 2, N, n)``."""
        return zeta_series(self.states_a, self.states_b, self.N)

    def records(self) -> list[MetaEventRecord]:
        N = self.N
        zs = self.zetas()
        out = []
        for l in range(self.L):
            evs = {}
            for c in RESOURCES:
                evs[c] = tuple(
                    CapacityEvent(c, k, l, float(self.get("times", c)[k]), self.get("patterns", c)[k],
                                  self.get("probabilities", c)[k], float(self.get("inter_event_times", c)[k]),
                                  self.get("states", c)[k + 1])
                    for k in range(l * N, (l + 1) * N))
            out.append(MetaEventRecord(l, float(self.tau[l]), evs["a"], evs["b"],
                                       LiftedState(zs[l + 1, 0], zs[l + 1, 1]),
                                       float(self.times_a[(l + 1) * N])))
        return out

    def trajectory_rows(self):
        """One row per capacity event: resource, k, window, time, pattern bits, post-event shares."""
        N = self.N
        for c in RESOURCES:
            st, pat, tm = self.get("states", c), self.get("patterns", c), self.get("times", c)
            for k in range(pat.shape[0]):
                yield (c, k, k // N, float(tm[k]), pattern_bits(pat[k]), st[k + 1])


def run(model: CoupledModel, L: int, seed=None, x0_a=None, x0_b=None,
        ic_range: tuple[float, float] = (0.0, 0.25)) -> CoupledRun:
    """Run ``L`` meta events of the synchronized algorithm.

    Without explicit ``x0_a``/``x0_b`` the initial shares are raw demands
    drawn uniformly from ``ic_range`` and grown to the first capacity event.
    The run is a deterministic function of ``seed``.
    """
    if L < 0:
        raise ValueError(f"L must be nonnegative, got {L}")
    n, N = model.n, model.N
    rng_ic, rng_a, rng_b, rng_g = make_streams(seed)
    raw_a = rng_ic.uniform(ic_range[0], ic_range[1], n)
    raw_b = rng_ic.uniform(ic_range[0], ic_range[1], n)
    growth = (0.0, 0.0)
    if x0_a is None:
        x0_a, ga = initial_shares(raw_a, model.params_a)
        growth = (ga, growth[1])
    if x0_b is None:
        x0_b, gb = initial_shares(raw_b, model.params_b)
        growth = (growth[0], gb)
    x0_a = as_share_vector(x0_a, n, tol=1e-9)
    x0_b = as_share_vector(x0_b, n, tol=1e-9)
    u_a = rng_a.random((L * N, n))
    u_b = rng_b.random((L * N, n))
    if model.global_md:
        ug = rng_g.random((L, 2, n))
        ug_a, ug_b = np.ascontiguousarray(ug[:, 0]), np.ascontiguousarray(ug[:, 1])
    else:
        ug_a = ug_b = np.zeros((0, n))
    kind, eps, xi, const_p, ukind, upar = model.policy.kernel_args(n)
    pa, pb = model.params_a, model.params_b
    out = _kernels.run_coupled(pa.alpha, pa.beta, pa.capacity, pb.alpha, pb.beta, pb.capacity,
                               np.array(x0_a, dtype=float), np.array(x0_b, dtype=float),
                               u_a, u_b, ug_a, ug_b, N, L, kind, eps, xi, const_p, ukind, upar,
                               bool(model.global_md))
    return CoupledRun(model, L, *out, initial_growth_time=growth)


def ergodic_average(trajectory, phi: Callable[[np.ndarray], float] | None = None) -> float | np.ndarray:
    """Time average ``(1/(k+1)) sum_j phi(x(j))`` over a trajectory of states.

    ``phi=None`` averages the states themselves.
    """
    xs = np.asarray(trajectory, dtype=float)
    if xs.shape[0] == 0:
        raise ValueError("empty trajectory")
    if phi is None:
        return _kernels.running_mean(np.ascontiguousarray(xs))[-1]
    m = 0.0
    for j, x in enumerate(xs):
        m += (phi(x) - m) / (j + 1)
    return m
