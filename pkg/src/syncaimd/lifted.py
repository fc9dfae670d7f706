"""The lifted chain on stacked partial averages.

At meta event ``l`` the lifted state holds, for each resource, the ``N``
partial averages of the most recent states,

    z_c[j-1] = mean(x_c(lN), x_c(lN - 1), ..., x_c(lN - j + 1)),   j = 1..N,

so ``z_c[0]`` is the current state and ``z_c[N-1]`` the full finite average.
One window of patterns maps it linearly to the next lifted state; the map
only reads ``z_c[0]``.

Arrays are stored block-wise with shape ``(N, n)``; :meth:`LiftedState.vector`
gives the flat ``2 n N`` layout ``[z_a; z_b]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .core import ResourceParams, all_patterns, build_aimd_matrix
from .policy import PolicySpec, pattern_probability

DENSE_LIMIT = 64


@dataclass(frozen=True)
class LiftedState:
    za: np.ndarray
    zb: np.ndarray

    def __post_init__(self):
        za = np.asarray(self.za, dtype=float)
        zb = np.asarray(self.zb, dtype=float)
        if za.ndim != 2 or za.shape != zb.shape:
            raise ValueError(f"lifted halves must be (N, n) arrays of equal shape, got {za.shape} and {zb.shape}")
        object.__setattr__(self, "za", za)
        object.__setattr__(self, "zb", zb)

    @property
    def N(self) -> int:
        return self.za.shape[0]

    @property
    def n(self) -> int:
        return self.za.shape[1]

    def half(self, resource: str) -> np.ndarray:
        return self.za if resource == "a" else self.zb

    def vector(self) -> np.ndarray:
        return np.concatenate([self.za.ravel(), self.zb.ravel()])

    @classmethod
    def from_vector(cls, v, n: int) -> "LiftedState":
        v = np.asarray(v, dtype=float)
        if v.ndim != 1 or v.size % (2 * n):
            raise ValueError(f"vector of length {v.size} is not 2*n*N for n={n}")
        N = v.size // (2 * n)
        return cls(v[: n * N].reshape(N, n), v[n * N:].reshape(N, n))

    def on_simplex(self, tol: float = 1e-9) -> bool:
        z = np.concatenate([self.za, self.zb])
        return bool(np.all(z >= -tol) and np.all(np.abs(z.sum(axis=1) - 1.0) <= tol))


def _partial_averages(hist, N: int) -> np.ndarray:
    h = np.asarray(hist, dtype=float)
    recent = h[::-1][:N]
    return recent.cumsum(axis=0) / np.arange(1, recent.shape[0] + 1)[:, None]


def build_zeta(hist_a, hist_b, N: int) -> LiftedState:
    """Lifted state from the state histories of both resources (oldest first).

    With fewer than ``N`` states the missing blocks repeat the longest
    available prefix average; :func:`is_initial_phase` reports this case.
    """
    za = _partial_averages(hist_a, N)
    zb = _partial_averages(hist_b, N)
    if za.shape[0] == 0 or zb.shape[0] == 0:
        raise ValueError("need at least one state per resource")
    if za.shape[0] < N:
        za = np.vstack([za, np.repeat(za[-1:], N - za.shape[0], axis=0)])
    if zb.shape[0] < N:
        zb = np.vstack([zb, np.repeat(zb[-1:], N - zb.shape[0], axis=0)])
    return LiftedState(za, zb)


def is_initial_phase(hist_a, hist_b, N: int) -> bool:
    return len(hist_a) < N or len(hist_b) < N


def zeta_series(states_a, states_b, N: int) -> np.ndarray:
    """Lifted states at every meta event of a run; shape ``(L + 1, 2, N, n)``.

    ``states_c`` are the per-event states ``x_c(0..LN)``. Windows reaching
    back before ``x(0)`` use prefix averages.
    """
    out = []
    for states in (states_a, states_b):
        s = np.asarray(states, dtype=float)
        L = (s.shape[0] - 1) // N
        ends = np.arange(L + 1) * N
        blocks = np.empty((L + 1, N, s.shape[1]))
        acc = np.zeros((L + 1, s.shape[1]))
        # most recent state first, as in build_zeta
        for j in range(N):
            idx = ends - j
            acc = acc + np.where((idx >= 0)[:, None], s[np.maximum(idx, 0)], 0.0)
            blocks[:, j] = acc / np.minimum(j + 1, ends + 1)[:, None]
        out.append(blocks)
    return np.stack(out, axis=1)


@dataclass(frozen=True)
class PatternWindow:
    """Drop patterns of one window: ``nu`` for resource a, ``mu`` for b, each ``(N, n)``.

    ``interleaving`` optionally fixes the real-time order of the ``2N``
    events (0 = a, 1 = b), as recorded by the simulator.
    """

    nu: np.ndarray
    mu: np.ndarray
    interleaving: np.ndarray | None = None

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=bool)
        mu = np.asarray(self.mu, dtype=bool)
        if nu.ndim != 2 or nu.shape != mu.shape:
            raise ValueError(f"pattern sequences must be (N, n) of equal shape, got {nu.shape} and {mu.shape}")
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "mu", mu)
        if self.interleaving is not None:
            il = np.asarray(self.interleaving, dtype=np.int8)
            if il.shape != (2 * nu.shape[0],) or np.count_nonzero(il == 0) != nu.shape[0]:
                raise ValueError("interleaving must list exactly N events of each resource")
            object.__setattr__(self, "interleaving", il)

    @property
    def N(self) -> int:
        return self.nu.shape[0]

    def patterns(self, resource: str) -> np.ndarray:
        return self.nu if resource == "a" else self.mu

    @classmethod
    def full_drop(cls, n: int, N: int) -> "PatternWindow":
        return cls(np.ones((N, n), bool), np.ones((N, n), bool))


def transition_operators(params: ResourceParams, patterns) -> np.ndarray:
    """``Phi[m]`` = product of the first ``m`` window matrices, ``m = 0..N``."""
    pats = np.asarray(patterns, dtype=bool)
    n = params.n
    phi = np.empty((pats.shape[0] + 1, n, n))
    phi[0] = np.eye(n)
    for m, d in enumerate(pats):
        phi[m + 1] = build_aimd_matrix(params, d) @ phi[m]
    return phi


def _first_column_blocks(phi: np.ndarray) -> np.ndarray:
    # block k-1 = (1/k) sum_{i<k} Phi[N - i]
    N = phi.shape[0] - 1
    rev = phi[::-1][:N]
    return rev.cumsum(axis=0) / np.arange(1, N + 1)[:, None, None]


@dataclass(frozen=True)
class GammaMatrix:
    """Block-diagonal lifted transition of one window, stored by its first block columns."""

    params_a: ResourceParams
    params_b: ResourceParams
    window: PatternWindow
    phi_a: np.ndarray = field(repr=False)
    phi_b: np.ndarray = field(repr=False)
    blocks_a: np.ndarray = field(repr=False)
    blocks_b: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.window.N

    @property
    def n(self) -> int:
        return self.params_a.n

    def phi(self, resource: str) -> np.ndarray:
        return self.phi_a if resource == "a" else self.phi_b

    def blocks(self, resource: str) -> np.ndarray:
        return self.blocks_a if resource == "a" else self.blocks_b

    def apply(self, zeta: LiftedState) -> LiftedState:
        return LiftedState(self.blocks_a @ zeta.za[0], self.blocks_b @ zeta.zb[0])

    def apply_vector(self, v) -> np.ndarray:
        """Apply to an arbitrary vector of length ``2 n N`` (not necessarily on the simplex)."""
        z = LiftedState.from_vector(v, self.n)
        return self.apply(z).vector()

    def dense(self) -> np.ndarray:
        n, N = self.n, self.N
        if n * N > DENSE_LIMIT:
            raise ValueError(f"refusing to materialize a {2 * n * N}-dimensional Gamma (n*N > {DENSE_LIMIT})")
        nN = n * N
        G = np.zeros((2 * nN, 2 * nN))
        for h, blocks in enumerate((self.blocks_a, self.blocks_b)):
            off = h * nN
            for k in range(N):
                G[off + k * n: off + (k + 1) * n, off: off + n] = blocks[k]
        return G


def build_gamma(params_a: ResourceParams, params_b: ResourceParams, pw: PatternWindow) -> GammaMatrix:
    if params_a.n != params_b.n or pw.nu.shape[1] != params_a.n:
        raise ValueError("agent counts of parameters and patterns disagree")
    phi_a = transition_operators(params_a, pw.nu)
    phi_b = transition_operators(params_b, pw.mu)
    return GammaMatrix(params_a, params_b, pw, phi_a, phi_b,
                       _first_column_blocks(phi_a), _first_column_blocks(phi_b))


def full_drop_gamma(params_a: ResourceParams, params_b: ResourceParams, N: int) -> GammaMatrix:
    return build_gamma(params_a, params_b, PatternWindow.full_drop(params_a.n, N))


def _window_states(params: ResourceParams, patterns, x0) -> tuple[np.ndarray, np.ndarray]:
    # states x(0..N) and inter-event times (capacity units) by sequential application
    pats = np.asarray(patterns, dtype=bool)
    xs = np.empty((pats.shape[0] + 1, params.n))
    ts = np.empty(pats.shape[0])
    xs[0] = x0
    for m, d in enumerate(pats):
        ts[m] = _kernels.aimd_apply(params.alpha, params.beta, d, xs[m], xs[m + 1]) * params.capacity
    return xs, ts


def step_lifted(zeta: LiftedState, gamma: GammaMatrix) -> LiftedState:
    """Next lifted state, computed in O(N n) by replaying the window's patterns."""
    out = []
    for c in ("a", "b"):
        xs, _ = _window_states(gamma.params_a if c == "a" else gamma.params_b,
                               gamma.window.patterns(c), zeta.half(c)[0])
        out.append(_partial_averages(xs[1:], gamma.N))
    return LiftedState(*out)


def reconstruct_running_average(zeta: LiftedState, pw: PatternWindow, k: int, resource: str,
                                params: ResourceParams) -> np.ndarray:
    """Finite average at event ``lN + k`` of ``resource`` from the lifted state alone.

    ``((N-k)/N) z[N-k-1] + (1/N) sum_{i<k} Phi[i+1] z[0]``.
    """
    N = zeta.N
    if not 0 <= k < N:
        raise ValueError(f"k must lie in 0..{N - 1}, got {k}")
    z = zeta.half(resource)
    phi = transition_operators(params, pw.patterns(resource)[:k])
    tail = sum((phi[i + 1] @ z[0] for i in range(k)), np.zeros(z.shape[1]))
    return (N - k) / N * z[N - k - 1] + tail / N


def window_interleaving(params_a: ResourceParams, params_b: ResourceParams,
                        zeta: LiftedState, pw: PatternWindow) -> np.ndarray:
    """Real-time order of the window's events implied by the inter-event times (ties to a)."""
    N = pw.N
    _, ta = _window_states(params_a, pw.nu, zeta.za[0])
    _, tb = _window_states(params_b, pw.mu, zeta.zb[0])
    order = np.empty(2 * N, dtype=np.int8)
    ma = mb = 0
    sa = sb = 0.0
    for i in range(2 * N):
        if mb >= N or (ma < N and sa <= sb):
            sa += ta[ma]
            ma += 1
            order[i] = 0
        else:
            sb += tb[mb]
            mb += 1
            order[i] = 1
    return order


def _state_probabilities(policy: PolicySpec, res: int, own_avg, other_avg, n: int) -> np.ndarray:
    kind, eps, xi, const_p, ukind, upar = policy.kernel_args(n)
    if policy.kind == "window_mean":
        raise ValueError("the window_mean policy reads averages older than the lifted state; "
                         "lifted probabilities need a policy of the current averages")
    p = np.empty(n)
    empty = np.zeros((1, n))
    _kernels.eval_policy(kind, res, eps, xi, const_p, ukind, upar, np.asarray(own_avg, float),
                         np.asarray(other_avg, float), empty, 0, empty, 0, policy.window, p)
    return p


def lifted_pattern_probability(zeta: LiftedState, pw: PatternWindow, params_a: ResourceParams,
                               params_b: ResourceParams, policy: PolicySpec) -> float:
    """Probability of the window ``pw`` given the lifted state ``zeta``.

    Events are visited in real-time order. Each resource's own average is
    reconstructed from ``zeta`` at its event index; the other resource's
    average is the one current at its most recent event of the window (or at
    the window start).
    """
    N, n = zeta.N, zeta.n
    order = pw.interleaving if pw.interleaving is not None else window_interleaving(params_a, params_b, zeta, pw)
    params = {"a": params_a, "b": params_b}
    avgs = {c: [reconstruct_running_average(zeta, pw, k, c, params[c]) for k in range(N)] for c in ("a", "b")}
    fired = {"a": 0, "b": 0}
    prob = 1.0
    for r in order:
        c, o = ("a", "b") if r == 0 else ("b", "a")
        k = fired[c]
        other_avg = avgs[o][max(fired[o] - 1, 0)]
        p = _state_probabilities(policy, int(r), avgs[c][k], other_avg, n)
        prob *= pattern_probability(p, pw.patterns(c)[k])
        fired[c] += 1
    return prob


def window_probability_table(zeta: LiftedState, params_a: ResourceParams, params_b: ResourceParams,
                             policy: PolicySpec) -> np.ndarray:
    """Probabilities of all ``(2**n)**N x (2**n)**N`` windows given ``zeta``.

    Row index encodes ``nu`` and column index ``mu``, each as base-``2**n``
    digits with event 0 least significant. Constant policies factor into an
    outer product and are computed without the state.
    """

    N, n = zeta.N, zeta.n
    pats = np.array(list(all_patterns(n)))
    S = pats.shape[0]
    seqs = _sequences(S, N)
    if policy.kind == "constant":
        per = []
        for r in (0, 1):
            p = policy.constant_p(r)
            q = np.array([pattern_probability(p, d) for d in pats])
            per.append(np.prod(q[seqs], axis=1))
        return np.outer(per[0], per[1])
    table = np.empty((seqs.shape[0], seqs.shape[0]))
    for i, sa in enumerate(seqs):
        for j, sb in enumerate(seqs):
            table[i, j] = lifted_pattern_probability(zeta, PatternWindow(pats[sa], pats[sb]),
                                                     params_a, params_b, policy)
    return table


def _sequences(S: int, N: int) -> np.ndarray:
    idx = np.arange(S ** N)
    return np.stack([(idx // S ** k) % S for k in range(N)], axis=1)


def norm_N1(v, n: int) -> float:
    """Largest 1-norm over the consecutive ``n``-blocks of ``v``."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size % n:
        raise ValueError(f"length {v.size} is not a multiple of n={n}")
    if v.size == 0:
        return 0.0
    return float(np.abs(v.reshape(-1, n)).sum(axis=1).max())


def norm_N1_batch(V, n: int) -> np.ndarray:
    """:func:`norm_N1` of each row of ``V``."""
    V = np.asarray(V, dtype=float)
    return np.abs(V.reshape(V.shape[0], -1, n)).sum(axis=2).max(axis=1)
