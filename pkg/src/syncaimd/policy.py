"""Drop policies: per-agent MD probabilities, pattern probabilities, sampling.

Agents respond to a capacity event independently, so a per-agent probability
vector ``p`` induces the product distribution over drop patterns. Every policy
output is clamped to ``[floor, 1]``; the floor keeps the full-drop pattern
strictly likely in every state.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .core import all_patterns, as_pattern

DEFAULT_FLOOR = 0.01

POLICY_KINDS = {
    "constant": _kernels.POLICY_CONSTANT,
    "window_mean": _kernels.POLICY_WINDOW_MEAN,
    "utility_gradient": _kernels.POLICY_UTILITY,
}
UTILITY_KINDS = {
    "quadratic": _kernels.UTILITY_QUADRATIC,
    "log_barrier": _kernels.UTILITY_LOG_BARRIER,
    "power": _kernels.UTILITY_POWER,
}


class DegenerateAverageError(ValueError):
    """An averaged share is too close to zero for the utility-gradient rule."""


@dataclass(frozen=True)
class UtilitySpec:
    """Separable cost ``g(x_a) + g(x_b) + coupling * x_a * x_b`` of one agent.

    ``g`` is one of ``coef * s**2`` (quadratic), ``-coef * log(s)``
    (log_barrier) or ``coef * s**gamma / gamma`` (power).
    """

    kind: str = "quadratic"
    coef: float = 1.0
    gamma: float = 2.0
    coupling: float = 0.0

    def __post_init__(self):
        if self.kind not in UTILITY_KINDS:
            raise ValueError(f"unknown utility kind {self.kind!r}; expected one of {sorted(UTILITY_KINDS)}")
        if self.kind == "power" and self.gamma <= 0:
            raise ValueError("power utility needs gamma > 0")

    def _g(self, s):
        if self.kind == "quadratic":
            return self.coef * s * s
        if self.kind == "log_barrier":
            return -self.coef * np.log(s)
        return self.coef * s ** self.gamma / self.gamma

    def value(self, xa, xb):
        return self._g(xa) + self._g(xb) + self.coupling * xa * xb

    def partial(self, xa, xb, resource: str):
        """Derivative with respect to the share of ``resource`` ('a' or 'b')."""
        own, other = (xa, xb) if resource == "a" else (xb, xa)
        code = UTILITY_KINDS[self.kind]
        return _kernels.utility_slope(code, self.coef, self.gamma, own) + self.coupling * other


@dataclass(frozen=True)
class PolicySpec:
    """How agents pick their MD probability at a capacity event.

    ``probabilities`` is only used by the constant policy (one row per
    resource); ``utilities`` only by the utility-gradient policy (one entry
    per agent). ``xi=None`` selects :func:`default_xi`.
    """

    kind: str = "window_mean"
    window: int = 5
    floor: float = DEFAULT_FLOOR
    xi: float | None = None
    probabilities: tuple[tuple[float, ...], ...] = ()
    utilities: tuple[UtilitySpec, ...] = ()

    def __post_init__(self):
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy kind {self.kind!r}; expected one of {sorted(POLICY_KINDS)}")
        if int(self.window) != self.window or self.window < 1:
            raise ValueError(f"window must be a positive integer, got {self.window}")
        if not (0.0 < self.floor < 1.0):
            raise ValueError(f"floor must lie in (0, 1), got {self.floor}")
        if self.xi is not None and not self.xi > 0:
            raise ValueError(f"xi must be positive, got {self.xi}")
        object.__setattr__(self, "probabilities", tuple(tuple(float(v) for v in row) for row in self.probabilities))
        object.__setattr__(self, "utilities", tuple(self.utilities))
        if self.kind == "constant":
            if len(self.probabilities) not in (1, 2):
                raise ValueError("constant policy needs one or two rows of probabilities")
            for row in self.probabilities:
                if any(not (0.0 <= v <= 1.0) for v in row):
                    raise ValueError(f"probabilities must lie in [0, 1], got {row}")
        if self.kind == "utility_gradient" and not self.utilities:
            raise ValueError("utility_gradient policy needs one utility per agent")

    @classmethod
    def constant(cls, p_a, p_b=None, floor: float = DEFAULT_FLOOR, window: int = 1) -> "PolicySpec":
        rows = (tuple(p_a),) if p_b is None else (tuple(p_a), tuple(p_b))
        return cls(kind="constant", window=window, floor=floor, probabilities=rows)

    def constant_p(self, resource: int) -> np.ndarray:
        """Clamped constant probabilities of resource 0 (a) or 1 (b)."""
        row = self.probabilities[min(resource, len(self.probabilities) - 1)]
        return np.clip(np.array(row, dtype=float), self.floor, 1.0)

    def resolved_xi(self, n: int) -> float:
        if self.kind != "utility_gradient":
            return 1.0 if self.xi is None else float(self.xi)
        return float(self.xi) if self.xi is not None else default_xi(self.utilities, n)

    def kernel_args(self, n: int):
        """(kind, floor, xi, const_p, utility kinds, utility params) for the kernels."""
        const_p = np.zeros((2, n))
        if self.kind == "constant":
            for r in (0, 1):
                row = self.constant_p(r)
                if row.shape != (n,):
                    raise ValueError(f"constant policy has {row.size} probabilities for {n} agents")
                const_p[r] = row
        ukind = np.zeros(n, dtype=np.int64)
        upar = np.zeros((n, 3))
        if self.kind == "utility_gradient":
            if len(self.utilities) != n:
                raise ValueError(f"{len(self.utilities)} utilities given for {n} agents")
            for i, u in enumerate(self.utilities):
                ukind[i] = UTILITY_KINDS[u.kind]
                upar[i] = (u.coef, u.gamma, u.coupling)
        return (POLICY_KINDS[self.kind], float(self.floor), self.resolved_xi(n),
                const_p, ukind, upar)


def default_xi(utilities: Sequence[UtilitySpec], n: int) -> float:
    """Scale that puts the largest initial probability at 0.5 for the uniform allocation."""
    s = 1.0 / n
    slopes = [abs(u.partial(s, s, c)) / s for u in utilities for c in ("a", "b")]
    top = max(slopes)
    if top <= 0:
        raise ValueError("utilities have zero slope at the uniform allocation")
    return 0.5 / top


class AverageWindow:
    """Ring of the last ``N`` states of one resource and of the last ``N + 1`` finite averages.

    While fewer than ``N`` states are buffered the average is over those present.
    """

    def __init__(self, n: int, N: int):
        if N < 1:
            raise ValueError(f"window length must be >= 1, got {N}")
        self.n = n
        self.N = N
        self.buf = np.zeros((N, n))
        self.hist = np.zeros((N + 1, n))
        self.cnt = np.zeros(4, dtype=np.int64)
        self.avg = np.zeros(n)

    def push(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise ValueError(f"expected {self.n} shares, got shape {x.shape}")
        _kernels.observe(x, self.buf, self.hist, self.cnt, self.avg)
        return self.average

    @property
    def count(self) -> int:
        return int(self.cnt[0])

    @property
    def average(self) -> np.ndarray:
        return self.avg.copy()

    def states(self) -> np.ndarray:
        """Buffered states, oldest first."""
        m, pos = int(self.cnt[0]), int(self.cnt[1])
        if m < self.N:
            return self.buf[:m].copy()
        return np.roll(self.buf, -pos, axis=0)

    def averages(self) -> np.ndarray:
        """Buffered finite averages, oldest first (at most ``N + 1``)."""
        m, pos = int(self.cnt[2]), int(self.cnt[3])
        if m < self.N + 1:
            return self.hist[:m].copy()
        return np.roll(self.hist, -pos, axis=0)

    def copy(self) -> "AverageWindow":
        w = AverageWindow(self.n, self.N)
        w.buf[:], w.hist[:], w.cnt[:], w.avg[:] = self.buf, self.hist, self.cnt, self.avg
        return w


def _clamp(p, eps):
    return np.clip(p, eps, 1.0)


def window_mean_policy(win_a: AverageWindow, win_b: AverageWindow, N: int, eps: float) -> np.ndarray:
    """``(1/2N) * (sum of the last N+1 averages of a + same for b)``, clamped.

    Only the averages already buffered are summed; the divisor stays ``2N``.
    """
    if win_a.n != win_b.n:
        raise ValueError("windows belong to resources with different agent counts")
    out = np.empty(win_a.n)
    _kernels.eval_policy(_kernels.POLICY_WINDOW_MEAN, 0, eps, 1.0, np.zeros((2, win_a.n)),
                         np.zeros(win_a.n, dtype=np.int64), np.zeros((win_a.n, 3)),
                         win_a.avg, win_b.avg, win_a.hist, int(win_a.cnt[2]),
                         win_b.hist, int(win_b.cnt[2]), N, out)
    return out


def utility_gradient_policy(xtilde_a, xtilde_b, utilities: Sequence[UtilitySpec], xi: float,
                            eps: float, resource: str = "a") -> np.ndarray:
    """``xi / x_c * df/dx_c`` at the averaged shares, clamped to ``[eps, 1]``."""
    xa = np.asarray(xtilde_a, dtype=float)
    xb = np.asarray(xtilde_b, dtype=float)
    own = xa if resource == "a" else xb
    if np.any(own <= _kernels.DEGENERATE_AVERAGE):
        raise DegenerateAverageError(f"averaged share of resource {resource} too small: {own.min()!r}")
    p = np.array([u.partial(a, b, resource) for u, a, b in zip(utilities, xa, xb)], dtype=float)
    return _clamp(xi * p / own, eps)


def pattern_probability(p, pattern) -> float:
    """Probability of ``pattern`` when agent ``i`` drops independently with probability ``p[i]``."""
    p = np.asarray(p, dtype=float)
    d = as_pattern(pattern, p.size)
    return float(np.prod(np.where(d, p, 1.0 - p)))


def pattern_distribution(p) -> np.ndarray:
    """Probabilities of all ``2**n`` patterns, in :func:`core.all_patterns` order."""
    p = np.asarray(p, dtype=float)
    return np.array([pattern_probability(p, d) for d in all_patterns(p.size)])


def sample_pattern(p, rng: np.random.Generator) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    return rng.random(p.size) < p


class LongTermAverage:
    """Running mean of a stream of share vectors."""

    def __init__(self, n: int):
        self.k = 0
        self.mean = np.zeros(n)

    def update(self, x) -> np.ndarray:
        self.k += 1
        self.mean += (np.asarray(x, dtype=float) - self.mean) / self.k
        return self.mean


def long_term_averages(xs) -> np.ndarray:
    """Row ``k`` is the mean of rows ``0..k`` of ``xs``."""
    return _kernels.running_mean(np.ascontiguousarray(xs, dtype=float))
