"""AIMD matrices, inter-event times and simplex predicates.

Shares are expressed as fractions of the resource capacity, so a state is a
point of the standard simplex. A drop pattern is a boolean vector: ``True``
means the agent performs its multiplicative decrease at the capacity event.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np

from . import _kernels

SIMPLEX_TOL = 1e-12


@dataclass(frozen=True)
class AgentParams:
    """Growth rate and multiplicative-decrease factor of one agent."""

    alpha: float
    beta: float

    def __post_init__(self):
        if not np.isfinite(self.alpha) or self.alpha <= 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not (0.0 <= self.beta < 1.0):
            raise ValueError(f"beta must lie in [0, 1), got {self.beta}")


@dataclass(frozen=True)
class ResourceParams:
    """The agents sharing one resource, and its capacity."""

    agents: tuple[AgentParams, ...]
    capacity: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "agents", tuple(self.agents))
        if len(self.agents) < 1:
            raise ValueError("a resource needs at least one agent")
        if not np.isfinite(self.capacity) or self.capacity <= 0:
            raise ValueError(f"capacity must be positive, got {self.capacity}")

    @classmethod
    def from_arrays(cls, alpha: Sequence[float], beta: Sequence[float],
                    capacity: float = 1.0) -> "ResourceParams":
        if len(alpha) != len(beta):
            raise ValueError(f"alpha has {len(alpha)} entries but beta has {len(beta)}")
        return cls(tuple(AgentParams(float(a), float(b)) for a, b in zip(alpha, beta)),
                   float(capacity))

    @property
    def n(self) -> int:
        return len(self.agents)

    @cached_property
    def alpha(self) -> np.ndarray:
        a = np.array([ag.alpha for ag in self.agents], dtype=float)
        a.flags.writeable = False
        return a

    @cached_property
    def beta(self) -> np.ndarray:
        b = np.array([ag.beta for ag in self.agents], dtype=float)
        b.flags.writeable = False
        return b

    @property
    def beta_max(self) -> float:
        return float(self.beta.max())


def as_pattern(pattern, n: int) -> np.ndarray:
    """Validate a drop pattern and return it as a boolean array of length ``n``."""
    d = np.asarray(pattern, dtype=bool)
    if d.shape != (n,):
        raise ValueError(f"drop pattern must have length {n}, got shape {d.shape}")
    return d


def full_drop(n: int) -> np.ndarray:
    return np.ones(n, dtype=bool)


def no_drop(n: int) -> np.ndarray:
    return np.zeros(n, dtype=bool)


def all_patterns(n: int) -> Iterator[np.ndarray]:
    """All 2**n drop patterns; index j has agent i dropping iff bit i of j is set."""
    for bits in itertools.product((False, True), repeat=n):
        yield np.array(bits[::-1], dtype=bool)


def pattern_index(pattern) -> int:
    d = np.asarray(pattern, dtype=bool)
    return int(np.dot(d, 1 << np.arange(d.size)))


def pattern_bits(pattern) -> str:
    return "".join("1" if b else "0" for b in np.asarray(pattern, dtype=bool))


def is_on_simplex(x, tol: float = SIMPLEX_TOL) -> bool:
    x = np.asarray(x, dtype=float)
    return bool(x.ndim == 1 and np.all(x >= -tol) and abs(x.sum() - 1.0) <= tol)


def as_share_vector(x, n: int | None = None, tol: float = SIMPLEX_TOL) -> np.ndarray:
    """Return ``x`` as a float array after checking it lies on the simplex."""
    x = np.asarray(x, dtype=float)
    if n is not None and x.shape != (n,):
        raise ValueError(f"share vector must have length {n}, got shape {x.shape}")
    if not is_on_simplex(x, tol):
        raise ValueError(f"not a point of the simplex (sum={x.sum()!r}, min={x.min()!r})")
    return x


def build_aimd_matrix(params: ResourceParams, pattern) -> np.ndarray:
    """Dense AIMD matrix ``diag(b) + alpha (e - b)^T / sum(alpha)``.

    ``b`` holds ``beta_i`` for dropping agents and 1 otherwise.
    """
    d = as_pattern(pattern, params.n)
    b = np.where(d, params.beta, 1.0)
    return np.diag(b) + np.outer(params.alpha / params.alpha.sum(), 1.0 - b)


def apply_aimd(params: ResourceParams, pattern, x) -> np.ndarray:
    """``A x`` in O(n) without forming the matrix."""
    d = as_pattern(pattern, params.n)
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    _kernels.aimd_apply(params.alpha, params.beta, d, x, out)
    return out


def inter_event_time(params: ResourceParams, pattern, x) -> float:
    """Time until the total share is back at capacity after the MD given by ``pattern``.

    ``T = C (1 - sum_i b_i x_i) / sum_i alpha_i``; zero for the no-drop pattern.
    """
    d = as_pattern(pattern, params.n)
    if not d.any():
        return 0.0
    x = np.asarray(x, dtype=float)
    b = np.where(d, params.beta, 1.0)
    t = params.capacity * (1.0 - float(b @ x)) / float(params.alpha.sum())
    return max(t, 0.0)


def contraction_factor(beta_resource: float, N: int) -> float:
    """Mean of ``beta**i`` for ``i = 1..N``."""
    if not (0.0 <= beta_resource < 1.0):
        raise ValueError(f"beta must lie in [0, 1), got {beta_resource}")
    if N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    return float(np.mean(beta_resource ** np.arange(1, N + 1)))


def is_column_stochastic(m, tol: float = SIMPLEX_TOL) -> bool:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")
    return bool(np.all(m >= -tol) and np.all(np.abs(m.sum(axis=0) - 1.0) <= tol))
