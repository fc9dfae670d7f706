"""Numerical checks of the contraction and ergodicity conditions of the lifted chain.

All checks sample at random from a seeded generator and report the worst
case they saw next to the bound they test against. Dense lifted matrices
are materialized here only, so every check is limited to ``n * N <= 64``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .core import ResourceParams, all_patterns, build_aimd_matrix, contraction_factor
from .lifted import (DENSE_LIMIT, LiftedState, PatternWindow, build_gamma, full_drop_gamma,
                     norm_N1_batch, window_probability_table, _sequences)
from .policy import PolicySpec, pattern_probability

BARNSLEY_MAX_N = 2
BARNSLEY_MAX_WINDOW = 2


class OracleError(RuntimeError):
    """Power iteration did not reach the requested residual."""


@dataclass
class ContractionReport:
    name: str
    max_ratio: float
    bound: float
    tol: float
    passed: bool
    samples: int
    seed: int | None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SubspaceReport:
    name: str
    max_residual: float
    tol: float
    passed: bool
    samples: int
    seed: int | None

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class BarnsleyReport:
    """Outcome of the two average-contraction conditions on sampled pairs.

    ``worst_ratio_a`` is the largest ``lhs / (r * ||zeta - eta||)`` seen for
    condition (a); ``min_mass_b`` the smallest probability mass of the
    contracting windows seen for condition (b).
    """

    r: float
    delta: float
    p_hat: float
    p_hat_lower_bound: float
    q: float
    worst_ratio_a: float
    min_mass_b: float
    violations_a: int
    violations_b: int
    pairs: int
    seed: int | None
    passed_a: bool
    passed_b: bool

    @property
    def passed(self) -> bool:
        return self.passed_a and self.passed_b and self.r < 1.0 and self.delta > 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def _guard(n: int, N: int):
    if n * N > DENSE_LIMIT:
        raise ValueError(f"n*N = {n * N} exceeds the dense verification limit {DENSE_LIMIT}")


def random_simplex(rng: np.random.Generator, size: int, n: int) -> np.ndarray:
    """Uniform points of the simplex, shape ``(size, n)``."""
    return rng.dirichlet(np.ones(n), size=size)


def random_lifted(rng: np.random.Generator, size: int, n: int, N: int) -> np.ndarray:
    """Uniform points of the product of ``2N`` simplices, flat layout ``(size, 2nN)``."""
    return random_simplex(rng, size * 2 * N, n).reshape(size, 2 * N * n)


def random_subspace(rng: np.random.Generator, size: int, n: int, N: int) -> np.ndarray:
    """Samples of the zero-sum subspace as differences of two lifted simplex points."""
    return random_lifted(rng, size, n, N) - random_lifted(rng, size, n, N)


def random_window(rng: np.random.Generator, n: int, N: int) -> PatternWindow:
    return PatternWindow(rng.random((N, n)) < 0.5, rng.random((N, n)) < 0.5)


def resource_q(params: ResourceParams, N: int) -> float:
    """Full-drop contraction bound of one resource, using its largest beta."""
    return contraction_factor(params.beta_max, N)


def lemma_q(params_a: ResourceParams, params_b: ResourceParams, N: int) -> float:
    return max(resource_q(params_a, N), resource_q(params_b, N))


def check_nonexpansive(params_a: ResourceParams, params_b: ResourceParams, N: int,
                       n_gamma: int = 1000, samples: int = 1000, seed: int | None = 0,
                       tol: float = 1e-12) -> ContractionReport:
    """``||Gamma zeta||_{N,1} <= ||zeta||_{N,1}`` for random windows and random real ``zeta``."""
    n = params_a.n
    _guard(n, N)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_gamma):
        G = build_gamma(params_a, params_b, random_window(rng, n, N)).dense()
        Z = rng.standard_normal((samples, 2 * n * N))
        ratios = norm_N1_batch(Z @ G.T, n) / norm_N1_batch(Z, n)
        worst = max(worst, float(ratios.max()))
    return ContractionReport("nonexpansive", worst, 1.0, tol, worst <= 1.0 + tol,
                             n_gamma * samples, seed, {"n_gamma": n_gamma})


def check_subspace_invariance(params_a: ResourceParams, params_b: ResourceParams, N: int,
                              n_gamma: int = 1000, samples: int = 1000, seed: int | None = 0,
                              tol: float = 1e-12) -> SubspaceReport:
    """Vectors whose first block of each half sums to zero keep that property under every Gamma."""
    n = params_a.n
    _guard(n, N)
    rng = np.random.default_rng(seed)
    nN = n * N
    worst = 0.0
    for _ in range(n_gamma):
        G = build_gamma(params_a, params_b, random_window(rng, n, N)).dense()
        Z = rng.standard_normal((samples, 2 * nN))
        for off in (0, nN):
            Z[:, off:off + n] -= Z[:, off:off + n].mean(axis=1, keepdims=True)
        Y = Z @ G.T
        res = np.maximum(np.abs(Y[:, :n].sum(axis=1)), np.abs(Y[:, nN:nN + n].sum(axis=1)))
        worst = max(worst, float(res.max()))
    return SubspaceReport("subspace_invariance", worst, tol, worst <= tol, n_gamma * samples, seed)


def check_full_drop_contraction(params_a: ResourceParams, params_b: ResourceParams, N: int,
                                samples: int = 10_000, seed: int | None = 0,
                                tol: float = 1e-9) -> ContractionReport:
    """The all-full-drop window contracts the zero-sum subspace by ``q``."""
    n = params_a.n
    _guard(n, N)
    rng = np.random.default_rng(seed)
    G = full_drop_gamma(params_a, params_b, N).dense()
    Z = random_subspace(rng, samples, n, N)
    Y = Z @ G.T
    ratios = norm_N1_batch(Y, n) / norm_N1_batch(Z, n)
    nN = n * N
    per = {}
    for c, off, params in (("a", 0, params_a), ("b", nN, params_b)):
        r_c = norm_N1_batch(Y[:, off:off + nN], n) / norm_N1_batch(Z, n)
        per[c] = {"q": resource_q(params, N), "beta_max": params.beta_max, "max_ratio": float(r_c.max())}
    q = lemma_q(params_a, params_b, N)
    worst = float(ratios.max())
    return ContractionReport("full_drop_contraction", worst, q, tol, worst <= q + tol, samples, seed, per)


def _sequence_blocks(params: ResourceParams, N: int) -> np.ndarray:
    """First-column blocks of gamma for every pattern sequence; shape ``(S**N, N, n, n)``."""
    pats = np.array(list(all_patterns(params.n)))
    seqs = _sequences(pats.shape[0], N)
    mats = np.array([build_aimd_matrix(params, d) for d in pats])
    out = np.empty((seqs.shape[0], N, params.n, params.n))
    for v, seq in enumerate(seqs):
        phi = np.eye(params.n)
        phis = []
        for j in seq:
            phi = mats[j] @ phi
            phis.append(phi)
        rev = np.array(phis[::-1])
        out[v] = rev.cumsum(axis=0) / np.arange(1, N + 1)[:, None, None]
    return out


def _half_norms(blocks: np.ndarray, d1: np.ndarray) -> np.ndarray:
    # ||gamma_c d||_{N,1} for every sequence: (P, V)
    y = np.einsum("vkij,pj->pvki", blocks, d1)
    return np.abs(y).sum(axis=3).max(axis=2)


def check_barnsley(params_a: ResourceParams, params_b: ResourceParams, policy: PolicySpec, N: int,
                   pairs: int = 10_000, seed: int | None = 0, tol: float = 1e-12,
                   chunk: int = 2000) -> BarnsleyReport:
    """Both average-contraction conditions by exhaustive enumeration of pattern windows.

    ``r = p_hat * q + (1 - p_hat)`` and ``delta = p_hat**2``, where
    ``p_hat`` is the exact full-drop window probability for constant policies
    and the smallest one observed over the sampled states otherwise.
    """
    n = params_a.n
    if n > BARNSLEY_MAX_N or N > BARNSLEY_MAX_WINDOW:
        raise ValueError(f"exhaustive enumeration limited to n <= {BARNSLEY_MAX_N}, N <= {BARNSLEY_MAX_WINDOW}")
    rng = np.random.default_rng(seed)
    nN = n * N
    Zeta = random_lifted(rng, pairs, n, N)
    Eta = random_lifted(rng, pairs, n, N)
    q = lemma_q(params_a, params_b, N)
    Ga = _sequence_blocks(params_a, N)
    Gb = _sequence_blocks(params_b, N)

    if policy.kind == "constant":
        table = window_probability_table(LiftedState.from_vector(Zeta[0], n), params_a, params_b, policy)
        tables_z = tables_e = None
        p_hat = float(table[-1, -1])
    else:
        tables_z = np.array([window_probability_table(LiftedState.from_vector(z, n), params_a, params_b, policy)
                             for z in Zeta])
        tables_e = np.array([window_probability_table(LiftedState.from_vector(e, n), params_a, params_b, policy)
                             for e in Eta])
        p_hat = float(min(tables_z[:, -1, -1].min(), tables_e[:, -1, -1].min()))
    r = p_hat * q + (1.0 - p_hat)
    delta = p_hat ** 2

    worst_a = 0.0
    min_b = np.inf
    viol_a = viol_b = 0
    for s in range(0, pairs, chunk):
        D = Zeta[s:s + chunk] - Eta[s:s + chunk]
        dn = norm_N1_batch(D, n)
        na = _half_norms(Ga, D[:, :n])
        nb = _half_norms(Gb, D[:, nN:nN + n])
        norms = np.maximum(na[:, :, None], nb[:, None, :])
        if tables_z is None:
            pz = pe = table[None]
        else:
            pz, pe = tables_z[s:s + chunk], tables_e[s:s + chunk]
        lhs = (pz * norms).sum(axis=(1, 2))
        bound = r * dn
        viol_a += int(np.count_nonzero(lhs > bound + tol))
        nz = dn > 0
        if np.any(nz):
            worst_a = max(worst_a, float((lhs[nz] / bound[nz]).max()))
        contracting = norms <= (r * dn)[:, None, None] + tol
        mass = (pz * pe * contracting).sum(axis=(1, 2))
        viol_b += int(np.count_nonzero(mass < delta - tol))
        min_b = min(min_b, float(mass.min()))

    floor_bound = policy.floor ** (2 * n * N)
    return BarnsleyReport(r, delta, p_hat, floor_bound, q, worst_a, min_b, viol_a, viol_b, pairs, seed,
                          viol_a == 0, viol_b == 0)


def mean_matrix(params: ResourceParams, p) -> np.ndarray:
    """Expected AIMD matrix ``sum_j p_j A_j`` under independent per-agent drops."""
    p = np.asarray(p, dtype=float)
    return sum(pattern_probability(p, d) * build_aimd_matrix(params, d) for d in all_patterns(params.n))


def perron_oracle(params: ResourceParams, p, tol: float = 1e-12, max_iter: int = 10 ** 6) -> np.ndarray:
    """Simplex fixed point of the expected AIMD matrix, by power iteration."""
    A = mean_matrix(params, p)
    x = np.full(params.n, 1.0 / params.n)
    for _ in range(max_iter):
        y = A @ x
        y /= y.sum()
        if np.abs(A @ y - y).sum() <= tol:
            return y
        x = y
    raise OracleError(f"power iteration did not reach residual {tol} in {max_iter} steps")


def lemma_suite(params_a: ResourceParams, params_b: ResourceParams, N: int, n_gamma: int = 1000,
                samples: int = 1000, seed: int = 0) -> dict:
    """All three lemma checks with the default tolerances."""
    return {
        "nonexpansive": check_nonexpansive(params_a, params_b, N, n_gamma, samples, seed),
        "subspace_invariance": check_subspace_invariance(params_a, params_b, N, n_gamma, samples, seed + 1),
        "full_drop_contraction": check_full_drop_contraction(params_a, params_b, N,
                                                             max(samples, 10_000), seed + 2),
    }
