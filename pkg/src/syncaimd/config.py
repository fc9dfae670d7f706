"""Experiment configuration files (TOML).

Example::

    seed = 42
    meta_events = 1000      # L, windows per run
    replicas = 150          # R, Monte Carlo replicas
    workers = 1
    output_dir = "out"
    global_md = false

    [initial]               # raw demands per agent, before growth to capacity
    low = 0.0
    high = 0.25

    [resource_a]
    alpha = [0.01, 0.08, 0.61, 0.045]
    beta = [0.95, 0.9, 0.85, 0.75]
    capacity = 1.0

    [resource_b]
    alpha = [0.07, 0.08, 0.025, 0.02]
    beta = [0.65, 0.7, 0.8, 0.85]

    [policy]
    kind = "window_mean"    # constant | window_mean | utility_gradient
    window = 5              # N = M
    floor = 0.01

Optional tables: ``[oracle]`` (``events``, ``tolerance``) and ``[verify]``
(``n_gamma``, ``samples``, ``pairs``, ``seed``). A constant policy lists
``probabilities = [[...], [...]]``; a utility-gradient policy lists one
``[[policy.utilities]]`` table per agent with ``kind``, ``coef``, ``gamma``
and ``coupling``, and may set ``xi``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
import tomli_w

from .core import ResourceParams
from .engine import CoupledModel
from .policy import PolicySpec, UtilitySpec

OUTPUT_DIR_ENV = "SYNCAIMD_OUTPUT_DIR"


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


@dataclass(frozen=True)
class OracleSettings:
    events: int = 100_000
    tolerance: float = 1e-2


@dataclass(frozen=True)
class VerifySettings:
    n_gamma: int = 200
    samples: int = 200
    pairs: int = 2000
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    params_a: ResourceParams
    params_b: ResourceParams
    policy: PolicySpec
    meta_events: int = 1000
    replicas: int = 1
    seed: int = 0
    initial_low: float = 0.0
    initial_high: float = 0.25
    workers: int = 1
    output_dir: str | None = None
    global_md: bool = False
    oracle: OracleSettings = field(default_factory=OracleSettings)
    verify: VerifySettings = field(default_factory=VerifySettings)

    @property
    def N(self) -> int:
        return self.policy.window

    @property
    def model(self) -> CoupledModel:
        return CoupledModel(self.params_a, self.params_b, self.policy, self.global_md)

    @property
    def ic_range(self) -> tuple[float, float]:
        return (self.initial_low, self.initial_high)

    def resolved_output_dir(self, override: str | None = None) -> Path:
        return Path(override or self.output_dir or os.environ.get(OUTPUT_DIR_ENV) or "out")

    def with_(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)

    # -- serialization --------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "seed": self.seed,
            "meta_events": self.meta_events,
            "replicas": self.replicas,
            "workers": self.workers,
            "global_md": self.global_md,
            "initial": {"low": self.initial_low, "high": self.initial_high},
            "resource_a": _resource_dict(self.params_a),
            "resource_b": _resource_dict(self.params_b),
            "policy": _policy_dict(self.policy),
            "oracle": {"events": self.oracle.events, "tolerance": self.oracle.tolerance},
            "verify": {"n_gamma": self.verify.n_gamma, "samples": self.verify.samples,
                       "pairs": self.verify.pairs, "seed": self.verify.seed},
        }
        if self.output_dir is not None:
            d["output_dir"] = self.output_dir
        return d

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {"seed", "meta_events", "replicas", "workers", "global_md", "output_dir",
                 "initial", "resource_a", "resource_b", "policy", "oracle", "verify"}
        for key in d:
            if key not in known:
                raise ConfigError(f"{key}: unknown key")
        params_a = _resource(d, "resource_a")
        params_b = _resource(d, "resource_b")
        if params_a.n != params_b.n:
            raise ConfigError(f"resource_b.alpha: {params_b.n} agents, but resource_a has {params_a.n}")
        policy = _policy(d.get("policy", {}), params_a.n)
        init = _table(d, "initial")
        low = _number(init, "low", 0.0, "initial.low")
        high = _number(init, "high", 0.25, "initial.high")
        if not (0.0 <= low <= high) or high <= 0:
            raise ConfigError(f"initial: need 0 <= low <= high and high > 0, got [{low}, {high}]")
        orc = _table(d, "oracle")
        ver = _table(d, "verify")
        out_dir = d.get("output_dir")
        if out_dir is not None and not isinstance(out_dir, str):
            raise ConfigError("output_dir: expected a string")
        gmd = d.get("global_md", False)
        if not isinstance(gmd, bool):
            raise ConfigError("global_md: expected true or false")
        cfg = cls(
            params_a=params_a,
            params_b=params_b,
            policy=policy,
            meta_events=_int(d, "meta_events", 1000, "meta_events", minimum=1),
            replicas=_int(d, "replicas", 1, "replicas", minimum=1),
            seed=_int(d, "seed", 0, "seed", minimum=0),
            initial_low=low,
            initial_high=high,
            workers=_int(d, "workers", 1, "workers", minimum=1),
            output_dir=out_dir,
            global_md=gmd,
            oracle=OracleSettings(_int(orc, "events", 100_000, "oracle.events", minimum=1),
                                  _number(orc, "tolerance", 1e-2, "oracle.tolerance")),
            verify=VerifySettings(_int(ver, "n_gamma", 200, "verify.n_gamma", minimum=1),
                                  _int(ver, "samples", 200, "verify.samples", minimum=1),
                                  _int(ver, "pairs", 2000, "verify.pairs", minimum=1),
                                  _int(ver, "seed", 0, "verify.seed", minimum=0)),
        )
        try:
            cfg.model
        except ValueError as e:
            raise ConfigError(f"policy: {e}") from e
        return cfg

    @classmethod
    def loads(cls, text: str) -> "ExperimentConfig":
        try:
            return cls.from_dict(tomllib.loads(text))
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"<toml>: {e}") from e

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as e:
            raise ConfigError(f"{path}: cannot read ({e.strerror})") from e
        try:
            return cls.loads(text)
        except ConfigError as e:
            raise ConfigError(f"{path}: {e}") from e


def _table(d: dict, key: str) -> dict:
    t = d.get(key, {})
    if not isinstance(t, dict):
        raise ConfigError(f"{key}: expected a table")
    return t


def _number(d: dict, key: str, default, path: str) -> float:
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {v!r}")
    return float(v)


def _int(d: dict, key: str, default, path: str, minimum: int | None = None) -> int:
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path}: must be >= {minimum}, got {v}")
    return v


def _vector(d: dict, key: str, path: str) -> list[float]:
    v = d.get(key)
    if not isinstance(v, list) or not v or not all(isinstance(e, (int, float)) and not isinstance(e, bool) for e in v):
        raise ConfigError(f"{path}: expected a nonempty list of numbers")
    return [float(e) for e in v]


def _resource(d: dict, key: str) -> ResourceParams:
    if key not in d:
        raise ConfigError(f"{key}: missing table")
    t = _table(d, key)
    for k in t:
        if k not in ("alpha", "beta", "capacity"):
            raise ConfigError(f"{key}.{k}: unknown key")
    alpha = _vector(t, "alpha", f"{key}.alpha")
    beta = _vector(t, "beta", f"{key}.beta")
    cap = _number(t, "capacity", 1.0, f"{key}.capacity")
    if len(alpha) != len(beta):
        raise ConfigError(f"{key}.beta: {len(beta)} entries, but alpha has {len(alpha)}")
    try:
        return ResourceParams.from_arrays(alpha, beta, cap)
    except ValueError as e:
        raise ConfigError(f"{key}: {e}") from e


def _policy(t: dict, n: int) -> PolicySpec:
    if not isinstance(t, dict):
        raise ConfigError("policy: expected a table")
    for k in t:
        if k not in ("kind", "window", "floor", "xi", "probabilities", "utilities"):
            raise ConfigError(f"policy.{k}: unknown key")
    utils = []
    for i, u in enumerate(t.get("utilities", [])):
        try:
            utils.append(UtilitySpec(**u))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"policy.utilities[{i}]: {e}") from e
    xi = t.get("xi")
    try:
        return PolicySpec(
            kind=t.get("kind", "window_mean"),
            window=_int(t, "window", 5, "policy.window", minimum=1),
            floor=_number(t, "floor", 0.01, "policy.floor"),
            xi=None if xi is None else _number(t, "xi", None, "policy.xi"),
            probabilities=tuple(tuple(row) for row in t.get("probabilities", ())),
            utilities=tuple(utils),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"policy: {e}") from e


def _resource_dict(p: ResourceParams) -> dict:
    return {"alpha": [float(v) for v in p.alpha], "beta": [float(v) for v in p.beta], "capacity": p.capacity}


def _policy_dict(p: PolicySpec) -> dict:
    d = {"kind": p.kind, "window": p.window, "floor": p.floor}
    if p.xi is not None:
        d["xi"] = p.xi
    if p.probabilities:
        d["probabilities"] = [list(row) for row in p.probabilities]
    if p.utilities:
        d["utilities"] = [{"kind": u.kind, "coef": u.coef, "gamma": u.gamma, "coupling": u.coupling}
                          for u in p.utilities]
    return d
