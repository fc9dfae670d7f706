"""Command line interface.

::

    syncaimd simulate   --config run.toml [--seed S] [--out DIR]
    syncaimd montecarlo --config run.toml [--seed S] [--out DIR] [--workers W]
    syncaimd verify     --config run.toml [--seed S] [--out DIR]
    syncaimd oracle     --config run.toml [--seed S]

Exit status is 0 on success, 1 on invalid input (bad flags, bad config)
and 2 when a verification or oracle check fails. The output directory
defaults to ``output_dir`` in the config, then ``$SYNCAIMD_OUTPUT_DIR``,
then ``./out``.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from .config import OUTPUT_DIR_ENV, ConfigError, ExperimentConfig
from .engine import run, run_single
from .montecarlo import run_montecarlo
from .output import (OutputError, plot_moments, plot_utilization, write_moments, write_replicas,
                     write_trajectory, write_zeta)
from .verification import BARNSLEY_MAX_N, BARNSLEY_MAX_WINDOW, OracleError, check_barnsley, lemma_suite, perron_oracle

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_FAILED = 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="syncaimd", description="Synchronized two-resource AIMD simulator and verifier.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out=True):
        sp.add_argument("--config", required=True, help="TOML experiment file")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        if out:
            sp.add_argument("--out", help=f"output directory (default: config, ${OUTPUT_DIR_ENV}, ./out)")
        return sp

    s = common(sub.add_parser("simulate", help="one run: trajectory, lifted states and a utilization plot"))
    s.add_argument("--no-plots", action="store_true")
    m = common(sub.add_parser("montecarlo", help="replicated runs: ensemble moments by event index"))
    m.add_argument("--workers", type=int, help="worker threads (overrides the config)")
    m.add_argument("--replicas", type=int, help="replica count (overrides the config)")
    m.add_argument("--no-plots", action="store_true")
    common(sub.add_parser("verify", help="contraction checks of the lifted chain, as JSON"))
    common(sub.add_parser("oracle", help="time average against the Perron vector (constant policy)"), out=False)
    return p


def _load(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError(f"--seed: must be >= 0, got {args.seed}")
        cfg = cfg.with_(seed=args.seed)
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = cfg.resolved_output_dir(args.out)
    result = run(cfg.model, cfg.meta_events, seed=cfg.seed, ic_range=cfg.ic_range)
    paths = [write_trajectory(result, out / "trajectory.csv"), write_zeta(result, out / "zeta.csv")]
    if not args.no_plots:
        paths.append(plot_utilization(result, out / "utilization.svg"))
    for path in paths:
        print(path)
    return EXIT_OK


def cmd_montecarlo(args) -> int:
    cfg = _load(args)
    if args.workers is not None:
        if args.workers < 1:
            raise ConfigError(f"--workers: must be >= 1, got {args.workers}")
        cfg = cfg.with_(workers=args.workers)
    if args.replicas is not None:
        if args.replicas < 1:
            raise ConfigError(f"--replicas: must be >= 1, got {args.replicas}")
        cfg = cfg.with_(replicas=args.replicas)
    out = cfg.resolved_output_dir(args.out)
    res = run_montecarlo(cfg)
    paths = [write_moments(res.moments, out / "moments.csv"),
             write_replicas(res.summaries, cfg.model.n, out / "replicas.csv")]
    if not args.no_plots:
        for c in ("a", "b"):
            paths.append(plot_moments(res.moments, out / f"moments_{c}.svg", resource=c))
    for path in paths:
        print(path)
    if not res.all_synchronized:
        print("synchronization invariant violated in at least one replica", file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def verification_report(cfg: ExperimentConfig) -> dict:
    v = cfg.verify
    seed = v.seed
    pa, pb, N = cfg.params_a, cfg.params_b, cfg.N
    suite = lemma_suite(pa, pb, N, n_gamma=v.n_gamma, samples=v.samples, seed=seed)
    report = {name: rep.to_dict() for name, rep in suite.items()}
    passed = all(rep.passed for rep in suite.values())
    small = pa.n <= BARNSLEY_MAX_N and N <= BARNSLEY_MAX_WINDOW
    if small and cfg.policy.kind != "window_mean":
        b = check_barnsley(pa, pb, cfg.policy, N, pairs=v.pairs, seed=seed)
        report["barnsley"] = b.to_dict()
        passed &= b.passed
    else:
        reason = ("instance too large for exhaustive enumeration" if not small
                  else "window_mean probabilities are not a function of the lifted state")
        report["barnsley"] = {"skipped": reason}
    report["passed"] = bool(passed)
    return report


def cmd_verify(args) -> int:
    cfg = _load(args)
    if args.seed is not None:
        cfg = cfg.with_(verify=replace(cfg.verify, seed=args.seed))
    report = verification_report(cfg)
    text = json.dumps(report, indent=2, sort_keys=True)
    print(text)
    out = cfg.resolved_output_dir(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "verify.json").write_text(text + "\n")
    except OSError as e:
        raise OutputError(f"{out / 'verify.json'}: cannot write ({e.strerror or e})") from e
    return EXIT_OK if report["passed"] else EXIT_FAILED


def cmd_oracle(args) -> int:
    cfg = _load(args)
    if cfg.policy.kind != "constant":
        raise ConfigError(f"policy.kind: oracle needs a constant policy, got {cfg.policy.kind!r}")
    ok = True
    for r, c in enumerate(("a", "b")):
        params = cfg.params_a if c == "a" else cfg.params_b
        p = cfg.policy.constant_p(r)
        single = run_single(params, cfg.policy, cfg.oracle.events, seed=cfg.seed ^ r, resource=c)
        sim = single.states.mean(axis=0)
        fixed = perron_oracle(params, p)
        gap = float(np.abs(sim - fixed).sum())
        ok &= gap <= cfg.oracle.tolerance
        print(f"resource {c}: simulated mean {np.array2string(sim, precision=6)}")
        print(f"resource {c}: Perron vector  {np.array2string(fixed, precision=6)}")
        print(f"resource {c}: 1-norm gap {gap:.3e} (tolerance {cfg.oracle.tolerance:g})")
    return EXIT_OK if ok else EXIT_FAILED


COMMANDS = {"simulate": cmd_simulate, "montecarlo": cmd_montecarlo, "verify": cmd_verify, "oracle": cmd_oracle}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(e, file=sys.stderr)
        return EXIT_INVALID
    try:
        return COMMANDS[args.command](args)
    except OracleError as e:
        print(f"syncaimd {args.command}: {e}", file=sys.stderr)
        return EXIT_FAILED
    except (ConfigError, OutputError, ValueError) as e:
        print(f"syncaimd {args.command}: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
