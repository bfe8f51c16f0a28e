"""Command-line entry point: ``umnicrl {run,trial,oracle-check,counterexample,kappa}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import harness, theory


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="output path prefix")
    p.add_argument("--jobs", type=int, default=1)


def _config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON or YAML file with ExperimentConfig fields")
    p.add_argument("--n", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--n-samples", type=int)
    p.add_argument("--n-graphs", type=int)
    p.add_argument("--density", type=float)
    p.add_argument("--kind", choices=["soft", "hard"], dest="intervention_kind")
    p.add_argument("--mode", choices=["oracle", "estimated"], dest="score_mode")
    p.add_argument("--rank-tol", type=float)
    p.add_argument("--noise-tol", type=float)


def _load_config(args) -> harness.ExperimentConfig:
    base = harness.ExperimentConfig.load(args.config) if args.config else harness.ExperimentConfig()
    keys = ["n", "d", "n_samples", "n_graphs", "density", "intervention_kind", "score_mode", "rank_tol", "noise_tol", "seed"]
    return harness.with_overrides(base, **{k: getattr(args, k, None) for k in keys})


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="umnicrl", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a batch of seeded trials")
    _config_flags(p)
    _common(p)

    p = sub.add_parser("trial", help="run one trial and print its row")
    _config_flags(p)
    _common(p)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--trace", help="write the recovery trace as JSON here")

    p = sub.add_parser("oracle-check", help="exactness invariants with analytic scores")
    _common(p)
    p.add_argument("--instances", type=int, default=50)
    p.add_argument("--kind", choices=["soft", "hard", "both"], default="both")

    p = sub.add_parser("counterexample", help="two-node pair with matching observations")
    _common(p)
    p.add_argument("vbar", type=float, nargs=4, metavar=("V1", "V1S", "V2", "V2S"))

    p = sub.add_parser("kappa", help="print the lattice bound table")
    _common(p)
    p.add_argument("--max-n", type=int, default=10)
    p.add_argument("--brute", action="store_true", help="also brute-force max |det| for n <= 6")
    return parser


def cmd_run(args) -> int:
    config = _load_config(args)
    _, summary = harness.run_batch(config, jobs=args.jobs, out=args.out)
    print(json.dumps(summary))
    return 0


def cmd_trial(args) -> int:
    config = _load_config(args)
    if args.trace:
        seed = harness.trial_seed(config.seed, args.index)
        rng = np.random.default_rng(seed)
        sem, specs, model = harness.draw_instance(config, rng)
        try:
            _, _, state = harness.recover_instance(config, sem, specs, model, rng)
            state.dump(args.trace)
        except harness.RecoveryError as exc:
            print(f"recovery failed: {exc}", file=sys.stderr)
    row = harness.run_trial(config, args.index)
    if args.out:
        harness.write_csv(args.out, [row], harness.TRIAL_COLUMNS, harness.CSV_VERSION)
    print(json.dumps(row))
    return 0 if row["status"] == "ok" else 1


def cmd_oracle_check(args) -> int:
    master = args.seed or 0
    kinds = ["soft", "hard"] if args.kind == "both" else [args.kind]
    failures = 0
    for k in range(args.instances):
        n = 2 + k % 4
        for kind in kinds:
            res = harness.oracle_check_instance(n, n + 1, kind, harness.trial_seed(master, k))
            failures += not res["ok"]
            status = "ok" if res["ok"] else "FAIL"
            bad = [name for name, v in res.items() if name.startswith("stage") and not v]
            print(f"{status} instance={k} n={n} kind={kind} {' '.join(bad)}")
    print(f"{failures} failing checks")
    return 1 if failures else 0


def cmd_counterexample(args) -> int:
    try:
        pair = theory.build_counterexample(args.vbar)
    except (theory.InfeasibleError, theory.ConstructionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.out:
        pair.save(args.out)
    print(json.dumps({"v": pair.v, "abcd": pair.abcd,
                      "max_residual": float(np.abs(theory.counterexample_residuals(pair)).max())}))
    return 0


def cmd_kappa(args) -> int:
    print("n,kappa" + (",brute_max_det" if args.brute else ""))
    for n in range(2, args.max_n + 1):
        line = f"{n},{theory.kappa_bound(n)}"
        if args.brute:
            line += f",{theory.max_binary_det(n - 1) if n <= 6 else ''}"
        print(line)
    return 0


COMMANDS = {
    "run": cmd_run,
    "trial": cmd_trial,
    "oracle-check": cmd_oracle_check,
    "counterexample": cmd_counterexample,
    "kappa": cmd_kappa,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    raise SystemExit(main())
