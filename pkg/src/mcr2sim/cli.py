"""Command-line interface for the simulator.

Subcommands
-----------
run          run one scenario from a JSON config
sweep        sweep one axis (power / slots / rx_antennas) of a scenario
sphere       3-D sphere visualization experiment (real mode)
lemma-check  verify the logdet surrogate identities on random instances
grad-check   verify the objective gradient against finite differences
"""

import argparse
import json
import sys

import numpy as np

from .bca import SolverOptions
from .harness import ScenarioConfig, run_scenario, sphere_experiment, sweep
from .verify import grad_check, lemma_check


def _load_config(args):
    with open(args.config) as fh:
        config = ScenarioConfig.from_json(json.load(fh))
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    if args.scheme:
        config = config.replace(schemes=tuple(args.scheme))
    return config


def _add_run_flags(sub):
    sub.add_argument("--config", required=True, help="scenario JSON file")
    sub.add_argument("--seed", type=int, default=None, help="override master seed")
    sub.add_argument("--out", default=None, help="output directory")
    sub.add_argument("--jobs", type=int, default=1, help="parallel channel draws")
    sub.add_argument("--scheme", action="append", default=None,
                     help="restrict to a scheme (repeatable)")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="mcr2sim", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    subs = parser.add_subparsers(dest="command", required=True)

    run_p = subs.add_parser("run", help="run one scenario")
    _add_run_flags(run_p)

    sweep_p = subs.add_parser("sweep", help="sweep one scenario axis")
    _add_run_flags(sweep_p)
    sweep_p.add_argument("--axis", required=True,
                         choices=("power", "slots", "rx_antennas"))
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated axis values")

    sphere_p = subs.add_parser("sphere", help="sphere visualization experiment")
    sphere_p.add_argument("--snr", type=float, required=True, help="transmit SNR in dB")
    sphere_p.add_argument("--seed", type=int, default=0)
    sphere_p.add_argument("--draws", type=int, default=1)
    sphere_p.add_argument("--out", default=None)

    lemma_p = subs.add_parser("lemma-check", help="surrogate identity check")
    lemma_p.add_argument("--trials", type=int, default=50)
    lemma_p.add_argument("--seed", type=int, default=0)

    grad_p = subs.add_parser("grad-check", help="finite-difference gradient check")
    grad_p.add_argument("--scenarios", type=int, default=20)
    grad_p.add_argument("--seed", type=int, default=0)

    args = parser.parse_args(argv)

    if args.command == "run":
        config = _load_config(args)
        record = run_scenario(config, out_dir=args.out, jobs=args.jobs)
        print(json.dumps(record.aggregates, sort_keys=True, indent=1))
        return 0

    if args.command == "sweep":
        config = _load_config(args)
        values = [v for v in args.values.split(",") if v != ""]
        values = [float(v) if args.axis == "power" else int(v) for v in values]
        records = sweep(config, args.axis, values, out_dir=args.out, jobs=args.jobs)
        for value, record in zip(values, records):
            print(f"{args.axis}={value}")
            print(json.dumps(record.aggregates, sort_keys=True, indent=1))
        return 0

    if args.command == "sphere":
        record = sphere_experiment(args.snr, args.seed, draws=args.draws,
                                   out_dir=args.out)
        summary = {s: {"volume": g["volume"], "accuracy": g["accuracy"]}
                   for s, g in record.geometry["schemes"].items()}
        print(json.dumps(summary, sort_keys=True, indent=1))
        return 0

    if args.command == "lemma-check":
        worst = lemma_check(args.trials, args.seed)
        ok = worst < 1e-9
        print(f"lemma-check: max identity error {worst:.3e} "
              f"over {args.trials} trials -> {'PASS' if ok else 'FAIL'}")
        return 0 if ok else 1

    if args.command == "grad-check":
        worst = grad_check(args.scenarios, args.seed)
        ok = worst < 1e-4
        print(f"grad-check: max relative directional-derivative error "
              f"{worst:.3e} over {args.scenarios} scenarios -> "
              f"{'PASS' if ok else 'FAIL'}")
        return 0 if ok else 1

    parser.error("unknown command")


if __name__ == "__main__":
    sys.exit(main())
