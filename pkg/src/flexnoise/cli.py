"""Command line interface.

Subcommands:

    flexnoise synth generate --model logistic --noise ar1 --rho 0.8 \
        --sigma 3 --n 250 --seed 1 --out data.csv
    flexnoise fit --scenario ar1_laplacian --models correct,iid --replicates 2 \
        --seed 1 --out results/
    flexnoise export --figure figS1 --out results/
    flexnoise bench --sizes 150,500,2000

``fit`` accepts a JSON config file (--config); command line flags override
file values and ``--set section.key=value`` reaches nested settings.

Exit codes: 0 clean, 3 converged with warnings, 4 any failed replicate.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import _jsonio
from .data import Dataset, write_dataset
from .exceptions import ConfigurationError, FlexnoiseError
from .experiments import (
    EXIT_FAILED,
    SCENARIOS,
    ExperimentConfig,
    benchmark_sparse,
    export_plotdata,
    run_experiment,
)
from .models import LogisticModel
from .synth import Ar1Noise, BlockedNoise, IidNoise, MultiplicativeNoise, generate


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except (FlexnoiseError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="flexnoise",
        description="Bayesian ODE inference under flexible noise processes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="synthetic data generation")
    synth_sub = synth.add_subparsers(dest="synth_command", required=True)
    gen = synth_sub.add_parser("generate", help="write a noisy series to CSV")
    gen.add_argument("--model", default="logistic", choices=["logistic"])
    gen.add_argument("--noise", default="iid",
                     choices=["iid", "ar1", "multiplicative", "blocked"])
    gen.add_argument("--r", type=float, default=0.08)
    gen.add_argument("--k-cap", dest="k_cap", type=float, default=50.0,
                     help="carrying capacity")
    gen.add_argument("--y0", type=float, default=2.0)
    gen.add_argument("--rho", type=float, default=0.8)
    gen.add_argument("--sigma", type=float, default=3.0)
    gen.add_argument("--eta", type=float, default=2.0)
    gen.add_argument("--n", type=int, default=250)
    gen.add_argument("--t-max", type=float, default=100.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(handler=_cmd_synth_generate)

    fit = sub.add_parser("fit", help="run an experiment scenario")
    fit.add_argument("--config", help="JSON config file")
    fit.add_argument("--scenario", choices=list(SCENARIOS))
    fit.add_argument("--models", help="comma-separated noise model labels")
    fit.add_argument("--replicates", type=int)
    fit.add_argument("--seed", type=int)
    fit.add_argument("--out")
    fit.add_argument("--n-points", type=int)
    fit.add_argument("--iterations", type=int, help="MCMC iterations per chain")
    fit.add_argument("--chains", type=int)
    fit.add_argument("--workers", type=int)
    fit.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override any config entry, e.g. gp.n_c=100")
    fit.set_defaults(handler=_cmd_fit)

    export = sub.add_parser("export", help="write plot-ready CSVs")
    export.add_argument("--figure", required=True,
                        choices=["fig2", "fig3", "figS1", "figS2"])
    export.add_argument("--out", default="out", help="result bundle directory")
    export.add_argument("--dest", help="destination directory")
    export.set_defaults(handler=_cmd_export)

    bench = sub.add_parser("bench", help="dense vs sparse timing report")
    bench.add_argument("--sizes", default="150,500,2000")
    bench.add_argument("--trials", type=int, default=3)
    bench.add_argument("--out", help="optional JSON report path")
    bench.set_defaults(handler=_cmd_bench)

    return parser


def _cmd_synth_generate(args) -> int:
    times = np.linspace(0.0, args.t_max, args.n)
    model = LogisticModel(y0=args.y0)
    trajectory = model.simulate(np.array([args.r, args.k_cap]), times)
    if args.noise == "iid":
        spec = IidNoise(args.sigma)
    elif args.noise == "ar1":
        spec = Ar1Noise(rho=args.rho, sigma=args.sigma)
    elif args.noise == "multiplicative":
        spec = MultiplicativeNoise(eta=args.eta, sigma=args.sigma)
    else:
        size = args.n // 5
        sizes = [size] * 4 + [args.n - 4 * size]
        spec = BlockedNoise((
            (sizes[0], IidNoise(args.sigma)),
            (sizes[1], Ar1Noise(rho=args.rho, sigma=args.sigma)),
            (sizes[2], IidNoise(args.sigma)),
            (sizes[3], IidNoise(10.0 * args.sigma)),
            (sizes[4], IidNoise(args.sigma)),
        ))
    rng = np.random.default_rng(args.seed)
    values = generate(trajectory, spec, rng)
    write_dataset(Dataset(times, values), args.out)
    print(f"wrote {args.n} points to {args.out}")
    return 0


def _parse_value(raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _cmd_fit(args) -> int:
    if args.config:
        config = ExperimentConfig.from_json(args.config)
    elif args.scenario:
        config = ExperimentConfig(scenario=args.scenario)
    else:
        raise ConfigurationError("either --config or --scenario is required")

    if args.scenario:
        config.scenario = args.scenario
    if args.models:
        config.models = tuple(m.strip() for m in args.models.split(",") if m.strip())
        if not config.models:
            raise ConfigurationError("at least one noise model must be selected")
    if args.replicates is not None:
        config.replicates = args.replicates
    if args.seed is not None:
        config.seed = args.seed
    if args.out:
        config.out = args.out
    if args.n_points is not None:
        config.n_points = args.n_points
    if args.iterations is not None:
        config.mcmc["iterations"] = args.iterations
    if args.chains is not None:
        config.mcmc["chains"] = args.chains
    if args.workers is not None:
        config.workers = args.workers
    for override in args.set:
        if "=" not in override:
            raise ConfigurationError(f"--set needs KEY=VALUE, got {override!r}")
        key, raw = override.split("=", 1)
        config.set_path(key, _parse_value(raw))
    config.validate()

    result = run_experiment(config)
    n_failed = sum(r.failed for r in result.records)
    n_flagged = sum((not r.failed) and (not r.converged) for r in result.records)
    print(
        f"{len(result.records)} runs: "
        f"{len(result.records) - n_failed - n_flagged} clean, "
        f"{n_flagged} non-converged, {n_failed} failed -> {config.out}"
    )
    return result.exit_code


def _cmd_export(args) -> int:
    paths = export_plotdata(args.out, args.figure, dest=args.dest)
    for path in paths:
        print(f"wrote {path}")
    return 0


def _cmd_bench(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
    rows = benchmark_sparse(sizes, trials=args.trials)
    header = (
        f"{'n':>6} {'dense_s':>10} {'sparse_s':>10} {'speedup':>8} "
        f"{'gp_full_s':>10} {'gp_coarse_s':>11} {'gp_speedup':>10}"
    )
    print(header)
    for row in rows:
        print(
            f"{row['n']:>6} {row['dense_seconds']:>10.4g} "
            f"{row['sparse_seconds']:>10.4g} {row['speedup']:>8.2f} "
            f"{row['gp_full_seconds']:>10.4g} {row['gp_coarse_seconds']:>11.4g} "
            f"{row['gp_speedup']:>10.2f}"
        )
    if args.out:
        _jsonio.dump({"rows": rows}, args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
