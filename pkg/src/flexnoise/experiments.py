"""End-to-end synthetic studies: data generation, model fitting across
noise assumptions, machine-readable result bundles, and plot-data exports.

Output layout, per run:

    <out>/<scenario>/<model>/<replicate>/
        data.csv          generated series (t, y)
        chains_<c>.csv    post-warm-up draws (thinned), one file per chain
        map.json          MAP point in reporting space
        summary.json      intervals, R-hat table, convergence flag
        curves.csv        per-time noise curves (gp and block models)
        boundaries.csv    boundary marginals (block model)

plus one top-level ``index.json``. Summary files contain no timing fields,
so identical configs and seeds reproduce them byte for byte; wall times go
to a separate ``timings.json``.
"""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _jsonio
from .blocknoise import BlockNoiseModel
from .covariance import build_covariance, nonstationary_banded
from .data import Dataset, read_dataset, write_dataset
from .estimators import (
    Ar1NoiseModel,
    FixedBlockNoiseModel,
    IIDNoiseModel,
    MultiplicativeNoiseModel,
    StationaryKernelNoiseModel,
)
from .exceptions import ConfigurationError
from .gpnoise import GPNoiseModel
from .kernels import StationaryKernel
from .likelihood import mvn_logpdf
from .models import HERG_PRIOR_LOG_MEANS, HergModel, LogisticModel, VoltageProtocol
from .synth import (
    Ar1Noise,
    BlockedNoise,
    IidNoise,
    MultiplicativeNoise,
    generate,
    true_lag1,
    true_sd,
)

SCENARIOS = ("ar1_laplacian", "multiplicative_gp", "blocked_block", "blocked_gp",
             "herg_synthetic")

_LOGISTIC_TRUTH = {"r": 0.08, "K": 50.0}
_LOGISTIC_Y0 = 2.0
_TIME_SPAN = 100.0

EXIT_CLEAN = 0
EXIT_WARNINGS = 3
EXIT_FAILED = 4


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    scenario: str
    models: tuple | None = None
    replicates: int | None = None
    seed: int = 0
    out: str = "out"
    workers: int = 1
    n_points: int | None = None
    chain_rows: int = 2000
    mcmc: dict = field(default_factory=dict)
    gp: dict = field(default_factory=dict)
    block: dict = field(default_factory=dict)
    herg: dict = field(default_factory=dict)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise ConfigurationError(
                f"unknown scenario {self.scenario!r}; choose from {SCENARIOS}"
            )
        if self.models is not None:
            self.models = tuple(self.models)
            if not self.models:
                raise ConfigurationError("at least one noise model must be selected")
            for label in self.models:
                if label not in _scenario_spec(self.scenario).allowed_models:
                    raise ConfigurationError(
                        f"model {label!r} is not available for scenario "
                        f"{self.scenario!r}"
                    )
        if self.replicates is not None and self.replicates < 1:
            raise ConfigurationError("replicates must be >= 1")

    @classmethod
    def from_dict(cls, data):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(_jsonio.load(path))

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "models": list(self.resolved_models()),
            "replicates": self.resolved_replicates(),
            "seed": self.seed,
            "out": self.out,
            "workers": self.workers,
            "n_points": self.resolved_n(),
            "chain_rows": self.chain_rows,
            "mcmc": dict(sorted(self.mcmc.items())),
            "gp": dict(sorted(self.gp.items())),
            "block": dict(sorted(self.block.items())),
            "herg": dict(sorted(self.herg.items())),
        }

    def content_hash(self) -> str:
        payload = _jsonio.dumps(self.to_dict()).encode()
        return hashlib.sha1(b"blob %d\0" % len(payload) + payload).hexdigest()

    def resolved_models(self):
        return self.models if self.models is not None else _scenario_spec(
            self.scenario
        ).default_models

    def resolved_replicates(self):
        return (
            self.replicates
            if self.replicates is not None
            else _scenario_spec(self.scenario).default_replicates
        )

    def resolved_n(self):
        return (
            self.n_points
            if self.n_points is not None
            else _scenario_spec(self.scenario).default_n
        )

    def set_path(self, dotted, value):
        """Apply a ``section.key=value`` override (CLI escape hatch)."""
        parts = dotted.split(".")
        if len(parts) == 1:
            if not hasattr(self, parts[0]):
                raise ConfigurationError(f"unknown config key {dotted!r}")
            setattr(self, parts[0], value)
            return
        section = getattr(self, parts[0], None)
        if not isinstance(section, dict):
            raise ConfigurationError(f"unknown config section {parts[0]!r}")
        node = section
        for key in parts[1:-1]:
            node = node.setdefault(key, {})
        node[parts[-1]] = value


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class _ScenarioSpec:
    default_models: tuple
    default_replicates: int
    default_n: int
    allowed_models: tuple


_SPECS = {
    "ar1_laplacian": _ScenarioSpec(
        default_models=("correct", "iid", "laplacian"),
        default_replicates=10,
        default_n=250,
        allowed_models=("correct", "iid", "laplacian", "gp"),
    ),
    "multiplicative_gp": _ScenarioSpec(
        default_models=("correct", "iid", "gp"),
        default_replicates=8,
        default_n=250,
        allowed_models=("correct", "iid", "gp", "laplacian"),
    ),
    "blocked_block": _ScenarioSpec(
        default_models=("correct", "iid", "block"),
        default_replicates=8,
        default_n=500,
        allowed_models=("correct", "iid", "block", "laplacian"),
    ),
    "blocked_gp": _ScenarioSpec(
        default_models=("gp",),
        default_replicates=3,
        default_n=500,
        allowed_models=("gp", "iid"),
    ),
    "herg_synthetic": _ScenarioSpec(
        default_models=("iid",),
        default_replicates=1,
        default_n=400,
        allowed_models=("iid",),
    ),
}


def _scenario_spec(name) -> _ScenarioSpec:
    return _SPECS[name]


def default_herg_protocol() -> VoltageProtocol:
    """Synthetic step protocol (volts/seconds) exercising activation and
    deactivation at several levels; the real experimental protocol is out
    of scope."""
    return VoltageProtocol.from_steps([
        (1.0, -0.08),
        (3.0, 0.02),
        (2.0, -0.04),
        (3.0, 0.04),
        (2.0, -0.06),
        (3.0, 0.00),
        (1.0, -0.08),
    ])


def scenario_times(config: ExperimentConfig) -> np.ndarray:
    n = config.resolved_n()
    if config.scenario == "herg_synthetic":
        protocol = default_herg_protocol()
        return np.linspace(protocol.t_start, protocol.t_end, n)
    return np.linspace(0.0, _TIME_SPAN, n)


def scenario_model(config: ExperimentConfig):
    if config.scenario == "herg_synthetic":
        return HergModel(default_herg_protocol())
    return LogisticModel(y0=_LOGISTIC_Y0)


def scenario_truth(config: ExperimentConfig) -> dict:
    if config.scenario == "herg_synthetic":
        names = HergModel.param_names
        return {n: float(np.exp(m)) for n, m in zip(names, HERG_PRIOR_LOG_MEANS)}
    return dict(_LOGISTIC_TRUTH)


def blocked_sizes(n) -> tuple:
    base = n // 5
    sizes = [base] * 5
    sizes[-1] += n - 5 * base
    return tuple(sizes)


def scenario_noise(config: ExperimentConfig):
    name = config.scenario
    if name == "ar1_laplacian":
        return Ar1Noise(rho=0.8, sigma=3.0)
    if name == "multiplicative_gp":
        return MultiplicativeNoise(eta=2.0, sigma=0.0075)
    if name in ("blocked_block", "blocked_gp"):
        sizes = blocked_sizes(config.resolved_n())
        return BlockedNoise((
            (sizes[0], IidNoise(3.0)),
            (sizes[1], Ar1Noise(rho=0.85, sigma=3.0)),
            (sizes[2], IidNoise(3.0)),
            (sizes[3], IidNoise(30.0)),
            (sizes[4], IidNoise(3.0)),
        ))
    if name == "herg_synthetic":
        return IidNoise(float(config.herg.get("sigma", 25.0)))
    raise ConfigurationError(f"unknown scenario {name!r}")


def generate_replicate(config: ExperimentConfig, replicate) -> Dataset:
    """Replicate data; identical across models so fits are comparable."""
    times = scenario_times(config)
    model = scenario_model(config)
    truth = scenario_truth(config)
    theta = np.array([truth[name] for name in model.param_names])
    trajectory = model.simulate(theta, times)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0, replicate]))
    values = generate(trajectory, scenario_noise(config), rng)
    return Dataset(times, values)


def make_estimator(config: ExperimentConfig, label, fit_seed):
    model = scenario_model(config)
    mcmc = config.mcmc
    common = dict(
        chains=int(mcmc.get("chains", 3)),
        iterations=int(mcmc.get("iterations", 20000)),
        warmup_frac=float(mcmc.get("warmup_frac", 0.5)),
        seed=fit_seed,
    )
    if label == "iid":
        return IIDNoiseModel(model, **common)
    if label == "laplacian":
        return StationaryKernelNoiseModel(model, kind="laplacian", **common)
    if label == "gp":
        gp = config.gp
        return GPNoiseModel(
            model,
            n_c=int(gp.get("n_c", 200)),
            zeta=float(gp.get("zeta", 0.01)),
            coarse_stride=int(gp.get("coarse_stride", 5)),
            windows=tuple(gp.get("windows", (31, 51, 101))),
            restarts=gp.get("restarts"),
            map_max_iters=int(gp.get("map_max_iters", 300)),
            **common,
        )
    if label == "block":
        block = config.block
        block_common = dict(common)
        block_common["iterations"] = int(
            block.get("iterations", common["iterations"])
        )
        if block.get("seed") is not None:
            block_common["seed"] = block["seed"]
        prior = block.get("prior", {})
        proposal = block.get("proposal", {})
        return BlockNoiseModel(
            model,
            kernel=block.get("kernel", "laplacian"),
            phi_prior_a=float(prior.get("phi", {}).get("a", 0.01)),
            phi_prior_b=float(prior.get("phi", {}).get("b", 100.0)),
            psi_scale=float(proposal.get("psi_scale", 0.25)),
            **block_common,
        )
    if label == "correct":
        scenario = config.scenario
        if scenario == "ar1_laplacian":
            return Ar1NoiseModel(model, **common)
        if scenario == "multiplicative_gp":
            return MultiplicativeNoiseModel(model, **common)
        if scenario in ("blocked_block", "blocked_gp"):
            return FixedBlockNoiseModel(
                model, block_sizes=blocked_sizes(config.resolved_n()), **common
            )
        if scenario == "herg_synthetic":
            return IIDNoiseModel(model, **common)
    raise ConfigurationError(f"no estimator for model label {label!r}")


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


@dataclass
class RunRecord:
    model: str
    replicate: int
    path: str
    converged: bool = False
    failed: bool = False
    error: str = ""
    seconds: float = 0.0


def _run_dir(config, label, replicate) -> Path:
    return Path(config.out) / config.scenario / label / str(replicate)


def _run_single(config: ExperimentConfig, label, replicate) -> RunRecord:
    run_dir = _run_dir(config, label, replicate)
    run_dir.mkdir(parents=True, exist_ok=True)
    record = RunRecord(model=label, replicate=replicate, path=str(run_dir))
    started = time.perf_counter()
    try:
        dataset = generate_replicate(config, replicate)
        write_dataset(dataset, run_dir / "data.csv")
        model_idx = list(config.resolved_models()).index(label)
        fit_root = config.mcmc.get("seed", config.seed)
        fit_seed = [fit_root, 1, replicate, model_idx]
        estimator = make_estimator(config, label, fit_seed)
        estimator.fit(dataset)
        _write_run_outputs(config, label, replicate, estimator, dataset, run_dir)
        record.converged = bool(estimator.converged_)
    except Exception as exc:  # noqa: BLE001 - a failed replicate must not kill the batch
        record.failed = True
        record.error = f"{type(exc).__name__}: {exc}"
    record.seconds = time.perf_counter() - started
    return record


def _write_run_outputs(config, label, replicate, estimator, dataset, run_dir):
    truth = scenario_truth(config)
    noise = scenario_noise(config)
    model = estimator.model

    trajectory = model.simulate(
        np.array([truth[n] for n in model.param_names]), dataset.times
    )
    _write_csv(
        run_dir / "truth_curves.csv",
        ["t", "true_sd", "true_lag1"],
        np.column_stack([
            dataset.times, true_sd(noise, trajectory),
            true_lag1(noise, len(dataset)),
        ]),
    )

    summary = {
        "scenario": config.scenario,
        "model": label,
        "replicate": replicate,
        "seed": config.seed,
        "config_hash": config.content_hash(),
        "truth": {k: float(v) for k, v in truth.items()},
        "converged": bool(estimator.converged_),
        "rhat": {k: float(v) for k, v in estimator.rhat_.items()},
        "intervals": estimator.summary_,
    }
    _jsonio.dump(summary, run_dir / "summary.json")

    map_point = {"theta": {n: float(v) for n, v in
                           zip(model.param_names, estimator.theta_map_)}} \
        if hasattr(estimator, "theta_map_") else {}
    if hasattr(estimator, "noise_map_"):
        map_point["noise"] = {
            n: float(v)
            for n, v in zip(estimator.noise_names, estimator.noise_map_)
        }
    _jsonio.dump(map_point, run_dir / "map.json")

    _write_chain_csvs(config, estimator, run_dir)

    if label == "gp":
        _write_csv(
            run_dir / "curves.csv",
            ["t", "fit", "sd_map", "lag1_map"],
            np.column_stack([
                dataset.times,
                estimator.predict(dataset.times),
                estimator.sd_curve(),
                np.append(estimator.lag1_curve(), 0.0),
            ]),
        )
    elif label == "block":
        sd_q, lag1_q = estimator.result_.noise_curves(dataset.times)
        _write_csv(
            run_dir / "curves.csv",
            ["t", "fit", "sd_q5", "sd_q50", "sd_q95",
             "lag1_q5", "lag1_q50", "lag1_q95"],
            np.column_stack([
                dataset.times, estimator.predict(dataset.times),
                sd_q[0], sd_q[1], sd_q[2], lag1_q[0], lag1_q[1], lag1_q[2],
            ]),
        )
        probs = estimator.boundary_prob_
        _write_csv(
            run_dir / "boundaries.csv",
            ["position", "probability"],
            np.column_stack([np.arange(probs.size), probs]),
        )


def _write_chain_csvs(config, estimator, run_dir):
    from .base import constrain_columns

    store = estimator.chains_
    thin_rows = max(1, config.chain_rows)
    block_result = getattr(estimator, "result_", None)
    is_block = hasattr(block_result, "post_warmup_partitions")
    for c in range(store.n_chains):
        draws = store.draws(c)
        stride = max(1, draws.shape[0] // thin_rows)
        kept = np.arange(0, draws.shape[0], stride)
        values = constrain_columns(draws[kept], estimator.param_transforms_)
        header = list(store.param_names)
        rows = [list(map(float, row)) for row in values]
        if is_block:
            chain_draws = block_result.chains[c]
            cut = int(chain_draws.k.size * store.warmup_frac)
            header += ["k_blocks", "s", "phi", "z_rle"]
            for out_row, idx in zip(rows, kept):
                i = cut + idx
                sizes, _ = chain_draws.partitions[i]
                out_row.extend([
                    int(chain_draws.k[i]),
                    float(chain_draws.s[i]),
                    float(chain_draws.phi[i]),
                    ";".join(str(s) for s in sizes),
                ])
        _write_text_csv(run_dir / f"chains_{c}.csv", header, rows)


def _write_csv(path, header, matrix):
    rows = [[float(v) for v in row] for row in np.asarray(matrix)]
    _write_text_csv(path, header, rows)


def _write_text_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(
            _jsonio.format_float(v) if isinstance(v, float) else str(v)
            for v in row
        ))
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    status: str

    @property
    def exit_code(self):
        return {"clean": EXIT_CLEAN, "warnings": EXIT_WARNINGS,
                "failed": EXIT_FAILED}[self.status]


def run_experiment(config: ExperimentConfig) -> ExperimentResult:
    """Generate data and fit every (replicate, model) pair, writing one
    result directory per run plus a top-level index."""
    models = config.resolved_models()
    replicates = config.resolved_replicates()
    tasks = [
        (label, replicate)
        for replicate in range(replicates)
        for label in models
    ]
    if config.workers > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            records = list(pool.map(_run_task, [
                (config, label, replicate) for label, replicate in tasks
            ]))
    else:
        records = [_run_single(config, label, rep) for label, rep in tasks]

    any_failed = any(r.failed for r in records)
    all_converged = all(r.converged for r in records if not r.failed)
    status = "failed" if any_failed else ("clean" if all_converged else "warnings")

    index = {
        "scenario": config.scenario,
        "config": config.to_dict(),
        "config_hash": config.content_hash(),
        "status": status,
        "runs": [
            {
                "model": r.model,
                "replicate": r.replicate,
                "path": r.path,
                "converged": r.converged,
                "failed": r.failed,
                "error": r.error,
            }
            for r in records
        ],
    }
    out_dir = Path(config.out)
    _jsonio.dump(index, out_dir / "index.json")
    _jsonio.dump(
        {"total_seconds": sum(r.seconds for r in records),
         "runs": [{"model": r.model, "replicate": r.replicate,
                   "seconds": r.seconds} for r in records]},
        out_dir / "timings.json",
    )
    return ExperimentResult(config=config, records=records, status=status)


def _run_task(args):
    return _run_single(*args)


# ---------------------------------------------------------------------------
# Plot-data export
# ---------------------------------------------------------------------------

FIGURE_SCENARIOS = {
    "fig2": "multiplicative_gp",
    "fig3": "blocked_block",
    "figS1": "ar1_laplacian",
    "figS2": "blocked_gp",
}


def export_plotdata(out_dir, figure, dest=None):
    """Tidy long-format CSVs for one figure from a finished result bundle.

    Returns the list of written paths; missing inputs are reported
    explicitly.
    """
    if figure not in FIGURE_SCENARIOS:
        raise ConfigurationError(
            f"unknown figure {figure!r}; choose from {sorted(FIGURE_SCENARIOS)}"
        )
    out_dir = Path(out_dir)
    scenario = FIGURE_SCENARIOS[figure]
    index_path = out_dir / "index.json"
    if not index_path.exists():
        raise ConfigurationError(f"missing inputs: [{index_path}]")
    index = _jsonio.load(index_path)
    if index["scenario"] != scenario:
        raise ConfigurationError(
            f"bundle holds scenario {index['scenario']!r}, figure {figure} "
            f"needs {scenario!r}"
        )
    runs = [r for r in index["runs"] if not r["failed"]]
    missing = [
        str(Path(r["path"]) / "summary.json")
        for r in runs
        if not (Path(r["path"]) / "summary.json").exists()
    ]
    if missing:
        raise ConfigurationError(f"missing inputs: {missing}")

    dest = Path(dest) if dest is not None else out_dir / "plotdata"
    dest.mkdir(parents=True, exist_ok=True)
    written = []

    written.append(_export_intervals(runs, dest / f"{figure}_intervals.csv"))
    if figure in ("fig2", "figS2"):
        written.extend(_export_gp_curves(runs, dest, figure))
    if figure == "fig3":
        written.extend(_export_block_curves(runs, dest))
    return written


def _export_intervals(runs, path):
    header = ["replicate", "model", "parameter",
              "q2.5", "q25", "q50", "q75", "q97.5", "truth"]
    rows = []
    for run in sorted(runs, key=lambda r: (r["model"], r["replicate"])):
        summary = _jsonio.load(Path(run["path"]) / "summary.json")
        for name, truth_value in summary["truth"].items():
            iv = summary["intervals"][name]
            rows.append([
                run["replicate"], run["model"], name,
                float(iv["q2.5"]), float(iv["q25"]), float(iv["q50"]),
                float(iv["q75"]), float(iv["q97.5"]), float(truth_value),
            ])
    _write_text_csv(path, header, rows)
    return path


def _export_gp_curves(runs, dest, figure):
    sd_rows, lag_rows, traj_rows = [], [], []
    for run in sorted(runs, key=lambda r: (r["model"], r["replicate"])):
        run_dir = Path(run["path"])
        truth = _read_csv(run_dir / "truth_curves.csv")
        if run["model"] == "gp":
            curves = _read_csv(run_dir / "curves.csv")
            for i in range(len(curves["t"])):
                sd_rows.append([run["replicate"], curves["t"][i],
                                truth["true_sd"][i], curves["sd_map"][i]])
                lag_rows.append([run["replicate"], curves["t"][i],
                                 truth["true_lag1"][i], curves["lag1_map"][i]])
            if run["replicate"] == 0:
                data = read_dataset(run_dir / "data.csv")
                for t, y, fit in zip(data.times, data.values, curves["fit"]):
                    traj_rows.append([float(t), float(y), float(fit)])
        elif run["model"] == "iid":
            map_point = _jsonio.load(run_dir / "map.json")
            sigma = map_point.get("noise", {}).get("sigma")
            if sigma is not None:
                for i in range(len(truth["t"])):
                    sd_rows.append([run["replicate"], truth["t"][i],
                                    truth["true_sd"][i], float(sigma)])
    paths = []
    for name, header, rows in (
        (f"{figure}_sd.csv",
         ["replicate", "t", "true_sd", "estimate_sd"], sd_rows),
        (f"{figure}_autocorr.csv",
         ["replicate", "t", "true_lag1", "estimate_lag1"], lag_rows),
        (f"{figure}_trajectory.csv", ["t", "y", "fit"], traj_rows),
    ):
        path = dest / name
        _write_text_csv(path, header, rows)
        paths.append(path)
    return paths


def _export_block_curves(runs, dest):
    sd_rows, lag_rows, traj_rows, boundary_rows = [], [], [], []
    for run in sorted(runs, key=lambda r: (r["model"], r["replicate"])):
        if run["model"] != "block":
            continue
        run_dir = Path(run["path"])
        truth = _read_csv(run_dir / "truth_curves.csv")
        curves = _read_csv(run_dir / "curves.csv")
        bounds = _read_csv(run_dir / "boundaries.csv")
        for i in range(len(curves["t"])):
            sd_rows.append([
                run["replicate"], curves["t"][i], truth["true_sd"][i],
                curves["sd_q5"][i], curves["sd_q50"][i], curves["sd_q95"][i],
            ])
            lag_rows.append([
                run["replicate"], curves["t"][i], truth["true_lag1"][i],
                curves["lag1_q5"][i], curves["lag1_q50"][i],
                curves["lag1_q95"][i],
            ])
        for i in range(len(bounds["position"])):
            boundary_rows.append([
                run["replicate"], int(bounds["position"][i]),
                bounds["probability"][i],
            ])
        if run["replicate"] == 0:
            data = read_dataset(run_dir / "data.csv")
            for t, y, fit in zip(data.times, data.values, curves["fit"]):
                traj_rows.append([float(t), float(y), float(fit)])
    paths = []
    for name, header, rows in (
        ("fig3_sd.csv",
         ["replicate", "t", "true_sd", "q5", "q50", "q95"], sd_rows),
        ("fig3_autocorr.csv",
         ["replicate", "t", "true_lag1", "q5", "q50", "q95"], lag_rows),
        ("fig3_trajectory.csv", ["t", "y", "fit"], traj_rows),
        ("fig3_boundaries.csv",
         ["replicate", "position", "probability"], boundary_rows),
    ):
        path = dest / name
        _write_text_csv(path, header, rows)
        paths.append(path)
    return paths


def _read_csv(path):
    lines = Path(path).read_text().strip().splitlines()
    header = lines[0].split(",")
    columns = {h: [] for h in header}
    for line in lines[1:]:
        for h, v in zip(header, line.split(",")):
            columns[h].append(float(v))
    return columns


# ---------------------------------------------------------------------------
# Benchmark
# ---------------------------------------------------------------------------


def benchmark_sparse(n_list, kernel=None, trials=3, coarse_stride=5):
    """Wall-time comparison of the dense and truncated-banded likelihood
    paths, plus the per-iteration cost of gradient-based inference over
    the non-stationary parameters on the full versus the coarse grid (the
    gradient has one finite-difference pair per grid value, so the grid
    stride drives the cost of every optimizer or sampler step).

    Ratios are hardware dependent and reported, not asserted.
    """
    rows = []
    rng = np.random.default_rng(0)
    for n in n_list:
        times = np.arange(n, dtype=float)
        kern = kernel if kernel is not None else StationaryKernel(
            "laplacian", sigma=3.0, length_scale=3.0
        )
        y = rng.standard_normal(n)
        mean = np.zeros(n)

        def dense_eval():
            dense = kern(times[:, None], times[None, :])
            return mvn_logpdf(y, mean, dense)

        def sparse_eval():
            cov = build_covariance(kern, times)
            return mvn_logpdf(y, mean, cov)

        dense_s, dense_val = _best_time(dense_eval, trials)
        sparse_s, sparse_val = _best_time(sparse_eval, trials)

        def grid_step_seconds(stride):
            if stride > 1:
                idx = np.unique(np.append(np.arange(0, n, stride), n - 1))
            else:
                idx = np.arange(n)
            grid = times[idx]
            g = grid.size

            def objective(values):
                log_l = np.interp(times, grid, values[:g])
                log_s = np.interp(times, grid, values[g:])
                cov = nonstationary_banded(times, log_l, log_s)
                return mvn_logpdf(y, mean, cov)

            x = np.full(2 * g, np.log(3.0))
            h = 1e-6
            probes = min(10, 2 * g)

            def probe():
                for k in range(probes):
                    xp = x.copy()
                    xp[k] += h
                    xm = x.copy()
                    xm[k] -= h
                    objective(xp)
                    objective(xm)

            per_probe, _ = _best_time(probe, trials)
            # a full gradient needs one central pair per coordinate
            return per_probe / probes * (2 * g)

        full_s = grid_step_seconds(1)
        coarse_s = grid_step_seconds(coarse_stride)

        rows.append({
            "n": int(n),
            "dense_seconds": dense_s,
            "sparse_seconds": sparse_s,
            "speedup": dense_s / sparse_s if sparse_s > 0 else float("inf"),
            "rel_value_diff": abs(sparse_val - dense_val) / abs(dense_val),
            "gp_full_seconds": full_s,
            "gp_coarse_seconds": coarse_s,
            "gp_speedup": full_s / coarse_s if coarse_s > 0 else float("inf"),
        })
    return rows


def _best_time(fun, trials):
    best = float("inf")
    value = None
    for _ in range(trials):
        start = time.perf_counter()
        value = fun()
        best = min(best, time.perf_counter() - start)
    return best, value
