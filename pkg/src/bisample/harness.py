"""Experiment orchestration: configs, trials, sweeps, metrics, CSV output.

A trial generates (or loads) a population, applies the behavior gate,
perturbs every user with one mechanism, aggregates, and compares the
estimates against exact ground truth. All randomness is derived from the
root seed through named Philox substreams keyed by (trial, purpose,
mechanism), so trials are independent, mechanisms sharing a trial see the
same population, and a (config, seed) pair reproduces byte-identical CSV
output on any platform.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .budget import PrivacyBudget
from .estimation import (
    AllNullPopulation,
    DirectionCounts,
    EmptyDirection,
    mean_estimate_basic,
    mean_estimate_md,
    missing_rate_estimate,
)
from .mechanisms import bisample_md_perturb, bisample_perturb, harmony_perturb, pm_perturb
from .population import (
    BehaviorMode,
    Population,
    apply_behavior,
    force_missing_rate,
    gen_exp,
    gen_gauss,
    gen_preferences,
    gen_uniform,
    ground_truth,
    load_numeric_column,
    prepare_values,
)
from .privkvm import (
    DegenerateFrequency,
    PrivKvmConfig,
    kv_encode,
    privkvm_estimate,
    privkvm_missing_rate,
    privkvm_perturb,
)
from .rng import stream


class ConfigError(Exception):
    pass


class MechanismInfo(NamedTuple):
    canonical: str
    display: str
    null_aware: bool


#: Canonical mechanism order; the index doubles as the RNG stream id.
MECHANISMS: dict[str, MechanismInfo] = {
    "bisample": MechanismInfo("bisample", "BiSample", False),
    "bisample_md": MechanismInfo("bisample_md", "BiSampleMD", True),
    "harmony": MechanismInfo("harmony", "Harmony", False),
    "pm": MechanismInfo("pm", "PM", False),
    "privkvm": MechanismInfo("privkvm", "PrivKVM", True),
}
_MECH_ALIASES = {
    "bisample": "bisample",
    "bisamplemd": "bisample_md",
    "bisample_md": "bisample_md",
    "bisample-md": "bisample_md",
    "harmony": "harmony",
    "pm": "pm",
    "piecewise": "pm",
    "privkvm": "privkvm",
}


def canonical_mechanism(name: str) -> str:
    key = name.strip().lower()
    if key not in _MECH_ALIASES:
        raise ConfigError(f"unknown mechanism {name!r}; expected one of "
                          "BiSample, BiSampleMD, Harmony, PM, PrivKVM")
    return _MECH_ALIASES[key]


@dataclass(frozen=True)
class DatasetSpec:
    """Population values: a named generator or a delimited file column."""

    kind: str  # gauss | exp | uniform | file
    mu: float = 0.5
    sigma: float = 0.1
    scale: float = 0.1
    path: str | None = None
    column: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("gauss", "exp", "uniform", "file"):
            raise ConfigError(f"unknown dataset kind {self.kind!r}")
        if self.kind == "file" and (not self.path or not self.column):
            raise ConfigError("file dataset requires path and column")


@dataclass(frozen=True)
class PreferenceSpec:
    """Users' privacy tolerances: all-cooperative, Gaussian, or a forced rate."""

    kind: str = "cooperative"  # cooperative | gaussian | forced
    mu: float = 5.0
    sigma: float = 1.5
    rate: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("cooperative", "gaussian", "forced"):
            raise ConfigError(f"unknown preference kind {self.kind!r}")
        if self.kind == "forced" and not 0.0 <= self.rate <= 1.0:
            raise ConfigError("forced missing rate must lie in [0, 1]")


@dataclass(frozen=True)
class SweepSpec:
    kind: str  # epsilon | missing_rate | n
    values: tuple

    def __post_init__(self) -> None:
        if self.kind not in ("epsilon", "missing_rate", "n"):
            raise ConfigError(f"unknown sweep kind {self.kind!r}")
        if not self.values:
            raise ConfigError("sweep values must be nonempty")
        object.__setattr__(self, "values", tuple(self.values))


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment needs besides the root seed."""

    dataset: DatasetSpec
    mechanisms: tuple[str, ...]
    sweep: SweepSpec
    behavior: BehaviorMode = BehaviorMode.NULL_VALUE
    preferences: PreferenceSpec = field(default_factory=PreferenceSpec)
    epsilon: float = 1.0
    n: int = 100_000
    trials: int = 100
    seed: int = 0
    fixed_population: bool = False
    all_null_tol: float = 1e-9
    privkvm_virtual_iterations: int = 5

    def __post_init__(self) -> None:
        object.__setattr__(self, "mechanisms", tuple(canonical_mechanism(m) for m in self.mechanisms))
        self.validate()

    def validate(self) -> None:
        if not self.mechanisms:
            raise ConfigError("at least one mechanism is required")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.n < 1:
            raise ConfigError("n must be >= 1")
        forced_input = [m for m in self.mechanisms if not MECHANISMS[m].null_aware]
        noncoop_possible = self.preferences.kind != "cooperative"
        if forced_input and noncoop_possible and self.behavior is BehaviorMode.NULL_VALUE:
            raise ConfigError(
                f"{'/'.join(MECHANISMS[m].display for m in forced_input)} can not perturb withheld "
                "values; use behavior top or rnd, or restrict to null-aware mechanisms"
            )
        if self.sweep.kind == "missing_rate" and self.preferences.kind != "forced":
            raise ConfigError("a missing-rate sweep requires forced preferences")
        if self.sweep.kind == "n" and self.dataset.kind == "file":
            raise ConfigError("can not sweep n over a fixed file dataset")

    def at_point(self, value) -> "ExperimentConfig":
        """Resolve one sweep point into a concrete config."""
        if self.sweep.kind == "epsilon":
            return dataclasses.replace(self, epsilon=float(value))
        if self.sweep.kind == "missing_rate":
            prefs = dataclasses.replace(self.preferences, rate=float(value))
            return dataclasses.replace(self, preferences=prefs)
        return dataclasses.replace(self, n=int(value))

    @classmethod
    def from_dict(cls, raw: dict, seed: int | None = None) -> "ExperimentConfig":
        """Build a config from the documented JSON key set."""
        try:
            dataset = DatasetSpec(**{"kind": raw["dataset"]["kind"],
                                     **{k: v for k, v in raw["dataset"].items() if k != "kind"}})
            pref_raw = raw.get("preferences", {"kind": "cooperative"})
            preferences = PreferenceSpec(**pref_raw)
            sweep_raw = raw["sweep"]
            sweep = SweepSpec(sweep_raw["kind"], tuple(sweep_raw["values"]))
            return cls(
                dataset=dataset,
                mechanisms=tuple(raw["mechanisms"]),
                sweep=sweep,
                behavior=BehaviorMode.parse(raw.get("behavior", "null")),
                preferences=preferences,
                epsilon=float(raw.get("epsilon", 1.0)),
                n=int(raw.get("n", 100_000)),
                trials=int(raw.get("trials", 100)),
                seed=int(seed if seed is not None else raw.get("seed", 0)),
                fixed_population=bool(raw.get("fixed_population", False)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad experiment config: {exc}") from exc

    @classmethod
    def from_json(cls, path, seed: int | None = None) -> "ExperimentConfig":
        with Path(path).open() as fh:
            return cls.from_dict(json.load(fh), seed=seed)


@dataclass(frozen=True)
class TrialResult:
    mechanism: str
    epsilon: float
    sweep_kind: str
    sweep_key: float
    trial_index: int
    n: int
    status: str
    m_true: float | None
    m_est: float | None
    mr_true: float | None
    mr_est: float | None


@dataclass(frozen=True)
class MetricRow:
    mechanism: str
    epsilon: float
    sweep_kind: str
    sweep_key: float
    n: int
    trials: int
    trials_ok: int
    status: str
    ae_m: float | None
    var_m: float | None
    ae_mr: float | None
    var_mr: float | None


class ExperimentResult(NamedTuple):
    metrics: list[MetricRow]
    trials: list[TrialResult]


# RNG stream purposes (third key component after seed and trial).
_STREAM_VALUES = 0
_STREAM_PREFS = 1
_STREAM_BEHAVIOR = 2
_STREAM_MECHANISM = 3
_STREAM_FORCED = 4


def _dataset_values(config: ExperimentConfig, rng) -> np.ndarray:
    ds = config.dataset
    if ds.kind == "gauss":
        return gen_gauss(config.n, ds.mu, ds.sigma, seed=rng)
    if ds.kind == "exp":
        return gen_exp(config.n, ds.scale, seed=rng)
    if ds.kind == "uniform":
        return gen_uniform(config.n, seed=rng)
    return load_numeric_column(ds.path, ds.column)


def resolve_file_n(config: ExperimentConfig) -> ExperimentConfig:
    """For file datasets, pin n to the file length."""
    if config.dataset.kind != "file":
        return config
    values = load_numeric_column(config.dataset.path, config.dataset.column)
    return dataclasses.replace(config, n=len(values))


def population_for_trial(config: ExperimentConfig, trial_index: int) -> Population:
    """The population a given trial sees; shared by every mechanism in it."""
    t = 0 if config.fixed_population else trial_index
    values = _dataset_values(config, stream(config.seed, t, _STREAM_VALUES))
    n = len(values)
    prefs_spec = config.preferences
    if prefs_spec.kind == "cooperative":
        prefs = np.full(n, np.inf)
    elif prefs_spec.kind == "gaussian":
        prefs = gen_preferences(n, prefs_spec.mu, prefs_spec.sigma,
                                seed=stream(config.seed, t, _STREAM_PREFS))
    else:
        prefs = np.full(n, np.inf)
    pop = Population(values, prefs, provenance=f"{config.dataset.kind}(trial={trial_index})")
    if prefs_spec.kind == "forced":
        pop = force_missing_rate(pop, prefs_spec.rate, PrivacyBudget(config.epsilon),
                                 seed=stream(config.seed, t, _STREAM_FORCED))
    return pop


def _mechanism_label(config: ExperimentConfig, mech: str) -> str:
    info = MECHANISMS[mech]
    if not info.null_aware and config.preferences.kind != "cooperative":
        return f"{info.display}-{config.behavior.value.upper()}"
    return info.display


def _perturb_and_estimate(mech, inputs, budget, rng, config):
    """Run one mechanism end to end.

    Returns (mean_est, missing_rate_est, status); a mean-side failure
    keeps the missing-rate estimate when that part is still well defined.
    """
    if mech == "bisample":
        counts = DirectionCounts.from_reports(bisample_perturb(inputs, budget, rng))
        return mean_estimate_basic(counts, budget), None, "ok"
    if mech == "bisample_md":
        counts = DirectionCounts.from_reports(bisample_md_perturb(inputs, budget, rng))
        mr = missing_rate_estimate(counts, budget)
        try:
            mean = mean_estimate_md(counts, budget, all_null_tol=config.all_null_tol)
        except AllNullPopulation as exc:
            return None, mr, type(exc).__name__
        return mean, mr, "ok"
    if mech == "harmony":
        return float(np.mean(harmony_perturb(inputs, budget, rng))), None, "ok"
    if mech == "pm":
        return float(np.mean(pm_perturb(inputs, budget, rng))), None, "ok"
    kv_config = PrivKvmConfig(budget.epsilon, virtual_iterations=config.privkvm_virtual_iterations)
    reports = privkvm_perturb(kv_encode(inputs), kv_config, rng)
    mr = privkvm_missing_rate(reports, kv_config)
    try:
        _, mean = privkvm_estimate(reports, kv_config)
    except DegenerateFrequency as exc:
        return None, mr, type(exc).__name__
    return mean, mr, "ok"


def run_trial(
    config: ExperimentConfig,
    mechanism: str,
    trial_index: int,
    *,
    population: Population | None = None,
) -> TrialResult:
    """One mechanism on one trial population.

    ``population`` may be precomputed (it must equal
    :func:`population_for_trial` output); estimator failures become status
    rows, not exceptions.
    """
    mech = canonical_mechanism(mechanism)
    info = MECHANISMS[mech]
    budget = PrivacyBudget(config.epsilon)
    pop = population if population is not None else population_for_trial(config, trial_index)
    truth = ground_truth(pop, budget)

    if info.null_aware:
        inputs = prepare_values(pop.values, pop.preferences, budget)
        m_true = truth.responder_mean
    else:
        rng_behavior = stream(config.seed, trial_index, _STREAM_BEHAVIOR)
        inputs = apply_behavior(pop.values, pop.preferences, budget, config.behavior, rng_behavior)
        m_true = truth.overall_mean

    mech_id = list(MECHANISMS).index(mech)
    rng_mech = stream(config.seed, trial_index, _STREAM_MECHANISM, mech_id)
    sweep_key = {"epsilon": config.epsilon,
                 "missing_rate": config.preferences.rate,
                 "n": config.n}[config.sweep.kind]
    try:
        m_est, mr_est, status = _perturb_and_estimate(mech, inputs, budget, rng_mech, config)
    except (EmptyDirection, AllNullPopulation, DegenerateFrequency) as exc:
        m_est, mr_est, status = None, None, type(exc).__name__
    if info.null_aware and m_true is None:
        # No responders: the mean estimand itself is undefined (a raw
        # estimate would compare against nothing), but the missing-rate
        # estimate stays valid.
        m_est, status = None, "AllNullPopulation"
    return TrialResult(
        mechanism=_mechanism_label(config, mech),
        epsilon=config.epsilon,
        sweep_kind=config.sweep.kind,
        sweep_key=float(sweep_key),
        trial_index=trial_index,
        n=len(pop),
        status=status,
        m_true=m_true,
        m_est=m_est,
        mr_true=truth.missing_rate,
        mr_est=mr_est if info.null_aware else None,
    )


def _metrics_for(group: list[TrialResult], null_aware: bool, config: ExperimentConfig) -> MetricRow:
    errors = sorted({r.status for r in group if r.status != "ok"})
    status = "ok" if not errors else ";".join(errors)

    def _ae_var(pairs):
        errs = [abs(t - e) for t, e in pairs if t is not None and e is not None]
        if not errs:
            return None, None
        # Metric definitions: AE is the mean absolute deviation over
        # trials, Var the mean squared deviation (not the sample variance).
        return statistics.fmean(errs), statistics.fmean(x * x for x in errs)

    ae_m, var_m = _ae_var([(r.m_true, r.m_est) for r in group])
    ae_mr, var_mr = (None, None)
    if null_aware:
        ae_mr, var_mr = _ae_var([(r.mr_true, r.mr_est) for r in group])
    first = group[0]
    return MetricRow(
        mechanism=first.mechanism,
        epsilon=first.epsilon,
        sweep_kind=first.sweep_kind,
        sweep_key=first.sweep_key,
        n=first.n,
        trials=len(group),
        trials_ok=sum(1 for r in group if r.status == "ok"),
        status=status,
        ae_m=ae_m,
        var_m=var_m,
        ae_mr=ae_mr,
        var_mr=var_mr,
    )


def run_experiment(config: ExperimentConfig, *, workers: int = 1) -> ExperimentResult:
    """Every (mechanism, sweep point) over ``config.trials`` trials.

    Trials are independent work units; with ``workers > 1`` they are fanned
    out over threads and reassembled in deterministic order, yielding
    output identical to the sequential run.
    """
    config = resolve_file_n(config)
    points = [config.at_point(v) for v in config.sweep.values]

    def one_trial(args):
        pi, trial = args
        pc = points[pi]
        pop = population_for_trial(pc, trial)
        return [(pi, mech, trial, run_trial(pc, mech, trial, population=pop))
                for mech in config.mechanisms]

    tasks = [(pi, t) for pi in range(len(points)) for t in range(config.trials)]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(one_trial, tasks))
    else:
        batches = [one_trial(t) for t in tasks]

    by_cell: dict[tuple[int, str], list[TrialResult]] = {}
    for batch in batches:
        for pi, mech, trial, result in batch:
            by_cell.setdefault((pi, mech), []).append(result)

    trials: list[TrialResult] = []
    metrics: list[MetricRow] = []
    for mech in config.mechanisms:
        for pi in range(len(points)):
            group = sorted(by_cell[(pi, mech)], key=lambda r: r.trial_index)
            trials.extend(group)
            metrics.append(_metrics_for(group, MECHANISMS[mech].null_aware, points[pi]))
    metrics.sort(key=lambda r: (r.mechanism, r.sweep_key, r.epsilon))
    trials.sort(key=lambda r: (r.mechanism, r.sweep_key, r.epsilon, r.trial_index))
    return ExperimentResult(metrics, trials)


METRIC_FIELDS = ("mechanism", "epsilon", "sweep_kind", "sweep_key", "n", "trials",
                 "trials_ok", "status", "ae_m", "var_m", "ae_mr", "var_mr")
TRIAL_FIELDS = ("mechanism", "epsilon", "sweep_kind", "sweep_key", "trial_index", "n",
                "status", "m_true", "m_est", "mr_true", "mr_est")


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)  # shortest round-trip decimal
    return str(value)


def write_results(rows, path, kind: str | None = None) -> None:
    """Write metric or trial rows as CSV with a fixed schema.

    ``kind`` ("metrics" or "trials") selects the schema for empty row
    lists; otherwise it is inferred from the first row.
    """
    if kind is None:
        kind = "trials" if rows and isinstance(rows[0], TrialResult) else "metrics"
    fields = TRIAL_FIELDS if kind == "trials" else METRIC_FIELDS
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for row in rows:
            writer.writerow([_format_cell(getattr(row, f)) for f in fields])


def truth_rate_curve(
    epsilons, mu: float = 5.0, sigma: float = 1.5, n: int = 100_000, seed: int = 0
) -> list[dict]:
    """Fraction of users whose tolerance admits each budget.

    Empirical over one Gaussian preference draw, with the analytic
    Gaussian upper tail alongside.
    """
    prefs = gen_preferences(n, mu, sigma, seed=stream(seed, 0, _STREAM_PREFS))
    dist = statistics.NormalDist(mu, sigma)
    rows = []
    for eps in epsilons:
        rows.append({
            "epsilon": float(eps),
            "truth_rate": float((prefs >= eps).mean()),
            "truth_rate_analytic": 1.0 - dist.cdf(eps),
        })
    return rows


def write_truth_rate(rows: list[dict], path) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epsilon", "truth_rate", "truth_rate_analytic"])
        for row in rows:
            writer.writerow([repr(row["epsilon"]), repr(row["truth_rate"]),
                             repr(row["truth_rate_analytic"])])


# Built-in sweeps mirroring the evaluation protocol. Grids are harness
# defaults; the source experiments do not pin them exactly.
REPRODUCE_NAMES = ("truth-rate", "behavior", "missing-rate", "data-size")
_BEHAVIOR_EPS = (0.5, 1.0, 2.0, 4.0, 6.0, 8.0)
_MISSING_RATES = tuple(round(0.1 * k, 1) for k in range(1, 10))
_DATA_SIZES = (1_000, 10_000, 100_000)


def run_reproduce(name: str, out_dir, seed: int = 0, n: int = 100_000,
                  trials: int = 100, workers: int = 1) -> list[Path]:
    """Run one named built-in sweep and write its CSV(s); returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def _write(filename: str, metrics) -> None:
        path = out_dir / filename
        write_results(metrics, path, kind="metrics")
        written.append(path)

    if name == "truth-rate":
        path = out_dir / "truth_rate.csv"
        write_truth_rate(truth_rate_curve(_BEHAVIOR_EPS + (0.1, 3.0, 5.0, 7.0), n=n, seed=seed), path)
        written.append(path)
        return written

    if name == "behavior":
        for ds_kind in ("gauss", "exp", "uniform"):
            rows: list[MetricRow] = []
            for behavior, mechs in (("top", ("harmony", "pm", "bisample_md", "privkvm")),
                                    ("rnd", ("harmony", "pm"))):
                config = ExperimentConfig(
                    dataset=DatasetSpec(ds_kind),
                    mechanisms=mechs,
                    sweep=SweepSpec("epsilon", _BEHAVIOR_EPS),
                    behavior=BehaviorMode.parse(behavior),
                    preferences=PreferenceSpec("gaussian"),
                    n=n, trials=trials, seed=seed,
                )
                rows.extend(run_experiment(config, workers=workers).metrics)
            _write(f"behavior_{ds_kind}.csv", rows)
        return written

    if name == "missing-rate":
        for ds_kind in ("exp", "gauss"):
            for eps in (0.1, 1.0):
                config = ExperimentConfig(
                    dataset=DatasetSpec(ds_kind),
                    mechanisms=("bisample_md", "privkvm"),
                    sweep=SweepSpec("missing_rate", _MISSING_RATES),
                    preferences=PreferenceSpec("forced"),
                    epsilon=eps, n=n, trials=trials, seed=seed,
                )
                _write(f"missing_rate_{ds_kind}_eps{eps:g}.csv",
                       run_experiment(config, workers=workers).metrics)
        return written

    if name == "data-size":
        sizes = tuple(s for s in _DATA_SIZES if s <= n) or (n,)
        config = ExperimentConfig(
            dataset=DatasetSpec("gauss"),
            mechanisms=("harmony", "pm", "bisample_md", "privkvm"),
            sweep=SweepSpec("n", sizes),
            behavior=BehaviorMode.TOP,
            preferences=PreferenceSpec("gaussian"),
            epsilon=0.1, n=n, trials=trials, seed=seed,
        )
        _write("data_size.csv", run_experiment(config, workers=workers).metrics)
        return written

    if name == "all":
        for sub in REPRODUCE_NAMES:
            written.extend(run_reproduce(sub, out_dir, seed=seed, n=n, trials=trials, workers=workers))
        return written

    raise ConfigError(f"unknown reproduce target {name!r}; expected one of {REPRODUCE_NAMES + ('all',)}")
