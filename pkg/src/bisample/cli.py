"""Command-line interface.

Subcommands: generate (emit a population file), perturb (stream reports
for a population), estimate (aggregate a report stream), audit (privacy
audits), experiment (full sweep to CSV), reproduce (built-in sweeps).
Exits nonzero on configuration or I/O errors.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from pathlib import Path

import click
import numpy as np

from .audit import (
    MATRIX_MECHANISMS,
    NULL_AWARE_MECHANISMS,
    audit_epsilon,
    audit_pm_binned,
    channel_matrix,
    default_grid,
)
from .budget import PrivacyBudget
from .estimation import DirectionCounts, EstimationError, summarize
from .harness import (
    ConfigError,
    ExperimentConfig,
    MECHANISMS,
    REPRODUCE_NAMES,
    canonical_mechanism,
    run_experiment,
    run_reproduce,
    write_results,
)
from .mechanisms import bisample_md_perturb, bisample_perturb, harmony_perturb, pm_perturb
from .population import (
    BehaviorMode,
    DatasetError,
    Population,
    apply_behavior,
    force_missing_rate,
    gen_exp,
    gen_gauss,
    gen_preferences,
    gen_uniform,
    ground_truth,
    load_numeric_column,
    load_population,
    prepare_values,
    save_population,
)
from .privkvm import PrivKvmConfig, kv_encode, privkvm_estimate, privkvm_perturb
from .rng import make_rng, stream


@click.group()
def main() -> None:
    """Local-differential-privacy toolkit: perturb, aggregate, audit, simulate."""


def _fail(exc: Exception) -> None:
    raise click.ClickException(str(exc))


@main.command()
@click.option("--dataset", type=click.Choice(["gauss", "exp", "uniform", "file"]), required=True)
@click.option("--n", type=int, default=100_000, show_default=True)
@click.option("--seed", type=int, required=True)
@click.option("--mu", type=float, default=0.5, show_default=True, help="gauss location")
@click.option("--sigma", type=float, default=0.1, show_default=True, help="gauss scale")
@click.option("--scale", type=float, default=0.1, show_default=True, help="exp scale")
@click.option("--path", type=click.Path(), default=None, help="file dataset path")
@click.option("--column", type=str, default=None, help="file dataset column name")
@click.option("--preferences", "pref_kind", type=click.Choice(["cooperative", "gaussian", "forced"]),
              default="cooperative", show_default=True)
@click.option("--pref-mu", type=float, default=5.0, show_default=True)
@click.option("--pref-sigma", type=float, default=1.5, show_default=True)
@click.option("--rate", type=float, default=0.0, help="forced missing rate")
@click.option("--epsilon", type=float, default=1.0, show_default=True,
              help="budget the forced rate is defined against")
@click.option("--out", type=click.Path(), required=True)
def generate(dataset, n, seed, mu, sigma, scale, path, column, pref_kind,
             pref_mu, pref_sigma, rate, epsilon, out):
    """Generate a population file (columns: value, preference)."""
    try:
        if dataset == "gauss":
            values = gen_gauss(n, mu, sigma, seed=stream(seed, 0, 0))
        elif dataset == "exp":
            values = gen_exp(n, scale, seed=stream(seed, 0, 0))
        elif dataset == "uniform":
            values = gen_uniform(n, seed=stream(seed, 0, 0))
        else:
            if not path or not column:
                raise ConfigError("file dataset requires --path and --column")
            values = load_numeric_column(path, column)
            n = len(values)
        if pref_kind == "cooperative":
            prefs = np.full(n, np.inf)
        elif pref_kind == "gaussian":
            prefs = gen_preferences(n, pref_mu, pref_sigma, seed=stream(seed, 0, 1))
        else:
            prefs = np.full(n, np.inf)
        pop = Population(values, prefs, provenance=f"{dataset}(seed={seed})")
        if pref_kind == "forced":
            pop = force_missing_rate(pop, rate, PrivacyBudget(epsilon), seed=stream(seed, 0, 4))
        save_population(pop, out)
    except (ConfigError, DatasetError, ValueError, OSError) as exc:
        _fail(exc)
    click.echo(f"wrote {len(pop)} users to {out}")


@main.command()
@click.option("--population", "pop_path", type=click.Path(exists=True), required=True)
@click.option("--mechanism", type=str, required=True)
@click.option("--epsilon", type=float, required=True)
@click.option("--seed", type=int, required=True)
@click.option("--behavior", type=click.Choice(["null", "top", "rnd"]), default="null",
              show_default=True, help="non-cooperative behavior for forced-input mechanisms")
@click.option("--out", type=click.Path(), required=True)
def perturb(pop_path, mechanism, epsilon, seed, behavior, out):
    """Perturb every user of a population; writes a report CSV."""
    try:
        mech = canonical_mechanism(mechanism)
        budget = PrivacyBudget(epsilon)
        pop = load_population(pop_path)
        mode = BehaviorMode.parse(behavior)
        null_aware = MECHANISMS[mech].null_aware
        if null_aware:
            inputs = prepare_values(pop.values, pop.preferences, budget)
        else:
            inputs = apply_behavior(pop.values, pop.preferences, budget, mode,
                                    stream(seed, 0, 2))
            if np.isnan(inputs).any():
                raise ConfigError(
                    f"{MECHANISMS[mech].display} can not perturb withheld values; "
                    "use --behavior top or rnd"
                )
        rng = stream(seed, 0, 3)
        with Path(out).open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            if mech in ("bisample", "bisample_md"):
                fn = bisample_perturb if mech == "bisample" else bisample_md_perturb
                rep = fn(inputs, budget, rng)
                writer.writerow(["direction", "sample"])
                for d, s in zip(rep.direction, rep.sample):
                    writer.writerow([int(d), int(s)])
            elif mech in ("harmony", "pm"):
                fn = harmony_perturb if mech == "harmony" else pm_perturb
                outs = fn(inputs, budget, rng)
                writer.writerow(["value"])
                for v in outs:
                    writer.writerow([repr(float(v))])
            else:
                reports = privkvm_perturb(kv_encode(inputs), PrivKvmConfig(epsilon), rng)
                writer.writerow(["key", "value"])
                for k, v in zip(reports.key, reports.value):
                    writer.writerow([int(k), repr(float(v))])
    except (ConfigError, DatasetError, ValueError, OSError) as exc:
        _fail(exc)
    click.echo(f"wrote {len(pop)} reports to {out}")


@main.command()
@click.option("--reports", "reports_path", type=click.Path(exists=True), required=True)
@click.option("--mechanism", type=str, required=True)
@click.option("--epsilon", type=float, required=True)
def estimate(reports_path, mechanism, epsilon):
    """Aggregate a report CSV and print estimates as JSON."""
    try:
        mech = canonical_mechanism(mechanism)
        budget = PrivacyBudget(epsilon)
        with Path(reports_path).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        if not rows:
            raise ConfigError(f"{reports_path} has no report rows")
        result: dict = {"mechanism": MECHANISMS[mech].display, "epsilon": epsilon, "n": len(rows)}
        if mech in ("bisample", "bisample_md"):
            pairs = [(int(r["direction"]), int(r["sample"])) for r in rows]
            counts = DirectionCounts.from_reports(pairs)
            summary = summarize(counts, budget, null_aware=(mech == "bisample_md"))
            result.update(
                f_pos=summary.f_pos, f_neg=summary.f_neg,
                mean_raw=summary.m_star_raw, mean=summary.m_star_clamped,
                sum=summary.s_star,
                missing_rate_raw=summary.f_bot_raw, missing_rate=summary.f_bot_clamped,
            )
        elif mech in ("harmony", "pm"):
            values = [float(r["value"]) for r in rows]
            result["mean"] = sum(values) / len(values)
        else:
            from .privkvm import KvPair

            reports = KvPair(np.array([int(r["key"]) for r in rows]),
                             np.array([float(r["value"]) for r in rows]))
            mr, mean = privkvm_estimate(reports, PrivKvmConfig(epsilon))
            result.update(missing_rate_raw=mr, missing_rate=float(np.clip(mr, 0.0, 1.0)), mean=mean)
    except (ConfigError, EstimationError, DatasetError, ValueError, KeyError, OSError) as exc:
        _fail(exc)
    click.echo(json.dumps(result, sort_keys=True))


@main.command()
@click.option("--mechanism", "mechanisms", type=str, multiple=True,
              help="repeatable; default: every auditable mechanism")
@click.option("--epsilon", "epsilons", type=float, multiple=True,
              default=(0.1, 0.5, 1.0, 2.0, math.log(3.0)), show_default="0.1 0.5 1 2 ln3")
@click.option("--grid-points", type=int, default=201, show_default=True)
@click.option("--mc-draws", type=int, default=0, show_default=True,
              help="also Monte Carlo audit the piecewise mechanism with this many draws")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", type=click.Path(), default=None, help="write a delimited record")
def audit(mechanisms, epsilons, grid_points, mc_draws, seed, out):
    """Audit worst-case log-likelihood ratios against claimed budgets."""
    mechanisms = mechanisms or MATRIX_MECHANISMS
    records = []
    failed = False
    try:
        for name in mechanisms:
            mech = canonical_mechanism(name) if name.lower() != "rr" else "rr"
            for eps in epsilons:
                budget = PrivacyBudget(eps)
                if mech == "pm":
                    if not mc_draws:
                        continue
                    report = audit_pm_binned(budget, draws=mc_draws, seed=seed)
                    bound = eps + math.log(1.05)  # binned MC slack
                else:
                    grid = None if mech == "rr" else default_grid(
                        grid_points, include_null=mech in NULL_AWARE_MECHANISMS)
                    report = audit_epsilon(channel_matrix(mech, budget, grid))
                    bound = eps + 1e-9
                ok = report.epsilon_observed <= bound
                failed = failed or not ok
                click.echo(report.to_text(bound=bound))
                records.append(report)
        if out:
            with Path(out).open("w", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\n")
                writer.writerow(["mechanism", "epsilon_claimed", "epsilon_observed",
                                 "witness_input_a", "witness_input_b", "witness_output"])
                for report in records:
                    writer.writerow(report.to_record())
    except (ConfigError, ValueError, OSError) as exc:
        _fail(exc)
    if failed:
        raise click.ClickException("observed epsilon exceeds a claimed budget")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), required=True)
@click.option("--seed", type=int, required=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--trials", type=int, default=None, help="override config trials")
@click.option("--n", type=int, default=None, help="override config n")
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--write-trials/--no-write-trials", default=True, show_default=True)
def experiment(config_path, seed, out_dir, trials, n, workers, write_trials):
    """Run a config file's sweep and write metrics.csv (and trials.csv)."""
    import dataclasses

    try:
        config = ExperimentConfig.from_json(config_path, seed=seed)
        if trials is not None:
            config = dataclasses.replace(config, trials=trials)
        if n is not None:
            config = dataclasses.replace(config, n=n)
        result = run_experiment(config, workers=workers)
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_results(result.metrics, out / "metrics.csv", kind="metrics")
        if write_trials:
            write_results(result.trials, out / "trials.csv", kind="trials")
    except (ConfigError, DatasetError, OSError) as exc:
        _fail(exc)
    click.echo(f"wrote {len(result.metrics)} metric rows to {out / 'metrics.csv'}")


@main.command()
@click.option("--name", type=click.Choice(REPRODUCE_NAMES + ("all",)), default="all",
              show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n", type=int, default=100_000, show_default=True)
@click.option("--trials", type=int, default=100, show_default=True)
@click.option("--workers", type=int, default=1, show_default=True)
def reproduce(name, out_dir, seed, n, trials, workers):
    """Run the built-in evaluation sweeps and write their CSVs."""
    try:
        written = run_reproduce(name, out_dir, seed=seed, n=n, trials=trials, workers=workers)
    except (ConfigError, DatasetError, OSError) as exc:
        _fail(exc)
    for path in written:
        click.echo(f"wrote {path}")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
