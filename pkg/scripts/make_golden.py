#!/usr/bin/env python3
"""Regenerate the frozen golden metrics CSV used by the reproducibility test.

Only rerun this deliberately (and review the diff) if the RNG contract or
the CSV schema changes; the test exists to catch accidental drift.
"""

from pathlib import Path

from bisample.harness import DatasetSpec, ExperimentConfig, SweepSpec, run_experiment, write_results

config = ExperimentConfig(
    dataset=DatasetSpec("gauss"),
    mechanisms=("bisample", "harmony"),
    sweep=SweepSpec("epsilon", (0.5, 1.0)),
    n=400,
    trials=3,
    seed=11,
)

out = Path(__file__).resolve().parent.parent / "tests" / "data" / "golden_metrics.csv"
write_results(run_experiment(config).metrics, out)
print(f"wrote {out}")
