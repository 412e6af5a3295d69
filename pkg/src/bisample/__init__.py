"""Local differential privacy toolkit built around bidirectional sampling.

Mechanisms perturb values client-side under an epsilon budget; the
aggregator recovers unbiased means, sums, and missing rates from two-bit
reports, with analytic privacy audits and a reproducible simulation
harness on top.
"""

from .budget import PrivacyBudget, ValueDomain, rescale_mean
from .estimation import (
    AllNullPopulation,
    BiSampleAggregator,
    DirectionCounts,
    EmptyDirection,
    EstimateSummary,
    EstimationError,
    accumulate,
    expected_counts_oracle,
    frequencies,
    mean_estimate_basic,
    mean_estimate_md,
    missing_rate_estimate,
    rr_frequency_adjust,
    sum_estimate,
    summarize,
    theoretical_variance,
)
from .mechanisms import (
    NULL,
    BiSample,
    BiSampleMD,
    Harmony,
    PerturbedReport,
    PiecewiseMechanism,
    RandomizedResponse,
    bisample_md_perturb,
    bisample_perturb,
    discretize,
    harmony_perturb,
    is_null,
    pm_perturb,
    prepare_value,
    rr_perturb,
)
from .population import (
    BehaviorMode,
    GroundTruth,
    Population,
    UserRecord,
    apply_behavior,
    force_missing_rate,
    gen_exp,
    gen_gauss,
    gen_preferences,
    gen_uniform,
    ground_truth,
    load_numeric_column,
    load_population,
    save_population,
)
from .privkvm import DegenerateFrequency, KvPair, PrivKvmConfig, kv_encode, privkvm_estimate, privkvm_perturb
from .rng import make_rng, stream

__version__ = "0.1.0"
