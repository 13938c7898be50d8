"""Continually released differentially private synthetic data for longitudinal panels."""

__version__ = "0.1.0"

from .counters import MonotoneBank, TreeCounter, tree_noise_sigma2
from .cumulative import CumulativeSynthConfig, CumulativeSynthesizer, accuracy_of
from .dp import (
    BitSource,
    DiscreteGaussianSampler,
    ZCDPAccountant,
    compose,
    cumulative_split_weights,
    sample_discrete_gaussian,
    split_cumulative,
    split_uniform,
    zcdp_to_approx_dp,
)
from .model import (
    LongitudinalDataset,
    RoundUpdate,
    SuffixHistogram,
    SyntheticStore,
    all_suffixes,
    suffix_index,
    suffix_string,
    true_cumulative_counts,
    true_suffix_histogram,
)
from .queries import (
    MaxErrorReport,
    QuerySpec,
    UnsupportedWindowError,
    cumulative_from_window_oracle,
    debias_fraction,
    debiased_answer,
    eval_query,
    max_error_report,
    parse_queries,
)
from .window import (
    PaddingExhaustedError,
    WindowSynthConfig,
    WindowSynthesizer,
    compute_error_bound,
    compute_n_pad,
    compute_relative_error_bound,
    split_consistent,
)

__all__ = [
    "BitSource",
    "CumulativeSynthConfig",
    "CumulativeSynthesizer",
    "DiscreteGaussianSampler",
    "LongitudinalDataset",
    "MaxErrorReport",
    "MonotoneBank",
    "PaddingExhaustedError",
    "QuerySpec",
    "RoundUpdate",
    "SuffixHistogram",
    "SyntheticStore",
    "TreeCounter",
    "UnsupportedWindowError",
    "WindowSynthConfig",
    "WindowSynthesizer",
    "ZCDPAccountant",
    "accuracy_of",
    "all_suffixes",
    "compose",
    "compute_error_bound",
    "compute_n_pad",
    "compute_relative_error_bound",
    "cumulative_from_window_oracle",
    "cumulative_split_weights",
    "debias_fraction",
    "debiased_answer",
    "eval_query",
    "max_error_report",
    "parse_queries",
    "sample_discrete_gaussian",
    "split_consistent",
    "split_cumulative",
    "split_uniform",
    "suffix_index",
    "suffix_string",
    "tree_noise_sigma2",
    "true_cumulative_counts",
    "true_suffix_histogram",
    "zcdp_to_approx_dp",
]
