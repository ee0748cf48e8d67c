"""Adversarial attacks on time-series classifiers: a rank-swap KL attack,
five gradient-based baselines, a small 1D-CNN target model, and an
evaluation harness."""

__version__ = "0.1.0"

from .attacks import (AttackConfig, AttackKind, AttackOutcome,  # noqa: F401
                      build_swap_target, fgsm, kl_divergence,
                      run_attack, run_iterative_attack)
from .data import Dataset, TimeSeries, load_ucr_tsv, make_synthetic, znormalize  # noqa: F401
from .evaluation import (MetricsReport, SweepSpec, compute_asr,  # noqa: F401
                         compute_average_distance, export_results,
                         run_benchmark, run_sweep)
from .model import Model, ModelConfig, TrainConfig, load_weights, save_weights, train  # noqa: F401
