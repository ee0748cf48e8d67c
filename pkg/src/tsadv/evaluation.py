"""Metrics, benchmark orchestration, parameter sweeps, and result export."""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict, replace
from functools import partial
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .attacks import AttackConfig, AttackOutcome, run_attack
from .data import Dataset
from .errors import ConfigError, MetricError
from .model import Model


def compute_asr(outcomes: Sequence[AttackOutcome]) -> float:
    """Successful / (successful + failed) attacked samples."""
    if not outcomes:
        raise MetricError("ASR is undefined on an empty outcome list")
    n_success = sum(1 for o in outcomes if o.success)
    return n_success / len(outcomes)


def compute_average_distance(outcomes: Sequence[AttackOutcome]) -> Optional[float]:
    """Mean Euclidean perturbation norm over successful outcomes; None if none."""
    dists = [o.euclidean_distance for o in outcomes if o.success]
    if not dists:
        return None
    return float(np.mean(dists))


def derive_seed(base_seed: int, sample_index: int) -> int:
    """Per-sample seed, independent of execution order and parallelism."""
    return int(np.random.SeedSequence([base_seed, sample_index]).generate_state(1)[0])


@dataclass
class OutcomeRow:
    dataset: str
    attack: str
    seed: int
    sample_index: int
    outcome: AttackOutcome

    def csv_fields(self) -> list[str]:
        o = self.outcome
        return [
            self.dataset, self.attack, str(self.seed), str(self.sample_index),
            str(o.original_class), str(o.final_class), str(o.success),
            repr(o.euclidean_distance), repr(o.linf_distance),
            "" if o.kl_to_target is None else repr(o.kl_to_target),
            repr(o.kl_original_vs_perturbed), str(o.iterations_used),
        ]


SAMPLES_CSV_HEADER = ("dataset,attack,seed,sample_index,original_class,final_class,"
                      "success,euclidean_distance,linf_distance,kl_to_target,"
                      "kl_original_vs_perturbed,iterations_used")
COMPARISON_CSV_HEADER = "attack,asr,average_distance,n_attacked,n_success,n_skipped"


@dataclass
class MetricsReport:
    attack: str
    asr: float
    average_distance: Optional[float]
    n_attacked: int
    n_success: int
    n_skipped: int
    config: dict
    rows: list[OutcomeRow]

    def check_consistency(self) -> None:
        outcomes = [r.outcome for r in self.rows]
        if compute_asr(outcomes) != self.asr:
            raise MetricError(f"{self.attack}: ASR {self.asr!r} does not re-derive "
                              "from its own rows")
        if compute_average_distance(outcomes) != self.average_distance:
            raise MetricError(f"{self.attack}: average distance does not re-derive "
                              "from its own rows")

    def to_dict(self) -> dict:
        return {
            "attack": self.attack,
            "asr": self.asr,
            "average_distance": self.average_distance,
            "n_attacked": self.n_attacked,
            "n_success": self.n_success,
            "n_skipped": self.n_skipped,
            "config": self.config,
            "samples": [dict(zip(SAMPLES_CSV_HEADER.split(","), r.csv_fields()))
                        for r in self.rows],
        }


def _attack_one(model: Model, samples: list, config: AttackConfig,
                base_seed: int, index: int) -> AttackOutcome:
    cfg = config.with_seed(derive_seed(base_seed, index))
    return run_attack(model, samples[index], cfg)


def run_benchmark(model: Model, dataset: Dataset,
                  attack_configs: Sequence[AttackConfig], base_seed: int,
                  sample_filter: str = "correct-only",
                  jobs: int = 1) -> list[MetricsReport]:
    """Run every attack over the dataset, one report per attack.

    correct-only (the default) skips samples the clean model already
    misclassifies; per-sample seeds are derived from (base_seed, index) so
    results are independent of scheduling and job count.
    """
    if sample_filter not in ("correct-only", "all"):
        raise ConfigError(f"unknown sample filter {sample_filter!r}")
    if not dataset.samples:
        raise MetricError("cannot benchmark an empty dataset")

    if sample_filter == "correct-only":
        attacked = [i for i, s in enumerate(dataset.samples)
                    if model.predict_class(s.values) == s.label]
    else:
        attacked = list(range(len(dataset.samples)))
    n_skipped = len(dataset.samples) - len(attacked)
    values = [s.values for s in dataset.samples]

    reports: list[MetricsReport] = []
    for config in attack_configs:
        task = partial(_attack_one, model, values, config, base_seed)
        if jobs > 1 and len(attacked) > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(task, attacked))
        else:
            outcomes = [task(i) for i in attacked]
        rows = [OutcomeRow(dataset.name, config.kind.value,
                           derive_seed(base_seed, idx), idx, out)
                for idx, out in zip(attacked, outcomes)]
        report = MetricsReport(
            attack=config.kind.value,
            asr=compute_asr([r.outcome for r in rows]) if rows else 0.0,
            average_distance=compute_average_distance([r.outcome for r in rows]),
            n_attacked=len(rows),
            n_success=sum(1 for r in rows if r.outcome.success),
            n_skipped=n_skipped,
            config={**asdict(config), "kind": config.kind.value,
                    "base_seed": base_seed, "sample_filter": sample_filter},
            rows=rows,
        )
        reports.append(report)
    return reports


def pooled_report(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Merge same-attack reports from several datasets into one pooled
    (micro-averaged) report."""
    attacks = {r.attack for r in reports}
    if len(attacks) != 1:
        raise MetricError(f"can only pool reports of one attack, got {sorted(attacks)}")
    rows = [row for r in reports for row in r.rows]
    outcomes = [r.outcome for r in rows]
    return MetricsReport(
        attack=reports[0].attack,
        asr=compute_asr(outcomes),
        average_distance=compute_average_distance(outcomes),
        n_attacked=len(rows),
        n_success=sum(1 for o in outcomes if o.success),
        n_skipped=sum(r.n_skipped for r in reports),
        config=dict(reports[0].config, pooled=True),
        rows=rows,
    )


# ---------------------------------------------------------------------------
# parameter sweeps


@dataclass
class SweepSpec:
    parameter: str                 # "gamma" or "alpha"
    values: Sequence[float]
    base_config: AttackConfig
    seeds: Sequence[int]

    def __post_init__(self):
        if self.parameter not in ("gamma", "alpha"):
            raise ConfigError(f"unknown sweep parameter {self.parameter!r}")
        vals = list(self.values)
        if len(vals) < 2:
            raise ConfigError("a sweep needs at least 2 values")
        diffs = np.diff(vals)
        if not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ConfigError("sweep values must be strictly monotone")
        if not self.seeds:
            raise ConfigError("a sweep needs at least 1 seed")


@dataclass
class SweepRow:
    parameter: str
    value: float
    seed: int
    asr: float
    average_distance: Optional[float]


def run_sweep(model: Model, dataset: Dataset, spec: SweepSpec,
              sample_filter: str = "correct-only", jobs: int = 1) -> list[SweepRow]:
    """Full cross product of values x seeds, in ingestion order."""
    out: list[SweepRow] = []
    for value in spec.values:
        config = replace(spec.base_config, **{spec.parameter: value})
        for seed in spec.seeds:
            report = run_benchmark(model, dataset, [config], base_seed=seed,
                                   sample_filter=sample_filter, jobs=jobs)[0]
            out.append(SweepRow(spec.parameter, float(value), int(seed),
                                report.asr, report.average_distance))
    return out


# ---------------------------------------------------------------------------
# export


def write_samples_csv(reports: Sequence[MetricsReport], path) -> None:
    for r in reports:
        r.check_consistency()
    with open(path, "w") as fh:
        fh.write(SAMPLES_CSV_HEADER + "\n")
        for r in reports:
            for row in r.rows:
                fh.write(",".join(row.csv_fields()) + "\n")


def write_comparison_csv(reports: Sequence[MetricsReport], path) -> None:
    for r in reports:
        r.check_consistency()
    with open(path, "w") as fh:
        fh.write(COMPARISON_CSV_HEADER + "\n")
        for r in reports:
            dist = "" if r.average_distance is None else repr(r.average_distance)
            fh.write(f"{r.attack},{r.asr!r},{dist},{r.n_attacked},"
                     f"{r.n_success},{r.n_skipped}\n")


def write_reports_json(reports: Sequence[MetricsReport], path) -> None:
    with open(path, "w") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2, sort_keys=True)


def write_sweep_csv(rows: Sequence[SweepRow], path) -> None:
    with open(path, "w") as fh:
        fh.write("parameter,value,seed,asr,average_distance\n")
        for r in rows:
            dist = "" if r.average_distance is None else repr(r.average_distance)
            fh.write(f"{r.parameter},{r.value!r},{r.seed},{r.asr!r},{dist}\n")


def _import_pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_overlays(report: MetricsReport, path, max_samples: int = 4) -> None:
    """Original-vs-perturbed overlays for the first successful samples."""
    plt = _import_pyplot()
    rows = [r for r in report.rows if r.outcome.success][:max_samples] or \
        report.rows[:max_samples]
    if not rows:
        return
    fig, axes = plt.subplots(len(rows), 1, figsize=(8, 2.2 * len(rows)), squeeze=False)
    for ax, row in zip(axes[:, 0], rows):
        o = row.outcome
        ax.plot(o.original, label="original", lw=1.0)
        ax.plot(o.perturbed, label="perturbed", lw=1.0)
        ax.set_title(f"{report.attack} sample {row.sample_index}: "
                     f"{o.original_class} -> {o.final_class}", fontsize=8)
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_comparison(reports: Sequence[MetricsReport], path) -> None:
    """ASR vs average distance scatter, one point per attack."""
    plt = _import_pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    for r in reports:
        if r.average_distance is None:
            continue
        ax.scatter(r.average_distance, r.asr)
        ax.annotate(r.attack, (r.average_distance, r.asr), fontsize=8)
    ax.set_xlabel("average distance (successful samples)")
    ax.set_ylabel("attack success rate")
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def plot_sweep(rows: Sequence[SweepRow], path) -> None:
    """One ASR line per seed over the swept parameter."""
    plt = _import_pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    seeds = sorted({r.seed for r in rows})
    for seed in seeds:
        pts = [(r.value, r.asr) for r in rows if r.seed == seed]
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                label=f"seed {seed}")
    ax.set_xlabel(rows[0].parameter if rows else "value")
    ax.set_ylabel("attack success rate")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def export_results(reports: Sequence[MetricsReport], out_dir,
                   formats: Sequence[str] = ("csv", "json"),
                   sweep_rows: Optional[Sequence[SweepRow]] = None) -> list[Path]:
    """Write the requested formats into out_dir; returns the paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for fmt in formats:
        if fmt == "csv":
            p1 = out_dir / "samples.csv"
            p2 = out_dir / "comparison.csv"
            write_samples_csv(reports, p1)
            write_comparison_csv(reports, p2)
            written += [p1, p2]
            if sweep_rows is not None:
                p3 = out_dir / "sweep.csv"
                write_sweep_csv(sweep_rows, p3)
                written.append(p3)
        elif fmt == "json":
            p = out_dir / "reports.json"
            write_reports_json(reports, p)
            written.append(p)
        elif fmt == "svg-plot":
            p = out_dir / "comparison.svg"
            plot_comparison(reports, p)
            written.append(p)
            for r in reports:
                po = out_dir / f"overlay_{r.attack}.svg"
                plot_overlays(r, po)
                if po.exists():
                    written.append(po)
            if sweep_rows is not None:
                ps = out_dir / "sweep.svg"
                plot_sweep(sweep_rows, ps)
                written.append(ps)
        else:
            raise ConfigError(f"unknown export format {fmt!r}")
    return written
