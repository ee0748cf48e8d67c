"""Dataset ingestion (UCR-style TSV), normalization, and synthetic data."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError

STD_FLOOR = 1e-12


@dataclass(frozen=True)
class TimeSeries:
    values: np.ndarray
    label: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.values.ndim != 1 or self.values.size < 2:
            raise DataError(f"a time series must be 1-D with length >= 2, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise DataError("time series contains non-finite values")


@dataclass
class Dataset:
    samples: list[TimeSeries]
    num_classes: int
    name: str = ""
    split: str = "train"
    # original label -> dense 0-based index, kept for reporting
    label_mapping: dict = field(default_factory=dict)

    @property
    def length(self) -> int:
        return self.samples[0].values.size

    def __len__(self) -> int:
        return len(self.samples)

    def subset(self, indices) -> "Dataset":
        return Dataset([self.samples[i] for i in indices], self.num_classes,
                       self.name, self.split, dict(self.label_mapping))

    def manifest(self) -> dict:
        return {
            "name": self.name,
            "split": self.split,
            "num_classes": self.num_classes,
            "num_samples": len(self.samples),
            "length": self.length if self.samples else 0,
            "label_mapping": {str(k): v for k, v in self.label_mapping.items()},
        }


def load_ucr_tsv(path, name: str = "", split: str = "train") -> Dataset:
    """Parse a UCR-style TSV: label in the first column, values after.

    Raw labels are remapped to dense 0-based indices (mapping retained on
    the dataset). Ragged rows and non-numeric fields are rejected with the
    offending row/column named.
    """
    path = Path(path)
    rows: list[tuple[float, np.ndarray]] = []
    width = None
    with open(path, "r") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split("\t")
            if width is None:
                width = len(fields)
                if width < 3:
                    raise DataError(f"{path}: row {lineno} has {width} fields; "
                                    "need a label plus at least 2 values")
            elif len(fields) != width:
                raise DataError(f"{path}: row {lineno} has {len(fields)} fields, expected {width}")
            parsed = []
            for col, tok in enumerate(fields):
                try:
                    parsed.append(float(tok))
                except ValueError:
                    raise DataError(f"{path}: row {lineno}, column {col + 1}: "
                                    f"non-numeric field {tok!r}") from None
            vals = np.array(parsed[1:], dtype=np.float64)
            if not np.all(np.isfinite(vals)):
                raise DataError(f"{path}: row {lineno} contains a missing or non-finite value")
            rows.append((parsed[0], vals))
    if not rows:
        raise DataError(f"{path}: empty dataset file")

    raw_labels = sorted({lab for lab, _ in rows})
    mapping = {lab: i for i, lab in enumerate(raw_labels)}
    samples = [TimeSeries(vals, mapping[lab]) for lab, vals in rows]
    return Dataset(samples, num_classes=len(raw_labels),
                   name=name or path.stem, split=split, label_mapping=mapping)


def znormalize(values: np.ndarray) -> np.ndarray:
    """Zero mean, unit population stddev; constant series map to zeros."""
    values = np.asarray(values, dtype=np.float64)
    mean = values.mean()
    std = values.std()
    if std < STD_FLOOR:
        return np.zeros_like(values)
    return (values - mean) / std


def znormalize_dataset(ds: Dataset) -> Dataset:
    samples = [TimeSeries(znormalize(s.values), s.label) for s in ds.samples]
    return Dataset(samples, ds.num_classes, ds.name, ds.split, dict(ds.label_mapping))


SYNTHETIC_KINDS = ("sine-vs-square", "shifted-gaussian-bumps")


def make_synthetic(kind: str, n_per_class: int, length: int, noise_std: float,
                   seed: int, split: str = "train") -> Dataset:
    """Deterministic synthetic datasets, separable by construction.

    sine-vs-square: two classes, a two-cycle sine vs a square wave, each
    with a per-sample random phase. shifted-gaussian-bumps: three classes,
    a Gaussian bump centred at T/4, T/2 or 3T/4.
    """
    if kind not in SYNTHETIC_KINDS:
        raise DataError(f"unknown synthetic kind {kind!r}; choose from {SYNTHETIC_KINDS}")
    if n_per_class < 1 or length < 8:
        raise DataError("n_per_class must be >= 1 and length >= 8")
    kind_tag = SYNTHETIC_KINDS.index(kind)
    rng = np.random.default_rng(np.random.SeedSequence([kind_tag, seed]))
    t = np.arange(length, dtype=np.float64)
    samples: list[TimeSeries] = []
    if kind == "sine-vs-square":
        num_classes = 2
        for label in range(num_classes):
            for _ in range(n_per_class):
                phase = rng.uniform(0.0, 2.0 * np.pi)
                base = np.sin(4.0 * np.pi * t / length + phase)
                if label == 1:
                    base = np.sign(base) + (base == 0.0)  # square wave, no zeros
                noise = rng.normal(0.0, 1.0, length) * noise_std
                samples.append(TimeSeries(base + noise, label))
    else:
        num_classes = 3
        centers = (length / 4.0, length / 2.0, 3.0 * length / 4.0)
        # widths differ per class as well: a pooled conv net cannot separate
        # classes by bump position alone
        widths = (length / 16.0, length / 10.0, length / 6.0)
        for label in range(num_classes):
            for _ in range(n_per_class):
                jitter = rng.uniform(-2.0, 2.0)
                base = np.exp(-0.5 * ((t - centers[label] - jitter) / widths[label]) ** 2)
                noise = rng.normal(0.0, 1.0, length) * noise_std
                samples.append(TimeSeries(base + noise, label))
    mapping = {float(i): i for i in range(num_classes)}
    return Dataset(samples, num_classes, name=f"synthetic-{kind}", split=split,
                   label_mapping=mapping)


def save_ucr_tsv(ds: Dataset, path) -> None:
    """Write a dataset back out in UCR TSV form (label first, repr floats)."""
    with open(path, "w") as fh:
        for s in ds.samples:
            fields = [repr(float(s.label))] + [repr(float(v)) for v in s.values]
            fh.write("\t".join(fields) + "\n")
