"""A small trainable 1D-CNN time-series classifier.

Conv blocks (conv -> relu) feed a global average pool, a dense layer, and
a log-softmax head. Deliberately tiny: it gives the attacks a fixed,
fully differentiable white-box target at desk scale.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional

import numpy as np

from . import autodiff as ad
from .data import Dataset
from .errors import ConfigError, DataError, DimensionError, PersistenceError, TrainingDiverged

WEIGHTS_MAGIC = b"TSADV-WEIGHTS\n"
WEIGHTS_FORMAT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    num_classes: int
    input_length: int
    conv_blocks: tuple = ((8, 7), (8, 5))  # (channels, kernel width) per block
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "conv_blocks",
                           tuple((int(c), int(w)) for c, w in self.conv_blocks))
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.input_length < 2:
            raise ConfigError(f"input_length must be >= 2, got {self.input_length}")
        if not self.conv_blocks:
            raise ConfigError("need at least one conv block")
        for channels, width in self.conv_blocks:
            if channels < 1:
                raise ConfigError(f"conv channels must be positive, got {channels}")
            if width % 2 == 0 or width < 1:
                raise ConfigError(f"kernel widths must be odd and positive, got {width}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 8
    learning_rate: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.learning_rate <= 0:
            raise ConfigError("epochs, batch_size and learning_rate must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")


class Model:
    """Config plus named weight arrays. Immutable by convention after training."""

    def __init__(self, config: ModelConfig, weights: dict[str, np.ndarray]):
        self.config = config
        self.weights = weights

    @classmethod
    def initialize(cls, config: ModelConfig) -> "Model":
        """He-normal conv/dense init; the final dense layer starts at zero
        so an untrained model outputs the uniform distribution."""
        rng = np.random.default_rng(np.random.SeedSequence([config.seed]))
        weights: dict[str, np.ndarray] = {}
        c_in = 1
        for i, (channels, width) in enumerate(config.conv_blocks):
            std = np.sqrt(2.0 / (c_in * width))
            weights[f"conv{i}.kernel"] = rng.normal(0.0, std, (channels, c_in, width))
            weights[f"conv{i}.bias"] = np.zeros(channels)
            c_in = channels
        weights["dense.weight"] = np.zeros((config.num_classes, c_in))
        weights["dense.bias"] = np.zeros(config.num_classes)
        return cls(config, weights)

    def param_tensors(self, requires_grad: bool) -> dict[str, ad.Tensor]:
        return {name: ad.Tensor(arr, requires_grad=requires_grad)
                for name, arr in self.weights.items()}

    def forward_log_probs(self, x: ad.Tensor,
                          params: Optional[dict[str, ad.Tensor]] = None) -> ad.Tensor:
        """Log class probabilities for one input series (graph-building)."""
        if x.values.ndim != 1 or x.values.size != self.config.input_length:
            raise DimensionError(
                f"input shape {x.values.shape} does not match model input length "
                f"{self.config.input_length}")
        if params is None:
            params = self.param_tensors(requires_grad=False)
        h = x
        for i in range(len(self.config.conv_blocks)):
            h = ad.conv1d(h, params[f"conv{i}.kernel"], params[f"conv{i}.bias"])
            h = ad.relu(h)
        pooled = ad.global_avg_pool(h)
        logits = ad.dense(pooled, params["dense.weight"], params["dense.bias"])
        return ad.log_softmax(logits)

    def predict_log_proba(self, values: np.ndarray) -> np.ndarray:
        return self.forward_log_probs(ad.constant(values)).values

    def predict_proba(self, values: np.ndarray) -> np.ndarray:
        """Softmax probabilities: entries in (0,1), summing to 1."""
        return np.exp(self.predict_log_proba(values))

    def predict_class(self, values: np.ndarray) -> int:
        return int(np.argmax(self.predict_log_proba(values)))

    def accuracy(self, ds: Dataset) -> float:
        hits = sum(1 for s in ds.samples if self.predict_class(s.values) == s.label)
        return hits / len(ds.samples)


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    train_acc: float
    test_acc: Optional[float] = None


def train(train_ds: Dataset, model_config: ModelConfig, train_config: TrainConfig,
          test_ds: Optional[Dataset] = None) -> tuple[Model, list[EpochLog]]:
    """Plain mini-batch gradient descent with a fixed learning rate.

    Deterministic given the two seeds; aborts on a non-finite loss.
    """
    if not train_ds.samples:
        raise DataError("cannot train on an empty dataset")
    lengths = {s.values.size for s in train_ds.samples}
    if lengths != {model_config.input_length}:
        raise DataError(f"series lengths {sorted(lengths)} inconsistent with "
                        f"model input length {model_config.input_length}")
    for s in train_ds.samples:
        if s.label is None or not (0 <= s.label < model_config.num_classes):
            raise DataError(f"label {s.label} outside [0, {model_config.num_classes})")

    model = Model.initialize(model_config)
    params = model.param_tensors(requires_grad=True)
    rng = np.random.default_rng(np.random.SeedSequence([train_config.seed, 1]))
    n = len(train_ds.samples)
    lr = train_config.learning_rate
    log: list[EpochLog] = []

    for epoch in range(1, train_config.epochs + 1):
        order = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, train_config.batch_size):
            batch = order[start:start + train_config.batch_size]
            for t in params.values():
                t.zero_grad()
            for idx in batch:
                sample = train_ds.samples[idx]
                logq = model.forward_log_probs(ad.constant(sample.values), params)
                # cross-entropy against the one-hot label, from log-softmax
                onehot = np.zeros(model_config.num_classes)
                onehot[sample.label] = -1.0
                loss = ad.tsum(ad.mul(ad.constant(onehot), logq))
                loss_val = float(loss.values)
                if not np.isfinite(loss_val):
                    raise TrainingDiverged(
                        f"non-finite training loss at epoch {epoch}, sample {idx}")
                epoch_loss += loss_val
                ad.backward(loss)
            inv = 1.0 / len(batch)
            for name, t in params.items():
                if t.grad is not None:
                    t.values -= lr * inv * t.grad
        # params and model.weights share storage only if updated in place;
        # sync explicitly so the Model always reflects the latest step
        model.weights = {name: t.values.copy() for name, t in params.items()}
        entry = EpochLog(epoch, epoch_loss / n, model.accuracy(train_ds),
                         model.accuracy(test_ds) if test_ds is not None else None)
        log.append(entry)

    return model, log


def write_training_log(log: list[EpochLog], path) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,train_loss,train_acc,test_acc\n")
        for e in log:
            test = "" if e.test_acc is None else repr(e.test_acc)
            fh.write(f"{e.epoch},{e.train_loss!r},{e.train_acc!r},{test}\n")


# ---------------------------------------------------------------------------
# persistence: one JSON header line after a magic prefix, then the named
# tensors as raw little-endian float64 in header order


def save_weights(model: Model, path) -> None:
    names = sorted(model.weights)
    header = {
        "format_version": WEIGHTS_FORMAT_VERSION,
        "config": asdict(model.config),
        "tensors": [{"name": n, "shape": list(model.weights[n].shape)} for n in names],
    }
    with open(path, "wb") as fh:
        fh.write(WEIGHTS_MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        for n in names:
            fh.write(np.ascontiguousarray(model.weights[n], dtype="<f8").tobytes())


def load_weights(path) -> Model:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise PersistenceError(f"cannot read weights file {path}: {exc}") from exc
    if not blob.startswith(WEIGHTS_MAGIC):
        raise PersistenceError(f"{path}: not a weights file (bad magic)")
    rest = blob[len(WEIGHTS_MAGIC):]
    nl = rest.find(b"\n")
    if nl < 0:
        raise PersistenceError(f"{path}: truncated header")
    try:
        header = json.loads(rest[:nl].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise PersistenceError(f"{path}: corrupt header: {exc}") from exc
    version = header.get("format_version")
    if version != WEIGHTS_FORMAT_VERSION:
        raise PersistenceError(
            f"{path}: unsupported weights format version {version!r} "
            f"(expected {WEIGHTS_FORMAT_VERSION})")
    try:
        cfg = header["config"]
        config = ModelConfig(num_classes=cfg["num_classes"],
                             input_length=cfg["input_length"],
                             conv_blocks=tuple(tuple(b) for b in cfg["conv_blocks"]),
                             seed=cfg["seed"])
        specs = [(t["name"], tuple(int(d) for d in t["shape"])) for t in header["tensors"]]
    except (KeyError, TypeError, ConfigError) as exc:
        raise PersistenceError(f"{path}: malformed header: {exc}") from exc

    payload = rest[nl + 1:]
    expected = sum(int(np.prod(shape)) * 8 for _, shape in specs)
    if len(payload) != expected:
        raise PersistenceError(
            f"{path}: payload is {len(payload)} bytes, expected {expected} "
            "(truncated or trailing data)")
    weights: dict[str, np.ndarray] = {}
    offset = 0
    for name, shape in specs:
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        weights[name] = arr.astype(np.float64).reshape(shape)
        offset += count * 8
        if not np.all(np.isfinite(weights[name])):
            raise PersistenceError(f"{path}: tensor {name} contains non-finite values")
    return Model(config, weights)
