"""Synthetic imbalanced fraud-like data with skewed high-cardinality categories.

Each categorical feature draws its categories from a Zipf-like law
(probability of rank ``r`` proportional to ``r ** -zipf_exponent``). Every
category of a signal-bearing feature gets a log-odds offset drawn once from
``Normal(0, signal_strength)``; numeric features carry a standard-normal
latent that also shifts the log-odds. The fraud probability of a row is::

    sigmoid(logit(base_fraud_rate) + sum of category offsets + numeric terms)
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import CATEGORICAL, NUMERIC, TARGET, ColumnSchema, Dataset, encode_labels, format_schema, write_csv
from .errors import ConfigError

TARGET_NAME = "is_fraud"


def _default_cardinalities():
    return (400, 60, 30, 12, 8, 6, 4, 3)


@dataclass(frozen=True)
class SynthConfig:
    n_rows: int = 100_000
    n_categorical: int = 8
    n_numeric: int = 2
    cardinalities: tuple[int, ...] = field(default_factory=_default_cardinalities)
    zipf_exponent: float = 1.2
    base_fraud_rate: float = 0.005
    signal_strength: float = 1.0
    n_signal_categorical: int | None = None  # None: every categorical feature carries signal
    numeric_signal: float = 0.5
    noise_numeric: float = 1.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "cardinalities", tuple(int(c) for c in self.cardinalities))
        if self.n_rows < 1:
            raise ConfigError(f"n_rows must be >= 1, got {self.n_rows}")
        if self.n_categorical < 0 or self.n_numeric < 0:
            raise ConfigError("feature counts must be non-negative")
        if len(self.cardinalities) < self.n_categorical:
            raise ConfigError(f"need {self.n_categorical} cardinalities, got {len(self.cardinalities)}")
        if any(c < 2 for c in self.cardinalities[: self.n_categorical]):
            raise ConfigError("every cardinality must be >= 2")
        if not 0 < self.base_fraud_rate < 1:
            raise ConfigError(f"base_fraud_rate must be in (0, 1), got {self.base_fraud_rate}")
        if self.zipf_exponent < 0 or self.signal_strength < 0 or self.noise_numeric < 0:
            raise ConfigError("zipf_exponent, signal_strength and noise_numeric must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown synth field(s): {sorted(unknown)}")
        return cls(**d)

    def schema(self) -> tuple[ColumnSchema, ...]:
        cols = [ColumnSchema(f"cat_{j}", CATEGORICAL) for j in range(self.n_categorical)]
        cols += [ColumnSchema(f"num_{j}", NUMERIC) for j in range(self.n_numeric)]
        cols.append(ColumnSchema(TARGET_NAME, TARGET))
        return tuple(cols)


@dataclass(frozen=True)
class SynthTruth:
    offsets: dict[str, np.ndarray]  # per feature, offset of category rank r at index r
    numeric_weights: np.ndarray
    probability: np.ndarray  # per-row fraud probability

    def to_json(self) -> str:
        return json.dumps({
            "category_offsets": {k: [float(x) for x in v] for k, v in self.offsets.items()},
            "numeric_weights": [float(x) for x in self.numeric_weights],
            "mean_probability": float(self.probability.mean()),
        }, indent=1)


def zipf_probabilities(cardinality: int, exponent: float) -> np.ndarray:
    w = np.arange(1, cardinality + 1, dtype=np.float64) ** -exponent
    return w / w.sum()


def generate_with_truth(cfg: SynthConfig) -> tuple[Dataset, SynthTruth]:
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_rows
    n_signal = cfg.n_categorical if cfg.n_signal_categorical is None else cfg.n_signal_categorical
    logit = np.full(n, math.log(cfg.base_fraud_rate / (1 - cfg.base_fraud_rate)))
    cats, offsets = {}, {}
    for j in range(cfg.n_categorical):
        card = cfg.cardinalities[j]
        ranks = rng.choice(card, size=n, p=zipf_probabilities(card, cfg.zipf_exponent))
        off = rng.normal(0.0, cfg.signal_strength, size=card) if j < n_signal else np.zeros(card)
        logit += off[ranks]
        name = f"cat_{j}"
        offsets[name] = off
        cats[name] = encode_labels(f"c{r}" for r in ranks.tolist())
    weights = np.full(cfg.n_numeric, cfg.numeric_signal)
    nums = {}
    for j in range(cfg.n_numeric):
        latent = rng.standard_normal(n)
        logit += weights[j] * latent
        nums[f"num_{j}"] = latent + cfg.noise_numeric * rng.standard_normal(n)
    prob = 1.0 / (1.0 + np.exp(-logit))
    y = (rng.random(n) < prob).astype(np.int8)
    ds = Dataset.from_columns(cfg.schema(), cats, nums, y)
    return ds, SynthTruth(offsets, weights, prob)


def generate(cfg: SynthConfig) -> Dataset:
    return generate_with_truth(cfg)[0]


def write_bundle(cfg: SynthConfig, csv_path) -> tuple[Path, Path]:
    """Write the CSV plus ``<stem>.schema`` and ``<stem>.truth.json`` next to it."""
    csv_path = Path(csv_path)
    ds, truth = generate_with_truth(cfg)
    write_csv(ds, csv_path)
    schema_path = csv_path.with_suffix(".schema")
    schema_path.write_text(format_schema(ds.schema), encoding="utf-8")
    truth_path = csv_path.with_suffix(".truth.json")
    payload = json.loads(truth.to_json())
    payload["config"] = asdict(cfg)
    truth_path.write_text(json.dumps(payload, indent=1) + "\n", encoding="utf-8")
    return schema_path, truth_path
