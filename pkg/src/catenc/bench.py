"""Multi-seed encoder comparison.

For every seed: obtain the data, split it, and for every setting fit the
encoders on the training rows only, train one boosted model, score the
validation rows and record PR AUC / precision / recall / F1. The report
averages each metric over seeds and expresses it as a percent delta against
the ``none`` setting (raw category codes used as numbers).
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from . import encoders as enc
from . import gbdt
from .data import Dataset, SplitSpec, load_csv, read_schema, split
from .errors import CatencError, ConfigError, ExperimentError, UndefinedMetricError
from .metrics import METRIC_NAMES, MetricsReport, format_percent, percent_delta, prf1
from .synth import SynthConfig, generate

BASELINE = "none"
BUILTIN = "builtin"
GBDT_SEED_OFFSET = 1000
PERMUTATION_SEED_OFFSET = 2000
REPORT_VERSION = 1

METRIC_TITLES = {"pr_auc": "PR AUC", "precision": "Precision", "recall": "Recall", "f1": "F1"}


@dataclass(frozen=True)
class Setting:
    """One row of the comparison: a baseline or an external encoder."""

    name: str
    encoder: enc.EncoderConfig | None = None
    builtin: bool = False

    @property
    def is_baseline(self) -> bool:
        return self.encoder is None and not self.builtin


def default_settings() -> list[Setting]:
    kinds = ["target", "m_estimate", "catboost_ordered", "pozzolo", "james_stein", "woe"]
    return [Setting(BASELINE), Setting(BUILTIN, builtin=True)] + [
        Setting(k, enc.EncoderConfig(k)) for k in kinds
    ]


def parse_setting(entry) -> Setting:
    if isinstance(entry, str):
        entry = {"kind": entry}
    entry = dict(entry)
    kind = entry.pop("kind")
    name = entry.pop("name", kind)
    if kind == BASELINE:
        return Setting(name)
    if kind == BUILTIN:
        return Setting(name, builtin=True)
    if "variant" in entry:
        entry["pozzolo_variant"] = entry.pop("variant")
    try:
        return Setting(name, enc.EncoderConfig(kind, **entry))
    except TypeError as exc:
        raise ConfigError(f"encoder setting {name!r}: {exc}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    synth: SynthConfig | None = None
    csv_path: str | None = None
    schema_path: str | None = None
    delimiter: str = ","
    missing: str = ""
    split: SplitSpec = SplitSpec()
    settings: tuple[Setting, ...] = field(default_factory=lambda: tuple(default_settings()))
    gbdt_params: gbdt.GbdtParams = gbdt.GbdtParams()
    seeds: tuple[int, ...] = tuple(range(10))
    threshold: float = 0.5
    output: str | None = None

    def __post_init__(self):
        if (self.synth is None) == (self.csv_path is None):
            raise ConfigError("give exactly one data source: synth parameters or a CSV path")
        if self.csv_path is not None and self.schema_path is None:
            raise ConfigError("a CSV data source needs a schema file")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        settings = list(self.settings)
        names = [s.name for s in settings]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate setting names: {names}")
        if not any(s.is_baseline for s in settings):
            settings.insert(0, Setting(BASELINE))
        elif not settings[0].is_baseline:
            settings.sort(key=lambda s: not s.is_baseline)
        object.__setattr__(self, "settings", tuple(settings))

    @property
    def baseline(self) -> str:
        return self.settings[0].name

    @classmethod
    def from_dict(cls, d: dict, base_dir=".") -> "ExperimentConfig":
        d = dict(d)
        data = d.pop("data", {})
        kwargs = {}
        if "synth" in data:
            kwargs["synth"] = SynthConfig.from_dict(data["synth"])
        if "csv" in data:
            kwargs["csv_path"] = str(Path(base_dir, data["csv"]))
            kwargs["schema_path"] = str(Path(base_dir, data["schema"])) if "schema" in data else None
            kwargs["delimiter"] = data.get("delimiter", ",")
            kwargs["missing"] = data.get("missing", "")
        if "split" in d:
            s = dict(d.pop("split"))
            if isinstance(s.get("train_fraction"), str):
                s["train_fraction"] = float(Fraction(s["train_fraction"]))
            kwargs["split"] = SplitSpec(**s)
        if "encoders" in d:
            settings = [parse_setting(e) for e in d.pop("encoders")]
            if d.pop("builtin", False) and not any(s.builtin for s in settings):
                settings.append(Setting(BUILTIN, builtin=True))
            kwargs["settings"] = tuple(settings)
        if "gbdt" in d:
            kwargs["gbdt_params"] = gbdt.GbdtParams(**d.pop("gbdt"))
        if "seeds" in d:
            kwargs["seeds"] = tuple(int(s) for s in d.pop("seeds"))
        for key in ("threshold", "output"):
            if key in d:
                kwargs[key] = d.pop(key)
        if d:
            raise ConfigError(f"unknown experiment field(s): {sorted(d)}")
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = Path(path)
        try:
            d = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        return cls.from_dict(d, base_dir=path.parent)


# -- one (setting, seed) cell -------------------------------------------------


@dataclass
class CellResult:
    encoders: dict[str, enc.FittedEncoder]
    model: gbdt.BoostedModel
    scores: np.ndarray
    metrics: MetricsReport


def feature_columns(ds: Dataset) -> list[str]:
    return [c.name for c in ds.schema if c.kind in ("categorical", "numeric")]


def build_features(train: Dataset, val: Dataset, setting: Setting, seed: int = 0):
    """Feature matrices for one setting; encoders see training rows only.

    Returns ``(X_train, X_val, categorical_indices, fitted_encoders)``.
    """
    cols_tr, cols_va, cat_idx, fitted = [], [], [], {}
    for j, name in enumerate(feature_columns(train)):
        if name in train.numeric:
            cols_tr.append(train.numeric[name])
            cols_va.append(val.numeric[name])
            continue
        tr, va = train.categorical[name], val.categorical[name]
        if setting.encoder is None:
            cols_tr.append(tr.codes.astype(np.float64))
            cols_va.append(va.codes.astype(np.float64))
            cat_idx.append(j)
            continue
        cfg = setting.encoder
        if cfg.kind == "catboost_ordered":
            cfg = replace(cfg, permutation_seed=cfg.permutation_seed + seed + PERMUTATION_SEED_OFFSET)
        fitted_enc, train_values = enc.fit_encoder(cfg, tr.codes, train.target, tr.n_categories)
        fitted[name] = fitted_enc.with_labels(tr.labels)
        cols_tr.append(train_values)
        cols_va.append(enc.transform(fitted_enc, va.codes))
    return np.column_stack(cols_tr), np.column_stack(cols_va), cat_idx, fitted


def run_cell(train: Dataset, val: Dataset, setting: Setting, params: gbdt.GbdtParams,
             seed: int, threshold: float = 0.5) -> CellResult:
    X_tr, X_va, cat_idx, fitted = build_features(train, val, setting, seed)
    mode = "builtin_sorted" if setting.builtin else "codes_as_numeric"
    p = replace(params, categorical_mode=mode, seed=params.seed + seed + GBDT_SEED_OFFSET)
    model = gbdt.fit(X_tr, train.target, p, categorical_features=cat_idx)
    scores = gbdt.predict(model, X_va)
    # validation labels are read here and nowhere earlier
    return CellResult(fitted, model, scores, prf1(scores, val.target, threshold))


def load_data(cfg: ExperimentConfig, seed: int) -> Dataset:
    if cfg.synth is not None:
        return generate(replace(cfg.synth, seed=cfg.synth.seed + seed))
    return load_csv(cfg.csv_path, read_schema(cfg.schema_path), delimiter=cfg.delimiter, missing=cfg.missing)


# -- report -------------------------------------------------------------------


@dataclass
class BenchReport:
    settings: list[str]
    seeds: list[int]
    threshold: float
    raw: dict[str, dict[str, list[float]]]  # setting -> metric -> per-seed values
    counts: dict[str, list[dict]] = field(default_factory=dict)  # setting -> per-seed confusion counts

    @property
    def baseline(self) -> str:
        return self.settings[0]

    def mean(self, setting: str, metric: str) -> float:
        return float(np.mean(self.raw[setting][metric]))

    def std(self, setting: str, metric: str) -> float:
        v = self.raw[setting][metric]
        return float(np.std(v, ddof=1)) if len(v) > 1 else 0.0

    def delta(self, setting: str, metric: str) -> float | None:
        """Percent change of the seed mean vs the baseline; ``None`` if the baseline mean is 0."""
        if setting == self.baseline:
            return 0.0
        try:
            return percent_delta(self.mean(setting, metric), self.mean(self.baseline, metric))
        except UndefinedMetricError:
            return None

    def to_dict(self) -> dict:
        rows = []
        for s in self.settings:
            rows.append({
                "name": s,
                "per_seed": {m: list(self.raw[s][m]) for m in METRIC_NAMES},
                "counts": self.counts.get(s, []),
                "mean": {m: self.mean(s, m) for m in METRIC_NAMES},
                "std": {m: self.std(s, m) for m in METRIC_NAMES},
                "delta_pct": {m: self.delta(s, m) for m in METRIC_NAMES},
            })
        return {"version": REPORT_VERSION, "baseline": self.baseline, "threshold": self.threshold,
                "seeds": list(self.seeds), "settings": rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def run_experiment(cfg: ExperimentConfig, progress=None) -> BenchReport:
    names = [s.name for s in cfg.settings]
    raw = {s: {m: [] for m in METRIC_NAMES} for s in names}
    counts = {s: [] for s in names}
    for seed in cfg.seeds:
        try:
            ds = load_data(cfg, seed)
            spec = replace(cfg.split, seed=cfg.split.seed + seed)
            train, val = split(ds, spec)
        except CatencError as exc:
            raise ExperimentError("<data>", seed, exc) from exc
        for setting in cfg.settings:
            try:
                res = run_cell(train, val, setting, cfg.gbdt_params, seed, cfg.threshold)
            except CatencError as exc:
                raise ExperimentError(setting.name, seed, exc) from exc
            r = res.metrics
            for m in METRIC_NAMES:
                raw[setting.name][m].append(getattr(r, m))
            counts[setting.name].append({"tp": r.tp, "fp": r.fp, "tn": r.tn, "fn": r.fn})
            if progress is not None:
                progress(setting.name, seed, r)
    return BenchReport(names, list(cfg.seeds), float(cfg.threshold), raw, counts)


def render_report(report: BenchReport, fmt: str = "table_text") -> str:
    if fmt == "table_text":
        width = max(len(s) for s in report.settings) + 2
        head = "".ljust(width) + "".join(METRIC_TITLES[m].rjust(11) for m in METRIC_NAMES)
        lines = [head, "-" * len(head)]
        for s in report.settings:
            cells = "".join(format_percent(report.delta(s, m)).rjust(11) for m in METRIC_NAMES)
            lines.append(s.ljust(width) + cells)
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["setting", "seed", *METRIC_NAMES])
        for s in report.settings:
            for i, seed in enumerate(report.seeds):
                w.writerow([s, seed, *(repr(float(report.raw[s][m][i])) for m in METRIC_NAMES)])
        return buf.getvalue()
    raise ConfigError(f"unknown report format {fmt!r}")


def parse_report_csv(text: str, threshold: float = 0.5) -> BenchReport:
    rows = list(csv.DictReader(io.StringIO(text)))
    settings: list[str] = []
    seeds: list[int] = []
    raw: dict[str, dict[str, list[float]]] = {}
    for row in rows:
        s = row["setting"]
        if s not in raw:
            settings.append(s)
            raw[s] = {m: [] for m in METRIC_NAMES}
        if len(settings) == 1:
            seeds.append(int(row["seed"]))
        for m in METRIC_NAMES:
            raw[s][m].append(float(row[m]))
    return BenchReport(settings, seeds, threshold, raw)
