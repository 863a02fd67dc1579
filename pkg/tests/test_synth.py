import json

import numpy as np
import pytest

from catenc.data import load_csv, read_schema
from catenc.errors import ConfigError
from catenc.synth import SynthConfig, generate, generate_with_truth, write_bundle


def test_defaults_shape():
    ds = generate(SynthConfig(n_rows=2000, seed=1))
    assert len(ds.categorical_names) == 8 and len(ds.numeric_names) == 2
    assert ds.categorical["cat_0"].n_categories > 100


def test_same_seed_byte_identical_csv(tmp_path):
    cfg = SynthConfig(n_rows=3000, seed=42)
    write_bundle(cfg, tmp_path / "a.csv")
    write_bundle(cfg, tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    other = SynthConfig(n_rows=3000, seed=43)
    write_bundle(other, tmp_path / "c.csv")
    assert (tmp_path / "a.csv").read_bytes() != (tmp_path / "c.csv").read_bytes()


def test_bundle_loads_back(tmp_path):
    cfg = SynthConfig(n_rows=1500, n_categorical=3, seed=3)
    schema_path, truth_path = write_bundle(cfg, tmp_path / "s.csv")
    ds = load_csv(tmp_path / "s.csv", read_schema(schema_path))
    assert ds.equals(generate(cfg))
    truth = json.loads(truth_path.read_text())
    assert len(truth["category_offsets"]["cat_0"]) == cfg.cardinalities[0]


def test_zero_signal_rates_concentrate():
    cfg = SynthConfig(n_rows=100_000, signal_strength=0.0, numeric_signal=0.0, base_fraud_rate=0.05, seed=5)
    ds = generate(cfg)
    p = cfg.base_fraud_rate
    checked = 0
    for name in ds.categorical_names:
        col = ds.categorical[name]
        n_i = np.bincount(col.codes)
        pos = np.bincount(col.codes, weights=ds.target)
        for c in np.flatnonzero(n_i >= 1000):
            se = np.sqrt(p * (1 - p) / n_i[c])
            assert abs(pos[c] / n_i[c] - p) <= 3 * se
            checked += 1
    assert checked > 20


def test_positive_rate_matches_mean_probability():
    ds, truth = generate_with_truth(SynthConfig(n_rows=1_000_000, n_categorical=4, signal_strength=1.0, seed=9))
    p = truth.probability
    se = np.sqrt(np.sum(p * (1 - p))) / len(p)
    assert abs(ds.target.mean() - p.mean()) <= 3 * se


def test_zipf_rank_one_most_frequent():
    ds = generate(SynthConfig(n_rows=100_000, n_categorical=2, seed=2))
    for name in ds.categorical_names:
        col = ds.categorical[name]
        counts = np.bincount(col.codes)
        assert col.labels[int(np.argmax(counts))] == "c0"
        assert np.sort(counts)[-1] > np.sort(counts)[-2]


def test_invalid_config():
    with pytest.raises(ConfigError):
        SynthConfig(base_fraud_rate=0)
    with pytest.raises(ConfigError):
        SynthConfig(n_categorical=2, cardinalities=(5, 1))
    with pytest.raises(ConfigError):
        SynthConfig(n_categorical=9)
    with pytest.raises(ConfigError):
        SynthConfig.from_dict({"rows": 5})
