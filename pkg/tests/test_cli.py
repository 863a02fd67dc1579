import json
import subprocess
import sys

import pytest

from catenc import encoders as enc
from catenc.cli import main
from catenc.data import load_csv, read_schema


@pytest.fixture
def bundle(tmp_path):
    out = tmp_path / "d.csv"
    rc = main(["gen", "--out", str(out), "--synth", "n_rows=1200", "--synth", "n_categorical=2",
               "--synth", "cardinalities=[30,5]", "--synth", "base_fraud_rate=0.1", "--synth", "signal_strength=2"])
    assert rc == 0
    return out, tmp_path / "d.schema"


def test_gen_writes_bundle(bundle):
    csv_path, schema = bundle
    ds = load_csv(csv_path, read_schema(schema))
    assert ds.n_rows == 1200 and ds.categorical_names == ["cat_0", "cat_1"]
    assert (csv_path.parent / "d.truth.json").exists()


def test_encode_save_load_same_output(bundle, tmp_path, capsys):
    csv_path, schema = bundle
    common = ["--fit", str(csv_path), "--schema", str(schema), "--apply", str(csv_path)]
    assert main(["encode", "--encoder", "james_stein", *common, "--out", str(tmp_path / "a.csv"),
                 "--save-encoder", str(tmp_path / "encs")]) == 0
    assert main(["encode", *common, "--out", str(tmp_path / "b.csv"), "--load-encoder", str(tmp_path / "encs")]) == 0
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    e = enc.load_encoder(tmp_path / "encs" / "cat_0.enc")
    assert e.kind == "james_stein"
    assert main(["encode", *common]) == 0
    assert capsys.readouterr().out.splitlines()[0].startswith("cat_0,cat_1,num_0")


@pytest.mark.parametrize("setting", ["none", "builtin", "catboost_ordered"])
def test_train_then_eval(bundle, tmp_path, capsys, setting):
    csv_path, schema = bundle
    model_dir = tmp_path / "m"
    assert main(["train", "--data", str(csv_path), "--schema", str(schema), "--setting", setting,
                 "--out-dir", str(model_dir), "--n-rounds", "5"]) == 0
    capsys.readouterr()
    assert main(["eval", "--model-dir", str(model_dir), "--data", str(csv_path), "--schema", str(schema)]) == 0
    r = json.loads(capsys.readouterr().out)
    assert 0.0 <= r["pr_auc"] <= 1.0 and r["tp"] + r["fp"] + r["tn"] + r["fn"] == 1200


def test_run_outputs(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"data": {"synth": {"n_rows": 900, "base_fraud_rate": 0.1}},
                               "encoders": ["m_estimate"], "gbdt": {"n_rounds": 4}, "seeds": [0, 1, 2]}))
    report = tmp_path / "r.json"
    assert main(["run", "--config", str(cfg), "--seeds", "0,1", "--format", "csv", "--output", str(report)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == "setting,seed,pr_auc,precision,recall,f1" and len(out) == 5
    assert json.loads(report.read_text())["seeds"] == [0, 1]


def test_errors_exit_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"data": {"synth": {}}, "bogus": 1}')
    assert main(["run", "--config", str(bad)]) == 2
    assert "bogus" in capsys.readouterr().err
    assert main(["gen", "--out", str(tmp_path / "x.csv"), "--synth", "n_rows=0"]) != 0
    assert main(["gen", "--out", str(tmp_path / "x.csv"), "--synth", "nonsense"]) == 2


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "catenc.cli", "run", "--config", str(tmp_path / "missing.json")],
                          capture_output=True, text=True)
    assert proc.returncode != 0 and "error" in proc.stderr
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2
