"""``bench`` command line: generate data, encode, train, evaluate, run experiments."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import encoders as enc
from . import gbdt
from .bench import (
    BUILTIN, ExperimentConfig, build_features, feature_columns, parse_setting, render_report,
    run_experiment,
)
from .data import ColumnSchema, Dataset, format_schema, load_csv, read_schema, write_csv
from .errors import CatencError, ConfigError
from .metrics import prf1
from .synth import SynthConfig, write_bundle

log = logging.getLogger("catenc")


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def _synth_params(items) -> dict:
    params: dict = {}
    for item in items or []:
        if item.lstrip().startswith("{"):
            params.update(json.loads(item))
            continue
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--synth expects key=value, got {item!r}")
        params[key.strip()] = _value(value)
    return params


def _load(args, path) -> Dataset:
    return load_csv(path, read_schema(args.schema), delimiter=args.delimiter, missing=args.missing)


def _encoder_config(args) -> enc.EncoderConfig:
    return enc.EncoderConfig(args.encoder, k=args.k, f=args.f, m=args.m, pozzolo_variant=args.variant,
                             gamma=args.gamma, permutation_seed=args.permutation_seed)


def _gbdt_params(args) -> gbdt.GbdtParams:
    return gbdt.GbdtParams(n_rounds=args.n_rounds, learning_rate=args.learning_rate, max_depth=args.max_depth,
                           min_samples_leaf=args.min_samples_leaf, loss=args.loss, lambda_l2=args.lambda_l2,
                           max_bins=args.max_bins, seed=args.seed)


def cmd_gen(args) -> int:
    cfg = SynthConfig.from_dict(_synth_params(args.synth))
    schema_path, truth_path = write_bundle(cfg, args.out)
    print(f"wrote {args.out} ({cfg.n_rows} rows), {schema_path}, {truth_path}")
    return 0


def cmd_encode(args) -> int:
    fit_ds = _load(args, args.fit)
    cols = args.column or fit_ds.categorical_names
    fitted = {}
    if args.load_encoder:
        for name in cols:
            fitted[name] = enc.load_encoder(Path(args.load_encoder) / f"{name}.enc")
    else:
        cfg = _encoder_config(args)
        for name in cols:
            col = fit_ds.categorical[name]
            e, _ = enc.fit_encoder(cfg, col.codes, fit_ds.target, col.n_categories)
            fitted[name] = e.with_labels(col.labels)
    if args.save_encoder:
        out_dir = Path(args.save_encoder)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, e in fitted.items():
            enc.save_encoder(e, out_dir / f"{name}.enc")
    if args.apply:
        ds = _load(args, args.apply)
        schema = tuple(ColumnSchema(c.name, "numeric") if c.name in fitted else c for c in ds.schema)
        nums = dict(ds.numeric)
        for name, e in fitted.items():
            nums[name] = enc.transform_labels(e, ds.categorical[name].decode())
        cats = {k: v for k, v in ds.categorical.items() if k not in fitted}
        out = Dataset.from_columns(schema, cats, nums, ds.target)
        if args.out:
            write_csv(out, args.out, delimiter=args.delimiter, missing=args.missing)
            Path(args.out).with_suffix(".schema").write_text(format_schema(schema), encoding="utf-8")
        else:
            write_csv(out, sys.stdout, delimiter=args.delimiter, missing=args.missing)
    for name, e in fitted.items():
        log.info("%s: %s encoder, %d categories, prior %.6g", name, e.kind, len(e.mapping), e.prior)
    return 0


def cmd_train(args) -> int:
    train = _load(args, args.data)
    setting = parse_setting({"kind": args.setting, **_encoder_overrides(args)})
    X, _, cat_idx, fitted = build_features(train, train, setting, 0)
    params = replace(_gbdt_params(args), categorical_mode="builtin_sorted" if setting.builtin else "codes_as_numeric")
    model = gbdt.fit(X, train.target, params, categorical_features=cat_idx)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    gbdt.save_model(model, out / "model.txt")
    for name, e in fitted.items():
        enc.save_encoder(e, out / f"{name}.enc")
    meta = {"setting": setting.name, "builtin": setting.builtin, "features": feature_columns(train),
            "encoded": sorted(fitted),
            "dictionaries": {n: list(c.labels) for n, c in train.categorical.items() if n not in fitted}}
    (out / "meta.json").write_text(json.dumps(meta, indent=1) + "\n", encoding="utf-8")
    print(f"trained {len(model.trees)} trees on {train.n_rows} rows -> {out}")
    return 0


def _encoder_overrides(args) -> dict:
    if args.setting in ("none", BUILTIN):
        return {}
    return {"k": args.k, "f": args.f, "m": args.m, "pozzolo_variant": args.variant, "gamma": args.gamma,
            "permutation_seed": args.permutation_seed}


def cmd_eval(args) -> int:
    model_dir = Path(args.model_dir)
    meta = json.loads((model_dir / "meta.json").read_text(encoding="utf-8"))
    model = gbdt.load_model(model_dir / "model.txt")
    ds = _load(args, args.data)
    if feature_columns(ds) != meta["features"]:
        raise ConfigError(f"data columns {feature_columns(ds)} do not match model columns {meta['features']}")
    cols = []
    for name in meta["features"]:
        if name in ds.numeric:
            cols.append(ds.numeric[name])
        elif name in meta["encoded"]:
            e = enc.load_encoder(model_dir / f"{name}.enc")
            cols.append(enc.transform_labels(e, ds.categorical[name].decode()))
        else:
            # re-code under the training dictionary; unseen labels get a fresh code
            index = {lab: i for i, lab in enumerate(meta["dictionaries"][name])}
            unseen = float(len(index))
            cols.append(np.array([index.get(lab, unseen) for lab in ds.categorical[name].decode()], dtype=np.float64))
    scores = gbdt.predict(model, np.column_stack(cols))
    r = prf1(scores, ds.target, args.threshold)
    print(json.dumps({"pr_auc": r.pr_auc, "precision": r.precision, "recall": r.recall, "f1": r.f1,
                      "threshold": r.threshold, "tp": r.tp, "fp": r.fp, "tn": r.tn, "fn": r.fn}, indent=1))
    return 0


def cmd_run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    overrides = {}
    if args.seeds:
        overrides["seeds"] = tuple(int(s) for s in args.seeds.split(","))
    if args.threshold is not None:
        overrides["threshold"] = args.threshold
    if args.output:
        overrides["output"] = args.output
    cfg = replace(cfg, **overrides)

    def progress(name, seed, r):
        log.info("seed %s %-18s pr_auc=%.4f recall=%.4f f1=%.4f", seed, name, r.pr_auc, r.recall, r.f1)

    report = run_experiment(cfg, progress)
    if cfg.output:
        Path(cfg.output).write_text(report.to_json(), encoding="utf-8")
    sys.stdout.write(render_report(report, args.format))
    return 0


def _add_io(p):
    p.add_argument("--schema", required=True, help="sidecar schema file (name:kind per line)")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--missing", default="", help="token marking a missing cell")


def _add_encoder_flags(p):
    p.add_argument("--k", type=float, default=1.0)
    p.add_argument("--f", type=float, default=1.0)
    p.add_argument("--m", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=0.5)
    p.add_argument("--variant", choices=["lambda1", "lambda2"], default="lambda1")
    p.add_argument("--permutation-seed", type=int, default=0)


def _add_gbdt_flags(p):
    d = gbdt.GbdtParams()
    p.add_argument("--n-rounds", type=int, default=d.n_rounds)
    p.add_argument("--learning-rate", type=float, default=d.learning_rate)
    p.add_argument("--max-depth", type=int, default=d.max_depth)
    p.add_argument("--min-samples-leaf", type=int, default=d.min_samples_leaf)
    p.add_argument("--loss", choices=gbdt.LOSSES, default=d.loss)
    p.add_argument("--lambda-l2", type=float, default=d.lambda_l2)
    p.add_argument("--max-bins", type=int, default=d.max_bins)
    p.add_argument("--seed", type=int, default=d.seed)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a multi-seed encoder comparison")
    p.add_argument("--config", required=True, help="experiment config (JSON)")
    p.add_argument("--seeds", help="comma-separated seeds, overrides the config")
    p.add_argument("--threshold", type=float)
    p.add_argument("--format", choices=["table_text", "csv"], default="table_text")
    p.add_argument("--output", help="write the machine-readable JSON report here")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    p.add_argument("--synth", action="append", metavar="KEY=VALUE",
                   help="synthetic parameter (repeatable) or a JSON object")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("encode", help="fit encoders on one file and apply them to another")
    p.add_argument("--encoder", choices=enc.KINDS, default="m_estimate")
    p.add_argument("--fit", required=True, help="training CSV the encoders are fitted on")
    p.add_argument("--apply", help="CSV to transform")
    p.add_argument("--out", help="output CSV for --apply (default: stdout)")
    p.add_argument("--column", action="append", help="categorical column(s) to encode (default: all)")
    p.add_argument("--save-encoder", metavar="DIR", help="write <column>.enc state files here")
    p.add_argument("--load-encoder", metavar="DIR", help="read <column>.enc state files instead of fitting")
    _add_io(p)
    _add_encoder_flags(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("train", help="train a model for one setting and save it")
    p.add_argument("--data", required=True)
    p.add_argument("--setting", default="none", choices=["none", BUILTIN, *enc.KINDS])
    p.add_argument("--out-dir", required=True)
    _add_io(p)
    _add_encoder_flags(p)
    _add_gbdt_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a CSV with a trained model")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    _add_io(p)
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CatencError as exc:
        print(f"bench {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"bench {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
