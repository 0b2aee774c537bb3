"""Command-line workflow: generate | train | eval | predict.

Every command writes its results as files under the output directory
(``--out``, else ``$CHAINUPLIFT_OUT``, else the working directory).
Diagnostics go to stderr. Exit status is 0 on success, 2 on a usage
error and 1 on any other failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .data import FeatureSchema, SyntheticSpec, generate_synthetic, load_csv, save_csv, segment_uplift
from .ecenet import GRID, EcupConfig, EcupModel, train
from .errors import UpliftError
from .metrics import per_treatment_eval, write_curves

log = logging.getLogger("chainuplift")

OUT_ENV = "CHAINUPLIFT_OUT"

# report label -> metric task code
REPORT_TASKS = {"CTCVR": "Z", "CVR": "CVR", "CTR": "Y"}

# flags that map one-to-one onto EcupConfig fields
HYPER = {
    "d": int, "d_k": int, "h": int, "h_gate": int, "heads": int, "gamma": float,
    "lam": float, "lr": float, "batch_size": int, "epochs": int,
}


class UsageError(Exception):
    pass


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_json(path, doc):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _merged(args, keys):
    """Flag values override the flat JSON config file, which overrides defaults."""
    doc = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise UsageError("--config must hold a flat JSON object")
    for key in keys:
        v = getattr(args, key, None)
        if v is not None:
            doc[key] = v
    return doc


def _positive(kind):
    def conv(text):
        v = kind(text)
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v
    return conv


# ---------------------------------------------------------------------------
# commands


def cmd_generate(args) -> int:
    cfg = _merged(args, ["preset", "n", "k", "seed"])
    n = cfg.get("n")
    if n is None or int(n) < 1:
        raise UsageError("--n must be a positive row count")
    spec = SyntheticSpec.from_preset(cfg.get("preset", "chainbias"), int(n),
                                     int(cfg.get("seed", 0)), K=int(cfg.get("k", 2)))
    ds, gt = generate_synthetic(spec)
    out = _out_dir(args)
    save_csv(ds, out / "data.csv")
    gt.save_csv(out / "ground_truth.csv")
    _dump_json(out / "schema.json", ds.schema.to_json())
    log.info("wrote %d rows to %s", ds.N, out)
    return 0


def _train_config(cfg) -> EcupConfig:
    known = {k: cfg[k] for k in ("variant", "seed", "tower_layers", "tie_hidden",
                                 "freeze_prior_proj", *HYPER) if k in cfg}
    for key, kind in HYPER.items():
        if key in known and known[key] is not None:
            if known[key] < 0 or (known[key] == 0 and key not in ("lam", "epochs")):
                raise UsageError(f"{key} must be positive")
            known[key] = kind(known[key])
    try:
        config = EcupConfig(**known)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    for item in config.off_grid():
        log.warning("%s is outside the searched grid %s", item, GRID)
    return config


def _need(cfg, key):
    if not cfg.get(key):
        raise UsageError(f"--{key} is required")
    return cfg[key]


def cmd_train(args) -> int:
    cfg = _merged(args, ["schema", "data", "valid", "variant", "seed", *HYPER])
    schema = FeatureSchema.load(_need(cfg, "schema"))
    config = _train_config(cfg)
    train_ds = load_csv(_need(cfg, "data"), schema)
    valid_ds = load_csv(cfg["valid"], schema) if cfg.get("valid") else None
    out = _out_dir(args)
    with open(out / "history.jsonl", "w", encoding="utf-8") as hist:
        def on_epoch(record):
            hist.write(json.dumps(record, sort_keys=True) + "\n")
            hist.flush()

        model, _ = train(train_ds, valid_ds, config, on_epoch=on_epoch)
    model.save(out / "checkpoint.json")
    echo = config.to_dict()
    echo.update(L=config.tower_layers, tie_layers=len(config.tie_hidden) + 1, gate_layers=2,
                tower_widths=config.widths, schema_fingerprint=schema.fingerprint())
    _dump_json(out / "config.json", echo)
    return 0


def _load_model_and_data(cfg):
    # an explicit schema must match the checkpoint's fingerprint
    given = FeatureSchema.load(cfg["schema"]) if cfg.get("schema") else None
    model = EcupModel.load(_need(cfg, "checkpoint"), given)
    return model, load_csv(_need(cfg, "data"), model.schema)


def _fmt(v):
    return None if v is None else float(v)


def cmd_eval(args) -> int:
    cfg = _merged(args, ["checkpoint", "data", "schema", "segments", "seed"])
    model, ds = _load_model_and_data(cfg)
    ite = model.predict_ite(ds)
    report = {"variant": model.config.variant, "rows": ds.N, "treatments": ds.schema.K,
              "schema_fingerprint": ds.schema.fingerprint(), "tasks": {}}
    for label, task in REPORT_TASKS.items():
        ev = per_treatment_eval(ds, ite, task)
        report["tasks"][label] = {
            "auuc": _fmt(ev.auuc), "qini": _fmt(ev.qini),
            "per_treatment": {str(k + 1): {"auuc": _fmt(a), "qini": _fmt(q)}
                              for k, (a, q) in enumerate(zip(ev.auuc_per_k, ev.qini_per_k))},
        }
    out = _out_dir(args)
    write_curves(out / "curves.csv", ds, ite, tasks=("Z", "CVR"))
    segments = cfg.get("segments")
    if segments:
        seed = int(cfg.get("seed") or 0)
        rows = []
        for k in range(1, ds.schema.K + 1):
            rep = segment_uplift(ds, int(segments), seed=seed, treatment_k=k)
            for rec in rep.to_records():
                rows.append({"treatment": k, **rec})
            report.setdefault("segments", {})[str(k)] = {
                "sign_discordant": rep.sign_discordant(), "records": rep.to_records()}
        with open(out / "segments.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    _dump_json(out / "report.json", report)
    return 0


def cmd_predict(args) -> int:
    cfg = _merged(args, ["checkpoint", "data", "schema"])
    model, ds = _load_model_and_data(cfg)
    ite = model.predict_ite(ds)
    K = ds.schema.K
    out = _out_dir(args)
    with open(out / "ite.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        header = ["row_index"]
        for k in range(1, K + 1):
            header += [f"tau_y_{k}", f"tau_z_{k}"]
        header += [f"pctr_{j}" for j in range(K + 1)] + [f"pctcvr_{j}" for j in range(K + 1)]
        w.writerow(header)
        pairs = np.stack([ite.tau_y, ite.tau_z], axis=2).reshape(ds.N, 2 * K)
        body = np.hstack([pairs, ite.pctr, ite.pctcvr])
        for i in range(ds.N):
            w.writerow([i] + [repr(float(v)) for v in body[i]])
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="chainuplift",
                                description="Multi-treatment uplift modelling along the click-conversion chain.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat JSON file of option values; flags win")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV} or .)")
        sp.add_argument("--seed", type=int)

    g = sub.add_parser("generate", help="write a synthetic randomized trial")
    common(g)
    g.add_argument("--preset", choices=("chainbias", "neutral"))
    g.add_argument("--n", type=_positive(int), help="row count")
    g.add_argument("--k", type=_positive(int), help="number of non-control treatments")
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="fit a model and write a checkpoint")
    common(t)
    t.add_argument("--schema")
    t.add_argument("--data")
    t.add_argument("--valid", help="validation CSV used for best-epoch selection")
    t.add_argument("--variant", choices=("full", "no-tenet", "attention-tenet",
                                         "no-taegate", "no-ecenet"))
    for key, kind in HYPER.items():
        t.add_argument("--" + key.replace("_", "-"), dest=key, type=kind)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="AUUC/Qini report for a checkpoint")
    common(e)
    e.add_argument("--checkpoint")
    e.add_argument("--data")
    e.add_argument("--schema")
    e.add_argument("--segments", type=_positive(int))
    e.set_defaults(func=cmd_eval)

    pr = sub.add_parser("predict", help="per-row treatment effects")
    common(pr)
    pr.add_argument("--checkpoint")
    pr.add_argument("--data")
    pr.add_argument("--schema")
    pr.set_defaults(func=cmd_predict)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"chainuplift {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (UpliftError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"chainuplift {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
