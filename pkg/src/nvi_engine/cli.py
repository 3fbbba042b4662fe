"""
``nvi`` command-line tool.

Every command writes a versioned results document (JSON) and, where it
makes sense, CSV/SVG plot data. Exit codes: 0 success, 1 usage error,
2 data error, 3 internal invariant violation.

Set ``SOURCE_DATE_EPOCH`` to pin the provenance timestamp so that repeated
runs are byte-identical.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import biosense, synth
from .baseline import LogisticBaseline
from .bench import BenchError, run_bench
from .formats import DataError, ResultsDocument, read_score_csv, read_signal_csv, svg_line_chart
from .hrv import InsufficientDataError
from .model.layers import GraphError
from .morphology import FeatureError
from .nvi import MODALITIES, NoDataError, NviDomainError, ModalityInputs, Tier, composite
from .pipeline import analyze_ppg
from .signal_core import SignalError
from .stats import (GROUP_TABLE_HEADER, StatsError, bland_altman, evaluate, group_table_rows, mann_whitney, roc_auc,
                    stratified_kfold)

log = logging.getLogger("nvi")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
DATA_ERRORS = (DataError, SignalError, InsufficientDataError, FeatureError, StatsError, NviDomainError,
               NoDataError, FileNotFoundError, IsADirectoryError, UnicodeDecodeError, json.JSONDecodeError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    when = datetime.fromtimestamp(int(epoch), timezone.utc) if epoch else datetime.now(timezone.utc)
    return when.isoformat(timespec="seconds")


def _document(args, metrics: dict, config: dict) -> ResultsDocument:
    return ResultsDocument(args.command, {**config, "seed": args.seed, "format": args.format},
                           metrics, args.seed, timestamp=_timestamp())


def _emit(args, doc: ResultsDocument, csv_text: str | None = None, default_name: str = "results"):
    """JSON (or CSV when requested and available) to --out, else stdout."""
    text = csv_text if args.format == "csv" and csv_text is not None else doc.to_json()
    if args.out:
        out = Path(args.out)
        if out.is_dir():
            out = out / f"{default_name}.{'csv' if text is csv_text else 'json'}"
        out.write_text(text)
    else:
        sys.stdout.write(text)


def _out_dir(args) -> Path:
    if not args.out:
        raise UsageError(f"{args.command}: --out DIR is required")
    d = Path(args.out)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_pipeline(args) -> int:
    ts = read_signal_csv(args.input, args.channel, args.fs)
    result = analyze_ppg(ts)
    doc = _document(args, result, {"input": str(args.input), "channel": ts.label, "fs": args.fs})
    feats = result["features"]
    row = {**{k: v for k, v in result["hrv"].items() if k != "reason"},
           "perfusion_index": result["perfusion_index"], **feats}
    text = _csv([[("" if v is None or (isinstance(v, float) and math.isnan(v)) else v) for v in row.values()]],
                list(row))
    _emit(args, doc, text, "pipeline")
    return EXIT_OK


def cmd_score(args) -> int:
    rows = read_score_csv(args.input)
    results, counts = [], {t.value: 0 for t in Tier}
    counts["error"] = 0
    for r in rows:
        rec = {"line": r.line}
        if r.error is None:
            v = r.values
            try:
                inputs = ModalityInputs(v.get("spo2_pct"), v.get("rmssd_ms"), v.get("pi"),
                                        v.get("phase_left_deg"), v.get("phase_right_deg"))
                if not args.degraded_allowed and None in (inputs.spo2_pct, inputs.rmssd_ms, inputs.pi,
                                                          inputs.phase_left_deg):
                    raise NoDataError("modality missing and degraded mode not allowed")
                rec.update(composite(inputs).to_dict())
            except (NviDomainError, NoDataError) as e:
                r.error = f"line {r.line}: {e}"
        if r.error is not None:
            rec["error"] = r.error
            counts["error"] += 1
            log.warning(r.error)
        else:
            counts[rec["tier"]] += 1
        results.append(rec)
    doc = _document(args, {"rows": results, "summary": counts},
                    {"input": str(args.input), "degraded_allowed": args.degraded_allowed})
    header = ["line", "score", "tier", *(f"s_{m}" for m in MODALITIES), *(f"w_{m}" for m in MODALITIES), "error"]
    table = []
    for rec in results:
        if "error" in rec:
            table.append([rec["line"], "", "", *[""] * 8, rec["error"]])
        else:
            ms, ws = rec["modality_scores"], rec["effective_weights"]
            table.append([rec["line"], repr(rec["score"]), rec["tier"],
                          *("" if ms[m] is None else repr(ms[m]) for m in MODALITIES),
                          *(repr(ws[m]) for m in MODALITIES), ""])
    _emit(args, doc, _csv(table, header), "scores")
    print(" ".join(f"{k}={v}" for k, v in counts.items()), file=sys.stderr)
    return EXIT_OK


def cmd_synth(args) -> int:
    out = _out_dir(args)
    cfg = synth.TrajectoryConfig(seed=args.seed)
    if args.noise_scale != 1.0:
        cfg = cfg.scaled_noise(args.noise_scale)
    ds = synth.gen_dataset(args.n, args.balance, cfg, args.seed)
    ds.save(out)
    if args.export_csv:
        ds.export_csv(out / "csv", range(min(args.export_csv, args.n)))
    counts = {k: int(v.size) for k, v in ds.splits.items()}
    scores = ds.composite_scores("test")
    _, y, _ = ds.arrays("test")
    metrics = {"n": args.n, "split_sizes": counts, "composite_test_auc": roc_auc(-scores, y)}
    doc = _document(args, metrics, {"n": args.n, "balance": args.balance, "noise_scale": args.noise_scale})
    doc.write(out / "run.json")
    print(json.dumps(metrics), file=sys.stderr)
    return EXIT_OK


def cmd_train(args) -> int:
    from .model.checkpoint import Checkpoint
    from .model.train import TrainConfig, train
    from .model.transformer import ModelConfig, param_count

    out = _out_dir(args)
    ds = synth.Dataset.load(args.data)
    patch = args.patch
    seq_len = ds.cfg.n_samples // patch  # trailing samples that do not fill a patch are dropped
    window = seq_len * patch
    mcfg = ModelConfig(d_model=args.d_model, heads=args.heads, layers=args.layers, ffn_dim=args.ffn_dim,
                       dropout=args.dropout, seq_len=seq_len, patch=patch, seed=args.seed)
    tcfg = TrainConfig(lr=args.lr, patience=args.patience, batch_size=args.batch_size,
                       max_epochs=args.epochs, seed=args.seed)
    tr = ds.model_arrays("train")
    va = ds.model_arrays("val")
    tr = (tr[0][:, :window], tr[1], tr[2])
    va = (va[0][:, :window], va[1], va[2])
    cb = lambda rec: print(json.dumps(rec, sort_keys=True), file=sys.stderr) if args.verbose else None
    result = train(tr, va, mcfg, tcfg, callback=cb)
    Checkpoint.from_training(result).save(out / "model.ckpt")
    (out / "history.jsonl").write_text(result.history_jsonl())
    metrics = {"best_epoch": result.best_epoch, "best_val_auc": result.best_val_auc,
               "epochs_run": len(result.history), "stopped_early": result.stopped_early,
               "n_parameters": result.model.n_parameters(), "param_count_closed_form": param_count(mcfg)}
    doc = _document(args, metrics, {"data": str(args.data), "model": mcfg.to_dict(), "train": tcfg.to_dict()})
    doc.write(out / "run.json")
    hist = result.history
    (out / "val_auc.svg").write_text(svg_line_chart({"val AUC": [h["val_auc"] for h in hist]},
                                                    [h["epoch"] for h in hist], "validation AUC", "epoch", "AUC"))
    print(json.dumps(metrics), file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    from .model.checkpoint import Checkpoint
    from .model.train import instability_score, predict

    ds = synth.Dataset.load(args.data)
    ck = Checkpoint.load(args.checkpoint)
    model = ck.build_model()
    X, y, t = ds.model_arrays(args.split)
    window = model.cfg.window_len
    if X.shape[1] < window:
        raise DataError(f"dataset windows have {X.shape[1]} samples; checkpoint expects {window}")
    _, logit = predict(model, X[:, :window])
    folds = stratified_kfold(y, args.folds, args.seed) if args.folds > 1 else None
    Xtr, ytr, _ = ds.model_arrays("train")
    base = LogisticBaseline(args.seed).fit(Xtr, ytr)
    reports = {
        "transformer_lite": evaluate(instability_score(logit), y, args.iters, args.seed, folds),
        "logistic_baseline": evaluate(base.score(X), y, args.iters, args.seed, folds),
        "composite_score": evaluate(-t, y, args.iters, args.seed, folds),
    }
    for name, rep in reports.items():
        print(rep.table_row(name), file=sys.stderr)
    metrics = {k: v.to_dict() for k, v in reports.items()}
    doc = _document(args, metrics, {"data": str(args.data), "checkpoint": str(args.checkpoint),
                                    "split": args.split, "iters": args.iters, "folds": args.folds})
    header = ["model", "auc", "ci_low", "ci_high", "sens", "spec", "ppv", "npv", "threshold"]
    rows = [[k, *(f"{getattr(r, a):.4f}" for a in ("auc", "auc_ci_low", "auc_ci_high", "sens", "spec", "ppv",
                                                   "npv", "youden_threshold"))] for k, r in reports.items()]
    _emit(args, doc, _csv(rows, header), "eval")
    return EXIT_OK


def _read_table(path, scale_cols=()):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames:
            raise DataError(f"{path}: empty file")
        recs = list(reader)
    for c in scale_cols:
        if c not in reader.fieldnames:
            raise DataError(f"{path}: --seconds-to-ms column {c!r} not found")
    return reader.fieldnames, recs


def _column(recs, name, path, scale=1.0):
    vals = []
    for i, r in enumerate(recs, start=2):
        cell = (r.get(name) or "").strip()
        if not cell:
            vals.append(math.nan)
            continue
        try:
            vals.append(float(cell) * scale)
        except ValueError:
            raise DataError(f"{path}:{i}: column {name}: not a number: {cell!r}") from None
    return np.asarray(vals)


def cmd_stats(args) -> int:
    to_ms = [c for c in (args.seconds_to_ms or "").split(",") if c]
    fields, recs = _read_table(args.input, to_ms)
    scale = lambda c: 1000.0 if c in to_ms else 1.0
    metrics, csv_text = {}, None
    if args.group_col:
        if args.group_col not in fields:
            raise DataError(f"{args.input}: group column {args.group_col!r} not found")
        groups = [r[args.group_col].strip() for r in recs]
        levels = args.groups.split(",") if args.groups else sorted(set(groups))
        if len(levels) != 2:
            raise DataError(f"need exactly two groups, found {levels}")
        feats = args.features.split(",") if args.features else [f for f in fields if f != args.group_col]
        g = np.asarray(groups)
        rows = []
        for f in feats:
            if f not in fields:
                raise DataError(f"{args.input}: feature column {f!r} not found")
            v = _column(recs, f, args.input, scale(f))
            a, b = v[(g == levels[0]) & np.isfinite(v)], v[(g == levels[1]) & np.isfinite(v)]
            rows.append((f, mann_whitney(a, b)))
        metrics["groups"] = list(levels)
        metrics["comparisons"] = {f: c.to_dict() for f, c in rows}
        csv_text = _csv(group_table_rows(rows), GROUP_TABLE_HEADER)
    if args.agree:
        ca, cb = args.agree
        a, b = _column(recs, ca, args.input, scale(ca)), _column(recs, cb, args.input, scale(cb))
        ok = np.isfinite(a) & np.isfinite(b)
        metrics["agreement"] = {"a": ca, "b": cb, **bland_altman(a[ok], b[ok]).to_dict()}
    if not metrics:
        raise UsageError("stats: give --group-col and/or --agree A B")
    doc = _document(args, metrics, {"input": str(args.input), "group_col": args.group_col,
                                    "seconds_to_ms": to_ms, "agree": args.agree})
    _emit(args, doc, csv_text, "stats")
    return EXIT_OK


def cmd_mc(args) -> int:
    grid = _floats(args.intensities)
    res = synth.mc_perturbation(grid, args.runs, args.seed)
    rows = [[repr(r.intensity), repr(r.mean_min_nvi), repr(r.sd_min_nvi), r.runs] for r in res]
    text = _csv(rows, ["intensity", "mean_nvi", "sd_nvi", "runs"])
    metrics = {"baseline_nvi": synth.baseline_score(),
               "points": [{"intensity": r.intensity, "mean_nvi": r.mean_min_nvi, "sd_nvi": r.sd_min_nvi,
                           "runs": r.runs} for r in res]}
    doc = _document(args, metrics, {"intensities": grid, "runs": args.runs})
    if args.out and Path(args.out).is_dir():
        d = Path(args.out)
        (d / "mc.csv").write_text(text)
        doc.write(d / "mc.json")
        t, nvi = synth.recovery_curve(min(r.mean_min_nvi for r in res), synth.baseline_score())
        (d / "mc.svg").write_text(svg_line_chart({"mean min NVI": [r.mean_min_nvi for r in res]}, grid,
                                                 "NVI vs perturbation intensity", "intensity", "NVI"))
        (d / "recovery.csv").write_text(_csv([[repr(a), repr(b)] for a, b in zip(t, nvi)], ["t_s", "nvi"]))
        (d / "recovery.svg").write_text(svg_line_chart({"NVI": nvi}, t, "recovery", "time (s)", "NVI"))
        return EXIT_OK
    _emit(args, doc, text, "mc")
    return EXIT_OK


def cmd_biosense(args) -> int:
    model = biosense.ConductivityModel(shape=args.shape, g_max=args.g_max)
    if args.action == "curve":
        rh, sigma, gain = model.curve(args.n)
        text = _csv([[repr(float(a)), repr(float(b)), repr(float(c))] for a, b, c in zip(rh, sigma, gain)],
                    ["rh_pct", "sigma_s_per_m", "gain"])
        metrics = {"rh_pct": rh, "sigma_s_per_m": sigma, "gain": gain}
        if args.out and Path(args.out).is_dir():
            d = Path(args.out)
            (d / "biosense_curve.csv").write_text(text)
            (d / "biosense_curve.svg").write_text(
                svg_line_chart({"log10 sigma (S/m)": np.log10(sigma)}, rh, "conductivity vs humidity",
                               "relative humidity (%)", "log10 sigma"))
            _document(args, metrics, {"shape": args.shape, "g_max": args.g_max, "n": args.n}).write(
                d / "biosense_curve.json")
            return EXIT_OK
    else:
        if args.rh is None:
            raise UsageError("biosense at: --rh is required")
        try:
            metrics = {"rh_pct": args.rh, "sigma_s_per_m": model.conductivity(args.rh),
                       "gain": model.gain(args.rh)}
            if args.base_ac is not None:
                metrics["amplified_ac"] = model.amplification(args.rh, args.base_ac)
        except biosense.BiosenseDomainError as e:
            raise DataError(str(e)) from None
        text = _csv([[repr(float(v)) for v in metrics.values()]], list(metrics))
    doc = _document(args, metrics, {"action": args.action, "shape": args.shape, "g_max": args.g_max})
    _emit(args, doc, text, "biosense")
    return EXIT_OK


def cmd_bench(args) -> int:
    if args.iters < 1000:
        raise UsageError("bench: --iters must be >= 1000")
    rep = run_bench(args.iters, args.warmup, args.reps, args.seed)
    doc = _document(args, rep.to_dict(), {"iters": args.iters, "warmup": args.warmup, "reps": args.reps})
    _emit(args, doc, _csv([list(rep.to_dict().values())], list(rep.to_dict())), "bench")
    print(f"p50 {rep.p50_ns / 1000:.2f} us  p99 {rep.p99_ns / 1000:.2f} us  max {rep.max_ns / 1000:.2f} us  "
          f"heap delta {rep.alloc_delta_bytes} B  sha256 {rep.output_sha256[:16]}", file=sys.stderr)
    if rep.alloc_delta_bytes != 0 or rep.alloc_delta_blocks != 0:
        print(f"error: scoring loop left {rep.alloc_delta_blocks} live allocations", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    p.add_argument("--seed", type=int, help="random seed (default 0)")
    p.add_argument("--out", help="output file or directory (default stdout)")
    p.add_argument("--format", choices=("json", "csv"), help="output format (default json)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    p = _Parser(prog="nvi", description="Neurovascular instability scoring toolkit", parents=[common])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("pipeline", parents=[common], help="PPG CSV -> PRV, PI and feature registry")
    s.add_argument("input")
    s.add_argument("--channel")
    s.add_argument("--fs", type=float, help="override the inferred sampling rate (Hz)")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("score", parents=[common], help="score rows of modality values")
    s.add_argument("input")
    s.add_argument("--no-degraded", dest="degraded_allowed", action="store_false",
                   help="treat rows with an absent modality as errors")
    s.set_defaults(func=cmd_score)

    s = sub.add_parser("synth", parents=[common], help="generate a labeled synthetic dataset")
    s.add_argument("--n", type=int, default=2000)
    s.add_argument("--balance", type=float, default=0.5)
    s.add_argument("--noise-scale", type=float, default=1.0)
    s.add_argument("--export-csv", type=int, default=0, metavar="K", help="also write the first K windows as CSV")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", parents=[common], help="train the transformer on a synthetic dataset")
    s.add_argument("--data", required=True)
    s.add_argument("--epochs", type=int, default=30)
    s.add_argument("--patch", type=int, default=100)
    s.add_argument("--d-model", type=int, default=128)
    s.add_argument("--heads", type=int, default=4)
    s.add_argument("--layers", type=int, default=2)
    s.add_argument("--ffn-dim", type=int, default=256)
    s.add_argument("--dropout", type=float, default=0.15)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--patience", type=int, default=25)
    s.add_argument("--batch-size", type=int, default=32)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", parents=[common], help="AUC [CI], sens, spec, PPV, NPV on a split")
    s.add_argument("--data", required=True)
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--split", default="test", choices=("train", "val", "test"))
    s.add_argument("--iters", type=int, default=1000, help="bootstrap iterations")
    s.add_argument("--folds", type=int, default=5, help="stratified folds for per-fold AUCs (0 = off)")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("stats", parents=[common], help="group comparison and agreement on a CSV table")
    s.add_argument("input")
    s.add_argument("--group-col")
    s.add_argument("--groups", help="two group values, comma-separated (default: sorted unique)")
    s.add_argument("--features", help="comma-separated feature columns (default: all others)")
    s.add_argument("--agree", nargs=2, metavar=("A", "B"), help="Bland-Altman / Pearson between two columns")
    s.add_argument("--seconds-to-ms", metavar="COLS", help="multiply these columns by 1000 before analysis")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("mc", parents=[common], help="Monte Carlo perturbation sweep")
    s.add_argument("--intensities", default="0,0.25,0.5,0.75,1")
    s.add_argument("--runs", type=int, default=100)
    s.set_defaults(func=cmd_mc)

    s = sub.add_parser("biosense", parents=[common], help="conductivity / gain curve")
    s.add_argument("action", choices=("curve", "at"))
    s.add_argument("--shape", choices=biosense.SHAPES, default="log-linear")
    s.add_argument("--g-max", type=float, default=3.0)
    s.add_argument("--n", type=int, default=101)
    s.add_argument("--rh", type=float)
    s.add_argument("--base-ac", type=float)
    s.set_defaults(func=cmd_biosense)

    s = sub.add_parser("bench", parents=[common], help="latency and determinism bench of the scoring path")
    s.add_argument("--iters", type=int, default=1_000_000)
    s.add_argument("--warmup", type=int, default=10_000)
    s.add_argument("--reps", type=int, default=3)
    s.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        for k, v in (("seed", 0), ("out", None), ("format", "json"), ("verbose", False)):
            if not hasattr(args, k):
                setattr(args, k, v)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (BenchError, GraphError, AssertionError) as e:
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
