"""Command-line entry point: ``gnl {train,eval,corrupt,benchmark,synth,plot-hist}``.

Exit status: 0 success, 2 usage/config error, 3 data or file-format error,
4 numeric failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import data as gdata
from .augmentation import CORRUPTION_TABLES, CorruptionSpec
from .config import load_run_config, resolve_seed
from .errors import ConfigError, FormatError, NumericError, UndefinedMetricError
from .evaluation import (auroc, benchmark, one_vs_all_split, plot_histogram, score_histogram, score_suite,
                         write_histogram_csv)
from .fdm import FdmConfig
from .model import init_model, read_checkpoint, save_checkpoint
from .scoring import InferenceConfig
from .training import train

log = logging.getLogger("gnl")

EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 2, 3, 4


class UsageError(Exception):
    pass


def _echo(path, payload):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")


def _style_pool(manifest, normal_class):
    samples = gdata.load_dataset(manifest)
    pool = [s.image for s in samples if s.split == "train" and s.class_name == normal_class]
    return pool or [s.image for s in samples]


def cmd_train(args):
    cfg = load_run_config(args.config, args.seed)
    out = Path(args.out) if args.out else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    train_set, _ = one_vs_all_split(gdata.load_dataset(cfg.manifest), cfg.normal_class)
    if not train_set:
        raise ConfigError(f"no training images of class {cfg.normal_class!r}")
    bundle, tlog = train([s.image for s in train_set], cfg.train, init_model(cfg.model))
    save_checkpoint(bundle, out / "model.gnl", run_config=cfg.raw)
    tlog.to_csv(out / "train_log.csv")
    _echo(out / "config.json", cfg.raw)
    print(f"checkpoint: {out / 'model.gnl'}  final loss: {tlog.totals()[-1]:.6f}")


def cmd_eval(args):
    if args.tta_method is not None and not args.style_pool:
        raise UsageError("--tta-method needs --style-pool")
    if args.tta_alpha is not None and not args.style_pool:
        raise UsageError("--tta-alpha needs --style-pool")
    bundle, header = read_checkpoint(args.checkpoint)
    seed = resolve_seed(args.seed, header.get("meta", {}).get("seed", 0))
    tta = None
    pool = None
    if args.style_pool:
        tta = FdmConfig(method=args.tta_method or "exact",
                        alpha=0.5 if args.tta_alpha is None else args.tta_alpha,
                        style_seed=seed if args.style_seed is None else args.style_seed)
        pool = _style_pool(args.style_pool, args.normal_class)
    icfg = InferenceConfig(tta, args.smoothing_sigma)
    samples = gdata.labeled_test_set(args.manifest, args.normal_class)
    scored = score_suite(bundle, samples, icfg, pool, seed if tta is None else tta.style_seed)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("sample_id", "label", "score"))
        for sid, label, score in scored:
            w.writerow((sid, label, repr(score)))
    result = {"checkpoint": str(args.checkpoint), "manifest": str(args.manifest), "seed": seed,
              "inference": icfg.to_dict(), "n": len(scored)}
    labels = [lab for _, lab, _ in scored]
    if 0 in labels and 1 in labels:
        result["auroc"] = auroc([s for _, _, s in scored], labels)
        print(f"AUROC: {result['auroc']:.4f}")
    else:
        print("AUROC: undefined (single-class test set)")
    _echo(str(args.out) + ".json", result)


def cmd_corrupt(args):
    spec = CorruptionSpec(args.kind, args.severity, resolve_seed(args.seed, 0))
    path = gdata.corrupt_dataset(args.manifest, spec, args.out)
    print(f"manifest: {path}")


def _suites(cfg):
    test = gdata.labeled_test_set(cfg.manifest, cfg.normal_class, "id")
    suites = {"id": test}
    for s in cfg.suites:
        if "manifest" in s:
            suites[s["name"]] = gdata.labeled_test_set(s["manifest"], cfg.normal_class, s["name"])
        else:
            c = s["corruption"]
            spec = CorruptionSpec(c["kind"], c.get("severity", 3), c.get("seed", cfg.seed))
            suites[s["name"]] = gdata.corrupt_samples(test, spec, s["name"])
    return suites


def cmd_benchmark(args):
    cfg = load_run_config(args.config, args.seed)
    bundle, _ = read_checkpoint(args.checkpoint)
    out = Path(args.out) if args.out else cfg.output_dir / "benchmark.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    pool = _style_pool(cfg.style_pool or cfg.manifest, cfg.normal_class)
    report = benchmark(bundle, _suites(cfg), cfg.inference_configs(), pool, cfg.seed)
    report.to_csv(out)
    report.scores_to_csv(out.with_name(out.stem + "_scores.csv"))
    _echo(out.with_name(out.stem + "_config.json"), cfg.raw)
    for r in report.results:
        print(f"{r.config_name:>12s} {r.suite:>24s}  AUROC {r.auroc:.4f}")


def cmd_synth(args):
    path = gdata.generate_synthetic(args.out, resolve_seed(args.seed, 0), args.n_per_class, args.size)
    print(f"manifest: {path}")


def cmd_plot_hist(args):
    with open(args.scores, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if rows and not {"label", "score"} <= set(rows[0]):
        raise FormatError(f"{args.scores}: needs 'label' and 'score' columns")
    if args.config_name:
        rows = [r for r in rows if r.get("config_name") == args.config_name]
    if args.suite:
        rows = [r for r in rows if r.get("suite") == args.suite]
    scores = np.array([float(r["score"]) for r in rows])
    labels = np.array([int(r["label"]) for r in rows])
    edges, normal, anomaly = score_histogram(scores, labels, args.bins)
    write_histogram_csv(args.out, edges, normal, anomaly)
    if args.svg:
        plot_histogram(args.svg, edges, normal, anomaly, title=args.suite)
    print(f"histogram: {args.out}")


def build_parser():
    p = argparse.ArgumentParser(prog="gnl", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a model from a run config")
    t.add_argument("--config", required=True)
    t.add_argument("--out", help="output directory (default: config output_dir)")
    t.add_argument("--seed", type=int)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a test manifest with a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--manifest", required=True)
    e.add_argument("--normal-class", default="normal")
    e.add_argument("--out", required=True, help="scores CSV")
    e.add_argument("--tta-method", choices=("exact", "moment"))
    e.add_argument("--tta-alpha", type=float)
    e.add_argument("--style-pool", help="manifest of training normals used as style samples")
    e.add_argument("--style-seed", type=int)
    e.add_argument("--smoothing-sigma", type=float, default=0.0)
    e.add_argument("--seed", type=int)
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("corrupt", help="write a corrupted copy of a dataset")
    c.add_argument("--manifest", required=True)
    c.add_argument("--kind", required=True, choices=sorted(CORRUPTION_TABLES))
    c.add_argument("--severity", type=int, default=3)
    c.add_argument("--seed", type=int)
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_corrupt)

    b = sub.add_parser("benchmark", help="AUROC table over the config's suites")
    b.add_argument("--config", required=True)
    b.add_argument("--checkpoint", required=True)
    b.add_argument("--out", help="report CSV (default: <output_dir>/benchmark.csv)")
    b.add_argument("--seed", type=int)
    b.set_defaults(func=cmd_benchmark)

    s = sub.add_parser("synth", help="generate the synthetic blob/stripe dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--n-per-class", type=int, default=100)
    s.add_argument("--size", type=int, default=gdata.SYNTH_SIZE)
    s.set_defaults(func=cmd_synth)

    h = sub.add_parser("plot-hist", help="histogram of normal vs anomalous scores")
    h.add_argument("--scores", required=True)
    h.add_argument("--bins", type=int, default=20)
    h.add_argument("--out", required=True, help="histogram CSV")
    h.add_argument("--svg", help="optional vector plot")
    h.add_argument("--config-name")
    h.add_argument("--suite")
    h.set_defaults(func=cmd_plot_hist)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"gnl {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, UndefinedMetricError, OSError) as exc:
        print(f"gnl {args.command}: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"gnl {args.command}: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return 0


if __name__ == "__main__":
    sys.exit(main())
