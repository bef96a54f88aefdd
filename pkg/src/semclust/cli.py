"""Command-line orchestration of the full clustering pipeline.

Subcommands: synth, filter-nouns, train, predict, evaluate,
baseline-kmeans, bound-report, convergence-report.

Every command accepts --config (a JSON file whose keys are the command's
own flag names); explicit flags override the file; unknown keys are
rejected. The effective configuration is echoed to <out>/config.json so
runs are reproducible, and timestamps are confined to <out>/run.log.
Exit codes: 0 success, 2 config error, 3 data/format error, 4 numeric
failure.
"""

from __future__ import annotations

import os

# SIC_THREADS caps internal (BLAS) parallelism; must be set before numpy
# is first imported anywhere in this process.
if "SIC_THREADS" in os.environ:
    for _var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
    ):
        os.environ.setdefault(_var, os.environ["SIC_THREADS"])

import argparse
import csv
import datetime
import json
import sys
from pathlib import Path

import numpy as np

from . import clusterhead, embedstore, metrics, semspace, synthgen, theory
from .corealg import kmeans, knn_graph
from .embedstore import EmbeddingMatrix, LabelVector, NounLexicon
from .errors import ConfigError, DataError, EngineError, FormatError, IoError, NumericError
from .pseudolab import Strategy

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

# paper-reported defaults; surfaced verbatim in --help
HYPER_DEFAULTS = {
    "lr": 1e-4,
    "gamma_u": 0.05,
    "gamma_r": 200,
    "xi_c": None,      # derived: floor(0.9 * n / c)
    "xi_a": 20,
    "k": 20,
    "lam": 5.0,
    "beta": 1.0,
    "epochs": 100,
    "batch_size": 128,
    "tau_m": 1.0,
    "delta": 0.05,
    "bound_c": 1.0,
    "seed": 0,
    "strategy": "adjusted",
}


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _out_dir(cfg: dict) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _echo_config(out: Path, command: str, cfg: dict) -> None:
    payload = {"command": command}
    payload.update({k: v for k, v in sorted(cfg.items())})
    with open(out / "config.json", "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    with open(out / "run.log", "a", encoding="utf-8") as f:
        f.write(f"{datetime.datetime.now().isoformat()} {command}\n")


def _write_json(path: Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def _load_images(cfg: dict) -> EmbeddingMatrix:
    path = _require_file(cfg["images"], "image embeddings")
    m = embedstore.read_embeddings(path)
    if cfg.get("no_normalize"):
        return m
    return embedstore.normalize_rows(m)


def _load_lexicon(cfg: dict) -> NounLexicon:
    emb = _require_file(cfg["lexicon_emb"], "lexicon embeddings")
    nouns = _require_file(cfg["lexicon_nouns"], "lexicon nouns")
    lex = embedstore.read_lexicon(emb, nouns)
    if cfg.get("no_normalize"):
        return lex
    return NounLexicon(
        nouns=lex.nouns, embeddings=embedstore.normalize_rows(lex.embeddings)
    )


def _load_truth(cfg: dict, c: int | None = None) -> LabelVector | None:
    if not cfg.get("truth"):
        return None
    path = _require_file(cfg["truth"], "truth labels")
    return embedstore.read_labels(path, num_classes=c or 0)


def _semantic_space(cfg: dict, images: EmbeddingMatrix) -> semspace.SemanticSpace:
    lex = _load_lexicon(cfg)
    return semspace.build_semantic_space(
        lex, images, cfg["c"], cfg["gamma_u"], cfg["gamma_r"], cfg["seed"]
    )


def cmd_synth(cfg: dict) -> int:
    out = _out_dir(cfg)
    spec = synthgen.SynthSpec(
        c=cfg["c"],
        n_per_cluster=cfg["n_per_cluster"],
        d=cfg["d"],
        noise_sigma=cfg["noise_sigma"],
        n_nouns=cfg["n_nouns"],
        noun_noise=cfg["noun_noise"],
        distractor_nouns=cfg["distractor_nouns"],
        seed=cfg["seed"],
    )
    images, truth, lexicon, truth_nouns = synthgen.generate(spec)
    embedstore.write_embeddings(images, out / "images.emb")
    embedstore.write_labels(truth, out / "labels.json")
    embedstore.write_lexicon(lexicon, out / "lexicon.emb", out / "lexicon.jsonl")
    _write_json(out / "truth_nouns.json", truth_nouns)
    _echo_config(out, "synth", cfg)
    print(f"wrote {images.n} images, {len(lexicon)} nouns to {out}")
    return 0


def cmd_filter_nouns(cfg: dict) -> int:
    out = _out_dir(cfg)
    images = _load_images(cfg)
    lex = _load_lexicon(cfg)
    scores = semspace.uniqueness_scores(lex)
    unique = semspace.filter_unique(lex, cfg["gamma_u"])
    space = semspace.filter_relevant(
        unique, images, cfg["c"], cfg["gamma_r"], cfg["seed"],
        gamma_u=cfg["gamma_u"], source_size=len(lex),
    )
    embedstore.write_lexicon(
        space.lexicon, out / "semantic.emb", out / "semantic.jsonl"
    )
    hist, edges = np.histogram(scores, bins=20, range=(0.0, 2.0))
    _write_json(out / "filter_report.json", {
        "input_size": len(lex),
        "unique_size": len(unique),
        "semantic_size": len(space),
        "gamma_u": cfg["gamma_u"],
        "gamma_r": cfg["gamma_r"],
        "score_histogram": {
            "bin_edges": [float(e) for e in edges],
            "counts": [int(h) for h in hist],
        },
    })
    _echo_config(out, "filter-nouns", cfg)
    print(f"kept {len(space)} of {len(lex)} nouns ({len(unique)} after uniqueness)")
    return 0


def _train_config(cfg: dict) -> clusterhead.TrainConfig:
    try:
        strategy = Strategy(cfg["strategy"])
    except ValueError:
        raise ConfigError(
            f"unknown strategy {cfg['strategy']!r}; "
            f"choose from {[s.value for s in Strategy]}"
        ) from None
    return clusterhead.TrainConfig(
        c=cfg["c"],
        epochs=cfg["epochs"],
        batch_size=cfg["batch_size"],
        lr=cfg["lr"],
        lam=cfg["lam"],
        beta=cfg["beta"],
        k=cfg["k"],
        strategy=strategy,
        xi_c=cfg["xi_c"],
        xi_a=cfg["xi_a"],
        tau_m=cfg["tau_m"],
        seed=cfg["seed"],
        flip_balance_sign=bool(cfg.get("flip_balance_sign")),
    )


def cmd_train(cfg: dict) -> int:
    train_cfg = _train_config(cfg)      # validate before touching files
    out = _out_dir(cfg)
    images = _load_images(cfg)
    truth = _load_truth(cfg, c=None)
    space = _semantic_space(cfg, images)
    embedstore.write_lexicon(
        space.lexicon, out / "semantic.emb", out / "semantic.jsonl"
    )
    params, trace = clusterhead.train(images, space, train_cfg, truth=truth)
    clusterhead.save_checkpoint(
        params, out / "head.emb", out / "head.json", epoch=train_cfg.epochs
    )
    trace.write_csv(out / "trace.csv")
    pred = clusterhead.predict(params, images)
    embedstore.write_labels(pred, out / "predicted_labels.json")
    if truth is not None:
        report = metrics.metrics_report(pred, truth)
        metrics.write_metrics(report, out / "metrics.json")
        print(
            f"acc={report['acc']:.4f} nmi={report['nmi']:.4f} "
            f"ari={report['ari']:.4f}"
        )
    _echo_config(out, "train", cfg)
    print(f"trained {train_cfg.epochs} epochs; artifacts in {out}")
    return 0


def cmd_predict(cfg: dict) -> int:
    out = _out_dir(cfg)
    images = _load_images(cfg)
    params, _ = clusterhead.load_checkpoint(
        _require_file(cfg["checkpoint_emb"], "checkpoint weights"),
        _require_file(cfg["checkpoint_meta"], "checkpoint metadata"),
    )
    pred = clusterhead.predict(params, images)
    embedstore.write_labels(pred, out / "predicted_labels.json")
    _echo_config(out, "predict", cfg)
    print(f"wrote {pred.n} labels to {out / 'predicted_labels.json'}")
    return 0


def cmd_evaluate(cfg: dict) -> int:
    out = _out_dir(cfg)
    pred = embedstore.read_labels(_require_file(cfg["pred"], "predicted labels"))
    truth = embedstore.read_labels(_require_file(cfg["truth"], "truth labels"))
    report = metrics.metrics_report(pred, truth)
    metrics.write_metrics(report, out / "metrics.json")
    _echo_config(out, "evaluate", cfg)
    print(json.dumps(report, sort_keys=True))
    return 0


def cmd_baseline_kmeans(cfg: dict) -> int:
    out = _out_dir(cfg)
    images = _load_images(cfg)
    truth = _load_truth(cfg)
    km = kmeans(images, cfg["c"], cfg["seed"])
    pred = LabelVector(km.assignment, num_classes=cfg["c"])
    embedstore.write_labels(pred, out / "predicted_labels.json")
    payload = {"inertia": km.inertia, "iterations": km.iterations}
    if truth is not None:
        report = metrics.metrics_report(pred, truth)
        metrics.write_metrics(report, out / "metrics.json")
        payload.update(report)
        print(
            f"acc={report['acc']:.4f} nmi={report['nmi']:.4f} "
            f"ari={report['ari']:.4f}"
        )
    _write_json(out / "kmeans.json", payload)
    _echo_config(out, "baseline-kmeans", cfg)
    return 0


def cmd_bound_report(cfg: dict) -> int:
    if not 0.0 < cfg["delta"] < 1.0:
        raise ConfigError(f"delta must lie in (0, 1), got {cfg['delta']}")
    out = _out_dir(cfg)
    images = _load_images(cfg)
    params, _ = clusterhead.load_checkpoint(
        _require_file(cfg["checkpoint_emb"], "checkpoint weights"),
        _require_file(cfg["checkpoint_meta"], "checkpoint metadata"),
    )
    q = clusterhead.forward(params, images)
    g = knn_graph(images, min(cfg["k"], images.n - 1))
    report = theory.bound_report(
        q, g, cfg["lam"], cfg["beta"], params.c,
        delta=cfg["delta"], C=cfg["bound_c"],
    )
    _write_json(out / "bound.json", report.to_json_dict())
    _echo_config(out, "bound-report", cfg)
    print(json.dumps(report.to_json_dict(), sort_keys=True))
    return 0


def cmd_convergence_report(cfg: dict) -> int:
    out = _out_dir(cfg)
    path = _require_file(cfg["trace"], "trace csv")
    with open(path, "r", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None or "grad_norm" not in reader.fieldnames:
            raise FormatError(f"{path}: no grad_norm column")
        norms = [float(row["grad_norm"]) for row in reader]
    report = theory.convergence_report(norms)
    _write_json(out / "convergence.json", report)
    with open(out / "convergence.csv", "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "min_so_far_grad_norm"])
        for i, v in enumerate(report["min_so_far"], start=1):
            w.writerow([i, repr(v)])
    _echo_config(out, "convergence-report", cfg)
    print(f"fitted slope {report['slope']:.6f} over {report['epochs']} epochs")
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override it")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="rng seed (default 0)")


def _add_hyper(p: argparse.ArgumentParser, names: list[str]) -> None:
    specs = {
        "lr": ("--lr", float, "learning rate eta_phi (default 1e-4)"),
        "gamma_u": ("--gamma-u", float, "uniqueness threshold gamma_u (default 0.05)"),
        "gamma_r": ("--gamma-r", int, "nouns kept per center gamma_r (default 200)"),
        "xi_c": ("--xi-c", int, "top-sample budget xi_c (default 0.9*n/c)"),
        "xi_a": ("--xi-a", int, "noun-neighbor count xi_a (default 20)"),
        "k": ("--k", int, "nearest-neighbor count k (default 20)"),
        "lam": ("--lam", float, "balance weight lambda (default 5)"),
        "beta": ("--beta", float, "pseudo-label weight beta (default 1)"),
        "epochs": ("--epochs", int, "training epochs (default 100)"),
        "batch_size": ("--batch-size", int, "minibatch size (default 128)"),
        "tau_m": ("--tau-m", float, "head temperature (default 1.0)"),
        "delta": ("--delta", float, "bound confidence delta (default 0.05)"),
        "bound_c": ("--bound-c", float, "bound constant C (default 1.0)"),
    }
    for name in names:
        flag, typ, help_ = specs[name]
        p.add_argument(flag, dest=name, type=typ, help=help_)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="semclust",
        description="Semantic-guided clustering on precomputed embeddings",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic benchmark")
    _add_common(p)
    p.add_argument("--c", type=int, help="number of clusters (default 3)")
    p.add_argument("--n-per-cluster", dest="n_per_cluster", type=int)
    p.add_argument("--d", type=int, help="embedding dimension (default 32)")
    p.add_argument("--noise-sigma", dest="noise_sigma", type=float)
    p.add_argument("--n-nouns", dest="n_nouns", type=int)
    p.add_argument("--noun-noise", dest="noun_noise", type=float)
    p.add_argument("--distractor-nouns", dest="distractor_nouns", type=int)
    p.set_defaults(func=cmd_synth, defaults={
        "c": 3, "n_per_cluster": 200, "d": 32, "noise_sigma": 0.15,
        "n_nouns": 50, "noun_noise": 0.05, "distractor_nouns": 5,
        "seed": 0, "out": "synth_out",
    })

    p = sub.add_parser("filter-nouns", help="two-step semantic-space filter")
    _add_common(p)
    p.add_argument("--images", help="EMB1 image embeddings")
    p.add_argument("--lexicon-emb", dest="lexicon_emb", help="EMB1 noun embeddings")
    p.add_argument("--lexicon-nouns", dest="lexicon_nouns", help="JSON-lines nouns")
    p.add_argument("--c", type=int, help="number of clusters")
    p.add_argument("--no-normalize", dest="no_normalize", action="store_const",
                   const=True, help="skip row normalization on ingest")
    _add_hyper(p, ["gamma_u", "gamma_r"])
    p.set_defaults(func=cmd_filter_nouns, defaults={
        "gamma_u": HYPER_DEFAULTS["gamma_u"], "gamma_r": HYPER_DEFAULTS["gamma_r"],
        "seed": 0, "out": "filter_out", "no_normalize": False,
    }, required=["images", "lexicon_emb", "lexicon_nouns", "c"])

    p = sub.add_parser("train", help="full pipeline: filter, pseudo-label, train")
    _add_common(p)
    p.add_argument("--images", help="EMB1 image embeddings")
    p.add_argument("--lexicon-emb", dest="lexicon_emb", help="EMB1 noun embeddings")
    p.add_argument("--lexicon-nouns", dest="lexicon_nouns", help="JSON-lines nouns")
    p.add_argument("--truth", help="optional JSON truth labels")
    p.add_argument("--c", type=int, help="number of clusters")
    p.add_argument("--strategy", choices=[s.value for s in Strategy],
                   help="semantic-center strategy (default adjusted)")
    p.add_argument("--flip-balance-sign", dest="flip_balance_sign",
                   action="store_const", const=True,
                   help="ablation: train with the balance term sign flipped")
    p.add_argument("--no-normalize", dest="no_normalize", action="store_const",
                   const=True, help="skip row normalization on ingest")
    _add_hyper(p, ["lr", "gamma_u", "gamma_r", "xi_c", "xi_a", "k", "lam",
                   "beta", "epochs", "batch_size", "tau_m"])
    p.set_defaults(func=cmd_train, defaults={
        **{k: HYPER_DEFAULTS[k] for k in
           ("lr", "gamma_u", "gamma_r", "xi_c", "xi_a", "k", "lam", "beta",
            "epochs", "batch_size", "tau_m")},
        "strategy": "adjusted", "seed": 0, "out": "train_out",
        "truth": None, "flip_balance_sign": False, "no_normalize": False,
    }, required=["images", "lexicon_emb", "lexicon_nouns", "c"])

    p = sub.add_parser("predict", help="labels from a saved checkpoint")
    _add_common(p)
    p.add_argument("--images", help="EMB1 image embeddings")
    p.add_argument("--checkpoint-emb", dest="checkpoint_emb")
    p.add_argument("--checkpoint-meta", dest="checkpoint_meta")
    p.add_argument("--no-normalize", dest="no_normalize", action="store_const",
                   const=True)
    p.set_defaults(func=cmd_predict, defaults={
        "seed": 0, "out": "predict_out", "no_normalize": False,
    }, required=["images", "checkpoint_emb", "checkpoint_meta"])

    p = sub.add_parser("evaluate", help="metrics for predicted vs truth labels")
    _add_common(p)
    p.add_argument("--pred", help="predicted labels JSON")
    p.add_argument("--truth", help="truth labels JSON")
    p.set_defaults(func=cmd_evaluate, defaults={
        "seed": 0, "out": "evaluate_out",
    }, required=["pred", "truth"])

    p = sub.add_parser("baseline-kmeans", help="k-means on raw embeddings")
    _add_common(p)
    p.add_argument("--images", help="EMB1 image embeddings")
    p.add_argument("--truth", help="optional JSON truth labels")
    p.add_argument("--c", type=int, help="number of clusters")
    p.add_argument("--no-normalize", dest="no_normalize", action="store_const",
                   const=True)
    p.set_defaults(func=cmd_baseline_kmeans, defaults={
        "seed": 0, "out": "baseline_out", "truth": None, "no_normalize": False,
    }, required=["images", "c"])

    p = sub.add_parser("bound-report", help="empirical generalization constants")
    _add_common(p)
    p.add_argument("--images", help="EMB1 image embeddings")
    p.add_argument("--checkpoint-emb", dest="checkpoint_emb")
    p.add_argument("--checkpoint-meta", dest="checkpoint_meta")
    p.add_argument("--no-normalize", dest="no_normalize", action="store_const",
                   const=True)
    _add_hyper(p, ["k", "lam", "beta", "delta", "bound_c"])
    p.set_defaults(func=cmd_bound_report, defaults={
        "k": HYPER_DEFAULTS["k"], "lam": HYPER_DEFAULTS["lam"],
        "beta": HYPER_DEFAULTS["beta"], "delta": HYPER_DEFAULTS["delta"],
        "bound_c": HYPER_DEFAULTS["bound_c"],
        "seed": 0, "out": "bound_out", "no_normalize": False,
    }, required=["images", "checkpoint_emb", "checkpoint_meta"])

    p = sub.add_parser("convergence-report", help="gradient-norm envelope fit")
    _add_common(p)
    p.add_argument("--trace", help="trace.csv from a training run")
    p.set_defaults(func=cmd_convergence_report, defaults={
        "seed": 0, "out": "convergence_out",
    }, required=["trace"])

    return parser


def _effective_config(args: argparse.Namespace) -> dict:
    cfg = dict(args.defaults)
    flag_dests = {
        k for k in vars(args)
        if k not in ("func", "defaults", "required", "command", "config")
    }
    if args.config:
        path = _require_file(args.config, "config file")
        try:
            with open(path, "r", encoding="utf-8") as f:
                file_cfg = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON: {e}") from e
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
        unknown = set(file_cfg) - flag_dests
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for dest in flag_dests:
        v = getattr(args, dest, None)
        if v is not None:
            cfg[dest] = v
    for name in getattr(args, "required", []):
        if cfg.get(name) is None:
            raise ConfigError(f"missing required option --{name.replace('_', '-')}")
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _effective_config(args)
        return args.func(cfg)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, FloatingPointError) as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (IoError, FormatError, DataError, EngineError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
