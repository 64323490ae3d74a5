"""Command-line surface and experiment orchestration.

Subcommands: validate, synth, analyze, train, evaluate, loeo, search.
Configuration is a flat ``key = value`` text file; command-line flags
override file values. All randomness flows from one global seed through
named derived streams, so reruns with identical config and seed produce
byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from rumourmtl import analysis, baselines, evaluation, mtl, search as search_mod
from rumourmtl.corpus import (
    DEFAULT_MAX_BRANCH_LEN,
    VERACITY_CLASSES,
    Corpus,
    CorpusError,
    GeneratorSpec,
    generate_synthetic,
    load_corpus,
    save_corpus,
    split_loeo,
)
from rumourmtl.mtl import HyperParams, MTLModel, derive_rng
from rumourmtl.text import EmbeddingTable, hash_embeddings, load_embeddings

MODEL_NAMES = ("majority", "nile", "single", "mtl2vs", "mtl2vd", "mtl3")
MODEL_TASKS = {
    "single": ("veracity",),
    "mtl2vs": ("veracity", "stance"),
    "mtl2vd": ("veracity", "detection"),
    "mtl3": ("veracity", "stance", "detection"),
}


class UsageError(ValueError):
    """Configuration or input problems: exit status 1."""


# ---------------------------------------------------------------------------
# Flat key = value configuration

def parse_config_text(text: str, where: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"{where}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        values[key.strip()] = value.strip()
    return values


def load_config_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file not found: {path}")
    return parse_config_text(path.read_text(), where=str(path))


_HP_KEYS = {
    "num_dense_layers": int, "num_lstm_layers": int, "dense_width": int,
    "lstm_width": int, "l2": float, "batch_size": int, "epochs": int,
    "dropout": float, "learning_rate": float,
}


@dataclass
class RunConfig:
    corpus: str
    output_dir: str = "out"
    seed: int = 0
    tasks: tuple[str, ...] = ("veracity",)
    embeddings: Optional[str] = None
    embedding_dim: int = 300
    max_branch_len: int = DEFAULT_MAX_BRANCH_LEN
    hp: HyperParams = HyperParams()

    @classmethod
    def from_values(cls, values: dict[str, str]) -> "RunConfig":
        if "corpus" not in values:
            raise UsageError("config is missing required key 'corpus'")
        hp_kwargs = {}
        for key, cast in _HP_KEYS.items():
            if key in values:
                try:
                    hp_kwargs[key] = cast(values[key])
                except ValueError:
                    raise UsageError(f"config key {key!r}: bad value {values[key]!r}") from None
        tasks = tuple(t.strip() for t in values.get("tasks", "veracity").split(",") if t.strip())
        try:
            cfg = cls(
                corpus=values["corpus"],
                output_dir=values.get("output_dir", "out"),
                seed=int(values.get("seed", "0")),
                tasks=tasks,
                embeddings=values.get("embeddings") or None,
                embedding_dim=int(values.get("embedding_dim", "300")),
                max_branch_len=int(values.get("max_branch_len", str(DEFAULT_MAX_BRANCH_LEN))),
                hp=HyperParams(**hp_kwargs),
            )
        except ValueError as exc:
            raise UsageError(f"bad config value: {exc}") from None
        if "veracity" not in cfg.tasks:
            raise UsageError("task set must include veracity")
        return cfg


def _load_run_config(args: argparse.Namespace) -> RunConfig:
    values = load_config_file(args.config)
    for key in ("seed", "output_dir", "tasks", "epochs"):
        override = getattr(args, key, None)
        if override is not None:
            values[key] = str(override)
    return RunConfig.from_values(values)


def _embedding_table(cfg: RunConfig) -> EmbeddingTable:
    if cfg.embeddings:
        return load_embeddings(cfg.embeddings)
    return hash_embeddings(cfg.embedding_dim, seed=cfg.seed)


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


# ---------------------------------------------------------------------------
# Model runners shared by evaluate/loeo

def _train_mtl(train_corpus: Corpus, cfg: RunConfig, tasks: Sequence[str],
               seed: int) -> MTLModel:
    table = _embedding_table(cfg)
    instances = mtl.build_instances(train_corpus, table, max_branch_len=cfg.max_branch_len)
    model = MTLModel(cfg.hp, tasks, table.dimension, seed)
    mtl.train(model, instances, seed)
    return model


def _onehot_probs(pred: str) -> list[float]:
    return [1.0 if c == pred else 0.0 for c in VERACITY_CLASSES]


def _loeo_fold(model_name: str, cfg: RunConfig, event: str
               ) -> tuple[evaluation.FoldResult, list[list[float]]]:
    corpus = load_corpus(cfg.corpus)
    train_corpus, test_corpus = split_loeo(corpus, event)
    labeled = Corpus(tuple(t for t in test_corpus.threads if t.veracity_label is not None))
    fold_seed = int(derive_rng(cfg.seed, f"fold:{event}").integers(2 ** 31))
    if model_name == "majority":
        cls = baselines.majority_fit(train_corpus)
        preds = baselines.majority_predict(cls, labeled)
        probs = [_onehot_probs(p) for p in preds]
    elif model_name == "nile":
        nile = baselines.nile_fit(train_corpus, seed=fold_seed)
        preds = baselines.nile_predict(nile, labeled)
        probs = [_onehot_probs(p) for p in preds]
    else:
        model = _train_mtl(train_corpus, cfg, MODEL_TASKS[model_name], fold_seed)
        table = _embedding_table(cfg)
        thread_preds = [mtl.predict_thread(model, t, table,
                                           max_branch_len=cfg.max_branch_len)
                        for t in labeled.threads]
        preds = [p.veracity for p in thread_preds]
        probs = [[float(x) for x in p.veracity_probs] for p in thread_preds]
    gold = tuple(t.veracity_label for t in labeled.threads)
    fold = evaluation.FoldResult(
        event=event,
        thread_ids=tuple(t.id for t in labeled.threads),
        gold=gold,
        preds=tuple(preds),
        metrics=evaluation.compute_metrics(preds, gold, VERACITY_CLASSES),
    )
    return fold, probs


# ---------------------------------------------------------------------------
# Subcommands

def cmd_validate(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.corpus)
    by_event = {e: sum(1 for t in corpus.threads if t.event == e) for e in corpus.events}
    print(f"ok: {len(corpus)} threads, {len(corpus.events)} events")
    for event, n in sorted(by_event.items()):
        print(f"  {event}: {n} threads")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    values = load_config_file(args.spec)

    def fval(key: str, default: float) -> float:
        return float(values.get(key, default))

    spec = GeneratorSpec(
        events=int(values.get("events", 3)),
        threads_per_event=int(values.get("threads_per_event", 10)),
        depth_range=(int(values.get("depth_min", 1)), int(values.get("depth_max", 4))),
        veracity_priors=(fval("prior_false", 1 / 3), fval("prior_true", 1 / 3),
                         fval("prior_unverified", 1 / 3)),
        nonrumour_fraction=fval("nonrumour_fraction", 0.25),
        coupling=fval("coupling", 1.0),
        replies_range=(int(values.get("replies_min", 2)), int(values.get("replies_max", 6))),
        tokens_per_post=int(values.get("tokens_per_post", 6)),
    )
    seed = args.seed if args.seed is not None else int(values.get("seed", 0))
    try:
        corpus = generate_synthetic(spec, seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    save_corpus(corpus, args.output)
    print(f"wrote {len(corpus)} threads to {args.output}")
    return 0


def cmd_analyze(args: argparse.Namespace) -> int:
    corpus = load_corpus(args.corpus)
    table = analysis.analyze_corpus(corpus)
    csv_text = analysis.stats_csv(table)
    if args.output:
        _atomic_write(Path(args.output), csv_text)
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(csv_text)
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    corpus = load_corpus(cfg.corpus)
    out_dir = Path(cfg.output_dir)
    table = _embedding_table(cfg)
    instances = mtl.build_instances(corpus, table, max_branch_len=cfg.max_branch_len)
    model = MTLModel(cfg.hp, cfg.tasks, table.dimension, cfg.seed)
    history = mtl.train(model, instances, cfg.seed)
    out_dir.mkdir(parents=True, exist_ok=True)
    model_path = out_dir / "model.json"
    model.save(model_path)
    _atomic_write(out_dir / "loss_history.json",
                  json.dumps({"epoch_loss": history}, sort_keys=True) + "\n")
    print(f"wrote {model_path}")
    return 0


def cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    corpus = load_corpus(cfg.corpus)
    model = MTLModel.load(args.model)
    table = _embedding_table(cfg)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    predictions = [mtl.predict_thread(model, t, table, max_branch_len=cfg.max_branch_len)
                   for t in corpus.threads]
    mtl.dump_predictions(predictions, out_dir / "predictions.ndjson")
    labeled = [(p, t) for p, t in zip(predictions, corpus.threads)
               if t.veracity_label is not None]
    if labeled:
        metrics = evaluation.compute_metrics(
            [p.veracity for p, _ in labeled],
            [t.veracity_label for _, t in labeled], VERACITY_CLASSES)
        _atomic_write(out_dir / "metrics.json", json.dumps({
            "accuracy": metrics.accuracy,
            "macro_f": metrics.macro_f,
            "per_class_f1": metrics.per_class_f1,
        }, sort_keys=True) + "\n")
    print(f"wrote {out_dir / 'predictions.ndjson'}")
    return 0


def cmd_loeo(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    corpus = load_corpus(cfg.corpus)
    if len(corpus.events) < 2:
        raise UsageError("LOEO needs at least two events")
    model_names = tuple(m.strip() for m in args.models.split(",") if m.strip())
    for name in model_names:
        if name not in MODEL_NAMES:
            raise UsageError(f"unknown model {name!r}; choose from {MODEL_NAMES}")
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    fold_results: dict[str, list[evaluation.FoldResult]] = {}
    pooled: dict[str, evaluation.Metrics] = {}
    jobs = [(name, event) for name in model_names for event in corpus.events]
    if args.jobs > 1:
        names, events = zip(*jobs)
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_loeo_fold, names, [cfg] * len(jobs), events))
    else:
        outcomes = [_loeo_fold(name, cfg, event) for name, event in jobs]
    for (name, _), (fold, probs) in zip(jobs, outcomes):
        fold_results.setdefault(name, []).append(fold)
        dump_path = out_dir / f"predictions_{name}_{fold.event}.ndjson"
        lines = [json.dumps({"thread": tid, "event": fold.event, "model": name,
                             "veracity": {"pred": pred, "probs": prob},
                             "detection": None, "stance": None}, sort_keys=True)
                 for tid, pred, prob in zip(fold.thread_ids, fold.preds, probs)]
        _atomic_write(dump_path, "\n".join(lines) + ("\n" if lines else ""))
    for name in model_names:
        folds_n = fold_results[name]
        gold = [g for f in folds_n for g in f.gold]
        preds = [p for f in folds_n for p in f.preds]
        pooled[name] = evaluation.compute_metrics(preds, gold, VERACITY_CLASSES)
    csv_doc, txt_doc = evaluation.emit_report(
        pooled, fold_results, VERACITY_CLASSES, detail_model=model_names[-1])
    _atomic_write(out_dir / "report.csv", csv_doc)
    _atomic_write(out_dir / "report.txt", txt_doc)
    print(f"wrote {out_dir / 'report.csv'}")
    return 0


def cmd_search(args: argparse.Namespace) -> int:
    cfg = _load_run_config(args)
    corpus = load_corpus(cfg.corpus)
    if len(corpus.events) < 2:
        raise UsageError("search needs at least two events (one as development set)")
    dev_event = (evaluation.DEFAULT_DEV_EVENT
                 if evaluation.DEFAULT_DEV_EVENT in corpus.events
                 else max(corpus.events,
                          key=lambda e: (sum(1 for t in corpus.threads if t.event == e), e)))
    train_corpus, dev_corpus = split_loeo(corpus, dev_event)
    dev_labeled = Corpus(tuple(t for t in dev_corpus.threads
                               if t.veracity_label is not None))
    table = _embedding_table(cfg)
    space = search_mod.default_space()

    def evaluate_config(config: dict, trial_seed: int):
        hp = HyperParams(
            num_dense_layers=config["num_dense_layers"],
            num_lstm_layers=config["num_lstm_layers"],
            dense_width=config["dense_width"],
            lstm_width=config["lstm_width"],
            l2=config["l2"],
            batch_size=cfg.hp.batch_size,
            epochs=cfg.hp.epochs,
            dropout=cfg.hp.dropout,
            learning_rate=cfg.hp.learning_rate,
        )
        instances = mtl.build_instances(train_corpus, table,
                                        max_branch_len=cfg.max_branch_len)
        model = MTLModel(hp, cfg.tasks, table.dimension, trial_seed)
        mtl.train(model, instances, trial_seed)
        preds = [mtl.predict_thread(model, t, table, max_branch_len=cfg.max_branch_len)
                 for t in dev_labeled.threads]
        gold = [t.veracity_label for t in dev_labeled.threads]
        metrics = evaluation.compute_metrics([p.veracity for p in preds], gold,
                                             VERACITY_CLASSES)
        macro_f = {"veracity": metrics.macro_f}
        return macro_f, metrics.accuracy

    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tpe_cfg = search_mod.TPEConfig(objective_mode=args.objective)
    best, history = search_mod.run_search(
        space, evaluate_config, n_trials=args.trials, cfg=tpe_cfg, seed=cfg.seed,
        log_path=out_dir / "trials.ndjson")
    _atomic_write(out_dir / "best_config.json",
                  json.dumps(best.to_json_obj(), sort_keys=True) + "\n")
    print(f"best objective {best.objective:.4f} at trial {best.number}")
    return 0


# ---------------------------------------------------------------------------
# Dispatch

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rumourmtl",
        description="Multi-task branch-LSTM pipeline for rumour veracity classification.")
    parser.add_argument("--json-errors", action="store_true",
                        help="emit errors as one-line JSON on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a corpus against the schema and invariants")
    p.add_argument("corpus", help="corpus directory or ndjson file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("spec", help="generator spec file (key = value)")
    p.add_argument("-o", "--output", required=True, help="output file or directory")
    p.add_argument("--seed", type=int, default=None, help="override the spec seed")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("analyze", help="label-distribution diagnostics per event and task")
    p.add_argument("corpus")
    p.add_argument("-o", "--output", default=None, help="CSV output path (default stdout)")
    p.set_defaults(func=cmd_analyze)

    for name, func, extra in (
        ("train", cmd_train, ()),
        ("evaluate", cmd_evaluate, ("--model",)),
        ("loeo", cmd_loeo, ("--models", "--jobs")),
        ("search", cmd_search, ("--trials", "--objective")),
    ):
        p = sub.add_parser(name, help=f"{name} according to a run config")
        p.add_argument("config", help="run config file (key = value)")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--output-dir", dest="output_dir", default=None)
        p.add_argument("--tasks", default=None, help="comma-separated task set")
        p.add_argument("--epochs", type=int, default=None)
        if "--model" in extra:
            p.add_argument("--model", required=True, help="checkpoint path")
        if "--models" in extra:
            p.add_argument("--models", default="majority,mtl3",
                           help=f"comma-separated subset of {','.join(MODEL_NAMES)}")
        if "--jobs" in extra:
            p.add_argument("--jobs", type=int, default=1, help="parallel folds")
        if "--trials" in extra:
            p.add_argument("--trials", type=int, default=30)
        if "--objective" in extra:
            p.add_argument("--objective", choices=("product", "accuracy"),
                           default="product")
        p.set_defaults(func=func)
    return parser


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (UsageError, CorpusError) as exc:
        _report_error(args, str(exc))
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failure boundary
        _report_error(args, f"{type(exc).__name__}: {exc}")
        return 2


def _report_error(args: argparse.Namespace, message: str) -> None:
    if getattr(args, "json_errors", False):
        sys.stderr.write(json.dumps({"error": message}, sort_keys=True) + "\n")
    else:
        sys.stderr.write(f"error: {message}\n")


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
