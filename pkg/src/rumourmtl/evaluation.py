"""Metrics and leave-one-event-out evaluation.

Macro-F is the unweighted mean of per-class F1 over the task's fixed class
set, so classes absent from both gold and predictions still contribute a
zero term. LOEO folds are pooled by concatenating predictions before
computing metrics (micro-averaging across events).
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from rumourmtl.corpus import Corpus, split_loeo

#: Development event used for tuning when present in the training split.
DEFAULT_DEV_EVENT = "charliehebdo"


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    per_class_f1: dict[str, float]
    macro_f: float


def confusion_matrix(gold: Sequence[str], preds: Sequence[str],
                     classes: Sequence[str]) -> np.ndarray:
    """K x K counts, gold rows and predicted columns."""
    if len(gold) != len(preds):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(preds)} predictions")
    index = {c: i for i, c in enumerate(classes)}
    matrix = np.zeros((len(classes), len(classes)), dtype=int)
    for g, p in zip(gold, preds):
        matrix[index[g], index[p]] += 1
    return matrix


def metrics_from_confusion(matrix: np.ndarray, classes: Sequence[str]) -> Metrics:
    total = int(matrix.sum())
    if total == 0:
        raise ValueError("empty confusion matrix")
    accuracy = float(np.trace(matrix)) / total
    per_class = {}
    for i, c in enumerate(classes):
        tp = float(matrix[i, i])
        gold_n = float(matrix[i, :].sum())
        pred_n = float(matrix[:, i].sum())
        precision = tp / pred_n if pred_n else 0.0
        recall = tp / gold_n if gold_n else 0.0
        f1 = (2 * precision * recall / (precision + recall)
              if precision + recall else 0.0)
        per_class[c] = f1
    macro = float(np.mean([per_class[c] for c in classes]))
    return Metrics(accuracy=accuracy, per_class_f1=per_class, macro_f=macro)


def compute_metrics(preds: Sequence[str], gold: Sequence[str],
                    classes: Sequence[str]) -> Metrics:
    return metrics_from_confusion(confusion_matrix(gold, preds, classes), classes)


@dataclass(frozen=True)
class FoldResult:
    event: str
    thread_ids: tuple[str, ...]
    gold: tuple[str, ...]
    preds: tuple[str, ...]
    metrics: Metrics


def loeo_evaluate(corpus: Corpus,
                  trainer_factory: Callable[[Corpus, int, Optional[str]],
                                            Callable[[Corpus], Sequence[str]]],
                  classes: Sequence[str], seed: int = 0,
                  label_of: Optional[Callable] = None
                  ) -> tuple[list[FoldResult], Metrics]:
    """One fold per event: train on the rest, predict the held-out threads.

    ``trainer_factory(train_corpus, seed, dev_event)`` returns a predictor
    mapping a corpus to one class per labeled thread. ``label_of(thread)``
    selects the gold label (default: veracity); unlabeled threads are
    excluded. Pooled metrics are computed over all folds' concatenated
    predictions.
    """
    if label_of is None:
        label_of = lambda t: t.veracity_label  # noqa: E731
    events = corpus.events
    if len(events) < 2:
        raise ValueError("LOEO needs at least two events")
    folds = []
    pooled_gold: list[str] = []
    pooled_preds: list[str] = []
    for event in events:
        train_corpus, test_corpus = split_loeo(corpus, event)
        labeled = Corpus(tuple(t for t in test_corpus.threads if label_of(t) is not None))
        if not labeled.threads:
            continue
        dev_event = (DEFAULT_DEV_EVENT if DEFAULT_DEV_EVENT in train_corpus.events
                     else max(train_corpus.events,
                              key=lambda e: (sum(1 for t in train_corpus.threads
                                                 if t.event == e), e)))
        predictor = trainer_factory(train_corpus, seed, dev_event)
        preds = tuple(predictor(labeled))
        gold = tuple(label_of(t) for t in labeled.threads)
        if len(preds) != len(gold):
            raise ValueError(
                f"fold {event}: predictor returned {len(preds)} predictions "
                f"for {len(gold)} labeled threads")
        folds.append(FoldResult(
            event=event,
            thread_ids=tuple(t.id for t in labeled.threads),
            gold=gold, preds=preds,
            metrics=compute_metrics(preds, gold, classes),
        ))
        pooled_gold.extend(gold)
        pooled_preds.extend(preds)
    pooled = compute_metrics(pooled_preds, pooled_gold, classes)
    return folds, pooled


# ---------------------------------------------------------------------------
# Report emission

def _fmt(x: float) -> str:
    return f"{x:.3f}"


def comparison_table(results: dict[str, Metrics]) -> tuple[str, str]:
    """Model-comparison table (one row per model): CSV and aligned text."""
    if not results:
        return "no results\n", "no results\n"
    csv_lines = ["model,macro_f,accuracy"]
    rows = [("model", "macro_f", "accuracy")]
    for name in results:
        m = results[name]
        csv_lines.append(f"{name},{_fmt(m.macro_f)},{_fmt(m.accuracy)}")
        rows.append((name, _fmt(m.macro_f), _fmt(m.accuracy)))
    return "\n".join(csv_lines) + "\n", _align(rows)


def per_event_table(fold_results: dict[str, list[FoldResult]]) -> tuple[str, str]:
    """Per-event macro-F for each model (events as columns)."""
    if not fold_results:
        return "no results\n", "no results\n"
    events = sorted({f.event for folds in fold_results.values() for f in folds})
    csv_lines = ["model," + ",".join(events)]
    rows = [("model", *events)]
    for name, folds in fold_results.items():
        by_event = {f.event: f for f in folds}
        cells = [(_fmt(by_event[e].metrics.macro_f) if e in by_event else "-")
                 for e in events]
        csv_lines.append(name + "," + ",".join(cells))
        rows.append((name, *cells))
    return "\n".join(csv_lines) + "\n", _align(rows)


def per_class_table(folds: list[FoldResult], classes: Sequence[str]) -> tuple[str, str]:
    """Per-event rows with macro-F, accuracy and one F1 column per class."""
    if not folds:
        return "no results\n", "no results\n"
    header = ["event", "macro_f", "accuracy"] + [f"f1_{c}" for c in classes]
    csv_lines = [",".join(header)]
    rows = [tuple(header)]
    for f in sorted(folds, key=lambda f: f.event):
        cells = [f.event, _fmt(f.metrics.macro_f), _fmt(f.metrics.accuracy)]
        cells += [_fmt(f.metrics.per_class_f1[c]) for c in classes]
        csv_lines.append(",".join(cells))
        rows.append(tuple(cells))
    return "\n".join(csv_lines) + "\n", _align(rows)


def _align(rows: list[tuple[str, ...]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    out = io.StringIO()
    for r in rows:
        out.write("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() + "\n")
    return out.getvalue()


def emit_report(results: dict[str, Metrics],
                fold_results: Optional[dict[str, list[FoldResult]]] = None,
                classes: Optional[Sequence[str]] = None,
                detail_model: Optional[str] = None) -> tuple[str, str]:
    """Full report: comparison table plus optional per-event breakdowns.

    Returns (csv document, text document); output is bit-stable for
    identical inputs.
    """
    csv_doc, txt_doc = comparison_table(results)
    if fold_results:
        ev_csv, ev_txt = per_event_table(fold_results)
        csv_doc += "\n" + ev_csv
        txt_doc += "\n" + ev_txt
        if detail_model and classes and detail_model in fold_results:
            pc_csv, pc_txt = per_class_table(fold_results[detail_model], classes)
            csv_doc += "\n" + pc_csv
            txt_doc += "\n" + pc_txt
    return csv_doc, txt_doc
