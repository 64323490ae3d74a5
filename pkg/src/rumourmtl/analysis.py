"""Label-distribution diagnostics per event and per task.

Shannon entropy (nats) and Fisher excess kurtosis of each event's label
counts, plus the token-type ratio of the task subset's preprocessed text.
Kurtosis codes labels as integers 0..K-1 in alphabetical label order and
uses population (biased) central moments; it is coding-dependent by
construction, entropy is not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from rumourmtl.corpus import (
    DETECTION_CLASSES,
    STANCE_CLASSES,
    VERACITY_CLASSES,
    Corpus,
)
from rumourmtl.text import preprocess

TASK_LABELS = {
    "stance": STANCE_CLASSES,
    "veracity": VERACITY_CLASSES,
    "detection": DETECTION_CLASSES,
}


@dataclass(frozen=True)
class LabelDistribution:
    """Per-event, per-task label counts in alphabetical label order."""

    task: str
    event: str
    counts: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(c < 0 for c in self.counts):
            raise ValueError("negative label count")
        if sum(self.counts) == 0:
            raise ValueError(f"all-zero counts for {self.task}/{self.event}")

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def frequencies(self) -> tuple[float, ...]:
        total = self.total
        return tuple(c / total for c in self.counts)


def entropy(dist: LabelDistribution) -> float:
    """Shannon entropy in nats: 0 for a single class, ln K when uniform."""
    return -sum(p * math.log(p) for p in dist.frequencies if p > 0.0)


def kurtosis(dist: LabelDistribution) -> Optional[float]:
    """Fisher excess kurtosis of the integer-coded label variable.

    Returns None for single-class distributions, where the ratio of moments
    is undefined (reported downstream as degenerate, -3 by convention).
    """
    freqs = dist.frequencies
    if sum(1 for p in freqs if p > 0.0) < 2:
        return None
    mean = sum(i * p for i, p in enumerate(freqs))
    m2 = sum(p * (i - mean) ** 2 for i, p in enumerate(freqs))
    m4 = sum(p * (i - mean) ** 4 for i, p in enumerate(freqs))
    return m4 / (m2 * m2) - 3.0


def ttr(texts: Sequence[Sequence[str]]) -> float:
    """Token-type ratio: distinct tokens over total tokens."""
    total = sum(len(tokens) for tokens in texts)
    if total == 0:
        raise ValueError("no tokens in the text collection")
    distinct = len({t for tokens in texts for t in tokens})
    return distinct / total


@dataclass(frozen=True)
class DatasetStats:
    entropy: float
    kurtosis: Optional[float]  # None marks the degenerate single-class case
    ttr: float


def _event_distribution(corpus: Corpus, event: str, task: str) -> Optional[LabelDistribution]:
    labels = TASK_LABELS[task]
    counts = [0] * len(labels)
    for thread in corpus.threads:
        if thread.event != event:
            continue
        if task == "stance":
            for post in thread.posts:
                if post.stance_label is not None:
                    counts[labels.index(post.stance_label)] += 1
        elif task == "veracity":
            if thread.veracity_label is not None:
                counts[labels.index(thread.veracity_label)] += 1
        else:
            if thread.detection_label is not None:
                counts[labels.index(thread.detection_label)] += 1
    if sum(counts) == 0:
        return None
    return LabelDistribution(task=task, event=event, counts=tuple(counts))


def _task_texts(corpus: Corpus, event: str, task: str) -> list[list[str]]:
    """Preprocessed tokens of all posts in threads labeled for the task."""
    texts = []
    for thread in corpus.threads:
        if thread.event != event:
            continue
        if task == "stance":
            labeled = any(p.stance_label is not None for p in thread.posts)
        elif task == "veracity":
            labeled = thread.veracity_label is not None
        else:
            labeled = thread.detection_label is not None
        if labeled:
            texts.extend(preprocess(p.text) for p in thread.posts)
    return texts


def analyze_corpus(corpus: Corpus) -> dict[str, dict[str, Optional[DatasetStats]]]:
    """Per-event, per-task stats table; tasks without labels in an event
    get None cells (like stance for events that carry no stance annotation)."""
    table: dict[str, dict[str, Optional[DatasetStats]]] = {}
    for event in corpus.events:
        row: dict[str, Optional[DatasetStats]] = {}
        for task in ("stance", "veracity", "detection"):
            dist = _event_distribution(corpus, event, task)
            if dist is None:
                row[task] = None
                continue
            texts = _task_texts(corpus, event, task)
            row[task] = DatasetStats(
                entropy=entropy(dist),
                kurtosis=kurtosis(dist),
                ttr=ttr(texts) if any(texts) else float("nan"),
            )
        table[event] = row
    return table


def stats_csv(table: dict[str, dict[str, Optional[DatasetStats]]]) -> str:
    """Render the stats table as CSV: rows = events, columns = task metrics.

    Degenerate kurtosis cells are marked ``-3 (degenerate)``.
    """
    tasks = ("stance", "veracity", "detection")
    header = ["event"]
    for task in tasks:
        header += [f"{task}_entropy", f"{task}_kurtosis", f"{task}_ttr"]
    lines = [",".join(header)]
    for event in sorted(table):
        cells = [event]
        for task in tasks:
            stats = table[event][task]
            if stats is None:
                cells += ["-", "-", "-"]
            else:
                kurt = ("-3 (degenerate)" if stats.kurtosis is None
                        else f"{stats.kurtosis:.2f}")
                cells += [f"{stats.entropy:.2f}", kurt, f"{stats.ttr:.2f}"]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"
