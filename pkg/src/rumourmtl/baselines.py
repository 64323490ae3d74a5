"""Veracity baselines: majority class and a linear bag-of-words classifier.

The linear baseline mirrors the NileTMRG recipe: bag-of-words over the
source tweet plus URL/hashtag presence and the proportions of supporting,
denying and querying replies, fed to a one-vs-rest linear classifier
trained with hinge loss.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from rumourmtl.corpus import VERACITY_CLASSES, Corpus, Thread
from rumourmtl.text import preprocess


# ---------------------------------------------------------------------------
# Majority baseline

def majority_fit(train: Corpus) -> str:
    """Most frequent veracity class in training, ties broken alphabetically."""
    counts = Counter(t.veracity_label for t in train.threads if t.veracity_label is not None)
    if not counts:
        raise ValueError("no veracity labels in the training corpus")
    best = max(counts.values())
    return min(c for c, n in counts.items() if n == best)


def majority_predict(majority_class: str, test: Corpus) -> list[str]:
    return [majority_class for _ in test.threads]


# ---------------------------------------------------------------------------
# Features

@dataclass(frozen=True)
class BowVocabulary:
    """Token -> column index over training source tweets, capped by frequency."""

    index: dict[str, int]

    @classmethod
    def build(cls, train: Corpus, size_cap: int = 5000) -> "BowVocabulary":
        counts: Counter = Counter()
        for thread in train.threads:
            counts.update(preprocess(thread.source.text))
        # Frequency-descending, token-ascending: deterministic column order.
        ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:size_cap]
        return cls(index={token: i for i, (token, _) in enumerate(ranked)})

    def __len__(self) -> int:
        return len(self.index)


def stance_proportions(thread: Thread,
                       stance_of: Optional[Callable[[str], Optional[str]]] = None
                       ) -> tuple[float, float, float]:
    """Proportions of (support, deny, query) among the thread's replies.

    ``stance_of`` maps a post id to a stance label (predicted or gold);
    defaults to the gold annotations. Threads without replies get (0, 0, 0).
    """
    if stance_of is None:
        gold = {p.id: p.stance_label for p in thread.replies}
        stance_of = gold.get
    n = len(thread.replies)
    if n == 0:
        return (0.0, 0.0, 0.0)
    counts = Counter(stance_of(p.id) for p in thread.replies)
    return (counts["support"] / n, counts["deny"] / n, counts["query"] / n)


def extract_features(thread: Thread, vocab: BowVocabulary,
                     stance_of: Optional[Callable[[str], Optional[str]]] = None
                     ) -> np.ndarray:
    """BOW counts over the source tweet + URL/hashtag flags + SDQ proportions."""
    vec = np.zeros(len(vocab) + 5)
    for token in preprocess(thread.source.text):
        col = vocab.index.get(token)
        if col is not None:
            vec[col] += 1.0
    vec[len(vocab)] = float(thread.source.has_url)
    vec[len(vocab) + 1] = float(thread.source.has_hashtag)
    vec[len(vocab) + 2:] = stance_proportions(thread, stance_of)
    return vec


# ---------------------------------------------------------------------------
# One-vs-rest linear classifier (hinge loss, stochastic subgradient descent)

@dataclass
class LinearModel:
    classes: tuple[str, ...]
    weights: np.ndarray  # (n_classes, n_features)
    biases: np.ndarray   # (n_classes,)
    l2: float


def svm_fit(features: np.ndarray, labels: Sequence[str], l2: float = 1e-3,
            epochs: int = 100, seed: int = 0,
            classes: Sequence[str] = VERACITY_CLASSES) -> LinearModel:
    """Train one hinge-loss separator per class against the rest."""
    if len({lbl for lbl in labels}) < 2:
        raise ValueError("need at least two classes in the training labels")
    n, d = features.shape
    weights = np.zeros((len(classes), d))
    biases = np.zeros(len(classes))
    rng = np.random.default_rng(seed)
    y = np.array([[1.0 if lbl == c else -1.0 for lbl in labels] for c in classes])
    step = 0
    for epoch in range(epochs):
        for i in rng.permutation(n):
            step += 1
            lr = 1.0 / np.sqrt(step)
            xi = features[i]
            margins = (weights @ xi + biases) * y[:, i]
            violated = margins < 1.0
            weights *= 1.0 - lr * l2
            weights[violated] += lr * np.outer(y[violated, i], xi)
            biases[violated] += lr * y[violated, i]
    return LinearModel(classes=tuple(classes), weights=weights, biases=biases, l2=l2)


def svm_decision(model: LinearModel, features: np.ndarray) -> np.ndarray:
    return features @ model.weights.T + model.biases


def svm_predict(model: LinearModel, features: np.ndarray) -> list[str]:
    """Argmax margin; exact ties resolve to the alphabetically first class."""
    scores = svm_decision(model, np.atleast_2d(features))
    preds = []
    for row in scores:
        best = row.max()
        preds.append(min(model.classes[i] for i in range(len(model.classes))
                         if row[i] >= best))
    return preds


# ---------------------------------------------------------------------------
# Full NileTMRG*-style pipeline over a corpus

@dataclass
class NileModel:
    vocab: BowVocabulary
    linear: LinearModel
    stance_of: Optional[Callable[[Thread], Callable[[str], Optional[str]]]] = None


def nile_fit(train: Corpus, l2: float = 1e-3, epochs: int = 100, seed: int = 0,
             size_cap: int = 5000,
             stance_source: Optional[Callable[[Thread], Callable[[str], Optional[str]]]] = None
             ) -> NileModel:
    """Fit the linear baseline on every veracity-labeled training thread.

    ``stance_source(thread)`` returns a post-id -> stance lookup; by default
    the gold stance annotations are used.
    """
    vocab = BowVocabulary.build(train, size_cap=size_cap)
    labeled = [t for t in train.threads if t.veracity_label is not None]
    if not labeled:
        raise ValueError("no veracity labels in the training corpus")
    feats = np.stack([
        extract_features(t, vocab, stance_source(t) if stance_source else None)
        for t in labeled])
    labels = [t.veracity_label for t in labeled]
    linear = svm_fit(feats, labels, l2=l2, epochs=epochs, seed=seed)
    return NileModel(vocab=vocab, linear=linear, stance_of=stance_source)


def nile_predict(model: NileModel, test: Corpus) -> list[str]:
    feats = np.stack([
        extract_features(t, model.vocab, model.stance_of(t) if model.stance_of else None)
        for t in test.threads])
    return svm_predict(model.linear, feats)
