import numpy as np
import pytest

from corpora import RUMOUREVAL_TEST, RUMOUREVAL_TRAIN, bare_thread, corpus_from_veracity_counts
from rumourmtl.baselines import (
    BowVocabulary,
    extract_features,
    majority_fit,
    majority_predict,
    nile_fit,
    nile_predict,
    stance_proportions,
    svm_fit,
    svm_predict,
)
from rumourmtl.corpus import (
    VERACITY_CLASSES,
    Corpus,
    GeneratorSpec,
    Post,
    Thread,
    generate_synthetic,
)


def thread_with_stances(stances, text="some claim", veracity="true", event="ev",
                        source_id="s"):
    replies = tuple(
        Post.create(id=f"{source_id}-r{i}", text="a reply", parent_id=source_id,
                    stance_label=s)
        for i, s in enumerate(stances))
    return Thread(source=Post.create(id=source_id, text=text), replies=replies,
                  event=event, detection_label="rumour", veracity_label=veracity)


class TestMajority:
    def test_competition_training_majority_is_true(self):
        corpus = corpus_from_veracity_counts(RUMOUREVAL_TRAIN)
        assert majority_fit(corpus) == "true"

    def test_competition_test_accuracy(self):
        train = corpus_from_veracity_counts(RUMOUREVAL_TEST)
        assert majority_fit(train) == "false"
        preds = majority_predict("false", train)
        gold = [t.veracity_label for t in train.threads]
        acc = sum(p == g for p, g in zip(preds, gold)) / len(gold)
        assert acc == pytest.approx(12 / 28)

    def test_tie_breaks_alphabetically(self):
        corpus = corpus_from_veracity_counts((3, 3, 1))
        assert majority_fit(corpus) == "false"

    def test_no_labels_raises(self):
        corpus = Corpus((bare_thread("t0", "ev", "non-rumour", None),))
        with pytest.raises(ValueError, match="no veracity labels"):
            majority_fit(corpus)


class TestStanceProportions:
    def test_example(self):
        thread = thread_with_stances(["support", "deny", "deny", "comment"])
        assert stance_proportions(thread) == (0.25, 0.5, 0.0)

    def test_no_replies(self):
        thread = thread_with_stances([])
        assert stance_proportions(thread) == (0.0, 0.0, 0.0)

    def test_callable_override(self):
        thread = thread_with_stances(["comment", "comment"])
        assert stance_proportions(thread, lambda pid: "query") == (0.0, 0.0, 1.0)


class TestFeatures:
    def test_bow_counts_and_flags(self):
        train = Corpus((thread_with_stances([], text="fire fire alarm"),))
        vocab = BowVocabulary.build(train)
        assert set(vocab.index) == {"fire", "alarm"}
        thread = thread_with_stances(["support", "deny"],
                                     text="fire! see http://x.co #fire")
        vec = extract_features(thread, vocab)
        assert vec[vocab.index["fire"]] == 2.0  # "#fire" tokenizes to "fire"
        assert vec[len(vocab)] == 1.0      # URL flag
        assert vec[len(vocab) + 1] == 1.0  # hashtag flag
        np.testing.assert_allclose(vec[len(vocab) + 2:], [0.5, 0.5, 0.0])

    def test_vocabulary_cap_keeps_most_frequent(self):
        train = Corpus((
            thread_with_stances([], text="aaa aaa aaa bbb bbb ccc"),
        ))
        vocab = BowVocabulary.build(train, size_cap=2)
        assert set(vocab.index) == {"aaa", "bbb"}

    def test_vocabulary_deterministic_order(self):
        train = Corpus((thread_with_stances([], text="zebra apple zebra apple"),))
        vocab = BowVocabulary.build(train)
        # equal counts: token-ascending
        assert vocab.index == {"apple": 0, "zebra": 1}

    def test_out_of_vocabulary_ignored(self):
        train = Corpus((thread_with_stances([], text="known words"),))
        vocab = BowVocabulary.build(train)
        vec = extract_features(thread_with_stances([], text="unknown tokens"), vocab)
        assert np.all(vec[:len(vocab)] == 0.0)


class TestLinearClassifier:
    def separable_data(self, n=30, seed=0):
        rng = np.random.default_rng(seed)
        centers = {"false": [4.0, 0.0], "true": [-4.0, 0.0], "unverified": [0.0, 4.0]}
        feats, labels = [], []
        for label, center in centers.items():
            feats.append(rng.standard_normal((n, 2)) * 0.3 + center)
            labels.extend([label] * n)
        return np.vstack(feats), labels

    def test_separable_data_learned(self):
        feats, labels = self.separable_data()
        model = svm_fit(feats, labels, epochs=30)
        preds = svm_predict(model, feats)
        acc = sum(p == g for p, g in zip(preds, labels)) / len(labels)
        assert acc > 0.95

    def test_identical_features_predict_single_class(self):
        feats = np.ones((12, 3))
        labels = ["true"] * 8 + ["false"] * 4
        model = svm_fit(feats, labels, epochs=50)
        preds = svm_predict(model, feats)
        assert len(set(preds)) == 1

    def test_large_l2_shrinks_weights(self):
        feats, labels = self.separable_data()
        small = svm_fit(feats, labels, l2=1e-4, epochs=20)
        large = svm_fit(feats, labels, l2=10.0, epochs=20)
        assert np.linalg.norm(large.weights) < np.linalg.norm(small.weights)

    def test_deterministic(self):
        feats, labels = self.separable_data()
        a = svm_fit(feats, labels, seed=3, epochs=5)
        b = svm_fit(feats, labels, seed=3, epochs=5)
        np.testing.assert_array_equal(a.weights, b.weights)
        np.testing.assert_array_equal(a.biases, b.biases)

    def test_single_class_raises(self):
        with pytest.raises(ValueError, match="two classes"):
            svm_fit(np.ones((4, 2)), ["true"] * 4)

    def test_zero_weights_tie_is_alphabetical(self):
        model = svm_fit(np.zeros((4, 2)), ["true", "false", "true", "false"],
                        epochs=0)
        assert svm_predict(model, np.zeros((1, 2))) == ["false"]


class TestNilePipeline:
    def test_beats_majority_on_synthetic(self):
        from rumourmtl.evaluation import compute_metrics

        spec = GeneratorSpec(events=3, threads_per_event=60, coupling=0.9,
                             nonrumour_fraction=0.0)
        corpus = generate_synthetic(spec, 31)
        threads = corpus.threads
        train, test = Corpus(threads[:120]), Corpus(threads[120:])
        gold = [t.veracity_label for t in test.threads]

        nile = nile_fit(train, epochs=40, seed=0)
        nile_f = compute_metrics(gold, nile_predict(nile, test), VERACITY_CLASSES).macro_f
        maj_f = compute_metrics(gold, majority_predict(majority_fit(train), test),
                                VERACITY_CLASSES).macro_f
        assert nile_f > maj_f

    def test_stance_source_override_used(self):
        corpus = generate_synthetic(
            GeneratorSpec(events=2, threads_per_event=20, nonrumour_fraction=0.0), 8)
        calls = []

        def source(thread):
            calls.append(thread.id)
            return lambda pid: "comment"

        model = nile_fit(corpus, epochs=2, stance_source=source)
        assert len(calls) == len(corpus)
        nile_predict(model, corpus)
        assert len(calls) == 2 * len(corpus)

    def test_unlabeled_threads_excluded_from_fit(self):
        labeled = thread_with_stances(["support"], text="claim one", source_id="a")
        unlabeled = Thread(source=Post.create(id="u", text="claim two"),
                           replies=(), event="ev", detection_label="non-rumour",
                           veracity_label=None)
        other = thread_with_stances([], text="claim three", veracity="false",
                                    source_id="b")
        model = nile_fit(Corpus((labeled, unlabeled, other)), epochs=2)
        preds = nile_predict(model, Corpus((labeled, unlabeled, other)))
        assert len(preds) == 3
        assert all(p in ("false", "true", "unverified") for p in preds)
