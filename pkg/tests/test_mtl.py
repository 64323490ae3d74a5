import json
import math

import numpy as np
import pytest

from rumourmtl.corpus import GeneratorSpec, generate_synthetic
from rumourmtl.mtl import (
    HyperParams,
    MTLModel,
    TrainingInstance,
    _majority_vote,
    branch_accuracy,
    build_instances,
    build_model,
    check_gradients,
    dump_predictions,
    instance_outputs,
    joint_loss,
    predict_thread,
    train,
)
from rumourmtl.text import hash_embeddings

MINI = HyperParams(num_dense_layers=1, num_lstm_layers=1, dense_width=6,
                   lstm_width=5, dropout=0.0, epochs=3, learning_rate=1e-2)
DIM = 4


def make_instance(rng, length=3, steps=3, stance=True, detection=0, veracity=1):
    mask = np.zeros(steps, dtype=bool)
    mask[:length] = True
    x = np.zeros((steps, DIM))
    x[:length] = rng.standard_normal((length, DIM))
    return TrainingInstance(
        x=x, mask=mask, true_length=length,
        stance_labels=rng.integers(0, 4, size=length) if stance else None,
        detection_label=detection, veracity_label=veracity,
        thread_id="t", event="e")


class TestBuildModel:
    def test_single_task_one_head(self):
        model = build_model(MINI, ("veracity",), DIM, 0)
        heads = {name.split("/")[0] for name in model.params if not name.startswith("lstm")}
        assert heads == {"veracity"}

    def test_three_heads_share_lstm(self):
        model = build_model(MINI, ("veracity", "stance", "detection"), DIM, 0)
        rng = np.random.default_rng(0)
        inst = make_instance(rng)
        before = instance_outputs(model, inst)
        model.params["lstm0/Wx"][0, 0] += 0.5
        after = instance_outputs(model, inst)
        assert not np.allclose(before["veracity"], after["veracity"])
        assert not np.allclose(before["detection"], after["detection"])
        assert not np.allclose(before["stance"][:inst.true_length],
                               after["stance"][:inst.true_length])

    def test_two_lstm_layers_same_output_shape(self):
        hp = HyperParams(num_lstm_layers=2, num_dense_layers=1, dense_width=6,
                         lstm_width=5, dropout=0.0)
        model = build_model(hp, ("veracity",), DIM, 0)
        inst = make_instance(np.random.default_rng(1))
        out = instance_outputs(model, inst)
        assert out["veracity"].shape == (3,)

    def test_invalid_task_set(self):
        with pytest.raises(ValueError, match="veracity is required"):
            build_model(MINI, ("stance",), DIM, 0)

    def test_invalid_hp(self):
        with pytest.raises(ValueError):
            build_model(HyperParams(dropout=1.5), ("veracity",), DIM, 0)

    def test_strict_validation_enforces_search_space(self):
        with pytest.raises(ValueError, match="outside the search space"):
            MINI.validate(strict=True)
        HyperParams().validate(strict=True)

    def test_seed_deterministic_init(self):
        a = build_model(MINI, ("veracity", "stance"), DIM, 7)
        b = build_model(MINI, ("veracity", "stance"), DIM, 7)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name], b.params[name])


class TestJointLoss:
    def test_veracity_only_instance(self):
        rng = np.random.default_rng(2)
        model = build_model(MINI, ("veracity", "stance", "detection"), DIM, 3)
        inst = make_instance(rng, stance=False, detection=None, veracity=2)
        outputs = instance_outputs(model, inst)
        expected = -math.log(outputs["veracity"][2])
        assert joint_loss(outputs, inst) == pytest.approx(expected, abs=1e-15)

    def test_hand_computed_example(self):
        outputs = {"veracity": np.array([0.25, 0.75]),
                   "detection": np.array([0.5, 0.5])}
        inst = TrainingInstance(
            x=np.zeros((1, DIM)), mask=np.ones(1, dtype=bool), true_length=1,
            stance_labels=None, detection_label=0, veracity_label=1,
            thread_id="t", event="e")
        loss = joint_loss(outputs, inst)
        assert loss == pytest.approx(-math.log(0.75) - math.log(0.5), abs=1e-12)
        assert loss == pytest.approx(0.9808, abs=5e-4)

    def test_all_correct_near_zero(self):
        outputs = {"veracity": np.array([0.0, 1.0, 0.0]),
                   "detection": np.array([1.0, 0.0]),
                   "stance": np.array([[1.0, 0.0, 0.0, 0.0]])}
        inst = TrainingInstance(
            x=np.zeros((1, DIM)), mask=np.ones(1, dtype=bool), true_length=1,
            stance_labels=np.array([0]), detection_label=0, veracity_label=1,
            thread_id="t", event="e")
        assert joint_loss(outputs, inst) < 1e-10

    def test_stance_averaged_over_steps(self):
        outputs = {"stance": np.array([[0.5, 0.5, 0.0, 0.0],
                                       [0.25, 0.75, 0.0, 0.0]])}
        inst = TrainingInstance(
            x=np.zeros((2, DIM)), mask=np.ones(2, dtype=bool), true_length=2,
            stance_labels=np.array([0, 1]), detection_label=None,
            veracity_label=None, thread_id="t", event="e")
        expected = (-math.log(0.5) - math.log(0.75)) / 2
        assert joint_loss(outputs, inst) == pytest.approx(expected, abs=1e-12)


class TestMaskedLossExactness:
    def test_unlabeled_instances_add_exactly_zero_stance_loss(self):
        rng = np.random.default_rng(4)
        model = build_model(MINI, ("veracity", "stance", "detection"), DIM, 5)

        def summed_stance_loss(instances):
            total = 0.0
            for inst in instances:
                outputs = instance_outputs(model, inst)
                total += joint_loss({"stance": outputs["stance"]}, inst)
            return total

        base = [make_instance(rng) for _ in range(4)]
        extra = [make_instance(rng, stance=False) for _ in range(6)]
        assert summed_stance_loss(base + extra) == summed_stance_loss(base)

    def test_mtl3_equals_single_task_on_veracity_only_instance(self):
        rng = np.random.default_rng(5)
        single = build_model(MINI, ("veracity",), DIM, 11)
        mtl3 = build_model(MINI, ("veracity", "stance", "detection"), DIM, 11)
        # identical init streams: shared LSTM and veracity head coincide
        for name in single.params:
            np.testing.assert_array_equal(single.params[name], mtl3.params[name])
        inst = make_instance(rng, stance=False, detection=None)
        single_loss = joint_loss(instance_outputs(single, inst), inst)
        mtl3_loss = joint_loss(instance_outputs(mtl3, inst), inst)
        assert abs(single_loss - mtl3_loss) < 1e-12


class TestHardSharing:
    def test_stance_only_step_moves_shared_but_not_veracity_head(self):
        rng = np.random.default_rng(6)
        model = build_model(MINI, ("veracity", "stance"), DIM, 13)
        probe = make_instance(rng)
        before = instance_outputs(model, probe)["veracity"].copy()
        stance_only = [make_instance(rng, detection=None, veracity=None)
                       for _ in range(3)]
        _, grads, _ = model.loss_and_grads(stance_only, include_l2=False)
        for name, g in grads.items():
            if name.startswith("veracity/"):
                np.testing.assert_array_equal(g, 0.0)
        assert any(np.any(grads[n] != 0.0) for n in grads if n.startswith("lstm"))
        for name in model.params:
            model.params[name] -= 0.05 * grads[name]
        after = instance_outputs(model, probe)["veracity"]
        assert not np.allclose(before, after)


class TestTraining:
    def corpus_instances(self, seed=0):
        corpus = generate_synthetic(GeneratorSpec(events=2, threads_per_event=8), seed)
        table = hash_embeddings(DIM, 0)
        return build_instances(corpus, table)

    def test_loss_decreases(self):
        instances = self.corpus_instances()
        hp = HyperParams(num_dense_layers=1, num_lstm_layers=1, dense_width=8,
                         lstm_width=8, dropout=0.0, epochs=15, learning_rate=5e-3)
        model = MTLModel(hp, ("veracity", "stance", "detection"), DIM, 1)
        history = train(model, instances, 1)
        assert history[-1] < history[0]

    def test_identical_seed_identical_parameters(self):
        instances = self.corpus_instances()
        hp = HyperParams(num_dense_layers=1, num_lstm_layers=1, dense_width=6,
                         lstm_width=5, dropout=0.5, epochs=2)
        runs = []
        for _ in range(2):
            model = MTLModel(hp, ("veracity", "stance"), DIM, 9)
            train(model, instances, 9)
            runs.append(model.params)
        for name in runs[0]:
            np.testing.assert_array_equal(runs[0][name], runs[1][name])

    def test_zero_dropout_bitwise_identical_loss_trajectory(self):
        instances = self.corpus_instances()
        hp = HyperParams(num_dense_layers=1, num_lstm_layers=1, dense_width=6,
                         lstm_width=5, dropout=0.0, epochs=3)
        histories = []
        for _ in range(2):
            model = MTLModel(hp, ("veracity", "stance", "detection"), DIM, 2)
            histories.append(train(model, instances, 2))
        assert histories[0] == histories[1]

    def test_zero_epochs_keeps_initialization(self):
        instances = self.corpus_instances()
        model = MTLModel(MINI, ("veracity",), DIM, 3)
        init = {name: p.copy() for name, p in model.params.items()}
        history = train(model, instances, 3, epochs=0)
        assert history == []
        for name in init:
            np.testing.assert_array_equal(model.params[name], init[name])

    def test_requires_veracity_label(self):
        rng = np.random.default_rng(7)
        instances = [make_instance(rng, veracity=None, detection=None)]
        model = MTLModel(MINI, ("veracity", "stance"), DIM, 0)
        with pytest.raises(ValueError, match="veracity-labeled"):
            train(model, instances, 0)

    def test_single_task_and_stripped_mtl3_share_veracity_trajectory(self):
        instances = self.corpus_instances()
        stripped = [TrainingInstance(
            x=i.x, mask=i.mask, true_length=i.true_length, stance_labels=None,
            detection_label=None, veracity_label=i.veracity_label,
            thread_id=i.thread_id, event=i.event) for i in instances]
        hp = HyperParams(num_dense_layers=1, num_lstm_layers=1, dense_width=6,
                         lstm_width=5, dropout=0.0, epochs=3, l2=0.0)
        single = MTLModel(hp, ("veracity",), DIM, 21)
        mtl3 = MTLModel(hp, ("veracity", "stance", "detection"), DIM, 21)
        h1 = train(single, stripped, 21)
        h2 = train(mtl3, stripped, 21)
        assert h1 == h2
        for name in single.params:
            np.testing.assert_array_equal(single.params[name], mtl3.params[name])


class TestMajorityVote:
    def probs(self, rows):
        return np.array(rows)

    def test_strict_majority(self):
        classes = ("false", "true", "unverified")
        p = self.probs([[0.1, 0.8, 0.1], [0.2, 0.7, 0.1], [0.9, 0.05, 0.05]])
        assert _majority_vote(p, classes)[0] == "true"

    def test_single_branch(self):
        classes = ("false", "true", "unverified")
        assert _majority_vote(self.probs([[0.2, 0.1, 0.7]]), classes)[0] == "unverified"

    def test_tie_break_by_summed_probability(self):
        classes = ("false", "true", "unverified")
        p = self.probs([[0.1, 0.7, 0.2], [0.6, 0.3, 0.1]])  # votes true, false
        # summed: false 0.7, true 1.0 -> true wins
        assert _majority_vote(p, classes)[0] == "true"

    def test_tie_break_alphabetical_last(self):
        classes = ("false", "true", "unverified")
        p = self.probs([[0.6, 0.4, 0.0], [0.4, 0.6, 0.0]])  # equal counts and sums
        assert _majority_vote(p, classes)[0] == "false"

    def test_permutation_invariance(self):
        classes = ("false", "true", "unverified")
        rng = np.random.default_rng(8)
        for _ in range(200):
            p = rng.dirichlet(np.ones(3), size=5)
            base = _majority_vote(p, classes)[0]
            perm = rng.permutation(5)
            assert _majority_vote(p[perm], classes)[0] == base


class TestPredictThread:
    def test_prediction_covers_all_posts(self):
        corpus = generate_synthetic(GeneratorSpec(events=1, threads_per_event=3), 4)
        thread = corpus.threads[0]
        table = hash_embeddings(DIM, 0)
        model = build_model(MINI, ("veracity", "stance", "detection"), DIM, 1)
        pred = predict_thread(model, thread, table)
        assert pred.veracity in ("false", "true", "unverified")
        assert pred.detection in ("non-rumour", "rumour")
        assert {pid for pid, _ in pred.stance} == {p.id for p in thread.posts}

    def test_dump_format(self, tmp_path):
        corpus = generate_synthetic(GeneratorSpec(events=1, threads_per_event=2), 4)
        table = hash_embeddings(DIM, 0)
        model = build_model(MINI, ("veracity",), DIM, 1)
        preds = [predict_thread(model, t, table) for t in corpus.threads]
        path = tmp_path / "preds.ndjson"
        dump_predictions(preds, path, model_name="single")
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        obj = json.loads(lines[0])
        assert set(obj) == {"thread", "event", "veracity", "detection", "stance", "model"}
        assert set(obj["veracity"]) == {"pred", "probs"}
        assert obj["detection"] is None and obj["stance"] is None


class TestInstances:
    def test_thread_labels_replicated_to_branches(self):
        corpus = generate_synthetic(GeneratorSpec(events=1, threads_per_event=4), 6)
        table = hash_embeddings(DIM, 0)
        instances = build_instances(corpus, table)
        by_thread = {}
        for inst in instances:
            by_thread.setdefault(inst.thread_id, []).append(inst)
        for thread in corpus.threads:
            insts = by_thread[thread.id]
            for inst in insts:
                if thread.veracity_label is None:
                    assert inst.veracity_label is None
                else:
                    assert inst.veracity_label is not None
                assert inst.detection_label is not None

    def test_stance_alignment(self):
        corpus = generate_synthetic(GeneratorSpec(events=1, threads_per_event=4), 6)
        instances = build_instances(corpus, hash_embeddings(DIM, 0))
        for inst in instances:
            if inst.stance_labels is not None:
                assert len(inst.stance_labels) == inst.true_length


class TestGradientCheck:
    def test_miniature_mtl3_passes(self):
        hp = HyperParams(num_dense_layers=2, num_lstm_layers=1, dense_width=4,
                         lstm_width=4, dropout=0.5)
        report = check_gradients(hp, ("veracity", "stance", "detection"), 3, seed=0)
        assert max(report.values()) < 1e-4

    def test_with_dropout_masks_replayed(self):
        hp = HyperParams(num_dense_layers=1, num_lstm_layers=2, dense_width=4,
                         lstm_width=4, dropout=0.5)
        report = check_gradients(hp, ("veracity", "stance"), 3, seed=1,
                                 with_dropout=True)
        assert max(report.values()) < 1e-4

    def test_unused_head_gets_only_l2_gradient(self):
        rng = np.random.default_rng(9)
        model = build_model(MINI, ("veracity", "stance", "detection"), DIM, 2)
        inst = make_instance(rng, stance=False, detection=None)
        _, grads, _ = model.loss_and_grads([inst], include_l2=False)
        for name, g in grads.items():
            if name.startswith(("stance/", "detection/")):
                np.testing.assert_array_equal(g, 0.0)


class TestCheckpointRoundTrip:
    def test_save_load(self, tmp_path):
        model = build_model(MINI, ("veracity", "stance"), DIM, 17)
        path = tmp_path / "m.json"
        model.save(path)
        loaded = MTLModel.load(path)
        assert loaded.tasks == model.tasks
        assert loaded.hp == model.hp
        for name in model.params:
            np.testing.assert_array_equal(loaded.params[name], model.params[name])

    def test_branch_accuracy_runs(self):
        instances = [make_instance(np.random.default_rng(10)) for _ in range(3)]
        model = build_model(MINI, ("veracity", "stance", "detection"), DIM, 0)
        acc = branch_accuracy(model, instances)
        assert set(acc) == {"veracity", "stance", "detection"}
        assert all(0.0 <= v <= 1.0 for v in acc.values())
