"""Shared-LSTM multi-task models over branch instances.

One or two shared LSTM layers feed task-specific dense-ReLU stacks with
softmax heads (hard parameter sharing). Stance is predicted per step,
detection and veracity from the final valid step. The joint loss sums the
active tasks' cross-entropies; instances lacking a task's label contribute
exactly zero to that task's term. Thread-level answers come from majority
voting over branch predictions.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from rumourmtl import neural
from rumourmtl.corpus import (
    DEFAULT_MAX_BRANCH_LEN,
    DETECTION_CLASSES,
    STANCE_CLASSES,
    VERACITY_CLASSES,
    Corpus,
    Thread,
    decompose_branches,
)
from rumourmtl.neural import Params
from rumourmtl.text import EmbeddingTable, embed_tweet, pad_and_mask, preprocess

TASK_CLASSES = {
    "stance": STANCE_CLASSES,
    "detection": DETECTION_CLASSES,
    "veracity": VERACITY_CLASSES,
}
#: stance is annotated per tweet; detection/veracity per thread.
PER_STEP_TASKS = frozenset({"stance"})
ALL_TASKS = ("veracity", "stance", "detection")
VALID_TASK_SETS = (
    frozenset({"veracity"}),
    frozenset({"veracity", "stance"}),
    frozenset({"veracity", "detection"}),
    frozenset({"veracity", "stance", "detection"}),
)

# Paper search-space value sets; enforced only in strict mode so miniature
# models remain possible for testing.
DENSE_WIDTHS = (300, 400, 500, 600)
LSTM_WIDTHS = (100, 200, 300)
DENSE_DEPTHS = (1, 2, 3, 4)
LSTM_DEPTHS = (1, 2)
L2_STRENGTHS = (1e-4, 1e-3)


def derive_rng(seed: int, name: str) -> np.random.Generator:
    """Named RNG stream derived from a single global seed."""
    digest = hashlib.blake2b(name.encode(), digest_size=8).digest()
    return np.random.default_rng(np.random.SeedSequence([seed, int.from_bytes(digest, "big")]))


@dataclass(frozen=True)
class HyperParams:
    num_dense_layers: int = 2
    num_lstm_layers: int = 1
    dense_width: int = 300
    lstm_width: int = 100
    l2: float = 1e-4
    batch_size: int = 32
    epochs: int = 50
    dropout: float = 0.5
    learning_rate: float = 1e-3

    def validate(self, strict: bool = False) -> None:
        if self.num_dense_layers < 1 or self.num_lstm_layers < 1:
            raise ValueError("layer counts must be positive")
        if self.dense_width < 1 or self.lstm_width < 1:
            raise ValueError("layer widths must be positive")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.l2 < 0 or self.learning_rate <= 0:
            raise ValueError("l2 must be >= 0 and learning_rate > 0")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if strict:
            checks = [
                (self.num_dense_layers, DENSE_DEPTHS, "num_dense_layers"),
                (self.num_lstm_layers, LSTM_DEPTHS, "num_lstm_layers"),
                (self.dense_width, DENSE_WIDTHS, "dense_width"),
                (self.lstm_width, LSTM_WIDTHS, "lstm_width"),
                (self.l2, L2_STRENGTHS, "l2"),
            ]
            for value, allowed, name in checks:
                if value not in allowed:
                    raise ValueError(f"{name}={value} outside the search space {allowed}")


@dataclass(frozen=True)
class TrainingInstance:
    """One branch as a model input, with whatever labels the thread carries.

    ``stance_labels`` has length ``true_length`` with -1 marking steps whose
    post has no stance annotation; it is None when no step is annotated.
    """

    x: np.ndarray       # (T, dim)
    mask: np.ndarray    # (T,) bool
    true_length: int
    stance_labels: Optional[np.ndarray]
    detection_label: Optional[int]
    veracity_label: Optional[int]
    thread_id: str
    event: str
    post_ids: tuple[str, ...] = ()


def _normalize_tasks(tasks: Iterable[str]) -> tuple[str, ...]:
    task_set = frozenset(tasks)
    if task_set not in VALID_TASK_SETS:
        raise ValueError(
            f"invalid task set {sorted(task_set)}; veracity is required and only "
            f"stance/detection may be added")
    return tuple(t for t in ALL_TASKS if t in task_set)


class MTLModel:
    """Shared LSTM stack plus one dense-ReLU/softmax head per task."""

    def __init__(self, hp: HyperParams, tasks: Iterable[str], input_dim: int, seed: int):
        hp.validate()
        self.hp = hp
        self.tasks = _normalize_tasks(tasks)
        self.input_dim = input_dim
        self.seed = seed
        self.params: Params = {}
        rng = derive_rng(seed, "init")
        in_dim = input_dim
        for l in range(hp.num_lstm_layers):
            layer = neural.init_lstm_layer(rng, in_dim, hp.lstm_width)
            for key, value in layer.items():
                self.params[f"lstm{l}/{key}"] = value
            in_dim = hp.lstm_width
        for task in self.tasks:
            width_in = hp.lstm_width
            for i in range(hp.num_dense_layers):
                layer = neural.init_dense_layer(rng, width_in, hp.dense_width)
                for key, value in layer.items():
                    self.params[f"{task}/dense{i}/{key}"] = value
                width_in = hp.dense_width
            out = neural.init_dense_layer(rng, width_in, len(TASK_CLASSES[task]))
            for key, value in out.items():
                self.params[f"{task}/out/{key}"] = value

    # -- forward ---------------------------------------------------------

    def _layer(self, prefix: str) -> Params:
        plen = len(prefix) + 1
        return {k[plen:]: v for k, v in self.params.items() if k.startswith(prefix + "/")}

    def forward(self, x: np.ndarray, mask: np.ndarray, train: bool = False,
                dropout_rng: Optional[np.random.Generator] = None,
                dropout_masks: Optional[dict] = None) -> tuple[dict, dict]:
        """Run the full model on a batch (B, T, dim).

        Returns per-task outputs and the cache for ``backward``. During
        training, dropout masks are drawn from ``dropout_rng`` (or replayed
        from ``dropout_masks``) and recorded in the cache.
        """
        B, T, _ = x.shape
        cache: dict = {"x": x, "mask": mask, "lstm": []}
        inp = x
        for l in range(self.hp.num_lstm_layers):
            hs, layer_cache = neural.lstm_forward(self._layer(f"lstm{l}"), inp, mask)
            cache["lstm"].append(layer_cache)
            inp = hs
        H = inp
        lengths = mask.sum(axis=1).astype(int)
        last_idx = np.maximum(lengths - 1, 0)
        h_last = H[np.arange(B), last_idx]
        cache.update(H=H, lengths=lengths, last_idx=last_idx)
        p = self.hp.dropout if train else 0.0
        outputs: dict = {}
        cache["heads"] = {}
        for task in self.tasks:
            if task in PER_STEP_TASKS:
                rows_b, rows_t = np.nonzero(mask)
                feat = H[rows_b, rows_t]
            else:
                rows_b = rows_t = None
                feat = h_last
            dense_caches = []
            a = feat
            for i in range(self.hp.num_dense_layers):
                a, dc = neural.dense_forward(self._layer(f"{task}/dense{i}"), a)
                dense_caches.append(dc)
            replay = None if dropout_masks is None else dropout_masks.get(task)
            a_drop, dmask = neural.dropout_forward(a, p, rng=dropout_rng, mask=replay)
            logits = a_drop @ self.params[f"{task}/out/W"] + self.params[f"{task}/out/b"]
            probs = neural.softmax(logits, axis=-1)
            cache["heads"][task] = {
                "dense_caches": dense_caches, "dropout_mask": dmask,
                "a_drop": a_drop, "probs": probs, "rows": (rows_b, rows_t),
            }
            if task in PER_STEP_TASKS:
                full = np.zeros((B, T, probs.shape[-1]))
                full[rows_b, rows_t] = probs
                outputs[task] = full
            else:
                outputs[task] = probs
        return outputs, cache

    # -- loss ------------------------------------------------------------

    def _stance_step_weights(self, batch: Sequence[TrainingInstance]) -> np.ndarray:
        """Per-valid-row weights for the stance loss: labeled steps of an
        instance share weight 1/n_labeled; unlabeled rows weigh zero."""
        weights = []
        for inst in batch:
            if inst.stance_labels is None:
                weights.extend([0.0] * inst.true_length)
                continue
            labeled = int(np.sum(inst.stance_labels >= 0))
            w = 1.0 / labeled if labeled else 0.0
            weights.extend(w if lbl >= 0 else 0.0 for lbl in inst.stance_labels)
        return np.array(weights)

    def batch_data_loss(self, batch: Sequence[TrainingInstance], outputs: dict,
                        cache: dict) -> float:
        """Mean over the batch of the per-instance joint data loss."""
        B = len(batch)
        total = 0.0
        for b, inst in enumerate(batch):
            total += _instance_loss_from_outputs(
                {t: (outputs[t][b] if t in PER_STEP_TASKS else outputs[t][b])
                 for t in self.tasks}, inst, self.tasks)
        return total / B

    def batch_loss(self, batch: Sequence[TrainingInstance], train: bool = False,
                   dropout_masks: Optional[dict] = None, include_l2: bool = True) -> float:
        """Forward-only joint objective (used by the finite-difference oracle)."""
        x = np.stack([inst.x for inst in batch])
        mask = np.stack([inst.mask for inst in batch])
        outputs, cache = self.forward(x, mask, train=train, dropout_masks=dropout_masks)
        loss = self.batch_data_loss(batch, outputs, cache)
        if include_l2:
            loss += neural.l2_penalty(self.params, self.hp.l2)
        return loss

    def loss_and_grads(self, batch: Sequence[TrainingInstance], train: bool = False,
                       dropout_rng: Optional[np.random.Generator] = None,
                       dropout_masks: Optional[dict] = None,
                       include_l2: bool = True) -> tuple[float, Params, dict]:
        """Joint objective and its exact gradients for one mini-batch.

        The objective is the batch-mean data loss plus (optionally) the
        model-level L2 penalty. Returns (loss, grads, cache).
        """
        B = len(batch)
        x = np.stack([inst.x for inst in batch])
        mask = np.stack([inst.mask for inst in batch])
        outputs, cache = self.forward(x, mask, train=train, dropout_rng=dropout_rng,
                                      dropout_masks=dropout_masks)
        loss = self.batch_data_loss(batch, outputs, cache)

        H = cache["H"]
        dH = np.zeros_like(H)
        grads: Params = {name: np.zeros_like(p) for name, p in self.params.items()}
        for task in self.tasks:
            head = cache["heads"][task]
            probs = head["probs"]
            K = probs.shape[-1]
            dlogits = np.zeros_like(probs)
            if task in PER_STEP_TASKS:
                row_weights = self._stance_step_weights(batch) / B
                labels = np.concatenate([
                    inst.stance_labels if inst.stance_labels is not None
                    else -np.ones(inst.true_length, dtype=int)
                    for inst in batch])
                live = labels >= 0
                clipped = np.maximum(probs[np.arange(len(labels)), np.maximum(labels, 0)],
                                     neural.PROB_CLIP)
                # d/dlogits of -log p[gold] through softmax, zero where the
                # clip is active (loss is locally constant there).
                active = live & (probs[np.arange(len(labels)), np.maximum(labels, 0)]
                                 > neural.PROB_CLIP)
                onehot = np.zeros_like(probs)
                onehot[np.arange(len(labels))[active], labels[active]] = 1.0
                dlogits[active] = ((probs[active] - onehot[active])
                                   * row_weights[active, None])
                del clipped
            else:
                labels = np.array([
                    (inst.detection_label if task == "detection" else inst.veracity_label)
                    if (inst.detection_label if task == "detection" else inst.veracity_label)
                    is not None else -1
                    for inst in batch])
                live = labels >= 0
                gold_p = probs[np.arange(B), np.maximum(labels, 0)]
                active = live & (gold_p > neural.PROB_CLIP)
                onehot = np.zeros_like(probs)
                onehot[np.arange(B)[active], labels[active]] = 1.0
                dlogits[active] = (probs[active] - onehot[active]) / B
            d_a_drop = dlogits @ self.params[f"{task}/out/W"].T
            grads[f"{task}/out/W"] += head["a_drop"].T @ dlogits
            grads[f"{task}/out/b"] += dlogits.sum(axis=0)
            d_a = neural.dropout_backward(d_a_drop, head["dropout_mask"])
            for i in reversed(range(self.hp.num_dense_layers)):
                d_a, layer_grads = neural.dense_backward(
                    self._layer(f"{task}/dense{i}"), head["dense_caches"][i], d_a)
                for key, g in layer_grads.items():
                    grads[f"{task}/dense{i}/{key}"] += g
            rows_b, rows_t = head["rows"]
            if task in PER_STEP_TASKS:
                np.add.at(dH, (rows_b, rows_t), d_a)
            else:
                np.add.at(dH, (np.arange(B), cache["last_idx"]), d_a)
        d_up = dH
        for l in reversed(range(self.hp.num_lstm_layers)):
            d_up, layer_grads = neural.lstm_backward(
                self._layer(f"lstm{l}"), cache["lstm"][l], d_up)
            for key, g in layer_grads.items():
                grads[f"lstm{l}/{key}"] += g
        if include_l2:
            loss += neural.l2_penalty(self.params, self.hp.l2)
            neural.add_l2_grads(self.params, grads, self.hp.l2)
        return loss, grads, cache

    # -- persistence -----------------------------------------------------

    def save(self, path: str | Path) -> None:
        meta = {
            "hyperparams": {
                "num_dense_layers": self.hp.num_dense_layers,
                "num_lstm_layers": self.hp.num_lstm_layers,
                "dense_width": self.hp.dense_width,
                "lstm_width": self.hp.lstm_width,
                "l2": self.hp.l2,
                "batch_size": self.hp.batch_size,
                "epochs": self.hp.epochs,
                "dropout": self.hp.dropout,
                "learning_rate": self.hp.learning_rate,
            },
            "tasks": list(self.tasks),
            "input_dim": self.input_dim,
            "seed": self.seed,
        }
        neural.save_params(self.params, path, meta=meta)

    @classmethod
    def load(cls, path: str | Path) -> "MTLModel":
        params, meta = neural.load_params(path)
        hp = HyperParams(**meta["hyperparams"])
        model = cls(hp, meta["tasks"], meta["input_dim"], meta["seed"])
        for name in model.params:
            if name not in params:
                raise ValueError(f"checkpoint missing parameter block {name!r}")
            if params[name].shape != model.params[name].shape:
                raise ValueError(f"checkpoint shape mismatch in block {name!r}")
        model.params = params
        return model


def build_model(hp: HyperParams, tasks: Iterable[str], input_dim: int, seed: int) -> MTLModel:
    return MTLModel(hp, tasks, input_dim, seed)


# ---------------------------------------------------------------------------
# Joint loss (data term; L2 is a model-level addition during training)

def _instance_loss_from_outputs(outputs: dict, inst: TrainingInstance,
                                tasks: Sequence[str]) -> float:
    loss = 0.0
    if "veracity" in tasks and inst.veracity_label is not None:
        loss += neural.cross_entropy(outputs["veracity"], inst.veracity_label)
    if "detection" in tasks and inst.detection_label is not None:
        loss += neural.cross_entropy(outputs["detection"], inst.detection_label)
    if "stance" in tasks and inst.stance_labels is not None:
        labeled = [(t, int(lbl)) for t, lbl in enumerate(inst.stance_labels) if lbl >= 0]
        if labeled:
            step_losses = [neural.cross_entropy(outputs["stance"][t], lbl)
                           for t, lbl in labeled]
            loss += float(np.mean(step_losses))
    return loss


def joint_loss(outputs: dict, inst: TrainingInstance) -> float:
    """Summed masked loss for one instance given its forward outputs.

    ``outputs`` maps task name to probabilities: (K,) for detection and
    veracity, (T, K) rows for stance. Tasks whose label is absent
    contribute exactly zero.
    """
    return _instance_loss_from_outputs(outputs, inst, tuple(outputs))


def instance_outputs(model: MTLModel, inst: TrainingInstance) -> dict:
    """Eval-mode forward pass for a single instance."""
    outputs, _ = model.forward(inst.x[None], inst.mask[None], train=False)
    return {t: outputs[t][0] for t in model.tasks}


# ---------------------------------------------------------------------------
# Instance construction

def build_instances(corpus: Corpus, table: EmbeddingTable,
                    max_branch_len: int = DEFAULT_MAX_BRANCH_LEN,
                    pad_to: Optional[int] = None) -> list[TrainingInstance]:
    """Turn every branch of every thread into a training instance.

    Thread-level labels are replicated to each branch. All instances share
    one padded length (the longest surviving branch, or ``pad_to``).
    """
    per_thread = [(thread, decompose_branches(thread, max_len=max_branch_len))
                  for thread in corpus.threads]
    if not per_thread:
        return []
    longest = max((len(b) for _, branches in per_thread for b in branches), default=1)
    T = pad_to if pad_to is not None else longest
    instances = []
    for thread, branches in per_thread:
        posts = {p.id: p for p in thread.posts}
        det = (DETECTION_CLASSES.index(thread.detection_label)
               if thread.detection_label is not None else None)
        ver = (VERACITY_CLASSES.index(thread.veracity_label)
               if thread.veracity_label is not None else None)
        for branch in branches:
            vecs = [embed_tweet(preprocess(posts[pid].text), table)
                    for pid in branch.post_ids]
            tensor = pad_and_mask(vecs, T)
            stances = np.array([
                STANCE_CLASSES.index(posts[pid].stance_label)
                if posts[pid].stance_label is not None else -1
                for pid in branch.post_ids[:tensor.true_length]])
            instances.append(TrainingInstance(
                x=tensor.matrix,
                mask=tensor.mask,
                true_length=tensor.true_length,
                stance_labels=stances if np.any(stances >= 0) else None,
                detection_label=det,
                veracity_label=ver,
                thread_id=thread.id,
                event=thread.event,
                post_ids=branch.post_ids[:tensor.true_length],
            ))
    return instances


# ---------------------------------------------------------------------------
# Training

def train(model: MTLModel, instances: Sequence[TrainingInstance], seed: int,
          epochs: Optional[int] = None) -> list[float]:
    """Mini-batch training with the adaptive-moment optimizer.

    Shuffling, dropout and initialization all draw from named streams of
    the given seed, so identical (model, data, seed) reproduce identical
    parameters. Returns the per-epoch mean objective history.
    """
    if not any(inst.veracity_label is not None for inst in instances):
        raise ValueError("training needs at least one veracity-labeled instance")
    hp = model.hp
    n_epochs = hp.epochs if epochs is None else epochs
    rng_shuffle = derive_rng(seed, "shuffle")
    rng_dropout = derive_rng(seed, "dropout")
    state = neural.optimizer_init(model.params, lr=hp.learning_rate)
    history = []
    n = len(instances)
    for epoch in range(n_epochs):
        perm = rng_shuffle.permutation(n)
        epoch_losses = []
        for start in range(0, n, hp.batch_size):
            batch = [instances[i] for i in perm[start:start + hp.batch_size]]
            try:
                loss, grads, _ = model.loss_and_grads(
                    batch, train=True, dropout_rng=rng_dropout)
            except FloatingPointError as exc:
                raise FloatingPointError(
                    f"epoch {epoch}, batch {start // hp.batch_size}: {exc}") from None
            if not np.isfinite(loss):
                raise FloatingPointError(
                    f"non-finite loss at epoch {epoch}, batch {start // hp.batch_size}")
            neural.optimizer_step(model.params, grads, state)
            epoch_losses.append(loss)
        history.append(float(np.mean(epoch_losses)))
    return history


def branch_accuracy(model: MTLModel, instances: Sequence[TrainingInstance]) -> dict[str, float]:
    """Eval-mode accuracy per task over labeled branches (steps for stance)."""
    hits = {t: 0 for t in model.tasks}
    totals = {t: 0 for t in model.tasks}
    for start in range(0, len(instances), 256):
        batch = instances[start:start + 256]
        x = np.stack([inst.x for inst in batch])
        mask = np.stack([inst.mask for inst in batch])
        outputs, cache = model.forward(x, mask, train=False)
        for b, inst in enumerate(batch):
            if "veracity" in model.tasks and inst.veracity_label is not None:
                hits["veracity"] += int(np.argmax(outputs["veracity"][b]) == inst.veracity_label)
                totals["veracity"] += 1
            if "detection" in model.tasks and inst.detection_label is not None:
                hits["detection"] += int(np.argmax(outputs["detection"][b]) == inst.detection_label)
                totals["detection"] += 1
            if "stance" in model.tasks and inst.stance_labels is not None:
                for t, lbl in enumerate(inst.stance_labels):
                    if lbl >= 0:
                        hits["stance"] += int(np.argmax(outputs["stance"][b, t]) == lbl)
                        totals["stance"] += 1
    return {t: (hits[t] / totals[t] if totals[t] else float("nan")) for t in model.tasks}


# ---------------------------------------------------------------------------
# Thread-level prediction

@dataclass(frozen=True)
class ThreadPrediction:
    thread_id: str
    event: str
    veracity: str
    veracity_probs: np.ndarray
    detection: Optional[str]
    detection_probs: Optional[np.ndarray]
    stance: Optional[tuple[tuple[str, str], ...]]  # (post id, predicted stance)

    def to_json_obj(self) -> dict:
        obj = {
            "thread": self.thread_id,
            "event": self.event,
            "veracity": {"pred": self.veracity,
                         "probs": [float(p) for p in self.veracity_probs]},
            "detection": None,
            "stance": None,
        }
        if self.detection is not None:
            obj["detection"] = {"pred": self.detection,
                                "probs": [float(p) for p in self.detection_probs]}
        if self.stance is not None:
            obj["stance"] = [{"post": pid, "pred": s} for pid, s in self.stance]
        return obj


def _majority_vote(branch_probs: np.ndarray, classes: Sequence[str]) -> tuple[str, np.ndarray]:
    """Majority over branch argmaxes; ties break by summed class probability,
    then by class order (alphabetical for every task's class set)."""
    votes = np.argmax(branch_probs, axis=1)
    counts = np.bincount(votes, minlength=len(classes))
    top = counts.max()
    tied = np.nonzero(counts == top)[0]
    if len(tied) == 1:
        winner = int(tied[0])
    else:
        summed = branch_probs.sum(axis=0)
        best = summed[tied].max()
        winner = int(min(c for c in tied if summed[c] >= best - 1e-15))
    mean_probs = branch_probs.mean(axis=0)
    return classes[winner], mean_probs


def predict_thread(model: MTLModel, thread: Thread, table: EmbeddingTable,
                   max_branch_len: int = DEFAULT_MAX_BRANCH_LEN) -> ThreadPrediction:
    """Predict thread-level classes by majority vote over branches.

    Per-tweet stance comes from the first branch (in deterministic order)
    containing the tweet.
    """
    branches = decompose_branches(thread, max_len=max_branch_len)
    posts = {p.id: p for p in thread.posts}
    T = max(len(b) for b in branches)
    tensors = []
    for branch in branches:
        vecs = [embed_tweet(preprocess(posts[pid].text), table) for pid in branch.post_ids]
        tensors.append(pad_and_mask(vecs, T))
    x = np.stack([t.matrix for t in tensors])
    mask = np.stack([t.mask for t in tensors])
    outputs, _ = model.forward(x, mask, train=False)
    veracity, v_probs = _majority_vote(outputs["veracity"], VERACITY_CLASSES)
    detection = d_probs = None
    if "detection" in model.tasks:
        detection, d_probs = _majority_vote(outputs["detection"], DETECTION_CLASSES)
    stance = None
    if "stance" in model.tasks:
        assigned: dict[str, str] = {}
        for bi, branch in enumerate(branches):
            for t, pid in enumerate(branch.post_ids):
                if pid not in assigned:
                    assigned[pid] = STANCE_CLASSES[int(np.argmax(outputs["stance"][bi, t]))]
        stance = tuple(sorted(assigned.items()))
    return ThreadPrediction(
        thread_id=thread.id,
        event=thread.event,
        veracity=veracity,
        veracity_probs=v_probs,
        detection=detection,
        detection_probs=d_probs,
        stance=stance,
    )


def dump_predictions(predictions: Sequence[ThreadPrediction], path: str | Path,
                     model_name: Optional[str] = None) -> None:
    """Write newline-delimited JSON predictions."""
    lines = []
    for pred in predictions:
        obj = pred.to_json_obj()
        if model_name is not None:
            obj["model"] = model_name
        lines.append(json.dumps(obj, sort_keys=True))
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


# ---------------------------------------------------------------------------
# Gradient checking at miniature sizes

def check_gradients(hp: HyperParams, tasks: Iterable[str], input_dim: int, seed: int,
                    n_instances: int = 2, steps: int = 3, with_dropout: bool = False,
                    eps: float = 1e-5) -> dict[str, float]:
    """Finite-difference check of the full model's analytic gradients.

    Builds a miniature model, a couple of random labeled instances (one per
    task left unlabeled to exercise the masking), and compares against
    central differences. Dropout masks are drawn once and replayed into the
    finite-difference evaluations so both sides compute the same function.

    All parameters get a small random jitter first. Zero-initialized biases
    can leave ReLU pre-activations exactly at the kink, where central
    differences disagree with any subgradient choice.
    """
    model = MTLModel(hp, tasks, input_dim, seed)
    jitter_rng = derive_rng(seed, "gradcheck-jitter")
    for p in model.params.values():
        p += 0.05 * jitter_rng.standard_normal(p.shape)
    rng = derive_rng(seed, "gradcheck-data")
    batch = []
    for i in range(n_instances):
        length = int(rng.integers(1, steps + 1)) if i > 0 else steps
        mask = np.zeros(steps, dtype=bool)
        mask[:length] = True
        x = np.zeros((steps, input_dim))
        x[:length] = rng.standard_normal((length, input_dim))
        drop_task = i == n_instances - 1 and n_instances > 1
        batch.append(TrainingInstance(
            x=x, mask=mask, true_length=length,
            stance_labels=(None if drop_task else
                           rng.integers(0, len(STANCE_CLASSES), size=length)),
            detection_label=None if drop_task else int(rng.integers(0, 2)),
            veracity_label=int(rng.integers(0, 3)),
            thread_id=f"gc{i}", event="gc",
        ))
    dropout_masks: Optional[dict] = None
    if with_dropout and hp.dropout > 0:
        _, _, cache = model.loss_and_grads(batch, train=True,
                                           dropout_rng=derive_rng(seed, "gradcheck-drop"))
        dropout_masks = {t: cache["heads"][t]["dropout_mask"] for t in model.tasks}
    train_mode = dropout_masks is not None
    _, analytic, _ = model.loss_and_grads(batch, train=train_mode,
                                          dropout_masks=dropout_masks)

    def loss_fn(params: Params) -> float:
        model.params = params
        return model.batch_loss(batch, train=train_mode, dropout_masks=dropout_masks)

    return neural.grad_check(loss_fn, model.params, analytic, eps=eps)
