"""Training loops, negative sampling, and evaluation drivers.

Sentiment training consumes one (item, label) example per step slot;
retrieval training expands every query into a matched pair and one
sampled mismatch. Both share minibatched Adam on a mean binary
cross-entropy, per-epoch validation, patience-based early stopping, and
best-validation weight restoration.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import (ContractError, TrainingDivergenceError, ValidationError,
                     SamplingError)
from .metrics import metrics_retrieval, metrics_sentiment, rank_of_truth
from .optim import Adam

TASKS = ("sentiment", "retrieval")


def sample_negative(rng, count: int, true_index: int) -> int:
    """Uniform index over [0, count) excluding true_index."""
    if count <= 1:
        raise SamplingError(
            "cannot draw a mismatch from %d candidate(s)" % count)
    if not (0 <= true_index < count):
        raise SamplingError("true index %d outside 0..%d"
                            % (true_index, count - 1))
    j = int(rng.integers(0, count - 1))
    return j + 1 if j >= true_index else j


@dataclass
class TrainResult:
    log: list = field(default_factory=list)
    best_epoch: int = -1
    best_val: float = float("inf")
    epochs_run: int = 0


def _check_labels(dataset, ids):
    for item_id in ids:
        if dataset.label(item_id) is None:
            raise ValidationError("item %s has no label" % item_id)


def _epoch_pairs(task, train_ids, rng):
    """Shuffled (query, candidate, target) triples for one epoch."""
    order = [train_ids[i] for i in rng.permutation(len(train_ids))]
    if task == "sentiment":
        return [(q, q, None) for q in order]
    pairs = []
    for q in order:
        true_idx = train_ids.index(q)
        neg = train_ids[sample_negative(rng, len(train_ids), true_idx)]
        pairs.append((q, q, 1))
        pairs.append((q, neg, 0))
    shuf = rng.permutation(len(pairs))
    return [pairs[i] for i in shuf]


def _pair_input(dataset, task, pair):
    q, c, target = pair
    if task == "sentiment":
        inp = dataset.model_input(q)
        return inp, float(inp.label)
    return dataset.retrieval_input(q, c), float(target)


def _mean_bce(model, dataset, task, pairs, mode):
    probs, targets = [], []
    for pair in pairs:
        inp, target = _pair_input(dataset, task, pair)
        probs.append(model.forward(inp, mode))
        targets.append(target)
    loss = ad.bce_loss(np.asarray(targets), ad.stack_scalars(probs))
    return loss, len(pairs)


def train(model, dataset, task="sentiment", epochs=None, batch=None, lr=None,
          lr_decay=None, patience=None, seed=None, log_path=None) -> TrainResult:
    if task not in TASKS:
        raise ContractError("unknown task %r" % task)
    cfg = model.cfg
    epochs = cfg.epochs if epochs is None else epochs
    batch = cfg.batch if batch is None else batch
    lr = cfg.lr if lr is None else lr
    lr_decay = cfg.lr_decay if lr_decay is None else lr_decay
    patience = cfg.patience if patience is None else patience
    seed = cfg.seed if seed is None else seed
    if epochs < 1 or batch < 1:
        raise ValidationError("epochs and batch size must be positive")

    train_ids = dataset.ids("train")
    val_ids = dataset.ids("val")
    if not train_ids:
        raise ValidationError("no items in the train split")
    if not val_ids:
        raise ValidationError("no items in the val split")
    if task == "sentiment":
        _check_labels(dataset, train_ids + val_ids)
    elif model.modalities != "tav":
        raise ContractError("retrieval needs the full three-modality model")

    rng = np.random.default_rng(seed)
    # validation pairs are fixed up front so val losses compare across epochs
    if task == "sentiment":
        val_pairs = [(q, q, None) for q in val_ids]
    else:
        vrng = np.random.default_rng(seed + 1)
        val_pairs = []
        for idx, q in enumerate(val_ids):
            neg = val_ids[sample_negative(vrng, len(val_ids), idx)]
            val_pairs.extend([(q, q, 1), (q, neg, 0)])

    opt = Adam(model.pset.tensors(), lr=lr)
    result = TrainResult()
    best_snap = model.snapshot()
    bad_epochs = 0
    for epoch in range(epochs):
        pairs = _epoch_pairs(task, train_ids, rng)
        loss_sum, seen = 0.0, 0
        for step, start in enumerate(range(0, len(pairs), batch)):
            chunk = pairs[start:start + batch]
            with ad.Tape():
                loss, n = _mean_bce(model, dataset, task, chunk, "train")
                value = float(loss.data)
                if not np.isfinite(value):
                    raise TrainingDivergenceError(
                        "loss became non-finite", epoch=epoch, step=step)
                ad.backward(loss)
            opt.step()
            opt.zero_grad()
            loss_sum += value * n
            seen += n
        val_loss, _ = _mean_bce(model, dataset, task, val_pairs, "eval")
        val_value = float(val_loss.data)
        if not np.isfinite(val_value):
            raise TrainingDivergenceError(
                "validation loss became non-finite", epoch=epoch, step=-1)
        record = {"epoch": epoch, "train_loss": round(loss_sum / seen, 6),
                  "val_loss": round(val_value, 6)}
        result.log.append(record)
        result.epochs_run = epoch + 1
        opt.state.lr *= lr_decay
        if val_value < result.best_val - 1e-9:
            result.best_val = val_value
            result.best_epoch = epoch
            best_snap = model.snapshot()
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= patience:
                break
    model.restore(best_snap)
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            for record in result.log:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
    return result


def eval_sentiment(model, dataset, split="test") -> dict:
    ids = dataset.ids(split)
    if not ids:
        raise ValidationError("no items in split %r" % split)
    _check_labels(dataset, ids)
    labels = np.array([dataset.label(i) for i in ids], dtype=np.float64)
    scores = np.array([model.score(dataset.model_input(i)) for i in ids])
    report = metrics_sentiment(labels, scores)
    report["count"] = len(ids)
    report["split"] = split
    return report


def eval_retrieval(model, dataset, query_split="all"):
    """Rank every candidate for each query; returns (report, ranks)."""
    if model.modalities != "tav":
        raise ContractError("retrieval needs the full three-modality model")
    queries = dataset.ids(query_split)
    candidates = dataset.ids(None)
    if not queries:
        raise ValidationError("no items in split %r" % query_split)
    cand_pos = {c: i for i, c in enumerate(candidates)}
    a_feats = {c: model.audio.encode(dataset.spectrogram(c), "eval")
               for c in candidates}
    v_feats = {q: model.image.encode(dataset.image(q), "eval")
               for q in queries}
    ranks = []
    for q in queries:
        scores = np.empty(len(candidates))
        for j, c in enumerate(candidates):
            t_feat = model.text.encode(dataset.mixed_text(q, c))
            prob = model.forward_from_features(
                {"t": t_feat, "a": a_feats[c], "v": v_feats[q]})
            scores[j] = float(prob.data)
        ranks.append(rank_of_truth(scores, cand_pos[q]))
    ranks = np.asarray(ranks)
    report = metrics_retrieval(ranks)
    report["count"] = len(queries)
    report["query_split"] = query_split
    return report, ranks
