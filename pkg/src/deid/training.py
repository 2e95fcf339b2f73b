"""SGD training with dev-set model selection."""
from __future__ import annotations

import logging
import math

import numpy as np

from .checkpoint import Checkpoint
from .config import Config
from .corpus import Dataset
from .errors import TrainingDiverged
from .evaluation import token_prf
from .feature_crf import DEFAULT_TEMPLATES, train_baseline
from .model import RowGrad, Tagger

log = logging.getLogger(__name__)


def subsample(dataset: Dataset, fraction: float, rng: np.random.Generator) -> Dataset:
    """ceil(n * fraction) sequences chosen at random, kept in original order."""
    if fraction >= 1.0:
        return dataset
    m = max(1, math.ceil(len(dataset) * fraction - 1e-9))
    idx = sorted(rng.choice(len(dataset), size=m, replace=False).tolist())
    return Dataset([dataset.sequences[i] for i in idx], dataset.label_set)


def grad_norm(grads: dict) -> float:
    total = 0.0
    for g in grads.values():
        v = g.values if isinstance(g, RowGrad) else g
        total += float(np.sum(v * v))
    return math.sqrt(total)


def clip_scale(grads: dict, max_norm: float) -> float:
    norm = grad_norm(grads)
    if norm > max_norm:
        return max_norm / norm
    return 1.0


def sgd_update(params: dict, grads: dict, lr: float, scale: float = 1.0):
    step = lr * scale
    for name, g in grads.items():
        if isinstance(g, RowGrad):
            params[name][g.rows] -= step * g.values
        else:
            params[name] -= step * g


def _streams(seed: int):
    init, shuffle, drop, sub = np.random.SeedSequence(seed).spawn(4)
    return (np.random.Generator(np.random.PCG64(s)) for s in (init, shuffle, drop, sub))


def train(train_set: Dataset, dev_set: Dataset, config: Config, pretrained=None, log_fn=None) -> Checkpoint:
    """Train the neural tagger; returns the checkpoint with the best dev F1.

    ``log_fn`` receives ``(epoch, train_loss, dev_P, dev_R, dev_F1)`` after
    every epoch.
    """
    if len(train_set) == 0 or len(dev_set) == 0:
        raise ValueError("training and dev sets must be nonempty")
    init_rng, shuffle_rng, drop_rng, sub_rng = _streams(config.seed)
    data = subsample(train_set, config.train_fraction, sub_rng)
    model = Tagger.build(config, train_set.label_set, data, init_rng, pretrained)
    best = None
    best_f1, best_epoch, since = -1.0, 0, 0
    history = []
    for epoch in range(1, config.max_epochs + 1):
        total = 0.0
        for j in shuffle_rng.permutation(len(data)):
            seq = data.sequences[j]
            loss, grads = model.loss_and_grad(seq, drop_rng)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss on sequence {seq.note_id!r} in epoch {epoch}")
            sgd_update(model.params, grads, config.learning_rate, clip_scale(grads, config.clip_norm))
            total += loss
        rep = token_prf(dev_set, model.predict_dataset(dev_set))
        row = (epoch, total, rep.precision, rep.recall, rep.f1)
        history.append(row)
        if log_fn:
            log_fn(row)
        if rep.f1 > best_f1:
            best = {k: v.copy() for k, v in model.params.items()}
            best_f1, best_epoch, since = rep.f1, epoch, 0
        else:
            since += 1
            if since >= config.patience:
                break
    for k, v in best.items():
        model.params[k][...] = v
    return Checkpoint("ann", model, config, train_set.label_set, best_f1, best_epoch, history)


def train_crf(train_set: Dataset, dev_set: Dataset, config: Config, templates=DEFAULT_TEMPLATES,
              gazetteers=None, log_fn=None) -> Checkpoint:
    _, _, _, sub_rng = _streams(config.seed)
    data = subsample(train_set, config.train_fraction, sub_rng)
    model, history = train_baseline(data, dev_set, templates, gazetteers, config, log_fn)
    return Checkpoint("crf", model, config, train_set.label_set, model.best_dev_f1, model.epoch, history)


def format_log_row(row) -> str:
    epoch, loss, p, r, f = row
    return f"{epoch}\t{loss:.6f}\t{p:.6f}\t{r:.6f}\t{f:.6f}"


def sweep(train_set: Dataset, dev_set: Dataset, test_set: Dataset, config: Config,
          fractions=(0.125, 0.25, 0.5, 1.0), model: str = "ann", pretrained=None,
          templates=DEFAULT_TEMPLATES, gazetteers=None, log_fn=None):
    """Train once per training-set fraction and score each on ``test_set``.

    Returns ``(rows, checkpoints)``; rows are
    ``(fraction, n_train_sequences, P, R, F1)`` in the order given.
    """
    rows, ckpts = [], []
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise ValueError(f"fraction {f} outside (0, 1]")
        cfg = config.replace(train_fraction=float(f))
        if model == "ann":
            ck = train(train_set, dev_set, cfg, pretrained, log_fn)
        elif model == "crf":
            ck = train_crf(train_set, dev_set, cfg, templates, gazetteers, log_fn)
        else:
            raise ValueError(f"model must be ann or crf, not {model!r}")
        rep = token_prf(test_set, ck.predict_dataset(test_set))
        n_used = len(train_set) if f >= 1.0 else max(1, math.ceil(len(train_set) * f - 1e-9))
        rows.append((float(f), n_used, rep.precision, rep.recall, rep.f1))
        ckpts.append(ck)
    return rows, ckpts


def count_inversions(values) -> int:
    """Adjacent decreases in a sequence that should trend upward."""
    return sum(1 for a, b in zip(values, values[1:]) if b < a)


def format_sweep_table(rows) -> str:
    lines = ["fraction\tsequences\tprecision\trecall\tf1"]
    lines += [f"{f!r}\t{n}\t{p:.6f}\t{r:.6f}\t{f1:.6f}" for f, n, p, r, f1 in rows]
    return "\n".join(lines) + "\n"
