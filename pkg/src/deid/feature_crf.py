"""Hand-engineered feature CRF baseline.

Each token fires a set of string features drawn from a window of up to four
tokens on either side.  Emission scores are sums of per-feature label
weights; training and decoding reuse :mod:`deid.chain_crf`.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import chain_crf
from .config import Config, read_kv_file
from .corpus import Dataset, LabelSet, tokenize
from .errors import ParseError, TrainingDiverged
from .evaluation import token_prf
from .numerics import make_rng

log = logging.getLogger(__name__)

BOS, EOS = "<BOS>", "<EOS>"
MAX_OFFSET = 4
KINDS = ("identity", "ngram1", "ngram2", "ngram3", "shape", "prefix", "suffix", "gazetteer", "regex")
AFFIX_LENGTHS = (1, 2, 3, 4)
MAX_GAZETTEER_ENTRY = 3

# token-level classes; the tokenizer has already split on punctuation and
# letter/digit boundaries, so these only ever see one run of digits
REGEX_CLASSES = (
    ("year-like", re.compile(r"^(1[89]|2[01])\d\d$")),   # date
    ("phone-like", re.compile(r"^\d{3}$")),              # phone groups
    ("zip-like", re.compile(r"^\d{5}$")),                # zip codes
    ("id-like", re.compile(r"^\d{6,}$")),                # record/account numbers
)


@dataclass(frozen=True)
class FeatureTemplate:
    kind: str
    offsets: tuple[int, ...]

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown template kind {self.kind!r}")
        span = int(self.kind[-1]) - 1 if self.kind.startswith("ngram") else 0
        for o in self.offsets:
            if not (-MAX_OFFSET <= o and o + span <= MAX_OFFSET):
                raise ValueError(f"{self.kind} offset {o} leaves the +-{MAX_OFFSET} window")


DEFAULT_TEMPLATES = (
    FeatureTemplate("identity", (0,)),
    FeatureTemplate("ngram1", (-4, -3, -2, -1, 0, 1, 2, 3, 4)),
    FeatureTemplate("ngram2", (-2, -1, 0, 1)),
    FeatureTemplate("ngram3", (-2, -1, 0)),
    FeatureTemplate("shape", (-2, -1, 0, 1, 2)),
    FeatureTemplate("prefix", (0,)),
    FeatureTemplate("suffix", (0,)),
    FeatureTemplate("gazetteer", (-1, 0, 1)),
    FeatureTemplate("regex", (-1, 0, 1)),
)


def read_templates(path) -> tuple[FeatureTemplate, ...]:
    """``kind = o1,o2,...`` lines."""
    out = []
    for key, value in read_kv_file(path):
        try:
            offsets = tuple(int(v) for v in value.replace(" ", "").split(",") if v)
            out.append(FeatureTemplate(key, offsets))
        except ValueError as exc:
            raise ParseError(str(exc), path=path) from None
    return tuple(out)


def format_templates(templates) -> list[str]:
    return [f"{t.kind} = " + ",".join(str(o) for o in t.offsets) for t in templates]


def word_shape(token: str) -> str:
    out = []
    for ch in token:
        if ch.isdigit():
            out.append("d")
        elif ch.isupper():
            out.append("X")
        elif ch.isalpha():
            out.append("x")
        else:
            out.append(ch)
    return "".join(out)


def regex_classes(token: str) -> list[str]:
    return [name for name, pat in REGEX_CLASSES if pat.match(token)]


class Gazetteers:
    """Named lexicons matched case-insensitively on whole tokens."""

    def __init__(self, entries: dict[str, list[str]] | None = None):
        self.entries: dict[str, list[tuple[str, ...]]] = {}
        self._by_first: dict[str, list[tuple[str, tuple[str, ...]]]] = {}
        for name, lines in (entries or {}).items():
            self.add(name, lines)

    def add(self, name: str, lines):
        seqs = self.entries.setdefault(name, [])
        for line in lines:
            toks = tuple(t.text.lower() for t in tokenize(line))
            if not toks:
                continue
            if len(toks) > MAX_GAZETTEER_ENTRY:
                log.warning("gazetteer %s: entry %r longer than %d tokens skipped",
                            name, line, MAX_GAZETTEER_ENTRY)
                continue
            if toks not in seqs:
                seqs.append(toks)
                self._by_first.setdefault(toks[0], []).append((name, toks))

    @classmethod
    def read(cls, paths) -> "Gazetteers":
        gz = cls()
        for p in paths:
            p = Path(p)
            lines = [ln.strip() for ln in p.read_text(encoding="utf-8").splitlines()]
            gz.add(p.stem, [ln for ln in lines if ln and not ln.startswith("#")])
        return gz

    def names(self):
        return sorted(self.entries)

    def tag(self, words) -> list[set]:
        """Gazetteer names covering each position."""
        low = [w.lower() for w in words]
        out = [set() for _ in words]
        for s, w in enumerate(low):
            for name, toks in self._by_first.get(w, ()):
                L = len(toks)
                if tuple(low[s:s + L]) == toks:
                    for j in range(s, s + L):
                        out[j].add(name)
        return out

    def __len__(self):
        return sum(len(v) for v in self.entries.values())


def _slot(words, j):
    if j < 0:
        return BOS
    if j >= len(words):
        return EOS
    return words[j]


def sequence_features(words, templates=DEFAULT_TEMPLATES, gazetteers: Gazetteers | None = None) -> list[list[str]]:
    """Feature strings for every position of a token sequence."""
    words = [getattr(w, "text", w) for w in words]
    n = len(words)
    low = [w.lower() for w in words]
    gaz = gazetteers.tag(words) if gazetteers is not None and len(gazetteers) else [set()] * n
    feats = []
    for i in range(n):
        f = ["bias"]
        for t in templates:
            for o in t.offsets:
                j = i + o
                inside = 0 <= j < n
                key = f"{t.kind}[{o}]"
                if t.kind.startswith("ngram"):
                    size = int(t.kind[-1])
                    f.append(key + "=" + "|".join(_slot(low, j + q) for q in range(size)))
                elif not inside:
                    f.append(f"{key}={_slot(low, j)}")
                elif t.kind == "identity":
                    f.append(f"{key}={words[j]}")
                elif t.kind == "shape":
                    f.append(f"{key}={word_shape(words[j])}")
                elif t.kind in ("prefix", "suffix"):
                    w = low[j]
                    for L in AFFIX_LENGTHS:
                        if len(w) >= L:
                            part = w[:L] if t.kind == "prefix" else w[-L:]
                            f.append(f"{t.kind}{L}[{o}]={part}")
                elif t.kind == "gazetteer":
                    f.extend(f"{key}={name}" for name in sorted(gaz[j]))
                elif t.kind == "regex":
                    f.extend(f"{key}={name}" for name in regex_classes(words[j]))
        feats.append(f)
    return feats


def extract_features(words, i: int, templates=DEFAULT_TEMPLATES, gazetteers: Gazetteers | None = None) -> set[str]:
    words = [getattr(w, "text", w) for w in words]
    if not 0 <= i < len(words):
        raise IndexError(f"position {i} outside sequence of length {len(words)}")
    return set(sequence_features(words, templates, gazetteers)[i])


class FeatureCRF:
    def __init__(self, label_set: LabelSet, templates, gazetteers: Gazetteers,
                 features: list[str], W: np.ndarray, T: np.ndarray, config: Config | None = None):
        if len(label_set) == 0:
            raise ValueError("empty label set")
        self.label_set = label_set
        self.templates = tuple(templates)
        self.gazetteers = gazetteers
        self.features = list(features)
        self.index = {f: j for j, f in enumerate(self.features)}
        self.W = W
        self.T = T
        self.config = config or Config()
        # scale factor for lazy L2 shrinkage; true weights are scale * W
        self._scale = 1.0

    @property
    def params(self):
        return {"W": self.W, "T": self.T}

    def param_count(self) -> int:
        return int(self.W.size + self.T.size)

    def encode(self, words):
        """(position ids, feature ids) of every known feature."""
        pos, idx = [], []
        for i, fs in enumerate(sequence_features(words, self.templates, self.gazetteers)):
            for f in fs:
                j = self.index.get(f)
                if j is not None:
                    pos.append(i)
                    idx.append(j)
        return np.array(pos, dtype=np.int64), np.array(idx, dtype=np.int64)

    def _emissions(self, n, pos, idx):
        em = np.zeros((n, len(self.label_set)))
        np.add.at(em, pos, self.W[idx])
        return em * self._scale

    def emissions(self, words) -> np.ndarray:
        pos, idx = self.encode(words)
        return self._emissions(len(words), pos, idx)

    def predict(self, words) -> list[int]:
        path, _ = chain_crf.viterbi(self.emissions(words), self.T)
        return path

    def predict_dataset(self, dataset: Dataset) -> list[list[int]]:
        return [self.predict(seq.words) for seq in dataset]

    def _fold_scale(self):
        if self._scale != 1.0:
            self.W *= self._scale
            self._scale = 1.0

    def _sgd_step(self, n, pos, idx, y, lr, l2):
        em = self._emissions(n, pos, idx)
        loss, dEm, dT = chain_crf.nll_and_grads(em, self.T, y)
        if not np.isfinite(loss):
            return loss
        # proximal L2: gradient step, then shrink; stable even when lr * l2 > 1
        rows, inv = np.unique(idx, return_inverse=True)
        g = np.zeros((rows.size, dEm.shape[1]))
        np.add.at(g, inv, dEm[pos])
        self.W[rows] -= (lr / self._scale) * g
        self.T -= lr * dT
        shrink = 1.0 / (1.0 + lr * l2)
        self._scale *= shrink
        self.T *= shrink
        if self._scale < 1e-6:
            self._fold_scale()
        return loss


def build_feature_index(train: Dataset, templates, gazetteers) -> list[str]:
    seen = {}
    for seq in train:
        for fs in sequence_features(seq.words, templates, gazetteers):
            for f in fs:
                if f not in seen:
                    seen[f] = len(seen)
    return list(seen)


def train_baseline(train: Dataset, dev: Dataset, templates=DEFAULT_TEMPLATES,
                   gazetteers: Gazetteers | None = None, config: Config | None = None,
                   log_fn=None):
    """Fit by SGD on the L2-regularized conditional log-likelihood.

    Keeps the weights with the best dev binary-HIPAA F1.  Returns
    ``(model, history)``; history rows are
    ``(epoch, train_loss, dev_P, dev_R, dev_F1)``.
    """
    config = config or Config()
    if len(train) == 0:
        raise ValueError("empty training set")
    if len(train.label_set) == 0:
        raise ValueError("empty label set")
    gazetteers = gazetteers or Gazetteers()
    rng = make_rng(config.seed)
    features = build_feature_index(train, templates, gazetteers)
    k = len(train.label_set)
    model = FeatureCRF(train.label_set, templates, gazetteers, features,
                       np.zeros((len(features), k)), np.zeros((k, k)), config)
    encoded = [(len(s), *model.encode(s.words), np.asarray(s.labels, dtype=np.int64)) for s in train]
    best, best_f1, since = None, -1.0, 0
    history = []
    lr, l2 = config.crf_learning_rate, config.crf_l2
    for epoch in range(1, config.crf_max_epochs + 1):
        total = 0.0
        for j in rng.permutation(len(encoded)):
            n, pos, idx, y = encoded[j]
            loss = model._sgd_step(n, pos, idx, y, lr, l2)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss on sequence {train.sequences[j].note_id!r} "
                                       f"in epoch {epoch}")
            total += loss
        model._fold_scale()
        rep = token_prf(dev, model.predict_dataset(dev)) if len(dev) else None
        f1 = rep.f1 if rep else 0.0
        row = (epoch, total, rep.precision if rep else 0.0, rep.recall if rep else 0.0, f1)
        history.append(row)
        if log_fn:
            log_fn(row)
        if f1 > best_f1:
            best, best_f1, since = (model.W.copy(), model.T.copy(), epoch), f1, 0
        else:
            since += 1
            if since >= config.crf_patience:
                break
    model.W, model.T = best[0], best[1]
    model.best_dev_f1 = best_f1
    model.epoch = best[2]
    return model, history


def predict_baseline(words, model: FeatureCRF) -> list[int]:
    return model.predict(words)
