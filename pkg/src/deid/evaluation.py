"""Token-level precision/recall/F1, approximate randomization, and the
union ensemble of two taggers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import Dataset, LabelSet
from .numerics import make_rng

MODES = ("binary-HIPAA", "per-type", "per-category")


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return ratio(self.tp, self.tp + self.fp, self.fn)

    @property
    def recall(self) -> float:
        return ratio(self.tp, self.tp + self.fn, self.fp)

    @property
    def f1(self) -> float:
        return f1_score(self.precision, self.recall)


def ratio(tp: int, denom: int, other_errors: int) -> float:
    # empty denominator: perfect only if the other error count is also zero
    if denom == 0:
        return 1.0 if other_errors == 0 else 0.0
    return tp / denom


def f1_score(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    c = Counts(tp, fp, fn)
    return c.precision, c.recall, c.f1


@dataclass
class EvalReport:
    mode: str
    tp: int
    fp: int
    fn: int
    per_type: dict = field(default_factory=dict)
    per_category: dict = field(default_factory=dict)

    @property
    def precision(self):
        return Counts(self.tp, self.fp, self.fn).precision

    @property
    def recall(self):
        return Counts(self.tp, self.fp, self.fn).recall

    @property
    def f1(self):
        return Counts(self.tp, self.fp, self.fn).f1

    def as_text(self) -> str:
        """Aligned table followed by a key<TAB>value block."""
        lines = [f"{'scope':<22}{'TP':>8}{'FP':>8}{'FN':>8}{'P':>9}{'R':>9}{'F1':>9}"]

        def row(name, c):
            lines.append(
                f"{name:<22}{c.tp:>8}{c.fp:>8}{c.fn:>8}"
                f"{c.precision:>9.4f}{c.recall:>9.4f}{c.f1:>9.4f}"
            )

        row(self.mode, Counts(self.tp, self.fp, self.fn))
        for name, c in self.per_category.items():
            row(f"category:{name}", c)
        for name, c in self.per_type.items():
            row(f"type:{name}", c)
        lines.append("")
        kv = [("mode", self.mode), ("tp", self.tp), ("fp", self.fp), ("fn", self.fn),
              ("precision", f"{self.precision:.6f}"), ("recall", f"{self.recall:.6f}"),
              ("f1", f"{self.f1:.6f}")]
        for name, c in self.per_category.items():
            kv += [(f"category.{name}.{k}", v) for k, v in _kv(c)]
        for name, c in self.per_type.items():
            kv += [(f"type.{name}.{k}", v) for k, v in _kv(c)]
        lines += [f"{k}\t{v}" for k, v in kv]
        return "\n".join(lines) + "\n"


def _kv(c: Counts):
    return [("tp", c.tp), ("fp", c.fp), ("fn", c.fn), ("precision", f"{c.precision:.6f}"),
            ("recall", f"{c.recall:.6f}"), ("f1", f"{c.f1:.6f}")]


def _flatten(gold: Dataset, pred) -> tuple[np.ndarray, np.ndarray]:
    pred = pred.label_lists() if isinstance(pred, Dataset) else pred
    if len(pred) != len(gold.sequences):
        raise ValueError(f"{len(pred)} predicted sequences for {len(gold.sequences)} gold sequences")
    for i, (s, p) in enumerate(zip(gold.sequences, pred)):
        if len(p) != len(s.labels):
            raise ValueError(f"sequence {i} ({s.note_id}): {len(p)} predictions for {len(s.labels)} tokens")
    if not gold.sequences:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    g = np.concatenate([np.asarray(s.labels, dtype=np.int64) for s in gold.sequences])
    p = np.concatenate([np.asarray(x, dtype=np.int64) for x in pred]) if pred else g[:0]
    return g, p


def binary_counts(gold_labels: np.ndarray, pred_labels: np.ndarray, hipaa: np.ndarray) -> Counts:
    g = hipaa[gold_labels]
    p = hipaa[pred_labels]
    return Counts(int(np.sum(g & p)), int(np.sum(~g & p)), int(np.sum(g & ~p)))


def _group_counts(g, p, groups, group_of):
    out = {}
    for name in groups:
        members = np.array([group_of[i] == name for i in range(len(group_of))])
        gm, pm = members[g], members[p]
        out[name] = Counts(int(np.sum(gm & pm)), int(np.sum(~gm & pm)), int(np.sum(gm & ~pm)))
    return out


def token_prf(gold: Dataset, pred, mode: str = "binary-HIPAA", label_set: LabelSet | None = None) -> EvalReport:
    """Token-based scores.

    ``binary-HIPAA`` collapses labels to PHI (HIPAA-flagged types) versus
    everything else.  ``per-type`` and ``per-category`` count a token as a
    true positive for a group when gold and prediction both fall in it; the
    headline numbers are then micro-averaged over the PHI groups.  Every mode
    also fills both breakdown tables (binary, per group).
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    label_set = label_set or gold.label_set
    g, p = _flatten(gold, pred)
    hipaa = label_set.hipaa_array()
    per_type = _group_counts(g, p, label_set.labels[1:], label_set.labels)
    cats = sorted({c for c in label_set.category_of if c != "O"})
    per_category = _group_counts(g, p, cats, label_set.category_of)
    if mode == "binary-HIPAA":
        head = binary_counts(g, p, hipaa)
    else:
        table = per_type if mode == "per-type" else per_category
        head = Counts(sum(c.tp for c in table.values()), sum(c.fp for c in table.values()),
                      sum(c.fn for c in table.values()))
    return EvalReport(mode, head.tp, head.fp, head.fn, per_type, per_category)


def per_sequence_binary_counts(gold: Dataset, pred, label_set: LabelSet | None = None) -> np.ndarray:
    """(n_sequences, 3) array of binary TP/FP/FN."""
    label_set = label_set or gold.label_set
    _flatten(gold, pred)
    pred = pred.label_lists() if isinstance(pred, Dataset) else pred
    hipaa = label_set.hipaa_array()
    out = np.zeros((len(gold.sequences), 3), dtype=np.int64)
    for i, (s, p) in enumerate(zip(gold.sequences, pred)):
        c = binary_counts(np.asarray(s.labels, dtype=np.int64), np.asarray(p, dtype=np.int64), hipaa)
        out[i] = (c.tp, c.fp, c.fn)
    return out


def _metric_vec(counts: np.ndarray, metric: str) -> np.ndarray:
    tp, fp, fn = (counts[..., i].astype(np.float64) for i in range(3))
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(tp + fp == 0, np.where(fn == 0, 1.0, 0.0), tp / (tp + fp))
        r = np.where(tp + fn == 0, np.where(fp == 0, 1.0, 0.0), tp / (tp + fn))
        f = np.where(p + r == 0, 0.0, 2 * p * r / (p + r))
    return {"precision": p, "recall": r, "f1": f}[metric]


def approx_randomization(pred_a, pred_b, gold: Dataset, metric: str = "f1",
                         shuffles: int = 9999, seed: int = 0, label_set: LabelSet | None = None) -> float:
    """Two-sided approximate randomization test on binary HIPAA scores.

    Each shuffle swaps the two systems' outputs for a sequence with
    probability 1/2.  Returns ``(hits + 1) / (shuffles + 1)`` where hits
    counts shuffles whose absolute metric difference reaches the observed one.
    """
    if metric not in ("precision", "recall", "f1"):
        raise ValueError("metric must be precision, recall or f1")
    if shuffles < 1:
        raise ValueError("need at least one shuffle")
    ca = per_sequence_binary_counts(gold, pred_a, label_set)
    cb = per_sequence_binary_counts(gold, pred_b, label_set)
    observed = abs(float(_metric_vec(ca.sum(0), metric) - _metric_vec(cb.sum(0), metric)))
    rng = make_rng(seed)
    hits = 0
    batch = 1000
    done = 0
    diff = cb - ca
    base = ca.sum(0)
    while done < shuffles:
        m = min(batch, shuffles - done)
        swap = rng.random((m, len(ca))) < 0.5
        # totals for A' = A + swap*(B - A), B' = B - swap*(B - A)
        delta = swap.astype(np.int64) @ diff
        ta = base + delta
        tb = cb.sum(0) - delta
        d = np.abs(_metric_vec(ta, metric) - _metric_vec(tb, metric))
        hits += int(np.sum(d >= observed - 1e-12))
        done += m
    return (hits + 1) / (shuffles + 1)


def ensemble_union(pred_a, pred_b, label_set: LabelSet):
    """Flag a token when either system flags it.

    On a type clash ``pred_a`` wins, except that a HIPAA type always beats a
    non-HIPAA one, so the union's HIPAA token set is exactly the union of
    the inputs' HIPAA token sets.
    """
    if len(pred_a) != len(pred_b):
        raise ValueError("prediction sets have different numbers of sequences")
    hipaa = label_set.hipaa_mask
    out = []
    for i, (a, b) in enumerate(zip(pred_a, pred_b)):
        if len(a) != len(b):
            raise ValueError(f"sequence {i}: {len(a)} vs {len(b)} labels")
        merged = []
        for x, y in zip(a, b):
            x, y = int(x), int(y)
            if hipaa[x] or (x != 0 and not hipaa[y]):
                merged.append(x)
            else:
                merged.append(y)
        out.append(merged)
    return out
