import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from deid.corpus import Dataset, LabeledSequence, LabelSet, Token
from deid.evaluation import (approx_randomization, ensemble_union, per_sequence_binary_counts, prf,
                             token_prf)
from deid.numerics import make_rng

LS = LabelSet.default()
O, PAT, DOC, DATE, YEAR = (LS.index(x) for x in ("O", "PATIENT", "DOCTOR", "DATE", "YEAR"))
HIPAA_IDS = [i for i, h in enumerate(LS.hipaa_mask) if h]


def ds_of(label_lists):
    seqs = [LabeledSequence([Token(f"w{j}", 0, 2) for j in range(len(l))], list(l), f"n{i}")
            for i, l in enumerate(label_lists)]
    return Dataset(seqs, LS)


def test_perfect():
    gold = ds_of([[O, PAT, DATE], [DATE, O]])
    r = token_prf(gold, gold.label_lists())
    assert (r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0)


def test_hand_counted_example():
    gold = ds_of([[PAT, PAT, DATE, O, O]])
    pred = [[PAT, PAT, O, DATE, O]]
    r = token_prf(gold, pred)
    assert (r.tp, r.fp, r.fn) == (2, 1, 1)
    assert r.precision == r.recall == r.f1 == 2 / 3
    assert prf(2, 1, 1) == (2 / 3, 2 / 3, 2 / 3)


def test_hipaa_date_missed_is_one_fn():
    ls = LabelSet.from_rows([("O", "O", False), ("DATE", "DATE", True), ("DOCTOR", "NAME", False)])
    seq = LabeledSequence([Token(w, 0, 1) for w in "abcde"], [0, 1, 0, 2, 0], "x")
    r = token_prf(Dataset([seq], ls), [[0, 0, 0, 2, 0]])
    assert (r.tp, r.fp, r.fn) == (0, 0, 1)


def test_non_hipaa_types_are_not_phi_in_binary_mode():
    gold = ds_of([[DOC, YEAR, O]])
    r = token_prf(gold, [[O, O, O]])
    assert (r.tp, r.fp, r.fn) == (0, 0, 0) and r.f1 == 1.0


def test_zero_denominator_rules():
    assert prf(0, 0, 0) == (1.0, 1.0, 1.0)
    assert prf(0, 0, 3) == (0.0, 0.0, 0.0)
    assert prf(0, 2, 0) == (0.0, 0.0, 0.0)


def test_misaligned():
    gold = ds_of([[O, PAT]])
    with pytest.raises(ValueError):
        token_prf(gold, [[O]])
    with pytest.raises(ValueError):
        token_prf(gold, [[O, O], [O]])


def test_per_type_and_category():
    gold = ds_of([[PAT, DOC, DATE, O]])
    r = token_prf(gold, [[DOC, DOC, DATE, O]], mode="per-type")
    assert r.per_type["PATIENT"].fn == 1 and r.per_type["DOCTOR"].fp == 1 and r.per_type["DOCTOR"].tp == 1
    c = token_prf(gold, [[DOC, DOC, DATE, O]], mode="per-category")
    assert c.per_category["NAME"].tp == 2 and (c.tp, c.fp, c.fn) == (3, 0, 0)
    with pytest.raises(ValueError):
        token_prf(gold, [[O] * 4], mode="entity")


def test_report_text_has_kv_block():
    gold = ds_of([[PAT, DATE]])
    text = token_prf(gold, [[PAT, O]]).as_text()
    assert "tp\t1" in text and "fn\t1" in text and "f1\t0.666667" in text


label_lists = st.lists(st.lists(st.integers(0, len(LS) - 1), min_size=1, max_size=8), min_size=1, max_size=6)


@given(label_lists, st.data())
def test_binary_invariant_to_hipaa_relabeling(gold_l, data):
    pred_l = [data.draw(st.lists(st.integers(0, len(LS) - 1), min_size=len(g), max_size=len(g))) for g in gold_l]
    perm = data.draw(st.permutations(HIPAA_IDS))
    remap = {a: b for a, b in zip(HIPAA_IDS, perm)}
    relab = [[remap.get(x, x) for x in p] for p in pred_l]
    gold = ds_of(gold_l)
    a, b = token_prf(gold, pred_l), token_prf(gold, relab)
    assert (a.tp, a.fp, a.fn) == (b.tp, b.fp, b.fn)


@given(label_lists, st.data())
def test_union_superset(gold_l, data):
    pa = [data.draw(st.lists(st.integers(0, len(LS) - 1), min_size=len(g), max_size=len(g))) for g in gold_l]
    pb = [data.draw(st.lists(st.integers(0, len(LS) - 1), min_size=len(g), max_size=len(g))) for g in gold_l]
    gold = ds_of(gold_l)
    u = ensemble_union(pa, pb, LS)
    h = LS.hipaa_mask
    for a, b, c in zip(pa, pb, u):
        for x, y, z in zip(a, b, c):
            assert h[z] == (h[x] or h[y])
    # with no gold PHI the zero-denominator rule scores recall by false positives
    assume(any(h[x] for g in gold_l for x in g))
    assert token_prf(gold, u).recall >= max(token_prf(gold, pa).recall, token_prf(gold, pb).recall)


def test_union_recall_without_gold_phi():
    gold = ds_of([[O, O]])
    u = ensemble_union([[PAT, O]], [[O, O]], LS)
    assert token_prf(gold, u).recall == 0.0 and token_prf(gold, [[O, O]]).recall == 1.0


def test_union_examples():
    a = [[O, PAT, DATE]]
    assert ensemble_union(a, [[O, O, O]], LS) == a
    assert ensemble_union([[PAT]], [[DATE]], LS) == [[PAT]]
    assert ensemble_union([[O]], [[DATE]], LS) == [[DATE]]
    with pytest.raises(ValueError):
        ensemble_union([[O]], [[O, O]], LS)


def _pair(n=100, seed=0):
    rng = make_rng(seed)
    gold_l = [[int(x) for x in rng.choice([O, PAT, DATE], size=10, p=[0.7, 0.15, 0.15])] for _ in range(n)]
    return ds_of(gold_l), gold_l, [[O] * 10 for _ in range(n)]


def test_identical_systems_p_is_one():
    gold, g, _ = _pair(20)
    assert approx_randomization(g, g, gold, shuffles=999, seed=3) == 1.0


def test_perfect_vs_all_o_significant():
    gold, g, allo = _pair()
    p = approx_randomization(g, allo, gold, shuffles=9999, seed=1)
    assert 0 < p <= 0.05


def test_significance_symmetry_and_determinism():
    gold, g, _ = _pair(30, seed=2)
    rng = make_rng(5)
    noisy = [[x if rng.random() < 0.8 else O for x in s] for s in g]
    p1 = approx_randomization(g, noisy, gold, shuffles=999, seed=9)
    assert p1 == approx_randomization(g, noisy, gold, shuffles=999, seed=9)
    assert p1 == approx_randomization(noisy, g, gold, shuffles=999, seed=9)
    for metric in ("precision", "recall"):
        assert 0 < approx_randomization(g, noisy, gold, metric=metric, shuffles=99, seed=1) <= 1


def test_per_sequence_counts_sum():
    gold, g, allo = _pair(10)
    counts = per_sequence_binary_counts(gold, allo)
    r = token_prf(gold, allo)
    assert tuple(counts.sum(0)) == (r.tp, r.fp, r.fn)
