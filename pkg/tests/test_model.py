import math

import numpy as np
import pytest

from deid import chain_crf
from deid.config import Config
from deid.corpus import Dataset, LabeledSequence, LabelSet, Token
from deid.embeddings import TokenVocab
from deid.model import RowGrad, Tagger, expected_param_count
from deid.numerics import make_rng

LS3 = LabelSet.from_rows([("O", "O", False), ("PATIENT", "NAME", True), ("DATE", "DATE", True)])
VOCAB = ["mr", "smith", "seen", "on", "may", "the", "clinic", "at", "12"]
TINY3 = dict(char_dim=3, char_lstm_dim=2, token_dim=4, lstm_dim=3, hidden_dim=3)


def seq_of(words, labels, note_id="x"):
    return LabeledSequence([Token(w, 0, len(w)) for w in words], labels, note_id)


SEQ = seq_of(["Mr", "Smith", "seen", "12"], [0, 1, 0, 2])
TRAIN = Dataset([seq_of(VOCAB, [0] * len(VOCAB))], LS3)


def build(seed=0, **kw):
    m = Tagger.build(Config(**TINY3, **kw), LS3, TRAIN, make_rng(seed))
    if "T" in m.params:
        m.params["T"][...] = make_rng(seed + 50).normal(size=(3, 3))
    return m


def fd_agreement(m, seq, h=1e-4):
    """Worst |g - fd| / (1e-7 + |fd|) over all coordinates; h=1e-4 keeps round-off small."""
    theta = m.flat_params()
    _, g = m.loss_and_grad(seq)
    ga = m.flat_grad(g)
    worst = 0.0
    for j in range(theta.size):
        th = theta.copy()
        th[j] += h
        m.set_flat_params(th)
        up = m.loss(seq)
        th[j] -= 2 * h
        m.set_flat_params(th)
        dn = m.loss(seq)
        fd = (up - dn) / (2 * h)
        worst = max(worst, abs(ga[j] - fd) / (1e-7 + abs(fd)))
    m.set_flat_params(theta)
    return worst


@pytest.mark.parametrize("kw", [{}, dict(literal_output_gate=True), dict(raw_score_emissions=True),
                                dict(use_seq_opt=False), dict(use_token_emb=False), dict(use_char_emb=False)])
def test_full_gradient(kw):
    m = build(1, **kw)
    assert len(m.token_vocab or VOCAB + ["<unk>"]) == 10
    assert fd_agreement(m, SEQ) < 1e-4


def test_gradient_with_dropout_mask():
    m = build(2)
    theta = m.flat_params()
    _, g = m.loss_and_grad(SEQ, make_rng(9))
    ga = m.flat_grad(g)
    h = 1e-4
    for j in make_rng(3).choice(theta.size, 40, replace=False):
        th = theta.copy()
        th[j] += h
        m.set_flat_params(th)
        up = m.loss(SEQ, make_rng(9))
        th[j] -= 2 * h
        m.set_flat_params(th)
        dn = m.loss(SEQ, make_rng(9))
        fd = (up - dn) / (2 * h)
        assert abs(ga[j] - fd) <= 1e-7 + 1e-4 * abs(fd)
    m.set_flat_params(theta)


def test_every_array_gets_gradient():
    m = build(3)
    _, g = m.loss_and_grad(SEQ)
    assert set(g) == set(m.params)
    assert isinstance(g["tok_emb"], RowGrad) and isinstance(g["char_emb"], RowGrad)


def test_absent_rows_zero_gradient():
    m = build(4)
    _, g = m.loss_and_grad(SEQ)
    dense = g["tok_emb"].dense(m.params["tok_emb"].shape)
    used = {m.token_vocab.lookup(w) for w in SEQ.words}
    for r in range(dense.shape[0]):
        if r not in used:
            assert not dense[r].any()


def test_no_seq_opt_has_no_transitions():
    m = build(5, use_seq_opt=False)
    assert "T" not in m.params
    _, g = m.loss_and_grad(SEQ)
    assert "T" not in g


def test_probabilities_valid_and_n1():
    m = build(6)
    for words in (SEQ.words, ["x"]):
        A = m.probabilities(words)
        assert A.shape == (len(words), 3) and np.all(A > 0)
        np.testing.assert_allclose(A.sum(axis=1), 1.0, atol=1e-10)
    assert len(m.predict(["solo"])) == 1


def test_label_permutation_permutes_probabilities():
    m = build(7)
    perm = [0, 2, 1]
    ls2 = LabelSet.from_rows([LS3.rows()[i] for i in perm])
    params = {k: v.copy() for k, v in m.params.items()}
    params["ff.W2"] = params["ff.W2"][perm]
    params["ff.b2"] = params["ff.b2"][perm]
    params["T"] = params["T"][np.ix_(perm, perm)]
    m2 = Tagger(m.config, ls2, m.token_vocab, m.char_vocab, params)
    np.testing.assert_allclose(m2.probabilities(SEQ.words), m.probabilities(SEQ.words)[:, perm], atol=1e-15)


def test_uniform_single_token_loss_is_ln2():
    ls2 = LabelSet.from_rows([("O", "O", False), ("DATE", "DATE", True)])
    m = Tagger.build(Config(**TINY3), ls2, Dataset([seq_of(["a"], [0])], ls2), make_rng(0))
    m.params["ff.W2"][...] = 0.0
    m.params["ff.b2"][...] = 0.0
    assert abs(m.loss(seq_of(["a"], [1])) - math.log(2)) < 1e-12


@pytest.mark.parametrize("raw", [False, True])
def test_chain_loss_matches_enumeration(raw):
    m = build(8, raw_score_emissions=raw)
    cache = m.forward(SEQ.words)
    em = m.emissions(cache)
    expect = chain_crf.brute_force_logZ(em, m.params["T"]) - chain_crf.sequence_score(em, m.params["T"], SEQ.labels)
    assert abs(m.loss(SEQ) - expect) < 1e-8
    assert m.loss(SEQ) >= 0 or raw


def test_loss_decreases_under_sgd():
    from deid.training import clip_scale, sgd_update
    m = build(9)
    first = m.loss(SEQ)
    for _ in range(20):
        _, g = m.loss_and_grad(SEQ)
        sgd_update(m.params, g, 0.1, clip_scale(g, 5.0))
    assert m.loss(SEQ) < first


def test_zero_transitions_viterbi_is_greedy():
    m = build(10)
    m.params["T"][...] = 0.0
    A = m.probabilities(SEQ.words)
    assert m.predict(SEQ.words) == list(np.argmax(A, axis=1))


def test_no_seq_opt_predicts_argmax():
    m = build(11, use_seq_opt=False)
    for words in (SEQ.words, VOCAB, ["zz", "q"]):
        assert m.predict(words) == list(np.argmax(m.probabilities(words), axis=1))


def test_predict_matches_brute_force():
    m = build(12)
    em = m.emissions(m.forward(SEQ.words))
    assert m.predict(SEQ.words) == list(chain_crf.brute_force_best(em, m.params["T"])[0])


def test_inference_is_dropout_free():
    m = build(13, dropout=0.5)
    a = m.probabilities(SEQ.words)
    b = m.probabilities(SEQ.words)
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("flag", ["use_seq_opt", "use_token_emb", "use_char_emb"])
def test_ablation_param_count(flag):
    full = build(0)
    ab = build(0, **{flag: False})
    n_tok, n_ch, k = len(full.token_vocab), len(full.char_vocab), 3
    cfg = full.config
    assert full.param_count() == expected_param_count(cfg, n_tok, n_ch, k)
    assert ab.param_count() == expected_param_count(ab.config, n_tok, n_ch, k)
    # removing an input block drops 3 matrices x 3 rows x width columns per direction
    delta = {"use_seq_opt": k * k,
             "use_token_emb": n_tok * 4 + 2 * 3 * 3 * 4,
             "use_char_emb": n_ch * 3 + 2 * (2 * (3 + 4) + 2 * (3 + 2) + 2 * (3 + 4) + 6)
             + 2 * 3 * 3 * 4}[flag]
    assert full.param_count() - ab.param_count() == delta


def test_pretrained_seeds_table():
    rng = make_rng(1)
    pre_vocab = TokenVocab(["smith", "zebra"])
    pre_table = rng.normal(size=(3, 4))
    m = Tagger.build(Config(**TINY3), LS3, TRAIN, make_rng(0), (pre_vocab, pre_table))
    assert m.pretrained
    np.testing.assert_array_equal(m.params["tok_emb"][m.token_vocab.lookup("zebra")], pre_table[2])
    assert m.token_vocab.lookup("clinic") > 0
    with pytest.raises(ValueError):
        Tagger.build(Config(**TINY3), LS3, TRAIN, make_rng(0), (pre_vocab, rng.normal(size=(3, 5))))
    off = Tagger.build(Config(**TINY3, use_pretrain=False), LS3, TRAIN, make_rng(0), (pre_vocab, pre_table))
    assert not off.pretrained and "zebra" not in off.token_vocab
