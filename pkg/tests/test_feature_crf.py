import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from deid import chain_crf
from deid.config import Config
from deid.corpus import Dataset, LabeledSequence, LabelSet, Token
from deid.feature_crf import (BOS, DEFAULT_TEMPLATES, EOS, FeatureCRF, FeatureTemplate, Gazetteers,
                              extract_features, format_templates, predict_baseline, read_templates,
                              sequence_features, train_baseline, word_shape)
from deid.numerics import make_rng

LS = LabelSet.from_rows([("O", "O", False), ("PATIENT", "NAME", True), ("DATE", "DATE", True)])


def seq_of(words, labels):
    return LabeledSequence([Token(w, 0, len(w)) for w in words], labels, "s")


def test_single_token_boundaries():
    f = extract_features(["Smith"], 0)
    for t in DEFAULT_TEMPLATES:
        for o in t.offsets:
            if o == 0 or t.kind.startswith("ngram"):
                continue
            if t.kind in ("identity", "shape", "prefix", "suffix", "gazetteer", "regex"):
                assert f"{t.kind}[{o}]={BOS if o < 0 else EOS}".lower() in {x.lower() for x in f}
    assert "ngram1[-4]=<BOS>" in f and "ngram1[4]=<EOS>" in f


def test_year_token_shape_and_regex():
    f = extract_features(["2087"], 0)
    assert word_shape("2087") == "dddd"
    assert "shape[0]=dddd" in f and "regex[0]=year-like" in f


def test_gazetteer_feature_set_semantics():
    words = ["Dr", "Jane", "Doe", "arrived"]
    with_gz = extract_features(words, 1, gazetteers=Gazetteers({"names": ["jane"], "cities": ["Boston"]}))
    without = extract_features(words, 1, gazetteers=Gazetteers({"names": [], "cities": ["Boston"]}))
    assert with_gz - without == {"gazetteer[0]=names"}
    assert without - with_gz == set()


def test_multi_token_gazetteer_entry():
    gz = Gazetteers({"cities": ["New York"]})
    assert gz.tag(["in", "new", "york", "today"]) == [set(), {"cities"}, {"cities"}, set()]
    assert gz.tag(["new", "jersey"]) == [set(), set()]


def test_gazetteer_file(tmp_path):
    (tmp_path / "names.txt").write_text("# comment\nJane\n\nDoe\n", encoding="utf-8")
    gz = Gazetteers.read([tmp_path / "names.txt"])
    assert gz.names() == ["names"] and len(gz) == 2


def test_template_validation_and_file(tmp_path):
    with pytest.raises(ValueError):
        FeatureTemplate("shape", (5,))
    with pytest.raises(ValueError):
        FeatureTemplate("ngram3", (3,))
    with pytest.raises(ValueError):
        FeatureTemplate("colour", (0,))
    (tmp_path / "t.cfg").write_text("\n".join(format_templates(DEFAULT_TEMPLATES)) + "\n", encoding="utf-8")
    assert read_templates(tmp_path / "t.cfg") == DEFAULT_TEMPLATES


@given(st.lists(st.sampled_from(["Mr", "Smith", "2087", "on", ".", "Boston", "555"]), min_size=1, max_size=14),
       st.data())
def test_position_locality(words, data):
    j = data.draw(st.integers(0, len(words) - 1))
    edited = list(words)
    edited[j] = "Zyx9"
    gz = Gazetteers({"cities": ["Boston"]})
    a = sequence_features(words, gazetteers=gz)
    b = sequence_features(edited, gazetteers=gz)
    for i in range(len(words)):
        if abs(i - j) > 4:
            assert a[i] == b[i]


def test_deterministic():
    words = ["Seen", "by", "Dr", "Smith", "on", "02", "/", "20"]
    assert sequence_features(words) == sequence_features(list(words))


def _model(features, W=None, T=None):
    k = len(LS)
    W = np.zeros((len(features), k)) if W is None else W
    T = np.zeros((k, k)) if T is None else T
    return FeatureCRF(LS, DEFAULT_TEMPLATES, Gazetteers(), features, W, T)


def test_zero_weights_predict_lowest_index():
    m = _model(["bias", "identity[0]=Smith"])
    assert predict_baseline(["a", "Smith", "c"], m) == [0, 0, 0]


def test_matches_brute_force():
    rng = make_rng(4)
    words = ["Mr", "Smith", "2087", "x"]
    feats = sorted({f for fs in sequence_features(words) for f in fs})
    m = _model(feats, rng.normal(size=(len(feats), 3)), rng.normal(size=(3, 3)))
    em = m.emissions(words)
    assert m.predict(words) == list(chain_crf.brute_force_best(em, m.T)[0])


def test_irrelevant_feature_changes_nothing():
    rng = make_rng(5)
    words = ["Mr", "Smith", "seen"]
    feats = sorted({f for fs in sequence_features(words) for f in fs})
    W = rng.normal(size=(len(feats), 3))
    T = rng.normal(size=(3, 3))
    a = _model(feats, W, T)
    b = _model(feats + ["identity[0]=never"], np.vstack([W, rng.normal(size=(1, 3))]), T)
    np.testing.assert_array_equal(a.emissions(words), b.emissions(words))
    assert a.predict(words) == b.predict(words)


def _determined_dataset():
    """Label is a function of the token identity alone."""
    rng = make_rng(6)
    lex = {"Smith": 1, "Jones": 1, "2087": 2, "2091": 2, "seen": 0, "on": 0, "the": 0, "clinic": 0}
    words = list(lex)
    seqs = []
    for _ in range(20):
        ws = [words[i] for i in rng.integers(0, len(words), 8)]
        seqs.append(seq_of(ws, [lex[w] for w in ws]))
    return Dataset(seqs, LS)


def test_determined_dataset_fits_perfectly():
    ds = _determined_dataset()
    cfg = Config(crf_max_epochs=15, crf_patience=15)
    model, history = train_baseline(ds, ds, config=cfg)
    pred = model.predict_dataset(ds)
    assert all(p == list(s.labels) for p, s in zip(pred, ds))
    assert history[-1][1] < history[0][1]


def test_loss_decreases_on_synthetic(small_corpus):
    train, dev, _ = small_corpus
    model, history = train_baseline(train, dev, config=Config(crf_max_epochs=6, crf_patience=6))
    assert history[-1][1] < history[0][1]
    assert model.best_dev_f1 == max(h[4] for h in history)


def test_regularization_limit():
    ds = _determined_dataset()
    strong, _ = train_baseline(ds, ds, config=Config(crf_l2=1e3, crf_max_epochs=3, crf_patience=3))
    weak, _ = train_baseline(ds, ds, config=Config(crf_l2=1e-3, crf_max_epochs=3, crf_patience=3))
    assert np.abs(strong.W).max() < 0.01 * np.abs(weak.W).max()


def test_empty_training_set():
    with pytest.raises(ValueError):
        train_baseline(Dataset([], LS), Dataset([], LS))
