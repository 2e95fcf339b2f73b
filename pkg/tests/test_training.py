import math

import numpy as np
import pytest

from deid.checkpoint import from_bytes, load_checkpoint, save_checkpoint, to_bytes
from deid.config import Config
from deid.errors import CheckpointError, TrainingDiverged
from deid.feature_crf import Gazetteers
from deid.model import RowGrad
from deid.numerics import make_rng
from deid.training import (clip_scale, count_inversions, format_log_row, format_sweep_table, grad_norm,
                           subsample, sweep, train, train_crf)

from conftest import TINY


def quick(**kw):
    base = dict(TINY, max_epochs=3, patience=3, learning_rate=0.05, crf_max_epochs=3, crf_patience=3)
    base.update(kw)
    return Config(**base)


def test_clipping_bound():
    rng = make_rng(0)
    for scale in (0.01, 1.0, 100.0):
        grads = {"a": rng.normal(0, scale, (4, 3)),
                 "e": RowGrad(np.array([1, 5]), rng.normal(0, scale, (2, 3)))}
        s = clip_scale(grads, 5.0)
        clipped = {"a": grads["a"] * s, "e": RowGrad(grads["e"].rows, grads["e"].values * s)}
        assert grad_norm(clipped) <= 5.0 + 1e-9
        if grad_norm(grads) <= 5.0:
            assert s == 1.0


def test_subsample_counts(small_corpus):
    train_set = small_corpus[0]
    half = subsample(train_set, 0.5, make_rng(1))
    assert len(half) == math.ceil(len(train_set) / 2)
    ids = [s.note_id for s in half]
    assert len(set(ids)) == len(ids) and ids == sorted(ids, key=[s.note_id for s in train_set].index)
    assert subsample(train_set, 1.0, make_rng(1)) is train_set


def test_train_history_and_selection(small_corpus):
    tr, dev, _ = small_corpus
    logged = []
    ck = train(tr, dev, quick(), log_fn=logged.append)
    assert logged == ck.history and len(ck.history) == 3
    best = -1.0
    running = []
    for row in ck.history:
        best = max(best, row[4])
        running.append(best)
    assert all(b2 >= b1 for b1, b2 in zip(running, running[1:]))
    assert ck.best_dev_f1 == running[-1]
    assert ck.history[ck.epoch - 1][4] == ck.best_dev_f1
    assert format_log_row(ck.history[0]).count("\t") == 4


def test_early_stopping(small_corpus):
    tr, dev, _ = small_corpus
    ck = train(tr, dev, quick(max_epochs=30, patience=1, learning_rate=1e-6))
    assert len(ck.history) < 30


def test_determinism_byte_identical(small_corpus):
    tr, dev, _ = small_corpus
    a = to_bytes(train(tr, dev, quick()))
    b = to_bytes(train(tr, dev, quick()))
    assert a == b
    assert to_bytes(train(tr, dev, quick(seed=1))) != a


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_names_sequence(small_corpus):
    tr, dev, _ = small_corpus
    with pytest.raises(TrainingDiverged) as info:
        train(tr, dev, quick(learning_rate=1e300, clip_norm=1e300))
    assert any(repr(s.note_id) in str(info.value) for s in tr)


def test_checkpoint_round_trip(tmp_path, small_corpus):
    tr, dev, te = small_corpus
    ck = train(tr, dev, quick())
    save_checkpoint(ck, tmp_path / "m.ckpt")
    back = load_checkpoint(tmp_path / "m.ckpt")
    for k, v in ck.arrays().items():
        assert np.array_equal(v, back.arrays()[k])
        assert v.tobytes() == back.arrays()[k].tobytes()
    assert back.predict_dataset(te) == ck.predict_dataset(te)
    assert back.config == ck.config and back.label_set == ck.label_set
    assert to_bytes(back) == to_bytes(ck)


def test_checkpoint_corruption(tmp_path, small_corpus):
    tr, dev, _ = small_corpus
    data = to_bytes(train(tr, dev, quick(max_epochs=1)))
    with pytest.raises(CheckpointError):
        from_bytes(data[:-7])
    with pytest.raises(CheckpointError):
        from_bytes(data[:40])
    with pytest.raises(CheckpointError, match="version"):
        from_bytes(data.replace(b"DEID-MODEL v1", b"DEID-MODEL v9", 1))
    with pytest.raises(CheckpointError):
        from_bytes(b"not a checkpoint\n")
    flipped = bytearray(data)
    flipped[-3] ^= 0xFF
    with pytest.raises(CheckpointError, match="checksum"):
        from_bytes(bytes(flipped))
    with pytest.raises(CheckpointError):
        from_bytes(data + b"x")


def test_no_char_emb_reload(tmp_path, small_corpus):
    tr, dev, te = small_corpus
    ck = train(tr, dev, quick(use_char_emb=False, max_epochs=1))
    save_checkpoint(ck, tmp_path / "m.ckpt")
    back = load_checkpoint(tmp_path / "m.ckpt")
    assert not back.config.use_char_emb
    assert not any(k.startswith("char") for k in back.arrays())
    assert back.model.char_vocab is None
    assert back.predict_dataset(te) == ck.predict_dataset(te)


def test_no_seq_opt_checkpoint_has_no_t(small_corpus):
    tr, dev, _ = small_corpus
    ck = train(tr, dev, quick(use_seq_opt=False, max_epochs=1))
    assert "T" not in ck.arrays()
    assert "T" not in from_bytes(to_bytes(ck)).arrays()


def test_crf_checkpoint_round_trip(tmp_path, small_corpus):
    tr, dev, te = small_corpus
    ck = train_crf(tr, dev, quick(), gazetteers=Gazetteers({"cities": ["Boston", "New York"]}))
    save_checkpoint(ck, tmp_path / "c.ckpt")
    back = load_checkpoint(tmp_path / "c.ckpt")
    assert back.kind == "crf"
    assert back.predict_dataset(te) == ck.predict_dataset(te)
    assert to_bytes(back) == to_bytes(ck)


def test_sweep_table(small_corpus):
    tr, dev, te = small_corpus
    rows, ckpts = sweep(tr, dev, te, quick(max_epochs=1), fractions=(0.25, 1.0))
    assert [r[0] for r in rows] == [0.25, 1.0]
    assert rows[0][1] == math.ceil(len(tr) * 0.25) and rows[1][1] == len(tr)
    table = format_sweep_table(rows)
    assert table.splitlines()[0] == "fraction\tsequences\tprecision\trecall\tf1"
    assert len(table.splitlines()) == 3 and len(ckpts) == 2
    with pytest.raises(ValueError):
        sweep(tr, dev, te, quick(), fractions=(0.0,))


def test_count_inversions():
    assert count_inversions([0.1, 0.2, 0.3]) == 0
    assert count_inversions([0.1, 0.3, 0.2, 0.4]) == 1
    assert count_inversions([]) == 0
