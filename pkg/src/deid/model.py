"""The end-to-end tagger: character-enhanced embeddings, a bidirectional
LSTM, a one-hidden-layer feed-forward net producing per-token label
probabilities, and (optionally) the chain layer over those probabilities.

Parameters live in one ordered ``dict`` of float64 arrays so that
checkpointing, gradient checks and SGD all see the same flat view.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import chain_crf, recurrent
from .config import Config
from .corpus import Dataset, LabelSet
from .embeddings import CharVocab, TokenVocab, dropout_mask
from .numerics import embedding_uniform, logsumexp, softmax, xavier_uniform
from .recurrent import LstmParams

EMBEDDING_TABLES = ("tok_emb", "char_emb")


@dataclass
class RowGrad:
    """Gradient restricted to a few rows of an embedding table."""
    rows: np.ndarray
    values: np.ndarray

    def dense(self, shape) -> np.ndarray:
        out = np.zeros(shape)
        out[self.rows] = self.values
        return out


def _rows_grad(indices: np.ndarray, values: np.ndarray) -> RowGrad:
    rows, inverse = np.unique(indices, return_inverse=True)
    acc = np.zeros((rows.size, values.shape[1]))
    np.add.at(acc, inverse, values)
    return RowGrad(rows, acc)


@dataclass
class ForwardCache:
    words: list
    tok_idx: np.ndarray | None
    uniq_words: list
    inverse: np.ndarray | None
    char_caches: tuple | None
    mask: np.ndarray | None
    E: np.ndarray
    fw: recurrent.LstmCache
    bw: recurrent.LstmCache
    D: np.ndarray
    Hh: np.ndarray
    S: np.ndarray
    A: np.ndarray
    extra: dict = field(default_factory=dict)


class Tagger:
    def __init__(self, config: Config, label_set: LabelSet, token_vocab: TokenVocab | None,
                 char_vocab: CharVocab | None, params: dict, pretrained: bool = False):
        self.config = config
        self.label_set = label_set
        self.token_vocab = token_vocab
        self.char_vocab = char_vocab
        self.params = params
        self.pretrained = pretrained
        self._char_ids: dict[str, np.ndarray] = {}
        self._check_shapes()

    # construction -----------------------------------------------------

    @classmethod
    def build(cls, config: Config, label_set: LabelSet, train: Dataset,
              rng: np.random.Generator, pretrained=None) -> "Tagger":
        """Fresh parameters sized from ``train``.

        ``pretrained`` is an optional ``(TokenVocab, table)`` pair; its
        vectors seed the token table and training tokens it lacks are
        appended with random rows.
        """
        cfg = config
        params: dict[str, np.ndarray] = {}
        token_vocab = char_vocab = None
        use_pre = False
        if cfg.use_token_emb:
            if pretrained is not None and cfg.use_pretrain:
                pre_vocab, pre_table = pretrained
                if pre_table.shape[1] != cfg.token_dim:
                    raise ValueError(
                        f"pretrained vectors have {pre_table.shape[1]} dims, config says {cfg.token_dim}"
                    )
                token_vocab = TokenVocab(pre_vocab.itos[1:])
                n_pre = len(token_vocab)
                for seq in train:
                    for w in seq.words:
                        token_vocab.add(w)
                table = np.vstack([
                    pre_table,
                    embedding_uniform(rng, len(token_vocab) - n_pre, cfg.token_dim),
                ])
                use_pre = True
            else:
                token_vocab = TokenVocab(w for seq in train for w in seq.words)
                table = embedding_uniform(rng, len(token_vocab), cfg.token_dim)
            params["tok_emb"] = table
        if cfg.use_char_emb:
            char_vocab = CharVocab(ch for seq in train for w in seq.words for ch in w)
            params["char_emb"] = embedding_uniform(rng, len(char_vocab), cfg.char_dim)
            params.update(LstmParams.init(rng, cfg.char_dim, cfg.char_lstm_dim).to_dict("char_fw"))
            params.update(LstmParams.init(rng, cfg.char_dim, cfg.char_lstm_dim).to_dict("char_bw"))
        d_in = embed_dim(cfg)
        params.update(LstmParams.init(rng, d_in, cfg.lstm_dim).to_dict("pred_fw"))
        params.update(LstmParams.init(rng, d_in, cfg.lstm_dim).to_dict("pred_bw"))
        k = len(label_set)
        params["ff.W1"] = xavier_uniform(rng, cfg.hidden_dim, 2 * cfg.lstm_dim)
        params["ff.b1"] = np.zeros(cfg.hidden_dim)
        params["ff.W2"] = xavier_uniform(rng, k, cfg.hidden_dim)
        params["ff.b2"] = np.zeros(k)
        if cfg.use_seq_opt:
            params["T"] = np.zeros((k, k))
        return cls(cfg, label_set, token_vocab, char_vocab, params, pretrained=use_pre)

    def _check_shapes(self):
        cfg = self.config
        expect = expected_shapes(cfg, len(self.token_vocab) if self.token_vocab else 0,
                                 len(self.char_vocab) if self.char_vocab else 0, len(self.label_set))
        if list(expect) != list(self.params):
            raise ValueError(f"parameter names {list(self.params)} do not match config {list(expect)}")
        for name, shape in expect.items():
            if self.params[name].shape != shape:
                raise ValueError(f"{name} has shape {self.params[name].shape}, expected {shape}")

    # helpers ------------------------------------------------------------

    @property
    def num_labels(self) -> int:
        return len(self.label_set)

    def param_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def lstm(self, prefix) -> LstmParams:
        return LstmParams.from_dict(self.params, prefix)

    def char_ids(self, word: str) -> np.ndarray:
        ids = self._char_ids.get(word)
        if ids is None:
            ids = self.char_vocab.encode(word)
            if len(self._char_ids) < 200_000:
                self._char_ids[word] = ids
        return ids

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.params.values()])

    def set_flat_params(self, theta: np.ndarray):
        at = 0
        for name, p in self.params.items():
            p[...] = theta[at:at + p.size].reshape(p.shape)
            at += p.size

    def flat_grad(self, grads: dict) -> np.ndarray:
        out = []
        for name, p in self.params.items():
            g = grads.get(name)
            if g is None:
                out.append(np.zeros(p.size))
            elif isinstance(g, RowGrad):
                out.append(g.dense(p.shape).ravel())
            else:
                out.append(g.ravel())
        return np.concatenate(out)

    # forward --------------------------------------------------------------

    def forward(self, words, rng: np.random.Generator | None = None) -> ForwardCache:
        """Per-token probabilities; dropout is applied only when ``rng`` is given."""
        cfg = self.config
        words = [getattr(w, "text", w) for w in words]
        if not words:
            raise ValueError("empty sequence")
        literal = cfg.literal_output_gate
        parts = []
        tok_idx = None
        if cfg.use_token_emb:
            tok_idx = np.fromiter((self.token_vocab.lookup(w) for w in words), dtype=np.int64,
                                  count=len(words))
            parts.append(self.params["tok_emb"][tok_idx])
        uniq, inverse, char_caches = [], None, None
        if cfg.use_char_emb:
            pos = {}
            inv = []
            for w in words:
                j = pos.get(w)
                if j is None:
                    j = pos[w] = len(uniq)
                    uniq.append(w)
                inv.append(j)
            inverse = np.array(inv, dtype=np.int64)
            B, char_caches = self._char_forward(uniq)
            parts.append(B[inverse])
        E = np.hstack(parts) if len(parts) > 1 else parts[0]
        mask = None
        if rng is not None and cfg.dropout > 0.0:
            mask = dropout_mask(E.shape, cfg.dropout, rng)
            E = E * mask
        E = np.ascontiguousarray(E)
        fw = recurrent.forward(E, self.lstm("pred_fw"), literal)
        bw = recurrent.forward(E[::-1], self.lstm("pred_bw"), literal)
        D = np.hstack([fw.H, bw.H[::-1]])
        Hh = np.tanh(D @ self.params["ff.W1"].T + self.params["ff.b1"])
        S = Hh @ self.params["ff.W2"].T + self.params["ff.b2"]
        A = softmax(S, axis=1)
        return ForwardCache(words, tok_idx, uniq, inverse, char_caches, mask, E, fw, bw, D, Hh, S, A)

    def emissions(self, cache: ForwardCache) -> np.ndarray:
        return cache.S if self.config.raw_score_emissions else cache.A

    def probabilities(self, words) -> np.ndarray:
        return self.forward(words).A

    # loss ---------------------------------------------------------------------

    def loss(self, seq, rng: np.random.Generator | None = None) -> float:
        cache = self.forward(seq.words if hasattr(seq, "words") else seq, rng)
        return self._loss_from_cache(cache, np.asarray(seq.labels, dtype=np.int64))[0]

    def _loss_from_cache(self, cache: ForwardCache, y: np.ndarray):
        """Loss and gradient w.r.t. the pre-softmax scores S (plus dT)."""
        n = len(y)
        if self.config.use_seq_opt:
            em = self.emissions(cache)
            loss, dEm, dT = chain_crf.nll_and_grads(em, self.params["T"], y)
            if self.config.raw_score_emissions:
                dS = dEm
            else:
                A = cache.A
                dS = A * (dEm - (dEm * A).sum(axis=1, keepdims=True))
            return loss, dS, dT
        S = cache.S
        log_norm = logsumexp(S, axis=1)
        loss = float((log_norm - S[np.arange(n), y]).sum())
        dS = cache.A.copy()
        dS[np.arange(n), y] -= 1.0
        return loss, dS, None

    def neg_log_likelihood(self, seq) -> float:
        return self.loss(seq)

    def loss_and_grad(self, seq, rng: np.random.Generator | None = None):
        """Loss for ``seq`` and gradients for every parameter array.

        Embedding tables come back as :class:`RowGrad` covering only the rows
        the sequence touched.
        """
        cfg = self.config
        cache = self.forward(seq.words, rng)
        y = np.asarray(seq.labels, dtype=np.int64)
        loss, dS, dT = self._loss_from_cache(cache, y)
        p = self.params
        grads: dict = {}
        if dT is not None:
            grads["T"] = dT
        grads["ff.W2"] = dS.T @ cache.Hh
        grads["ff.b2"] = dS.sum(axis=0)
        dZ1 = (dS @ p["ff.W2"]) * (1.0 - cache.Hh ** 2)
        grads["ff.W1"] = dZ1.T @ cache.D
        grads["ff.b1"] = dZ1.sum(axis=0)
        dD = dZ1 @ p["ff.W1"]
        d_h = cfg.lstm_dim
        dX_f, g_f = recurrent.backward(cache.fw, self.lstm("pred_fw"), dD[:, :d_h])
        dX_b, g_b = recurrent.backward(cache.bw, self.lstm("pred_bw"), dD[::-1, d_h:])
        for k_, v in g_f.items():
            grads[f"pred_fw.{k_}"] = v
        for k_, v in g_b.items():
            grads[f"pred_bw.{k_}"] = v
        dE = dX_f + dX_b[::-1]
        if cache.mask is not None:
            dE = dE * cache.mask
        at = 0
        if cfg.use_token_emb:
            grads["tok_emb"] = _rows_grad(cache.tok_idx, dE[:, :cfg.token_dim])
            at = cfg.token_dim
        if cfg.use_char_emb:
            grads.update(self._char_backward(cache, dE[:, at:]))
        return loss, grads

    def _char_forward(self, uniq):
        """Final forward/backward char-LSTM states for each distinct word.

        All words run as one right-padded batch per direction; the backward
        direction reads each word reversed.
        """
        cfg = self.config
        literal = cfg.literal_output_gate
        ids = [self.char_ids(w) for w in uniq]
        lengths = np.array([a.size for a in ids], dtype=np.int64)
        L = int(lengths.max())
        fw_ids = np.zeros((L, len(ids)), dtype=np.int64)
        bw_ids = np.zeros((L, len(ids)), dtype=np.int64)
        for j, a in enumerate(ids):
            fw_ids[:a.size, j] = a
            bw_ids[:a.size, j] = a[::-1]
        table = self.params["char_emb"]
        f = recurrent.forward_batch(table[fw_ids], self.lstm("char_fw"), literal)
        b = recurrent.forward_batch(table[bw_ids], self.lstm("char_bw"), literal)
        cols = np.arange(len(ids))
        B = np.hstack([f.H[lengths - 1, cols], b.H[lengths - 1, cols]])
        return B, (fw_ids, bw_ids, lengths, f, b)

    def _char_backward(self, cache: ForwardCache, dB_tok: np.ndarray) -> dict:
        cfg = self.config
        d_c = cfg.char_lstm_dim
        fw_ids, bw_ids, lengths, f, b = cache.char_caches
        n_words = lengths.size
        dB = np.zeros((n_words, 2 * d_c))
        np.add.at(dB, cache.inverse, dB_tok)
        L = fw_ids.shape[0]
        cols = np.arange(n_words)
        dHf = np.zeros((L, n_words, d_c))
        dHf[lengths - 1, cols] = dB[:, :d_c]
        dHb = np.zeros((L, n_words, d_c))
        dHb[lengths - 1, cols] = dB[:, d_c:]
        dXf, gf = recurrent.backward_batch(f, self.lstm("char_fw"), dHf)
        dXb, gb = recurrent.backward_batch(b, self.lstm("char_bw"), dHb)
        out = {f"char_fw.{n}": v for n, v in gf.items()}
        out.update({f"char_bw.{n}": v for n, v in gb.items()})
        valid = np.arange(L)[:, None] < lengths[None, :]
        out["char_emb"] = _rows_grad(np.concatenate([fw_ids[valid], bw_ids[valid]]),
                                     np.vstack([dXf[valid], dXb[valid]]))
        return out

    # decoding ---------------------------------------------------------------

    def predict(self, words) -> list[int]:
        cache = self.forward(words)
        if self.config.use_seq_opt:
            path, _ = chain_crf.viterbi(self.emissions(cache), self.params["T"])
            return path
        return [int(v) for v in np.argmax(cache.A, axis=1)]

    def predict_dataset(self, dataset: Dataset) -> list[list[int]]:
        return [self.predict(seq.words) for seq in dataset]


def embed_dim(cfg: Config) -> int:
    return cfg.token_dim * cfg.use_token_emb + 2 * cfg.char_lstm_dim * cfg.use_char_emb


def expected_shapes(cfg: Config, n_tokens: int, n_chars: int, k: int) -> dict:
    """Name -> shape for every array a model with this config carries."""
    shapes = {}
    if cfg.use_token_emb:
        shapes["tok_emb"] = (n_tokens, cfg.token_dim)
    if cfg.use_char_emb:
        shapes["char_emb"] = (n_chars, cfg.char_dim)
        for pre in ("char_fw", "char_bw"):
            shapes.update(_lstm_shapes(pre, cfg.char_dim, cfg.char_lstm_dim))
    d_in = embed_dim(cfg)
    for pre in ("pred_fw", "pred_bw"):
        shapes.update(_lstm_shapes(pre, d_in, cfg.lstm_dim))
    shapes["ff.W1"] = (cfg.hidden_dim, 2 * cfg.lstm_dim)
    shapes["ff.b1"] = (cfg.hidden_dim,)
    shapes["ff.W2"] = (k, cfg.hidden_dim)
    shapes["ff.b2"] = (k,)
    if cfg.use_seq_opt:
        shapes["T"] = (k, k)
    return shapes


def _lstm_shapes(prefix, d_in, d_h):
    return {
        f"{prefix}.Wi": (d_h, d_in + 2 * d_h),
        f"{prefix}.Wc": (d_h, d_in + d_h),
        f"{prefix}.Wo": (d_h, d_in + 2 * d_h),
        f"{prefix}.bi": (d_h,),
        f"{prefix}.bc": (d_h,),
        f"{prefix}.bo": (d_h,),
    }


def expected_param_count(cfg: Config, n_tokens: int, n_chars: int, k: int) -> int:
    """Closed-form parameter count for a configuration and vocabulary sizes."""
    d_in = embed_dim(cfg)
    total = 2 * LstmParams.size(d_in, cfg.lstm_dim)
    total += cfg.hidden_dim * 2 * cfg.lstm_dim + cfg.hidden_dim + k * cfg.hidden_dim + k
    if cfg.use_token_emb:
        total += n_tokens * cfg.token_dim
    if cfg.use_char_emb:
        total += n_chars * cfg.char_dim + 2 * LstmParams.size(cfg.char_dim, cfg.char_lstm_dim)
    if cfg.use_seq_opt:
        total += k * k
    return total
