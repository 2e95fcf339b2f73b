"""Vocabularies, pretrained vector files, the character encoder and dropout."""
from __future__ import annotations

import logging
from typing import Iterable

import numpy as np

from . import recurrent
from .errors import ParseError
from .numerics import embedding_uniform
from .recurrent import LstmParams

log = logging.getLogger(__name__)

UNK = "<UNK>"


class TokenVocab:
    """Lowercased token -> row index.  Row 0 is the unknown-token row."""

    def __init__(self, tokens: Iterable[str] = ()):
        self.itos = [UNK]
        self.stoi: dict[str, int] = {}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        key = token.lower()
        idx = self.stoi.get(key)
        if idx is None:
            idx = len(self.itos)
            self.stoi[key] = idx
            self.itos.append(key)
        return idx

    def lookup(self, token: str) -> int:
        return self.stoi.get(token.lower(), 0)

    def __contains__(self, token):
        return token.lower() in self.stoi

    def __len__(self):
        return len(self.itos)


class CharVocab:
    """Case-sensitive character -> row index.  Row 0 is the unknown character."""

    def __init__(self, chars: Iterable[str] = ()):
        self.itos = [UNK]
        self.stoi: dict[str, int] = {}
        for ch in chars:
            if ch not in self.stoi:
                self.stoi[ch] = len(self.itos)
                self.itos.append(ch)

    def lookup(self, ch: str) -> int:
        return self.stoi.get(ch, 0)

    def encode(self, word: str) -> np.ndarray:
        return np.fromiter((self.stoi.get(ch, 0) for ch in word), dtype=np.int64, count=len(word))

    def __len__(self):
        return len(self.itos)


def load_pretrained(path, expected_dim: int, rng: np.random.Generator):
    """Read ``token v1 ... vd`` lines into a vocabulary and table.

    Tokens are lowercased on load; a later duplicate is skipped with a
    warning.  The unknown-token row is drawn at random.
    """
    vocab = TokenVocab()
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                continue
            parts = line.split(" ")
            if len(parts) != expected_dim + 1:
                raise ParseError(
                    f"expected a token and {expected_dim} values, got {len(parts) - 1} values",
                    lineno, path,
                )
            try:
                vec = np.array([float(v) for v in parts[1:]], dtype=np.float64)
            except ValueError:
                raise ParseError("non-numeric vector entry", lineno, path) from None
            if not np.all(np.isfinite(vec)):
                raise ParseError("non-finite vector entry", lineno, path)
            if parts[0] in vocab:
                log.warning("%s:%d: duplicate token %r ignored", path, lineno, parts[0])
                continue
            vocab.add(parts[0])
            rows.append(vec)
    table = np.vstack([embedding_uniform(rng, 1, expected_dim)] + [r[None, :] for r in rows])
    return vocab, table


def save_pretrained(vocab: TokenVocab, table: np.ndarray, path):
    """Write every non-UNK row in the pretrained text format."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for idx in range(1, len(vocab)):
            fh.write(vocab.itos[idx] + " " + " ".join(repr(float(v)) for v in table[idx]) + "\n")


def char_lstm_inputs(word: str, char_vocab: CharVocab, char_table: np.ndarray) -> np.ndarray:
    return char_table[char_vocab.encode(word)]


def encode_token_chars(token, char_vocab: CharVocab, char_table: np.ndarray,
                       fwd: LstmParams, bwd: LstmParams, literal: bool = False) -> np.ndarray:
    """Final forward state joined with final backward state over the characters."""
    word = getattr(token, "text", token)
    if not word:
        raise ValueError("cannot encode an empty token")
    X = char_lstm_inputs(word, char_vocab, char_table)
    f = recurrent.forward(X, fwd, literal)
    b = recurrent.forward(X[::-1], bwd, literal)
    return np.concatenate([f.H[-1], b.H[-1]])


def embed_sequence(tokens, token_vocab, token_table, char_vocab, char_table,
                   char_fwd, char_bwd, literal: bool = False) -> list[np.ndarray]:
    """Token row joined with the character encoding, per token.

    Pass ``None`` for the token or the character components to drop that
    half of the embedding.
    """
    if len(tokens) == 0:
        raise ValueError("empty token list")
    out = []
    for tok in tokens:
        word = getattr(tok, "text", tok)
        parts = []
        if token_table is not None:
            parts.append(token_table[token_vocab.lookup(word)])
        if char_table is not None:
            parts.append(encode_token_chars(word, char_vocab, char_table, char_fwd, char_bwd, literal))
        out.append(np.concatenate(parts))
    return out


def dropout_mask(shape, p: float, rng: np.random.Generator) -> np.ndarray:
    """Inverted-dropout multiplier: 0 with probability p, else 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if p == 0.0:
        return np.ones(shape)
    return (rng.random(shape) >= p) / (1.0 - p)


def dropout(e: np.ndarray, p: float, mode: str, rng: np.random.Generator | None = None) -> np.ndarray:
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must be in [0, 1), got {p}")
    if mode == "infer" or p == 0.0:
        return e
    if mode != "train":
        raise ValueError(f"mode must be train or infer, not {mode!r}")
    return e * dropout_mask(e.shape, p, rng)
