"""Run configuration and the ``key = value`` config-file format."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .errors import ParseError


@dataclass
class Config:
    # character-enhanced embeddings
    char_dim: int = 25
    char_lstm_dim: int = 25
    token_dim: int = 100
    # label prediction
    lstm_dim: int = 100
    hidden_dim: int = 100
    # ablations
    use_seq_opt: bool = True
    use_token_emb: bool = True
    use_char_emb: bool = True
    use_pretrain: bool = True
    pretrained_path: str = ""
    # variants
    literal_output_gate: bool = False
    raw_score_emissions: bool = False
    # SGD
    learning_rate: float = 0.005
    clip_norm: float = 5.0
    max_epochs: int = 100
    patience: int = 10
    dropout: float = 0.5
    seed: int = 0
    train_fraction: float = 1.0
    # feature CRF baseline
    crf_learning_rate: float = 0.05
    crf_l2: float = 1e-4
    crf_max_epochs: int = 30
    crf_patience: int = 5

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.learning_rate <= 0 or self.crf_learning_rate <= 0:
            raise ValueError("learning rates must be positive")
        if self.patience < 1 or self.crf_patience < 1:
            raise ValueError("patience must be at least 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if not 0.0 < self.train_fraction <= 1.0:
            raise ValueError("train_fraction must be in (0, 1]")
        if not (self.use_token_emb or self.use_char_emb):
            raise ValueError("at least one of token and character embeddings is required")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive")
        if self.crf_l2 < 0:
            raise ValueError("crf_l2 must be nonnegative")
        for name in ("char_dim", "char_lstm_dim", "token_dim", "lstm_dim", "hidden_dim",
                     "max_epochs", "crf_max_epochs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    def replace(self, **changes) -> "Config":
        return dataclasses.replace(self, **changes)

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    @classmethod
    def from_items(cls, items, base: "Config | None" = None) -> "Config":
        """Build from ``(key, text)`` pairs, coercing text to each field's type."""
        base = base or cls()
        types = {f.name: f.type for f in fields(cls)}
        changes = {}
        for key, text in items:
            if key not in types:
                raise KeyError(f"unknown config key {key!r}")
            changes[key] = coerce(types[key], text)
        return dataclasses.replace(base, **changes)


def coerce(kind, text):
    if not isinstance(text, str):
        return text
    kind = kind if isinstance(kind, str) else kind.__name__
    if kind == "bool":
        low = text.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    return text.strip()


def format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_kv_file(path) -> list[tuple[str, str]]:
    """``key = value`` lines; ``#`` starts a comment line."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            key, sep, value = s.partition("=")
            if not sep or not key.strip():
                raise ParseError("expected key = value", lineno, path)
            out.append((key.strip(), value.strip()))
    return out


def load_config(path=None, overrides=None) -> Config:
    cfg = Config()
    if path:
        try:
            cfg = Config.from_items(read_kv_file(path), cfg)
        except (KeyError, ValueError) as exc:
            raise ParseError(str(exc), path=path) from None
    if overrides:
        cfg = Config.from_items(overrides.items(), cfg)
    return cfg
