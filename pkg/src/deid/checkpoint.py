"""On-disk model format.

A UTF-8 text header::

    DEID-MODEL v1
    model<TAB>ann
    key<TAB>value ...
    array<TAB>name<TAB>d0,d1<TAB>crc32
    end

followed by each listed array as little-endian float64 in header order.
"""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import Config, format_value
from .corpus import LabelSet
from .embeddings import CharVocab, TokenVocab
from .errors import CheckpointError
from .feature_crf import FeatureCRF, FeatureTemplate, Gazetteers
from .model import Tagger

MAGIC = "DEID-MODEL"
VERSION = "v1"


@dataclass
class Checkpoint:
    kind: str
    model: object
    config: Config
    label_set: LabelSet
    best_dev_f1: float = 0.0
    epoch: int = 0
    history: list = field(default_factory=list)

    def predict(self, words) -> list[int]:
        return self.model.predict(words)

    def predict_dataset(self, dataset) -> list[list[int]]:
        return self.model.predict_dataset(dataset)

    def arrays(self) -> dict:
        return self.model.params

    def param_count(self) -> int:
        return int(sum(a.size for a in self.arrays().values()))


def _check_text(s: str, what: str) -> str:
    if "\n" in s or "\t" in s:
        raise CheckpointError(f"{what} {s!r} contains a tab or newline")
    return s


def to_bytes(ckpt: Checkpoint) -> bytes:
    lines = [f"{MAGIC} {VERSION}", f"model\t{ckpt.kind}", f"epoch\t{ckpt.epoch}",
             f"best_dev_f1\t{float(ckpt.best_dev_f1)!r}"]
    for key, value in ckpt.config.items():
        lines.append(f"config.{key}\t{_check_text(format_value(value), 'config value')}")
    for name, cat, hipaa in ckpt.label_set.rows():
        lines.append(f"label\t{_check_text(name, 'label')}\t{cat}\t{int(hipaa)}")
    for row in ckpt.history:
        lines.append("history\t" + "\t".join(repr(float(v)) if isinstance(v, float) else str(v) for v in row))
    m = ckpt.model
    if ckpt.kind == "ann":
        lines.append(f"pretrained\t{format_value(bool(m.pretrained))}")
        if m.token_vocab is not None:
            lines += [f"vocab.token\t{_check_text(t, 'token')}" for t in m.token_vocab.itos[1:]]
        if m.char_vocab is not None:
            lines += [f"vocab.char\t{_check_text(c, 'character')}" for c in m.char_vocab.itos[1:]]
    elif ckpt.kind == "crf":
        for t in m.templates:
            lines.append(f"template\t{t.kind}\t" + ",".join(str(o) for o in t.offsets))
        for name in m.gazetteers.names():
            for entry in m.gazetteers.entries[name]:
                lines.append(f"gazetteer\t{_check_text(name, 'gazetteer')}\t{' '.join(entry)}")
        lines += [f"feature\t{_check_text(f, 'feature')}" for f in m.features]
    else:
        raise CheckpointError(f"unknown model kind {ckpt.kind!r}")
    blobs = []
    for name, arr in ckpt.arrays().items():
        data = np.ascontiguousarray(arr, dtype="<f8").tobytes()
        shape = ",".join(str(d) for d in arr.shape)
        lines.append(f"array\t{name}\t{shape}\t{zlib.crc32(data):08x}")
        blobs.append(data)
    lines.append("end")
    return ("\n".join(lines) + "\n").encode("utf-8") + b"".join(blobs)


def save_checkpoint(ckpt: Checkpoint, path):
    Path(path).write_bytes(to_bytes(ckpt))


def load_checkpoint(path) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from None
    return from_bytes(data)


def from_bytes(data: bytes) -> Checkpoint:
    pos = 0
    header = []
    while True:
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise CheckpointError("header: truncated before the 'end' line")
        try:
            line = data[pos:nl].decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError(f"header: undecodable line at byte {pos}") from None
        pos = nl + 1
        if line == "end":
            break
        header.append(line)
    if not header:
        raise CheckpointError("header: empty")
    magic = header[0].split(" ")
    if magic[0] != MAGIC:
        raise CheckpointError("header: not a model checkpoint (bad magic line)")
    if len(magic) != 2 or magic[1] != VERSION:
        raise CheckpointError(f"header: unsupported format version {header[0]!r}, expected {VERSION}")

    fields: dict = {}
    config_items, labels, history = [], [], []
    tokens, chars, templates, gaz, features, arrays = [], [], [], {}, [], []
    for lineno, line in enumerate(header[1:], 2):
        key, _, value = line.partition("\t")
        try:
            if key.startswith("config."):
                config_items.append((key[len("config."):], value))
            elif key == "label":
                name, cat, hipaa = value.split("\t")
                labels.append((name, cat, hipaa == "1"))
            elif key == "history":
                history.append(tuple(_num(v) for v in value.split("\t")))
            elif key == "vocab.token":
                tokens.append(value)
            elif key == "vocab.char":
                chars.append(value)
            elif key == "template":
                kind, offs = value.split("\t")
                templates.append(FeatureTemplate(kind, tuple(int(o) for o in offs.split(",") if o)))
            elif key == "gazetteer":
                name, entry = value.split("\t")
                gaz.setdefault(name, []).append(entry)
            elif key == "feature":
                features.append(value)
            elif key == "array":
                name, shape, crc = value.split("\t")
                dims = tuple(int(d) for d in shape.split(",") if d)
                arrays.append((name, dims, int(crc, 16)))
            else:
                fields[key] = value
        except ValueError as exc:
            raise CheckpointError(f"header line {lineno} ({key}): {exc}") from None

    try:
        config = Config.from_items(config_items)
        label_set = LabelSet.from_rows(labels)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"header: {exc}") from None

    params = {}
    for name, dims, crc in arrays:
        size = int(np.prod(dims)) if dims else 1
        chunk = data[pos:pos + 8 * size]
        if len(chunk) != 8 * size:
            raise CheckpointError(f"array {name}: truncated ({len(chunk)} of {8 * size} bytes)")
        if zlib.crc32(chunk) != crc:
            raise CheckpointError(f"array {name}: checksum mismatch")
        params[name] = np.frombuffer(chunk, dtype="<f8").astype(np.float64).reshape(dims)
        pos += 8 * size
    if pos != len(data):
        raise CheckpointError(f"trailing data: {len(data) - pos} bytes after the last array")

    kind = fields.get("model")
    try:
        if kind == "ann":
            token_vocab = TokenVocab(tokens) if config.use_token_emb else None
            char_vocab = CharVocab(chars) if config.use_char_emb else None
            model = Tagger(config, label_set, token_vocab, char_vocab, params,
                           pretrained=fields.get("pretrained") == "true")
        elif kind == "crf":
            model = FeatureCRF(label_set, templates, Gazetteers(gaz), features,
                               params["W"], params["T"], config)
        else:
            raise CheckpointError(f"header: unknown model kind {kind!r}")
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"arrays: {exc}") from None
    return Checkpoint(kind, model, config, label_set, float(fields.get("best_dev_f1", 0.0)),
                      int(fields.get("epoch", 0)), history)


def _num(text):
    try:
        return int(text)
    except ValueError:
        return float(text)
