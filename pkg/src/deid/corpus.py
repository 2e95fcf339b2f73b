"""Tokens, label inventories, token-per-line files and stand-off conversion.

Offsets are UTF-8 byte offsets into the source note, end-exclusive.
"""
from __future__ import annotations

import bisect
import math
import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ParseError, SpanConflictError, UnknownLabelError
from .numerics import make_rng

OUTSIDE = "O"
CATEGORIES = ("AGE", "CONTACT", "DATE", "ID", "LOCATION", "NAME", "PROFESSION", "O")


@dataclass(frozen=True)
class Token:
    text: str
    start: int
    end: int


def _char_class(ch: str) -> str:
    if ch.isspace():
        return "space"
    if ch.isdigit():
        return "digit"
    if ch.isalpha() or unicodedata.category(ch).startswith("M"):
        return "letter"
    return "punct"


def tokenize(text: str) -> list[Token]:
    """Split on whitespace, then punctuation, then letter/digit boundaries.

    Every punctuation or symbol character becomes its own token.

    >>> [t.text for t in tokenize("Results02/20/2087")]
    ['Results', '02', '/', '20', '/', '2087']
    """
    tokens: list[Token] = []
    buf: list[str] = []
    buf_start = 0
    buf_class = None
    pos = 0

    def flush():
        if buf:
            s = "".join(buf)
            tokens.append(Token(s, buf_start, buf_start + len(s.encode("utf-8"))))
            buf.clear()

    for ch in text:
        width = len(ch.encode("utf-8"))
        cls = _char_class(ch)
        if cls == "space":
            flush()
            buf_class = None
        elif cls == "punct":
            flush()
            tokens.append(Token(ch, pos, pos + width))
            buf_class = None
        else:
            if cls != buf_class:
                flush()
                buf_start = pos
                buf_class = cls
            buf.append(ch)
        pos += width
    flush()
    return tokens


@dataclass
class LabelSet:
    labels: list[str]
    hipaa_mask: list[bool]
    category_of: list[str]
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not (len(self.labels) == len(self.hipaa_mask) == len(self.category_of)):
            raise ValueError("label set columns have different lengths")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("duplicate label names")
        if not self.labels or self.labels[0] != OUTSIDE:
            raise ValueError(f"the first label must be {OUTSIDE!r}")
        for name, hipaa, cat in zip(self.labels, self.hipaa_mask, self.category_of):
            if cat not in CATEGORIES:
                raise ValueError(f"label {name}: unknown category {cat!r}")
            if name == OUTSIDE and (hipaa or cat != "O"):
                raise ValueError("the non-PHI label must have category O and no HIPAA flag")
            if name != OUTSIDE and cat == "O":
                raise ValueError(f"PHI label {name} needs a category other than O")
        self._index = {name: i for i, name in enumerate(self.labels)}

    def __len__(self):
        return len(self.labels)

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownLabelError(name) from None

    def __contains__(self, name):
        return name in self._index

    def hipaa_array(self) -> np.ndarray:
        return np.array(self.hipaa_mask, dtype=bool)

    @classmethod
    def default(cls) -> "LabelSet":
        return cls.from_rows(DEFAULT_LABELS)

    @classmethod
    def from_rows(cls, rows: Iterable[tuple[str, str, bool]]) -> "LabelSet":
        rows = list(rows)
        return cls(
            labels=[r[0] for r in rows],
            category_of=[r[1] for r in rows],
            hipaa_mask=[bool(r[2]) for r in rows],
        )

    def rows(self):
        return list(zip(self.labels, self.category_of, self.hipaa_mask))

    @classmethod
    def read(cls, path) -> "LabelSet":
        """Read ``name<TAB>category<TAB>hipaa(0|1)`` lines."""
        rows = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip() or line.startswith("#"):
                    continue
                parts = line.split("\t")
                if len(parts) != 3 or parts[2] not in ("0", "1"):
                    raise ParseError("expected name<TAB>category<TAB>0|1", lineno, path)
                rows.append((parts[0], parts[1], parts[2] == "1"))
        try:
            return cls.from_rows(rows)
        except ValueError as exc:
            raise ParseError(str(exc), path=path) from None

    def write(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for name, cat, hipaa in self.rows():
                fh.write(f"{name}\t{cat}\t{int(hipaa)}\n")


# i2b2-style PHI types grouped by category; the third column marks the types
# HIPAA requires removing.
DEFAULT_LABELS = (
    ("O", "O", False),
    ("PATIENT", "NAME", True),
    ("DOCTOR", "NAME", False),
    ("AGE_OVER_89", "AGE", True),
    ("AGE", "AGE", False),
    ("PHONE", "CONTACT", True),
    ("EMAIL", "CONTACT", True),
    ("DATE", "DATE", True),
    ("YEAR", "DATE", False),
    ("HOLIDAY", "DATE", False),
    ("DAY_OF_WEEK", "DATE", False),
    ("MEDICAL_RECORD", "ID", True),
    ("SSN", "ID", True),
    ("ACCOUNT", "ID", True),
    ("STREET", "LOCATION", True),
    ("CITY", "LOCATION", True),
    ("ZIP", "LOCATION", True),
    ("STATE", "LOCATION", False),
    ("COUNTRY", "LOCATION", False),
    ("HOSPITAL", "LOCATION", False),
    ("EMPLOYER", "LOCATION", True),
    ("PROFESSION", "PROFESSION", False),
)


@dataclass
class LabeledSequence:
    tokens: list[Token]
    labels: list[int]
    note_id: str = ""

    def __post_init__(self):
        if len(self.tokens) != len(self.labels):
            raise ValueError("tokens and labels differ in length")
        if not self.tokens:
            raise ValueError("a sequence needs at least one token")

    def __len__(self):
        return len(self.tokens)

    @property
    def words(self) -> list[str]:
        return [t.text for t in self.tokens]


@dataclass
class Dataset:
    sequences: list[LabeledSequence]
    label_set: LabelSet

    def __len__(self):
        return len(self.sequences)

    def __iter__(self):
        return iter(self.sequences)

    def with_labels(self, labels: Sequence[Sequence[int]]) -> "Dataset":
        """Same tokens, different label assignments (e.g. predictions)."""
        if len(labels) != len(self.sequences):
            raise ValueError("label assignment count does not match sequences")
        seqs = [
            LabeledSequence(s.tokens, [int(v) for v in lab], s.note_id)
            for s, lab in zip(self.sequences, labels)
        ]
        return Dataset(seqs, self.label_set)

    def label_lists(self) -> list[list[int]]:
        return [list(s.labels) for s in self.sequences]


def standoff_to_sequence(text: str, spans, label_set: LabelSet, note_id: str = "") -> LabeledSequence:
    """Label tokens from ``(start, end, label)`` byte-offset spans.

    A token gets a span's label when the two intersect at all; when a token
    touches two spans the earlier-starting span wins.
    """
    n_bytes = len(text.encode("utf-8"))
    ordered = sorted((int(s), int(e), lab) for s, e, lab in spans)
    for s, e, lab in ordered:
        if not 0 <= s < e <= n_bytes:
            raise SpanConflictError(f"span ({s},{e}) outside text of {n_bytes} bytes")
        if lab not in label_set:
            raise UnknownLabelError(lab)
    for (s0, e0, l0), (s1, e1, l1) in zip(ordered, ordered[1:]):
        if s1 < e0:
            raise SpanConflictError(f"spans ({s0},{e0},{l0}) and ({s1},{e1},{l1}) overlap")
    tokens = tokenize(text)
    starts = [s for s, _, _ in ordered]
    labels = []
    for tok in tokens:
        # candidate spans start before tok.end; the one just before tok.start may reach in
        j = bisect.bisect_right(starts, tok.start) - 1
        label = OUTSIDE
        for idx in (j, j + 1):
            if 0 <= idx < len(ordered):
                s, e, lab = ordered[idx]
                if s < tok.end and tok.start < e:
                    label = lab
                    break
        labels.append(label_set.index(label))
    return LabeledSequence(tokens, labels, note_id)


def read_standoff(text_path, ann_path, label_set: LabelSet) -> LabeledSequence:
    """Read a note and its ``start<TAB>end<TAB>label`` annotation file."""
    raw = Path(text_path).read_bytes()
    text = raw.decode("utf-8")
    spans = []
    with open(ann_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or (line.startswith("#") and "\t" not in line):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise ParseError("expected start<TAB>end<TAB>label", lineno, ann_path)
            try:
                spans.append((int(parts[0]), int(parts[1]), parts[2]))
            except ValueError:
                raise ParseError("offsets must be integers", lineno, ann_path) from None
    return standoff_to_sequence(text, spans, label_set, note_id=Path(text_path).stem)


def write_standoff(text: str, spans, text_path, ann_path):
    Path(text_path).write_bytes(text.encode("utf-8"))
    with open(ann_path, "w", encoding="utf-8", newline="\n") as fh:
        for s, e, lab in spans:
            fh.write(f"{s}\t{e}\t{lab}\n")


def _default_offsets(words):
    out = []
    pos = 0
    for w in words:
        width = len(w.encode("utf-8"))
        out.append((pos, pos + width))
        pos += width + 1
    return out


def read_token_file(path, label_set: LabelSet | None = None) -> Dataset:
    """Parse the token-per-line format.

    Lines are ``token<TAB>label``; a blank line ends a sequence; a line that
    starts with ``#`` and contains no tab is a comment (so a literal ``#``
    token is still readable).  The comments ``# note_id = ...`` and
    ``# offsets = s:e s:e ...`` carry sequence metadata.
    """
    label_set = label_set or LabelSet.default()
    sequences: list[LabeledSequence] = []
    words: list[str] = []
    labels: list[int] = []
    meta: dict = {}
    meta_line = 0

    def close():
        if not words:
            meta.clear()
            return
        note_id = meta.get("note_id", f"seq{len(sequences)}")
        if "offsets" in meta:
            spans = meta["offsets"]
            if len(spans) != len(words):
                raise ParseError(
                    f"offsets list has {len(spans)} entries for {len(words)} tokens",
                    meta_line, path,
                )
        else:
            spans = _default_offsets(words)
        toks = [Token(w, s, e) for w, (s, e) in zip(words, spans)]
        sequences.append(LabeledSequence(toks, list(labels), note_id))
        words.clear()
        labels.clear()
        meta.clear()

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line:
                close()
                continue
            if line.startswith("#") and "\t" not in line:
                body = line[1:].strip()
                key, sep, value = body.partition("=")
                key = key.strip()
                if sep and key == "note_id":
                    meta["note_id"] = value.strip()
                elif sep and key == "offsets":
                    try:
                        meta["offsets"] = [
                            tuple(int(x) for x in item.split(":"))
                            for item in value.split()
                        ]
                    except ValueError:
                        raise ParseError("bad offsets comment", lineno, path) from None
                    meta_line = lineno
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0]:
                raise ParseError(f"expected token<TAB>label, got {len(parts)} column(s)", lineno, path)
            if parts[1] not in label_set:
                raise UnknownLabelError(parts[1], lineno)
            words.append(parts[0])
            labels.append(label_set.index(parts[1]))
    close()
    return Dataset(sequences, label_set)


def write_token_file(dataset: Dataset, path):
    names = dataset.label_set.labels
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for seq in dataset.sequences:
            fh.write(f"# note_id = {seq.note_id}\n")
            fh.write("# offsets = " + " ".join(f"{t.start}:{t.end}" for t in seq.tokens) + "\n")
            for tok, lab in zip(seq.tokens, seq.labels):
                if any(ch.isspace() for ch in tok.text) or not tok.text:
                    raise ValueError(f"token {tok.text!r} cannot be written one-per-line")
                fh.write(f"{tok.text}\t{names[lab]}\n")
            fh.write("\n")


def split_sizes(n: int, fractions: Sequence[float]) -> list[int]:
    if any(f <= 0 for f in fractions) or not math.isclose(sum(fractions), 1.0, abs_tol=1e-9):
        raise ValueError("fractions must be positive and sum to 1")
    if n < len(fractions):
        raise ValueError(f"cannot split {n} sequences into {len(fractions)} parts")
    exact = [f * n for f in fractions]
    sizes = [int(math.floor(x + 1e-9)) for x in exact]
    rest = n - sum(sizes)
    order = sorted(range(len(sizes)), key=lambda i: (-(exact[i] - sizes[i]), i))
    for i in order[:rest]:
        sizes[i] += 1
    for i in range(len(sizes)):
        if sizes[i] == 0:
            donor = max(range(len(sizes)), key=lambda j: sizes[j])
            sizes[donor] -= 1
            sizes[i] = 1
    return sizes


def split_dataset(dataset: Dataset, fractions=(0.8, 0.1, 0.1), seed: int = 0):
    """Partition sequences into len(fractions) datasets, deterministically per seed."""
    sizes = split_sizes(len(dataset), fractions)
    order = make_rng(seed).permutation(len(dataset))
    parts = []
    at = 0
    for size in sizes:
        idx = sorted(order[at:at + size].tolist())
        parts.append(Dataset([dataset.sequences[i] for i in idx], dataset.label_set))
        at += size
    return tuple(parts)
