"""Synthetic clinical-note generator with exact gold PHI labels.

Notes are runs of filler sentences drawn from a clinical-ish vocabulary.
PHI mentions arrive with short cue phrases ("seen by Dr. {}", "MRN {}")
spliced in at word boundaries.  Mentions come from lexicons (names,
places, professions) or pattern generators (dates, phone numbers, record
numbers), and every one is logged with its generator so labels can be
audited against provenance.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .corpus import Dataset, LabelSet, standoff_to_sequence, tokenize

LEXICON_NAMES = (
    "first_names", "last_names", "cities", "states", "countries", "streets",
    "street_suffixes", "hospitals", "employers", "professions", "holidays",
    "email_domains", "filler",
)

DEFAULT_DENSITIES = {
    "NAME": 0.04,
    "DATE": 0.04,
    "LOCATION": 0.03,
    "CONTACT": 0.015,
    "ID": 0.015,
    "AGE": 0.01,
    "PROFESSION": 0.01,
}

# label weights within each category
LABEL_WEIGHTS = {
    "NAME": {"PATIENT": 0.55, "DOCTOR": 0.45},
    "AGE": {"AGE": 0.8, "AGE_OVER_89": 0.2},
    "CONTACT": {"PHONE": 0.7, "EMAIL": 0.3},
    "DATE": {"DATE": 0.7, "YEAR": 0.1, "HOLIDAY": 0.1, "DAY_OF_WEEK": 0.1},
    "ID": {"MEDICAL_RECORD": 0.5, "SSN": 0.2, "ACCOUNT": 0.3},
    "LOCATION": {"STREET": 0.15, "CITY": 0.25, "ZIP": 0.1, "STATE": 0.15,
                 "COUNTRY": 0.05, "HOSPITAL": 0.2, "EMPLOYER": 0.1},
    "PROFESSION": {"PROFESSION": 1.0},
}

CUES = {
    "PATIENT": ["Patient {} was seen", "{} is a pleasant", "Mr. {}", "Ms. {}",
                "spoke with {} today", "{} reports", "patient name: {}"],
    "DOCTOR": ["Dr. {}", "seen by Dr. {}", "{}, MD", "attending: {}", "discussed with Dr. {}"],
    "AGE": ["{} year old", "{} yo", "age {}", "aged {}"],
    "AGE_OVER_89": ["{} year old", "{} yo", "age {}", "aged {}"],
    "PHONE": ["call {}", "phone: {}", "tel {}", "reached at {}", "pager {}"],
    "EMAIL": ["email {}", "contact {}", "e-mail: {}"],
    "DATE": ["on {}", "admitted {}", "dated {}", "follow up {}", "discharged on {}"],
    "YEAR": ["in {}", "since {}", "back in {}"],
    "HOLIDAY": ["over {}", "around {}", "after {}"],
    "DAY_OF_WEEK": ["on {}", "last {}", "next {}"],
    "MEDICAL_RECORD": ["MRN {}", "MRN: {}", "record {}", "medical record number {}"],
    "SSN": ["SSN {}", "social security {}"],
    "ACCOUNT": ["account {}", "acct {}", "billing {}"],
    "STREET": ["lives at {}", "address {}", "home at {}"],
    "CITY": ["from {}", "lives in {}", "moved to {}", "transferred from {}"],
    "ZIP": ["zip {}", "zip code {}"],
    "STATE": ["in {}", "from {}", "state of {}"],
    "COUNTRY": ["travel to {}", "born in {}", "visiting from {}"],
    "HOSPITAL": ["at {}", "transferred to {}", "admitted to {}", "followed at {}"],
    "EMPLOYER": ["works at {}", "employed by {}", "works for {}"],
    "PROFESSION": ["works as a {}", "retired {}", "is a {}", "occupation: {}"],
}

MONTHS = ["January", "February", "March", "April", "May", "June", "July",
          "August", "September", "October", "November", "December"]
DAYS = ["Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday"]


def load_lexicon(path) -> list[str]:
    text = Path(path).read_text(encoding="utf-8")
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


def default_lexicons() -> dict[str, list[str]]:
    base = resources.files("deid") / "data"
    return {name: load_lexicon(base / f"{name}.txt") for name in LEXICON_NAMES}


@dataclass
class GenConfig:
    n_notes: int = 100
    min_tokens: int = 60
    max_tokens: int = 120
    densities: dict = field(default_factory=lambda: dict(DEFAULT_DENSITIES))
    lexicons: dict = field(default_factory=default_lexicons)
    seed: int = 0
    label_set: LabelSet = field(default_factory=LabelSet.default)
    note_prefix: str = "note"

    def validate(self):
        if self.n_notes < 0:
            raise ValueError("n_notes must be nonnegative")
        if not 1 <= self.min_tokens <= self.max_tokens:
            raise ValueError("need 1 <= min_tokens <= max_tokens")
        for cat, d in self.densities.items():
            if cat not in LABEL_WEIGHTS:
                raise ValueError(f"unknown PHI category {cat!r}")
            if not 0.0 <= d <= 1.0:
                raise ValueError(f"density for {cat} must lie in [0, 1]")
            if d > 0 and not any(lab in self.label_set for lab in LABEL_WEIGHTS[cat]):
                raise ValueError(f"density for {cat} is positive but the label set has none of its labels")
        if sum(self.densities.values()) > 0.5 + 1e-12:
            raise ValueError("densities must sum to at most 0.5")
        for name in LEXICON_NAMES:
            if not self.lexicons.get(name):
                raise ValueError(f"lexicon {name!r} is missing or empty")


@dataclass(frozen=True)
class Provenance:
    note_id: str
    start: int
    end: int
    label: str
    source: str


class _Generator:
    def __init__(self, config: GenConfig):
        config.validate()
        self.cfg = config
        self.lex = config.lexicons
        self.labels = {}
        for cat, weights in LABEL_WEIGHTS.items():
            names = [lab for lab in weights if lab in config.label_set]
            if names:
                w = np.array([weights[n] for n in names])
                self.labels[cat] = (names, w / w.sum())
        self.cats = [c for c in LABEL_WEIGHTS if config.densities.get(c, 0.0) > 0]
        self.rates = self._calibrate()

    # mention generators: each returns (surface, source)

    def _pick(self, rng, name):
        items = self.lex[name]
        return items[int(rng.integers(len(items)))]

    def _digits(self, rng, n):
        return "".join(str(d) for d in rng.integers(0, 10, n))

    def _date(self, rng):
        y = int(rng.integers(2060, 2100)) if rng.random() < 0.7 else int(rng.integers(1990, 2025))
        m = int(rng.integers(1, 13))
        d = int(rng.integers(1, 29))
        form = int(rng.integers(6))
        if form == 0:
            return f"{m:02d}/{d:02d}/{y}"
        if form == 1:
            return f"{m}/{d}/{y % 100:02d}"
        if form == 2:
            return f"{MONTHS[m - 1]} {d}, {y}"
        if form == 3:
            return f"{MONTHS[m - 1][:3]} {d}"
        if form == 4:
            return f"{y}-{m:02d}-{d:02d}"
        return f"{d} {MONTHS[m - 1]} {y}"

    def mention(self, label, rng):
        pick = lambda name: self._pick(rng, name)
        if label == "PATIENT":
            form = rng.random()
            if form < 0.5:
                return f"{pick('first_names')} {pick('last_names')}", "lexicon:first_names+last_names"
            if form < 0.8:
                return pick("last_names"), "lexicon:last_names"
            return pick("first_names"), "lexicon:first_names"
        if label == "DOCTOR":
            if rng.random() < 0.6:
                return pick("last_names"), "lexicon:last_names"
            return f"{pick('first_names')} {pick('last_names')}", "lexicon:first_names+last_names"
        if label == "AGE":
            return str(int(rng.integers(1, 90))), "pattern:age"
        if label == "AGE_OVER_89":
            return str(int(rng.integers(90, 105))), "pattern:age_over_89"
        if label == "PHONE":
            a, b, c = self._digits(rng, 3), self._digits(rng, 3), self._digits(rng, 4)
            form = int(rng.integers(3))
            s = (f"({a}) {b}-{c}", f"{a}-{b}-{c}", f"{a}.{b}.{c}")[form]
            return s, "pattern:phone"
        if label == "EMAIL":
            user = (pick("first_names")[0] + pick("last_names")).lower()
            return f"{user}@{pick('email_domains')}", "pattern:email"
        if label == "DATE":
            return self._date(rng), "pattern:date"
        if label == "YEAR":
            return str(int(rng.integers(1950, 2100))), "pattern:year"
        if label == "HOLIDAY":
            return pick("holidays"), "lexicon:holidays"
        if label == "DAY_OF_WEEK":
            return DAYS[int(rng.integers(7))], "pattern:day_of_week"
        if label == "MEDICAL_RECORD":
            return self._digits(rng, int(rng.integers(6, 9))), "pattern:medical_record"
        if label == "SSN":
            return f"{self._digits(rng, 3)}-{self._digits(rng, 2)}-{self._digits(rng, 4)}", "pattern:ssn"
        if label == "ACCOUNT":
            letters = "".join(chr(65 + int(v)) for v in rng.integers(0, 26, 2))
            return letters + self._digits(rng, int(rng.integers(6, 10))), "pattern:account"
        if label == "STREET":
            return (f"{int(rng.integers(1, 9999))} {pick('streets')} {pick('street_suffixes')}",
                    "pattern:street")
        if label == "CITY":
            return pick("cities"), "lexicon:cities"
        if label == "ZIP":
            return self._digits(rng, 5), "pattern:zip"
        if label == "STATE":
            return pick("states"), "lexicon:states"
        if label == "COUNTRY":
            return pick("countries"), "lexicon:countries"
        if label == "HOSPITAL":
            return pick("hospitals"), "lexicon:hospitals"
        if label == "EMPLOYER":
            return pick("employers"), "lexicon:employers"
        if label == "PROFESSION":
            return pick("professions"), "lexicon:professions"
        raise ValueError(f"no generator for label {label!r}")

    def fragment(self, cat, rng):
        """(text before, mention, text after, label, source) for one PHI mention."""
        names, w = self.labels[cat]
        label = names[int(rng.choice(len(names), p=w))]
        cue = CUES[label][int(rng.integers(len(CUES[label])))]
        before, after = cue.split("{}")
        surface, source = self.mention(label, rng)
        return before, surface, after, label, source

    def _calibrate(self) -> dict:
        """Expected mentions per sentence for each category.

        With sentence length L = F + sum_c r_c (m_c + q_c), where F is the
        filler length and m_c, q_c the mean mention and cue lengths, the
        expected PHI share r_c m_c / L equals the density d_c when
        L = F / (1 - sum_c d_c (1 + q_c / m_c)).
        """
        rng = np.random.Generator(np.random.PCG64(20240101))
        filler_mean = 9.0  # 4..12 words plus the period
        m, q = {}, {}
        for cat in self.cats:
            ms, qs = [], []
            for _ in range(200):
                before, surface, after, _, _ = self.fragment(cat, rng)
                ms.append(len(tokenize(surface)))
                qs.append(len(tokenize(before)) + len(tokenize(after)))
            m[cat], q[cat] = float(np.mean(ms)), float(np.mean(qs))
        denom = 1.0 - sum(self.cfg.densities[c] * (1.0 + q[c] / m[c]) for c in self.cats)
        if denom <= 0.05:
            raise ValueError("densities too high: cue phrases alone would exceed the note length")
        length = filler_mean / denom
        return {c: self.cfg.densities[c] * length / m[c] for c in self.cats}

    def sentence(self, rng):
        words = [self._pick(rng, "filler") for _ in range(int(rng.integers(4, 13)))]
        if rng.random() < 0.5:
            words[0] = words[0].capitalize()
        frags = []
        for cat in self.cats:
            for _ in range(int(rng.poisson(self.rates[cat]))):
                frags.append(self.fragment(cat, rng))
        slots = sorted(int(v) for v in rng.integers(0, len(words) + 1, len(frags)))
        order = rng.permutation(len(frags))
        pieces = []  # (text, label or None, source)
        at = 0
        for slot, j in zip(slots, order):
            if slot > at:
                pieces.append((" ".join(words[at:slot]), None, None))
                at = slot
            before, surface, after, label, source = frags[j]
            if before.strip():
                pieces.append((before.strip(), None, None))
            pieces.append((surface, label, source))
            if after.strip():
                pieces.append((after.strip(), None, None))
        if at < len(words):
            pieces.append((" ".join(words[at:]), None, None))
        pieces.append((".", None, None))
        return pieces

    def note(self, rng, note_id: str):
        target = int(rng.integers(self.cfg.min_tokens, self.cfg.max_tokens + 1))
        pieces = []
        count = 0
        while count < target:
            sent = self.sentence(rng)
            n = sum(len(tokenize(t)) for t, _, _ in sent)
            if count + n > self.cfg.max_tokens:
                # top up with plain filler to land inside the length range
                k = target - count
                sent = [(" ".join(self._pick(rng, "filler") for _ in range(k)), None, None)]
                n = k
            pieces += sent
            count += n
        text_parts, spans, prov = [], [], []
        offset = 0
        for i, (text, label, source) in enumerate(pieces):
            # punctuation-only pieces attach to the preceding word
            sep = "" if i == 0 or text in (".", ",") else " "
            offset += len(sep.encode("utf-8"))
            text_parts.append(sep + text)
            end = offset + len(text.encode("utf-8"))
            if label is not None:
                spans.append((offset, end, label))
                prov.append(Provenance(note_id, offset, end, label, source))
            offset = end
        text = "".join(text_parts)
        seq = standoff_to_sequence(text, spans, self.cfg.label_set, note_id)
        return seq, text, prov


def generate_with_provenance(config: GenConfig):
    """``(dataset, texts, provenance)`` for ``config``."""
    gen = _Generator(config)
    seqs, texts, prov = [], [], []
    root = np.random.SeedSequence(config.seed)
    for i, child in enumerate(root.spawn(config.n_notes)):
        rng = np.random.Generator(np.random.PCG64(child))
        seq, text, p = gen.note(rng, f"{config.note_prefix}{i:05d}")
        seqs.append(seq)
        texts.append(text)
        prov += p
    return Dataset(seqs, config.label_set), texts, prov


def generate(config: GenConfig) -> Dataset:
    return generate_with_provenance(config)[0]


def split_name_pools(lexicons: dict, fractions, seed: int) -> list[dict]:
    """Copies of ``lexicons`` whose name lists are disjoint across pools.

    Distinct names (case-folded, over first and last names together) are
    assigned to pools, so a name listed as both a first and a last name
    still lands in one pool only.
    """
    rng = np.random.Generator(np.random.PCG64(seed))
    fields = ("first_names", "last_names")
    distinct = sorted({w.lower() for f in fields for w in lexicons[f]})
    perm = rng.permutation(len(distinct))
    total = float(sum(fractions))
    owner = {}
    at = 0
    for j, frac in enumerate(fractions):
        take = len(distinct) - at if j == len(fractions) - 1 else int(round(len(distinct) * frac / total))
        for k in perm[at:at + take]:
            owner[distinct[k]] = j
        at += take
    out = []
    for j in range(len(fractions)):
        pool = dict(lexicons)
        for f in fields:
            pool[f] = [w for w in lexicons[f] if owner[w.lower()] == j]
            if not pool[f]:
                raise ValueError(f"lexicon {f} too small to split into {len(fractions)} pools")
        out.append(pool)
    return out


def generate_splits(config: GenConfig, sizes, disjoint_names: bool = True):
    """One dataset per entry of ``sizes`` (note counts), each from its own seed.

    With ``disjoint_names`` no first or last name appears in two splits.
    """
    sizes = list(sizes)
    pools = (split_name_pools(config.lexicons, sizes, config.seed) if disjoint_names
             else [config.lexicons] * len(sizes))
    out = []
    for j, (n, lex) in enumerate(zip(sizes, pools)):
        cfg = GenConfig(n, config.min_tokens, config.max_tokens, dict(config.densities), lex,
                        config.seed * 1000 + j + 1, config.label_set, f"{config.note_prefix}{j}-")
        out.append(generate(cfg))
    return out


def corpus_stats(dataset: Dataset) -> dict:
    """Note, token, PHI-instance, PHI-token and vocabulary counts.

    A PHI instance is a maximal run of tokens sharing one non-O label.
    Per-category instance counts are included as ``phi_instances.<CAT>``.
    """
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    cats = dataset.label_set.category_of
    tokens = phi_tokens = instances = 0
    per_cat = {c: 0 for c in sorted(set(cats)) if c != "O"}
    vocab = set()
    for seq in dataset:
        prev = 0
        tokens += len(seq.labels)
        for w, y in zip(seq.words, seq.labels):
            vocab.add(w)
            if y != 0:
                phi_tokens += 1
                if y != prev:
                    instances += 1
                    per_cat[cats[y]] += 1
            prev = y
    stats = {"notes": len(dataset), "tokens": tokens, "phi_instances": instances,
             "phi_tokens": phi_tokens, "vocabulary": len(vocab)}
    stats.update({f"phi_instances.{c}": v for c, v in per_cat.items()})
    return stats


def format_stats(stats: dict) -> str:
    return "".join(f"{k}\t{v}\n" for k, v in stats.items())
