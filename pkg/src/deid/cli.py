"""Command-line entry point: ``deid <subcommand> ...``.

Exit status is 0 on success, 1 on a usage error and 2 on a data or model
error.  Every run writes one JSON manifest next to its outputs.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint, save_checkpoint
from .config import Config, format_value, load_config, read_kv_file
from .corpus import LabelSet, read_token_file, write_token_file
from .embeddings import load_pretrained
from .errors import DeidError
from .evaluation import MODES, approx_randomization, ensemble_union, token_prf
from .feature_crf import DEFAULT_TEMPLATES, Gazetteers, read_templates
from .synth import GenConfig, corpus_stats, format_stats, generate_splits, load_lexicon
from .training import (count_inversions, format_log_row, format_sweep_table, sweep, train,
                       train_crf)

log = logging.getLogger("deid")


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _files_under(path: Path):
    if path.is_dir():
        return sorted(p for p in path.rglob("*") if p.is_file() and not p.name.endswith("manifest.json"))
    return [path] if path.exists() else []


def write_manifest(where: Path, subcommand: str, config: dict, inputs, outputs, seed):
    """JSON record of a run: resolved config, inputs and outputs with checksums.

    Written as ``where/manifest.json`` for a directory, else
    ``<where>.manifest.json``.  No timestamps, so reruns are byte-identical.
    """
    def digest(paths):
        out = {}
        for p in paths:
            for f in _files_under(Path(p)):
                out[str(f)] = sha256(f)
        return out

    doc = {
        "subcommand": subcommand,
        "version": __version__,
        "seed": seed,
        "config": {k: config[k] for k in sorted(config)},
        "inputs": digest([p for p in inputs if p]),
        "outputs": digest([p for p in outputs if p]),
    }
    target = where / "manifest.json" if where.is_dir() else where.with_name(where.name + ".manifest.json")
    target.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return target


def _label_set(path):
    return LabelSet.read(path) if path else LabelSet.default()


def _config_dict(cfg: Config) -> dict:
    return {k: format_value(v) for k, v in cfg.items()}


def _overrides(args) -> dict:
    out = {}
    for item in args.set or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {item!r}")
        out[key.strip()] = value.strip()
    if getattr(args, "seed", None) is not None:
        out["seed"] = str(args.seed)
    for flag, key in (("no_seq_opt", "use_seq_opt"), ("no_pretrain", "use_pretrain"),
                      ("no_token_emb", "use_token_emb"), ("no_char_emb", "use_char_emb")):
        if getattr(args, flag, False):
            out[key] = "false"
    if getattr(args, "pretrained", None):
        out["pretrained_path"] = args.pretrained
    return out


def _resolve_config(args) -> Config:
    try:
        cfg = load_config(args.config, _overrides(args))
        cfg.validate()
    except KeyError as exc:
        raise UsageError(str(exc.args[0])) from None
    return cfg


def _pretrained(cfg: Config):
    if not (cfg.pretrained_path and cfg.use_pretrain and cfg.use_token_emb):
        return None
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed).spawn(5)[4]))
    return load_pretrained(cfg.pretrained_path, cfg.token_dim, rng)


def _crf_inputs(args):
    templates = read_templates(args.templates) if args.templates else DEFAULT_TEMPLATES
    gazetteers = Gazetteers.read(args.gazetteer) if args.gazetteer else Gazetteers()
    return templates, gazetteers


def _log_sink(path):
    if not path:
        return None, None
    fh = open(path, "w", encoding="utf-8", newline="\n")
    fh.write("epoch\ttrain_loss\tdev_P\tdev_R\tdev_F1\n")

    def sink(row):
        fh.write(format_log_row(row) + "\n")
        fh.flush()
    return sink, fh


# subcommands -------------------------------------------------------------

GEN_KEYS = {"train_notes": int, "dev_notes": int, "test_notes": int, "min_tokens": int,
            "max_tokens": int, "seed": int, "disjoint_names": str}


def cmd_generate(args):
    settings = {"train_notes": 500, "dev_notes": 100, "test_notes": 100, "min_tokens": 60,
                "max_tokens": 120, "seed": 0, "disjoint_names": "true"}
    gen = GenConfig()
    densities, lexicons = dict(gen.densities), dict(gen.lexicons)
    items = read_kv_file(args.config) if args.config else []
    for key, value in items:
        if key.startswith("density."):
            densities[key[len("density."):]] = float(value)
        elif key.startswith("lexicon."):
            name = key[len("lexicon."):]
            if name not in lexicons:
                raise UsageError(f"unknown lexicon {name!r}")
            lexicons[name] = load_lexicon(value)
        elif key in GEN_KEYS:
            settings[key] = GEN_KEYS[key](value)
        else:
            raise UsageError(f"unknown generate key {key!r}")
    for key in ("train_notes", "dev_notes", "test_notes", "seed"):
        if getattr(args, key) is not None:
            settings[key] = getattr(args, key)
    label_set = _label_set(args.labels)
    gen = GenConfig(0, settings["min_tokens"], settings["max_tokens"], densities, lexicons,
                    settings["seed"], label_set)
    disjoint = str(settings["disjoint_names"]).lower() in ("1", "true", "yes", "on")
    names = ["train", "dev", "test"]
    sizes = [settings[f"{n}_notes"] for n in names]
    keep = [(n, s) for n, s in zip(names, sizes) if s > 0]
    if not keep:
        raise UsageError("nothing to generate: all split sizes are zero")
    splits = generate_splits(gen, [s for _, s in keep], disjoint)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    label_set.write(out / "labels.tsv")
    for (name, _), ds in zip(keep, splits):
        write_token_file(ds, out / f"{name}.tok")
        (out / f"{name}.stats.txt").write_text(format_stats(corpus_stats(ds)), encoding="utf-8")
    conf = {k: str(v) for k, v in settings.items()}
    conf.update({f"density.{k}": repr(float(v)) for k, v in densities.items()})
    write_manifest(out, "generate", conf, [args.config, args.labels], [out], settings["seed"])
    return 0


def cmd_train(args):
    cfg = _resolve_config(args)
    label_set = _label_set(args.labels)
    tr = read_token_file(args.train, label_set)
    dev = read_token_file(args.dev, label_set)
    sink, fh = _log_sink(args.log)
    try:
        if args.model == "ann":
            ckpt = train(tr, dev, cfg, _pretrained(cfg), sink)
        else:
            templates, gazetteers = _crf_inputs(args)
            ckpt = train_crf(tr, dev, cfg, templates, gazetteers, sink)
    finally:
        if fh:
            fh.close()
    out = Path(args.out)
    save_checkpoint(ckpt, out)
    conf = _config_dict(cfg)
    conf["model"] = args.model
    write_manifest(out, "train", conf,
                   [args.train, args.dev, args.config, args.labels, cfg.pretrained_path or None,
                    getattr(args, "templates", None), *(getattr(args, "gazetteer", None) or [])],
                   [out, args.log], cfg.seed)
    print(f"best_dev_f1\t{ckpt.best_dev_f1:.6f}\nepoch\t{ckpt.epoch}")
    return 0


def cmd_predict(args):
    ckpt = load_checkpoint(args.model)
    data = read_token_file(args.input, ckpt.label_set)
    pred = data.with_labels(ckpt.predict_dataset(data))
    out = Path(args.out)
    write_token_file(pred, out)
    write_manifest(out, "predict", _config_dict(ckpt.config), [args.model, args.input], [out],
                   ckpt.config.seed)
    return 0


def cmd_evaluate(args):
    label_set = _label_set(args.labels)
    gold = read_token_file(args.gold, label_set)
    pred = read_token_file(args.pred, label_set)
    _check_aligned(gold, pred)
    report = token_prf(gold, pred, args.mode, label_set)
    text = report.as_text()
    _emit(text, args.out)
    if args.out:
        write_manifest(Path(args.out), "evaluate", {"mode": args.mode},
                       [args.gold, args.pred, args.labels], [args.out], None)
    return 0


def _check_aligned(gold, pred):
    for g, p in zip(gold.sequences, pred.sequences):
        if g.words != p.words:
            raise DeidError(f"sequence {g.note_id}: token texts differ between files")


def cmd_ensemble(args):
    label_set = _label_set(args.labels)
    a = read_token_file(args.a, label_set)
    b = read_token_file(args.b, label_set)
    if len(a) != len(b):
        raise DeidError(f"{args.a} has {len(a)} sequences, {args.b} has {len(b)}")
    _check_aligned(a, b)
    merged = a.with_labels(ensemble_union(a.label_lists(), b.label_lists(), label_set))
    out = Path(args.out)
    write_token_file(merged, out)
    write_manifest(out, "ensemble", {}, [args.a, args.b, args.labels], [out], None)
    return 0


def cmd_significance(args):
    label_set = _label_set(args.labels)
    gold = read_token_file(args.gold, label_set)
    a = read_token_file(args.a, label_set)
    b = read_token_file(args.b, label_set)
    _check_aligned(gold, a)
    _check_aligned(gold, b)
    p = approx_randomization(a, b, gold, args.metric, args.shuffles, args.seed, label_set)
    text = f"metric\t{args.metric}\nshuffles\t{args.shuffles}\nseed\t{args.seed}\np_value\t{p!r}\n"
    _emit(text, args.out)
    if args.out:
        write_manifest(Path(args.out), "significance",
                       {"metric": args.metric, "shuffles": str(args.shuffles)},
                       [args.gold, args.a, args.b, args.labels], [args.out], args.seed)
    return 0


def cmd_sweep(args):
    cfg = _resolve_config(args)
    label_set = _label_set(args.labels)
    tr = read_token_file(args.train, label_set)
    dev = read_token_file(args.dev, label_set)
    test = read_token_file(args.test, label_set)
    try:
        fractions = [float(x) for x in args.fractions.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"bad --fractions {args.fractions!r}") from None
    templates, gazetteers = _crf_inputs(args)
    rows, ckpts = sweep(tr, dev, test, cfg, fractions, args.model, _pretrained(cfg),
                        templates, gazetteers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for f, ck in zip(fractions, ckpts):
        save_checkpoint(ck, out / f"fraction_{f!r}.ckpt")
    table = format_sweep_table(rows)
    (out / "sweep.tsv").write_text(table, encoding="utf-8")
    inv = count_inversions([r[4] for r in rows])
    sys.stdout.write(table + f"inversions\t{inv}\n")
    conf = _config_dict(cfg)
    conf.update(model=args.model, fractions=args.fractions)
    write_manifest(out, "sweep", conf, [args.train, args.dev, args.test, args.config, args.labels],
                   [out], cfg.seed)
    return 0


def cmd_stats(args):
    data = read_token_file(args.input, _label_set(args.labels))
    text = format_stats(corpus_stats(data))
    _emit(text, args.out)
    if args.out:
        write_manifest(Path(args.out), "stats", {}, [args.input, args.labels], [args.out], None)
    return 0


def _emit(text, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)


# parser --------------------------------------------------------------------

def _add_model_flags(p):
    p.add_argument("--config", help="key = value file; flags override it")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--seed", type=int)
    p.add_argument("--labels", help="label inventory (name<TAB>category<TAB>0|1)")
    p.add_argument("--model", choices=("ann", "crf"), default="ann")
    p.add_argument("--pretrained", help="token vectors, one 'token v1 ... vd' per line")
    p.add_argument("--no-seq-opt", action="store_true", help="greedy argmax instead of the chain layer")
    p.add_argument("--no-pretrain", action="store_true", help="random token-embedding initialization")
    p.add_argument("--no-token-emb", action="store_true", help="character-based embeddings only")
    p.add_argument("--no-char-emb", action="store_true", help="token embeddings only")
    p.add_argument("--templates", help="feature templates for --model crf")
    p.add_argument("--gazetteer", action="append", help="gazetteer list for --model crf (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = Parser(prog="deid", description="PHI de-identification tagger")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=Parser, required=True)

    p = sub.add_parser("generate", help="write a synthetic train/dev/test corpus")
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--labels")
    p.add_argument("--train-notes", type=int)
    p.add_argument("--dev-notes", type=int)
    p.add_argument("--test-notes", type=int)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="fit a model and write a checkpoint")
    _add_model_flags(p)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="per-epoch training log")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="label a token file with a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="token-based precision, recall and F1")
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--mode", choices=MODES, default="binary-HIPAA")
    p.add_argument("--labels")
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ensemble", help="union of two prediction files")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--labels")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("significance", help="approximate randomization test")
    p.add_argument("--gold", required=True)
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.add_argument("--metric", choices=("precision", "recall", "f1"), default="f1")
    p.add_argument("--shuffles", type=int, default=9999)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labels")
    p.add_argument("--out")
    p.set_defaults(func=cmd_significance)

    p = sub.add_parser("sweep", help="train on growing fractions of the training set")
    _add_model_flags(p)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--fractions", default="0.125,0.25,0.5,1.0")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("stats", help="corpus counts")
    p.add_argument("--input", required=True)
    p.add_argument("--labels")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except FileNotFoundError as exc:
        print(f"deid: file not found: {exc.filename}", file=sys.stderr)
        return 2
    except (DeidError, OSError, ValueError) as exc:
        print(f"deid: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
