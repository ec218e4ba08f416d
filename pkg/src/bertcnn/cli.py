"""Command-line entry point: ``prep``, ``train``, ``eval``, ``predict``, ``distribution``.

Exit status 0 on success, 1 for usage/configuration errors, 2 for runtime
failures. Errors are reported as a single ``error[<kind>]: <message>`` line
on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import shutil
import sys
from dataclasses import asdict
from pathlib import Path

from . import corpus
from .corpus import DataSplit, load_tsv
from .errors import ConfigError, PipelineError, SchemaError
from .head import predict_label
from .metrics import EvalReport, render_table
from .models import ENCODER_VARIANTS, LANGUAGES, VARIANTS, BertCNN, Pipeline
from .preprocess import MAX_LEN, Vocabulary, normalize, prepare

log = logging.getLogger("bertcnn")

TRAIN_DEFAULTS = {
    "epochs": 10,
    "lr": None,  # per-variant, see _default_lr
    "batch_size": 32,
    "seed": 42,
    "max_len": MAX_LEN,
    "ratio": 0.9,
    "warmup": 0.0,
    "weight_decay": 0.01,
    "clip_norm": 1.0,
    "svm_c": 1.0,
    "max_features": 3000,
    "tf_mode": "tfidf",
    "dropout": 0.0,
    "vocab_size": 30000,
    "out": "runs",
    "name": None,
}
_FLOAT_KEYS = {"lr", "ratio", "warmup", "weight_decay", "clip_norm", "svm_c", "dropout"}
_INT_KEYS = {"epochs", "batch_size", "seed", "max_len", "max_features", "vocab_size"}
_BOOL_KEYS = {"tiny_encoder", "prune"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _fail(kind: str, message: str, status: int) -> int:
    print(f"error[{kind}]: {' '.join(str(message).split())}", file=sys.stderr)
    return status


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment. Keys use option names."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lstrip("-").replace("-", "_")
        if key in _INT_KEYS:
            values[key] = int(value)
        elif key in _FLOAT_KEYS:
            values[key] = float(value)
        elif key in _BOOL_KEYS:
            values[key] = value.lower() in ("1", "true", "yes", "on")
        else:
            values[key] = value
    return values


def resolve_train_config(args: argparse.Namespace) -> dict:
    """Flags override the config file, which overrides built-in defaults."""
    file_values = read_config_file(args.config) if args.config else {}
    merged = {}
    for key, value in vars(args).items():
        if key in ("command", "config", "func", "verbose"):
            continue
        if value is not None and value is not False:
            merged[key] = value
        elif key in file_values:
            merged[key] = file_values[key]
        else:
            merged[key] = TRAIN_DEFAULTS.get(key, value)
    unknown = set(file_values) - set(merged)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return merged


def validate_train_config(cfg: dict) -> None:
    if not cfg.get("model"):
        raise ConfigError("--model is required")
    if cfg["model"] not in VARIANTS:
        raise ConfigError(f"--model must be one of {', '.join(VARIANTS)}, got {cfg['model']!r}")
    if not cfg.get("lang"):
        raise ConfigError("--lang is required")
    if cfg["lang"] not in LANGUAGES:
        raise ConfigError(f"--lang must be one of {', '.join(LANGUAGES)}, got {cfg['lang']!r}")
    if not cfg.get("train"):
        raise ConfigError("--train is required")
    model = cfg["model"]
    if model in ENCODER_VARIANTS:
        if cfg.get("encoder") and cfg.get("tiny_encoder"):
            raise ConfigError("--encoder and --tiny-encoder are mutually exclusive")
        if not cfg.get("encoder") and not cfg.get("tiny_encoder"):
            raise ConfigError(f"--model {model} requires --encoder DIR or --tiny-encoder")
    elif model == "svm_tfidf":
        for flag in ("encoder", "tiny_encoder"):
            if cfg.get(flag):
                raise ConfigError(f"--model svm_tfidf conflicts with --{flag.replace('_', '-')}: the SVM baseline takes no encoder")
    elif cfg.get("encoder") or cfg.get("tiny_encoder"):
        raise ConfigError(f"--model {model} uses its own embeddings; drop --encoder/--tiny-encoder")


def _default_lr(cfg: dict) -> float:
    if cfg["model"] in ENCODER_VARIANTS and cfg.get("encoder"):
        return 2e-5
    return 1e-3


def build_pipeline(cfg: dict, train_records) -> Pipeline:
    from .baselines import BertClassifier, BiLSTMClassifier, CNNText, SeqClassifierConfig
    from .encoder import EncoderConfig, TransformerEncoder, load_checkpoint

    model, lang, seed = cfg["model"], cfg["lang"], cfg["seed"]
    meta = {"seed": seed}
    if model == "svm_tfidf":
        return Pipeline(model, lang, max_len=cfg["max_len"], meta=meta)

    encoder_dir = Path(cfg["encoder"]) if cfg.get("encoder") else None
    if cfg.get("vocab"):
        vocab = Vocabulary.load(cfg["vocab"])
    elif encoder_dir is not None and (encoder_dir / "vocab.txt").is_file():
        lowercase = (encoder_dir / "tokenizer.json").is_file() and json.loads(
            (encoder_dir / "tokenizer.json").read_text()).get("lowercase", False)
        vocab = Vocabulary.load(encoder_dir / "vocab.txt", lowercase=lowercase)
    elif encoder_dir is not None:
        raise ConfigError(f"--encoder {encoder_dir} has no vocab.txt; pass --vocab")
    else:
        vocab = Vocabulary.build((normalize(r.text, lang) for r in train_records), max_size=cfg["vocab_size"])

    if model in ENCODER_VARIANTS:
        if encoder_dir is not None:
            encoder = load_checkpoint(encoder_dir)
            if encoder.config.vocab_size != len(vocab):
                raise ConfigError(
                    f"vocabulary has {len(vocab)} entries but the encoder expects {encoder.config.vocab_size}"
                )
        else:
            encoder = TransformerEncoder.from_seed(EncoderConfig.tiny(len(vocab)), seed)
        if cfg["max_len"] > encoder.config.max_position:
            raise ConfigError(f"--max-len {cfg['max_len']} exceeds the encoder's {encoder.config.max_position} positions")
        if model == "bert_cnn":
            from .head import HeadConfig

            head = HeadConfig(embed_dim=encoder.config.hidden, dropout=cfg["dropout"])
            module = BertCNN(encoder, head, seed=seed + 1)
        else:
            module = BertClassifier(encoder, seed=seed + 1, dropout=cfg["dropout"])
    else:
        seq = SeqClassifierConfig(model, vocab_size=len(vocab), dropout=cfg["dropout"])
        module = CNNText(seq, seed) if model == "cnn_text" else BiLSTMClassifier(seq, seed)
    return Pipeline(model, lang, module=module, vocab=vocab, max_len=cfg["max_len"], meta=meta)


def cmd_train(args) -> int:
    from .training import TrainConfig, evaluate, train

    cfg = resolve_train_config(args)
    validate_train_config(cfg)
    if cfg["lr"] is None:
        cfg["lr"] = _default_lr(cfg)
    name = cfg["name"] or f"{cfg['model']}-{cfg['lang']}"
    run_dir = Path(cfg["out"]) / name
    train_config = TrainConfig(
        epochs=cfg["epochs"], learning_rate=cfg["lr"], batch_size=cfg["batch_size"], seed=cfg["seed"],
        weight_decay=cfg["weight_decay"], clip_norm=cfg["clip_norm"] or None, warmup_ratio=cfg["warmup"],
        svm_c=cfg["svm_c"], max_features=cfg["max_features"], tf_mode=cfg["tf_mode"],
    )

    records = load_tsv(cfg["train"])
    if cfg.get("dev"):
        data_split = DataSplit(tuple(records), tuple(load_tsv(cfg["dev"])), cfg["seed"], cfg["ratio"])
    else:
        data_split = corpus.split(records, cfg["ratio"], cfg["seed"])
    pipeline = build_pipeline(cfg, data_split.train)

    if run_dir.exists():
        shutil.rmtree(run_dir)
    run_dir.mkdir(parents=True)
    (run_dir / "effective_config.json").write_text(json.dumps(cfg, sort_keys=True, indent=2, default=str) + "\n")
    corpus.write_split(data_split, run_dir / "split")

    pipeline, history = train(pipeline, data_split, train_config, run_dir)
    report = evaluate(pipeline, data_split.dev, dataset=f"{Path(cfg['train']).name}:dev", seed=cfg["seed"])
    report.save(run_dir / "dev_report.json")
    (run_dir / "dev_report.txt").write_text(render_table([report]))
    if cfg.get("prune"):
        for epoch in range(len(history.epochs)):
            if epoch != history.best_epoch:
                shutil.rmtree(run_dir / f"epoch-{epoch}", ignore_errors=True)
    print(f"best epoch {history.best_epoch}  dev macro-F1 {history.best_score:.3f}  -> {run_dir}")
    return 0


def _load_labeled_or_explain(path):
    try:
        return load_tsv(path, labeled=True)
    except SchemaError as exc:
        if exc.column == corpus.DEFAULT_SCHEMA.label:
            raise ConfigError(f"{path} has no {exc.column!r} label column; use 'predict' for unlabeled data") from None
        raise


def cmd_eval(args) -> int:
    from .training import evaluate

    pipeline = Pipeline.load(args.model)
    records = _load_labeled_or_explain(args.test)
    report = evaluate(pipeline, records, dataset=Path(args.test).name, seed=pipeline.meta.get("seed"))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    report.save(out)
    out.with_suffix(".txt").write_text(render_table([report]))
    print(f"{report.macro_f1:.3f}")
    return 0


def cmd_predict(args) -> int:
    pipeline = Pipeline.load(args.model)
    records = load_tsv(args.input, labeled=False)
    probs = pipeline.predict_proba(records)
    rows = ["id\tprobability\tlabel"]
    for record, p in zip(records, probs):
        label = corpus.LABEL_NAMES[predict_label(p)]
        rows.append(f"{record.id}\t{p:.6f}\t{label}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return 0


def cmd_prep(args) -> int:
    vocab = Vocabulary.load(args.vocab, lowercase=args.lowercase)
    records = load_tsv(args.input, labeled=None)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    examples = [prepare(r.text, args.lang, vocab, args.max_len, r.label) for r in records]
    (out / "ids.txt").write_text("".join(" ".join(map(str, e.ids)) + "\n" for e in examples))
    (out / "mask.txt").write_text("".join(" ".join(map(str, e.mask)) + "\n" for e in examples))
    if any(r.label is not None for r in records):
        (out / "labels.txt").write_text("".join(f"{r.label}\n" for r in records))
    return 0


def cmd_distribution(args) -> int:
    columns = {}
    for path in args.inputs:
        records = load_tsv(path)
        stem = Path(path).stem
        if args.split:
            s = corpus.split(records, args.ratio, args.seed)
            columns[f"{stem}:train"] = corpus.class_distribution(s.train)
            columns[f"{stem}:dev"] = corpus.class_distribution(s.dev)
        else:
            columns[stem] = corpus.class_distribution(records)
    print(corpus.render_distribution(columns))
    if args.json:
        Path(args.json).write_text(json.dumps(columns, sort_keys=True, indent=2) + "\n")
    return 0


def cmd_report(args) -> int:
    reports = [EvalReport.load(p) for p in args.reports]
    table = render_table(reports)
    print(table, end="")
    if args.out:
        Path(args.out).write_text(table)
    return 0


def cmd_convert(args) -> int:
    from .encoder import convert_hf_checkpoint

    encoder = convert_hf_checkpoint(args.source, args.out)
    c = encoder.config
    print(f"wrote {args.out}: layers={c.layers} hidden={c.hidden} vocab={c.vocab_size}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bertcnn", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model with dev-set selection")
    p.add_argument("--config", help="key = value file; flags take precedence")
    p.add_argument("--model", choices=VARIANTS)
    p.add_argument("--lang", choices=LANGUAGES)
    p.add_argument("--train", help="labeled training TSV")
    p.add_argument("--dev", help="labeled dev TSV (default: stratified split of --train)")
    p.add_argument("--vocab", help="WordPiece vocab.txt (default: encoder's, else built from --train)")
    p.add_argument("--encoder", help="encoder checkpoint directory")
    p.add_argument("--tiny-encoder", action="store_true", help="seeded in-repo encoder (4 layers, H=16, 2 heads)")
    p.add_argument("--out", help="parent directory for runs (default: runs)")
    p.add_argument("--name", help="run name (default: <model>-<lang>)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float, help="default 2e-5 with --encoder, else 1e-3")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--max-len", type=int)
    p.add_argument("--ratio", type=float, help="train fraction when splitting --train (default 0.9)")
    p.add_argument("--warmup", type=float, help="fraction of steps with linear LR warmup")
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--clip-norm", type=float, help="global gradient-norm clip; 0 disables")
    p.add_argument("--dropout", type=float)
    p.add_argument("--svm-c", type=float)
    p.add_argument("--max-features", type=int)
    p.add_argument("--tf-mode", choices=("tfidf", "count"))
    p.add_argument("--vocab-size", type=int, help="cap for a vocabulary built from --train")
    p.add_argument("--prune", action="store_true", help="delete non-best epoch checkpoints")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a model on a labeled TSV")
    p.add_argument("--model", required=True, help="model or run directory")
    p.add_argument("--test", required=True)
    p.add_argument("--out", default="eval_report.json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="label an unlabeled TSV")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("prep", help="write token ids and masks for a TSV")
    p.add_argument("--input", required=True)
    p.add_argument("--lang", choices=LANGUAGES, required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--max-len", type=int, default=MAX_LEN)
    p.add_argument("--lowercase", action="store_true", help="lower-case before WordPiece (uncased vocabularies)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("distribution", help="class counts per file")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--split", action="store_true", help="also show the stratified train/dev split")
    p.add_argument("--ratio", type=float, default=0.9)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--json", help="also write the counts as JSON")
    p.set_defaults(func=cmd_distribution)

    p = sub.add_parser("report", help="combine eval reports into a model x language table")
    p.add_argument("reports", nargs="+")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("convert-hf", help="convert a published BERT checkpoint (needs transformers)")
    p.add_argument("--source", required=True, help="hub name or local directory")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        return _fail("usage", exc, 1)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail("config", exc, 1)
    except (PipelineError, OSError, ValueError, ArithmeticError) as exc:
        return _fail("runtime", exc, 2)


if __name__ == "__main__":
    sys.exit(main())
