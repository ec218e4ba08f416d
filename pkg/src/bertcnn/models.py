"""Model variants behind one interface, plus on-disk model directories.

A model directory holds ``config.json`` (variant, language and architecture)
and either ``weights.bin``/``manifest.json``/``vocab.txt`` for neural variants
or ``svm.json`` for the TF-IDF baseline. A run directory with a ``best``
pointer file is accepted wherever a model directory is.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import torch
from torch import nn

from . import archive
from .baselines import (
    BertClassifier,
    BiLSTMClassifier,
    CNNText,
    SeqClassifierConfig,
    TfidfModel,
)
from .encoder import EncoderConfig, TransformerEncoder
from .errors import CheckpointError, CheckpointNotFoundError, ConfigError
from .head import ConvHead, HeadConfig
from .preprocess import MAX_LEN, Vocabulary, basic_tokenize, normalize, prepare

VARIANTS = ("bert_cnn", "bert", "cnn_text", "bilstm", "svm_tfidf")
ENCODER_VARIANTS = ("bert_cnn", "bert")
LANGUAGES = ("ar", "el", "tr")


class BertCNN(nn.Module):
    """Encoder's last four layers fed as four channels into the convolutional head."""

    def __init__(self, encoder: TransformerEncoder, head_config: Optional[HeadConfig] = None, seed: int = 0):
        super().__init__()
        self.encoder = encoder
        if head_config is None:
            head_config = HeadConfig(embed_dim=encoder.config.hidden)
        if head_config.embed_dim != encoder.config.hidden:
            raise ConfigError(
                f"head embed_dim {head_config.embed_dim} != encoder hidden {encoder.config.hidden}"
            )
        self.head = ConvHead(head_config, seed=seed)

    def forward(self, ids, mask):
        return self.head(self.encoder(ids, mask))

    def predict_proba(self, ids, mask):
        return torch.sigmoid(self.forward(ids, mask))


def tensors(examples) -> tuple:
    ids = torch.tensor([list(e.ids) for e in examples], dtype=torch.long).reshape(len(examples), -1)
    mask = torch.tensor([list(e.mask) for e in examples], dtype=torch.long).reshape(len(examples), -1)
    return ids, mask


class Pipeline:
    """Text in, offensive-probability out, for any variant."""

    def __init__(self, variant: str, language: str, module=None, vocab: Optional[Vocabulary] = None,
                 tfidf: Optional[TfidfModel] = None, max_len: int = MAX_LEN, meta: Optional[dict] = None):
        if variant not in VARIANTS:
            raise ConfigError(f"unknown model {variant!r}; choose from {', '.join(VARIANTS)}")
        if language not in LANGUAGES:
            raise ConfigError(f"unknown language {language!r}; choose from {', '.join(LANGUAGES)}")
        self.variant = variant
        self.language = language
        self.module = module
        self.vocab = vocab
        self.tfidf = tfidf
        self.max_len = max_len
        self.meta = dict(meta or {})

    @property
    def is_neural(self) -> bool:
        return self.variant != "svm_tfidf"

    def examples(self, records) -> list:
        return [prepare(r.text, self.language, self.vocab, self.max_len, r.label) for r in records]

    def tokens(self, records) -> list:
        """TF-IDF tokens: normalized, lower-cased basic tokens."""
        return [basic_tokenize(normalize(r.text, self.language), lowercase=True) for r in records]

    def predict_proba(self, records, batch_size: int = 64) -> np.ndarray:
        records = list(records)
        if not records:
            return np.zeros(0)
        if not self.is_neural:
            return self.tfidf.predict_proba(self.tokens(records))
        return predict_examples(self.module, self.examples(records), batch_size)

    # ------------------------------------------------------------------ persistence

    def config_dict(self) -> dict:
        d = {"model": self.variant, "language": self.language, "max_len": self.max_len}
        d.update(self.meta)
        m = self.module
        if isinstance(m, BertCNN):
            d["encoder"] = m.encoder.config.to_dict()
            d["head"] = m.head.config.to_dict()
        elif isinstance(m, BertClassifier):
            d["encoder"] = m.encoder.config.to_dict()
        elif isinstance(m, (CNNText, BiLSTMClassifier)):
            d["seq"] = m.config.to_dict()
        if self.vocab is not None:
            d["lowercase"] = self.vocab.lowercase
        return d

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "config.json").write_text(json.dumps(self.config_dict(), sort_keys=True, indent=2) + "\n")
        if self.is_neural:
            archive.write_archive(self.module.state_dict(), directory)
            self.vocab.save(directory / "vocab.txt")
        else:
            self.tfidf.save(directory / "svm.json")

    @classmethod
    def load(cls, path) -> "Pipeline":
        directory = resolve_model_dir(path)
        config = json.loads((directory / "config.json").read_text())
        variant = config["model"]
        meta = {k: v for k, v in config.items() if k not in ("model", "language", "max_len", "encoder", "head", "seq", "lowercase")}
        if variant == "svm_tfidf":
            tfidf = TfidfModel.load(directory / "svm.json")
            return cls(variant, config["language"], tfidf=tfidf, max_len=config.get("max_len", MAX_LEN), meta=meta)
        vocab = Vocabulary.load(directory / "vocab.txt", lowercase=config.get("lowercase", False))
        module = build_module(variant, config)
        archive.load_into(module, archive.read_archive(directory))
        module.eval()
        return cls(variant, config["language"], module=module, vocab=vocab,
                   max_len=config.get("max_len", MAX_LEN), meta=meta)


def build_module(variant: str, config: dict) -> nn.Module:
    """Instantiate an (untrained) module from a saved config dictionary."""
    if variant in ENCODER_VARIANTS:
        encoder = TransformerEncoder(EncoderConfig.from_dict(config["encoder"]))
        if variant == "bert":
            return BertClassifier(encoder)
        return BertCNN(encoder, HeadConfig(**config["head"]))
    if variant in ("cnn_text", "bilstm"):
        seq = SeqClassifierConfig(**config["seq"])
        return CNNText(seq) if variant == "cnn_text" else BiLSTMClassifier(seq)
    raise ConfigError(f"variant {variant!r} has no neural module")


def resolve_model_dir(path) -> Path:
    path = Path(path)
    if (path / "best").is_file():
        pointer = json.loads((path / "best").read_text())
        path = path / pointer["path"]
    if not (path / "config.json").is_file():
        raise CheckpointNotFoundError(f"no model config.json under {path}")
    return path


def predict_examples(module: nn.Module, examples, batch_size: int = 64) -> np.ndarray:
    was_training = module.training
    module.eval()
    out = []
    with torch.no_grad():
        for start in range(0, len(examples), batch_size):
            ids, mask = tensors(examples[start:start + batch_size])
            out.append(module.predict_proba(ids, mask).double().numpy())
    module.train(was_training)
    return np.concatenate(out) if out else np.zeros(0)
